//! Line-oriented assembly for the kernel DSL.
//!
//! Grammar (one statement per line, `#` starts a comment):
//!
//! ```text
//! kernel NAME            header directives, before any statement
//! param NAME
//! transmit NAME
//! groups N | wgsize D | local W | global W
//!
//! x = 42                 move immediate / move variable
//! x = add a b            binary op (add sub mul div rem min max and or xor
//!                        shl shr eq ne lt le gt ge)
//! x = gload a            global load        gstore a v      global store
//! x = lload a            group-local load   lstore a v      group-local store
//! x = cas a exp des      atomic compare-and-swap (old value returned)
//! x = aadd a v           atomic fetch-add   x = aload a / astore a v
//! x = global_id          intrinsics: global_id local_id group_id local_size
//!                        num_groups global_size
//! x = query              remaining workgroup demand from the scheduler
//! if c / else / endif
//! while c / endwhile
//! offer_kill | request_fork | global_barrier | resizing_barrier | halt
//! ```

use super::{Arg, BinOp, Id, Program, Stmt, S};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {msg}")]
pub struct ParseError {
    pub line: u32,
    pub msg: String,
}

fn err<T>(line: u32, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { line, msg: msg.into() })
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_arg(tok: &str, line: u32) -> Result<Arg, ParseError> {
    if let Ok(v) = tok.parse::<i64>() {
        return Ok(Arg::Imm(v));
    }
    if is_ident(tok) {
        return Ok(Arg::Var(tok.to_string()));
    }
    err(line, format!("expected variable or integer, found `{tok}`"))
}

fn parse_ident(tok: &str, line: u32) -> Result<String, ParseError> {
    if is_ident(tok) {
        Ok(tok.to_string())
    } else {
        err(line, format!("invalid identifier `{tok}`"))
    }
}

fn binop_for(mnemonic: &str) -> Option<BinOp> {
    BinOp::ALL.iter().copied().find(|op| op.mnemonic() == mnemonic)
}

fn intrinsic_for(mnemonic: &str) -> Option<Id> {
    [Id::GlobalId, Id::LocalId, Id::GroupId, Id::LocalSize, Id::NumGroups, Id::GlobalSize]
        .into_iter()
        .find(|i| i.mnemonic() == mnemonic)
}

enum Frame {
    Top(Vec<S>),
    If { line: u32, cond: Arg, then_branch: Vec<S>, else_branch: Option<Vec<S>>, current: Vec<S> },
    While { line: u32, cond: Arg, current: Vec<S> },
}

/// Assembles kernel source text into a [`Program`], keeping source lines for
/// diagnostics.
pub fn assemble(text: &str) -> Result<Program, ParseError> {
    let mut program = Program::new("kernel");
    let mut stack: Vec<Frame> = vec![Frame::Top(Vec::new())];
    let mut in_header = true;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx as u32 + 1;
        let src = raw.split('#').next().unwrap_or("").trim();
        if src.is_empty() {
            continue;
        }
        let toks: Vec<&str> = src.split_whitespace().collect();

        if in_header {
            match toks[0] {
                "kernel" | "param" | "transmit" | "groups" | "wgsize" | "local" | "global" => {
                    if toks.len() != 2 {
                        return err(line, format!("directive `{}` takes one argument", toks[0]));
                    }
                    match toks[0] {
                        "kernel" => program.name = parse_ident(toks[1], line)?,
                        "param" => program.params.push(parse_ident(toks[1], line)?),
                        "transmit" => program.transmit.push(parse_ident(toks[1], line)?),
                        other => {
                            let n: u32 = toks[1]
                                .parse()
                                .map_err(|_| ParseError { line, msg: format!("bad count `{}`", toks[1]) })?;
                            match other {
                                "groups" => program.requested_groups = n,
                                "wgsize" => program.group_size = n,
                                "local" => program.local_words = n,
                                "global" => program.global_words = n,
                                _ => unreachable!(),
                            }
                        }
                    }
                    continue;
                }
                _ => in_header = false,
            }
        }

        let stmt = match toks[0] {
            "kernel" | "param" | "transmit" | "groups" | "wgsize" | "local" | "global" => {
                return err(line, format!("directive `{}` must precede the body", toks[0]));
            }
            "if" => {
                if toks.len() != 2 {
                    return err(line, "usage: if COND");
                }
                let cond = parse_arg(toks[1], line)?;
                stack.push(Frame::If { line, cond, then_branch: Vec::new(), else_branch: None, current: Vec::new() });
                continue;
            }
            "else" => {
                match stack.last_mut() {
                    Some(Frame::If { then_branch, else_branch, current, .. }) if else_branch.is_none() => {
                        *then_branch = std::mem::take(current);
                        *else_branch = Some(Vec::new());
                    }
                    _ => return err(line, "`else` without open `if`"),
                }
                continue;
            }
            "endif" => {
                match stack.pop() {
                    Some(Frame::If { cond, mut then_branch, else_branch, current, .. }) => {
                        let else_b = match else_branch {
                            Some(_) => current,
                            None => {
                                then_branch = current;
                                Vec::new()
                            }
                        };
                        push_stmt(&mut stack, S { line, class: None, stmt: Stmt::If { cond, then_branch, else_branch: else_b } });
                    }
                    other => {
                        if let Some(f) = other {
                            stack.push(f);
                        }
                        return err(line, "`endif` without open `if`");
                    }
                }
                continue;
            }
            "while" => {
                if toks.len() != 2 {
                    return err(line, "usage: while COND");
                }
                let cond = parse_arg(toks[1], line)?;
                stack.push(Frame::While { line, cond, current: Vec::new() });
                continue;
            }
            "endwhile" => {
                match stack.pop() {
                    Some(Frame::While { cond, current, .. }) => {
                        push_stmt(&mut stack, S { line, class: None, stmt: Stmt::While { cond, body: current } });
                    }
                    other => {
                        if let Some(f) = other {
                            stack.push(f);
                        }
                        return err(line, "`endwhile` without open `while`");
                    }
                }
                continue;
            }
            "offer_kill" => Stmt::OfferKill,
            "request_fork" => Stmt::RequestFork,
            "global_barrier" => Stmt::GlobalBarrier,
            "resizing_barrier" => Stmt::ResizingBarrier,
            "halt" => Stmt::Halt,
            "gstore" | "lstore" | "astore" => {
                if toks.len() != 3 {
                    return err(line, format!("usage: {} ADDR VAL", toks[0]));
                }
                let addr = parse_arg(toks[1], line)?;
                let val = parse_arg(toks[2], line)?;
                match toks[0] {
                    "gstore" => Stmt::StoreGlobal { addr, val },
                    "lstore" => Stmt::StoreLocal { addr, val },
                    _ => Stmt::AtomicStore { addr, val },
                }
            }
            _ => {
                // Assignment forms: DST = ...
                if toks.len() >= 3 && toks[1] == "=" {
                    let dst = parse_ident(toks[0], line)?;
                    let rhs = &toks[2..];
                    parse_assign(dst, rhs, line)?
                } else {
                    return err(line, format!("unknown mnemonic `{}`", toks[0]));
                }
            }
        };
        push_stmt(&mut stack, S { line, class: None, stmt });
    }

    match stack.pop() {
        Some(Frame::Top(body)) if stack.is_empty() => {
            program.body = body;
            Ok(program)
        }
        Some(Frame::If { line, .. }) => err(line, "unterminated `if`"),
        Some(Frame::While { line, .. }) => err(line, "unterminated `while`"),
        _ => err(0, "unbalanced blocks"),
    }
}

fn push_stmt(stack: &mut [Frame], s: S) {
    match stack.last_mut().expect("non-empty stack") {
        Frame::Top(body) => body.push(s),
        Frame::If { current, .. } => current.push(s),
        Frame::While { current, .. } => current.push(s),
    }
}

fn parse_assign(dst: String, rhs: &[&str], line: u32) -> Result<Stmt, ParseError> {
    match rhs {
        [single] => {
            if let Some(which) = intrinsic_for(single) {
                return Ok(Stmt::Intrinsic { dst, which });
            }
            if *single == "query" {
                return Ok(Stmt::Query { dst });
            }
            Ok(Stmt::Mov { dst, src: parse_arg(single, line)? })
        }
        [mnemonic, rest @ ..] => {
            if let Some(op) = binop_for(mnemonic) {
                if rest.len() != 2 {
                    return err(line, format!("`{mnemonic}` takes two operands"));
                }
                return Ok(Stmt::Bin { dst, op, a: parse_arg(rest[0], line)?, b: parse_arg(rest[1], line)? });
            }
            match *mnemonic {
                "gload" | "lload" | "aload" => {
                    if rest.len() != 1 {
                        return err(line, format!("`{mnemonic}` takes one address operand"));
                    }
                    let addr = parse_arg(rest[0], line)?;
                    Ok(match *mnemonic {
                        "gload" => Stmt::LoadGlobal { dst, addr },
                        "lload" => Stmt::LoadLocal { dst, addr },
                        _ => Stmt::AtomicLoad { dst, addr },
                    })
                }
                "aadd" => {
                    if rest.len() != 2 {
                        return err(line, "`aadd` takes address and value");
                    }
                    Ok(Stmt::AtomicAdd { dst, addr: parse_arg(rest[0], line)?, val: parse_arg(rest[1], line)? })
                }
                "cas" => {
                    if rest.len() != 3 {
                        return err(line, "`cas` takes address, expected and desired");
                    }
                    Ok(Stmt::AtomicCas {
                        dst,
                        addr: parse_arg(rest[0], line)?,
                        expected: parse_arg(rest[1], line)?,
                        desired: parse_arg(rest[2], line)?,
                    })
                }
                other => err(line, format!("unknown mnemonic `{other}`")),
            }
        }
        [] => err(line, "empty right-hand side"),
    }
}

fn arg_str(a: &Arg) -> String {
    match a {
        Arg::Var(v) => v.clone(),
        Arg::Imm(i) => i.to_string(),
    }
}

/// Renders a program back to canonical assembly text. Internal `Mark`
/// statements are never printed; they only exist in generated code.
pub fn pretty_print(program: &Program) -> String {
    let mut out = String::new();
    out.push_str(&format!("kernel {}\n", program.name));
    for p in &program.params {
        out.push_str(&format!("param {p}\n"));
    }
    for t in &program.transmit {
        out.push_str(&format!("transmit {t}\n"));
    }
    out.push_str(&format!("groups {}\n", program.requested_groups));
    out.push_str(&format!("wgsize {}\n", program.group_size));
    if program.local_words > 0 {
        out.push_str(&format!("local {}\n", program.local_words));
    }
    if program.global_words > 0 {
        out.push_str(&format!("global {}\n", program.global_words));
    }
    print_block(&program.body, 0, &mut out);
    out
}

fn print_block(body: &[S], depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    for s in body {
        match &s.stmt {
            Stmt::Bin { dst, op, a, b } => {
                out.push_str(&format!("{pad}{dst} = {} {} {}\n", op.mnemonic(), arg_str(a), arg_str(b)));
            }
            Stmt::Mov { dst, src } => out.push_str(&format!("{pad}{dst} = {}\n", arg_str(src))),
            Stmt::LoadGlobal { dst, addr } => out.push_str(&format!("{pad}{dst} = gload {}\n", arg_str(addr))),
            Stmt::StoreGlobal { addr, val } => out.push_str(&format!("{pad}gstore {} {}\n", arg_str(addr), arg_str(val))),
            Stmt::LoadLocal { dst, addr } => out.push_str(&format!("{pad}{dst} = lload {}\n", arg_str(addr))),
            Stmt::StoreLocal { addr, val } => out.push_str(&format!("{pad}lstore {} {}\n", arg_str(addr), arg_str(val))),
            Stmt::AtomicCas { dst, addr, expected, desired } => {
                out.push_str(&format!("{pad}{dst} = cas {} {} {}\n", arg_str(addr), arg_str(expected), arg_str(desired)));
            }
            Stmt::AtomicAdd { dst, addr, val } => {
                out.push_str(&format!("{pad}{dst} = aadd {} {}\n", arg_str(addr), arg_str(val)));
            }
            Stmt::AtomicLoad { dst, addr } => out.push_str(&format!("{pad}{dst} = aload {}\n", arg_str(addr))),
            Stmt::AtomicStore { addr, val } => out.push_str(&format!("{pad}astore {} {}\n", arg_str(addr), arg_str(val))),
            Stmt::Intrinsic { dst, which } => out.push_str(&format!("{pad}{dst} = {}\n", which.mnemonic())),
            Stmt::Query { dst } => out.push_str(&format!("{pad}{dst} = query\n")),
            Stmt::If { cond, then_branch, else_branch } => {
                out.push_str(&format!("{pad}if {}\n", arg_str(cond)));
                print_block(then_branch, depth + 1, out);
                if !else_branch.is_empty() {
                    out.push_str(&format!("{pad}else\n"));
                    print_block(else_branch, depth + 1, out);
                }
                out.push_str(&format!("{pad}endif\n"));
            }
            Stmt::While { cond, body } => {
                out.push_str(&format!("{pad}while {}\n", arg_str(cond)));
                print_block(body, depth + 1, out);
                out.push_str(&format!("{pad}endwhile\n"));
            }
            Stmt::OfferKill => out.push_str(&format!("{pad}offer_kill\n")),
            Stmt::RequestFork => out.push_str(&format!("{pad}request_fork\n")),
            Stmt::GlobalBarrier => out.push_str(&format!("{pad}global_barrier\n")),
            Stmt::ResizingBarrier => out.push_str(&format!("{pad}resizing_barrier\n")),
            Stmt::Halt => out.push_str(&format!("{pad}halt\n")),
            Stmt::Mark { .. } => {}
        }
    }
}
