//! Lowering from the structured DSL to a flat instruction sequence.
//!
//! Structured control flow becomes jumps/branches derived from block
//! structure, variables are interned (parameters first), and barrier
//! statements are expanded according to the selected barrier implementation.
//! The program counter of a thread is an index into the flat sequence, so
//! "the statement immediately following a primitive" is always `pc + 1`.

use super::{Arg, BinOp, CostClass, Id, MarkPhase, Program, Stmt, S};
use crate::barrier::{self, BarrierImpl};
use crate::Word;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LowerError {
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
    #[error("transmit variable `{0}` is a kernel parameter")]
    TransmitIsParam(String),
    #[error("duplicate transmit variable `{0}`")]
    DuplicateTransmit(String),
}

/// A lowered operand: interned variable index or immediate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Opnd {
    Var(u32),
    Imm(Word),
}

/// Flat instruction form executed by the transition system.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Op {
    Bin { dst: u32, op: BinOp, a: Opnd, b: Opnd },
    Mov { dst: u32, src: Opnd },
    LoadGlobal { dst: u32, addr: Opnd },
    StoreGlobal { addr: Opnd, val: Opnd },
    LoadLocal { dst: u32, addr: Opnd },
    StoreLocal { addr: Opnd, val: Opnd },
    AtomicCas { dst: u32, addr: Opnd, expected: Opnd, desired: Opnd },
    AtomicAdd { dst: u32, addr: Opnd, val: Opnd },
    AtomicLoad { dst: u32, addr: Opnd },
    AtomicStore { addr: Opnd, val: Opnd },
    Intrinsic { dst: u32, which: Id },
    Query { dst: u32 },
    Jump { target: u32 },
    BranchZero { cond: Opnd, target: u32 },
    OfferKill,
    RequestFork,
    GlobalBarrier,
    Mark { site: u32, phase: MarkPhase },
    Halt,
}

impl Op {
    pub fn default_class(&self) -> CostClass {
        match self {
            Op::Bin { .. } | Op::Mov { .. } | Op::Intrinsic { .. } | Op::Jump { .. } | Op::BranchZero { .. } => {
                CostClass::Alu
            }
            Op::LoadGlobal { .. } | Op::StoreGlobal { .. } | Op::LoadLocal { .. } | Op::StoreLocal { .. } => {
                CostClass::Mem
            }
            Op::AtomicCas { .. } | Op::AtomicAdd { .. } | Op::AtomicLoad { .. } | Op::AtomicStore { .. } => {
                CostClass::Atomic
            }
            Op::GlobalBarrier => CostClass::Barrier,
            Op::OfferKill | Op::RequestFork | Op::Query { .. } => CostClass::Primitive,
            Op::Mark { .. } | Op::Halt => CostClass::Free,
        }
    }
}

/// A lowered kernel ready for execution: flat ops, interned variables and
/// the memory layout including any reserved barrier protocol cells.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub name: String,
    pub ops: Vec<Op>,
    pub classes: Vec<CostClass>,
    pub lines: Vec<u32>,
    /// Variable names by index; the first `n_params` are kernel parameters.
    pub var_names: Vec<String>,
    pub n_params: usize,
    /// Interned ids of transmit-annotated variables.
    pub transmit: Vec<u32>,
    pub default_groups: u32,
    pub default_group_size: u32,
    pub local_words: u32,
    /// Total global memory footprint in words, including barrier cells.
    pub global_words: usize,
    pub barrier_impl: BarrierImpl,
    /// Base address of the reserved barrier cells (equals the pre-expansion
    /// footprint; meaningful only for protocol implementations).
    pub barrier_base: usize,
}

impl Compiled {
    pub fn n_vars(&self) -> usize {
        self.var_names.len()
    }

    /// Sentinel pc of a terminated thread.
    pub fn end_pc(&self) -> usize {
        self.ops.len()
    }
}

struct Interner {
    ids: HashMap<String, u32>,
    names: Vec<String>,
}

impl Interner {
    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.ids.insert(name.to_string(), id);
        self.names.push(name.to_string());
        id
    }
}

struct Ctx {
    ops: Vec<Op>,
    classes: Vec<CostClass>,
    lines: Vec<u32>,
    interner: Interner,
}

impl Ctx {
    fn arg(&mut self, a: &Arg) -> Opnd {
        match a {
            Arg::Var(v) => Opnd::Var(self.interner.intern(v)),
            Arg::Imm(i) => Opnd::Imm(*i),
        }
    }

    fn emit(&mut self, op: Op, line: u32, class: Option<CostClass>) -> usize {
        let class = class.unwrap_or_else(|| op.default_class());
        self.ops.push(op);
        self.classes.push(class);
        self.lines.push(line);
        self.ops.len() - 1
    }

    fn here(&self) -> u32 {
        self.ops.len() as u32
    }

    fn patch(&mut self, at: usize, target: u32) {
        match &mut self.ops[at] {
            Op::Jump { target: t } | Op::BranchZero { target: t, .. } => *t = target,
            _ => unreachable!("patched op is not a jump"),
        }
    }
}

/// Lowers a program for execution with the given barrier implementation.
///
/// `min_global_words` is the size of the launch's initial global image; the
/// reserved barrier cells of protocol implementations are placed after
/// whichever is larger, this or the program's declared footprint.
pub fn lower(program: &Program, bimpl: BarrierImpl, min_global_words: usize) -> Result<Compiled, LowerError> {
    let mut seen = HashMap::new();
    for p in &program.params {
        if seen.insert(p.clone(), ()).is_some() {
            return Err(LowerError::DuplicateParam(p.clone()));
        }
    }
    let mut tseen = HashMap::new();
    for t in &program.transmit {
        if program.params.contains(t) {
            return Err(LowerError::TransmitIsParam(t.clone()));
        }
        if tseen.insert(t.clone(), ()).is_some() {
            return Err(LowerError::DuplicateTransmit(t.clone()));
        }
    }

    let barrier_base = min_global_words.max(program.global_words as usize);
    let (body, cells) = barrier::expand_program(&program.body, bimpl, barrier_base as Word);

    let mut ctx = Ctx {
        ops: Vec::new(),
        classes: Vec::new(),
        lines: Vec::new(),
        interner: Interner { ids: HashMap::new(), names: Vec::new() },
    };
    for p in &program.params {
        ctx.interner.intern(p);
    }
    // Intern transmit variables eagerly so their ids are stable even if a
    // body path never mentions one.
    for t in &program.transmit {
        ctx.interner.intern(t);
    }

    flatten(&body, &mut ctx);
    ctx.emit(Op::Halt, 0, None);

    let transmit = program.transmit.iter().map(|t| ctx.interner.ids[t]).collect();
    Ok(Compiled {
        name: program.name.clone(),
        ops: ctx.ops,
        classes: ctx.classes,
        lines: ctx.lines,
        var_names: ctx.interner.names,
        n_params: program.params.len(),
        transmit,
        default_groups: program.requested_groups,
        default_group_size: program.group_size,
        local_words: program.local_words,
        global_words: barrier_base + cells,
        barrier_impl: bimpl,
        barrier_base,
    })
}

fn flatten(body: &[S], ctx: &mut Ctx) {
    for s in body {
        let line = s.line;
        let class = s.class;
        match &s.stmt {
            Stmt::Bin { dst, op, a, b } => {
                let (a, b) = (ctx.arg(a), ctx.arg(b));
                let dst = ctx.interner.intern(dst);
                ctx.emit(Op::Bin { dst, op: *op, a, b }, line, class);
            }
            Stmt::Mov { dst, src } => {
                let src = ctx.arg(src);
                let dst = ctx.interner.intern(dst);
                ctx.emit(Op::Mov { dst, src }, line, class);
            }
            Stmt::LoadGlobal { dst, addr } => {
                let addr = ctx.arg(addr);
                let dst = ctx.interner.intern(dst);
                ctx.emit(Op::LoadGlobal { dst, addr }, line, class);
            }
            Stmt::StoreGlobal { addr, val } => {
                let (addr, val) = (ctx.arg(addr), ctx.arg(val));
                ctx.emit(Op::StoreGlobal { addr, val }, line, class);
            }
            Stmt::LoadLocal { dst, addr } => {
                let addr = ctx.arg(addr);
                let dst = ctx.interner.intern(dst);
                ctx.emit(Op::LoadLocal { dst, addr }, line, class);
            }
            Stmt::StoreLocal { addr, val } => {
                let (addr, val) = (ctx.arg(addr), ctx.arg(val));
                ctx.emit(Op::StoreLocal { addr, val }, line, class);
            }
            Stmt::AtomicCas { dst, addr, expected, desired } => {
                let (addr, expected, desired) = (ctx.arg(addr), ctx.arg(expected), ctx.arg(desired));
                let dst = ctx.interner.intern(dst);
                ctx.emit(Op::AtomicCas { dst, addr, expected, desired }, line, class);
            }
            Stmt::AtomicAdd { dst, addr, val } => {
                let (addr, val) = (ctx.arg(addr), ctx.arg(val));
                let dst = ctx.interner.intern(dst);
                ctx.emit(Op::AtomicAdd { dst, addr, val }, line, class);
            }
            Stmt::AtomicLoad { dst, addr } => {
                let addr = ctx.arg(addr);
                let dst = ctx.interner.intern(dst);
                ctx.emit(Op::AtomicLoad { dst, addr }, line, class);
            }
            Stmt::AtomicStore { addr, val } => {
                let (addr, val) = (ctx.arg(addr), ctx.arg(val));
                ctx.emit(Op::AtomicStore { addr, val }, line, class);
            }
            Stmt::Intrinsic { dst, which } => {
                let dst = ctx.interner.intern(dst);
                ctx.emit(Op::Intrinsic { dst, which: *which }, line, class);
            }
            Stmt::Query { dst } => {
                let dst = ctx.interner.intern(dst);
                ctx.emit(Op::Query { dst }, line, class);
            }
            Stmt::If { cond, then_branch, else_branch } => {
                let cond = ctx.arg(cond);
                let bz = ctx.emit(Op::BranchZero { cond, target: 0 }, line, class);
                flatten(then_branch, ctx);
                if else_branch.is_empty() {
                    let end = ctx.here();
                    ctx.patch(bz, end);
                } else {
                    let jmp = ctx.emit(Op::Jump { target: 0 }, line, class);
                    let else_start = ctx.here();
                    ctx.patch(bz, else_start);
                    flatten(else_branch, ctx);
                    let end = ctx.here();
                    ctx.patch(jmp, end);
                }
            }
            Stmt::While { cond, body } => {
                let head = ctx.here();
                let cond = ctx.arg(cond);
                let bz = ctx.emit(Op::BranchZero { cond, target: 0 }, line, class);
                flatten(body, ctx);
                ctx.emit(Op::Jump { target: head }, line, class);
                let end = ctx.here();
                ctx.patch(bz, end);
            }
            Stmt::OfferKill => {
                ctx.emit(Op::OfferKill, line, class);
            }
            Stmt::RequestFork => {
                ctx.emit(Op::RequestFork, line, class);
            }
            Stmt::GlobalBarrier => {
                ctx.emit(Op::GlobalBarrier, line, class);
            }
            Stmt::ResizingBarrier => {
                unreachable!("resizing barriers are expanded before flattening")
            }
            Stmt::Halt => {
                ctx.emit(Op::Halt, line, class);
            }
            Stmt::Mark { site, phase } => {
                ctx.emit(Op::Mark { site: *site, phase: *phase }, line, class);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::assemble;

    #[test]
    fn params_intern_first() {
        let p = assemble("param base\nparam n\nx = add base n\nhalt\n").unwrap();
        let c = lower(&p, BarrierImpl::Semantic, 0).unwrap();
        assert_eq!(c.var_names[0], "base");
        assert_eq!(c.var_names[1], "n");
        assert_eq!(c.n_params, 2);
        assert_eq!(c.var_names[2], "x");
    }

    #[test]
    fn while_branches_back() {
        let p = assemble("x = 3\nwhile x\n  x = sub x 1\nendwhile\nhalt\n").unwrap();
        let c = lower(&p, BarrierImpl::Semantic, 0).unwrap();
        // mov, branch, sub, jump, halt, implicit halt
        assert!(matches!(c.ops[1], Op::BranchZero { target: 4, .. }));
        assert!(matches!(c.ops[3], Op::Jump { target: 1 }));
    }

    #[test]
    fn if_else_targets() {
        let p = assemble("x = 1\nif x\n  y = 1\nelse\n  y = 2\nendif\nhalt\n").unwrap();
        let c = lower(&p, BarrierImpl::Semantic, 0).unwrap();
        assert!(matches!(c.ops[1], Op::BranchZero { target: 4, .. }));
        assert!(matches!(c.ops[3], Op::Jump { target: 5 }));
    }

    #[test]
    fn transmit_param_rejected() {
        let p = assemble("param n\ntransmit n\nhalt\n").unwrap();
        assert!(matches!(lower(&p, BarrierImpl::Semantic, 0), Err(LowerError::TransmitIsParam(_))));
    }
}
