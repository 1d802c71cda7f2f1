//! The kernel instruction set: a small structured DSL for cooperative
//! kernels, with an assembler, a static validator and a lowering pass that
//! produces flat instruction sequences for the transition system.

mod asm;
mod lower;
mod validate;

pub use asm::{assemble, pretty_print, ParseError};
pub use lower::{lower, Compiled, LowerError, Op, Opnd};
pub use validate::{validate, ValidationReport, Violation, ViolationKind};

use crate::Word;

/// Cost class of an instruction, mapping to the simulator's cost table.
///
/// `Primitive` covers the scheduler interaction performed by the cooperative
/// primitives and the machinery a barrier lowering adds beyond a plain
/// barrier, so that overhead measurements isolate exactly that cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum CostClass {
    Alu,
    Mem,
    Atomic,
    Barrier,
    Primitive,
    Free,
}

/// An operand of an instruction: a named thread-local variable or an
/// immediate constant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arg {
    Var(String),
    Imm(Word),
}

impl Arg {
    pub fn var(name: &str) -> Arg {
        Arg::Var(name.to_string())
    }
}

/// Binary operations on thread-local scalars. Comparisons yield 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Min,
    Max,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinOp {
    pub const ALL: [BinOp; 18] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Div,
        BinOp::Rem,
        BinOp::Min,
        BinOp::Max,
        BinOp::And,
        BinOp::Or,
        BinOp::Xor,
        BinOp::Shl,
        BinOp::Shr,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::Lt,
        BinOp::Le,
        BinOp::Gt,
        BinOp::Ge,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
            BinOp::Rem => "rem",
            BinOp::Min => "min",
            BinOp::Max => "max",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Xor => "xor",
            BinOp::Shl => "shl",
            BinOp::Shr => "shr",
            BinOp::Eq => "eq",
            BinOp::Ne => "ne",
            BinOp::Lt => "lt",
            BinOp::Le => "le",
            BinOp::Gt => "gt",
            BinOp::Ge => "ge",
        }
    }

    /// Applies the operation. Division and remainder by zero are reported to
    /// the caller; shifts mask the shift amount to 0..63.
    pub fn apply(self, a: Word, b: Word) -> Option<Word> {
        Some(match self {
            BinOp::Add => a.wrapping_add(b),
            BinOp::Sub => a.wrapping_sub(b),
            BinOp::Mul => a.wrapping_mul(b),
            BinOp::Div => {
                if b == 0 {
                    return None;
                }
                a.wrapping_div(b)
            }
            BinOp::Rem => {
                if b == 0 {
                    return None;
                }
                a.wrapping_rem(b)
            }
            BinOp::Min => a.min(b),
            BinOp::Max => a.max(b),
            BinOp::And => a & b,
            BinOp::Or => a | b,
            BinOp::Xor => a ^ b,
            BinOp::Shl => a.wrapping_shl((b & 63) as u32),
            BinOp::Shr => a.wrapping_shr((b & 63) as u32),
            BinOp::Eq => (a == b) as Word,
            BinOp::Ne => (a != b) as Word,
            BinOp::Lt => (a < b) as Word,
            BinOp::Le => (a <= b) as Word,
            BinOp::Gt => (a > b) as Word,
            BinOp::Ge => (a >= b) as Word,
        })
    }
}

/// Thread and kernel identity intrinsics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Id {
    GlobalId,
    LocalId,
    GroupId,
    LocalSize,
    NumGroups,
    GlobalSize,
}

impl Id {
    pub fn mnemonic(self) -> &'static str {
        match self {
            Id::GlobalId => "global_id",
            Id::LocalId => "local_id",
            Id::GroupId => "group_id",
            Id::LocalSize => "local_size",
            Id::NumGroups => "num_groups",
            Id::GlobalSize => "global_size",
        }
    }
}

/// Phases of a resizing-barrier episode, used by the lowering to emit
/// zero-cost instrumentation points for the episode log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MarkPhase {
    Enter,
    Release,
}

/// A structured statement. Control flow is restricted to conditional and
/// while blocks so the program point following any primitive is well defined.
#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Bin { dst: String, op: BinOp, a: Arg, b: Arg },
    Mov { dst: String, src: Arg },
    LoadGlobal { dst: String, addr: Arg },
    StoreGlobal { addr: Arg, val: Arg },
    LoadLocal { dst: String, addr: Arg },
    StoreLocal { addr: Arg, val: Arg },
    /// Atomic compare-and-swap on a global cell; dst receives the old value.
    AtomicCas { dst: String, addr: Arg, expected: Arg, desired: Arg },
    /// Atomic fetch-add on a global cell; dst receives the old value.
    AtomicAdd { dst: String, addr: Arg, val: Arg },
    AtomicLoad { dst: String, addr: Arg },
    AtomicStore { addr: Arg, val: Arg },
    Intrinsic { dst: String, which: Id },
    /// Asks the scheduler how many workgroups it currently needs back.
    Query { dst: String },
    If { cond: Arg, then_branch: Vec<S>, else_branch: Vec<S> },
    While { cond: Arg, body: Vec<S> },
    OfferKill,
    RequestFork,
    GlobalBarrier,
    ResizingBarrier,
    Halt,
    /// Internal episode instrumentation; never produced by the assembler.
    Mark { site: u32, phase: MarkPhase },
}

/// A statement together with its source line (0 for generated code) and an
/// optional cost-class override set by barrier lowerings.
#[derive(Debug, Clone, PartialEq)]
pub struct S {
    pub line: u32,
    pub class: Option<CostClass>,
    pub stmt: Stmt,
}

impl S {
    pub fn new(stmt: Stmt) -> S {
        S { line: 0, class: None, stmt }
    }

    pub fn classed(stmt: Stmt, class: CostClass) -> S {
        S { line: 0, class: Some(class), stmt }
    }
}

/// A validated-on-demand cooperative kernel: immutable parameters, a
/// structured body and the set of transmit-annotated variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub name: String,
    /// Immutable kernel parameters, bound to values at launch.
    pub params: Vec<String>,
    /// Variables whose thread-0 value is transmitted to forked workgroups.
    pub transmit: Vec<String>,
    pub body: Vec<S>,
    /// Requested workgroup maximum; a launch may override.
    pub requested_groups: u32,
    /// Threads per workgroup; a launch may override.
    pub group_size: u32,
    /// Words of group-local memory per workgroup.
    pub local_words: u32,
    /// Minimum global memory footprint in words.
    pub global_words: u32,
}

impl Program {
    pub fn new(name: &str) -> Program {
        Program {
            name: name.to_string(),
            params: Vec::new(),
            transmit: Vec::new(),
            body: Vec::new(),
            requested_groups: 1,
            group_size: 1,
            local_words: 0,
            global_words: 0,
        }
    }
}

/// A launch request: the program plus the grid shape and the cooperative
/// flag that tells the scheduler which contract applies.
#[derive(Debug, Clone)]
pub struct LaunchSpec {
    pub program: Program,
    pub n_groups: u32,
    pub group_size: u32,
    pub cooperative: bool,
    /// Values for `program.params`, in declaration order.
    pub param_values: Vec<Word>,
    /// Initial contents of global memory; extended with zeros to the
    /// program's full footprint.
    pub global_image: Vec<Word>,
}

impl LaunchSpec {
    pub fn new(program: Program, param_values: Vec<Word>, global_image: Vec<Word>) -> LaunchSpec {
        let n_groups = program.requested_groups;
        let group_size = program.group_size;
        LaunchSpec {
            program,
            n_groups,
            group_size,
            cooperative: true,
            param_values,
            global_image,
        }
    }
}

/// In-process builder for kernel bodies, used by tests and micro-kernels.
/// Larger kernels live as assembly fixtures.
pub struct ProgramBuilder {
    program: Program,
    blocks: Vec<Vec<S>>,
}

impl ProgramBuilder {
    pub fn new(name: &str) -> ProgramBuilder {
        ProgramBuilder {
            program: Program::new(name),
            blocks: vec![Vec::new()],
        }
    }

    pub fn param(&mut self, name: &str) -> &mut Self {
        self.program.params.push(name.to_string());
        self
    }

    pub fn transmit(&mut self, name: &str) -> &mut Self {
        self.program.transmit.push(name.to_string());
        self
    }

    pub fn groups(&mut self, n: u32) -> &mut Self {
        self.program.requested_groups = n;
        self
    }

    pub fn group_size(&mut self, d: u32) -> &mut Self {
        self.program.group_size = d;
        self
    }

    pub fn local_words(&mut self, w: u32) -> &mut Self {
        self.program.local_words = w;
        self
    }

    pub fn global_words(&mut self, w: u32) -> &mut Self {
        self.program.global_words = w;
        self
    }

    pub fn push(&mut self, stmt: Stmt) -> &mut Self {
        self.blocks.last_mut().unwrap().push(S::new(stmt));
        self
    }

    pub fn mov(&mut self, dst: &str, src: Arg) -> &mut Self {
        self.push(Stmt::Mov { dst: dst.to_string(), src })
    }

    pub fn bin(&mut self, dst: &str, op: BinOp, a: Arg, b: Arg) -> &mut Self {
        self.push(Stmt::Bin { dst: dst.to_string(), op, a, b })
    }

    pub fn intrinsic(&mut self, dst: &str, which: Id) -> &mut Self {
        self.push(Stmt::Intrinsic { dst: dst.to_string(), which })
    }

    pub fn if_(&mut self, cond: Arg, body: impl FnOnce(&mut Self)) -> &mut Self {
        self.blocks.push(Vec::new());
        body(self);
        let then_branch = self.blocks.pop().unwrap();
        self.push(Stmt::If { cond, then_branch, else_branch: Vec::new() })
    }

    pub fn if_else(
        &mut self,
        cond: Arg,
        then_body: impl FnOnce(&mut Self),
        else_body: impl FnOnce(&mut Self),
    ) -> &mut Self {
        self.blocks.push(Vec::new());
        then_body(self);
        let then_branch = self.blocks.pop().unwrap();
        self.blocks.push(Vec::new());
        else_body(self);
        let else_branch = self.blocks.pop().unwrap();
        self.push(Stmt::If { cond, then_branch, else_branch })
    }

    pub fn while_(&mut self, cond: Arg, body: impl FnOnce(&mut Self)) -> &mut Self {
        self.blocks.push(Vec::new());
        body(self);
        let b = self.blocks.pop().unwrap();
        self.push(Stmt::While { cond, body: b })
    }

    pub fn finish(&mut self) -> Program {
        assert_eq!(self.blocks.len(), 1, "unclosed block in builder");
        let mut program = self.program.clone();
        program.body = self.blocks.pop().unwrap();
        self.blocks.push(Vec::new());
        program
    }
}
