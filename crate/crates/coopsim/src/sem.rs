//! Small-step transition system over kernel states.
//!
//! A kernel state is the shared memory plus a fixed-length tuple of
//! workgroup slots, of which the first M are present and the rest absent.
//! Transitions are pure: identical (state, choice) inputs yield identical
//! outputs. Scheduler choices (kill acceptance, fork width, query answers)
//! are parameters of the corresponding transitions, which keeps the rules
//! free of scheduler state and lets the checker enumerate choices.

use crate::program::{Compiled, CostClass, Id, Op, Opnd};
use crate::Word;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::barrier::desugar_resizing_barrier;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SemError {
    #[error("uninitialised read of `{var}` (wg {wg}, thread {tid}, pc {pc})")]
    UninitialisedRead { var: String, wg: u32, tid: u32, pc: usize },
    #[error("out-of-bounds {space} access at address {addr} (pc {pc})")]
    OutOfBoundsAccess { space: &'static str, addr: Word, pc: usize },
    #[error("division by zero (pc {pc})")]
    DivisionByZero { pc: usize },
    #[error("wg {wg} thread {tid} is at a collective primitive, not a thread step")]
    NotAThreadStep { wg: u32, tid: u32 },
    #[error("workgroup {wg} reached a workgroup-level op non-uniformly")]
    NonUniformReach { wg: u32 },
    #[error("threads wait at different barrier statements")]
    BarrierDivergence,
    #[error("barrier applied while some thread is not at a barrier")]
    BarrierNotReady,
    #[error("fork of {k} workgroups exceeds the remaining capacity {limit}")]
    ForkBoundExceeded { k: u32, limit: u32 },
    #[error("workgroup {wg} thread {tid} does not exist")]
    NoSuchThread { wg: u32, tid: u32 },
    #[error("wg {wg} thread {tid} already terminated")]
    Terminated { wg: u32, tid: u32 },
}

/// Local environment of one thread: a scalar slot per interned variable,
/// `None` until first assignment. Reading `None` models the undefined
/// behaviour of reading uninitialised state after a fork.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ThreadState {
    pub env: Vec<Option<Word>>,
    pub pc: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WorkgroupState {
    pub threads: Vec<ThreadState>,
}

/// Shared state: flat global memory plus per-slot group-local memory.
/// Atomics operate on ordinary global cells; the memory model is
/// sequentially consistent, so the barrier `sync` is a no-op beyond the
/// rule itself.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SharedState {
    pub global: Vec<Word>,
    pub local: Vec<Option<Vec<Word>>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KernelState {
    pub shared: SharedState,
    pub slots: Vec<Option<WorkgroupState>>,
    /// Number of active workgroups M; active slots are exactly [0, M-1].
    pub active: u32,
    /// Launch maximum N.
    pub n_max: u32,
    /// Threads per workgroup d.
    pub group_size: u32,
}

impl KernelState {
    /// Initial state with `m0` active workgroups (1 <= m0 <= n). Parameters
    /// are bound in every thread environment; all other variables start
    /// unassigned.
    pub fn launch(prog: &Compiled, n: u32, d: u32, m0: u32, params: &[Word], image: &[Word]) -> KernelState {
        assert!(n >= 1 && d >= 1, "launch shape must be at least 1x1");
        assert!((1..=n).contains(&m0), "initial workgroup count out of range");
        assert_eq!(params.len(), prog.n_params, "parameter count mismatch");
        let mut global = image.to_vec();
        if global.len() < prog.global_words {
            global.resize(prog.global_words, 0);
        }
        let mut env = vec![None; prog.n_vars()];
        for (i, value) in params.iter().enumerate() {
            env[i] = Some(*value);
        }
        let wg = WorkgroupState { threads: vec![ThreadState { env, pc: 0 }; d as usize] };
        let mut slots = vec![None; n as usize];
        let mut local = vec![None; n as usize];
        for s in 0..m0 as usize {
            slots[s] = Some(wg.clone());
            local[s] = Some(vec![0; prog.local_words as usize]);
        }
        KernelState { shared: SharedState { global, local }, slots, active: m0, n_max: n, group_size: d }
    }

    pub fn wg(&self, wg: u32) -> Option<&WorkgroupState> {
        self.slots.get(wg as usize).and_then(|s| s.as_ref())
    }

    pub fn thread(&self, wg: u32, tid: u32) -> Option<&ThreadState> {
        self.wg(wg).and_then(|w| w.threads.get(tid as usize))
    }

    pub fn all_halted(&self, prog: &Compiled) -> bool {
        self.slots.iter().flatten().all(|w| w.threads.iter().all(|t| t.pc >= prog.end_pc()))
    }

    /// Structural invariants of the kernel-state representation; the checker
    /// evaluates these on every reachable state.
    pub fn check_invariants(&self) -> Result<(), String> {
        let m = self.active as usize;
        if self.active < 1 || self.active > self.n_max {
            return Err(format!("active count {} outside [1, {}]", self.active, self.n_max));
        }
        for (i, slot) in self.slots.iter().enumerate() {
            let should_be_present = i < m;
            if slot.is_some() != should_be_present {
                return Err(format!("slot {i} presence violates contiguity (M = {m})"));
            }
            if self.shared.local[i].is_some() != should_be_present {
                return Err(format!("local memory of slot {i} inconsistent with occupancy"));
            }
            if let Some(w) = slot {
                if w.threads.len() != self.group_size as usize {
                    return Err(format!("slot {i} has {} threads, expected {}", w.threads.len(), self.group_size));
                }
            }
        }
        Ok(())
    }
}

/// What kind of instruction a thread currently faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreadOpKind {
    Plain,
    Query,
    Offer,
    Fork,
    Barrier,
    Halted,
}

pub fn thread_op_kind(prog: &Compiled, st: &KernelState, wg: u32, tid: u32) -> ThreadOpKind {
    let t = match st.thread(wg, tid) {
        Some(t) => t,
        None => return ThreadOpKind::Halted,
    };
    if t.pc >= prog.end_pc() {
        return ThreadOpKind::Halted;
    }
    match prog.ops[t.pc] {
        Op::OfferKill => ThreadOpKind::Offer,
        Op::RequestFork => ThreadOpKind::Fork,
        Op::GlobalBarrier => ThreadOpKind::Barrier,
        Op::Query { .. } => ThreadOpKind::Query,
        _ => ThreadOpKind::Plain,
    }
}

fn read_env(env: &[Option<Word>], var: u32, prog: &Compiled, wg: u32, tid: u32, pc: usize) -> Result<Word, SemError> {
    env[var as usize].ok_or_else(|| SemError::UninitialisedRead {
        var: prog.var_names[var as usize].clone(),
        wg,
        tid,
        pc,
    })
}

fn read_opnd(env: &[Option<Word>], o: Opnd, prog: &Compiled, wg: u32, tid: u32, pc: usize) -> Result<Word, SemError> {
    match o {
        Opnd::Var(v) => read_env(env, v, prog, wg, tid, pc),
        Opnd::Imm(i) => Ok(i),
    }
}

fn global_index(global: &[Word], addr: Word, pc: usize) -> Result<usize, SemError> {
    if addr < 0 || addr as usize >= global.len() {
        return Err(SemError::OutOfBoundsAccess { space: "global", addr, pc });
    }
    Ok(addr as usize)
}

fn local_index(local: &[Word], addr: Word, pc: usize) -> Result<usize, SemError> {
    if addr < 0 || addr as usize >= local.len() {
        return Err(SemError::OutOfBoundsAccess { space: "local", addr, pc });
    }
    Ok(addr as usize)
}

fn intrinsic_value(which: Id, st: &KernelState, wg: u32, tid: u32) -> Word {
    let d = st.group_size as Word;
    match which {
        Id::GlobalId => wg as Word * d + tid as Word,
        Id::LocalId => tid as Word,
        Id::GroupId => wg as Word,
        Id::LocalSize => d,
        Id::NumGroups => st.active as Word,
        Id::GlobalSize => st.active as Word * d,
    }
}

/// Executes exactly one non-collective instruction of the given thread.
/// Only that thread's environment and pc, and the shared state, may change.
/// Returns the cost class of the executed instruction.
pub fn step_thread(prog: &Compiled, st: &mut KernelState, wg: u32, tid: u32) -> Result<CostClass, SemError> {
    let t = st.thread(wg, tid).ok_or(SemError::NoSuchThread { wg, tid })?;
    let pc = t.pc;
    if pc >= prog.end_pc() {
        return Err(SemError::Terminated { wg, tid });
    }
    let class = prog.classes[pc];
    let op = prog.ops[pc].clone();
    // Work on a copy of the env reference paths to satisfy borrowing.
    match op {
        Op::OfferKill | Op::RequestFork | Op::GlobalBarrier | Op::Query { .. } => {
            return Err(SemError::NotAThreadStep { wg, tid });
        }
        _ => {}
    }

    let wg_idx = wg as usize;
    let tid_idx = tid as usize;

    macro_rules! env {
        () => {
            st.slots[wg_idx].as_ref().unwrap().threads[tid_idx].env
        };
    }
    macro_rules! set_var {
        ($dst:expr, $val:expr) => {
            st.slots[wg_idx].as_mut().unwrap().threads[tid_idx].env[$dst as usize] = Some($val)
        };
    }
    macro_rules! set_pc {
        ($pc:expr) => {
            st.slots[wg_idx].as_mut().unwrap().threads[tid_idx].pc = $pc
        };
    }

    match op {
        Op::Bin { dst, op, a, b } => {
            let av = read_opnd(&env!(), a, prog, wg, tid, pc)?;
            let bv = read_opnd(&env!(), b, prog, wg, tid, pc)?;
            let r = op.apply(av, bv).ok_or(SemError::DivisionByZero { pc })?;
            set_var!(dst, r);
            set_pc!(pc + 1);
        }
        Op::Mov { dst, src } => {
            let v = read_opnd(&env!(), src, prog, wg, tid, pc)?;
            set_var!(dst, v);
            set_pc!(pc + 1);
        }
        Op::LoadGlobal { dst, addr } => {
            let a = read_opnd(&env!(), addr, prog, wg, tid, pc)?;
            let i = global_index(&st.shared.global, a, pc)?;
            let v = st.shared.global[i];
            set_var!(dst, v);
            set_pc!(pc + 1);
        }
        Op::StoreGlobal { addr, val } => {
            let a = read_opnd(&env!(), addr, prog, wg, tid, pc)?;
            let v = read_opnd(&env!(), val, prog, wg, tid, pc)?;
            let i = global_index(&st.shared.global, a, pc)?;
            st.shared.global[i] = v;
            set_pc!(pc + 1);
        }
        Op::LoadLocal { dst, addr } => {
            let a = read_opnd(&env!(), addr, prog, wg, tid, pc)?;
            let mem = st.shared.local[wg_idx].as_ref().expect("active slot has local memory");
            let i = local_index(mem, a, pc)?;
            let v = mem[i];
            set_var!(dst, v);
            set_pc!(pc + 1);
        }
        Op::StoreLocal { addr, val } => {
            let a = read_opnd(&env!(), addr, prog, wg, tid, pc)?;
            let v = read_opnd(&env!(), val, prog, wg, tid, pc)?;
            let mem = st.shared.local[wg_idx].as_mut().expect("active slot has local memory");
            let i = local_index(mem, a, pc)?;
            mem[i] = v;
            set_pc!(pc + 1);
        }
        Op::AtomicCas { dst, addr, expected, desired } => {
            let a = read_opnd(&env!(), addr, prog, wg, tid, pc)?;
            let e = read_opnd(&env!(), expected, prog, wg, tid, pc)?;
            let d = read_opnd(&env!(), desired, prog, wg, tid, pc)?;
            let i = global_index(&st.shared.global, a, pc)?;
            let old = st.shared.global[i];
            if old == e {
                st.shared.global[i] = d;
            }
            set_var!(dst, old);
            set_pc!(pc + 1);
        }
        Op::AtomicAdd { dst, addr, val } => {
            let a = read_opnd(&env!(), addr, prog, wg, tid, pc)?;
            let v = read_opnd(&env!(), val, prog, wg, tid, pc)?;
            let i = global_index(&st.shared.global, a, pc)?;
            let old = st.shared.global[i];
            st.shared.global[i] = old.wrapping_add(v);
            set_var!(dst, old);
            set_pc!(pc + 1);
        }
        Op::AtomicLoad { dst, addr } => {
            let a = read_opnd(&env!(), addr, prog, wg, tid, pc)?;
            let i = global_index(&st.shared.global, a, pc)?;
            let v = st.shared.global[i];
            set_var!(dst, v);
            set_pc!(pc + 1);
        }
        Op::AtomicStore { addr, val } => {
            let a = read_opnd(&env!(), addr, prog, wg, tid, pc)?;
            let v = read_opnd(&env!(), val, prog, wg, tid, pc)?;
            let i = global_index(&st.shared.global, a, pc)?;
            st.shared.global[i] = v;
            set_pc!(pc + 1);
        }
        Op::Intrinsic { dst, which } => {
            let v = intrinsic_value(which, st, wg, tid);
            set_var!(dst, v);
            set_pc!(pc + 1);
        }
        Op::Jump { target } => {
            set_pc!(target as usize);
        }
        Op::BranchZero { cond, target } => {
            let c = read_opnd(&env!(), cond, prog, wg, tid, pc)?;
            set_pc!(if c == 0 { target as usize } else { pc + 1 });
        }
        Op::Mark { .. } => {
            set_pc!(pc + 1);
        }
        Op::Halt => {
            set_pc!(prog.end_pc());
        }
        Op::OfferKill | Op::RequestFork | Op::GlobalBarrier | Op::Query { .. } => unreachable!(),
    }
    Ok(class)
}

/// Executes a `query` instruction with the scheduler's answer `w`.
pub fn step_query(prog: &Compiled, st: &mut KernelState, wg: u32, tid: u32, w: Word) -> Result<CostClass, SemError> {
    let t = st.thread(wg, tid).ok_or(SemError::NoSuchThread { wg, tid })?;
    let pc = t.pc;
    if pc >= prog.end_pc() {
        return Err(SemError::Terminated { wg, tid });
    }
    match prog.ops[pc] {
        Op::Query { dst } => {
            let class = prog.classes[pc];
            let th = &mut st.slots[wg as usize].as_mut().unwrap().threads[tid as usize];
            th.env[dst as usize] = Some(w);
            th.pc = pc + 1;
            Ok(class)
        }
        _ => Err(SemError::NotAThreadStep { wg, tid }),
    }
}

/// True when `wg` is the slot an accepted kill would remove: the highest
/// active id, and never workgroup 0.
pub fn kill_eligible(st: &KernelState, wg: u32) -> bool {
    st.active > 1 && wg == st.active - 1
}

/// Requires all threads of `wg` to be at the same `op_kind` instruction;
/// returns that pc.
fn collective_pc(prog: &Compiled, st: &KernelState, wg: u32, kind: ThreadOpKind) -> Result<usize, SemError> {
    let w = st.wg(wg).ok_or(SemError::NoSuchThread { wg, tid: 0 })?;
    let mut pc0 = None;
    for (tid, t) in w.threads.iter().enumerate() {
        if thread_op_kind(prog, st, wg, tid as u32) != kind {
            return Err(SemError::NonUniformReach { wg });
        }
        match pc0 {
            None => pc0 = Some(t.pc),
            Some(p) if p == t.pc => {}
            Some(_) => return Err(SemError::NonUniformReach { wg }),
        }
    }
    Ok(pc0.expect("workgroup has at least one thread"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KillOutcome {
    Killed,
    NoOp,
}

/// Applies `offer_kill` for a workgroup whose threads all reached it. With
/// `accept` true and the workgroup both the highest-id slot and not the only
/// one, the slot becomes absent and M decrements; otherwise a no-op.
pub fn apply_offer_kill(prog: &Compiled, st: &mut KernelState, wg: u32, accept: bool) -> Result<KillOutcome, SemError> {
    let pc = collective_pc(prog, st, wg, ThreadOpKind::Offer)?;
    if accept && kill_eligible(st, wg) {
        st.slots[wg as usize] = None;
        st.shared.local[wg as usize] = None;
        st.active -= 1;
        Ok(KillOutcome::Killed)
    } else {
        let w = st.slots[wg as usize].as_mut().unwrap();
        for t in &mut w.threads {
            t.pc = pc + 1;
        }
        Ok(KillOutcome::NoOp)
    }
}

/// Applies `request_fork` with the scheduler's choice of k. New workgroups
/// occupy slots [M, M+k-1], their threads resume immediately after the fork,
/// and each new environment holds exactly the kernel parameters plus the
/// transmit variables valued as thread 0 of the forking workgroup held them.
pub fn apply_request_fork(prog: &Compiled, st: &mut KernelState, wg: u32, k: u32) -> Result<(), SemError> {
    let pc = collective_pc(prog, st, wg, ThreadOpKind::Fork)?;
    let limit = st.n_max - st.active;
    if k > limit {
        return Err(SemError::ForkBoundExceeded { k, limit });
    }

    // Build the transmitted environment before mutating anything.
    let mut new_env = vec![None; prog.n_vars()];
    {
        let src = &st.wg(wg).unwrap().threads[0];
        new_env[..prog.n_params].copy_from_slice(&src.env[..prog.n_params]);
        for &tv in &prog.transmit {
            let value = read_env(&src.env, tv, prog, wg, 0, pc)?;
            new_env[tv as usize] = Some(value);
        }
    }

    for t in &mut st.slots[wg as usize].as_mut().unwrap().threads {
        t.pc = pc + 1;
    }
    let thread = ThreadState { env: new_env, pc: pc + 1 };
    let new_wg = WorkgroupState { threads: vec![thread; st.group_size as usize] };
    for slot in st.active..st.active + k {
        st.slots[slot as usize] = Some(new_wg.clone());
        st.shared.local[slot as usize] = Some(vec![0; prog.local_words as usize]);
    }
    st.active += k;
    Ok(())
}

/// Applies the global barrier: every thread of every active workgroup must
/// be at the same syntactic barrier; all advance past it. The memory flush
/// is trivial under sequential consistency and preserves both M and pcs.
pub fn apply_global_barrier(prog: &Compiled, st: &mut KernelState) -> Result<(), SemError> {
    let mut pc0 = None;
    for wg in 0..st.active {
        let w = st.wg(wg).unwrap();
        for (tid, t) in w.threads.iter().enumerate() {
            match thread_op_kind(prog, st, wg, tid as u32) {
                ThreadOpKind::Barrier => {}
                _ => return Err(SemError::BarrierNotReady),
            }
            match pc0 {
                None => pc0 = Some(t.pc),
                Some(p) if p == t.pc => {}
                Some(_) => return Err(SemError::BarrierDivergence),
            }
        }
    }
    let pc = pc0.ok_or(SemError::BarrierNotReady)?;
    for slot in st.slots.iter_mut().flatten() {
        for t in &mut slot.threads {
            t.pc = pc + 1;
        }
    }
    Ok(())
}

/// A transition descriptor: one rule application together with any
/// scheduler choice it consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    ThreadStep { wg: u32, tid: u32 },
    QueryStep { wg: u32, tid: u32, w: Word },
    KillNoOp { wg: u32 },
    Kill { wg: u32 },
    Fork { wg: u32, k: u32 },
    Barrier,
}

impl Transition {
    /// Workgroup the transition is attributed to, if any.
    pub fn wg(&self) -> Option<u32> {
        match self {
            Transition::ThreadStep { wg, .. }
            | Transition::QueryStep { wg, .. }
            | Transition::KillNoOp { wg }
            | Transition::Kill { wg }
            | Transition::Fork { wg, .. } => Some(*wg),
            Transition::Barrier => None,
        }
    }
}

/// Enumeration bounds for scheduler choices in `enabled_transitions`.
#[derive(Debug, Clone, Copy)]
pub struct EnumOpts {
    /// Cap on enumerated fork widths: k ranges over [0, min(N-M, k_cap)].
    pub k_cap: u32,
    /// Cap on enumerated query answers: w ranges over [0, min(M-1, query_cap)].
    pub query_cap: Word,
}

impl Default for EnumOpts {
    fn default() -> Self {
        EnumOpts { k_cap: 2, query_cap: 0 }
    }
}

/// Returns every applicable transition: a thread step per steppable thread,
/// both accept and reject choices for an eligible `offer_kill`, each legal
/// fork width up to the configured cap, and the barrier when every thread
/// waits at the same one.
pub fn enabled_transitions(prog: &Compiled, st: &KernelState, opts: EnumOpts) -> Vec<Transition> {
    let mut out = Vec::new();
    let mut barrier_pc: Option<usize> = None;
    let mut all_at_barrier = st.active > 0;

    for wg in 0..st.active {
        let w = st.wg(wg).unwrap();
        let mut offer_pcs = Vec::new();
        let mut fork_pcs = Vec::new();
        for (tid, t) in w.threads.iter().enumerate() {
            let kind = thread_op_kind(prog, st, wg, tid as u32);
            match kind {
                ThreadOpKind::Plain => out.push(Transition::ThreadStep { wg, tid: tid as u32 }),
                ThreadOpKind::Query => {
                    let cap = opts.query_cap.min(st.active as Word - 1).max(0);
                    for wv in 0..=cap {
                        out.push(Transition::QueryStep { wg, tid: tid as u32, w: wv });
                    }
                }
                ThreadOpKind::Offer => offer_pcs.push(t.pc),
                ThreadOpKind::Fork => fork_pcs.push(t.pc),
                ThreadOpKind::Barrier => {}
                ThreadOpKind::Halted => {}
            }
            if kind != ThreadOpKind::Barrier {
                all_at_barrier = false;
            } else {
                match barrier_pc {
                    None => barrier_pc = Some(t.pc),
                    Some(p) if p == t.pc => {}
                    Some(_) => all_at_barrier = false,
                }
            }
        }
        let d = st.group_size as usize;
        if offer_pcs.len() == d && offer_pcs.iter().all(|&p| p == offer_pcs[0]) {
            if kill_eligible(st, wg) {
                out.push(Transition::Kill { wg });
            }
            out.push(Transition::KillNoOp { wg });
        }
        if fork_pcs.len() == d && fork_pcs.iter().all(|&p| p == fork_pcs[0]) {
            let max_k = (st.n_max - st.active).min(opts.k_cap);
            for k in 0..=max_k {
                out.push(Transition::Fork { wg, k });
            }
        }
    }
    if all_at_barrier && barrier_pc.is_some() {
        out.push(Transition::Barrier);
    }
    out
}

/// Pure application of a transition to a state.
pub fn apply_transition(prog: &Compiled, st: &KernelState, t: &Transition) -> Result<KernelState, SemError> {
    let mut next = st.clone();
    match *t {
        Transition::ThreadStep { wg, tid } => {
            step_thread(prog, &mut next, wg, tid)?;
        }
        Transition::QueryStep { wg, tid, w } => {
            step_query(prog, &mut next, wg, tid, w)?;
        }
        Transition::KillNoOp { wg } => {
            apply_offer_kill(prog, &mut next, wg, false)?;
        }
        Transition::Kill { wg } => {
            let outcome = apply_offer_kill(prog, &mut next, wg, true)?;
            debug_assert_eq!(outcome, KillOutcome::Killed, "Kill transition must be eligible");
        }
        Transition::Fork { wg, k } => {
            apply_request_fork(prog, &mut next, wg, k)?;
        }
        Transition::Barrier => {
            apply_global_barrier(prog, &mut next)?;
        }
    }
    Ok(next)
}
