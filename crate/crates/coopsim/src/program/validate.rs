//! Static validation of kernel programs.
//!
//! The uniformity checks are conservative and purely syntactic: a variable is
//! tainted if its value can derive from a thread-varying intrinsic, and
//! workgroup-level or kernel-level primitives are rejected under guards whose
//! condition carries the wrong taint. Values read from memory are treated as
//! uniform; as in real kernels, keeping memory-derived guards uniform is the
//! programmer's obligation and the checker can explore the consequences when
//! it is violated.

use super::{Arg, Id, Program, Stmt, S};
use std::collections::{BTreeSet, HashMap};
use std::fmt;

/// Taint bit: value may differ between threads of one workgroup.
const THREAD: u8 = 1;
/// Taint bit: value may differ between workgroups (or over time, for the
/// volatile intrinsics that report the active workgroup count).
const GROUP: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// `global_barrier`/`resizing_barrier` under a guard that may differ
    /// between threads or workgroups.
    BarrierUnderNonUniformGuard,
    /// `offer_kill`/`request_fork` under a guard that may differ between
    /// threads of one workgroup.
    WorkgroupOpUnderThreadVaryingGuard,
    /// `offer_kill`/`request_fork` inside a loop whose trip count may differ
    /// between workgroups.
    WorkgroupOpInGroupVaryingLoop,
    /// Assignment to an immutable kernel parameter.
    AssignToParam,
    /// A transmit variable is not definitely assigned on some path reaching
    /// a fork point.
    TransmitUnassignedAtFork,
    /// A transmit annotation names a kernel parameter.
    TransmitIsParam,
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub line: u32,
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Outcome of static validation. A program with violations must not be
/// launched.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            write!(f, "ok")
        } else {
            for v in &self.violations {
                writeln!(f, "{v}")?;
            }
            Ok(())
        }
    }
}

fn intrinsic_taint(which: Id) -> u8 {
    match which {
        Id::LocalId | Id::GlobalId => THREAD | GROUP,
        Id::GroupId => GROUP,
        // The active-count intrinsics are uniform at any instant but change
        // over time; concurrent resizes can make two reads disagree, so they
        // taint guards as if thread-varying.
        Id::NumGroups | Id::GlobalSize => THREAD | GROUP,
        Id::LocalSize => 0,
    }
}

struct Analysis<'a> {
    program: &'a Program,
    taints: HashMap<String, u8>,
    violations: Vec<Violation>,
}

impl Analysis<'_> {
    fn arg_taint(&self, a: &Arg) -> u8 {
        match a {
            Arg::Var(v) => *self.taints.get(v).unwrap_or(&0),
            Arg::Imm(_) => 0,
        }
    }

    /// Flow-insensitive taint fixpoint over all assignments.
    fn compute_taints(&mut self) {
        loop {
            let mut changed = false;
            fn scan(body: &[S], ana: &mut Analysis, changed: &mut bool) {
                for s in body {
                    let update = |ana: &mut Analysis, changed: &mut bool, dst: &str, t: u8| {
                        let cur = ana.taints.get(dst).copied().unwrap_or(0);
                        if cur | t != cur {
                            ana.taints.insert(dst.to_string(), cur | t);
                            *changed = true;
                        }
                    };
                    match &s.stmt {
                        Stmt::Bin { dst, a, b, .. } => {
                            let t = ana.arg_taint(a) | ana.arg_taint(b);
                            update(ana, changed, dst, t);
                        }
                        Stmt::Mov { dst, src } => {
                            let t = ana.arg_taint(src);
                            update(ana, changed, dst, t);
                        }
                        Stmt::Intrinsic { dst, which } => update(ana, changed, dst, intrinsic_taint(*which)),
                        // Memory reads and the scheduler query are treated as
                        // uniform by this conservative check.
                        Stmt::LoadGlobal { .. }
                        | Stmt::LoadLocal { .. }
                        | Stmt::AtomicCas { .. }
                        | Stmt::AtomicAdd { .. }
                        | Stmt::AtomicLoad { .. }
                        | Stmt::Query { .. } => {}
                        Stmt::If { then_branch, else_branch, .. } => {
                            scan(then_branch, ana, changed);
                            scan(else_branch, ana, changed);
                        }
                        Stmt::While { body, .. } => scan(body, ana, changed),
                        _ => {}
                    }
                }
            }
            scan(&self.program.body, self, &mut changed);
            if !changed {
                break;
            }
        }
    }

    fn violation(&mut self, line: u32, kind: ViolationKind, message: String) {
        self.violations.push(Violation { line, kind, message });
    }
}

#[derive(Clone, Copy)]
struct Guard {
    taint: u8,
    is_loop: bool,
}

/// Statically validates a program: uniformity of primitive placement,
/// parameter immutability, and definite assignment of transmit variables
/// before every fork point.
pub fn validate(program: &Program) -> ValidationReport {
    let mut ana = Analysis { program, taints: HashMap::new(), violations: Vec::new() };
    ana.compute_taints();

    for t in &program.transmit {
        if program.params.contains(t) {
            ana.violation(0, ViolationKind::TransmitIsParam, format!("transmit variable `{t}` is a kernel parameter"));
        }
    }

    // Parameters count as assigned from launch.
    let mut assigned: BTreeSet<String> = program.params.iter().cloned().collect();
    let mut guards: Vec<Guard> = Vec::new();
    walk(&program.body, &mut assigned, &mut guards, &mut ana);
    ValidationReport { violations: ana.violations }
}

fn check_assign_target(dst: &str, line: u32, ana: &mut Analysis) {
    if ana.program.params.contains(&dst.to_string()) {
        ana.violation(line, ViolationKind::AssignToParam, format!("kernel parameter `{dst}` is immutable"));
    }
}

fn check_fork_point(line: u32, what: &str, assigned: &BTreeSet<String>, ana: &mut Analysis) {
    for t in &ana.program.transmit.to_vec() {
        if !assigned.contains(t) {
            ana.violation(
                line,
                ViolationKind::TransmitUnassignedAtFork,
                format!("transmit variable `{t}` may be unassigned when `{what}` is reached"),
            );
        }
    }
}

fn check_wg_op(line: u32, what: &str, guards: &[Guard], ana: &mut Analysis) {
    if guards.iter().any(|g| g.taint & THREAD != 0) {
        ana.violation(
            line,
            ViolationKind::WorkgroupOpUnderThreadVaryingGuard,
            format!("`{what}` under a thread-varying guard cannot be reached uniformly by a workgroup"),
        );
    }
    if guards.iter().any(|g| g.is_loop && g.taint & GROUP != 0) {
        ana.violation(
            line,
            ViolationKind::WorkgroupOpInGroupVaryingLoop,
            format!("`{what}` inside a loop whose trip count may differ between workgroups"),
        );
    }
}

fn check_barrier(line: u32, what: &str, guards: &[Guard], ana: &mut Analysis) {
    if guards.iter().any(|g| g.taint & (THREAD | GROUP) != 0) {
        ana.violation(
            line,
            ViolationKind::BarrierUnderNonUniformGuard,
            format!("`{what}` under a non-uniform guard cannot be reached by all threads"),
        );
    }
}

fn walk(body: &[S], assigned: &mut BTreeSet<String>, guards: &mut Vec<Guard>, ana: &mut Analysis) {
    for s in body {
        match &s.stmt {
            Stmt::Bin { dst, .. }
            | Stmt::Mov { dst, .. }
            | Stmt::LoadGlobal { dst, .. }
            | Stmt::LoadLocal { dst, .. }
            | Stmt::AtomicCas { dst, .. }
            | Stmt::AtomicAdd { dst, .. }
            | Stmt::AtomicLoad { dst, .. }
            | Stmt::Intrinsic { dst, .. }
            | Stmt::Query { dst } => {
                check_assign_target(dst, s.line, ana);
                assigned.insert(dst.clone());
            }
            Stmt::StoreGlobal { .. } | Stmt::StoreLocal { .. } | Stmt::AtomicStore { .. } => {}
            Stmt::If { cond, then_branch, else_branch } => {
                let g = Guard { taint: ana.arg_taint(cond), is_loop: false };
                guards.push(g);
                let mut then_set = assigned.clone();
                walk(then_branch, &mut then_set, guards, ana);
                let mut else_set = assigned.clone();
                walk(else_branch, &mut else_set, guards, ana);
                guards.pop();
                *assigned = then_set.intersection(&else_set).cloned().collect();
            }
            Stmt::While { cond, body } => {
                let g = Guard { taint: ana.arg_taint(cond), is_loop: true };
                guards.push(g);
                // First-iteration path; additions are discarded because the
                // body may not execute.
                let mut body_set = assigned.clone();
                walk(body, &mut body_set, guards, ana);
                guards.pop();
            }
            Stmt::OfferKill => check_wg_op(s.line, "offer_kill", guards, ana),
            Stmt::RequestFork => {
                check_wg_op(s.line, "request_fork", guards, ana);
                check_fork_point(s.line, "request_fork", assigned, ana);
            }
            Stmt::GlobalBarrier => check_barrier(s.line, "global_barrier", guards, ana),
            Stmt::ResizingBarrier => {
                check_barrier(s.line, "resizing_barrier", guards, ana);
                check_fork_point(s.line, "resizing_barrier", assigned, ana);
            }
            Stmt::Halt | Stmt::Mark { .. } => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::assemble;

    fn kinds(src: &str) -> Vec<ViolationKind> {
        let p = assemble(src).unwrap();
        validate(&p).violations.iter().map(|v| v.kind).collect()
    }

    #[test]
    fn barrier_under_thread_guard_rejected() {
        let ks = kinds("t = local_id\nz = eq t 0\nif z\n  global_barrier\nendif\nhalt\n");
        assert_eq!(ks, vec![ViolationKind::BarrierUnderNonUniformGuard]);
    }

    #[test]
    fn barrier_under_group_guard_rejected() {
        let ks = kinds("t = group_id\nz = eq t 0\nif z\n  resizing_barrier\nendif\nhalt\n");
        assert!(ks.contains(&ViolationKind::BarrierUnderNonUniformGuard));
    }

    #[test]
    fn wg_op_under_group_if_allowed() {
        let ks = kinds("t = group_id\nz = eq t 0\nif z\n  request_fork\nendif\nhalt\n");
        assert!(ks.is_empty(), "{ks:?}");
    }

    #[test]
    fn wg_op_under_thread_guard_rejected() {
        let ks = kinds("t = local_id\nz = eq t 0\nif z\n  offer_kill\nendif\nhalt\n");
        assert_eq!(ks, vec![ViolationKind::WorkgroupOpUnderThreadVaryingGuard]);
    }

    #[test]
    fn wg_op_in_group_varying_loop_rejected() {
        let ks = kinds("t = group_id\nwhile t\n  offer_kill\n  t = sub t 1\nendwhile\nhalt\n");
        assert_eq!(ks, vec![ViolationKind::WorkgroupOpInGroupVaryingLoop]);
    }

    #[test]
    fn memory_guard_allowed() {
        let ks = kinds("x = gload 0\nwhile x\n  request_fork\n  offer_kill\n  x = gload 0\nendwhile\nhalt\n");
        assert!(ks.is_empty(), "{ks:?}");
    }

    #[test]
    fn param_immutable() {
        let ks = kinds("param n\nn = 3\nhalt\n");
        assert_eq!(ks, vec![ViolationKind::AssignToParam]);
    }

    #[test]
    fn transmit_must_precede_fork() {
        // Assigned only on one branch before the barrier.
        let src = "transmit level\nx = gload 0\nif x\n  level = 1\nendif\nresizing_barrier\nhalt\n";
        let ks = kinds(src);
        assert_eq!(ks, vec![ViolationKind::TransmitUnassignedAtFork]);

        let ok = "transmit level\nlevel = 0\nresizing_barrier\nhalt\n";
        assert!(kinds(ok).is_empty());
    }

    #[test]
    fn transmit_assigned_after_first_barrier_rejected() {
        let src = "transmit level\nresizing_barrier\nlevel = 0\nresizing_barrier\nhalt\n";
        let ks = kinds(src);
        assert_eq!(ks, vec![ViolationKind::TransmitUnassignedAtFork]);
    }

    #[test]
    fn taint_propagates_through_arithmetic() {
        let ks = kinds("t = global_id\nu = add t 0\nw = mul u 2\nif w\n  global_barrier\nendif\nhalt\n");
        assert_eq!(ks, vec![ViolationKind::BarrierUnderNonUniformGuard]);
    }
}
