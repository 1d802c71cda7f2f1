//! Behavioural tests of the resizing-barrier rewrite and barrier edge
//! cases, driven through the engine and the checker.

use coopsim::barrier::BarrierImpl;
use coopsim::check::{self, ExploreConfig, Instance, Verdict};
use coopsim::program::{assemble, lower, Program, Stmt};
use coopsim::sched::Policy;
use coopsim::sem::desugar_resizing_barrier;
use coopsim::sim::{self, SimConfig};
use coopsim::workloads::{OutputSpec, Workload};

fn workload(program: Program, words: usize, n: u32, d: u32) -> Workload {
    let mut w = Workload {
        spec: coopsim::program::LaunchSpec::new(program, vec![], vec![0; words]),
        output: OutputSpec::GlobalRange { start: 0, len: words },
        expected: vec![],
    };
    w.spec.n_groups = n;
    w.spec.group_size = d;
    w
}

#[test]
fn desugared_barrier_with_no_resizing_equals_plain_barrier() {
    // Under a scheduler that chooses k = 0 and rejects every kill, the
    // desugared resizing barrier reduces to a plain barrier: identical
    // shared memory, identical final active count.
    let src = "g = group_id\nx = aadd 0 1\nresizing_barrier\ny = gload 0\na = add g 1\ngstore a y\nhalt\n";
    let mut resizing = assemble(src).unwrap();
    resizing.global_words = 8;
    let desugared = desugar_resizing_barrier(&resizing);
    assert!(!body_contains_resizing(&desugared));

    let mut plain = resizing.clone();
    plain.body = replace_resizing_with_plain(&plain.body);

    let cfg = SimConfig { units: 4, policy: Policy::NeverResize, ..SimConfig::default() };
    let a = sim::run(&cfg, &workload(desugared, 14, 3, 1), None).unwrap();
    let b = sim::run(&cfg, &workload(plain, 8, 3, 1), None).unwrap();
    assert_eq!(a.final_state.active, b.final_state.active);
    // Barrier cells live past the program words; compare the program's own
    // memory only.
    assert_eq!(a.final_state.shared.global[..8], b.final_state.shared.global[..8]);
}

fn body_contains_resizing(p: &Program) -> bool {
    fn rec(body: &[coopsim::program::S]) -> bool {
        body.iter().any(|s| match &s.stmt {
            Stmt::ResizingBarrier => true,
            Stmt::If { then_branch, else_branch, .. } => rec(then_branch) || rec(else_branch),
            Stmt::While { body, .. } => rec(body),
            _ => false,
        })
    }
    rec(&p.body)
}

fn replace_resizing_with_plain(body: &[coopsim::program::S]) -> Vec<coopsim::program::S> {
    body.iter()
        .map(|s| {
            let mut s = s.clone();
            s.stmt = match s.stmt {
                Stmt::ResizingBarrier => Stmt::GlobalBarrier,
                Stmt::If { cond, then_branch, else_branch } => Stmt::If {
                    cond,
                    then_branch: replace_resizing_with_plain(&then_branch),
                    else_branch: replace_resizing_with_plain(&else_branch),
                },
                Stmt::While { cond, body } => {
                    Stmt::While { cond, body: replace_resizing_with_plain(&body) }
                }
                other => other,
            };
            s
        })
        .collect()
}

/// Drives a state to completion, preferring kills while `demand` is
/// outstanding and forking `grant` workgroups at the first opportunity:
/// the scripted scheduler of the rewrite examples.
fn drive(
    prog: &coopsim::program::Compiled,
    mut st: coopsim::sem::KernelState,
    mut demand: u32,
    mut grant: u32,
) -> coopsim::sem::KernelState {
    use coopsim::sem::{apply_transition, enabled_transitions, EnumOpts, Transition};
    for _ in 0..100_000 {
        let ts = enabled_transitions(prog, &st, EnumOpts { k_cap: 4, query_cap: 0 });
        if ts.is_empty() {
            return st;
        }
        let pick = ts
            .iter()
            .find(|t| matches!(t, Transition::Kill { .. }) && demand > 0)
            .or_else(|| {
                ts.iter().find(|t| match t {
                    Transition::Fork { k, .. } => *k == grant.min(st.n_max - st.active),
                    _ => false,
                })
            })
            .or_else(|| ts.iter().find(|t| matches!(t, Transition::Barrier)))
            .or_else(|| {
                // Step any thread, but leave eligible offers pending while a
                // demand is outstanding and skip no-ops that would waste an
                // offer we still want.
                ts.iter().find(|t| match t {
                    Transition::ThreadStep { .. } | Transition::QueryStep { .. } => true,
                    Transition::KillNoOp { .. } => demand == 0,
                    _ => false,
                })
            })
            .or_else(|| ts.first());
        let t = *pick.expect("transition available");
        match t {
            Transition::Kill { .. } => demand -= 1,
            Transition::Fork { k, .. } => grant -= k.min(grant),
            _ => {}
        }
        st = apply_transition(prog, &st, &t).expect("transition applies");
    }
    panic!("driver did not terminate");
}

#[test]
fn shrink_to_one_observed_by_survivor() {
    // M = 3 shrinks to 1 across one rewritten barrier under a scheduler
    // scripted to kill two; the survivor reads M' = 1 at the next statement.
    let src = "resizing_barrier\nm = num_groups\ng = group_id\ngstore g m\nhalt\n";
    let mut p = assemble(src).unwrap();
    p.global_words = 4;
    let desugared = desugar_resizing_barrier(&p);
    let prog = lower(&desugared, BarrierImpl::Semantic, 4).unwrap();
    let st = coopsim::sem::KernelState::launch(&prog, 3, 1, 3, &[], &[0; 4]);
    let end = drive(&prog, st, 2, 0);
    assert!(end.all_halted(&prog));
    assert_eq!(end.active, 1);
    assert_eq!(end.shared.global[0], 1);
}

#[test]
fn grow_transmits_thread_zero_values() {
    // M = 2 grows to 4 across the rewritten barrier: the transmit variable
    // of each new workgroup equals the value thread 0 of workgroup 0 held,
    // not the other survivor's.
    let src = "transmit level\nlevel = 0\ng0 = group_id\nz = eq g0 0\nif z\n  level = 7\nelse\n  level = 5\nendif\nresizing_barrier\ng = group_id\ngstore g level\nhalt\n";
    let mut p = assemble(src).unwrap();
    p.global_words = 4;
    let desugared = desugar_resizing_barrier(&p);
    let prog = lower(&desugared, BarrierImpl::Semantic, 4).unwrap();
    let st = coopsim::sem::KernelState::launch(&prog, 4, 1, 2, &[], &[0; 4]);
    let end = drive(&prog, st, 0, 2);
    assert!(end.all_halted(&prog));
    assert_eq!(end.active, 4);
    assert_eq!(&end.shared.global[..4], &[7, 5, 7, 7]);
}

#[test]
fn early_termination_deadlocks_at_barrier() {
    // One workgroup halts before the barrier; the rest wait forever. The
    // checker reports a deadlock in every schedule and the engine detects
    // it at run time.
    let src = "g = group_id\nz = eq g 0\nif z\n  halt\nendif\nglobal_barrier\nhalt\n";
    let program = assemble(src).unwrap();
    let prog = lower(&program, BarrierImpl::Semantic, 1).unwrap();
    let inst = Instance { prog, n: 2, d: 1, m0: 2, params: vec![], image: vec![0; 1] };
    let cfg = ExploreConfig { check_termination: false, ..ExploreConfig::default() };
    let report = check::explore(&inst, &cfg);
    assert_eq!(report.completed_terminals, 0);
    assert!(matches!(report.verdict("deadlock-freedom").unwrap(), Verdict::Counterexample(_)));

    let mut w = workload(assemble(src).unwrap(), 1, 2, 1);
    w.spec.cooperative = false;
    let sim_cfg = SimConfig { units: 2, ..SimConfig::default() };
    assert!(matches!(sim::run(&sim_cfg, &w, None), Err(sim::SimError::DeadlockDetected(_))));
}

#[test]
fn mismatched_barriers_diverge() {
    // A loop whose trip count is data-dependent passes the conservative
    // validator but leaves workgroups waiting at two different barrier
    // statements at run time: divergence, never a release.
    let src = "g = group_id\nn = gload g\nwhile n\n  global_barrier\n  n = sub n 1\nendwhile\nglobal_barrier\nhalt\n";
    let program = assemble(src).unwrap();
    assert!(coopsim::program::validate(&program).is_ok());
    let mut w = workload(program, 2, 2, 1);
    // Workgroup 0 loops twice, workgroup 1 once.
    w.spec.global_image = vec![2, 1];
    w.spec.cooperative = false;
    let cfg = SimConfig { units: 2, ..SimConfig::default() };
    match sim::run(&cfg, &w, None) {
        Err(sim::SimError::DeadlockDetected(d)) => {
            assert!(d.contains("different barrier statements"), "{d}");
        }
        other => panic!("expected divergence deadlock, got {other:?}"),
    }
}
