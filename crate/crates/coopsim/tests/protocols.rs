//! End-to-end runs of the barrier protocols under resizing traffic:
//! cooperative kernels keep computing the right answer while the scheduler
//! demands and grants workgroups through the naive and query barriers.

use coopsim::barrier::BarrierImpl;
use coopsim::sched::{Policy, ScriptAction, ScriptEvent};
use coopsim::sim::{self, ExecMode, SimConfig};
use coopsim::workloads::{
    generate_graph, make_graph_workload, make_workstealing_workload, GraphKind,
};

fn cfg(units: u32, barrier: BarrierImpl, policy: Policy) -> SimConfig {
    SimConfig {
        units,
        barrier_impl: barrier,
        policy,
        mode: ExecMode::Fair,
        ..SimConfig::default()
    }
}

#[test]
fn bfs_all_barrier_impls_match_oracle() {
    for barrier in [BarrierImpl::Semantic, BarrierImpl::Naive, BarrierImpl::Query] {
        for (kind, size) in [(GraphKind::Chain, 40), (GraphKind::Star, 40), (GraphKind::Random, 60)] {
            let g = generate_graph(kind, size, 5);
            let w = make_graph_workload(&g).with_groups(4).with_group_size(2);
            let out = sim::run(&cfg(4, barrier, Policy::NeverResize), &w, None)
                .unwrap_or_else(|e| panic!("{barrier:?} {kind:?}: {e}"));
            assert_eq!(out.output_of(&w), w.expected, "{barrier:?} {kind:?}");
        }
    }
}

#[test]
fn scripted_demand_shrinks_m_and_output_survives() {
    for barrier in [BarrierImpl::Semantic, BarrierImpl::Naive, BarrierImpl::Query] {
        let g = generate_graph(GraphKind::Grid, 8, 0);
        let w = make_graph_workload(&g).with_groups(6).with_group_size(1);
        let policy = Policy::Scripted(vec![ScriptEvent { at_ns: 500, action: ScriptAction::Demand(3) }]);
        let out = sim::run(&cfg(6, barrier, policy), &w, None)
            .unwrap_or_else(|e| panic!("{barrier:?}: {e}"));
        assert_eq!(out.output_of(&w), w.expected, "{barrier:?}");
        // The demand was fully gathered.
        let reqs = out.sched.requests();
        assert_eq!(reqs.len(), 1);
        assert!(reqs[0].satisfied(), "{barrier:?}: demand unsatisfied");
        assert_eq!(out.final_state.active, 3, "{barrier:?}: M after three kills");
    }
}

#[test]
fn scripted_kill_then_grant_restores_m() {
    for barrier in [BarrierImpl::Semantic, BarrierImpl::Naive, BarrierImpl::Query] {
        let g = generate_graph(GraphKind::Grid, 10, 0);
        let w = make_graph_workload(&g).with_groups(4).with_group_size(1);
        let policy = Policy::Scripted(vec![
            ScriptEvent { at_ns: 300, action: ScriptAction::Demand(2) },
            ScriptEvent { at_ns: 4000, action: ScriptAction::Grant(2) },
        ]);
        let out = sim::run(&cfg(4, barrier, policy), &w, None)
            .unwrap_or_else(|e| panic!("{barrier:?}: {e}"));
        assert_eq!(out.output_of(&w), w.expected, "{barrier:?}");
        let forks: u32 = out.episodes.iter().map(|e| e.forks).sum();
        let kills: u32 = out.episodes.iter().map(|e| e.kills).sum();
        assert!(kills >= 2, "{barrier:?}: kills = {kills}");
        assert!(forks >= 1, "{barrier:?}: forks = {forks}");
    }
}

/// Number of episode releases strictly inside the gather window: zero or
/// one means the demand was satisfied within a single barrier episode.
fn releases_inside_gather(out: &sim::RunOutput, request: u32) -> usize {
    let req = &out.sched.requests()[request as usize];
    assert!(req.satisfied());
    let post = req.posted_ns;
    let last = *req.surrender_ns.last().unwrap();
    out.episodes
        .iter()
        .filter_map(|e| e.release_ns)
        .filter(|&r| post < r && r < last)
        .count()
}

#[test]
fn query_satisfies_demand_within_one_episode() {
    let g = generate_graph(GraphKind::Grid, 10, 0);
    let w = make_graph_workload(&g).with_groups(8).with_group_size(1);
    let policy = Policy::Scripted(vec![ScriptEvent { at_ns: 400, action: ScriptAction::Demand(5) }]);
    let out = sim::run(&cfg(8, BarrierImpl::Query, policy), &w, None).unwrap();
    assert_eq!(out.output_of(&w), w.expected);
    assert!(releases_inside_gather(&out, 0) <= 1);
}

#[test]
fn naive_may_take_multiple_episodes_but_gathers() {
    let g = generate_graph(GraphKind::Grid, 10, 0);
    let w = make_graph_workload(&g).with_groups(8).with_group_size(1);
    let policy = Policy::Scripted(vec![ScriptEvent { at_ns: 400, action: ScriptAction::Demand(5) }]);
    let out = sim::run(&cfg(8, BarrierImpl::Naive, policy), &w, None).unwrap();
    assert_eq!(out.output_of(&w), w.expected);
    assert!(out.sched.requests()[0].satisfied());
}

#[test]
fn query_gather_at_most_naive_on_paired_runs() {
    for seed in 0..6u64 {
        let g = generate_graph(GraphKind::Grid, 9, seed);
        let demand = 1 + (seed % 5) as u32;
        let policy = Policy::Scripted(vec![ScriptEvent { at_ns: 600, action: ScriptAction::Demand(demand) }]);
        let mut gathers = Vec::new();
        for barrier in [BarrierImpl::Naive, BarrierImpl::Query] {
            let w = make_graph_workload(&g).with_groups(6).with_group_size(1);
            let out = sim::run(&cfg(6, barrier, policy.clone()), &w, None).unwrap();
            assert_eq!(out.output_of(&w), w.expected);
            gathers.push(out.sched.gather_time(0).unwrap());
        }
        assert!(
            gathers[1] <= gathers[0],
            "seed {seed} demand {demand}: query gather {} > naive gather {}",
            gathers[1],
            gathers[0]
        );
    }
}

#[test]
fn workstealing_with_resize_trace_is_schedule_invariant() {
    for seed in 0..4u64 {
        let w = make_workstealing_workload(5, 2, 4);
        let policy = Policy::Scripted(vec![
            ScriptEvent { at_ns: 200 + seed * 37, action: ScriptAction::Demand(2) },
            ScriptEvent { at_ns: 2000 + seed * 91, action: ScriptAction::Grant(2) },
        ]);
        let out = sim::run(&cfg(4, BarrierImpl::Semantic, policy), &w, None).unwrap();
        assert_eq!(out.output_of(&w), w.expected, "seed {seed}");
    }
}

#[test]
fn unit_conservation_through_multitasking() {
    use coopsim::workloads::{make_synthetic_noncoop, WorkloadPreset};
    let w = make_workstealing_workload(10, 2, 8);
    let stream = make_synthetic_noncoop(WorkloadPreset::Heavy, 8, 4, 400);
    let cfg = SimConfig {
        units: 8,
        policy: Policy::TargetOccupancy,
        barrier_impl: BarrierImpl::Semantic,
        ..SimConfig::default()
    };
    let out = sim::run(&cfg, &w, Some(stream)).unwrap();
    assert_eq!(out.output_of(&w), w.expected);
    assert!(out.sched.conservation_holds());
    assert!(!out.metrics.noncoop.is_empty());
}

#[test]
fn m_constant_between_resizing_episodes() {
    // Between two successive episodes, no kill or fork is attributed
    // outside an episode: the active count only changes inside them.
    let g = generate_graph(GraphKind::Grid, 8, 1);
    let w = make_graph_workload(&g).with_groups(6).with_group_size(1);
    let policy = Policy::Scripted(vec![
        ScriptEvent { at_ns: 300, action: ScriptAction::Demand(2) },
        ScriptEvent { at_ns: 3500, action: ScriptAction::Grant(2) },
    ]);
    let out = sim::run(&cfg(6, BarrierImpl::Query, policy), &w, None).unwrap();
    // Episode bookkeeping accounts for every change of M: initial M plus
    // all forks minus all kills equals the final M.
    let forks: i64 = out.episodes.iter().map(|e| e.forks as i64).sum();
    let kills: i64 = out.episodes.iter().map(|e| e.kills as i64).sum();
    assert_eq!(6 + forks - kills, out.final_state.active as i64);
}

#[test]
fn protocols_with_two_threads_per_workgroup() {
    for barrier in [BarrierImpl::Naive, BarrierImpl::Query] {
        let g = generate_graph(GraphKind::Random, 80, 3);
        let w = make_graph_workload(&g).with_groups(4).with_group_size(2);
        let policy = Policy::Scripted(vec![
            ScriptEvent { at_ns: 500, action: ScriptAction::Demand(2) },
            ScriptEvent { at_ns: 6000, action: ScriptAction::Grant(2) },
        ]);
        let out = sim::run(&cfg(4, barrier, policy), &w, None)
            .unwrap_or_else(|e| panic!("{barrier:?}: {e}"));
        assert_eq!(out.output_of(&w), w.expected, "{barrier:?}");
    }
}

#[test]
fn active_count_constant_between_barriers() {
    // A kernel that records num_groups right after each resizing barrier in
    // per-workgroup slots; with the two-phase release every workgroup must
    // observe the same value in the same interval.
    let src = "\
kernel probe
n = 5
while n
  resizing_barrier
  m = num_groups
  g = group_id
  base = mul n 8
  a = add base g
  gstore a m
  n = sub n 1
endwhile
halt
";
    let program = coopsim::program::assemble(src).unwrap();
    let mut w = coopsim::workloads::Workload {
        spec: coopsim::program::LaunchSpec::new(program, vec![], vec![0; 64]),
        output: coopsim::workloads::OutputSpec::GlobalRange { start: 0, len: 64 },
        expected: vec![],
    };
    w.spec.n_groups = 6;
    w.spec.group_size = 1;
    w.spec.program.global_words = 64;
    for barrier in [BarrierImpl::Semantic, BarrierImpl::Naive, BarrierImpl::Query] {
        let policy = Policy::Scripted(vec![
            ScriptEvent { at_ns: 100, action: ScriptAction::Demand(3) },
            ScriptEvent { at_ns: 3000, action: ScriptAction::Grant(2) },
        ]);
        let out = sim::run(&cfg(6, barrier, policy), &w, None)
            .unwrap_or_else(|e| panic!("{barrier:?}: {e}"));
        let mem = &out.final_state.shared.global;
        for interval in 1..=5usize {
            let row = &mem[interval * 8..interval * 8 + 6];
            let seen: Vec<_> = row.iter().filter(|&&v| v != 0).collect();
            assert!(!seen.is_empty());
            assert!(
                seen.iter().all(|&&v| v == *seen[0]),
                "{barrier:?}: interval {interval} observed mixed active counts {row:?}"
            );
        }
    }
}
