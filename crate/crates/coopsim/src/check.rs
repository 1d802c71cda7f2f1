//! Bounded exhaustive exploration of the transition system for small
//! configurations: every thread interleaving and every scheduler choice up
//! to configured caps, with invariant checking on each reachable state,
//! deadlock detection, and progress analysis with fairness on or off.

use crate::program::{lower, Compiled, LowerError};
use crate::sem::{self, EnumOpts, KernelState, SemError, Transition};
use crate::workloads::Workload;
use crate::Word;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::rc::Rc;

pub use crate::barrier::BarrierImpl;

/// A phased deterministic scheduler for policy-driven exploration: each
/// phase demands a number of kills or grants a number of forks, advancing
/// when exhausted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhasedPolicy {
    pub phases: Vec<Phase>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Demand(u32),
    Grant(u32),
}

/// Progress through a phased policy; part of the explored state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PolicyState {
    phase: u32,
    remaining: u32,
}

impl PhasedPolicy {
    fn normalised_init(&self) -> PolicyState {
        self.skip_empty(PolicyState { phase: 0, remaining: self.phases.first().map(count).unwrap_or(0) })
    }

    fn skip_empty(&self, mut ps: PolicyState) -> PolicyState {
        while ps.remaining == 0 && (ps.phase as usize) < self.phases.len() {
            ps.phase += 1;
            ps.remaining = self.phases.get(ps.phase as usize).map(count).unwrap_or(0);
        }
        ps
    }

    fn demand(&self, ps: PolicyState) -> u32 {
        match self.phases.get(ps.phase as usize) {
            Some(Phase::Demand(_)) => ps.remaining,
            _ => 0,
        }
    }

    fn grant(&self, ps: PolicyState) -> u32 {
        match self.phases.get(ps.phase as usize) {
            Some(Phase::Grant(_)) => ps.remaining,
            _ => 0,
        }
    }

    fn after_kill(&self, ps: PolicyState) -> PolicyState {
        debug_assert!(self.demand(ps) > 0);
        self.skip_empty(PolicyState { phase: ps.phase, remaining: ps.remaining - 1 })
    }

    fn after_fork(&self, ps: PolicyState, k: u32) -> PolicyState {
        if k == 0 {
            return ps;
        }
        debug_assert!(self.grant(ps) >= k);
        self.skip_empty(PolicyState { phase: ps.phase, remaining: ps.remaining - k })
    }
}

fn count(p: &Phase) -> u32 {
    match *p {
        Phase::Demand(n) | Phase::Grant(n) => n,
    }
}

/// Exploration bounds and the property set to evaluate.
#[derive(Debug, Clone)]
pub struct ExploreConfig {
    pub max_states: usize,
    pub max_depth: usize,
    /// Scheduler choice enumeration caps (free enumeration mode).
    pub enum_opts: EnumOpts,
    /// Deterministic phased scheduler instead of free choice enumeration.
    pub policy: Option<PhasedPolicy>,
    /// Restrict scheduling to occupant workgroups (the lowest ids holding
    /// one of this many units).
    pub occupancy_units: Option<u32>,
    /// Progress analysis: with fairness on, look for fair non-termination;
    /// with fairness off, any reachable cycle is a starvation witness.
    pub fairness: bool,
    pub check_termination: bool,
    pub check_deadlock: bool,
    /// Global cells that must stay in {0, 1} in every reachable state
    /// (mutex and critical-section occupancy witnesses).
    pub binary_cells: Vec<usize>,
    /// Terminal-state obligation: this cell must hold this value in every
    /// state with no successors.
    pub terminal_cell: Option<(usize, Word)>,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            max_states: 1_000_000,
            max_depth: 0,
            enum_opts: EnumOpts::default(),
            policy: None,
            occupancy_units: None,
            fairness: true,
            check_termination: true,
            check_deadlock: true,
            binary_cells: Vec::new(),
            terminal_cell: None,
        }
    }
}

/// A counterexample: a transition sequence from the initial state, which
/// replays deterministically through the transition system.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trace {
    pub transitions: Vec<Transition>,
    pub note: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Counterexample(Trace),
    BudgetExhausted { states: usize, frontier: usize },
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyResult {
    pub property: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub reachable_states: usize,
    pub explored_transitions: u64,
    pub budget_exhausted: bool,
    /// Reachable states in which every thread has finished.
    pub completed_terminals: usize,
    /// Reachable states with no successor but unfinished threads.
    pub deadlock_terminals: usize,
    pub results: Vec<PropertyResult>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        !self.budget_exhausted && self.results.iter().all(|r| r.verdict.is_pass())
    }

    pub fn verdict(&self, property: &str) -> Option<&Verdict> {
        self.results.iter().find(|r| r.property == property).map(|r| &r.verdict)
    }
}

/// A concrete exploration instance: lowered program plus the launch shape.
#[derive(Debug, Clone)]
pub struct Instance {
    pub prog: Compiled,
    pub n: u32,
    pub d: u32,
    pub m0: u32,
    pub params: Vec<Word>,
    pub image: Vec<Word>,
}

impl Instance {
    pub fn from_workload(w: &Workload, bimpl: BarrierImpl, m0: u32) -> Result<Instance, LowerError> {
        let prog = lower(&w.spec.program, bimpl, w.spec.global_image.len())?;
        Ok(Instance {
            prog,
            n: w.spec.n_groups,
            d: w.spec.group_size,
            m0,
            params: w.spec.param_values.clone(),
            image: w.spec.global_image.clone(),
        })
    }

    pub fn initial_state(&self) -> KernelState {
        KernelState::launch(&self.prog, self.n, self.d, self.m0, &self.params, &self.image)
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct CheckState {
    kernel: KernelState,
    policy: Option<PolicyState>,
}

struct Node {
    state: Rc<CheckState>,
    parent: Option<(u32, Transition)>,
    depth: u32,
}

struct Edge {
    from: u32,
    to: u32,
    transition: Transition,
}

/// True when the workgroup is an occupant: among the lowest `units`
/// non-halted active ids.
fn occupant(kernel: &KernelState, prog: &Compiled, units: u32, wg: u32) -> bool {
    let mut seen = 0;
    for w in 0..kernel.active {
        let halted = kernel
            .wg(w)
            .map(|g| g.threads.iter().all(|t| t.pc >= prog.end_pc()))
            .unwrap_or(true);
        if halted {
            continue;
        }
        if w == wg {
            return seen < units;
        }
        seen += 1;
    }
    false
}

fn policy_transitions(prog: &Compiled, cs: &CheckState, policy: &PhasedPolicy) -> Vec<Transition> {
    let ps = cs.policy.expect("policy state present in policy mode");
    let kernel = &cs.kernel;
    let mut out = Vec::new();
    for t in sem::enabled_transitions(prog, kernel, EnumOpts { k_cap: u32::MAX, query_cap: 0 }) {
        match t {
            Transition::ThreadStep { .. } | Transition::Barrier => out.push(t),
            Transition::QueryStep { wg, tid, w: _ } => {
                let t = Transition::QueryStep { wg, tid, w: policy.demand(ps) as Word };
                if !out.contains(&t) {
                    out.push(t);
                }
            }
            Transition::Kill { wg } => {
                if policy.demand(ps) > 0 {
                    out.push(Transition::Kill { wg });
                }
            }
            Transition::KillNoOp { wg } => {
                // Present exactly when the policy declines (or the offer is
                // ineligible, in which case the Kill variant never appears).
                if policy.demand(ps) == 0 || !sem::kill_eligible(kernel, wg) {
                    out.push(Transition::KillNoOp { wg });
                }
            }
            Transition::Fork { wg, k: _ } => {
                // Enumerated widths collapse to the single policy choice.
                let k = policy.grant(ps).min(kernel.n_max - kernel.active);
                let t = Transition::Fork { wg, k };
                if !out.contains(&t) {
                    out.push(t);
                }
            }
        }
    }
    out
}

fn successor_policy(policy: &PhasedPolicy, ps: PolicyState, t: &Transition) -> PolicyState {
    match t {
        Transition::Kill { .. } => policy.after_kill(ps),
        Transition::Fork { k, .. } => policy.after_fork(ps, *k),
        _ => ps,
    }
}

/// The workgroups an edge gives progress to (the barrier steps everyone).
fn attributed_wgs(kernel: &KernelState, t: &Transition) -> Vec<u32> {
    match t.wg() {
        Some(wg) => vec![wg],
        None => (0..kernel.active).collect(),
    }
}

/// Structural and semantic invariants evaluated on every reachable state.
fn state_invariants(cs: &CheckState, cfg: &ExploreConfig) -> Result<(), String> {
    cs.kernel.check_invariants()?;
    for &cell in &cfg.binary_cells {
        let v = cs.kernel.shared.global.get(cell).copied().unwrap_or(0);
        if v != 0 && v != 1 {
            return Err(format!("cell {cell} holds {v}, expected 0 or 1 (mutual exclusion violated)"));
        }
    }
    Ok(())
}

/// Per-transition obligations: kills remove exactly the top slot and leave
/// the survivors untouched; forks initialise exactly the transmit set and
/// the parameters, and do not disturb pre-existing workgroups.
fn transition_invariants(
    prog: &Compiled,
    pre: &KernelState,
    t: &Transition,
    post: &KernelState,
) -> Result<(), String> {
    match *t {
        Transition::Kill { wg } => {
            if wg != pre.active - 1 || pre.active <= 1 {
                return Err(format!("kill of slot {wg} with M = {} violates the kill order", pre.active));
            }
            if post.active != pre.active - 1 {
                return Err("kill must decrement M by one".into());
            }
            for s in 0..post.active {
                if pre.slots[s as usize] != post.slots[s as usize] {
                    return Err(format!("kill of slot {wg} disturbed surviving slot {s}"));
                }
            }
        }
        Transition::Fork { wg, k } => {
            if post.active != pre.active + k {
                return Err("fork must increment M by k".into());
            }
            for s in 0..pre.active {
                if s == wg {
                    continue;
                }
                if pre.slots[s as usize] != post.slots[s as usize] {
                    return Err(format!("fork from {wg} disturbed unrelated slot {s}"));
                }
            }
            let mut expected: Vec<bool> = vec![false; prog.n_vars()];
            expected[..prog.n_params].fill(true);
            for &tv in &prog.transmit {
                expected[tv as usize] = true;
            }
            for s in pre.active..post.active {
                for th in &post.wg(s).unwrap().threads {
                    let defined: Vec<bool> = th.env.iter().map(|v| v.is_some()).collect();
                    if defined != expected {
                        return Err(format!(
                            "forked slot {s} env domain differs from parameters + transmit set"
                        ));
                    }
                }
            }
        }
        _ => {}
    }
    Ok(())
}

/// Explores the reachable state space and evaluates the configured
/// properties. Exploration is exhaustive up to the caps: re-running with a
/// larger cap never shrinks the reachable-state count.
pub fn explore(instance: &Instance, cfg: &ExploreConfig) -> Report {
    let prog = &instance.prog;
    let init = CheckState {
        kernel: instance.initial_state(),
        policy: cfg.policy.as_ref().map(|p| p.normalised_init()),
    };

    let mut nodes: Vec<Node> = Vec::new();
    let mut index: HashMap<Rc<CheckState>, u32> = HashMap::new();
    let mut edges: Vec<Edge> = Vec::new();
    let mut queue = std::collections::VecDeque::new();

    let init = Rc::new(init);
    nodes.push(Node { state: init.clone(), parent: None, depth: 0 });
    index.insert(init, 0u32);
    queue.push_back(0u32);

    let mut explored_transitions: u64 = 0;
    let mut budget_exhausted = false;
    let mut completed_terminals = 0usize;
    let mut deadlock_terminals = 0usize;

    let mut invariant_cx: Option<Trace> = None;
    let mut deadlock_cx: Option<Trace> = None;
    let mut error_cx: Option<Trace> = None;
    let mut terminal_cx: Option<Trace> = None;

    let path_to = |nodes: &[Node], mut id: u32| -> Vec<Transition> {
        let mut path = Vec::new();
        while let Some((p, t)) = nodes[id as usize].parent {
            path.push(t);
            id = p;
        }
        path.reverse();
        path
    };

    if let Err(msg) = state_invariants(&nodes[0].state, cfg) {
        invariant_cx = Some(Trace { transitions: vec![], note: msg });
    }

    while let Some(id) = queue.pop_front() {
        if nodes.len() >= cfg.max_states {
            budget_exhausted = true;
            break;
        }
        let cs = nodes[id as usize].state.clone();
        let depth = nodes[id as usize].depth;
        if cfg.max_depth > 0 && depth as usize >= cfg.max_depth {
            budget_exhausted = true;
            continue;
        }

        let mut transitions = match (&cfg.policy, cs.policy) {
            (Some(p), Some(_)) => policy_transitions(prog, &cs, p),
            _ => sem::enabled_transitions(prog, &cs.kernel, cfg.enum_opts),
        };
        if let Some(units) = cfg.occupancy_units {
            transitions.retain(|t| match t.wg() {
                Some(wg) => occupant(&cs.kernel, prog, units, wg),
                // The barrier needs every participant scheduled onto a
                // unit; a waiting workgroup can never arrive.
                None => (0..cs.kernel.active).all(|wg| occupant(&cs.kernel, prog, units, wg)),
            });
        }

        if transitions.is_empty() {
            let all_halted = cs.kernel.all_halted(prog);
            if all_halted {
                completed_terminals += 1;
            } else {
                deadlock_terminals += 1;
            }
            if !all_halted && cfg.check_deadlock && deadlock_cx.is_none() {
                deadlock_cx = Some(Trace {
                    transitions: path_to(&nodes, id),
                    note: "no enabled transition while threads remain unfinished".into(),
                });
            }
            if all_halted {
                if let Some((cell, want)) = cfg.terminal_cell {
                    let got = cs.kernel.shared.global.get(cell).copied().unwrap_or(0);
                    if got != want && terminal_cx.is_none() {
                        terminal_cx = Some(Trace {
                            transitions: path_to(&nodes, id),
                            note: format!("terminal state holds {got} in cell {cell}, expected {want}"),
                        });
                    }
                }
            }
            continue;
        }

        for t in transitions {
            explored_transitions += 1;
            let next_kernel = match sem::apply_transition(prog, &cs.kernel, &t) {
                Ok(k) => k,
                Err(e) => {
                    if error_cx.is_none() {
                        let mut path = path_to(&nodes, id);
                        path.push(t);
                        error_cx = Some(Trace { transitions: path, note: format!("runtime error: {e}") });
                    }
                    continue;
                }
            };
            if let Err(msg) = transition_invariants(prog, &cs.kernel, &t, &next_kernel) {
                if invariant_cx.is_none() {
                    let mut path = path_to(&nodes, id);
                    path.push(t);
                    invariant_cx = Some(Trace { transitions: path, note: msg });
                }
            }
            let next = CheckState {
                kernel: next_kernel,
                policy: cs.policy.map(|ps| successor_policy(cfg.policy.as_ref().unwrap(), ps, &t)),
            };
            let next = Rc::new(next);
            let to = match index.get(&next) {
                Some(&existing) => existing,
                None => {
                    let nid = nodes.len() as u32;
                    if let Err(msg) = state_invariants(&next, cfg) {
                        if invariant_cx.is_none() {
                            let mut path = path_to(&nodes, id);
                            path.push(t);
                            invariant_cx = Some(Trace { transitions: path, note: msg });
                        }
                    }
                    nodes.push(Node { state: next.clone(), parent: Some((id, t)), depth: depth + 1 });
                    index.insert(next, nid);
                    queue.push_back(nid);
                    nid
                }
            };
            edges.push(Edge { from: id, to, transition: t });
        }
    }

    // Progress analysis over the explored graph.
    let termination_verdict = if !cfg.check_termination {
        None
    } else if budget_exhausted {
        Some(Verdict::BudgetExhausted { states: nodes.len(), frontier: queue.len() })
    } else if cfg.fairness {
        Some(fair_termination(&nodes, &edges, &path_to))
    } else {
        Some(find_lasso(&nodes, &edges, &path_to))
    };

    let mut results = Vec::new();
    let finish = |cx: Option<Trace>| match cx {
        Some(trace) => Verdict::Counterexample(trace),
        None if budget_exhausted => Verdict::BudgetExhausted { states: nodes.len(), frontier: queue.len() },
        None => Verdict::Pass,
    };
    results.push(PropertyResult { property: "invariants".into(), verdict: finish(invariant_cx) });
    results.push(PropertyResult { property: "no-runtime-errors".into(), verdict: finish(error_cx) });
    if cfg.check_deadlock {
        results.push(PropertyResult { property: "deadlock-freedom".into(), verdict: finish(deadlock_cx) });
    }
    if cfg.terminal_cell.is_some() {
        results.push(PropertyResult { property: "terminal-output".into(), verdict: finish(terminal_cx) });
    }
    if let Some(v) = termination_verdict {
        let name = if cfg.fairness { "fair-termination" } else { "no-starvation-lasso" };
        results.push(PropertyResult { property: name.into(), verdict: v });
    }

    Report {
        reachable_states: nodes.len(),
        explored_transitions,
        budget_exhausted,
        completed_terminals,
        deadlock_terminals,
        results,
    }
}

/// Fairness disabled: any reachable cycle is a schedule on which some
/// workgroup spins forever. Returns the first lasso found.
fn find_lasso(nodes: &[Node], edges: &[Edge], path_to: &dyn Fn(&[Node], u32) -> Vec<Transition>) -> Verdict {
    let mut adj: Vec<Vec<(u32, usize)>> = vec![Vec::new(); nodes.len()];
    for (i, e) in edges.iter().enumerate() {
        adj[e.from as usize].push((e.to, i));
    }
    // Iterative DFS with colours; a back edge closes a cycle.
    let mut colour = vec![0u8; nodes.len()]; // 0 white, 1 on stack, 2 done
    let mut stack: Vec<(u32, usize)> = Vec::new();
    let mut on_path: Vec<(u32, usize)> = Vec::new(); // (node, edge used to enter)

    colour[0] = 1;
    stack.push((0, 0));
    while let Some(&mut (v, ref mut next)) = stack.last_mut() {
        if *next < adj[v as usize].len() {
            let (to, eidx) = adj[v as usize][*next];
            *next += 1;
            match colour[to as usize] {
                0 => {
                    colour[to as usize] = 1;
                    on_path.push((to, eidx));
                    stack.push((to, 0));
                }
                1 => {
                    // Cycle: stem to `to`, then once around back to `to`.
                    let mut transitions = path_to(nodes, to);
                    let mut cycle = Vec::new();
                    let pos = on_path.iter().position(|&(n, _)| n == to);
                    let tail: Vec<usize> = match pos {
                        Some(p) => on_path[p + 1..].iter().map(|&(_, e)| e).collect(),
                        None => vec![],
                    };
                    for e in tail {
                        cycle.push(edges[e].transition);
                    }
                    cycle.push(edges[eidx].transition);
                    let cycle_len = cycle.len();
                    transitions.extend(cycle);
                    return Verdict::Counterexample(Trace {
                        transitions,
                        note: format!(
                            "state revisits itself after {cycle_len} transitions: an unfair scheduler can repeat them forever"
                        ),
                    });
                }
                _ => {}
            }
        } else {
            colour[v as usize] = 2;
            stack.pop();
            on_path.pop();
        }
    }
    Verdict::Pass
}

/// Fairness enabled: searches for a strongly connected component that can
/// sustain itself under strong fairness on workgroup scheduling, i.e. every
/// workgroup enabled somewhere in the component also steps inside it.
fn fair_termination(
    nodes: &[Node],
    edges: &[Edge],
    path_to: &dyn Fn(&[Node], u32) -> Vec<Transition>,
) -> Verdict {
    let n = nodes.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, e) in edges.iter().enumerate() {
        adj[e.from as usize].push(i);
    }

    // Tarjan strongly connected components, iterative.
    let mut index_of = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut scc_id = vec![usize::MAX; n];
    let mut stack_s: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut scc_count = 0usize;
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index_of[root] != usize::MAX {
            continue;
        }
        call.push((root, 0));
        index_of[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack_s.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut ei)) = call.last_mut() {
            if *ei < adj[v].len() {
                let edge = adj[v][*ei];
                *ei += 1;
                let w = edges[edge].to as usize;
                if index_of[w] == usize::MAX {
                    index_of[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack_s.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index_of[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index_of[v] {
                    loop {
                        let w = stack_s.pop().unwrap();
                        on_stack[w] = false;
                        scc_id[w] = scc_count;
                        if w == v {
                            break;
                        }
                    }
                    scc_count += 1;
                }
            }
        }
    }

    // For each component with internal edges: workgroups enabled anywhere in
    // it versus workgroups stepping inside it.
    let mut internal: Vec<Vec<usize>> = vec![Vec::new(); scc_count];
    for (i, e) in edges.iter().enumerate() {
        if scc_id[e.from as usize] == scc_id[e.to as usize] {
            internal[scc_id[e.from as usize]].push(i);
        }
    }
    for (scc, internal_edges) in internal.iter().enumerate() {
        if internal_edges.is_empty() {
            continue;
        }
        let mut steppers: Vec<u32> = Vec::new();
        for &e in internal_edges {
            for wg in attributed_wgs(&nodes[edges[e].from as usize].state.kernel, &edges[e].transition) {
                if !steppers.contains(&wg) {
                    steppers.push(wg);
                }
            }
        }
        let mut enabled: Vec<u32> = Vec::new();
        for (i, node) in nodes.iter().enumerate() {
            if scc_id[i] != scc {
                continue;
            }
            for e in &adj[i] {
                for wg in attributed_wgs(&node.state.kernel, &edges[*e].transition) {
                    if !enabled.contains(&wg) {
                        enabled.push(wg);
                    }
                }
            }
        }
        if enabled.iter().all(|wg| steppers.contains(wg)) {
            let entry = (0..n).find(|&i| scc_id[i] == scc).unwrap();
            return Verdict::Counterexample(Trace {
                transitions: path_to(nodes, entry as u32),
                note: format!(
                    "fair non-termination: a cycle exists in which every enabled workgroup ({enabled:?}) keeps stepping"
                ),
            });
        }
    }
    Verdict::Pass
}

/// Replays a transition sequence from an initial state; every prefix must
/// apply cleanly.
pub fn replay(prog: &Compiled, init: &KernelState, trace: &[Transition]) -> Result<KernelState, SemError> {
    let mut st = init.clone();
    for t in trace {
        st = sem::apply_transition(prog, &st, t)?;
    }
    Ok(st)
}

/// Micro-kernels with known properties for checker runs.
pub mod demos {
    use super::Instance;
    use crate::barrier::BarrierImpl;
    use crate::program::{assemble, lower};
    use crate::Word;

    /// Each workgroup takes a spin mutex (cell 0), increments a counter
    /// (cell 1) non-atomically inside the critical section, and tracks
    /// critical-section occupancy in cell 2.
    pub fn mutex(n: u32) -> Instance {
        let src = "\
lk = 1
while lk
  old = cas 0 0 1
  lk = ne old 0
endwhile
c = gload 2
c = add c 1
gstore 2 c
v = gload 1
v = add v 1
gstore 1 v
c = gload 2
c = sub c 1
gstore 2 c
astore 0 0
halt
";
        let program = assemble(src).unwrap();
        let prog = lower(&program, BarrierImpl::Semantic, 3).unwrap();
        Instance { prog, n, d: 1, m0: n, params: vec![], image: vec![0; 3] }
    }

    /// Expected terminal counter cell and value for the mutex demo.
    pub fn mutex_expected(n: u32) -> (usize, Word) {
        (1, n as Word)
    }

    /// n workgroups each record their arrival and meet at one global
    /// barrier.
    pub fn barrier(n: u32) -> Instance {
        let program = assemble("x = aadd 0 1\nglobal_barrier\nhalt\n").unwrap();
        let prog = lower(&program, BarrierImpl::Semantic, 1).unwrap();
        Instance { prog, n, d: 1, m0: n, params: vec![], image: vec![0; 1] }
    }

    /// A transmit assignment followed by one resizing barrier; the final
    /// active count is stored to cell 0.
    pub fn resize_micro(n: u32, m0: u32) -> Instance {
        let src = "\
transmit tv
tv = 7
resizing_barrier
m = num_groups
gstore 0 m
halt
";
        let program = assemble(src).unwrap();
        let prog = lower(&program, BarrierImpl::Semantic, 1).unwrap();
        Instance { prog, n, d: 1, m0, params: vec![], image: vec![0; 1] }
    }
}
