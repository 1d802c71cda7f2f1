//! Bundled workloads: a cooperative work-stealing kernel, a cooperative
//! frontier graph-traversal kernel, deterministic input generators with
//! sequential oracles, and the synthetic non-cooperative workload presets.

use crate::program::{assemble, LaunchSpec, Program};
use crate::Word;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

const GRAPH_BFS_SRC: &str = include_str!("../kernels/graph_bfs.casm");
const WORK_STEALING_SRC: &str = include_str!("../kernels/work_stealing.casm");

/// Assembled cooperative graph-traversal kernel (shared with the fixture on
/// disk; tests assert it validates).
pub fn graph_bfs_program() -> Program {
    assemble(GRAPH_BFS_SRC).expect("bundled kernel assembles")
}

pub fn work_stealing_program() -> Program {
    assemble(WORK_STEALING_SRC).expect("bundled kernel assembles")
}

pub fn graph_bfs_source() -> &'static str {
    GRAPH_BFS_SRC
}

pub fn work_stealing_source() -> &'static str {
    WORK_STEALING_SRC
}

/// How to read a workload's result out of final global memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutputSpec {
    /// A fixed array, compared element-wise (BFS level array).
    GlobalRange { start: usize, len: usize },
    /// A counted list whose order is schedule-dependent; compared as a
    /// sorted multiset (work-stealing processed tasks).
    CountedList { count_addr: usize, base: usize },
}

impl OutputSpec {
    pub fn extract(&self, global: &[Word]) -> Vec<Word> {
        match *self {
            OutputSpec::GlobalRange { start, len } => global[start..start + len].to_vec(),
            OutputSpec::CountedList { count_addr, base } => {
                let n = global[count_addr].max(0) as usize;
                let mut items = global[base..base + n].to_vec();
                items.sort_unstable();
                items
            }
        }
    }
}

/// A ready-to-launch workload: program, bound parameters, initial memory
/// image, output description and the sequential oracle's expected output.
#[derive(Debug, Clone)]
pub struct Workload {
    pub spec: LaunchSpec,
    pub output: OutputSpec,
    pub expected: Vec<Word>,
}

impl Workload {
    pub fn with_groups(mut self, n: u32) -> Workload {
        self.spec.n_groups = n;
        self
    }

    pub fn with_group_size(mut self, d: u32) -> Workload {
        self.spec.group_size = d;
        self
    }

    /// The same kernel with its cooperative primitives stripped: resizing
    /// barriers downgrade to plain barriers and bare offers/forks disappear.
    /// Used as the baseline for overhead measurements.
    pub fn plain_variant(&self) -> Workload {
        use crate::program::{Stmt, S};
        fn strip(body: &[S]) -> Vec<S> {
            let mut out = Vec::new();
            for s in body {
                match &s.stmt {
                    Stmt::OfferKill | Stmt::RequestFork => {}
                    Stmt::ResizingBarrier => {
                        out.push(S { line: s.line, class: s.class, stmt: Stmt::GlobalBarrier })
                    }
                    Stmt::If { cond, then_branch, else_branch } => out.push(S {
                        line: s.line,
                        class: s.class,
                        stmt: Stmt::If {
                            cond: cond.clone(),
                            then_branch: strip(then_branch),
                            else_branch: strip(else_branch),
                        },
                    }),
                    Stmt::While { cond, body } => out.push(S {
                        line: s.line,
                        class: s.class,
                        stmt: Stmt::While { cond: cond.clone(), body: strip(body) },
                    }),
                    _ => out.push(s.clone()),
                }
            }
            out
        }
        let mut w = self.clone();
        w.spec.program.body = strip(&self.spec.program.body);
        w.spec.program.transmit.clear();
        w
    }
}

// ---------------------------------------------------------------------------
// Graphs

/// Adjacency in compressed sparse row form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrontierGraph {
    pub n: usize,
    pub offsets: Vec<usize>,
    pub edges: Vec<usize>,
}

impl FrontierGraph {
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbours(&self, v: usize) -> &[usize] {
        &self.edges[self.offsets[v]..self.offsets[v + 1]]
    }

    fn from_adjacency(adj: Vec<Vec<usize>>) -> FrontierGraph {
        let n = adj.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut edges = Vec::new();
        offsets.push(0);
        for out in adj {
            edges.extend(out);
            offsets.push(edges.len());
        }
        FrontierGraph { n, offsets, edges }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphKind {
    /// A path: many levels, frontier of one (deep).
    Chain,
    /// Node 0 points at every other node: two levels (wide).
    Star,
    /// size x size four-neighbour grid: wavefront frontiers.
    Grid,
    /// Seeded uniform random out-edges, one to four per node.
    Random,
}

impl FromStr for GraphKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chain" => Ok(GraphKind::Chain),
            "star" => Ok(GraphKind::Star),
            "grid" => Ok(GraphKind::Grid),
            "random" => Ok(GraphKind::Random),
            other => Err(format!("unknown graph kind `{other}`")),
        }
    }
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GraphKind::Chain => "chain",
            GraphKind::Star => "star",
            GraphKind::Grid => "grid",
            GraphKind::Random => "random",
        };
        write!(f, "{s}")
    }
}

/// Deterministic graph generator; `size` is the node count (side length for
/// grids). Identical (kind, size, seed) inputs yield identical graphs.
pub fn generate_graph(kind: GraphKind, size: usize, seed: u64) -> FrontierGraph {
    assert!(size >= 1, "graph size must be at least 1");
    match kind {
        GraphKind::Chain => {
            let adj = (0..size).map(|i| if i + 1 < size { vec![i + 1] } else { vec![] }).collect();
            FrontierGraph::from_adjacency(adj)
        }
        GraphKind::Star => {
            let mut adj = vec![Vec::new(); size];
            adj[0] = (1..size).collect();
            FrontierGraph::from_adjacency(adj)
        }
        GraphKind::Grid => {
            let k = size;
            let n = k * k;
            let mut adj = vec![Vec::new(); n];
            for r in 0..k {
                for c in 0..k {
                    let v = r * k + c;
                    if c + 1 < k {
                        adj[v].push(v + 1);
                        adj[v + 1].push(v);
                    }
                    if r + 1 < k {
                        adj[v].push(v + k);
                        adj[v + k].push(v);
                    }
                }
            }
            FrontierGraph::from_adjacency(adj)
        }
        GraphKind::Random => {
            use rand::{Rng, SeedableRng};
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let mut adj = vec![Vec::new(); size];
            for (v, out) in adj.iter_mut().enumerate() {
                let deg = rng.gen_range(1..=4usize.min(size));
                for _ in 0..deg {
                    let mut t = rng.gen_range(0..size);
                    if t == v {
                        t = (t + 1) % size;
                    }
                    out.push(t);
                }
            }
            FrontierGraph::from_adjacency(adj)
        }
    }
}

/// Sequential queue-based breadth-first search from node 0: the oracle for
/// the cooperative traversal kernel. Unreached nodes get -1.
pub fn bfs_oracle(graph: &FrontierGraph) -> Vec<Word> {
    let mut levels = vec![-1; graph.n];
    let mut queue = std::collections::VecDeque::new();
    levels[0] = 0;
    queue.push_back(0usize);
    while let Some(v) = queue.pop_front() {
        let next = levels[v] + 1;
        for &w in graph.neighbours(v) {
            if levels[w] == -1 {
                levels[w] = next;
                queue.push_back(w);
            }
        }
    }
    levels
}

#[derive(Debug, Error)]
pub enum GraphIoError {
    #[error("graph file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Text CSR format: `nodes N`, `edges M`, an `offsets` line with N+1 values
/// and a `targets` line with M values.
pub fn write_graph(graph: &FrontierGraph) -> String {
    let mut out = String::new();
    out.push_str(&format!("nodes {}\n", graph.n));
    out.push_str(&format!("edges {}\n", graph.edge_count()));
    out.push_str("offsets");
    for o in &graph.offsets {
        out.push_str(&format!(" {o}"));
    }
    out.push('\n');
    out.push_str("targets");
    for e in &graph.edges {
        out.push_str(&format!(" {e}"));
    }
    out.push('\n');
    out
}

pub fn read_graph(text: &str) -> Result<FrontierGraph, GraphIoError> {
    let mut n = None;
    let mut m = None;
    let mut offsets = None;
    let mut edges = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("nodes") => n = toks.next().and_then(|t| t.parse().ok()),
            Some("edges") => m = toks.next().and_then(|t| t.parse().ok()),
            Some("offsets") => {
                offsets = Some(toks.map(|t| t.parse()).collect::<Result<Vec<usize>, _>>())
            }
            Some("targets") => {
                edges = Some(toks.map(|t| t.parse()).collect::<Result<Vec<usize>, _>>())
            }
            Some(other) => return Err(GraphIoError::Malformed(format!("unknown field `{other}`"))),
            None => {}
        }
    }
    let n: usize = n.ok_or_else(|| GraphIoError::Malformed("missing `nodes`".into()))?;
    let m: usize = m.ok_or_else(|| GraphIoError::Malformed("missing `edges`".into()))?;
    let offsets = offsets
        .ok_or_else(|| GraphIoError::Malformed("missing `offsets`".into()))?
        .map_err(|e| GraphIoError::Malformed(format!("bad offset: {e}")))?;
    let edges = edges
        .ok_or_else(|| GraphIoError::Malformed("missing `targets`".into()))?
        .map_err(|e| GraphIoError::Malformed(format!("bad target: {e}")))?;
    if offsets.len() != n + 1 || edges.len() != m || offsets.last() != Some(&m) {
        return Err(GraphIoError::Malformed("inconsistent counts".into()));
    }
    if edges.iter().any(|&e| e >= n) {
        return Err(GraphIoError::Malformed("edge target out of range".into()));
    }
    Ok(FrontierGraph { n, offsets, edges })
}

// ---------------------------------------------------------------------------
// Workload constructors

/// Builds the cooperative BFS workload over `graph`, with the initial
/// frontier holding node 0 and the level array pre-set to -1 (0 for the
/// source).
pub fn make_graph_workload(graph: &FrontierGraph) -> Workload {
    let n = graph.n;
    let offs_base = 0usize;
    let edges_base = offs_base + n + 1;
    let levels_base = edges_base + graph.edge_count();
    let n0_base = levels_base + n;
    let n1_base = n0_base + n + 1;
    let total = n1_base + n + 1;

    let mut image = vec![0 as Word; total];
    for (i, o) in graph.offsets.iter().enumerate() {
        image[offs_base + i] = *o as Word;
    }
    for (i, e) in graph.edges.iter().enumerate() {
        image[edges_base + i] = *e as Word;
    }
    for i in 0..n {
        image[levels_base + i] = -1;
    }
    image[levels_base] = 0;
    image[n0_base] = 1;
    image[n0_base + 1] = 0;
    image[n1_base] = 0;

    let program = graph_bfs_program();
    let params = vec![
        n0_base as Word,
        n1_base as Word,
        offs_base as Word,
        edges_base as Word,
        levels_base as Word,
    ];
    let expected = bfs_oracle(graph);
    Workload {
        spec: LaunchSpec::new(program, params, image),
        output: OutputSpec::GlobalRange { start: levels_base, len: n },
        expected,
    }
}

/// Task counts for a complete `branching`-ary tree expanded to `depth`:
/// (total tasks, internal tasks that spawn children).
pub fn task_tree_counts(depth: u32, branching: u32) -> (u64, u64) {
    assert!(branching >= 1);
    let mut total: u64 = 0;
    let mut level: u64 = 1;
    for _ in 0..depth {
        total += level;
        level *= branching as u64;
    }
    let internal = total;
    total += level;
    (total, internal)
}

/// Sequential expansion of the task tree: the oracle multiset of processed
/// task ids (sorted).
pub fn workstealing_oracle(depth: u32, branching: u32) -> Vec<Word> {
    let (_, internal) = task_tree_counts(depth, branching);
    let mut out = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(0u64);
    while let Some(t) = queue.pop_front() {
        out.push(t as Word);
        if t < internal {
            for j in 0..branching as u64 {
                queue.push_back(t * branching as u64 + j + 1);
            }
        }
    }
    out.sort_unstable();
    out
}

/// Builds the cooperative work-stealing workload: `n_queues` mutex-guarded
/// task deques with the root task in queue 0.
pub fn make_workstealing_workload(depth: u32, branching: u32, n_queues: u32) -> Workload {
    assert!(n_queues >= 1);
    let (total, internal) = task_tree_counts(depth, branching);
    let nq = n_queues as usize;
    let cap = total as usize + 1;
    let qstride = 2 + cap;

    let pending_a = 0usize;
    let outcnt_a = 1usize;
    let mtx = 2usize;
    let cs = mtx + nq;
    let qbase = cs + nq;
    let outb = qbase + nq * qstride;
    let words = outb + total as usize;

    let mut image = vec![0 as Word; words];
    image[pending_a] = 1;
    // Root task 0 in queue 0: head 0, tail 1, items[0] = 0.
    image[qbase + 1] = 1;
    image[qbase + 2] = 0;

    let mut program = work_stealing_program();
    program.requested_groups = n_queues;
    let params = vec![
        pending_a as Word,
        outcnt_a as Word,
        mtx as Word,
        cs as Word,
        qbase as Word,
        outb as Word,
        nq as Word,
        qstride as Word,
        internal as Word,
        branching as Word,
    ];
    let expected = workstealing_oracle(depth, branching);
    Workload {
        spec: LaunchSpec::new(program, params, image),
        output: OutputSpec::CountedList { count_addr: outcnt_a, base: outb },
        expected,
    }
}

// ---------------------------------------------------------------------------
// Synthetic non-cooperative workload

/// Workload presets: period P and full-allocation execution time E, in
/// virtual milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorkloadPreset {
    Light,
    Medium,
    Heavy,
}

impl WorkloadPreset {
    /// (P, E) in virtual milliseconds.
    pub fn period_exec_vms(self) -> (u64, u64) {
        match self {
            WorkloadPreset::Light => (70, 3),
            WorkloadPreset::Medium => (40, 3),
            WorkloadPreset::Heavy => (40, 10),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WorkloadPreset::Light => "light",
            WorkloadPreset::Medium => "medium",
            WorkloadPreset::Heavy => "heavy",
        }
    }
}

impl FromStr for WorkloadPreset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "light" => Ok(WorkloadPreset::Light),
            "medium" => Ok(WorkloadPreset::Medium),
            "heavy" => Ok(WorkloadPreset::Heavy),
            other => Err(format!("unknown workload preset `{other}`")),
        }
    }
}

/// Fraction of the machine's units a non-cooperative launch requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fraction {
    One,
    Quarter,
    Half,
    AllButOne,
}

impl Fraction {
    pub fn workgroups(self, units: u32) -> u32 {
        match self {
            Fraction::One => 1,
            Fraction::Quarter => (units / 4).max(1),
            Fraction::Half => (units / 2).max(1),
            Fraction::AllButOne => units.saturating_sub(1).max(1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Fraction::One => "one",
            Fraction::Quarter => "quarter",
            Fraction::Half => "half",
            Fraction::AllButOne => "allbutone",
        }
    }

    pub const ALL: [Fraction; 4] =
        [Fraction::One, Fraction::Quarter, Fraction::Half, Fraction::AllButOne];
}

impl FromStr for Fraction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one" => Ok(Fraction::One),
            "quarter" => Ok(Fraction::Quarter),
            "half" => Ok(Fraction::Half),
            "allbutone" => Ok(Fraction::AllButOne),
            other => Err(format!("unknown fraction `{other}`")),
        }
    }
}

/// A recurring stream of abstract non-cooperative launches. Total work is
/// `E * units` unit-milliseconds, so execution time scales inversely with
/// the workgroups granted.
#[derive(Debug, Clone, Copy)]
pub struct NoncoopStream {
    pub period_ns: u64,
    /// Total work in virtual ns when run on a single unit.
    pub work_ns: u64,
    /// Workgroups each launch requests.
    pub wgs: u32,
}

impl NoncoopStream {
    pub fn exec_ns(&self, granted: u32) -> u64 {
        assert!(granted >= 1);
        self.work_ns / granted as u64
    }
}

/// Builds the recurring non-cooperative launch stream for a preset on a
/// machine with `units` compute units; `ns_per_vms` converts the preset's
/// virtual milliseconds into simulator nanoseconds.
pub fn make_synthetic_noncoop(preset: WorkloadPreset, units: u32, wgs: u32, ns_per_vms: u64) -> NoncoopStream {
    let (p_vms, e_vms) = preset.period_exec_vms();
    NoncoopStream {
        period_ns: p_vms * ns_per_vms,
        work_ns: e_vms * ns_per_vms * units as u64,
        wgs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::validate;

    #[test]
    fn bundled_kernels_validate() {
        for p in [graph_bfs_program(), work_stealing_program()] {
            let report = validate(&p);
            assert!(report.is_ok(), "kernel `{}` invalid: {report}", p.name);
        }
    }

    #[test]
    fn chain_and_star_shapes() {
        let chain = generate_graph(GraphKind::Chain, 1000, 0);
        assert_eq!(chain.edge_count(), 999);
        assert_eq!(bfs_oracle(&chain), (0..1000).map(|i| i as Word).collect::<Vec<_>>());

        let star = generate_graph(GraphKind::Star, 1000, 0);
        let levels = bfs_oracle(&star);
        assert_eq!(levels[0], 0);
        assert!(levels[1..].iter().all(|&l| l == 1));
    }

    #[test]
    fn chain5_levels() {
        let g = generate_graph(GraphKind::Chain, 5, 0);
        assert_eq!(bfs_oracle(&g), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn random_graph_deterministic() {
        let a = generate_graph(GraphKind::Random, 1000, 7);
        let b = generate_graph(GraphKind::Random, 1000, 7);
        assert_eq!(a, b);
        let c = generate_graph(GraphKind::Random, 1000, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn graph_roundtrip() {
        let g = generate_graph(GraphKind::Random, 64, 3);
        let text = write_graph(&g);
        assert_eq!(read_graph(&text).unwrap(), g);
    }

    #[test]
    fn task_counts() {
        // depth 3, branching 2: complete binary tree with 2^4 - 1 nodes.
        assert_eq!(task_tree_counts(3, 2), (15, 7));
        assert_eq!(task_tree_counts(0, 2), (1, 0));
        assert_eq!(workstealing_oracle(3, 2), (0..15).collect::<Vec<Word>>());
        assert_eq!(workstealing_oracle(0, 5), vec![0]);
    }

    #[test]
    fn oracle_ids_are_contiguous() {
        for (d, b) in [(2, 3), (4, 2), (1, 7)] {
            let (total, _) = task_tree_counts(d, b);
            assert_eq!(workstealing_oracle(d, b), (0..total as Word).collect::<Vec<_>>());
        }
    }

    #[test]
    fn preset_values() {
        assert_eq!(WorkloadPreset::Light.period_exec_vms(), (70, 3));
        assert_eq!(WorkloadPreset::Medium.period_exec_vms(), (40, 3));
        assert_eq!(WorkloadPreset::Heavy.period_exec_vms(), (40, 10));
    }

    #[test]
    fn noncoop_scaling_is_inverse() {
        let s = make_synthetic_noncoop(WorkloadPreset::Heavy, 8, 4, 1000);
        // Half the units takes twice as long as all of them.
        assert_eq!(s.exec_ns(4), 2 * s.exec_ns(8));
        // Medium stream over 400 virtual ms posts 10 launches.
        let m = make_synthetic_noncoop(WorkloadPreset::Medium, 8, 2, 1000);
        assert_eq!(400_000 / m.period_ns, 10);
    }

    #[test]
    fn fractions_of_eight() {
        assert_eq!(Fraction::One.workgroups(8), 1);
        assert_eq!(Fraction::Quarter.workgroups(8), 2);
        assert_eq!(Fraction::Half.workgroups(8), 4);
        assert_eq!(Fraction::AllButOne.workgroups(8), 7);
    }
}
