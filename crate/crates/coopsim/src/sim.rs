//! Discrete-event virtual-time executor.
//!
//! Workgroups advance in round-robin quanta over a deterministic event queue
//! ordered by (time, sequence). In fair mode every active workgroup keeps
//! receiving quanta, which realises the cooperative scheduling guarantee; in
//! occupancy-bound mode only workgroups holding one of the `units` compute
//! units ever run, and a unit is surrendered only when its workgroup
//! finishes, so blocking kernels that overcommit the machine deadlock just
//! as they do under that execution model.

use crate::barrier::BarrierImpl;
use crate::program::{lower, validate, Compiled, CostClass, LowerError, MarkPhase, Op};
use crate::sched::{LaunchDecision, LaunchRequest, Policy, SchedError, SchedulerContext, TraceEvent};
use crate::sem::{self, KernelState, SemError, ThreadOpKind};
use crate::workloads::{NoncoopStream, Workload};
use crate::Word;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use thiserror::Error;

/// Default virtual-nanoseconds per virtual millisecond. The scale is chosen
/// so the bundled kernels run for tens of workload periods at desk scale.
pub const DEFAULT_NS_PER_VMS: u64 = 400;

pub const COOP_KERNEL: u32 = 0;
pub const NONCOOP_KERNEL: u32 = 1;

/// Virtual cost of each instruction class, in virtual nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostTable {
    pub alu: u64,
    pub mem: u64,
    pub atomic: u64,
    pub barrier: u64,
    /// Cost of a cooperative primitive's scheduler interaction, and of the
    /// machinery a resizing barrier adds beyond a plain barrier.
    pub primitive: u64,
}

impl Default for CostTable {
    fn default() -> Self {
        CostTable { alu: 1, mem: 4, atomic: 16, barrier: 16, primitive: 16 }
    }
}

impl CostTable {
    pub fn zero_primitive(mut self) -> CostTable {
        self.primitive = 0;
        self
    }

    pub fn cost(&self, class: CostClass) -> u64 {
        match class {
            CostClass::Alu => self.alu,
            CostClass::Mem => self.mem,
            CostClass::Atomic => self.atomic,
            CostClass::Barrier => self.barrier,
            CostClass::Primitive => self.primitive,
            CostClass::Free => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExecMode {
    /// Every active workgroup is fairly scheduled.
    Fair,
    /// Occupant workgroups own their compute unit until completion;
    /// non-occupants wait for a free unit.
    OccupancyBound,
}

impl ExecMode {
    pub fn name(self) -> &'static str {
        match self {
            ExecMode::Fair => "fair",
            ExecMode::OccupancyBound => "occupancy",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub units: u32,
    /// Instructions per scheduling slice.
    pub quantum: u32,
    pub costs: CostTable,
    pub mode: ExecMode,
    pub seed: u64,
    pub policy: Policy,
    pub barrier_impl: BarrierImpl,
    /// Abort knob: maximum executed instructions.
    pub step_budget: u64,
    pub ns_per_vms: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            units: 8,
            quantum: 64,
            costs: CostTable::default(),
            mode: ExecMode::Fair,
            seed: 0,
            policy: Policy::NeverResize,
            barrier_impl: BarrierImpl::Semantic,
            step_budget: 400_000_000,
            ns_per_vms: DEFAULT_NS_PER_VMS,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("deadlock detected: {0}")]
    DeadlockDetected(String),
    #[error("step budget exceeded after {0} instructions")]
    StepBudgetExceeded(u64),
    #[error("program failed validation:\n{0}")]
    InvalidProgram(String),
    #[error(transparent)]
    Sem(#[from] SemError),
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error(transparent)]
    Lower(#[from] LowerError),
    #[error("the cooperative and plain versions disagree on outputs")]
    MismatchedOutputs,
    #[error("invalid interval: duration must satisfy 0 <= D < P")]
    InvalidInterval,
}

/// One barrier episode: the span from a master entering a resizing barrier
/// to its release, with the resize activity attributed to it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Episode {
    pub index: u64,
    pub site: u32,
    pub m_before: u32,
    pub enter_ns: u64,
    pub release_ns: Option<u64>,
    pub forks: u32,
    pub kills: u32,
    pub w: Option<Word>,
}

/// Per non-cooperative launch measurements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoncoopLaunchRecord {
    pub id: u32,
    pub posted_ns: u64,
    pub start_ns: u64,
    pub end_ns: u64,
    pub gather_ns: u64,
    pub exec_ns: u64,
    pub granted: u32,
    /// Start-to-start delta from the previous launch.
    pub period_ns: Option<u64>,
}

/// Everything measured in one simulation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub kernel: String,
    pub seed: u64,
    pub units: u32,
    pub mode: String,
    pub barrier: String,
    pub policy: String,
    pub quantum: u32,
    pub coop_runtime_ns: u64,
    pub instructions: u64,
    pub barrier_episodes: u64,
    /// Filled by harnesses that run a baseline; absent otherwise.
    pub slowdown: Option<f64>,
    pub costs: CostTable,
    pub noncoop: Vec<NoncoopLaunchRecord>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: MetricsRecord,
    pub final_state: KernelState,
    pub episodes: Vec<Episode>,
    pub sched: SchedulerContext,
    pub compiled: Compiled,
}

impl RunOutput {
    pub fn output_of(&self, workload: &Workload) -> Vec<Word> {
        workload.output.extract(&self.final_state.shared.global)
    }

    pub fn sched_trace(&self) -> &[TraceEvent] {
        &self.sched.trace
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum WgRun {
    /// Waiting for a compute unit (occupancy-bound mode only).
    Pending,
    Runnable,
    Parked { pc: usize, at: u64 },
    Halted,
    Dead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    WgSlice { wg: u32 },
    NoncoopPost,
    NoncoopDone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Event {
    t: u64,
    seq: u64,
    kind: EventKind,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.t, self.seq).cmp(&(other.t, other.seq))
    }
}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

struct PendingLaunch {
    request: u32,
    posted_ns: u64,
    /// Units actually coming to this launch: what was free at post time
    /// plus the (possibly clamped) demanded amount.
    granted: u32,
}

struct InFlight {
    record: NoncoopLaunchRecord,
}

struct Engine<'a> {
    prog: &'a Compiled,
    cfg: &'a SimConfig,
    st: KernelState,
    sched: SchedulerContext,
    clock: u64,
    seq: u64,
    events: BinaryHeap<Reverse<Event>>,
    wg_run: Vec<WgRun>,
    cursor: Vec<usize>,
    live_slices: u64,
    executed: u64,
    episodes: Vec<Episode>,
    stream: Option<NoncoopStream>,
    pending_launch: Option<PendingLaunch>,
    in_flight: Option<InFlight>,
    records: Vec<NoncoopLaunchRecord>,
    last_post_ns: u64,
    last_start_ns: Option<u64>,
    last_halt_ns: u64,
    noncoop_counter: u32,
}

impl<'a> Engine<'a> {
    fn push_event(&mut self, t: u64, kind: EventKind) {
        if matches!(kind, EventKind::WgSlice { .. }) {
            self.live_slices += 1;
        }
        self.seq += 1;
        self.events.push(Reverse(Event { t, seq: self.seq, kind }));
    }

    fn schedule_wg(&mut self, wg: u32, t: u64) {
        debug_assert_eq!(self.wg_run[wg as usize], WgRun::Runnable);
        self.push_event(t, EventKind::WgSlice { wg });
    }

    fn coop_done(&self) -> bool {
        (0..self.st.active).all(|wg| {
            self.st
                .wg(wg)
                .map(|w| w.threads.iter().all(|t| t.pc >= self.prog.end_pc()))
                .unwrap_or(true)
        }) && self.wg_run.iter().all(|r| !matches!(r, WgRun::Pending))
    }

    fn current_episode(&mut self) -> Option<&mut Episode> {
        self.episodes.last_mut()
    }

    fn mark(&mut self, site: u32, phase: MarkPhase, now: u64) {
        match phase {
            MarkPhase::Enter => {
                if let Some(ep) = self.episodes.last() {
                    if ep.site == site && ep.release_ns.is_none() {
                        return; // other master threads repeat the mark
                    }
                }
                let index = self.episodes.len() as u64;
                self.episodes.push(Episode {
                    index,
                    site,
                    m_before: self.st.active,
                    enter_ns: now,
                    release_ns: None,
                    forks: 0,
                    kills: 0,
                    w: None,
                });
            }
            MarkPhase::Release => {
                if let Some(ep) = self.episodes.iter_mut().rev().find(|e| e.site == site) {
                    if ep.release_ns.is_none() {
                        ep.release_ns = Some(now);
                    }
                }
            }
        }
    }

    /// Promotes waiting workgroups onto freed units (occupancy-bound mode).
    fn promote_waiters(&mut self, now: u64) {
        if self.cfg.mode != ExecMode::OccupancyBound {
            return;
        }
        loop {
            let occupants = self
                .wg_run
                .iter()
                .filter(|r| matches!(r, WgRun::Runnable | WgRun::Parked { .. }))
                .count() as u32;
            if occupants >= self.cfg.units {
                return;
            }
            let next = self.wg_run.iter().position(|r| matches!(r, WgRun::Pending));
            match next {
                Some(wg) => {
                    self.wg_run[wg] = WgRun::Runnable;
                    self.schedule_wg(wg as u32, now);
                }
                None => return,
            }
        }
    }

    /// Fires the atomic barrier if every active workgroup is parked at the
    /// same pc. Mixed parking pcs with nothing else runnable is reported as
    /// a deadlock by the main loop.
    fn try_fire_barrier(&mut self) -> Result<(), SimError> {
        let mut pcs = Vec::new();
        let mut last_arrival = 0u64;
        for wg in 0..self.st.active {
            match self.wg_run[wg as usize] {
                WgRun::Parked { pc, at } => {
                    pcs.push(pc);
                    last_arrival = last_arrival.max(at);
                }
                _ => return Ok(()),
            }
        }
        if pcs.is_empty() {
            return Ok(());
        }
        if pcs.iter().any(|&p| p != pcs[0]) {
            return Ok(()); // divergence; surfaces as deadlock
        }
        // The barrier completes when its slowest participant arrives, plus
        // the cost of the barrier instruction itself (the inner barriers of
        // a resizing expansion are primitive-classed).
        let class = self.prog.classes[pcs[0]];
        sem::apply_global_barrier(self.prog, &mut self.st)?;
        let fire_t = last_arrival + self.cfg.costs.cost(class);
        for wg in 0..self.st.active {
            self.wg_run[wg as usize] = WgRun::Runnable;
            self.schedule_wg(wg, fire_t);
        }
        Ok(())
    }

    fn start_noncoop(&mut self, posted_ns: u64, start_ns: u64, gather_ns: u64, granted: u32) {
        let stream = self.stream.expect("stream present when starting a launch");
        let exec = stream.exec_ns(granted);
        let id = self.noncoop_counter;
        self.noncoop_counter += 1;
        let record = NoncoopLaunchRecord {
            id,
            posted_ns,
            start_ns,
            end_ns: start_ns + exec,
            gather_ns,
            exec_ns: exec,
            granted,
            period_ns: self.last_start_ns.map(|p| start_ns - p),
        };
        self.last_start_ns = Some(start_ns);
        self.in_flight = Some(InFlight { record: record.clone() });
        self.push_event(record.end_ns, EventKind::NoncoopDone);
    }

    fn handle_noncoop_post(&mut self, now: u64) -> Result<(), SimError> {
        let stream = match self.stream {
            Some(s) => s,
            None => return Ok(()),
        };
        self.last_post_ns = now;
        let free_before = self.sched.available();
        let req = LaunchRequest { kernel: NONCOOP_KERNEL, wgs: stream.wgs, cooperative: false };
        match self.sched.launch(req, now, self.st.active) {
            Ok(LaunchDecision::Started { granted }) => {
                self.start_noncoop(now, now, 0, granted);
            }
            Ok(LaunchDecision::Pending { request }) => {
                let demanded = self.sched.request(request).map(|r| r.amount).unwrap_or(0);
                self.pending_launch =
                    Some(PendingLaunch { request, posted_ns: now, granted: free_before + demanded });
                // A demand clamped to zero is satisfied on the spot.
                self.check_pending_launch(now);
            }
            Err(SchedError::RejectedNoCapacity) => {
                // Nothing can yield (never-resize policy); try again next period.
                self.push_event(now + stream.period_ns, EventKind::NoncoopPost);
            }
            Err(e) => return Err(e.into()),
        }
        Ok(())
    }

    fn handle_noncoop_done(&mut self, now: u64) {
        let fl = self.in_flight.take().expect("completion without launch");
        self.sched.kernel_done(NONCOOP_KERNEL, now);
        self.records.push(fl.record);
        if let Some(stream) = self.stream {
            let next = (self.last_post_ns + stream.period_ns).max(now);
            self.push_event(next, EventKind::NoncoopPost);
        }
    }

    /// Called after kills: if the pending non-cooperative launch became
    /// fully gathered, start it.
    fn check_pending_launch(&mut self, now: u64) {
        let satisfied = self.sched.take_newly_satisfied();
        if satisfied.is_empty() {
            return;
        }
        if let Some(p) = &self.pending_launch {
            if satisfied.contains(&p.request) {
                let gather = self.sched.gather_time(p.request).unwrap_or(0);
                let (posted, granted) = (p.posted_ns, p.granted);
                self.pending_launch = None;
                self.start_noncoop(posted, now, gather, granted);
            }
        }
    }

    fn budget_check(&self) -> Result<(), SimError> {
        if self.executed > self.cfg.step_budget {
            return Err(SimError::StepBudgetExceeded(self.executed));
        }
        Ok(())
    }

    /// Runs one scheduling slice of a workgroup: up to `quantum`
    /// instructions round-robin over its threads, resolving collective
    /// operations as they are reached. The slice never advances past
    /// `horizon` (the next pending event), so memory effects of different
    /// workgroups serialise in virtual time.
    fn run_slice(&mut self, wg: u32, horizon: u64) -> Result<(), SimError> {
        if self.wg_run[wg as usize] != WgRun::Runnable {
            unreachable!("slice for non-runnable workgroup");
        }
        let d = self.st.group_size;
        let mut spent: u64 = 0;
        let mut n_exec: u32 = 0;

        'slice: while n_exec < self.cfg.quantum && self.clock + spent <= horizon {
            let now = self.clock + spent;
            // Find the next steppable thread, round-robin.
            let mut stepped = false;
            for off in 0..d {
                let tid = (self.cursor[wg as usize] as u32 + off) % d;
                match sem::thread_op_kind(self.prog, &self.st, wg, tid) {
                    ThreadOpKind::Plain => {
                        let pc = self.st.thread(wg, tid).unwrap().pc;
                        if let Op::Mark { site, phase } = self.prog.ops[pc] {
                            self.mark(site, phase, now);
                        }
                        let class = sem::step_thread(self.prog, &mut self.st, wg, tid)?;
                        let c = self.cfg.costs.cost(class);
                        spent += c;
                        // Zero-cost instructions ride along without consuming
                        // the quantum, so they cannot perturb slice boundaries.
                        if c > 0 {
                            n_exec += 1;
                        }
                        self.executed += 1;
                        self.cursor[wg as usize] = ((tid + 1) % d) as usize;
                        stepped = true;
                        break;
                    }
                    ThreadOpKind::Query => {
                        let w = self.sched.query();
                        if let Some(ep) = self.current_episode() {
                            ep.w = Some(w);
                        }
                        let class = sem::step_query(self.prog, &mut self.st, wg, tid, w)?;
                        let c = self.cfg.costs.cost(class);
                        spent += c;
                        if c > 0 {
                            n_exec += 1;
                        }
                        self.executed += 1;
                        self.cursor[wg as usize] = ((tid + 1) % d) as usize;
                        stepped = true;
                        break;
                    }
                    _ => {}
                }
            }
            if stepped {
                self.budget_check()?;
                continue 'slice;
            }

            // No thread can step alone: classify the collective situation.
            let kinds: Vec<ThreadOpKind> =
                (0..d).map(|tid| sem::thread_op_kind(self.prog, &self.st, wg, tid)).collect();
            let pcs: Vec<usize> = (0..d)
                .map(|tid| self.st.thread(wg, tid).map(|t| t.pc).unwrap_or(usize::MAX))
                .collect();

            if kinds.iter().all(|k| *k == ThreadOpKind::Halted) {
                self.wg_run[wg as usize] = WgRun::Halted;
                self.last_halt_ns = self.last_halt_ns.max(now);
                // Overcommitted fair runs hold fewer units than workgroups.
                if self.cfg.mode == ExecMode::Fair && self.sched.running_for(COOP_KERNEL) > 0 {
                    self.sched.release_unit(COOP_KERNEL, now);
                }
                self.promote_waiters(now);
                return Ok(());
            }
            let uniform = pcs.iter().all(|&p| p == pcs[0]);
            if kinds.iter().all(|k| *k == ThreadOpKind::Offer) && uniform {
                let eligible = sem::kill_eligible(&self.st, wg);
                let episode = self.episodes.last().map(|e| e.index);
                let accept = eligible && self.sched.on_offer_kill(COOP_KERNEL, wg, now, episode);
                let outcome = sem::apply_offer_kill(self.prog, &mut self.st, wg, accept)?;
                spent += self.cfg.costs.primitive;
                if self.cfg.costs.primitive > 0 {
                    n_exec += 1;
                }
                self.executed += 1;
                self.budget_check()?;
                if outcome == sem::KillOutcome::Killed {
                    self.wg_run[wg as usize] = WgRun::Dead;
                    if let Some(ep) = self.current_episode() {
                        ep.kills += 1;
                    }
                    self.check_pending_launch(now);
                    self.promote_waiters(now);
                    // The departure may leave every remaining workgroup
                    // parked at the same barrier.
                    self.try_fire_barrier()?;
                    return Ok(());
                }
                continue 'slice;
            }
            if kinds.iter().all(|k| *k == ThreadOpKind::Fork) && uniform {
                let n_minus_m = self.st.n_max - self.st.active;
                let k = match self.cfg.mode {
                    ExecMode::Fair => self.sched.on_request_fork(COOP_KERNEL, n_minus_m, now),
                    ExecMode::OccupancyBound => 0,
                };
                let m_before = self.st.active;
                sem::apply_request_fork(self.prog, &mut self.st, wg, k)?;
                spent += self.cfg.costs.primitive;
                if self.cfg.costs.primitive > 0 {
                    n_exec += 1;
                }
                self.executed += 1;
                self.budget_check()?;
                if k > 0 {
                    if let Some(ep) = self.current_episode() {
                        ep.forks += k;
                    }
                    for new_wg in m_before..m_before + k {
                        self.wg_run[new_wg as usize] = WgRun::Runnable;
                        self.cursor[new_wg as usize] = 0;
                        self.schedule_wg(new_wg, now + self.cfg.costs.primitive);
                    }
                }
                continue 'slice;
            }
            if kinds.iter().all(|k| *k == ThreadOpKind::Barrier) && uniform {
                self.wg_run[wg as usize] = WgRun::Parked { pc: pcs[0], at: now };
                self.try_fire_barrier()?;
                return Ok(());
            }
            // Threads stuck at mismatched collective points: the workgroup
            // can never proceed.
            return Err(SemError::NonUniformReach { wg }.into());
        }

        // Quantum or horizon reached; requeue.
        self.schedule_wg(wg, self.clock + spent.max(1));
        Ok(())
    }

    fn run_loop(&mut self) -> Result<(), SimError> {
        while let Some(Reverse(ev)) = self.events.pop() {
            debug_assert!(ev.t >= self.clock, "virtual time must be monotone");
            self.clock = ev.t;
            self.sched.advance_to(self.clock, self.st.active);
            match ev.kind {
                EventKind::WgSlice { wg } => {
                    self.live_slices -= 1;
                    let horizon = self.events.peek().map(|Reverse(e)| e.t).unwrap_or(u64::MAX);
                    self.run_slice(wg, horizon)?;
                }
                EventKind::NoncoopPost => self.handle_noncoop_post(self.clock)?,
                EventKind::NoncoopDone => self.handle_noncoop_done(self.clock),
            }
            if self.coop_done() {
                return Ok(());
            }
            if self.live_slices == 0 {
                let parked: Vec<usize> = self
                    .wg_run
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| matches!(r, WgRun::Parked { .. }))
                    .map(|(i, _)| i)
                    .collect();
                let pending = self.wg_run.iter().filter(|r| matches!(r, WgRun::Pending)).count();
                let mut detail = String::new();
                if !parked.is_empty() {
                    let pcs: Vec<usize> = parked
                        .iter()
                        .map(|&i| match self.wg_run[i] {
                            WgRun::Parked { pc, .. } => pc,
                            _ => unreachable!(),
                        })
                        .collect();
                    if pcs.iter().any(|&p| p != pcs[0]) {
                        detail.push_str("threads wait at different barrier statements; ");
                    }
                    detail.push_str(&format!("workgroups {parked:?} parked at a barrier that cannot fire"));
                }
                if pending > 0 {
                    if !detail.is_empty() {
                        detail.push_str("; ");
                    }
                    detail.push_str(&format!("{pending} workgroup(s) never obtained a compute unit"));
                }
                if detail.is_empty() {
                    detail.push_str("no runnable workgroup remains");
                }
                return Err(SimError::DeadlockDetected(detail));
            }
        }
        if self.coop_done() {
            Ok(())
        } else {
            Err(SimError::DeadlockDetected("event queue drained with the kernel unfinished".into()))
        }
    }
}

/// Runs one workload under the given configuration, with an optional
/// recurring non-cooperative stream. Identical configurations and seeds
/// produce identical outputs.
pub fn run(cfg: &SimConfig, workload: &Workload, stream: Option<NoncoopStream>) -> Result<RunOutput, SimError> {
    let spec = &workload.spec;
    let report = validate(&spec.program);
    if !report.is_ok() {
        return Err(SimError::InvalidProgram(report.to_string()));
    }
    let prog = lower(&spec.program, cfg.barrier_impl, spec.global_image.len())?;

    let mut sched = SchedulerContext::new(cfg.units, cfg.policy.clone())?;
    let m0 = match (cfg.mode, spec.cooperative) {
        // Cooperative contract: the scheduler may start the kernel with
        // fewer workgroups than requested.
        (ExecMode::Fair, true) => {
            let req = LaunchRequest { kernel: COOP_KERNEL, wgs: spec.n_groups, cooperative: true };
            match sched.launch(req, 0, 0)? {
                LaunchDecision::Started { granted } => granted,
                LaunchDecision::Pending { .. } => return Err(SchedError::RejectedNoCapacity.into()),
            }
        }
        // A plain kernel under fair scheduling runs every requested
        // workgroup, time-sliced across however many units exist.
        (ExecMode::Fair, false) => {
            let req = LaunchRequest {
                kernel: COOP_KERNEL,
                wgs: spec.n_groups.min(sched.available()),
                cooperative: true,
            };
            sched.launch(req, 0, 0)?;
            spec.n_groups
        }
        // Occupancy-bound: every requested workgroup exists from the start
        // and competes for units.
        (ExecMode::OccupancyBound, _) => spec.n_groups,
    };

    let st = KernelState::launch(&prog, spec.n_groups, spec.group_size, m0, &spec.param_values, &spec.global_image);

    let mut engine = Engine {
        prog: &prog,
        cfg,
        st,
        sched,
        clock: 0,
        seq: 0,
        events: BinaryHeap::new(),
        wg_run: vec![WgRun::Dead; spec.n_groups as usize],
        cursor: vec![0; spec.n_groups as usize],
        live_slices: 0,
        executed: 0,
        episodes: Vec::new(),
        stream,
        pending_launch: None,
        in_flight: None,
        records: Vec::new(),
        last_post_ns: 0,
        last_start_ns: None,
        last_halt_ns: 0,
        noncoop_counter: 0,
    };

    let occupants = match cfg.mode {
        ExecMode::Fair => m0,
        ExecMode::OccupancyBound => m0.min(cfg.units),
    };
    for wg in 0..m0 {
        engine.wg_run[wg as usize] = if wg < occupants { WgRun::Runnable } else { WgRun::Pending };
    }
    for wg in 0..occupants {
        engine.schedule_wg(wg, 0);
    }
    if engine.stream.is_some() {
        let first = engine.stream.unwrap().period_ns;
        engine.push_event(first, EventKind::NoncoopPost);
    }

    engine.run_loop()?;

    let metrics = MetricsRecord {
        kernel: prog.name.clone(),
        seed: cfg.seed,
        units: cfg.units,
        mode: cfg.mode.name().to_string(),
        barrier: cfg.barrier_impl.name().to_string(),
        policy: cfg.policy.name().to_string(),
        quantum: cfg.quantum,
        coop_runtime_ns: engine.last_halt_ns,
        instructions: engine.executed,
        barrier_episodes: engine.episodes.len() as u64,
        slowdown: None,
        costs: cfg.costs,
        noncoop: engine.records.clone(),
    };
    Ok(RunOutput {
        metrics,
        final_state: engine.st,
        episodes: engine.episodes,
        sched: engine.sched,
        compiled: prog,
    })
}

/// Measures the slowdown of a cooperative kernel against the same kernel
/// with its cooperative primitives stripped, under a never-resize policy.
/// Outputs are compared before timing. With the primitive cost configured
/// to zero the two versions execute identically costed work and the ratio
/// is exactly 1.
pub fn measure_overhead(cfg: &SimConfig, workload: &Workload) -> Result<(f64, RunOutput, RunOutput), SimError> {
    let mut cfg = cfg.clone();
    cfg.policy = Policy::NeverResize;
    cfg.barrier_impl = BarrierImpl::Semantic;
    let plain = workload.plain_variant();
    let plain_out = run(&cfg, &plain, None)?;
    let coop_out = run(&cfg, workload, None)?;
    if coop_out.output_of(workload) != plain_out.output_of(&plain) {
        return Err(SimError::MismatchedOutputs);
    }
    let slowdown = coop_out.metrics.coop_runtime_ns as f64 / plain_out.metrics.coop_runtime_ns as f64;
    Ok((slowdown, coop_out, plain_out))
}

/// Analytical overhead of alternating a compute kernel with a periodic task
/// of duration D every P time steps under whole-kernel preemption: P/(P-D).
pub fn preemption_model_overhead(period: f64, duration: f64) -> Result<f64, SimError> {
    let valid = period > 0.0 && duration >= 0.0 && duration < period;
    if !valid {
        return Err(SimError::InvalidInterval);
    }
    Ok(period / (period - duration))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::assemble;
    use crate::workloads::{
        generate_graph, make_graph_workload, make_workstealing_workload, GraphKind, OutputSpec,
    };

    fn fair_cfg(units: u32) -> SimConfig {
        SimConfig { units, ..SimConfig::default() }
    }

    fn trivial_workload(src: &str, n: u32, d: u32) -> Workload {
        let mut program = assemble(src).unwrap();
        program.requested_groups = n;
        program.group_size = d;
        program.global_words = 8;
        Workload {
            spec: crate::program::LaunchSpec::new(program, vec![], vec![0; 8]),
            output: OutputSpec::GlobalRange { start: 0, len: 1 },
            expected: vec![],
        }
    }

    #[test]
    fn preemption_model_values() {
        let light = preemption_model_overhead(70.0, 3.0).unwrap();
        let medium = preemption_model_overhead(40.0, 3.0).unwrap();
        let heavy = preemption_model_overhead(40.0, 10.0).unwrap();
        assert!((light - 1.045).abs() < 0.0005, "{light}");
        assert!((medium - 1.081).abs() < 0.0005, "{medium}");
        assert!((heavy - 1.333).abs() < 0.0005, "{heavy}");
        assert!(preemption_model_overhead(40.0, 40.0).is_err());
        assert!(preemption_model_overhead(40.0, -1.0).is_err());
        assert!(preemption_model_overhead(0.0, 0.0).is_err());
    }

    #[test]
    fn simple_kernel_runs() {
        let w = trivial_workload("x = 40\nx = add x 2\ngstore 0 x\nhalt\n", 2, 2);
        let out = run(&fair_cfg(4), &w, None).unwrap();
        assert_eq!(out.final_state.shared.global[0], 42);
        assert!(out.metrics.coop_runtime_ns > 0);
    }

    #[test]
    fn atomic_barrier_synchronises() {
        // Both workgroups add to a cell, barrier, then read: every thread
        // must observe the full sum.
        let src = "x = aadd 0 1\nglobal_barrier\ny = gload 0\nz = eq y 4\nq = aadd 1 z\nhalt\n";
        let w = trivial_workload(src, 2, 2);
        let out = run(&fair_cfg(4), &w, None).unwrap();
        assert_eq!(out.final_state.shared.global[1], 4);
    }

    #[test]
    fn occupancy_bound_barrier_deadlocks() {
        let src = "global_barrier\nhalt\n";
        let w = trivial_workload(src, 3, 1);
        let mut cfg = fair_cfg(2);
        cfg.mode = ExecMode::OccupancyBound;
        let err = run(&cfg, &w, None).unwrap_err();
        assert!(matches!(err, SimError::DeadlockDetected(_)), "{err}");

        // The same kernel completes in fair mode.
        let ok = run(&fair_cfg(2), &w, None);
        assert!(ok.is_ok());
    }

    #[test]
    fn occupancy_with_enough_units_equals_fair() {
        // Mode conservativity: with units covering every workgroup and a
        // never-resize policy, occupancy-bound execution is one of the fair
        // executions.
        let src = "x = aadd 0 1\nglobal_barrier\ny = gload 0\ng = group_id\na = add g 1\ngstore a y\nhalt\n";
        let w = trivial_workload(src, 3, 1);
        let mut occ = fair_cfg(3);
        occ.mode = ExecMode::OccupancyBound;
        let a = run(&occ, &w, None).unwrap();
        let b = run(&fair_cfg(3), &w, None).unwrap();
        assert_eq!(a.final_state, b.final_state);
    }

    #[test]
    fn occupancy_bound_independent_workgroups_complete() {
        let src = "x = aadd 0 1\nhalt\n";
        let w = trivial_workload(src, 4, 1);
        let mut cfg = fair_cfg(2);
        cfg.mode = ExecMode::OccupancyBound;
        let out = run(&cfg, &w, None).unwrap();
        assert_eq!(out.final_state.shared.global[0], 4);
    }

    #[test]
    fn infinite_spin_exhausts_step_budget() {
        let src = "x = 1\nwhile x\n  y = aload 0\nendwhile\nhalt\n";
        let w = trivial_workload(src, 2, 1);
        let mut cfg = fair_cfg(2);
        cfg.step_budget = 10_000;
        match run(&cfg, &w, None) {
            Err(SimError::StepBudgetExceeded(n)) => assert!(n > 10_000),
            other => panic!("expected budget exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn deterministic_metrics() {
        let g = generate_graph(GraphKind::Random, 60, 7);
        let w = make_graph_workload(&g).with_groups(4).with_group_size(2);
        let a = run(&fair_cfg(4), &w, None).unwrap();
        let b = run(&fair_cfg(4), &w, None).unwrap();
        assert_eq!(
            serde_json::to_string(&a.metrics).unwrap(),
            serde_json::to_string(&b.metrics).unwrap()
        );
        assert_eq!(a.final_state, b.final_state);
    }

    #[test]
    fn bfs_semantic_matches_oracle() {
        for kind in [GraphKind::Chain, GraphKind::Star, GraphKind::Random] {
            let g = generate_graph(kind, 50, 11);
            let w = make_graph_workload(&g).with_groups(3).with_group_size(2);
            let out = run(&fair_cfg(4), &w, None).unwrap();
            assert_eq!(out.output_of(&w), w.expected, "{kind:?}");
        }
    }

    #[test]
    fn workstealing_semantic_matches_oracle() {
        let w = make_workstealing_workload(4, 2, 3);
        let out = run(&fair_cfg(4), &w, None).unwrap();
        assert_eq!(out.output_of(&w), w.expected);
    }

    #[test]
    fn micro_resizing_overhead_zero() {
        let mut cfg = fair_cfg(4);
        cfg.costs = cfg.costs.zero_primitive();
        let w = trivial_workload("x = 1\nresizing_barrier\ngstore 0 x\nhalt\n", 2, 1);
        let (slowdown, _, _) = measure_overhead(&cfg, &w).unwrap();
        assert_eq!(slowdown, 1.0);
    }

    #[test]
    fn looped_resizing_overhead_zero() {
        let mut cfg = fair_cfg(4);
        cfg.costs = cfg.costs.zero_primitive();
        let src = "n = 5\nwhile n\n  x = aadd 0 1\n  resizing_barrier\n  y = gload 0\n  resizing_barrier\n  n = sub n 1\nendwhile\nhalt\n";
        let w = trivial_workload(src, 4, 1);
        let (slowdown, _, _) = measure_overhead(&cfg, &w).unwrap();
        assert_eq!(slowdown, 1.0);
    }

    #[test]
    fn overhead_is_one_with_free_primitives() {
        let mut cfg = fair_cfg(4);
        cfg.costs = cfg.costs.zero_primitive();
        let g = generate_graph(GraphKind::Grid, 5, 0);
        let w = make_graph_workload(&g).with_groups(4).with_group_size(1);
        let (slowdown, _, _) = measure_overhead(&cfg, &w).unwrap();
        assert_eq!(slowdown, 1.0);

        let ws = make_workstealing_workload(4, 2, 4);
        let (slowdown, _, _) = measure_overhead(&cfg, &ws).unwrap();
        assert_eq!(slowdown, 1.0);
    }

    #[test]
    fn overhead_at_least_one_with_default_costs() {
        let cfg = fair_cfg(4);
        let g = generate_graph(GraphKind::Grid, 5, 0);
        let w = make_graph_workload(&g).with_groups(4).with_group_size(1);
        let (slowdown, _, _) = measure_overhead(&cfg, &w).unwrap();
        assert!(slowdown >= 1.0, "{slowdown}");
    }
}
