//! The cooperative scheduler: tracks compute-unit occupancy, services
//! launches, demands workgroups back from the cooperative kernel via its
//! resource channel, grants forks, and answers `query`.
//!
//! The scheduler is a single logical actor stepped on the simulator's
//! virtual clock; every interaction is a plain method call at a
//! deterministic virtual time, and every decision is appended to a trace.

use crate::Word;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type KernelId = u32;

/// Status of one hardware workgroup slot (compute unit).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnitStatus {
    Available,
    Running(KernelId),
}

/// Resource message posted on a cooperative kernel's channel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceMessage {
    /// Workgroups the kernel must surrender at `offer_kill`.
    pub demand_kills: u32,
    /// Workgroups to spawn at the next `request_fork`.
    pub grant_forks: u32,
}

/// Scheduling strategy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Policy {
    /// Never demand kills, never grant forks: the active count is fixed.
    NeverResize,
    /// Return every freed unit to the cooperative kernel at its next fork,
    /// and demand units only when a competing task needs them.
    TargetOccupancy,
    /// Timed list of demands and grants (times strictly increasing).
    Scripted(Vec<ScriptEvent>),
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::NeverResize => "never",
            Policy::TargetOccupancy => "target",
            Policy::Scripted(_) => "script",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEvent {
    pub at_ns: u64,
    pub action: ScriptAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScriptAction {
    Demand(u32),
    Grant(u32),
}

/// One posted resource demand, kept for gather-time accounting.
#[derive(Debug, Clone, Serialize)]
pub struct DemandRequest {
    pub id: u32,
    /// Kernel the gathered units are destined for; `None` for scripted
    /// demands, whose surrendered units simply become available.
    pub for_kernel: Option<KernelId>,
    pub posted_ns: u64,
    pub amount: u32,
    pub remaining: u32,
    /// Virtual times at which demanded slots were surrendered.
    pub surrender_ns: Vec<u64>,
    /// Barrier episode in effect at each surrender, if any.
    pub surrender_episode: Vec<Option<u64>>,
}

impl DemandRequest {
    pub fn satisfied(&self) -> bool {
        self.remaining == 0
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchedError {
    #[error("no capacity: the request cannot be satisfied by any running cooperative kernel")]
    RejectedNoCapacity,
    #[error("request {0} is not yet satisfied")]
    NotYetSatisfied(u32),
    #[error("unknown request id {0}")]
    UnknownRequest(u32),
    #[error("script times must be strictly increasing")]
    BadScript,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaunchRequest {
    pub kernel: KernelId,
    pub wgs: u32,
    pub cooperative: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaunchDecision {
    /// Started immediately with this many workgroups (for a cooperative
    /// kernel possibly fewer than requested).
    Started { granted: u32 },
    /// Queued behind a demand posted to the cooperative kernel; the request
    /// id tracks gather time and satisfaction.
    Pending { request: u32 },
}

/// Scheduler trace event, serialised as JSON lines.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event")]
pub enum TraceEvent {
    Launch { now_ns: u64, kernel: KernelId, requested: u32, granted: u32, cooperative: bool },
    DemandPosted { now_ns: u64, request: u32, kernel: KernelId, amount: u32 },
    GrantPosted { now_ns: u64, kernel: KernelId, amount: u32 },
    GrantSuppressed { now_ns: u64, kernel: KernelId, amount: u32 },
    KillAccepted { now_ns: u64, kernel: KernelId, wg: u32, request: u32, remaining: u32 },
    ForkGranted { now_ns: u64, kernel: KernelId, k: u32 },
    RequestSatisfied { now_ns: u64, request: u32, gather_ns: u64 },
    KernelDone { now_ns: u64, kernel: KernelId, freed: u32 },
}

/// The scheduler context of the runtime: slot statuses plus the resource
/// channel of the (single) cooperative kernel.
#[derive(Debug, Clone)]
pub struct SchedulerContext {
    units: Vec<UnitStatus>,
    policy: Policy,
    script_pos: usize,
    /// Channel of the cooperative kernel (one in this harness; the
    /// structures generalise by keying on kernel id).
    coop: Option<KernelId>,
    message: ResourceMessage,
    requests: Vec<DemandRequest>,
    /// Requests not yet fully satisfied, in FIFO order.
    open_requests: Vec<u32>,
    newly_satisfied: Vec<u32>,
    pub trace: Vec<TraceEvent>,
}

impl SchedulerContext {
    pub fn new(units: u32, policy: Policy) -> Result<SchedulerContext, SchedError> {
        if let Policy::Scripted(events) = &policy {
            for w in events.windows(2) {
                if w[1].at_ns <= w[0].at_ns {
                    return Err(SchedError::BadScript);
                }
            }
        }
        Ok(SchedulerContext {
            units: vec![UnitStatus::Available; units as usize],
            policy,
            script_pos: 0,
            coop: None,
            message: ResourceMessage::default(),
            requests: Vec::new(),
            open_requests: Vec::new(),
            newly_satisfied: Vec::new(),
            trace: Vec::new(),
        })
    }

    pub fn units_total(&self) -> u32 {
        self.units.len() as u32
    }

    pub fn available(&self) -> u32 {
        self.units.iter().filter(|u| matches!(u, UnitStatus::Available)).count() as u32
    }

    pub fn running_for(&self, kernel: KernelId) -> u32 {
        self.units.iter().filter(|u| matches!(u, UnitStatus::Running(k) if *k == kernel)).count() as u32
    }

    pub fn message(&self) -> ResourceMessage {
        self.message
    }

    /// Available + running always equals the unit total; the representation
    /// makes this structural, so expose it for the conservation tests.
    pub fn conservation_holds(&self) -> bool {
        let running: u32 = self.units.iter().filter(|u| matches!(u, UnitStatus::Running(_))).count() as u32;
        self.available() + running == self.units_total()
    }

    fn claim(&mut self, kernel: KernelId, n: u32) {
        let mut left = n;
        for u in self.units.iter_mut() {
            if left == 0 {
                break;
            }
            if matches!(u, UnitStatus::Available) {
                *u = UnitStatus::Running(kernel);
                left -= 1;
            }
        }
        assert_eq!(left, 0, "claimed more units than available");
    }

    fn release(&mut self, kernel: KernelId, n: u32) {
        let mut left = n;
        for u in self.units.iter_mut().rev() {
            if left == 0 {
                break;
            }
            if matches!(u, UnitStatus::Running(k) if *k == kernel) {
                *u = UnitStatus::Available;
                left -= 1;
            }
        }
        assert_eq!(left, 0, "released units the kernel does not hold");
    }

    /// Applies scripted events due at or before `now`. `current_m` clamps
    /// demands so that outstanding kills never exceed M-1 (workgroup 0 is
    /// unkillable).
    pub fn advance_to(&mut self, now: u64, current_m: u32) {
        let events = match &self.policy {
            Policy::Scripted(events) => events.clone(),
            _ => return,
        };
        while self.script_pos < events.len() && events[self.script_pos].at_ns <= now {
            let ev = events[self.script_pos];
            self.script_pos += 1;
            match ev.action {
                ScriptAction::Demand(n) => {
                    self.post_demand(None, n, ev.at_ns, current_m);
                }
                ScriptAction::Grant(n) => self.post_grant(self.coop.unwrap_or(0), n, ev.at_ns),
            }
        }
    }

    /// Posts a demand for `n` workgroups on the cooperative kernel's
    /// channel, on behalf of `for_kernel`. Grants are cleared: the scheduler
    /// never gives with one hand while taking with the other. Returns the
    /// request id.
    pub fn post_demand(&mut self, for_kernel: Option<KernelId>, n: u32, now: u64, current_m: u32) -> u32 {
        let headroom = (current_m.saturating_sub(1)).saturating_sub(self.message.demand_kills);
        let amount = n.min(headroom);
        let id = self.requests.len() as u32;
        self.message.demand_kills += amount;
        self.message.grant_forks = 0;
        self.requests.push(DemandRequest {
            id,
            for_kernel,
            posted_ns: now,
            amount,
            remaining: amount,
            surrender_ns: Vec::new(),
            surrender_episode: Vec::new(),
        });
        self.open_requests.push(id);
        let kernel = self.coop.unwrap_or(0);
        self.trace.push(TraceEvent::DemandPosted { now_ns: now, request: id, kernel, amount });
        if amount == 0 {
            self.mark_satisfied(id, now);
        }
        id
    }

    fn mark_satisfied(&mut self, id: u32, now: u64) {
        self.open_requests.retain(|&r| r != id);
        self.newly_satisfied.push(id);
        let gather = self.gather_time(id).unwrap_or(0);
        self.trace.push(TraceEvent::RequestSatisfied { now_ns: now, request: id, gather_ns: gather });
    }

    /// Posts a fork grant. Suppressed while a demand is outstanding.
    pub fn post_grant(&mut self, kernel: KernelId, n: u32, now: u64) {
        if self.message.demand_kills > 0 {
            self.trace.push(TraceEvent::GrantSuppressed { now_ns: now, kernel, amount: n });
            return;
        }
        self.message.grant_forks += n;
        self.trace.push(TraceEvent::GrantPosted { now_ns: now, kernel, amount: n });
    }

    /// Schedules a kernel launch.
    ///
    /// With enough available units the kernel starts at once. A cooperative
    /// kernel may start degraded on whatever is available. Otherwise, if a
    /// cooperative kernel is running, the shortfall is demanded from it and
    /// the launch waits; with no cooperative kernel to yield, the launch is
    /// rejected.
    pub fn launch(&mut self, req: LaunchRequest, now: u64, current_m: u32) -> Result<LaunchDecision, SchedError> {
        let free = self.available();
        if req.cooperative {
            let granted = req.wgs.min(free);
            if granted == 0 {
                return Err(SchedError::RejectedNoCapacity);
            }
            self.claim(req.kernel, granted);
            self.coop = Some(req.kernel);
            self.trace.push(TraceEvent::Launch {
                now_ns: now,
                kernel: req.kernel,
                requested: req.wgs,
                granted,
                cooperative: true,
            });
            return Ok(LaunchDecision::Started { granted });
        }
        if free >= req.wgs {
            self.claim(req.kernel, req.wgs);
            self.trace.push(TraceEvent::Launch {
                now_ns: now,
                kernel: req.kernel,
                requested: req.wgs,
                granted: req.wgs,
                cooperative: false,
            });
            return Ok(LaunchDecision::Started { granted: req.wgs });
        }
        match (self.coop, &self.policy) {
            (_, Policy::NeverResize) | (None, _) => return Err(SchedError::RejectedNoCapacity),
            (Some(_), _) => {}
        }
        // Reserve what is free now and demand the rest.
        self.claim(req.kernel, free);
        let request = self.post_demand(Some(req.kernel), req.wgs - free, now, current_m);
        self.trace.push(TraceEvent::Launch {
            now_ns: now,
            kernel: req.kernel,
            requested: req.wgs,
            granted: free,
            cooperative: false,
        });
        Ok(LaunchDecision::Pending { request })
    }

    /// Decision for an eligible `offer_kill`: accept exactly when a demand
    /// is outstanding. On acceptance the slot is surrendered: the unit moves
    /// to the demanding kernel and the oldest open request absorbs it.
    pub fn on_offer_kill(&mut self, kernel: KernelId, wg: u32, now: u64, episode: Option<u64>) -> bool {
        if self.message.demand_kills == 0 {
            return false;
        }
        self.message.demand_kills -= 1;
        let &rid = self.open_requests.first().expect("outstanding demand implies an open request");
        let (to_kernel, remaining) = {
            let req = &mut self.requests[rid as usize];
            req.remaining -= 1;
            req.surrender_ns.push(now);
            req.surrender_episode.push(episode);
            (req.for_kernel, req.remaining)
        };
        // Transfer the surrendered unit to the demanding kernel.
        self.release(kernel, 1);
        if let Some(to) = to_kernel {
            if to != kernel {
                self.claim(to, 1);
            }
        }
        self.trace.push(TraceEvent::KillAccepted { now_ns: now, kernel, wg, request: rid, remaining });
        if remaining == 0 {
            self.mark_satisfied(rid, now);
        }
        true
    }

    /// Number of workgroups to spawn at a `request_fork`: bounded by the
    /// pending grant, the kernel's remaining capacity and the free units.
    pub fn on_request_fork(&mut self, kernel: KernelId, n_minus_m: u32, now: u64) -> u32 {
        let k = self.message.grant_forks.min(n_minus_m).min(self.available());
        if k > 0 {
            self.message.grant_forks -= k;
            self.claim(kernel, k);
            self.trace.push(TraceEvent::ForkGranted { now_ns: now, kernel, k });
        }
        k
    }

    /// The value W returned by the `query` primitive: how many workgroups
    /// the scheduler still needs to obtain from the cooperative kernel.
    pub fn query(&self) -> Word {
        self.message.demand_kills as Word
    }

    /// Gather time of a satisfied demand: time from posting to the last
    /// demanded slot being surrendered. Zero-sized demands gather in zero
    /// time.
    pub fn gather_time(&self, request: u32) -> Result<u64, SchedError> {
        let req = self
            .requests
            .get(request as usize)
            .ok_or(SchedError::UnknownRequest(request))?;
        if !req.satisfied() {
            return Err(SchedError::NotYetSatisfied(request));
        }
        if req.amount == 0 {
            return Ok(0);
        }
        Ok(req.surrender_ns.last().unwrap() - req.posted_ns)
    }

    pub fn request(&self, id: u32) -> Option<&DemandRequest> {
        self.requests.get(id as usize)
    }

    pub fn requests(&self) -> &[DemandRequest] {
        &self.requests
    }

    /// Requests that became satisfied since the last call.
    pub fn take_newly_satisfied(&mut self) -> Vec<u32> {
        std::mem::take(&mut self.newly_satisfied)
    }

    /// Marks a kernel finished: all its units become available. Under the
    /// target-occupancy policy the freed units are offered back to the
    /// cooperative kernel as a fork grant.
    pub fn kernel_done(&mut self, kernel: KernelId, now: u64) {
        let freed = self.running_for(kernel);
        self.release(kernel, freed);
        self.trace.push(TraceEvent::KernelDone { now_ns: now, kernel, freed });
        if Some(kernel) != self.coop && matches!(self.policy, Policy::TargetOccupancy) {
            if let Some(coop) = self.coop {
                let free = self.available();
                if free > 0 {
                    self.post_grant(coop, free, now);
                }
            }
        }
    }

    /// Releases a single unit held by a kernel without any policy action
    /// (used when a workgroup halts).
    pub fn release_unit(&mut self, kernel: KernelId, _now: u64) {
        self.release(kernel, 1);
    }

    pub fn trace_json_lines(&self) -> String {
        let mut out = String::new();
        for ev in &self.trace {
            out.push_str(&serde_json::to_string(ev).expect("trace serialises"));
            out.push('\n');
        }
        out
    }
}
