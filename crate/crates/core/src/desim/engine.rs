use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arrivals::generate_arrivals;
use super::ledger::StorageLedger;
use super::metrics::{RequestRecord, RunMetrics};
use super::{DesimError, OfflinePolicy, SimConfig};
use crate::costmodel::PhaseCosts;
use crate::protocol::Party;

/// Declaration order is the tie-break order for simultaneous events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    OnlineDone,
    OfflineDone,
    Arrival,
    OfflineSuspend,
    OfflineResume,
    OfflineStart,
    OnlineStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time: f64,
    pub kind: EventKind,
    /// Request for arrivals and online events, offline phase ordinal otherwise.
    pub id: Option<u64>,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    time: f64,
    kind: EventKind,
    id: u64,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Reversed so the max-heap pops the earliest event.
impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.kind.cmp(&self.kind))
            .then(other.id.cmp(&self.id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Resource {
    Idle,
    Offline { done_at: f64, phase: u64 },
    Online,
}

struct Open {
    arrival: f64,
    queue_exit: f64,
    online_start: f64,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    cost: &'a PhaseCosts,
    heap: BinaryHeap<Pending>,
    queue: VecDeque<u64>,
    arrivals: Vec<f64>,
    open: Option<(u64, Open)>,
    resource: Resource,
    /// Remaining duration of a suspended offline phase, and its ordinal.
    suspended: Option<(f64, u64)>,
    offline_phases: u64,
    ready_bundles: u64,
    client: StorageLedger,
    server: StorageLedger,
    last_online_done: f64,
    offline_busy: f64,
    offline_started_at: f64,
    records: Vec<RequestRecord>,
    produced: u64,
    consumed: u64,
    trace: Option<Vec<TraceEvent>>,
}

impl Sim<'_> {
    fn log(&mut self, time: f64, kind: EventKind, id: Option<u64>) {
        if let Some(t) = &mut self.trace {
            t.push(TraceEvent { time, kind, id });
        }
    }

    fn start_offline(&mut self, now: f64, duration: f64, phase: u64, kind: EventKind) {
        self.resource = Resource::Offline {
            done_at: now + duration,
            phase,
        };
        self.offline_started_at = now;
        self.heap.push(Pending {
            time: now + duration,
            kind: EventKind::OfflineDone,
            id: phase,
        });
        self.log(now, kind, Some(phase));
    }

    fn dispatch(&mut self, now: f64) {
        if self.resource == Resource::Online {
            return;
        }
        if !self.queue.is_empty() && self.ready_bundles > 0 {
            if let Resource::Offline { done_at, phase } = self.resource {
                if self.cfg.policy == OfflinePolicy::NonPreemptive {
                    return;
                }
                self.offline_busy += now - self.offline_started_at;
                self.suspended = Some((done_at - now, phase));
                self.log(now, EventKind::OfflineSuspend, Some(phase));
            }
            let id = self.queue.pop_front().expect("non-empty queue");
            self.ready_bundles -= 1;
            self.resource = Resource::Online;
            self.open = Some((
                id,
                Open {
                    arrival: self.arrivals[id as usize],
                    queue_exit: self.arrivals[id as usize].max(self.last_online_done),
                    online_start: now,
                },
            ));
            self.heap.push(Pending {
                time: now + self.cost.online_latency,
                kind: EventKind::OnlineDone,
                id,
            });
            self.log(now, EventKind::OnlineStart, Some(id));
            return;
        }
        if self.resource != Resource::Idle {
            return;
        }
        if let Some((remaining, phase)) = self.suspended.take() {
            self.start_offline(now, remaining, phase, EventKind::OfflineResume);
            return;
        }
        let (c, s) = (self.cost.client_storage_delta, self.cost.server_storage_delta);
        if self.client.can_reserve(c) && self.server.can_reserve(s) {
            self.client.reserve(c);
            self.server.reserve(s);
            let phase = self.offline_phases;
            self.offline_phases += 1;
            self.start_offline(now, self.cost.offline_latency, phase, EventKind::OfflineStart);
        }
    }

    fn handle(&mut self, ev: Pending) {
        let now = ev.time;
        match ev.kind {
            EventKind::Arrival => {
                self.queue.push_back(ev.id);
                self.log(now, EventKind::Arrival, Some(ev.id));
            }
            EventKind::OfflineDone => {
                // A suspended phase leaves a stale completion behind.
                let Resource::Offline { done_at, phase } = self.resource else {
                    return;
                };
                if phase != ev.id || done_at != now {
                    return;
                }
                self.offline_busy += now - self.offline_started_at;
                self.client.commit(self.cost.client_storage_delta);
                self.server.commit(self.cost.server_storage_delta);
                self.ready_bundles += 1;
                self.produced += 1;
                self.resource = Resource::Idle;
                self.log(now, EventKind::OfflineDone, Some(phase));
            }
            EventKind::OnlineDone => {
                let (id, open) = self.open.take().expect("online phase in progress");
                debug_assert_eq!(id, ev.id);
                self.client.release(self.cost.client_storage_delta);
                self.server.release(self.cost.server_storage_delta);
                self.consumed += 1;
                self.resource = Resource::Idle;
                self.last_online_done = now;
                self.records.push(RequestRecord {
                    id,
                    arrival_time: open.arrival,
                    queue_exit_time: open.queue_exit,
                    precompute_wait: open.online_start - open.queue_exit,
                    online_start: open.online_start,
                    online_done: now,
                    latency: now - open.arrival,
                });
                self.log(now, EventKind::OnlineDone, Some(id));
            }
            _ => unreachable!("start events are not queued"),
        }
        self.dispatch(now);
        self.client.check();
        self.server.check();
    }
}

fn check_feasible(cfg: &SimConfig, cost: &PhaseCosts) -> Result<(), DesimError> {
    for (party, need, cap) in [
        (Party::Client, cost.client_storage_delta, cfg.client_capacity),
        (Party::Server, cost.server_storage_delta, cfg.server_capacity),
    ] {
        if need > cap {
            return Err(DesimError::ConfigInfeasible {
                party,
                bundle_bytes: need,
                capacity: cap,
            });
        }
    }
    Ok(())
}

/// One simulation run with seed `cfg.seed`.
pub fn run(cfg: &SimConfig, cost: &PhaseCosts) -> Result<RunMetrics, DesimError> {
    run_inner(cfg, cost, false).map(|(m, _)| m)
}

/// Like [`run`], also returning the processed event sequence.
pub fn run_traced(cfg: &SimConfig, cost: &PhaseCosts) -> Result<(RunMetrics, Vec<TraceEvent>), DesimError> {
    run_inner(cfg, cost, true).map(|(m, t)| (m, t.unwrap_or_default()))
}

fn run_inner(
    cfg: &SimConfig,
    cost: &PhaseCosts,
    traced: bool,
) -> Result<(RunMetrics, Option<Vec<TraceEvent>>), DesimError> {
    cfg.validate()?;
    if !(cost.offline_latency > 0.0 && cost.online_latency > 0.0) {
        return Err(DesimError::InvalidConfig(format!(
            "phase latencies must be positive, got offline {} s and online {} s",
            cost.offline_latency, cost.online_latency
        )));
    }
    check_feasible(cfg, cost)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let arrivals = generate_arrivals(cfg.arrival_rate, cfg.horizon, &mut rng);
    let heap = arrivals
        .iter()
        .enumerate()
        .map(|(i, &t)| Pending {
            time: t,
            kind: EventKind::Arrival,
            id: i as u64,
        })
        .collect();
    let mut sim = Sim {
        cfg,
        cost,
        heap,
        queue: VecDeque::new(),
        arrivals,
        open: None,
        resource: Resource::Idle,
        suspended: None,
        offline_phases: 0,
        ready_bundles: 0,
        client: StorageLedger::new(Party::Client, cfg.client_capacity),
        server: StorageLedger::new(Party::Server, cfg.server_capacity),
        last_online_done: 0.0,
        offline_busy: 0.0,
        offline_started_at: 0.0,
        records: Vec::new(),
        produced: 0,
        consumed: 0,
        trace: traced.then(Vec::new),
    };
    sim.dispatch(0.0);
    while let Some(ev) = sim.heap.pop() {
        if ev.time > cfg.horizon {
            break;
        }
        sim.handle(ev);
    }
    if let Resource::Offline { .. } = sim.resource {
        sim.offline_busy += cfg.horizon - sim.offline_started_at;
    }
    let metrics = RunMetrics::new(
        sim.records,
        sim.arrivals.len() as u64,
        sim.produced,
        sim.consumed,
        sim.client.high_water,
        sim.server.high_water,
        sim.offline_busy,
    );
    Ok((metrics, sim.trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::Protocol;

    fn cost(off: f64, on: f64, client: u64) -> PhaseCosts {
        PhaseCosts::fixed(Protocol::ClientGarbler, off, on, client, 1)
    }

    fn cfg(rate: f64, horizon: f64, client: u64) -> SimConfig {
        SimConfig {
            arrival_rate: rate,
            horizon,
            client_capacity: client,
            server_capacity: 1000,
            n_runs: 1,
            ..SimConfig::default()
        }
    }

    #[test]
    fn pending_pops_earliest_then_by_kind() {
        let mut h = BinaryHeap::new();
        for (time, kind, id) in [
            (2.0, EventKind::Arrival, 0),
            (1.0, EventKind::Arrival, 1),
            (1.0, EventKind::OfflineDone, 0),
            (1.0, EventKind::OnlineDone, 5),
        ] {
            h.push(Pending { time, kind, id });
        }
        let order: Vec<_> = std::iter::from_fn(|| h.pop()).map(|p| (p.time, p.kind)).collect();
        assert_eq!(
            order,
            vec![
                (1.0, EventKind::OnlineDone),
                (1.0, EventKind::OfflineDone),
                (1.0, EventKind::Arrival),
                (2.0, EventKind::Arrival)
            ]
        );
    }

    #[test]
    fn infeasible_bundle_is_reported() {
        let r = run(&cfg(0.01, 100.0, 5), &cost(1.0, 1.0, 6));
        assert!(matches!(
            r,
            Err(DesimError::ConfigInfeasible {
                party: Party::Client,
                ..
            })
        ));
    }

    #[test]
    fn capacity_bounds_buffered_bundles() {
        // Capacity for one bundle, no arrivals: exactly one offline phase completes.
        let (m, _) = run_traced(&cfg(0.0, 1000.0, 15), &cost(10.0, 1.0, 10)).unwrap();
        assert_eq!(m.bundles_produced, 1);
        assert_eq!(m.client_high_water, 10);
    }

    #[test]
    fn suspended_offline_phase_resumes_with_its_remaining_time() {
        let c = cfg(1.0, 1.0, 100);
        let cost = cost(10.0, 2.0, 10);
        // Hand-driven: one bundle ready at t=10, second offline running when a request arrives at 12.
        let mut sim = Sim {
            cfg: &c,
            cost: &cost,
            heap: BinaryHeap::new(),
            queue: VecDeque::new(),
            arrivals: vec![12.0],
            open: None,
            resource: Resource::Idle,
            suspended: None,
            offline_phases: 0,
            ready_bundles: 0,
            client: StorageLedger::new(Party::Client, 100),
            server: StorageLedger::new(Party::Server, 100),
            last_online_done: 0.0,
            offline_busy: 0.0,
            offline_started_at: 0.0,
            records: Vec::new(),
            produced: 0,
            consumed: 0,
            trace: Some(Vec::new()),
        };
        sim.heap.push(Pending {
            time: 12.0,
            kind: EventKind::Arrival,
            id: 0,
        });
        sim.dispatch(0.0);
        while let Some(ev) = sim.heap.pop() {
            if ev.time > 40.0 {
                break;
            }
            sim.handle(ev);
        }
        let r = &sim.records[0];
        assert_eq!((r.online_start, r.online_done, r.latency), (12.0, 14.0, 2.0));
        // Phase 1 ran 10..12, was suspended for the online phase and resumed at 14 with 8 s left.
        let done: Vec<f64> = sim
            .trace
            .as_ref()
            .unwrap()
            .iter()
            .filter(|e| e.kind == EventKind::OfflineDone)
            .map(|e| e.time)
            .collect();
        assert_eq!(&done[..2], &[10.0, 22.0]);
    }
}
