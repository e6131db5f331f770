//! Discrete-event loop.
//!
//! Each VM serves its queries FIFO, one at a time, using all of its cores. A
//! query's response time is the client's latency to the serving datacenter
//! plus the time waiting behind earlier work plus its own execution time.
//! Replicas become routable once their transfer completes.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::accounting::{self, EnergyMode, RewardWeights};
use crate::agent::state::StateEncoder;
use crate::agent::{Action, Policy};
use crate::error::{Error, Result};
use crate::platform::{HostSpec, PlatformState, VmId, VmInstance};
use crate::replication::{DecisionRecord, PendingQuery, ReplicationManager};
use crate::workload::Query;

/// Event kinds, in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    QueryArrival,
    QueryFinish,
    ReplicationFinish,
    BatchFlush,
}

/// `id` is the query id, replication id or flush generation depending on
/// `kind`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time: f64,
    pub kind: EventKind,
    pub id: u64,
}

impl Eq for SimEvent {}

impl Ord for SimEvent {
    // reversed so that BinaryHeap pops the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.kind.cmp(&self.kind))
            .then(other.id.cmp(&self.id))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<SimEvent>,
}

impl EventQueue {
    pub fn push(&mut self, time: f64, kind: EventKind, id: u64) {
        self.heap.push(SimEvent { time, kind, id });
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        self.heap.pop()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }
}

/// Seconds to run `exec_cycles` on all of the VM's cores.
pub fn execution_time(exec_cycles: f64, vm: &VmInstance, host: &HostSpec) -> f64 {
    exec_cycles / (host.core_frequency * vm.cores_occupied as f64)
}

/// FIFO backlog ahead of a query arriving at `now`.
pub fn queue_wait(vm: &VmInstance, now: f64) -> f64 {
    (vm.busy_until - now).max(0.0)
}

/// Response time `q` would see on `vm` if dispatched at `now`.
pub fn response_time(q: &Query, vm: &VmInstance, state: &PlatformState, now: f64) -> f64 {
    let host = state.host_spec(vm.id.dc);
    state.clients[q.client].latencies[vm.id.dc] + queue_wait(vm, now) + execution_time(q.exec_cycles, vm, host)
}

/// Routable replica of the query's datum with the lowest estimated
/// completion; ties go to the lower carbon intensity, then the lower VM id.
pub fn route_query(state: &PlatformState, q: &Query, now: f64) -> Option<VmId> {
    state
        .replica_vms(q.client)
        .into_iter()
        .map(|id| {
            let vm = state.vm(id).expect("listed replica exists");
            (response_time(q, vm, state, now), state.datacenters[id.dc].carbon_intensity, id)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)))
        .map(|(_, _, id)| id)
}

/// The VM's share of host power: its fraction of the host's cores times the
/// host power at the VM's utilization (1 while it has work, else 0).
pub fn vm_power(vm: &VmInstance, host: &HostSpec, t: f64) -> f64 {
    let util = if vm.is_busy(t) { 1.0 } else { 0.0 };
    power_share(vm, host, util)
}

fn power_share(vm: &VmInstance, host: &HostSpec, util: f64) -> f64 {
    let share = vm.cores_occupied as f64 / host.cores as f64;
    share * (host.power_idle + (host.power_max - host.power_idle) * util)
}

/// Accounting record of one served query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub query: Query,
    pub served_by: VmId,
    pub response_time: f64,
    pub finish_time: f64,
    pub rto: f64,
    pub rate: f64,
    pub cpu_cost: f64,
    pub storage_cost: f64,
    pub bandwidth_cost: f64,
    pub penalty: f64,
    /// Energy(Q), replication energy included.
    pub energy_j: f64,
    pub replication_energy_j: f64,
    pub reward: f64,
    pub action_taken: Action,
}

impl QueryOutcome {
    pub fn economic(&self) -> f64 {
        accounting::economic(self.rate, self.cpu_cost, self.storage_cost, self.bandwidth_cost, self.penalty)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub weights: RewardWeights,
    pub energy_mode: EnergyMode,
    /// Seconds between periodic batch flushes.
    pub batch_period: f64,
    /// Append replica counts to the state vector.
    pub extra_replicas: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            weights: RewardWeights { alpha: 1.0, beta: 0.01 },
            energy_mode: EnergyMode::Literal,
            batch_period: 10.0,
            extra_replicas: false,
        }
    }
}

/// Aggregates of one run. Per-query detail is kept in memory only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub queries: u64,
    /// Sum of per-query rewards plus the rewards of penalty-triggered decisions.
    pub total_reward: f64,
    pub mean_reward: f64,
    pub penalties: u64,
    pub revenue: f64,
    pub cpu_cost: f64,
    pub storage_cost: f64,
    pub bandwidth_cost: f64,
    pub penalty_cost: f64,
    pub total_cost: f64,
    pub energy_j: f64,
    pub replication_energy_j: f64,
    pub replications_started: u64,
    pub replications_completed: u64,
    pub decisions: u64,
    pub forced_decisions: u64,
    pub invalid_actions: u64,
    pub clamped_features: u64,
    pub events: u64,
    pub end_time: f64,
    pub final_replication_factors: Vec<u32>,
    #[serde(skip)]
    pub outcomes: Vec<QueryOutcome>,
    #[serde(skip)]
    pub decision_log: Vec<DecisionRecord>,
}

impl RunReport {
    /// Fold another run into this one (used across episodes).
    pub fn absorb(&mut self, other: RunReport) {
        self.queries += other.queries;
        self.total_reward += other.total_reward;
        self.penalties += other.penalties;
        self.revenue += other.revenue;
        self.cpu_cost += other.cpu_cost;
        self.storage_cost += other.storage_cost;
        self.bandwidth_cost += other.bandwidth_cost;
        self.penalty_cost += other.penalty_cost;
        self.total_cost += other.total_cost;
        self.energy_j += other.energy_j;
        self.replication_energy_j += other.replication_energy_j;
        self.replications_started += other.replications_started;
        self.replications_completed += other.replications_completed;
        self.decisions += other.decisions;
        self.forced_decisions += other.forced_decisions;
        self.invalid_actions += other.invalid_actions;
        self.clamped_features += other.clamped_features;
        self.events += other.events;
        self.end_time = other.end_time;
        self.final_replication_factors = other.final_replication_factors;
        self.outcomes.extend(other.outcomes);
        self.decision_log.extend(other.decision_log);
        self.mean_reward = if self.queries == 0 {
            0.0
        } else {
            self.total_reward / self.queries as f64
        };
    }
}

/// Hooks called by the event loop, e.g. for invariant checking.
pub trait SimObserver {
    fn on_event(&mut self, _event: &SimEvent, _state: &PlatformState) {}
    fn on_decision(&mut self, _record: &DecisionRecord, _state: &PlatformState) {}
}

pub struct NoObserver;

impl SimObserver for NoObserver {}

/// Serve `stream` on `state` with `policy` making the replication decisions.
///
/// `state` must already hold the initial replicas. The stream must be
/// time-ordered.
pub fn run<I>(
    state: &mut PlatformState,
    stream: I,
    policy: &mut dyn Policy,
    config: &SimConfig,
    observer: &mut dyn SimObserver,
) -> Result<RunReport>
where
    I: IntoIterator<Item = Query>,
{
    state.check_replication()?;
    if !(config.batch_period.is_finite() && config.batch_period > 0.0) {
        return Err(Error::Config("batch period must be positive".into()));
    }
    let encoder = StateEncoder::new(state, config.extra_replicas);
    let mut manager = ReplicationManager::new(
        encoder,
        config.weights,
        config.energy_mode,
        config.batch_period,
        state.n_clients(),
    );
    let mut queue = EventQueue::default();
    let mut stream = stream.into_iter();
    let mut arrivals: BTreeMap<u64, Query> = BTreeMap::new();
    let mut in_service: BTreeMap<u64, PendingQuery> = BTreeMap::new();
    let mut transfers: BTreeMap<u64, (usize, VmId)> = BTreeMap::new();
    let mut outcomes = Vec::new();
    let mut report = RunReport::default();
    let mut next_transfer = 0u64;
    let mut seen_decisions = 0usize;

    let mut pull = |queue: &mut EventQueue, arrivals: &mut BTreeMap<u64, Query>, now: f64| -> Result<()> {
        if let Some(q) = stream.next() {
            state_check_query(&q, now)?;
            queue.push(q.arrival_time, EventKind::QueryArrival, q.id);
            arrivals.insert(q.id, q);
        }
        Ok(())
    };
    pull(&mut queue, &mut arrivals, 0.0)?;
    queue.push(config.batch_period, EventKind::BatchFlush, manager.flush_generation);

    let mut now = 0.0;
    while let Some(ev) = queue.pop() {
        if ev.time < now {
            return Err(Error::Invariant(format!("event at {} after time {now}", ev.time)));
        }
        now = ev.time;
        report.events += 1;
        match ev.kind {
            EventKind::QueryArrival => {
                let q = arrivals.remove(&ev.id).expect("scheduled arrival");
                state.client(q.client)?;
                let dispatch = manager.on_query(state, &q, policy, now)?;
                for (decision, vm) in dispatch.replications {
                    queue.push(now + decision.transfer_time, EventKind::ReplicationFinish, next_transfer);
                    transfers.insert(next_transfer, (decision.datum, vm));
                    next_transfer += 1;
                    report.replications_started += 1;
                    report.replication_energy_j += decision.descriptor.energy_j;
                }
                if dispatch.penalty_flush {
                    queue.push(now + manager.batch_period(), EventKind::BatchFlush, manager.flush_generation);
                }
                queue.push(dispatch.pending.finish_time, EventKind::QueryFinish, q.id);
                in_service.insert(q.id, dispatch.pending);
                pull(&mut queue, &mut arrivals, now)?;
            }
            EventKind::QueryFinish => {
                let p = in_service.remove(&ev.id).expect("query in service");
                let decision = p.decision_id;
                let outcome = settle(state, p, config)?;
                manager.set_reward(decision, outcome.reward);
                outcomes.push(outcome);
            }
            EventKind::ReplicationFinish => {
                let (datum, vm) = transfers.remove(&ev.id).expect("transfer in flight");
                state.commit_replica(datum, vm)?;
                report.replications_completed += 1;
            }
            EventKind::BatchFlush => {
                if manager.periodic_flush(policy, now, ev.id)? && !queue.is_empty() {
                    queue.push(now + manager.batch_period(), EventKind::BatchFlush, manager.flush_generation);
                }
            }
        }
        observer.on_event(&ev, state);
        for record in &manager.records[seen_decisions..] {
            observer.on_decision(record, state);
        }
        seen_decisions = manager.records.len();
    }
    manager.finish(state, policy, now)?;
    state.check_capacity()?;
    state.check_replication()?;

    outcomes.sort_by_key(|o: &QueryOutcome| o.query.id);
    report.queries = outcomes.len() as u64;
    for o in &outcomes {
        report.total_reward += o.reward;
        report.penalties += (o.response_time > o.rto) as u64;
        report.revenue += o.rate;
        report.cpu_cost += o.cpu_cost;
        report.storage_cost += o.storage_cost;
        report.bandwidth_cost += o.bandwidth_cost;
        report.penalty_cost += o.penalty;
        report.energy_j += o.energy_j;
    }
    report.total_reward += manager.forced_reward;
    report.bandwidth_cost += manager.forced_bandwidth_cost;
    report.energy_j += manager.forced_replication_energy_j;
    report.total_cost = report.cpu_cost + report.storage_cost + report.bandwidth_cost + report.penalty_cost;
    report.mean_reward = if report.queries == 0 {
        0.0
    } else {
        report.total_reward / report.queries as f64
    };
    report.decisions = manager.records.len() as u64;
    report.forced_decisions = manager
        .records
        .iter()
        .filter(|r| r.trigger == crate::agent::Trigger::Penalty)
        .count() as u64;
    report.invalid_actions = manager.records.iter().filter(|r| !r.valid).count() as u64;
    report.clamped_features = manager.clamped_features as u64;
    report.end_time = now;
    report.final_replication_factors = state.replicas.iter().map(|r| r.total()).collect();
    report.outcomes = outcomes;
    report.decision_log = std::mem::take(&mut manager.records);
    Ok(report)
}

fn state_check_query(q: &Query, now: f64) -> Result<()> {
    if !(q.arrival_time.is_finite() && q.arrival_time >= now) {
        return Err(Error::Invariant(format!(
            "query {} arrives at {} before current time {now}",
            q.id, q.arrival_time
        )));
    }
    if !(q.exec_cycles.is_finite() && q.exec_cycles > 0.0) {
        return Err(Error::Invariant(format!("query {} has no execution demand", q.id)));
    }
    Ok(())
}

/// Energy and reward of a query at its finish time.
fn settle(state: &PlatformState, p: PendingQuery, config: &SimConfig) -> Result<QueryOutcome> {
    let vm = state
        .vm(p.served_by)
        .ok_or_else(|| Error::Invariant(format!("serving VM {} vanished", p.served_by)))?;
    let host = state.host_spec(p.served_by.dc);
    let power_at_finish = vm_power(vm, host, p.finish_time);
    // the VM has work throughout [arrival, finish] under FIFO
    let integral = (p.finish_time - p.query.arrival_time) * power_share(vm, host, 1.0);
    let energy_j = accounting::energy(
        power_at_finish,
        p.power_at_arrival,
        p.replication_energy_j,
        config.energy_mode,
        integral,
    );
    let econ = accounting::economic(p.rate, p.cpu_cost, p.storage_cost, p.bandwidth_cost, p.penalty);
    let reward = accounting::reward(econ, energy_j, config.weights);
    Ok(QueryOutcome {
        query: p.query,
        served_by: p.served_by,
        response_time: p.response_time,
        finish_time: p.finish_time,
        rto: p.rto,
        rate: p.rate,
        cpu_cost: p.cpu_cost,
        storage_cost: p.storage_cost,
        bandwidth_cost: p.bandwidth_cost,
        penalty: p.penalty,
        energy_j,
        replication_energy_j: p.replication_energy_j,
        reward,
        action_taken: p.action,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::baseline::{NeverReplicate, RandomValid};
    use crate::platform::tests::{host_spec, scenario};
    use crate::platform::{ClientSpec, Scenario, SlaTerms};
    use crate::replication::place_all;
    use crate::workload::{generate_stream, ExecCycles, Horizon, WorkloadConfig};

    fn vm(cores: u32, busy_until: f64) -> VmInstance {
        VmInstance {
            id: VmId { dc: 0, host: 0, slot: 0 },
            cores_occupied: cores,
            hosted_data: [0].into(),
            stored_bytes: 0.0,
            busy_until,
            routable: true,
        }
    }

    fn query(id: u64, t: f64, cycles: f64) -> Query {
        Query {
            id,
            client: 0,
            arrival_time: t,
            exec_cycles: cycles,
        }
    }

    fn placed(sc: Scenario) -> PlatformState {
        let mut s = PlatformState::from_scenario(sc).unwrap();
        place_all(&mut s).unwrap();
        s
    }

    #[test]
    fn execution_time_scales_with_cores() {
        let h = host_spec(4, 1e9);
        assert_eq!(execution_time(1e9, &vm(1, 0.0), &h), 1.0);
        assert_eq!(execution_time(1e9, &vm(4, 0.0), &h), 0.25);
    }

    #[test]
    fn response_time_is_sum_of_parts() {
        let mut sc = scenario(1, 1, 2, 1e9, 1);
        sc.clients[0].latencies = vec![0.02];
        let s = placed(sc);
        let q = query(0, 1.0, 1e8);
        let idle = vm(1, 0.0);
        assert!((response_time(&q, &idle, &s, 1.0) - 0.120).abs() < 1e-12);
        let busy = vm(1, 1.05);
        assert!((response_time(&q, &busy, &s, 1.0) - 0.170).abs() < 1e-12);
    }

    #[test]
    fn power_shares() {
        let mut h = host_spec(4, 1e9);
        h.power_idle = 100.0;
        h.power_max = 200.0;
        assert_eq!(vm_power(&vm(2, 0.0), &h, 1.0), 50.0);
        assert_eq!(vm_power(&vm(2, 5.0), &h, 1.0), 100.0);
        // busy_until is exclusive
        assert_eq!(vm_power(&vm(2, 1.0), &h, 1.0), 50.0);
    }

    #[test]
    fn routes_to_the_closer_of_two_idle_replicas() {
        let mut sc = scenario(2, 1, 2, 1e9, 2);
        sc.clients[0].latencies = vec![0.05, 0.01];
        let s = placed(sc);
        let got = route_query(&s, &query(0, 0.0, 1e8), 0.0).unwrap();
        assert_eq!(got.dc, 1);
    }

    #[test]
    fn single_replica_is_always_chosen() {
        let s = placed(scenario(3, 1, 2, 1e9, 1));
        let only = s.replica_vms(0)[0];
        assert_eq!(route_query(&s, &query(0, 0.0, 1e8), 0.0), Some(only));
    }

    #[test]
    fn empty_stream_reports_nothing() {
        let mut s = placed(scenario(2, 1, 2, 1e9, 1));
        let r = run(&mut s, Vec::new(), &mut NeverReplicate, &SimConfig::default(), &mut NoObserver).unwrap();
        assert_eq!(r.queries, 0);
        assert_eq!(r.total_reward, 0.0);
        assert_eq!(r.penalties, 0);
    }

    #[test]
    fn one_query_reward_by_hand() {
        // f = 1e9 Hz, 1e8 cycles -> 0.1 s on one core; RT = 0.01 + 0.1
        for (mode, expected_energy) in [(EnergyMode::Literal, 0.0), (EnergyMode::Integrated, 0.1 * 200.0 / 2.0)] {
            let mut s = placed(scenario(1, 1, 2, 1e9, 1));
            let config = SimConfig {
                energy_mode: mode,
                ..Default::default()
            };
            let r = run(&mut s, vec![query(0, 0.5, 1e8)], &mut NeverReplicate, &config, &mut NoObserver).unwrap();
            let o = &r.outcomes[0];
            assert!((o.response_time - 0.11).abs() < 1e-12);
            assert_eq!(o.penalty, 0.0);
            let cpu = 1e8 * 1e-9;
            let storage = 1e6 * 1e-9;
            assert!((o.energy_j - expected_energy).abs() < 1e-9);
            let want = 1.0 * (1.0 - cpu - storage) - 0.01 * expected_energy;
            assert!((o.reward - want).abs() < 1e-12, "{mode:?}: {} vs {want}", o.reward);
            assert_eq!(r.total_reward, o.reward);
        }
    }

    fn busy_scenario(n_clients: usize) -> Scenario {
        let mut sc = scenario(3, 2, 4, 1e10, 1);
        sc.clients = (0..n_clients)
            .map(|l| ClientSpec {
                latencies: vec![0.01 + 0.01 * l as f64, 0.03, 0.02 + 0.005 * l as f64],
                sla: SlaTerms {
                    rate_per_query: 1.0,
                    availability_objective: 1 + (l % 2) as u32,
                    rt_objective: 0.15,
                    rt_penalty: 2.0,
                },
                datum_size: 1e6 * (l + 1) as f64,
                query_rate: 6.0,
            })
            .collect();
        sc
    }

    fn random_run(seed: u64, mode: EnergyMode) -> (PlatformState, RunReport) {
        let sc = busy_scenario(3);
        let mut s = placed(sc);
        let wl = WorkloadConfig {
            seed,
            horizon: Horizon::Queries(2000),
            exec_cycles: ExecCycles::Lognormal {
                mu: 1e8_f64.ln(),
                sigma: 0.5,
            },
        };
        let stream: Vec<Query> = generate_stream(&wl, &s.clients).collect();
        let config = SimConfig {
            energy_mode: mode,
            ..Default::default()
        };
        let r = run(&mut s, stream, &mut RandomValid::new(seed), &config, &mut NoObserver).unwrap();
        (s, r)
    }

    #[test]
    fn response_times_replay_from_the_log() {
        let (s, r) = random_run(7, EnergyMode::Literal);
        assert!(r.replications_started > 0);
        let mut busy: BTreeMap<VmId, f64> = BTreeMap::new();
        let mut last_finish: BTreeMap<VmId, f64> = BTreeMap::new();
        for o in &r.outcomes {
            let v = s.vm(o.served_by).unwrap();
            let f = s.host_spec(o.served_by.dc).core_frequency;
            let start = busy.get(&o.served_by).copied().unwrap_or(0.0).max(o.query.arrival_time);
            let finish = start + o.query.exec_cycles / (f * v.cores_occupied as f64);
            let lat = s.clients[o.query.client].latencies[o.served_by.dc];
            assert!((o.finish_time - finish).abs() <= 1e-9 * finish.max(1.0));
            assert!((o.response_time - (lat + finish - o.query.arrival_time)).abs() <= 1e-9);
            // FIFO: finish times per VM follow arrival order
            if let Some(&prev) = last_finish.get(&o.served_by) {
                assert!(o.finish_time >= prev);
            }
            last_finish.insert(o.served_by, o.finish_time);
            busy.insert(o.served_by, finish);
        }
    }

    #[test]
    fn routing_matches_exhaustive_argmin() {
        let (mut s, _) = random_run(11, EnergyMode::Literal);
        // load the VMs unevenly
        let ids: Vec<VmId> = s.all_vms().map(|v| v.id).collect();
        for (k, id) in ids.iter().enumerate() {
            s.vm_mut(*id).unwrap().busy_until = 100.0 + 0.013 * (k % 5) as f64;
        }
        for l in 0..s.n_clients() {
            for (j, cycles) in [1e7, 1e8, 5e8].into_iter().enumerate() {
                let q = Query {
                    id: j as u64,
                    client: l,
                    arrival_time: 100.0,
                    exec_cycles: cycles,
                };
                let mut best: Option<(f64, f64, VmId)> = None;
                for v in s.all_vms() {
                    if !(v.routable && v.hosted_data.contains(&l)) {
                        continue;
                    }
                    let h = s.host_spec(v.id.dc);
                    let rt = s.clients[l].latencies[v.id.dc]
                        + (v.busy_until - 100.0).max(0.0)
                        + cycles / (h.core_frequency * v.cores_occupied as f64);
                    let key = (rt, s.datacenters[v.id.dc].carbon_intensity, v.id);
                    let better = match best {
                        None => true,
                        Some(b) => key.0 < b.0 || (key.0 == b.0 && (key.1 < b.1 || (key.1 == b.1 && key.2 < b.2))),
                    };
                    if better {
                        best = Some(key);
                    }
                }
                assert_eq!(route_query(&s, &q, 100.0), best.map(|b| b.2));
            }
        }
    }

    #[test]
    fn energy_is_conserved() {
        for mode in [EnergyMode::Literal, EnergyMode::Integrated] {
            let (_, r) = random_run(3, mode);
            let exec: f64 = r.outcomes.iter().map(|o| o.energy_j - o.replication_energy_j).sum();
            let total = exec + r.replication_energy_j;
            assert!((r.energy_j - total).abs() <= 1e-9 * r.energy_j.abs().max(1.0));
        }
    }

    #[test]
    fn reward_decomposes() {
        let (_, r) = random_run(5, EnergyMode::Integrated);
        let w = SimConfig::default().weights;
        for o in &r.outcomes {
            let want = w.alpha * o.economic() - w.beta * o.energy_j;
            assert!((o.reward - want).abs() <= 1e-12 * want.abs().max(1.0));
            assert!(o.finish_time >= o.query.arrival_time);
            assert!(o.cpu_cost >= 0.0 && o.storage_cost >= 0.0 && o.bandwidth_cost >= 0.0 && o.penalty >= 0.0);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let (_, a) = random_run(9, EnergyMode::Literal);
        let (_, b) = random_run(9, EnergyMode::Literal);
        assert_eq!(a, b);
        assert_eq!(a.outcomes, b.outcomes);
    }

    #[test]
    fn event_order_breaks_ties_by_kind_then_id() {
        let mut q = EventQueue::default();
        q.push(1.0, EventKind::BatchFlush, 0);
        q.push(1.0, EventKind::QueryArrival, 5);
        q.push(1.0, EventKind::QueryArrival, 2);
        q.push(0.5, EventKind::ReplicationFinish, 9);
        q.push(1.0, EventKind::QueryFinish, 1);
        let order: Vec<(EventKind, u64)> = std::iter::from_fn(|| q.pop()).map(|e| (e.kind, e.id)).collect();
        assert_eq!(
            order,
            vec![
                (EventKind::ReplicationFinish, 9),
                (EventKind::QueryArrival, 2),
                (EventKind::QueryArrival, 5),
                (EventKind::QueryFinish, 1),
                (EventKind::BatchFlush, 0),
            ]
        );
    }
}
