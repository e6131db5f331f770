//! Replica manager: initial placement, action validation, VM-aggregating
//! host choice and the per-query decision protocol.
//!
//! Every query arrival consults the policy once. A query that misses its
//! response-time objective additionally flushes the batch buffer and triggers
//! one more consultation at the same instant, so the policy can react to the
//! penalty before the client's next query.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::accounting::{self, EnergyMode, ReplicationDescriptor, ReplicationKind, RewardWeights};
use crate::agent::state::StateEncoder;
use crate::agent::{Action, Observation, Policy, Transition, Trigger};
use crate::error::{Error, Result};
use crate::platform::{HostId, PlatformState, ReplicaMap, VmId};
use crate::sim;
use crate::workload::Query;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationDecision {
    pub datum: usize,
    pub source: VmId,
    pub target_host: HostId,
    pub target_dc: usize,
    pub start_time: f64,
    /// Seconds until the copy becomes routable.
    pub transfer_time: f64,
    pub descriptor: ReplicationDescriptor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Validity {
    /// `None` for `NoReplication`.
    Valid(Option<ReplicationDecision>),
    Invalid(String),
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validity::Valid(_))
    }
}

/// Pick a host among `candidates`, preferring hosts that already run a VM.
/// Among active hosts the one with the fewest free cores wins; ties and the
/// all-idle case go to the lowest host id.
pub fn choose_host(state: &PlatformState, candidates: &[HostId]) -> Option<HostId> {
    let free = |h: HostId| state.host_spec(h.dc).cores - state.host(h).used_cores();
    let active = candidates
        .iter()
        .copied()
        .filter(|&h| state.host(h).is_active())
        .min_by_key(|&h| (free(h), h));
    active.or_else(|| candidates.iter().copied().min())
}

/// Host of datacenter `i` that would receive a new `sz`-byte replica.
pub fn aggregation_target(state: &PlatformState, i: usize, sz: f64) -> Option<HostId> {
    choose_host(state, &state.free_capacity(i, sz))
}

/// Place the availability-objective replicas of client `l`'s datum: the first
/// in the lowest-latency datacenter, the rest in the other datacenters of
/// lowest carbon intensity (ties by index), one per datacenter.
pub fn initial_placement(state: &mut PlatformState, l: usize) -> Result<ReplicaMap> {
    let client = state.client(l)?.clone();
    if state.replicas[l].total() > 0 {
        return Err(Error::Invariant(format!("client {l} already has replicas")));
    }
    let first = client.nearest_datacenter();
    let mut others: Vec<usize> = (0..state.n_datacenters()).filter(|&i| i != first).collect();
    others.sort_by(|&a, &b| {
        let (ca, cb) = (state.datacenters[a].carbon_intensity, state.datacenters[b].carbon_intensity);
        ca.total_cmp(&cb).then(a.cmp(&b))
    });
    let targets = std::iter::once(first)
        .chain(others)
        .take(client.sla.availability_objective as usize);
    for dc in targets {
        let host = choose_host(state, &state.eligible_hosts(dc, l)).ok_or(Error::InsufficientCapacity {
            datacenter: dc,
            client: l,
        })?;
        let vm = state.deploy_replica_vm(host, l, true);
        state.commit_replica(l, vm)?;
    }
    Ok(state.replicas[l].clone())
}

/// Initial placement for every client, in client order.
pub fn place_all(state: &mut PlatformState) -> Result<()> {
    for l in 0..state.n_clients() {
        initial_placement(state, l)?;
    }
    state.check_capacity()?;
    state.check_replication()
}

/// Turn an agent action into a concrete replication decision, or explain why
/// it cannot be carried out.
pub fn validate_action(state: &PlatformState, action: Action, l: usize, now: f64) -> Validity {
    let i = match action {
        Action::NoReplication => return Validity::Valid(None),
        Action::Replicate(i) => i,
    };
    if i >= state.n_datacenters() {
        return Validity::Invalid(format!("unknown datacenter {i}"));
    }
    let Some(client) = state.clients.get(l) else {
        return Validity::Invalid(format!("unknown client {l}"));
    };
    let eligible = state.eligible_hosts(i, l);
    if eligible.is_empty() {
        return Validity::Invalid("no host capacity".into());
    }
    let mut best: Option<(VmId, f64)> = None;
    for src in state.replica_vms(l) {
        let bw = state.network.bandwidth(src.dc, i, now);
        if best.is_none_or(|(_, b)| bw > b) {
            best = Some((src, bw));
        }
    }
    let Some((source, bw)) = best.filter(|&(_, bw)| bw > 0.0) else {
        return Validity::Invalid("no bandwidth to target".into());
    };
    let target_host = choose_host(state, &eligible).expect("non-empty candidates");
    let kind = if source.dc == i {
        ReplicationKind::IntraDc(i)
    } else {
        ReplicationKind::InterDc(source.dc, i)
    };
    let bytes = client.datum_size;
    Validity::Valid(Some(ReplicationDecision {
        datum: l,
        source,
        target_host,
        target_dc: i,
        start_time: now,
        transfer_time: bytes / bw,
        descriptor: ReplicationDescriptor {
            kind,
            bytes,
            energy_j: state.replication_energy.energy(bytes),
        },
    }))
}

/// Validity of every action index for client `l`.
pub fn action_mask(state: &PlatformState, l: usize, now: f64) -> Vec<bool> {
    let n = state.n_datacenters();
    (0..=n)
        .map(|a| validate_action(state, Action::from_index(a, n), l, now).is_valid())
        .collect()
}

/// Reserve capacity for the decision by deploying a not-yet-routable VM.
pub fn apply_decision(state: &mut PlatformState, decision: &ReplicationDecision) -> Result<VmId> {
    if !state
        .eligible_hosts(decision.target_dc, decision.datum)
        .contains(&decision.target_host)
    {
        return Err(Error::Invariant(format!(
            "host {} can no longer take datum {}",
            decision.target_host, decision.datum
        )));
    }
    let vm = state.deploy_replica_vm(decision.target_host, decision.datum, false);
    state.check_capacity()?;
    Ok(vm)
}

/// Completed transitions waiting to be handed to the policy.
#[derive(Debug, Clone)]
pub struct BatchBuffer {
    pub transitions: Vec<Transition>,
    pub period: f64,
    pub last_flush: f64,
}

impl BatchBuffer {
    pub fn new(period: f64) -> Self {
        BatchBuffer {
            transitions: Vec::new(),
            period,
            last_flush: 0.0,
        }
    }

    pub fn push(&mut self, t: Transition) {
        self.transitions.push(t);
    }

    pub fn is_due(&self, now: f64) -> bool {
        now - self.last_flush >= self.period
    }

    pub fn flush(&mut self, now: f64) -> Vec<Transition> {
        self.last_flush = now;
        std::mem::take(&mut self.transitions)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub id: u64,
    pub time: f64,
    pub client: usize,
    pub trigger: Trigger,
    /// What the policy asked for.
    pub requested: Action,
    pub valid: bool,
    pub reason: Option<String>,
    pub source_vm: Option<VmId>,
    pub target_host: Option<HostId>,
    /// What was carried out.
    pub applied: Action,
}

#[derive(Debug, Clone)]
struct PartialTransition {
    state: Vec<f64>,
    action: usize,
    reward: Option<f64>,
    next: Option<(Vec<f64>, Vec<bool>)>,
}

/// Outcome of one consultation.
#[derive(Debug, Clone)]
pub struct Consultation {
    pub decision_id: u64,
    pub action: Action,
    pub descriptor: ReplicationDescriptor,
    pub replication: Option<(ReplicationDecision, VmId)>,
}

/// A routed query whose energy and reward are settled at its finish time.
#[derive(Debug, Clone)]
pub struct PendingQuery {
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
    pub power_at_arrival: f64,
    pub replication_energy_j: f64,
    pub action: Action,
    pub decision_id: u64,
}

#[derive(Debug, Clone)]
pub struct QueryDispatch {
    pub pending: PendingQuery,
    pub replications: Vec<(ReplicationDecision, VmId)>,
    /// The batch buffer was flushed because of a penalty.
    pub penalty_flush: bool,
}

/// Decision-side state of one simulation run.
pub struct ReplicationManager {
    encoder: StateEncoder,
    weights: RewardWeights,
    energy_mode: EnergyMode,
    buffer: BatchBuffer,
    partials: BTreeMap<u64, PartialTransition>,
    open: Vec<Option<u64>>,
    last_penalty: Vec<Option<f64>>,
    next_decision: u64,
    pub records: Vec<DecisionRecord>,
    pub forced_reward: f64,
    pub forced_bandwidth_cost: f64,
    pub forced_replication_energy_j: f64,
    pub clamped_features: usize,
    pub flush_generation: u64,
}

impl ReplicationManager {
    pub fn new(
        encoder: StateEncoder,
        weights: RewardWeights,
        energy_mode: EnergyMode,
        batch_period: f64,
        n_clients: usize,
    ) -> Self {
        ReplicationManager {
            encoder,
            weights,
            energy_mode,
            buffer: BatchBuffer::new(batch_period),
            partials: BTreeMap::new(),
            open: vec![None; n_clients],
            last_penalty: vec![None; n_clients],
            next_decision: 0,
            records: Vec::new(),
            forced_reward: 0.0,
            forced_bandwidth_cost: 0.0,
            forced_replication_energy_j: 0.0,
            clamped_features: 0,
            flush_generation: 0,
        }
    }

    pub fn batch_period(&self) -> f64 {
        self.buffer.period
    }

    pub fn buffered(&self) -> usize {
        self.buffer.transitions.len()
    }

    /// Encode, ask the policy, validate and apply.
    pub fn consult(
        &mut self,
        state: &mut PlatformState,
        policy: &mut dyn Policy,
        l: usize,
        now: f64,
        trigger: Trigger,
    ) -> Result<Consultation> {
        let sv = self.encoder.encode(state, l, now)?;
        self.clamped_features += sv.clamped;
        let mask = action_mask(state, l, now);
        if let Some(prev) = self.open[l].take() {
            self.partials.get_mut(&prev).expect("open decision").next = Some((sv.values.clone(), mask.clone()));
            self.try_complete(prev);
        }

        let recent_penalty = self.last_penalty[l].is_some_and(|t| now - t <= self.buffer.period);
        let obs = Observation {
            state: &sv,
            mask: &mask,
            client: l,
            time: now,
            trigger,
            latencies: &state.clients[l].latencies,
            recent_penalty,
        };
        let requested = policy.decide(&obs);

        let n = state.n_datacenters();
        let (valid, reason, decision) = match validate_action(state, requested, l, now) {
            Validity::Valid(d) => (true, None, d),
            Validity::Invalid(why) => {
                log::debug!("t={now} client {l}: {requested} rejected ({why})");
                (false, Some(why), None)
            }
        };
        let replication = match decision {
            Some(d) => {
                let vm = apply_decision(state, &d)?;
                Some((d, vm))
            }
            None => None,
        };
        let action = replication
            .as_ref()
            .map_or(Action::NoReplication, |(d, _)| Action::Replicate(d.target_dc));
        let descriptor = replication
            .as_ref()
            .map_or(ReplicationDescriptor::NONE, |(d, _)| d.descriptor);

        let id = self.next_decision;
        self.next_decision += 1;
        self.partials.insert(
            id,
            PartialTransition {
                state: sv.values,
                action: action.index(n),
                reward: None,
                next: None,
            },
        );
        self.open[l] = Some(id);
        self.records.push(DecisionRecord {
            id,
            time: now,
            client: l,
            trigger,
            requested,
            valid,
            reason,
            source_vm: replication.as_ref().map(|(d, _)| d.source),
            target_host: replication.as_ref().map(|(d, _)| d.target_host),
            applied: action,
        });
        Ok(Consultation {
            decision_id: id,
            action,
            descriptor,
            replication,
        })
    }

    /// Handle one query arrival at `now`.
    pub fn on_query(
        &mut self,
        state: &mut PlatformState,
        q: &Query,
        policy: &mut dyn Policy,
        now: f64,
    ) -> Result<QueryDispatch> {
        let l = q.client;
        let client = state.client(l)?.clone();
        let regular = self.consult(state, policy, l, now, Trigger::Periodic)?;
        let mut replications: Vec<_> = regular.replication.clone().into_iter().collect();

        let served_by = sim::route_query(state, q, now)
            .ok_or_else(|| Error::Invariant(format!("datum {l} has no routable replica")))?;
        let spec = state.host_spec(served_by.dc).clone();
        let vm = state.vm(served_by).expect("routed VM exists");
        let power_at_arrival = sim::vm_power(vm, &spec, now);
        let wait = sim::queue_wait(vm, now);
        let exec = sim::execution_time(q.exec_cycles, vm, &spec);
        let finish_time = now + wait + exec;
        let response_time = client.latencies[served_by.dc] + wait + exec;
        state.vm_mut(served_by).expect("routed VM exists").busy_until = finish_time;

        let storage_costs: Vec<f64> = state.datacenters.iter().map(|d| d.host.storage_cost).collect();
        let pending = PendingQuery {
            query: q.clone(),
            served_by,
            response_time,
            finish_time,
            rto: client.sla.rt_objective,
            rate: client.sla.rate_per_query,
            cpu_cost: accounting::cpu_cost(q.exec_cycles, spec.cycle_cost),
            storage_cost: accounting::storage_cost(client.datum_size, &state.replicas[l].per_dc, &storage_costs)?,
            bandwidth_cost: accounting::bandwidth_cost(
                &regular.descriptor,
                &state.network.intra_cost,
                &state.network.inter_cost,
            )?,
            penalty: accounting::penalty(response_time, client.sla.rt_objective, client.sla.rt_penalty),
            power_at_arrival,
            replication_energy_j: regular.descriptor.energy_j,
            action: regular.action,
            decision_id: regular.decision_id,
        };

        let penalised = response_time > client.sla.rt_objective;
        if penalised {
            self.last_penalty[l] = Some(now);
            self.flush(policy, now)?;
            let forced = self.consult(state, policy, l, now, Trigger::Penalty)?;
            let bw = accounting::bandwidth_cost(
                &forced.descriptor,
                &state.network.intra_cost,
                &state.network.inter_cost,
            )?;
            let econ = accounting::economic(0.0, 0.0, 0.0, bw, 0.0);
            let ener = accounting::energy(0.0, 0.0, forced.descriptor.energy_j, self.energy_mode, 0.0);
            let reward = accounting::reward(econ, ener, self.weights);
            self.forced_reward += reward;
            self.forced_bandwidth_cost += bw;
            self.forced_replication_energy_j += forced.descriptor.energy_j;
            self.set_reward(forced.decision_id, reward);
            replications.extend(forced.replication);
        }
        Ok(QueryDispatch {
            pending,
            replications,
            penalty_flush: penalised,
        })
    }

    pub fn set_reward(&mut self, decision_id: u64, reward: f64) {
        if let Some(p) = self.partials.get_mut(&decision_id) {
            p.reward = Some(reward);
            self.try_complete(decision_id);
        }
    }

    fn try_complete(&mut self, id: u64) {
        let done = self
            .partials
            .get(&id)
            .is_some_and(|p| p.reward.is_some() && p.next.is_some());
        if done {
            let p = self.partials.remove(&id).unwrap();
            let (next_state, next_mask) = p.next.unwrap();
            self.buffer.push(Transition {
                state: p.state,
                action: p.action,
                reward: p.reward.unwrap(),
                next_state,
                next_mask,
            });
        }
    }

    fn flush(&mut self, policy: &mut dyn Policy, now: f64) -> Result<()> {
        self.flush_generation += 1;
        let batch = self.buffer.flush(now);
        if batch.is_empty() {
            return Ok(());
        }
        policy.learn(batch)
    }

    /// Periodic flush; ignored when a penalty flush superseded generation `gen`.
    pub fn periodic_flush(&mut self, policy: &mut dyn Policy, now: f64, gen: u64) -> Result<bool> {
        if gen != self.flush_generation {
            return Ok(false);
        }
        self.flush(policy, now)?;
        Ok(true)
    }

    /// Close every open decision against the state at `now` and hand the
    /// remaining transitions to the policy.
    pub fn finish(&mut self, state: &PlatformState, policy: &mut dyn Policy, now: f64) -> Result<()> {
        for l in 0..self.open.len() {
            if let Some(id) = self.open[l].take() {
                let sv = self.encoder.encode(state, l, now)?;
                let mask = action_mask(state, l, now);
                self.partials.get_mut(&id).expect("open decision").next = Some((sv.values, mask));
                self.try_complete(id);
            }
        }
        if !self.partials.is_empty() {
            return Err(Error::Invariant(format!(
                "{} decisions never received a reward",
                self.partials.len()
            )));
        }
        self.flush(policy, now)
    }
}
