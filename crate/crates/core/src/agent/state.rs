//! Numeric state encoding fed to the Q-network.
//!
//! Layout for `N` datacenters, in order:
//!
//! | block       | entries                                                        |
//! |-------------|----------------------------------------------------------------|
//! | datacenter  | frequency ×N, cores ×N, cycle cost ×N, storage cost ×N, carbon ×N |
//! | network     | inter bandwidth N×N, inter cost N×N (row-major), intra bandwidth ×N, intra cost ×N |
//! | user        | latency ×N, utilization ×N, datum size, response time objective |
//! | optional    | replica count ×N                                               |
//!
//! Every feature is min-max scaled into `[0, 1]` by [`StateBounds`]. A
//! datacenter that cannot take another replica of the datum has its frequency
//! reported as zero before scaling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::platform::PlatformState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
}

impl Bound {
    pub fn new(lo: f64, hi: f64) -> Self {
        Bound { lo, hi }
    }

    /// Scaled value and whether the raw value was outside the bound.
    pub fn scale(&self, x: f64) -> (f64, bool) {
        let out = x < self.lo || x > self.hi;
        if self.hi <= self.lo {
            return (0.0, out);
        }
        (((x - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0), out)
    }

    fn upto(values: impl Iterator<Item = f64>) -> Self {
        Bound::new(0.0, values.fold(0.0, f64::max))
    }
}

/// Per-feature scaling bounds. Derived from the scenario itself unless the
/// scenario file declares them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBounds {
    pub frequency: Bound,
    pub cores: Bound,
    pub cycle_cost: Bound,
    pub storage_cost: Bound,
    pub carbon_intensity: Bound,
    pub inter_bw: Bound,
    pub inter_cost: Bound,
    pub intra_bw: Bound,
    pub intra_cost: Bound,
    pub latency: Bound,
    pub datum_size: Bound,
    pub rt_objective: Bound,
}

impl StateBounds {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.frequency,
            self.cores,
            self.cycle_cost,
            self.storage_cost,
            self.carbon_intensity,
            self.inter_bw,
            self.inter_cost,
            self.intra_bw,
            self.intra_cost,
            self.latency,
            self.datum_size,
            self.rt_objective,
        ];
        if all.iter().all(|b| b.lo.is_finite() && b.hi.is_finite() && b.hi >= b.lo) {
            Ok(())
        } else {
            Err(Error::Validation("state bounds need finite lo <= hi".into()))
        }
    }

    /// `[0, max]` over the values present in the scenario.
    pub fn derive(state: &PlatformState) -> Self {
        let dcs = &state.datacenters;
        let net = &state.network;
        StateBounds {
            frequency: Bound::upto(dcs.iter().map(|d| d.host.core_frequency)),
            cores: Bound::upto(dcs.iter().map(|d| d.host.cores as f64)),
            cycle_cost: Bound::upto(dcs.iter().map(|d| d.host.cycle_cost)),
            storage_cost: Bound::upto(dcs.iter().map(|d| d.host.storage_cost)),
            carbon_intensity: Bound::upto(dcs.iter().map(|d| d.carbon_intensity)),
            inter_bw: Bound::upto(net.inter_bw.iter().flatten().copied()),
            inter_cost: Bound::upto(net.inter_cost.iter().flatten().copied()),
            intra_bw: Bound::upto(net.intra_bw.iter().copied()),
            intra_cost: Bound::upto(net.intra_cost.iter().copied()),
            latency: Bound::upto(state.clients.iter().flat_map(|c| c.latencies.iter().copied())),
            datum_size: Bound::upto(state.clients.iter().map(|c| c.datum_size)),
            rt_objective: Bound::upto(state.clients.iter().map(|c| c.sla.rt_objective)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub values: Vec<f64>,
    /// Number of raw features that fell outside their bounds and were clamped.
    pub clamped: usize,
}

impl StateVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Input dimension for `n` datacenters.
pub fn state_dim(n: usize, extra_replicas: bool) -> usize {
    5 * n + 2 * n * n + 2 * n + 2 * n + 2 + if extra_replicas { n } else { 0 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateEncoder {
    pub bounds: StateBounds,
    /// Append the per-datacenter replica counts of the datum.
    pub extra_replicas: bool,
}

impl StateEncoder {
    pub fn new(state: &PlatformState, extra_replicas: bool) -> Self {
        let bounds = state
            .state_bounds
            .clone()
            .unwrap_or_else(|| StateBounds::derive(state));
        StateEncoder {
            bounds,
            extra_replicas,
        }
    }

    pub fn dim(&self, state: &PlatformState) -> usize {
        state_dim(state.n_datacenters(), self.extra_replicas)
    }

    /// Encode the platform as seen by client `l` at time `t`.
    pub fn encode(&self, state: &PlatformState, l: usize, t: f64) -> Result<StateVector> {
        let client = state.client(l)?;
        let n = state.n_datacenters();
        let b = &self.bounds;
        let mut values = Vec::with_capacity(self.dim(state));
        let mut clamped = 0;
        let mut put = |x: f64, bound: &Bound| {
            let (v, out) = bound.scale(x);
            clamped += out as usize;
            values.push(v);
        };

        for i in 0..n {
            let f = if state.eligible_hosts(i, l).is_empty() {
                0.0
            } else {
                state.datacenters[i].host.core_frequency
            };
            put(f, &b.frequency);
        }
        for dc in &state.datacenters {
            put(dc.host.cores as f64, &b.cores);
        }
        for dc in &state.datacenters {
            put(dc.host.cycle_cost, &b.cycle_cost);
        }
        for dc in &state.datacenters {
            put(dc.host.storage_cost, &b.storage_cost);
        }
        for dc in &state.datacenters {
            put(dc.carbon_intensity, &b.carbon_intensity);
        }

        let net = &state.network;
        for i in 0..n {
            for k in 0..n {
                put(if i == k { 0.0 } else { net.bandwidth(i, k, t) }, &b.inter_bw);
            }
        }
        for row in &net.inter_cost {
            for &c in row {
                put(c, &b.inter_cost);
            }
        }
        for i in 0..n {
            put(net.bandwidth(i, i, t), &b.intra_bw);
        }
        for &c in &net.intra_cost {
            put(c, &b.intra_cost);
        }

        for &lat in &client.latencies {
            put(lat, &b.latency);
        }
        let unit = Bound::new(0.0, 1.0);
        for u in state.avg_utilization(l, t)? {
            put(u, &unit);
        }
        put(client.datum_size, &b.datum_size);
        put(client.sla.rt_objective, &b.rt_objective);

        if self.extra_replicas {
            for i in 0..n {
                let dc = &state.datacenters[i];
                let max_vms = dc.host_count as f64 * (dc.host.cores / state.replica_vm_cores) as f64;
                put(state.replicas[l].per_dc[i] as f64, &Bound::new(0.0, max_vms));
            }
        }

        Ok(StateVector { values, clamped })
    }
}
