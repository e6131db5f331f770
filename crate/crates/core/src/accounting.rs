//! Per-query economics, energy and reward. Every function here is pure.
//!
//! Storage is charged on every served query: the datum size times the sum
//! over datacenters of the replica count and the per-byte storage price.
//! There is no wall-clock storage rent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Provider weights on profit and energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl RewardWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0 && beta.is_finite() && beta >= 0.0) {
            return Err(Error::Validation(format!(
                "reward weights must be non-negative, got alpha={alpha} beta={beta}"
            )));
        }
        Ok(RewardWeights { alpha, beta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReplicationKind {
    None,
    /// Host to host inside datacenter `i`.
    IntraDc(usize),
    /// From datacenter `.0` to datacenter `.1`.
    InterDc(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationDescriptor {
    pub kind: ReplicationKind,
    pub bytes: f64,
    /// Energy spent creating the replica, joules.
    pub energy_j: f64,
}

impl ReplicationDescriptor {
    pub const NONE: ReplicationDescriptor = ReplicationDescriptor {
        kind: ReplicationKind::None,
        bytes: 0.0,
        energy_j: 0.0,
    };

    pub fn new(kind: ReplicationKind, bytes: f64, energy_j: f64) -> Result<Self> {
        let d = ReplicationDescriptor { kind, bytes, energy_j };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ReplicationKind::None if self.energy_j != 0.0 => Err(Error::InvalidDescriptor(
                "no replication but non-zero replication energy".into(),
            )),
            ReplicationKind::None => Ok(()),
            ReplicationKind::InterDc(a, b) if a == b => Err(Error::InvalidDescriptor(format!(
                "inter-datacenter replication within datacenter {a}"
            ))),
            _ if self.bytes.is_nan() || self.bytes <= 0.0 => {
                Err(Error::InvalidDescriptor("replication of zero bytes".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Energy to create one replica: a per-byte transfer term plus a fixed
/// write term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationEnergyModel {
    pub energy_per_byte_j: f64,
    pub write_energy_j: f64,
}

impl Default for ReplicationEnergyModel {
    fn default() -> Self {
        ReplicationEnergyModel {
            energy_per_byte_j: 5e-8,
            write_energy_j: 0.0,
        }
    }
}

impl ReplicationEnergyModel {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if ok(self.energy_per_byte_j) && ok(self.write_energy_j) {
            Ok(())
        } else {
            Err(Error::Validation("replication energy parameters must be non-negative".into()))
        }
    }

    pub fn energy(&self, bytes: f64) -> f64 {
        bytes * self.energy_per_byte_j + self.write_energy_j
    }
}

/// How the execution part of a query's energy is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyMode {
    /// VM power at finish minus VM power at arrival. Can be negative.
    #[default]
    Literal,
    /// VM power integrated over the query's stay in the system.
    Integrated,
}

/// CPU cost of a query. Execution time scales as `1/nco` while the cores
/// billed scale as `nco`, so the core count cancels.
pub fn cpu_cost(exec_cycles: f64, cycle_cost: f64) -> f64 {
    exec_cycles * cycle_cost
}

pub fn storage_cost(datum_size: f64, replica_counts: &[u32], storage_costs: &[f64]) -> Result<f64> {
    if replica_counts.len() != storage_costs.len() {
        return Err(Error::LengthMismatch {
            expected: storage_costs.len(),
            actual: replica_counts.len(),
        });
    }
    let weighted: f64 = replica_counts
        .iter()
        .zip(storage_costs)
        .map(|(&r, &sc)| sc * r as f64)
        .sum();
    Ok(datum_size * weighted)
}

pub fn bandwidth_cost(
    repl: &ReplicationDescriptor,
    intra_cost: &[f64],
    inter_cost: &[Vec<f64>],
) -> Result<f64> {
    match repl.kind {
        ReplicationKind::None => Ok(0.0),
        ReplicationKind::IntraDc(i) => {
            let c = intra_cost.get(i).ok_or(Error::UnknownDatacenter(i))?;
            Ok(repl.bytes * c)
        }
        ReplicationKind::InterDc(a, b) if a == b => Err(Error::InvalidDescriptor(format!(
            "inter-datacenter replication within datacenter {a}"
        ))),
        ReplicationKind::InterDc(a, b) => {
            let c = inter_cost
                .get(a)
                .ok_or(Error::UnknownDatacenter(a))?
                .get(b)
                .ok_or(Error::UnknownDatacenter(b))?;
            Ok(repl.bytes * c)
        }
    }
}

/// Penalty owed when the response time strictly exceeds the objective.
pub fn penalty(rt: f64, rto: f64, pen: f64) -> f64 {
    if rt > rto {
        pen
    } else {
        0.0
    }
}

/// Query revenue minus costs. Not floored at zero.
pub fn economic(rate: f64, cpu: f64, stor: f64, bw: f64, pen: f64) -> f64 {
    rate - (cpu + stor + bw + pen)
}

pub fn energy(p_finish: f64, p_arrival: f64, p_repl: f64, mode: EnergyMode, integral: f64) -> f64 {
    match mode {
        EnergyMode::Literal => p_finish - p_arrival + p_repl,
        EnergyMode::Integrated => integral + p_repl,
    }
}

pub fn reward(econ: f64, ener: f64, w: RewardWeights) -> f64 {
    w.alpha * econ - w.beta * ener
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn cpu_examples() {
        assert!(close(cpu_cost(1e6, 1e-9), 1e-3));
        assert_eq!(cpu_cost(1e6, 0.0), 0.0);
    }

    #[test]
    fn storage_examples() {
        assert!(close(storage_cost(1e6, &[1, 0], &[2e-9, 5e-9]).unwrap(), 2e-3));
        assert_eq!(storage_cost(1e6, &[0, 0], &[2e-9, 5e-9]).unwrap(), 0.0);
        assert!(matches!(
            storage_cost(1.0, &[1], &[1.0, 2.0]),
            Err(Error::LengthMismatch { expected: 2, actual: 1 })
        ));
    }

    #[test]
    fn bandwidth_cases() {
        let intra = [1e-10, 3e-10];
        let inter = vec![vec![0.0, 2e-9], vec![2e-9, 0.0]];
        assert_eq!(bandwidth_cost(&ReplicationDescriptor::NONE, &intra, &inter).unwrap(), 0.0);
        let d = ReplicationDescriptor::new(ReplicationKind::IntraDc(0), 1e6, 0.05).unwrap();
        assert!(close(bandwidth_cost(&d, &intra, &inter).unwrap(), 1e-4));
        let fwd = ReplicationDescriptor::new(ReplicationKind::InterDc(0, 1), 1e6, 0.05).unwrap();
        let back = ReplicationDescriptor::new(ReplicationKind::InterDc(1, 0), 1e6, 0.05).unwrap();
        assert_eq!(
            bandwidth_cost(&fwd, &intra, &inter).unwrap(),
            bandwidth_cost(&back, &intra, &inter).unwrap()
        );
        let bad = ReplicationDescriptor {
            kind: ReplicationKind::InterDc(1, 1),
            bytes: 1.0,
            energy_j: 0.0,
        };
        assert!(matches!(bandwidth_cost(&bad, &intra, &inter), Err(Error::InvalidDescriptor(_))));
        assert!(ReplicationDescriptor::new(ReplicationKind::InterDc(1, 1), 1.0, 0.0).is_err());
        assert!(ReplicationDescriptor::new(ReplicationKind::IntraDc(0), 0.0, 0.0).is_err());
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(penalty(0.2, 0.1, 5.0), 5.0);
        assert_eq!(penalty(0.1, 0.1, 5.0), 0.0);
        assert_eq!(penalty(9.0, 0.1, 0.0), 0.0);
    }

    #[test]
    fn economic_examples() {
        assert!(close(economic(1.0, 0.1, 0.2, 0.0, 0.0), 0.7));
        assert_eq!(economic(1.0, 0.0, 0.0, 0.0, 0.0), 1.0);
        assert!(economic(1.0, 0.0, 0.0, 0.0, 10.0) < 0.0);
    }

    #[test]
    fn energy_examples() {
        assert_eq!(energy(100.0, 50.0, 0.0, EnergyMode::Literal, 0.0), 50.0);
        assert_eq!(energy(50.0, 50.0, 0.0, EnergyMode::Literal, 0.0), 0.0);
        assert_eq!(energy(0.0, 0.0, 3.0, EnergyMode::Integrated, 100.0 * 2.0), 203.0);
    }

    #[test]
    fn reward_examples() {
        let w = |a, b| RewardWeights::new(a, b).unwrap();
        assert_eq!(reward(0.7, 50.0, w(1.0, 0.0)), 0.7);
        assert_eq!(reward(0.7, 50.0, w(0.0, 1.0)), -50.0);
        assert!((reward(0.7, 50.0, w(0.5, 0.01)) - -0.15).abs() < 1e-12);
        assert!(RewardWeights::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn replication_energy_model() {
        let m = ReplicationEnergyModel::default();
        assert!(close(m.energy(1e6), 0.05));
    }

    proptest! {
        #[test]
        fn cpu_cost_ignores_core_count(ec in 1.0f64..1e12, cc in 0.0f64..1e-6, nco in 1u32..64) {
            // billed time ec/(f*nco) on nco cores, at cc per cycle-equivalent
            let per_core = ec / nco as f64 * cc * nco as f64;
            prop_assert!((cpu_cost(ec, cc) - per_core).abs() <= 1e-12 * per_core.abs().max(1e-300));
        }

        #[test]
        fn penalty_is_monotone(rt in 0.0f64..10.0, rto in 0.01f64..10.0, d in 0.0f64..5.0, pen in 0.0f64..100.0) {
            prop_assert!(penalty(rt + d, rto, pen) >= penalty(rt, rto, pen));
            prop_assert!(penalty(rt, rto + d, pen) <= penalty(rt, rto, pen));
        }

        #[test]
        fn bandwidth_zero_iff_no_replication(bytes in 1.0f64..1e9, i in 0usize..3, j in 0usize..3) {
            let intra = [1e-10, 2e-10, 3e-10];
            let inter = vec![vec![0.0, 1e-9, 2e-9], vec![1e-9, 0.0, 4e-9], vec![2e-9, 4e-9, 0.0]];
            let kind = if i == j { ReplicationKind::IntraDc(i) } else { ReplicationKind::InterDc(i, j) };
            let d = ReplicationDescriptor::new(kind, bytes, 0.0).unwrap();
            prop_assert!(bandwidth_cost(&d, &intra, &inter).unwrap() > 0.0);
        }
    }
}
