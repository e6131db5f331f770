//! Fixed comparison policies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Action, Observation, Policy};

/// Keeps only the initial replicas.
#[derive(Debug, Default, Clone)]
pub struct NeverReplicate;

impl Policy for NeverReplicate {
    fn name(&self) -> String {
        "never".into()
    }

    fn decide(&mut self, _obs: &Observation<'_>) -> Action {
        Action::NoReplication
    }
}

/// Uniform choice over the currently valid actions.
#[derive(Debug, Clone)]
pub struct RandomValid {
    rng: ChaCha8Rng,
}

impl RandomValid {
    pub fn new(seed: u64) -> Self {
        RandomValid {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomValid {
    fn name(&self) -> String {
        "random".into()
    }

    fn decide(&mut self, obs: &Observation<'_>) -> Action {
        let valid: Vec<usize> = (0..obs.mask.len()).filter(|&i| obs.mask[i]).collect();
        let pick = valid[self.rng.random_range(0..valid.len())];
        Action::from_index(pick, obs.n_datacenters())
    }
}

/// After a recent penalty, replicates into the lowest-latency datacenter
/// that can take a copy; otherwise does nothing.
#[derive(Debug, Default, Clone)]
pub struct GreedyNearest;

impl Policy for GreedyNearest {
    fn name(&self) -> String {
        "nearest".into()
    }

    fn decide(&mut self, obs: &Observation<'_>) -> Action {
        if !obs.recent_penalty {
            return Action::NoReplication;
        }
        let mut order: Vec<usize> = (0..obs.n_datacenters()).collect();
        order.sort_by(|&a, &b| obs.latencies[a].total_cmp(&obs.latencies[b]));
        order
            .into_iter()
            .find(|&i| obs.mask[i])
            .map_or(Action::NoReplication, Action::Replicate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{StateVector, Trigger};

    fn obs<'a>(state: &'a StateVector, mask: &'a [bool], lat: &'a [f64], recent: bool) -> Observation<'a> {
        Observation {
            state,
            mask,
            client: 0,
            time: 0.0,
            trigger: Trigger::Penalty,
            latencies: lat,
            recent_penalty: recent,
        }
    }

    #[test]
    fn nearest_picks_lowest_latency_valid() {
        let s = StateVector {
            values: vec![],
            clamped: 0,
        };
        let lat = [0.05, 0.01, 0.02];
        let mut p = GreedyNearest;
        assert_eq!(p.decide(&obs(&s, &[true, true, true, true], &lat, true)), Action::Replicate(1));
        assert_eq!(p.decide(&obs(&s, &[true, false, true, true], &lat, true)), Action::Replicate(2));
        assert_eq!(p.decide(&obs(&s, &[false, false, false, true], &lat, true)), Action::NoReplication);
        assert_eq!(p.decide(&obs(&s, &[true, true, true, true], &lat, false)), Action::NoReplication);
    }

    #[test]
    fn random_stays_in_mask() {
        let s = StateVector {
            values: vec![],
            clamped: 0,
        };
        let lat = [0.01, 0.02];
        let mut p = RandomValid::new(3);
        for _ in 0..1000 {
            let a = p.decide(&obs(&s, &[false, true, true], &lat, false));
            assert_ne!(a, Action::Replicate(0));
        }
    }
}
