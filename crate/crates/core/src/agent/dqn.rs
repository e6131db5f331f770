//! Deep Q-Learning: masked epsilon-greedy selection, TD targets against a
//! target network, SGD on the squared TD error and uniform replay.

use std::collections::VecDeque;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::QNetwork;
use super::replay::ReplayBuffer;
use super::{Action, Observation, Policy, Transition, Trigger};
use crate::error::{Error, Result};
use crate::seed;

/// Pick an action among the valid ones.
///
/// With probability `epsilon` the choice is uniform over valid actions.
/// Otherwise actions are scanned from highest to lowest Q-value (ties to the
/// lower index) and the first valid one is taken. The last action,
/// `NoReplication`, is always valid, so the scan terminates.
pub fn select_action<R: Rng + ?Sized>(
    q_values: &[f64],
    valid_mask: &[bool],
    epsilon: f64,
    rng: &mut R,
) -> Action {
    assert_eq!(q_values.len(), valid_mask.len());
    assert!(valid_mask.iter().any(|&v| v), "no valid action");
    let n = q_values.len() - 1;
    let explore = rng.random::<f64>() < epsilon;
    if explore {
        let valid: Vec<usize> = (0..valid_mask.len()).filter(|&i| valid_mask[i]).collect();
        return Action::from_index(valid[rng.random_range(0..valid.len())], n);
    }
    let mut order: Vec<usize> = (0..q_values.len()).collect();
    order.sort_by(|&a, &b| q_values[b].total_cmp(&q_values[a]));
    let best = order.into_iter().find(|&i| valid_mask[i]).unwrap();
    Action::from_index(best, n)
}

/// `r + gamma * max` of the target network's value over the actions valid in
/// the next state.
pub fn td_targets(batch: &[&Transition], target: &QNetwork, gamma: f64) -> Vec<f64> {
    batch
        .iter()
        .map(|t| {
            if gamma == 0.0 {
                return t.reward;
            }
            let q = target.forward(&t.next_state);
            let best = q
                .iter()
                .zip(&t.next_mask)
                .filter(|(_, &ok)| ok)
                .map(|(&v, _)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            t.reward + gamma * best
        })
        .collect()
}

/// One SGD step on the batch; returns the loss before the step.
pub fn train_step(
    net: &mut QNetwork,
    target: &QNetwork,
    batch: &[&Transition],
    gamma: f64,
    lr: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Config("train_step needs a non-empty batch".into()));
    }
    let targets = td_targets(batch, target, gamma);
    let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
    let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
    let (loss, grad) = net.loss_and_gradient(&states, &actions, &targets);
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Diverged(format!(
            "loss {loss} over batch of {} (reward range {:?})",
            batch.len(),
            batch.iter().map(|t| t.reward).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r), hi.max(r))
            })
        )));
    }
    net.params_mut()
        .iter_mut()
        .zip(&grad)
        .for_each(|(p, g)| *p -= lr * g);
    Ok(loss)
}

/// Hard copy of the online weights every `every_k` steps.
pub fn sync_target(net: &QNetwork, target: &mut QNetwork, step: u64, every_k: u64) -> bool {
    if every_k > 0 && step.is_multiple_of(every_k) {
        target.clone_from(net);
        true
    } else {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    /// Hidden layer widths; `None` means two layers of `max(32, 2 * input)`.
    pub hidden: Option<Vec<usize>>,
    pub gamma: f64,
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Number of query-triggered decisions over which epsilon decays.
    pub epsilon_decay_decisions: u64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub target_sync_every: u64,
    /// Training-curve sampling interval, in train steps.
    pub curve_every: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            hidden: None,
            gamma: 0.95,
            learning_rate: 1e-3,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_decisions: 20_000,
            replay_capacity: 100_000,
            batch_size: 64,
            target_sync_every: 500,
            curve_every: 100,
        }
    }
}

impl DqnConfig {
    /// Defaults with epsilon decaying over the first 20% of `training_queries`.
    pub fn for_training_queries(training_queries: u64) -> Self {
        DqnConfig {
            epsilon_decay_decisions: (training_queries / 5).max(1),
            ..Default::default()
        }
    }

    pub fn layer_sizes(&self, input: usize, actions: usize) -> Vec<usize> {
        let mut sizes = vec![input];
        match &self.hidden {
            Some(h) => sizes.extend(h),
            None => {
                let w = (2 * input).max(32);
                sizes.extend([w, w]);
            }
        }
        sizes.push(actions);
        sizes
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.gamma)
            && self.learning_rate.is_finite()
            && self.learning_rate >= 0.0
            && (0.0..=1.0).contains(&self.epsilon_start)
            && (0.0..=1.0).contains(&self.epsilon_end)
            && self.replay_capacity >= self.batch_size
            && self.batch_size > 0
            && self.hidden.as_ref().is_none_or(|h| h.iter().all(|&w| w > 0));
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid agent configuration {self:?}")))
        }
    }

    pub fn epsilon_at(&self, decisions: u64) -> f64 {
        if decisions >= self.epsilon_decay_decisions {
            return self.epsilon_end;
        }
        let frac = decisions as f64 / self.epsilon_decay_decisions as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub loss: f64,
    pub epsilon: f64,
    pub mean_reward_window: f64,
}

const REWARD_WINDOW: usize = 1000;

/// The learning policy. In evaluation mode it acts greedily and ignores
/// transitions.
pub struct DqnAgent {
    config: DqnConfig,
    online: QNetwork,
    target: QNetwork,
    replay: ReplayBuffer,
    epsilon_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    training: bool,
    decisions: u64,
    steps: u64,
    recent_rewards: VecDeque<f64>,
    curve: Vec<CurvePoint>,
}

impl DqnAgent {
    pub fn new(config: DqnConfig, input: usize, actions: usize, master_seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed::derive_seed(master_seed, seed::AGENT_INIT));
        let online = QNetwork::new(&config.layer_sizes(input, actions), &mut init_rng);
        Self::with_network(config, online, master_seed, true)
    }

    /// Greedy, non-learning agent around existing weights.
    pub fn evaluator(network: QNetwork, master_seed: u64) -> Result<Self> {
        let config = DqnConfig {
            epsilon_start: 0.0,
            epsilon_end: 0.0,
            ..Default::default()
        };
        Self::with_network(config, network, master_seed, false)
    }

    fn with_network(config: DqnConfig, online: QNetwork, master_seed: u64, training: bool) -> Result<Self> {
        Ok(DqnAgent {
            target: online.clone(),
            replay: ReplayBuffer::new(config.replay_capacity),
            epsilon_rng: ChaCha8Rng::seed_from_u64(seed::derive_seed(master_seed, seed::EPSILON)),
            replay_rng: ChaCha8Rng::seed_from_u64(seed::derive_seed(master_seed, seed::REPLAY)),
            online,
            config,
            training,
            decisions: 0,
            steps: 0,
            recent_rewards: VecDeque::with_capacity(REWARD_WINDOW),
            curve: Vec::new(),
        })
    }

    pub fn network(&self) -> &QNetwork {
        &self.online
    }

    pub fn target_network(&self) -> &QNetwork {
        &self.target
    }

    pub fn train_steps(&self) -> u64 {
        self.steps
    }

    pub fn curve(&self) -> &[CurvePoint] {
        &self.curve
    }

    pub fn replay_len(&self) -> usize {
        self.replay.len()
    }

    pub fn epsilon(&self) -> f64 {
        if self.training {
            self.config.epsilon_at(self.decisions)
        } else {
            0.0
        }
    }

    pub fn q_values(&self, state: &[f64]) -> Vec<f64> {
        self.online.forward(state)
    }

    fn observe(&mut self, t: Transition) -> Result<()> {
        if self.recent_rewards.len() == REWARD_WINDOW {
            self.recent_rewards.pop_front();
        }
        self.recent_rewards.push_back(t.reward);
        self.replay.push(t);

        let Ok(batch) = self.replay.sample(&mut self.replay_rng, self.config.batch_size) else {
            return Ok(());
        };
        let loss = train_step(
            &mut self.online,
            &self.target,
            &batch,
            self.config.gamma,
            self.config.learning_rate,
        )?;
        self.steps += 1;
        sync_target(&self.online, &mut self.target, self.steps, self.config.target_sync_every);
        if self.config.curve_every > 0 && self.steps.is_multiple_of(self.config.curve_every) {
            let mean = self.recent_rewards.iter().sum::<f64>() / self.recent_rewards.len() as f64;
            self.curve.push(CurvePoint {
                step: self.steps,
                loss,
                epsilon: self.epsilon(),
                mean_reward_window: mean,
            });
        }
        Ok(())
    }
}

impl Policy for DqnAgent {
    fn name(&self) -> String {
        if self.training { "dqn-train" } else { "dqn-eval" }.to_string()
    }

    fn decide(&mut self, obs: &Observation<'_>) -> Action {
        let epsilon = self.epsilon();
        if obs.trigger == Trigger::Periodic {
            self.decisions += 1;
        }
        let q = self.online.forward(&obs.state.values);
        select_action(&q, obs.mask, epsilon, &mut self.epsilon_rng)
    }

    fn learn(&mut self, batch: Vec<Transition>) -> Result<()> {
        if !self.training {
            return Ok(());
        }
        for t in batch {
            self.observe(t)?;
        }
        Ok(())
    }
}

pub const CHECKPOINT_FORMAT: &str = "replisim-qnet";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned JSON dump of the layer sizes and the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub scenario_sha256: String,
    pub seed: u64,
    pub layers: Vec<usize>,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(network: &QNetwork, scenario_sha256: &str, seed: u64) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            scenario_sha256: scenario_sha256.into(),
            seed,
            layers: network.sizes().to_vec(),
            params: network.params().to_vec(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported format {} v{}",
                path.display(),
                ckpt.format,
                ckpt.version
            )));
        }
        Ok(ckpt)
    }

    pub fn network(&self) -> Result<QNetwork> {
        QNetwork::from_params(self.layers.clone(), self.params.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(state: Vec<f64>, action: usize, reward: f64, next: Vec<f64>, mask: Vec<bool>) -> Transition {
        Transition {
            state,
            action,
            reward,
            next_state: next,
            next_mask: mask,
        }
    }

    #[test]
    fn greedy_and_next_best() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = [3.0, 5.0, 1.0];
        assert_eq!(select_action(&q, &[true, true, true], 0.0, &mut rng), Action::Replicate(1));
        assert_eq!(select_action(&q, &[true, false, true], 0.0, &mut rng), Action::Replicate(0));
        assert_eq!(select_action(&q, &[false, false, true], 0.0, &mut rng), Action::NoReplication);
    }

    #[test]
    fn epsilon_schedule_is_linear_then_flat() {
        let c = DqnConfig {
            epsilon_decay_decisions: 100,
            ..Default::default()
        };
        assert_eq!(c.epsilon_at(0), 1.0);
        assert!((c.epsilon_at(50) - 0.525).abs() < 1e-12);
        assert_eq!(c.epsilon_at(100), 0.05);
        assert_eq!(c.epsilon_at(10_000), 0.05);
    }

    #[test]
    fn zero_discount_targets_are_rewards() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let target = QNetwork::new(&[2, 4, 3], &mut rng);
        let a = tr(vec![0.1, 0.2], 0, 1.5, vec![0.3, 0.4], vec![true, true, true]);
        let b = tr(vec![0.1, 0.2], 2, -2.0, vec![0.9, 0.4], vec![false, false, true]);
        assert_eq!(td_targets(&[&a, &b], &target, 0.0), vec![1.5, -2.0]);
    }

    #[test]
    fn singleton_mask_uses_that_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let target = QNetwork::new(&[2, 4, 3], &mut rng);
        let t = tr(vec![0.0, 0.0], 0, 1.0, vec![0.5, 0.5], vec![false, false, true]);
        let expected = 1.0 + 0.9 * target.forward(&[0.5, 0.5])[2];
        assert_eq!(td_targets(&[&t], &target, 0.9), vec![expected]);
    }

    #[test]
    fn fixed_point_and_zero_rate_leave_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = QNetwork::new(&[2, 4, 3], &mut rng);
        let target = net.clone();
        let s = vec![0.2, 0.7];
        let next = vec![0.4, 0.1];
        let y = td_targets(
            &[&tr(s.clone(), 1, 0.0, next.clone(), vec![true; 3])],
            &target,
            0.5,
        )[0];
        let reward = net.forward(&s)[1] - (y - 0.0);
        let t = tr(s, 1, reward, next, vec![true; 3]);
        let before = net.clone();
        let loss = train_step(&mut net, &target, &[&t], 0.5, 0.1).unwrap();
        assert!(loss < 1e-24, "loss {loss}");
        assert_eq!(net.params(), before.params());

        let t2 = tr(vec![0.5, 0.5], 0, 10.0, vec![0.0, 0.0], vec![true; 3]);
        let pre = net.clone();
        let loss0 = train_step(&mut net, &target, &[&t2], 0.5, 0.0).unwrap();
        assert_eq!(net, pre);
        let again = train_step(&mut net, &target, &[&t2], 0.5, 0.0).unwrap();
        assert_eq!(loss0, again);
    }

    #[test]
    fn sgd_step_reduces_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = QNetwork::new(&[3, 8, 2], &mut rng);
        let target = net.clone();
        let t = tr(vec![0.1, 0.5, 0.9], 0, 3.0, vec![0.0; 3], vec![true, true]);
        let l0 = train_step(&mut net, &target, &[&t], 0.0, 0.01).unwrap();
        let l1 = train_step(&mut net, &target, &[&t], 0.0, 0.01).unwrap();
        assert!(l1 < l0);
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut net = QNetwork::new(&[1, 2, 2], &mut rng);
        let target = net.clone();
        let t = tr(vec![0.5], 0, f64::INFINITY, vec![0.5], vec![true, true]);
        assert!(matches!(train_step(&mut net, &target, &[&t], 0.0, 0.1), Err(Error::Diverged(_))));
    }

    #[test]
    fn target_sync_period() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = QNetwork::new(&[2, 3, 2], &mut rng);
        let mut target = QNetwork::new(&[2, 3, 2], &mut rng);
        let stale = target.clone();
        assert!(!sync_target(&net, &mut target, 999, 1000));
        assert_eq!(target, stale);
        assert!(sync_target(&net, &mut target, 1000, 1000));
        assert_eq!(target.forward(&[0.3, 0.8]), net.forward(&[0.3, 0.8]));
        let mut t2 = stale.clone();
        assert!(sync_target(&net, &mut t2, 7, 1));
        assert_eq!(t2, net);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = QNetwork::new(&[3, 5, 4], &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        Checkpoint::new(&net, "abc", 9).save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.scenario_sha256, "abc");
        assert_eq!(back.network().unwrap(), net);
    }
}
