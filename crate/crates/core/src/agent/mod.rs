//! Replication policies: the Deep Q-Learning agent and the fixed baselines.

pub mod baseline;
pub mod dqn;
pub mod network;
pub mod replay;
pub mod state;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Result;
pub use state::StateVector;

/// `Replicate(i)` copies the datum into datacenter `i`. With `N`
/// datacenters, action index `i < N` is `Replicate(i)` and index `N` is
/// `NoReplication`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Replicate(usize),
    NoReplication,
}

impl Action {
    pub fn index(self, n_datacenters: usize) -> usize {
        match self {
            Action::Replicate(i) => i,
            Action::NoReplication => n_datacenters,
        }
    }

    pub fn from_index(index: usize, n_datacenters: usize) -> Action {
        assert!(index <= n_datacenters, "action index {index} out of range");
        if index == n_datacenters {
            Action::NoReplication
        } else {
            Action::Replicate(index)
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Replicate(i) => write!(f, "replicate:{i}"),
            Action::NoReplication => f.write_str("none"),
        }
    }
}

/// Why the agent was consulted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trigger {
    /// Regular consultation on a query arrival.
    Periodic,
    /// Extra consultation right after a response-time penalty.
    Penalty,
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trigger::Periodic => "periodic",
            Trigger::Penalty => "penalty",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Action index, see [`Action`].
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Validity of every action at `next_state`.
    pub next_mask: Vec<bool>,
}

/// What a policy sees when asked for a decision.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub state: &'a StateVector,
    /// One entry per action; the last (`NoReplication`) is always true.
    pub mask: &'a [bool],
    pub client: usize,
    pub time: f64,
    pub trigger: Trigger,
    pub latencies: &'a [f64],
    /// The client paid a penalty within the last batching period.
    pub recent_penalty: bool,
}

impl Observation<'_> {
    pub fn n_datacenters(&self) -> usize {
        self.mask.len() - 1
    }
}

pub trait Policy {
    fn name(&self) -> String;

    fn decide(&mut self, obs: &Observation<'_>) -> Action;

    /// Receives completed transitions each time the batch buffer flushes.
    fn learn(&mut self, _batch: Vec<Transition>) -> Result<()> {
        Ok(())
    }
}
