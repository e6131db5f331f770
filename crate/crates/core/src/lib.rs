//! Multi-datacenter replication simulator with a Deep Q-Learning placement agent.
//!
//! The crate is organised around the three cooperating parts of the system:
//!
//! * [`platform`], [`workload`] and [`sim`] model the cloud: datacenters, hosts,
//!   VMs, replicas, the network, Poisson query arrivals and a discrete-event
//!   loop that serves queries FIFO per VM.
//! * [`replication`] is the replica manager: initial placement, action
//!   validation, VM-aggregating host selection and the batching protocol.
//! * [`agent`] is the learning side: state encoding, a small Q-network,
//!   uniform replay, a target network and masked epsilon-greedy selection,
//!   plus the non-learning baseline policies.
//!
//! [`accounting`] holds the per-query cost, energy and reward functions and
//! [`harness`] drives complete experiments from the command line.

pub mod accounting;
pub mod agent;
pub mod error;
pub mod harness;
pub mod platform;
pub mod replication;
pub mod seed;
pub mod sim;
pub mod workload;

pub use error::{Error, Result};
