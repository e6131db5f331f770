//! Poisson query streams.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::platform::ClientSpec;

/// One client request for its datum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: u64,
    pub client: usize,
    /// Seconds.
    pub arrival_time: f64,
    /// Execution demand in cycles; always positive.
    pub exec_cycles: f64,
}

/// Distribution of per-query execution demand, in cycles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExecCycles {
    Fixed { cycles: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Parameters of the underlying normal of ln(cycles).
    Lognormal { mu: f64, sigma: f64 },
}

impl Default for ExecCycles {
    /// Median 10^8 cycles with a moderate right tail.
    fn default() -> Self {
        ExecCycles::Lognormal {
            mu: 1e8_f64.ln(),
            sigma: 0.5,
        }
    }
}

impl ExecCycles {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ExecCycles::Fixed { cycles } => cycles.is_finite() && cycles > 0.0,
            ExecCycles::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo,
            ExecCycles::Lognormal { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("exec cycle distribution parameters are invalid: {self:?}")))
        }
    }

    fn sampler(&self) -> CycleSampler {
        match *self {
            ExecCycles::Fixed { cycles } => CycleSampler::Fixed(cycles),
            ExecCycles::Uniform { lo, hi } => {
                CycleSampler::Uniform(Uniform::new(lo, hi).expect("validated bounds"))
            }
            ExecCycles::Lognormal { mu, sigma } => {
                CycleSampler::LogNormal(LogNormal::new(mu, sigma).expect("validated parameters"))
            }
        }
    }
}

#[derive(Debug, Clone)]
enum CycleSampler {
    Fixed(f64),
    Uniform(Uniform<f64>),
    LogNormal(LogNormal<f64>),
}

impl CycleSampler {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let x = match self {
            CycleSampler::Fixed(c) => *c,
            CycleSampler::Uniform(d) => d.sample(rng),
            CycleSampler::LogNormal(d) => d.sample(rng),
        };
        // a lognormal draw can underflow to zero in the far left tail
        x.max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    /// Total number of queries over all clients.
    Queries(u64),
    /// Queries arriving strictly before this time.
    Seconds(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadConfig {
    pub seed: u64,
    pub horizon: Horizon,
    pub exec_cycles: ExecCycles,
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.horizon {
            Horizon::Queries(n) => n > 0,
            Horizon::Seconds(t) => t.is_finite() && t > 0.0,
        };
        if !ok {
            return Err(Error::Validation("workload horizon must be positive".into()));
        }
        self.exec_cycles.validate()
    }
}

/// Inverse-CDF exponential sample for a uniform draw `u` in (0, 1).
pub fn interarrival_from_uniform(u: f64, lambda: f64) -> f64 {
    -u.ln() / lambda
}

/// Exponential interarrival time with mean `1 / lambda`; always positive.
pub fn next_interarrival<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> f64 {
    let u: f64 = rng.sample(Open01);
    interarrival_from_uniform(u, lambda)
}

struct ClientStream {
    rng: ChaCha8Rng,
    rate: f64,
    sampler: CycleSampler,
    next_arrival: f64,
    next_cycles: f64,
}

impl ClientStream {
    fn advance(&mut self) {
        let dt = next_interarrival(&mut self.rng, self.rate);
        let t = self.next_arrival + dt;
        // keep arrivals strictly increasing even when dt is below one ulp
        self.next_arrival = if t > self.next_arrival { t } else { self.next_arrival.next_up() };
        self.next_cycles = self.sampler.sample(&mut self.rng);
    }
}

/// Time-ordered merge of per-client Poisson streams.
///
/// Each client draws from its own ChaCha stream keyed by the client index, so
/// adding a client leaves the other clients' queries unchanged. Simultaneous
/// arrivals are emitted in client order.
pub struct QueryStream {
    clients: Vec<ClientStream>,
    horizon: Horizon,
    emitted: u64,
}

impl Iterator for QueryStream {
    type Item = Query;

    fn next(&mut self) -> Option<Query> {
        if let Horizon::Queries(n) = self.horizon {
            if self.emitted >= n {
                return None;
            }
        }
        let (client, stream) = self
            .clients
            .iter_mut()
            .enumerate()
            .min_by(|a, b| a.1.next_arrival.total_cmp(&b.1.next_arrival))?;
        if let Horizon::Seconds(end) = self.horizon {
            if stream.next_arrival >= end {
                return None;
            }
        }
        let query = Query {
            id: self.emitted,
            client,
            arrival_time: stream.next_arrival,
            exec_cycles: stream.next_cycles,
        };
        stream.advance();
        self.emitted += 1;
        Some(query)
    }
}

pub fn generate_stream(config: &WorkloadConfig, clients: &[ClientSpec]) -> QueryStream {
    let streams = clients
        .iter()
        .enumerate()
        .map(|(l, c)| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(l as u64);
            let mut s = ClientStream {
                rng,
                rate: c.query_rate,
                sampler: config.exec_cycles.sampler(),
                next_arrival: 0.0,
                next_cycles: 0.0,
            };
            s.advance();
            s
        })
        .collect();
    QueryStream {
        clients: streams,
        horizon: config.horizon,
        emitted: 0,
    }
}
