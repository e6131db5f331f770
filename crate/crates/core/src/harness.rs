//! Experiment driver: runs a policy over a scenario in episodes and writes
//! the report, per-query CSV, training curve and checkpoint.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::accounting::{EnergyMode, RewardWeights};
use crate::agent::baseline::{GreedyNearest, NeverReplicate, RandomValid};
use crate::agent::dqn::{Checkpoint, CurvePoint, DqnAgent, DqnConfig};
use crate::agent::state::state_dim;
use crate::agent::Policy;
use crate::error::{Error, Result};
use crate::platform::{parse_scenario, PlatformState};
use crate::replication::place_all;
use crate::seed::{self, derive_seed};
use crate::sim::{self, NoObserver, QueryOutcome, RunReport, SimConfig};
use crate::workload::{generate_stream, Horizon, WorkloadConfig};

pub const DEFAULT_EPISODE_QUERIES: u64 = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Never,
    Random,
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Mode {
    Train,
    Eval,
    Baseline(Baseline),
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Train => f.write_str("train"),
            Mode::Eval => f.write_str("eval"),
            Mode::Baseline(Baseline::Never) => f.write_str("baseline:never"),
            Mode::Baseline(Baseline::Random) => f.write_str("baseline:random"),
            Mode::Baseline(Baseline::Nearest) => f.write_str("baseline:nearest"),
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "train" => Mode::Train,
            "eval" => Mode::Eval,
            "baseline:never" => Mode::Baseline(Baseline::Never),
            "baseline:random" => Mode::Baseline(Baseline::Random),
            "baseline:nearest" => Mode::Baseline(Baseline::Nearest),
            other => {
                return Err(Error::Config(format!(
                    "unknown mode {other:?} (expected train, eval, baseline:never, baseline:random or baseline:nearest)"
                )))
            }
        })
    }
}

impl From<Mode> for String {
    fn from(m: Mode) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for Mode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: PathBuf,
    pub seed: u64,
    pub mode: Mode,
    pub weights: RewardWeights,
    pub energy_mode: EnergyMode,
    /// Total number of queries over all episodes.
    pub queries: u64,
    /// Queries per episode; the platform is rebuilt at each episode start.
    pub episode_queries: u64,
    pub batch_period: f64,
    pub extra_replicas: bool,
    /// Where a training run saves its weights; defaults to
    /// `<out>/checkpoint.json`.
    pub checkpoint: Option<PathBuf>,
    /// Weights evaluated by `eval`.
    pub load: Option<PathBuf>,
    pub out: PathBuf,
    pub trace: bool,
    pub decision_log: bool,
    /// `None` means the defaults scaled to the query budget.
    pub agent: Option<DqnConfig>,
}

impl RunConfig {
    pub fn new(scenario: impl Into<PathBuf>, mode: Mode, out: impl Into<PathBuf>) -> Self {
        let sim = SimConfig::default();
        RunConfig {
            scenario: scenario.into(),
            seed: 42,
            mode,
            weights: sim.weights,
            energy_mode: sim.energy_mode,
            queries: 100_000,
            episode_queries: DEFAULT_EPISODE_QUERIES,
            batch_period: sim.batch_period,
            extra_replicas: false,
            checkpoint: None,
            load: None,
            out: out.into(),
            trace: false,
            decision_log: false,
            agent: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.queries == 0 {
            return Err(Error::Config("query budget must be positive".into()));
        }
        if self.episode_queries == 0 {
            return Err(Error::Config("episode length must be positive".into()));
        }
        RewardWeights::new(self.weights.alpha, self.weights.beta)?;
        match self.mode {
            Mode::Train => {
                if self.load.is_some() {
                    return Err(Error::Config("--load is only used by eval".into()));
                }
            }
            Mode::Eval => {
                if self.load.is_none() {
                    return Err(Error::Config("eval needs --load <checkpoint>".into()));
                }
                if self.checkpoint.is_some() || self.agent.is_some() {
                    return Err(Error::Config("eval does not take training options".into()));
                }
            }
            Mode::Baseline(_) => {
                if self.checkpoint.is_some() || self.load.is_some() || self.agent.is_some() {
                    return Err(Error::Config("baselines do not take agent options".into()));
                }
            }
        }
        Ok(())
    }

    fn sim_config(&self) -> SimConfig {
        SimConfig {
            weights: self.weights,
            energy_mode: self.energy_mode,
            batch_period: self.batch_period,
            extra_replicas: self.extra_replicas,
        }
    }

    fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join("checkpoint.json"))
    }
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario_sha256: String,
    pub seed: u64,
    pub mode: Mode,
    pub policy: String,
    pub alpha: f64,
    pub beta: f64,
    pub energy_mode: EnergyMode,
    pub episodes: u64,
    pub episode_queries: u64,
    pub train_steps: u64,
    pub final_epsilon: Option<f64>,
    #[serde(flatten)]
    pub summary: RunReport,
}

/// Everything a run produced, with per-query detail still in memory.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub report: ExperimentReport,
    /// Episode index of each entry of `report.summary.outcomes`.
    pub outcome_episodes: Vec<u64>,
    /// Episode index of each entry of `report.summary.decision_log`.
    pub decision_episodes: Vec<u64>,
    pub curve: Vec<CurvePoint>,
    pub checkpoint: Option<Checkpoint>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Run the experiment in memory without touching the output directory.
pub fn simulate(config: &RunConfig) -> Result<Experiment> {
    config.validate()?;
    let bytes = read(&config.scenario)?;
    let hash = sha256_hex(&bytes);
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| Error::Validation(format!("{}: not UTF-8: {e}", config.scenario.display())))?;
    let template = parse_scenario(text)?;
    let n = template.n_datacenters();
    let input = state_dim(n, config.extra_replicas);

    let mut agent: Option<DqnAgent> = None;
    let mut policy: Box<dyn Policy> = match config.mode {
        Mode::Train => {
            let cfg = config
                .agent
                .clone()
                .unwrap_or_else(|| DqnConfig::for_training_queries(config.queries));
            agent = Some(DqnAgent::new(cfg, input, n + 1, config.seed)?);
            Box::new(NeverReplicate)
        }
        Mode::Eval => {
            let path = config.load.as_ref().expect("validated");
            let ckpt = Checkpoint::load(path)?;
            if ckpt.scenario_sha256 != hash {
                return Err(Error::HashMismatch {
                    first: ckpt.scenario_sha256,
                    first_path: path.clone(),
                    second: hash,
                    second_path: config.scenario.clone(),
                });
            }
            let net = ckpt.network()?;
            if net.input_dim() != input || net.output_dim() != n + 1 {
                return Err(Error::Checkpoint(format!(
                    "{}: network shape {:?} does not fit a state of {input} features and {} actions",
                    path.display(),
                    net.sizes(),
                    n + 1
                )));
            }
            agent = Some(DqnAgent::evaluator(net, config.seed)?);
            Box::new(NeverReplicate)
        }
        Mode::Baseline(Baseline::Never) => Box::new(NeverReplicate),
        Mode::Baseline(Baseline::Random) => Box::new(RandomValid::new(derive_seed(config.seed, seed::POLICY))),
        Mode::Baseline(Baseline::Nearest) => Box::new(GreedyNearest),
    };
    let policy: &mut dyn Policy = match agent.as_mut() {
        Some(a) => a,
        None => policy.as_mut(),
    };

    let sim_config = config.sim_config();
    let mut total = RunReport::default();
    let mut outcome_episodes = Vec::new();
    let mut decision_episodes = Vec::new();
    let mut remaining = config.queries;
    let mut episode = 0u64;
    while remaining > 0 {
        let len = remaining.min(config.episode_queries);
        let mut state: PlatformState = template.clone();
        place_all(&mut state)?;
        let workload = WorkloadConfig {
            seed: derive_seed(config.seed, &format!("{}/{episode}", seed::WORKLOAD)),
            horizon: Horizon::Queries(len),
            exec_cycles: state.exec_cycles.clone(),
        };
        workload.validate()?;
        let offset = config.queries - remaining;
        let stream = generate_stream(&workload, &state.clients).map(move |mut q| {
            q.id += offset;
            q
        });
        let mut report = sim::run(&mut state, stream, policy, &sim_config, &mut NoObserver)?;
        if !config.decision_log {
            report.decision_log.clear();
        }
        outcome_episodes.extend(std::iter::repeat_n(episode, report.outcomes.len()));
        decision_episodes.extend(std::iter::repeat_n(episode, report.decision_log.len()));
        log::info!(
            "episode {episode}: {} queries, mean reward {:.4}, {} penalties",
            report.queries,
            report.mean_reward,
            report.penalties
        );
        total.absorb(report);
        remaining -= len;
        episode += 1;
    }

    let policy_name = policy.name();
    let (train_steps, final_epsilon, curve, checkpoint) = match &agent {
        Some(a) if config.mode == Mode::Train => (
            a.train_steps(),
            Some(a.epsilon()),
            a.curve().to_vec(),
            Some(Checkpoint::new(a.network(), &hash, config.seed)),
        ),
        _ => (0, None, Vec::new(), None),
    };
    Ok(Experiment {
        report: ExperimentReport {
            scenario_sha256: hash,
            seed: config.seed,
            mode: config.mode,
            policy: policy_name,
            alpha: config.weights.alpha,
            beta: config.weights.beta,
            energy_mode: config.energy_mode,
            episodes: episode,
            episode_queries: config.episode_queries,
            train_steps,
            final_epsilon,
            summary: total,
        },
        outcome_episodes,
        decision_episodes,
        curve,
        checkpoint,
    })
}

/// Run and write all artifacts into `config.out`.
pub fn run_experiment(config: &RunConfig) -> Result<Experiment> {
    let exp = simulate(config)?;
    write_artifacts(config, &exp)?;
    Ok(exp)
}

/// Paths of the files a run writes.
pub struct ArtifactPaths {
    pub report: PathBuf,
    pub queries: PathBuf,
    pub curve: PathBuf,
    pub decisions: PathBuf,
    pub trace: PathBuf,
}

impl ArtifactPaths {
    pub fn in_dir(out: &Path) -> Self {
        ArtifactPaths {
            report: out.join("report.json"),
            queries: out.join("queries.csv"),
            curve: out.join("curve.csv"),
            decisions: out.join("decisions.csv"),
            trace: out.join("trace.csv"),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// A CSV writer whose file starts with a `# scenario=… seed=…` line.
fn csv_writer(path: &Path, hash: &str, seed: &str) -> Result<csv::Writer<BufWriter<File>>> {
    let mut file = create(path)?;
    writeln!(file, "# scenario={hash} seed={seed}").map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish_csv(w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<()> {
    let mut inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

pub fn write_artifacts(config: &RunConfig, exp: &Experiment) -> Result<()> {
    std::fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
    let paths = ArtifactPaths::in_dir(&config.out);
    let r = &exp.report;
    let hash = r.scenario_sha256.as_str();
    let seed = r.seed.to_string();

    let mut json = serde_json::to_string_pretty(r)?;
    json.push('\n');
    std::fs::write(&paths.report, json).map_err(|e| Error::io(&paths.report, e))?;

    let mut w = csv_writer(&paths.queries, hash, &seed)?;
    w.write_record([
        "query_id",
        "client",
        "dc",
        "host",
        "vm",
        "t_arrival_s",
        "rt_s",
        "rto_s",
        "penalty",
        "cpu_cost",
        "storage_cost",
        "bw_cost",
        "energy_j",
        "reward",
        "action_taken",
        "episode",
    ])?;
    for (o, ep) in r.summary.outcomes.iter().zip(&exp.outcome_episodes) {
        w.write_record(query_row(o, *ep))?;
    }
    finish_csv(w, &paths.queries)?;

    if config.mode == Mode::Train {
        let mut w = csv_writer(&paths.curve, hash, &seed)?;
        w.write_record(["step", "loss", "epsilon", "mean_reward_window"])?;
        for p in &exp.curve {
            w.write_record([
                p.step.to_string(),
                p.loss.to_string(),
                p.epsilon.to_string(),
                p.mean_reward_window.to_string(),
            ])?;
        }
        finish_csv(w, &paths.curve)?;
        if let Some(ckpt) = &exp.checkpoint {
            let path = config.checkpoint_path();
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            ckpt.save(&path)?;
        }
    }

    if config.decision_log {
        let mut w = csv_writer(&paths.decisions, hash, &seed)?;
        w.write_record([
            "time",
            "datum",
            "action",
            "valid",
            "source_vm",
            "target_host",
            "trigger",
            "episode",
        ])?;
        for (d, ep) in r.summary.decision_log.iter().zip(&exp.decision_episodes) {
            w.write_record([
                d.time.to_string(),
                d.client.to_string(),
                d.requested.to_string(),
                d.valid.to_string(),
                d.source_vm.map(|v| v.to_string()).unwrap_or_default(),
                d.target_host.map(|h| h.to_string()).unwrap_or_default(),
                d.trigger.to_string(),
                ep.to_string(),
            ])?;
        }
        finish_csv(w, &paths.decisions)?;
    }

    if config.trace {
        let mut w = csv_writer(&paths.trace, hash, &seed)?;
        w.write_record(["id", "client", "t_arrival_s", "exec_cycles", "episode"])?;
        for (o, ep) in r.summary.outcomes.iter().zip(&exp.outcome_episodes) {
            let q = &o.query;
            w.write_record([
                q.id.to_string(),
                q.client.to_string(),
                q.arrival_time.to_string(),
                q.exec_cycles.to_string(),
                ep.to_string(),
            ])?;
        }
        finish_csv(w, &paths.trace)?;
    }
    Ok(())
}

fn query_row(o: &QueryOutcome, episode: u64) -> [String; 16] {
    let v = o.served_by;
    [
        o.query.id.to_string(),
        o.query.client.to_string(),
        v.dc.to_string(),
        v.host.to_string(),
        v.to_string(),
        o.query.arrival_time.to_string(),
        o.response_time.to_string(),
        o.rto.to_string(),
        o.penalty.to_string(),
        o.cpu_cost.to_string(),
        o.storage_cost.to_string(),
        o.bandwidth_cost.to_string(),
        o.energy_j.to_string(),
        o.reward.to_string(),
        o.action_taken.to_string(),
        episode.to_string(),
    ]
}

/// Parse `seeds=a..b` (inclusive).
pub fn parse_sweep(spec: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("sweep must look like seeds=a..b, got {spec:?}"));
    let range = spec.strip_prefix("seeds=").ok_or_else(bad)?;
    let (a, b) = range.split_once("..").ok_or_else(bad)?;
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    if b < a {
        return Err(bad());
    }
    Ok((a..=b).collect())
}

/// Run one experiment per seed concurrently, each into `<out>/seed-<n>/`.
pub fn run_sweep(config: &RunConfig, seeds: &[u64]) -> Result<Vec<Experiment>> {
    if config.checkpoint.is_some() {
        return Err(Error::Config(
            "a sweep writes one checkpoint per seed directory; drop --checkpoint".into(),
        ));
    }
    seeds
        .par_iter()
        .map(|&s| {
            let mut c = config.clone();
            c.seed = s;
            c.out = config.out.join(format!("seed-{s}"));
            run_experiment(&c)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub report: String,
    pub policy: String,
    pub seed: u64,
    pub mean_reward: f64,
    pub penalties: u64,
    pub energy_j: f64,
    pub total_cost: f64,
    pub d_mean_reward: f64,
    pub d_penalties: i64,
    pub d_energy_j: f64,
    pub d_total_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub scenario_sha256: String,
    pub rows: Vec<ComparisonRow>,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario {}", self.scenario_sha256)?;
        writeln!(
            f,
            "{:<24} {:>6} {:>14} {:>10} {:>14} {:>14} {:>12} {:>10}",
            "policy", "seed", "mean_reward", "penalties", "energy_j", "total_cost", "d_reward", "d_pen"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<24} {:>6} {:>14.6} {:>10} {:>14.4} {:>14.6} {:>12.6} {:>10}",
                r.policy, r.seed, r.mean_reward, r.penalties, r.energy_j, r.total_cost, r.d_mean_reward, r.d_penalties
            )?;
        }
        Ok(())
    }
}

/// Tabulate reports against the first one. All reports must come from the
/// same scenario file contents.
pub fn compare_runs(paths: &[PathBuf]) -> Result<Comparison> {
    if paths.len() < 2 {
        return Err(Error::Config("compare needs at least two reports".into()));
    }
    let mut reports = Vec::with_capacity(paths.len());
    for p in paths {
        let bytes = read(p)?;
        let r: ExperimentReport = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Validation(format!("{}: not a run report: {e}", p.display())))?;
        reports.push(r);
    }
    let base = &reports[0];
    for (r, p) in reports.iter().zip(paths).skip(1) {
        if r.scenario_sha256 != base.scenario_sha256 {
            return Err(Error::HashMismatch {
                first: base.scenario_sha256.clone(),
                first_path: paths[0].clone(),
                second: r.scenario_sha256.clone(),
                second_path: p.clone(),
            });
        }
    }
    let b = &base.summary;
    let rows = reports
        .iter()
        .zip(paths)
        .map(|(r, p)| {
            let s = &r.summary;
            ComparisonRow {
                report: p.display().to_string(),
                policy: r.policy.clone(),
                seed: r.seed,
                mean_reward: s.mean_reward,
                penalties: s.penalties,
                energy_j: s.energy_j,
                total_cost: s.total_cost,
                d_mean_reward: s.mean_reward - b.mean_reward,
                d_penalties: s.penalties as i64 - b.penalties as i64,
                d_energy_j: s.energy_j - b.energy_j,
                d_total_cost: s.total_cost - b.total_cost,
            }
        })
        .collect();
    Ok(Comparison {
        scenario_sha256: base.scenario_sha256.clone(),
        rows,
    })
}

pub fn write_comparison(cmp: &Comparison, path: &Path) -> Result<()> {
    let seeds: Vec<String> = cmp.rows.iter().map(|r| r.seed.to_string()).collect();
    let mut w = csv_writer(path, &cmp.scenario_sha256, &seeds.join(","))?;
    for r in &cmp.rows {
        w.serialize(r)?;
    }
    finish_csv(w, path)
}
