//! Experiment driver: builds traces, runs every (policy, capacity, seed) cell
//! and turns the outcomes into result tables.
//!
//! Agents are pretrained offline on the first part of each trace and then run
//! online over the remainder; baselines see only the remainder. Every policy
//! starts the evaluated segment with an empty cache.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::{pretrain_offline, DrlPolicy, EpsilonSchedule, Learner, PretrainOptions};
use crate::baselines::{Fifo, Lfu, Lru, NeverReplace};
use crate::cache::{run_requests, Policy, RunOptions, RunReport, WindowPoint};
use crate::dqn::{dqn_agent, DqnConfig};
use crate::error::{Error, Result};
use crate::trace::{generate_dynamic_trace, generate_static_trace, ContentId, DynamicTraceParams, PopularityModel, Trace};
use crate::wolpertinger::{wolpertinger_agent, AgentConfig, Neighbors};

pub const RESULTS_HEADER: [&str; 8] = [
    "experiment",
    "seed",
    "policy",
    "capacity",
    "window_end",
    "chr",
    "evals_per_epoch",
    "sec_per_epoch",
];

pub const DEFAULT_K_FRACTION: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    CapacitySweep,
    DynamicPopularity,
    WolpertingerVsDqn,
    Runtime,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::CapacitySweep => "capacity-sweep",
            ExperimentKind::DynamicPopularity => "dynamic-popularity",
            ExperimentKind::WolpertingerVsDqn => "wolpertinger-vs-dqn",
            ExperimentKind::Runtime => "runtime",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "capacity-sweep" => Ok(ExperimentKind::CapacitySweep),
            "dynamic-popularity" => Ok(ExperimentKind::DynamicPopularity),
            "wolpertinger-vs-dqn" => Ok(ExperimentKind::WolpertingerVsDqn),
            "runtime" => Ok(ExperimentKind::Runtime),
            other => Err(Error::invalid(format!("unknown experiment kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    Lru,
    Lfu,
    Fifo,
    Null,
    Drl { k_fraction: f64 },
    Dqn,
}

impl PolicyKind {
    pub fn is_agent(&self) -> bool {
        matches!(self, PolicyKind::Drl { .. } | PolicyKind::Dqn)
    }

    /// Parse `lru | lfu | fifo | null | dqn | drl | drl:<fraction>`; a bare
    /// `drl` takes `default_k`.
    pub fn parse(s: &str, default_k: f64) -> Result<Self> {
        let s = s.trim();
        match s {
            "lru" => Ok(PolicyKind::Lru),
            "lfu" => Ok(PolicyKind::Lfu),
            "fifo" => Ok(PolicyKind::Fifo),
            "null" => Ok(PolicyKind::Null),
            "dqn" => Ok(PolicyKind::Dqn),
            "drl" => Ok(PolicyKind::Drl { k_fraction: default_k }),
            _ => match s.strip_prefix("drl:") {
                Some(f) => Ok(PolicyKind::Drl {
                    k_fraction: parse_value("k fraction", f)?,
                }),
                None => Err(Error::invalid(format!("unknown policy {s:?}"))),
            },
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::Lru => f.write_str("lru"),
            PolicyKind::Lfu => f.write_str("lfu"),
            PolicyKind::Fifo => f.write_str("fifo"),
            PolicyKind::Null => f.write_str("null"),
            PolicyKind::Dqn => f.write_str("dqn"),
            PolicyKind::Drl { k_fraction } => write!(f, "drl:{k_fraction}"),
        }
    }
}

/// Learner hyperparameters settable from the command line or a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    pub gamma: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub tau: f64,
    pub epsilon: EpsilonSchedule,
    pub reward_weight: f64,
    pub horizon: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub dqn_lr: f64,
}

impl Default for AgentParams {
    fn default() -> Self {
        let wolp = AgentConfig::new(1, 0);
        let dqn = DqnConfig::new(1, 0);
        let l = wolp.learning;
        Self {
            gamma: l.gamma,
            buffer_capacity: l.buffer_capacity,
            batch_size: l.batch_size,
            tau: l.tau,
            epsilon: l.epsilon,
            reward_weight: l.reward_weight,
            horizon: l.horizon,
            actor_lr: wolp.actor_lr,
            critic_lr: wolp.critic_lr,
            dqn_lr: dqn.learning_rate,
        }
    }
}

impl AgentParams {
    pub fn wolpertinger(&self, capacity: usize, k_fraction: f64, seed: u64) -> AgentConfig {
        let mut config = AgentConfig::new(capacity, seed);
        self.fill_learning(&mut config.learning);
        config.neighbors = Neighbors::Fraction(k_fraction);
        config.actor_lr = self.actor_lr;
        config.critic_lr = self.critic_lr;
        config
    }

    pub fn dqn(&self, capacity: usize, seed: u64) -> DqnConfig {
        let mut config = DqnConfig::new(capacity, seed);
        self.fill_learning(&mut config.learning);
        config.learning_rate = self.dqn_lr;
        config
    }

    fn fill_learning(&self, l: &mut crate::agent::LearningConfig) {
        l.gamma = self.gamma;
        l.buffer_capacity = self.buffer_capacity;
        l.batch_size = self.batch_size;
        l.tau = self.tau;
        l.epsilon = self.epsilon;
        l.reward_weight = self.reward_weight;
        l.horizon = self.horizon;
    }

    /// Apply one `key=value` setting; returns false if the key is not a learner key.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "gamma" => self.gamma = parse_value(key, value)?,
            "buffer_capacity" => self.buffer_capacity = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "tau" => self.tau = parse_value(key, value)?,
            "epsilon_start" => self.epsilon.start = parse_value(key, value)?,
            "epsilon_end" => self.epsilon.end = parse_value(key, value)?,
            "epsilon_decay_epochs" => self.epsilon.decay_epochs = parse_value(key, value)?,
            "reward_weight" => self.reward_weight = parse_value(key, value)?,
            "horizon" => self.horizon = parse_value(key, value)?,
            "actor_lr" => self.actor_lr = parse_value(key, value)?,
            "critic_lr" => self.critic_lr = parse_value(key, value)?,
            "dqn_lr" => self.dqn_lr = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("cannot parse {key} value {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub num_contents: usize,
    pub zipf: f64,
    pub requests: usize,
    /// Regime length of dynamic traces; `None` means `requests / 5`.
    pub change_interval: Option<usize>,
    pub exponent_range: (f64, f64),
    pub capacities: Vec<usize>,
    pub policies: Vec<PolicyKind>,
    pub seeds: Vec<u64>,
    pub window: usize,
    /// Leading share of each trace used for offline agent training.
    pub pretrain_fraction: f64,
    /// Decision epochs timed per agent in the runtime experiment.
    pub timed_decisions: u64,
    pub agent: AgentParams,
    /// Directory for trained agent checkpoints, one subdirectory per cell.
    pub checkpoint_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    /// Desk-scale defaults for `kind`.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let mut spec = Self {
            kind,
            num_contents: 500,
            zipf: 1.3,
            requests: 20_000,
            change_interval: None,
            exponent_range: (0.8, 1.5),
            capacities: vec![25],
            policies: vec![PolicyKind::Lru, PolicyKind::Lfu, PolicyKind::Fifo, PolicyKind::Drl {
                k_fraction: DEFAULT_K_FRACTION,
            }],
            seeds: (1..=5).collect(),
            window: 1000,
            pretrain_fraction: 0.2,
            timed_decisions: 1000,
            agent: AgentParams::default(),
            checkpoint_dir: None,
            out: None,
        };
        match kind {
            ExperimentKind::CapacitySweep => spec.capacities = vec![1, 5, 25, 50, 150, 300, 500],
            ExperimentKind::DynamicPopularity => {}
            ExperimentKind::WolpertingerVsDqn => {
                spec.capacities = vec![5, 25, 50];
                spec.policies = vec![
                    PolicyKind::Dqn,
                    PolicyKind::Drl { k_fraction: 0.15 },
                    PolicyKind::Drl { k_fraction: 0.05 },
                ];
            }
            ExperimentKind::Runtime => {
                spec.num_contents = 5000;
                spec.capacities = vec![300];
                spec.seeds = vec![1];
                spec.policies = vec![
                    PolicyKind::Dqn,
                    PolicyKind::Drl { k_fraction: 0.15 },
                    PolicyKind::Drl { k_fraction: 0.05 },
                ];
            }
        }
        spec
    }

    /// Switch trace parameters to the full-size workload (5000 contents, 10000 requests).
    pub fn full_scale(mut self) -> Self {
        self.num_contents = 5000;
        self.requests = 10_000;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacities.is_empty() || self.policies.is_empty() || self.seeds.is_empty() {
            return Err(Error::invalid("capacities, policies and seeds must be non-empty"));
        }
        if self.capacities.contains(&0) {
            return Err(Error::invalid("capacities must be positive"));
        }
        if self.num_contents == 0 || self.requests == 0 || self.window == 0 {
            return Err(Error::invalid("num_contents, requests and window must be positive"));
        }
        if !(0.0..1.0).contains(&self.pretrain_fraction) {
            return Err(Error::invalid("pretrain fraction must be in [0, 1)"));
        }
        Ok(())
    }

    /// Apply one `key=value` setting (config files and CLI share these keys).
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        if self.agent.apply(key, value)? {
            return Ok(());
        }
        match key {
            "experiment" => self.kind = value.trim().parse()?,
            "num_contents" | "num-contents" => self.num_contents = parse_value(key, value)?,
            "zipf" => self.zipf = parse_value(key, value)?,
            "requests" => self.requests = parse_value(key, value)?,
            "change_interval" => self.change_interval = Some(parse_value(key, value)?),
            "capacity" | "capacities" => self.capacities = parse_list(key, value)?,
            "policy" | "policies" => {
                self.policies = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|p| PolicyKind::parse(p, DEFAULT_K_FRACTION))
                    .collect::<Result<_>>()?
            }
            "k_frac" | "k-frac" => {
                let k: f64 = parse_value(key, value)?;
                for p in &mut self.policies {
                    if let PolicyKind::Drl { k_fraction } = p {
                        *k_fraction = k;
                    }
                }
            }
            "seeds" => self.seeds = parse_list(key, value)?,
            "window" => self.window = parse_value(key, value)?,
            "pretrain_fraction" => self.pretrain_fraction = parse_value(key, value)?,
            "timed_decisions" => self.timed_decisions = parse_value(key, value)?,
            "checkpoint_dir" => self.checkpoint_dir = Some(PathBuf::from(value.trim())),
            "out" => self.out = Some(PathBuf::from(value.trim())),
            other => return Err(Error::invalid(format!("unknown setting {other:?}"))),
        }
        Ok(())
    }

    /// Apply every `key=value` line of a config file; `#` starts a comment.
    pub fn apply_config(&mut self, text: &str) -> Result<()> {
        for (key, value) in parse_config(text)? {
            self.apply(&key, &value)?;
        }
        Ok(())
    }

    pub fn is_dynamic(&self) -> bool {
        self.kind == ExperimentKind::DynamicPopularity
    }

    pub fn dynamic_params(&self) -> DynamicTraceParams {
        let mut params = DynamicTraceParams::new(self.num_contents, self.requests);
        if let Some(interval) = self.change_interval {
            params.change_interval = interval;
        }
        params.exponent_range = self.exponent_range;
        params
    }

    pub fn make_trace(&self, seed: u64) -> Result<Trace> {
        if self.is_dynamic() {
            generate_dynamic_trace(&self.dynamic_params(), seed)
        } else {
            let model = PopularityModel::identity(self.num_contents, self.zipf)?;
            generate_static_trace(&model, self.requests, seed)
        }
    }

    /// Index where the evaluated segment starts.
    pub fn split_point(&self, len: usize) -> usize {
        (len as f64 * self.pretrain_fraction).floor() as usize
    }
}

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(i + 1, format!("expected key=value, got {line:?}")))?;
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub seed: u64,
    pub policy: String,
    pub capacity: usize,
    pub window_end: usize,
    pub chr: f64,
    pub evals_per_epoch: f64,
    pub sec_per_epoch: f64,
}

/// One simulated (policy, capacity, seed) cell over the evaluated segment.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub policy: String,
    pub seed: u64,
    pub capacity: usize,
    pub requests: usize,
    pub chr: f64,
    pub series: Vec<WindowPoint>,
    pub decision_epochs: u64,
    pub evals_per_epoch: f64,
    pub sec_per_epoch: f64,
}

impl CellResult {
    fn from_report(policy: &PolicyKind, seed: u64, capacity: usize, requests: usize, report: &RunReport) -> Self {
        Self {
            policy: policy.to_string(),
            seed,
            capacity,
            requests,
            chr: report.chr(),
            series: report.hit_rate.series().to_vec(),
            decision_epochs: report.decision_epochs,
            evals_per_epoch: report.eval_stats.map_or(0.0, |e| e.mean()),
            sec_per_epoch: report.sec_per_decision(),
        }
    }

    pub fn summary_row(&self, experiment: ExperimentKind) -> ResultRow {
        ResultRow {
            experiment: experiment.to_string(),
            seed: self.seed,
            policy: self.policy.clone(),
            capacity: self.capacity,
            window_end: self.requests,
            chr: self.chr,
            evals_per_epoch: self.evals_per_epoch,
            sec_per_epoch: self.sec_per_epoch,
        }
    }

    pub fn series_rows(&self, experiment: ExperimentKind) -> Vec<ResultRow> {
        self.series
            .iter()
            .map(|p| ResultRow {
                window_end: p.end,
                chr: p.chr,
                ..self.summary_row(experiment)
            })
            .collect()
    }

    /// Mean windowed CHR over windows that start at or after request `from`
    /// of the evaluated segment.
    pub fn tail_chr(&self, from: usize) -> f64 {
        let mut start = 0;
        let mut tail = Vec::new();
        for p in &self.series {
            if start >= from {
                tail.push(p.chr);
            }
            start = p.end;
        }
        tail.iter().sum::<f64>() / tail.len().max(1) as f64
    }
}

fn run_agent<L: Learner>(
    mut agent: DrlPolicy<L>,
    warmup: &[ContentId],
    eval: &[ContentId],
    capacity: usize,
    window: usize,
) -> Result<(RunReport, DrlPolicy<L>)> {
    if warmup.len() >= agent.config().horizon {
        pretrain_offline(&mut agent, warmup, PretrainOptions::default())?;
    }
    let options = RunOptions {
        window,
        ..RunOptions::default()
    };
    let report = run_requests(eval, capacity, &mut agent, options)?;
    Ok((report, agent))
}

fn checkpoint_path(spec: &ExperimentSpec, policy: &PolicyKind, capacity: usize, seed: u64) -> Option<PathBuf> {
    spec.checkpoint_dir
        .as_ref()
        .map(|d| d.join(format!("{}-c{capacity}-s{seed}", policy.to_string().replace(':', "_"))))
}

/// Pretrain (agents only) on the warm-up prefix, then simulate the rest.
pub fn run_cell(spec: &ExperimentSpec, trace: &Trace, capacity: usize, policy: &PolicyKind, seed: u64) -> Result<CellResult> {
    trace.require_nonempty()?;
    let split = spec.split_point(trace.len());
    let (warmup, eval) = trace.requests.split_at(split);
    let options = RunOptions {
        window: spec.window,
        ..RunOptions::default()
    };
    let baseline = |p: &mut dyn Policy| run_requests(eval, capacity, p, options);
    let report = match *policy {
        PolicyKind::Lru => baseline(&mut Lru::new())?,
        PolicyKind::Lfu => baseline(&mut Lfu::new())?,
        PolicyKind::Fifo => baseline(&mut Fifo::new())?,
        PolicyKind::Null => baseline(&mut NeverReplace)?,
        PolicyKind::Drl { k_fraction } => {
            let agent = wolpertinger_agent(spec.agent.wolpertinger(capacity, k_fraction, seed))?;
            let (report, agent) = run_agent(agent, warmup, eval, capacity, spec.window)?;
            if let Some(dir) = checkpoint_path(spec, policy, capacity, seed) {
                agent.learner().save(dir)?;
            }
            report
        }
        PolicyKind::Dqn => {
            let agent = dqn_agent(spec.agent.dqn(capacity, seed))?;
            let (report, agent) = run_agent(agent, warmup, eval, capacity, spec.window)?;
            if let Some(dir) = checkpoint_path(spec, policy, capacity, seed) {
                agent.learner().save(dir)?;
            }
            report
        }
    };
    Ok(CellResult::from_report(policy, seed, capacity, eval.len(), &report))
}

/// Every (seed, capacity, policy) cell in that order.
pub fn run_cells(spec: &ExperimentSpec) -> Result<Vec<CellResult>> {
    spec.validate()?;
    let mut cells = Vec::new();
    for &seed in &spec.seeds {
        let trace = spec.make_trace(seed)?;
        for &capacity in &spec.capacities {
            for policy in &spec.policies {
                cells.push(run_cell(spec, &trace, capacity, policy, seed)?);
            }
        }
    }
    Ok(cells)
}

/// Final CHR per cell.
pub fn run_capacity_sweep(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    Ok(run_cells(spec)?.iter().map(|c| c.summary_row(spec.kind)).collect())
}

/// Windowed CHR series per cell.
pub fn run_dynamic_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    Ok(run_cells(spec)?.iter().flat_map(|c| c.series_rows(spec.kind)).collect())
}

/// Selection cost of untrained, greedy, non-learning agents: mean value
/// evaluations and seconds per decision epoch over `timed_decisions` epochs.
pub fn run_efficiency_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &seed in &spec.seeds {
        let trace = spec.make_trace(seed)?;
        for &capacity in &spec.capacities {
            for policy in &spec.policies {
                let report = time_policy(spec, &trace.requests, capacity, policy, seed)?;
                let cell = CellResult::from_report(policy, seed, capacity, trace.len(), &report);
                rows.push(cell.summary_row(spec.kind));
            }
        }
    }
    Ok(rows)
}

fn time_policy(spec: &ExperimentSpec, requests: &[ContentId], capacity: usize, policy: &PolicyKind, seed: u64) -> Result<RunReport> {
    let options = RunOptions {
        window: spec.window,
        max_decision_epochs: Some(spec.timed_decisions),
        ..RunOptions::default()
    };
    fn frozen<L: Learner>(mut agent: DrlPolicy<L>, requests: &[ContentId], capacity: usize, options: RunOptions) -> Result<RunReport> {
        agent.set_epsilon_override(Some(0.0));
        agent.set_learning(false);
        run_requests(requests, capacity, &mut agent, options)
    }
    match *policy {
        PolicyKind::Drl { k_fraction } => {
            let agent = wolpertinger_agent(spec.agent.wolpertinger(capacity, k_fraction, seed))?;
            frozen(agent, requests, capacity, options)
        }
        PolicyKind::Dqn => frozen(dqn_agent(spec.agent.dqn(capacity, seed))?, requests, capacity, options),
        PolicyKind::Lru => run_requests(requests, capacity, &mut Lru::new(), options),
        PolicyKind::Lfu => run_requests(requests, capacity, &mut Lfu::new(), options),
        PolicyKind::Fifo => run_requests(requests, capacity, &mut Fifo::new(), options),
        PolicyKind::Null => run_requests(requests, capacity, &mut NeverReplace, options),
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    match spec.kind {
        ExperimentKind::CapacitySweep | ExperimentKind::WolpertingerVsDqn => run_capacity_sweep(spec),
        ExperimentKind::DynamicPopularity => run_dynamic_experiment(spec),
        ExperimentKind::Runtime => run_efficiency_experiment(spec),
    }
}

/// Seed-aggregated statistics for one (experiment, policy, capacity, window end).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub experiment: String,
    pub policy: String,
    pub capacity: usize,
    pub window_end: usize,
    pub seeds: usize,
    pub chr_mean: f64,
    pub chr_std: f64,
    pub evals_per_epoch: f64,
    pub sec_per_epoch: f64,
}

pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, String, usize, usize), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.experiment.clone(), r.policy.clone(), r.capacity, r.window_end))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((experiment, policy, capacity, window_end), group)| {
            let n = group.len() as f64;
            let mean = |f: fn(&ResultRow) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
            let chr_mean = mean(|r| r.chr);
            let chr_std = if group.len() > 1 {
                (group.iter().map(|r| (r.chr - chr_mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            AggregateRow {
                experiment,
                policy,
                capacity,
                window_end,
                seeds: group.len(),
                chr_mean,
                chr_std,
                evals_per_epoch: mean(|r| r.evals_per_epoch),
                sec_per_epoch: mean(|r| r.sec_per_epoch),
            }
        })
        .collect()
}

/// `<stem>.aggregate.csv` next to `path`.
pub fn aggregate_path(path: &Path) -> PathBuf {
    path.with_extension("aggregate.csv")
}

/// Write the results table to `path` and its seed aggregate beside it.
pub fn emit_results(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(aggregate_path(path))?;
    for r in aggregate(rows) {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RESULTS_HEADER {
        return Err(Error::parse(1, format!("unexpected results header {header:?}")));
    }
    let rows = r.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(kind: ExperimentKind) -> ExperimentSpec {
        let mut spec = ExperimentSpec::defaults(kind);
        spec.num_contents = 60;
        spec.requests = 3000;
        spec.capacities = vec![5];
        spec.seeds = vec![1, 2];
        spec.window = 200;
        spec.policies = vec![PolicyKind::Lru, PolicyKind::Lfu, PolicyKind::Fifo];
        spec
    }

    #[test]
    fn policy_names_round_trip() {
        for s in ["lru", "lfu", "fifo", "null", "dqn", "drl:0.05"] {
            assert_eq!(PolicyKind::parse(s, 0.15).unwrap().to_string(), s);
        }
        assert_eq!(PolicyKind::parse("drl", 0.15).unwrap(), PolicyKind::Drl { k_fraction: 0.15 });
        assert!(PolicyKind::parse("arc", 0.15).is_err());
    }

    #[test]
    fn config_overrides() {
        let mut spec = ExperimentSpec::defaults(ExperimentKind::CapacitySweep);
        spec.apply_config("# comment\ncapacity = 3,7\npolicy=lru,drl\nk_frac=0.3\ngamma=0.5\n\n")
            .unwrap();
        assert_eq!(spec.capacities, vec![3, 7]);
        assert_eq!(spec.policies[1], PolicyKind::Drl { k_fraction: 0.3 });
        assert_eq!(spec.agent.gamma, 0.5);
        assert!(spec.apply_config("bogus=1").is_err());
        assert!(matches!(spec.apply_config("no equals sign"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn capacity_equal_to_catalog_hits_everything_but_first_requests() {
        let mut spec = small_spec(ExperimentKind::CapacitySweep);
        spec.capacities = vec![60];
        spec.pretrain_fraction = 0.0;
        let trace = spec.make_trace(4).unwrap();
        let expected = 1.0 - trace.distinct_contents() as f64 / trace.len() as f64;
        for p in &spec.policies {
            let cell = run_cell(&spec, &trace, 60, p, 4).unwrap();
            assert!((cell.chr - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn baselines_monotone_in_capacity() {
        let mut spec = small_spec(ExperimentKind::CapacitySweep);
        spec.capacities = vec![1, 2, 5, 10, 20, 40];
        let rows = run_capacity_sweep(&spec).unwrap();
        for &seed in &spec.seeds {
            for p in ["lru", "lfu", "fifo"] {
                let chrs: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.seed == seed && r.policy == p)
                    .map(|r| r.chr)
                    .collect();
                assert!(chrs.windows(2).all(|w| w[0] <= w[1] + 1e-12), "{p} seed {seed}: {chrs:?}");
            }
        }
    }

    #[test]
    fn static_trace_series_matches_between_experiments() {
        let spec = small_spec(ExperimentKind::CapacitySweep);
        let trace = spec.make_trace(1).unwrap();
        let sweep = run_cell(&spec, &trace, 5, &PolicyKind::Lru, 1).unwrap();
        let mut dynamic = spec.clone();
        dynamic.kind = ExperimentKind::DynamicPopularity;
        let rows: Vec<ResultRow> = sweep.series_rows(dynamic.kind);
        assert_eq!(rows.len(), sweep.series.len());
        assert!(rows.iter().zip(&sweep.series).all(|(r, p)| r.chr == p.chr && r.window_end == p.end));
    }

    #[test]
    fn emit_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        emit_results(&[], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.trim(), RESULTS_HEADER.join(","));
        assert!(read_results(&path).unwrap().is_empty());

        let rows = run_dynamic_experiment(&small_spec(ExperimentKind::DynamicPopularity)).unwrap();
        emit_results(&rows, &path).unwrap();
        assert_eq!(read_results(&path).unwrap(), rows);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.lines().all(|l| l.split(',').count() == RESULTS_HEADER.len()));
        let agg = fs::read_to_string(aggregate_path(&path)).unwrap();
        assert!(agg.starts_with("experiment,policy,capacity,window_end,seeds,chr_mean"));
    }

    #[test]
    fn reruns_are_identical() {
        let spec = small_spec(ExperimentKind::DynamicPopularity);
        let a = run_dynamic_experiment(&spec).unwrap();
        let b = run_dynamic_experiment(&spec).unwrap();
        let chr = |rows: &[ResultRow]| rows.iter().map(|r| r.chr).collect::<Vec<_>>();
        assert_eq!(chr(&a), chr(&b));
    }
}
