//! Accuracy scoring and seeded, repeatable experiment runs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anonymize::{information_loss, microaggregate, ClusterPartition};
use crate::error::{Error, Result};
use crate::events::{
    filter_active_users, geo_origin, quantize_events, read_geo_csv, split_by_active_weeks,
    split_by_period, EventLog, GeoEvent,
};
use crate::histogram::{GroundTruth, HistogramSet};
use crate::matcher::{build_instance, match_cardinality, match_min_weight, BipartiteInstance, MatchResult};
use crate::metrics::MetricKind;
use crate::synth::{
    generate_pair, sample_population, stream_rng, OverlapSpec, PopulationSpec, SyntheticPair,
    DEFAULT_CONCENTRATION, GENERATOR,
};
use crate::transform::{aggregate_locations, popular_locations, suppress_and_renormalize, AggregationTable};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
pub const CONFIDENCE: f64 = 0.9;

const DOMAIN_REPETITION: u64 = 0x7265_7065;
const DOMAIN_BOOTSTRAP: u64 = 0x626f_6f74;
const DOMAIN_LINK: u64 = 0x6c69_6e6b;

/// Scores of one matching against the ground truth.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AccuracyReport {
    /// Users present in both sets.
    pub n_common: usize,
    pub n_correct: usize,
    /// Correct pairs over common users; `None` without common users.
    pub user_level_pct: Option<f64>,
    /// Correct pairs over output pairs; `None` for an empty output.
    pub percentage_accuracy: Option<f64>,
    pub cluster_level_pct: Option<f64>,
    pub runtime_ms: BTreeMap<String, f64>,
}

impl AccuracyReport {
    pub fn from_counts(n_correct: usize, n_output: usize, n_common: usize) -> Self {
        AccuracyReport {
            n_common,
            n_correct,
            user_level_pct: pct(n_correct, n_common),
            percentage_accuracy: pct(n_correct, n_output),
            cluster_level_pct: None,
            runtime_ms: BTreeMap::new(),
        }
    }
}

fn pct(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// Rounds a percentage to one decimal.
pub fn round_pct(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Counts matched pairs that agree with `truth`.
pub fn user_level_accuracy(
    instance: &BipartiteInstance,
    result: &MatchResult,
    truth: &GroundTruth,
) -> AccuracyReport {
    let n_correct = result
        .owner_pairs(instance)
        .iter()
        .filter(|(l, r, _)| truth.get(l) == Some(*r))
        .count();
    AccuracyReport::from_counts(n_correct, result.len(), truth.len())
}

/// Share of common users, in percent, whose match lands in the cluster of
/// their true record: a matched left owner counts when its released centroid
/// equals the centroid of the true left owner of the same right owner.
///
/// `partition` must cover the left set.
pub fn cluster_level_accuracy(
    instance: &BipartiteInstance,
    result: &MatchResult,
    truth: &GroundTruth,
    partition: &ClusterPartition,
) -> Option<f64> {
    if truth.is_empty() {
        return None;
    }
    let cluster = partition.assignment();
    let inverse = truth.inverse();
    let correct = result
        .owner_pairs(instance)
        .iter()
        .filter(|(l, r, _)| {
            let Some(true_left) = inverse.get(r) else { return false };
            match (cluster.get(l), cluster.get(true_left)) {
                (Some(&a), Some(&b)) => partition.centroids[a] == partition.centroids[b],
                _ => false,
            }
        })
        .count();
    pct(correct, truth.len())
}

/// Mean of a sample with a percentile bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Percentile bootstrap of the mean with `resamples` resamples at the given
/// two-sided confidence level.
pub fn bootstrap_mean(values: &[f64], resamples: usize, confidence: f64, seed: u64) -> Estimate {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 || resamples == 0 {
        return Estimate { mean, ci_low: mean, ci_high: mean };
    }
    let mut rng = stream_rng(seed, DOMAIN_BOOTSTRAP, 0);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) / 2.0;
    let at = |q: f64| means[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    Estimate { mean, ci_low: at(tail), ci_high: at(1.0 - tail) }
}

/// Relabels two per-period histogram sets of the same users as a matching
/// problem: the first set becomes the unlabeled side with owners `x<pos>`
/// in random order, the second keeps its owner ids.
///
/// With `overlap`, a random subset of users is kept so that `r` of them
/// appear on both sides; otherwise every user present in both sets is kept.
pub fn link_periods(
    first: &HistogramSet,
    second: &HistogramSet,
    overlap: Option<OverlapSpec>,
    seed: u64,
) -> Result<SyntheticPair> {
    let mut users: Vec<&str> = first.owners().filter(|o| second.get(o).is_some()).collect();
    users.sort_unstable();
    let spec = overlap.unwrap_or(OverlapSpec::full(users.len()));
    let OverlapSpec { n_left, n_right, r } = spec;
    if r > n_left.min(n_right) || n_left + n_right - r > users.len() {
        return Err(Error::InvalidOverlap(format!(
            "{n_left}/{n_right} users with {r} in common need {} users, {} available",
            n_left + n_right - r,
            users.len()
        )));
    }
    let mut rng = stream_rng(seed, DOMAIN_LINK, 0);
    if overlap.is_some() {
        users.shuffle(&mut rng);
    }
    let common = &users[..r];
    let mut left: Vec<&str> = common.iter().chain(&users[r..n_left]).copied().collect();
    let mut right: Vec<&str> = common.iter().chain(&users[n_left..n_left + n_right - r]).copied().collect();
    left.sort_unstable();
    left.shuffle(&mut rng);
    right.sort_unstable();

    let common: BTreeSet<&str> = common.iter().copied().collect();
    let mut pairs = Vec::with_capacity(r);
    let mut left_entries = Vec::with_capacity(n_left);
    for (pos, u) in left.iter().enumerate() {
        let id = format!("x{pos}");
        if common.contains(u) {
            pairs.push((id.clone(), u.to_string()));
        }
        left_entries.push((id, first.get(u).expect("user present").clone()));
    }
    let right_entries = right
        .iter()
        .map(|u| (u.to_string(), second.get(u).expect("user present").clone()))
        .collect();
    Ok(SyntheticPair {
        unlabeled: HistogramSet::new(left_entries, false)?,
        labeled: HistogramSet::new(right_entries, true)?,
        truth: GroundTruth::new(pairs)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    VaryN,
    VaryT,
    Overlap,
    Aggregate,
    Suppress,
    Kanon,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::VaryN => "vary_n",
            Scenario::VaryT => "vary_t",
            Scenario::Overlap => "overlap",
            Scenario::Aggregate => "aggregate",
            Scenario::Suppress => "suppress",
            Scenario::Kanon => "kanon",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "vary_n" => Scenario::VaryN,
            "vary_t" => Scenario::VaryT,
            "overlap" => Scenario::Overlap,
            "aggregate" => Scenario::Aggregate,
            "suppress" => Scenario::Suppress,
            "kanon" => Scenario::Kanon,
            other => {
                return Err(Error::Config(format!(
                    "unknown scenario {other:?}; expected vary_n | vary_t | overlap | aggregate | suppress | kanon"
                )))
            }
        })
    }
}

/// Synthetic population parameters shared by every grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationParams {
    pub alphabet_size: usize,
    pub concentration: f64,
}

impl Default for PopulationParams {
    fn default() -> Self {
        PopulationParams { alphabet_size: 200, concentration: DEFAULT_CONCENTRATION }
    }
}

/// Scenario grids. Each scenario sweeps one of them and takes the first
/// value of the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    /// Users per side.
    pub n: Vec<usize>,
    /// String length per user, both sides unless `t_right` is set.
    pub t: Vec<usize>,
    pub t_right: Option<usize>,
    /// Overlap sizes.
    pub r: Vec<usize>,
    pub n_left: Option<usize>,
    pub n_right: Option<usize>,
    pub k: Vec<usize>,
    /// Consecutive synthetic symbols merged into one location.
    pub group_sizes: Vec<usize>,
    /// Grid sides in meters for GPS sources.
    pub cell_sizes: Vec<f64>,
    /// Number of most popular locations kept.
    pub keep: Vec<usize>,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            n: vec![100],
            t: vec![500],
            t_right: None,
            r: Vec::new(),
            n_left: None,
            n_right: None,
            k: Vec::new(),
            group_sizes: Vec::new(),
            cell_sizes: Vec::new(),
            keep: Vec::new(),
        }
    }
}

/// Recorded event log used instead of synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSource {
    /// `user,timestamp,location` or `user,timestamp,lat,lon` CSV.
    pub path: PathBuf,
    /// Period boundary; when absent each user's active weeks are halved.
    #[serde(default)]
    pub boundary: Option<i64>,
    #[serde(default = "default_min_active_weeks")]
    pub min_active_weeks: usize,
    /// Grid side in meters for GPS fixes.
    #[serde(default = "default_grid_side")]
    pub grid_side: f64,
    /// Grid origin; defaults to the south-west corner of the fixes.
    #[serde(default)]
    pub origin: Option<(f64, f64)>,
}

fn default_min_active_weeks() -> usize {
    2
}

fn default_grid_side() -> f64 {
    1000.0
}

fn default_metrics() -> Vec<MetricKind> {
    vec![MetricKind::Proposed]
}

fn default_repetitions() -> usize {
    20
}

fn default_prune() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<MetricKind>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_prune")]
    pub prune: bool,
    #[serde(default)]
    pub population: PopulationParams,
    #[serde(default)]
    pub params: ScenarioParams,
    #[serde(default)]
    pub source: Option<EventSource>,
    /// Worker threads; all cores when absent.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario) -> Self {
        ExperimentConfig {
            scenario: scenario.to_string(),
            metrics: default_metrics(),
            repetitions: default_repetitions(),
            seed: 0,
            prune: true,
            population: PopulationParams::default(),
            params: ScenarioParams::default(),
            source: None,
            threads: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        serde_json::from_reader(reader).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn scenario(&self) -> Result<Scenario> {
        self.scenario.parse()
    }

    fn validate(&self) -> Result<Scenario> {
        let scenario = self.scenario()?;
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.repetitions == 0 {
            return cfg("repetitions must be at least 1".into());
        }
        if self.metrics.is_empty() {
            return cfg("metric list is empty".into());
        }
        let p = &self.params;
        if p.n.is_empty() || p.n.contains(&0) {
            return cfg("n must hold positive sizes".into());
        }
        if p.t.is_empty() || p.t.contains(&0) || p.t_right == Some(0) {
            return cfg("t must hold positive lengths".into());
        }
        let grid_empty = match scenario {
            Scenario::VaryN | Scenario::VaryT => false,
            Scenario::Overlap => p.r.is_empty(),
            Scenario::Aggregate => {
                if self.source.is_some() { p.cell_sizes.is_empty() } else { p.group_sizes.is_empty() }
            }
            Scenario::Suppress => p.keep.is_empty(),
            Scenario::Kanon => p.k.is_empty(),
        };
        if grid_empty {
            return cfg(format!("scenario {scenario} needs a non-empty parameter grid"));
        }
        if scenario == Scenario::Overlap && p.r.contains(&0) {
            return cfg("overlap sizes must be positive".into());
        }
        if p.group_sizes.contains(&0) || p.keep.contains(&0) || p.k.contains(&0) {
            return cfg("group sizes, keep sizes and k must be positive".into());
        }
        if p.cell_sizes.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return cfg("cell sizes must be positive".into());
        }
        if self.source.is_some() && scenario == Scenario::VaryT {
            return cfg("vary_t needs synthetic data".into());
        }
        if self.threads == Some(0) {
            return cfg("threads must be positive".into());
        }
        Ok(scenario)
    }
}

/// One aggregated measurement of the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub param: String,
    pub value: String,
    pub metric: String,
    pub algorithm: String,
    pub measure: String,
    pub estimate: Estimate,
    /// Per-repetition values, in repetition order.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub scenario: Scenario,
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn find(&self, value: &str, metric: &str, algorithm: &str, measure: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| {
            r.value == value && r.metric == metric && r.algorithm == algorithm && r.measure == measure
        })
    }

    /// Tidy CSV, one line per (grid point, metric, algorithm, measure).
    /// Percentages are written to one decimal.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([
            "scenario", "param", "value", "metric", "algorithm", "measure", "mean", "ci_low", "ci_high",
            "repetitions",
        ])?;
        for r in &self.rows {
            let fmt = |x: f64| {
                if is_percentage(&r.measure) { format!("{:.1}", round_pct(x)) } else { format!("{x:.4}") }
            };
            wtr.write_record([
                self.scenario.as_str(),
                &r.param,
                &r.value,
                &r.metric,
                &r.algorithm,
                &r.measure,
                &fmt(r.estimate.mean),
                &fmt(r.estimate.ci_low),
                &fmt(r.estimate.ci_high),
                &r.values.len().to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "scenario": self.scenario.as_str(),
            "repetitions": self.config.repetitions,
            "seed": self.config.seed,
            "generator": GENERATOR,
            "bootstrap_resamples": BOOTSTRAP_RESAMPLES,
            "confidence": CONFIDENCE,
            "config": self.config,
        })
    }

    pub fn write_metadata<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, &self.metadata())?;
        Ok(())
    }
}

fn is_percentage(measure: &str) -> bool {
    measure.ends_with("_pct") || measure == "percentage_accuracy"
}

#[derive(Debug, Clone)]
struct GridPoint {
    param: &'static str,
    value: String,
    kind: PointKind,
}

#[derive(Debug, Clone, Copy)]
enum PointKind {
    N(usize),
    T(usize),
    R(usize),
    Group(usize),
    Cell(f64),
    Keep(usize),
    K(usize),
}

fn grid(scenario: Scenario, p: &ScenarioParams, geo: bool) -> Vec<GridPoint> {
    let point = |param, value: String, kind| GridPoint { param, value, kind };
    match scenario {
        Scenario::VaryN => p.n.iter().map(|&n| point("n", n.to_string(), PointKind::N(n))).collect(),
        Scenario::VaryT => p.t.iter().map(|&t| point("t", t.to_string(), PointKind::T(t))).collect(),
        Scenario::Overlap => p.r.iter().map(|&r| point("r", r.to_string(), PointKind::R(r))).collect(),
        Scenario::Aggregate if geo => {
            p.cell_sizes.iter().map(|&c| point("cell_size", c.to_string(), PointKind::Cell(c))).collect()
        }
        Scenario::Aggregate => {
            p.group_sizes.iter().map(|&g| point("group_size", g.to_string(), PointKind::Group(g))).collect()
        }
        Scenario::Suppress => p.keep.iter().map(|&k| point("keep", k.to_string(), PointKind::Keep(k))).collect(),
        Scenario::Kanon => p.k.iter().map(|&k| point("k", k.to_string(), PointKind::K(k))).collect(),
    }
}

/// Loaded event data: either plain locations or GPS fixes.
enum Recorded {
    Plain(EventLog),
    Geo(Vec<GeoEvent>, (f64, f64)),
}

fn load_source(src: &EventSource) -> Result<Recorded> {
    let mut text = String::new();
    BufReader::new(File::open(&src.path)?).read_to_string(&mut text)?;
    let header = text.lines().next().unwrap_or_default();
    let geo = header.split(',').any(|c| c.trim() == "lat");
    if geo {
        let events = read_geo_csv(text.as_bytes())?;
        let origin = src
            .origin
            .or_else(|| geo_origin(&events))
            .ok_or_else(|| Error::Config("event source is empty".into()))?;
        Ok(Recorded::Geo(events, origin))
    } else {
        Ok(Recorded::Plain(EventLog::read_csv(text.as_bytes())?))
    }
}

/// Per-period histogram sets of the active users of a recorded log.
fn periods(src: &EventSource, log: &EventLog) -> Result<(HistogramSet, HistogramSet)> {
    let (a, b) = match src.boundary {
        Some(t) => split_by_period(log, t),
        None => split_by_active_weeks(log, src.min_active_weeks),
    };
    let active = filter_active_users(&a, &b);
    if active.is_empty() {
        return Err(Error::Config("no user is active in both periods".into()));
    }
    Ok((a.histograms(Some(&active), false)?, b.histograms(Some(&active), true)?))
}

/// Shared data behind all grid points.
struct Context {
    recorded: Option<(EventSource, Recorded)>,
    /// Periods of the recorded log at its configured resolution.
    base_periods: Option<(HistogramSet, HistogramSet)>,
    cell_periods: HashMap<u64, (HistogramSet, HistogramSet)>,
}

/// Runs every grid point and repetition of an experiment.
///
/// Repetition `i` draws its data from a seed derived from the config seed
/// and `i` alone, so grid points of the same repetition share their
/// population and strings as far as sizes allow. Results do not depend on
/// the number of worker threads.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let scenario = config.validate()?;
    let recorded = match &config.source {
        Some(src) => Some((src.clone(), load_source(src)?)),
        None => None,
    };
    let geo = matches!(recorded, Some((_, Recorded::Geo(..))));
    if scenario == Scenario::Aggregate && recorded.is_some() && !geo {
        return Err(Error::Config("aggregate on a recorded log needs GPS fixes".into()));
    }
    let points = grid(scenario, &config.params, geo);

    let mut ctx = Context { recorded, base_periods: None, cell_periods: HashMap::new() };
    if let Some((src, rec)) = &ctx.recorded {
        let quantized;
        let log = match rec {
            Recorded::Plain(log) => log,
            Recorded::Geo(events, origin) => {
                quantized = quantize_events(events, src.grid_side, *origin)?;
                &quantized
            }
        };
        ctx.base_periods = Some(periods(src, log)?);
        if let Recorded::Geo(events, origin) = rec {
            for p in &points {
                if let PointKind::Cell(c) = p.kind {
                    let log = quantize_events(events, c, *origin)?;
                    ctx.cell_periods.insert(c.to_bits(), periods(src, &log)?);
                }
            }
        }
    }

    let tasks: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..config.repetitions).map(move |rep| (p, rep)))
        .collect();
    let run = || -> Result<Vec<Vec<Sample>>> {
        tasks
            .par_iter()
            .map(|&(p, rep)| run_task(config, &ctx, &points[p], rep))
            .collect()
    };
    let samples = match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(run)?,
        None => run()?,
    };

    let mut rows = Vec::new();
    for (p, point) in points.iter().enumerate() {
        let mut grouped: Vec<(Key, Vec<f64>)> = Vec::new();
        for rep in 0..config.repetitions {
            for (key, value) in &samples[p * config.repetitions + rep] {
                match grouped.iter_mut().find(|(k, _)| k == key) {
                    Some((_, v)) => v.push(*value),
                    None => grouped.push((key.clone(), vec![*value])),
                }
            }
        }
        for (key, values) in grouped {
            let seed = stream_rng(config.seed, DOMAIN_BOOTSTRAP, rows.len() as u64).next_u64();
            rows.push(ReportRow {
                param: point.param.to_string(),
                value: point.value.clone(),
                metric: key.metric,
                algorithm: key.algorithm,
                measure: key.measure.to_string(),
                estimate: bootstrap_mean(&values, BOOTSTRAP_RESAMPLES, CONFIDENCE, seed),
                values,
            });
        }
    }
    Ok(ExperimentReport { config: config.clone(), scenario, rows })
}

#[derive(Debug, Clone, PartialEq)]
struct Key {
    metric: String,
    algorithm: String,
    measure: &'static str,
}

type Sample = (Key, f64);

fn repetition_seed(config: &ExperimentConfig, rep: usize) -> u64 {
    stream_rng(config.seed, DOMAIN_REPETITION, rep as u64).next_u64()
}

/// Draws or loads the data of one task. Without `overlap`, recorded data
/// keeps every active user and synthetic data has the first size of `n`.
fn dataset(
    config: &ExperimentConfig,
    ctx: &Context,
    point: &GridPoint,
    overlap: Option<OverlapSpec>,
    seed: u64,
) -> Result<SyntheticPair> {
    let p = &config.params;
    match &ctx.base_periods {
        Some(base) => {
            let (first, second) = match point.kind {
                PointKind::Cell(c) => &ctx.cell_periods[&c.to_bits()],
                _ => base,
            };
            link_periods(first, second, overlap, seed)
        }
        None => {
            let overlap = overlap.unwrap_or(OverlapSpec::full(p.n[0]));
            let t = match point.kind {
                PointKind::T(t) => t,
                _ => p.t[0],
            };
            let spec = PopulationSpec {
                n_users: overlap.n_left + overlap.n_right - overlap.r,
                alphabet_size: config.population.alphabet_size,
                concentration: config.population.concentration,
                seed,
            };
            let population = sample_population(&spec)?;
            generate_pair(&population, t, p.t_right.unwrap_or(t), overlap, seed)
        }
    }
}

fn run_task(config: &ExperimentConfig, ctx: &Context, point: &GridPoint, rep: usize) -> Result<Vec<Sample>> {
    let p = &config.params;
    let seed = repetition_seed(config, rep);
    let overlap = match point.kind {
        PointKind::N(n) => Some(OverlapSpec::full(n)),
        PointKind::R(r) => Some(OverlapSpec {
            n_left: p.n_left.unwrap_or(p.n[0]),
            n_right: p.n_right.unwrap_or(p.n[0]),
            r,
        }),
        _ => None,
    };
    let data = dataset(config, ctx, point, overlap, seed)?;
    let SyntheticPair { mut unlabeled, mut labeled, mut truth } = data;

    let mut out: Vec<Sample> = Vec::new();
    let mut partition = None;
    match point.kind {
        PointKind::Group(g) => {
            let alphabet = crate::histogram::Alphabet::observed([&unlabeled, &labeled]);
            let table = AggregationTable::new(alphabet.iter().filter_map(|l| {
                let j: usize = l.as_str().strip_prefix('L')?.parse().ok()?;
                Some((l.clone(), crate::histogram::LocationId::new(format!("G{}", j / g)).ok()?))
            }));
            unlabeled = unlabeled.filter_map(|_, h| Some(aggregate_locations(h, &table)));
            labeled = labeled.filter_map(|_, h| Some(aggregate_locations(h, &table)));
        }
        PointKind::Keep(top) => {
            let keep = popular_locations([&unlabeled, &labeled], top);
            let left = unlabeled.filter_map(|_, h| suppress_and_renormalize(h, &keep).ok());
            let right = labeled.filter_map(|_, h| suppress_and_renormalize(h, &keep).ok());
            // Only users who keep some mass on both sides stay in the study.
            let pairs: Vec<(String, String)> = truth
                .iter()
                .filter(|(l, r)| left.get(l).is_some() && right.get(r).is_some())
                .map(|(l, r)| (l.to_string(), r.to_string()))
                .collect();
            if pairs.is_empty() {
                return Err(Error::Config(format!("no user keeps mass among the top {top} locations")));
            }
            unlabeled = left.restrict(&pairs.iter().map(|(l, _)| l.clone()).collect());
            labeled = right.restrict(&pairs.iter().map(|(_, r)| r.clone()).collect());
            truth = GroundTruth::new(pairs)?;
            out.push((key("-", "-", "n_common"), truth.len() as f64));
        }
        PointKind::K(k) => {
            if k > unlabeled.len() {
                return Err(Error::Config(format!("k = {k} exceeds the {} released records", unlabeled.len())));
            }
            let (part, released) = microaggregate(&unlabeled, k)?;
            out.push((key("-", "-", "information_loss"), information_loss(&part, &unlabeled)?));
            unlabeled = released;
            partition = Some(part);
        }
        _ => {}
    }

    for &metric in &config.metrics {
        let started = Instant::now();
        let instance = build_instance(&unlabeled, &labeled, metric, config.prune)?;
        let weights_ms = started.elapsed().as_secs_f64() * 1e3;
        let m = metric.as_str();
        let a1 = match_min_weight(&instance)?;
        let mut report = user_level_accuracy(&instance, &a1, &truth);
        report.runtime_ms.insert("weights".into(), weights_ms);
        push_report(&mut out, m, "a1", &report);
        if let Some(part) = &partition {
            if let Some(c) = cluster_level_accuracy(&instance, &a1, &truth, part) {
                out.push((key(m, "a1", "cluster_level_pct"), c));
            }
        }
        if let PointKind::R(r) = point.kind {
            let a2 = match_cardinality(&instance, r)?;
            push_report(&mut out, m, &format!("a2:{r}"), &user_level_accuracy(&instance, &a2, &truth));
        }
    }
    Ok(out)
}

fn key(metric: &str, algorithm: &str, measure: &'static str) -> Key {
    Key { metric: metric.to_string(), algorithm: algorithm.to_string(), measure }
}

fn push_report(out: &mut Vec<Sample>, metric: &str, algorithm: &str, report: &AccuracyReport) {
    if let Some(x) = report.user_level_pct {
        out.push((key(metric, algorithm, "user_level_pct"), x));
    }
    if let Some(x) = report.percentage_accuracy {
        out.push((key(metric, algorithm, "percentage_accuracy"), x));
    }
    out.push((key(metric, algorithm, "n_correct"), report.n_correct as f64));
}
