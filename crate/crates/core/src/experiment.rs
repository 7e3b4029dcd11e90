//! Scenario comparison and performance-model calibration.
//!
//! Targets file (TOML):
//!
//! ```toml
//! preset = "exp2"
//! seeds = [1, 2, 3, 4, 5]
//!
//! [[target]]
//! name = "response CM_G_TG vs NONE"
//! metric = "overall_response"   # overall_response | makespan | mean_run
//! scenario = "CM_G_TG"
//! baseline = "NONE"
//! reduction = 0.35              # (baseline - scenario) / baseline
//! tolerance = 0.10
//! # benchmark = "EP-STREAM"     # required for mean_run
//! ```
//!
//! Parameter space file (TOML): one `[lo, hi]` range per searched parameter,
//! named as in [`PerfParams::named_values`]. Parameters not listed keep their
//! base value.
//!
//! ```toml
//! [ranges]
//! "beta_mig.cpu" = [0.0, 2.0]
//! domain_bandwidth_gbps = [10.0, 80.0]
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::JobSpec;
use crate::perf::PerfParams;
use crate::rational::{self, int, Rational};
use crate::scenario::ScenarioSpec;
use crate::sim::{run_jobs, SimOptions, SimReport};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub scenario: String,
    /// `None` for the per-scenario mean row.
    pub seed: Option<u64>,
    pub overall_response_s: f64,
    pub makespan_s: f64,
    pub mean_run_s: BTreeMap<String, f64>,
    /// (baseline - value) / baseline, against the baseline row with the same seed.
    pub delta_response: f64,
    pub delta_makespan: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareTable {
    pub baseline: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<CompareRow>,
}

impl CompareTable {
    pub fn mean(&self, scenario: &str) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.scenario == scenario && r.seed.is_none())
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("table serializes");
        text.push('\n');
        text
    }

    pub fn to_csv(&self) -> String {
        let benchmarks: BTreeSet<&String> = self.rows.iter().flat_map(|r| r.mean_run_s.keys()).collect();
        let mut out = String::from("scenario,seed,overall_response_s,makespan_s,delta_response,delta_makespan");
        for b in &benchmarks {
            out.push_str(&format!(",run_s:{b}"));
        }
        out.push('\n');
        for r in &self.rows {
            let seed = r.seed.map(|s| s.to_string()).unwrap_or_else(|| "mean".into());
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6}",
                r.scenario, seed, r.overall_response_s, r.makespan_s, r.delta_response, r.delta_makespan
            ));
            for b in &benchmarks {
                match r.mean_run_s.get(*b) {
                    Some(v) => out.push_str(&format!(",{v:.6}")),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Exact metrics of one run, kept for averaging.
#[derive(Debug, Clone)]
struct RunMetrics {
    response: Rational,
    makespan: Rational,
    mean_run: BTreeMap<String, Rational>,
}

impl From<&SimReport> for RunMetrics {
    fn from(r: &SimReport) -> Self {
        RunMetrics {
            response: r.overall_response_s.clone(),
            makespan: r.makespan_s.clone(),
            mean_run: r.mean_run_by_benchmark(),
        }
    }
}

fn mean_metrics(runs: &[&RunMetrics]) -> RunMetrics {
    let n = int(runs.len() as i64);
    let mut mean_run: BTreeMap<String, Rational> = BTreeMap::new();
    for r in runs {
        for (k, v) in &r.mean_run {
            *mean_run.entry(k.clone()).or_insert_with(rational::zero) += v;
        }
    }
    for v in mean_run.values_mut() {
        *v /= &n;
    }
    RunMetrics {
        response: runs.iter().map(|r| r.response.clone()).sum::<Rational>() / &n,
        makespan: runs.iter().map(|r| r.makespan.clone()).sum::<Rational>() / &n,
        mean_run,
    }
}

fn reduction(baseline: &Rational, value: &Rational) -> f64 {
    if baseline == &rational::zero() {
        return 0.0;
    }
    rational::to_f64(&((baseline - value) / baseline))
}

fn workload_key(jobs: &[JobSpec]) -> Vec<(String, String, Rational)> {
    jobs.iter()
        .map(|j| (j.job_id.clone(), j.benchmark.clone(), j.submit_time_s.clone()))
        .collect()
}

/// Runs every scenario on every seed and tabulates the results. All scenarios
/// must produce the same arrivals for a given seed.
pub fn compare(scenarios: &[ScenarioSpec], seeds: &[u64], baseline: &str) -> Result<CompareTable> {
    if scenarios.len() < 2 {
        return Err(Error::config("compare needs at least two scenarios"));
    }
    if seeds.is_empty() {
        return Err(Error::config("compare needs at least one seed"));
    }
    let names: BTreeSet<&str> = scenarios.iter().map(|s| s.name.as_str()).collect();
    if names.len() != scenarios.len() {
        return Err(Error::config("scenario names must be distinct"));
    }
    if !names.contains(baseline) {
        return Err(Error::config(format!("baseline {baseline:?} is not among the compared scenarios")));
    }
    for s in scenarios {
        s.validate()?;
    }

    let mut workloads = Vec::new();
    for &seed in seeds {
        let reference = scenarios[0].jobs(seed)?;
        for s in &scenarios[1..] {
            let jobs = s.jobs(seed)?;
            if workload_key(&jobs) != workload_key(&reference) {
                return Err(Error::config(format!(
                    "scenarios {} and {} have different workloads for seed {seed}",
                    scenarios[0].name, s.name
                )));
            }
        }
        workloads.push(reference);
    }

    let tasks: Vec<(usize, usize)> = (0..scenarios.len())
        .flat_map(|i| (0..seeds.len()).map(move |k| (i, k)))
        .collect();
    let results: Vec<Result<RunMetrics>> = tasks
        .par_iter()
        .map(|&(i, k)| {
            let rep = run_jobs(&scenarios[i], workloads[k].clone(), seeds[k], &SimOptions::fast())?;
            Ok(RunMetrics::from(&rep))
        })
        .collect();
    let mut metrics: BTreeMap<(usize, usize), RunMetrics> = BTreeMap::new();
    for (key, r) in tasks.into_iter().zip(results) {
        metrics.insert(key, r?);
    }

    let base_idx = scenarios.iter().position(|s| s.name == baseline).expect("checked above");
    let base_mean = mean_metrics(&(0..seeds.len()).map(|k| &metrics[&(base_idx, k)]).collect::<Vec<_>>());
    let mut rows = Vec::new();
    for (i, s) in scenarios.iter().enumerate() {
        let row = |seed: Option<u64>, m: &RunMetrics, b: &RunMetrics| CompareRow {
            scenario: s.name.clone(),
            seed,
            overall_response_s: rational::seconds(&m.response),
            makespan_s: rational::seconds(&m.makespan),
            mean_run_s: m.mean_run.iter().map(|(k, v)| (k.clone(), rational::seconds(v))).collect(),
            delta_response: reduction(&b.response, &m.response),
            delta_makespan: reduction(&b.makespan, &m.makespan),
        };
        for (k, &seed) in seeds.iter().enumerate() {
            rows.push(row(Some(seed), &metrics[&(i, k)], &metrics[&(base_idx, k)]));
        }
        let mean = mean_metrics(&(0..seeds.len()).map(|k| &metrics[&(i, k)]).collect::<Vec<_>>());
        rows.push(row(None, &mean, &base_mean));
    }
    Ok(CompareTable {
        baseline: baseline.to_string(),
        seeds: seeds.to_vec(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMetric {
    OverallResponse,
    Makespan,
    MeanRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationTarget {
    pub name: String,
    pub metric: TargetMetric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<String>,
    pub scenario: String,
    pub baseline: String,
    /// Desired (baseline - scenario) / baseline on the seed-mean metric.
    pub reduction: f64,
    /// Allowed absolute deviation of the achieved reduction.
    pub tolerance: f64,
}

fn default_preset() -> String {
    "exp2".into()
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationTargets {
    #[serde(default = "default_preset")]
    pub preset: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, rename = "target")]
    pub targets: Vec<CalibrationTarget>,
}

impl CalibrationTargets {
    /// The paper's headline improvements of CM_G_TG over NONE and CM, and the
    /// STREAM run-time gain of task-group scheduling.
    pub fn paper_defaults() -> Self {
        let t = |name: &str, metric, benchmark: Option<&str>, scenario: &str, baseline: &str, reduction| {
            CalibrationTarget {
                name: name.into(),
                metric,
                benchmark: benchmark.map(String::from),
                scenario: scenario.into(),
                baseline: baseline.into(),
                reduction,
                tolerance: 0.10,
            }
        };
        use TargetMetric::*;
        CalibrationTargets {
            preset: default_preset(),
            seeds: default_seeds(),
            targets: vec![
                t("response CM_G_TG vs NONE", OverallResponse, None, "CM_G_TG", "NONE", 0.35),
                t("response CM_G_TG vs CM", OverallResponse, None, "CM_G_TG", "CM", 0.19),
                t("makespan CM_G_TG vs NONE", Makespan, None, "CM_G_TG", "NONE", 0.34),
                t("makespan CM_G_TG vs CM", Makespan, None, "CM_G_TG", "CM", 0.11),
                t("EP-STREAM run CM_S_TG vs CM_S", MeanRun, Some("EP-STREAM"), "CM_S_TG", "CM_S", 0.33),
            ],
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let t: CalibrationTargets =
            toml::from_str(text).map_err(|e| Error::config(format!("bad targets file: {e}")))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::config("calibration needs at least one target"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("calibration needs at least one seed"));
        }
        ScenarioSpec::preset(&self.preset)?;
        for t in &self.targets {
            crate::scenario::mode(&t.scenario)?;
            crate::scenario::mode(&t.baseline)?;
            if t.metric == TargetMetric::MeanRun && t.benchmark.is_none() {
                return Err(Error::config(format!("target {:?} needs a benchmark", t.name)));
            }
            if t.reduction == 0.0 || !t.reduction.is_finite() || !(t.tolerance >= 0.0) {
                return Err(Error::config(format!(
                    "target {:?} needs a nonzero reduction and a non-negative tolerance",
                    t.name
                )));
            }
        }
        Ok(())
    }

    fn scenario_names(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .targets
            .iter()
            .flat_map(|t| [t.scenario.as_str(), t.baseline.as_str()])
            .collect();
        set.into_iter().map(String::from).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpace {
    pub ranges: BTreeMap<String, [f64; 2]>,
}

impl ParamSpace {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: ParamSpace = toml::from_str(text).map_err(|e| Error::config(format!("bad parameter space file: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ranges.is_empty() {
            return Err(Error::config("parameter space is empty"));
        }
        let mut probe = PerfParams::default();
        for (name, [lo, hi]) in &self.ranges {
            probe.set(name, *lo)?;
            if !(lo.is_finite() && hi.is_finite() && *lo >= 0.0 && lo <= hi) {
                return Err(Error::config(format!("range for {name} must satisfy 0 <= lo <= hi")));
            }
            if name == "domain_bandwidth_gbps" && *lo <= 0.0 {
                return Err(Error::config("domain_bandwidth_gbps range must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetResidual {
    pub name: String,
    pub target: f64,
    pub achieved: f64,
    /// (achieved - target) / target
    pub relative_residual: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub params: PerfParams,
    pub objective: f64,
    pub residuals: Vec<TargetResidual>,
    /// Set when some target is outside its tolerance at the best point.
    pub warning: bool,
    pub evaluated: usize,
}

impl CalibrationResult {
    pub fn params_toml(&self) -> String {
        self.params.to_toml_string()
    }

    pub fn report_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("result serializes");
        text.push('\n');
        text
    }
}

/// Pre-generated workloads and scenario templates for repeated evaluation.
pub struct Evaluator {
    targets: CalibrationTargets,
    scenarios: Vec<ScenarioSpec>,
    workloads: Vec<Vec<JobSpec>>,
}

impl Evaluator {
    pub fn new(targets: &CalibrationTargets) -> Result<Self> {
        targets.validate()?;
        let template = ScenarioSpec::preset(&targets.preset)?;
        let scenarios = targets
            .scenario_names()
            .iter()
            .map(|n| template.clone().with_mode(n))
            .collect::<Result<Vec<_>>>()?;
        let workloads = targets
            .seeds
            .iter()
            .map(|&s| template.jobs(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Evaluator {
            targets: targets.clone(),
            scenarios,
            workloads,
        })
    }

    /// Residuals of every target under `params`, and the objective (sum of
    /// squared relative residuals).
    pub fn evaluate(&self, params: &PerfParams) -> Result<(f64, Vec<TargetResidual>)> {
        let mut means: BTreeMap<&str, RunMetrics> = BTreeMap::new();
        for s in &self.scenarios {
            let scenario = s.clone().with_perf(*params);
            let runs = self
                .targets
                .seeds
                .iter()
                .zip(&self.workloads)
                .map(|(&seed, jobs)| {
                    run_jobs(&scenario, jobs.clone(), seed, &SimOptions::fast()).map(|r| RunMetrics::from(&r))
                })
                .collect::<Result<Vec<_>>>()?;
            means.insert(&s.name, mean_metrics(&runs.iter().collect::<Vec<_>>()));
        }
        let mut objective = 0.0;
        let mut residuals = Vec::new();
        for t in &self.targets.targets {
            let (m, b) = (&means[t.scenario.as_str()], &means[t.baseline.as_str()]);
            let pick = |r: &RunMetrics| -> Rational {
                match t.metric {
                    TargetMetric::OverallResponse => r.response.clone(),
                    TargetMetric::Makespan => r.makespan.clone(),
                    TargetMetric::MeanRun => r
                        .mean_run
                        .get(t.benchmark.as_deref().unwrap_or_default())
                        .cloned()
                        .unwrap_or_else(rational::zero),
                }
            };
            let achieved = reduction(&pick(b), &pick(m));
            let rel = (achieved - t.reduction) / t.reduction;
            objective += rel * rel;
            residuals.push(TargetResidual {
                name: t.name.clone(),
                target: t.reduction,
                achieved,
                relative_residual: rel,
                within_tolerance: (achieved - t.reduction).abs() <= t.tolerance,
            });
        }
        Ok((objective, residuals))
    }
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// Targets and search box that produced the shipped parameters, in the
/// order they are applied: the Exp. 2 ratios first, then the framework
/// makespan ratio on top of that result.
pub mod shipped {
    use super::{CalibrationTargets, ParamSpace};

    pub const TARGETS: &str = include_str!("../params/targets.toml");
    pub const SPACE: &str = include_str!("../params/space.toml");
    pub const FRAMEWORK_TARGETS: &str = include_str!("../params/targets-frameworks.toml");
    pub const FRAMEWORK_SPACE: &str = include_str!("../params/space-frameworks.toml");
    /// Search seed and budgets used for the shipped parameters.
    pub const SEED: u64 = 1;
    pub const BUDGET: usize = 5000;
    pub const FRAMEWORK_BUDGET: usize = 200;

    pub fn targets() -> CalibrationTargets {
        CalibrationTargets::from_toml_str(TARGETS).expect("shipped targets parse")
    }

    pub fn space() -> ParamSpace {
        ParamSpace::from_toml_str(SPACE).expect("shipped space parses")
    }

    pub fn framework_targets() -> CalibrationTargets {
        CalibrationTargets::from_toml_str(FRAMEWORK_TARGETS).expect("shipped targets parse")
    }

    pub fn framework_space() -> ParamSpace {
        ParamSpace::from_toml_str(FRAMEWORK_SPACE).expect("shipped space parses")
    }
}

/// Number of candidates evaluated together in the refinement phase.
const REFINE_BATCH: usize = 50;

fn sample(
    rng: &mut ChaCha8Rng,
    base: &PerfParams,
    space: &ParamSpace,
    around: Option<(&PerfParams, f64)>,
) -> Result<PerfParams> {
    let mut p = *base;
    let centre: BTreeMap<String, f64> = around
        .map(|(c, _)| c.named_values().into_iter().collect())
        .unwrap_or_default();
    for (name, [lo, hi]) in &space.ranges {
        let (mut a, mut b) = (*lo, *hi);
        if let Some((_, radius)) = around {
            let half = (hi - lo) * radius;
            let c = centre[name];
            a = (c - half).max(*lo);
            b = (c + half).min(*hi);
        }
        let v = if a >= b { a } else { rng.gen_range(a..=b) };
        p.set(name, round4(v).clamp(*lo, *hi))?;
    }
    Ok(p)
}

/// Seeded random search over `space`, starting from `base` for parameters the
/// space does not cover. The first half of the budget samples the whole box;
/// the rest samples in rounds around the best point so far, with a radius
/// shrinking from a quarter of each range to a hundredth. Returns the best of
/// `budget` sampled points.
pub fn calibrate(
    targets: &CalibrationTargets,
    space: &ParamSpace,
    base: &PerfParams,
    budget: usize,
    seed: u64,
) -> Result<CalibrationResult> {
    if budget == 0 {
        return Err(Error::config("calibration budget must be at least 1"));
    }
    space.validate()?;
    let evaluator = Evaluator::new(targets)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut best: Option<(PerfParams, f64, Vec<TargetResidual>)> = None;
    let consider = |batch: Vec<PerfParams>, best: &mut Option<(PerfParams, f64, Vec<TargetResidual>)>| {
        let scored: Vec<Result<(f64, Vec<TargetResidual>)>> =
            batch.par_iter().map(|p| evaluator.evaluate(p)).collect();
        for (p, r) in batch.into_iter().zip(scored) {
            let (obj, residuals) = r?;
            if best.as_ref().is_none_or(|(_, b, _)| obj < *b) {
                *best = Some((p, obj, residuals));
            }
        }
        Ok::<(), Error>(())
    };

    let global = budget.div_ceil(2);
    let batch = (0..global)
        .map(|_| sample(&mut rng, base, space, None))
        .collect::<Result<Vec<_>>>()?;
    consider(batch, &mut best)?;

    let rounds = (budget - global).div_ceil(REFINE_BATCH);
    let mut left = budget - global;
    for round in 0..rounds {
        let t = if rounds > 1 { round as f64 / (rounds - 1) as f64 } else { 0.0 };
        let radius = 0.25 * (0.01f64 / 0.25).powf(t);
        let centre = best.as_ref().expect("global phase ran").0;
        let n = left.min(REFINE_BATCH);
        left -= n;
        let batch = (0..n)
            .map(|_| sample(&mut rng, base, space, Some((&centre, radius))))
            .collect::<Result<Vec<_>>>()?;
        consider(batch, &mut best)?;
    }

    let (params, objective, residuals) = best.expect("budget >= 1");
    let warning = residuals.iter().any(|r| !r.within_tolerance);
    if warning {
        log::warn!("best calibration point leaves some targets outside tolerance");
    }
    Ok(CalibrationResult {
        params,
        objective,
        residuals,
        warning,
        evaluated: budget,
    })
}
