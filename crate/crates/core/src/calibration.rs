//! Target scoring and a deterministic parameter search.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::aggregate::{ExperimentSummary, ScenarioStats, TABLE3_SEMESTER};
use crate::config;
use crate::experiment::{simulate, ExperimentError, Model};
use crate::policy::{parse_scenario_id, PolicyScenario};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("{file}: {message}")]
    Parse { file: String, message: String },
    #[error("target {quantity}: {message}")]
    InvalidTarget { quantity: String, message: String },
    #[error("bound {parameter}: {message}")]
    InvalidBound { parameter: String, message: String },
    #[error("quantity {0} is not available in the simulated summary")]
    MissingQuantity(String),
    #[error("evaluation at [{params}] failed: {source}")]
    Evaluation { params: String, source: Box<ExperimentError> },
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}

/// Scenario-level metrics a target may refer to.
pub const METRICS: [&str; 13] = [
    "dropout_rate",
    "hard_dropout_rate",
    "mean_courses",
    "std_courses",
    "median_courses",
    "mean_stress",
    "mean_belonging",
    "first_year_dropout_share",
    "zero_course_dropout_share",
    "early_failure_blockage_rho",
    "s8_backbone_mean",
    "s8_blocked_median",
    "s8_distance_mean",
];

/// How deviations from a target are penalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Both,
    /// Only values below the target are penalised.
    Floor,
    /// Only values above the target are penalised.
    Ceiling,
}

/// A target quantity such as `A0B0C0.mean_courses` or `A0B0C0.first_year_dropout_share_min`.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub quantity: String,
    pub scenario: PolicyScenario,
    pub metric: &'static str,
    pub side: Side,
    pub target: f64,
    pub tolerance: f64,
    pub weight: f64,
}

impl Target {
    pub fn new(quantity: &str, target: f64, tolerance: f64, weight: f64) -> Result<Self, CalibrationError> {
        let bad =
            |message: &str| CalibrationError::InvalidTarget { quantity: quantity.into(), message: message.into() };
        let (sc, metric) = quantity.split_once('.').ok_or_else(|| bad("expected <scenario>.<metric>"))?;
        let scenario = parse_scenario_id(sc).map_err(|e| bad(&e.to_string()))?;
        let (name, side) = if let Some(m) = metric.strip_suffix("_min") {
            (m, Side::Floor)
        } else if let Some(m) = metric.strip_suffix("_max") {
            (m, Side::Ceiling)
        } else {
            (metric, Side::Both)
        };
        let metric = METRICS.iter().copied().find(|m| *m == name).ok_or_else(|| bad("unknown metric"))?;
        if tolerance <= 0.0 || !tolerance.is_finite() {
            return Err(bad("tolerance must be positive"));
        }
        if weight < 0.0 || !weight.is_finite() || !target.is_finite() {
            return Err(bad("weight must be non-negative and values finite"));
        }
        Ok(Target { quantity: quantity.into(), scenario, metric, side, target, tolerance, weight })
    }

    /// `weight * (deviation / tolerance)^2`, with one-sided deviations for floors and ceilings.
    pub fn loss(&self, observed: f64) -> f64 {
        let d = match self.side {
            Side::Both => (observed - self.target).abs(),
            Side::Floor => (self.target - observed).max(0.0),
            Side::Ceiling => (observed - self.target).max(0.0),
        };
        self.weight * (d / self.tolerance).powi(2)
    }
}

pub fn parse_targets(text: &str) -> Result<Vec<Target>, CalibrationError> {
    #[derive(Deserialize)]
    struct Row {
        quantity: String,
        target: f64,
        tolerance: f64,
        weight: f64,
    }
    let mut out = Vec::new();
    for row in reader(text).deserialize::<Row>() {
        let r = row.map_err(|e| CalibrationError::Parse { file: "targets".into(), message: e.to_string() })?;
        out.push(Target::new(&r.quantity, r.target, r.tolerance, r.weight)?);
    }
    Ok(out)
}

/// Search interval of one named model parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Bound {
    pub parameter: String,
    pub low: f64,
    pub high: f64,
}

pub fn parse_bounds(text: &str) -> Result<Vec<Bound>, CalibrationError> {
    #[derive(Deserialize)]
    struct Row {
        parameter: String,
        low: f64,
        high: f64,
    }
    let mut out: Vec<Bound> = Vec::new();
    for row in reader(text).deserialize::<Row>() {
        let r = row.map_err(|e| CalibrationError::Parse { file: "bounds".into(), message: e.to_string() })?;
        let bad = |m: &str| CalibrationError::InvalidBound { parameter: r.parameter.clone(), message: m.into() };
        if r.low > r.high || !r.low.is_finite() || !r.high.is_finite() {
            return Err(bad("need finite low <= high"));
        }
        if out.iter().any(|b| b.parameter == r.parameter) {
            return Err(bad("duplicate parameter"));
        }
        out.push(Bound { parameter: r.parameter, low: r.low, high: r.high });
    }
    Ok(out)
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes())
}

pub fn load_targets(path: &Path) -> Result<Vec<Target>, CalibrationError> {
    let text = config::read_to_string(path).map_err(ExperimentError::from)?;
    parse_targets(&text).map_err(|e| with_file(e, path))
}

pub fn load_bounds(path: &Path) -> Result<Vec<Bound>, CalibrationError> {
    let text = config::read_to_string(path).map_err(ExperimentError::from)?;
    parse_bounds(&text).map_err(|e| with_file(e, path))
}

fn with_file(e: CalibrationError, path: &Path) -> CalibrationError {
    match e {
        CalibrationError::Parse { message, .. } => {
            CalibrationError::Parse { file: path.display().to_string(), message }
        }
        other => other,
    }
}

/// Reads one metric for one scenario from a summary.
pub fn observe(summary: &ExperimentSummary, scenario: PolicyScenario, metric: &str) -> Option<f64> {
    let s = summary.summary(scenario)?;
    let st = ScenarioStats::from_summary(scenario, s).ok()?;
    let structural = || {
        let t = TABLE3_SEMESTER.min(summary_horizon(summary));
        summary.structural_at_semester(t).ok()?.into_iter().find(|r| r.scenario == scenario)
    };
    match metric {
        "dropout_rate" => Some(st.dropout_rate),
        "hard_dropout_rate" => Some(st.hard_dropout_rate),
        "mean_courses" => Some(st.mean_courses),
        "std_courses" => Some(st.std_courses),
        "median_courses" => Some(st.median_courses as f64),
        "mean_stress" => Some(st.mean_stress),
        "mean_belonging" => Some(st.mean_belonging),
        "first_year_dropout_share" => st.first_year_dropout_share,
        "zero_course_dropout_share" => st.zero_course_dropout_share,
        "early_failure_blockage_rho" => st.early_failure_blockage_rho,
        "s8_backbone_mean" => structural()?.survivors.mean[0],
        "s8_blocked_median" => structural()?.survivors.blocked_median.map(f64::from),
        "s8_distance_mean" => structural()?.survivors.mean[2],
        _ => None,
    }
}

fn summary_horizon(summary: &ExperimentSummary) -> u32 {
    summary.scenarios().first().and_then(|&s| summary.summary(s)).map(|u| u.horizon()).unwrap_or(TABLE3_SEMESTER)
}

/// Weighted squared loss over all targets.
pub fn score(targets: &[Target], summary: &ExperimentSummary) -> Result<f64, CalibrationError> {
    let mut total = 0.0;
    for t in targets {
        let obs = observe(summary, t.scenario, t.metric)
            .ok_or_else(|| CalibrationError::MissingQuantity(t.quantity.clone()))?;
        total += t.loss(obs);
    }
    Ok(total)
}

/// Scenarios a target set needs simulated, in design order.
pub fn required_scenarios(targets: &[Target]) -> Vec<PolicyScenario> {
    let set: BTreeSet<usize> = targets.iter().map(|t| t.scenario.index()).collect();
    set.into_iter().map(PolicyScenario::from_index).collect()
}

/// Simulation size used for each evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedConfig {
    pub n_students: usize,
    pub n_replications: u32,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub evaluation: usize,
    pub phase: &'static str,
    pub params: Vec<f64>,
    pub loss: f64,
    pub best_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub parameters: Vec<(String, f64)>,
    pub loss: f64,
    pub trace: Vec<TraceRow>,
}

impl CalibrationResult {
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("evaluation,phase");
        for (k, _) in &self.parameters {
            write!(s, ",{k}").unwrap();
        }
        s += ",loss,best_loss\n";
        for r in &self.trace {
            write!(s, "{},{}", r.evaluation, r.phase).unwrap();
            for v in &r.params {
                write!(s, ",{v}").unwrap();
            }
            writeln!(s, ",{},{}", r.loss, r.best_loss).unwrap();
        }
        s
    }
}

/// Loss of the model with `params` applied. Points whose targets cannot be
/// observed (for instance no dropouts at all) score infinity.
pub fn evaluate(
    model: &Model,
    bounds: &[Bound],
    params: &[f64],
    targets: &[Target],
    reduced: ReducedConfig,
    pool: &rayon::ThreadPool,
) -> Result<f64, CalibrationError> {
    let attach = |e: ExperimentError| CalibrationError::Evaluation {
        params: bounds.iter().zip(params).map(|(b, v)| format!("{}={v}", b.parameter)).collect::<Vec<_>>().join(" "),
        source: Box::new(e),
    };
    let mut m = model.clone();
    let pairs: Vec<(String, f64)> = bounds.iter().zip(params).map(|(b, &v)| (b.parameter.clone(), v)).collect();
    m.apply_overrides(&pairs).map_err(attach)?;
    let summary = simulate(
        &m,
        &required_scenarios(targets),
        reduced.n_replications,
        reduced.n_students,
        reduced.master_seed,
        pool,
    )
    .map_err(attach)?;
    match score(targets, &summary) {
        Ok(l) => Ok(l),
        Err(CalibrationError::MissingQuantity(_)) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Latin-hypercube seeding followed by coordinate descent with step halving.
/// Uses at most `budget` evaluations; never leaves the bounds.
pub fn calibrate(
    model: &Model,
    targets: &[Target],
    bounds: &[Bound],
    budget: usize,
    reduced: ReducedConfig,
    pool: &rayon::ThreadPool,
) -> Result<CalibrationResult, CalibrationError> {
    if budget == 0 {
        return Err(CalibrationError::ZeroBudget);
    }
    for b in bounds {
        if model.parameter(&b.parameter).is_none() {
            return Err(CalibrationError::InvalidBound {
                parameter: b.parameter.clone(),
                message: "unknown parameter".into(),
            });
        }
    }
    let dim = bounds.len();
    let mut trace: Vec<TraceRow> = Vec::new();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let eval = |x: Vec<f64>, phase: &'static str, trace: &mut Vec<TraceRow>, best: &mut Option<(Vec<f64>, f64)>| {
        let loss = evaluate(model, bounds, &x, targets, reduced, pool)?;
        let improved = best.as_ref().is_none_or(|(_, b)| loss < *b);
        if improved {
            *best = Some((x.clone(), loss));
        }
        let best_loss = best.as_ref().unwrap().1;
        trace.push(TraceRow { evaluation: trace.len() + 1, phase, params: x, loss, best_loss });
        Ok::<bool, CalibrationError>(improved)
    };

    // The starting point is the model as loaded, clamped into the box.
    let start: Vec<f64> = bounds.iter().map(|b| model.parameter(&b.parameter).unwrap().clamp(b.low, b.high)).collect();
    eval(start, "start", &mut trace, &mut best)?;

    let n_seed = (2 * dim).min(budget.saturating_sub(1) / 3);
    let mut rng = ChaCha8Rng::seed_from_u64(reduced.master_seed ^ 0x4c48_5353);
    let strata: Vec<Vec<usize>> = (0..dim)
        .map(|_| {
            let mut p: Vec<usize> = (0..n_seed).collect();
            for i in (1..p.len()).rev() {
                p.swap(i, rng.random_range(0..=i));
            }
            p
        })
        .collect();
    for k in 0..n_seed {
        let x = bounds
            .iter()
            .zip(&strata)
            .map(|(b, stratum)| {
                let u = (stratum[k] as f64 + rng.random::<f64>()) / n_seed as f64;
                b.low + u * (b.high - b.low)
            })
            .collect();
        eval(x, "lhs", &mut trace, &mut best)?;
    }

    let mut step: Vec<f64> = bounds.iter().map(|b| (b.high - b.low) / 4.0).collect();
    let min_step: Vec<f64> = bounds.iter().map(|b| (b.high - b.low) * 1e-3).collect();
    while trace.len() < budget {
        let mut improved_sweep = false;
        let mut any_move = false;
        for j in 0..dim {
            if step[j] <= min_step[j] || step[j] == 0.0 {
                continue;
            }
            for dir in [1.0, -1.0] {
                if trace.len() >= budget {
                    break;
                }
                let mut x = best.as_ref().unwrap().0.clone();
                let moved = (x[j] + dir * step[j]).clamp(bounds[j].low, bounds[j].high);
                if moved == x[j] {
                    continue;
                }
                x[j] = moved;
                any_move = true;
                if eval(x, "descent", &mut trace, &mut best)? {
                    improved_sweep = true;
                    break;
                }
            }
        }
        if !any_move {
            break;
        }
        if !improved_sweep {
            for s in step.iter_mut() {
                *s /= 2.0;
            }
        }
    }
    let (x, loss) = best.unwrap();
    Ok(CalibrationResult {
        parameters: bounds.iter().zip(x).map(|(b, v)| (b.parameter.clone(), v)).collect(),
        loss,
        trace,
    })
}

/// Standard deviation of each target's observation across `seeds`, at the
/// model's current parameters.
pub fn noise_floor(
    model: &Model,
    targets: &[Target],
    reduced: ReducedConfig,
    seeds: &[u64],
    pool: &rayon::ThreadPool,
) -> Result<Vec<(String, f64)>, CalibrationError> {
    let scenarios = required_scenarios(targets);
    let mut obs: Vec<Vec<f64>> = vec![Vec::new(); targets.len()];
    for &seed in seeds {
        let summary = simulate(model, &scenarios, reduced.n_replications, reduced.n_students, seed, pool)?;
        for (i, t) in targets.iter().enumerate() {
            if let Some(v) = observe(&summary, t.scenario, t.metric) {
                obs[i].push(v);
            }
        }
    }
    Ok(targets
        .iter()
        .zip(obs)
        .map(|(t, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n.max(1.0);
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            (t.quantity.clone(), var.sqrt())
        })
        .collect())
}
