//! Streaming reductions from long records to the outcome tables.
//!
//! Each record file reduces to a [`UnitSummary`]; summaries are merged in
//! (scenario, replication) order so the result does not depend on how the
//! files were produced or read.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::engine::TerminalEvent;
use crate::policy::{enumerate_factorial, Factor, PolicyScenario};
use crate::population::Group;
use crate::records::{LongRow, RecordError};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("agent {agent} in {scenario} rep {replication}: {message}")]
    Inconsistent { scenario: String, replication: u32, agent: u32, message: String },
    #[error("no records for scenario {0}")]
    MissingScenario(String),
    #[error("factorial design incomplete: missing {0}")]
    IncompleteDesign(String),
    #[error("semester {t} outside 1..={horizon}")]
    SemesterOutOfRange { t: u32, horizon: u32 },
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub const INDICATORS: [&str; 7] = [
    "backbone_completion",
    "blocked_credits",
    "distance_to_graduation",
    "bottleneck_approval_ratio",
    "prerequisites_met_ratio",
    "mean_in_degree_approved",
    "mean_out_degree_approved",
];

const BLOCKED: usize = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Moments {
    n: u64,
    sum: f64,
    sumsq: f64,
}

impl Moments {
    fn add(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sumsq += x * x;
    }

    fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.sum += o.sum;
        self.sumsq += o.sumsq;
    }

    fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }

    /// Sample standard deviation.
    fn sd(&self) -> Option<f64> {
        (self.n > 1).then(|| {
            let n = self.n as f64;
            ((self.sumsq - self.sum * self.sum / n) / (n - 1.0)).max(0.0).sqrt()
        })
    }
}

/// Lower median of a histogram over non-negative integers.
fn hist_lower_median(hist: &BTreeMap<u32, u64>) -> Option<u32> {
    let n: u64 = hist.values().sum();
    if n == 0 {
        return None;
    }
    let rank = (n - 1) / 2;
    let mut seen = 0;
    for (&v, &c) in hist {
        seen += c;
        if seen > rank {
            return Some(v);
        }
    }
    unreachable!()
}

fn merge_hist(into: &mut BTreeMap<u32, u64>, from: &BTreeMap<u32, u64>) {
    for (&k, &v) in from {
        *into.entry(k).or_default() += v;
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct IndicatorAcc {
    m: [Moments; 7],
    blocked: BTreeMap<u32, u64>,
}

impl IndicatorAcc {
    fn add(&mut self, r: &LongRow) {
        let v = [
            r.backbone_completion,
            r.blocked_credits as f64,
            r.distance_to_graduation,
            r.bottleneck_approval_ratio,
            r.prerequisites_met_ratio,
            r.mean_in_degree_approved,
            r.mean_out_degree_approved,
        ];
        for (m, x) in self.m.iter_mut().zip(v) {
            m.add(x);
        }
        *self.blocked.entry(r.blocked_credits).or_default() += 1;
    }

    fn merge(&mut self, o: &IndicatorAcc) {
        for (a, b) in self.m.iter_mut().zip(&o.m) {
            a.merge(b);
        }
        merge_hist(&mut self.blocked, &o.blocked);
    }

    fn summary(&self) -> IndicatorSummary {
        IndicatorSummary {
            n: self.m[0].n,
            mean: self.m.map(|m| m.mean()),
            sd: self.m.map(|m| m.sd()),
            blocked_median: hist_lower_median(&self.blocked),
        }
    }
}

/// Mean/sd of the seven indicators over a population, plus the blocked-credit median.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSummary {
    pub n: u64,
    /// Indexed like [`INDICATORS`]; `None` when undefined for the population size.
    pub mean: [Option<f64>; 7],
    pub sd: [Option<f64>; 7],
    pub blocked_median: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct GroupAcc {
    n: u64,
    noncompleted: u64,
    hard_dropouts: u64,
    courses: u64,
}

impl GroupAcc {
    fn merge(&mut self, o: &GroupAcc) {
        self.n += o.n;
        self.noncompleted += o.noncompleted;
        self.hard_dropouts += o.hard_dropouts;
        self.courses += o.courses;
    }
}

/// Reduction of the records of one or more (scenario, replication) units.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitSummary {
    horizon: u32,
    n_agents: u64,
    n_graduated: u64,
    n_dropout: u64,
    courses: BTreeMap<u32, u64>,
    courses_sum: u64,
    final_stress: f64,
    final_belonging: f64,
    dropout_by_semester: BTreeMap<u32, u64>,
    zero_course_dropouts: u64,
    groups: BTreeMap<Group, GroupAcc>,
    survivors: Vec<IndicatorAcc>,
    frozen: Vec<IndicatorAcc>,
    /// Per-unit mean courses, in merge order.
    unit_means: Vec<f64>,
    /// (backbone shortfall after semester 2, semester-8 blocked credits) for survivors to semester 8.
    early_failure_pairs: Vec<(f64, f64)>,
}

/// Backbone courses still missing after this semester count as early failures.
pub const EARLY_SEMESTERS: u32 = 2;

/// Semester at which the early shortfall is correlated with later blockage.
pub const BLOCKAGE_SEMESTER: u32 = 8;

impl UnitSummary {
    pub fn new(horizon: u32) -> Self {
        UnitSummary {
            horizon,
            n_agents: 0,
            n_graduated: 0,
            n_dropout: 0,
            courses: BTreeMap::new(),
            courses_sum: 0,
            final_stress: 0.0,
            final_belonging: 0.0,
            dropout_by_semester: BTreeMap::new(),
            zero_course_dropouts: 0,
            groups: BTreeMap::new(),
            survivors: vec![IndicatorAcc::default(); horizon as usize],
            frozen: vec![IndicatorAcc::default(); horizon as usize],
            unit_means: Vec::new(),
            early_failure_pairs: Vec::new(),
        }
    }

    /// Adds one agent's rows (semesters `1..=k` in order, terminal event on
    /// the last row only).
    pub fn add_agent(&mut self, rows: &[LongRow]) -> Result<(), AggregateError> {
        let last = rows.last().expect("agent has at least one row");
        let fail = |message: String| AggregateError::Inconsistent {
            scenario: last.scenario_id.clone(),
            replication: last.replication,
            agent: last.agent_id,
            message,
        };
        for (i, r) in rows.iter().enumerate() {
            if r.semester != i as u32 + 1 {
                return Err(fail(format!("expected semester {}, found {}", i + 1, r.semester)));
            }
            if r.agent_id != last.agent_id {
                return Err(fail("rows of different agents mixed".into()));
            }
            let event = r.event().ok_or_else(|| fail(format!("unknown terminal_event {:?}", r.terminal_event)))?;
            if event.is_terminal() != (i + 1 == rows.len()) {
                return Err(fail("terminal event must appear exactly once, on the last row".into()));
            }
        }
        if rows.len() > self.horizon as usize {
            return Err(fail(format!("{} semesters exceed horizon {}", rows.len(), self.horizon)));
        }
        let group = last.group().ok_or_else(|| fail(format!("unknown group {:?}", last.group)))?;
        let event = last.event().unwrap();
        let courses = last.n_approved_total;
        self.n_agents += 1;
        *self.courses.entry(courses).or_default() += 1;
        self.courses_sum += courses as u64;
        self.final_stress += last.stress;
        self.final_belonging += last.belonging;
        let g = self.groups.entry(group).or_default();
        g.n += 1;
        g.courses += courses as u64;
        match event {
            TerminalEvent::Graduation => self.n_graduated += 1,
            TerminalEvent::Dropout => {
                self.n_dropout += 1;
                g.hard_dropouts += 1;
                *self.dropout_by_semester.entry(last.semester).or_default() += 1;
                if courses == 0 {
                    self.zero_course_dropouts += 1;
                }
            }
            _ => {}
        }
        if event != TerminalEvent::Graduation {
            g.noncompleted += 1;
        }
        for t in 0..self.horizon as usize {
            match rows.get(t) {
                Some(r) => {
                    self.survivors[t].add(r);
                    self.frozen[t].add(r);
                }
                None => self.frozen[t].add(last),
            }
        }
        if let Some(r) = rows.get(BLOCKAGE_SEMESTER as usize - 1) {
            let shortfall = 1.0 - rows[EARLY_SEMESTERS as usize - 1].backbone_completion;
            self.early_failure_pairs.push((shortfall, r.blocked_credits as f64));
        }
        Ok(())
    }

    /// Reduces a whole record file (rows grouped by agent, in order).
    pub fn from_rows(rows: &[LongRow], horizon: u32) -> Result<Self, AggregateError> {
        let mut s = UnitSummary::new(horizon);
        let mut start = 0;
        while start < rows.len() {
            let id = rows[start].agent_id;
            let end = start + rows[start..].iter().take_while(|r| r.agent_id == id).count();
            s.add_agent(&rows[start..end])?;
            start = end;
        }
        s.seal();
        Ok(s)
    }

    /// Marks the end of one unit so its mean enters the by-replication average.
    pub fn seal(&mut self) {
        if self.n_agents > 0 && self.unit_means.is_empty() {
            self.unit_means.push(self.courses_sum as f64 / self.n_agents as f64);
        }
    }

    pub fn merge(&mut self, o: &UnitSummary) {
        self.n_agents += o.n_agents;
        self.n_graduated += o.n_graduated;
        self.n_dropout += o.n_dropout;
        merge_hist(&mut self.courses, &o.courses);
        self.courses_sum += o.courses_sum;
        self.final_stress += o.final_stress;
        self.final_belonging += o.final_belonging;
        merge_hist(&mut self.dropout_by_semester, &o.dropout_by_semester);
        self.zero_course_dropouts += o.zero_course_dropouts;
        for (k, g) in &o.groups {
            self.groups.entry(*k).or_default().merge(g);
        }
        for (a, b) in self.survivors.iter_mut().zip(&o.survivors) {
            a.merge(b);
        }
        for (a, b) in self.frozen.iter_mut().zip(&o.frozen) {
            a.merge(b);
        }
        self.unit_means.extend_from_slice(&o.unit_means);
        self.early_failure_pairs.extend_from_slice(&o.early_failure_pairs);
    }

    pub fn n_agents(&self) -> u64 {
        self.n_agents
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }
}

/// Headline outcomes for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioStats {
    pub scenario: PolicyScenario,
    pub n_agents: u64,
    /// Functional non-completion: everyone who did not graduate within the horizon.
    pub dropout_rate: f64,
    pub hard_dropout_rate: f64,
    pub mean_courses: f64,
    pub std_courses: f64,
    pub median_courses: u32,
    pub mean_courses_by_rep: f64,
    pub mean_stress: f64,
    pub mean_belonging: f64,
    /// Share of hard dropouts leaving in semesters 1-2.
    pub first_year_dropout_share: Option<f64>,
    /// Share of hard dropouts with no approved course.
    pub zero_course_dropout_share: Option<f64>,
    /// Spearman correlation of early backbone failures with later blocked credits.
    pub early_failure_blockage_rho: Option<f64>,
}

impl ScenarioStats {
    pub fn from_summary(scenario: PolicyScenario, s: &UnitSummary) -> Result<Self, AggregateError> {
        if s.n_agents == 0 {
            return Err(AggregateError::MissingScenario(scenario.id()));
        }
        let n = s.n_agents as f64;
        let mut m = Moments::default();
        for (&v, &c) in &s.courses {
            m.n += c;
            m.sum += v as f64 * c as f64;
            m.sumsq += (v as f64).powi(2) * c as f64;
        }
        let dropouts = s.n_dropout as f64;
        let share = |k: u64| (s.n_dropout > 0).then(|| k as f64 / dropouts);
        let first_year: u64 = s.dropout_by_semester.range(..=2).map(|(_, c)| c).sum();
        let (xs, ys): (Vec<f64>, Vec<f64>) = s.early_failure_pairs.iter().copied().unzip();
        Ok(ScenarioStats {
            scenario,
            n_agents: s.n_agents,
            dropout_rate: (s.n_agents - s.n_graduated) as f64 / n,
            hard_dropout_rate: dropouts / n,
            mean_courses: s.courses_sum as f64 / n,
            std_courses: m.sd().unwrap_or(0.0),
            median_courses: hist_lower_median(&s.courses).unwrap(),
            mean_courses_by_rep: s.unit_means.iter().sum::<f64>() / s.unit_means.len().max(1) as f64,
            mean_stress: s.final_stress / n,
            mean_belonging: s.final_belonging / n,
            first_year_dropout_share: share(first_year),
            zero_course_dropout_share: share(s.zero_course_dropouts),
            early_failure_blockage_rho: spearman(&xs, &ys),
        })
    }
}

/// Structural indicators at one semester: survivors only, and the whole
/// cohort with exited agents frozen at their final state.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralRow {
    pub scenario: PolicyScenario,
    pub semester: u32,
    pub survivors: IndicatorSummary,
    pub frozen: IndicatorSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupRow {
    pub scenario: PolicyScenario,
    pub group: Group,
    pub n_agents: u64,
    pub dropout_rate: f64,
    pub hard_dropout_rate: f64,
    pub mean_courses: f64,
}

/// Merged summaries keyed by scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    horizon: u32,
    scenarios: BTreeMap<usize, UnitSummary>,
}

impl ExperimentSummary {
    /// Merges units; they must arrive sorted by (scenario, replication).
    pub fn from_units<I>(horizon: u32, units: I) -> Self
    where
        I: IntoIterator<Item = (PolicyScenario, UnitSummary)>,
    {
        let mut scenarios: BTreeMap<usize, UnitSummary> = BTreeMap::new();
        for (s, u) in units {
            scenarios.entry(s.index()).or_insert_with(|| UnitSummary::new(horizon)).merge(&u);
        }
        ExperimentSummary { horizon, scenarios }
    }

    pub fn scenarios(&self) -> Vec<PolicyScenario> {
        self.scenarios.keys().map(|&i| PolicyScenario::from_index(i)).collect()
    }

    pub fn summary(&self, scenario: PolicyScenario) -> Option<&UnitSummary> {
        self.scenarios.get(&scenario.index())
    }

    /// One row per scenario present, in design order.
    pub fn stats(&self) -> Result<Vec<ScenarioStats>, AggregateError> {
        self.scenarios.iter().map(|(&i, s)| ScenarioStats::from_summary(PolicyScenario::from_index(i), s)).collect()
    }

    pub fn structural_at_semester(&self, t: u32) -> Result<Vec<StructuralRow>, AggregateError> {
        if t < 1 || t > self.horizon {
            return Err(AggregateError::SemesterOutOfRange { t, horizon: self.horizon });
        }
        Ok(self
            .scenarios
            .iter()
            .map(|(&i, s)| StructuralRow {
                scenario: PolicyScenario::from_index(i),
                semester: t,
                survivors: s.survivors[t as usize - 1].summary(),
                frozen: s.frozen[t as usize - 1].summary(),
            })
            .collect())
    }

    pub fn archetype_breakdown(&self) -> Vec<GroupRow> {
        let mut rows = Vec::new();
        for (&i, s) in &self.scenarios {
            for (&group, g) in &s.groups {
                if g.n == 0 {
                    continue;
                }
                let n = g.n as f64;
                rows.push(GroupRow {
                    scenario: PolicyScenario::from_index(i),
                    group,
                    n_agents: g.n,
                    dropout_rate: g.noncompleted as f64 / n,
                    hard_dropout_rate: g.hard_dropouts as f64 / n,
                    mean_courses: g.courses as f64 / n,
                });
            }
        }
        rows
    }

    /// Mean backbone completion per semester over the whole cohort, exited
    /// agents frozen at their final state.
    pub fn backbone_series(&self) -> Vec<(PolicyScenario, u32, f64)> {
        let mut out = Vec::new();
        for (&i, s) in &self.scenarios {
            for (t, acc) in s.frozen.iter().enumerate() {
                if let Some(m) = acc.m[0].mean() {
                    out.push((PolicyScenario::from_index(i), t as u32 + 1, m));
                }
            }
        }
        out
    }
}

/// Average rank (1-based) with ties sharing their mean rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; `None` for fewer than three pairs or a constant side.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 3 {
        return None;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Outcomes of one cell of the design, as needed for main effects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellOutcome<S> {
    pub scenario: PolicyScenario,
    pub dropout_rate: S,
    pub mean_courses: S,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MainEffect<S> {
    pub factor: Factor,
    pub outcome: &'static str,
    pub effect: S,
}

/// Mean over the four cells with the factor on minus mean over the four with it off.
pub fn factorial_main_effects<S: Scalar>(cells: &[CellOutcome<S>]) -> Result<Vec<MainEffect<S>>, AggregateError> {
    let mut by: BTreeMap<usize, &CellOutcome<S>> = BTreeMap::new();
    for c in cells {
        by.insert(c.scenario.index(), c);
    }
    let missing: Vec<String> =
        enumerate_factorial().into_iter().filter(|s| !by.contains_key(&s.index())).map(|s| s.id()).collect();
    if !missing.is_empty() {
        return Err(AggregateError::IncompleteDesign(missing.join(",")));
    }
    let four = S::from_count(4);
    let mut out = Vec::with_capacity(6);
    for factor in [Factor::A, Factor::B, Factor::C] {
        let pick = |get: fn(&CellOutcome<S>) -> S| {
            let (mut on, mut off) = (S::zero(), S::zero());
            for c in by.values() {
                if c.scenario.level(factor) {
                    on = on + get(c);
                } else {
                    off = off + get(c);
                }
            }
            on / four - off / four
        };
        out.push(MainEffect { factor, outcome: "dropout_rate", effect: pick(|c| c.dropout_rate) });
        out.push(MainEffect { factor, outcome: "mean_courses", effect: pick(|c| c.mean_courses) });
    }
    Ok(out)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<(), AggregateError> {
    let path = dir.join(name);
    std::fs::write(&path, body)
        .map_err(|e| AggregateError::Io { path: path.display().to_string(), message: e.to_string() })
}

pub fn table2_csv(stats: &[ScenarioStats]) -> String {
    let mut s = String::from(
        "scenario_id,dropout_rate,mean_courses,std_courses,median_courses,hard_dropout_rate,mean_courses_by_rep\n",
    );
    for r in stats {
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.scenario,
            r.dropout_rate,
            r.mean_courses,
            r.std_courses,
            r.median_courses,
            r.hard_dropout_rate,
            r.mean_courses_by_rep
        )
        .unwrap();
    }
    s
}

pub fn scenario_summary_csv(stats: &[ScenarioStats]) -> String {
    let mut s = String::from(
        "scenario_id,dropout_rate,hard_dropout_rate,mean_stress,mean_belonging,first_year_dropout_share,zero_course_dropout_share,early_failure_blockage_rho\n",
    );
    for r in stats {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.scenario,
            r.dropout_rate,
            r.hard_dropout_rate,
            r.mean_stress,
            r.mean_belonging,
            opt(r.first_year_dropout_share),
            opt(r.zero_course_dropout_share),
            opt(r.early_failure_blockage_rho)
        )
        .unwrap();
    }
    s
}

fn table3_cells(x: &IndicatorSummary) -> Vec<String> {
    vec![
        opt(x.mean[0]),
        opt(x.sd[0]),
        opt(x.mean[BLOCKED]),
        opt(x.blocked_median.map(f64::from)),
        opt(x.sd[BLOCKED]),
        opt(x.mean[2]),
        opt(x.sd[2]),
        opt(x.mean[3]),
        opt(x.mean[4]),
        opt(x.mean[5]),
        opt(x.mean[6]),
    ]
}

const TABLE3_COLUMNS: [&str; 11] = [
    "backbone_completion_mean",
    "backbone_completion_sd",
    "blocked_credits_mean",
    "blocked_credits_median",
    "blocked_credits_sd",
    "distance_to_graduation_mean",
    "distance_to_graduation_sd",
    "bottleneck_approval_ratio_mean",
    "prerequisites_met_ratio_mean",
    "mean_in_degree_approved_mean",
    "mean_out_degree_approved_mean",
];

pub fn table3_csv(rows: &[StructuralRow]) -> String {
    let mut header = vec!["scenario_id".to_string()];
    header.extend(TABLE3_COLUMNS.iter().map(|c| c.to_string()));
    header.push("n_survivors".into());
    header.extend(TABLE3_COLUMNS.iter().map(|c| format!("frozen_{c}")));
    header.push("n_frozen".into());
    let mut s = header.join(",") + "\n";
    for r in rows {
        let mut cells = vec![r.scenario.id()];
        cells.extend(table3_cells(&r.survivors));
        cells.push(r.survivors.n.to_string());
        cells.extend(table3_cells(&r.frozen));
        cells.push(r.frozen.n.to_string());
        s += &(cells.join(",") + "\n");
    }
    s
}

pub fn effects_csv<S: Scalar + std::fmt::Display>(effects: &[MainEffect<S>]) -> String {
    let mut s = String::from("factor,outcome,effect\n");
    for e in effects {
        writeln!(s, "{},{},{}", e.factor.as_str(), e.outcome, e.effect).unwrap();
    }
    s
}

pub fn breakdown_csv(rows: &[GroupRow]) -> String {
    let mut s = String::from("scenario_id,group,n_agents,dropout_rate,hard_dropout_rate,mean_courses\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            r.scenario, r.group, r.n_agents, r.dropout_rate, r.hard_dropout_rate, r.mean_courses
        )
        .unwrap();
    }
    s
}

pub fn cells_from_stats(stats: &[ScenarioStats]) -> Vec<CellOutcome<f64>> {
    stats
        .iter()
        .map(|r| CellOutcome { scenario: r.scenario, dropout_rate: r.dropout_rate, mean_courses: r.mean_courses })
        .collect()
}

/// Semester used for the structural table.
pub const TABLE3_SEMESTER: u32 = 8;

/// Writes every aggregate table into `dir`. The factorial file is only
/// written when all eight cells are present. Returns the file names written.
pub fn write_tables(summary: &ExperimentSummary, dir: &Path) -> Result<Vec<String>, AggregateError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| AggregateError::Io { path: dir.display().to_string(), message: e.to_string() })?;
    let stats = summary.stats()?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<(), AggregateError> {
        write_file(dir, name, &body)?;
        written.push(name.to_string());
        Ok(())
    };
    put("scenario_summary.csv", scenario_summary_csv(&stats))?;
    put("table2.csv", table2_csv(&stats))?;
    let t = TABLE3_SEMESTER.min(summary.horizon);
    put("table3_semester8.csv", table3_csv(&summary.structural_at_semester(t)?))?;
    put("archetype_breakdown.csv", breakdown_csv(&summary.archetype_breakdown()))?;
    if let Ok(effects) = factorial_main_effects(&cells_from_stats(&stats)) {
        put("factorial_effects.csv", effects_csv(&effects))?;
    }
    Ok(written)
}

/// Tidy series for plotting: backbone completion over time and the main effects.
pub fn write_report_data(summary: &ExperimentSummary, dir: &Path) -> Result<Vec<String>, AggregateError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| AggregateError::Io { path: dir.display().to_string(), message: e.to_string() })?;
    let mut fig1 = String::from("scenario_id,semester,backbone_mean\n");
    for (s, t, m) in summary.backbone_series() {
        writeln!(fig1, "{s},{t},{m}").unwrap();
    }
    let effects = factorial_main_effects(&cells_from_stats(&summary.stats()?))?;
    write_file(dir, "figure1_backbone.csv", &fig1)?;
    write_file(dir, "figure2_effects.csv", &effects_csv(&effects))?;
    Ok(vec!["figure1_backbone.csv".into(), "figure2_effects.csv".into()])
}
