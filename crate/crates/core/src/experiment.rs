//! Configuration, model loading and the factorial experiment runner.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aggregate::{self, AggregateError, ExperimentSummary, UnitSummary};
use crate::config::{self, resolve_path, ConfigError, KeyValues};
use crate::engine::{Engine, EngineError, EngineParams, RecordTag};
use crate::graph::{BottleneckRule, CurriculumGraph, GraphError, RedesignSpec};
use crate::policy::{self, enumerate_factorial, parse_scenario_id, PolicyError, PolicyParams, PolicyScenario};
use crate::population::{sample_cohort, ArchetypeTable, PopulationError};
use crate::records::{self, LongRow, RecordError};
use crate::rng::AgentStream;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error("unknown model parameter {0:?}")]
    UnknownParameter(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ExperimentError + '_ {
    move |e| ExperimentError::Io { path: path.display().to_string(), message: e.to_string() }
}

/// Input files, resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPaths {
    pub curriculum_courses: PathBuf,
    pub curriculum_edges: PathBuf,
    pub redesign_a1: PathBuf,
    pub reassign_a1: PathBuf,
    pub archetypes: PathBuf,
    pub engine_params: PathBuf,
    pub course_pass: PathBuf,
    pub policy_params: PathBuf,
    pub targets: PathBuf,
    pub bounds: PathBuf,
    pub param_overrides: Option<PathBuf>,
}

impl InputPaths {
    pub fn in_dir(dir: &Path) -> Self {
        InputPaths {
            curriculum_courses: dir.join("courses.csv"),
            curriculum_edges: dir.join("edges.csv"),
            redesign_a1: dir.join("redesign_a1.csv"),
            reassign_a1: dir.join("reassign.csv"),
            archetypes: dir.join("archetypes.csv"),
            engine_params: dir.join("engine_params.csv"),
            course_pass: dir.join("course_pass.csv"),
            policy_params: dir.join("policy_params.csv"),
            targets: dir.join("targets.csv"),
            bounds: dir.join("bounds.csv"),
            param_overrides: None,
        }
    }

    /// Model inputs in a fixed order, for digests.
    pub fn model_files(&self) -> Vec<(&'static str, &Path)> {
        let mut v: Vec<(&'static str, &Path)> = vec![
            ("curriculum_courses", &self.curriculum_courses),
            ("curriculum_edges", &self.curriculum_edges),
            ("redesign_a1", &self.redesign_a1),
            ("reassign_a1", &self.reassign_a1),
            ("archetypes", &self.archetypes),
            ("engine_params", &self.engine_params),
            ("course_pass", &self.course_pass),
            ("policy_params", &self.policy_params),
        ];
        if let Some(p) = &self.param_overrides {
            v.push(("param_overrides", p));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub inputs: InputPaths,
    pub master_seed: u64,
    pub n_students: usize,
    pub n_replications: u32,
    pub scenarios: Vec<PolicyScenario>,
    pub horizon: u32,
    /// Worker threads; 0 uses the available parallelism.
    pub workers: usize,
    pub output_dir: PathBuf,
    pub compress: bool,
    pub bottleneck: BottleneckRule,
    pub calibration_budget: usize,
    pub calibration_n_students: usize,
    pub calibration_replications: u32,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub scenarios: Option<String>,
    pub n_replications: Option<u32>,
    pub n_students: Option<usize>,
    pub master_seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

pub const DEFAULT_OUTPUT_DIR: &str = "capire_out";
pub const OUTPUT_ENV: &str = "CAPIRE_OUT";

const PATH_KEYS: [&str; 11] = [
    "curriculum_courses",
    "curriculum_edges",
    "redesign_a1",
    "reassign_a1",
    "archetypes",
    "engine_params",
    "course_pass",
    "policy_params",
    "targets",
    "bounds",
    "param_overrides",
];

const VALUE_KEYS: [&str; 13] = [
    "master_seed",
    "n_students",
    "n_replications",
    "scenarios",
    "horizon",
    "workers",
    "output_dir",
    "compress",
    "bottleneck_min_in_degree",
    "bottleneck_quantile",
    "calibration_budget",
    "calibration_n_students",
    "calibration_replications",
];

pub fn parse_scenarios(text: &str) -> Result<Vec<PolicyScenario>, PolicyError> {
    if text.trim() == "all" {
        return Ok(enumerate_factorial());
    }
    let mut out: Vec<PolicyScenario> =
        text.split(',').map(|s| parse_scenario_id(s.trim())).collect::<Result<_, _>>()?;
    out.sort_by_key(|s| s.index());
    out.dedup();
    Ok(out)
}

impl ExperimentConfig {
    /// Built-in defaults with inputs looked up in `dir`.
    pub fn defaults(dir: &Path) -> Self {
        ExperimentConfig {
            inputs: InputPaths::in_dir(dir),
            master_seed: 20240601,
            n_students: 1343,
            n_replications: 100,
            scenarios: enumerate_factorial(),
            horizon: 12,
            workers: 0,
            output_dir: PathBuf::from(DEFAULT_OUTPUT_DIR),
            compress: true,
            bottleneck: BottleneckRule::default(),
            calibration_budget: 200,
            calibration_n_students: 300,
            calibration_replications: 10,
        }
    }

    /// Reads a `key = value` config; `env_output` is the fallback output directory.
    pub fn from_text(text: &str, config_dir: &Path, env_output: Option<&str>) -> Result<Self, ExperimentError> {
        let kv = KeyValues::parse_cfg(text, "config")?;
        let mut c = Self::defaults(config_dir);
        if let Some(out) = env_output {
            c.output_dir = PathBuf::from(out);
        }
        for key in kv.keys() {
            if !PATH_KEYS.contains(&key.as_str()) && !VALUE_KEYS.contains(&key.as_str()) {
                return Err(ConfigError::Unknown(key.clone()).into());
            }
        }
        let path = |k: &str| kv.get(k).map(|v| resolve_path(config_dir, v));
        let i = &mut c.inputs;
        for (k, slot) in [
            ("curriculum_courses", &mut i.curriculum_courses),
            ("curriculum_edges", &mut i.curriculum_edges),
            ("redesign_a1", &mut i.redesign_a1),
            ("reassign_a1", &mut i.reassign_a1),
            ("archetypes", &mut i.archetypes),
            ("engine_params", &mut i.engine_params),
            ("course_pass", &mut i.course_pass),
            ("policy_params", &mut i.policy_params),
            ("targets", &mut i.targets),
            ("bounds", &mut i.bounds),
        ] {
            if let Some(p) = path(k) {
                *slot = p;
            }
        }
        i.param_overrides = kv.get("param_overrides").filter(|v| !v.is_empty()).map(|v| resolve_path(config_dir, v));
        if let Some(v) = kv.parsed("master_seed")? {
            c.master_seed = v;
        }
        if let Some(v) = kv.parsed("n_students")? {
            c.n_students = v;
        }
        if let Some(v) = kv.parsed("n_replications")? {
            c.n_replications = v;
        }
        if let Some(v) = kv.get("scenarios") {
            c.scenarios = parse_scenarios(v).map_err(|e| invalid("scenarios", e))?;
        }
        if let Some(v) = kv.parsed("horizon")? {
            c.horizon = v;
        }
        if let Some(v) = kv.parsed("workers")? {
            c.workers = v;
        }
        if let Some(v) = kv.get("output_dir") {
            c.output_dir = resolve_path(config_dir, v);
        }
        if let Some(v) = kv.parsed("compress")? {
            c.compress = v;
        }
        if let Some(v) = kv.parsed("bottleneck_min_in_degree")? {
            c.bottleneck.min_in_degree = v;
        }
        if let Some(v) = kv.parsed("bottleneck_quantile")? {
            c.bottleneck.betweenness_quantile = v;
        }
        if let Some(v) = kv.parsed("calibration_budget")? {
            c.calibration_budget = v;
        }
        if let Some(v) = kv.parsed("calibration_n_students")? {
            c.calibration_n_students = v;
        }
        if let Some(v) = kv.parsed("calibration_replications")? {
            c.calibration_replications = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path, env_output: Option<&str>) -> Result<Self, ExperimentError> {
        let text = config::read_to_string(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::from_text(&text, dir, env_output)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), ExperimentError> {
        if let Some(s) = &o.scenarios {
            self.scenarios = parse_scenarios(s).map_err(|e| invalid("scenarios", e))?;
        }
        if let Some(v) = o.n_replications {
            self.n_replications = v;
        }
        if let Some(v) = o.n_students {
            self.n_students = v;
        }
        if let Some(v) = o.master_seed {
            self.master_seed = v;
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
        if let Some(v) = o.workers {
            self.workers = v;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.n_students == 0 {
            return Err(invalid("n_students", "must be at least 1"));
        }
        if self.n_replications == 0 {
            return Err(invalid("n_replications", "must be at least 1"));
        }
        if self.scenarios.is_empty() {
            return Err(invalid("scenarios", "empty"));
        }
        if self.horizon == 0 {
            return Err(invalid("horizon", "must be at least 1"));
        }
        let q = self.bottleneck.betweenness_quantile;
        if !(0.0..=1.0).contains(&q) {
            return Err(invalid("bottleneck_quantile", "must lie in [0,1]"));
        }
        if self.calibration_n_students == 0 || self.calibration_replications == 0 {
            return Err(invalid("calibration_n_students", "reduced configuration must be non-empty"));
        }
        Ok(())
    }

    /// Every setting with its resolved value, in key order.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let p = |x: &Path| x.display().to_string();
        let i = &self.inputs;
        m.insert("curriculum_courses".into(), p(&i.curriculum_courses));
        m.insert("curriculum_edges".into(), p(&i.curriculum_edges));
        m.insert("redesign_a1".into(), p(&i.redesign_a1));
        m.insert("reassign_a1".into(), p(&i.reassign_a1));
        m.insert("archetypes".into(), p(&i.archetypes));
        m.insert("engine_params".into(), p(&i.engine_params));
        m.insert("course_pass".into(), p(&i.course_pass));
        m.insert("policy_params".into(), p(&i.policy_params));
        m.insert("targets".into(), p(&i.targets));
        m.insert("bounds".into(), p(&i.bounds));
        m.insert("param_overrides".into(), i.param_overrides.as_deref().map(p).unwrap_or_default());
        m.insert("master_seed".into(), self.master_seed.to_string());
        m.insert("n_students".into(), self.n_students.to_string());
        m.insert("n_replications".into(), self.n_replications.to_string());
        m.insert("scenarios".into(), self.scenarios.iter().map(|s| s.id()).collect::<Vec<_>>().join(","));
        m.insert("horizon".into(), self.horizon.to_string());
        m.insert("workers".into(), self.workers.to_string());
        m.insert("output_dir".into(), p(&self.output_dir));
        m.insert("compress".into(), self.compress.to_string());
        m.insert("bottleneck_min_in_degree".into(), self.bottleneck.min_in_degree.to_string());
        m.insert("bottleneck_quantile".into(), self.bottleneck.betweenness_quantile.to_string());
        m.insert("calibration_budget".into(), self.calibration_budget.to_string());
        m.insert("calibration_n_students".into(), self.calibration_n_students.to_string());
        m.insert("calibration_replications".into(), self.calibration_replications.to_string());
        m
    }
}

fn invalid(key: &str, message: impl ToString) -> ExperimentError {
    ConfigError::Invalid { key: key.into(), message: message.to_string() }.into()
}

/// Everything needed to simulate any scenario.
#[derive(Debug, Clone)]
pub struct Model {
    pub base: CurriculumGraph,
    pub redesigned: CurriculumGraph,
    pub redesign: RedesignSpec,
    pub archetypes: ArchetypeTable<f64>,
    pub engine: EngineParams<f64>,
    pub policy: PolicyParams<f64>,
}

impl Model {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self, ExperimentError> {
        let i = &cfg.inputs;
        let base =
            CurriculumGraph::load_files(&i.curriculum_courses, &i.curriculum_edges, crate::graph::DEFAULT_PLAN_LENGTH)?
                .with_bottleneck_rule(cfg.bottleneck);
        let redesign = RedesignSpec::load_files(&i.redesign_a1, &i.reassign_a1)?;
        let redesigned = base.apply_redesign(&redesign)?;
        let archetypes = ArchetypeTable::load_file(&i.archetypes)?;
        let mut engine = EngineParams::load_files(&i.engine_params, &i.course_pass, &base)?;
        engine.horizon = cfg.horizon;
        let policy = PolicyParams::from_key_values(&KeyValues::read_csv(&i.policy_params)?)?;
        let mut model = Model { base, redesigned, redesign, archetypes, engine, policy };
        if let Some(p) = &i.param_overrides {
            model.apply_overrides(&read_params(p)?)?;
        }
        Ok(model)
    }

    /// Sets a named parameter: an engine key, a policy key, or `<archetype>.<field>`.
    pub fn set_parameter(&mut self, key: &str, value: f64) -> Result<(), ExperimentError> {
        let ok = self.engine.set(key, value) || self.policy.set(key, value) || self.archetypes.set_param(key, value);
        if ok {
            Ok(())
        } else {
            Err(ExperimentError::UnknownParameter(key.into()))
        }
    }

    pub fn parameter(&self, key: &str) -> Option<f64> {
        self.engine.get(key).or_else(|| self.policy.get(key)).or_else(|| self.archetypes.param(key))
    }

    pub fn apply_overrides(&mut self, params: &[(String, f64)]) -> Result<(), ExperimentError> {
        for (k, v) in params {
            self.set_parameter(k, *v)?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.engine.validate()?;
        self.policy.validate()?;
        self.archetypes.validate()?;
        Ok(())
    }
}

/// Reads a `parameter,value` file.
pub fn read_params(path: &Path) -> Result<Vec<(String, f64)>, ExperimentError> {
    let text = config::read_to_string(path)?;
    parse_params(&text)
        .map_err(|message| ConfigError::Syntax { file: path.display().to_string(), line: 0, message }.into())
}

pub fn parse_params(text: &str) -> Result<Vec<(String, f64)>, String> {
    #[derive(serde::Deserialize)]
    struct Row {
        parameter: String,
        value: f64,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes());
    rdr.deserialize::<Row>().map(|r| r.map(|r| (r.parameter, r.value)).map_err(|e| e.to_string())).collect()
}

pub fn format_params(params: &[(String, f64)]) -> String {
    let mut s = String::from("parameter,value\n");
    for (k, v) in params {
        writeln!(s, "{k},{v}").unwrap();
    }
    s
}

/// Records and reduction of one (scenario, replication) cell.
#[derive(Debug, Clone)]
pub struct UnitResult {
    pub scenario: PolicyScenario,
    pub replication: u32,
    pub summary: UnitSummary,
    pub rows: Vec<LongRow>,
}

/// Simulates a fresh cohort for one cell. Rows are only materialised for
/// output when `keep_rows` is set; the summary is always computed from them.
pub fn run_unit(
    model: &Model,
    scenario: PolicyScenario,
    replication: u32,
    n_students: usize,
    master_seed: u64,
    keep_rows: bool,
) -> Result<UnitResult, ExperimentError> {
    let fx = policy::effects(scenario, &model.policy, &model.base, Some(&model.redesigned))?;
    let graph = fx.select_graph(&model.base, Some(&model.redesigned));
    let engine = Engine::new(graph, &fx, &model.engine);
    let tag = RecordTag { scenario, replication };
    let mut cohort = sample_cohort(&model.archetypes, n_students, graph.n_courses(), master_seed, replication)?;
    let mut summary = UnitSummary::new(model.engine.horizon);
    let mut rows = Vec::new();
    for agent in cohort.iter_mut() {
        let stream = AgentStream::new(master_seed, replication, agent.agent_id);
        let records = engine.run_trajectory(agent, &stream, tag);
        let archetype_id = &model.archetypes.get(agent.archetype).archetype_id;
        let agent_rows: Vec<LongRow> = records.iter().map(|r| LongRow::from_record(r, archetype_id)).collect();
        summary.add_agent(&agent_rows)?;
        if keep_rows {
            rows.extend(agent_rows);
        }
    }
    summary.seal();
    Ok(UnitResult { scenario, replication, summary, rows })
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool, ExperimentError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ExperimentError::Io { path: "thread pool".into(), message: e.to_string() })
}

/// Runs the given cells in memory (no files) and merges their summaries.
pub fn simulate(
    model: &Model,
    scenarios: &[PolicyScenario],
    n_replications: u32,
    n_students: usize,
    master_seed: u64,
    pool: &rayon::ThreadPool,
) -> Result<ExperimentSummary, ExperimentError> {
    let cells: Vec<(PolicyScenario, u32)> =
        scenarios.iter().flat_map(|&s| (0..n_replications).map(move |r| (s, r))).collect();
    let units: Vec<UnitResult> = pool.install(|| {
        cells.par_iter().map(|&(s, r)| run_unit(model, s, r, n_students, master_seed, false)).collect::<Result<_, _>>()
    })?;
    Ok(ExperimentSummary::from_units(model.engine.horizon, units.into_iter().map(|u| (u.scenario, u.summary))))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// (file name, rows, agents, sha256) of one record file.
pub type FileEntry = (String, u64, u64, String);

/// What a run produced, as written to `manifest.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub settings: BTreeMap<String, String>,
    pub input_digests: Vec<(String, String)>,
    pub config_hash: String,
    pub files: Vec<FileEntry>,
    pub tables: Vec<String>,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "config_hash={}", self.config_hash).unwrap();
        for (k, v) in &self.settings {
            // Worker count and output location do not affect results.
            let prefix = if RUNTIME_KEYS.contains(&k.as_str()) { "runtime" } else { "setting" };
            writeln!(s, "{prefix}.{k}={v}").unwrap();
        }
        for (k, v) in &self.input_digests {
            writeln!(s, "input.{k}={v}").unwrap();
        }
        let rows: u64 = self.files.iter().map(|f| f.1).sum();
        let agents: u64 = self.files.iter().map(|f| f.2).sum();
        writeln!(s, "record_files={}", self.files.len()).unwrap();
        writeln!(s, "record_rows={rows}").unwrap();
        writeln!(s, "record_agents={agents}").unwrap();
        for (name, r, a, d) in &self.files {
            writeln!(s, "record.{name}=rows:{r} agents:{a} sha256:{d}").unwrap();
        }
        for t in &self.tables {
            writeln!(s, "table={t}").unwrap();
        }
        s
    }
}

pub const RECORDS_DIR: &str = "records";

/// Settings that cannot change results; written as `runtime.<key>` lines.
pub const RUNTIME_KEYS: [&str; 2] = ["workers", "output_dir"];

/// Runs every (scenario, replication) cell, writes one record file per cell
/// under `<output_dir>/records`, the aggregate tables and `manifest.txt`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest, ExperimentError> {
    cfg.validate()?;
    let model = Model::load(cfg)?;
    let mut input_digests = Vec::new();
    for (name, path) in cfg.inputs.model_files() {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        input_digests.push((name.to_string(), sha256_hex(&bytes)));
    }
    let mut settings = cfg.resolved();
    let mut hasher = Sha256::new();
    for (k, v) in &settings {
        if !RUNTIME_KEYS.contains(&k.as_str()) && !PATH_KEYS.contains(&k.as_str()) {
            hasher.update(format!("{k}={v}\n"));
        }
    }
    for (k, v) in &input_digests {
        hasher.update(format!("{k}={v}\n"));
    }
    let config_hash = hex::encode(hasher.finalize());

    let rec_dir = cfg.output_dir.join(RECORDS_DIR);
    std::fs::create_dir_all(&rec_dir).map_err(io_err(&rec_dir))?;
    let pool = thread_pool(cfg.workers)?;
    settings.insert("workers".into(), pool.current_num_threads().to_string());
    let cells: Vec<(PolicyScenario, u32)> =
        cfg.scenarios.iter().flat_map(|&s| (0..cfg.n_replications).map(move |r| (s, r))).collect();
    let done: Vec<(PolicyScenario, UnitSummary, FileEntry)> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(s, r)| -> Result<_, ExperimentError> {
                let unit = run_unit(&model, s, r, cfg.n_students, cfg.master_seed, true)?;
                let path = records::record_path(&rec_dir, s, r, cfg.compress);
                let bytes = records::encode(&unit.rows, cfg.compress);
                std::fs::write(&path, &bytes).map_err(io_err(&path))?;
                let name = path.file_name().unwrap().to_string_lossy().into_owned();
                let entry = (name, unit.rows.len() as u64, unit.summary.n_agents(), sha256_hex(&bytes));
                Ok((s, unit.summary, entry))
            })
            .collect::<Result<_, _>>()
    })?;
    let mut files = Vec::with_capacity(done.len());
    let mut units = Vec::with_capacity(done.len());
    for (s, summary, entry) in done {
        files.push(entry);
        units.push((s, summary));
    }
    let summary = ExperimentSummary::from_units(cfg.horizon, units);
    let tables = aggregate::write_tables(&summary, &cfg.output_dir)?;
    let manifest = RunManifest { settings, input_digests, config_hash, files, tables };
    let path = cfg.output_dir.join("manifest.txt");
    std::fs::write(&path, manifest.render()).map_err(io_err(&path))?;
    Ok(manifest)
}

/// Re-reduces a directory of record files.
pub fn aggregate_dir(records_dir: &Path, horizon: u32, workers: usize) -> Result<ExperimentSummary, ExperimentError> {
    let files = records::list_record_files(records_dir)?;
    if files.is_empty() {
        return Err(ExperimentError::Io { path: records_dir.display().to_string(), message: "no record files".into() });
    }
    let pool = thread_pool(workers)?;
    let units: Vec<(PolicyScenario, UnitSummary)> = pool.install(|| {
        files
            .par_iter()
            .map(|(s, _, path)| -> Result<_, ExperimentError> {
                let rows = records::read_rows(path)?;
                Ok((*s, UnitSummary::from_rows(&rows, horizon)?))
            })
            .collect::<Result<_, _>>()
    })?;
    Ok(ExperimentSummary::from_units(horizon, units))
}
