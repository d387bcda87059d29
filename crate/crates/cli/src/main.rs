use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use capire::aggregate::{self, AggregateError};
use capire::calibration::{self, CalibrationError, ReducedConfig};
use capire::experiment::{self, format_params, ExperimentConfig, ExperimentError, Model, Overrides, OUTPUT_ENV};

#[derive(Parser)]
#[command(name = "capire", version, about = "Curriculum intervention simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check every input file and print curriculum statistics.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the factorial experiment and write records, tables and a manifest.
    Run(RunArgs),
    /// Recompute all tables from an existing records directory.
    Aggregate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 12)]
        horizon: u32,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Search the bounded parameters against the calibration targets.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Write the plotting series (backbone over time, main effects).
    ReportData {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 12)]
        horizon: u32,
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated scenario ids, or `all`.
    #[arg(long)]
    scenarios: Option<String>,
    #[arg(long)]
    replications: Option<u32>,
    #[arg(long)]
    n_students: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug)]
struct Failure {
    kind: &'static str,
    msg: String,
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let kind = match &e {
            ExperimentError::Config(_) => "config",
            ExperimentError::Graph(_) => "graph",
            ExperimentError::Population(_) => "population",
            ExperimentError::Policy(_) => "policy",
            ExperimentError::Engine(_) => "engine",
            ExperimentError::Record(_) => "records",
            ExperimentError::Aggregate(_) => "aggregate",
            ExperimentError::UnknownParameter(_) => "config",
            ExperimentError::Io { .. } => "io",
        };
        Failure { kind, msg: e.to_string() }
    }
}

impl From<AggregateError> for Failure {
    fn from(e: AggregateError) -> Self {
        Failure { kind: "aggregate", msg: e.to_string() }
    }
}

impl From<CalibrationError> for Failure {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::Experiment(inner) => inner.into(),
            other => Failure { kind: "calibration", msg: other.to_string() },
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let env = std::env::var(OUTPUT_ENV).ok();
    Ok(ExperimentConfig::from_file(path, env.as_deref())?)
}

fn write(path: &Path, body: &str) -> Result<(), Failure> {
    std::fs::write(path, body).map_err(|e| Failure { kind: "io", msg: format!("{}: {e}", path.display()) })
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(path).map_err(|e| Failure { kind: "io", msg: format!("{}: {e}", path.display()) })
}

fn validate(config: &Path) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let model = Model::load(&cfg)?;
    calibration::load_targets(&cfg.inputs.targets)?;
    let bounds = calibration::load_bounds(&cfg.inputs.bounds)?;
    for b in &bounds {
        if model.parameter(&b.parameter).is_none() {
            return Err(Failure {
                kind: "calibration",
                msg: format!("bound names unknown parameter {:?}", b.parameter),
            });
        }
    }
    let g = &model.base;
    println!("courses={} edges={} acyclic=yes", g.n_courses(), g.n_edges());
    println!("total_credits={} grad_predecessors={}", g.total_credits(), g.ids(g.grad_predecessors()).join(","));
    println!("backbone={}", g.ids(g.backbone()).join(","));
    let rule = g.bottleneck_rule();
    println!(
        "bottleneck(min_in_degree={},quantile={})={}",
        rule.min_in_degree,
        rule.betweenness_quantile,
        g.ids(g.bottleneck()).join(",")
    );
    let r = &model.redesigned;
    println!(
        "a1: courses={} edges={} acyclic=yes modular={} bottleneck={}",
        r.n_courses(),
        r.n_edges(),
        r.ids(r.modular()).join(","),
        r.ids(r.bottleneck()).join(",")
    );
    println!("archetypes={}", model.archetypes.len());
    Ok(())
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&args.config)?;
    cfg.apply(&Overrides {
        scenarios: args.scenarios.clone(),
        n_replications: args.replications,
        n_students: args.n_students,
        master_seed: args.seed,
        output_dir: args.out.clone(),
        workers: args.workers,
    })?;
    let manifest = experiment::run_experiment(&cfg)?;
    let rows: u64 = manifest.files.iter().map(|f| f.1).sum();
    println!("record_files={} record_rows={} out={}", manifest.files.len(), rows, cfg.output_dir.display());
    Ok(())
}

fn aggregate_cmd(input: &Path, out: &Path, horizon: u32, workers: Option<usize>) -> Result<(), Failure> {
    let summary = experiment::aggregate_dir(input, horizon, workers.unwrap_or(0))?;
    let written = aggregate::write_tables(&summary, out)?;
    println!("tables={} out={}", written.join(","), out.display());
    Ok(())
}

fn calibrate(
    config: &Path,
    budget: Option<usize>,
    seed: Option<u64>,
    out: Option<&Path>,
    workers: Option<usize>,
) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    cfg.apply(&Overrides { master_seed: seed, output_dir: out.map(Path::to_path_buf), workers, ..Default::default() })?;
    let model = Model::load(&cfg)?;
    let targets = calibration::load_targets(&cfg.inputs.targets)?;
    let bounds = calibration::load_bounds(&cfg.inputs.bounds)?;
    let reduced = ReducedConfig {
        n_students: cfg.calibration_n_students,
        n_replications: cfg.calibration_replications,
        master_seed: cfg.master_seed,
    };
    let pool = experiment::thread_pool(cfg.workers)?;
    let budget = budget.unwrap_or(cfg.calibration_budget);
    let seeds: Vec<u64> = (1..=5).map(|k| cfg.master_seed.wrapping_add(k)).collect();
    let noise = calibration::noise_floor(&model, &targets, reduced, &seeds, &pool)?;
    let result = calibration::calibrate(&model, &targets, &bounds, budget, reduced, &pool)?;
    create_dir(&cfg.output_dir)?;
    write(&cfg.output_dir.join("calibration_trace.csv"), &result.trace_csv())?;
    write(&cfg.output_dir.join("calibrated_params.csv"), &format_params(&result.parameters))?;
    let mut noise_csv = String::from("quantity,sd\n");
    for (q, sd) in &noise {
        noise_csv += &format!("{q},{sd}\n");
    }
    write(&cfg.output_dir.join("calibration_noise.csv"), &noise_csv)?;
    println!("evaluations={} loss={} out={}", result.trace.len(), result.loss, cfg.output_dir.display());
    Ok(())
}

fn report_data(input: &Path, out: &Path, horizon: u32, workers: Option<usize>) -> Result<(), Failure> {
    let summary = experiment::aggregate_dir(input, horizon, workers.unwrap_or(0))?;
    let written = aggregate::write_report_data(&summary, out)?;
    println!("series={} out={}", written.join(","), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { config } => validate(config),
        Command::Run(args) => run(args),
        Command::Aggregate { input, out, horizon, workers } => aggregate_cmd(input, out, *horizon, *workers),
        Command::Calibrate { config, budget, seed, out, workers } => {
            calibrate(config, *budget, *seed, out.as_deref(), *workers)
        }
        Command::ReportData { input, out, horizon, workers } => report_data(input, out, *horizon, *workers),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: kind={} msg={:?}", f.kind, f.msg);
            ExitCode::from(1)
        }
    }
}
