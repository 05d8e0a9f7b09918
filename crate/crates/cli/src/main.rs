//! `glnar` command line: simulate, ingest, fit, track, forecast, evaluate,
//! cross-validate and emit plot data for bounded power time series.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use glnar_core::archive::ForecastArchive;
use glnar_core::batch::fit_batch;
use glnar_core::cv::{final_refit, run_grid, CvResult, CvScheme, FinalModel};
use glnar_core::data::{
    aggregate_turbines, coarsen, load_capacities, load_farm_csv_path, CoarseningConfig,
    PowerSeries,
};
use glnar_core::error::{Error, Result};
use glnar_core::metrics::{evaluate, improvement_table, EvaluationReport};
use glnar_core::models::{forecast_archive, EvalWindow, ModelKind};
use glnar_core::recursive::{run_series, RecursiveConfig};
use glnar_core::sim::{simulate, GENERATOR};
use serde::Serialize;

use config::{Mode, RunConfig};

#[derive(Parser)]
#[command(name = "glnar", version, about = "GLNAR forecasting pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration document (JSON or TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated model ids; defaults to all seven.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    /// Point or probabilistic mode; picks the selection metric and the
    /// default forgetting factor.
    #[arg(long, value_enum, default_value = "point")]
    mode: Mode,
}

#[derive(Subcommand)]
enum Command {
    /// Scale a wide farm CSV by nominal power and aggregate the turbines.
    Ingest(CommonArgs),
    /// Generate a synthetic stream with known parameters.
    Simulate(CommonArgs),
    /// Batch maximum-likelihood fit on the training history.
    FitBatch(CommonArgs),
    /// Online maximum-likelihood tracking over the whole series.
    FitRecursive(CommonArgs),
    /// One-step forecasts of the selected models over the test period.
    Forecast(CommonArgs),
    /// Score archived forecasts and write evaluation reports.
    Evaluate(CommonArgs),
    /// Expanding-window hyperparameter search per model.
    Cv(CommonArgs),
    /// Plot-ready CSVs from archived forecasts.
    EmitPlots(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Ingest(a) => ("ingest", a),
        Command::Simulate(a) => ("simulate", a),
        Command::FitBatch(a) => ("fit-batch", a),
        Command::FitRecursive(a) => ("fit-recursive", a),
        Command::Forecast(a) => ("forecast", a),
        Command::Evaluate(a) => ("evaluate", a),
        Command::Cv(a) => ("cv", a),
        Command::EmitPlots(a) => ("emit-plots", a),
    };
    match run(name, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("glnar {name}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(name: &str, args: &CommonArgs) -> Result<()> {
    let config = RunConfig::load(&args.config)?;
    std::fs::create_dir_all(&args.out)?;
    write_resolved_config(name, args, &config)?;
    match name {
        "ingest" => ingest(args, &config),
        "simulate" => simulate_cmd(args, &config),
        "fit-batch" => fit_batch_cmd(args, &config),
        "fit-recursive" => fit_recursive_cmd(args, &config),
        "forecast" => forecast_cmd(args, &config),
        "evaluate" => evaluate_cmd(args, &config),
        "cv" => cv_cmd(args, &config),
        "emit-plots" => emit_plots_cmd(args, &config),
        _ => unreachable!(),
    }
}

fn selected_models(args: &CommonArgs) -> Result<Vec<ModelKind>> {
    match &args.models {
        None => Ok(ModelKind::ALL.to_vec()),
        Some(names) => names.iter().map(|n| ModelKind::parse(n)).collect(),
    }
}

fn effective_seed(args: &CommonArgs, config: &RunConfig) -> u64 {
    args.seed.unwrap_or(config.seed)
}

fn write_resolved_config(name: &str, args: &CommonArgs, config: &RunConfig) -> Result<()> {
    #[derive(Serialize)]
    struct Resolved<'a> {
        command: &'a str,
        seed: u64,
        mode: Mode,
        models: Vec<&'static str>,
        config: &'a RunConfig,
    }
    let resolved = Resolved {
        command: name,
        seed: effective_seed(args, config),
        mode: args.mode,
        models: selected_models(args)?.iter().map(|k| k.id()).collect(),
        config,
    };
    write_json(&args.out.join("resolved_config.json"), &resolved)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Data(format!("cannot serialize {}: {e}", path.display())))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn load_series(args: &CommonArgs, config: &RunConfig) -> Result<PowerSeries> {
    let path = config.require_series_path()?;
    let path = if path.is_absolute() {
        path.to_path_buf()
    } else {
        args.config.parent().unwrap_or(Path::new(".")).join(path)
    };
    PowerSeries::read_csv(&path, config.resolution())
}

fn ingest(args: &CommonArgs, config: &RunConfig) -> Result<()> {
    let data = config
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("config lacks a [data] section".into()))?;
    let farm = data
        .farm_csv
        .as_ref()
        .ok_or_else(|| Error::Config("config lacks data.farm_csv".into()))?;
    let caps = data
        .capacities_csv
        .as_ref()
        .ok_or_else(|| Error::Config("config lacks data.capacities_csv".into()))?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let capacities = load_capacities(&base.join(caps))?;
    let turbines = load_farm_csv_path(&base.join(farm), &capacities, config.resolution())?;
    let aggregate = aggregate_turbines(turbines.values())?;
    aggregate.write_csv(&args.out.join("aggregate.csv"))?;
    println!(
        "ingested {} turbines into {} aggregate records",
        turbines.len(),
        aggregate.len()
    );
    Ok(())
}

fn simulate_cmd(args: &CommonArgs, config: &RunConfig) -> Result<()> {
    let seed = effective_seed(args, config);
    let spec = config.require_sim()?.to_spec(seed)?;
    let series = simulate(&spec)?;
    series.write_csv(&args.out.join("series.csv"))?;

    #[derive(Serialize)]
    struct TruthSegment<'a> {
        start: usize,
        theta: &'a glnar_core::gln::ThetaState,
    }
    #[derive(Serialize)]
    struct Truth<'a> {
        generator: &'static str,
        seed: u64,
        burn_in: usize,
        n: usize,
        trajectory: Vec<TruthSegment<'a>>,
    }
    let trajectory = spec.trajectory();
    let truth = Truth {
        generator: GENERATOR,
        seed,
        burn_in: spec.burn_in,
        n: spec.n,
        trajectory: trajectory
            .iter()
            .map(|(start, theta)| TruthSegment { start: *start, theta })
            .collect(),
    };
    write_json(&args.out.join("simulation_truth.json"), &truth)?;
    println!("simulated {} observations with seed {seed}", series.len());
    Ok(())
}

fn fit_batch_cmd(args: &CommonArgs, config: &RunConfig) -> Result<()> {
    let series = load_series(args, config)?;
    let model = config.model_section();
    let params = model.to_params(args.mode);
    // with a split, the fit uses the whole train + cross-validation history
    let history = match config.split {
        Some(split) => series.slice_time(None, split.cv_end),
        None => series,
    };
    let clipped = coarsen(&history, CoarseningConfig::new(params.delta)?);
    let fit = fit_batch(&clipped, params.p, &params.fit_options)?;
    write_json(&args.out.join("fit_batch.json"), &fit)?;
    println!(
        "fit ({} iterations, converged = {}): phi = {:?}, sigma2 = {:.4}, nu = {:.3}",
        fit.iterations,
        fit.converged,
        fit.theta.phi(),
        fit.theta.sigma2(),
        fit.theta.nu()
    );
    Ok(())
}

fn fit_recursive_cmd(args: &CommonArgs, config: &RunConfig) -> Result<()> {
    let series = load_series(args, config)?;
    let model = config.model_section();
    let params = model.to_params(args.mode);
    let clipped = coarsen(&series, CoarseningConfig::new(params.delta)?);
    let rc = RecursiveConfig::new(params.p, params.alpha, params.delta)?;
    let run = run_series(&clipped, &rc)?;

    let mut w = csv::Writer::from_path(args.out.join("trajectory.csv"))?;
    let mut header = vec!["timestamp".to_string()];
    header.extend((1..=params.p).map(|k| format!("phi_{k}")));
    header.push("sigma2".into());
    header.push("nu".into());
    w.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;
    for (ts, theta) in &run.trajectory {
        let mut row = vec![ts.to_rfc3339()];
        row.extend(theta.phi().iter().map(|v| v.to_string()));
        row.push(theta.sigma2().to_string());
        row.push(theta.nu().to_string());
        w.write_record(&row).map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush()?;
    write_json(&args.out.join("recursive_state.json"), &run.final_state)?;
    println!(
        "tracked {} observations (skipped {}); final theta = {:?}",
        run.trajectory.len(),
        run.skipped,
        run.final_state.theta()
    );
    Ok(())
}

fn forecast_cmd(args: &CommonArgs, config: &RunConfig) -> Result<()> {
    let series = load_series(args, config)?;
    let split = config.require_split()?;
    split.to_split_config()?;
    let params = config.model_section().to_params(args.mode);
    let window = EvalWindow { fit_end: split.cv_end, eval_end: split.test_end };
    for kind in selected_models(args)? {
        let archive = forecast_archive(kind, &series, window, &params)?;
        archive.write_files(&args.out)?;
        println!("{}: {} forecasts archived", kind.id(), archive.len());
    }
    Ok(())
}

fn evaluate_cmd(args: &CommonArgs, config: &RunConfig) -> Result<()> {
    let _ = config;
    let models = selected_models(args)?;
    let mut reports: Vec<EvaluationReport> = Vec::new();
    for kind in &models {
        let archive = ForecastArchive::read_files(&args.out, kind.id())?;
        reports.push(evaluate(&archive)?);
    }

    let baselines: Vec<String> = [ModelKind::Persistence, ModelKind::Climatology]
        .iter()
        .filter(|k| models.contains(k))
        .map(|k| k.id().to_string())
        .collect();
    if !baselines.is_empty() {
        let table = improvement_table(&reports, &baselines)?;
        for report in &mut reports {
            if let Some(entry) = table.get(&report.model_id) {
                report.improvements = entry.clone();
            }
        }
    }

    for report in &reports {
        write_json(&args.out.join(format!("evaluation_{}.json", report.model_id)), report)?;
    }
    write_json(&args.out.join("evaluation_summary.json"), &reports)?;

    println!("{:<18} {:>8} {:>8} {:>8}", "model", "records", "rmse%", "crps%");
    for r in &reports {
        println!(
            "{:<18} {:>8} {:>8.3} {:>8.3}",
            r.model_id, r.records, r.rmse_pct, r.crps_pct
        );
    }
    for baseline in &baselines {
        println!("improvements over {baseline} (rmse% / crps%):");
        for r in &reports {
            if let Some(imp) = r.improvements.get(baseline) {
                println!(
                    "  {:<16} {:>7.2} / {:>7.2}",
                    r.model_id, imp.rmse_pct, imp.crps_pct
                );
            }
        }
    }
    Ok(())
}

fn cv_cmd(args: &CommonArgs, config: &RunConfig) -> Result<()> {
    let series = load_series(args, config)?;
    let split = config.require_split()?;
    split.to_split_config()?;
    let metric = args.mode.metric();
    let grid = config
        .grid
        .clone()
        .unwrap_or(config::GridSection { p: None, delta: None, alpha: None })
        .to_grid(metric);
    let scheme = CvScheme { fit_end: split.train_end, cv_end: split.cv_end };
    let base = config.model_section().to_params(args.mode);

    #[derive(Serialize)]
    struct CvOutput {
        result: CvResult,
        final_model: FinalModel,
    }
    for kind in selected_models(args)? {
        let result = run_grid(&series, kind, &grid, scheme, &base)?;
        let final_model = final_refit(&series, kind, result.selected, scheme, &base)?;
        println!(
            "{}: selected p = {}, delta = {:?}, alpha = {:?}",
            kind.id(),
            result.selected.p,
            result.selected.delta,
            result.selected.alpha
        );
        write_json(
            &args.out.join(format!("cv_{}.json", kind.id())),
            &CvOutput { result, final_model },
        )?;
    }
    Ok(())
}

fn emit_plots_cmd(args: &CommonArgs, config: &RunConfig) -> Result<()> {
    let _ = config;
    let models = selected_models(args)?;
    let mut brier = csv::Writer::from_path(args.out.join("brier_curve.csv"))?;
    brier
        .write_record(["model", "threshold", "brier_score"])
        .map_err(|e| Error::Data(e.to_string()))?;
    let mut rel = csv::Writer::from_path(args.out.join("reliability.csv"))?;
    rel.write_record(["model", "nominal", "empirical"])
        .map_err(|e| Error::Data(e.to_string()))?;
    let mut marginal = csv::Writer::from_path(args.out.join("marginal_calibration.csv"))?;
    marginal
        .write_record(["model", "value", "gap"])
        .map_err(|e| Error::Data(e.to_string()))?;
    let mut intervals = csv::Writer::from_path(args.out.join("intervals.csv"))?;
    intervals
        .write_record([
            "model",
            "timestamp",
            "observation",
            "q_0.025",
            "q_0.125",
            "median",
            "q_0.875",
            "q_0.975",
        ])
        .map_err(|e| Error::Data(e.to_string()))?;

    for kind in models {
        let archive = ForecastArchive::read_files(&args.out, kind.id())?;
        let report = evaluate(&archive)?;
        for point in &report.brier_curve {
            brier
                .write_record([kind.id(), &point.x.to_string(), &point.y.to_string()])
                .map_err(|e| Error::Data(e.to_string()))?;
        }
        for point in &report.reliability {
            rel.write_record([kind.id(), &point.x.to_string(), &point.y.to_string()])
                .map_err(|e| Error::Data(e.to_string()))?;
        }
        for point in &report.marginal_calibration {
            marginal
                .write_record([kind.id(), &point.x.to_string(), &point.y.to_string()])
                .map_err(|e| Error::Data(e.to_string()))?;
        }
        for record in &archive.records {
            let q = |tau: f64| record.predictive.quantile(tau).map(|v| v.to_string());
            intervals
                .write_record([
                    kind.id().to_string(),
                    record.timestamp.to_rfc3339(),
                    record.observation.to_string(),
                    q(0.025)?,
                    q(0.125)?,
                    q(0.5)?,
                    q(0.875)?,
                    q(0.975)?,
                ])
                .map_err(|e| Error::Data(e.to_string()))?;
        }
    }
    brier.flush()?;
    rel.flush()?;
    marginal.flush()?;
    intervals.flush()?;
    println!("plot data written");
    Ok(())
}
