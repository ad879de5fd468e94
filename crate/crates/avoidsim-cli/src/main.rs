//! Scenario simulator CLI: closed-loop runs, classifier training, comfort
//! reports, run comparison, SVG plots, and parameter sweeps.
//!
//! Exit codes: 0 success, 1 validation error (bad config, bad arguments,
//! malformed inputs), 2 runtime failure.

use avoidsim_core::comfort::{
    load_model, read_dataset, save_model, synth_dataset, train, ClassifierKind, SynthConfig,
    TrainOptions,
};
use avoidsim_core::plot::{
    field_grid_csv, heatmap_svg, overlay_svg, sample_field_grid, timeseries_svg, trajectory_svg,
    SceneGeometry,
};
use avoidsim_core::sim::{
    comfort_report, compare_runs, read_csv, run_scenario_traced, write_csv, CompareScene,
    ScenarioConfig, SimError, SimLog,
};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "avoidsim", version, about = "Comfort-aware obstacle avoidance simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its CSV log.
    Run(RunArgs),
    /// Train a comfort classifier and persist it.
    Train(TrainArgs),
    /// Classify every step of a log and print the label counts.
    Report(ReportArgs),
    /// Compare two runs of the same scenario geometry.
    Compare(CompareArgs),
    /// Render SVG plots from a log (and optionally the potential field).
    Plot(PlotArgs),
    /// Run a scenario once per value of a swept parameter.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// template_matching | class_center_euclidean | mahalanobis | bayes_min_risk
    #[arg(long)]
    kind: String,
    /// Training dataset CSV; mutually exclusive with --synth.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Use the built-in synthetic dataset.
    #[arg(long)]
    synth: bool,
    /// Seed for --synth.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Scenario file providing obstacle geometry for clearance columns.
    #[arg(long)]
    scenario: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    log: PathBuf,
    /// Also render the potential-field heatmap (needs --scenario).
    #[arg(long)]
    field: bool,
    /// Scenario file providing road/obstacle geometry and bounds.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Dotted config path, e.g. planner.weights.s_obstacle.
    #[arg(long)]
    param: String,
    /// Comma-separated values, e.g. 30,40,50,60,70,80.
    #[arg(long)]
    values: String,
    #[arg(long, default_value = "sweep_out")]
    out: PathBuf,
}

enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => CliError::Validation(c.to_string()),
            SimError::Comfort(c) => CliError::Validation(c.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn io_err(e: std::io::Error, what: &str) -> CliError {
    CliError::runtime(format!("{what}: {e}"))
}

fn load_log(path: &Path) -> Result<SimLog, CliError> {
    read_csv(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn scene_from(cfg: &ScenarioConfig) -> Result<SceneGeometry, CliError> {
    Ok(SceneGeometry {
        road: cfg.road.geometry().map_err(|e| CliError::validation(e.to_string()))?,
        obstacles: cfg.obstacles.clone(),
    })
}

fn count_labels(log: &SimLog) -> [usize; 3] {
    let mut counts = [0usize; 3];
    for r in &log.rows {
        counts[r.comfort_class.index()] += 1;
    }
    counts
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let cfg =
        ScenarioConfig::load(&args.scenario).map_err(|e| CliError::validation(e.to_string()))?;
    let (log, trace) = run_scenario_traced(&cfg)?;
    std::fs::create_dir_all(&args.out).map_err(|e| io_err(e, "create out dir"))?;
    let log_path = args.out.join("log.csv");
    write_csv(&log, &log_path).map_err(|e| CliError::runtime(e.to_string()))?;

    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let counts = count_labels(&log);
    let meta = format!(
        "config_hash={}\nseed={}\nversion={}\nunix_time={now}\nrows={}\nmin_clearance={:.4}\nfinal_offset={:.4}\ngood={} normal={} poor={}\n",
        log.meta.config_hash,
        log.meta.seed,
        log.meta.version,
        log.rows.len(),
        trace.min_clearance,
        log.rows.last().map(|r| r.y).unwrap_or(0.0),
        counts[0],
        counts[1],
        counts[2],
    );
    std::fs::write(args.out.join("run_meta.txt"), meta).map_err(|e| io_err(e, "write meta"))?;
    println!(
        "wrote {} ({} rows, min clearance {:.2} m, comfort good/normal/poor = {}/{}/{})",
        log_path.display(),
        log.rows.len(),
        trace.min_clearance,
        counts[0],
        counts[1],
        counts[2],
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let kind = ClassifierKind::from_name(&args.kind).ok_or_else(|| {
        CliError::validation(format!(
            "unknown classifier kind `{}`; expected one of template_matching, \
             class_center_euclidean, mahalanobis, bayes_min_risk",
            args.kind
        ))
    })?;
    let data = match (&args.data, args.synth) {
        (Some(_), true) => {
            return Err(CliError::validation("--data and --synth are mutually exclusive"))
        }
        (Some(path), false) => {
            read_dataset(path).map_err(|e| CliError::validation(e.to_string()))?
        }
        (None, true) => {
            let cfg = SynthConfig { seed: args.seed, ..Default::default() };
            synth_dataset(&cfg).map_err(|e| CliError::validation(e.to_string()))?
        }
        (None, false) => return Err(CliError::validation("provide --data <csv> or --synth")),
    };
    let model =
        train(&data, kind, &TrainOptions::default()).map_err(|e| CliError::validation(e.to_string()))?;
    save_model(&model, &args.out).map_err(|e| CliError::runtime(e.to_string()))?;
    println!("trained {} on {} samples -> {}", kind.name(), data.len(), args.out.display());
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let log = load_log(&args.log)?;
    let model = load_model(&args.model).map_err(|e| CliError::validation(e.to_string()))?;
    let report = comfort_report(&log, &model)?;
    println!("good,normal,poor,total");
    println!("{},{},{},{}", report.good(), report.normal(), report.poor(), report.total);
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<(), CliError> {
    let log_a = load_log(&args.a)?;
    let log_b = load_log(&args.b)?;
    let model = load_model(&args.model).map_err(|e| CliError::validation(e.to_string()))?;
    let scene = match &args.scenario {
        Some(path) => {
            let cfg =
                ScenarioConfig::load(path).map_err(|e| CliError::validation(e.to_string()))?;
            Some(CompareScene {
                obstacles: cfg.obstacles.clone(),
                vehicle_half_width: cfg.vehicle.half_width,
            })
        }
        None => None,
    };
    let report = compare_runs(&log_a, &log_b, &model, scene.as_ref())?;
    print!("{}", report.to_text());
    Ok(())
}

fn cmd_plot(args: &PlotArgs) -> Result<(), CliError> {
    let log = load_log(&args.log)?;
    let cfg = match &args.scenario {
        Some(path) => {
            Some(ScenarioConfig::load(path).map_err(|e| CliError::validation(e.to_string()))?)
        }
        None => None,
    };
    if args.field && cfg.is_none() {
        return Err(CliError::validation("--field needs --scenario for road and obstacles"));
    }
    std::fs::create_dir_all(&args.out).map_err(|e| io_err(e, "create out dir"))?;

    let scene = match &cfg {
        Some(c) => Some(scene_from(c)?),
        None => None,
    };
    let bounds = cfg.as_ref().map(|c| c.tracker.bounds).unwrap_or_default();

    let mut written = Vec::new();
    let traj = args.out.join("trajectory.svg");
    std::fs::write(&traj, trajectory_svg(&log, scene.as_ref()))
        .map_err(|e| io_err(e, "write svg"))?;
    written.push(traj);
    let ts = args.out.join("timeseries.svg");
    std::fs::write(&ts, timeseries_svg(&log, &bounds)).map_err(|e| io_err(e, "write svg"))?;
    written.push(ts);

    if args.field {
        let cfg = cfg.as_ref().unwrap();
        let scene = scene.as_ref().unwrap();
        let x_max = log
            .rows
            .iter()
            .map(|r| r.x)
            .fold(0.0f64, f64::max)
            .max(cfg.obstacles.iter().map(|o| o.xo + 20.0).fold(0.0, f64::max));
        let grid = sample_field_grid(
            &cfg.obstacles,
            &scene.road,
            &cfg.fields.obstacle,
            &cfg.fields.road,
            cfg.speed_kmh / 3.6,
            (0.0, x_max.max(10.0)),
            (scene.road.y_min() - 1.0, scene.road.y_max() + 1.0),
            160,
            48,
        );
        let heat = args.out.join("field_heatmap.svg");
        std::fs::write(&heat, heatmap_svg(&grid, Some(scene)))
            .map_err(|e| io_err(e, "write svg"))?;
        written.push(heat);
        let grid_csv = args.out.join("field_grid.csv");
        std::fs::write(&grid_csv, field_grid_csv(&grid)).map_err(|e| io_err(e, "write csv"))?;
        written.push(grid_csv);
    }
    for p in &written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let base =
        ScenarioConfig::load(&args.scenario).map_err(|e| CliError::validation(e.to_string()))?;
    let values: Vec<f64> = args
        .values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| CliError::validation(format!("bad sweep value `{v}`: {e}")))
        })
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err(CliError::validation("--values must list at least one number"));
    }
    // Validate the parameter path up front, before spawning runs.
    {
        let mut probe = base.clone();
        probe.set_param(&args.param, values[0]).map_err(|e| CliError::validation(e.to_string()))?;
    }
    std::fs::create_dir_all(&args.out).map_err(|e| io_err(e, "create out dir"))?;

    // Each run owns its config and writes to its own subdirectory.
    let results: Vec<Result<(f64, SimLog, f64), String>> = std::thread::scope(|scope| {
        let handles: Vec<_> = values
            .iter()
            .map(|&value| {
                let mut cfg = base.clone();
                let param = args.param.clone();
                let out = args.out.clone();
                scope.spawn(move || {
                    cfg.set_param(&param, value).map_err(|e| e.to_string())?;
                    let (log, trace) = run_scenario_traced(&cfg).map_err(|e| e.to_string())?;
                    let dir = out.join(format!("run_{value}"));
                    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
                    write_csv(&log, &dir.join("log.csv")).map_err(|e| e.to_string())?;
                    Ok((value, log, trace.min_clearance))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep thread panicked")).collect()
    });

    let mut runs = Vec::new();
    for r in results {
        match r {
            Ok(v) => runs.push(v),
            Err(e) => return Err(CliError::runtime(e)),
        }
    }
    runs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let scene = scene_from(&base)?;
    let named: Vec<(String, &SimLog)> =
        runs.iter().map(|(v, log, _)| (format!("{}={v}", args.param), log)).collect();
    let overlay = args.out.join("overlay.svg");
    std::fs::write(&overlay, overlay_svg(&named, Some(&scene)))
        .map_err(|e| io_err(e, "write overlay"))?;

    println!("value,rows,min_clearance,onset_distance_m");
    for (value, log, min_clear) in &runs {
        let onset = onset_distance(log, &base);
        println!(
            "{value},{},{min_clear:.3},{}",
            log.rows.len(),
            onset.map(|d| format!("{d:.2}")).unwrap_or_else(|| "n/a".into())
        );
    }
    println!("wrote {}", overlay.display());
    Ok(())
}

/// Distance from the first obstacle at which the executed trajectory first
/// deviates 0.1 m laterally from its start lane.
fn onset_distance(log: &SimLog, cfg: &ScenarioConfig) -> Option<f64> {
    let obs = cfg.obstacles.first()?;
    let y0 = log.rows.first()?.y;
    let onset = log.rows.iter().find(|r| (r.y - y0).abs() > 0.1)?;
    Some(obs.xo - onset.x)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Train(args) => cmd_train(args),
        Command::Report(args) => cmd_report(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Plot(args) => cmd_plot(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
