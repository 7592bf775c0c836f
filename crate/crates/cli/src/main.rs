//! `wbc`: run scenarios, parameter sweeps and the normal-estimation benchmark.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use wbc_core::terrain::bench::{plane_suite, Neighborhood};
use wbc_core::terrain::io::write_map_csv;
use wbc_core::terrain::MapConfig;
use wbc_sim::bench::{ramp_pipeline, RampSetup};
use wbc_sim::runner::{write_log_csv, write_psi_trace};
use wbc_sim::{run_scenario, Metrics, RunOptions, RunOutput, Scenario, TerrainKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Run,
    BenchNormals,
    Sweep,
}

#[derive(Debug, Parser)]
#[command(name = "wbc", version, about = "Whole-body control scenarios for a wheeled biped")]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "WBC_OUT_DIR", default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "run")]
    mode: Mode,
    /// Scenario override `KEY=VALUE` with dotted keys, e.g. `controller.lqr_r=2`.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Key varied in sweep mode.
    #[arg(long, value_name = "KEY")]
    sweep: Option<String>,
    /// One sweep value; repeat for more.
    #[arg(long = "value", value_name = "VALUE")]
    values: Vec<String>,
    /// Write the per-solve HQP residual table.
    #[arg(long)]
    hqp_debug: bool,
    /// Monte-Carlo trials per plane-suite cell.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Progress on stderr.
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Scenario(String),
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) | CliError::Scenario(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Scenario(m) | CliError::Failed(m) => f.write_str(m),
        }
    }
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Failed(format!("cannot write {}: {e}", path.display()))
}

fn parse_params(raw: &[String]) -> Result<Vec<(String, String)>, CliError> {
    raw.iter()
        .map(|p| match p.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
            _ => Err(CliError::Usage(format!("bad --param `{p}` (expected KEY=VALUE)"))),
        })
        .collect()
}

fn load(cli: &Cli, extra: &[(String, String)]) -> Result<Scenario, CliError> {
    let path = cli.scenario.as_ref().ok_or_else(|| CliError::Usage("--scenario is required for this mode".into()))?;
    let mut overrides = parse_params(&cli.params)?;
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    overrides.extend_from_slice(extra);
    Scenario::from_file(path, &overrides).map_err(|e| CliError::Scenario(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

/// Writes every artifact of one run into `dir`.
fn write_artifacts(dir: &Path, scenario: &Scenario, output: &RunOutput) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join("log.csv");
    write_log_csv(&output.records, create(&path)?).map_err(|e| io_err(&path, e))?;
    let path = dir.join("metrics.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &output.metrics).map_err(|e| io_err(&path, e.into()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| io_err(&path, e))?;
    if matches!(scenario.terrain.kind, TerrainKind::Slope { .. }) {
        let path = dir.join("psi_trace.csv");
        write_psi_trace(&output.records, create(&path)?).map_err(|e| io_err(&path, e))?;
    }
    if let Some(map) = &output.normal_map {
        let path = dir.join("normal_map.csv");
        write_map_csv(map, create(&path)?).map_err(|e| io_err(&path, e))?;
    }
    if let Some(buf) = &output.hqp_debug {
        let path = dir.join("hqp_debug.csv");
        fs::write(&path, buf).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

fn failure_message(m: &Metrics) -> Option<String> {
    m.failure.as_ref().map(|f| match f.level {
        Some(level) => format!("scenario `{}` failed at t = {:.4} s, priority level {level}: {}", m.scenario, f.t, f.message),
        None => format!("scenario `{}` failed at t = {:.4} s: {}", m.scenario, f.t, f.message),
    })
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let scenario = load(cli, &[])?;
    if cli.verbose > 0 {
        eprintln!("running {} ({} s, {})", scenario.name, scenario.duration, scenario.estimation_mode.as_str());
    }
    let output = run_scenario(&scenario, &RunOptions { hqp_debug: cli.hqp_debug }).map_err(|e| CliError::Failed(e.to_string()))?;
    write_artifacts(&cli.out, &scenario, &output)?;
    let text = serde_json::to_string_pretty(&output.metrics).expect("metrics serialize");
    println!("{text}");
    if output.metrics.fell {
        eprintln!("note: robot fell at t = {:.3} s", output.metrics.fell_time.unwrap_or(f64::NAN));
    }
    match failure_message(&output.metrics) {
        Some(msg) => Err(CliError::Failed(msg)),
        None => Ok(()),
    }
}

fn sanitize(v: &str) -> String {
    v.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn sweep(cli: &Cli) -> Result<(), CliError> {
    let key = cli.sweep.as_ref().ok_or_else(|| CliError::Usage("sweep mode needs --sweep KEY".into()))?;
    if cli.values.is_empty() {
        return Err(CliError::Usage("sweep mode needs at least one --value".into()));
    }
    let scenarios = cli
        .values
        .iter()
        .map(|v| load(cli, &[(key.clone(), v.clone())]))
        .collect::<Result<Vec<_>, _>>()?;
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let options = RunOptions { hqp_debug: cli.hqp_debug };
    let mut results = Vec::with_capacity(scenarios.len());
    for chunk in scenarios.chunks(workers) {
        let outputs: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|sc| s.spawn(|| run_scenario(sc, &options))).collect();
            handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
        });
        results.extend(outputs);
    }
    let path = cli.out.join("sweep.csv");
    fs::create_dir_all(&cli.out).map_err(|e| io_err(&cli.out, e))?;
    let mut table = create(&path)?;
    let header = "value,completed,fell,settle_time,max_abs_delta_pitch,max_abs_r_com_x,max_abs_height_error,max_abs_roll,com_dev_enter,com_dev_exit,psi_error_mean";
    writeln!(table, "{header}").map_err(|e| io_err(&path, e))?;
    println!("{}", header.replace(',', "\t"));
    let mut failed = Vec::new();
    for (i, ((value, scenario), result)) in cli.values.iter().zip(&scenarios).zip(results).enumerate() {
        let output = result.map_err(|e| CliError::Failed(format!("{key}={value}: {e}")))?;
        write_artifacts(&cli.out.join(format!("{i:02}_{}", sanitize(value))), scenario, &output)?;
        let m = &output.metrics;
        let row = [
            value.clone(),
            m.completed.to_string(),
            m.fell.to_string(),
            opt(m.settle_time),
            format!("{:.4}", m.max_abs_delta_pitch),
            format!("{:.4}", m.max_abs_r_com_x),
            format!("{:.4}", m.max_abs_height_error),
            format!("{:.4}", m.max_abs_roll),
            opt(m.com_dev_enter),
            opt(m.com_dev_exit),
            opt(m.psi_error_mean),
        ];
        writeln!(table, "{}", row.iter().map(|c| if c.contains(',') { format!("\"{c}\"") } else { c.clone() }).collect::<Vec<_>>().join(","))
            .map_err(|e| io_err(&path, e))?;
        println!("{}", row.join("\t"));
        failed.extend(failure_message(m));
    }
    table.flush().map_err(|e| io_err(&path, e))?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(failed.join("\n")))
    }
}

fn bench_normals(cli: &Cli) -> Result<(), CliError> {
    let seed = cli.seed.unwrap_or(7);
    let angles = [0.0, 15.0, 25.0, 45.0];
    let sigmas = [0.0, 0.01, 0.05];
    let ranges = [(10, 60), (30, 300)];
    let mut nbs = vec![Neighborhood::Fixed(30)];
    nbs.extend(ranges.iter().map(|&(k_min, k_max)| Neighborhood::Adaptive { k_min, k_max }));
    fs::create_dir_all(&cli.out).map_err(|e| io_err(&cli.out, e))?;
    let path = cli.out.join("bench_normals.csv");
    let mut csv = create(&path)?;
    writeln!(csv, "suite,angle_deg,sigma,k,trials,mean_error_deg,max_error_deg,failures").map_err(|e| io_err(&path, e))?;

    println!("plane suite ({} trials per cell)", cli.trials);
    println!("{:>6} {:>6} {:>12} {:>10} {:>10} {:>5}", "angle", "sigma", "k", "mean[deg]", "max[deg]", "fail");
    for row in plane_suite(&angles, &sigmas, &nbs, cli.trials, seed) {
        let k = row.neighborhood.to_string();
        println!(
            "{:>6.1} {:>6.3} {:>12} {:>10.4} {:>10.4} {:>5}",
            row.angle_deg, row.sigma, k, row.mean_error_deg, row.max_error_deg, row.failures
        );
        writeln!(csv, "plane,{},{},\"{k}\",{},{},{},{}", row.angle_deg, row.sigma, row.trials, row.mean_error_deg, row.max_error_deg, row.failures)
            .map_err(|e| io_err(&path, e))?;
    }

    println!("\nramp pipeline (LiDAR frames -> map -> lookahead query -> filter)");
    println!("{:>6} {:>6} {:>12} {:>10} {:>10} {:>10}", "angle", "sigma", "k", "mean[deg]", "max[deg]", "psi_hat");
    for angle in [15.0, 25.0] {
        for sigma in sigmas {
            for (k_min, k_max) in ranges {
                let mut setup = RampSetup::new(angle, sigma);
                setup.map = MapConfig { k_min, k_max, ..MapConfig::default() };
                let r = ramp_pipeline(&setup, seed);
                let k = format!("k=[{k_min},{k_max}]");
                println!(
                    "{:>6.1} {:>6.3} {:>12} {:>10.4} {:>10.4} {:>10.3}",
                    angle, sigma, k, r.mean_error_deg, r.max_error_deg, r.psi_hat_mean
                );
                writeln!(csv, "ramp,{angle},{sigma},\"{k}\",{},{},{},0", r.samples, r.mean_error_deg, r.max_error_deg)
                    .map_err(|e| io_err(&path, e))?;
            }
        }
    }
    csv.flush().map_err(|e| io_err(&path, e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.mode {
        Mode::Run => run(&cli),
        Mode::Sweep => sweep(&cli),
        Mode::BenchNormals => bench_normals(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
