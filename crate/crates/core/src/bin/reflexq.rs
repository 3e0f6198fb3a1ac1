use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use reflexq::config::{ExperimentConfig, Method, RecordSource};
use reflexq::dynamics::{discretize, simulate_uncontrolled};
use reflexq::excitation::{load_at2, load_csv, resample};
use reflexq::gamma_filter::{probe_and_build, FilterConfig};
use reflexq::report::{build_report, reward_path};
use reflexq::reward::uncontrolled_peaks;
use reflexq::trainer::{
    format_summary_table, prepare, run_dir, run_many, run_to_dir, write_series_csv,
    write_summary_csv, write_trace_csv, FILTER_FILE, PROBE_TRACE_FILE, UNCONTROLLED_TRACE_FILE,
};
use reflexq::{Error, Result};

#[derive(Parser)]
#[command(name = "reflexq", version, about = "Delayed-action Q-learning for seismic control of an SDOF frame")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config with dotted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ground-motion record (.AT2 or two-column CSV).
    #[arg(long)]
    record: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply_overrides(&self.overrides)?;
        if let Some(path) = &self.record {
            cfg.record = RecordSource::File { path: path.clone() };
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Uncontrolled response trace and peak values.
    SimulateUncontrolled {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Probe the environment and write the reflexive γ filter.
    BuildFilter {
        #[command(flatten)]
        common: Common,
        /// Action-effect delay in seconds.
        #[arg(long)]
        delay: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a controller and write all run artifacts.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = ["original", "enhanced"])]
        method: Option<String>,
        #[arg(long)]
        delay: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Several seeds, e.g. `0,1,2` or `0..5`; one subdirectory each.
        #[arg(long, conflicts_with = "seed")]
        seeds: Option<String>,
        /// Parallel workers for `--seeds`.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate finished runs into one comparison table.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("cannot parse seeds {spec:?}"));
    if let Some((a, b)) = spec.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        return Ok((a..b).collect());
    }
    spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::File {
        path: dir.into(),
        source: e,
    })
}

fn simulate_cmd(common: &Common, out: &Path) -> Result<()> {
    let cfg = common.load()?;
    cfg.structure.validate()?;
    let model = discretize(cfg.structure, cfg.dt())?;
    let motion = match &cfg.record {
        RecordSource::File { path } => {
            let is_at2 = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("at2"));
            let raw = if is_at2 { load_at2(path)? } else { load_csv(path)? };
            resample(&raw, cfg.dt())?
        }
        RecordSource::Synthetic { .. } => reflexq::trainer::load_record(&cfg)?.0,
    };
    let peaks = uncontrolled_peaks(&model, &motion)?;
    let trace = simulate_uncontrolled(&model, &motion)?;
    create_dir(out)?;
    write_trace_csv(out.join(UNCONTROLLED_TRACE_FILE), &trace)?;
    let summary = json!({
        "record": motion.name,
        "samples": motion.len(),
        "dt": motion.dt,
        "peak_displacement": peaks.displacement,
        "peak_velocity": peaks.velocity,
        "peak_acceleration": peaks.acceleration,
        "peak_ground_acceleration": motion.peak(),
    });
    let path = out.join("peaks.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary)?).map_err(|e| Error::File { path, source: e })?;
    println!(
        "{} samples; peak |u| {:.6} m, |v| {:.6} m/s, |a| {:.6} m/s2",
        motion.len(),
        peaks.displacement,
        peaks.velocity,
        peaks.acceleration
    );
    Ok(())
}

fn build_filter_cmd(common: &Common, delay: Option<f64>, out: &Path) -> Result<()> {
    let mut cfg = common.load()?;
    if let Some(d) = delay {
        cfg.delay_seconds = d;
    }
    cfg.structure.validate()?;
    let model = discretize(cfg.structure, cfg.dt())?;
    let steps = reflexq::dynamics::delay_steps(cfg.delay_seconds, cfg.dt())?;
    let fcfg = FilterConfig {
        probe_force: cfg.resolved_probe_force(),
        ..cfg.filter
    };
    let (response, filter) = probe_and_build(&model, steps, &fcfg)?;
    create_dir(out)?;
    filter.write_csv(out.join(FILTER_FILE))?;
    write_series_csv(out.join(PROBE_TRACE_FILE), "abs_displacement", &response)?;
    println!(
        "{} weights ({} leading zeros, peak at step {}), bootstrap {:.6}",
        filter.len(),
        filter.leading_zeros(),
        filter.peak_index(),
        filter.bootstrap_gamma
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_cmd(
    common: &Common,
    method: Option<&str>,
    delay: Option<f64>,
    seed: Option<u64>,
    seeds: Option<&str>,
    jobs: usize,
    episodes: Option<usize>,
    out: &Path,
) -> Result<()> {
    let mut cfg = common.load()?;
    if let Some(m) = method {
        cfg.method = Method::parse(m)?;
    }
    if let Some(d) = delay {
        cfg.delay_seconds = d;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(e) = episodes {
        cfg.episodes = e;
    }
    // fail on bad input before any worker starts
    prepare(&cfg)?;

    let Some(spec) = seeds else {
        let result = run_to_dir(cfg, out)?;
        print!("{}", format_summary_table(&result.summary()));
        return Ok(());
    };
    let configs: Vec<ExperimentConfig> = parse_seeds(spec)?
        .into_iter()
        .map(|s| ExperimentConfig { seed: s, ..cfg.clone() })
        .collect();
    let results = run_many(configs.clone(), jobs, |c| {
        let dir = run_dir(out, &c);
        run_to_dir(c, dir).map(|r| r.summary())
    });
    let mut rows = Vec::new();
    let mut first_error = None;
    for (c, r) in configs.iter().zip(results) {
        match r {
            Ok(summary) => rows.extend(summary),
            Err(e) => {
                eprintln!("seed {}: {e}", c.seed);
                first_error.get_or_insert(e);
            }
        }
    }
    print!("{}", format_summary_table(&rows));
    first_error.map_or(Ok(()), Err)
}

fn report_cmd(runs: &[PathBuf], out: &Path) -> Result<()> {
    let report = build_report(runs)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_summary_csv(out, &report.rows)?;
    let rpath = reward_path(out);
    std::fs::write(&rpath, &report.reward_csv).map_err(|e| Error::File { path: rpath, source: e })?;
    print!("{}", format_summary_table(&report.rows));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::SimulateUncontrolled { common, out } => simulate_cmd(common, out),
        Command::BuildFilter { common, delay, out } => build_filter_cmd(common, *delay, out),
        Command::Train {
            common,
            method,
            delay,
            seed,
            seeds,
            jobs,
            episodes,
            out,
        } => train_cmd(common, method.as_deref(), *delay, *seed, seeds.as_deref(), *jobs, *episodes, out),
        Command::Report { runs, out } => report_cmd(runs, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
