use clap::{Parser, Subcommand};
use flownav::flowfields::{rasterize, save_fgm, FgmEncoding, GridGeometry};
use flownav::harness::{
    monte_carlo, read_aggregate_csv, render_svg, write_aggregate_csv, write_crlb_csv, write_estimate_csv, FlowSpec,
    HarnessError, RunSummary, Scenario, ScenarioConfig, Series,
};
use flownav::turbulence::{build_ks, KsParams};
use flownav::vehicle_sim::{write_adcp_csv, write_imu_csv};
use serde::Deserialize;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "flownav", version, about = "Current-aided inertial navigation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a built-in scenario (double_gyre, meander_jet, grid_surrogate) as JSON.
    Preset {
        name: String,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run a single realisation and write its estimate track.
    Simulate {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        run: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Also write the IMU and ADCP logs.
        #[arg(long)]
        logs: bool,
    },
    /// Monte Carlo runs with aggregate RMSE, 2-sigma and CRLB curves.
    Montecarlo {
        config: PathBuf,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Exit with status 3 if any run diverged.
        #[arg(long)]
        strict: bool,
    },
    /// Bound sequence along the scenario's truth trajectory.
    Crlb {
        config: PathBuf,
        #[arg(short, long, default_value = "crlb.csv")]
        out: PathBuf,
    },
    /// Build a KS turbulence field and write its modes as JSON.
    Ksgen {
        params: PathBuf,
        #[arg(short, long, default_value = "ks_modes.json")]
        out: PathBuf,
    },
    /// Sample a flow onto a grid and write it as an FGM file.
    Rasterize {
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "binary")]
        encoding: Encoding,
    },
    /// Line chart of aggregate CSV columns.
    Plot {
        aggregate: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Comma-separated column names.
        #[arg(long, default_value = "rmse_pos,two_sigma_pos,crlb_pos")]
        channels: String,
        #[arg(long)]
        log: bool,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Encoding {
    Binary,
    Ascii,
}

#[derive(Deserialize)]
struct RasterizeConfig {
    source: FlowSpec,
    geometry: GridGeometry,
}

fn load_config(path: &Path) -> Result<ScenarioConfig, HarnessError> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Ok(seed) = std::env::var("FLOWNAV_SEED") {
        cfg.master_seed = seed.trim().parse().map_err(|_| HarnessError::Config(format!("FLOWNAV_SEED={seed} is not a u64")))?;
    }
    Ok(cfg)
}

fn out_dir(cli: Option<PathBuf>, cfg: &ScenarioConfig) -> Result<PathBuf, HarnessError> {
    let dir = cli.or_else(|| cfg.output_dir.as_ref().map(|d| cfg.base_dir.join(d))).unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    Ok(BufWriter::new(File::create(path)?))
}

fn execute(cmd: Command) -> Result<u8, HarnessError> {
    match cmd {
        Command::Preset { name, out } => {
            let cfg = ScenarioConfig::preset(&name).ok_or_else(|| HarnessError::Config(format!("unknown preset {name}")))?;
            match out {
                Some(path) => fs::write(path, cfg.to_json())?,
                None => println!("{}", cfg.to_json()),
            }
            Ok(0)
        }
        Command::Simulate { config, run, out, logs } => {
            let cfg = load_config(&config)?;
            let dir = out_dir(out, &cfg)?;
            let scenario = Scenario::prepare(&cfg)?;
            if logs {
                let r = scenario.realize(run)?;
                write_imu_csv(&r.imu, create(&dir.join("imu.csv"))?)?;
                write_adcp_csv(&r.adcp, create(&dir.join("adcp.csv"))?)?;
            }
            let result = scenario.run(run)?;
            write_estimate_csv(&result, create(&dir.join("estimate.csv"))?)?;
            let summary = RunSummary::from(&result);
            fs::write(dir.join("run_summary.json"), serde_json::to_string_pretty(&summary).expect("serializable"))?;
            println!(
                "run {run}: terminal error mpf {:.1} m, dr {:.1} m, ekf {:.1} m over {:.0} m; UDT {:.4}; diverged {}",
                summary.terminal_mpf_m, summary.terminal_dr_m, summary.terminal_ekf_m, summary.distance_m, summary.udt_mpf, summary.diverged
            );
            Ok(0)
        }
        Command::Montecarlo { config, runs, jobs, out, strict } => {
            let cfg = load_config(&config)?;
            let dir = out_dir(out, &cfg)?;
            let n = runs.unwrap_or(cfg.runs);
            let (agg, _) = monte_carlo(&cfg, n, jobs)?;
            write_aggregate_csv(&agg, create(&dir.join("aggregate.csv"))?)?;
            fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&agg.summary).expect("serializable"))?;
            let s = &agg.summary;
            println!(
                "{}: {} runs, mean UDT mpf {:.4} (sd {:.4}), dr {:.4}, ekf {:.4}, divergence rate {:.2}",
                s.scenario, s.runs, s.mean_udt_mpf, s.sd_udt_mpf, s.mean_udt_dr, s.mean_udt_ekf, s.divergence_rate
            );
            Ok(if strict && s.divergence_rate > 0.0 { EXIT_DIVERGED } else { 0 })
        }
        Command::Crlb { config, out } => {
            let cfg = load_config(&config)?;
            let scenario = Scenario::prepare(&cfg)?;
            let seq = scenario.crlb()?;
            write_crlb_csv(&seq, cfg.adcp_stride(), create(&out)?)?;
            let last = seq.times.len() - 1;
            println!("terminal position bound {:.2} m", seq.position_sd(last));
            Ok(0)
        }
        Command::Ksgen { params, out } => {
            let params: KsParams = read_json(&params)?;
            let field = build_ks(&params)?;
            fs::write(&out, serde_json::to_string_pretty(&field).expect("serializable"))?;
            println!("{} modes, dissipation rate {:.6e} m^2/s^3", field.modes.len(), field.epsilon);
            Ok(0)
        }
        Command::Rasterize { config, out, encoding } => {
            let rc: RasterizeConfig = read_json(&config)?;
            let base = config.parent().map(Path::to_path_buf).unwrap_or_default();
            let grid = rasterize(&rc.source.build(&base)?, &rc.geometry)?;
            let enc = match encoding {
                Encoding::Binary => FgmEncoding::Binary,
                Encoding::Ascii => FgmEncoding::Ascii,
            };
            save_fgm(&grid, &out, enc)?;
            Ok(0)
        }
        Command::Plot { aggregate, out, channels, log } => {
            let cols = read_aggregate_csv(File::open(&aggregate)?)?;
            let find = |name: &str| cols.iter().find(|(n, _)| n == name).map(|(_, v)| v);
            let t = find("t").ok_or_else(|| HarnessError::Config("aggregate has no t column".into()))?;
            let hours: Vec<f64> = t.iter().map(|s| s / 3600.0).collect();
            let mut series = Vec::new();
            for name in channels.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let y = find(name).ok_or_else(|| HarnessError::Config(format!("no column {name}")))?;
                series.push(Series { name, x: &hours, y });
            }
            let title = aggregate.file_stem().and_then(|s| s.to_str()).unwrap_or("aggregate");
            fs::write(&out, render_svg(&series, title, "time [h]", "[m or m/s]", log))?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { 1 })
        }
    }
}
