//! `ded-bench`: simulate, bound, estimate and benchmark dead-time detection
//! experiments.
//!
//! Every subcommand starts from an experiment description: either the TOML
//! file given with `--config` or the built-in nominal lidar setup
//! (K=1000, D=500, σ=10, θ=(1, 370.4, 0.003), Δ=0.1 ns). Individual flags
//! then override single fields. The TOML schema:
//!
//! ```toml
//! [model]
//! period = 1000
//! dead_time = 500
//! policy = "free_running"      # or "synchronous"
//! bin_width = 1e-10            # seconds per bin
//!
//! [pulse]
//! kind = "wrapped_gaussian"    # or kind = "tabulated", file = "pulse.txt"
//! sigma = 10.0
//!
//! [truth]
//! a = 1.0
//! tau = 370.4
//! b = 0.003
//!
//! [experiment]
//! horizons = [100000, 1000000]
//! replicates = 100
//! estimators = ["robust", "ose_robust", "mle_robust"]
//! master_seed = 7
//! metric = "full"              # or "a_tau_only"
//!
//! [generator]                  # optional
//! kind = "bump"
//! height = 0.15
//! sigma = 1.0
//! center = 70.0
//!
//! [theta_box]                  # optional
//! a = [1e-6, 1e3]
//! tau = [0.0, 1000.0]
//! b = [1e-9, 10.0]
//! ```

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ded_core::bench::{
    gating_table, rows_to_csv, rows_to_json, run_mc_with_threads, simulate_stream, BoxSpec,
    Generator, PulseSpec, TableFormat,
};
use ded_core::io::{write_event_stream, write_stats};
use ded_core::{
    bounds_report, emit, estimate_from_stream, Coords, DedError, ExperimentConfig, LidarParams,
    Method, PolicyKind, Result, ThetaBox,
};

const LONG_ABOUT: &str = "Simulate, bound, estimate and benchmark dead-time detection experiments.

Each subcommand starts from the TOML file given with --config, or from the nominal
lidar setup (K=1000, D=500, sigma=10, theta=(1, 370.4, 0.003), bin width 0.1 ns).
Flags override single fields.

Config sections: [model] period, dead_time, policy, bin_width (seconds);
[pulse] kind = \"wrapped_gaussian\" with sigma, or kind = \"tabulated\" with file;
[truth] a, tau, b; [experiment] horizons (bins), replicates, estimators,
master_seed, metric (\"full\" or \"a_tau_only\"); optional [generator] kind = \"bump\"
with height, sigma, center; optional [theta_box] a, tau, b as [lo, hi] pairs;
optional [optimizer] max_evals, rel_param_tol, rel_obj_tol.

Exit codes: 0 success, 2 configuration error, 3 data-integrity or I/O error,
4 numerical conditioning error.";

#[derive(Parser)]
#[command(name = "ded-bench", version, about = "Dead-time detection benchmark harness", long_about = LONG_ABOUT)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory and write its detection stream and/or statistics.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Horizon in bins.
        #[arg(long)]
        horizon: u64,
        #[arg(long)]
        seed: u64,
        /// Detection-stream output file.
        #[arg(long)]
        stream: Option<PathBuf>,
        /// Sufficient-statistics output file.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Dead-time-aware and dead-time-free bounds at the true parameter, as JSON.
    Bounds {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Monte Carlo risk table.
    Mc {
        #[command(flatten)]
        model: ModelArgs,
        /// Horizons in bins, comma separated.
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<u64>>,
        #[arg(long)]
        replicates: Option<usize>,
        /// Estimator tags, comma separated.
        #[arg(long, value_delimiter = ',')]
        estimators: Option<Vec<Method>>,
        #[arg(long)]
        seed: u64,
        /// `full` or `a_tau_only`.
        #[arg(long, value_parser = parse_coords)]
        metric: Option<Coords>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value = "csv")]
        format: TableFormat,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate θ from a detection-stream file and print a JSON report.
    Estimate {
        #[arg(long)]
        stream: PathBuf,
        /// Wrapped-Gaussian pulse width in bins.
        #[arg(long, conflicts_with = "pulse_file")]
        sigma: Option<f64>,
        /// Tabulated pulse histogram.
        #[arg(long)]
        pulse_file: Option<PathBuf>,
        #[arg(long, default_value = "ose_robust")]
        estimator: Method,
        /// Parameter box `a_lo,a_hi,tau_lo,tau_hi,b_lo,b_hi`.
        #[arg(long, value_delimiter = ',')]
        theta_box: Option<Vec<f64>>,
        /// Seconds per bin.
        #[arg(long, default_value_t = 1e-10)]
        bin_width: f64,
    },
    /// Exact against empirical gating frequencies, as CSV.
    Gating {
        #[command(flatten)]
        model: ModelArgs,
        /// Horizon in bins of the simulated run.
        #[arg(long, default_value_t = 10_000_000)]
        horizon: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Period K in bins.
    #[arg(long)]
    period: Option<usize>,
    /// Dead time D in bins.
    #[arg(long)]
    dead_time: Option<usize>,
    /// `free_running` or `synchronous`.
    #[arg(long)]
    policy: Option<PolicyKind>,
    /// Wrapped-Gaussian pulse width in bins.
    #[arg(long, conflicts_with = "pulse_file")]
    sigma: Option<f64>,
    /// Tabulated pulse histogram.
    #[arg(long)]
    pulse_file: Option<PathBuf>,
    /// True parameter `a,tau,b`.
    #[arg(long, value_delimiter = ',')]
    theta: Option<Vec<f64>>,
    /// Seconds per bin.
    #[arg(long)]
    bin_width: Option<f64>,
    /// Background bump `height,sigma,center` added to the generating rates.
    #[arg(long, value_delimiter = ',')]
    bump: Option<Vec<f64>>,
    /// Parameter box `a_lo,a_hi,tau_lo,tau_hi,b_lo,b_hi`.
    #[arg(long, value_delimiter = ',')]
    theta_box: Option<Vec<f64>>,
}

fn parse_coords(s: &str) -> std::result::Result<Coords, String> {
    match s {
        "full" => Ok(Coords::Full),
        "a_tau_only" => Ok(Coords::ATauOnly),
        other => Err(format!(
            "unknown metric `{other}`; expected full or a_tau_only"
        )),
    }
}

fn expect_len(flag: &str, values: &[f64], n: usize) -> Result<()> {
    if values.len() != n {
        return Err(DedError::Config(format!(
            "--{flag} takes {n} comma-separated values, got {}",
            values.len()
        )));
    }
    Ok(())
}

impl ModelArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        for (flag, values, n) in [
            ("theta", &self.theta, 3),
            ("bump", &self.bump, 3),
            ("theta-box", &self.theta_box, 6),
        ] {
            if let Some(v) = values {
                expect_len(flag, v, n)?;
            }
        }
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::nominal(vec![1_000_000], vec![Method::OseRobust], 0),
        };
        if let Some(k) = self.period {
            cfg.model.period = k;
        }
        if let Some(d) = self.dead_time {
            cfg.model.dead_time = d;
        }
        if let Some(p) = self.policy {
            cfg.model.policy = p;
        }
        if let Some(sigma) = self.sigma {
            cfg.pulse = PulseSpec::WrappedGaussian { sigma };
        }
        if let Some(file) = &self.pulse_file {
            cfg.pulse = PulseSpec::Tabulated { file: file.clone() };
        }
        if let Some(t) = &self.theta {
            cfg.truth = LidarParams::new(t[0], t[1], t[2]);
        }
        if let Some(w) = self.bin_width {
            cfg.model.bin_width = w;
        }
        if let Some(b) = &self.bump {
            cfg.generator = Generator::Bump {
                height: b[0],
                sigma: b[1],
                center: b[2],
            };
        }
        if let Some(v) = &self.theta_box {
            cfg.theta_box = Some(BoxSpec {
                a: [v[0], v[1]],
                tau: [v[2], v[3]],
                b: [v[4], v[5]],
            });
        }
        Ok(cfg)
    }
}

fn write_output(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| DedError::Io {
            path: path.clone(),
            source: e,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| DedError::Io {
                    path: "<stdout>".into(),
                    source: e,
                })
        }
    }
}

fn to_json(value: &serde_json::Value) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            model,
            horizon,
            seed,
            stream,
            stats,
        } => {
            let cfg = model.config()?;
            cfg.validate()?;
            let rate_model = cfg.rate_model()?;
            let rates = cfg.generating_rates(&rate_model)?;
            let dims = cfg.dims(horizon)?;
            let (summary, events) = simulate_stream(&rates, cfg.model.policy, dims, seed, 0)?;
            if let Some(path) = &stream {
                write_event_stream(path, &events)?;
            }
            if let Some(path) = &stats {
                write_stats(path, &summary)?;
            }
            let report = serde_json::json!({
                "K": dims.period,
                "D": dims.dead_time,
                "T": dims.horizon,
                "scheme": cfg.model.policy,
                "seed": seed,
                "detections": summary.total_detections(),
                "active_bins": summary.total_active(),
            });
            write_output(None, &to_json(&report))
        }
        Command::Bounds { model } => {
            let cfg = model.config()?;
            cfg.validate()?;
            let report = serde_json::to_value(bounds_report(&cfg)?).expect("serializable");
            write_output(None, &to_json(&report))
        }
        Command::Mc {
            model,
            horizons,
            replicates,
            estimators,
            seed,
            metric,
            threads,
            format,
            out,
        } => {
            let mut cfg = model.config()?;
            cfg.experiment.master_seed = seed;
            if let Some(h) = horizons {
                cfg.experiment.horizons = h;
            }
            if let Some(r) = replicates {
                cfg.experiment.replicates = r;
            }
            if let Some(e) = estimators {
                cfg.experiment.estimators = e;
            }
            if let Some(m) = metric {
                cfg.experiment.metric = m;
            }
            if cfg.experiment.estimators.is_empty() {
                return Err(DedError::Config("no estimators selected".into()));
            }
            let threads = threads
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let rows = run_mc_with_threads(&cfg, threads)?;
            match &out {
                Some(path) => emit(&rows, format, path),
                None => write_output(
                    None,
                    &match format {
                        TableFormat::Csv => rows_to_csv(&rows),
                        TableFormat::Json => rows_to_json(&rows),
                    },
                ),
            }
        }
        Command::Estimate {
            stream,
            sigma,
            pulse_file,
            estimator,
            theta_box,
            bin_width,
        } => {
            let pulse = match (sigma, pulse_file) {
                (_, Some(file)) => PulseSpec::Tabulated { file },
                (Some(sigma), None) => PulseSpec::WrappedGaussian { sigma },
                (None, None) => {
                    return Err(DedError::Config(
                        "a pulse is required: pass --sigma or --pulse-file".into(),
                    ))
                }
            };
            let theta_box = match theta_box {
                Some(v) => {
                    expect_len("theta-box", &v, 6)?;
                    Some(ThetaBox::new((v[0], v[1]), (v[2], v[3]), (v[4], v[5]))?)
                }
                None => None,
            };
            if !(bin_width > 0.0) {
                return Err(DedError::Config("bin width must be positive".into()));
            }
            let settings = Default::default();
            let report = estimate_from_stream(
                &stream,
                &pulse,
                theta_box,
                estimator,
                &settings,
                bin_width * 1e9,
            )?;
            write_output(None, &to_json(&report.to_json()))
        }
        Command::Gating {
            model,
            horizon,
            seed,
        } => {
            let cfg = model.config()?;
            cfg.validate()?;
            let mut text = String::from("phase,exact,empirical\n");
            for row in gating_table(&cfg, horizon, seed)? {
                text += &format!("{},{},{}\n", row.phase, row.exact, row.empirical);
            }
            write_output(None, &text)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
