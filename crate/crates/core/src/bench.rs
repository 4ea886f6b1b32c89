//! Monte Carlo risk curves, bound reports and table output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DedError, Result};
use crate::estimators::{run_estimator, EstimateReport, Method};
use crate::inference::{
    empirical_gating_frequencies, exact_gating_frequencies, fisher_lower_bound, information_rate,
    FisherInfo,
};
use crate::io::{read_event_stream, EventStream};
use crate::lidar::{
    circular_distance, misspecified_rates, Bump, LidarParams, LidarRateModel, ThetaBox,
};
use crate::optimize::OptimizerSettings;
use crate::process::{
    free_running_policy, ingest_event_stream, replicate_rng, simulate_events, simulate_stats,
    synchronous_policy, ModelDims, PhaseRates, PolicyKind, SufficientStats,
};
use crate::templates::{read_pulse_file, wrapped_gaussian, PulseTemplate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PulseSpec {
    WrappedGaussian { sigma: f64 },
    Tabulated { file: PathBuf },
}

impl PulseSpec {
    pub fn build(&self, k: usize) -> Result<PulseTemplate> {
        match self {
            PulseSpec::WrappedGaussian { sigma } => wrapped_gaussian(*sigma, k),
            PulseSpec::Tabulated { file } => read_pulse_file(file, k),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    #[default]
    Nominal,
    Bump {
        height: f64,
        sigma: f64,
        center: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coords {
    #[default]
    Full,
    ATauOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub a: [f64; 2],
    pub tau: [f64; 2],
    pub b: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub period: usize,
    pub dead_time: usize,
    #[serde(default = "default_policy")]
    pub policy: PolicyKind,
    /// Physical bin width in seconds.
    #[serde(default = "default_bin_width")]
    pub bin_width: f64,
}

fn default_policy() -> PolicyKind {
    PolicyKind::FreeRunning
}

fn default_bin_width() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// Horizons `T` in bins, strictly increasing.
    pub horizons: Vec<u64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub estimators: Vec<Method>,
    pub master_seed: u64,
    #[serde(default)]
    pub metric: Coords,
}

fn default_replicates() -> usize {
    100
}

/// A complete experiment, normally read from TOML:
///
/// ```toml
/// [model]
/// period = 1000
/// dead_time = 500
/// policy = "free_running"      # or "synchronous"
/// bin_width = 1e-10            # seconds per bin
///
/// [pulse]
/// kind = "wrapped_gaussian"    # or kind = "tabulated", file = "pulse.txt"
/// sigma = 10.0
///
/// [truth]
/// a = 1.0
/// tau = 370.4
/// b = 0.003
///
/// [experiment]
/// horizons = [100000, 1000000]
/// replicates = 100
/// estimators = ["robust", "ose_robust", "mle_robust"]
/// master_seed = 7
/// metric = "full"              # or "a_tau_only"
///
/// [generator]                  # optional, default nominal
/// kind = "bump"
/// height = 0.15
/// sigma = 1.0
/// center = 70.0
///
/// [theta_box]                  # optional
/// a = [1e-6, 1e3]
/// tau = [0.0, 1000.0]
/// b = [1e-9, 10.0]
///
/// [optimizer]                  # optional
/// max_evals = 1000
/// rel_param_tol = 1e-8
/// rel_obj_tol = 1e-10
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub pulse: PulseSpec,
    pub truth: LidarParams,
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub generator: Generator,
    #[serde(default)]
    pub theta_box: Option<BoxSpec>,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| DedError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| DedError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            DedError::Config(msg) => DedError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// The nominal lidar experiment at a given set of horizons.
    pub fn nominal(horizons: Vec<u64>, estimators: Vec<Method>, master_seed: u64) -> Self {
        Self {
            model: ModelSection {
                period: 1000,
                dead_time: 500,
                policy: PolicyKind::FreeRunning,
                bin_width: 1e-10,
            },
            pulse: PulseSpec::WrappedGaussian { sigma: 10.0 },
            truth: LidarParams::new(1.0, 370.4, 0.003),
            experiment: ExperimentSection {
                horizons,
                replicates: 100,
                estimators,
                master_seed,
                metric: Coords::Full,
            },
            generator: Generator::Nominal,
            theta_box: None,
            optimizer: OptimizerSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if self.model.period == 0 {
            return Err(DedError::Config("period must be at least 1".into()));
        }
        if e.horizons.is_empty() || e.horizons.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DedError::Config(format!(
                "horizons must be nonempty and strictly increasing, got {:?}",
                e.horizons
            )));
        }
        if e.replicates == 0 {
            return Err(DedError::Config("replicates must be at least 1".into()));
        }
        if !(self.model.bin_width > 0.0) {
            return Err(DedError::Config("bin_width must be positive".into()));
        }
        self.optimizer.validate()?;
        if !self.theta_box()?.contains(&self.truth, self.model.period) {
            return Err(DedError::Config(format!(
                "true parameter {:?} lies outside Θ",
                self.truth
            )));
        }
        Ok(())
    }

    pub fn theta_box(&self) -> Result<ThetaBox> {
        match &self.theta_box {
            None => Ok(ThetaBox::default_for(self.model.period)),
            Some(b) => ThetaBox::new((b.a[0], b.a[1]), (b.tau[0], b.tau[1]), (b.b[0], b.b[1])),
        }
    }

    pub fn rate_model(&self) -> Result<LidarRateModel> {
        Ok(LidarRateModel::new(
            self.pulse.build(self.model.period)?,
            self.theta_box()?,
        ))
    }

    pub fn dims(&self, horizon: u64) -> Result<ModelDims> {
        ModelDims::new(self.model.period, self.model.dead_time, horizon)
    }

    /// Bin width in nanoseconds, the unit of every scaled quantity.
    pub fn bin_width_ns(&self) -> f64 {
        self.model.bin_width * 1e9
    }

    /// Rates the data are drawn from (nominal or with the background bump).
    pub fn generating_rates(&self, model: &LidarRateModel) -> Result<PhaseRates> {
        match self.generator {
            Generator::Nominal => model.lidar_rates(&self.truth),
            Generator::Bump {
                height,
                sigma,
                center,
            } => misspecified_rates(
                &self.truth,
                &Bump {
                    height,
                    sigma,
                    center,
                },
                model,
            ),
        }
    }
}

/// `((â-a₀)/a₀)² + (d_K(τ̂,τ₀)/K)² + ((b̂-b₀)/b₀)²`, without the last term
/// under [`Coords::ATauOnly`].
pub fn relative_mse(
    theta_hat: &LidarParams,
    theta0: &LidarParams,
    k: usize,
    coords: Coords,
) -> f64 {
    let ea = (theta_hat.a - theta0.a) / theta0.a;
    let et = circular_distance(theta_hat.tau, theta0.tau, k) / k as f64;
    let eb = (theta_hat.b - theta0.b) / theta0.b;
    match coords {
        Coords::Full => ea * ea + et * et + eb * eb,
        Coords::ATauOnly => ea * ea + et * et,
    }
}

/// Diagonal of `W = Δ·diag(a₀⁻², K⁻², b₀⁻²)`.
pub fn risk_weights(theta0: &LidarParams, k: usize, delta: f64) -> [f64; 3] {
    [
        delta / (theta0.a * theta0.a),
        delta / (k as f64 * k as f64),
        delta / (theta0.b * theta0.b),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub theta: [f64; 3],
    pub gamma: Vec<f64>,
    pub fisher: Vec<f64>,
    pub bound: f64,
    pub bound_dead_time_free: f64,
    pub condition_number: f64,
    pub ratio: f64,
}

/// Dead-time-aware and dead-time-free bounds at θ₀.
pub fn bounds_report(config: &ExperimentConfig) -> Result<BoundsReport> {
    let model = config.rate_model()?;
    let rates = model.lidar_rates(&config.truth)?;
    let gamma = exact_gating_frequencies(&rates, config.model.policy, config.model.dead_time);
    let info = information_rate(&rates, &gamma.gamma)?;
    let weights = risk_weights(&config.truth, config.model.period, config.bin_width_ns());
    let bound = fisher_lower_bound(&info, &weights)?;
    let free = information_rate(&rates, &vec![1.0; config.model.period])?;
    let bound_free = fisher_lower_bound(&free, &weights)?;
    Ok(BoundsReport {
        theta: config.truth.to_array(),
        condition_number: info.condition_number(),
        fisher: info.row_major(),
        gamma: gamma.gamma,
        bound,
        bound_dead_time_free: bound_free,
        ratio: bound / bound_free,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub horizon: u64,
    pub t_phys: f64,
    pub estimator: String,
    pub mean_rel_mse: f64,
    pub stderr: f64,
    pub scaled_risk: f64,
    pub bound: f64,
    pub bound_td0: f64,
    pub failures: usize,
}

fn simulate_with<R: rand::Rng>(
    rates: &PhaseRates,
    kind: PolicyKind,
    dims: ModelDims,
    rng: &mut R,
) -> Result<SufficientStats> {
    match kind {
        PolicyKind::FreeRunning => simulate_stats(rates, &free_running_policy(dims), rng),
        PolicyKind::Synchronous => simulate_stats(rates, &synchronous_policy(dims), rng),
    }
}

/// Simulates one replicate and returns both statistics and the detection bins.
pub fn simulate_stream(
    rates: &PhaseRates,
    kind: PolicyKind,
    dims: ModelDims,
    master_seed: u64,
    index: u64,
) -> Result<(SufficientStats, EventStream)> {
    let mut rng = replicate_rng(master_seed, index);
    let (stats, bins) = match kind {
        PolicyKind::FreeRunning => simulate_events(rates, &free_running_policy(dims), &mut rng)?,
        PolicyKind::Synchronous => simulate_events(rates, &synchronous_policy(dims), &mut rng)?,
    };
    Ok((
        stats,
        EventStream {
            dims,
            scheme: kind,
            bins,
        },
    ))
}

/// Per-replicate outcome: `Some(error)` per estimator in config order.
type ReplicateErrors = Vec<Option<f64>>;

/// Stream index for replicate `rep` at horizon position `h`.
fn stream_index(h: usize, rep: usize) -> u64 {
    ((h as u64) << 32) | rep as u64
}

/// Mean and standard error, summed in replicate order.
fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Per-replicate relative errors for every configured estimator at every
/// horizon, indexed `[horizon][replicate][estimator]`.
pub fn run_replicates(config: &ExperimentConfig) -> Result<Vec<Vec<ReplicateErrors>>> {
    config.validate()?;
    let model = config.rate_model()?;
    let rates = config.generating_rates(&model)?;
    let k = config.model.period;
    let methods = &config.experiment.estimators;
    let mut out = Vec::with_capacity(config.experiment.horizons.len());
    for (h, &horizon) in config.experiment.horizons.iter().enumerate() {
        let dims = config.dims(horizon)?;
        let cell: Result<Vec<ReplicateErrors>> = (0..config.experiment.replicates)
            .into_par_iter()
            .map(|rep| {
                let mut rng = replicate_rng(config.experiment.master_seed, stream_index(h, rep));
                let stats = simulate_with(&rates, config.model.policy, dims, &mut rng)?;
                Ok(methods
                    .iter()
                    .map(|&m| {
                        run_estimator(m, &stats, &model, &config.optimizer, None)
                            .ok()
                            .map(|r| {
                                relative_mse(
                                    &r.theta_hat,
                                    &config.truth,
                                    k,
                                    config.experiment.metric,
                                )
                            })
                            .filter(|v| v.is_finite())
                    })
                    .collect())
            })
            .collect();
        out.push(cell?);
    }
    Ok(out)
}

/// Monte Carlo risk table, one row per (horizon, estimator), sorted by
/// horizon then estimator tag.
pub fn run_mc(config: &ExperimentConfig) -> Result<Vec<RiskRow>> {
    let bounds = bounds_report(config)?;
    let errors = run_replicates(config)?;
    let delta = config.bin_width_ns();
    let mut rows = Vec::new();
    for (h, &horizon) in config.experiment.horizons.iter().enumerate() {
        let t_phys = horizon as f64 * delta;
        let mut cell_rows = Vec::new();
        for (j, method) in config.experiment.estimators.iter().enumerate() {
            let ok: Vec<f64> = errors[h].iter().filter_map(|rep| rep[j]).collect();
            let (mean, stderr) = mean_stderr(&ok);
            cell_rows.push(RiskRow {
                horizon,
                t_phys,
                estimator: method.tag().to_string(),
                mean_rel_mse: mean,
                stderr,
                scaled_risk: t_phys * mean,
                bound: bounds.bound,
                bound_td0: bounds.bound_dead_time_free,
                failures: config.experiment.replicates - ok.len(),
            });
        }
        cell_rows.sort_by(|a, b| a.estimator.cmp(&b.estimator));
        cell_rows.dedup_by(|a, b| a.estimator == b.estimator);
        rows.extend(cell_rows);
    }
    Ok(rows)
}

/// Runs [`run_mc`] on a dedicated pool of `threads` workers.
pub fn run_mc_with_threads(config: &ExperimentConfig, threads: usize) -> Result<Vec<RiskRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| DedError::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run_mc(config))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
}

impl std::str::FromStr for TableFormat {
    type Err = DedError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            other => Err(DedError::Config(format!("unknown output format `{other}`"))),
        }
    }
}

pub const CSV_HEADER: &str =
    "T_bins,T_phys,estimator,mean_rel_mse,stderr,scaled_risk,bound,bound_td0,failures";

pub fn rows_to_csv(rows: &[RiskRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.horizon,
            r.t_phys,
            r.estimator,
            r.mean_rel_mse,
            r.stderr,
            r.scaled_risk,
            r.bound,
            r.bound_td0,
            r.failures
        )
        .unwrap();
    }
    out
}

pub fn rows_from_csv(text: &str) -> Result<Vec<RiskRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        _ => return Err(DedError::Parse(format!("expected header `{CSV_HEADER}`"))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let c: Vec<&str> = line.split(',').collect();
            let bad = || DedError::Parse(format!("row {}: malformed `{line}`", i + 1));
            if c.len() != 9 {
                return Err(bad());
            }
            let f = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(RiskRow {
                horizon: c[0].parse().map_err(|_| bad())?,
                t_phys: f(c[1])?,
                estimator: c[2].to_string(),
                mean_rel_mse: f(c[3])?,
                stderr: f(c[4])?,
                scaled_risk: f(c[5])?,
                bound: f(c[6])?,
                bound_td0: f(c[7])?,
                failures: c[8].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

pub fn rows_to_json(rows: &[RiskRow]) -> String {
    let values: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| {
            serde_json::json!({
                "T_bins": r.horizon,
                "T_phys": r.t_phys,
                "estimator": r.estimator,
                "mean_rel_mse": r.mean_rel_mse,
                "stderr": r.stderr,
                "scaled_risk": r.scaled_risk,
                "bound": r.bound,
                "bound_td0": r.bound_td0,
                "failures": r.failures,
            })
        })
        .collect();
    serde_json::to_string_pretty(&values).expect("rows serialize") + "\n"
}

/// Writes the table; rows are emitted in the order given.
pub fn emit(rows: &[RiskRow], format: TableFormat, path: &Path) -> Result<()> {
    let text = match format {
        TableFormat::Csv => rows_to_csv(rows),
        TableFormat::Json => rows_to_json(rows),
    };
    fs::write(path, text).map_err(|e| DedError::io(path, e))
}

/// Ingests a detection stream and runs one estimator on it. The report
/// carries the Fisher information and the weighted bound at the estimate,
/// both using the empirical gating frequencies.
pub fn estimate_from_stream(
    stream_path: &Path,
    pulse: &PulseSpec,
    theta_box: Option<ThetaBox>,
    method: Method,
    settings: &OptimizerSettings,
    bin_width_ns: f64,
) -> Result<EstimateReport> {
    let stream = read_event_stream(stream_path)?;
    let k = stream.dims.period;
    let stats = ingest_event_stream(&stream.bins, stream.scheme, stream.dims)?;
    let model = LidarRateModel::new(
        pulse.build(k)?,
        theta_box.unwrap_or_else(|| ThetaBox::default_for(k)),
    );
    estimate_from_stats(&stats, &model, method, settings, bin_width_ns)
}

pub fn estimate_from_stats(
    stats: &SufficientStats,
    model: &LidarRateModel,
    method: Method,
    settings: &OptimizerSettings,
    bin_width_ns: f64,
) -> Result<EstimateReport> {
    let gamma = empirical_gating_frequencies(stats)?;
    let mut report = run_estimator(method, stats, model, settings, Some(&gamma))?;
    let rates = model.evaluate_params(&report.theta_hat)?;
    let info: FisherInfo = information_rate(&rates, &gamma.gamma)?.at(&report.theta_hat.to_array());
    let weights = risk_weights(&report.theta_hat, model.template().period(), bin_width_ns);
    report.bound = fisher_lower_bound(&info, &weights).ok();
    report.fisher_at_estimate = Some(info);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GatingRow {
    pub phase: usize,
    pub exact: f64,
    pub empirical: f64,
}

/// Exact chain frequencies next to empirical ones from one simulated run.
pub fn gating_table(config: &ExperimentConfig, horizon: u64, seed: u64) -> Result<Vec<GatingRow>> {
    let model = config.rate_model()?;
    let rates = config.generating_rates(&model)?;
    let exact = exact_gating_frequencies(&rates, config.model.policy, config.model.dead_time);
    let dims = config.dims(horizon)?;
    let mut rng = replicate_rng(seed, 0);
    let stats = simulate_with(&rates, config.model.policy, dims, &mut rng)?;
    let empirical = empirical_gating_frequencies(&stats)?;
    Ok(exact
        .gamma
        .iter()
        .zip(&empirical.gamma)
        .enumerate()
        .map(|(phase, (&exact, &empirical))| GatingRow {
            phase,
            exact,
            empirical,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_mse_hand_values() {
        let t0 = LidarParams::new(1.0, 370.4, 0.003);
        assert_eq!(relative_mse(&t0, &t0, 1000, Coords::Full), 0.0);
        let wrapped = LidarParams::new(1.0, 370.5 + 1000.0, 0.003);
        let t05 = LidarParams::new(1.0, 370.5, 0.003);
        assert_eq!(relative_mse(&wrapped, &t05, 1000, Coords::Full), 0.0);
        let hat = LidarParams::new(1.1, 375.4, 0.003);
        assert!((relative_mse(&hat, &t0, 1000, Coords::Full) - 0.010025).abs() < 1e-12);
        let hat_b = LidarParams::new(1.0, 370.4, 0.006);
        assert_eq!(relative_mse(&hat_b, &t0, 1000, Coords::ATauOnly), 0.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::nominal(vec![10_000, 5_000], vec![Method::Robust], 1);
        assert!(matches!(cfg.validate(), Err(DedError::Config(_))));
        cfg.experiment.horizons = vec![5_000, 10_000];
        cfg.validate().unwrap();
        cfg.experiment.replicates = 0;
        assert!(cfg.validate().is_err());
        cfg.experiment.replicates = 1;
        cfg.truth.b = 100.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
[model]
period = 1000
dead_time = 500

[pulse]
kind = "wrapped_gaussian"
sigma = 10.0

[truth]
a = 1.0
tau = 370.4
b = 0.003

[experiment]
horizons = [100000]
estimators = ["robust", "ose_robust"]
master_seed = 3

[generator]
kind = "bump"
height = 0.15
sigma = 1.0
center = 70.0
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.experiment.replicates, 100);
        assert_eq!(cfg.model.policy, PolicyKind::FreeRunning);
        assert!(matches!(cfg.generator, Generator::Bump { .. }));
        let back = ExperimentConfig::from_toml(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(ExperimentConfig::from_toml("[model]\nperiod = 1\n").is_err());
    }

    #[test]
    fn zero_dead_time_ratio_is_one() {
        let mut cfg = ExperimentConfig::nominal(vec![1000], vec![], 0);
        cfg.model.dead_time = 0;
        let rep = bounds_report(&cfg).unwrap();
        assert_eq!(rep.ratio, 1.0);
    }

    #[test]
    fn single_replicate_single_row() {
        let mut cfg = ExperimentConfig::nominal(vec![100_000], vec![Method::Robust], 11);
        cfg.experiment.replicates = 1;
        let rows = run_mc(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].stderr, 0.0);
        assert_eq!(rows[0].failures, 0);
    }

    #[test]
    fn csv_layout_and_round_trip() {
        assert_eq!(rows_to_csv(&[]), format!("{CSV_HEADER}\n"));
        let row = RiskRow {
            horizon: 100,
            t_phys: 10.000000000000002,
            estimator: "robust".into(),
            mean_rel_mse: 1.0 / 3.0,
            stderr: 0.1,
            scaled_risk: 3.3333333333333335,
            bound: 615.0339,
            bound_td0: 152.4,
            failures: 2,
        };
        let csv = rows_to_csv(std::slice::from_ref(&row));
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(rows_from_csv(&csv).unwrap(), vec![row]);
    }

    #[test]
    fn mean_stderr_values() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
