//! Pilot estimators, range-only baselines, the MLE and the one-step update.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{DedError, Result};
use crate::inference::{
    empirical_gating_frequencies, information_rate, log_likelihood, score, FisherInfo,
    GatingFrequencies,
};
use crate::lidar::{wrap_phase, LidarParams, LidarRateModel};
use crate::optimize::{minimize, OptimizerSettings, StopReason};
use crate::process::{PhaseRates, SufficientStats};

/// Regularized per-phase detection frequencies and Coates-type intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimates {
    pub p_hat: Vec<f64>,
    pub lambda_hat: Vec<f64>,
}

impl RateEstimates {
    pub fn period(&self) -> usize {
        self.lambda_hat.len()
    }
}

/// `p̂_r = (S_r + 1/2)/(N_r + 1)`, `λ̂_r = -log(1 - p̂_r)`.
pub fn rate_estimates(stats: &SufficientStats) -> RateEstimates {
    let p_hat: Vec<f64> = stats
        .active()
        .iter()
        .zip(stats.detections())
        .map(|(n, s)| (s + 0.5) / (n + 1.0))
        .collect();
    let lambda_hat = p_hat.iter().map(|p| -(-p).ln_1p()).collect();
    RateEstimates { p_hat, lambda_hat }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateStatus {
    Converged,
    MaxEvals,
    FisherSingularFallback,
    ProjectedToBox,
}

impl fmt::Display for EstimateStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimateStatus::Converged => "converged",
            EstimateStatus::MaxEvals => "max-evals",
            EstimateStatus::FisherSingularFallback => "fisher-singular-fallback",
            EstimateStatus::ProjectedToBox => "projected-to-box",
        })
    }
}

/// Estimator tags understood by the benchmark harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fourier,
    Robust,
    MleFourier,
    MleRobust,
    OseFourier,
    OseRobust,
    CoatesMaxBin,
    QuadraticPeak,
    OseCoates,
    OseQuadratic,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Fourier,
        Method::Robust,
        Method::MleFourier,
        Method::MleRobust,
        Method::OseFourier,
        Method::OseRobust,
        Method::CoatesMaxBin,
        Method::QuadraticPeak,
        Method::OseCoates,
        Method::OseQuadratic,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Fourier => "fourier",
            Method::Robust => "robust",
            Method::MleFourier => "mle_fourier",
            Method::MleRobust => "mle_robust",
            Method::OseFourier => "ose_fourier",
            Method::OseRobust => "ose_robust",
            Method::CoatesMaxBin => "coates_max_bin",
            Method::QuadraticPeak => "quadratic_peak",
            Method::OseCoates => "ose_coates",
            Method::OseQuadratic => "ose_quadratic",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = DedError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s.trim())
            .ok_or_else(|| {
                let known: Vec<_> = Method::ALL.iter().map(|m| m.tag()).collect();
                DedError::Config(format!(
                    "unknown estimator `{s}`; expected one of {}",
                    known.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub theta_hat: LidarParams,
    pub method: String,
    pub pilot: Option<LidarParams>,
    pub fisher_at_estimate: Option<FisherInfo>,
    pub bound: Option<f64>,
    pub status: EstimateStatus,
    pub evals: usize,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    method: &'a str,
    theta: [f64; 3],
    pilot: Option<[f64; 3]>,
    status: EstimateStatus,
    evals: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    fisher: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bound: Option<f64>,
}

impl EstimateReport {
    fn new(method: &str, theta_hat: LidarParams, status: EstimateStatus) -> Self {
        Self {
            theta_hat,
            method: method.to_string(),
            pilot: None,
            fisher_at_estimate: None,
            bound: None,
            status,
            evals: 0,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(ReportJson {
            method: &self.method,
            theta: self.theta_hat.to_array(),
            pilot: self.pilot.map(LidarParams::to_array),
            status: self.status,
            evals: self.evals,
            fisher: self.fisher_at_estimate.as_ref().map(FisherInfo::row_major),
            bound: self.bound,
        })
        .expect("report serializes")
    }
}

fn projected_report(model: &LidarRateModel, method: &str, raw: LidarParams) -> EstimateReport {
    let (theta, clamped) = model.project(&raw);
    let status = if clamped {
        EstimateStatus::ProjectedToBox
    } else {
        EstimateStatus::Converged
    };
    EstimateReport::new(method, theta, status)
}

fn check_period(est: &RateEstimates, model: &LidarRateModel) -> Result<()> {
    let k = model.template().period();
    if est.period() != k {
        return Err(DedError::Config(format!(
            "rate estimates have K = {}, template has K = {k}",
            est.period()
        )));
    }
    Ok(())
}

/// Inversion of the zeroth and first Fourier modes of `λ̂`.
pub fn fourier_pilot(est: &RateEstimates, model: &LidarRateModel) -> Result<EstimateReport> {
    check_period(est, model)?;
    let k = est.period();
    let d1 = model.template().fourier_coefficient(1);
    if d1.norm() < 1e-14 {
        return Err(DedError::DegenerateTemplate(format!(
            "first binned Fourier coefficient |d₁| = {:.3e} is too small to invert",
            d1.norm()
        )));
    }
    let kf = k as f64;
    let mut m0 = 0.0;
    let mut m1 = Complex64::new(0.0, 0.0);
    for (r, &l) in est.lambda_hat.iter().enumerate() {
        m0 += l;
        m1 += Complex64::from_polar(l, 2.0 * PI * r as f64 / kf);
    }
    m0 /= kf;
    m1 /= kf;
    let a = m1.norm() / d1.norm();
    let tau = wrap_phase(kf / (2.0 * PI) * (m1 / d1).arg(), k);
    let b = m0 - a / kf;
    Ok(projected_report(
        model,
        Method::Fourier.tag(),
        LidarParams::new(a, tau, b),
    ))
}

/// Lower median (the `⌊(n-1)/2⌋`-th order statistic).
pub fn lower_median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let mid = (v.len() - 1) / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// `C_j = Σ_r x_r y_{(r-j) mod K}` for every `j`, by FFT.
pub fn circular_cross_correlation(x: &[f64], y: &[f64]) -> Vec<f64> {
    let k = x.len();
    assert_eq!(k, y.len());
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(k);
    let inv = planner.plan_fft_inverse(k);
    let mut xs: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut ys: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut xs);
    fwd.process(&mut ys);
    for (a, b) in xs.iter_mut().zip(&ys) {
        *a *= b.conj();
    }
    inv.process(&mut xs);
    xs.iter().map(|c| c.re / k as f64).collect()
}

fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Median-centred matched filter over integer delays.
pub fn robust_pilot(est: &RateEstimates, model: &LidarRateModel) -> Result<EstimateReport> {
    check_period(est, model)?;
    let k = est.period();
    if k < 3 {
        return Err(DedError::Config(format!(
            "robust pilot needs K ≥ 3, got {k}"
        )));
    }
    let template = model.template();
    let b0 = lower_median(&est.lambda_hat);
    let centred: Vec<f64> = est.lambda_hat.iter().map(|l| l - b0).collect();
    let f0 = template.binned_profile(0.0);
    let scores = circular_cross_correlation(&centred, &f0);
    let tau = argmax_first(&scores) as f64;
    let f = template.binned_profile(tau);
    let num: f64 = centred.iter().zip(&f).map(|(j, fr)| j * fr).sum();
    let den: f64 = f.iter().map(|v| v * v).sum();
    let a = (num / den).max(0.0);
    let residual: Vec<f64> = est
        .lambda_hat
        .iter()
        .zip(&f)
        .map(|(l, fr)| l - a * fr)
        .collect();
    let b = lower_median(&residual);
    Ok(projected_report(
        model,
        Method::Robust.tag(),
        LidarParams::new(a, tau, b),
    ))
}

/// Range-only baseline: the bin with the largest corrected intensity.
pub fn coates_max_bin(est: &RateEstimates) -> f64 {
    argmax_first(&est.lambda_hat) as f64
}

/// Vertex of the parabola through the peak bin and its circular neighbours.
pub fn quadratic_peak_fit(est: &RateEstimates) -> f64 {
    let k = est.period();
    let j = argmax_first(&est.lambda_hat);
    if k < 3 {
        return j as f64;
    }
    let y = &est.lambda_hat;
    let (left, centre, right) = (y[(j + k - 1) % k], y[j], y[(j + 1) % k]);
    let curvature = left - 2.0 * centre + right;
    if !(curvature < 0.0) {
        return j as f64;
    }
    let offset = (left - right) / (2.0 * curvature);
    wrap_phase(j as f64 + offset, k)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Latent map η = (ln a, logit(τ/K), ln b).
struct Latent {
    k: f64,
}

impl Latent {
    fn to_theta(&self, eta: &[f64]) -> LidarParams {
        LidarParams::new(eta[0].exp(), self.k * sigmoid(eta[1]), eta[2].exp())
    }

    fn from_theta(&self, theta: &LidarParams) -> [f64; 3] {
        let u = (theta.tau / self.k).clamp(1e-12, 1.0 - 1e-12);
        [theta.a.ln(), (u / (1.0 - u)).ln(), theta.b.ln()]
    }

    /// `dθ/dη` on the diagonal.
    fn jacobian(&self, theta: &LidarParams) -> [f64; 3] {
        [theta.a, theta.tau * (1.0 - theta.tau / self.k), theta.b]
    }
}

fn neg_loglik(
    stats: &SufficientStats,
    model: &LidarRateModel,
    theta: &LidarParams,
) -> Option<(f64, Vec<f64>)> {
    let rates = model.evaluate_params(theta).ok()?;
    let ll = log_likelihood(stats, &rates);
    ll.is_finite().then(|| (-ll, score(stats, &rates)))
}

/// Phase shift that moves a delay near the period boundary to mid-period.
fn recentre_shift(tau: f64, model: &LidarRateModel) -> usize {
    let k = model.template().period();
    let kf = k as f64;
    let full_circle = model.theta_box().tau.0 <= 0.0 && model.theta_box().tau.1 >= kf;
    let margin = 3.0 * model.template().width();
    if !full_circle || (tau >= margin && tau <= kf - margin) {
        return 0;
    }
    ((kf / 2.0 - tau).round().rem_euclid(kf)) as usize % k
}

fn map_status(reason: StopReason) -> EstimateStatus {
    match reason {
        StopReason::Converged => EstimateStatus::Converged,
        StopReason::MaxEvals => EstimateStatus::MaxEvals,
    }
}

/// Local maximizer of the likelihood started at `init`.
///
/// Runs L-BFGS in the latent coordinates; if `init` sits within three pulse
/// widths of the period boundary the phase origin is rotated first. The
/// result is projected onto Θ and is never worse than `init`.
pub fn mle(
    stats: &SufficientStats,
    model: &LidarRateModel,
    init: &LidarParams,
    settings: &OptimizerSettings,
) -> Result<EstimateReport> {
    settings.validate()?;
    let k = model.template().period();
    if stats.period() != k {
        return Err(DedError::Config(format!(
            "statistics have K = {}, template has K = {k}",
            stats.period()
        )));
    }
    if !model.contains_params(init) {
        return Err(DedError::Domain(format!(
            "initial point {init:?} lies outside Θ"
        )));
    }
    let init_ll = neg_loglik(stats, model, init)
        .ok_or_else(|| DedError::Domain(format!("log-likelihood is not finite at {init:?}")))?
        .0;

    let shift = recentre_shift(init.tau, model);
    let rotated;
    let work_stats = if shift == 0 {
        stats
    } else {
        rotated = stats.rotated(shift);
        &rotated
    };
    let start = LidarParams::new(init.a, wrap_phase(init.tau + shift as f64, k), init.b);
    let latent = Latent { k: k as f64 };
    let eta0 = latent.from_theta(&start);

    let objective = |eta: &[f64], g: &mut [f64]| {
        let theta = latent.to_theta(eta);
        match neg_loglik(work_stats, model, &theta) {
            Some((f, u)) => {
                let jac = latent.jacobian(&theta);
                for i in 0..3 {
                    g[i] = -u[i] * jac[i];
                }
                f
            }
            None => f64::NAN,
        }
    };
    let result = minimize(objective, &eta0, settings);
    let fitted = latent.to_theta(&result.x);
    let unshifted = LidarParams::new(fitted.a, wrap_phase(fitted.tau - shift as f64, k), fitted.b);
    let (projected, clamped) = model.project(&unshifted);

    let mut status = if clamped {
        EstimateStatus::ProjectedToBox
    } else {
        map_status(result.reason)
    };
    let mut theta_hat = projected;
    let projected_ll = neg_loglik(stats, model, &projected).map(|(f, _)| f);
    if projected_ll.is_none_or(|f| f > init_ll) {
        theta_hat = *init;
        if status == EstimateStatus::ProjectedToBox {
            status = EstimateStatus::Converged;
        }
    }
    let mut report = EstimateReport::new("mle", theta_hat, status);
    report.pilot = Some(*init);
    report.evals = result.evals;
    Ok(report)
}

/// Newton correction `I(θ̃; γ)⁻¹ U_T(θ̃) / T`. Returns `None` when the
/// information is numerically singular.
pub fn newton_step(
    stats: &SufficientStats,
    rates: &PhaseRates,
    gamma: &GatingFrequencies,
) -> Result<Option<(Vec<f64>, FisherInfo)>> {
    let info = information_rate(rates, &gamma.gamma)?;
    if info.scaled_condition_number() > 1e12 {
        return Ok(None);
    }
    let u = score(stats, rates);
    let t = stats.dims.horizon as f64;
    match info.solve(&u) {
        Ok(x) => Ok(Some((x.into_iter().map(|v| v / t).collect(), info))),
        Err(DedError::Conditioning { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// One Newton step of the likelihood from `pilot`, using `γ̂` from the same
/// statistics unless `gamma` is given.
pub fn one_step(
    stats: &SufficientStats,
    model: &LidarRateModel,
    pilot: &LidarParams,
    gamma: Option<&GatingFrequencies>,
) -> Result<EstimateReport> {
    let owned;
    let gamma = match gamma {
        Some(g) => g,
        None => {
            owned = empirical_gating_frequencies(stats)?;
            &owned
        }
    };
    let rates = model.evaluate_params(pilot)?;
    let mut report = match newton_step(stats, &rates, gamma)? {
        None => EstimateReport::new("one_step", *pilot, EstimateStatus::FisherSingularFallback),
        Some((step, info)) => {
            let raw = LidarParams::new(pilot.a + step[0], pilot.tau + step[1], pilot.b + step[2]);
            let mut r = projected_report(model, "one_step", raw);
            r.fisher_at_estimate = Some(info.at(&pilot.to_array()));
            r
        }
    };
    report.pilot = Some(*pilot);
    Ok(report)
}

/// Maximizes the likelihood over `(a, b)` with τ held at `tau_fixed`.
pub fn fill_amplitude_background(
    stats: &SufficientStats,
    model: &LidarRateModel,
    tau_fixed: f64,
    settings: &OptimizerSettings,
) -> Result<EstimateReport> {
    settings.validate()?;
    let k = model.template().period();
    if !(0.0..k as f64).contains(&tau_fixed) {
        return Err(DedError::Domain(format!(
            "fixed delay {tau_fixed} lies outside [0, {k})"
        )));
    }
    let bx = *model.theta_box();
    // Least-squares start on the corrected intensities.
    let est = rate_estimates(stats);
    let f = model.template().binned_profile(tau_fixed);
    let b_start = lower_median(&est.lambda_hat);
    let num: f64 = est
        .lambda_hat
        .iter()
        .zip(&f)
        .map(|(l, fr)| (l - b_start) * fr)
        .sum();
    let den: f64 = f.iter().map(|v| v * v).sum();
    let a_start = (num / den).clamp(bx.a.0, bx.a.1);
    let b_start = b_start.clamp(bx.b.0, bx.b.1);

    let objective = |eta: &[f64], g: &mut [f64]| {
        let theta = LidarParams::new(eta[0].exp(), tau_fixed, eta[1].exp());
        match neg_loglik(stats, model, &theta) {
            Some((v, u)) => {
                g[0] = -u[0] * theta.a;
                g[1] = -u[2] * theta.b;
                v
            }
            None => f64::NAN,
        }
    };
    let result = minimize(objective, &[a_start.ln(), b_start.ln()], settings);
    let raw = LidarParams::new(result.x[0].exp(), tau_fixed, result.x[1].exp());
    let (theta, clamped) = model.project(&raw);
    let status = if clamped {
        EstimateStatus::ProjectedToBox
    } else {
        map_status(result.reason)
    };
    let mut report = EstimateReport::new("fill_amplitude_background", theta, status);
    report.evals = result.evals;
    Ok(report)
}

/// Runs the estimator named by `method` on one set of statistics.
pub fn run_estimator(
    method: Method,
    stats: &SufficientStats,
    model: &LidarRateModel,
    settings: &OptimizerSettings,
    gamma: Option<&GatingFrequencies>,
) -> Result<EstimateReport> {
    let est = rate_estimates(stats);
    let range_pilot = |tau: f64| -> Result<EstimateReport> {
        let mut r = fill_amplitude_background(stats, model, tau, settings)?;
        r.method = method.tag().into();
        Ok(r)
    };
    let mut report = match method {
        Method::Fourier => fourier_pilot(&est, model)?,
        Method::Robust => robust_pilot(&est, model)?,
        Method::MleFourier => mle(
            stats,
            model,
            &fourier_pilot(&est, model)?.theta_hat,
            settings,
        )?,
        Method::MleRobust => mle(
            stats,
            model,
            &robust_pilot(&est, model)?.theta_hat,
            settings,
        )?,
        Method::OseFourier => {
            one_step(stats, model, &fourier_pilot(&est, model)?.theta_hat, gamma)?
        }
        Method::OseRobust => one_step(stats, model, &robust_pilot(&est, model)?.theta_hat, gamma)?,
        Method::CoatesMaxBin => range_pilot(coates_max_bin(&est))?,
        Method::QuadraticPeak => range_pilot(quadratic_peak_fit(&est))?,
        Method::OseCoates => {
            let pilot = range_pilot(coates_max_bin(&est))?.theta_hat;
            one_step(stats, model, &pilot, gamma)?
        }
        Method::OseQuadratic => {
            let pilot = range_pilot(quadratic_peak_fit(&est))?.theta_hat;
            one_step(stats, model, &pilot, gamma)?
        }
    };
    report.method = method.tag().into();
    Ok(report)
}
