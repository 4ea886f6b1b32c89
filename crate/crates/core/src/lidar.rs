//! The lidar rate model `λ_r(θ) = a·f_τ(r) + b` with θ = (a, τ, b).

use serde::{Deserialize, Serialize};

use crate::error::{DedError, Result};
use crate::process::{PhaseRates, RateModel};
use crate::templates::{wrapped_gaussian, PulseTemplate};

/// Lidar parameter θ = (a, τ, b): signal photons per period, delay in bins,
/// background rate per bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarParams {
    pub a: f64,
    pub tau: f64,
    pub b: f64,
}

impl LidarParams {
    pub const fn new(a: f64, tau: f64, b: f64) -> Self {
        Self { a, tau, b }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.a, self.tau, self.b]
    }

    pub fn from_slice(theta: &[f64]) -> Result<Self> {
        match theta {
            [a, tau, b] => Ok(Self::new(*a, *tau, *b)),
            _ => Err(DedError::Domain(format!(
                "lidar θ has three coordinates, got {}",
                theta.len()
            ))),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.tau.is_finite() && self.b.is_finite()
    }
}

/// Box Θ = [a₋,a₊] × [τ₋,τ₊] × [b₋,b₊]. A τ range of `[0, K)` is the whole
/// circle and only wraps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaBox {
    pub a: (f64, f64),
    pub tau: (f64, f64),
    pub b: (f64, f64),
}

impl ThetaBox {
    pub fn new(a: (f64, f64), tau: (f64, f64), b: (f64, f64)) -> Result<Self> {
        let ok = a.0 > 0.0
            && a.1 > a.0
            && b.0 > 0.0
            && b.1 > b.0
            && tau.0 >= 0.0
            && tau.1 > tau.0
            && a.1.is_finite()
            && b.1.is_finite();
        if !ok {
            return Err(DedError::Config(format!(
                "invalid parameter box a={a:?} τ={tau:?} b={b:?}; need 0 < a₋ < a₊, 0 < b₋ < b₊, 0 ≤ τ₋ < τ₊"
            )));
        }
        Ok(Self { a, tau, b })
    }

    /// Wide default box for period `k`.
    pub fn default_for(k: usize) -> Self {
        Self {
            a: (1e-6, 1e3),
            tau: (0.0, k as f64),
            b: (1e-9, 10.0),
        }
    }

    pub fn contains(&self, theta: &LidarParams, k: usize) -> bool {
        let kf = k as f64;
        theta.a >= self.a.0
            && theta.a <= self.a.1
            && theta.b >= self.b.0
            && theta.b <= self.b.1
            && theta.tau >= self.tau.0
            && theta.tau <= self.tau.1
            && theta.tau < kf
    }

    /// Wraps τ into `[0, K)` and clamps every coordinate into the box.
    /// Returns the projected point and whether any clamp was active.
    pub fn project(&self, theta: &LidarParams, k: usize) -> (LidarParams, bool) {
        let tau = wrap_phase(theta.tau, k);
        let a = theta.a.clamp(self.a.0, self.a.1);
        let b = theta.b.clamp(self.b.0, self.b.1);
        let tau_c = tau.clamp(self.tau.0, self.tau.1.min(next_below(k as f64)));
        let clamped = a != theta.a || b != theta.b || tau_c != tau;
        (LidarParams::new(a, tau_c, b), clamped)
    }
}

fn next_below(x: f64) -> f64 {
    f64::from_bits(x.to_bits() - 1)
}

/// Reduces a phase into `[0, K)`.
pub fn wrap_phase(tau: f64, k: usize) -> f64 {
    let kf = k as f64;
    let w = tau.rem_euclid(kf);
    if w >= kf {
        0.0
    } else {
        w
    }
}

/// Circular distance on the period-`K` circle.
pub fn circular_distance(x: f64, y: f64, k: usize) -> f64 {
    let kf = k as f64;
    let d = (x - y).abs().rem_euclid(kf);
    d.min(kf - d)
}

#[derive(Debug, Clone)]
pub struct LidarRateModel {
    template: PulseTemplate,
    theta_box: ThetaBox,
}

impl LidarRateModel {
    pub fn new(template: PulseTemplate, theta_box: ThetaBox) -> Self {
        Self {
            template,
            theta_box,
        }
    }

    pub fn template(&self) -> &PulseTemplate {
        &self.template
    }

    pub fn theta_box(&self) -> &ThetaBox {
        &self.theta_box
    }

    pub fn with_box(&self, theta_box: ThetaBox) -> Self {
        Self {
            template: self.template.clone(),
            theta_box,
        }
    }

    pub fn contains_params(&self, theta: &LidarParams) -> bool {
        self.theta_box.contains(theta, self.template.period())
    }

    pub fn project(&self, theta: &LidarParams) -> (LidarParams, bool) {
        self.theta_box.project(theta, self.template.period())
    }

    /// Rates and gradients with no box check; `a ≥ 0` and `b > 0` keep them valid.
    pub fn evaluate_params(&self, theta: &LidarParams) -> Result<PhaseRates> {
        let (lambda, grad, _) = self.assemble(theta, false);
        PhaseRates::new(lambda, grad, 3).map_err(|e| match e {
            DedError::Domain(msg) => DedError::Domain(format!("at θ = {theta:?}: {msg}")),
            other => other,
        })
    }

    /// Like [`LidarRateModel::evaluate_params`] but also fills `∇²λ_r`.
    pub fn evaluate_with_hessians(&self, theta: &LidarParams) -> Result<PhaseRates> {
        let (lambda, grad, hess) = self.assemble(theta, true);
        PhaseRates::new(lambda, grad, 3)?.with_hessians(hess)
    }

    fn assemble(&self, theta: &LidarParams, hessians: bool) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let k = self.template.period();
        let mut lambda = Vec::with_capacity(k);
        let mut grad = Vec::with_capacity(3 * k);
        let mut hess = if hessians {
            Vec::with_capacity(9 * k)
        } else {
            Vec::new()
        };
        // density at τ - r + 1 for phase r equals density at τ - (r - 1).
        let mut upper = self.template.density(theta.tau + 1.0);
        for r in 0..k {
            let x = theta.tau - r as f64;
            let lower = self.template.density(x);
            let f = self.template.binned(theta.tau, r);
            let df = upper - lower;
            lambda.push(theta.a * f + theta.b);
            grad.extend_from_slice(&[f, theta.a * df, 1.0]);
            if hessians {
                let d2f = self.template.binned_tau_second_derivative(theta.tau, r);
                hess.extend_from_slice(&[0.0, df, 0.0, df, theta.a * d2f, 0.0, 0.0, 0.0, 0.0]);
            }
            upper = lower;
        }
        (lambda, grad, hess)
    }

    pub fn lidar_rates(&self, theta: &LidarParams) -> Result<PhaseRates> {
        if !self.contains_params(theta) {
            return Err(DedError::Domain(format!("θ = {theta:?} lies outside Θ")));
        }
        self.evaluate_params(theta)
    }
}

impl RateModel for LidarRateModel {
    fn period(&self) -> usize {
        self.template.period()
    }

    fn dim(&self) -> usize {
        3
    }

    fn contains(&self, theta: &[f64]) -> bool {
        LidarParams::from_slice(theta)
            .map(|t| self.contains_params(&t))
            .unwrap_or(false)
    }

    fn evaluate(&self, theta: &[f64]) -> Result<PhaseRates> {
        self.evaluate_params(&LidarParams::from_slice(theta)?)
    }
}

pub fn lidar_rates(model: &LidarRateModel, theta: &LidarParams) -> Result<PhaseRates> {
    model.lidar_rates(theta)
}

/// A localized background bump `h·u(r)` with `u` a unit-peak binned wrapped
/// Gaussian of width `sigma` centered at `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub height: f64,
    pub sigma: f64,
    pub center: f64,
}

/// Unit-peak bump profile over `k` phases.
pub fn bump_profile(sigma: f64, center: f64, k: usize) -> Result<Vec<f64>> {
    let shape = wrapped_gaussian(sigma, k)?;
    let raw = shape.binned_profile(center);
    let peak = raw.iter().copied().fold(0.0, f64::max);
    Ok(raw.into_iter().map(|v| v / peak).collect())
}

/// Data-generating rates `a₀f_{τ₀}(r) + b₀ + h·u(r)`. Gradients are those of
/// the nominal model; the bump is not part of the fitted family.
pub fn misspecified_rates(
    theta0: &LidarParams,
    bump: &Bump,
    model: &LidarRateModel,
) -> Result<PhaseRates> {
    if !(bump.height >= 0.0) {
        return Err(DedError::Domain(format!(
            "bump height must be nonnegative, got {}",
            bump.height
        )));
    }
    let nominal = model.lidar_rates(theta0)?;
    if bump.height == 0.0 {
        return Ok(nominal);
    }
    let k = model.period();
    let u = bump_profile(bump.sigma, bump.center, k)?;
    let lambda: Vec<f64> = nominal
        .lambda()
        .iter()
        .zip(&u)
        .map(|(l, ur)| l + bump.height * ur)
        .collect();
    let grad: Vec<f64> = (0..k).flat_map(|r| nominal.grad(r).to_vec()).collect();
    PhaseRates::new(lambda, grad, 3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::templates::wrapped_gaussian;

    fn nominal_model() -> LidarRateModel {
        LidarRateModel::new(
            wrapped_gaussian(10.0, 1000).unwrap(),
            ThetaBox::default_for(1000),
        )
    }

    const THETA0: LidarParams = LidarParams::new(1.0, 370.4, 0.003);

    #[test]
    fn rates_peak_near_delay() {
        let model = nominal_model();
        let rates = model.lidar_rates(&THETA0).unwrap();
        let lam = rates.lambda();
        let argmax = (0..1000)
            .max_by(|&a, &b| lam[a].total_cmp(&lam[b]))
            .unwrap();
        assert!((370..=371).contains(&argmax));
        let f370 = model.template().binned(370.4, 370);
        assert!((lam[370] - (0.003 + f370)).abs() < 1e-15);
        // Far from the pulse only background remains.
        assert!((lam[900] - 0.003).abs() < 1e-15);
    }

    #[test]
    fn outside_box_is_domain_error() {
        let model = nominal_model();
        let bad = LidarParams::new(-1.0, 10.0, 0.003);
        assert!(matches!(model.lidar_rates(&bad), Err(DedError::Domain(_))));
        let bad_tau = LidarParams::new(1.0, 1000.0, 0.003);
        assert!(model.lidar_rates(&bad_tau).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let model = nominal_model();
        let h = 1e-5;
        let rates = model.lidar_rates(&THETA0).unwrap();
        let base = THETA0.to_array();
        for coord in 0..3 {
            let mut up = base;
            let mut dn = base;
            up[coord] += h;
            dn[coord] -= h;
            let lu = model.evaluate(&up).unwrap();
            let ld = model.evaluate(&dn).unwrap();
            for r in 340..400 {
                let fd = (lu.lambda()[r] - ld.lambda()[r]) / (2.0 * h);
                let an = rates.grad(r)[coord];
                assert!(
                    (fd - an).abs() <= 1e-6 * an.abs().max(1e-4),
                    "coord {coord} r {r}: fd={fd} an={an}"
                );
            }
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let model = nominal_model();
        let theta = LidarParams::new(0.8, 120.3, 0.01);
        let rates = model.evaluate_with_hessians(&theta).unwrap();
        let h = 1e-5;
        let base = theta.to_array();
        for coord in 0..3 {
            let mut up = base;
            let mut dn = base;
            up[coord] += h;
            dn[coord] -= h;
            let gu = model.evaluate(&up).unwrap();
            let gd = model.evaluate(&dn).unwrap();
            for r in 100..140 {
                for j in 0..3 {
                    let fd = (gu.grad(r)[j] - gd.grad(r)[j]) / (2.0 * h);
                    let an = rates.hessian(r).unwrap()[j * 3 + coord];
                    assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-4));
                }
            }
        }
    }

    #[test]
    fn bump_with_zero_height_is_nominal() {
        let model = nominal_model();
        let bump = Bump {
            height: 0.0,
            sigma: 1.0,
            center: 70.0,
        };
        let a = misspecified_rates(&THETA0, &bump, &model).unwrap();
        let b = model.lidar_rates(&THETA0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bump_peak_equals_height() {
        let model = nominal_model();
        let bump = Bump {
            height: 0.15,
            sigma: 1.0,
            center: 70.0,
        };
        let mis = misspecified_rates(&THETA0, &bump, &model).unwrap();
        let nom = model.lidar_rates(&THETA0).unwrap();
        let excess: Vec<f64> = mis
            .lambda()
            .iter()
            .zip(nom.lambda())
            .map(|(m, n)| m - n)
            .collect();
        let peak = excess.iter().copied().fold(0.0, f64::max);
        assert!((peak - 0.15).abs() < 1e-12);
        let argmax = (0..1000)
            .max_by(|&a, &b| excess[a].total_cmp(&excess[b]))
            .unwrap();
        assert!((70..=71).contains(&argmax));
    }

    #[test]
    fn circular_distance_wraps() {
        assert_eq!(circular_distance(370.5 + 1000.0, 370.5, 1000), 0.0);
        assert!(circular_distance(370.4 + 1000.0, 370.4, 1000) < 1e-12);
        assert!((circular_distance(995.0, 5.0, 1000) - 10.0).abs() < 1e-12);
        assert_eq!(wrap_phase(-0.5, 10), 9.5);
    }

    #[test]
    fn projection_clamps_and_wraps() {
        let bx = ThetaBox::new((0.1, 2.0), (0.0, 1000.0), (1e-4, 1.0)).unwrap();
        let (p, clamped) = bx.project(&LidarParams::new(5.0, 1003.0, 1e-6), 1000);
        assert!(clamped);
        assert_eq!(p, LidarParams::new(2.0, 3.0, 1e-4));
        let (q, c2) = bx.project(&LidarParams::new(1.0, -2.0, 0.01), 1000);
        assert!(!c2);
        assert_eq!(q.tau, 998.0);
    }
}
