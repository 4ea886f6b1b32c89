//! Pulse templates for the lidar rate `λ_r(θ) = a·f_τ(r) + b`.
//!
//! A template is a `K`-periodic density `f` with unit mass per period. Its
//! binned form is `f_τ(r) = ∫_{τ-r}^{τ-r+1} f(x) dx`, so that
//! `f_{τ+1}(r+1) = f_τ(r)` and `∂f_τ(r)/∂τ = f(τ-r+1) - f(τ-r)`.

use std::f64::consts::{PI, SQRT_2};
use std::path::Path;

use num_complex::Complex64;
use statrs::function::erf::erfc;

use crate::error::{DedError, Result};
use crate::pchip::PeriodicPchip;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Simpson subintervals per bin for Fourier coefficients of tabulated pulses.
const QUADRATURE_POINTS_PER_BIN: usize = 16;

/// `sin(πu) / (πu)`.
pub fn sinc(u: f64) -> f64 {
    if u == 0.0 {
        1.0
    } else {
        let x = PI * u;
        x.sin() / x
    }
}

/// Gaussian upper tail `P(Z > z)`.
#[inline]
fn upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// `P(a < Z < b)` for a standard normal, without cancellation in the tails.
#[inline]
fn normal_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        upper_tail(a) - upper_tail(b)
    } else if b <= 0.0 {
        upper_tail(-b) - upper_tail(-a)
    } else {
        1.0 - upper_tail(-a) - upper_tail(b)
    }
}

/// `f(x) = Σ_ℓ φ_σ(x + ℓK)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WrappedGaussian {
    sigma: f64,
    period: usize,
    wraps: i64,
}

impl WrappedGaussian {
    pub fn new(sigma: f64, period: usize) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(DedError::Domain(format!(
                "pulse width σ must be positive, got {sigma}"
            )));
        }
        if period == 0 {
            return Err(DedError::Domain("period K must be at least 1".into()));
        }
        // Copies further than this contribute below 1e-15 relative.
        let wraps = (8.0 * sigma / period as f64 + 2.0).ceil() as i64;
        Ok(Self {
            sigma,
            period,
            wraps,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Reduces `x` into `[-K/2, K/2)`.
    #[inline]
    fn centered(&self, x: f64) -> f64 {
        let k = self.period as f64;
        x - k * (x / k).round()
    }

    fn density(&self, x: f64) -> f64 {
        let k = self.period as f64;
        let x0 = self.centered(x);
        (-self.wraps..=self.wraps)
            .map(|l| {
                let z = (x0 + l as f64 * k) / self.sigma;
                (-0.5 * z * z).exp()
            })
            .sum::<f64>()
            * INV_SQRT_2PI
            / self.sigma
    }

    fn density_slope(&self, x: f64) -> f64 {
        let k = self.period as f64;
        let x0 = self.centered(x);
        let s2 = self.sigma * self.sigma;
        (-self.wraps..=self.wraps)
            .map(|l| {
                let y = x0 + l as f64 * k;
                let z = y / self.sigma;
                -y / s2 * (-0.5 * z * z).exp()
            })
            .sum::<f64>()
            * INV_SQRT_2PI
            / self.sigma
    }

    fn mass(&self, lower: f64) -> f64 {
        let k = self.period as f64;
        let x0 = self.centered(lower);
        (-self.wraps..=self.wraps)
            .map(|l| {
                let a = (x0 + l as f64 * k) / self.sigma;
                let b = (x0 + 1.0 + l as f64 * k) / self.sigma;
                // Both tails underflow past ±38.5.
                if a > 38.5 || b < -38.5 {
                    0.0
                } else {
                    normal_mass(a, b)
                }
            })
            .sum()
    }

    /// `c_m = (1/K) exp(-2π²m²σ²/K²)`.
    fn series_coefficient(&self, m: i64) -> Complex64 {
        let k = self.period as f64;
        let m = m as f64;
        Complex64::new(
            (-2.0 * PI * PI * m * m * self.sigma * self.sigma / (k * k)).exp() / k,
            0.0,
        )
    }
}

/// A template interpolated from a measured pulse histogram.
///
/// `histogram[r]` is read as the pulse profile at zero delay, i.e.
/// `f_0(r) ∝ histogram[r]`; the density is recovered by monotone cubic
/// Hermite interpolation of the cumulative mass.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedPulse {
    cdf: PeriodicPchip,
    weights: Vec<f64>,
}

impl TabulatedPulse {
    pub fn new(histogram: &[f64]) -> Result<Self> {
        let k = histogram.len();
        if k == 0 {
            return Err(DedError::Domain("pulse histogram is empty".into()));
        }
        if let Some((i, v)) = histogram
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(DedError::Domain(format!(
                "pulse histogram entry {i} is {v}; counts must be finite and nonnegative"
            )));
        }
        let total: f64 = histogram.iter().sum();
        if total <= 0.0 {
            return Err(DedError::Domain(
                "pulse histogram is identically zero".into(),
            ));
        }
        let weights: Vec<f64> = histogram.iter().map(|h| h / total).collect();
        // f on [j, j+1] corresponds to f_0(r) with r ≡ -j (mod K).
        let mass: Vec<f64> = (0..k).map(|j| weights[(k - j) % k]).collect();
        Ok(Self {
            cdf: PeriodicPchip::from_interval_masses(&mass),
            weights,
        })
    }

    /// Normalized histogram, `f_0(r)`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn series_coefficient(&self, m: i64) -> Complex64 {
        let k = self.weights.len();
        let kf = k as f64;
        let omega = -2.0 * PI * m as f64 / kf;
        let n = QUADRATURE_POINTS_PER_BIN;
        let h = 1.0 / n as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..k {
            for i in 0..=n {
                let w = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                // Evaluate just inside the bin so the interval's own cubic is used.
                let x = j as f64 + (i as f64 * h).clamp(0.0, 1.0 - 1e-12);
                let fx = self.cdf.density(x);
                acc += Complex64::from_polar(w * fx, omega * (j as f64 + i as f64 * h));
            }
        }
        acc * (h / 3.0) / kf
    }

    /// Circular standard deviation of the histogram in bins.
    fn width(&self) -> f64 {
        let k = self.weights.len() as f64;
        let resultant: Complex64 = self
            .weights
            .iter()
            .enumerate()
            .map(|(r, &w)| Complex64::from_polar(w, 2.0 * PI * r as f64 / k))
            .sum();
        let len = resultant.norm().clamp(1e-300, 1.0);
        (-2.0 * len.ln()).sqrt() * k / (2.0 * PI)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PulseTemplate {
    WrappedGaussian(WrappedGaussian),
    Tabulated(TabulatedPulse),
}

/// Wrapped Gaussian pulse of width `sigma` bins on a period of `k` bins.
pub fn wrapped_gaussian(sigma: f64, k: usize) -> Result<PulseTemplate> {
    WrappedGaussian::new(sigma, k).map(PulseTemplate::WrappedGaussian)
}

/// Template interpolated from a nonnegative histogram of length `k`.
pub fn tabulated_template(histogram: &[f64], k: usize) -> Result<PulseTemplate> {
    if histogram.len() != k {
        return Err(DedError::Domain(format!(
            "pulse histogram has {} entries, expected K = {k}",
            histogram.len()
        )));
    }
    TabulatedPulse::new(histogram).map(PulseTemplate::Tabulated)
}

/// Reads a calibrated pulse: one nonnegative count per line, exactly `k` lines.
pub fn read_pulse_file(path: &Path, k: usize) -> Result<PulseTemplate> {
    let text = std::fs::read_to_string(path).map_err(|e| DedError::io(path, e))?;
    let mut counts = Vec::with_capacity(k);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let first = line.split(',').next().unwrap_or(line).trim();
        let v: f64 = first.parse().map_err(|_| {
            DedError::Parse(format!(
                "{}:{}: `{line}` is not a number",
                path.display(),
                i + 1
            ))
        })?;
        counts.push(v);
    }
    tabulated_template(&counts, k)
}

impl PulseTemplate {
    pub fn period(&self) -> usize {
        match self {
            PulseTemplate::WrappedGaussian(g) => g.period,
            PulseTemplate::Tabulated(t) => t.weights.len(),
        }
    }

    /// The periodic density `f(x)`.
    pub fn density(&self, x: f64) -> f64 {
        match self {
            PulseTemplate::WrappedGaussian(g) => g.density(x),
            PulseTemplate::Tabulated(t) => t.cdf.density(x),
        }
    }

    /// `f'(x)`.
    pub fn density_slope(&self, x: f64) -> f64 {
        match self {
            PulseTemplate::WrappedGaussian(g) => g.density_slope(x),
            PulseTemplate::Tabulated(t) => t.cdf.density_slope(x),
        }
    }

    /// `f_τ(r) = ∫_{τ-r}^{τ-r+1} f`.
    pub fn binned(&self, tau: f64, r: usize) -> f64 {
        let x = tau - r as f64;
        match self {
            PulseTemplate::WrappedGaussian(g) => g.mass(x),
            PulseTemplate::Tabulated(t) => (t.cdf.cdf(x + 1.0) - t.cdf.cdf(x)).max(0.0),
        }
    }

    pub fn binned_profile(&self, tau: f64) -> Vec<f64> {
        (0..self.period()).map(|r| self.binned(tau, r)).collect()
    }

    /// `∂f_τ(r)/∂τ = f(τ-r+1) - f(τ-r)`.
    pub fn binned_tau_derivative(&self, tau: f64, r: usize) -> f64 {
        let x = tau - r as f64;
        self.density(x + 1.0) - self.density(x)
    }

    /// `∂²f_τ(r)/∂τ² = f'(τ-r+1) - f'(τ-r)`.
    pub fn binned_tau_second_derivative(&self, tau: f64, r: usize) -> f64 {
        let x = tau - r as f64;
        self.density_slope(x + 1.0) - self.density_slope(x)
    }

    /// Fourier-series coefficient `c_m = (1/K) ∫_0^K f(x) e^{-2πimx/K} dx`.
    pub fn series_coefficient(&self, m: i64) -> Complex64 {
        match self {
            PulseTemplate::WrappedGaussian(g) => g.series_coefficient(m),
            PulseTemplate::Tabulated(t) => t.series_coefficient(m),
        }
    }

    /// Binned coefficient `d_m = c_m · e^{iπm/K} · sinc(m/K)`, so that
    /// `f_τ(r) = Σ_m d_m e^{2πim(τ-r)/K}`.
    pub fn fourier_coefficient(&self, m: i64) -> Complex64 {
        let k = self.period() as f64;
        let u = m as f64 / k;
        self.series_coefficient(m) * Complex64::from_polar(sinc(u), PI * u)
    }

    /// Characteristic pulse width in bins (σ, or the circular standard
    /// deviation of a tabulated pulse).
    pub fn width(&self) -> f64 {
        match self {
            PulseTemplate::WrappedGaussian(g) => g.sigma,
            PulseTemplate::Tabulated(t) => t.width(),
        }
    }
}

pub fn fourier_coefficient(template: &PulseTemplate, m: i64) -> Complex64 {
    template.fourier_coefficient(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn nominal() -> PulseTemplate {
        wrapped_gaussian(10.0, 1000).unwrap()
    }

    #[test]
    fn rejects_nonpositive_sigma() {
        assert!(matches!(
            wrapped_gaussian(0.0, 10),
            Err(DedError::Domain(_))
        ));
        assert!(matches!(
            wrapped_gaussian(-1.0, 10),
            Err(DedError::Domain(_))
        ));
    }

    #[test]
    fn rejects_zero_histogram() {
        assert!(matches!(
            tabulated_template(&[0.0; 5], 5),
            Err(DedError::Domain(_))
        ));
        assert!(tabulated_template(&[1.0; 4], 5).is_err());
    }

    #[test]
    fn binned_template_sums_to_one() {
        let templates = [
            nominal(),
            wrapped_gaussian(0.7, 17).unwrap(),
            wrapped_gaussian(40.0, 30).unwrap(),
            tabulated_template(&[0.0, 1.0, 5.0, 2.0, 0.0, 0.0, 0.5], 7).unwrap(),
        ];
        for t in &templates {
            let k = t.period() as f64;
            for i in 0..100 {
                let tau = k * i as f64 / 100.0 + 0.123;
                let s: f64 = t.binned_profile(tau).iter().sum();
                assert!((s - 1.0).abs() < 1e-12, "sum {s} at τ={tau}");
            }
        }
    }

    #[test]
    fn integer_shift_equivariance() {
        let templates = [
            wrapped_gaussian(3.0, 50).unwrap(),
            tabulated_template(&[0.2, 1.0, 3.0, 1.0, 0.1, 0.0], 6).unwrap(),
        ];
        for t in &templates {
            let k = t.period();
            for i in 0..20 {
                let tau = 0.37 * i as f64;
                for r in 0..k {
                    let lhs = t.binned(tau + 1.0, (r + 1) % k);
                    let rhs = t.binned(tau, r);
                    assert!((lhs - rhs).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn tau_derivative_matches_finite_differences() {
        let t = wrapped_gaussian(2.5, 40).unwrap();
        let h = 1e-5;
        for i in 0..40 {
            let tau = 13.3 + 0.21 * i as f64;
            for r in 0..40 {
                let fd = (t.binned(tau + h, r) - t.binned(tau - h, r)) / (2.0 * h);
                let an = t.binned_tau_derivative(tau, r);
                assert!(
                    (fd - an).abs() <= 1e-6 * an.abs().max(1e-3),
                    "r={r} τ={tau}: fd={fd} an={an}"
                );
            }
        }
    }

    #[test]
    fn fourier_zero_mode_is_one_over_k() {
        for t in [nominal(), tabulated_template(&[1.0, 2.0, 3.0], 3).unwrap()] {
            let d0 = t.fourier_coefficient(0);
            assert_relative_eq!(d0.re, 1.0 / t.period() as f64, max_relative = 1e-12);
            assert!(d0.im.abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_first_coefficient_closed_form() {
        // (1/1000)·exp(-2π²·100/10⁶)·exp(iπ/1000)·sinc(1/1000), evaluated term by term.
        let k = 1000.0;
        let mag = (1.0 / k) * (-2.0 * PI * PI * 100.0 / 1e6).exp();
        let s = (PI / k).sin() / (PI / k);
        let expected = Complex64::new((PI / k).cos(), (PI / k).sin()) * (mag * s);
        let d1 = nominal().fourier_coefficient(1);
        assert!((d1 - expected).norm() < 1e-17);
    }

    #[test]
    fn fourier_series_reconstructs_binned_template() {
        let t = nominal();
        let k = 1000.0;
        let tau = 370.4;
        let profile = t.binned_profile(tau);
        let coeffs: Vec<Complex64> = (-200..=200).map(|m| t.fourier_coefficient(m)).collect();
        for (r, &direct) in profile.iter().enumerate() {
            let series: f64 = (-200i64..=200)
                .zip(&coeffs)
                .map(|(m, d)| {
                    (d * Complex64::from_polar(1.0, 2.0 * PI * m as f64 * (tau - r as f64) / k)).re
                })
                .sum();
            assert!((series - direct).abs() < 1e-8, "r={r}");
        }
    }

    #[test]
    fn one_hot_histogram_concentrates_at_its_bin() {
        let mut h = vec![0.0; 12];
        h[4] = 3.0;
        let t = tabulated_template(&h, 12).unwrap();
        let prof = t.binned_profile(0.0);
        assert!((prof[4] - 1.0).abs() < 1e-12);
        let s: f64 = t.binned_profile(0.5).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        let shifted = t.binned_profile(0.5);
        let argmax = (0..12)
            .max_by(|&a, &b| shifted[a].total_cmp(&shifted[b]))
            .unwrap();
        assert!(argmax == 4 || argmax == 5);
    }

    #[test]
    fn tabulated_gaussian_matches_analytic() {
        let g = nominal();
        let hist = g.binned_profile(0.0);
        let t = tabulated_template(&hist, 1000).unwrap();
        for tau in [0.0, 0.25, 370.4, 512.9, 999.5] {
            let a = g.binned_profile(tau);
            let b = t.binned_profile(tau);
            let err = a
                .iter()
                .zip(&b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(err <= 1e-3, "τ={tau}: max error {err}");
        }
        let d1 = (t.fourier_coefficient(1) - g.fourier_coefficient(1)).norm();
        assert!(d1 <= 1e-6, "|Δd₁| = {d1}");
        assert!((t.width() - 10.0).abs() < 0.5);
    }

    #[test]
    fn density_is_periodic_and_nonnegative() {
        let t = wrapped_gaussian(30.0, 100).unwrap();
        for i in 0..200 {
            let x = -100.0 + i as f64 * 1.7;
            assert!(t.density(x) >= 0.0);
            assert!((t.density(x) - t.density(x + 100.0)).abs() < 1e-15);
        }
    }
}
