//! Phasewise likelihood, score, Fisher information and gating frequencies.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{DedError, Result};
use crate::process::{PhaseRates, PolicyKind, SufficientStats};

fn check_period(stats: &SufficientStats, rates: &PhaseRates) {
    assert_eq!(
        stats.period(),
        rates.period(),
        "statistics and rates must share the period K"
    );
}

/// θ-dependent part of the log-likelihood,
/// `Σ_r S_r log p_r + (N_r - S_r) log(1 - p_r)`.
pub fn log_likelihood(stats: &SufficientStats, rates: &PhaseRates) -> f64 {
    check_period(stats, rates);
    let (n, s) = (stats.active(), stats.detections());
    let mut total = 0.0;
    for r in 0..rates.period() {
        if s[r] > 0.0 {
            total += s[r] * rates.p()[r].ln();
        }
        // log(1 - p) = -λ exactly.
        total -= (n[r] - s[r]) * rates.lambda()[r];
    }
    total
}

/// Gradient of [`log_likelihood`]: `Σ_r (S_r - p_r N_r)/p_r · ∇λ_r`.
pub fn score(stats: &SufficientStats, rates: &PhaseRates) -> Vec<f64> {
    check_period(stats, rates);
    let d = rates.dim();
    let (n, s) = (stats.active(), stats.detections());
    let mut u = vec![0.0; d];
    for r in 0..rates.period() {
        let p = rates.p()[r];
        let w = (s[r] - p * n[r]) / p;
        if w != 0.0 {
            for (ui, gi) in u.iter_mut().zip(rates.grad(r)) {
                *ui += w * gi;
            }
        }
    }
    u
}

/// `I_r(θ) = (1 - p_r)/p_r · ∇λ_r ∇λ_rᵀ`.
pub fn phase_fisher(rates: &PhaseRates, r: usize) -> DMatrix<f64> {
    let p = rates.p()[r];
    let g = DVector::from_column_slice(rates.grad(r));
    (&g * g.transpose()) * ((1.0 - p) / p)
}

/// A Fisher information rate `I(θ; α) = (1/K) Σ_r α_r I_r(θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherInfo {
    pub matrix: DMatrix<f64>,
    pub alpha: Vec<f64>,
    pub theta: Option<Vec<f64>>,
}

impl FisherInfo {
    pub fn at(mut self, theta: &[f64]) -> Self {
        self.theta = Some(theta.to_vec());
        self
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Row-major copy of the matrix.
    pub fn row_major(&self) -> Vec<f64> {
        self.matrix.transpose().as_slice().to_vec()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// Spectral condition number `λ_max / λ_min` (infinite if not positive).
    pub fn condition_number(&self) -> f64 {
        let ev = self.eigenvalues();
        match (ev.first(), ev.last()) {
            (Some(&lo), Some(&hi)) if lo > 0.0 => hi / lo,
            _ => f64::INFINITY,
        }
    }

    /// Condition number after symmetric diagonal scaling to unit diagonal,
    /// which is invariant to the units of each coordinate.
    pub fn scaled_condition_number(&self) -> f64 {
        let d = self.dim();
        let diag: Vec<f64> = (0..d).map(|i| self.matrix[(i, i)]).collect();
        if diag.iter().any(|&v| !(v > 0.0)) {
            return f64::INFINITY;
        }
        let scaled = DMatrix::from_fn(d, d, |i, j| {
            self.matrix[(i, j)] / (diag[i].sqrt() * diag[j].sqrt())
        });
        FisherInfo {
            matrix: scaled,
            alpha: Vec::new(),
            theta: None,
        }
        .condition_number()
    }

    /// Solves `I x = rhs` by Cholesky.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let chol = self
            .matrix
            .clone()
            .cholesky()
            .ok_or_else(|| self.conditioning_error())?;
        Ok(chol
            .solve(&DVector::from_column_slice(rhs))
            .as_slice()
            .to_vec())
    }

    fn conditioning_error(&self) -> DedError {
        DedError::Conditioning {
            message: "Fisher information is not positive definite; the visited phases do \
                      not identify every parameter direction"
                .into(),
            min_eigenvalue: self.min_eigenvalue(),
        }
    }
}

pub fn information_rate(rates: &PhaseRates, alpha: &[f64]) -> Result<FisherInfo> {
    let k = rates.period();
    if alpha.len() != k {
        return Err(DedError::Domain(format!(
            "weight vector has length {}, expected K = {k}",
            alpha.len()
        )));
    }
    if let Some(a) = alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(DedError::Domain(format!("weight {a} lies outside [0, 1]")));
    }
    let d = rates.dim();
    let mut m = DMatrix::<f64>::zeros(d, d);
    for r in 0..k {
        if alpha[r] == 0.0 {
            continue;
        }
        let p = rates.p()[r];
        let w = alpha[r] * (1.0 - p) / p;
        let g = rates.grad(r);
        for i in 0..d {
            let wi = w * g[i];
            for j in 0..=i {
                m[(i, j)] += wi * g[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            m[(j, i)] = m[(i, j)];
        }
    }
    m /= k as f64;
    Ok(FisherInfo {
        matrix: m,
        alpha: alpha.to_vec(),
        theta: None,
    })
}

/// Where a gating-frequency vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Empirical,
    ExactChain,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatingFrequencies {
    pub gamma: Vec<f64>,
    pub provenance: Provenance,
}

/// `γ̂_r = N_r / L` with `L = floor(T/K)`, clamped to `[0, 1]`.
pub fn empirical_gating_frequencies(stats: &SufficientStats) -> Result<GatingFrequencies> {
    let l = stats.dims.complete_periods();
    if l == 0 {
        return Err(DedError::InsufficientData(format!(
            "horizon T = {} is shorter than one period K = {}",
            stats.dims.horizon, stats.dims.period
        )));
    }
    let l = l as f64;
    Ok(GatingFrequencies {
        gamma: stats
            .active()
            .iter()
            .map(|n| (n / l).clamp(0.0, 1.0))
            .collect(),
        provenance: Provenance::Empirical,
    })
}

/// The dead-time timer sampled at period starts, `D̄_ℓ = D_{ℓK}`.
///
/// `transition` is the one-period transition matrix on `{0, …, D}` and
/// `open` holds `f_r(i) = P(G_r = 1 | D_0 = i)` row-major as `(D+1) × K`.
#[derive(Debug, Clone)]
pub struct TimerChain {
    pub transition: DMatrix<f64>,
    pub open: Vec<f64>,
    pub period: usize,
}

impl TimerChain {
    pub fn states(&self) -> usize {
        self.transition.nrows()
    }

    pub fn free_running(p: &[f64], dead_time: usize) -> Self {
        let k = p.len();
        let n = dead_time + 1;
        let mut transition = DMatrix::zeros(n, n);
        let mut open = vec![0.0; n * k];
        if dead_time == 0 {
            transition[(0, 0)] = 1.0;
            open.fill(1.0);
            return Self {
                transition,
                open,
                period: k,
            };
        }
        // Ring buffer over timer values: timer v lives at slot (offset + v) % n,
        // so decrementing every timer is a single offset increment.
        let mut ring = vec![0.0; n];
        for start in 0..n {
            ring.fill(0.0);
            ring[start] = 1.0;
            let mut offset = 0usize;
            for (r, &pr) in p.iter().enumerate() {
                let zero = offset % n;
                let m0 = ring[zero];
                open[start * k + r] = m0;
                let m1_slot = (offset + 1) % n;
                // Old timer-0 slot becomes timer D and receives detections.
                ring[zero] = m0 * pr;
                ring[m1_slot] += m0 * (1.0 - pr);
                offset = (offset + 1) % n;
            }
            for v in 0..n {
                transition[(start, v)] = ring[(offset + v) % n];
            }
        }
        Self {
            transition,
            open,
            period: k,
        }
    }

    pub fn synchronous(p: &[f64], dead_time: usize) -> Self {
        let k = p.len();
        let n = dead_time + 1;
        let mut transition = DMatrix::zeros(n, n);
        let mut open = vec![0.0; n * k];
        // A positive timer at the period start keeps the whole period closed.
        for start in 1..n {
            transition[(start, start.saturating_sub(k))] = 1.0;
        }
        // From 0 the gate stays open until the first detection.
        let mut survive = 1.0;
        for (r, &pr) in p.iter().enumerate() {
            open[r] = survive;
            let detect = survive * pr;
            let next = dead_time.saturating_sub(k - 1 - r);
            transition[(0, next)] += detect;
            survive *= 1.0 - pr;
        }
        transition[(0, 0)] += survive;
        Self {
            transition,
            open,
            period: k,
        }
    }

    /// Stationary law on the closed class containing state 0.
    pub fn stationary(&self) -> Vec<f64> {
        let n = self.states();
        let mut reachable = vec![false; n];
        let mut stack = vec![0usize];
        reachable[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if !reachable[j] && self.transition[(i, j)] > 0.0 {
                    reachable[j] = true;
                    stack.push(j);
                }
            }
        }
        let states: Vec<usize> = (0..n).filter(|&i| reachable[i]).collect();
        let m = states.len();
        // Solve μ (P - I) = 0 with Σ μ = 1 on the reachable class.
        let mut a = DMatrix::<f64>::zeros(m, m);
        for (row, &j) in states.iter().enumerate() {
            for (col, &i) in states.iter().enumerate() {
                a[(row, col)] = self.transition[(i, j)] - if i == j { 1.0 } else { 0.0 };
            }
        }
        for col in 0..m {
            a[(m - 1, col)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(m);
        rhs[m - 1] = 1.0;
        let solution = a
            .lu()
            .solve(&rhs)
            .expect("timer chain has a unique stationary law on the class of state 0");
        let mut mu = vec![0.0; n];
        for (idx, &i) in states.iter().enumerate() {
            mu[i] = solution[idx].max(0.0);
        }
        let total: f64 = mu.iter().sum();
        mu.iter_mut().for_each(|v| *v /= total);
        mu
    }

    /// `γ_r = Σ_i μ_i f_r(i)`.
    pub fn gating_frequencies(&self) -> Vec<f64> {
        let mu = self.stationary();
        let k = self.period;
        let mut gamma = vec![0.0; k];
        for (i, &w) in mu.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (g, f) in gamma.iter_mut().zip(&self.open[i * k..(i + 1) * k]) {
                *g += w * f;
            }
        }
        gamma.iter_mut().for_each(|g| *g = g.clamp(0.0, 1.0));
        gamma
    }
}

/// Limiting gating frequencies of the free-running or synchronous scheme.
pub fn exact_gating_frequencies(
    rates: &PhaseRates,
    kind: PolicyKind,
    dead_time: usize,
) -> GatingFrequencies {
    let chain = match kind {
        PolicyKind::FreeRunning => TimerChain::free_running(rates.p(), dead_time),
        PolicyKind::Synchronous => TimerChain::synchronous(rates.p(), dead_time),
    };
    GatingFrequencies {
        gamma: chain.gating_frequencies(),
        provenance: Provenance::ExactChain,
    }
}

/// `tr(W I⁻¹)` for diagonal `W`, via Cholesky solves.
pub fn fisher_lower_bound(info: &FisherInfo, weights: &[f64]) -> Result<f64> {
    let d = info.dim();
    if weights.len() != d {
        return Err(DedError::Domain(format!(
            "weight diagonal has length {}, expected {d}",
            weights.len()
        )));
    }
    let chol = info
        .matrix
        .clone()
        .cholesky()
        .ok_or_else(|| info.conditioning_error())?;
    let mut total = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let mut e = DVector::<f64>::zeros(d);
        e[i] = 1.0;
        let x = chol.solve(&e);
        total += w * x[i];
    }
    if !total.is_finite() || total <= 0.0 {
        return Err(info.conditioning_error());
    }
    Ok(total)
}

/// Single-bin log-mass `m_r(y)`, score `s_r(y)` and Hessian `J_r(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinDerivatives {
    pub log_mass: f64,
    pub score: Vec<f64>,
    pub hessian: DMatrix<f64>,
}

/// Derivatives of `m_r(y; θ) = y log p_r + (1 - y) log(1 - p_r)`.
///
/// The curvature term uses `∇²λ_r` when the rates carry it and treats λ as
/// linear in θ otherwise.
pub fn per_bin_derivatives(y: bool, rates: &PhaseRates, r: usize) -> BinDerivatives {
    let p = rates.p()[r];
    let lambda = rates.lambda()[r];
    let yf = if y { 1.0 } else { 0.0 };
    let log_mass = if y { p.ln() } else { -lambda };
    let dm = (yf - p) / p;
    let d2m = -yf * (1.0 - p) / (p * p);
    let g = DVector::from_column_slice(rates.grad(r));
    let mut hessian = (&g * g.transpose()) * d2m;
    if let Some(h) = rates.hessian(r) {
        let d = rates.dim();
        hessian += DMatrix::from_row_slice(d, d, h) * dm;
    }
    BinDerivatives {
        log_mass,
        score: g.iter().map(|gi| dm * gi).collect(),
        hessian,
    }
}
