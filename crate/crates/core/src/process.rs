//! The dead-time event detection (DED) process.
//!
//! A DED process runs one Bernoulli experiment per time bin with `K`-periodic
//! success probabilities `p_r = 1 - exp(-λ_r)`. A causal gating policy decides
//! whether each bin is observed; a detection closes the detector for the
//! following `D` bins. Everything the likelihood needs is carried by the
//! phasewise counts of active bins `N_r` and detections `S_r`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DedError, Result};

/// Period length `K`, dead time `D` and horizon `T`, all in bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub period: usize,
    pub dead_time: usize,
    pub horizon: u64,
}

impl ModelDims {
    pub fn new(period: usize, dead_time: usize, horizon: u64) -> Result<Self> {
        if period == 0 {
            return Err(DedError::Domain("period K must be at least 1".into()));
        }
        Ok(Self {
            period,
            dead_time,
            horizon,
        })
    }

    /// Number of complete periods `L = floor(T / K)`.
    pub fn complete_periods(&self) -> u64 {
        self.horizon / self.period as u64
    }

    /// Largest number of bins any single phase can have, `ceil(T / K)`.
    pub fn max_bins_per_phase(&self) -> u64 {
        self.horizon.div_ceil(self.period as u64)
    }

    pub fn with_horizon(self, horizon: u64) -> Self {
        Self { horizon, ..self }
    }
}

/// Phasewise rates `λ_r`, detection probabilities `p_r` and rate gradients.
///
/// `grad_lambda` is a `K × d` row-major array. `hess_lambda`, when present, is
/// `K × d × d` and holds the second derivatives of each `λ_r`; models that are
/// linear in θ leave it empty.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRates {
    lambda: Vec<f64>,
    p: Vec<f64>,
    grad_lambda: Vec<f64>,
    hess_lambda: Option<Vec<f64>>,
    dim: usize,
}

impl PhaseRates {
    pub fn new(lambda: Vec<f64>, grad_lambda: Vec<f64>, dim: usize) -> Result<Self> {
        if lambda.is_empty() {
            return Err(DedError::Domain("rate vector is empty".into()));
        }
        if grad_lambda.len() != lambda.len() * dim {
            return Err(DedError::Domain(format!(
                "gradient array has {} entries, expected K·d = {}",
                grad_lambda.len(),
                lambda.len() * dim
            )));
        }
        let mut p = Vec::with_capacity(lambda.len());
        for (r, &l) in lambda.iter().enumerate() {
            let pr = -(-l).exp_m1();
            if !(l.is_finite() && pr > 0.0 && pr < 1.0) {
                return Err(DedError::Domain(format!(
                    "rate λ_{r} = {l} gives detection probability outside (0,1)"
                )));
            }
            p.push(pr);
        }
        Ok(Self {
            lambda,
            p,
            grad_lambda,
            hess_lambda: None,
            dim,
        })
    }

    /// Rates without a parameter gradient (`d = 0`), for simulation only.
    pub fn from_lambda(lambda: Vec<f64>) -> Result<Self> {
        Self::new(lambda, Vec::new(), 0)
    }

    /// Rates built from detection probabilities, with `d = 0`.
    pub fn from_probabilities(p: &[f64]) -> Result<Self> {
        let lambda = p.iter().map(|&q| -(-q).ln_1p()).collect();
        Self::from_lambda(lambda)
    }

    pub fn with_hessians(mut self, hess_lambda: Vec<f64>) -> Result<Self> {
        if hess_lambda.len() != self.period() * self.dim * self.dim {
            return Err(DedError::Domain(
                "Hessian array has the wrong length".into(),
            ));
        }
        self.hess_lambda = Some(hess_lambda);
        Ok(self)
    }

    pub fn period(&self) -> usize {
        self.lambda.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    /// `∇λ_r` as a slice of length `d`.
    pub fn grad(&self, r: usize) -> &[f64] {
        &self.grad_lambda[r * self.dim..(r + 1) * self.dim]
    }

    /// `∇²λ_r` in row-major order, if the model provides it.
    pub fn hessian(&self, r: usize) -> Option<&[f64]> {
        let dd = self.dim * self.dim;
        self.hess_lambda.as_ref().map(|h| &h[r * dd..(r + 1) * dd])
    }
}

/// A parametric map θ ↦ phasewise rates.
pub trait RateModel: Send + Sync {
    fn period(&self) -> usize;

    fn dim(&self) -> usize;

    /// Whether θ lies in the parameter box Θ.
    fn contains(&self, theta: &[f64]) -> bool;

    /// Evaluates the rates without checking the box. Callers must keep the
    /// rates positive.
    fn evaluate(&self, theta: &[f64]) -> Result<PhaseRates>;

    fn rates(&self, theta: &[f64]) -> Result<PhaseRates> {
        if theta.len() != self.dim() {
            return Err(DedError::Domain(format!(
                "θ has {} coordinates, model expects {}",
                theta.len(),
                self.dim()
            )));
        }
        if !self.contains(theta) {
            return Err(DedError::Domain(format!("θ = {theta:?} lies outside Θ")));
        }
        self.evaluate(theta)
    }
}

/// The saturated model `λ_r = θ_r`, one free rate per phase.
#[derive(Debug, Clone)]
pub struct PerPhaseModel {
    period: usize,
    lower: f64,
    upper: f64,
}

impl PerPhaseModel {
    pub fn new(period: usize, lower: f64, upper: f64) -> Result<Self> {
        if period == 0 || !(lower > 0.0 && upper > lower && upper.is_finite()) {
            return Err(DedError::Domain(
                "per-phase model needs K ≥ 1 and 0 < lower < upper < ∞".into(),
            ));
        }
        Ok(Self {
            period,
            lower,
            upper,
        })
    }
}

impl RateModel for PerPhaseModel {
    fn period(&self) -> usize {
        self.period
    }

    fn dim(&self) -> usize {
        self.period
    }

    fn contains(&self, theta: &[f64]) -> bool {
        theta.iter().all(|&x| x >= self.lower && x <= self.upper)
    }

    fn evaluate(&self, theta: &[f64]) -> Result<PhaseRates> {
        let k = self.period;
        let mut grad = vec![0.0; k * k];
        for r in 0..k {
            grad[r * k + r] = 1.0;
        }
        PhaseRates::new(theta.to_vec(), grad, k)
    }
}

/// The two gating schemes that ship with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    FreeRunning,
    Synchronous,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::FreeRunning => "free_running",
            PolicyKind::Synchronous => "synchronous",
        })
    }
}

impl FromStr for PolicyKind {
    type Err = DedError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "free_running" | "free-running" | "fr" => Ok(PolicyKind::FreeRunning),
            "synchronous" | "syn" => Ok(PolicyKind::Synchronous),
            other => Err(DedError::Config(format!(
                "unsupported gating scheme `{other}`; only free_running and synchronous \
                 can be reconstructed from detections"
            ))),
        }
    }
}

/// A causal gating rule.
///
/// The policy itself is immutable; per-trajectory memory lives in `State`,
/// which must be advanced once per bin in time order. `gate` sees only the
/// state (a summary of the past) and the bin's uniform draw.
pub trait GatingPolicy: Send + Sync {
    type State: Clone + fmt::Debug;

    fn dims(&self) -> ModelDims;

    fn initial_state(&self) -> Self::State;

    /// Randomized policies receive a fresh uniform per bin; deterministic ones
    /// receive 0.0 and no draw is consumed.
    fn is_randomized(&self) -> bool {
        false
    }

    fn gate(&self, state: &Self::State, t: u64, uniform: f64) -> bool;

    fn advance(&self, state: &mut Self::State, t: u64, detection: bool);
}

/// `G_t = 1{no detection in the previous D bins}`.
#[derive(Debug, Clone, Copy)]
pub struct FreeRunning {
    dims: ModelDims,
}

/// Opens at each period start if the dead-time timer has expired and closes
/// for the rest of the period after its first detection.
#[derive(Debug, Clone, Copy)]
pub struct Synchronous {
    dims: ModelDims,
}

pub fn free_running_policy(dims: ModelDims) -> FreeRunning {
    FreeRunning { dims }
}

pub fn synchronous_policy(dims: ModelDims) -> Synchronous {
    Synchronous { dims }
}

impl GatingPolicy for FreeRunning {
    /// Remaining dead-time bins.
    type State = usize;

    fn dims(&self) -> ModelDims {
        self.dims
    }

    fn initial_state(&self) -> usize {
        0
    }

    #[inline]
    fn gate(&self, timer: &usize, _t: u64, _u: f64) -> bool {
        *timer == 0
    }

    #[inline]
    fn advance(&self, timer: &mut usize, _t: u64, detection: bool) {
        *timer = if detection {
            self.dims.dead_time
        } else {
            timer.saturating_sub(1)
        };
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SynchronousState {
    timer: usize,
    timer_at_period_start: usize,
    detected_this_period: bool,
}

impl GatingPolicy for Synchronous {
    type State = SynchronousState;

    fn dims(&self) -> ModelDims {
        self.dims
    }

    fn initial_state(&self) -> SynchronousState {
        SynchronousState::default()
    }

    #[inline]
    fn gate(&self, s: &SynchronousState, _t: u64, _u: f64) -> bool {
        s.timer_at_period_start == 0 && !s.detected_this_period
    }

    #[inline]
    fn advance(&self, s: &mut SynchronousState, t: u64, detection: bool) {
        s.timer = if detection {
            self.dims.dead_time
        } else {
            s.timer.saturating_sub(1)
        };
        s.detected_this_period |= detection;
        if (t + 1) % self.dims.period as u64 == 0 {
            s.timer_at_period_start = s.timer;
            s.detected_this_period = false;
        }
    }
}

/// Gate and detection bits of one simulated run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub dims: ModelDims,
    pub gates: Vec<bool>,
    pub detections: Vec<bool>,
    pub seed: u64,
}

impl Trajectory {
    /// Absolute bin indices of all detections.
    pub fn detection_bins(&self) -> Vec<u64> {
        self.detections
            .iter()
            .enumerate()
            .filter_map(|(t, &y)| y.then_some(t as u64))
            .collect()
    }
}

/// Phasewise active-bin counts `N_r` and detection counts `S_r`.
///
/// Counts are stored as `f64` so that the likelihood routines also accept
/// expected (non-integer) counts; values produced from data are exact integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficientStats {
    pub dims: ModelDims,
    active: Vec<f64>,
    detections: Vec<f64>,
}

impl SufficientStats {
    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            dims,
            active: vec![0.0; dims.period],
            detections: vec![0.0; dims.period],
        }
    }

    pub fn new(dims: ModelDims, active: Vec<f64>, detections: Vec<f64>) -> Result<Self> {
        if active.len() != dims.period || detections.len() != dims.period {
            return Err(DedError::Domain(format!(
                "count arrays must have length K = {}",
                dims.period
            )));
        }
        for r in 0..dims.period {
            let (n, s) = (active[r], detections[r]);
            if !(s >= 0.0 && s <= n && n.is_finite()) {
                return Err(DedError::DataIntegrity(format!(
                    "phase {r}: need 0 ≤ S ≤ N, got N = {n}, S = {s}"
                )));
            }
        }
        Ok(Self {
            dims,
            active,
            detections,
        })
    }

    pub fn period(&self) -> usize {
        self.dims.period
    }

    /// `N_r`.
    pub fn active(&self) -> &[f64] {
        &self.active
    }

    /// `S_r`.
    pub fn detections(&self) -> &[f64] {
        &self.detections
    }

    pub fn total_active(&self) -> f64 {
        self.active.iter().sum()
    }

    pub fn total_detections(&self) -> f64 {
        self.detections.iter().sum()
    }

    #[inline]
    fn record(&mut self, t: u64, gate: bool, detection: bool) {
        let r = (t % self.dims.period as u64) as usize;
        if gate {
            self.active[r] += 1.0;
        }
        if detection {
            self.detections[r] += 1.0;
        }
    }

    /// Rotates the phase origin so that phase `r` becomes `(r + shift) mod K`.
    pub fn rotated(&self, shift: usize) -> Self {
        let k = self.dims.period;
        let mut out = Self::zeros(self.dims);
        for r in 0..k {
            let to = (r + shift) % k;
            out.active[to] = self.active[r];
            out.detections[to] = self.detections[r];
        }
        out
    }
}

/// The deterministic ChaCha stream for replicate `index` under `master_seed`.
pub fn replicate_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Runs the process forward and hands `(t, G_t, Y_t)` to `sink` for each bin.
///
/// The latent `Z_t` is drawn only for open bins.
pub fn run_process<P, R, F>(rates: &PhaseRates, policy: &P, rng: &mut R, mut sink: F)
where
    P: GatingPolicy,
    R: Rng + ?Sized,
    F: FnMut(u64, bool, bool),
{
    let dims = policy.dims();
    let k = dims.period;
    let p = rates.p();
    let randomized = policy.is_randomized();
    let mut state = policy.initial_state();
    let mut phase = 0usize;
    for t in 0..dims.horizon {
        let u = if randomized { rng.random::<f64>() } else { 0.0 };
        let gate = policy.gate(&state, t, u);
        let detection = gate && rng.random::<f64>() < p[phase];
        sink(t, gate, detection);
        policy.advance(&mut state, t, detection);
        phase += 1;
        if phase == k {
            phase = 0;
        }
    }
}

fn check_policy_matches(rates: &PhaseRates, dims: &ModelDims) -> Result<()> {
    if rates.period() != dims.period {
        return Err(DedError::Config(format!(
            "model period {} does not match policy period {}",
            rates.period(),
            dims.period
        )));
    }
    Ok(())
}

/// Simulates a full trajectory of length `T` at parameter θ.
pub fn simulate<M, P>(model: &M, theta: &[f64], policy: &P, seed: u64) -> Result<Trajectory>
where
    M: RateModel + ?Sized,
    P: GatingPolicy,
{
    let rates = model.rates(theta)?;
    simulate_rates(&rates, policy, seed)
}

/// Simulates from precomputed rates.
pub fn simulate_rates<P: GatingPolicy>(
    rates: &PhaseRates,
    policy: &P,
    seed: u64,
) -> Result<Trajectory> {
    let dims = policy.dims();
    check_policy_matches(rates, &dims)?;
    let n = dims.horizon as usize;
    let mut gates = Vec::with_capacity(n);
    let mut detections = Vec::with_capacity(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_process(rates, policy, &mut rng, |_, g, y| {
        gates.push(g);
        detections.push(y);
    });
    Ok(Trajectory {
        dims,
        gates,
        detections,
        seed,
    })
}

/// Simulates straight into sufficient statistics without storing the path.
pub fn simulate_stats<P, R>(rates: &PhaseRates, policy: &P, rng: &mut R) -> Result<SufficientStats>
where
    P: GatingPolicy,
    R: Rng + ?Sized,
{
    let dims = policy.dims();
    check_policy_matches(rates, &dims)?;
    let mut stats = SufficientStats::zeros(dims);
    run_process(rates, policy, rng, |t, g, y| stats.record(t, g, y));
    Ok(stats)
}

/// Simulates and returns both the statistics and the absolute detection bins.
pub fn simulate_events<P, R>(
    rates: &PhaseRates,
    policy: &P,
    rng: &mut R,
) -> Result<(SufficientStats, Vec<u64>)>
where
    P: GatingPolicy,
    R: Rng + ?Sized,
{
    let dims = policy.dims();
    check_policy_matches(rates, &dims)?;
    let mut stats = SufficientStats::zeros(dims);
    let mut events = Vec::new();
    run_process(rates, policy, rng, |t, g, y| {
        stats.record(t, g, y);
        if y {
            events.push(t);
        }
    });
    Ok((stats, events))
}

pub fn accumulate_stats(traj: &Trajectory) -> SufficientStats {
    let mut stats = SufficientStats::zeros(traj.dims);
    for (t, (&g, &y)) in traj.gates.iter().zip(&traj.detections).enumerate() {
        stats.record(t as u64, g, y);
    }
    stats
}

/// True iff `Y_t ≤ G_t` everywhere and every detection is followed by `D`
/// closed bins (truncated at the horizon).
pub fn check_feasible(traj: &Trajectory) -> bool {
    let d = traj.dims.dead_time;
    let n = traj.gates.len();
    if traj.detections.len() != n || n as u64 != traj.dims.horizon {
        return false;
    }
    let mut last_detection: Option<usize> = None;
    for t in 0..n {
        if traj.detections[t] && !traj.gates[t] {
            return false;
        }
        if let Some(s) = last_detection {
            if traj.gates[t] && t - s <= d {
                return false;
            }
        }
        if traj.detections[t] {
            last_detection = Some(t);
        }
    }
    true
}

fn reconstruct<P: GatingPolicy>(policy: &P, detection_bins: &[u64]) -> Result<SufficientStats> {
    let dims = policy.dims();
    let mut stats = SufficientStats::zeros(dims);
    let mut state = policy.initial_state();
    let mut next = detection_bins.iter().copied().peekable();
    let mut previous: Option<u64> = None;
    for t in 0..dims.horizon {
        let gate = policy.gate(&state, t, 0.0);
        let detection = next.peek() == Some(&t);
        if detection {
            next.next();
            if !gate {
                let context = match previous {
                    Some(prev) => format!(
                        "detection at bin {t} follows detection at bin {prev} \
                         while the gate is closed (D = {})",
                        dims.dead_time
                    ),
                    None => format!("detection at bin {t} falls in a closed bin"),
                };
                return Err(DedError::DataIntegrity(context));
            }
            previous = Some(t);
        }
        stats.record(t, gate, detection);
        policy.advance(&mut state, t, detection);
    }
    Ok(stats)
}

/// Rebuilds the deterministic gate sequence implied by a detection record
/// and reduces it to sufficient statistics.
pub fn ingest_event_stream(
    detection_bins: &[u64],
    kind: PolicyKind,
    dims: ModelDims,
) -> Result<SufficientStats> {
    for pair in detection_bins.windows(2) {
        if pair[1] <= pair[0] {
            return Err(DedError::DataIntegrity(format!(
                "detection bins must be strictly increasing: {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    if let Some(&last) = detection_bins.last() {
        if last >= dims.horizon {
            return Err(DedError::DataIntegrity(format!(
                "detection at bin {last} lies beyond the horizon T = {}",
                dims.horizon
            )));
        }
    }
    match kind {
        PolicyKind::FreeRunning => reconstruct(&free_running_policy(dims), detection_bins),
        PolicyKind::Synchronous => reconstruct(&synchronous_policy(dims), detection_bins),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(k: usize, d: usize, t: u64) -> ModelDims {
        ModelDims::new(k, d, t).unwrap()
    }

    /// Drives a policy through a fixed detection record and returns the gates.
    fn gates_for<P: GatingPolicy>(policy: &P, detections: &[bool]) -> Vec<bool> {
        let mut state = policy.initial_state();
        let mut out = Vec::new();
        for (t, &y) in detections.iter().enumerate() {
            let g = policy.gate(&state, t as u64, 0.0);
            out.push(g);
            policy.advance(&mut state, t as u64, y && g);
        }
        out
    }

    #[test]
    fn free_running_without_dead_time_is_always_open() {
        let policy = free_running_policy(dims(3, 0, 9));
        let ys = [true, true, false, true, true, true, false, false, true];
        assert!(gates_for(&policy, &ys).iter().all(|&g| g));
    }

    #[test]
    fn free_running_silence_keeps_gate_open() {
        let policy = free_running_policy(dims(4, 7, 20));
        assert!(gates_for(&policy, &[false; 20]).iter().all(|&g| g));
    }

    #[test]
    fn free_running_hand_stepped_timer() {
        // K=2, D=1, detection at t=3.
        let policy = free_running_policy(dims(2, 1, 6));
        let ys = [false, false, false, true, false, false];
        let g = gates_for(&policy, &ys);
        assert_eq!(g, vec![true, true, true, true, false, true]);
    }

    #[test]
    fn synchronous_silence_keeps_gate_open() {
        let policy = synchronous_policy(dims(5, 12, 30));
        assert!(gates_for(&policy, &[false; 30]).iter().all(|&g| g));
    }

    #[test]
    fn synchronous_closes_rest_of_period_after_first_detection() {
        // K=4, D=2: detection at bin 0 of period 0. Timer at t=4 is 0.
        let policy = synchronous_policy(dims(4, 2, 8));
        let mut ys = [false; 8];
        ys[0] = true;
        let g = gates_for(&policy, &ys);
        assert_eq!(g, vec![true, false, false, false, true, true, true, true]);
    }

    #[test]
    fn synchronous_long_dead_time_skips_whole_period() {
        // K=4, D=5: timer at the next period start is D - K + 1 = 2 > 0.
        let policy = synchronous_policy(dims(4, 5, 12));
        let mut ys = [false; 12];
        ys[0] = true;
        let g = gates_for(&policy, &ys);
        assert_eq!(&g[..4], &[true, false, false, false]);
        assert!(g[4..8].iter().all(|&x| !x));
        assert!(g[8..].iter().all(|&x| x));
    }

    #[test]
    fn synchronous_late_detection_closes_next_period() {
        // K=4, D=2, detection in the last bin of period 0 → timer 2 at t=4.
        let policy = synchronous_policy(dims(4, 2, 12));
        let mut ys = [false; 12];
        ys[3] = true;
        let g = gates_for(&policy, &ys);
        assert!(g[..4].iter().all(|&x| x));
        assert!(g[4..8].iter().all(|&x| !x));
        assert!(g[8..].iter().all(|&x| x));
    }

    #[test]
    fn near_zero_rate_never_detects() {
        let d = dims(5, 3, 5000);
        let rates = PhaseRates::from_lambda(vec![1e-12; 5]).unwrap();
        let traj = simulate_rates(&rates, &free_running_policy(d), 11).unwrap();
        let stats = accumulate_stats(&traj);
        assert!(stats.detections().iter().all(|&s| s == 0.0));
        assert!(stats.active().iter().all(|&n| n == 1000.0));
    }

    #[test]
    fn accumulate_simple_cases() {
        let d = dims(4, 2, 12);
        let traj = Trajectory {
            dims: d,
            gates: vec![true; 12],
            detections: vec![false; 12],
            seed: 0,
        };
        let s = accumulate_stats(&traj);
        assert_eq!(s.active(), &[3.0; 4]);
        assert_eq!(s.detections(), &[0.0; 4]);

        let empty = Trajectory {
            dims: d.with_horizon(0),
            gates: vec![],
            detections: vec![],
            seed: 0,
        };
        let s = accumulate_stats(&empty);
        assert_eq!(s.total_active(), 0.0);
        assert_eq!(s.total_detections(), 0.0);
    }

    #[test]
    fn accumulate_matches_resummation() {
        let d = dims(2, 1, 40);
        let rates = PhaseRates::from_probabilities(&[0.5, 0.5]).unwrap();
        let traj = simulate_rates(&rates, &free_running_policy(d), 5).unwrap();
        let stats = accumulate_stats(&traj);
        for r in 0..2 {
            let n = (r..40).step_by(2).filter(|&t| traj.gates[t]).count() as f64;
            let s = (r..40).step_by(2).filter(|&t| traj.detections[t]).count() as f64;
            assert_eq!(stats.active()[r], n);
            assert_eq!(stats.detections()[r], s);
        }
    }

    #[test]
    fn feasibility_checks() {
        let d = dims(3, 2, 6);
        let ok = Trajectory {
            dims: d,
            gates: vec![true; 6],
            detections: vec![false; 6],
            seed: 0,
        };
        assert!(check_feasible(&ok));

        let mut bad = ok.clone();
        bad.detections[3] = true;
        assert!(
            !check_feasible(&bad),
            "gate at t=4 open one bin after a detection"
        );

        let mut not_gated = ok.clone();
        not_gated.gates[2] = false;
        not_gated.detections[2] = true;
        assert!(!check_feasible(&not_gated));
    }

    #[test]
    fn ingest_empty_stream() {
        let d = dims(8, 3, 64);
        let s = ingest_event_stream(&[], PolicyKind::FreeRunning, d).unwrap();
        assert_eq!(s.active(), &[8.0; 8]);
        assert_eq!(s.total_detections(), 0.0);
    }

    #[test]
    fn ingest_single_detection() {
        let d = dims(8, 3, 16);
        let s = ingest_event_stream(&[10], PolicyKind::FreeRunning, d).unwrap();
        // Bins 11, 12, 13 (phases 3, 4, 5) are dead.
        let expected_n = [2.0, 2.0, 2.0, 1.0, 1.0, 1.0, 2.0, 2.0];
        assert_eq!(s.active(), &expected_n);
        assert_eq!(s.detections()[2], 1.0);
        assert_eq!(s.total_detections(), 1.0);
    }

    #[test]
    fn ingest_rejects_dead_time_violation() {
        let d = dims(8, 3, 40);
        let err = ingest_event_stream(&[5, 8], PolicyKind::FreeRunning, d).unwrap_err();
        match err {
            DedError::DataIntegrity(msg) => {
                assert!(msg.contains('5') && msg.contains('8'), "{msg}")
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(ingest_event_stream(&[5, 9], PolicyKind::FreeRunning, d).is_ok());
    }

    #[test]
    fn ingest_rejects_unordered_and_out_of_range() {
        let d = dims(8, 0, 40);
        assert!(matches!(
            ingest_event_stream(&[5, 5], PolicyKind::FreeRunning, d),
            Err(DedError::DataIntegrity(_))
        ));
        assert!(matches!(
            ingest_event_stream(&[40], PolicyKind::FreeRunning, d),
            Err(DedError::DataIntegrity(_))
        ));
    }

    #[test]
    fn unknown_scheme_is_config_error() {
        assert!(matches!(
            "adaptive".parse::<PolicyKind>(),
            Err(DedError::Config(_))
        ));
        assert_eq!(
            "synchronous".parse::<PolicyKind>().unwrap(),
            PolicyKind::Synchronous
        );
    }

    #[test]
    fn large_dead_time_relative_to_period() {
        // Real-data geometry: K=625, D=1238.
        let d = dims(625, 1238, 625 * 200);
        let rates = PhaseRates::from_lambda(vec![0.01; 625]).unwrap();
        let mut rng = replicate_rng(3, 0);
        let (stats, events) = simulate_events(&rates, &free_running_policy(d), &mut rng).unwrap();
        assert!(stats.total_active() < d.horizon as f64);
        let again = ingest_event_stream(&events, PolicyKind::FreeRunning, d).unwrap();
        assert_eq!(again, stats);
    }
}
