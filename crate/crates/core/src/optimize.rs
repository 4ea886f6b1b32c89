//! Limited-memory BFGS minimization with a strong-Wolfe line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{DedError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub max_evals: usize,
    pub rel_param_tol: f64,
    pub rel_obj_tol: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_evals: 1000,
            rel_param_tol: 1e-8,
            rel_obj_tol: 1e-10,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_evals == 0 || !(self.rel_param_tol > 0.0) || !(self.rel_obj_tol > 0.0) {
            return Err(DedError::Config(format!(
                "optimizer settings must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxEvals,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub evals: usize,
    pub reason: StopReason,
}

const MEMORY: usize = 10;
const C1: f64 = 1e-4;
const C2: f64 = 0.9;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Counter<F> {
    objective: F,
    evals: usize,
    max_evals: usize,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Counter<F> {
    fn call(&mut self, x: &[f64], g: &mut [f64]) -> f64 {
        self.evals += 1;
        let f = (self.objective)(x, g);
        if f.is_finite() && g.iter().all(|v| v.is_finite()) {
            f
        } else {
            f64::INFINITY
        }
    }

    fn exhausted(&self) -> bool {
        self.evals >= self.max_evals
    }
}

#[derive(Clone)]
struct Trial {
    alpha: f64,
    f: f64,
    slope: f64,
    x: Vec<f64>,
    g: Vec<f64>,
}

fn cubic_minimizer(a: &Trial, b: &Trial) -> Option<f64> {
    let d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.slope * b.slope;
    if !(disc >= 0.0) || !a.f.is_finite() || !b.f.is_finite() {
        return None;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let denom = b.slope - a.slope + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let t = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / denom;
    t.is_finite().then_some(t)
}

fn evaluate<F: FnMut(&[f64], &mut [f64]) -> f64>(
    counter: &mut Counter<F>,
    x0: &[f64],
    dir: &[f64],
    alpha: f64,
) -> Trial {
    let x: Vec<f64> = x0.iter().zip(dir).map(|(x, d)| x + alpha * d).collect();
    let mut g = vec![0.0; x.len()];
    let f = counter.call(&x, &mut g);
    let slope = if f.is_finite() {
        dot(&g, dir)
    } else {
        f64::NAN
    };
    Trial {
        alpha,
        f,
        slope,
        x,
        g,
    }
}

/// Strong-Wolfe search along `dir`; returns the best sufficient-decrease
/// point found, or `None` if no point improved on the start.
fn line_search<F: FnMut(&[f64], &mut [f64]) -> f64>(
    counter: &mut Counter<F>,
    start: &Trial,
    dir: &[f64],
    alpha_init: f64,
) -> Option<Trial> {
    let f0 = start.f;
    let d0 = start.slope;
    let armijo = |t: &Trial| t.f.is_finite() && t.f <= f0 + C1 * t.alpha * d0;
    let mut prev = start.clone();
    let mut alpha = alpha_init;
    let mut best: Option<Trial> = None;
    let note = |best: &mut Option<Trial>, t: &Trial| {
        if armijo(t) && best.as_ref().is_none_or(|b| t.f < b.f) {
            *best = Some(t.clone());
        }
    };

    let (mut lo, mut hi);
    let mut first = true;
    loop {
        if counter.exhausted() {
            return best;
        }
        let cur = evaluate(counter, &start.x, dir, alpha);
        note(&mut best, &cur);
        if !armijo(&cur) || (!first && cur.f >= prev.f) {
            lo = prev;
            hi = cur;
            break;
        }
        if cur.slope.abs() <= -C2 * d0 {
            return Some(cur);
        }
        if cur.slope >= 0.0 {
            lo = cur;
            hi = prev;
            break;
        }
        first = false;
        prev = cur;
        alpha *= 2.0;
        if alpha > 1e10 {
            return best;
        }
    }

    for _ in 0..40 {
        if counter.exhausted() {
            break;
        }
        let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
        let width = b - a;
        if width <= 1e-14 * b.max(1e-300) {
            break;
        }
        let guard = 0.1 * width;
        let trial_alpha = match cubic_minimizer(&lo, &hi) {
            Some(t) if t > a + guard && t < b - guard => t,
            _ => 0.5 * (a + b),
        };
        let cur = evaluate(counter, &start.x, dir, trial_alpha);
        note(&mut best, &cur);
        if !armijo(&cur) || cur.f >= lo.f {
            hi = cur;
        } else {
            if cur.slope.abs() <= -C2 * d0 {
                return Some(cur);
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    best
}

/// Minimizes `objective(x, grad) -> f` from `x0`.
///
/// The returned point is never worse than `x0`. Non-finite values are
/// treated as `+∞`, so the search backs away from them.
pub fn minimize<F>(objective: F, x0: &[f64], settings: &OptimizerSettings) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut counter = Counter {
        objective,
        evals: 0,
        max_evals: settings.max_evals.max(1),
    };
    let mut g = vec![0.0; n];
    let f = counter.call(x0, &mut g);
    let mut cur = Trial {
        alpha: 0.0,
        f,
        slope: 0.0,
        x: x0.to_vec(),
        g,
    };
    let finish = |cur: Trial, evals, reason| Minimum {
        x: cur.x,
        f: cur.f,
        grad: cur.g,
        evals,
        reason,
    };
    if !cur.f.is_finite() {
        return finish(cur, counter.evals, StopReason::Converged);
    }

    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);
    loop {
        if inf_norm(&cur.g) <= settings.rel_obj_tol * cur.f.abs().max(1.0) {
            return finish(cur, counter.evals, StopReason::Converged);
        }
        if counter.exhausted() {
            return finish(cur, counter.evals, StopReason::MaxEvals);
        }

        // Two-loop recursion for d = -H g.
        let mut q = cur.g.clone();
        let mut coeffs = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            coeffs.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|qi| *qi *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(coeffs.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&dir, &cur.g);
        if !(slope < 0.0) {
            history.clear();
            dir = cur.g.iter().map(|v| -v).collect();
            slope = -dot(&cur.g, &cur.g);
        }
        let alpha_init = if history.is_empty() {
            (1.0 / inf_norm(&dir)).min(1.0)
        } else {
            1.0
        };
        cur.slope = slope;
        cur.alpha = 0.0;

        let next = match line_search(&mut counter, &cur, &dir, alpha_init) {
            Some(t) => t,
            None if !history.is_empty() => {
                history.clear();
                continue;
            }
            None => {
                let reason = if counter.exhausted() {
                    StopReason::MaxEvals
                } else {
                    StopReason::Converged
                };
                return finish(cur, counter.evals, reason);
            }
        };

        let s: Vec<f64> = next.x.iter().zip(&cur.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.g.iter().zip(&cur.g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let small_step = s
            .iter()
            .zip(&next.x)
            .all(|(si, xi)| si.abs() <= settings.rel_param_tol * xi.abs().max(1.0));
        let small_change = (cur.f - next.f).abs() <= settings.rel_obj_tol * next.f.abs().max(1.0);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        cur = next;
        if small_step || small_change {
            return finish(cur, counter.evals, StopReason::Converged);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn solves_rosenbrock() {
        let settings = OptimizerSettings {
            max_evals: 2000,
            rel_param_tol: 1e-12,
            rel_obj_tol: 1e-16,
        };
        let m = minimize(rosenbrock, &[-1.2, 1.0], &settings);
        assert!((m.x[0] - 1.0).abs() < 1e-5, "{m:?}");
        assert!((m.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn quadratic_in_few_evals() {
        let diag = [1.0, 10.0, 100.0];
        let m = minimize(
            |x, g| {
                let mut f = 0.0;
                for i in 0..3 {
                    g[i] = diag[i] * (x[i] - 1.0);
                    f += 0.5 * diag[i] * (x[i] - 1.0).powi(2);
                }
                f
            },
            &[0.0; 3],
            &OptimizerSettings::default(),
        );
        assert_eq!(m.reason, StopReason::Converged);
        assert!(m.x.iter().all(|v| (v - 1.0).abs() < 1e-6));
        assert!(m.evals < 100);
    }

    #[test]
    fn stationary_start_exits_immediately() {
        let m = minimize(
            |x, g| {
                g[0] = 2.0 * x[0];
                x[0] * x[0]
            },
            &[0.0],
            &OptimizerSettings::default(),
        );
        assert_eq!(m.evals, 1);
        assert_eq!(m.x, vec![0.0]);
    }

    #[test]
    fn respects_eval_budget() {
        let settings = OptimizerSettings {
            max_evals: 5,
            ..Default::default()
        };
        let m = minimize(rosenbrock, &[-1.2, 1.0], &settings);
        assert!(m.evals <= 5);
        assert!(m.f <= 24.2 + 1e-12);
    }

    #[test]
    fn backs_away_from_non_finite_region() {
        // log barrier: undefined for x <= 0.
        let m = minimize(
            |x, g| {
                if x[0] <= 0.0 {
                    return f64::NAN;
                }
                g[0] = 1.0 - 1.0 / x[0];
                x[0] - x[0].ln()
            },
            &[10.0],
            &OptimizerSettings::default(),
        );
        assert!((m.x[0] - 1.0).abs() < 1e-6, "{m:?}");
    }

    #[test]
    fn rejects_bad_settings() {
        let s = OptimizerSettings {
            max_evals: 0,
            ..Default::default()
        };
        assert!(s.validate().is_err());
    }
}
