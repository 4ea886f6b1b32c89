//! Periodic monotone cubic Hermite interpolation of a cumulative distribution.
//!
//! Knots sit at the integers `0..=K` with `F(0) = 0` and `F(K) = 1`. Slopes
//! follow the Fritsch–Carlson construction: three-point averages, zeroed at
//! flat intervals, then scaled so that `α² + β² ≤ 9` on every interval. The
//! slope at knot `K` is the slope at knot 0, so the derivative (the density)
//! is continuous across the period boundary.

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicPchip {
    /// `F` at knots `0..=K`.
    values: Vec<f64>,
    /// Slope at knots `0..K`; knot `K` shares slot 0.
    slopes: Vec<f64>,
}

impl PeriodicPchip {
    /// Builds the interpolant from per-interval masses `mass[j] = F(j+1) - F(j)`,
    /// which must be nonnegative and sum to one.
    pub fn from_interval_masses(mass: &[f64]) -> Self {
        let k = mass.len();
        let mut values = Vec::with_capacity(k + 1);
        let mut acc = 0.0;
        values.push(0.0);
        for &m in mass {
            acc += m;
            values.push(acc);
        }
        // Pin the endpoint so that F(K) = 1 exactly.
        values[k] = 1.0;

        // Unit spacing: secants equal the interval masses.
        let mut slopes = vec![0.0; k];
        for (j, slope) in slopes.iter_mut().enumerate() {
            let left = mass[(j + k - 1) % k];
            let right = mass[j];
            if left > 0.0 && right > 0.0 {
                *slope = 0.5 * (left + right);
            }
        }
        for j in 0..k {
            let delta = mass[j];
            let next = (j + 1) % k;
            if delta == 0.0 {
                slopes[j] = 0.0;
                slopes[next] = 0.0;
                continue;
            }
            let alpha = slopes[j] / delta;
            let beta = slopes[next] / delta;
            let norm2 = alpha * alpha + beta * beta;
            if norm2 > 9.0 {
                let scale = 3.0 / norm2.sqrt();
                slopes[j] = scale * alpha * delta;
                slopes[next] = scale * beta * delta;
            }
        }
        Self { values, slopes }
    }

    pub fn period(&self) -> usize {
        self.slopes.len()
    }

    /// Splits `x` into the interval index in `0..K` and offset in `[0, 1)`,
    /// plus the number of whole periods wrapped.
    #[inline]
    fn locate(&self, x: f64) -> (usize, f64, f64) {
        let k = self.period() as f64;
        let wraps = (x / k).floor();
        let mut y = x - wraps * k;
        if y >= k {
            y -= k;
        }
        let mut j = y.floor() as usize;
        if j >= self.period() {
            j = self.period() - 1;
        }
        (j, y - j as f64, wraps)
    }

    #[inline]
    fn coefficients(&self, j: usize) -> (f64, f64, f64, f64) {
        let k = self.period();
        (
            self.values[j],
            self.values[j + 1],
            self.slopes[j],
            self.slopes[(j + 1) % k],
        )
    }

    /// The unwrapped CDF: `F(x + K) = F(x) + 1`.
    pub fn cdf(&self, x: f64) -> f64 {
        let (j, t, wraps) = self.locate(x);
        let (f0, f1, s0, s1) = self.coefficients(j);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        wraps + f0 * h00 + s0 * h10 + f1 * h01 + s1 * h11
    }

    /// First derivative of the CDF, i.e. the interpolated density.
    pub fn density(&self, x: f64) -> f64 {
        let (j, t, _) = self.locate(x);
        let (f0, f1, s0, s1) = self.coefficients(j);
        let t2 = t * t;
        let d00 = 6.0 * t2 - 6.0 * t;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = -d00;
        let d11 = 3.0 * t2 - 2.0 * t;
        (f0 * d00 + s0 * d10 + f1 * d01 + s1 * d11).max(0.0)
    }

    /// Second derivative of the CDF (piecewise linear, right-continuous).
    pub fn density_slope(&self, x: f64) -> f64 {
        let (j, t, _) = self.locate(x);
        let (f0, f1, s0, s1) = self.coefficients(j);
        let e00 = 12.0 * t - 6.0;
        let e10 = 6.0 * t - 4.0;
        let e11 = 6.0 * t - 2.0;
        f0 * e00 + s0 * e10 - f1 * e00 + s1 * e11
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_knots_exactly() {
        let mass = [0.1, 0.4, 0.0, 0.3, 0.2];
        let p = PeriodicPchip::from_interval_masses(&mass);
        let mut acc = 0.0;
        for (j, &m) in mass.iter().enumerate() {
            assert!((p.cdf(j as f64) - acc).abs() < 1e-15);
            acc += m;
        }
        assert!((p.cdf(5.0) - 1.0).abs() < 1e-15);
        assert!((p.cdf(7.0) - (1.0 + 0.5)).abs() < 1e-15);
        assert!((p.cdf(-1.0) - (0.8 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn monotone_and_nonnegative() {
        let mass = [0.0, 0.0, 0.9, 0.05, 0.0, 0.05, 0.0];
        let p = PeriodicPchip::from_interval_masses(&mass);
        let mut prev = p.cdf(0.0);
        for i in 1..=7000 {
            let x = i as f64 * 1e-3;
            let v = p.cdf(x);
            assert!(v >= prev - 1e-15, "cdf decreased at {x}");
            assert!(p.density(x) >= 0.0);
            prev = v;
        }
    }

    #[test]
    fn density_is_continuous_across_period() {
        let mass = [0.3, 0.1, 0.2, 0.4];
        let p = PeriodicPchip::from_interval_masses(&mass);
        let left = p.density(4.0 - 1e-9);
        let right = p.density(1e-9);
        assert!((left - right).abs() < 1e-7);
    }

    #[test]
    fn density_matches_cdf_differences() {
        let mass = [0.05, 0.2, 0.5, 0.2, 0.05];
        let p = PeriodicPchip::from_interval_masses(&mass);
        let h = 1e-6;
        for i in 0..50 {
            let x = 0.1 * i as f64 + 0.037;
            let fd = (p.cdf(x + h) - p.cdf(x - h)) / (2.0 * h);
            assert!((fd - p.density(x)).abs() < 1e-7);
            let fd2 = (p.density(x + h) - p.density(x - h)) / (2.0 * h);
            assert!((fd2 - p.density_slope(x)).abs() < 1e-5);
        }
    }
}
