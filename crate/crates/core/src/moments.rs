//! Moment records shared by the exact and Monte Carlo engines.

/// First and second moments of the root posterior evaluated at the true
/// state (`x`, `u`), at another state of the same category (`y`, `v`) and at
/// a state of the other category (`z`, `w`), all centred at `1/2q` and
/// conditioned on root state 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MomentStats {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub u: f64,
    pub v: f64,
    pub w: f64,
    /// Standard errors, zero for exact computations.
    pub se: StandardErrors,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StandardErrors {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

impl MomentStats {
    pub fn exact(x: f64, y: f64, z: f64, u: f64, v: f64, w: f64) -> Self {
        Self { x, y, z, u, v, w, se: StandardErrors::default() }
    }

    /// Moments of the level-0 posterior, the indicator of the root.
    pub fn level_zero(q: usize) -> Self {
        let c = 1.0 / (2.0 * q as f64);
        Self::exact(1.0 - c, -c, -c, (1.0 - c).powi(2), c * c, c * c)
    }

    /// `𝒳 = x + z`.
    pub fn big_x(&self) -> f64 {
        self.x + self.z
    }

    /// `𝒵 = -z`.
    pub fn big_z(&self) -> f64 {
        -self.z
    }

    /// `x + (q-1)y + qz`, zero because posterior components sum to one.
    pub fn simplex_residual(&self, q: usize) -> f64 {
        let qf = q as f64;
        self.x + (qf - 1.0) * self.y + qf * self.z
    }

    /// `x - (u + (q-1)v + qw)`.
    pub fn second_moment_residual(&self, q: usize) -> f64 {
        let qf = q as f64;
        self.x - (self.u + (qf - 1.0) * self.v + qf * self.w)
    }

    /// The two nonzero eigenvalues of the posterior covariance matrix,
    /// `(x + (q-1)y - qz)/2q` and `(x - y)/2q`.
    pub fn covariance_eigenvalues(&self, q: usize) -> (f64, f64) {
        let qf = q as f64;
        ((self.x + (qf - 1.0) * self.y - qf * self.z) / (2.0 * qf), (self.x - self.y) / (2.0 * qf))
    }
}

/// Cross expectations of centred posterior components under root state 0:
/// `e12 = E(f(0)-c)(f(1)-c)`, `e13 = E(f(0)-c)(f(q)-c)`,
/// `e23 = E(f(1)-c)(f(q)-c)`, `e_q1_2q = E(f(q)-c)(f(2q-1)-c)` and
/// `e_2_q = E(f(1)-c)(f(q-1)-c)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CrossMoments {
    pub e12: f64,
    pub e13: f64,
    pub e23: f64,
    pub e_q1_2q: f64,
    pub e_2_q: f64,
}

impl CrossMoments {
    /// Closed forms in terms of the level's moments, in the order
    /// `(e12, e13, e23, e_q1_2q, e_2_q)`. The last is undefined for `q = 2`.
    pub fn closed_forms(stats: &MomentStats, q: usize) -> [Option<f64>; 5] {
        let qf = q as f64;
        let MomentStats { x, y, z, v, w, .. } = *stats;
        let two_q = 2.0 * qf;
        [
            Some(v + (y - x) / two_q),
            Some(w + (z - x) / two_q),
            Some(-w / (qf - 1.0) - z / (two_q * (qf - 1.0)) - y / two_q),
            Some(-w / (qf - 1.0) - z / (2.0 * (qf - 1.0))),
            (q > 2).then(|| -2.0 * v / (qf - 2.0) - z / (2.0 * (qf - 1.0)) + qf * w / ((qf - 1.0) * (qf - 2.0))),
        ]
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.e12, self.e13, self.e23, self.e_q1_2q, self.e_2_q]
    }
}

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_zero_values() {
        let s = MomentStats::level_zero(2);
        assert_eq!((s.x, s.y, s.z), (0.75, -0.25, -0.25));
        assert_eq!((s.u, s.v, s.w), (0.5625, 0.0625, 0.0625));
        assert_eq!(s.simplex_residual(2), 0.0);
        assert_eq!(s.second_moment_residual(2), 0.0);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1.0);
        for _ in 0..1000 {
            s.add(1e-17);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-14).abs() < 1e-26);
    }

    #[test]
    fn level_zero_cross_moments_match_closed_forms() {
        let s = MomentStats::level_zero(2);
        let forms = CrossMoments::closed_forms(&s, 2);
        assert_eq!(forms[0], Some(-0.1875));
        assert!(forms[4].is_none());
    }
}
