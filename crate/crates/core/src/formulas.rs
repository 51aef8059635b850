//! Closed-form moment evaluators.
//!
//! Everything here is a polynomial in the level moments `(x, z, u, w)` and
//! the eigenvalues. Coefficients are assembled from integer numerators and
//! denominators in `q` and converted to `f64` once, so each line can be read
//! against its source formula.

use crate::channel::Spectrum;
use crate::moments::MomentStats;

/// Moments of a child posterior `Y_j = (Y_ij)_i` under root state 0.
///
/// Field names give the state classes involved: `state` is the root's own
/// state 0, `category` a different state of its category, `cross` a state of
/// the other category.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct YMomentSet {
    /// (i) `E(Y_0 - c)`
    pub mean_state: f64,
    /// (ii) `E(Y_i - c)`, `1 <= i < q`
    pub mean_category: f64,
    /// (iii) `E(Y_i - c)`, `i >= q`
    pub mean_cross: f64,
    /// (iv) `E(Y_0 - c)²`
    pub square_state: f64,
    /// (v)
    pub square_category: f64,
    /// (vi)
    pub square_cross: f64,
    /// (vii) `E(Y_0 - c)(Y_i - c)`, `1 <= i < q`
    pub cov_state_category: f64,
    /// (viii) `E(Y_0 - c)(Y_i - c)`, `i >= q`
    pub cov_state_cross: f64,
    /// (ix) two distinct non-root states of the root's category; absent when `q = 2`.
    pub cov_category_pair: Option<f64>,
    /// (x) one non-root state of each category.
    pub cov_category_cross: f64,
    /// (xi) two distinct states of the other category.
    pub cov_cross_pair: f64,
}

impl YMomentSet {
    pub const LABELS: [&'static str; 11] = ["i", "ii", "iii", "iv", "v", "vi", "vii", "viii", "ix", "x", "xi"];

    pub fn as_array(&self) -> [Option<f64>; 11] {
        [
            Some(self.mean_state),
            Some(self.mean_category),
            Some(self.mean_cross),
            Some(self.square_state),
            Some(self.square_category),
            Some(self.square_cross),
            Some(self.cov_state_category),
            Some(self.cov_state_cross),
            self.cov_category_pair,
            Some(self.cov_category_cross),
            Some(self.cov_cross_pair),
        ]
    }
}

/// Evaluates the eleven child-posterior moment formulas.
pub fn y_moments(stats: &MomentStats, spectrum: &Spectrum, q: usize) -> YMomentSet {
    let (l1, l2) = (spectrum.lambda1, spectrum.lambda2);
    let qf = q as f64;
    let (qm1, qm2) = (qf - 1.0, qf - 2.0);
    let MomentStats { x, z, u, w, .. } = *stats;

    let cov_category_pair = (q > 2).then(|| {
        let x_coeff = -(2.0 * (qf + 2.0) * l1 + qm2 * l2) / (2.0 * qf * qm1 * qm2) - 1.0 / (2.0 * qf * qm1);
        x_coeff * x - z / (2.0 * qm1)
            + 2.0 * l1 / (qm1 * qm2) * u
            + (2.0 * (qf + 1.0) * l1 + qm2 * l2) / (qm1 * qm2) * w
    });

    YMomentSet {
        mean_state: l1 * x + (l1 - l2) * z,
        mean_category: -l1 / qm1 * x - (l1 + qm1 * l2) / qm1 * z,
        mean_cross: l2 * z,
        square_state: (1.0 + l2 - 2.0 * l1) / (2.0 * qf) * x + l1 * u + (l1 - l2) * w,
        square_category: (1.0 / (2.0 * qf) + l2 / (2.0 * qf) + l1 / (qf * qm1)) * x
            - l1 / qm1 * u
            - (l1 + qm1 * l2) / qm1 * w,
        square_cross: (1.0 - l2) / (2.0 * qf) * x + l2 * w,
        cov_state_category: ((qf + 2.0) * l1 - l2 - 1.0) / (2.0 * qf * qm1) * x
            - z / (2.0 * qm1)
            - l1 / qm1 * u
            - ((qf + 1.0) * l1 - l2) / qm1 * w,
        cov_state_cross: -l1 / (2.0 * qf) * x + z / (2.0 * qf) + l1 * w,
        cov_category_pair,
        cov_category_cross: l1 / (2.0 * qf * qm1) * x + z / (2.0 * qf) - l1 / qm1 * w,
        cov_cross_pair: (l2 - 1.0) / (2.0 * qf * qm1) * x - z / (2.0 * qm1) - l2 / qm1 * w,
    }
}

/// Second-order approximations of the `Z` moments and their building blocks.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ZExpansionSet {
    /// `E Z_0`
    pub mean_state: f64,
    /// `E Z_i`, `1 <= i < q`
    pub mean_category: f64,
    /// `E Z_i`, `i >= q`
    pub mean_cross: f64,
    /// (a) `E Z_0²`
    pub square_state: f64,
    /// (b) `E Z_i²`, `1 <= i < q`
    pub square_category: f64,
    /// (c) `E Z_i²`, `i >= q`
    pub square_cross: f64,
    /// (d) `E Z_1 Z_{q-1}`; absent when `q = 2`.
    pub product_category_pair: Option<f64>,
    /// (e) `E Z_1 Z_q`
    pub product_category_cross: f64,
    /// Per-child increments `Π1..Π5`; `Π4` is absent when `q = 2`.
    pub pi: [Option<f64>; 5],
}

fn second_order(d: usize, a: f64) -> f64 {
    let df = d as f64;
    1.0 + df * a + df * (df - 1.0) / 2.0 * a * a
}

/// Expands the `Z` moments to second order, dropping cubic remainders.
pub fn z_expansions(stats: &MomentStats, spectrum: &Spectrum, q: usize, d: usize) -> ZExpansionSet {
    let (l1, l2) = (spectrum.lambda1, spectrum.lambda2);
    let qf = q as f64;
    let (qm1, qm2) = (qf - 1.0, qf - 2.0);
    let (s1, s2) = (l1 * l1, l2 * l2);
    let MomentStats { x, z, u, w, .. } = *stats;
    let u_dev = u - x / (2.0 * qf);
    let w_dev = w - x / (2.0 * qf);
    let q2 = qf * qf;

    let a_state = 2.0 * qf * s1 * x + 2.0 * qf * (s1 - s2) * z;
    let a_category = -2.0 * qf * s1 / qm1 * x - (2.0 * qf * s1 / qm1 + 2.0 * qf * s2) * z;
    let a_cross = 2.0 * qf * s2 * z;

    let pi1 =
        6.0 * qf * s1 * x + 6.0 * qf * (s1 - s2) * z + 4.0 * q2 * s1 * l1 * u_dev + 12.0 * q2 * s1 * (l1 - l2) * w_dev;
    let c23 = 2.0 * qf * (qf - 3.0) / qm1;
    let pi2 = c23 * s1 * x + (c23 * s1 - 6.0 * qf * s2) * z
        - 4.0 * q2 / qm1 * s1 * l1 * u_dev
        - 4.0 * q2 * (3.0 * l1 + (qf - 3.0) * l2) / qm1 * s1 * w_dev;
    let pi3 = 2.0 * qf * s1 * x + 2.0 * qf * (s1 + s2) * z + 4.0 * q2 * s1 * l2 * w_dev;
    let pi4 = (q > 2).then(|| {
        -6.0 * qf * s1 / qm1 * x - (6.0 * qf * s1 / qm1 + 6.0 * qf * s2) * z
            + 8.0 * q2 * s1 * l1 / (qm1 * qm2) * u_dev
            + 4.0 * q2 * (6.0 * l1 + (3.0 * qf - 6.0) * l2) / (qm1 * qm2) * s1 * w_dev
    });
    let pi5 = -2.0 * qf * s1 / qm1 * x + (-2.0 * qf * s1 / qm1 + 2.0 * qf * s2) * z - 4.0 * q2 / qm1 * s1 * l2 * w_dev;

    ZExpansionSet {
        mean_state: second_order(d, a_state),
        mean_category: second_order(d, a_category),
        mean_cross: second_order(d, a_cross),
        square_state: second_order(d, pi1),
        square_category: second_order(d, pi2),
        square_cross: second_order(d, pi3),
        product_category_pair: pi4.map(|p| second_order(d, p)),
        product_category_cross: second_order(d, pi5),
        pi: [Some(pi1), Some(pi2), Some(pi3), pi4, Some(pi5)],
    }
}

/// Coefficients of the truncated second-order map in `(𝒳, 𝒵)`:
///
/// ```text
/// 𝒳' = linear_x·𝒳 + quad_xx·𝒳² + quad_xz·𝒳𝒵
/// 𝒵' = linear_z·𝒵 + quad_zz_source·𝒳² - quad_zz_decay·𝒵²
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapCoefficients {
    /// `d·λ1²`
    pub linear_x: f64,
    /// `d·λ2²`
    pub linear_z: f64,
    /// `d(d-1)/2 · 2q(q-3)/(q-1) · λ1⁴`
    pub quad_xx: f64,
    /// `d(d-1)/2 · 4q·λ1²λ2²`
    pub quad_xz: f64,
    /// `d(d-1)/2 · q/(q-1) · λ1⁴`
    pub quad_zz_source: f64,
    /// `d(d-1)/2 · 4q·λ2⁴`
    pub quad_zz_decay: f64,
}

pub fn map_coefficients(q: usize, d: usize, spectrum: &Spectrum) -> MapCoefficients {
    let (qi, di) = (q as i64, d as i64);
    // d(d-1)/2 is an integer
    let pairs = (di * (di - 1) / 2) as f64;
    let (s1, s2) = (spectrum.lambda1.powi(2), spectrum.lambda2.powi(2));
    let xx_ratio = (2 * qi * (qi - 3)) as f64 / (qi - 1) as f64;
    let source_ratio = qi as f64 / (qi - 1) as f64;
    MapCoefficients {
        linear_x: d as f64 * s1,
        linear_z: d as f64 * s2,
        quad_xx: pairs * xx_ratio * s1 * s1,
        quad_xz: pairs * (4 * qi) as f64 * s1 * s2,
        quad_zz_source: pairs * source_ratio * s1 * s1,
        quad_zz_decay: pairs * (4 * qi) as f64 * s2 * s2,
    }
}

/// The same truncated recursion written in the original `(x, z)` moments.
pub fn xz_recursion(x: f64, z: f64, q: usize, d: usize, spectrum: &Spectrum) -> (f64, f64) {
    let (qi, di) = (q as i64, d as i64);
    let pairs = (di * (di - 1) / 2) as f64;
    let df = d as f64;
    let qf = q as f64;
    let (s1, s2) = (spectrum.lambda1.powi(2), spectrum.lambda2.powi(2));
    let sum = x + z;
    let a = (qi * (2 * qi - 5)) as f64 / (qi - 1) as f64;
    let b = qi as f64 / (qi - 1) as f64;
    let next_x = df * s1 * x
        + (df * s1 - df * s2) * z
        + pairs * (a * s1 * s1 * sum * sum - 4.0 * qf * s1 * s2 * sum * z - 4.0 * qf * s2 * s2 * z * z);
    let next_z = df * s2 * z - pairs * (b * s1 * s1 * sum * sum - 4.0 * qf * s2 * s2 * z * z);
    (next_x, next_z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_zero_y_means() {
        let ys = y_moments(&MomentStats::level_zero(2), &Spectrum::new(0.5, 0.3), 2);
        assert!((ys.mean_state - 0.325).abs() < 1e-15);
        assert!((ys.mean_cross + 0.075).abs() < 1e-15);
        assert!(ys.cov_category_pair.is_none());
    }

    #[test]
    fn zero_stats_are_the_fixed_point() {
        let zero = MomentStats::default();
        let spec = Spectrum::new(0.6, -0.2);
        for q in [2, 3, 5] {
            assert!(y_moments(&zero, &spec, q).as_array().iter().flatten().all(|&v| v == 0.0));
            let e = z_expansions(&zero, &spec, q, 3);
            for v in [
                e.mean_state,
                e.mean_category,
                e.mean_cross,
                e.square_state,
                e.square_category,
                e.square_cross,
                e.product_category_cross,
            ] {
                assert_eq!(v, 1.0);
            }
            assert!(e.pi.iter().flatten().all(|&p| p == 0.0));
        }
    }

    #[test]
    fn y_means_sum_to_zero() {
        let spec = Spectrum::new(0.37, -0.11);
        let ys = y_moments(&MomentStats::level_zero(3), &spec, 3);
        let residual = ys.mean_state + 2.0 * ys.mean_category + 3.0 * ys.mean_cross;
        assert!(residual.abs() < 1e-12);
    }

    #[test]
    fn one_child_mean_expansion_example() {
        let e = z_expansions(&MomentStats::level_zero(2), &Spectrum::new(0.5, 0.3), 2, 1);
        assert!((e.mean_state - 1.59).abs() < 1e-12);
    }

    #[test]
    fn map_coefficient_examples() {
        let c = map_coefficients(4, 2, &Spectrum::new(0.7, 0.1));
        assert!((c.quad_xx - 8.0 / 3.0 * 0.2401).abs() < 1e-15);
        assert!((c.quad_xx - 0.6402667).abs() < 1e-7);
        assert_eq!(map_coefficients(3, 5, &Spectrum::new(0.3, 0.2)).quad_xx, 0.0);
        let c = map_coefficients(2, 2, &Spectrum::new(0.5, 0.1));
        assert!((c.quad_xx + 0.25).abs() < 1e-15);
        let c = map_coefficients(5, 1, &Spectrum::new(0.5, 0.1));
        assert_eq!((c.quad_xx, c.quad_xz, c.quad_zz_source, c.quad_zz_decay), (0.0, 0.0, 0.0, 0.0));
    }
}
