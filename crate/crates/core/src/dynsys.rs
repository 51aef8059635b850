//! The truncated two-dimensional map in `(𝒳, 𝒵)`.
//!
//! Remainder terms are dropped, so an ESCAPE here is evidence for the
//! reconstruction mechanism rather than a proof of it: the remainders are
//! only controlled for small `x_n`.

use rayon::prelude::*;

use crate::channel::Spectrum;
use crate::error::{Error, Result};
use crate::formulas::{map_coefficients, MapCoefficients};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const DEFAULT_ESCAPE_BOUND: f64 = 1.0;

/// `xc = x + z`, `zc = -z`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DynState {
    pub xc: f64,
    pub zc: f64,
}

impl DynState {
    pub fn new(xc: f64, zc: f64) -> Self {
        Self { xc, zc }
    }

    pub fn from_moments(x: f64, z: f64) -> Self {
        Self { xc: x + z, zc: -z }
    }

    pub fn in_domain(&self) -> bool {
        self.xc >= 0.0 && self.zc >= 0.0
    }

    fn distance(&self, other: &DynState) -> f64 {
        (self.xc - other.xc).hypot(self.zc - other.zc)
    }
}

fn saturate(v: f64) -> f64 {
    if v.is_nan() {
        f64::MAX
    } else {
        v.clamp(-f64::MAX, f64::MAX)
    }
}

pub fn step(state: DynState, c: &MapCoefficients) -> DynState {
    let DynState { xc, zc } = state;
    DynState {
        xc: saturate(c.linear_x * xc + c.quad_xx * xc * xc + c.quad_xz * xc * zc),
        zc: saturate(c.linear_z * zc + c.quad_zz_source * xc * xc - c.quad_zz_decay * zc * zc),
    }
}

/// Linear multipliers at the origin, `(dλ1², dλ2²)`.
pub fn jacobian_origin(c: &MapCoefficients) -> (f64, f64) {
    (c.linear_x, c.linear_z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Origin,
    Escape,
    NonzeroFixed,
    Ambiguous,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Origin => "ORIGIN",
            Classification::Escape => "ESCAPE",
            Classification::NonzeroFixed => "NONZERO_FIXED",
            Classification::Ambiguous => "AMBIGUOUS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLimits {
    pub max_iter: usize,
    pub tol: f64,
    pub escape_bound: f64,
}

impl Default for IterationLimits {
    fn default() -> Self {
        Self { max_iter: DEFAULT_MAX_ITER, tol: DEFAULT_TOL, escape_bound: DEFAULT_ESCAPE_BOUND }
    }
}

impl IterationLimits {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.escape_bound > 0.0) {
            return Err(Error::Validation(format!(
                "tol and escape bound must be positive, got tol = {} and bound = {}",
                self.tol, self.escape_bound
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Starting state followed by each iterate.
    pub states: Vec<DynState>,
    pub classification: Classification,
    pub iterations: usize,
    /// Some iterate had a negative coordinate.
    pub left_domain: bool,
}

/// Iterates until a classification rule fires. The state is checked before
/// each step, so a start at the origin is classified without stepping.
pub fn iterate_classify(start: DynState, c: &MapCoefficients, limits: &IterationLimits) -> Result<Trajectory> {
    limits.validate()?;
    let mut states = vec![start];
    let mut left_domain = !start.in_domain();
    let mut current = start;
    let mut iterations = 0;
    let classification = loop {
        if current.xc.abs() < limits.tol && current.zc.abs() < limits.tol {
            break Classification::Origin;
        }
        if current.xc > limits.escape_bound {
            break Classification::Escape;
        }
        if iterations == limits.max_iter {
            break Classification::Ambiguous;
        }
        let next = step(current, c);
        iterations += 1;
        states.push(next);
        left_domain |= !next.in_domain();
        if next.distance(&current) < limits.tol * 1e-3 {
            break Classification::NonzeroFixed;
        }
        current = next;
    };
    Ok(Trajectory { states, classification, iterations, left_domain })
}

/// Same rules as [`iterate_classify`] without storing the orbit.
pub fn classify(start: DynState, c: &MapCoefficients, limits: &IterationLimits) -> Result<Classification> {
    limits.validate()?;
    let mut current = start;
    for _ in 0..limits.max_iter {
        if current.xc.abs() < limits.tol && current.zc.abs() < limits.tol {
            return Ok(Classification::Origin);
        }
        if current.xc > limits.escape_bound {
            return Ok(Classification::Escape);
        }
        let next = step(current, c);
        if next.distance(&current) < limits.tol * 1e-3 {
            return Ok(Classification::NonzeroFixed);
        }
        current = next;
    }
    Ok(if current.xc.abs() < limits.tol && current.zc.abs() < limits.tol {
        Classification::Origin
    } else if current.xc > limits.escape_bound {
        Classification::Escape
    } else {
        Classification::Ambiguous
    })
}

/// Nontrivial fixed point of the `𝒵 = 0` slice, `(1 - dλ1²)/quad_xx`,
/// defined when `quad_xx > 0` and `dλ1² < 1`.
pub fn slice_fixed_point(c: &MapCoefficients) -> Option<f64> {
    (c.quad_xx > 0.0 && c.linear_x < 1.0).then(|| (1.0 - c.linear_x) / c.quad_xx)
}

type Matrix2 = [[f64; 2]; 2];

fn analytic_jacobian(p: DynState, c: &MapCoefficients) -> Matrix2 {
    [
        [c.linear_x + 2.0 * c.quad_xx * p.xc + c.quad_xz * p.zc, c.quad_xz * p.xc],
        [2.0 * c.quad_zz_source * p.xc, c.linear_z - 2.0 * c.quad_zz_decay * p.zc],
    ]
}

/// Central differences with step `1e-6·max(1, |coordinate|)`.
pub fn numerical_jacobian(p: DynState, c: &MapCoefficients) -> Matrix2 {
    let hx = 1e-6 * p.xc.abs().max(1.0);
    let hz = 1e-6 * p.zc.abs().max(1.0);
    let fx_plus = step(DynState::new(p.xc + hx, p.zc), c);
    let fx_minus = step(DynState::new(p.xc - hx, p.zc), c);
    let fz_plus = step(DynState::new(p.xc, p.zc + hz), c);
    let fz_minus = step(DynState::new(p.xc, p.zc - hz), c);
    [
        [(fx_plus.xc - fx_minus.xc) / (2.0 * hx), (fz_plus.xc - fz_minus.xc) / (2.0 * hz)],
        [(fx_plus.zc - fx_minus.zc) / (2.0 * hx), (fz_plus.zc - fz_minus.zc) / (2.0 * hz)],
    ]
}

/// Eigenvalue magnitudes of a 2×2 matrix, larger first.
pub fn eigenvalue_magnitudes(m: &Matrix2) -> [f64; 2] {
    let half_trace = 0.5 * (m[0][0] + m[1][1]);
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = half_trace * half_trace - det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        let (a, b) = ((half_trace + r).abs(), (half_trace - r).abs());
        [a.max(b), a.min(b)]
    } else {
        let modulus = det.sqrt();
        [modulus, modulus]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub state: DynState,
    /// Eigenvalue magnitudes of the Jacobian, larger first.
    pub multipliers: [f64; 2],
    /// Exists only through the `𝒳𝒵` coupling (`quad_xx = 0`).
    pub from_coupling: bool,
}

impl FixedPoint {
    pub fn is_unstable(&self) -> bool {
        self.multipliers[0] > 1.0
    }

    pub fn is_origin(&self) -> bool {
        self.state.xc == 0.0 && self.state.zc == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    /// The origin first, then nontrivial points by increasing `xc`.
    pub points: Vec<FixedPoint>,
    pub slice_seed: Option<f64>,
    /// Newton converged from none of the seeds.
    pub newton_failed: bool,
}

const RESIDUAL_TOL: f64 = 1e-12;

fn newton(mut p: DynState, c: &MapCoefficients) -> Option<DynState> {
    for _ in 0..100 {
        let f = step(p, c);
        let (rx, rz) = (f.xc - p.xc, f.zc - p.zc);
        if rx.hypot(rz) < RESIDUAL_TOL {
            return Some(p);
        }
        let mut j = analytic_jacobian(p, c);
        j[0][0] -= 1.0;
        j[1][1] -= 1.0;
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let dx = (j[1][1] * rx - j[0][1] * rz) / det;
        let dz = (j[0][0] * rz - j[1][0] * rx) / det;
        p = DynState::new(p.xc - dx, p.zc - dz);
        if !(p.xc.is_finite() && p.zc.is_finite()) || p.xc.abs() > 1e6 || p.zc.abs() > 1e6 {
            return None;
        }
    }
    let f = step(p, c);
    ((f.xc - p.xc).hypot(f.zc - p.zc) < RESIDUAL_TOL).then_some(p)
}

const SEED_XC: [f64; 6] = [0.001, 0.01, 0.03, 0.1, 0.3, 1.0];
const SEED_ZC: [f64; 4] = [0.0, 0.01, 0.1, 0.5];

/// Origin plus every distinct nontrivial fixed point reached by Newton from
/// a seed grid and the slice seed.
pub fn fixed_points(c: &MapCoefficients) -> FixedPointReport {
    let (mx, mz) = jacobian_origin(c);
    let mut points = vec![FixedPoint {
        state: DynState::default(),
        multipliers: [mx.abs().max(mz.abs()), mx.abs().min(mz.abs())],
        from_coupling: false,
    }];
    let slice_seed = slice_fixed_point(c);
    let mut seeds: Vec<DynState> = slice_seed.map(|s| DynState::new(s, 0.0)).into_iter().collect();
    for &xc in &SEED_XC {
        for &zc in &SEED_ZC {
            seeds.push(DynState::new(xc, zc));
        }
    }
    let mut converged = 0;
    let mut found: Vec<DynState> = Vec::new();
    for seed in seeds {
        let Some(p) = newton(seed, c) else { continue };
        converged += 1;
        if p.xc.hypot(p.zc) < 1e-9 {
            continue;
        }
        if found.iter().all(|f| f.distance(&p) > 1e-9 * (1.0 + p.xc.abs().max(p.zc.abs()))) {
            found.push(p);
        }
    }
    found.sort_by(|a, b| a.xc.total_cmp(&b.xc).then(a.zc.total_cmp(&b.zc)));
    points.extend(found.into_iter().map(|state| FixedPoint {
        state,
        multipliers: eigenvalue_magnitudes(&numerical_jacobian(state, c)),
        from_coupling: c.quad_xx == 0.0,
    }));
    FixedPointReport { points, slice_seed, newton_failed: converged == 0 }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscapeThreshold {
    pub lambda1_star: f64,
    pub d_lambda1_star_sq: f64,
    /// `λ1* < 1/√d`
    pub below_ks: bool,
}

pub fn coefficients(q: usize, d: usize, lambda1: f64, lambda2: f64) -> MapCoefficients {
    map_coefficients(q, d, &Spectrum::new(lambda1, lambda2))
}

/// Bisection on `λ1` of whether the orbit from `(x_start, 0)` escapes.
/// Anything other than ESCAPE counts as not escaping. The truncated map
/// only needs the coefficients, so `λ1` is not checked against channel
/// feasibility.
pub fn escape_threshold(
    q: usize,
    d: usize,
    lambda2: f64,
    x_start: f64,
    bracket: (f64, f64),
    tol: f64,
    limits: &IterationLimits,
) -> Result<EscapeThreshold> {
    if q < 2 || d == 0 {
        return Err(Error::Validation(format!("need q >= 2 and d >= 1, got q = {q}, d = {d}")));
    }
    let (lo, hi) = bracket;
    if !(lo < hi) || !(tol > 0.0) {
        return Err(Error::Bracket(format!("invalid bracket ({lo}, {hi}) with tol {tol}")));
    }
    let start = DynState::new(x_start, 0.0);
    let escapes = |lambda1: f64| -> Result<bool> {
        Ok(classify(start, &coefficients(q, d, lambda1, lambda2), limits)? == Classification::Escape)
    };
    let (mut a, mut b) = (lo, hi);
    let (ea, eb) = (escapes(a)?, escapes(b)?);
    if ea == eb {
        let verdict = if ea { "escape" } else { "do not escape" };
        return Err(Error::Bracket(format!(
            "both bracket ends {verdict} from x_start = {x_start} (q = {q}, d = {d}, lambda2 = {lambda2})"
        )));
    }
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if escapes(mid)? == ea {
            a = mid;
        } else {
            b = mid;
        }
    }
    let lambda1_star = 0.5 * (a + b);
    let d_sq = d as f64 * lambda1_star * lambda1_star;
    Ok(EscapeThreshold { lambda1_star, d_lambda1_star_sq: d_sq, below_ks: d_sq < 1.0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub lambda1: f64,
    pub lambda2: f64,
    pub classification: Classification,
    pub iterations: usize,
}

/// Classification of `start` over a `λ1 × λ2` grid, `λ1` varying slowest.
pub fn phase_grid(
    q: usize,
    d: usize,
    lambda1s: &[f64],
    lambda2s: &[f64],
    start: DynState,
    limits: &IterationLimits,
) -> Result<Vec<PhasePoint>> {
    limits.validate()?;
    let grid: Vec<(f64, f64)> = lambda1s.iter().flat_map(|&l1| lambda2s.iter().map(move |&l2| (l1, l2))).collect();
    grid.par_iter()
        .map(|&(lambda1, lambda2)| {
            let t = iterate_classify(start, &coefficients(q, d, lambda1, lambda2), limits)?;
            Ok(PhasePoint { lambda1, lambda2, classification: t.classification, iterations: t.iterations })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> MapCoefficients {
        coefficients(4, 2, 0.7, 0.1)
    }

    #[test]
    fn step_examples() {
        let c = example();
        assert_eq!(step(DynState::default(), &c), DynState::default());
        let s = step(DynState::new(0.1, 0.0), &c);
        assert!((s.xc - 0.1044027).abs() < 1e-7);
        assert!((s.zc - 0.0032013).abs() < 1e-7);
        let s = step(DynState::new(1e-8, 1e-8), &c);
        assert!((s.xc - 0.98e-8).abs() < 1e-14);
        assert!((s.zc - 0.02e-8).abs() < 1e-14);
    }

    #[test]
    fn origin_jacobian() {
        let (a, b) = jacobian_origin(&example());
        assert!((a - 0.98).abs() < 1e-15 && (b - 0.02).abs() < 1e-15);
        let (a, b) = jacobian_origin(&coefficients(3, 2, 0.4, 0.4));
        assert_eq!(a, b);
        let (a, b) = jacobian_origin(&coefficients(5, 1, 0.6, -0.3));
        assert!((a - 0.36).abs() < 1e-15 && (b - 0.09).abs() < 1e-15);
    }

    #[test]
    fn classification_examples() {
        let c = example();
        let limits = IterationLimits::default();
        let t = iterate_classify(DynState::new(0.01, 0.0), &c, &limits).unwrap();
        assert_eq!(t.classification, Classification::Origin);
        assert!(!t.left_domain);
        let t = iterate_classify(DynState::new(0.05, 0.0), &c, &limits).unwrap();
        assert_eq!(t.classification, Classification::Escape);
        let t = iterate_classify(DynState::default(), &c, &limits).unwrap();
        assert_eq!((t.classification, t.iterations, t.states.len()), (Classification::Origin, 0, 1));
        for start in [DynState::new(0.01, 0.0), DynState::new(0.05, 0.0), DynState::new(0.03, 0.001)] {
            let t = iterate_classify(start, &c, &limits).unwrap();
            assert_eq!(classify(start, &c, &limits).unwrap(), t.classification);
        }
    }

    #[test]
    fn overflow_saturates_to_escape() {
        let c = coefficients(10, 50, 0.9, 0.0);
        let t = iterate_classify(DynState::new(1e200, 0.0), &c, &IterationLimits::default()).unwrap();
        assert_eq!(t.classification, Classification::Escape);
        assert!(step(DynState::new(1e300, 1e300), &c).xc.is_finite());
    }

    #[test]
    fn fixed_point_example() {
        let c = example();
        let seed = slice_fixed_point(&c).unwrap();
        assert!((seed - 0.0312370).abs() < 1e-6);
        let report = fixed_points(&c);
        assert!(report.points[0].is_origin());
        assert!((report.points[0].multipliers[0] - 0.98).abs() < 1e-15);
        let near: Vec<_> = report.points[1..].iter().filter(|p| (p.state.xc - seed).abs() < 0.05 * seed).collect();
        assert_eq!(near.len(), 1);
        assert!(near[0].is_unstable());
        assert!(!near[0].from_coupling);
        for p in &report.points {
            let s = step(p.state, &c);
            assert!((s.xc - p.state.xc).hypot(s.zc - p.state.zc) < 1e-12);
        }
    }

    #[test]
    fn q3_points_come_from_coupling() {
        let c = coefficients(3, 2, 0.6, 0.2);
        assert_eq!(c.quad_xx, 0.0);
        let report = fixed_points(&c);
        assert_eq!(report.slice_seed, None);
        assert!(report.points[1..].iter().all(|p| p.from_coupling));
    }

    #[test]
    fn escape_threshold_examples() {
        let limits = IterationLimits::default();
        let t = escape_threshold(4, 2, 0.1, 0.5, (0.4, std::f64::consts::FRAC_1_SQRT_2), 1e-4, &limits).unwrap();
        assert!((t.lambda1_star - 0.6290).abs() < 1e-3);
        assert!(t.below_ks);
        let err = escape_threshold(2, 2, 0.1, 0.5, (0.4, std::f64::consts::FRAC_1_SQRT_2), 1e-4, &limits).unwrap_err();
        assert_eq!(err.kind(), "bracket");
        let err = escape_threshold(4, 2, 0.1, 0.5, (0.8, 0.9), 1e-4, &limits).unwrap_err();
        assert_eq!(err.kind(), "bracket");
    }

    #[test]
    fn eigenvalue_magnitudes_of_rotation() {
        let m = [[0.0, -2.0], [2.0, 0.0]];
        assert_eq!(eigenvalue_magnitudes(&m), [2.0, 2.0]);
        let m = [[0.5, 0.0], [0.0, -3.0]];
        assert_eq!(eigenvalue_magnitudes(&m), [3.0, 0.5]);
    }
}
