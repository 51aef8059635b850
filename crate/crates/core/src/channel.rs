//! The 2q-state two-category symmetric channel.
//!
//! States are indexed `0..2q`; the first category is `0..q`, the second
//! `q..2q`. A transition keeps the state with probability `p0`, moves to each
//! other state of the same category with probability `p1`, and to each state
//! of the other category with probability `p2`.

use crate::error::{Error, Result};

/// Probabilities in `[-FEASIBILITY_SLACK, 0)` are clamped to zero.
pub const FEASIBILITY_SLACK: f64 = 1e-12;
const NORMALIZATION_TOL: f64 = 1e-12;

/// Largest category size accepted; leaf spins are stored as `u16`.
pub const MAX_Q: usize = (u16::MAX as usize) / 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    q: usize,
    p0: f64,
    p1: f64,
    p2: f64,
}

impl ChannelParams {
    pub fn new(q: usize, p0: f64, p1: f64, p2: f64) -> Result<Self> {
        if !(2..=MAX_Q).contains(&q) {
            return Err(Error::Validation(format!("q must be in 2..={MAX_Q}, got {q}")));
        }
        let p0 = clamp_probability("p0", p0)?;
        let p1 = clamp_probability("p1", p1)?;
        let p2 = clamp_probability("p2", p2)?;
        let total = p0 + (q - 1) as f64 * p1 + q as f64 * p2;
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Validation(format!("p0 + (q-1)p1 + q p2 must equal 1, got {total}")));
        }
        Ok(Self { q, p0, p1, p2 })
    }

    /// Inverts the closed-form eigenvalues:
    /// `p2 = (1-λ2)/(2q)`, `p1 = ((1+λ2)/2 - λ1)/q`, `p0 = p1 + λ1`.
    pub fn from_eigenvalues(q: usize, lambda1: f64, lambda2: f64) -> Result<Self> {
        if !(2..=MAX_Q).contains(&q) {
            return Err(Error::Validation(format!("q must be in 2..={MAX_Q}, got {q}")));
        }
        if !lambda1.is_finite() || !lambda2.is_finite() {
            return Err(Error::Validation("eigenvalues must be finite".into()));
        }
        let qf = q as f64;
        let p2 = (1.0 - lambda2) / (2.0 * qf);
        let p1 = ((1.0 + lambda2) / 2.0 - lambda1) / qf;
        let p0 = p1 + lambda1;
        for (name, value) in [("p0", p0), ("p1", p1), ("p2", p2)] {
            if value < -FEASIBILITY_SLACK {
                return Err(Error::Domain(format!(
                    "infeasible eigenvalue pair (lambda1={lambda1}, lambda2={lambda2}): {name} = {value} < 0"
                )));
            }
            if value > 1.0 + FEASIBILITY_SLACK {
                return Err(Error::Domain(format!(
                    "infeasible eigenvalue pair (lambda1={lambda1}, lambda2={lambda2}): {name} = {value} > 1"
                )));
            }
        }
        Self::new(q, p0, p1, p2)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn num_states(&self) -> usize {
        2 * self.q
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn p2(&self) -> f64 {
        self.p2
    }

    #[inline]
    pub fn same_category(&self, i: usize, j: usize) -> bool {
        (i < self.q) == (j < self.q)
    }

    /// Transition probability `M[i][j]`.
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.p0
        } else if self.same_category(i, j) {
            self.p1
        } else {
            self.p2
        }
    }

    pub fn spectrum(&self) -> Spectrum {
        let qf = self.q as f64;
        let lambda1 = self.p0 - self.p1;
        let lambda2 = self.p0 + (qf - 1.0) * self.p1 - qf * self.p2;
        Spectrum::new(lambda1, lambda2)
    }

    pub fn matrix(&self) -> StochasticMatrix {
        let size = self.num_states();
        let mut entries = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                entries.push(self.entry(i, j));
            }
        }
        StochasticMatrix { size, entries }
    }

    /// Writes `M·y` into `out`. Runs in O(2q) using the category sums.
    #[inline]
    pub fn apply(&self, y: &[f64], out: &mut [f64]) {
        let q = self.q;
        debug_assert_eq!(y.len(), 2 * q);
        debug_assert_eq!(out.len(), 2 * q);
        let first: f64 = y[..q].iter().sum();
        let second: f64 = y[q..].iter().sum();
        let diag = self.p0 - self.p1;
        for (i, (o, &yi)) in out.iter_mut().zip(y).enumerate() {
            let (own, other) = if i < q { (first, second) } else { (second, first) };
            *o = diag * yi + self.p1 * own + self.p2 * other;
        }
    }

    /// Draws the next state from row `from` given a uniform variate in `[0, 1)`.
    #[inline]
    pub fn sample_transition(&self, from: usize, u: f64) -> usize {
        let q = self.q;
        if u < self.p0 {
            return from;
        }
        let u = u - self.p0;
        let stay_block = (q - 1) as f64 * self.p1;
        if u < stay_block && self.p1 > 0.0 {
            let k = ((u / self.p1) as usize).min(q - 2);
            let base = if from < q { 0 } else { q };
            let offset = from - base;
            // skip `from` itself inside its category
            let pick = if k >= offset { k + 1 } else { k };
            return base + pick;
        }
        let u = (u - stay_block).max(0.0);
        let k = if self.p2 > 0.0 { ((u / self.p2) as usize).min(q - 1) } else { q - 1 };
        if from < q {
            q + k
        } else {
            k
        }
    }
}

fn clamp_probability(name: &str, value: f64) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::Validation(format!("{name} must be finite, got {value}")));
    }
    if value < -FEASIBILITY_SLACK {
        return Err(Error::Validation(format!("{name} must be >= 0, got {value}")));
    }
    if value > 1.0 + FEASIBILITY_SLACK {
        return Err(Error::Validation(format!("{name} must be <= 1, got {value}")));
    }
    Ok(value.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spectrum {
    pub lambda1: f64,
    pub lambda2: f64,
    /// The Perron eigenvalue, always 1.
    pub lambda3: f64,
    /// Second largest eigenvalue in absolute value.
    pub lambda_star: f64,
}

impl Spectrum {
    pub fn new(lambda1: f64, lambda2: f64) -> Self {
        Self { lambda1, lambda2, lambda3: 1.0, lambda_star: lambda1.abs().max(lambda2.abs()) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    size: usize,
    entries: Vec<f64>,
}

impl StochasticMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.size..(i + 1) * self.size]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.size).map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn mul(&self, other: &StochasticMatrix) -> StochasticMatrix {
        let n = self.size;
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                for j in 0..n {
                    entries[i * n + j] += a * other.get(k, j);
                }
            }
        }
        StochasticMatrix { size: n, entries }
    }

    pub fn pow(&self, s: u32) -> StochasticMatrix {
        let n = self.size;
        let mut acc =
            StochasticMatrix { size: n, entries: (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect() };
        for _ in 0..s {
            acc = acc.mul(self);
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsReport {
    pub lambda_star: f64,
    /// `d·λ*²`, the quantity compared against 1.
    pub d_lambda_sq: f64,
    pub d_lambda1_sq: f64,
    pub d_lambda2_sq: f64,
    pub solvable: bool,
    /// Set when `|λ2| > |λ1|` or `λ1 = 0`: the sub-KS reconstruction
    /// mechanism is only established for `0 < |λ2| <= |λ1|`.
    pub outside_theorem: bool,
}

/// Kesten-Stigum check: reconstruction is solvable when `d·λ*² > 1`.
pub fn ks_check(d: usize, spectrum: &Spectrum) -> KsReport {
    let df = d as f64;
    let d_lambda_sq = df * spectrum.lambda_star * spectrum.lambda_star;
    KsReport {
        lambda_star: spectrum.lambda_star,
        d_lambda_sq,
        d_lambda1_sq: df * spectrum.lambda1 * spectrum.lambda1,
        d_lambda2_sq: df * spectrum.lambda2 * spectrum.lambda2,
        solvable: d_lambda_sq > 1.0,
        outside_theorem: theorem_warning(spectrum),
    }
}

pub fn theorem_warning(spectrum: &Spectrum) -> bool {
    spectrum.lambda1 == 0.0 || spectrum.lambda2.abs() > spectrum.lambda1.abs()
}

/// `s`-step transition probabilities from state 0: to itself (`u`), to a
/// fixed other state of its category (`v`), to a fixed state of the other
/// category (`w`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceEntries {
    pub s: u32,
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

pub fn distance_entries(params: &ChannelParams, s: u32) -> DistanceEntries {
    let (p0, p1, p2) = (params.p0, params.p1, params.p2);
    let qf = params.q as f64;
    let (mut u, mut v, mut w) = (1.0, 0.0, 0.0);
    for _ in 0..s {
        let nu = p0 * u + (qf - 1.0) * p1 * v + qf * p2 * w;
        let nv = p1 * u + (p0 + (qf - 2.0) * p1) * v + qf * p2 * w;
        let nw = p2 * u + (qf - 1.0) * p2 * v + (p0 + (qf - 1.0) * p1) * w;
        u = nu;
        v = nv;
        w = nw;
    }
    DistanceEntries { s, u, v, w }
}

/// A permutation of the states, stored as images: `state i -> images[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn images(&self) -> &[usize] {
        &self.0
    }

    #[inline]
    pub fn apply(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Relabels a vector indexed by state: `out[π(i)] = v[i]`.
    pub fn permute_vector(&self, v: &[f64], out: &mut [f64]) {
        for (i, &x) in v.iter().enumerate() {
            out[self.0[i]] = x;
        }
    }
}

/// Canonical channel symmetry sending state 0 to `c`.
///
/// For `c < q` this is the transposition `(0 c)`. For `c >= q` the
/// transposition `(0, c-q)` is applied first and then the categories are
/// swapped (`i <-> i ± q`).
pub fn symmetry_permutation(q: usize, c: usize) -> Result<Permutation> {
    let n = 2 * q;
    if c >= n {
        return Err(Error::Domain(format!("state {c} out of range 0..{n}")));
    }
    let transposition = |t: usize, i: usize| -> usize {
        if i == 0 {
            t
        } else if i == t {
            0
        } else {
            i
        }
    };
    let images = if c < q {
        (0..n).map(|i| transposition(c, i)).collect()
    } else {
        (0..n)
            .map(|i| {
                let j = transposition(c - q, i);
                if j < q {
                    j + q
                } else {
                    j - q
                }
            })
            .collect()
    };
    Ok(Permutation(images))
}
