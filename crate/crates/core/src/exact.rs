//! Brute-force moments by enumerating every leaf configuration.
//!
//! Each configuration `A` is weighted by `P(σ(n) = A | root = 0)`. The
//! configuration space is cut into fixed-size index ranges that are summed
//! independently (in parallel) with compensated summation and then merged in
//! range order, so results are bitwise identical for any thread count.

use std::ops::Range;

use rayon::prelude::*;

use crate::broadcast::{leaf_likelihood, posterior_root, LeafConfig, TreeShape};
use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::formulas::YMomentSet;
use crate::moments::{CompensatedSum, CrossMoments, MomentStats};

pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;
const CHUNK: u64 = 1 << 12;

fn space_size(radix: usize, digits: usize, cap: u64, what: &'static str) -> Result<u64> {
    let required = (radix as u128).checked_pow(digits as u32).unwrap_or(u128::MAX);
    if required > cap as u128 {
        return Err(Error::Capacity { what, required, cap: cap as u128 });
    }
    Ok(required as u64)
}

/// Sums `width` statistics over `0..total`, chunked in a fixed order.
fn reduce_indices<F>(total: u64, width: usize, body: F) -> Vec<f64>
where
    F: Fn(Range<u64>, &mut [CompensatedSum]) + Sync,
{
    let chunks = total.div_ceil(CHUNK);
    let partials: Vec<Vec<CompensatedSum>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut sums = vec![CompensatedSum::default(); width];
            body(c * CHUNK..((c + 1) * CHUNK).min(total), &mut sums);
            sums
        })
        .collect();
    let mut totals = vec![CompensatedSum::default(); width];
    for partial in &partials {
        for (t, p) in totals.iter_mut().zip(partial) {
            t.merge(p);
        }
    }
    totals.iter().map(CompensatedSum::value).collect()
}

/// Mixed-radix digits of `index`, least significant first.
fn decode(mut index: u64, radix: usize, digits: &mut [u16]) {
    for d in digits.iter_mut() {
        *d = (index % radix as u64) as u16;
        index /= radix as u64;
    }
}

fn increment(radix: usize, digits: &mut [u16]) {
    for d in digits.iter_mut() {
        *d += 1;
        if (*d as usize) < radix {
            return;
        }
        *d = 0;
    }
}

/// Visits every leaf configuration of `shape` with positive probability
/// under root state 0, passing its weight and root posterior.
fn for_each_config<F>(params: &ChannelParams, shape: TreeShape, range: Range<u64>, mut visit: F) -> Result<()>
where
    F: FnMut(f64, &[f64]),
{
    let k = params.num_states();
    let leaves = shape.leaf_count(usize::MAX)?;
    let mut config = LeafConfig::new(vec![0; leaves]);
    decode(range.start, k, &mut config.spins);
    for _ in range {
        let likelihood = leaf_likelihood(params, shape, &config)?;
        let weight = likelihood[0];
        if weight > 0.0 {
            let posterior = posterior_root(params, shape, &config)?;
            visit(weight, posterior.probs());
        }
        increment(k, &mut config.spins);
    }
    Ok(())
}

fn enumerate<F>(params: &ChannelParams, shape: TreeShape, cap: u64, width: usize, accumulate: F) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64], &mut [CompensatedSum]) + Sync,
{
    let leaves = shape.leaf_count(usize::MAX).map_err(|_| Error::Capacity {
        what: "leaf configurations",
        required: u128::MAX,
        cap: cap as u128,
    })?;
    let total = space_size(params.num_states(), leaves, cap, "leaf configurations")?;
    Ok(reduce_indices(total, width, |range, sums| {
        for_each_config(params, shape, range, |weight, f| accumulate(weight, f, sums))
            .expect("configurations are generated in range");
    }))
}

/// Exact `(x, y, z, u, v, w)` together with the five cross expectations.
pub fn exact_level(params: &ChannelParams, shape: TreeShape, cap: u64) -> Result<(MomentStats, CrossMoments)> {
    let q = params.q();
    let c = 1.0 / params.num_states() as f64;
    let sums = enumerate(params, shape, cap, 11, |weight, f, sums| {
        let a = f[0] - c;
        let b = f[1] - c;
        let g = f[q] - c;
        let values = [a, b, g, a * a, b * b, g * g, a * b, a * g, b * g, g * (f[2 * q - 1] - c), b * (f[q - 1] - c)];
        for (s, v) in sums.iter_mut().zip(values) {
            s.add(weight * v);
        }
    })?;
    let stats = MomentStats::exact(sums[0], sums[1], sums[2], sums[3], sums[4], sums[5]);
    let cross = CrossMoments { e12: sums[6], e13: sums[7], e23: sums[8], e_q1_2q: sums[9], e_2_q: sums[10] };
    Ok((stats, cross))
}

pub fn exact_moments(params: &ChannelParams, shape: TreeShape) -> Result<MomentStats> {
    exact_level(params, shape, DEFAULT_ENUMERATION_CAP).map(|(s, _)| s)
}

/// The five cross expectations. For `q = 2`, `e_2_q` pairs state 1 with
/// itself and is returned as computed.
pub fn exact_cross_moments(params: &ChannelParams, shape: TreeShape) -> Result<CrossMoments> {
    exact_level(params, shape, DEFAULT_ENUMERATION_CAP).map(|(_, c)| c)
}

/// Exact moments for levels `0..=max_n`.
pub fn exact_series(params: &ChannelParams, d: usize, max_n: usize, cap: u64) -> Result<Vec<MomentStats>> {
    (0..=max_n).map(|n| exact_level(params, TreeShape::new(d, n)?, cap).map(|(s, _)| s)).collect()
}

/// One child subtree configuration: its probability under root state 0 and
/// the child's posterior.
struct Subtree {
    weight: f64,
    posterior: Vec<f64>,
}

fn child_subtrees(params: &ChannelParams, d: usize, n: usize, cap: u64) -> Result<(u64, Vec<Subtree>)> {
    let shape = TreeShape::new(d, n)?;
    let leaves = shape.leaf_count(usize::MAX)?;
    let total = space_size(params.num_states(), leaves, cap, "subtree configurations")?;
    let mut out = Vec::new();
    let mut scratch = vec![0.0; params.num_states()];
    let mut config = LeafConfig::new(vec![0; leaves]);
    for _ in 0..total {
        let likelihood = leaf_likelihood(params, shape, &config)?;
        // P(A_j | root = 0) = Σ_c M[0][c]·P(A_j | child = c)
        params.apply(&likelihood, &mut scratch);
        let weight = scratch[0];
        if weight > 0.0 {
            let posterior = posterior_root(params, shape, &config)?.into_inner();
            out.push(Subtree { weight, posterior });
        }
        increment(params.num_states(), &mut config.spins);
    }
    Ok((total, out))
}

/// Exact moments of the `Z_i` products at level `n + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZMoments {
    q: usize,
    ez: Vec<f64>,
    ezz: Vec<f64>,
}

impl ZMoments {
    pub fn q(&self) -> usize {
        self.q
    }

    /// `E Z_i`
    pub fn mean(&self, i: usize) -> f64 {
        self.ez[i]
    }

    /// `E Z_a Z_b`
    pub fn product(&self, a: usize, b: usize) -> f64 {
        self.ezz[a * 2 * self.q + b]
    }

    /// Representative indices for the three mean classes.
    pub fn representative_means(q: usize) -> [usize; 3] {
        [0, 1, q]
    }

    /// Representative pairs, one per product class.
    pub fn representative_pairs(q: usize) -> [(usize, usize); 8] {
        [(0, 0), (1, 1), (q, q), (0, 1), (0, q), (1, q - 1), (1, q), (q, 2 * q - 1)]
    }
}

pub fn exact_z_moments(params: &ChannelParams, d: usize, n: usize) -> Result<ZMoments> {
    exact_z_moments_capped(params, d, n, DEFAULT_ENUMERATION_CAP)
}

pub fn exact_z_moments_capped(params: &ChannelParams, d: usize, n: usize, cap: u64) -> Result<ZMoments> {
    if d == 0 {
        return Err(Error::Validation("branching factor d must be >= 1".into()));
    }
    let (per_child, subtrees) = child_subtrees(params, d, n, cap)?;
    space_size(per_child as usize, d, cap, "level configurations")?;
    let k = params.num_states();
    let scale = k as f64;
    let m = subtrees.len();
    let total = (m as u128).pow(d as u32) as u64;
    let width = k + k * k;
    let sums = reduce_indices(total, width, |range, sums| {
        let mut choice = vec![0u16; d];
        let mut z = vec![0.0; k];
        let mut scratch = vec![0.0; k];
        decode(range.start, m, &mut choice);
        for _ in range {
            let mut weight = 1.0;
            z.fill(1.0);
            for &c in &choice {
                let sub = &subtrees[c as usize];
                weight *= sub.weight;
                params.apply(&sub.posterior, &mut scratch);
                for (zi, s) in z.iter_mut().zip(&scratch) {
                    *zi *= scale * s;
                }
            }
            for i in 0..k {
                sums[i].add(weight * z[i]);
                for j in i..k {
                    sums[k + i * k + j].add(weight * z[i] * z[j]);
                }
            }
            increment(m, &mut choice);
        }
    });
    let ez = sums[..k].to_vec();
    let mut ezz = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let v = sums[k + i * k + j];
            ezz[i * k + j] = v;
            ezz[j * k + i] = v;
        }
    }
    Ok(ZMoments { q: params.q(), ez, ezz })
}

/// Eleven child-posterior moments by direct enumeration of one child
/// subtree of depth `n`.
pub fn exact_y_moments(params: &ChannelParams, d: usize, n: usize) -> Result<YMomentSet> {
    let q = params.q();
    let c = 1.0 / params.num_states() as f64;
    let (_, subtrees) = child_subtrees(params, d, n, DEFAULT_ENUMERATION_CAP)?;
    let mut sums = [CompensatedSum::default(); 11];
    for sub in &subtrees {
        let y = &sub.posterior;
        let a = y[0] - c;
        let b = y[1] - c;
        let g = y[q] - c;
        let pair = if q > 2 { b * (y[q - 1] - c) } else { 0.0 };
        let values = [a, b, g, a * a, b * b, g * g, a * b, a * g, pair, b * g, g * (y[q + 1] - c)];
        for (s, v) in sums.iter_mut().zip(values) {
            s.add(sub.weight * v);
        }
    }
    let v: Vec<f64> = sums.iter().map(CompensatedSum::value).collect();
    Ok(YMomentSet {
        mean_state: v[0],
        mean_category: v[1],
        mean_cross: v[2],
        square_state: v[3],
        square_category: v[4],
        square_cross: v[5],
        cov_state_category: v[6],
        cov_state_cross: v[7],
        cov_category_pair: (q > 2).then_some(v[8]),
        cov_category_cross: v[9],
        cov_cross_pair: v[10],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> ChannelParams {
        ChannelParams::from_eigenvalues(2, 0.5, 0.3).unwrap()
    }

    #[test]
    fn level_zero_is_the_indicator() {
        let p = ChannelParams::from_eigenvalues(3, 0.4, 0.2).unwrap();
        let s = exact_moments(&p, TreeShape::new(2, 0).unwrap()).unwrap();
        assert_eq!(s, MomentStats::level_zero(3));
        let c = exact_cross_moments(&reference(), TreeShape::new(2, 0).unwrap()).unwrap();
        assert!((c.e12 + 0.1875).abs() < 1e-15);
    }

    #[test]
    fn one_child_reference_values() {
        let s = exact_moments(&reference(), TreeShape::new(1, 1).unwrap()).unwrap();
        assert!((s.x - 0.1475).abs() < 1e-12);
        assert!((s.y + 0.1025).abs() < 1e-12);
        assert!((s.z + 0.0225).abs() < 1e-12);
    }

    #[test]
    fn uniform_channel_has_no_signal() {
        let p = ChannelParams::new(2, 0.25, 0.25, 0.25).unwrap();
        let s = exact_moments(&p, TreeShape::new(2, 1).unwrap()).unwrap();
        for v in [s.x, s.y, s.z, s.u, s.v, s.w] {
            assert!(v.abs() < 1e-15);
        }
    }

    #[test]
    fn capacity_error_reports_required_count() {
        let p = reference();
        let err = exact_level(&p, TreeShape::new(2, 4).unwrap(), DEFAULT_ENUMERATION_CAP).unwrap_err();
        assert_eq!(
            err,
            Error::Capacity {
                what: "leaf configurations",
                required: 4u128.pow(16),
                cap: DEFAULT_ENUMERATION_CAP as u128
            }
        );
        // 4^8 = 65536
        let shape = TreeShape::new(2, 3).unwrap();
        assert_eq!(exact_level(&p, shape, (1 << 16) - 1).unwrap_err().kind(), "capacity");
        assert!(exact_level(&p, shape, 1 << 16).is_ok());
    }

    #[test]
    fn z_moment_examples() {
        let z = exact_z_moments(&reference(), 1, 0).unwrap();
        assert!((z.product(0, 1) - 0.62).abs() < 1e-12);
        assert!((z.product(1, 1) - 0.62).abs() < 1e-12);
        assert!((z.mean(0) - 1.59).abs() < 1e-12);

        let uniform = ChannelParams::new(2, 0.25, 0.25, 0.25).unwrap();
        let z = exact_z_moments(&uniform, 3, 0).unwrap();
        for i in 0..4 {
            assert!((z.mean(i) - 1.0).abs() < 1e-14);
            for j in 0..4 {
                assert!((z.product(i, j) - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn noiseless_channel_skips_impossible_configs() {
        let p = ChannelParams::new(2, 1.0, 0.0, 0.0).unwrap();
        let s = exact_moments(&p, TreeShape::new(2, 1).unwrap()).unwrap();
        assert_eq!(s, MomentStats::level_zero(2));
    }
}
