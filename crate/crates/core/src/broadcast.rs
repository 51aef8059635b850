//! Broadcast configurations on the depth-`n` `d`-ary tree and exact root
//! posteriors by upward message passing.
//!
//! Level ordering is breadth-first: the children of vertex `k` at depth `t`
//! are vertices `d·k .. d·k + d - 1` at depth `t + 1`.

use rand::Rng;

use crate::channel::ChannelParams;
use crate::error::{Error, Result};

pub const DEFAULT_LEAF_CAP: usize = 1 << 24;
const SIMPLEX_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeShape {
    pub d: usize,
    pub n: usize,
}

impl TreeShape {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Validation("branching factor d must be >= 1".into()));
        }
        Ok(Self { d, n })
    }

    /// `d^n`, or a capacity error when it exceeds `cap`.
    pub fn leaf_count(&self, cap: usize) -> Result<usize> {
        let mut count: u128 = 1;
        for _ in 0..self.n {
            count *= self.d as u128;
            if count > cap as u128 {
                return Err(Error::Capacity {
                    what: "tree leaves",
                    required: (self.d as u128).checked_pow(self.n as u32).unwrap_or(u128::MAX),
                    cap: cap as u128,
                });
            }
        }
        Ok(count as usize)
    }
}

/// Level-`n` spins, breadth-first, left to right.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LeafConfig {
    pub spins: Vec<u16>,
}

impl LeafConfig {
    pub fn new(spins: Vec<u16>) -> Self {
        Self { spins }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorVector {
    probs: Vec<f64>,
}

impl PosteriorVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_simplex(&probs)?;
        Ok(Self { probs })
    }

    pub fn indicator(num_states: usize, state: usize) -> Self {
        let mut probs = vec![0.0; num_states];
        probs[state] = 1.0;
        Self { probs }
    }

    pub fn uniform(num_states: usize) -> Self {
        Self { probs: vec![1.0 / num_states as f64; num_states] }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.probs
    }
}

pub fn check_simplex(probs: &[f64]) -> Result<()> {
    if let Some((i, &p)) = probs.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::Validation(format!("posterior component {i} is {p}, must be a finite nonnegative number")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Validation(format!("posterior components sum to {total}, expected 1")));
    }
    Ok(())
}

/// Samples the level-`n` spins of a broadcast started from `root_state`.
pub fn broadcast_sample<R: Rng + ?Sized>(
    params: &ChannelParams,
    shape: TreeShape,
    root_state: usize,
    rng: &mut R,
) -> Result<LeafConfig> {
    broadcast_sample_capped(params, shape, root_state, rng, DEFAULT_LEAF_CAP)
}

pub fn broadcast_sample_capped<R: Rng + ?Sized>(
    params: &ChannelParams,
    shape: TreeShape,
    root_state: usize,
    rng: &mut R,
    leaf_cap: usize,
) -> Result<LeafConfig> {
    if root_state >= params.num_states() {
        return Err(Error::Validation(format!("root state {root_state} out of range 0..{}", params.num_states())));
    }
    let leaves = shape.leaf_count(leaf_cap)?;
    let mut level = Vec::with_capacity(leaves);
    level.push(root_state as u16);
    for _ in 0..shape.n {
        let mut next = Vec::with_capacity(level.len() * shape.d);
        for &parent in &level {
            for _ in 0..shape.d {
                let u: f64 = rng.random();
                next.push(params.sample_transition(parent as usize, u) as u16);
            }
        }
        level = next;
    }
    Ok(LeafConfig { spins: level })
}

/// Multiplies `(M·child)` into `acc` componentwise. `scratch` has length 2q.
#[inline]
pub(crate) fn absorb_child(params: &ChannelParams, child: &[f64], acc: &mut [f64], scratch: &mut [f64]) {
    params.apply(child, scratch);
    for (a, s) in acc.iter_mut().zip(scratch.iter()) {
        *a *= s;
    }
}

/// Divides by the sum in place; returns the sum.
#[inline]
pub(crate) fn normalize(v: &mut [f64]) -> f64 {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        for x in v.iter_mut() {
            *x /= total;
        }
    }
    total
}

/// Belief-propagation combination of child posteriors at a parent:
/// component `i` is proportional to `∏_j (M·Y_j)_i`.
pub fn bp_combine(params: &ChannelParams, children: &[PosteriorVector]) -> Result<PosteriorVector> {
    if children.is_empty() {
        return Err(Error::Validation("bp_combine needs at least one child".into()));
    }
    let k = params.num_states();
    for child in children {
        if child.len() != k {
            return Err(Error::Validation(format!("child vector has {} components, expected {k}", child.len())));
        }
        check_simplex(child.probs())?;
    }
    let mut acc = vec![1.0; k];
    let mut scratch = vec![0.0; k];
    for child in children {
        absorb_child(params, child.probs(), &mut acc, &mut scratch);
        normalize(&mut acc);
    }
    if acc.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Validation("children are incompatible under this channel".into()));
    }
    Ok(PosteriorVector { probs: acc })
}

/// Unnormalized products `Z_i = ∏_j 2q·(M·Y_j)_i`.
pub fn z_products(params: &ChannelParams, children: &[&[f64]]) -> Vec<f64> {
    let k = params.num_states();
    let scale = k as f64;
    let mut acc = vec![1.0; k];
    let mut scratch = vec![0.0; k];
    for child in children {
        params.apply(child, &mut scratch);
        for (a, s) in acc.iter_mut().zip(&scratch) {
            *a *= scale * s;
        }
    }
    acc
}

fn validate_config(params: &ChannelParams, shape: TreeShape, config: &LeafConfig) -> Result<()> {
    let leaves = shape.leaf_count(DEFAULT_LEAF_CAP.max(config.spins.len()))?;
    if config.spins.len() != leaves {
        return Err(Error::Validation(format!(
            "configuration has {} spins, tree has {leaves} leaves",
            config.spins.len()
        )));
    }
    let k = params.num_states();
    if let Some(s) = config.spins.iter().find(|&&s| s as usize >= k) {
        return Err(Error::Validation(format!("spin {s} out of range 0..{k}")));
    }
    Ok(())
}

/// Upward pass over the subtree rooted at `(depth, index)`. `bufs[0]` receives
/// the message; deeper entries are scratch for the recursion.
fn upward(
    params: &ChannelParams,
    shape: TreeShape,
    spins: &[u16],
    depth: usize,
    index: usize,
    bufs: &mut [Vec<f64>],
    scratch: &mut [f64],
    renormalize: bool,
) {
    let (out, rest) = bufs.split_first_mut().expect("one buffer per level");
    if depth == shape.n {
        out.fill(0.0);
        out[spins[index] as usize] = 1.0;
        return;
    }
    out.fill(1.0);
    for j in 0..shape.d {
        let child = shape.d * index + j;
        if depth + 1 == shape.n {
            // leaf child: (M·e_s)_i = M[i][s]
            let s = spins[child] as usize;
            for (i, o) in out.iter_mut().enumerate() {
                *o *= params.entry(i, s);
            }
        } else {
            upward(params, shape, spins, depth + 1, child, rest, scratch, renormalize);
            absorb_child(params, &rest[0], out, scratch);
        }
        if renormalize {
            normalize(out);
        }
    }
}

fn run_upward(params: &ChannelParams, shape: TreeShape, config: &LeafConfig, renormalize: bool) -> Vec<f64> {
    let k = params.num_states();
    let mut bufs = vec![vec![0.0; k]; shape.n + 1];
    let mut scratch = vec![0.0; k];
    upward(params, shape, &config.spins, 0, 0, &mut bufs, &mut scratch, renormalize);
    bufs.swap_remove(0)
}

/// Exact root posterior under the uniform root prior.
pub fn posterior_root(params: &ChannelParams, shape: TreeShape, config: &LeafConfig) -> Result<PosteriorVector> {
    validate_config(params, shape, config)?;
    let mut probs = run_upward(params, shape, config, true);
    if normalize(&mut probs) <= 0.0 {
        return Err(Error::Validation("configuration has zero probability under this channel".into()));
    }
    Ok(PosteriorVector { probs })
}

/// `P(σ(n) = config | root = i)` for every `i`, without renormalization.
pub fn leaf_likelihood(params: &ChannelParams, shape: TreeShape, config: &LeafConfig) -> Result<Vec<f64>> {
    validate_config(params, shape, config)?;
    Ok(run_upward(params, shape, config, false))
}
