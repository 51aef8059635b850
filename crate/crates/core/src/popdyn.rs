//! Monte Carlo estimates of the moment sequence.
//!
//! Two engines: independent full-tree samples ([`mc_tree_moments`]) and
//! population dynamics ([`evolve_level`]), which iterates the distributional
//! recursion on a population of root-0 posterior vectors. A child with state
//! `c` reuses the root-0 population relabelled by a uniformly random channel
//! symmetry that sends 0 to `c`. A fixed relabelling such as the
//! transposition `(0 c)` leaves members concentrated on some state `j != 0`
//! in place, and near criticality the population then drifts onto a wrong
//! state.
//!
//! Randomness for member `i` of level `t` comes from the substream
//! `(seed, t, i)`; sample `i` of a tree run from `(seed, level, i)`.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::broadcast::{
    absorb_child, broadcast_sample, check_simplex, normalize, posterior_root, PosteriorVector, TreeShape,
};
use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::moments::{MomentStats, StandardErrors};
use crate::rng::{domain, substream};

pub const DEFAULT_POPULATION: usize = 100_000;
pub const DEFAULT_LEVELS: usize = 50;

/// Empirical law of the root posterior given root state 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    q: usize,
    level: usize,
    /// Row-major, `2q` entries per member.
    members: Vec<f64>,
}

impl Population {
    pub fn from_members(q: usize, level: usize, members: &[PosteriorVector]) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Validation("population must be nonempty".into()));
        }
        let mut flat = Vec::with_capacity(members.len() * 2 * q);
        for m in members {
            if m.len() != 2 * q {
                return Err(Error::Validation(format!("member has {} components, expected {}", m.len(), 2 * q)));
            }
            check_simplex(m.probs())?;
            flat.extend_from_slice(m.probs());
        }
        Ok(Self { q, level, members: flat })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn len(&self) -> usize {
        self.members.len() / (2 * self.q)
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member(&self, i: usize) -> &[f64] {
        let k = 2 * self.q;
        &self.members[i * k..(i + 1) * k]
    }

    pub fn members(&self) -> impl Iterator<Item = &[f64]> {
        self.members.chunks_exact(2 * self.q)
    }
}

/// `size` copies of the indicator of state 0, at level 0.
pub fn init_population(q: usize, size: usize) -> Result<Population> {
    if size == 0 {
        return Err(Error::Validation("population size must be >= 1".into()));
    }
    if q < 2 {
        return Err(Error::Validation(format!("q must be >= 2, got {q}")));
    }
    let k = 2 * q;
    let mut members = vec![0.0; size * k];
    for m in members.chunks_exact_mut(k) {
        m[0] = 1.0;
    }
    Ok(Population { q, level: 0, members })
}

/// Uniform channel symmetry with `0 -> c`, written as images into `images`.
/// Symmetries permute states within each category and may swap the two
/// categories.
pub fn random_symmetry<R: Rng + ?Sized>(q: usize, c: usize, rng: &mut R, images: &mut [usize]) {
    let (home, away) = if c < q { (0, q) } else { (q, 0) };
    images[0] = c;
    let mut slot = 1;
    for s in home..home + q {
        if s != c {
            images[slot] = s;
            slot += 1;
        }
    }
    images[1..q].shuffle(rng);
    for (i, image) in images[q..2 * q].iter_mut().enumerate() {
        *image = away + i;
    }
    images[q..2 * q].shuffle(rng);
}

/// Builds the next level. Each new member combines `d` children; a child
/// draws its state `c` from row 0 of the channel and a uniformly chosen
/// member of `pop`, relabelled by [`random_symmetry`].
pub fn evolve_level(pop: &Population, params: &ChannelParams, d: usize, seed: u64) -> Result<Population> {
    if pop.q != params.q() {
        return Err(Error::Validation(format!("population has q = {}, channel has q = {}", pop.q, params.q())));
    }
    if d == 0 {
        return Err(Error::Validation("branching factor d must be >= 1".into()));
    }
    let q = pop.q;
    let k = 2 * q;
    let size = pop.len();
    let level = pop.level + 1;
    let stream_domain = domain::POPULATION_LEVEL ^ level as u64;
    let mut members = vec![0.0; size * k];
    members.par_chunks_mut(k).enumerate().for_each_init(
        || (vec![0.0; k], vec![0.0; k], vec![0usize; k]),
        |(child, scratch, images), (i, out)| {
            let mut rng = substream(seed, stream_domain, i as u64);
            out.fill(1.0);
            for _ in 0..d {
                let c = params.sample_transition(0, rng.random());
                let source = pop.member(rng.random_range(0..size));
                random_symmetry(q, c, &mut rng, images);
                for (j, &p) in source.iter().enumerate() {
                    child[images[j]] = p;
                }
                absorb_child(params, child, out, scratch);
                normalize(out);
            }
        },
    );
    Ok(Population { q, level, members })
}

#[derive(Default, Clone, Copy)]
struct Welford {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, value: f64) {
        self.count += 1.0;
        let delta = value - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (value - self.mean);
    }

    /// Standard error of the mean from the plug-in (n - 1) variance.
    fn standard_error(&self) -> f64 {
        if self.count < 2.0 {
            0.0
        } else {
            (self.m2 / (self.count - 1.0) / self.count).sqrt()
        }
    }
}

/// Moment estimates with per-member standard errors. Same-category and
/// cross-category components are averaged within each member first.
pub fn estimate_from_vectors<'a, I>(q: usize, vectors: I) -> Result<MomentStats>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let c = 1.0 / (2.0 * q as f64);
    let mut acc = [Welford::default(); 6];
    // plain sums keep x + (q-1)y + qz = 0 at round-off level
    let mut sums = [0.0f64; 3];
    let mut count = 0usize;
    for v in vectors {
        let own = v[0] - c;
        let category_sum: f64 = v[1..q].iter().sum();
        let cross_sum: f64 = v[q..].iter().sum();
        let category = category_sum / (q - 1) as f64 - c;
        let cross = cross_sum / q as f64 - c;
        let own_sq = own * own;
        let category_sq = v[1..q].iter().map(|&p| (p - c) * (p - c)).sum::<f64>() / (q - 1) as f64;
        let cross_sq = v[q..].iter().map(|&p| (p - c) * (p - c)).sum::<f64>() / q as f64;
        for (a, value) in acc.iter_mut().zip([own, category, cross, own_sq, category_sq, cross_sq]) {
            a.push(value);
        }
        sums[0] += v[0];
        sums[1] += category_sum;
        sums[2] += cross_sum;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Validation("cannot estimate moments of an empty population".into()));
    }
    let n = count as f64;
    let qf = q as f64;
    Ok(MomentStats {
        x: sums[0] / n - c,
        y: sums[1] / (n * (qf - 1.0)) - c,
        z: sums[2] / (n * qf) - c,
        u: acc[3].mean,
        v: acc[4].mean,
        w: acc[5].mean,
        se: StandardErrors {
            x: acc[0].standard_error(),
            y: acc[1].standard_error(),
            z: acc[2].standard_error(),
            u: acc[3].standard_error(),
            v: acc[4].standard_error(),
            w: acc[5].standard_error(),
        },
    })
}

pub fn estimate_moments(pop: &Population) -> Result<MomentStats> {
    estimate_from_vectors(pop.q, pop.members())
}

/// Monte Carlo moments at depth `shape.n` from `samples` independent
/// broadcasts started at state 0.
pub fn mc_tree_moments(params: &ChannelParams, shape: TreeShape, samples: usize, seed: u64) -> Result<MomentStats> {
    if samples == 0 {
        return Err(Error::Validation("sample count must be >= 1".into()));
    }
    shape.leaf_count(crate::broadcast::DEFAULT_LEAF_CAP)?;
    let stream_domain = domain::TREE_SAMPLE ^ ((shape.n as u64) << 8) ^ shape.d as u64;
    let posteriors: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, stream_domain, i as u64);
            let config = broadcast_sample(params, shape, 0, &mut rng)?;
            Ok(posterior_root(params, shape, &config)?.into_inner())
        })
        .collect::<Result<_>>()?;
    estimate_from_vectors(params.q(), posteriors.iter().map(Vec::as_slice))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentRow {
    pub level: usize,
    pub stats: MomentStats,
}

pub type MomentSeries = Vec<MomentRow>;

/// Population dynamics from level 0 through `levels`, one row per level.
pub fn run_population(params: &ChannelParams, d: usize, size: usize, levels: usize, seed: u64) -> Result<MomentSeries> {
    let mut pop = init_population(params.q(), size)?;
    let mut series = Vec::with_capacity(levels + 1);
    series.push(MomentRow { level: 0, stats: estimate_moments(&pop)? });
    for _ in 0..levels {
        pop = evolve_level(&pop, params, d, seed)?;
        series.push(MomentRow { level: pop.level(), stats: estimate_moments(&pop)? });
    }
    Ok(series)
}

/// Full-tree Monte Carlo rows for levels `0..=max_n`.
pub fn run_tree_series(
    params: &ChannelParams,
    d: usize,
    max_n: usize,
    samples: usize,
    seed: u64,
) -> Result<MomentSeries> {
    (0..=max_n)
        .map(|n| Ok(MomentRow { level: n, stats: mc_tree_moments(params, TreeShape::new(d, n)?, samples, seed)? }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurvivalVerdict {
    Extinct,
    Surviving,
    Ambiguous,
}

impl SurvivalVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            SurvivalVerdict::Extinct => "EXTINCT",
            SurvivalVerdict::Surviving => "SURVIVING",
            SurvivalVerdict::Ambiguous => "AMBIGUOUS",
        }
    }
}

/// Thresholds for the extinction/survival classification of a series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalCriteria {
    pub x_floor: f64,
    pub x_ceiling: f64,
    pub window: usize,
}

impl SurvivalCriteria {
    /// `x_floor = 10/√P`, `x_ceiling = 30/√P`, window of 10 levels.
    pub fn for_population(size: usize) -> Self {
        let root = (size as f64).sqrt();
        Self { x_floor: 10.0 / root, x_ceiling: 30.0 / root, window: 10 }
    }
}

/// SURVIVING if `x̂ > x_ceiling` over the final `window` levels, EXTINCT if
/// `x̂ < x_floor` for `window` consecutive levels, AMBIGUOUS otherwise.
pub fn classify_survival(series: &[MomentRow], criteria: &SurvivalCriteria) -> SurvivalVerdict {
    let window = criteria.window.max(1);
    if series.len() >= window && series[series.len() - window..].iter().all(|r| r.stats.x > criteria.x_ceiling) {
        return SurvivalVerdict::Surviving;
    }
    let mut run = 0;
    for row in series {
        if row.stats.x < criteria.x_floor {
            run += 1;
            if run >= window {
                return SurvivalVerdict::Extinct;
            }
        } else {
            run = 0;
        }
    }
    SurvivalVerdict::Ambiguous
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationRow {
    pub level: usize,
    /// `u/x - 1/2q`
    pub u_ratio_deviation: f64,
    /// `w/x - 1/2q`
    pub w_ratio_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConcentrationReport {
    pub rows: Vec<ConcentrationRow>,
    /// Levels left out because `x̂ <= 10·se_x`.
    pub omitted: Vec<usize>,
}

/// Ratio deviations at every level whose `x̂` clears ten standard errors.
/// Exact rows (zero standard error) need `x > 0`.
pub fn concentration_diagnostics(series: &[MomentRow], q: usize) -> ConcentrationReport {
    let c = 1.0 / (2.0 * q as f64);
    let mut report = ConcentrationReport::default();
    for row in series {
        let s = &row.stats;
        if s.x > 10.0 * s.se.x && s.x > 0.0 {
            report.rows.push(ConcentrationRow {
                level: row.level,
                u_ratio_deviation: s.u / s.x - c,
                w_ratio_deviation: s.w / s.x - c,
            });
        } else {
            report.omitted.push(row.level);
        }
    }
    report
}

/// Settings for a population-dynamics threshold search in `λ1` at fixed `λ2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationSearch {
    pub q: usize,
    pub d: usize,
    pub lambda2: f64,
    pub bracket: (f64, f64),
    pub resolution: f64,
    pub population: usize,
    pub levels: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationThreshold {
    /// Smallest `λ1` observed SURVIVING.
    pub lambda1_star: f64,
    pub d_lambda1_star_sq: f64,
    pub below_ks: bool,
    /// Set when any probe returned AMBIGUOUS.
    pub ambiguous: bool,
    /// Upper end of the feasible `λ1` range used for the search.
    pub feasible_hi: f64,
    pub probes: Vec<(f64, SurvivalVerdict)>,
}

/// Largest `λ1` for which `(λ1, λ2)` is a valid channel: `(1 + λ2)/2`.
pub fn max_feasible_lambda1(lambda2: f64) -> f64 {
    (1.0 + lambda2) / 2.0
}

pub fn classify_channel(
    params: &ChannelParams,
    d: usize,
    size: usize,
    levels: usize,
    seed: u64,
) -> Result<(SurvivalVerdict, MomentSeries)> {
    let series = run_population(params, d, size, levels, seed)?;
    let verdict = classify_survival(&series, &SurvivalCriteria::for_population(size));
    Ok((verdict, series))
}

/// Bisection on `λ1`: SURVIVING moves the upper end down, EXTINCT and
/// AMBIGUOUS move the lower end up, so the reported `λ1*` is always a probe
/// that survived. The upper end is clipped to the feasible range.
pub fn popdyn_threshold(search: &PopulationSearch) -> Result<PopulationThreshold> {
    let (lo, hi) = search.bracket;
    if !(lo < hi) || search.resolution <= 0.0 {
        return Err(Error::Bracket(format!("invalid bracket ({lo}, {hi})")));
    }
    let feasible_hi = max_feasible_lambda1(search.lambda2);
    let hi = hi.min(feasible_hi);
    if hi <= lo {
        return Err(Error::Bracket(format!(
            "bracket lies above the feasible range: lambda1 <= {feasible_hi} for lambda2 = {}",
            search.lambda2
        )));
    }
    let probe = |lambda1: f64| -> Result<SurvivalVerdict> {
        let params = ChannelParams::from_eigenvalues(search.q, lambda1, search.lambda2)?;
        Ok(classify_channel(&params, search.d, search.population, search.levels, search.seed)?.0)
    };
    let mut probes = Vec::new();
    let lo_verdict = probe(lo)?;
    probes.push((lo, lo_verdict));
    let hi_verdict = probe(hi)?;
    probes.push((hi, hi_verdict));
    if hi_verdict != SurvivalVerdict::Surviving || lo_verdict == SurvivalVerdict::Surviving {
        return Err(Error::Bracket(format!(
            "need a non-surviving lower end and a surviving upper end, got {} at {lo} and {} at {hi}",
            lo_verdict.as_str(),
            hi_verdict.as_str()
        )));
    }
    let mut ambiguous = lo_verdict == SurvivalVerdict::Ambiguous;
    let (mut a, mut b) = (lo, hi);
    while b - a > search.resolution {
        let mid = 0.5 * (a + b);
        let verdict = probe(mid)?;
        probes.push((mid, verdict));
        match verdict {
            SurvivalVerdict::Surviving => b = mid,
            SurvivalVerdict::Extinct => a = mid,
            SurvivalVerdict::Ambiguous => {
                ambiguous = true;
                a = mid;
            }
        }
    }
    let d_sq = search.d as f64 * b * b;
    Ok(PopulationThreshold {
        lambda1_star: b,
        d_lambda1_star_sq: d_sq,
        below_ks: d_sq < 1.0,
        ambiguous,
        feasible_hi,
        probes,
    })
}
