//! Step measures, convolution powers and direct estimators of entropy and
//! escape rate.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::group::{Element, Family, Group, DEFAULT_CAP};
use crate::linalg::xlogx;
use crate::tree::TreeWalk;

/// Default pruning threshold for convolution powers.
pub const DEFAULT_PRUNE_EPS: f64 = 1e-15;
/// Measures whose total differs from 1 by more than this are rejected.
pub const DEFAULT_DRIFT_TOL: f64 = 1e-6;

/// A probability measure with finite support `F` on a group.
#[derive(Clone, Debug, PartialEq)]
pub struct StepMeasure {
    group: Group,
    support: Vec<Element>,
    probs: Vec<f64>,
}

impl StepMeasure {
    /// Builds a measure from `(element, probability)` pairs. Totals within
    /// [`DEFAULT_DRIFT_TOL`] of 1 are renormalized.
    pub fn new(group: Group, pairs: Vec<(Element, f64)>) -> Result<Self> {
        Self::with_drift_tolerance(group, pairs, DEFAULT_DRIFT_TOL)
    }

    pub fn with_drift_tolerance(group: Group, mut pairs: Vec<(Element, f64)>, drift_tol: f64) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidMeasure("empty support".into()));
        }
        for (x, w) in &pairs {
            group.check(x)?;
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::InvalidMeasure(format!(
                    "probability of {} must be positive, got {w}",
                    group.format(x)
                )));
            }
        }
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidMeasure("duplicate support element".into()));
        }
        let total: f64 = pairs.iter().map(|(_, w)| w).sum();
        let drift = (total - 1.0).abs();
        if drift > drift_tol {
            return Err(Error::InvalidMeasure(format!(
                "probabilities sum to {total}, drift {drift:.3e} exceeds tolerance {drift_tol:.1e}"
            )));
        }
        if drift > 1e-9 {
            log::info!("renormalizing step measure (sum {total})");
        }
        let (support, probs): (Vec<_>, Vec<_>) = pairs.into_iter().map(|(x, w)| (x, w / total)).unzip();
        Ok(StepMeasure { group, support, probs })
    }

    /// Uniform measure on the generating set.
    pub fn uniform(group: Group) -> Self {
        let gens = group.generators();
        let w = 1.0 / gens.len() as f64;
        let pairs = gens.into_iter().map(|x| (x, w)).collect();
        Self::new(group, pairs).expect("uniform measure is valid")
    }

    /// Parses `(word, probability)` pairs.
    pub fn from_words(group: Group, pairs: &[(&str, f64)]) -> Result<Self> {
        let parsed = pairs
            .iter()
            .map(|(s, w)| group.parse(s).map(|x| (x, *w)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(group, parsed)
    }

    /// Same support, new weights (in support order).
    pub fn reweighted(&self, probs: &[f64]) -> Result<Self> {
        if probs.len() != self.probs.len() {
            return Err(Error::InvalidMeasure(format!(
                "expected {} weights, got {}",
                self.probs.len(),
                probs.len()
            )));
        }
        Self::new(self.group.clone(), self.support.iter().cloned().zip(probs.iter().copied()).collect())
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn support(&self) -> &[Element] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Element, f64)> {
        self.support.iter().zip(self.probs.iter().copied())
    }

    pub fn prob_of(&self, x: &Element) -> f64 {
        self.support.binary_search(x).map(|i| self.probs[i]).unwrap_or(0.0)
    }

    pub fn min_prob(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `max{|x| : x ∈ F}`.
    pub fn step_radius(&self) -> usize {
        self.support.iter().map(|x| self.group.len(x)).max().unwrap_or(0)
    }

    /// Support contained in `S ∪ {e}` on a tree-like family.
    pub fn is_nearest_neighbor(&self) -> bool {
        self.group.is_tree_like() && self.step_radius() <= 1
    }

    pub fn is_symmetric(&self) -> bool {
        self.iter()
            .all(|(x, w)| (self.prob_of(&self.group.inv(x)) - w).abs() <= 1e-12 * w.max(1.0))
    }

    /// `Σ x p(x)` on the integers.
    pub fn drift(&self) -> Option<f64> {
        match self.group.family() {
            Family::Integer => Some(
                self.iter()
                    .map(|(x, w)| match x {
                        Element::Int(v) => *v as f64 * w,
                        _ => 0.0,
                    })
                    .sum(),
            ),
            _ => None,
        }
    }

    /// Reflected measure `p̌(x) = p(x⁻¹)`.
    pub fn reflected(&self) -> Self {
        let pairs = self.iter().map(|(x, w)| (self.group.inv(x), w)).collect();
        Self::new(self.group.clone(), pairs).expect("reflection preserves validity")
    }

    /// Checks that `∪_{n≤max_power} Fⁿ ⊇ B(radius)`.
    pub fn generates(&self, max_power: usize, radius: usize) -> Result<bool> {
        self.group.generates_ball(&self.support, max_power, radius, DEFAULT_CAP)
    }
}

/// Finitely supported mass function with tracked pruning defect.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseDistribution {
    masses: Vec<(Element, f64)>,
    defect: f64,
    step: usize,
}

impl SparseDistribution {
    /// The point mass at the identity (`p^{(0)}`).
    pub fn delta_e(group: &Group) -> Self {
        SparseDistribution {
            masses: vec![(group.identity(), 1.0)],
            defect: 0.0,
            step: 0,
        }
    }

    pub fn masses(&self) -> &[(Element, f64)] {
        &self.masses
    }

    pub fn defect(&self) -> f64 {
        self.defect
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn support_len(&self) -> usize {
        self.masses.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().map(|(_, m)| m).sum()
    }

    pub fn get(&self, x: &Element) -> f64 {
        self.masses
            .binary_search_by(|(y, _)| y.cmp(x))
            .map(|i| self.masses[i].1)
            .unwrap_or(0.0)
    }

    /// `−Σ m ln m`.
    pub fn entropy(&self) -> f64 {
        -self.masses.iter().map(|(_, m)| xlogx(*m)).sum::<f64>()
    }

    /// `Σ |x| m(x)`.
    pub fn mean_length(&self, group: &Group) -> f64 {
        self.masses.iter().map(|(x, m)| group.len(x) as f64 * m).sum()
    }

    pub fn max_length(&self, group: &Group) -> usize {
        self.masses.iter().map(|(x, _)| group.len(x)).max().unwrap_or(0)
    }

    /// One convolution step `d ⋆ p` followed by pruning of atoms below
    /// `prune_eps`.
    pub fn convolve(&self, p: &StepMeasure, prune_eps: f64, cap: usize, exec: Exec) -> Result<Self> {
        if !(prune_eps >= 0.0) {
            return Err(Error::InvalidArgument("prune_eps must be nonnegative".into()));
        }
        if let Some((x, _)) = self.masses.first() {
            p.group.check(x)?;
        }
        let raw = self.masses.len().saturating_mul(p.support.len());
        if raw > cap.saturating_mul(p.support.len()) {
            return Err(Error::SupportCap { size: raw, cap });
        }
        const CHUNK: usize = 2048;
        let chunks: Vec<&[(Element, f64)]> = self.masses.chunks(CHUNK).collect();
        let parts = exec::map_collect(exec, &chunks, |chunk| {
            let mut out = Vec::with_capacity(chunk.len() * p.support.len());
            for (x, m) in chunk.iter() {
                for (f, w) in p.iter() {
                    out.push((p.group.mul_unchecked(x, f), m * w));
                }
            }
            out
        });
        let mut all: Vec<(Element, f64)> = parts.into_iter().flatten().collect();
        // Stable sort keeps contributions to each atom in a fixed order, so
        // the sums below do not depend on the thread count.
        exec::sort_by_key(exec, &mut all, |(x, _)| x.clone());
        let mut merged: Vec<(Element, f64)> = Vec::new();
        for (x, m) in all {
            match merged.last_mut() {
                Some((y, acc)) if *y == x => *acc += m,
                _ => merged.push((x, m)),
            }
        }
        let mut defect = self.defect;
        if prune_eps > 0.0 {
            let mut pruned = 0.0;
            merged.retain(|(_, m)| {
                if *m < prune_eps {
                    pruned += m;
                    false
                } else {
                    true
                }
            });
            defect += pruned;
        }
        if merged.len() > cap {
            return Err(Error::SupportCap { size: merged.len(), cap });
        }
        Ok(SparseDistribution {
            masses: merged,
            defect,
            step: self.step + 1,
        })
    }
}

/// Sequence of finite-`n` values with a first-difference extrapolation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateSeries {
    /// Values for `n = 0..=N`.
    pub values: Vec<f64>,
    pub extrapolated: f64,
    pub error_bar: f64,
}

impl EstimateSeries {
    /// `extrapolated = v_N − v_{N−1}`; the error bar is the spread of the last
    /// three differences plus `defect_term`.
    pub fn from_values(values: Vec<f64>, defect_term: f64) -> Self {
        let n = values.len();
        assert!(n >= 3, "need at least n = 2");
        let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
        let tail = &diffs[diffs.len().saturating_sub(3)..];
        let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
        EstimateSeries {
            extrapolated: diffs[diffs.len() - 1],
            error_bar: (hi - lo) + defect_term,
            values,
        }
    }

    pub fn last(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// `v_n / n` for `n ≥ 1`.
    pub fn fekete(&self, n: usize) -> f64 {
        self.values[n] / n as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesMethod {
    SparseConvolution,
    /// Exact lumped series for nearest-neighbour walks on tree-like groups.
    LumpedTree,
}

/// `H_n` and `L_n` for `n ≤ N`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WalkSeries {
    pub entropy: EstimateSeries,
    pub escape: EstimateSeries,
    pub defect: Vec<f64>,
    pub method: SeriesMethod,
}

/// Computes `H_n = −Σ p^{(n)} ln p^{(n)}` and `L_n = Σ |x| p^{(n)}(x)` for
/// `n = 0..=n_max`.
///
/// Nearest-neighbour walks on free groups and free products go through the
/// lumped series of [`TreeWalk`], which is exact and has no support cap;
/// everything else is convolved atom by atom.
pub fn entropy_escape_sequences(p: &StepMeasure, n_max: usize, prune_eps: f64, exec: Exec) -> Result<WalkSeries> {
    if n_max < 2 {
        return Err(Error::InvalidArgument("N must be at least 2".into()));
    }
    if p.is_nearest_neighbor() {
        let tw = TreeWalk::new(p)?;
        let lumped = tw.sequences(n_max, exec)?;
        let defect: Vec<f64> = lumped.mass.iter().map(|m| (1.0 - m).max(0.0)).collect();
        let d = *defect.last().unwrap();
        return Ok(WalkSeries {
            entropy: EstimateSeries::from_values(lumped.entropy, entropy_defect_term(d, n_max, p)),
            escape: EstimateSeries::from_values(lumped.escape, d * (n_max as f64)),
            defect,
            method: SeriesMethod::LumpedTree,
        });
    }
    sparse_sequences(p, n_max, prune_eps, DEFAULT_CAP, exec)
}

/// The sparse-convolution route, available for any measure.
pub fn sparse_sequences(p: &StepMeasure, n_max: usize, prune_eps: f64, cap: usize, exec: Exec) -> Result<WalkSeries> {
    if n_max < 2 {
        return Err(Error::InvalidArgument("N must be at least 2".into()));
    }
    let g = p.group();
    let mut d = SparseDistribution::delta_e(g);
    let mut h = vec![0.0];
    let mut l = vec![0.0];
    let mut defect = vec![0.0];
    for _ in 0..n_max {
        d = d.convolve(p, prune_eps, cap, exec)?;
        h.push(d.entropy());
        l.push(d.mean_length(g));
        defect.push(d.defect());
    }
    let dn = d.defect();
    let r = p.step_radius() as f64;
    Ok(WalkSeries {
        entropy: EstimateSeries::from_values(h, entropy_defect_term(dn, n_max, p)),
        escape: EstimateSeries::from_values(l, dn * r * n_max as f64),
        defect,
        method: SeriesMethod::SparseConvolution,
    })
}

/// Bound on the entropy carried by pruned mass: at most `defect` spread over
/// `|F|^N` atoms.
fn entropy_defect_term(defect: f64, n: usize, p: &StepMeasure) -> f64 {
    if defect <= 0.0 {
        return 0.0;
    }
    defect * (n as f64 * (p.support().len() as f64).ln() - defect.ln() + 1.0)
}

/// Random generator for path `index` of a run with `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Current position of a sampled walk.
#[derive(Clone, Debug)]
pub struct Walker<'a> {
    p: &'a StepMeasure,
    sampler: WeightedIndex<f64>,
    pos: Element,
}

impl<'a> Walker<'a> {
    pub fn new(p: &'a StepMeasure) -> Self {
        Walker {
            p,
            sampler: WeightedIndex::new(p.probs()).expect("probabilities are positive"),
            pos: p.group().identity(),
        }
    }

    pub fn position(&self) -> &Element {
        &self.pos
    }

    /// Draws one increment and moves.
    pub fn step<R: Rng>(&mut self, rng: &mut R) -> usize {
        let k = self.sampler.sample(rng);
        let g = self.p.group();
        match (&mut self.pos, &self.p.support()[k]) {
            (Element::Int(a), Element::Int(b)) => *a += b,
            (Element::Word(w), Element::Word(f)) => {
                for &l in f {
                    g.push_letter(w, l);
                }
            }
            _ => unreachable!("measure and walker share the group"),
        }
        k
    }
}

/// `X_0 = e, X_k = X_{k−1} ω_k` with i.i.d. increments of law `p`.
pub fn sample_path(p: &StepMeasure, n: usize, seed: u64) -> Vec<Element> {
    let mut rng = path_rng(seed, 0);
    let mut walker = Walker::new(p);
    let mut out = Vec::with_capacity(n + 1);
    out.push(walker.position().clone());
    for _ in 0..n {
        walker.step(&mut rng);
        out.push(walker.position().clone());
    }
    out
}

/// Endpoints `X_n` of `paths` independent walks; path `i` uses stream `i` of
/// `seed`, so the result does not depend on the execution mode.
pub fn sample_endpoints(p: &StepMeasure, n: usize, paths: usize, seed: u64, exec: Exec) -> Vec<Element> {
    exec::map_range(exec, paths, |i| {
        let mut rng = path_rng(seed, i as u64);
        let mut walker = Walker::new(p);
        for _ in 0..n {
            walker.step(&mut rng);
        }
        walker.pos
    })
}

/// Monte Carlo mean and standard error of `|X_n|/n`.
pub fn monte_carlo_escape(p: &StepMeasure, n: usize, paths: usize, seed: u64, exec: Exec) -> (f64, f64) {
    let g = p.group();
    let xs: Vec<f64> = sample_endpoints(p, n, paths, seed, exec)
        .iter()
        .map(|x| g.len(x) as f64 / n as f64)
        .collect();
    let m = xs.iter().sum::<f64>() / paths as f64;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (paths as f64 - 1.0).max(1.0);
    (m, (var / paths as f64).sqrt())
}
