//! Finite regions of the group and the killed Markov chains living on them.
//!
//! A [`Region`] is a finite set of elements together with the transition
//! table of a step measure. Steps that leave the region land on *exterior*
//! elements, which are recorded (deduplicated) so that solvers can assign
//! them boundary values. Two solvers are provided:
//!
//! * [`Region::harmonic`]: bounds on a harmonic function with prescribed
//!   values on fixed nodes, computed by symmetric Gauss–Seidel sweeps run
//!   once from below (exterior values from `lower`) and once from above
//!   (exterior values from `upper`). For nonnegative data both iterations
//!   are monotone, so every iterate is a valid bound.
//! * [`Region::propagate`]: forward evolution of a mass vector with killing
//!   at the boundary, for truncated Green functions.

use std::collections::{HashMap, HashSet, VecDeque};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::group::{Element, Group};
use crate::tree::TreeWalk;
use crate::walk::StepMeasure;

/// Default cap on region sizes.
pub const REGION_CAP: usize = 2_000_000;
const NONE: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub struct Region {
    group: Group,
    points: Vec<Element>,
    index: HashMap<Element, u32>,
    probs: Vec<f64>,
    support: Vec<Element>,
    /// `next[i·k + j]` is the node reached from `i` by the `j`-th support
    /// element, or `n + e` for exterior element `e`.
    next: Vec<u32>,
    /// `prev[i·k + j]` is the node `i · f_j⁻¹`, or `NONE`.
    prev: Vec<u32>,
    exterior: Vec<Element>,
}

/// Lower and upper bounds on a harmonic function, one entry per node.
#[derive(Clone, Debug)]
pub struct HarmonicBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

impl HarmonicBounds {
    pub fn at(&self, i: usize) -> (f64, f64) {
        (self.lower[i], self.upper[i])
    }
}

/// Per-step values at selected targets of a killed forward evolution.
#[derive(Clone, Debug)]
pub struct Propagation {
    /// `values[t][n]`: mass at target `t` after `n` steps.
    pub values: Vec<Vec<f64>>,
    /// Mass killed at step `n` (leaving the region).
    pub exit: Vec<f64>,
}

impl Region {
    /// All elements within Cayley-graph distance `width` of one of `seeds`
    /// that satisfy `keep`.
    pub fn around<F>(p: &StepMeasure, seeds: &[Element], width: usize, cap: usize, keep: F) -> Result<Self>
    where
        F: Fn(&Element) -> bool + Sync,
    {
        let g = p.group();
        let gens = g.generators();
        let mut seen: HashSet<Element> = HashSet::new();
        let mut order: Vec<Element> = Vec::new();
        // Each point remembers the seed it was reached from; points are then
        // ordered by seed so that sweeps run along the seed sequence.
        let mut queue: VecDeque<(Element, usize, usize)> = VecDeque::new();
        let mut owner: Vec<usize> = Vec::new();
        for (k, s) in seeds.iter().enumerate() {
            g.check(s)?;
            if seen.insert(s.clone()) {
                queue.push_back((s.clone(), 0, k));
            }
        }
        while let Some((x, d, k)) = queue.pop_front() {
            order.push(x.clone());
            owner.push(k);
            if order.len() > cap {
                return Err(Error::CapExceeded { needed: order.len(), cap });
            }
            if d == width {
                continue;
            }
            for s in &gens {
                let y = g.mul_unchecked(&x, s);
                if seen.insert(y.clone()) {
                    queue.push_back((y, d + 1, k));
                }
            }
        }
        let mut perm: Vec<usize> = (0..order.len()).collect();
        perm.sort_by_key(|&i| owner[i]);
        let mut slots: Vec<Option<Element>> = order.into_iter().map(Some).collect();
        let order: Vec<Element> = perm.iter().map(|&i| slots[i].take().unwrap()).collect();
        let flags = exec::map_collect(Exec::Parallel, &order, |x| keep(x));
        let points: Vec<Element> = order.into_iter().zip(flags).filter(|(_, k)| *k).map(|(x, _)| x).collect();
        Self::from_points(p, points)
    }

    /// Region on an explicit point list (duplicates removed, order kept).
    pub fn from_points(p: &StepMeasure, points: Vec<Element>) -> Result<Self> {
        let g = p.group().clone();
        let mut index = HashMap::with_capacity(points.len());
        let mut pts = Vec::with_capacity(points.len());
        for x in points {
            if !index.contains_key(&x) {
                index.insert(x.clone(), pts.len() as u32);
                pts.push(x);
            }
        }
        if pts.len() >= (NONE / 2) as usize {
            return Err(Error::CapExceeded { needed: pts.len(), cap: (NONE / 2) as usize });
        }
        let support = p.support().to_vec();
        let inv_support: Vec<Element> = support.iter().map(|f| g.inv(f)).collect();
        let k = support.len();
        let n = pts.len();
        let rows = exec::map_collect(Exec::Parallel, &pts, |x| {
            let fwd: Vec<std::result::Result<u32, Element>> = support
                .iter()
                .map(|f| {
                    let y = g.mul_unchecked(x, f);
                    index.get(&y).copied().ok_or(y)
                })
                .collect();
            let back: Vec<u32> = inv_support
                .iter()
                .map(|f| index.get(&g.mul_unchecked(x, f)).copied().unwrap_or(NONE))
                .collect();
            (fwd, back)
        });
        let mut next = Vec::with_capacity(n * k);
        let mut prev = Vec::with_capacity(n * k);
        let mut ext_index: HashMap<Element, u32> = HashMap::new();
        let mut exterior = Vec::new();
        for (fwd, back) in rows {
            for t in fwd {
                next.push(match t {
                    Ok(i) => i,
                    Err(y) => {
                        let e = match ext_index.get(&y) {
                            Some(&e) => e,
                            None => {
                                let e = exterior.len() as u32;
                                ext_index.insert(y.clone(), e);
                                exterior.push(y);
                                e
                            }
                        };
                        n as u32 + e
                    }
                });
            }
            prev.extend(back);
        }
        Ok(Region {
            group: g,
            points: pts,
            index,
            probs: p.probs().to_vec(),
            support,
            next,
            prev,
            exterior,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Element] {
        &self.points
    }

    pub fn exterior(&self) -> &[Element] {
        &self.exterior
    }

    pub fn index_of(&self, x: &Element) -> Option<usize> {
        self.index.get(x).map(|&i| i as usize)
    }

    pub fn contains(&self, x: &Element) -> bool {
        self.index.contains_key(x)
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    /// Node indices reachable in one step from `i` (interior only).
    pub fn successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let k = self.support.len();
        let n = self.points.len() as u32;
        self.next[i * k..(i + 1) * k].iter().filter(move |&&t| t < n).map(|&t| t as usize)
    }

    /// Exterior elements reachable in one step from `i`.
    pub fn exterior_successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let k = self.support.len();
        let n = self.points.len() as u32;
        self.next[i * k..(i + 1) * k].iter().filter(move |&&t| t >= n).map(move |&t| (t - n) as usize)
    }

    /// Solves `h(i) = Σ_j p_j h(i f_j)` on free nodes, with `h = value` on
    /// the `fixed` nodes and exterior values from `ext_lower` / `ext_upper`.
    ///
    /// The lower iteration starts from 0 and the upper one from
    /// `max(1, ext_upper, fixed)`; both stop once the relative change per
    /// sweep drops below `tol` or after `max_sweeps`.
    pub fn harmonic(
        &self,
        fixed: &[(usize, f64)],
        ext_lower: &[f64],
        ext_upper: &[f64],
        tol: f64,
        max_sweeps: usize,
    ) -> Result<HarmonicBounds> {
        let n = self.points.len();
        if ext_lower.len() != self.exterior.len() || ext_upper.len() != self.exterior.len() {
            return Err(Error::IndexMismatch(ext_lower.len(), self.exterior.len()));
        }
        let mut is_fixed = vec![false; n];
        let mut lower = vec![0.0; n];
        let ceiling = ext_upper
            .iter()
            .chain(fixed.iter().map(|(_, v)| v))
            .copied()
            .fold(1.0_f64, f64::max);
        let mut upper = vec![ceiling; n];
        for &(i, v) in fixed {
            is_fixed[i] = true;
            lower[i] = v;
            upper[i] = v;
        }
        let (sl, cl) = self.sweep_until(&mut lower, &is_fixed, ext_lower, tol, max_sweeps);
        let (su, cu) = self.sweep_until(&mut upper, &is_fixed, ext_upper, tol, max_sweeps);
        for i in 0..n {
            if upper[i] < lower[i] - 1e-9 * upper[i].abs().max(1e-300) {
                return Err(Error::InconsistentTruncation {
                    lower: lower[i],
                    upper: upper[i],
                });
            }
        }
        Ok(HarmonicBounds {
            lower,
            upper,
            sweeps: sl.max(su),
            converged: cl && cu,
        })
    }

    fn sweep_until(&self, h: &mut [f64], is_fixed: &[bool], ext: &[f64], tol: f64, max_sweeps: usize) -> (usize, bool) {
        let n = h.len();
        let k = self.support.len();
        let relax = |h: &mut [f64], i: usize| -> f64 {
            let mut v = 0.0;
            for j in 0..k {
                let t = self.next[i * k + j] as usize;
                v += self.probs[j] * if t < n { h[t] } else { ext[t - n] };
            }
            let old = h[i];
            h[i] = v;
            let d = (v - old).abs();
            if d == 0.0 {
                0.0
            } else {
                d / v.abs().max(old.abs())
            }
        };
        for sweep in 1..=max_sweeps {
            let mut change: f64 = 0.0;
            for i in 0..n {
                if !is_fixed[i] {
                    change = change.max(relax(h, i));
                }
            }
            for i in (0..n).rev() {
                if !is_fixed[i] {
                    change = change.max(relax(h, i));
                }
            }
            if change <= tol {
                return (sweep, true);
            }
        }
        (max_sweeps, false)
    }

    /// Evolves `δ_source` for `steps` steps with killing on exit.
    pub fn propagate(&self, source: usize, targets: &[usize], steps: usize, exec: Exec) -> Propagation {
        let n = self.points.len();
        let k = self.support.len();
        let mut cur = vec![0.0; n];
        cur[source] = 1.0;
        let mut values: Vec<Vec<f64>> = targets.iter().map(|&t| vec![cur[t]]).collect();
        let mut exit = vec![0.0];
        let exit_prob: Vec<f64> = (0..n)
            .map(|i| {
                (0..k)
                    .filter(|&j| self.next[i * k + j] as usize >= n)
                    .map(|j| self.probs[j])
                    .sum()
            })
            .collect();
        for _ in 0..steps {
            let killed: f64 = cur.iter().zip(&exit_prob).map(|(a, b)| a * b).sum();
            let new = exec::map_range(exec, n, |i| {
                let mut v = 0.0;
                for j in 0..k {
                    let s = self.prev[i * k + j];
                    if s != NONE {
                        v += self.probs[j] * cur[s as usize];
                    }
                }
                v
            });
            cur = new;
            for (vals, &t) in values.iter_mut().zip(targets) {
                vals.push(cur[t]);
            }
            exit.push(killed);
        }
        Propagation { values, exit }
    }
}

/// Exponential decay model `u(x, y) ≤ c · exp(−δ d(x, y))` for hitting
/// probabilities, with an upper bound on `G(e)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayModel {
    pub c: f64,
    pub delta: f64,
    pub green_e_upper: f64,
    /// True when the constants come from exact tree formulas.
    pub exact: bool,
}

impl DecayModel {
    pub fn bound(&self, d: usize) -> f64 {
        (self.c * (-self.delta * d as f64).exp()).min(1.0)
    }

    /// Exact constants for nearest-neighbour tree walks; otherwise a fit of
    /// `max_{|z|=d} u(z, e)` over `d < radius` from a harmonic solve in
    /// `B(radius)`, inflated by a factor 2.
    pub fn fit(p: &StepMeasure, radius: usize) -> Result<Self> {
        if p.is_nearest_neighbor() {
            let tw = TreeWalk::new(p)?;
            let qmax = tw.hitting_all().iter().copied().fold(0.0, f64::max);
            return Ok(DecayModel {
                c: 1.0,
                delta: -qmax.ln(),
                green_e_upper: tw.green_e(),
                exact: true,
            });
        }
        let g = p.group();
        let e = g.identity();
        let region = Region::around(p, std::slice::from_ref(&e), radius, REGION_CAP, |_| true)?;
        let origin = region.index_of(&e).unwrap();
        let zeros = vec![0.0; region.exterior.len()];
        let lo = region.harmonic(&[(origin, 1.0)], &zeros, &zeros, 1e-12, 10_000)?;
        let mut max_by_d = vec![0.0_f64; radius + 1];
        for (i, x) in region.points.iter().enumerate() {
            let d = g.len(x);
            max_by_d[d] = max_by_d[d].max(lo.lower[i]);
        }
        let usable = radius.saturating_sub(1).max(2);
        let xs: Vec<f64> = (1..usable).filter(|&d| max_by_d[d] > 0.0).map(|d| d as f64).collect();
        let ys: Vec<f64> = (1..usable)
            .filter(|&d| max_by_d[d] > 0.0)
            .map(|d| max_by_d[d].ln())
            .collect();
        let delta = crate::linalg::linear_fit(&xs, &ys).map(|f| (-f.slope).max(0.0)).unwrap_or(0.0);
        let c = 2.0
            * (0..usable)
                .map(|d| max_by_d[d] * (delta * d as f64).exp())
                .fold(1.0_f64, f64::max);
        let model = DecayModel {
            c,
            delta,
            green_e_upper: f64::INFINITY,
            exact: false,
        };
        // Upper solve with the fitted exterior values bounds the return
        // probability from above.
        let ext_hi: Vec<f64> = region.exterior.iter().map(|z| model.bound(g.len(z))).collect();
        let hi = region.harmonic(&[(origin, 1.0)], &zeros, &ext_hi, 1e-12, 10_000)?;
        let ret: f64 = p
            .iter()
            .map(|(f, w)| w * region.index_of(f).map(|i| hi.upper[i]).unwrap_or(1.0))
            .sum();
        let green_e_upper = if ret < 1.0 { 1.0 / (1.0 - ret) } else { f64::INFINITY };
        Ok(DecayModel { green_e_upper, ..model })
    }
}
