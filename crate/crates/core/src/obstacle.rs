//! Obstacles along geodesic rays, first-visit matrices between their
//! shells, and the contraction chain that computes boundary Martin kernels.
//!
//! An obstacle centred at `c` on a ray `γ` with scale `M` consists of
//!
//! ```text
//! U0⁻ = {z : d(z, γ(c−2M)) < d(z, γ(c))}
//! U0  = {z : d(z, γ(c−2M)) < d(z, γ(c+4r))}
//! U1⁻ = {z : d(z, γ(c))    < d(z, γ(c+2M))}
//! U1  = {z : d(z, γ(c))    < d(z, γ(c+2M+4r))}
//! ```
//!
//! with shells `V0 = U0 ∖ U0⁻` and `V1 ⊂ U1 ∖ U1⁻` (the active part). Every
//! set is enumerated inside a tube of fixed width around the directing
//! segment; hitting quantities come from region solves and carry
//! lower/upper bounds.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::cone::{operator_diameter, theta, ConeVector, PositiveOperator};
use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::green::{aitken, GreenEngine, Interval, KernelEstimate};
use crate::group::{Element, Family, Group, Letter};
use crate::linalg::linear_fit;
use crate::region::{HarmonicBounds, Region};
use crate::walk::{path_rng, StepMeasure};

/// Cap on explicit ball enumeration in the geometry checks.
const GEOMETRY_BALL_CAP: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Set {
    U0Minus,
    U0,
    U1Minus,
    U1,
}

#[derive(Clone, Debug)]
pub struct Obstacle {
    group: Group,
    ray: Vec<Letter>,
    centre: usize,
    m: usize,
    r: usize,
    width: usize,
    /// `γ(c−2M), γ(c), γ(c+4r), γ(c+2M), γ(c+2M+4r)`.
    anchors: [Element; 5],
    /// Tube ∩ U1.
    region: Region,
    v0: Vec<usize>,
    v1: Vec<usize>,
    active: Vec<usize>,
    centre_idx: usize,
}

/// Shell sizes and geometry checks, for reports.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObstacleSummary {
    pub centre: usize,
    pub m: usize,
    pub r: usize,
    pub width: usize,
    pub points: usize,
    pub v0: usize,
    pub v1: usize,
    pub active: usize,
}

fn prefix(ray: &[Letter], n: usize) -> Element {
    Element::Word(ray[..n].to_vec())
}

impl Obstacle {
    /// Obstacle centred at `γ(centre)` with scale `m`, enumerated within
    /// distance `width` of the segment `γ[centre−2M, centre+2M+4r]`.
    pub fn build(p: &StepMeasure, ray: &[Letter], centre: usize, m: usize, width: usize) -> Result<Self> {
        let g = p.group().clone();
        if matches!(g.family(), Family::Integer) {
            return Err(Error::Unsupported("obstacles are built on word groups".into()));
        }
        let r = p.step_radius().max(1);
        if m < 12 * r {
            return Err(Error::InvalidArgument(format!("scale {m} below 12r = {}", 12 * r)));
        }
        if centre < 2 * m {
            return Err(Error::InvalidArgument("centre must be at least 2M".into()));
        }
        let end = centre + 2 * m + 4 * r;
        if ray.len() < end {
            return Err(Error::InvalidArgument(format!("ray of length {} shorter than {end}", ray.len())));
        }
        let word = Element::Word(ray[..end].to_vec());
        if g.check(&word).is_err() {
            return Err(Error::NotGeodesic("ray letters must form a normal-form word".into()));
        }
        let anchors = [
            prefix(ray, centre - 2 * m),
            prefix(ray, centre),
            prefix(ray, centre + 4 * r),
            prefix(ray, centre + 2 * m),
            prefix(ray, centre + 2 * m + 4 * r),
        ];
        let seeds: Vec<Element> = (centre - 2 * m..=end).map(|n| prefix(ray, n)).collect();
        let probe = Probe {
            group: &g,
            anchors: &anchors,
        };
        let region = Region::around(p, &seeds, width, crate::region::REGION_CAP, |z| probe.contains(Set::U1, z))?;
        let mut v0 = Vec::new();
        let mut v1 = Vec::new();
        for (i, z) in region.points().iter().enumerate() {
            let sets = probe.sets(z);
            // Nesting U0⁻ ⊂ U0 ⊂ U1⁻ ⊂ U1.
            if (sets[0] && !sets[1]) || (sets[1] && !sets[2]) || (sets[2] && !sets[3]) {
                return Err(Error::NotGeodesic(format!("obstacle nesting fails at {}", g.format(z))));
            }
            if sets[1] && !sets[0] {
                v0.push(i);
            }
            if !sets[2] {
                v1.push(i);
            }
        }
        let centre_idx = region.index_of(&anchors[1]).unwrap();
        let mut obs = Obstacle {
            group: g,
            ray: ray.to_vec(),
            centre,
            m,
            r,
            width,
            anchors,
            region,
            v0,
            v1,
            active: Vec::new(),
            centre_idx,
        };
        obs.active = obs.find_active();
        Ok(obs)
    }

    fn probe(&self) -> Probe<'_> {
        Probe {
            group: &self.group,
            anchors: &self.anchors,
        }
    }

    pub fn contains(&self, set: Set, z: &Element) -> bool {
        self.probe().contains(set, z)
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn ray(&self) -> &[Letter] {
        &self.ray
    }

    pub fn centre(&self) -> usize {
        self.centre
    }

    pub fn scale(&self) -> usize {
        self.m
    }

    pub fn step_radius(&self) -> usize {
        self.r
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn centre_point(&self) -> &Element {
        &self.anchors[1]
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn v0_points(&self) -> Vec<Element> {
        self.v0.iter().map(|&i| self.region.points()[i].clone()).collect()
    }

    /// All enumerated points of `U1 ∖ U1⁻`.
    pub fn v1_points(&self) -> Vec<Element> {
        self.v1.iter().map(|&i| self.region.points()[i].clone()).collect()
    }

    pub fn active_points(&self) -> Vec<Element> {
        self.active.iter().map(|&i| self.region.points()[i].clone()).collect()
    }

    pub fn summary(&self) -> ObstacleSummary {
        ObstacleSummary {
            centre: self.centre,
            m: self.m,
            r: self.r,
            width: self.width,
            points: self.region.len(),
            v0: self.v0.len(),
            v1: self.v1.len(),
            active: self.active.len(),
        }
    }

    /// Points of `U1 ∖ U1⁻` reachable from `γ(c)` by a walk that stays in
    /// `U1⁻` until its last step.
    fn find_active(&self) -> Vec<usize> {
        let n = self.region.len();
        let in_v1: Vec<bool> = {
            let mut f = vec![false; n];
            for &i in &self.v1 {
                f[i] = true;
            }
            f
        };
        let mut seen = vec![false; n];
        let mut hit = vec![false; n];
        let mut stack = vec![self.centre_idx];
        seen[self.centre_idx] = true;
        while let Some(i) = stack.pop() {
            for j in self.region.successors(i) {
                if in_v1[j] {
                    hit[j] = true;
                } else if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        self.v1.iter().copied().filter(|&i| hit[i]).collect()
    }

    /// Checks `z ∈ U0⁻ ⇒ B(z, r) ⊂ U0` and `z ∈ U0 ⇒ B(z, M−3r) ⊂ U1⁻` on
    /// every enumerated point. The comparison functions are 2-Lipschitz, so
    /// a margin certificate settles most points; the rest are checked by
    /// enumerating the ball. Returns the number of explicit ball checks.
    pub fn verify_geometry(&self) -> Result<usize> {
        let g = &self.group;
        let [a0, c, c4, c2m, _] = &self.anchors;
        let radius_outer = self.m - 3 * self.r;
        let flags = exec::map_collect(Exec::Parallel, self.region.points(), |z| -> Result<usize> {
            let mut explicit = 0;
            let f0 = g.dist(z, a0) as i64 - g.dist(z, c) as i64;
            if f0 < 0 {
                let margin = g.dist(z, a0) as i64 - g.dist(z, c4) as i64;
                if margin + 2 * self.r as i64 >= 0 {
                    explicit += 1;
                    if !self.ball_inside(z, self.r, Set::U0)? {
                        return Err(Error::NotGeodesic(format!("B(z, r) ⊄ U0 at {}", g.format(z))));
                    }
                }
            }
            let in_u0 = (g.dist(z, a0) as i64) < g.dist(z, c4) as i64;
            if in_u0 {
                let margin = g.dist(z, c) as i64 - g.dist(z, c2m) as i64;
                if margin + 2 * radius_outer as i64 >= 0 {
                    explicit += 1;
                    if !self.ball_inside(z, radius_outer, Set::U1Minus)? {
                        return Err(Error::NotGeodesic(format!("B(z, M−3r) ⊄ U1⁻ at {}", g.format(z))));
                    }
                }
            }
            Ok(explicit)
        });
        flags.into_iter().sum()
    }

    fn ball_inside(&self, z: &Element, radius: usize, set: Set) -> Result<bool> {
        let g = &self.group;
        let ball = g.ball(radius, GEOMETRY_BALL_CAP)?;
        Ok(ball.iter().all(|b| self.contains(set, &g.mul_unchecked(z, b))))
    }
}

struct Probe<'a> {
    group: &'a Group,
    anchors: &'a [Element; 5],
}

impl Probe<'_> {
    fn sets(&self, z: &Element) -> [bool; 4] {
        let d: Vec<usize> = self.anchors.iter().map(|a| self.group.dist(z, a)).collect();
        [d[0] < d[1], d[0] < d[2], d[1] < d[3], d[1] < d[4]]
    }

    fn contains(&self, set: Set, z: &Element) -> bool {
        let s = self.sets(z);
        match set {
            Set::U0Minus => s[0],
            Set::U0 => s[1],
            Set::U1Minus => s[2],
            Set::U1 => s[3],
        }
    }
}

/// Entries `α_{v0}^{V1}(v1)` as intervals, rows over a chosen list of
/// starting points and columns over the active part of `V1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FirstVisitMatrix {
    pub rows: Vec<Element>,
    pub cols: Vec<Element>,
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
    /// `α_{γ(c)}^{V1}` as an interval per column.
    pub from_centre: Vec<Interval>,
}

impl FirstVisitMatrix {
    /// Entries of the chain killed outside the tube; these are the
    /// estimates, the upper entries only bound the truncation.
    pub fn estimate(&self) -> Vec<Vec<f64>> {
        self.lower.clone()
    }

    pub fn mid(&self) -> Vec<Vec<f64>> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l.iter().zip(u).map(|(a, b)| 0.5 * (a + b)).collect())
            .collect()
    }

    pub fn operator(&self) -> Result<PositiveOperator> {
        PositiveOperator::new(self.estimate())
    }

    pub fn row_sums_upper(&self) -> Vec<f64> {
        self.upper.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn row_sums_lower(&self) -> Vec<f64> {
        self.lower.iter().map(|r| r.iter().sum()).collect()
    }
}

impl Obstacle {
    fn fixed_v1(&self, target: Option<usize>) -> Vec<(usize, f64)> {
        self.v1.iter().map(|&i| (i, if Some(i) == target { 1.0 } else { 0.0 })).collect()
    }

    /// Exterior upper values for a solve whose data are carried by `V1`:
    /// points of `U1⁻` outside the tube get the hitting bound towards
    /// `target`, shell points are absorbing with value 0.
    fn exterior_upper(&self, engine: &GreenEngine, target: &Element, scale: f64) -> Vec<f64> {
        self.region
            .exterior()
            .iter()
            .map(|z| {
                if self.contains(Set::U1Minus, z) {
                    (scale * engine.hitting_upper(z, target)).min(scale)
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn solve(&self, engine: &GreenEngine, fixed: &[(usize, f64)], ext_upper: &[f64]) -> Result<HarmonicBounds> {
        let zeros = vec![0.0; self.region.exterior().len()];
        self.region
            .harmonic(fixed, &zeros, ext_upper, engine.opts.tol, engine.opts.max_sweeps)
    }

    /// Harmonic extension of `values` (on the active columns) into `U1⁻`.
    pub fn extend(&self, engine: &GreenEngine, values: &[f64]) -> Result<HarmonicBounds> {
        if values.len() != self.active.len() {
            return Err(Error::IndexMismatch(values.len(), self.active.len()));
        }
        let mut fixed = self.fixed_v1(None);
        let pos: std::collections::HashMap<usize, f64> = self.active.iter().copied().zip(values.iter().copied()).collect();
        for f in &mut fixed {
            if let Some(v) = pos.get(&f.0) {
                f.1 = *v;
            }
        }
        let vmax = values.iter().copied().fold(0.0, f64::max);
        let ext: Vec<f64> = self
            .region
            .exterior()
            .iter()
            .map(|z| {
                if self.contains(Set::U1Minus, z) {
                    // Any hit of V1 from outside the tube passes near the
                    // far end of the segment.
                    let d = self.group.dist(z, &self.anchors[3]).saturating_sub(2 * self.r);
                    vmax * engine.decay().bound(d)
                } else {
                    0.0
                }
            })
            .collect();
        self.solve(engine, &fixed, &ext)
    }

    /// `u_{U1⁻}(·, γ(c))`: hitting probability of the centre before `V1`.
    pub fn restricted_to_centre(&self, engine: &GreenEngine) -> Result<HarmonicBounds> {
        let mut fixed = self.fixed_v1(None);
        fixed.push((self.centre_idx, 1.0));
        let ext = self.exterior_upper(engine, self.centre_point(), 1.0);
        self.solve(engine, &fixed, &ext)
    }
}

/// First-visit matrix of an obstacle, one harmonic solve per active column.
/// Rows default to the enumerated `V0`.
pub fn first_visit_matrix(engine: &GreenEngine, obs: &Obstacle, rows: Option<&[Element]>) -> Result<FirstVisitMatrix> {
    let row_pts: Vec<Element> = match rows {
        Some(r) => r.to_vec(),
        None => obs.v0_points(),
    };
    let row_idx: Vec<usize> = row_pts
        .iter()
        .map(|z| {
            obs.region
                .index_of(z)
                .ok_or_else(|| Error::ChainIncompatible(format!("row {} outside the obstacle", obs.group.format(z))))
        })
        .collect::<Result<_>>()?;
    let cols: Vec<Element> = obs.active_points();
    let solved = exec::map_collect(engine.opts.exec, &obs.active, |&col| -> Result<HarmonicBounds> {
        let fixed = obs.fixed_v1(Some(col));
        let ext = obs.exterior_upper(engine, &obs.region.points()[col], 1.0);
        obs.solve(engine, &fixed, &ext)
    });
    let solved: Vec<HarmonicBounds> = solved.into_iter().collect::<Result<_>>()?;
    let lower = row_idx
        .iter()
        .map(|&i| solved.iter().map(|b| b.lower[i]).collect())
        .collect();
    let upper = row_idx
        .iter()
        .map(|&i| solved.iter().map(|b| b.upper[i]).collect())
        .collect();
    let from_centre = solved
        .iter()
        .map(|b| {
            let (l, u) = b.at(obs.centre_idx);
            Interval::new(l, u)
        })
        .collect();
    Ok(FirstVisitMatrix {
        rows: row_pts,
        cols,
        lower,
        upper,
        from_centre,
    })
}

/// Smallest `c₁` with `c₁⁻¹ a_i b_j ≤ A_ij ≤ c₁ a_i b_j` over all entries.
/// Entries where exactly one side vanishes make the constant infinite.
pub fn ancona_constant(a: &[Vec<f64>], row_factor: &[f64], col_factor: &[f64]) -> Result<f64> {
    if a.len() != row_factor.len() {
        return Err(Error::IndexMismatch(a.len(), row_factor.len()));
    }
    let mut c1: f64 = 1.0;
    for (row, &ri) in a.iter().zip(row_factor) {
        if row.len() != col_factor.len() {
            return Err(Error::IndexMismatch(row.len(), col_factor.len()));
        }
        for (&aij, &cj) in row.iter().zip(col_factor) {
            let b = ri * cj;
            match (aij > 0.0, b > 0.0) {
                (true, true) => c1 = c1.max(aij / b).max(b / aij),
                (false, false) => {}
                _ => {
                    return Err(Error::InfiniteAnconaConstant(format!("entry {aij} against product {b}")));
                }
            }
        }
    }
    Ok(c1)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnconaReport {
    /// From the killed-chain estimates.
    pub c1: f64,
    /// Worst case over the interval ends.
    pub c1_conservative: f64,
    pub diameter: f64,
    pub diameter_bound: f64,
    pub max_row_sum: f64,
}

/// Sandwich constant of the product inequality for one obstacle, together
/// with the projective diameter of the matrix.
pub fn ancona_verify(engine: &GreenEngine, obs: &Obstacle, a: &FirstVisitMatrix) -> Result<AnconaReport> {
    let rc = obs.restricted_to_centre(engine)?;
    let idx: Vec<usize> = a.rows.iter().map(|z| obs.region.index_of(z).unwrap()).collect();
    let rows_est: Vec<f64> = idx.iter().map(|&i| rc.lower[i]).collect();
    let cols_est: Vec<f64> = a.from_centre.iter().map(|i| i.lower).collect();
    let est = a.estimate();
    let c1 = ancona_constant(&est, &rows_est, &cols_est)?;
    let mut cons: f64 = 1.0;
    for (k, &i) in idx.iter().enumerate() {
        for j in 0..a.cols.len() {
            let (al, ah) = (a.lower[k][j], a.upper[k][j]);
            let bl = rc.lower[i] * a.from_centre[j].lower;
            let bh = rc.upper[i] * a.from_centre[j].upper;
            if ah == 0.0 && bh == 0.0 {
                continue;
            }
            cons = cons.max(if bl > 0.0 { ah / bl } else { f64::INFINITY });
            cons = cons.max(if al > 0.0 { bh / al } else { f64::INFINITY });
        }
    }
    let diameter = operator_diameter(&PositiveOperator::new(est)?, 64, 7)?;
    Ok(AnconaReport {
        c1,
        c1_conservative: cons,
        diameter,
        diameter_bound: 4.0 * c1.ln(),
        max_row_sum: a.row_sums_upper().into_iter().fold(0.0, f64::max),
    })
}

/// `τ = (c₁² − 1)/(c₁² + 1) = tanh(ln c₁)`.
pub fn contraction_rate(c1: f64) -> f64 {
    (c1 * c1 - 1.0) / (c1 * c1 + 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaleSweep {
    /// `(M, c₁)` for each scale tried.
    pub entries: Vec<(usize, f64)>,
    /// Smallest scale whose `c₁` moves by less than 10% at the next one.
    pub chosen: Option<usize>,
}

/// Ancona constants at `M ∈ {12r, 24r, 48r}` for obstacles centred at
/// `2M` on `ray`.
pub fn scale_sweep(engine: &GreenEngine, ray: &[Letter], width: usize) -> Result<ScaleSweep> {
    let r = engine.measure().step_radius().max(1);
    let mut entries = Vec::new();
    for m in [12 * r, 24 * r, 48 * r] {
        let obs = Obstacle::build(engine.measure(), ray, 2 * m, m, width)?;
        let a = first_visit_matrix(engine, &obs, None)?;
        entries.push((m, ancona_verify(engine, &obs, &a)?.c1));
    }
    let chosen = entries
        .windows(2)
        .find(|w| (w[1].1 - w[0].1).abs() < 0.1 * w[0].1)
        .map(|w| w[0].0);
    Ok(ScaleSweep { entries, chosen })
}

/// Obstacles `j = 0..k` centred at `K + 2jM` along a ray, with the
/// first-visit matrices chained so that the rows of stage `j+1` are the
/// active columns of stage `j`.
#[derive(Clone, Debug)]
pub struct Chain {
    pub obstacles: Vec<Obstacle>,
    pub matrices: Vec<FirstVisitMatrix>,
    pub offset: usize,
}

impl Chain {
    pub fn build(engine: &GreenEngine, ray: &[Letter], offset: usize, m: usize, k: usize, width: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("chain needs at least one obstacle".into()));
        }
        let centres: Vec<usize> = (0..k).map(|j| offset + 2 * j * m).collect();
        let built = exec::map_collect(engine.opts.exec, &centres, |&c| Obstacle::build(engine.measure(), ray, c, m, width));
        let obstacles: Vec<Obstacle> = built.into_iter().collect::<Result<_>>()?;
        let mut matrices = Vec::with_capacity(k);
        for j in 0..k {
            let rows = if j == 0 { None } else { Some(obstacles[j - 1].active_points()) };
            if let Some(rows) = &rows {
                for z in rows {
                    if !obstacles[j].contains(Set::U0, z) || obstacles[j].contains(Set::U0Minus, z) {
                        return Err(Error::ChainIncompatible(format!(
                            "active point {} of stage {} is not in the next V0",
                            engine.measure().group().format(z),
                            j - 1
                        )));
                    }
                }
            }
            matrices.push(first_visit_matrix(engine, &obstacles[j], rows.as_deref())?);
        }
        Ok(Chain {
            obstacles,
            matrices,
            offset,
        })
    }

    /// Applies the matrices right to left to `f_k`, normalizing in the
    /// `t`-norm after each stage. Returns the images, last stage first.
    pub fn apply(&self, f_k: &ConeVector) -> Result<Vec<ConeVector>> {
        let mut f = f_k.clone();
        let mut images = Vec::with_capacity(self.matrices.len());
        for a in self.matrices.iter().rev() {
            let op = a.operator()?;
            f = op.apply(&f)?.normalized();
            if f.is_zero() {
                return Err(Error::DegenerateOperator("chain image vanished".into()));
            }
            images.push(f.clone());
        }
        Ok(images)
    }

    pub fn last_size(&self) -> usize {
        self.matrices.last().map_or(0, |a| a.cols.len())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainRun {
    /// `ϑ` between the images of the two seeds after each stage.
    pub theta_log: Vec<f64>,
    /// Fitted per-stage ratio of `theta_log`, when it is not identically 0.
    pub fitted_rate: Option<f64>,
    pub f0: Vec<f64>,
}

/// Runs the chain on the uniform seed and a random positive seed.
pub fn chain_apply(chain: &Chain, t: f64, seed: u64) -> Result<ChainRun> {
    let n = chain.last_size();
    let uniform = ConeVector::uniform(n, t)?;
    let mut rng = path_rng(seed, 0);
    let random = ConeVector::new((0..n).map(|_| rng.gen_range(0.05..1.0)).collect(), t)?;
    let a = chain.apply(&uniform)?;
    let b = chain.apply(&random)?;
    let theta_log: Vec<f64> = a.iter().zip(&b).map(|(x, y)| theta(x, y)).collect::<Result<_>>()?;
    Ok(ChainRun {
        fitted_rate: geometric_rate(&theta_log),
        f0: a.last().unwrap().entries.clone(),
        theta_log,
    })
}

fn geometric_rate(seq: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = seq
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 1e-13 && v.is_finite())
        .map(|(i, v)| (i as f64, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    linear_fit(&xs, &ys).map(|f| f.slope.exp())
}

/// `K_ξ(x)` through a chain of `k` obstacles at offset `K = 4M + |x|`:
/// the chain image of the uniform seed is extended harmonically from the
/// first active shell and evaluated at `x` and `e`.
pub fn chain_kernel(engine: &GreenEngine, ray: &[Letter], x: &Element, m: usize, k: usize, width: usize) -> Result<KernelEstimate> {
    let g = engine.measure().group();
    let offset = 4 * m + g.len(x);
    let chain = Chain::build(engine, ray, offset, m, k, width)?;
    let seed = ConeVector::uniform(chain.last_size(), 2.0)?;
    // Stage 0 is replaced by the harmonic extension below.
    let f1 = if k > 1 {
        let tail = Chain {
            obstacles: chain.obstacles[1..].to_vec(),
            matrices: chain.matrices[1..].to_vec(),
            offset,
        };
        tail.apply(&seed)?.pop().unwrap()
    } else {
        seed
    };
    let first = &chain.obstacles[0];
    let mut seeds: Vec<Element> = (0..=offset + 2 * m + 4 * engine.measure().step_radius())
        .map(|n| prefix(ray, n))
        .collect();
    seeds.extend(g.geodesic_points(x));
    let region = Region::around(engine.measure(), &seeds, width, engine.opts.cap, |z| first.contains(Set::U1, z))?;
    let active: std::collections::HashMap<Element, f64> =
        first.active_points().into_iter().zip(f1.entries.iter().copied()).collect();
    let fmax = f1.entries.iter().copied().fold(0.0, f64::max);
    let fixed: Vec<(usize, f64)> = region
        .points()
        .iter()
        .enumerate()
        .filter(|(_, z)| !first.contains(Set::U1Minus, z))
        .map(|(i, z)| (i, active.get(z).copied().unwrap_or(0.0)))
        .collect();
    let targets = first.active_points();
    let zeros = vec![0.0; region.exterior().len()];
    let ext: Vec<f64> = region
        .exterior()
        .iter()
        .map(|z| {
            if first.contains(Set::U1Minus, z) {
                let s: f64 = targets.iter().map(|a| engine.hitting_upper(z, a)).sum();
                (fmax * s).min(fmax)
            } else {
                0.0
            }
        })
        .collect();
    let b = region.harmonic(&fixed, &zeros, &ext, engine.opts.tol, engine.opts.max_sweeps)?;
    let (xl, xh) = b.at(region.index_of(x).unwrap());
    let (el, eh) = b.at(region.index_of(&g.identity()).unwrap());
    Ok(KernelEstimate {
        estimate: xl / el,
        interval: Interval::ratio(&Interval::new(xl, xh), &Interval::new(el, eh)),
    })
}

/// Chain kernel extrapolated in the tube width.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainKernelValue {
    pub value: f64,
    /// Estimate at the requested width.
    pub raw: f64,
    pub interval: Interval,
}

/// [`chain_kernel`] at widths `w−2, w−1, w` followed by Aitken
/// extrapolation; the raw width-`w` value is kept when the increments are
/// not geometric.
pub fn chain_kernel_limit(engine: &GreenEngine, ray: &[Letter], x: &Element, m: usize, k: usize, width: usize) -> Result<ChainKernelValue> {
    let top = chain_kernel(engine, ray, x, m, k, width)?;
    let value = if width >= 3 {
        let k2 = chain_kernel(engine, ray, x, m, k, width - 2)?.estimate;
        let k1 = chain_kernel(engine, ray, x, m, k, width - 1)?.estimate;
        aitken(k2, k1, top.estimate).unwrap_or(top.estimate)
    } else {
        top.estimate
    };
    Ok(ChainKernelValue {
        value,
        raw: top.estimate,
        interval: top.interval,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HolderFit {
    /// Fitted exponent `κ̂` in `|Φ(ξ) − Φ(η)| ≈ C e^{−κ̂ n}`.
    pub kappa: f64,
    pub constant: f64,
    pub r2: f64,
    /// True when every difference is below the noise floor: `Φ` is
    /// locally constant at the tested depths.
    pub degenerate: bool,
    /// `(n, |Φ(ξ) − Φ(η)|)` per pair.
    pub points: Vec<(usize, f64)>,
}

/// Noise floor for kernel differences.
pub const HOLDER_NOISE: f64 = 1e-11;

/// Regression of `ln |Φ(ξ) − Φ(η)|` on the Gromov product `n` of each pair,
/// with `Φ = −ln K_x`. Kernels are taken at the configured tube width
/// without extrapolation so that all pairs share the same truncation.
pub fn holder_estimate_phi(engine: &GreenEngine, x: &Element, pairs: &[(Vec<Letter>, Vec<Letter>)], tol: f64) -> Result<HolderFit> {
    let depths: std::collections::BTreeSet<usize> = pairs.iter().map(|(a, b)| common_prefix(a, b)).collect();
    if depths.len() < 5 {
        return Err(Error::InsufficientData(format!("{} distinct depths, need 5", depths.len())));
    }
    let vals = exec::map_collect(engine.opts.exec, pairs, |(a, b)| -> Result<(usize, f64)> {
        let ka = engine.martin_kernel_boundary(a, x, tol)?.raw;
        let kb = engine.martin_kernel_boundary(b, x, tol)?.raw;
        Ok((common_prefix(a, b), (ka.ln() - kb.ln()).abs()))
    });
    let points: Vec<(usize, f64)> = vals.into_iter().collect::<Result<_>>()?;
    let above: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, d)| *d > HOLDER_NOISE)
        .map(|&(n, d)| (n as f64, d.ln()))
        .collect();
    if above.is_empty() {
        return Ok(HolderFit {
            kappa: f64::INFINITY,
            constant: 0.0,
            r2: 1.0,
            degenerate: true,
            points,
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = above.into_iter().unzip();
    let fit = linear_fit(&xs, &ys).ok_or_else(|| Error::InsufficientData("differences at a single depth".into()))?;
    Ok(HolderFit {
        kappa: -fit.slope,
        constant: fit.intercept.exp(),
        r2: fit.r2,
        degenerate: false,
        points,
    })
}

pub fn common_prefix(a: &[Letter], b: &[Letter]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

/// Random normal-form word of length `len` continuing `start`.
pub fn random_extension(g: &Group, start: &[Letter], len: usize, rng: &mut impl Rng) -> Vec<Letter> {
    let mut w = start.to_vec();
    let letters: Vec<Letter> = (0..g.alphabet_len() as Letter).collect();
    while w.len() < len {
        let choices: Vec<Letter> = letters
            .iter()
            .copied()
            .filter(|&l| w.last().map_or(true, |&prev| g.can_follow(prev, l)))
            .collect();
        w.push(*choices.choose(rng).unwrap());
    }
    w
}

/// Pairs of rays of length `len` whose common prefix has length exactly `n`
/// for each `n` in `depths`.
pub fn pairs_at_depths(g: &Group, depths: &[usize], len: usize, seed: u64) -> Vec<(Vec<Letter>, Vec<Letter>)> {
    let mut rng = path_rng(seed, 1);
    depths
        .iter()
        .map(|&n| {
            let base = random_extension(g, &[], n, &mut rng);
            loop {
                let a = random_extension(g, &base, n + 1, &mut rng);
                let b = random_extension(g, &base, n + 1, &mut rng);
                if a[n] != b[n] {
                    return (random_extension(g, &a, len, &mut rng), random_extension(g, &b, len, &mut rng));
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f2() -> StepMeasure {
        StepMeasure::uniform(Group::new(Family::Free { rank: 2 }).unwrap())
    }

    #[test]
    fn centres_and_nesting() {
        let p = f2();
        let ray = vec![0u8; 60];
        let obs = Obstacle::build(&p, &ray, 24, 12, 2).unwrap();
        let g = p.group();
        assert!(obs.contains(Set::U0Minus, &prefix(&ray, 0)));
        assert!(!obs.contains(Set::U0Minus, &prefix(&ray, 24)));
        assert!(obs.contains(Set::U1Minus, &prefix(&ray, 24)));
        assert!(!obs.v0_points().is_empty());
        assert!(obs.v0_points().iter().all(|z| !obs.v1_points().contains(z)));
        assert_eq!(obs.active_points(), vec![prefix(&ray, 36)]);
        assert!(obs.verify_geometry().is_ok());
        let _ = g;
    }

    #[test]
    fn rank_one_has_unit_constant() {
        let a = vec![vec![2.0, 6.0], vec![1.0, 3.0]];
        assert_eq!(ancona_constant(&a, &[2.0, 1.0], &[1.0, 3.0]).unwrap(), 1.0);
        assert!(ancona_constant(&[vec![1.0]], &[0.0], &[1.0]).is_err());
    }

    #[test]
    fn rate_formula() {
        assert!((contraction_rate(2.0) - 0.6).abs() < 1e-15);
        assert!((contraction_rate(2.0) - 2f64.ln().tanh()).abs() < 1e-15);
    }
}
