//! Regularity experiments in the measure parameter: difference quotients of
//! entropy, escape rate and the kernel potential over the open simplex,
//! second-difference kink scans, and stability of the constants near a
//! point.

use rand::Rng;
use serde::Serialize;

use crate::boundary::{
    build_subshift, component_measures, entropy_boundary, escape_boundary, kernel_for, stationary_measure,
    FixedPointOptions, DENSITY_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::green::GreenEngine;
use crate::group::{Element, Family, Letter};
use crate::obstacle::{
    ancona_verify, common_prefix, contraction_rate, first_visit_matrix, holder_estimate_phi, pairs_at_depths, Obstacle,
};
use crate::walk::{path_rng, StepMeasure};

/// `c₁ − 1` below this is read as `c₁ = 1`.
pub const C1_ROUNDING: f64 = 1e-12;

/// Smallest admissible coordinate.
pub const SIMPLEX_FLOOR: f64 = 0.02;

/// Second differences below this are treated as rounding.
pub const KINK_NOISE: f64 = 1e-8;

/// Flag threshold as a multiple of the median scaled second difference.
pub const KINK_FACTOR: f64 = 10.0;

/// Point of the open simplex over a fixed support, every coordinate above a
/// floor.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimplexPoint {
    coords: Vec<f64>,
}

impl SimplexPoint {
    /// Coordinates summing to 1 within `1e-9` are renormalized exactly.
    pub fn new(coords: Vec<f64>, floor: f64) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument("empty simplex point".into()));
        }
        let total: f64 = coords.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidMeasure(format!("coordinates sum to {total}")));
        }
        let coords: Vec<f64> = coords.into_iter().map(|c| c / total).collect();
        if let Some(c) = coords.iter().find(|c| !(**c > floor)) {
            return Err(Error::InvalidArgument(format!("coordinate {c} not above the floor {floor}")));
        }
        Ok(SimplexPoint { coords })
    }

    /// Positive weights, normalized.
    pub fn from_weights(w: &[f64], floor: f64) -> Result<Self> {
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument("weights must have positive sum".into()));
        }
        Self::new(w.iter().map(|v| v / total).collect(), floor)
    }

    pub fn uniform(n: usize) -> Self {
        SimplexPoint {
            coords: vec![1.0 / n as f64; n],
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// `ϑ(p, p′) = ln[max_i(p′_i/p_i) · max_i(p_i/p′_i)]`.
    pub fn theta(&self, other: &SimplexPoint) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::IndexMismatch(self.dim(), other.dim()));
        }
        let up = self.coords.iter().zip(&other.coords).map(|(a, b)| b / a).fold(0.0, f64::max);
        let down = self.coords.iter().zip(&other.coords).map(|(a, b)| a / b).fold(0.0, f64::max);
        Ok((up * down).ln().max(0.0))
    }

    /// `(1 − t) a + t b`.
    pub fn lerp(a: &SimplexPoint, b: &SimplexPoint, t: f64, floor: f64) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::IndexMismatch(a.dim(), b.dim()));
        }
        Self::new(a.coords.iter().zip(&b.coords).map(|(x, y)| (1.0 - t) * x + t * y).collect(), floor)
    }

    /// Multiplies the coordinates by `e^{u_i}` and renormalizes; the result is
    /// at distance `max u − min u` from `self`.
    pub fn tilted(&self, u: &[f64], floor: f64) -> Result<Self> {
        if u.len() != self.dim() {
            return Err(Error::IndexMismatch(u.len(), self.dim()));
        }
        let w: Vec<f64> = self.coords.iter().zip(u).map(|(c, v)| c * v.exp()).collect();
        Self::from_weights(&w, floor)
    }

    /// Step measure with these weights on the support of `base`.
    pub fn measure(&self, base: &StepMeasure) -> Result<StepMeasure> {
        base.reweighted(&self.coords)
    }
}

/// Quantity scanned over the simplex.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    Entropy,
    Escape,
    /// `Φ_p(ξ) = −ln K_ξ(x)` over a fixed set of rays. Without `kappa` the
    /// exponent is fitted at the first grid point.
    Phi {
        x: Element,
        rays: Vec<Vec<Letter>>,
        kappa: Option<f64>,
    },
}

impl Quantity {
    pub fn name(&self) -> &'static str {
        match self {
            Quantity::Entropy => "entropy",
            Quantity::Escape => "escape",
            Quantity::Phi { .. } => "phi",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabOptions {
    /// Cylinder depth for the stationary measure.
    pub depth: usize,
    pub floor: f64,
    pub exec: Exec,
}

impl Default for LabOptions {
    fn default() -> Self {
        LabOptions {
            depth: 3,
            floor: SIMPLEX_FLOOR,
            exec: Exec::Parallel,
        }
    }
}

fn at_point<T>(pt: &SimplexPoint, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::AtGridPoint {
        coords: pt.coords.clone(),
        source: Box::new(e),
    })
}

/// Entropy by the boundary formula.
pub fn entropy_at(p: &StepMeasure, depth: usize) -> Result<f64> {
    let nu = if matches!(p.group().family(), Family::Integer) {
        component_measures(p, depth)?.swap_remove(0)
    } else {
        stationary_measure(p, depth, FixedPointOptions::default())?
    };
    Ok(entropy_boundary(p, &nu, None, DENSITY_THRESHOLD)?.entropy)
}

/// Escape rate by the boundary formula.
pub fn escape_at(p: &StepMeasure, depth: usize) -> Result<f64> {
    Ok(escape_boundary(p, &component_measures(p, depth)?)?.escape)
}

/// `Φ_p` on the given rays.
pub fn phi_at(p: &StepMeasure, x: &Element, rays: &[Vec<Letter>]) -> Result<Vec<f64>> {
    let k = kernel_for(p)?;
    rays.iter().map(|r| Ok(-k.kernel(r, x)?.ln())).collect()
}

/// Value of a quantity at a point: a scalar, or `Φ` on the ray set.
pub fn evaluate(base: &StepMeasure, pt: &SimplexPoint, q: &Quantity, depth: usize) -> Result<Vec<f64>> {
    let p = pt.measure(base)?;
    match q {
        Quantity::Entropy => Ok(vec![entropy_at(&p, depth)?]),
        Quantity::Escape => Ok(vec![escape_at(&p, depth)?]),
        Quantity::Phi { x, rays, .. } => phi_at(&p, x, rays),
    }
}

/// Random base points, each paired with a neighbour obtained by tilting one
/// coordinate by `e^{±spacing}`, so that the pair is at distance `spacing`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid {
    pub points: usize,
    pub spacing: f64,
    pub seed: u64,
    /// Restricts base points to `ϑ ≤ radius` around a centre.
    pub centre: Option<Vec<f64>>,
    pub radius: f64,
}

impl Grid {
    pub fn new(points: usize, spacing: f64, seed: u64) -> Self {
        Grid {
            points,
            spacing,
            seed,
            centre: None,
            radius: 0.0,
        }
    }

    pub fn around(centre: &SimplexPoint, radius: f64, points: usize, spacing: f64, seed: u64) -> Self {
        Grid {
            points,
            spacing,
            seed,
            centre: Some(centre.coords.clone()),
            radius,
        }
    }

    /// Same base points and directions at half the spacing.
    pub fn refined(&self) -> Self {
        Grid {
            spacing: self.spacing / 2.0,
            ..self.clone()
        }
    }

    /// `(base, neighbour)` pairs of dimension `dim`, deterministic in the
    /// seed; base points keep a margin so that neighbours stay above the
    /// floor.
    pub fn pairs(&self, dim: usize, floor: f64) -> Result<Vec<(SimplexPoint, SimplexPoint)>> {
        if dim < 2 {
            return Err(Error::InvalidArgument("simplex needs at least two coordinates".into()));
        }
        if !(self.spacing > 0.0) {
            return Err(Error::InvalidArgument("grid spacing must be positive".into()));
        }
        let margin = floor * self.spacing.exp() + 1e-12;
        let mut out = Vec::with_capacity(self.points);
        for k in 0..self.points {
            let mut rng = path_rng(self.seed, k as u64);
            let mut tries = 0;
            let base = loop {
                tries += 1;
                if tries > 10_000 {
                    return Err(Error::InvalidArgument("no grid point above the floor; shrink the radius or spacing".into()));
                }
                let w: Vec<f64> = match &self.centre {
                    Some(c) => c.iter().map(|v| v * (rng.gen_range(-0.5..=0.5f64) * self.radius).exp()).collect(),
                    None => (0..dim).map(|_| -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln()).collect(),
                };
                if w.len() != dim {
                    return Err(Error::IndexMismatch(w.len(), dim));
                }
                let total: f64 = w.iter().sum();
                if w.iter().all(|v| v / total > margin) {
                    break SimplexPoint::from_weights(&w, floor)?;
                }
            };
            let i = rng.gen_range(0..dim);
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let mut u = vec![0.0; dim];
            u[i] = sign * self.spacing;
            let nb = base.tilted(&u, floor)?;
            out.push((base, nb));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipschitzPair {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub quantity: String,
    pub value_a: Vec<f64>,
    pub value_b: Vec<f64>,
    /// Size of the difference: absolute for scalars, `Γ_κ` norm for `Φ`.
    pub delta: f64,
    pub theta: f64,
    pub quotient: f64,
}

/// Difference quotients over neighbour pairs. The maximum is an empirical
/// lower bound for the Lipschitz constant on the sampled region.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub pairs: Vec<LipschitzPair>,
    pub max_quotient: f64,
    pub argmax: usize,
    pub grid: Grid,
    /// Exponent used for the `Φ` seminorm.
    pub kappa: Option<f64>,
}

/// `sup|f| + max_{ξ≠η} |f(ξ) − f(η)| e^{κ(ξ|η)}` over the ray set.
pub fn gamma_norm(f: &[f64], rays: &[Vec<Letter>], kappa: f64) -> f64 {
    let sup = f.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut semi: f64 = 0.0;
    for i in 0..rays.len() {
        for j in i + 1..rays.len() {
            let n = common_prefix(&rays[i], &rays[j]);
            if n < rays[i].len().min(rays[j].len()) {
                semi = semi.max((f[i] - f[j]).abs() * (kappa * n as f64).exp());
            }
        }
    }
    sup + semi
}

/// Hölder exponent of `Φ_p` at `x`, fitted on random ray pairs at depths
/// `2..=7`. Locally constant kernels give a degenerate fit, for which any
/// exponent works and 1 is returned.
pub fn estimate_kappa(p: &StepMeasure, x: &Element, seed: u64) -> Result<f64> {
    let engine = GreenEngine::new(p, false)?;
    let len = 80.max(p.group().len(x) + 12);
    let pairs = pairs_at_depths(p.group(), &[2, 3, 4, 5, 6, 7], len, seed);
    let fit = holder_estimate_phi(&engine, x, &pairs, 1e-9)?;
    Ok(if fit.degenerate || !(fit.kappa > 0.0) { 1.0 } else { fit.kappa })
}

pub fn lipschitz_scan(base: &StepMeasure, q: &Quantity, grid: &Grid, opts: LabOptions) -> Result<LipschitzReport> {
    let dim = base.support().len();
    let pairs = grid.pairs(dim, opts.floor)?;
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    let kappa = match q {
        Quantity::Phi { x, kappa, .. } => Some(match kappa {
            Some(k) => *k,
            None => {
                let c = &pairs[0].0;
                at_point(c, c.measure(base).and_then(|p| estimate_kappa(&p, x, grid.seed)))?
            }
        }),
        _ => None,
    };
    let flat: Vec<&SimplexPoint> = pairs.iter().flat_map(|(a, b)| [a, b]).collect();
    let values = exec::map_collect(opts.exec, &flat, |pt| at_point(pt, evaluate(base, pt, q, opts.depth)));
    let values: Vec<Vec<f64>> = values.into_iter().collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(pairs.len());
    for (k, (a, b)) in pairs.iter().enumerate() {
        let (va, vb) = (&values[2 * k], &values[2 * k + 1]);
        let diff: Vec<f64> = va.iter().zip(vb).map(|(x, y)| y - x).collect();
        let delta = match q {
            Quantity::Phi { rays, .. } => gamma_norm(&diff, rays, kappa.unwrap()),
            _ => diff[0].abs(),
        };
        let theta = a.theta(b)?;
        out.push(LipschitzPair {
            a: a.coords.clone(),
            b: b.coords.clone(),
            quantity: q.name().into(),
            value_a: va.clone(),
            value_b: vb.clone(),
            delta,
            theta,
            quotient: delta / theta,
        });
    }
    if let Some(bad) = out.iter().find(|p| !p.quotient.is_finite()) {
        return Err(Error::AtGridPoint {
            coords: bad.a.clone(),
            source: Box::new(Error::InvalidArgument("non-finite difference quotient".into())),
        });
    }
    let (argmax, max_quotient) = out
        .iter()
        .map(|p| p.quotient)
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    Ok(LipschitzReport {
        pairs: out,
        max_quotient,
        argmax,
        grid: grid.clone(),
        kappa,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KinkFlag {
    /// Consecutive flagged interior indices.
    pub indices: Vec<usize>,
    /// Segment parameter of the flagged cluster, weighted by the second
    /// differences.
    pub t: f64,
    pub coords: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KinkProfile {
    pub ts: Vec<f64>,
    pub values: Vec<f64>,
    /// `|f(t+h) − 2f(t) + f(t−h)| / h²` at interior indices `1..steps`.
    pub second_diff: Vec<f64>,
    pub median: f64,
    pub threshold: f64,
    pub flags: Vec<KinkFlag>,
}

/// Second differences of a scalar quantity along `a → b`. Indices whose
/// scaled second difference exceeds ten times the segment median (and whose
/// raw second difference is above [`KINK_NOISE`]) are flagged; adjacent flags
/// merge into one candidate.
pub fn kink_detector(
    base: &StepMeasure,
    q: &Quantity,
    a: &SimplexPoint,
    b: &SimplexPoint,
    steps: usize,
    opts: LabOptions,
) -> Result<KinkProfile> {
    if matches!(q, Quantity::Phi { .. }) {
        return Err(Error::InvalidArgument("kink scans take a scalar quantity".into()));
    }
    if steps < 3 {
        return Err(Error::InvalidArgument("kink scan needs at least 3 steps".into()));
    }
    let h = 1.0 / steps as f64;
    let ts: Vec<f64> = (0..=steps).map(|i| i as f64 * h).collect();
    let pts: Vec<SimplexPoint> = ts
        .iter()
        .map(|&t| SimplexPoint::lerp(a, b, t, opts.floor))
        .collect::<Result<_>>()?;
    let values = exec::map_collect(opts.exec, &pts, |pt| at_point(pt, evaluate(base, pt, q, opts.depth).map(|v| v[0])));
    let values: Vec<f64> = values.into_iter().collect::<Result<_>>()?;
    let raw: Vec<f64> = (1..steps).map(|i| (values[i + 1] - 2.0 * values[i] + values[i - 1]).abs()).collect();
    let second_diff: Vec<f64> = raw.iter().map(|d| d / (h * h)).collect();
    let mut sorted = second_diff.clone();
    sorted.sort_by(|x, y| x.total_cmp(y));
    let m = sorted.len();
    let median = if m % 2 == 1 { sorted[m / 2] } else { 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]) };
    let threshold = KINK_FACTOR * median;
    let flagged: Vec<usize> = (0..second_diff.len())
        .filter(|&k| second_diff[k] > threshold && raw[k] > KINK_NOISE)
        .map(|k| k + 1)
        .collect();
    let mut flags: Vec<KinkFlag> = Vec::new();
    for i in flagged {
        match flags.last_mut() {
            Some(f) if *f.indices.last().unwrap() + 1 == i => f.indices.push(i),
            _ => flags.push(KinkFlag {
                indices: vec![i],
                t: 0.0,
                coords: Vec::new(),
            }),
        }
    }
    for f in &mut flags {
        let w: f64 = f.indices.iter().map(|&i| second_diff[i - 1]).sum();
        f.t = f.indices.iter().map(|&i| second_diff[i - 1] * ts[i]).sum::<f64>() / w;
        f.coords = SimplexPoint::lerp(a, b, f.t, 0.0)?.coords;
    }
    Ok(KinkProfile {
        ts,
        values,
        second_diff,
        median,
        threshold,
        flags,
    })
}

/// Constants attached to one measure.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityRow {
    pub coords: Vec<f64>,
    pub theta: f64,
    pub zeta: f64,
    pub c1: f64,
    pub tau: f64,
    /// `None` when the kernels are locally constant at the tested depths.
    pub kappa: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityRatios {
    pub zeta: f64,
    pub c1: f64,
    pub tau: f64,
    pub kappa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityTable {
    pub centre: StabilityRow,
    pub probes: Vec<StabilityRow>,
    /// `max/min` of each constant over the centre and the probes.
    pub ratios: StabilityRatios,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityOptions {
    /// Obstacle scale in units of the step radius.
    pub scale: usize,
    pub width: usize,
    pub bound: f64,
    pub seed: u64,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        StabilityOptions {
            scale: 12,
            width: 2,
            bound: 2.0,
            seed: 11,
        }
    }
}

/// `ζ`, `c₁`, `τ` and `κ̂` for one measure; obstacles sit on the smallest
/// admissible ray.
pub fn constants_at(p: &StepMeasure, opts: &StabilityOptions) -> Result<(f64, f64, f64, Option<f64>)> {
    let g = p.group();
    if matches!(g.family(), Family::Integer) {
        return Err(Error::Unsupported("obstacle constants are defined on word groups".into()));
    }
    let engine = GreenEngine::new(p, false)?;
    let zeta = engine.spectral().zeta_refined;
    let r = p.step_radius().max(1);
    let m = opts.scale * r;
    let sub = build_subshift(g);
    let ray = sub.continuation(&[0], 6 * m + 4 * r + 1);
    let obs = Obstacle::build(p, &ray, 2 * m, m, opts.width)?;
    let a = first_visit_matrix(&engine, &obs, None)?;
    let c1 = ancona_verify(&engine, &obs, &a)?.c1;
    let x = g.generators().swap_remove(0);
    let len = 80.max(g.len(&x) + 12);
    let pairs = pairs_at_depths(g, &[2, 3, 4, 5, 6, 7], len, opts.seed);
    let fit = holder_estimate_phi(&engine, &x, &pairs, 1e-9)?;
    let kappa = if fit.degenerate { None } else { Some(fit.kappa) };
    // Rank-one matrices give c₁ = 1 up to rounding.
    let c1 = if c1 - 1.0 < C1_ROUNDING { 1.0 } else { c1 };
    Ok((zeta, c1, contraction_rate(c1), kappa))
}

/// `n` probes with `ϑ ≤ radius` from the centre.
pub fn random_probes(centre: &SimplexPoint, radius: f64, n: usize, seed: u64, floor: f64) -> Result<Vec<SimplexPoint>> {
    (0..n)
        .map(|k| {
            let mut rng = path_rng(seed, k as u64);
            let u: Vec<f64> = (0..centre.dim()).map(|_| rng.gen_range(-0.5..=0.5) * radius).collect();
            centre.tilted(&u, floor)
        })
        .collect()
}

/// `max/min` with `0/0` and `∞/∞` read as 1.
fn spread(vals: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = vals.collect();
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    if hi == lo {
        1.0
    } else {
        hi / lo
    }
}

/// Tabulates the constants over probes within `radius` of `centre`.
pub fn neighborhood_stability(
    base: &StepMeasure,
    centre: &SimplexPoint,
    radius: f64,
    probes: &[SimplexPoint],
    opts: StabilityOptions,
    lab: LabOptions,
) -> Result<StabilityTable> {
    for pr in probes {
        let d = centre.theta(pr)?;
        if d > radius * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!("probe at distance {d} outside radius {radius}")));
        }
        SimplexPoint::new(pr.coords.clone(), lab.floor)?;
    }
    let mut all: Vec<&SimplexPoint> = vec![centre];
    all.extend(probes.iter());
    let rows = exec::map_collect(lab.exec, &all, |pt| {
        at_point(pt, pt.measure(base).and_then(|p| constants_at(&p, &opts))).map(|(zeta, c1, tau, kappa)| StabilityRow {
            coords: pt.coords.clone(),
            theta: centre.theta(pt).unwrap_or(0.0),
            zeta,
            c1,
            tau,
            kappa,
        })
    });
    let mut rows: Vec<StabilityRow> = rows.into_iter().collect::<Result<_>>()?;
    let kappa_spread = if rows.iter().all(|r| r.kappa.is_none()) {
        1.0
    } else if rows.iter().any(|r| r.kappa.is_none()) {
        f64::INFINITY
    } else {
        spread(rows.iter().map(|r| r.kappa.unwrap()))
    };
    let ratios = StabilityRatios {
        zeta: spread(rows.iter().map(|r| r.zeta)),
        c1: spread(rows.iter().map(|r| r.c1)),
        tau: spread(rows.iter().map(|r| r.tau)),
        kappa: kappa_spread,
    };
    let passed = [ratios.zeta, ratios.c1, ratios.tau, ratios.kappa].iter().all(|&v| v <= opts.bound);
    let centre_row = rows.remove(0);
    Ok(StabilityTable {
        centre: centre_row,
        probes: rows,
        ratios,
        bound: opts.bound,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::Group;

    fn z1() -> StepMeasure {
        StepMeasure::from_words(Group::new(Family::Integer).unwrap(), &[("-1", 0.5), ("1", 0.5)]).unwrap()
    }

    #[test]
    fn theta_is_projective() {
        let a = SimplexPoint::new(vec![0.5, 0.25, 0.25], SIMPLEX_FLOOR).unwrap();
        let b = SimplexPoint::new(vec![0.25, 0.5, 0.25], SIMPLEX_FLOOR).unwrap();
        assert_eq!(a.theta(&a).unwrap(), 0.0);
        assert!((a.theta(&b).unwrap() - 4f64.ln()).abs() < 1e-14);
        let t = a.tilted(&[0.1, -0.05, 0.0], SIMPLEX_FLOOR).unwrap();
        assert!((a.theta(&t).unwrap() - 0.15).abs() < 1e-12);
    }

    #[test]
    fn floor_is_enforced() {
        assert!(SimplexPoint::new(vec![0.99, 0.01], SIMPLEX_FLOOR).is_err());
        assert!(SimplexPoint::new(vec![0.5, 0.4], SIMPLEX_FLOOR).is_err());
    }

    #[test]
    fn integer_kink_at_zero_drift() {
        let base = z1();
        let lab = LabOptions::default();
        let a = SimplexPoint::new(vec![0.7, 0.3], lab.floor).unwrap();
        let b = SimplexPoint::new(vec![0.3, 0.7], lab.floor).unwrap();
        let prof = kink_detector(&base, &Quantity::Escape, &a, &b, 40, lab).unwrap();
        assert_eq!(prof.flags.len(), 1);
        assert!((prof.flags[0].t - 0.5).abs() < 1e-12);
        let c = SimplexPoint::new(vec![0.4, 0.6], lab.floor).unwrap();
        let prof = kink_detector(&base, &Quantity::Escape, &c, &b, 40, lab).unwrap();
        assert!(prof.flags.is_empty());
    }

    #[test]
    fn gamma_norm_weights_deep_pairs() {
        let rays = vec![vec![0, 0, 0], vec![0, 0, 2], vec![2, 2, 2]];
        let f = [1.0, 1.5, 1.0];
        let expect = 1.5 + 0.5 * 2f64.exp();
        assert!((gamma_norm(&f, &rays, 1.0) - expect).abs() < 1e-12);
    }
}
