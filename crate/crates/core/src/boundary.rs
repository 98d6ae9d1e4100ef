//! The boundary as a subshift of finite type, harmonic measure on its
//! cylinders, the transfer operator with the Martin-kernel potential, and
//! the boundary formulas for entropy and escape rate.
//!
//! Boundary points of a free group or free product are infinite normal-form
//! words; for the integers the boundary is `{+∞, −∞}`, coded by the two
//! constant sequences over the alphabet `{+, −}`.

use std::collections::HashMap;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::green::{GreenEngine, SolveOptions};
use crate::group::{Element, Family, Group, Letter};
use crate::tree::TreeWalk;
use crate::walk::{sample_endpoints, StepMeasure};

/// Letter of the integer boundary alphabet standing for `+∞`.
pub const PLUS: Letter = 0;
/// Letter standing for `−∞`.
pub const MINUS: Letter = 1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundarySubshift {
    pub family: Family,
    pub alphabet: Vec<String>,
    /// `allowed[a][b]`: `b` may follow `a`.
    pub allowed: Vec<Vec<bool>>,
    /// Transitive components, each a sorted letter set.
    pub components: Vec<Vec<Letter>>,
}

pub fn build_subshift(g: &Group) -> BoundarySubshift {
    let (alphabet, allowed): (Vec<String>, Vec<Vec<bool>>) = match g.family() {
        Family::Integer => (
            vec!["+".into(), "-".into()],
            vec![vec![true, false], vec![false, true]],
        ),
        _ => {
            let k = g.alphabet_len();
            (
                (0..k).map(|l| g.letter_name(l as Letter)).collect(),
                (0..k)
                    .map(|a| (0..k).map(|b| g.can_follow(a as Letter, b as Letter)).collect())
                    .collect(),
            )
        }
    };
    let k = alphabet.len();
    let mut graph: DiGraph<Letter, ()> = DiGraph::new();
    let nodes: Vec<_> = (0..k).map(|l| graph.add_node(l as Letter)).collect();
    for a in 0..k {
        for b in 0..k {
            if allowed[a][b] {
                graph.add_edge(nodes[a], nodes[b], ());
            }
        }
    }
    let mut components: Vec<Vec<Letter>> = tarjan_scc(&graph)
        .into_iter()
        .filter(|c| c.len() > 1 || allowed[c[0].index()][c[0].index()])
        .map(|c| {
            let mut v: Vec<Letter> = c.iter().map(|n| graph[*n]).collect();
            v.sort_unstable();
            v
        })
        .collect();
    components.sort();
    BoundarySubshift {
        family: g.family(),
        alphabet,
        allowed,
        components,
    }
}

impl BoundarySubshift {
    pub fn n_letters(&self) -> usize {
        self.alphabet.len()
    }

    pub fn n_transitions(&self) -> usize {
        self.allowed.iter().flatten().filter(|&&b| b).count()
    }

    pub fn is_integer(&self) -> bool {
        matches!(self.family, Family::Integer)
    }

    pub fn admissible(&self, w: &[Letter]) -> bool {
        w.iter().all(|&l| (l as usize) < self.n_letters()) && w.windows(2).all(|p| self.allowed[p[0] as usize][p[1] as usize])
    }

    /// Component containing a letter.
    pub fn component_of(&self, l: Letter) -> Option<usize> {
        self.components.iter().position(|c| c.contains(&l))
    }

    /// Admissible words of length `len` in lexicographic order, optionally
    /// restricted to one component.
    pub fn words(&self, len: usize, component: Option<usize>) -> Vec<Vec<Letter>> {
        let letters: Vec<Letter> = match component {
            Some(c) => self.components[c].clone(),
            None => (0..self.n_letters() as Letter).collect(),
        };
        let mut out: Vec<Vec<Letter>> = vec![Vec::new()];
        for _ in 0..len {
            let mut next = Vec::with_capacity(out.len() * letters.len());
            for w in &out {
                for &l in &letters {
                    if w.last().map_or(true, |&a| self.allowed[a as usize][l as usize]) {
                        let mut v = w.clone();
                        v.push(l);
                        next.push(v);
                    }
                }
            }
            out = next;
        }
        out
    }

    /// `w` followed by the smallest admissible letter at every step, up to
    /// length `len`.
    pub fn continuation(&self, w: &[Letter], len: usize) -> Vec<Letter> {
        let mut v = w.to_vec();
        while v.len() < len {
            let last = *v.last().expect("continuation of an empty word");
            let next = (0..self.n_letters())
                .find(|&b| self.allowed[last as usize][b])
                .expect("every letter has a successor") as Letter;
            v.push(next);
        }
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureMethod {
    StationaryFixedPoint,
    MonteCarlo,
    Point,
}

/// Masses of the depth-`D` cylinders, closed beyond depth `D` by an
/// order-1 Markov extension.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CylinderMeasure {
    pub depth: usize,
    pub words: Vec<Vec<Letter>>,
    pub mass: Vec<f64>,
    pub std_err: Option<Vec<f64>>,
    /// Transition probabilities used beyond depth `D`.
    pub transition: Vec<Vec<f64>>,
    pub component: Option<usize>,
    pub method: MeasureMethod,
    /// Stationarity residual in total variation (fixed-point method).
    pub residual: Option<f64>,
    pub iterations: usize,
}

impl CylinderMeasure {
    fn from_masses(sub: &BoundarySubshift, depth: usize, words: Vec<Vec<Letter>>, mass: Vec<f64>, method: MeasureMethod) -> Self {
        let transition = fit_transition(sub, &words, &mass);
        CylinderMeasure {
            depth,
            words,
            mass,
            std_err: None,
            transition,
            component: None,
            method,
            residual: None,
            iterations: 0,
        }
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    fn range(&self, w: &[Letter]) -> std::ops::Range<usize> {
        let k = w.len().min(self.depth);
        let lo = self.words.partition_point(|v| v[..k] < w[..k]);
        let hi = self.words.partition_point(|v| v[..k] <= w[..k]);
        lo..hi
    }

    /// `ν([w])` for any word length; beyond depth `D` the Markov extension
    /// is used.
    pub fn mass_of(&self, w: &[Letter]) -> f64 {
        let base: f64 = self.mass[self.range(w)].iter().sum();
        if w.len() <= self.depth {
            return base;
        }
        w[self.depth - 1..]
            .windows(2)
            .map(|p| self.transition[p[0] as usize][p[1] as usize])
            .product::<f64>()
            * base
    }

    /// Masses of the depth-`k` cylinders for `k ≤ D`.
    pub fn marginal(&self, k: usize) -> Vec<(Vec<Letter>, f64)> {
        let mut out: Vec<(Vec<Letter>, f64)> = Vec::new();
        for (w, m) in self.words.iter().zip(&self.mass) {
            match out.last_mut() {
                Some((v, acc)) if v[..] == w[..k] => *acc += m,
                _ => out.push((w[..k].to_vec(), *m)),
            }
        }
        out
    }

    /// Extension to all admissible words of length `len ≥ D`.
    pub fn extended(&self, len: usize) -> Vec<(Vec<Letter>, f64)> {
        let mut cur: Vec<(Vec<Letter>, f64)> = self.words.iter().cloned().zip(self.mass.iter().copied()).collect();
        for _ in self.depth..len {
            let mut next = Vec::with_capacity(cur.len() * 3);
            for (w, m) in &cur {
                let last = *w.last().unwrap() as usize;
                for (b, &t) in self.transition[last].iter().enumerate() {
                    if t > 0.0 {
                        let mut v = w.clone();
                        v.push(b as Letter);
                        next.push((v, m * t));
                    }
                }
            }
            cur = next;
        }
        cur
    }

    /// Total variation distance on the common depth.
    pub fn tv(&self, other: &CylinderMeasure) -> f64 {
        let k = self.depth.min(other.depth);
        let a = self.marginal(k);
        let b: HashMap<Vec<Letter>, f64> = other.marginal(k).into_iter().collect();
        let mut seen = 0.0;
        let mut d = 0.0;
        for (w, m) in &a {
            let o = b.get(w).copied().unwrap_or(0.0);
            seen += o;
            d += (m - o).abs();
        }
        let rest: f64 = b.values().sum::<f64>() - seen;
        0.5 * (d + rest.abs())
    }

    fn index(&self) -> HashMap<&[Letter], usize> {
        self.words.iter().enumerate().map(|(i, w)| (&w[..], i)).collect()
    }
}

/// Order-1 transitions from the last two positions of the depth-`D` words.
fn fit_transition(sub: &BoundarySubshift, words: &[Vec<Letter>], mass: &[f64]) -> Vec<Vec<f64>> {
    let k = sub.n_letters();
    let mut t = vec![vec![0.0; k]; k];
    if words.first().map_or(0, |w| w.len()) >= 2 {
        for (w, m) in words.iter().zip(mass) {
            let n = w.len();
            t[w[n - 2] as usize][w[n - 1] as usize] += m;
        }
    }
    for a in 0..k {
        let z: f64 = t[a].iter().sum();
        let allowed = sub.allowed[a].iter().filter(|&&b| b).count();
        for b in 0..k {
            t[a][b] = if z > 0.0 {
                t[a][b] / z
            } else if sub.allowed[a][b] {
                1.0 / allowed as f64
            } else {
                0.0
            };
        }
    }
    t
}

fn integer_point(sub: &BoundarySubshift, depth: usize, component: usize) -> CylinderMeasure {
    let l = sub.components[component][0];
    let words = vec![vec![PLUS; depth], vec![MINUS; depth]];
    let mass = if l == PLUS { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
    let mut m = CylinderMeasure::from_masses(sub, depth, words, mass, MeasureMethod::Point);
    m.component = Some(component);
    m
}

/// `(x_*ν)([w])` for all depth-`D` words `w`.
pub fn pushforward(g: &Group, nu: &CylinderMeasure, x: &Element) -> Result<Vec<f64>> {
    if matches!(g.family(), Family::Integer) {
        // Translations fix both ends of the line.
        return Ok(nu.mass.clone());
    }
    let d = nu.depth;
    let len = d + g.len(x) + 1;
    let idx = nu.index();
    let mut out = vec![0.0; nu.words.len()];
    for (v, m) in nu.extended(len) {
        let y = g.mul_unchecked(x, &Element::Word(v));
        let letters = y.letters();
        if letters.len() < d {
            return Err(Error::InsufficientDepth(format!("image of a depth-{len} cylinder is shorter than {d}")));
        }
        match idx.get(&letters[..d]) {
            Some(&i) => out[i] += m,
            None => return Err(Error::InsufficientDepth("cylinder image outside the word list".into())),
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            tol: 1e-13,
            max_iter: 20_000,
        }
    }
}

/// Solves `ν = Σ_x p(x) x_*ν` on the depth-`D` cylinders by iteration from
/// the uniform Markov measure.
///
/// On the integers translations act trivially on `{±∞}`; the harmonic
/// measure is the point mass at the end the walk drifts to.
pub fn stationary_measure(p: &StepMeasure, depth: usize, opts: FixedPointOptions) -> Result<CylinderMeasure> {
    let g = p.group();
    let sub = build_subshift(g);
    if depth == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    if sub.is_integer() {
        let drift = p.drift().unwrap();
        if drift == 0.0 {
            return Err(Error::Unsupported("zero-drift walk on the integers does not converge".into()));
        }
        let c = if drift > 0.0 { PLUS } else { MINUS };
        let mut m = integer_point(&sub, depth, sub.component_of(c).unwrap());
        m.method = MeasureMethod::StationaryFixedPoint;
        m.residual = Some(0.0);
        return Ok(m);
    }
    let words = sub.words(depth, None);
    let n = words.len();
    // Uniform over the letter tree.
    let k = sub.n_letters() as f64;
    let mass: Vec<f64> = words
        .iter()
        .map(|w| {
            (1..w.len()).fold(1.0 / k, |acc, i| {
                let allowed = sub.allowed[w[i - 1] as usize].iter().filter(|&&b| b).count();
                acc / allowed as f64
            })
        })
        .collect();
    let mut nu = CylinderMeasure::from_masses(&sub, depth, words, mass, MeasureMethod::StationaryFixedPoint);
    for it in 1..=opts.max_iter {
        let next = step_measure(g, p, &nu)?;
        let change: f64 = 0.5 * next.iter().zip(&nu.mass).map(|(a, b)| (a - b).abs()).sum::<f64>();
        let total: f64 = next.iter().sum();
        nu.mass = next.into_iter().map(|m| m / total).collect();
        nu.transition = fit_transition(&sub, &nu.words, &nu.mass);
        if change < opts.tol {
            nu.iterations = it;
            nu.residual = Some(stationarity_residual(p, &nu, depth.saturating_sub(p.step_radius()).max(1))?);
            debug_assert_eq!(nu.words.len(), n);
            return Ok(nu);
        }
    }
    Err(Error::NoConvergence(format!("stationary measure at depth {depth}")))
}

fn step_measure(g: &Group, p: &StepMeasure, nu: &CylinderMeasure) -> Result<Vec<f64>> {
    let parts = exec::map_collect(Exec::Parallel, p.support(), |f| pushforward(g, nu, f));
    let mut out = vec![0.0; nu.words.len()];
    for (part, &w) in parts.into_iter().zip(p.probs()) {
        for (o, v) in out.iter_mut().zip(part?) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// `‖ν − Σ p(x) x_*ν‖_TV` on the depth-`k` cylinders.
pub fn stationarity_residual(p: &StepMeasure, nu: &CylinderMeasure, k: usize) -> Result<f64> {
    let g = p.group();
    let next = step_measure(g, p, nu)?;
    let mut pushed = nu.clone();
    pushed.mass = next;
    let a = nu.marginal(k);
    let b = pushed.marginal(k);
    Ok(0.5 * a.iter().zip(&b).map(|(x, y)| (x.1 - y.1).abs()).sum::<f64>())
}

/// Empirical prefix frequencies of `X_n` at `n = 20·D`. Endpoints shorter
/// than `D` are discarded.
pub fn monte_carlo_measure(p: &StepMeasure, depth: usize, paths: usize, seed: u64, exec: Exec) -> Result<CylinderMeasure> {
    let g = p.group();
    let sub = build_subshift(g);
    let n = 20 * depth;
    let ends = sample_endpoints(p, n, paths, seed, exec);
    let words = if sub.is_integer() {
        vec![vec![PLUS; depth], vec![MINUS; depth]]
    } else {
        sub.words(depth, None)
    };
    let index: HashMap<Vec<Letter>, usize> = words.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();
    let mut counts = vec![0usize; words.len()];
    let mut kept = 0usize;
    for x in &ends {
        let key = match x {
            Element::Int(v) if *v > 0 => Some(vec![PLUS; depth]),
            Element::Int(v) if *v < 0 => Some(vec![MINUS; depth]),
            Element::Int(_) => None,
            Element::Word(w) if w.len() >= depth => Some(w[..depth].to_vec()),
            Element::Word(_) => None,
        };
        if let Some(k) = key {
            counts[index[&k]] += 1;
            kept += 1;
        }
    }
    if kept < paths / 2 {
        return Err(Error::InsufficientData(format!("only {kept} of {paths} endpoints resolve depth {depth}")));
    }
    let nf = kept as f64;
    let mass: Vec<f64> = counts.iter().map(|&c| c as f64 / nf).collect();
    let std_err = mass.iter().map(|m| (m * (1.0 - m) / nf).sqrt()).collect();
    let mut m = CylinderMeasure::from_masses(&sub, depth, words, mass, MeasureMethod::MonteCarlo);
    m.std_err = Some(std_err);
    m.iterations = n;
    Ok(m)
}

/// Stationary measure of every transitive component. The integers have one
/// point mass per end; other families have a single component.
pub fn component_measures(p: &StepMeasure, depth: usize) -> Result<Vec<CylinderMeasure>> {
    let sub = build_subshift(p.group());
    if sub.is_integer() {
        return Ok((0..sub.components.len()).map(|c| integer_point(&sub, depth, c)).collect());
    }
    let mut nu = stationary_measure(p, depth, FixedPointOptions::default())?;
    nu.component = Some(0);
    Ok(vec![nu])
}

/// `K_ξ(x)` for boundary points given by letter sequences.
pub trait BoundaryKernel: Sync {
    fn kernel(&self, ray: &[Letter], x: &Element) -> Result<f64>;
    /// Ray length the evaluation needs for `x`.
    fn ray_len(&self, x: &Element) -> usize;
}

/// Exact kernels of nearest-neighbour walks on trees.
pub struct TreeKernel(pub TreeWalk);

impl BoundaryKernel for TreeKernel {
    fn kernel(&self, ray: &[Letter], x: &Element) -> Result<f64> {
        self.0.boundary_kernel(ray, x)
    }

    fn ray_len(&self, x: &Element) -> usize {
        self.0.group().len(x) + 2
    }
}

/// Kernels at `±∞` for nearest-neighbour walks on the integers:
/// `K_{+∞}(x) = ρ₊^{−x}` with `ρ₊ = min(1, p₊/p₋)` the probability of ever
/// moving one step right, symmetrically for `−∞`.
pub struct IntegerKernel {
    pub rho_plus: f64,
    pub rho_minus: f64,
}

impl IntegerKernel {
    pub fn new(p: &StepMeasure) -> Result<Self> {
        if !matches!(p.group().family(), Family::Integer) || p.step_radius() > 1 {
            return Err(Error::Unsupported("integer kernels need a nearest-neighbour walk on the integers".into()));
        }
        let pp = p.prob_of(&Element::Int(1));
        let pm = p.prob_of(&Element::Int(-1));
        let ratio = |a: f64, b: f64| if b == 0.0 { 1.0 } else { (a / b).min(1.0) };
        Ok(IntegerKernel {
            rho_plus: ratio(pp, pm),
            rho_minus: ratio(pm, pp),
        })
    }
}

impl BoundaryKernel for IntegerKernel {
    fn kernel(&self, ray: &[Letter], x: &Element) -> Result<f64> {
        let v = match x {
            Element::Int(v) => *v as i32,
            _ => return Err(Error::FamilyMismatch("integer kernel on a word".into())),
        };
        match ray.first() {
            Some(&PLUS) => Ok(self.rho_plus.powi(-v)),
            Some(&MINUS) => Ok(self.rho_minus.powi(v)),
            _ => Err(Error::InsufficientDepth("empty boundary word".into())),
        }
    }

    fn ray_len(&self, _x: &Element) -> usize {
        1
    }
}

/// Ray limits computed by region solves.
pub struct RegionKernel {
    pub engine: GreenEngine,
    pub tol: f64,
    pub len: usize,
}

impl BoundaryKernel for RegionKernel {
    fn kernel(&self, ray: &[Letter], x: &Element) -> Result<f64> {
        Ok(self.engine.martin_kernel_boundary(ray, x, self.tol)?.value)
    }

    fn ray_len(&self, x: &Element) -> usize {
        self.len.max(self.engine.measure().group().len(x) + 2)
    }
}

/// Exact kernel when available, region solves otherwise.
pub fn kernel_for(p: &StepMeasure) -> Result<Box<dyn BoundaryKernel>> {
    if matches!(p.group().family(), Family::Integer) {
        return Ok(Box::new(IntegerKernel::new(p)?));
    }
    if p.is_nearest_neighbor() {
        return Ok(Box::new(TreeKernel(TreeWalk::new(p)?)));
    }
    Ok(Box::new(RegionKernel {
        engine: GreenEngine::with_options(p, false, SolveOptions::default())?,
        tol: 1e-9,
        len: 80,
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityCheck {
    pub max_error: f64,
    /// `(word, (x_*ν)(C)/ν(C), K at the representative)` per cylinder.
    pub cylinders: Vec<(Vec<Letter>, f64, f64)>,
}

/// Compares `(x_*ν)(C)/ν(C)` with `K_ξ(x)` at the canonical continuation
/// `ξ` of each depth-`D` cylinder `C`.
pub fn radon_nikodym_check(p: &StepMeasure, nu: &CylinderMeasure, x: &Element, kernel: &dyn BoundaryKernel) -> Result<DensityCheck> {
    let g = p.group();
    let sub = build_subshift(g);
    if *x == g.identity() {
        return Ok(DensityCheck {
            max_error: 0.0,
            cylinders: nu.words.iter().map(|w| (w.clone(), 1.0, 1.0)).collect(),
        });
    }
    let pushed = pushforward(g, nu, x)?;
    let len = kernel.ray_len(x).max(nu.depth);
    let live: Vec<usize> = (0..nu.words.len()).filter(|&i| nu.mass[i] > 0.0).collect();
    let rows = exec::map_collect(Exec::Parallel, &live, |&i| -> Result<(Vec<Letter>, f64, f64)> {
        let w = &nu.words[i];
        let ray = sub.continuation(w, len);
        Ok((w.clone(), pushed[i] / nu.mass[i], kernel.kernel(&ray, x)?))
    });
    let cylinders: Vec<(Vec<Letter>, f64, f64)> = rows.into_iter().collect::<Result<_>>()?;
    let max_error = cylinders.iter().map(|c| (c.1 - c.2).abs()).fold(0.0, f64::max);
    Ok(DensityCheck { max_error, cylinders })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyReport {
    /// `−Σ p(x) Σ_C ν(C) ln[(x⁻¹_*ν)(C)/ν(C)]`.
    pub entropy: f64,
    /// Same sum with `x_*ν` in place of `x⁻¹_*ν`.
    pub entropy_other_orientation: f64,
    /// Largest density discrepancy over the support, when a kernel is given.
    pub density_error: Option<f64>,
}

/// Default refusal threshold for the density check.
pub const DENSITY_THRESHOLD: f64 = 0.05;

/// Boundary entropy on the depth-`D` cylinders. With a kernel, the density
/// check runs first for every support element and the computation refuses
/// above `threshold`.
pub fn entropy_boundary(p: &StepMeasure, nu: &CylinderMeasure, kernel: Option<&dyn BoundaryKernel>, threshold: f64) -> Result<EntropyReport> {
    let g = p.group();
    let density_error = match kernel {
        Some(k) => {
            let mut worst: f64 = 0.0;
            for f in p.support() {
                worst = worst.max(radon_nikodym_check(p, nu, f, k)?.max_error);
            }
            if worst > threshold {
                return Err(Error::DensityCheck {
                    discrepancy: worst,
                    threshold,
                });
            }
            Some(worst)
        }
        None => None,
    };
    let kl = |x: &Element| -> Result<f64> {
        let pushed = pushforward(g, nu, x)?;
        let mut s = 0.0;
        for (m, q) in nu.mass.iter().zip(&pushed) {
            if *m > 0.0 {
                if *q <= 0.0 {
                    return Err(Error::DensityCheck {
                        discrepancy: f64::INFINITY,
                        threshold,
                    });
                }
                s -= m * (q / m).ln();
            }
        }
        Ok(s)
    };
    let mut h = 0.0;
    let mut h_other = 0.0;
    for (f, w) in p.iter() {
        h += w * kl(&g.inv(f))?;
        h_other += w * kl(f)?;
    }
    Ok(EntropyReport {
        entropy: h,
        entropy_other_orientation: h_other,
        density_error,
    })
}

/// `h_ξ(x) = lim d(x, ξ_n) − d(e, ξ_n)`.
///
/// For words this is `d(x, ξ_L) − L` with `L = |x| + 2`; on the integers
/// `h_{+∞}(x) = −x` and `h_{−∞}(x) = x`.
pub fn busemann(g: &Group, xi: &[Letter], x: &Element) -> Result<i64> {
    g.check(x)?;
    if let Element::Int(v) = x {
        return match xi.first() {
            Some(&PLUS) => Ok(-v),
            Some(&MINUS) => Ok(*v),
            _ => Err(Error::InsufficientDepth("empty boundary word".into())),
        };
    }
    let l = g.len(x) + 2;
    if xi.len() < l {
        return Err(Error::InsufficientDepth(format!("boundary word of length {} needs {l} letters", xi.len())));
    }
    let y = Element::Word(xi[..l].to_vec());
    g.check(&y).map_err(|_| Error::NotGeodesic("boundary word is not in normal form".into()))?;
    Ok(g.dist(x, &y) as i64 - l as i64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EscapeReport {
    pub escape: f64,
    /// `Σ p(x) ∫ h(x⁻¹) dν_J(h)` per component.
    pub per_component: Vec<f64>,
}

/// `max_J Σ_x p(x) ∫ h(x⁻¹) dν_J(h)` over the transitive components.
pub fn escape_boundary(p: &StepMeasure, measures: &[CylinderMeasure]) -> Result<EscapeReport> {
    let g = p.group();
    let sub = build_subshift(g);
    let mut per_component = Vec::with_capacity(sub.components.len());
    for c in 0..sub.components.len() {
        let nu = measures
            .iter()
            .find(|m| m.component == Some(c) || (m.component.is_none() && sub.components.len() == 1))
            .ok_or_else(|| Error::MissingComponent(format!("no measure for component {c}")))?;
        let need = p.step_radius() + 2;
        let cyl = if nu.depth >= need { nu.words.iter().cloned().zip(nu.mass.iter().copied()).collect() } else { nu.extended(need) };
        let mut total = 0.0;
        for (f, w) in p.iter() {
            let finv = g.inv(f);
            let mut s = 0.0;
            for (word, m) in &cyl {
                if *m > 0.0 {
                    s += m * busemann(g, word, &finv)? as f64;
                }
            }
            total += w * s;
        }
        per_component.push(total);
    }
    let escape = per_component.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(EscapeReport { escape, per_component })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// `φ(z) = −ln K_{π(z)}(z₀)`, which makes the harmonic measure an
    /// eigenmeasure with eigenvalue 1.
    Harmonic,
    /// `φ(z) = +ln K_{π(z)}(z₀)`.
    Literal,
}

/// `L_φ` on functions of the depth-`D` cylinders of one component:
/// `(L_φ ψ)(w) = Σ_{a : aw admissible} e^{φ(aw)} ψ(prefix_D(aw))`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransferOperator {
    pub depth: usize,
    pub words: Vec<Vec<Letter>>,
    /// `φ` on each cylinder.
    pub potential: Vec<f64>,
    /// Preimage cylinders per word.
    pub preimages: Vec<Vec<usize>>,
    pub orientation: Orientation,
}

pub fn transfer_operator(
    g: &Group,
    kernel: &dyn BoundaryKernel,
    depth: usize,
    component: usize,
    orientation: Orientation,
) -> Result<TransferOperator> {
    let sub = build_subshift(g);
    if component >= sub.components.len() {
        return Err(Error::MissingComponent(format!("component {component}")));
    }
    let words = sub.words(depth, Some(component));
    let index: HashMap<&[Letter], usize> = words.iter().enumerate().map(|(i, w)| (&w[..], i)).collect();
    let integer = sub.is_integer();
    let pot = exec::map_collect(Exec::Parallel, &words, |w| -> Result<f64> {
        let z0 = if integer {
            Element::Int(if w[0] == PLUS { 1 } else { -1 })
        } else {
            Element::Word(vec![w[0]])
        };
        let ray = sub.continuation(w, kernel.ray_len(&z0).max(depth));
        let k = kernel.kernel(&ray, &z0)?;
        Ok(match orientation {
            Orientation::Harmonic => -k.ln(),
            Orientation::Literal => k.ln(),
        })
    });
    let potential: Vec<f64> = pot.into_iter().collect::<Result<_>>()?;
    let preimages = words
        .iter()
        .map(|w| {
            sub.components[component]
                .iter()
                .filter(|&&a| sub.allowed[a as usize][w[0] as usize])
                .map(|&a| {
                    let mut v = Vec::with_capacity(depth);
                    v.push(a);
                    v.extend_from_slice(&w[..depth - 1]);
                    index[&v[..]]
                })
                .collect()
        })
        .collect();
    Ok(TransferOperator {
        depth,
        words,
        potential,
        preimages,
        orientation,
    })
}

impl TransferOperator {
    pub fn apply(&self, psi: &[f64]) -> Result<Vec<f64>> {
        if psi.len() != self.words.len() {
            return Err(Error::IndexMismatch(psi.len(), self.words.len()));
        }
        Ok(self
            .preimages
            .iter()
            .map(|pre| pre.iter().map(|&j| self.potential[j].exp() * psi[j]).sum())
            .collect())
    }

    /// `L^*` acting on measures.
    pub fn apply_dual(&self, mu: &[f64]) -> Result<Vec<f64>> {
        if mu.len() != self.words.len() {
            return Err(Error::IndexMismatch(mu.len(), self.words.len()));
        }
        let mut out = vec![0.0; mu.len()];
        for (w, pre) in self.preimages.iter().enumerate() {
            for &j in pre {
                out[j] += self.potential[j].exp() * mu[w];
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PressureReport {
    pub pressure: f64,
    /// Normalized left eigenvector on the depth-`D` cylinders.
    pub eigenmeasure: Vec<f64>,
    pub words: Vec<Vec<Letter>>,
    pub iterations: usize,
}

/// Leading eigenvalue of `L_φ` and its eigenmeasure by power iteration on
/// the dual.
pub fn pressure_and_eigenmeasure(op: &TransferOperator, tol: f64, max_iter: usize) -> Result<PressureReport> {
    let n = op.words.len();
    let mut mu = vec![1.0 / n as f64; n];
    let mut lambda = 0.0;
    for it in 1..=max_iter {
        let next = op.apply_dual(&mu)?;
        let z: f64 = next.iter().sum();
        if !(z > 0.0) {
            return Err(Error::DegenerateOperator("transfer operator annihilates the measure".into()));
        }
        let next: Vec<f64> = next.into_iter().map(|v| v / z).collect();
        let change: f64 = next.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
        mu = next;
        let done = change < tol && (z - lambda).abs() < tol * z;
        lambda = z;
        if done {
            return Ok(PressureReport {
                pressure: lambda.ln(),
                eigenmeasure: mu,
                words: op.words.clone(),
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence(format!(
        "dual power iteration at depth {}; a larger depth may separate the spectrum",
        op.depth
    )))
}

/// Total variation between an eigenmeasure and a cylinder measure at the
/// same depth.
pub fn eigenmeasure_tv(report: &PressureReport, nu: &CylinderMeasure) -> f64 {
    let total: f64 = report.words.iter().map(|w| nu.mass_of(w)).sum();
    0.5 * report
        .words
        .iter()
        .zip(&report.eigenmeasure)
        .map(|(w, m)| (m - nu.mass_of(w) / total).abs())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f2() -> Group {
        Group::new(Family::Free { rank: 2 }).unwrap()
    }

    #[test]
    fn subshift_shapes() {
        let s = build_subshift(&f2());
        assert_eq!((s.n_letters(), s.n_transitions(), s.components.len()), (4, 12, 1));
        let z = build_subshift(&Group::new(Family::Integer).unwrap());
        assert_eq!(z.components, vec![vec![PLUS], vec![MINUS]]);
        let fp = build_subshift(&Group::new(Family::FreeProduct { m: 2, n: 3 }).unwrap());
        assert_eq!((fp.n_letters(), fp.n_transitions(), fp.components.len()), (3, 4, 1));
    }

    #[test]
    fn busemann_along_ray() {
        let g = f2();
        let ray = vec![0u8; 6];
        assert_eq!(busemann(&g, &ray, &g.identity()).unwrap(), 0);
        assert_eq!(busemann(&g, &ray, &g.parse("a").unwrap()).unwrap(), -1);
        assert_eq!(busemann(&g, &ray, &g.parse("A").unwrap()).unwrap(), 1);
        assert_eq!(busemann(&g, &ray, &g.parse("b").unwrap()).unwrap(), 1);
    }

    #[test]
    fn uniform_stationary_is_uniform() {
        let p = StepMeasure::uniform(f2());
        let nu = stationary_measure(&p, 2, FixedPointOptions::default()).unwrap();
        for m in &nu.mass {
            assert!((m - 1.0 / 12.0).abs() < 1e-10);
        }
        assert!((nu.mass_of(&[0]) - 0.25).abs() < 1e-10);
    }
}
