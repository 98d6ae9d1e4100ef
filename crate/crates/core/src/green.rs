//! Green functions, hitting probabilities and Martin kernels.
//!
//! Nearest-neighbour walks on tree-like groups have closed forms (see
//! [`TreeWalk`]); they are used as the primary route when available and as
//! oracles otherwise. Every other quantity is computed on a finite
//! [`Region`] around the relevant geodesics and returned as an interval:
//! lower ends kill the walk outside the region, upper ends charge exterior
//! points with the [`DecayModel`] bound.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::group::{Element, Family, Letter};
use crate::region::{DecayModel, Region, REGION_CAP};
use crate::tree::TreeWalk;
use crate::walk::{SparseDistribution, StepMeasure};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        Interval { lower, upper }
    }

    pub fn point(v: f64) -> Self {
        Interval { lower: v, upper: v }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn overlaps(&self, o: &Interval) -> bool {
        self.lower <= o.upper && o.lower <= self.upper
    }

    pub fn intersect(&self, o: &Interval) -> Option<Interval> {
        let lo = self.lower.max(o.lower);
        let hi = self.upper.min(o.upper);
        (lo <= hi).then_some(Interval::new(lo, hi))
    }

    /// Interval of `a / b` for positive intervals.
    pub fn ratio(a: &Interval, b: &Interval) -> Interval {
        Interval::new(a.lower / b.upper, if b.lower > 0.0 { a.upper / b.lower } else { f64::INFINITY })
    }
}

/// Partial sum of the Green series with certified remainder terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GreenValue {
    pub value: f64,
    /// Bound on `Σ_{n>n₀} p^{(n)}(x)`.
    pub tail_bound: f64,
    /// Bound on visits after leaving the computation region.
    pub truncation_bound: f64,
    pub terms_used: usize,
}

impl GreenValue {
    pub fn interval(&self) -> Interval {
        Interval::new(self.value, self.value + self.tail_bound + self.truncation_bound)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralEstimate {
    /// `(p^{(2n)}(e))^{1/2n}` at the largest computed `n`.
    pub zeta: f64,
    /// Ratio estimate corrected for the polynomial prefactor of the local
    /// limit theorem (`n^{-3/2}` for nonamenable families).
    pub zeta_refined: f64,
    pub n_used: usize,
    /// `ζ_n` for `n = 1..=n_used`.
    pub sequence: Vec<f64>,
    /// `p^{(n)}(e)` for `n = 0..=2·n_used`.
    pub returns: Vec<f64>,
}

impl SpectralEstimate {
    /// `C = 2 · max_n p^{(n)}(e) / ζⁿ`.
    pub fn prefactor(&self) -> f64 {
        let z = self.zeta_refined;
        2.0 * self
            .returns
            .iter()
            .enumerate()
            .map(|(n, r)| r / z.powi(n as i32))
            .fold(1.0_f64, f64::max)
    }

    /// Smallest `n₀` with `C ζ^{n₀+1} / (1 − ζ) ≤ eps`, and that bound.
    pub fn tail_terms(&self, eps: f64) -> (usize, f64) {
        let z = self.zeta_refined;
        let c = self.prefactor();
        let n0 = ((eps * (1.0 - z) / c).ln() / z.ln()).ceil().max(1.0) as usize;
        (n0, c * z.powi(n0 as i32 + 1) / (1.0 - z))
    }
}

/// Estimates the spectral radius from even-step return probabilities.
///
/// Nearest-neighbour tree walks use the exact return series; the integers
/// use sparse convolution; other measures use a killed evolution in the
/// ball of radius `ball_radius`, which yields lower bounds.
pub fn spectral_radius_estimate(p: &StepMeasure, n_max: usize, acknowledge_amenable: bool, exec: Exec) -> Result<SpectralEstimate> {
    spectral_radius_with(p, n_max, acknowledge_amenable, 9, exec)
}

pub fn spectral_radius_with(
    p: &StepMeasure,
    n_max: usize,
    acknowledge_amenable: bool,
    ball_radius: usize,
    exec: Exec,
) -> Result<SpectralEstimate> {
    let g = p.group();
    if g.is_amenable() && !acknowledge_amenable {
        return Err(Error::AmenableSpectralRadius);
    }
    if n_max < 2 {
        return Err(Error::InvalidArgument("n_max must be at least 2".into()));
    }
    let steps = 2 * n_max;
    let returns: Vec<f64> = if p.is_nearest_neighbor() {
        TreeWalk::new(p)?.return_series(steps)
    } else if matches!(g.family(), Family::Integer) {
        let mut d = SparseDistribution::delta_e(g);
        let mut r = vec![1.0];
        for _ in 0..steps {
            d = d.convolve(p, 0.0, REGION_CAP, exec)?;
            r.push(d.get(&g.identity()));
        }
        r
    } else {
        let e = g.identity();
        let region = Region::around(p, std::slice::from_ref(&e), ball_radius, REGION_CAP, |_| true)?;
        let src = region.index_of(&e).unwrap();
        region.propagate(src, &[src], steps, exec).values.remove(0)
    };
    let sequence: Vec<f64> = (1..=n_max).map(|n| returns[2 * n].powf(1.0 / (2 * n) as f64)).collect();
    let zeta = *sequence.last().unwrap();
    let alpha = if g.is_amenable() { 0.5 } else { 1.5 };
    let n = n_max as f64;
    let ratio = returns[2 * n_max] / returns[2 * n_max - 2];
    let zeta_refined = (ratio * (n / (n - 1.0)).powf(alpha)).sqrt().max(zeta);
    if !g.is_amenable() && !(zeta_refined < 1.0) {
        return Err(Error::SpectralRadiusNotBelowOne(zeta_refined));
    }
    Ok(SpectralEstimate {
        zeta,
        zeta_refined: zeta_refined.min(1.0),
        n_used: n_max,
        sequence,
        returns,
    })
}

/// Options shared by the region-based computations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    /// Width of the tube around geodesic segments.
    pub width: usize,
    pub tol: f64,
    pub max_sweeps: usize,
    pub cap: usize,
    pub exec: Exec,
    /// Extrapolate boundary kernels in the tube width.
    pub extrapolate: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            width: 5,
            tol: 1e-12,
            max_sweeps: 20_000,
            cap: REGION_CAP,
            exec: Exec::Parallel,
            extrapolate: true,
        }
    }
}

/// Green-function queries for one step measure.
#[derive(Clone, Debug)]
pub struct GreenEngine {
    p: StepMeasure,
    tree: Option<TreeWalk>,
    decay: DecayModel,
    spectral: SpectralEstimate,
    pub opts: SolveOptions,
}

/// `G(x)` together with `u(e, x) = G(x) / G(e)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GreenReport {
    pub green: GreenValue,
    pub green_e: GreenValue,
    pub u_e_x: Interval,
}

/// Martin kernel `K_y(x)` by the two ratio formulas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MartinValue {
    pub value: f64,
    pub interval: Interval,
    /// `G(x⁻¹y) / G(y)`.
    pub green_ratio: Interval,
    /// `u(x, y) / u(e, y)`.
    pub hitting_ratio: Interval,
    /// Ratio of the killed solutions.
    pub killed: f64,
    pub consistent: bool,
}

/// Kernel value on a finite tube.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelEstimate {
    /// Ratio of the solutions killed outside the tube.
    pub estimate: f64,
    /// Rigorous bounds from the lower and upper solutions.
    pub interval: Interval,
}

/// Limit of `K_{γ(n)}(x)` along a ray.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryKernelValue {
    pub value: f64,
    /// Estimate at the configured width, before extrapolation.
    pub raw: f64,
    /// Bounds at the stopping prefix.
    pub interval: Interval,
    /// Fitted geometric rate of `|K_n − K_{n−1}|`.
    pub rate: f64,
    /// `(n, K_n)` along the ray.
    pub terms: Vec<(usize, f64)>,
    pub n_used: usize,
}

impl GreenEngine {
    /// `acknowledge_amenable` allows the integers, whose spectral radius may
    /// be 1.
    pub fn new(p: &StepMeasure, acknowledge_amenable: bool) -> Result<Self> {
        Self::with_options(p, acknowledge_amenable, SolveOptions::default())
    }

    pub fn with_options(p: &StepMeasure, acknowledge_amenable: bool, opts: SolveOptions) -> Result<Self> {
        let n_spec = if p.is_nearest_neighbor() { 400 } else { 60 };
        let spectral = spectral_radius_estimate(p, n_spec, acknowledge_amenable, opts.exec)?;
        if !(spectral.zeta_refined < 1.0) {
            return Err(Error::SpectralRadiusNotBelowOne(spectral.zeta_refined));
        }
        let tree = if p.is_nearest_neighbor() { Some(TreeWalk::new(p)?) } else { None };
        let decay = DecayModel::fit(p, 6)?;
        Ok(GreenEngine {
            p: p.clone(),
            tree,
            decay,
            spectral,
            opts,
        })
    }

    pub fn measure(&self) -> &StepMeasure {
        &self.p
    }

    pub fn tree(&self) -> Option<&TreeWalk> {
        self.tree.as_ref()
    }

    pub fn decay(&self) -> &DecayModel {
        &self.decay
    }

    pub fn spectral(&self) -> &SpectralEstimate {
        &self.spectral
    }

    /// Partial Green sum to the first `n₀` with tail bound below `eps`.
    pub fn green(&self, x: &Element, eps: f64) -> Result<GreenReport> {
        let g = self.p.group();
        g.check(x)?;
        let (n0, tail) = self.spectral.tail_terms(eps);
        if n0 > 1_000_000 {
            return Err(Error::NoConvergence(format!("tail bound {eps} needs {n0} terms")));
        }
        let e = g.identity();
        let (gx, ge) = if let Some(tw) = &self.tree {
            let sx = tw.transition_series(x, n0);
            let se = tw.transition_series(&e, n0);
            let v = |s: &[f64]| GreenValue {
                value: s.iter().sum(),
                tail_bound: tail,
                truncation_bound: 0.0,
                terms_used: n0,
            };
            (v(&sx), v(&se))
        } else {
            let seeds = g.geodesic_points(x);
            let region = Region::around(&self.p, &seeds, self.opts.width, self.opts.cap, |_| true)?;
            let src = region.index_of(&e).unwrap();
            let tx = region.index_of(x).unwrap();
            let prop = region.propagate(src, &[tx, src], n0, self.opts.exec);
            let exit: f64 = prop.exit.iter().sum();
            let trunc = exit.min(1.0) * self.decay.green_e_upper * self.decay.bound(self.opts.width + 1);
            let v = |s: &[f64]| GreenValue {
                value: s.iter().sum(),
                tail_bound: tail,
                truncation_bound: trunc,
                terms_used: n0,
            };
            (v(&prop.values[0]), v(&prop.values[1]))
        };
        Ok(GreenReport {
            green: gx,
            green_e: ge,
            u_e_x: Interval::ratio(&gx.interval(), &ge.interval()),
        })
    }

    /// Bounds on `u_Δ(x, y)`, the probability of reaching `y` from `x`
    /// without leaving `domain`, computed on the tube of width `trunc_r`
    /// around `[x, y]`. By convention `u_Δ(x, x) = 1`.
    pub fn restricted_hitting<D>(&self, x: &Element, y: &Element, domain: D, trunc_r: usize) -> Result<Interval>
    where
        D: Fn(&Element) -> bool + Sync,
    {
        let g = self.p.group();
        g.check(x)?;
        g.check(y)?;
        if !domain(x) || !domain(y) {
            return Err(Error::InvalidArgument("x and y must lie in the domain".into()));
        }
        if x == y {
            return Ok(Interval::point(1.0));
        }
        let seeds: Vec<Element> = g
            .geodesic_points(&g.mul_unchecked(&g.inv(x), y))
            .iter()
            .map(|z| g.mul_unchecked(x, z))
            .collect();
        let region = Region::around(&self.p, &seeds, trunc_r, self.opts.cap, &domain)?;
        let bounds = self.hitting_bounds(&region, y, &domain)?;
        let (lo, hi) = bounds.at(region.index_of(x).unwrap());
        Ok(Interval::new(lo, hi))
    }

    /// Harmonic bounds for `u_Δ(·, y)` on a region.
    pub fn hitting_bounds<D>(&self, region: &Region, y: &Element, domain: D) -> Result<crate::region::HarmonicBounds>
    where
        D: Fn(&Element) -> bool,
    {
        let g = self.p.group();
        let target = region
            .index_of(y)
            .ok_or_else(|| Error::InvalidArgument("target outside the region".into()))?;
        let zeros = vec![0.0; region.exterior().len()];
        let upper: Vec<f64> = region
            .exterior()
            .iter()
            .map(|z| if domain(z) { self.hitting_upper(z, y) } else { 0.0 })
            .collect();
        let _ = g;
        region.harmonic(&[(target, 1.0)], &zeros, &upper, self.opts.tol, self.opts.max_sweeps)
    }

    /// Upper bound on `u(z, y)` used for exterior points.
    pub fn hitting_upper(&self, z: &Element, y: &Element) -> f64 {
        match &self.tree {
            Some(tw) => tw.u(z, y),
            None => self.decay.bound(self.p.group().dist(z, y)),
        }
    }

    /// `K_y(x)` by `G(x⁻¹y)/G(y)` and by `u(x,y)/u(e,y)`.
    pub fn martin_kernel(&self, y: &Element, x: &Element, eps: f64) -> Result<MartinValue> {
        let g = self.p.group();
        g.check(x)?;
        g.check(y)?;
        let e = g.identity();
        let gy = self.green(y, eps)?.green.interval();
        let gxy = self.green(&g.mul_unchecked(&g.inv(x), y), eps)?.green.interval();
        let green_ratio = Interval::ratio(&gxy, &gy);

        let mut seeds = g.geodesic_points(y);
        seeds.extend(g.geodesic_points(x));
        let region = Region::around(&self.p, &seeds, self.opts.width, self.opts.cap, |_| true)?;
        let b = self.hitting_bounds(&region, y, |_| true)?;
        let (xl, xh) = b.at(region.index_of(x).unwrap());
        let (el, eh) = b.at(region.index_of(&e).unwrap());
        let hitting_ratio = Interval::ratio(&Interval::new(xl, xh), &Interval::new(el, eh));
        let killed = xl / el;

        let (interval, consistent) = match green_ratio.intersect(&hitting_ratio) {
            Some(i) => (i, true),
            None => (
                Interval::new(
                    green_ratio.lower.min(hitting_ratio.lower),
                    green_ratio.upper.max(hitting_ratio.upper),
                ),
                false,
            ),
        };
        Ok(MartinValue {
            value: interval.mid(),
            interval,
            green_ratio,
            hitting_ratio,
            killed,
            consistent,
        })
    }

    /// `K_y(x)` on the tube of the given width: the ratio of the killed
    /// solutions as estimate and the rigorous interval from both bounds.
    pub fn kernel_in_tube(&self, y: &Element, x: &Element, width: usize) -> Result<KernelEstimate> {
        let g = self.p.group();
        if let Some(tw) = &self.tree {
            let v = tw.martin_kernel(y, x);
            return Ok(KernelEstimate {
                estimate: v,
                interval: Interval::point(v),
            });
        }
        let mut seeds = g.geodesic_points(y);
        seeds.extend(g.geodesic_points(x));
        let region = Region::around(&self.p, &seeds, width, self.opts.cap, |_| true)?;
        let b = self.hitting_bounds(&region, y, |_| true)?;
        let (xl, xh) = b.at(region.index_of(x).unwrap());
        let (el, eh) = b.at(region.index_of(&g.identity()).unwrap());
        Ok(KernelEstimate {
            estimate: xl / el,
            interval: Interval::ratio(&Interval::new(xl, xh), &Interval::new(el, eh)),
        })
    }

    /// `K_{γ(n)}(x)` with `γ(n)` the length-`n` prefix of a ray.
    pub fn kernel_at_prefix(&self, ray: &[Letter], n: usize, x: &Element) -> Result<KernelEstimate> {
        self.kernel_in_tube(&Element::Word(ray[..n].to_vec()), x, self.opts.width)
    }

    /// `K_ξ(x)` as the limit of `K_{γ(n)}(x)` along the ray, stopping when
    /// consecutive estimates differ by less than `tol`. Region estimates
    /// are then extrapolated in the tube width.
    pub fn martin_kernel_boundary(&self, ray: &[Letter], x: &Element, tol: f64) -> Result<BoundaryKernelValue> {
        let g = self.p.group();
        g.check(x)?;
        let word = Element::Word(ray.to_vec());
        if !g.is_tree_like() || g.check(&word).is_err() {
            return Err(Error::NotGeodesic("ray letters must form a normal-form word".into()));
        }
        if *x == g.identity() {
            return Ok(BoundaryKernelValue {
                value: 1.0,
                raw: 1.0,
                interval: Interval::point(1.0),
                rate: 0.0,
                terms: vec![(0, 1.0)],
                n_used: 0,
            });
        }
        let start = g.len(x) + 1;
        let stride = self.p.step_radius().max(1);
        let mut terms: Vec<(usize, f64)> = Vec::new();
        let mut last: Option<KernelEstimate> = None;
        let mut n = start;
        while n <= ray.len() {
            let k = self.kernel_at_prefix(ray, n, x)?;
            terms.push((n, k.estimate));
            if let Some(prev) = last {
                if (k.estimate - prev.estimate).abs() < tol {
                    let value = if self.tree.is_none() && self.opts.extrapolate {
                        self.width_extrapolate(&Element::Word(ray[..n].to_vec()), x, k.estimate)?
                    } else {
                        k.estimate
                    };
                    return Ok(BoundaryKernelValue {
                        value,
                        raw: k.estimate,
                        interval: k.interval,
                        rate: fitted_rate(&terms),
                        terms,
                        n_used: n,
                    });
                }
            }
            last = Some(k);
            n += stride;
        }
        Err(Error::NotCauchy {
            observed: terms.iter().map(|t| t.1).collect(),
        })
    }

    /// Aitken extrapolation over widths `w−2, w−1, w`. Falls back to the
    /// width-`w` value when the increments are not geometric.
    fn width_extrapolate(&self, y: &Element, x: &Element, at_w: f64) -> Result<f64> {
        let w = self.opts.width;
        if w < 3 {
            return Ok(at_w);
        }
        let k2 = self.kernel_in_tube(y, x, w - 2)?.estimate;
        let k1 = self.kernel_in_tube(y, x, w - 1)?.estimate;
        Ok(aitken(k2, k1, at_w).unwrap_or(at_w))
    }
}

/// Aitken Δ² limit of three consecutive terms; `None` unless the increments
/// share a sign and shrink.
pub fn aitken(k2: f64, k1: f64, k0: f64) -> Option<f64> {
    let (d1, d2) = (k1 - k2, k0 - k1);
    if d1 == 0.0 || d2 == 0.0 || d1.signum() != d2.signum() || d2.abs() >= d1.abs() {
        return None;
    }
    Some(k0 + d2 * d2 / (d1 - d2))
}

/// Geometric rate of successive differences, from a log-linear fit.
fn fitted_rate(terms: &[(usize, f64)]) -> f64 {
    let diffs: Vec<(f64, f64)> = terms
        .windows(2)
        .filter_map(|w| {
            let d = (w[1].1 - w[0].1).abs();
            (d > 1e-15).then_some((w[1].0 as f64, d.ln()))
        })
        .collect();
    if diffs.len() < 2 {
        return 0.0;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = diffs.into_iter().unzip();
    crate::linalg::linear_fit(&xs, &ys).map(|f| f.slope.exp().min(1.0)).unwrap_or(0.0)
}

/// Module-level entry points mirroring the engine methods.
pub fn green(p: &StepMeasure, x: &Element, eps: f64) -> Result<GreenReport> {
    GreenEngine::new(p, false)?.green(x, eps)
}

pub fn martin_kernel(p: &StepMeasure, y: &Element, x: &Element) -> Result<MartinValue> {
    GreenEngine::new(p, false)?.martin_kernel(y, x, 1e-10)
}

pub fn martin_kernel_boundary(p: &StepMeasure, ray: &[Letter], x: &Element, tol: f64) -> Result<BoundaryKernelValue> {
    GreenEngine::new(p, false)?.martin_kernel_boundary(ray, x, tol)
}
