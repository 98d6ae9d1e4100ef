//! Exact computations for nearest-neighbour walks on free groups and free
//! products.
//!
//! Both Cayley graphs are trees of cliques (a clique per nontrivial coset
//! of a free factor), so every path from `e` to a word `x_1 ⋯ x_n` passes
//! through each prefix. With `F_s(z)` the first-passage generating
//! function from `e` to the letter `s` and `G(z)` the return series,
//!
//! ```text
//! Σ_n p^{(n)}(x) zⁿ = G(z) · F_{x_1}(z) ⋯ F_{x_n}(z),
//! ```
//!
//! which depends on `x` only through its letter counts. `F_s` is found from
//! a first-step decomposition: a step to `s` finishes, a step to `e` or to
//! another letter `t` of the same clique leaves a translated first passage
//! to `t⁻¹s`, and a step to any other letter has to come back through `e`.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::group::{Element, Group, Letter, Quotient};
use crate::linalg::xlogx;
use crate::walk::StepMeasure;

/// Upper bound on the number of letter-count vectors in [`TreeWalk::sequences`].
pub const COUNT_VECTOR_CAP: usize = 4_000_000;

#[derive(Clone, Debug)]
pub struct TreeWalk {
    group: Group,
    p_e: f64,
    /// Step probability per letter.
    p: Vec<f64>,
    /// `q_s = F_s(1)`, the probability of ever reaching `s` from `e`.
    q: Vec<f64>,
    green_e: f64,
    quot: Vec<Vec<Quotient>>,
}

/// Lumped `H_n`, `L_n` and total mass for `n = 0..=N`.
#[derive(Clone, Debug, PartialEq)]
pub struct LumpedSeries {
    pub entropy: Vec<f64>,
    pub escape: Vec<f64>,
    pub mass: Vec<f64>,
}

impl TreeWalk {
    pub fn new(measure: &StepMeasure) -> Result<Self> {
        if !measure.is_nearest_neighbor() {
            return Err(Error::Unsupported(
                "exact tree evaluation needs a nearest-neighbour measure on a free group or free product".into(),
            ));
        }
        let group = measure.group().clone();
        let k = group.alphabet_len();
        let mut p = vec![0.0; k];
        let mut p_e = 0.0;
        for (x, w) in measure.iter() {
            match x.letters() {
                [] => p_e = w,
                [l] => p[*l as usize] = w,
                _ => unreachable!(),
            }
        }
        let quot: Vec<Vec<Quotient>> = (0..k as Letter)
            .map(|t| (0..k as Letter).map(|s| group.letter_quotient(t, s)).collect())
            .collect();
        let mut tw = TreeWalk {
            group,
            p_e,
            p,
            q: vec![0.0; k],
            green_e: 0.0,
            quot,
        };
        tw.q = tw.solve_hitting()?;
        let ret: f64 = p_e + (0..k).map(|t| tw.p[t] * tw.q[tw.inv(t)]).sum::<f64>();
        if ret >= 1.0 {
            return Err(Error::SpectralRadiusNotBelowOne(ret));
        }
        tw.green_e = 1.0 / (1.0 - ret);
        Ok(tw)
    }

    fn inv(&self, t: usize) -> usize {
        self.group.letter_inverse(t as Letter) as usize
    }

    /// Monotone fixed-point iteration from 0 for the hitting probabilities.
    fn solve_hitting(&self) -> Result<Vec<f64>> {
        let k = self.p.len();
        let mut q = vec![0.0; k];
        for _ in 0..1_000_000 {
            let mut next = vec![0.0; k];
            let mut change: f64 = 0.0;
            for s in 0..k {
                let mut v = self.p[s] + self.p_e * q[s];
                for t in 0..k {
                    if t == s || self.p[t] == 0.0 {
                        continue;
                    }
                    v += self.p[t]
                        * match self.quot[t][s] {
                            Quotient::Letter(l) => q[l as usize],
                            Quotient::ThroughIdentity => q[self.inv(t)] * q[s],
                            Quotient::Identity => unreachable!(),
                        };
                }
                change = change.max((v - q[s]).abs());
                next[s] = v;
            }
            q = next;
            if change < 1e-17 {
                return Ok(q);
            }
        }
        Err(Error::NoConvergence("hitting probabilities".into()))
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    /// `q_s`, the probability of ever visiting the letter `s` from `e`.
    pub fn hitting(&self, s: Letter) -> f64 {
        self.q[s as usize]
    }

    pub fn hitting_all(&self) -> &[f64] {
        &self.q
    }

    pub fn step_prob(&self, s: Letter) -> f64 {
        self.p[s as usize]
    }

    pub fn identity_prob(&self) -> f64 {
        self.p_e
    }

    /// `u(e, x) = Π q_{x_i}` (with `u(e, e) = 1`).
    pub fn u_e(&self, x: &Element) -> f64 {
        x.letters().iter().map(|&l| self.q[l as usize]).product()
    }

    /// `u(x, y) = u(e, x⁻¹y)`.
    pub fn u(&self, x: &Element, y: &Element) -> f64 {
        self.u_e(&self.group.mul_unchecked(&self.group.inv(x), y))
    }

    pub fn green_e(&self) -> f64 {
        self.green_e
    }

    /// `G(x) = G(e) u(e, x)`.
    pub fn green(&self, x: &Element) -> f64 {
        self.green_e * self.u_e(x)
    }

    /// `K_y(x) = u(x, y) / u(e, y)`.
    pub fn martin_kernel(&self, y: &Element, x: &Element) -> f64 {
        self.u(x, y) / self.u_e(y)
    }

    /// `K_ξ(x)` for a ray given by its letters. The kernel is constant in
    /// `y = ξ_n` once `n ≥ |x| + 2`.
    pub fn boundary_kernel(&self, ray: &[Letter], x: &Element) -> Result<f64> {
        let need = self.group.len(x) + 2;
        if ray.len() < need {
            return Err(Error::InsufficientDepth(format!(
                "ray of length {} cannot resolve |x| = {}",
                ray.len(),
                self.group.len(x)
            )));
        }
        let y = Element::Word(ray[..need].to_vec());
        Ok(self.martin_kernel(&y, x))
    }

    /// Harmonic measure as a Markov chain on letters: first-letter masses
    /// `ν([t])` and transitions `P(s → t) = q_s ν([t]) / ν([s])`.
    ///
    /// `ν([s]) = q_s η_s` where `η_s` is the probability that the walk started
    /// at `s` stays in the cone of `s` forever; `η_s = Σ_{t after s} ν([t])`
    /// closes the system.
    pub fn harmonic_markov(&self) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let k = self.q.len();
        // Power iteration on η ↦ A diag(q) η, whose Perron root is 1.
        let mut eta = vec![1.0; k];
        let mut done = false;
        for _ in 0..100_000 {
            let mut next = vec![0.0; k];
            for s in 0..k {
                for t in 0..k {
                    if self.group.can_follow(s as Letter, t as Letter) {
                        next[s] += self.q[t] * eta[t];
                    }
                }
            }
            let norm: f64 = next.iter().sum();
            let mut change: f64 = 0.0;
            for s in 0..k {
                next[s] /= norm;
                change = change.max((next[s] - eta[s]).abs());
            }
            eta = next;
            if change < 1e-16 {
                done = true;
                break;
            }
        }
        if !done {
            return Err(Error::NoConvergence("harmonic measure eigenvector".into()));
        }
        let mut nu: Vec<f64> = (0..k).map(|t| self.q[t] * eta[t]).collect();
        let total: f64 = nu.iter().sum();
        nu.iter_mut().for_each(|v| *v /= total);
        let trans = (0..k)
            .map(|s| {
                let row: Vec<f64> = (0..k)
                    .map(|t| {
                        if self.group.can_follow(s as Letter, t as Letter) {
                            self.q[t] * eta[t]
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let z: f64 = row.iter().sum();
                row.into_iter().map(|v| v / z).collect()
            })
            .collect();
        Ok((nu, trans))
    }

    /// Coefficients `[z^n] F_s(z)` for `n = 0..=n_max`, indexed `[s][n]`.
    pub fn first_passage_series(&self, n_max: usize) -> Vec<Vec<f64>> {
        let k = self.p.len();
        let mut f = vec![vec![0.0; n_max + 1]; k];
        for n in 1..=n_max {
            for s in 0..k {
                let m = n - 1;
                let mut v = if m == 0 { self.p[s] } else { 0.0 };
                v += self.p_e * f[s][m];
                for t in 0..k {
                    if t == s || self.p[t] == 0.0 {
                        continue;
                    }
                    v += self.p[t]
                        * match self.quot[t][s] {
                            Quotient::Letter(l) => f[l as usize][m],
                            Quotient::ThroughIdentity => {
                                let a = &f[self.inv(t)];
                                let b = &f[s];
                                (1..m).map(|j| a[j] * b[m - j]).sum::<f64>()
                            }
                            Quotient::Identity => unreachable!(),
                        };
                }
                f[s][n] = v;
            }
        }
        f
    }

    /// Return probabilities `p^{(n)}(e)` for `n = 0..=n_max`.
    pub fn return_series(&self, n_max: usize) -> Vec<f64> {
        let f = self.first_passage_series(n_max);
        self.return_series_from(&f, n_max)
    }

    fn return_series_from(&self, f: &[Vec<f64>], n_max: usize) -> Vec<f64> {
        let k = self.p.len();
        // c = z (p_e + Σ_t p_t F_{t⁻¹}); G = 1 / (1 − c).
        let mut c = vec![0.0; n_max + 1];
        for kk in 1..=n_max {
            let m = kk - 1;
            let mut v = if m == 0 { self.p_e } else { 0.0 };
            for t in 0..k {
                v += self.p[t] * f[self.inv(t)][m];
            }
            c[kk] = v;
        }
        let mut g = vec![0.0; n_max + 1];
        g[0] = 1.0;
        for n in 1..=n_max {
            g[n] = (1..=n).map(|j| c[j] * g[n - j]).sum();
        }
        g
    }

    /// `p^{(n)}(x)` for `n = 0..=n_max`.
    pub fn transition_series(&self, x: &Element, n_max: usize) -> Vec<f64> {
        let f = self.first_passage_series(n_max);
        let mut acc = self.return_series_from(&f, n_max);
        for &l in x.letters() {
            acc = truncated_product(&acc, &f[l as usize], n_max);
        }
        acc
    }

    /// Exact `H_n`, `L_n` and total mass for `n = 0..=n_max`, lumping
    /// elements by their letter counts.
    pub fn sequences(&self, n_max: usize, exec: Exec) -> Result<LumpedSeries> {
        let k = self.p.len();
        let f = self.first_passage_series(n_max);
        let g = self.return_series_from(&f, n_max);
        let mut total_vectors: usize = 0;

        let mut entropy = vec![0.0; n_max + 1];
        let mut escape = vec![0.0; n_max + 1];
        let mut mass = vec![0.0; n_max + 1];

        // Layer 0: the empty word.
        let mut layer: Vec<Node> = vec![Node {
            counts: vec![0; k],
            series: {
                let mut s = vec![0.0; n_max + 1];
                s[0] = 1.0;
                s
            },
            words_by_last: vec![0.0; k],
            words: 1.0,
        }];
        accumulate(&layer[0], 0, &g, &mut entropy, &mut escape, &mut mass);

        for len in 1..=n_max {
            // Enumerate the count vectors of this layer in a fixed order.
            let mut index: HashMap<Vec<u16>, usize> = HashMap::new();
            let mut keys: Vec<Vec<u16>> = Vec::new();
            for node in &layer {
                for s in 0..k {
                    let mut c = node.counts.clone();
                    c[s] += 1;
                    if !index.contains_key(&c) {
                        index.insert(c.clone(), keys.len());
                        keys.push(c);
                    }
                }
            }
            total_vectors += keys.len();
            if total_vectors > COUNT_VECTOR_CAP {
                return Err(Error::CapExceeded {
                    needed: total_vectors,
                    cap: COUNT_VECTOR_CAP,
                });
            }
            let prev_index: HashMap<&[u16], usize> =
                layer.iter().enumerate().map(|(i, n)| (n.counts.as_slice(), i)).collect();
            let next: Vec<Node> = exec::map_collect(exec, &keys, |c| {
                let first = c.iter().position(|&v| v > 0).unwrap();
                let mut pred = c.clone();
                pred[first] -= 1;
                let base = &layer[prev_index[pred.as_slice()]];
                let series = truncated_product(&base.series, &f[first], n_max);
                let mut words_by_last = vec![0.0; k];
                for s in 0..k {
                    if c[s] == 0 {
                        continue;
                    }
                    let mut pc = c.clone();
                    pc[s] -= 1;
                    let prev = &layer[prev_index[pc.as_slice()]];
                    let w = if len == 1 {
                        1.0
                    } else {
                        (0..k)
                            .filter(|&t| self.group.can_follow(t as Letter, s as Letter))
                            .map(|t| prev.words_by_last[t])
                            .sum()
                    };
                    words_by_last[s] = w;
                }
                let words = words_by_last.iter().sum();
                Node {
                    counts: c.clone(),
                    series,
                    words_by_last,
                    words,
                }
            });
            let contributions = exec::map_collect(exec, &next, |node| {
                let mut e = vec![0.0; n_max + 1];
                let mut l = vec![0.0; n_max + 1];
                let mut m = vec![0.0; n_max + 1];
                accumulate(node, len, &g, &mut e, &mut l, &mut m);
                (e, l, m)
            });
            for (e, l, m) in contributions {
                for n in len..=n_max {
                    entropy[n] += e[n];
                    escape[n] += l[n];
                    mass[n] += m[n];
                }
            }
            layer = next;
        }
        Ok(LumpedSeries { entropy, escape, mass })
    }
}

struct Node {
    counts: Vec<u16>,
    /// `Π F_s^{c_s}` truncated at degree N.
    series: Vec<f64>,
    /// Number of normal-form words with these counts, by last letter.
    words_by_last: Vec<f64>,
    words: f64,
}

fn accumulate(node: &Node, len: usize, g: &[f64], entropy: &mut [f64], escape: &mut [f64], mass: &mut [f64]) {
    if node.words == 0.0 {
        return;
    }
    let n_max = g.len() - 1;
    for n in len..=n_max {
        let pn: f64 = (len..=n).map(|j| node.series[j] * g[n - j]).sum();
        if pn <= 0.0 {
            continue;
        }
        entropy[n] -= node.words * xlogx(pn);
        escape[n] += node.words * len as f64 * pn;
        mass[n] += node.words * pn;
    }
}

fn truncated_product(a: &[f64], b: &[f64], n_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    for (i, &x) in a.iter().enumerate().take(n_max + 1) {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate().take(n_max + 1 - i) {
            out[i + j] += x * y;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::Family;
    use crate::walk::{sparse_sequences, SparseDistribution};

    fn f2_uniform() -> StepMeasure {
        StepMeasure::uniform(Group::new(Family::Free { rank: 2 }).unwrap())
    }

    #[test]
    fn uniform_free_group_hitting() {
        let tw = TreeWalk::new(&f2_uniform()).unwrap();
        for s in 0..4 {
            assert!((tw.hitting(s) - 1.0 / 3.0).abs() < 1e-14);
        }
        assert!((tw.green_e() - 1.5).abs() < 1e-13);
    }

    #[test]
    fn lumped_series_matches_sparse_convolution() {
        let g = Group::new(Family::Free { rank: 2 }).unwrap();
        let p = StepMeasure::from_words(g, &[("a", 0.3), ("A", 0.1), ("b", 0.25), ("B", 0.2), ("e", 0.15)]).unwrap();
        let tw = TreeWalk::new(&p).unwrap();
        let lumped = tw.sequences(8, Exec::Parallel).unwrap();
        let sparse = sparse_sequences(&p, 8, 0.0, 10_000_000, Exec::Sequential).unwrap();
        for n in 0..=8 {
            assert!((lumped.entropy[n] - sparse.entropy.values[n]).abs() < 1e-11, "H_{n}");
            assert!((lumped.escape[n] - sparse.escape.values[n]).abs() < 1e-11, "L_{n}");
            assert!((lumped.mass[n] - 1.0).abs() < 1e-12);
        }
        let x = p.group().parse("aB").unwrap();
        let series = tw.transition_series(&x, 8);
        let mut d = SparseDistribution::delta_e(p.group());
        for n in 1..=8 {
            d = d.convolve(&p, 0.0, 10_000_000, Exec::Sequential).unwrap();
            assert!((series[n] - d.get(&x)).abs() < 1e-14);
        }
    }

    #[test]
    fn free_product_lumped_matches_sparse() {
        let g = Group::new(Family::FreeProduct { m: 2, n: 3 }).unwrap();
        let p = StepMeasure::from_words(g, &[("s", 0.5), ("t", 0.3), ("t^2", 0.2)]).unwrap();
        let tw = TreeWalk::new(&p).unwrap();
        let lumped = tw.sequences(10, Exec::Sequential).unwrap();
        let sparse = sparse_sequences(&p, 10, 0.0, 10_000_000, Exec::Sequential).unwrap();
        for n in 0..=10 {
            assert!((lumped.entropy[n] - sparse.entropy.values[n]).abs() < 1e-11);
            assert!((lumped.escape[n] - sparse.escape.values[n]).abs() < 1e-11);
        }
    }

    #[test]
    fn harmonic_markov_uniform() {
        let tw = TreeWalk::new(&f2_uniform()).unwrap();
        let (nu, trans) = tw.harmonic_markov().unwrap();
        for s in 0..4 {
            assert!((nu[s] - 0.25).abs() < 1e-14);
            let inv = s ^ 1;
            assert_eq!(trans[s][inv], 0.0);
            for t in 0..4 {
                if t != inv {
                    assert!((trans[s][t] - 1.0 / 3.0).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn boundary_kernel_along_a_ray() {
        let tw = TreeWalk::new(&f2_uniform()).unwrap();
        let g = tw.group().clone();
        let ray = vec![0u8; 10];
        assert!((tw.boundary_kernel(&ray, &g.parse("a").unwrap()).unwrap() - 3.0).abs() < 1e-12);
        assert!((tw.boundary_kernel(&ray, &g.parse("A").unwrap()).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((tw.boundary_kernel(&ray, &g.parse("b").unwrap()).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(tw.boundary_kernel(&ray[..2], &g.parse("ab").unwrap()).is_err());
    }
}
