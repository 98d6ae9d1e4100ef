//! Hilbert projective metric on finite nonnegative cones.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::walk::path_rng;

/// Nonnegative vector over a finite ordered index set, with the exponent
/// used for its norm.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConeVector {
    pub entries: Vec<f64>,
    pub t: f64,
}

impl ConeVector {
    pub fn new(entries: Vec<f64>, t: f64) -> Result<Self> {
        if !(t >= 1.0) {
            return Err(Error::InvalidArgument(format!("exponent {t} below 1")));
        }
        if entries.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("cone entries must be finite and nonnegative".into()));
        }
        Ok(ConeVector { entries, t })
    }

    pub fn uniform(n: usize, t: f64) -> Result<Self> {
        Self::new(vec![1.0; n], t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&v| v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|v| v.powf(self.t)).sum::<f64>().powf(1.0 / self.t)
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            return self.clone();
        }
        ConeVector {
            entries: self.entries.iter().map(|v| v / n).collect(),
            t: self.t,
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        ConeVector {
            entries: self.entries.iter().map(|v| v * a).collect(),
            t: self.t,
        }
    }
}

fn same_index(f: &ConeVector, g: &ConeVector) -> Result<()> {
    if f.len() != g.len() {
        return Err(Error::IndexMismatch(f.len(), g.len()));
    }
    Ok(())
}

/// `inf{s > 0 : s f − g ≥ 0}`.
pub fn tau(f: &ConeVector, g: &ConeVector) -> Result<f64> {
    same_index(f, g)?;
    if f.is_zero() {
        return Err(Error::InvalidArgument("tau needs a nonzero first argument".into()));
    }
    let mut s: f64 = 0.0;
    for (a, b) in f.entries.iter().zip(&g.entries) {
        if *b > 0.0 {
            if *a == 0.0 {
                return Ok(f64::INFINITY);
            }
            s = s.max(b / a);
        }
    }
    Ok(s)
}

/// `ϑ(f, g) = ln[τ(f,g) τ(g,f)]`.
pub fn theta(f: &ConeVector, g: &ConeVector) -> Result<f64> {
    if g.is_zero() {
        return Err(Error::InvalidArgument("theta needs nonzero arguments".into()));
    }
    let a = tau(f, g)?;
    let b = tau(g, f)?;
    if a.is_infinite() || b.is_infinite() {
        return Ok(f64::INFINITY);
    }
    // Guard against rounding below zero for proportional vectors.
    Ok((a * b).ln().max(0.0))
}

/// Nonnegative matrix mapping the cone over its columns into the cone over
/// its rows.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PositiveOperator {
    pub rows: Vec<Vec<f64>>,
    pub diameter_certificate: Option<f64>,
}

impl PositiveOperator {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged operator rows".into()));
        }
        if rows.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("operator entries must be finite and nonnegative".into()));
        }
        Ok(PositiveOperator {
            rows,
            diameter_certificate: None,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }

    pub fn apply(&self, f: &ConeVector) -> Result<ConeVector> {
        if f.len() != self.n_cols() {
            return Err(Error::IndexMismatch(f.len(), self.n_cols()));
        }
        let entries = self
            .rows
            .iter()
            .map(|r| r.iter().zip(&f.entries).map(|(a, b)| a * b).sum())
            .collect();
        Ok(ConeVector { entries, t: f.t })
    }

    pub fn column(&self, j: usize, t: f64) -> ConeVector {
        ConeVector {
            entries: self.rows.iter().map(|r| r[j]).collect(),
            t,
        }
    }

    /// Columns with at least one positive entry.
    pub fn active_columns(&self) -> Vec<usize> {
        (0..self.n_cols())
            .filter(|&j| self.rows.iter().any(|r| r[j] > 0.0))
            .collect()
    }

    /// Computes and stores the projective diameter of the image cone.
    pub fn certify(&mut self, n_samples: usize, seed: u64) -> Result<f64> {
        let d = operator_diameter(self, n_samples, seed)?;
        self.diameter_certificate = Some(d);
        Ok(d)
    }
}

/// Projective diameter of `A(C)`.
///
/// The image cone is spanned by the images of the active columns, so the
/// maximum of `ϑ` over column pairs is exact; `n_samples` random positive
/// pairs supply an independent lower bound that must not exceed it.
pub fn operator_diameter(a: &PositiveOperator, n_samples: usize, seed: u64) -> Result<f64> {
    let active = a.active_columns();
    if active.is_empty() {
        return Err(Error::DegenerateOperator("operator has no active column".into()));
    }
    if a.rows.iter().all(|r| active.iter().all(|&j| r[j] == 0.0)) {
        return Err(Error::DegenerateOperator("all rows vanish".into()));
    }
    let cols: Vec<ConeVector> = active.iter().map(|&j| a.column(j, 2.0)).collect();
    let mut exact: f64 = 0.0;
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            exact = exact.max(theta(&cols[i], &cols[j])?);
        }
    }
    let mut rng = path_rng(seed, 0);
    let n = a.n_cols();
    for _ in 0..n_samples {
        let f = ConeVector::new((0..n).map(|_| rng.gen_range(0.01..1.0)).collect(), 2.0)?;
        let g = ConeVector::new((0..n).map(|_| rng.gen_range(0.01..1.0)).collect(), 2.0)?;
        let sampled = theta(&a.apply(&f)?, &a.apply(&g)?)?;
        if sampled > exact * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::DegenerateOperator(format!(
                "sampled diameter {sampled} exceeds column bound {exact}"
            )));
        }
    }
    Ok(exact)
}

/// Birkhoff contraction coefficient `tanh(D/4)`.
pub fn birkhoff_beta(diam: f64) -> Result<f64> {
    if diam.is_nan() || diam < 0.0 {
        return Err(Error::InvalidArgument(format!("negative diameter {diam}")));
    }
    Ok(if diam.is_infinite() { 1.0 } else { (diam / 4.0).tanh() })
}

/// Both sides of `‖f − g‖_t ≤ (e^{ϑ(f,g)} − 1) ‖f‖_t` for equal-norm
/// vectors.
pub fn liverani_gap(f: &ConeVector, g: &ConeVector) -> Result<(f64, f64)> {
    same_index(f, g)?;
    let (nf, ng) = (f.norm(), g.norm());
    if (nf - ng).abs() > 1e-12 * nf.max(1.0) {
        return Err(Error::NormMismatch(nf, ng));
    }
    let lhs = f
        .entries
        .iter()
        .zip(&g.entries)
        .map(|(a, b)| (a - b).abs().powf(f.t))
        .sum::<f64>()
        .powf(1.0 / f.t);
    let th = theta(f, g)?;
    let rhs = if th.is_infinite() { f64::INFINITY } else { th.exp_m1() * nf };
    if lhs > rhs + 1e-12 * nf.max(1.0) {
        return Err(Error::DegenerateOperator(format!("norm gap {lhs} above {rhs}")));
    }
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cv(v: &[f64]) -> ConeVector {
        ConeVector::new(v.to_vec(), 2.0).unwrap()
    }

    #[test]
    fn tau_cases() {
        assert_eq!(tau(&cv(&[1.0, 1.0]), &cv(&[2.0, 1.0])).unwrap(), 2.0);
        assert_eq!(tau(&cv(&[1.0, 2.0]), &cv(&[1.0, 2.0])).unwrap(), 1.0);
        assert_eq!(tau(&cv(&[1.0, 0.0]), &cv(&[0.0, 1.0])).unwrap(), f64::INFINITY);
        assert!(tau(&cv(&[1.0]), &cv(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn theta_cases() {
        let t = theta(&cv(&[1.0, 1.0]), &cv(&[2.0, 1.0])).unwrap();
        assert!((t - 2f64.ln()).abs() < 1e-15);
        assert_eq!(theta(&cv(&[3.0, 6.0]), &cv(&[1.0, 2.0])).unwrap(), 0.0);
    }

    #[test]
    fn diameters() {
        let a = PositiveOperator::new(vec![vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let d = operator_diameter(&a, 200, 1).unwrap();
        assert!((d - 4f64.ln()).abs() < 1e-14);
        let same = PositiveOperator::new(vec![vec![1.0, 1.0], vec![3.0, 3.0]]).unwrap();
        assert_eq!(operator_diameter(&same, 50, 1).unwrap(), 0.0);
        let id = PositiveOperator::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(operator_diameter(&id, 50, 1).unwrap(), f64::INFINITY);
        let zero = PositiveOperator::new(vec![vec![0.0, 0.0]]).unwrap();
        assert!(operator_diameter(&zero, 1, 1).is_err());
    }

    #[test]
    fn beta_values() {
        assert_eq!(birkhoff_beta(0.0).unwrap(), 0.0);
        assert_eq!(birkhoff_beta(f64::INFINITY).unwrap(), 1.0);
        assert!(birkhoff_beta(-1.0).is_err());
    }

    #[test]
    fn liverani_equal_vectors() {
        let f = cv(&[0.6, 0.8]);
        assert_eq!(liverani_gap(&f, &f).unwrap(), (0.0, 0.0));
        assert!(matches!(liverani_gap(&f, &cv(&[1.0, 1.0])), Err(Error::NormMismatch(..))));
    }
}
