//! Gram matrices and sampled positive semi-definiteness.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::domain::CPoint;
use crate::error::{Error, Result};
use crate::eval::KernelEvaluator;

/// Default relative tolerance for the psd verdict.
pub const PSD_TOL: f64 = 1e-9;
/// Points closer than this (in max-norm) count as duplicates.
pub const DUPLICATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsdVerdict {
    Psd,
    NotPsd,
}

#[derive(Debug, Clone, Serialize)]
pub struct GramReport {
    pub points: Vec<CPoint>,
    #[serde(serialize_with = "matrix_as_pairs")]
    pub matrix: DMatrix<Complex64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub verdict: PsdVerdict,
    pub tolerance: f64,
}

impl GramReport {
    pub fn is_psd(&self) -> bool {
        self.verdict == PsdVerdict::Psd
    }
}

/// Row-major rows of `[re, im]` pairs.
pub fn matrix_as_pairs<S: Serializer>(m: &DMatrix<Complex64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    pairs(m).serialize(s)
}

pub fn pairs(m: &DMatrix<Complex64>) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub(crate) fn reject_duplicates(points: &[CPoint]) -> Result<()> {
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = points[i]
                .coords()
                .iter()
                .zip(points[j].coords())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            if d <= DUPLICATE_TOL {
                return Err(Error::DuplicatePoints(i, j));
            }
        }
    }
    Ok(())
}

/// `(K(x_i, x_j))_{ij}`; entries are evaluated in parallel.
pub fn gram_matrix(k: &KernelEvaluator, points: &[CPoint]) -> Result<DMatrix<Complex64>> {
    let n = points.len();
    let entries: Vec<Complex64> = (0..n * n)
        .into_par_iter()
        .map(|idx| k.eval(&points[idx / n], &points[idx % n]))
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_row_slice(n, n, &entries))
}

/// Eigenvalues of a Hermitian matrix, ascending. The matrix is symmetrized
/// after checking that it is Hermitian to `herm_tol` relative accuracy.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>, herm_tol: f64) -> Result<Vec<f64>> {
    let dev = (m - m.adjoint()).norm();
    if dev > herm_tol * (1.0 + m.norm()) {
        return Err(Error::NotHermitian(dev));
    }
    let sym = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

pub fn psd_verdict(min: f64, max: f64, tol: f64) -> PsdVerdict {
    if min >= -tol * max.max(1.0) {
        PsdVerdict::Psd
    } else {
        PsdVerdict::NotPsd
    }
}

/// Gram matrix of `k` at `points` with an eigenvalue summary.
pub fn gram(k: &KernelEvaluator, points: &[CPoint], tol: f64) -> Result<GramReport> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("no points".into()));
    }
    reject_duplicates(points)?;
    let matrix = gram_matrix(k, points)?;
    let eigenvalues = hermitian_eigenvalues(&matrix, 1e-10)?;
    let min = eigenvalues[0];
    let max = *eigenvalues.last().unwrap();
    Ok(GramReport {
        points: points.to_vec(),
        matrix,
        eigenvalues,
        min_eigenvalue: min,
        max_eigenvalue: max,
        verdict: psd_verdict(min, max, tol),
        tolerance: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain;
    use crate::eval::compile_str;

    #[test]
    fn single_point_is_diagonal_sign() {
        let d = Domain::disk();
        let k = compile_str("fock", &d).unwrap();
        let r = gram(&k, &[CPoint::scalar(Complex64::new(0.2, 0.1))], PSD_TOL).unwrap();
        assert!(r.is_psd());
        assert_eq!(r.eigenvalues.len(), 1);
    }

    #[test]
    fn duplicates_rejected() {
        let d = Domain::disk();
        let k = compile_str("bergman", &d).unwrap();
        let p = CPoint::scalar(Complex64::new(0.2, 0.1));
        assert_eq!(gram(&k, &[p.clone(), p], PSD_TOL).unwrap_err(), Error::DuplicatePoints(0, 1));
    }

    #[test]
    fn serializes_pairs() {
        let d = Domain::disk();
        let k = compile_str("const(2)", &d).unwrap();
        let r = gram(&k, &[CPoint::scalar(Complex64::new(0.0, 0.0))], PSD_TOL).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["matrix"], serde_json::json!([[[2.0, 0.0]]]));
        assert_eq!(v["verdict"], "psd");
    }
}
