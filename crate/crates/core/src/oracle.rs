//! Brute-force kernels of weighted Bergman spaces on the disk, built from the
//! monomial orthogonal basis.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::eval::{KernelEvaluator, SesquiKernel};
use crate::quadrature;

pub const DEFAULT_TRUNCATION: usize = 60;
pub const NORM_REL_TOL: f64 = 1e-12;

/// A positive radial weight `w(|z|)` on the unit disk.
#[derive(Clone)]
pub struct RadialWeight {
    name: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for RadialWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RadialWeight({})", self.name)
    }
}

impl RadialWeight {
    pub fn new(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Arc::new(f) }
    }

    /// `w ≡ 1`, i.e. plain area measure.
    pub fn unit() -> Self {
        Self::new("1", |_| 1.0)
    }

    /// `(π(1 − r²)²)^α`, the `−α`-th power of the disk Bergman diagonal.
    pub fn bergman_power(alpha: f64) -> Self {
        Self::new(format!("(pi*(1-r^2)^2)^{alpha}"), move |r| (PI * (1.0 - r * r).powi(2)).powf(alpha))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn at(&self, r: f64) -> f64 {
        (self.f)(r)
    }
}

/// `Σ_{k<N} (x·conj(y))^k / ‖z^k‖²_w`.
#[derive(Debug, Clone)]
pub struct SeriesKernel {
    weight: RadialWeight,
    inv_norms: Vec<f64>,
}

impl SeriesKernel {
    pub fn new(weight: RadialWeight, truncation: usize) -> Result<Self> {
        if truncation == 0 {
            return Err(Error::InvalidArgument("truncation must be at least 1".into()));
        }
        let inv_norms = (0..truncation)
            .map(|k| {
                let w = &weight;
                let p = 2 * k as i32 + 1;
                let norm = 2.0 * PI * quadrature::adaptive(|r| Ok(r.powi(p) * w.at(r)), 0.0, 1.0, NORM_REL_TOL)?;
                if !norm.is_finite() || norm <= 0.0 {
                    return Err(Error::NonPositiveNorm(k));
                }
                Ok(1.0 / norm)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { weight, inv_norms })
    }

    pub fn truncation(&self) -> usize {
        self.inv_norms.len()
    }

    /// `1/‖z^k‖²_w` for `k < N`.
    pub fn coefficients(&self) -> &[f64] {
        &self.inv_norms
    }
}

impl SesquiKernel for SeriesKernel {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, x: &[Complex64], y: &[Complex64]) -> Result<Complex64> {
        let t = x[0] * y[0].conj();
        Ok(self.inv_norms.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * t + c))
    }

    fn describe(&self) -> String {
        format!("series(w = {}, N = {})", self.weight.name, self.truncation())
    }
}

/// Truncated series kernel of the `w`-weighted Bergman space on the disk.
pub fn series_kernel_oracle(weight: RadialWeight, truncation: usize) -> Result<KernelEvaluator> {
    let k = SeriesKernel::new(weight, truncation)?;
    KernelEvaluator::from_kernel(Domain::disk(), Arc::new(k), true, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::CPoint;

    fn pt(re: f64) -> CPoint {
        CPoint::scalar(Complex64::new(re, 0.0))
    }

    #[test]
    fn unit_weight_origin() {
        let k = series_kernel_oracle(RadialWeight::unit(), DEFAULT_TRUNCATION).unwrap();
        assert!((k.eval(&pt(0.0), &pt(0.0)).unwrap().re - 1.0 / PI).abs() < 1e-12);
        assert!(!k.flags().analytic_derivatives);
    }

    #[test]
    fn unit_weight_matches_geometric_sum() {
        let k = series_kernel_oracle(RadialWeight::unit(), DEFAULT_TRUNCATION).unwrap();
        let v = k.eval(&pt(0.3), &pt(0.2)).unwrap();
        let want = 1.0 / (PI * (1.0f64 - 0.06).powi(2));
        assert!((v.re - want).abs() < 1e-10 && v.im.abs() < 1e-15);
    }

    #[test]
    fn norms_of_weighted_monomials() {
        // w = π(1−r²)²: ‖z^k‖² = 2π²∫ r^{2k+1}(1−r²)² dr = π²·2/((k+1)(k+2)(k+3)).
        let s = SeriesKernel::new(RadialWeight::bergman_power(1.0), 10).unwrap();
        for (k, c) in s.coefficients().iter().enumerate() {
            let kf = k as f64;
            let want = (kf + 1.0) * (kf + 2.0) * (kf + 3.0) / (2.0 * PI * PI);
            assert!((c - want).abs() < 1e-11 * want);
        }
    }
}
