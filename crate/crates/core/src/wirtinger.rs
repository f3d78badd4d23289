//! Wirtinger derivatives of kernels in each slot, and the gradient and mixed
//! Hessian of kernel diagonals.
//!
//! Derivatives are taken per slot on `K`: `∂_j` in the first slot and `∂̄_k` in
//! the second. Closed-form jets are used when available and preferred; otherwise
//! central differences with Richardson extrapolation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domain::CPoint;
use crate::error::{Error, Result};
use crate::eval::{Jet, KernelEvaluator};

type C64 = Complex64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// A tangent vector `Σ a_j ∂/∂z_j` at `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tangent {
    pub base: CPoint,
    pub coeffs: Vec<C64>,
}

impl Tangent {
    pub fn new(base: CPoint, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != base.dim() {
            return Err(Error::DimensionMismatch { expected: base.dim(), got: coeffs.len() });
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidArgument("tangent coefficients must be finite".into()));
        }
        Ok(Self { base, coeffs })
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.norm() == 0.0)
    }

    pub fn vector(&self) -> DVector<C64> {
        DVector::from_column_slice(&self.coeffs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffConfig {
    /// Difference step; `None` selects `ε^{1/3}·max(1, |x|)` for first derivatives.
    pub step: Option<f64>,
    pub richardson_levels: usize,
    pub prefer_analytic: bool,
}

impl Default for DiffConfig {
    fn default() -> Self {
        Self { step: None, richardson_levels: 2, prefer_analytic: true }
    }
}

impl DiffConfig {
    /// Always differences, even when closed forms exist.
    pub fn numeric() -> Self {
        Self { prefer_analytic: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(h) = self.step {
            if !h.is_finite() || h <= 0.0 {
                return Err(Error::InvalidArgument("step must be positive".into()));
            }
        }
        if self.richardson_levels == 0 {
            return Err(Error::InvalidArgument("richardson_levels must be at least 1".into()));
        }
        Ok(())
    }

    /// Step for first derivatives at `x`.
    pub fn first_step(&self, x: &CPoint) -> f64 {
        self.step.unwrap_or_else(|| f64::EPSILON.cbrt() * x.norm().max(1.0))
    }

    /// Step for nested (second-order) differences at `x`; `None` selects
    /// `ε^{1/6}·max(1, |x|)`, an explicit step is used as given.
    pub fn second_step(&self, x: &CPoint) -> f64 {
        self.step.unwrap_or_else(|| f64::EPSILON.powf(1.0 / 6.0) * x.norm().max(1.0))
    }
}

fn check_clearance(k: &KernelEvaluator, x: &CPoint, step: f64) -> Result<()> {
    k.domain().check_point(x)?;
    let clearance = k.domain().boundary_distance(x);
    if clearance <= 4.0 * step {
        return Err(Error::InsufficientClearance { clearance, step });
    }
    Ok(())
}

fn checked(v: C64) -> Result<C64> {
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("difference stencil".into()))
    }
}

/// Richardson-extrapolated central difference of `f` at 0 along the real
/// direction `dir` (a complex scalar multiple of a coordinate vector).
fn central<F>(f: &F, dir: C64, h: f64, levels: usize) -> Result<C64>
where
    F: Fn(C64) -> Result<C64>,
{
    let mut prev: Vec<C64> = Vec::with_capacity(levels + 1);
    for i in 0..=levels {
        let hi = h / f64::powi(2.0, i as i32);
        let d = (checked(f(dir * hi)?)? - checked(f(-dir * hi)?)?) / (2.0 * hi);
        let mut row = vec![d];
        for m in 1..=i {
            let factor = 4f64.powi(m as i32) - 1.0;
            let v = row[m - 1] + (row[m - 1] - prev[m - 1]) / factor;
            row.push(v);
        }
        prev = row;
    }
    Ok(prev[levels])
}

/// `∂/∂w` (`conj = false`) or `∂/∂w̄` (`conj = true`) at 0 of `f(w)`.
fn wirtinger_fd<F>(f: &F, conj: bool, h: f64, levels: usize) -> Result<C64>
where
    F: Fn(C64) -> Result<C64>,
{
    let dre = central(f, C64::new(1.0, 0.0), h, levels)?;
    let dim = central(f, I, h, levels)?;
    Ok(if conj { (dre + I * dim) * 0.5 } else { (dre - I * dim) * 0.5 })
}

/// `∂f/∂z_j` (`conj = false`) or `∂f/∂z̄_j` (`conj = true`) of a function of a
/// point, by differencing with the first-order step of `cfg`.
pub fn wirtinger_of<F>(f: F, x: &CPoint, j: usize, conj: bool, cfg: &DiffConfig) -> Result<C64>
where
    F: Fn(&CPoint) -> Result<C64>,
{
    cfg.validate()?;
    if j >= x.dim() {
        return Err(Error::InvalidArgument(format!("coordinate index {j} out of range")));
    }
    wirtinger_fd(&|t| f(&x.shifted(j, t)), conj, cfg.first_step(x), cfg.richardson_levels)
}

fn analytic_jet(k: &KernelEvaluator, x: &CPoint, y: &CPoint, cfg: &DiffConfig) -> Option<Result<Jet>> {
    if cfg.prefer_analytic {
        k.jet(x, y)
    } else {
        None
    }
}

fn check_index(k: &KernelEvaluator, j: usize) -> Result<()> {
    if j >= k.dim() {
        return Err(Error::InvalidArgument(format!("coordinate index {j} out of range")));
    }
    Ok(())
}

fn d1_fd(k: &KernelEvaluator, x: &CPoint, y: &CPoint, j: usize, h: f64, levels: usize) -> Result<C64> {
    wirtinger_fd(&|t| k.eval(&x.shifted(j, t), y), false, h, levels)
}

fn dbar2_fd(k: &KernelEvaluator, x: &CPoint, y: &CPoint, j: usize, h: f64, levels: usize) -> Result<C64> {
    wirtinger_fd(&|t| k.eval(x, &y.shifted(j, t)), true, h, levels)
}

/// `∂K/∂x_j` at `(x, y)`.
pub fn d1(k: &KernelEvaluator, x: &CPoint, y: &CPoint, j: usize, cfg: &DiffConfig) -> Result<C64> {
    check_index(k, j)?;
    if let Some(jet) = analytic_jet(k, x, y, cfg) {
        return Ok(jet?.d1[j]);
    }
    cfg.validate()?;
    let h = cfg.first_step(x);
    check_clearance(k, x, h)?;
    check_clearance(k, y, 0.0)?;
    d1_fd(k, x, y, j, h, cfg.richardson_levels)
}

/// `∂K/∂conj(y_k)` at `(x, y)`.
pub fn dbar2(k: &KernelEvaluator, x: &CPoint, y: &CPoint, idx: usize, cfg: &DiffConfig) -> Result<C64> {
    check_index(k, idx)?;
    if let Some(jet) = analytic_jet(k, x, y, cfg) {
        return Ok(jet?.dbar2[idx]);
    }
    cfg.validate()?;
    let h = cfg.first_step(y);
    check_clearance(k, x, 0.0)?;
    check_clearance(k, y, h)?;
    dbar2_fd(k, x, y, idx, h, cfg.richardson_levels)
}

/// `∂K̂/∂z_j` at `x`, i.e. the first-slot derivative on the diagonal.
pub fn grad_diag(k: &KernelEvaluator, x: &CPoint, cfg: &DiffConfig) -> Result<DVector<C64>> {
    if let Some(jet) = analytic_jet(k, x, x, cfg) {
        return Ok(jet?.d1);
    }
    cfg.validate()?;
    let h = cfg.first_step(x);
    check_clearance(k, x, h)?;
    let g = (0..k.dim())
        .map(|j| d1_fd(k, x, x, j, h, cfg.richardson_levels))
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(g))
}

/// `H_{jk} = ∂²K̂/∂z_j∂z̄_k` at `x`, as the mixed slot derivative of `K` at `(x, x)`.
pub fn mixed_hessian_diag(k: &KernelEvaluator, x: &CPoint, cfg: &DiffConfig) -> Result<DMatrix<C64>> {
    if let Some(jet) = analytic_jet(k, x, x, cfg) {
        return Ok(jet?.mixed);
    }
    cfg.validate()?;
    let h = cfg.second_step(x);
    check_clearance(k, x, h)?;
    let n = k.dim();
    let lv = cfg.richardson_levels;
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for c in 0..n {
            let inner = |t: C64| d1_fd(k, x, &x.shifted(c, t), j, h, lv);
            m[(j, c)] = wirtinger_fd(&inner, true, h, lv)?;
        }
    }
    Ok(m)
}

/// Gradient and mixed Hessian of the diagonal together with `K̂(x)`.
pub fn diagonal_derivatives(k: &KernelEvaluator, x: &CPoint, cfg: &DiffConfig) -> Result<(f64, DVector<C64>, DMatrix<C64>)> {
    let r = k.diag(x)?;
    if let Some(jet) = analytic_jet(k, x, x, cfg) {
        let jet = jet?;
        return Ok((r, jet.d1, jet.mixed));
    }
    Ok((r, grad_diag(k, x, cfg)?, mixed_hessian_diag(k, x, cfg)?))
}

/// `∂∂̄ log K̂ = H/K̂ − g g*/K̂²`.
pub fn log_mixed_hessian(k: &KernelEvaluator, x: &CPoint, cfg: &DiffConfig) -> Result<DMatrix<C64>> {
    let (r, g, h) = diagonal_derivatives(k, x, cfg)?;
    Ok(h / C64::from(r) - &g * g.adjoint() / C64::from(r * r))
}

/// Mixed Hessian of `log K̂` by differencing `log K̂` as a function of `2n` real
/// variables.
pub fn log_mixed_hessian_direct(k: &KernelEvaluator, x: &CPoint, cfg: &DiffConfig) -> Result<DMatrix<C64>> {
    cfg.validate()?;
    k.diag(x)?;
    let h = cfg.second_step(x);
    check_clearance(k, x, h)?;
    let n = k.dim();
    let f = |p: &CPoint| -> Result<f64> { Ok(k.diag(p)?.ln()) };
    let re = |j: usize| unit(n, j, C64::new(1.0, 0.0));
    let im = |j: usize| unit(n, j, I);
    let lv = cfg.richardson_levels;
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for c in 0..n {
            let aa = real_second(&f, x, &re(j), &re(c), h, lv)?;
            let bb = real_second(&f, x, &im(j), &im(c), h, lv)?;
            let ab = real_second(&f, x, &re(j), &im(c), h, lv)?;
            let ba = real_second(&f, x, &im(j), &re(c), h, lv)?;
            m[(j, c)] = C64::new(aa + bb, ab - ba) * 0.25;
        }
    }
    Ok(m)
}

fn unit(n: usize, j: usize, v: C64) -> Vec<C64> {
    let mut e = vec![C64::new(0.0, 0.0); n];
    e[j] = v;
    e
}

/// Richardson-extrapolated `∂²F/∂u∂v` for a real function along real directions
/// `u`, `v` of ℂⁿ ≅ ℝ²ⁿ.
fn real_second<F>(f: &F, x: &CPoint, u: &[C64], v: &[C64], h: f64, levels: usize) -> Result<f64>
where
    F: Fn(&CPoint) -> Result<f64>,
{
    let at = |s: f64, t: f64| -> Result<f64> {
        let dir: Vec<C64> = u.iter().zip(v).map(|(a, b)| a * s + b * t).collect();
        let val = f(&x.offset(&dir, 1.0))?;
        if val.is_finite() {
            Ok(val)
        } else {
            Err(Error::NonFinite("difference stencil".into()))
        }
    };
    let mut prev: Vec<f64> = Vec::with_capacity(levels + 1);
    for i in 0..=levels {
        let hi = h / f64::powi(2.0, i as i32);
        let d = (at(hi, hi)? - at(hi, -hi)? - at(-hi, hi)? + at(-hi, -hi)?) / (4.0 * hi * hi);
        let mut row = vec![d];
        for m in 1..=i {
            let factor = 4f64.powi(m as i32) - 1.0;
            row.push(row[m - 1] + (row[m - 1] - prev[m - 1]) / factor);
        }
        prev = row;
    }
    Ok(prev[levels])
}

/// `uᵀ·M·conj(v)`.
pub fn contract(m: &DMatrix<C64>, u: &[C64], v: &[C64]) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for (j, uj) in u.iter().enumerate() {
        for (c, vc) in v.iter().enumerate() {
            s += uj * m[(j, c)] * vc.conj();
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain;
    use crate::eval::compile_str;
    use std::f64::consts::PI;

    fn pt(re: f64, im: f64) -> CPoint {
        CPoint::scalar(C64::new(re, im))
    }

    #[test]
    fn fock_slot_derivatives() {
        let k = compile_str("fock", &Domain::full_space(1).unwrap()).unwrap();
        for cfg in [DiffConfig::default(), DiffConfig::numeric()] {
            assert!(d1(&k, &pt(0.0, 0.0), &pt(0.0, 0.0), 0, &cfg).unwrap().norm() < 1e-9);
            assert!((d1(&k, &pt(0.0, 0.0), &pt(1.0, 0.0), 0, &cfg).unwrap() - 1.0).norm() < 1e-9);
            assert!((dbar2(&k, &pt(1.0, 0.0), &pt(0.0, 0.0), 0, &cfg).unwrap() - 1.0).norm() < 1e-9);
        }
    }

    #[test]
    fn bergman_hessian_at_origin() {
        let k = compile_str("bergman", &Domain::disk()).unwrap();
        for cfg in [DiffConfig::default(), DiffConfig::numeric()] {
            let h = mixed_hessian_diag(&k, &pt(0.0, 0.0), &cfg).unwrap();
            assert!((h[(0, 0)] - 2.0 / PI).norm() < 1e-8, "{h}");
            let l = log_mixed_hessian(&k, &pt(0.0, 0.0), &cfg).unwrap();
            assert!((l[(0, 0)] - 2.0).norm() < 1e-7);
        }
        let l = log_mixed_hessian_direct(&k, &pt(0.0, 0.0), &DiffConfig::default()).unwrap();
        assert!((l[(0, 0)] - 2.0).norm() < 1e-6, "{l}");
    }

    #[test]
    fn clearance_enforced_for_differences() {
        let k = compile_str("bergman", &Domain::disk()).unwrap();
        let near = pt(1.0 - 1e-6, 0.0);
        let err = grad_diag(&k, &near, &DiffConfig::numeric()).unwrap_err();
        assert!(matches!(err, Error::InsufficientClearance { .. }));
    }
}
