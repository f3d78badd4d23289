//! Unitary-invariant metric profiles `(φ, ψ)` and the Hermitian tensors they pull
//! back through a kernel: `G = φ(K̂)·H + ψ(K̂)·g g*` with `H` the mixed Hessian and
//! `g` the holomorphic gradient of the diagonal.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize, Serializer};

use crate::domain::CPoint;
use crate::error::{Error, Result};
use crate::gram::pairs;
use crate::wirtinger::{contract, diagonal_derivatives, DiffConfig};

type C64 = Complex64;
type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Relative singular-value cutoff for numerical rank.
pub const RANK_RTOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProfileKind {
    Euclidean,
    FubiniStudy,
    Congruency { a: f64, b: f64 },
    Custom,
}

/// Sampled `φ`, `ψ` on an increasing grid of radii; interpolated by cubic Hermite
/// splines with finite-difference node slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileTable {
    #[serde(default = "default_table_name")]
    pub name: String,
    pub r: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

fn default_table_name() -> String {
    "custom".into()
}

#[derive(Debug, Clone)]
struct Spline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl Spline {
    fn new(x: &[f64], y: &[f64]) -> Self {
        let n = x.len();
        let m = (0..n)
            .map(|i| {
                if n == 2 {
                    (y[1] - y[0]) / (x[1] - x[0])
                } else if i == 0 {
                    three_point(x[0], x[1], x[2], y[0], y[1], y[2], x[0])
                } else if i == n - 1 {
                    three_point(x[n - 3], x[n - 2], x[n - 1], y[n - 3], y[n - 2], y[n - 1], x[n - 1])
                } else {
                    three_point(x[i - 1], x[i], x[i + 1], y[i - 1], y[i], y[i + 1], x[i])
                }
            })
            .collect();
        Self { x: x.to_vec(), y: y.to_vec(), m }
    }

    fn segment(&self, t: f64) -> Option<usize> {
        let (lo, hi) = (self.x[0], *self.x.last().unwrap());
        if !(t >= lo && t <= hi) {
            return None;
        }
        Some(self.x.partition_point(|&v| v <= t).clamp(1, self.x.len() - 1) - 1)
    }

    fn eval(&self, t: f64) -> Option<(f64, f64)> {
        let i = self.segment(t)?;
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (y0, y1, m0, m1) = (self.y[i], self.y[i + 1], self.m[i] * h, self.m[i + 1] * h);
        let (s2, s3) = (s * s, s * s * s);
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * m1;
        let d = ((6.0 * s2 - 6.0 * s) * y0 + (3.0 * s2 - 4.0 * s + 1.0) * m0 + (-6.0 * s2 + 6.0 * s) * y1 + (3.0 * s2 - 2.0 * s) * m1) / h;
        Some((v, d))
    }
}

/// Derivative at `t` of the quadratic through three points.
fn three_point(x0: f64, x1: f64, x2: f64, y0: f64, y1: f64, y2: f64, t: f64) -> f64 {
    y0 * (2.0 * t - x1 - x2) / ((x0 - x1) * (x0 - x2))
        + y1 * (2.0 * t - x0 - x2) / ((x1 - x0) * (x1 - x2))
        + y2 * (2.0 * t - x0 - x1) / ((x2 - x0) * (x2 - x1))
}

/// A pair `(φ, ψ)` on `(0, ∞)` defining a unitary-invariant Hermitian metric on
/// the dual space: `σ_κ(u, v) = φ(‖κ‖²)⟨u, v⟩ + ψ(‖κ‖²)⟨u, κ⟩⟨κ, v⟩`.
#[derive(Clone)]
pub struct MetricProfile {
    name: String,
    kind: ProfileKind,
    phi: RealFn,
    psi: RealFn,
    dphi: Option<RealFn>,
}

impl fmt::Debug for MetricProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MetricProfile({})", self.name)
    }
}

impl Serialize for MetricProfile {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.name.serialize(s)
    }
}

impl MetricProfile {
    pub fn euclidean() -> Self {
        Self {
            name: "euclidean".into(),
            kind: ProfileKind::Euclidean,
            phi: Arc::new(|_| 1.0),
            psi: Arc::new(|_| 0.0),
            dphi: Some(Arc::new(|_| 0.0)),
        }
    }

    pub fn fubini_study() -> Self {
        Self {
            name: "fubini-study".into(),
            kind: ProfileKind::FubiniStudy,
            phi: Arc::new(|r| 1.0 / r),
            psi: Arc::new(|r| -1.0 / (r * r)),
            dphi: Some(Arc::new(|r| -1.0 / (r * r))),
        }
    }

    /// `φ(t) = a/t`, `ψ(t) = b/t²`: the profiles invariant under congruencies.
    pub fn congruency(a: f64, b: f64) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidArgument("congruency parameters must be finite".into()));
        }
        Ok(Self {
            name: format!("congruency:{a},{b}"),
            kind: ProfileKind::Congruency { a, b },
            phi: Arc::new(move |t| a / t),
            psi: Arc::new(move |t| b / (t * t)),
            dphi: Some(Arc::new(move |t| -a / (t * t))),
        })
    }

    /// Profile from closures; `φ′` is differenced when `dphi` is `None`.
    pub fn custom(
        name: impl Into<String>,
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        psi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dphi: Option<RealFn>,
    ) -> Self {
        Self { name: name.into(), kind: ProfileKind::Custom, phi: Arc::new(phi), psi: Arc::new(psi), dphi }
    }

    /// Profile interpolated from a sampled table; undefined outside its range.
    pub fn from_table(t: &ProfileTable) -> Result<Self> {
        let n = t.r.len();
        if n < 2 || t.phi.len() != n || t.psi.len() != n {
            return Err(Error::InvalidArgument("profile table needs ≥ 2 rows of equal length".into()));
        }
        if t.r.iter().chain(&t.phi).chain(&t.psi).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("profile table entries must be finite".into()));
        }
        if t.r[0] <= 0.0 || t.r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("profile radii must be positive and increasing".into()));
        }
        let sp = Arc::new(Spline::new(&t.r, &t.phi));
        let ss = Arc::new(Spline::new(&t.r, &t.psi));
        let (a, b, c) = (sp.clone(), ss, sp);
        Ok(Self::custom(
            t.name.clone(),
            move |r| a.eval(r).map_or(f64::NAN, |v| v.0),
            move |r| b.eval(r).map_or(f64::NAN, |v| v.0),
            Some(Arc::new(move |r| c.eval(r).map_or(f64::NAN, |v| v.1))),
        ))
    }

    /// `euclidean`, `fubini-study` or `congruency:a,b`.
    pub fn by_name(spec: &str) -> Result<Self> {
        let s = spec.trim();
        match s {
            "euclidean" => Ok(Self::euclidean()),
            "fubini-study" | "fs" => Ok(Self::fubini_study()),
            _ => {
                let Some(rest) = s.strip_prefix("congruency:") else {
                    return Err(Error::UnknownName(s.to_string()));
                };
                let parts: Vec<&str> = rest.split(',').collect();
                if parts.len() != 2 {
                    return Err(Error::InvalidArgument(format!("expected congruency:a,b, got `{s}`")));
                }
                let a = crate::parse::parse_real(parts[0])?;
                let b = crate::parse::parse_real(parts[1])?;
                Self::congruency(a, b)
            }
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    fn checked(r: f64, v: f64) -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::ProfileUndefined(r))
        }
    }

    fn domain_check(r: f64) -> Result<()> {
        if r > 0.0 && r.is_finite() {
            Ok(())
        } else {
            Err(Error::ProfileUndefined(r))
        }
    }

    pub fn phi(&self, r: f64) -> Result<f64> {
        Self::domain_check(r)?;
        Self::checked(r, (self.phi)(r))
    }

    pub fn psi(&self, r: f64) -> Result<f64> {
        Self::domain_check(r)?;
        Self::checked(r, (self.psi)(r))
    }

    /// `φ′(r)`: closed form where known, Richardson-extrapolated central
    /// difference otherwise.
    pub fn dphi(&self, r: f64) -> Result<f64> {
        Self::domain_check(r)?;
        if let Some(d) = &self.dphi {
            return Self::checked(r, d(r));
        }
        let h0 = (f64::EPSILON.cbrt() * r.max(1.0)).min(r / 8.0);
        let diff = |h: f64| -> Result<f64> { Ok((self.phi(r + h)? - self.phi(r - h)?) / (2.0 * h)) };
        let (d0, d1, d2) = (diff(h0)?, diff(h0 / 2.0)?, diff(h0 / 4.0)?);
        let (e1, e2) = (d1 + (d1 - d0) / 3.0, d2 + (d2 - d1) / 3.0);
        Self::checked(r, e2 + (e2 - e1) / 15.0)
    }

    /// `φ(r) + r·ψ(r)`, the coefficient along the radial direction.
    pub fn radial(&self, r: f64) -> Result<f64> {
        Self::domain_check(r)?;
        match self.kind {
            ProfileKind::Euclidean => Ok(1.0),
            ProfileKind::FubiniStudy => Ok(0.0),
            ProfileKind::Congruency { a, b } => Ok((a + b) / r),
            ProfileKind::Custom => Ok(self.phi(r)? + r * self.psi(r)?),
        }
    }
}

/// Coefficients of a Hermitian form at `base`: `σ(u, v) = uᵀ·G·conj(v)`.
#[derive(Debug, Clone, Serialize)]
pub struct HermitianForm {
    pub base: CPoint,
    #[serde(serialize_with = "crate::gram::matrix_as_pairs")]
    pub matrix: DMatrix<C64>,
}

impl HermitianForm {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn eval(&self, u: &[C64], v: &[C64]) -> C64 {
        contract(&self.matrix, u, v)
    }

    pub fn hermitian_deviation(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).norm()
    }

    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.matrix.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn as_pairs(&self) -> Vec<Vec<[f64; 2]>> {
        pairs(&self.matrix)
    }
}

/// Ingredients of the tensor at a point.
#[derive(Debug, Clone)]
pub struct TensorParts {
    pub diag: f64,
    pub phi: f64,
    pub psi: f64,
    pub grad: DVector<C64>,
    pub hessian: DMatrix<C64>,
    pub form: HermitianForm,
}

fn symmetrize(m: DMatrix<C64>) -> DMatrix<C64> {
    (&m + m.adjoint()) * C64::new(0.5, 0.0)
}

pub fn metric_parts(k: &crate::eval::KernelEvaluator, p: &MetricProfile, x: &CPoint, cfg: &DiffConfig) -> Result<TensorParts> {
    let (r, g, h) = diagonal_derivatives(k, x, cfg)?;
    let (phi, psi) = (p.phi(r)?, p.psi(r)?);
    let outer = &g * g.adjoint();
    let g_mat = symmetrize(&h * C64::from(phi) + outer * C64::from(psi));
    Ok(TensorParts {
        diag: r,
        phi,
        psi,
        grad: g,
        hessian: h,
        form: HermitianForm { base: x.clone(), matrix: g_mat },
    })
}

/// The pulled-back tensor `G = φ(K̂)·H + ψ(K̂)·g g*` at `x`.
pub fn metric_tensor(k: &crate::eval::KernelEvaluator, p: &MetricProfile, x: &CPoint, cfg: &DiffConfig) -> Result<HermitianForm> {
    Ok(metric_parts(k, p, x, cfg)?.form)
}

fn grid_check(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if let Some(&r) = grid.iter().find(|r| !r.is_finite() || **r <= 0.0) {
        return Err(Error::ProfileUndefined(r));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileVerdict {
    pub pass: bool,
    /// Grid points where `φ > 0` or `φ + rψ > 0` fails.
    pub failures: Vec<f64>,
}

/// Sufficient test for positive-definiteness: `φ(r) > 0` and `φ(r) + rψ(r) > 0`
/// at every grid point.
pub fn profile_positive_definite(p: &MetricProfile, grid: &[f64]) -> Result<ProfileVerdict> {
    grid_check(grid)?;
    let mut failures = Vec::new();
    for &r in grid {
        if !(p.phi(r)? > 0.0 && p.radial(r)? > 0.0) {
            failures.push(r);
        }
    }
    Ok(ProfileVerdict { pass: failures.is_empty(), failures })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KahlerVerdict {
    Kahler,
    /// `ψ = φ′` and `φ + rψ ≡ 0`: Kähler but degenerate along the radial direction.
    KahlerDegenerate,
    NotKahler,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KahlerReport {
    pub verdict: KahlerVerdict,
    /// `max |ψ − φ′| / (1 + |ψ|)` over the grid.
    pub max_dev: f64,
    pub tol: f64,
}

/// `ψ = φ′` on the grid, within `tol·(1 + |ψ|)`.
pub fn is_kahler(p: &MetricProfile, grid: &[f64], tol: f64) -> Result<KahlerReport> {
    grid_check(grid)?;
    let mut max_dev: f64 = 0.0;
    let mut degenerate = true;
    for &r in grid {
        let (phi, psi, dphi) = (p.phi(r)?, p.psi(r)?, p.dphi(r)?);
        max_dev = max_dev.max((psi - dphi).abs() / (1.0 + psi.abs()));
        degenerate &= p.radial(r)?.abs() <= tol * (phi.abs() + (r * psi).abs());
    }
    let verdict = if max_dev > tol {
        KahlerVerdict::NotKahler
    } else if degenerate {
        KahlerVerdict::KahlerDegenerate
    } else {
        KahlerVerdict::Kahler
    };
    Ok(KahlerReport { verdict, max_dev, tol })
}

/// Numerical rank and null directions of the metric tensor at a point.
#[derive(Debug, Clone, Serialize)]
pub struct DegeneracyReport {
    pub rank: usize,
    /// Null directions `u` with `σ(u, u) ≈ 0`, normalized.
    pub nullspace: Vec<Vec<C64>>,
    pub singular_values: Vec<f64>,
    pub cutoff: f64,
    pub tensor: HermitianForm,
    /// For each null direction: `(u⊗ūK̂, |uK̂|²/K̂)`, which agree when `u` is a
    /// Fubini–Study null direction.
    pub certificates: Vec<(f64, f64)>,
}

/// Rank with singular values below `1e-8·max(σ_max, |φ|‖H‖ + |ψ|‖g‖²)` treated as zero;
/// the second scale catches tensors that cancel to rounding noise.
pub fn degeneracy_check(k: &crate::eval::KernelEvaluator, p: &MetricProfile, x: &CPoint, cfg: &DiffConfig) -> Result<DegeneracyReport> {
    let parts = metric_parts(k, p, x, cfg)?;
    let g_mat = &parts.form.matrix;
    let n = g_mat.nrows();
    let svd = g_mat.clone().svd(false, true);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let v_t = svd.v_t.expect("requested");
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let scale = parts.phi.abs() * parts.hessian.norm() + parts.psi.abs() * parts.grad.norm_squared();
    let cutoff = RANK_RTOL * smax.max(scale);
    let mut nullspace = Vec::new();
    let mut certificates = Vec::new();
    for (i, &s) in sv.iter().enumerate() {
        if s <= cutoff {
            // G w = 0 with w = row i of Vᴴ, adjointed; the form annihilates u = conj(w).
            let u: Vec<C64> = (0..n).map(|j| v_t[(i, j)]).collect();
            let hess = contract(&parts.hessian, &u, &u).re;
            let ug: C64 = u.iter().zip(parts.grad.iter()).map(|(a, b)| a * b).sum();
            certificates.push((hess, ug.norm_sqr() / parts.diag));
            nullspace.push(u);
        }
    }
    Ok(DegeneracyReport {
        rank: n - nullspace.len(),
        nullspace,
        singular_values: sv,
        cutoff,
        tensor: parts.form,
        certificates,
    })
}

// ---------------------------------------------------------------------------
// Real kernels

/// A smooth real symmetric kernel on ℝᵐ.
pub trait RealKernel: Send + Sync {
    fn value(&self, x: &[f64], y: &[f64]) -> f64;

    /// `∂²K/∂x_i∂y_j` at `(x, x)`; differenced by default.
    fn cross_hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let m = x.len();
        let h = f64::EPSILON.powf(0.25) * norm(x).max(1.0);
        DMatrix::from_fn(m, m, |i, j| {
            let at = |s: f64, t: f64| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[i] += s;
                b[j] += t;
                self.value(&a, &b)
            };
            (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h)
        })
    }

    /// Gradient of `x ↦ K(x, x)`; differenced by default.
    fn diag_gradient(&self, x: &[f64]) -> DVector<f64> {
        let h = f64::EPSILON.cbrt() * norm(x).max(1.0);
        DVector::from_fn(x.len(), |i, _| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            (self.value(&a, &a) - self.value(&b, &b)) / (2.0 * h)
        })
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `exp(−‖x − y‖²/2ℓ²)`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianRbf {
    pub length: f64,
}

impl RealKernel for GaussianRbf {
    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        (-d2 / (2.0 * self.length * self.length)).exp()
    }

    fn cross_hessian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(x.len(), x.len()) / (self.length * self.length)
    }

    fn diag_gradient(&self, x: &[f64]) -> DVector<f64> {
        DVector::zeros(x.len())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantRealKernel(pub f64);

impl RealKernel for ConstantRealKernel {
    fn value(&self, _x: &[f64], _y: &[f64]) -> f64 {
        self.0
    }

    fn cross_hessian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(x.len(), x.len())
    }

    fn diag_gradient(&self, x: &[f64]) -> DVector<f64> {
        DVector::zeros(x.len())
    }
}

/// `G = φ(K̂)·(∂_x∂_y K) + ¼ψ(K̂)·∇K̂ ∇K̂ᵀ` at `x`.
pub fn real_metric_tensor(k: &dyn RealKernel, p: &MetricProfile, x: &[f64]) -> Result<DMatrix<f64>> {
    if x.is_empty() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("real point must be non-empty and finite".into()));
    }
    let r = k.value(x, x);
    if r.is_nan() || r <= crate::eval::DIAG_TOL {
        return Err(Error::DegenerateDiagonal { point: format!("{x:?}"), value: r });
    }
    let g = k.diag_gradient(x);
    let m = k.cross_hessian(x) * p.phi(r)? + &g * g.transpose() * (0.25 * p.psi(r)?);
    Ok((&m + m.transpose()) * 0.5)
}
