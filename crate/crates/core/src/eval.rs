//! Compiled kernel evaluators.
//!
//! A [`KernelEvaluator`] is an immutable tree of [`SesquiKernel`] nodes bound to a
//! [`Domain`]. Catalog leaves and every algebra node provide closed-form first
//! derivatives in each slot and the mixed second derivative ([`Jet`]); custom
//! kernels (e.g. the series oracle) may opt out, in which case callers fall back to
//! finite differences.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{CPoint, Domain, DomainKind};
use crate::error::{Error, Result};
use crate::holo::{HoloExpr, HoloFn, HoloMap};
use crate::kernel::KernelExpr;

type C64 = Complex64;

/// Diagonal values at or below this are treated as degenerate.
pub const DIAG_TOL: f64 = 1e-14;

/// Number of sample points used to guard power and rescale nodes.
pub const GUARD_SAMPLES: usize = 200;
const GUARD_SEED: u64 = 0x6b6d_6c5f_6775_6172;
/// A rescaling weight smaller than this at a sample point counts as vanishing.
const WEIGHT_FLOOR: f64 = 1e-12;

/// Value and derivatives of a sesqui-holomorphic kernel at `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: C64,
    /// ∂K/∂x_j
    pub d1: DVector<C64>,
    /// ∂K/∂conj(y_k)
    pub dbar2: DVector<C64>,
    /// ∂²K/∂x_j∂conj(y_k)
    pub mixed: DMatrix<C64>,
}

impl Jet {
    fn constant(value: C64, n: usize) -> Self {
        Self {
            value,
            d1: DVector::zeros(n),
            dbar2: DVector::zeros(n),
            mixed: DMatrix::zeros(n, n),
        }
    }
}

/// A sesqui-holomorphic function of two points of ℂⁿ.
pub trait SesquiKernel: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[C64], y: &[C64]) -> Result<C64>;

    /// Closed-form derivatives, when available.
    fn jet(&self, _x: &[C64], _y: &[C64]) -> Option<Result<Jet>> {
        None
    }

    /// A branch of `log K` that is continuous on the domain where one is known;
    /// defaults to the principal logarithm of the value.
    fn log_value(&self, x: &[C64], y: &[C64]) -> Result<C64> {
        principal_log(self.value(x, y)?, "kernel")
    }

    fn describe(&self) -> String;
}

/// A holomorphic self-map with a closed-form Jacobian.
pub trait PointMap: Send + Sync {
    fn dim(&self) -> usize;
    fn apply(&self, z: &[C64]) -> Result<Vec<C64>>;
    /// Entry `(l, j)` is ∂Φ_l/∂z_j.
    fn jacobian(&self, z: &[C64]) -> Result<DMatrix<C64>>;
    fn describe(&self) -> String;
}

impl PointMap for HoloMap {
    fn dim(&self) -> usize {
        HoloMap::dim(self)
    }

    fn apply(&self, z: &[C64]) -> Result<Vec<C64>> {
        HoloMap::apply(self, z)
    }

    fn jacobian(&self, z: &[C64]) -> Result<DMatrix<C64>> {
        let rows = HoloMap::jacobian(self, z)?;
        let n = rows.len();
        Ok(DMatrix::from_fn(n, n, |l, j| rows[l][j]))
    }

    fn describe(&self) -> String {
        let parts: Vec<String> = self.exprs().map(|e| e.to_string()).collect();
        format!("[{}]", parts.join(", "))
    }
}

fn principal_log(v: C64, what: &str) -> Result<C64> {
    if v.norm() == 0.0 {
        return Err(Error::Pole(format!("log of vanishing {what}")));
    }
    Ok(v.ln())
}

fn finite(v: C64, what: &str) -> Result<C64> {
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

fn inner(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a * b.conj()).sum()
}

// ---------------------------------------------------------------------------
// Leaves

/// `c·(1 − ⟨x, y⟩)^(−p)`: Bergman (p = n+1) and Szegő (p = n) kernels of the ball.
#[derive(Debug, Clone)]
struct BallLeaf {
    n: usize,
    coeff: f64,
    p: i32,
    name: &'static str,
}

impl SesquiKernel for BallLeaf {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[C64], y: &[C64]) -> Result<C64> {
        let t = C64::new(1.0, 0.0) - inner(x, y);
        finite(t.powi(-self.p) * self.coeff, self.name)
    }

    fn jet(&self, x: &[C64], y: &[C64]) -> Option<Result<Jet>> {
        let n = self.n;
        let p = self.p as f64;
        let t = C64::new(1.0, 0.0) - inner(x, y);
        let k1 = t.powi(-self.p - 1) * (self.coeff * p);
        let k2 = t.powi(-self.p - 2) * (self.coeff * p * (p + 1.0));
        let value = t.powi(-self.p) * self.coeff;
        let d1 = DVector::from_fn(n, |j, _| k1 * y[j].conj());
        let dbar2 = DVector::from_fn(n, |k, _| k1 * x[k]);
        let mixed = DMatrix::from_fn(n, n, |j, k| {
            let delta = if j == k { k1 } else { C64::new(0.0, 0.0) };
            k2 * y[j].conj() * x[k] + delta
        });
        Some(finite(value, self.name).map(|value| Jet { value, d1, dbar2, mixed }))
    }

    fn log_value(&self, x: &[C64], y: &[C64]) -> Result<C64> {
        // Re(1 − ⟨x,y⟩) > 0 on the ball, so the principal log is continuous there.
        let t = C64::new(1.0, 0.0) - inner(x, y);
        Ok(C64::new(self.coeff.ln(), 0.0) - t.ln() * self.p as f64)
    }

    fn describe(&self) -> String {
        self.name.to_string()
    }
}

/// `c·Π (1 − x_i·conj(y_i))^(−p)`: Bergman (p = 2) and Szegő (p = 1) kernels of the polydisk.
#[derive(Debug, Clone)]
struct PolydiskLeaf {
    n: usize,
    coeff: f64,
    p: i32,
    name: &'static str,
}

impl PolydiskLeaf {
    fn factors(x: &[C64], y: &[C64]) -> Vec<C64> {
        x.iter().zip(y).map(|(a, b)| C64::new(1.0, 0.0) - a * b.conj()).collect()
    }
}

impl SesquiKernel for PolydiskLeaf {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[C64], y: &[C64]) -> Result<C64> {
        let v = Self::factors(x, y)
            .iter()
            .fold(C64::new(self.coeff, 0.0), |acc, t| acc * t.powi(-self.p));
        finite(v, self.name)
    }

    fn jet(&self, x: &[C64], y: &[C64]) -> Option<Result<Jet>> {
        let n = self.n;
        let p = self.p as f64;
        let t = Self::factors(x, y);
        let value = match self.value(x, y) {
            Ok(v) => v,
            Err(e) => return Some(Err(e)),
        };
        let d1 = DVector::from_fn(n, |j, _| value * p * y[j].conj() / t[j]);
        let dbar2 = DVector::from_fn(n, |k, _| value * p * x[k] / t[k]);
        let mixed = DMatrix::from_fn(n, n, |j, k| {
            if j == k {
                value * (y[j].conj() * x[j] * (p * (p + 1.0)) / (t[j] * t[j]) + p / t[j])
            } else {
                value * (p * p) * y[j].conj() * x[k] / (t[j] * t[k])
            }
        });
        Some(Ok(Jet { value, d1, dbar2, mixed }))
    }

    fn log_value(&self, x: &[C64], y: &[C64]) -> Result<C64> {
        let s: C64 = Self::factors(x, y).iter().map(|t| t.ln()).sum();
        Ok(C64::new(self.coeff.ln(), 0.0) - s * self.p as f64)
    }

    fn describe(&self) -> String {
        self.name.to_string()
    }
}

#[derive(Debug, Clone)]
struct FockLeaf {
    n: usize,
}

impl SesquiKernel for FockLeaf {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[C64], y: &[C64]) -> Result<C64> {
        finite(inner(x, y).exp(), "fock")
    }

    fn jet(&self, x: &[C64], y: &[C64]) -> Option<Result<Jet>> {
        let n = self.n;
        let value = match self.value(x, y) {
            Ok(v) => v,
            Err(e) => return Some(Err(e)),
        };
        let d1 = DVector::from_fn(n, |j, _| value * y[j].conj());
        let dbar2 = DVector::from_fn(n, |k, _| value * x[k]);
        let mixed = DMatrix::from_fn(n, n, |j, k| {
            let delta = if j == k { 1.0 } else { 0.0 };
            value * (y[j].conj() * x[k] + delta)
        });
        Some(Ok(Jet { value, d1, dbar2, mixed }))
    }

    fn log_value(&self, x: &[C64], y: &[C64]) -> Result<C64> {
        Ok(inner(x, y))
    }

    fn describe(&self) -> String {
        "fock".into()
    }
}

#[derive(Debug, Clone)]
struct ConstLeaf {
    n: usize,
    c: f64,
}

impl SesquiKernel for ConstLeaf {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, _x: &[C64], _y: &[C64]) -> Result<C64> {
        Ok(C64::new(self.c, 0.0))
    }

    fn jet(&self, _x: &[C64], _y: &[C64]) -> Option<Result<Jet>> {
        Some(Ok(Jet::constant(C64::new(self.c, 0.0), self.n)))
    }

    fn log_value(&self, _x: &[C64], _y: &[C64]) -> Result<C64> {
        Ok(C64::new(self.c.ln(), 0.0))
    }

    fn describe(&self) -> String {
        format!("const({:?})", self.c)
    }
}

#[derive(Debug, Clone)]
struct Rank1Leaf {
    n: usize,
    h: HoloFn,
}

impl SesquiKernel for Rank1Leaf {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[C64], y: &[C64]) -> Result<C64> {
        finite(self.h.value(x)? * self.h.value(y)?.conj(), "rank1")
    }

    fn jet(&self, x: &[C64], y: &[C64]) -> Option<Result<Jet>> {
        Some((|| {
            let hx = self.h.value(x)?;
            let hy = self.h.value(y)?.conj();
            let gx = DVector::from_vec(self.h.gradient(x)?);
            let gy = DVector::from_vec(self.h.gradient(y)?).map(|c| c.conj());
            Ok(Jet {
                value: finite(hx * hy, "rank1")?,
                d1: &gx * hy,
                dbar2: &gy * hx,
                mixed: &gx * gy.transpose(),
            })
        })())
    }

    fn describe(&self) -> String {
        format!("rank1({})", self.h.expr())
    }
}

/// Raw expression `E(x, conj(y))` over `2n` holomorphic variables.
#[derive(Debug, Clone)]
struct SesquiLeaf {
    n: usize,
    expr: HoloExpr,
    d1: Vec<HoloExpr>,
    dbar2: Vec<HoloExpr>,
    mixed: Vec<Vec<HoloExpr>>,
}

impl SesquiLeaf {
    fn new(expr: HoloExpr, n: usize) -> Result<Self> {
        if let Some(m) = expr.max_var() {
            if m >= 2 * n {
                return Err(Error::DimensionMismatch { expected: n, got: m - n + 1 });
            }
        }
        let d1: Vec<HoloExpr> = (0..n).map(|j| expr.derivative(j)).collect();
        let dbar2 = (0..n).map(|k| expr.derivative(n + k)).collect();
        let mixed = d1.iter().map(|dj| (0..n).map(|k| dj.derivative(n + k)).collect()).collect();
        Ok(Self { n, expr, d1, dbar2, mixed })
    }

    fn vars(x: &[C64], y: &[C64]) -> Vec<C64> {
        x.iter().copied().chain(y.iter().map(|c| c.conj())).collect()
    }
}

impl SesquiKernel for SesquiLeaf {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[C64], y: &[C64]) -> Result<C64> {
        self.expr.eval(&Self::vars(x, y))
    }

    fn jet(&self, x: &[C64], y: &[C64]) -> Option<Result<Jet>> {
        let v = Self::vars(x, y);
        let n = self.n;
        Some((|| {
            let d1 = self.d1.iter().map(|e| e.eval(&v)).collect::<Result<Vec<_>>>()?;
            let dbar2 = self.dbar2.iter().map(|e| e.eval(&v)).collect::<Result<Vec<_>>>()?;
            let mut mixed = DMatrix::zeros(n, n);
            for j in 0..n {
                for k in 0..n {
                    mixed[(j, k)] = self.mixed[j][k].eval(&v)?;
                }
            }
            Ok(Jet {
                value: self.expr.eval(&v)?,
                d1: DVector::from_vec(d1),
                dbar2: DVector::from_vec(dbar2),
                mixed,
            })
        })())
    }

    fn describe(&self) -> String {
        format!("sesqui({})", self.expr.display_with(crate::holo::VarNames::Sesqui { n: self.n }))
    }
}

// ---------------------------------------------------------------------------
// Algebra nodes

struct ProductNode {
    a: Arc<dyn SesquiKernel>,
    b: Arc<dyn SesquiKernel>,
}

impl SesquiKernel for ProductNode {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn value(&self, x: &[C64], y: &[C64]) -> Result<C64> {
        finite(self.a.value(x, y)? * self.b.value(x, y)?, "product")
    }

    fn jet(&self, x: &[C64], y: &[C64]) -> Option<Result<Jet>> {
        let ja = self.a.jet(x, y)?;
        let jb = self.b.jet(x, y)?;
        Some((|| {
            let (a, b) = (ja?, jb?);
            Ok(Jet {
                value: a.value * b.value,
                d1: &a.d1 * b.value + &b.d1 * a.value,
                dbar2: &a.dbar2 * b.value + &b.dbar2 * a.value,
                mixed: &a.mixed * b.value
                    + &a.d1 * b.dbar2.transpose()
                    + &b.d1 * a.dbar2.transpose()
                    + &b.mixed * a.value,
            })
        })())
    }

    fn log_value(&self, x: &[C64], y: &[C64]) -> Result<C64> {
        Ok(self.a.log_value(x, y)? + self.b.log_value(x, y)?)
    }

    fn describe(&self) -> String {
        format!("product({}, {})", self.a.describe(), self.b.describe())
    }
}

struct PowerNode {
    base: Arc<dyn SesquiKernel>,
    exponent: f64,
}

impl PowerNode {
    fn integer(&self) -> Option<i32> {
        KernelExpr::is_integer_power(self.exponent).then_some(self.exponent as i32)
    }

    /// `(K^s, s·K^(s−1), s(s−1)·K^(s−2))`.
    fn chain(&self, k: C64, x: &[C64], y: &[C64]) -> Result<(C64, C64, C64)> {
        let s = self.exponent;
        match self.integer() {
            Some(m) => {
                if m < 0 && k.norm() == 0.0 {
                    return Err(Error::Pole("negative power of a vanishing kernel".into()));
                }
                let p0 = k.powi(m);
                let p1 = if m == 0 { C64::new(0.0, 0.0) } else { k.powi(m - 1) * s };
                let p2 = if m == 0 || m == 1 { C64::new(0.0, 0.0) } else { k.powi(m - 2) * (s * (s - 1.0)) };
                Ok((p0, p1, p2))
            }
            None => {
                let p0 = (self.base.log_value(x, y)? * s).exp();
                if k.norm() == 0.0 {
                    return Err(Error::Pole("fractional power of a vanishing kernel".into()));
                }
                Ok((p0, p0 * s / k, p0 * (s * (s - 1.0)) / (k * k)))
            }
        }
    }
}

impl SesquiKernel for PowerNode {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn value(&self, x: &[C64], y: &[C64]) -> Result<C64> {
        let v = match self.integer() {
            Some(m) => {
                let k = self.base.value(x, y)?;
                if m < 0 && k.norm() == 0.0 {
                    return Err(Error::Pole("negative power of a vanishing kernel".into()));
                }
                k.powi(m)
            }
            None => (self.base.log_value(x, y)? * self.exponent).exp(),
        };
        finite(v, "power")
    }

    fn jet(&self, x: &[C64], y: &[C64]) -> Option<Result<Jet>> {
        let jb = self.base.jet(x, y)?;
        Some((|| {
            let b = jb?;
            let (p0, p1, p2) = self.chain(b.value, x, y)?;
            Ok(Jet {
                value: finite(p0, "power")?,
                d1: &b.d1 * p1,
                dbar2: &b.dbar2 * p1,
                mixed: &b.d1 * b.dbar2.transpose() * p2 + &b.mixed * p1,
            })
        })())
    }

    fn log_value(&self, x: &[C64], y: &[C64]) -> Result<C64> {
        Ok(self.base.log_value(x, y)? * self.exponent)
    }

    fn describe(&self) -> String {
        format!("power({}, {:?})", self.base.describe(), self.exponent)
    }
}

struct RescaleNode {
    base: Arc<dyn SesquiKernel>,
    weight: HoloFn,
}

impl SesquiKernel for RescaleNode {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn value(&self, x: &[C64], y: &[C64]) -> Result<C64> {
        let w = self.weight.value(x)? * self.weight.value(y)?.conj();
        finite(w * self.base.value(x, y)?, "rescale")
    }

    fn jet(&self, x: &[C64], y: &[C64]) -> Option<Result<Jet>> {
        let jb = self.base.jet(x, y)?;
        Some((|| {
            let k = jb?;
            let w = self.weight.value(x)?;
            let v = self.weight.value(y)?.conj();
            let gw = DVector::from_vec(self.weight.gradient(x)?);
            let gv = DVector::from_vec(self.weight.gradient(y)?).map(|c| c.conj());
            Ok(Jet {
                value: finite(w * v * k.value, "rescale")?,
                d1: (&gw * k.value + &k.d1 * w) * v,
                dbar2: (&gv * k.value + &k.dbar2 * v) * w,
                mixed: &gw * gv.transpose() * k.value
                    + &k.d1 * gv.transpose() * w
                    + &gw * k.dbar2.transpose() * v
                    + &k.mixed * (w * v),
            })
        })())
    }

    fn log_value(&self, x: &[C64], y: &[C64]) -> Result<C64> {
        let lw = principal_log(self.weight.value(x)?, "weight")?;
        let lv = principal_log(self.weight.value(y)?, "weight")?.conj();
        Ok(lw + lv + self.base.log_value(x, y)?)
    }

    fn describe(&self) -> String {
        format!("rescale({}, {})", self.base.describe(), self.weight.expr())
    }
}

struct PullbackNode {
    base: Arc<dyn SesquiKernel>,
    map: Arc<dyn PointMap>,
    domain: Domain,
}

impl PullbackNode {
    fn mapped(&self, z: &[C64]) -> Result<Vec<C64>> {
        let w = self.map.apply(z)?;
        let p = CPoint::new(w.clone())?;
        self.domain.check_point(&p)?;
        Ok(w)
    }
}

impl SesquiKernel for PullbackNode {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn value(&self, x: &[C64], y: &[C64]) -> Result<C64> {
        self.base.value(&self.mapped(x)?, &self.mapped(y)?)
    }

    fn jet(&self, x: &[C64], y: &[C64]) -> Option<Result<Jet>> {
        let (u, v) = match (self.mapped(x), self.mapped(y)) {
            (Ok(u), Ok(v)) => (u, v),
            (Err(e), _) | (_, Err(e)) => return Some(Err(e)),
        };
        let jb = self.base.jet(&u, &v)?;
        Some((|| {
            let k = jb?;
            let jx = self.map.jacobian(x)?;
            let jy = self.map.jacobian(y)?;
            Ok(Jet {
                value: k.value,
                d1: jx.transpose() * &k.d1,
                dbar2: jy.adjoint() * &k.dbar2,
                mixed: jx.transpose() * &k.mixed * jy.map(|c| c.conj()),
            })
        })())
    }

    fn log_value(&self, x: &[C64], y: &[C64]) -> Result<C64> {
        self.base.log_value(&self.mapped(x)?, &self.mapped(y)?)
    }

    fn describe(&self) -> String {
        format!("pullback({}, {})", self.base.describe(), self.map.describe())
    }
}

// ---------------------------------------------------------------------------
// Evaluator

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct KernelFlags {
    pub analytic_derivatives: bool,
    pub known_psd: bool,
    pub known_nonvanishing: bool,
}

/// An immutable, thread-safe kernel bound to a domain.
#[derive(Clone)]
pub struct KernelEvaluator {
    domain: Domain,
    kernel: Arc<dyn SesquiKernel>,
    flags: KernelFlags,
}

impl fmt::Debug for KernelEvaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelEvaluator")
            .field("domain", &self.domain)
            .field("kernel", &self.kernel.describe())
            .field("flags", &self.flags)
            .finish()
    }
}

impl KernelEvaluator {
    /// Wraps a custom kernel. `analytic_derivatives` is taken from whether it
    /// answers [`SesquiKernel::jet`] at the domain center.
    pub fn from_kernel(domain: Domain, kernel: Arc<dyn SesquiKernel>, known_psd: bool, known_nonvanishing: bool) -> Result<Self> {
        if kernel.dim() != domain.dim() {
            return Err(Error::DimensionMismatch { expected: domain.dim(), got: kernel.dim() });
        }
        let c = domain.center();
        let analytic_derivatives = kernel.jet(c.coords(), c.coords()).is_some();
        Ok(Self {
            domain,
            kernel,
            flags: KernelFlags { analytic_derivatives, known_psd, known_nonvanishing },
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn flags(&self) -> KernelFlags {
        self.flags
    }

    pub fn describe(&self) -> String {
        self.kernel.describe()
    }

    pub fn kernel(&self) -> &Arc<dyn SesquiKernel> {
        &self.kernel
    }

    /// K(x, y).
    pub fn eval(&self, x: &CPoint, y: &CPoint) -> Result<C64> {
        self.domain.check_point(x)?;
        self.domain.check_point(y)?;
        self.kernel.value(x.coords(), y.coords())
    }

    /// Re K(x, x) without the degeneracy check.
    pub fn diag_raw(&self, x: &CPoint) -> Result<f64> {
        Ok(self.eval(x, x)?.re)
    }

    /// K̂(x) = Re K(x, x); fails when K̂(x) ≤ [`DIAG_TOL`].
    pub fn diag(&self, x: &CPoint) -> Result<f64> {
        let v = self.diag_raw(x)?;
        if v <= DIAG_TOL {
            return Err(Error::DegenerateDiagonal { point: x.to_string(), value: v });
        }
        Ok(v)
    }

    /// Closed-form jet at `(x, y)` if this kernel has one.
    pub fn jet(&self, x: &CPoint, y: &CPoint) -> Option<Result<Jet>> {
        if let Err(e) = self.domain.check_point(x).and_then(|_| self.domain.check_point(y)) {
            return Some(Err(e));
        }
        self.kernel.jet(x.coords(), y.coords())
    }

    /// `c·K`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !c.is_finite() || c <= 0.0 {
            return Err(Error::InvalidArgument("scale must be positive".into()));
        }
        self.product(&Self::from_kernel(self.domain, Arc::new(ConstLeaf { n: self.dim(), c }), true, true)?)
    }

    /// Pointwise product `K·L`.
    pub fn product(&self, other: &Self) -> Result<Self> {
        if other.domain != self.domain {
            return Err(Error::InvalidArgument("kernels live on different domains".into()));
        }
        Ok(Self {
            domain: self.domain,
            kernel: Arc::new(ProductNode { a: self.kernel.clone(), b: other.kernel.clone() }),
            flags: KernelFlags {
                analytic_derivatives: self.flags.analytic_derivatives && other.flags.analytic_derivatives,
                known_psd: self.flags.known_psd && other.flags.known_psd,
                known_nonvanishing: self.flags.known_nonvanishing && other.flags.known_nonvanishing,
            },
        })
    }

    /// `K∘Φ`, i.e. `(x, y) ↦ K(Φ(x), Φ(y))`.
    pub fn pullback(&self, map: Arc<dyn PointMap>) -> Result<Self> {
        if map.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: map.dim() });
        }
        Ok(Self {
            domain: self.domain,
            kernel: Arc::new(PullbackNode { base: self.kernel.clone(), map, domain: self.domain }),
            flags: self.flags,
        })
    }
}

// ---------------------------------------------------------------------------
// Compilation

fn guard_points(domain: &Domain) -> Vec<CPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(GUARD_SEED);
    domain.sample_points(&mut rng, GUARD_SAMPLES, domain.default_sample_radius())
}

/// Checks that `K` is finite and non-zero (with a finite log) on sampled pairs.
fn sampled_nonvanishing(k: &dyn SesquiKernel, domain: &Domain) -> bool {
    let pts = guard_points(domain);
    pts.iter().zip(pts.iter().cycle().skip(1)).all(|(x, y)| {
        [(x, y), (x, x)].iter().all(|(a, b)| {
            matches!(k.value(a.coords(), b.coords()), Ok(v) if v.norm() > 0.0)
                && matches!(k.log_value(a.coords(), b.coords()), Ok(l) if l.re.is_finite() && l.im.is_finite())
        })
    })
}

/// Runs a minimum-norm Newton iteration on `ω` from `start`; returns a point of
/// the domain where `ω` vanishes (or fails to evaluate) if one is reached.
fn weight_zero_near(weight: &HoloFn, domain: &Domain, start: CPoint) -> Option<CPoint> {
    let mut z = start;
    for _ in 0..40 {
        let v = match weight.value(z.coords()) {
            Ok(v) => v,
            Err(_) => return Some(z),
        };
        if v.norm() <= WEIGHT_FLOOR {
            return Some(z);
        }
        let g = weight.gradient(z.coords()).ok()?;
        let gn: f64 = g.iter().map(|c| c.norm_sqr()).sum();
        if gn == 0.0 || !gn.is_finite() {
            return None;
        }
        let step = v / gn;
        let next: Vec<C64> = z.coords().iter().zip(&g).map(|(a, d)| a - step * d.conj()).collect();
        z = CPoint::new(next).ok()?;
        if !domain.contains(&z) {
            return None;
        }
    }
    None
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn build(expr: &KernelExpr, domain: &Domain) -> Result<Arc<dyn SesquiKernel>> {
    let n = domain.dim();
    let nf = n as f64;
    Ok(match expr {
        KernelExpr::Bergman | KernelExpr::Szego => {
            let bergman = matches!(expr, KernelExpr::Bergman);
            let name = if bergman { "bergman" } else { "szego" };
            match domain.kind() {
                DomainKind::FullSpace => {
                    return Err(Error::Unsupported(format!("{name} kernel needs a bounded domain")))
                }
                _ if domain.is_ball_like() => {
                    // Bergman: n!/πⁿ (1−⟨x,y⟩)^−(n+1); Szegő: (n−1)!/(2πⁿ) (1−⟨x,y⟩)^−n.
                    let (coeff, p) = if bergman {
                        (factorial(n) / PI.powi(n as i32), n as i32 + 1)
                    } else {
                        (factorial(n - 1) / (2.0 * PI.powi(n as i32)), n as i32)
                    };
                    Arc::new(BallLeaf { n, coeff, p, name })
                }
                _ => {
                    let (coeff, p) = if bergman { (PI.powf(-nf), 2) } else { ((2.0 * PI).powf(-nf), 1) };
                    Arc::new(PolydiskLeaf { n, coeff, p, name })
                }
            }
        }
        KernelExpr::Fock => Arc::new(FockLeaf { n }),
        KernelExpr::Const(c) => {
            if !c.is_finite() || *c <= 0.0 {
                return Err(Error::InvalidArgument("const kernel needs a positive value".into()));
            }
            Arc::new(ConstLeaf { n, c: *c })
        }
        KernelExpr::Rank1(h) => Arc::new(Rank1Leaf { n, h: HoloFn::new(h.clone(), n)? }),
        KernelExpr::Sesqui(e) => Arc::new(SesquiLeaf::new(e.clone(), n)?),
        KernelExpr::Product(a, b) => Arc::new(ProductNode { a: build(a, domain)?, b: build(b, domain)? }),
        KernelExpr::Power { base, exponent, well_defined } => {
            let s = *exponent;
            if !s.is_finite() {
                return Err(Error::InvalidArgument("power exponent must be finite".into()));
            }
            let b = build(base, domain)?;
            let plain = KernelExpr::is_integer_power(s) && s >= 0.0;
            if !plain {
                if !*well_defined || !KernelExpr::power_is_statically_defined(base, s) {
                    return Err(Error::PowerNotWellDefined(s));
                }
                if !sampled_nonvanishing(b.as_ref(), domain) {
                    return Err(Error::PowerBaseVanishes(s));
                }
            }
            Arc::new(PowerNode { base: b, exponent: s })
        }
        KernelExpr::Rescale(a, w) => {
            let weight = HoloFn::new(w.clone(), n)?;
            for p in guard_points(domain) {
                if let Some(zero) = weight_zero_near(&weight, domain, p) {
                    return Err(Error::WeightVanishes(zero.to_string()));
                }
            }
            Arc::new(RescaleNode { base: build(a, domain)?, weight })
        }
        KernelExpr::Pullback(a, map) => {
            if map.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, got: map.dim() });
            }
            let node = PullbackNode { base: build(a, domain)?, map: Arc::new(map.clone()), domain: *domain };
            for p in guard_points(domain) {
                node.mapped(p.coords())?;
            }
            Arc::new(node)
        }
    })
}

/// Compiles a kernel expression into an evaluator bound to `domain`.
pub fn compile(expr: &KernelExpr, domain: &Domain) -> Result<KernelEvaluator> {
    let kernel = build(expr, domain)?;
    let c = domain.center();
    let analytic_derivatives = kernel.jet(c.coords(), c.coords()).is_some();
    Ok(KernelEvaluator {
        domain: *domain,
        kernel,
        flags: KernelFlags {
            analytic_derivatives,
            known_psd: expr.known_psd(),
            known_nonvanishing: expr.known_nonvanishing(),
        },
    })
}

/// Parses and compiles in one step.
pub fn compile_str(text: &str, domain: &Domain) -> Result<KernelEvaluator> {
    compile(&crate::parse::parse_kernel(text, domain)?, domain)
}

/// Sets every power node's flag from the static test plus sampling on `domain`.
pub(crate) fn annotate_powers(expr: KernelExpr, domain: &Domain) -> KernelExpr {
    match expr {
        KernelExpr::Power { base, exponent, .. } => {
            let base = annotate_powers(*base, domain);
            let plain = KernelExpr::is_integer_power(exponent) && exponent >= 0.0;
            let well_defined = plain
                || (KernelExpr::power_is_statically_defined(&base, exponent)
                    && build(&base, domain).is_ok_and(|b| sampled_nonvanishing(b.as_ref(), domain)));
            KernelExpr::Power { base: Box::new(base), exponent, well_defined }
        }
        KernelExpr::Product(a, b) => {
            KernelExpr::product(annotate_powers(*a, domain), annotate_powers(*b, domain))
        }
        KernelExpr::Rescale(a, w) => KernelExpr::rescale(annotate_powers(*a, domain), w),
        KernelExpr::Pullback(a, m) => KernelExpr::pullback(annotate_powers(*a, domain), m),
        leaf => leaf,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn pt(re: f64, im: f64) -> CPoint {
        CPoint::scalar(z(re, im))
    }

    #[test]
    fn fock_and_rank1_values() {
        let d = Domain::disk();
        let fock = compile_str("fock", &d).unwrap();
        for x in [pt(0.3, 0.1), pt(-0.7, 0.2)] {
            assert_eq!(fock.eval(&x, &pt(0.0, 0.0)).unwrap(), z(1.0, 0.0));
        }
        let x = pt(0.4, -0.3);
        assert!((fock.diag(&x).unwrap() - (0.25f64).exp()).abs() < 1e-15);

        let r = compile_str("rank1(exp(z))", &d).unwrap();
        let (a, b) = (z(0.2, 0.5), z(-0.1, 0.3));
        let want = a.exp() * b.exp().conj();
        assert!((r.eval(&CPoint::scalar(a), &CPoint::scalar(b)).unwrap() - want).norm() < 1e-15);
    }

    #[test]
    fn bergman_disk_at_origin() {
        let k = compile_str("bergman", &Domain::disk()).unwrap();
        assert!((k.diag(&pt(0.0, 0.0)).unwrap() - 1.0 / PI).abs() < 1e-16);
        assert!(k.flags().analytic_derivatives && k.flags().known_psd);
    }

    #[test]
    fn power_requires_nonvanishing_base() {
        let d = Domain::disk();
        assert!(matches!(compile_str("power(rank1(z), 0.5)", &d), Err(Error::PowerNotWellDefined(_))));
        assert!(compile_str("power(rank1(z), 2)", &d).is_ok());
        assert!(compile_str("power(szego, 2.5)", &d).is_ok());
        // Statically flagged but vanishing at the origin: caught by sampling.
        let e = KernelExpr::Power {
            base: Box::new(crate::parse::parse_kernel("sesqui(x*conj(y))", &d).unwrap()),
            exponent: -1.0,
            well_defined: true,
        };
        assert!(compile(&e, &d).is_err());
    }

    #[test]
    fn vanishing_rescale_weight_rejected() {
        let d = Domain::disk();
        assert!(matches!(compile_str("rescale(bergman, z - 0.1)", &d), Err(Error::WeightVanishes(_))));
        assert!(compile_str("rescale(bergman, z + 2)", &d).is_ok());
    }

    #[test]
    fn pullback_escaping_domain_rejected() {
        let d = Domain::disk();
        assert!(matches!(compile_str("pullback(bergman, 2*z)", &d), Err(Error::OutsideDomain(_))));
        assert!(compile_str("pullback(bergman, 0.5*z)", &d).is_ok());
    }

    #[test]
    fn fock_has_no_bergman_on_full_space() {
        let d = Domain::full_space(2).unwrap();
        assert!(matches!(compile_str("bergman", &d), Err(Error::Unsupported(_))));
        assert!(compile_str("fock", &d).is_ok());
    }

    #[test]
    fn fractional_power_of_polydisk_bergman_is_sesqui_holomorphic() {
        // The continuous log branch keeps K^s = Π (π(1 − x_i ȳ_i)²)^(−s) even when the
        // total argument of K leaves (−π, π].
        let d = Domain::polydisk(2).unwrap();
        let k = compile_str("power(bergman, 1.5)", &d).unwrap();
        let x = CPoint::new(vec![z(0.9, 0.0), z(0.9, 0.0)]).unwrap();
        let y = CPoint::new(vec![z(0.0, 0.9), z(0.0, 0.9)]).unwrap();
        let want: C64 = [z(1.0, 0.81), z(1.0, 0.81)]
            .iter()
            .map(|t| (t.ln() * -3.0).exp() / PI.powf(1.5))
            .product();
        assert!((k.eval(&x, &y).unwrap() - want).norm() < 1e-12 * want.norm());
    }
}
