//! Pseudo-distances `δ₁`, `δ₂` induced by a kernel, curve lengths under the
//! pulled-back metric, and polygonal lengths under `δ₁`, `δ₂`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::CPoint;
use crate::error::{Error, Result};
use crate::eval::KernelEvaluator;
use crate::metric::{metric_parts, MetricProfile};
use crate::quadrature;
use crate::wirtinger::DiffConfig;

type C64 = Complex64;
type CurveFn = Arc<dyn Fn(f64) -> Vec<C64> + Send + Sync>;

/// Radicands down to this are clamped to zero; below it the kernel violates
/// Cauchy–Schwarz.
pub const RADICAND_FLOOR: f64 = -1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Delta1,
    Delta2,
}

/// `|K(x,y)|/√(K̂(x)K̂(y))`, symmetric in `x`, `y` bit for bit.
fn cosine(k: &KernelEvaluator, x: &CPoint, y: &CPoint) -> Result<f64> {
    let (kx, ky) = (k.diag(x)?, k.diag(y)?);
    let m = 0.5 * (k.eval(x, y)?.norm() + k.eval(y, x)?.norm());
    Ok(m / (kx * ky).sqrt())
}

fn clamp_sqrt(rad: f64) -> Result<f64> {
    if rad < RADICAND_FLOOR {
        return Err(Error::NegativeRadicand(rad));
    }
    Ok(rad.max(0.0).sqrt())
}

/// `δ₁ = √(1 − |K(x,y)|²/(K̂(x)K̂(y)))`.
pub fn delta1(k: &KernelEvaluator, x: &CPoint, y: &CPoint) -> Result<f64> {
    let c = cosine(k, x, y)?;
    if x == y {
        return Ok(0.0);
    }
    clamp_sqrt(1.0 - c * c)
}

/// `δ₂ = √(2 − 2|K(x,y)|/√(K̂(x)K̂(y)))`.
pub fn delta2(k: &KernelEvaluator, x: &CPoint, y: &CPoint) -> Result<f64> {
    let c = cosine(k, x, y)?;
    if x == y {
        return Ok(0.0);
    }
    clamp_sqrt(2.0 - 2.0 * c)
}

pub fn delta(k: &KernelEvaluator, which: Which, x: &CPoint, y: &CPoint) -> Result<f64> {
    match which {
        Which::Delta1 => delta1(k, x, y),
        Which::Delta2 => delta2(k, x, y),
    }
}

// ---------------------------------------------------------------------------
// Curves

/// `γ: [0, 1] → ℂⁿ` with optional closed-form derivative.
#[derive(Clone)]
pub struct ParametricCurve {
    name: String,
    dim: usize,
    gamma: CurveFn,
    deriv: Option<CurveFn>,
    smooth: bool,
}

impl fmt::Debug for ParametricCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ParametricCurve({})", self.name)
    }
}

impl ParametricCurve {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        gamma: impl Fn(f64) -> Vec<C64> + Send + Sync + 'static,
        deriv: Option<CurveFn>,
        smooth: bool,
    ) -> Self {
        Self { name: name.into(), dim, gamma: Arc::new(gamma), deriv, smooth }
    }

    /// `a + t(b − a)`.
    pub fn segment(a: &CPoint, b: &CPoint) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
        }
        let (a, b) = (a.coords().to_vec(), b.coords().to_vec());
        let d: Vec<C64> = b.iter().zip(&a).map(|(p, q)| p - q).collect();
        let (a2, d2) = (a.clone(), d.clone());
        Ok(Self::new(
            format!("segment {} -> {}", CPoint::new(a.clone())?, CPoint::new(b)?),
            a.len(),
            move |t| a2.iter().zip(&d2).map(|(p, q)| p + q * t).collect(),
            Some(Arc::new(move |_| d.clone())),
            true,
        ))
    }

    /// `c + r·e^{2πi·turns·t}` in the first coordinate.
    pub fn circle(c: &CPoint, r: f64, turns: f64) -> Self {
        let c = c.coords().to_vec();
        let n = c.len();
        let w = 2.0 * PI * turns;
        let c2 = c.clone();
        Self::new(
            format!("circle c={} r={r} turns={turns}", CPoint::new(c.clone()).expect("finite")),
            n,
            move |t| {
                let mut p = c2.clone();
                p[0] += C64::from_polar(r, w * t);
                p
            },
            Some(Arc::new(move |t| {
                let mut d = vec![C64::new(0.0, 0.0); n];
                d[0] = C64::from_polar(r, w * t) * C64::new(0.0, w);
                d
            })),
            true,
        )
    }

    /// `r·t·e^{2πi·turns·t}` in the first coordinate of ℂⁿ.
    pub fn spiral(n: usize, r: f64, turns: f64) -> Self {
        let w = 2.0 * PI * turns;
        Self::new(
            format!("spiral r={r} turns={turns}"),
            n,
            move |t| {
                let mut p = vec![C64::new(0.0, 0.0); n];
                p[0] = C64::from_polar(r * t, w * t);
                p
            },
            Some(Arc::new(move |t| {
                let mut d = vec![C64::new(0.0, 0.0); n];
                d[0] = C64::from_polar(r, w * t) * C64::new(1.0, w * t);
                d
            })),
            true,
        )
    }

    /// Cubic Hermite interpolation of samples `(t_i, p_i)` with `t` increasing
    /// from 0 to 1; node velocities by three-point differences.
    pub fn from_samples(ts: &[f64], pts: &[CPoint]) -> Result<Self> {
        let m = ts.len();
        if m < 2 || pts.len() != m {
            return Err(Error::InvalidArgument("curve table needs ≥ 2 samples with matching times".into()));
        }
        if ts[0] != 0.0 || ts[m - 1] != 1.0 || ts.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
            return Err(Error::InvalidArgument("sample times must increase from 0 to 1".into()));
        }
        let n = pts[0].dim();
        if let Some(p) = pts.iter().find(|p| p.dim() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: p.dim() });
        }
        let ys: Vec<Vec<C64>> = pts.iter().map(|p| p.coords().to_vec()).collect();
        let slope = |i: usize| -> Vec<C64> {
            if m == 2 {
                return (0..n).map(|c| (ys[1][c] - ys[0][c]) / (ts[1] - ts[0])).collect();
            }
            let (a, b, e) = match i {
                0 => (0, 1, 2),
                _ if i == m - 1 => (m - 3, m - 2, m - 1),
                _ => (i - 1, i, i + 1),
            };
            let (x0, x1, x2, t) = (ts[a], ts[b], ts[e], ts[i]);
            let w0 = (2.0 * t - x1 - x2) / ((x0 - x1) * (x0 - x2));
            let w1 = (2.0 * t - x0 - x2) / ((x1 - x0) * (x1 - x2));
            let w2 = (2.0 * t - x0 - x1) / ((x2 - x0) * (x2 - x1));
            (0..n).map(|c| ys[a][c] * w0 + ys[b][c] * w1 + ys[e][c] * w2).collect()
        };
        let ms: Vec<Vec<C64>> = (0..m).map(slope).collect();
        let table = Arc::new((ts.to_vec(), ys, ms));
        let t2 = table.clone();
        let seg = move |tbl: &(Vec<f64>, Vec<Vec<C64>>, Vec<Vec<C64>>), t: f64| {
            let t = t.clamp(0.0, 1.0);
            let i = tbl.0.partition_point(|&v| v <= t).clamp(1, tbl.0.len() - 1) - 1;
            let h = tbl.0[i + 1] - tbl.0[i];
            (i, h, (t - tbl.0[i]) / h)
        };
        Ok(Self::new(
            format!("samples ({m})"),
            n,
            move |t| {
                let (i, h, s) = seg(&table, t);
                let (s2, s3) = (s * s, s * s * s);
                let (h00, h10, h01, h11) = (2.0 * s3 - 3.0 * s2 + 1.0, s3 - 2.0 * s2 + s, -2.0 * s3 + 3.0 * s2, s3 - s2);
                (0..n)
                    .map(|c| table.1[i][c] * h00 + table.2[i][c] * (h10 * h) + table.1[i + 1][c] * h01 + table.2[i + 1][c] * (h11 * h))
                    .collect()
            },
            Some(Arc::new(move |t| {
                let (i, h, s) = seg(&t2, t);
                let s2 = s * s;
                let (d00, d10, d01, d11) = (6.0 * s2 - 6.0 * s, 3.0 * s2 - 4.0 * s + 1.0, -6.0 * s2 + 6.0 * s, 3.0 * s2 - 2.0 * s);
                (0..n)
                    .map(|c| t2.1[i][c] * (d00 / h) + t2.2[i][c] * d10 + t2.1[i + 1][c] * (d01 / h) + t2.2[i + 1][c] * d11)
                    .collect()
            })),
            false,
        ))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    pub fn point(&self, t: f64) -> Result<CPoint> {
        CPoint::new((self.gamma)(t))
    }

    /// `γ′(t)`: closed form, or a Richardson-extrapolated central difference.
    pub fn velocity(&self, t: f64) -> Result<Vec<C64>> {
        if let Some(d) = &self.deriv {
            return Ok(d(t));
        }
        let h0 = f64::EPSILON.cbrt();
        let diff = |h: f64| -> Vec<C64> {
            let (a, b) = ((self.gamma)(t + h), (self.gamma)(t - h));
            a.iter().zip(&b).map(|(p, q)| (p - q) / (2.0 * h)).collect()
        };
        let (d0, d1) = (diff(h0), diff(h0 / 2.0));
        let v: Vec<C64> = d1.iter().zip(&d0).map(|(a, b)| a + (a - b) / 3.0).collect();
        if v.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("curve velocity".into()));
        }
        Ok(v)
    }
}

/// JSON-friendly curve descriptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CurveSpec {
    Segment { a: CPoint, b: CPoint },
    Circle { center: CPoint, radius: f64, #[serde(default = "one")] turns: f64 },
    Spiral { radius: f64, #[serde(default = "one")] turns: f64 },
    Samples { t: Vec<f64>, points: Vec<CPoint> },
}

fn one() -> f64 {
    1.0
}

impl CurveSpec {
    pub fn build(&self, dim: usize) -> Result<ParametricCurve> {
        let c = match self {
            Self::Segment { a, b } => ParametricCurve::segment(a, b)?,
            Self::Circle { center, radius, turns } => ParametricCurve::circle(center, *radius, *turns),
            Self::Spiral { radius, turns } => ParametricCurve::spiral(dim, *radius, *turns),
            Self::Samples { t, points } => ParametricCurve::from_samples(t, points)?,
        };
        if c.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: c.dim() });
        }
        Ok(c)
    }
}

// ---------------------------------------------------------------------------
// Lengths

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    /// Successive composite values must agree to this.
    pub tol: f64,
    pub max_panels: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self { tol: 1e-9, max_panels: 4096 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveLength {
    pub length: f64,
    pub panels: usize,
}

/// Relative level below which `γ′ᵀ·G·conj(γ′)` counts as cancellation noise.
const SPEED_NOISE: f64 = 1e-12;

/// Speed `√(γ′ᵀ G conj(γ′))` of the curve at `t` under the pulled-back metric.
pub fn sigma_speed(k: &KernelEvaluator, p: &MetricProfile, curve: &ParametricCurve, t: f64, cfg: &DiffConfig) -> Result<f64> {
    let x = curve.point(t)?;
    let v = curve.velocity(t)?;
    let parts = metric_parts(k, p, &x, cfg)?;
    let q = parts.form.eval(&v, &v).re;
    let vn: f64 = v.iter().map(|c| c.norm_sqr()).sum();
    let scale = (parts.phi.abs() * parts.hessian.norm() + parts.psi.abs() * parts.grad.norm_squared()) * vn;
    if q.abs() <= SPEED_NOISE * scale {
        return Ok(0.0);
    }
    if q < 0.0 {
        return Err(Error::Verification(format!("metric is negative along the curve at t = {t}")));
    }
    Ok(q.sqrt())
}

/// Length of `γ` under the pulled-back metric, by composite Gauss–Legendre
/// with panel doubling.
pub fn curve_length_sigma(
    k: &KernelEvaluator,
    p: &MetricProfile,
    curve: &ParametricCurve,
    quad: &QuadConfig,
    cfg: &DiffConfig,
) -> Result<CurveLength> {
    if curve.dim() != k.dim() {
        return Err(Error::DimensionMismatch { expected: k.dim(), got: curve.dim() });
    }
    let f = |t: f64| sigma_speed(k, p, curve, t, cfg);
    let (length, panels) = quadrature::composite_converged(&f, 0.0, 1.0, quad.tol, quad.max_panels)?;
    Ok(CurveLength { length, panels })
}

/// `Σ δ(γ(t_i), γ(t_{i+1}))` over `mesh` equal steps.
pub fn polygonal_length(k: &KernelEvaluator, which: Which, curve: &ParametricCurve, mesh: usize) -> Result<f64> {
    if mesh == 0 {
        return Err(Error::InvalidArgument("mesh must be at least 1".into()));
    }
    let pts: Vec<CPoint> = (0..=mesh).map(|i| curve.point(i as f64 / mesh as f64)).collect::<Result<_>>()?;
    let parts: Vec<f64> = (0..mesh)
        .into_par_iter()
        .map(|i| delta(k, which, &pts[i], &pts[i + 1]))
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshRow {
    pub mesh: usize,
    pub delta1: f64,
    pub delta2: f64,
    pub dev1: f64,
    pub dev2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthReport {
    pub curve: String,
    pub sigma_length: f64,
    pub panels: usize,
    pub rows: Vec<MeshRow>,
    /// Least-squares slope of `−log(dev)` against `log(mesh)`; absent when the
    /// deviations vanish.
    pub order1: Option<f64>,
    pub order2: Option<f64>,
}

impl LengthReport {
    pub fn final_deviation(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.dev1.max(r.dev2))
    }
}

/// Empirical convergence order from `(mesh, deviation)` pairs.
pub fn empirical_order(data: &[(usize, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = data
        .iter()
        .filter(|(_, d)| *d > 0.0 && d.is_finite())
        .map(|&(m, d)| ((m as f64).ln(), d.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

/// Deviations at or below this count as exact agreement.
const LENGTH_ZERO: f64 = 1e-13;

/// σ-length and `δ₁`/`δ₂` polygonal lengths per mesh, with empirical orders.
pub fn length_equivalence_report(
    k: &KernelEvaluator,
    p: &MetricProfile,
    curve: &ParametricCurve,
    meshes: &[usize],
    quad: &QuadConfig,
    cfg: &DiffConfig,
) -> Result<LengthReport> {
    let sigma = curve_length_sigma(k, p, curve, quad, cfg)?;
    let rows = meshes
        .iter()
        .map(|&mesh| {
            let d1 = polygonal_length(k, Which::Delta1, curve, mesh)?;
            let d2 = polygonal_length(k, Which::Delta2, curve, mesh)?;
            let dev = |v: f64| {
                let d = (v - sigma.length).abs();
                if d <= LENGTH_ZERO { 0.0 } else { d }
            };
            Ok(MeshRow { mesh, delta1: d1, delta2: d2, dev1: dev(d1), dev2: dev(d2) })
        })
        .collect::<Result<Vec<_>>>()?;
    let order = |f: fn(&MeshRow) -> f64| empirical_order(&rows.iter().map(|r| (r.mesh, f(r))).collect::<Vec<_>>());
    Ok(LengthReport {
        curve: curve.name().to_string(),
        sigma_length: sigma.length,
        panels: sigma.panels,
        order1: order(|r| r.dev1),
        order2: order(|r| r.dev2),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain;
    use crate::eval::compile_str;

    fn pt(re: f64, im: f64) -> CPoint {
        CPoint::scalar(C64::new(re, im))
    }

    #[test]
    fn bergman_deltas_at_half() {
        let k = compile_str("bergman", &Domain::disk()).unwrap();
        let (o, h) = (pt(0.0, 0.0), pt(0.5, 0.0));
        assert!((delta1(&k, &o, &h).unwrap() - 7f64.sqrt() / 4.0).abs() < 1e-14);
        assert!((delta2(&k, &o, &h).unwrap() - 0.5f64.sqrt()).abs() < 1e-14);
        assert_eq!(delta1(&k, &h, &h).unwrap(), 0.0);
    }

    #[test]
    fn non_psd_kernel_trips_radicand() {
        let k = compile_str("1 - x*conj(y)", &Domain::disk()).unwrap();
        // |L(0,½)|² = 1 > L̂(0)L̂(½) = 3/4
        assert!(matches!(delta1(&k, &pt(0.0, 0.0), &pt(0.5, 0.0)), Err(Error::NegativeRadicand(_))));
    }

    #[test]
    fn segment_length_under_bergman_fs() {
        let k = compile_str("bergman", &Domain::disk()).unwrap();
        let c = ParametricCurve::segment(&pt(0.0, 0.0), &pt(0.5, 0.0)).unwrap();
        let l = curve_length_sigma(&k, &MetricProfile::fubini_study(), &c, &QuadConfig::default(), &DiffConfig::default()).unwrap();
        assert!((l.length - 2f64.sqrt() * 0.5f64.atanh()).abs() < 1e-12);
    }

    #[test]
    fn rank_one_and_constant_curves_have_zero_length() {
        let d = Domain::disk();
        let r1 = compile_str("rank1(exp(z))", &d).unwrap();
        let spiral = ParametricCurve::spiral(1, 0.4, 1.0);
        let fs = MetricProfile::fubini_study();
        let l = curve_length_sigma(&r1, &fs, &spiral, &QuadConfig::default(), &DiffConfig::default()).unwrap();
        assert_eq!(l.length, 0.0);
        let b = compile_str("bergman", &d).unwrap();
        let still = ParametricCurve::segment(&pt(0.2, 0.1), &pt(0.2, 0.1)).unwrap();
        let rep = length_equivalence_report(&b, &fs, &still, &[4, 8], &QuadConfig::default(), &DiffConfig::default()).unwrap();
        assert_eq!(rep.sigma_length, 0.0);
        assert!(rep.rows.iter().all(|r| r.delta1 == 0.0 && r.delta2 == 0.0));
        assert_eq!(rep.order1, None);
    }

    #[test]
    fn sampled_curve_reproduces_segment() {
        let ts: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let pts: Vec<CPoint> = ts.iter().map(|t| pt(0.5 * t, 0.1 * t)).collect();
        let c = ParametricCurve::from_samples(&ts, &pts).unwrap();
        let p = c.point(0.37).unwrap();
        assert!((p.coords()[0] - C64::new(0.185, 0.037)).norm() < 1e-15);
        assert!((c.velocity(0.37).unwrap()[0] - C64::new(0.5, 0.1)).norm() < 1e-13);
    }

    #[test]
    fn order_of_quadratic_decay() {
        let data: Vec<(usize, f64)> = (4..10).map(|k| (1usize << k, 3.0 / (1u64 << (2 * k)) as f64)).collect();
        assert!((empirical_order(&data).unwrap() - 2.0).abs() < 1e-12);
    }
}
