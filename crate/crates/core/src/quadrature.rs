//! Gauss–Legendre quadrature: adaptive bisection and composite panels.

use std::sync::OnceLock;

use gauss_quad::GaussLegendre;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Nodes per panel of the composite rule.
pub const PANEL_NODES: usize = 32;
const ADAPTIVE_NODES: usize = 20;
const MAX_DEPTH: u32 = 48;

fn rule(deg: usize) -> &'static [(f64, f64)] {
    static R32: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    static R20: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    let cell = match deg {
        PANEL_NODES => &R32,
        ADAPTIVE_NODES => &R20,
        _ => unreachable!("unsupported rule degree"),
    };
    cell.get_or_init(|| {
        GaussLegendre::new(deg)
            .expect("degree ≥ 2")
            .iter()
            .map(|&(x, w)| (x, w))
            .collect()
    })
}

fn apply<F>(deg: usize, a: f64, b: f64, f: &F) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let mut s = 0.0;
    for &(x, w) in rule(deg) {
        s += w * f(mid + half * x)?;
    }
    let v = s * half;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Quadrature { a, b })
    }
}

/// ∫ₐᵇ f by recursive bisection with a 20-point Gauss–Legendre rule, to relative
/// accuracy `rel_tol`.
pub fn adaptive<F>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let whole = apply(ADAPTIVE_NODES, a, b, &f)?;
    let tol = (rel_tol * whole.abs()).max(f64::MIN_POSITIVE);
    bisect(&f, a, b, whole, tol, 0)
}

fn bisect<F>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let m = 0.5 * (a + b);
    let left = apply(ADAPTIVE_NODES, a, m, f)?;
    let right = apply(ADAPTIVE_NODES, m, b, f)?;
    let sum = left + right;
    if (sum - whole).abs() <= tol {
        return Ok(sum);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::Quadrature { a, b });
    }
    Ok(bisect(f, a, m, left, 0.5 * tol, depth + 1)? + bisect(f, m, b, right, 0.5 * tol, depth + 1)?)
}

/// ∫ₐᵇ f with `panels` equal panels of the 32-point rule; panels run in parallel.
pub fn composite<F>(f: &F, a: f64, b: f64, panels: usize) -> Result<f64>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    if panels == 0 {
        return Err(Error::InvalidArgument("at least one panel required".into()));
    }
    let h = (b - a) / panels as f64;
    let parts: Vec<f64> = (0..panels)
        .into_par_iter()
        .map(|i| {
            let lo = a + h * i as f64;
            let hi = if i + 1 == panels { b } else { lo + h };
            apply(PANEL_NODES, lo, hi, f)
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum())
}

/// Composite rule with panel doubling until two successive values agree to `tol`.
/// Returns the value and the final panel count.
pub fn composite_converged<F>(f: &F, a: f64, b: f64, tol: f64, max_panels: usize) -> Result<(f64, usize)>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let mut panels = 1;
    let mut prev = composite(f, a, b, panels)?;
    while panels < max_panels {
        panels *= 2;
        let next = composite(f, a, b, panels)?;
        if (next - prev).abs() <= tol {
            return Ok((next, panels));
        }
        prev = next;
    }
    Err(Error::Quadrature { a, b })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adaptive_handles_endpoint_behaviour() {
        // ∫₀¹ √x dx = 2/3
        let v = adaptive(|x| Ok(x.sqrt()), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
        // ∫₀¹ r^201 dr
        let v = adaptive(|r| Ok(r.powi(201)), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 1.0 / 202.0).abs() < 1e-14);
    }

    #[test]
    fn composite_is_exact_for_smooth() {
        let (v, _) = composite_converged(&|t: f64| Ok(t.cos()), 0.0, 2.0, 1e-13, 64).unwrap();
        assert!((v - 2f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn nonfinite_integrand_reported() {
        assert!(matches!(adaptive(|_| Ok(f64::NAN), 0.0, 1.0, 1e-9), Err(Error::Quadrature { .. })));
    }
}
