//! JSON inputs given inline or as file paths.

use kml_core::automorphism::{AutoSpec, Automorphism};
use kml_core::distance::{CurveSpec, ParametricCurve};
use kml_core::{CPoint, Domain, Error, Result};
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde_json::Value;

fn load(text: &str) -> Result<Value> {
    match serde_json::from_str(text) {
        Ok(v) => Ok(v),
        Err(inline) => {
            let body = std::fs::read_to_string(text)
                .map_err(|_| Error::InvalidArgument(format!("`{text}` is neither JSON ({inline}) nor a readable file")))?;
            serde_json::from_str(&body).map_err(|e| Error::InvalidArgument(format!("{text}: {e}")))
        }
    }
}

fn from_value<T: DeserializeOwned>(v: Value, what: &str) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::InvalidArgument(format!("bad {what}: {e}")))
}

fn complex(v: &Value) -> Option<Complex64> {
    match v {
        Value::Number(n) => n.as_f64().map(|re| Complex64::new(re, 0.0)),
        Value::Array(a) if a.len() == 2 => Some(Complex64::new(a[0].as_f64()?, a[1].as_f64()?)),
        _ => None,
    }
}

/// One point: `[[re, im], ...]`, where a bare number stands for a real
/// coordinate. In one dimension a bare number or a single `[re, im]` pair is
/// also accepted.
fn point(v: &Value, dim: usize) -> Result<CPoint> {
    let bad = || Error::InvalidArgument(format!("cannot read point {v}"));
    if dim == 1 {
        if let Some(z) = complex(v) {
            return Ok(CPoint::scalar(z));
        }
    }
    let coords = v
        .as_array()
        .ok_or_else(bad)?
        .iter()
        .map(|c| complex(c).ok_or_else(bad))
        .collect::<Result<Vec<_>>>()?;
    if coords.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: coords.len() });
    }
    CPoint::new(coords)
}

pub fn points(text: &str, dim: usize) -> Result<Vec<CPoint>> {
    let v = load(text)?;
    let items = v.as_array().ok_or_else(|| Error::InvalidArgument("points must be a JSON array".into()))?;
    items.iter().map(|p| point(p, dim)).collect()
}

/// A single automorphism or an array of them.
pub fn automorphisms(text: &str, domain: Domain) -> Result<Vec<Automorphism>> {
    let specs: Vec<AutoSpec> = match load(text)? {
        Value::Array(items) => items.into_iter().map(|v| from_value(v, "automorphism")).collect::<Result<_>>()?,
        v => vec![from_value(v, "automorphism")?],
    };
    if specs.is_empty() {
        return Err(Error::InvalidArgument("empty automorphism list".into()));
    }
    specs.iter().map(|s| s.build(domain)).collect()
}

pub fn curve(text: &str, dim: usize) -> Result<ParametricCurve> {
    from_value::<CurveSpec>(load(text)?, "curve")?.build(dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_shapes() {
        let p = points("[0, [0.5, 0.1], [[0.2, 0]]]", 1).unwrap();
        assert_eq!(p[1], CPoint::scalar(Complex64::new(0.5, 0.1)));
        assert_eq!(p[2], CPoint::scalar(Complex64::new(0.2, 0.0)));
        let p = points("[[[0.1, 0], [0, 0.2]]]", 2).unwrap();
        assert_eq!(p[0].dim(), 2);
        assert_eq!(points("[[0.1, 0]]", 2).unwrap()[0].coords()[0], Complex64::new(0.1, 0.0));
        assert!(matches!(points("[{}]", 2), Err(Error::InvalidArgument(_))));
        assert!(matches!(points("[[[0.1, 0]]]", 2), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn automorphism_lists() {
        let d = Domain::disk();
        assert_eq!(automorphisms(r#"{"kind":"disk-moebius","theta":0.0,"a":[0.3,0.1]}"#, d).unwrap().len(), 1);
        assert_eq!(automorphisms(r#"[{"kind":"identity"},{"kind":"disk-moebius","a":[0.3,0]}]"#, d).unwrap().len(), 2);
        assert!(automorphisms("not json and not a file", d).is_err());
    }
}
