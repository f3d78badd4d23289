//! Complex domains and points in them.

use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default clearance kept from the boundary of bounded domains when sampling.
pub const DEFAULT_MARGIN: f64 = 0.05;

/// Sampling radius used for the unbounded full space.
const FULL_SPACE_SAMPLE_RADIUS: f64 = 2.0;

/// A point of ℂⁿ.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CPoint(Vec<Complex64>);

impl CPoint {
    pub fn new(coords: Vec<Complex64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument("a point needs at least one coordinate".into()));
        }
        if coords.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidArgument("point coordinates must be finite".into()));
        }
        Ok(Self(coords))
    }

    /// One-dimensional point.
    pub fn scalar(z: Complex64) -> Self {
        Self(vec![z])
    }

    pub fn from_re_im(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(re, im)| Complex64::new(re, im)).collect())
    }

    pub fn zero(n: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[Complex64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `self + t·e_j`.
    pub fn shifted(&self, j: usize, t: Complex64) -> Self {
        let mut c = self.0.clone();
        c[j] += t;
        Self(c)
    }

    /// `self + t·dir`.
    pub fn offset(&self, dir: &[Complex64], t: f64) -> Self {
        Self(self.0.iter().zip(dir).map(|(a, d)| a + d * t).collect())
    }

    /// Hermitian pairing ⟨x, y⟩ = Σ x_i·conj(y_i).
    pub fn inner(&self, other: &CPoint) -> Complex64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b.conj()).sum()
    }
}

impl From<Complex64> for CPoint {
    fn from(z: Complex64) -> Self {
        Self::scalar(z)
    }
}

impl fmt::Debug for CPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for CPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}{:+}i", c.re, c.im)?;
        }
        write!(f, "]")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    UnitDisk,
    UnitPolydisk,
    UnitBall,
    FullSpace,
}

/// A domain of ℂⁿ from the supported catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    kind: DomainKind,
    dim: usize,
}

impl Domain {
    pub fn disk() -> Self {
        Self { kind: DomainKind::UnitDisk, dim: 1 }
    }

    pub fn polydisk(n: usize) -> Result<Self> {
        Self::checked(DomainKind::UnitPolydisk, n)
    }

    pub fn ball(n: usize) -> Result<Self> {
        Self::checked(DomainKind::UnitBall, n)
    }

    pub fn full_space(n: usize) -> Result<Self> {
        Self::checked(DomainKind::FullSpace, n)
    }

    fn checked(kind: DomainKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("domain dimension must be at least 1".into()));
        }
        Ok(Self { kind, dim })
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_bounded(&self) -> bool {
        self.kind != DomainKind::FullSpace
    }

    /// Disk, or a one-dimensional polydisk or ball.
    pub fn is_planar_disk(&self) -> bool {
        self.dim == 1 && self.is_bounded()
    }

    /// Polydisk-type product structure (the disk counts).
    pub fn is_polydisk_like(&self) -> bool {
        matches!(self.kind, DomainKind::UnitDisk | DomainKind::UnitPolydisk)
            || (self.kind == DomainKind::UnitBall && self.dim == 1)
    }

    /// Ball-type structure (the disk counts).
    pub fn is_ball_like(&self) -> bool {
        matches!(self.kind, DomainKind::UnitDisk | DomainKind::UnitBall)
            || (self.kind == DomainKind::UnitPolydisk && self.dim == 1)
    }

    /// Distance from `p` to the boundary; positive exactly on members.
    pub fn boundary_distance(&self, p: &CPoint) -> f64 {
        match self.kind {
            DomainKind::UnitDisk | DomainKind::UnitPolydisk => 1.0 - p.max_abs(),
            DomainKind::UnitBall => 1.0 - p.norm(),
            DomainKind::FullSpace => f64::INFINITY,
        }
    }

    pub fn contains(&self, p: &CPoint) -> bool {
        p.dim() == self.dim && self.boundary_distance(p) > 0.0
    }

    pub fn check_point(&self, p: &CPoint) -> Result<()> {
        if p.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: p.dim() });
        }
        if !self.contains(p) {
            return Err(Error::OutsideDomain(p.to_string()));
        }
        Ok(())
    }

    /// Center of the domain (the origin for every catalog kind).
    pub fn center(&self) -> CPoint {
        CPoint::zero(self.dim)
    }

    /// Uniform-ish random point with `boundary_distance ≥ 1 − max_radius` (bounded kinds);
    /// for the full space `max_radius` is a plain radius bound.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, max_radius: f64) -> CPoint {
        let disk_point = |rng: &mut R, r: f64| {
            let rho = r * rng.gen::<f64>().sqrt();
            let th = rng.gen::<f64>() * std::f64::consts::TAU;
            Complex64::from_polar(rho, th)
        };
        match self.kind {
            DomainKind::UnitDisk | DomainKind::UnitPolydisk => {
                CPoint((0..self.dim).map(|_| disk_point(rng, max_radius)).collect())
            }
            DomainKind::UnitBall | DomainKind::FullSpace => {
                // Gaussian direction, radius with density ∝ ρ^{2n-1}.
                let mut v: Vec<Complex64> = (0..self.dim)
                    .map(|_| Complex64::new(gaussian(rng), gaussian(rng)))
                    .collect();
                let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
                let rho = max_radius * rng.gen::<f64>().powf(1.0 / (2.0 * self.dim as f64));
                for c in &mut v {
                    *c *= rho / norm;
                }
                CPoint(v)
            }
        }
    }

    /// Default sampling radius: `1 − DEFAULT_MARGIN` for bounded domains.
    pub fn default_sample_radius(&self) -> f64 {
        if self.is_bounded() {
            1.0 - DEFAULT_MARGIN
        } else {
            FULL_SPACE_SAMPLE_RADIUS
        }
    }

    /// `count` pairwise distinct sample points.
    pub fn sample_points<R: Rng + ?Sized>(&self, rng: &mut R, count: usize, max_radius: f64) -> Vec<CPoint> {
        let mut pts: Vec<CPoint> = Vec::with_capacity(count);
        while pts.len() < count {
            let p = self.sample(rng, max_radius);
            if !pts.contains(&p) {
                pts.push(p);
            }
        }
        pts
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            DomainKind::UnitDisk => write!(f, "disk"),
            DomainKind::UnitPolydisk => write!(f, "polydisk:{}", self.dim),
            DomainKind::UnitBall => write!(f, "ball:{}", self.dim),
            DomainKind::FullSpace => write!(f, "full:{}", self.dim),
        }
    }
}

impl std::str::FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, n) = match s.split_once(':') {
            Some((name, n)) => {
                let n: usize = n
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad dimension in `{s}`")))?;
                (name.trim(), Some(n))
            }
            None => (s.trim(), None),
        };
        match (name, n) {
            ("disk", None) | ("disk", Some(1)) => Ok(Domain::disk()),
            ("polydisk", n) => Domain::polydisk(n.unwrap_or(1)),
            ("ball", n) => Domain::ball(n.unwrap_or(1)),
            ("full", n) | ("full-space", n) | ("cn", n) => Domain::full_space(n.unwrap_or(1)),
            _ => Err(Error::UnknownName(s.to_string())),
        }
    }
}

/// Standard normal deviate via Box-Muller.
pub(crate) fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn membership_matches_boundary_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [Domain::disk(), Domain::polydisk(2).unwrap(), Domain::ball(3).unwrap()] {
            for _ in 0..200 {
                let p = d.sample(&mut rng, 1.3);
                assert_eq!(d.contains(&p), d.boundary_distance(&p) > 0.0);
            }
            for p in d.sample_points(&mut rng, 50, 0.95) {
                assert!(d.boundary_distance(&p) >= 0.05 - 1e-15, "{p}");
            }
        }
    }

    #[test]
    fn ball_and_polydisk_differ() {
        let p = CPoint::from_re_im(&[(0.8, 0.0), (0.8, 0.0)]).unwrap();
        assert!(Domain::polydisk(2).unwrap().contains(&p));
        assert!(!Domain::ball(2).unwrap().contains(&p));
    }

    #[test]
    fn parse_domains() {
        assert_eq!("disk".parse::<Domain>().unwrap(), Domain::disk());
        assert_eq!("ball:3".parse::<Domain>().unwrap(), Domain::ball(3).unwrap());
        assert_eq!("polydisk:2".parse::<Domain>().unwrap().to_string(), "polydisk:2");
        assert!("torus".parse::<Domain>().is_err());
        assert!(Domain::ball(0).is_err());
    }

    #[test]
    fn rejects_bad_points() {
        assert!(CPoint::new(vec![]).is_err());
        assert!(CPoint::new(vec![Complex64::new(f64::NAN, 0.0)]).is_err());
        let d = Domain::disk();
        assert!(matches!(d.check_point(&CPoint::zero(2)), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(
            d.check_point(&CPoint::scalar(Complex64::new(1.0, 0.0))),
            Err(Error::OutsideDomain(_))
        ));
    }
}
