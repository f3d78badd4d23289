//! Automorphisms of the supported domains with closed-form Jacobians.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{gaussian, CPoint, Domain, DomainKind};
use crate::error::{Error, Result};
use crate::eval::PointMap;

type C64 = Complex64;

const UNITARY_TOL: f64 = 1e-10;

/// `z ↦ e^{iθ}(z − a)/(1 − conj(a)·z)` on the unit disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moebius {
    #[serde(default)]
    pub theta: f64,
    pub a: C64,
}

impl Moebius {
    pub fn new(theta: f64, a: C64) -> Result<Self> {
        if !theta.is_finite() || !a.re.is_finite() || !a.im.is_finite() || a.norm() >= 1.0 {
            return Err(Error::InvalidArgument(format!("Möbius parameter a = {a} must lie in the unit disk")));
        }
        Ok(Self { theta, a })
    }

    pub fn apply(&self, z: C64) -> C64 {
        C64::from_polar(1.0, self.theta) * (z - self.a) / (1.0 - self.a.conj() * z)
    }

    pub fn derivative(&self, z: C64) -> C64 {
        let d = 1.0 - self.a.conj() * z;
        C64::from_polar(1.0 - self.a.norm_sqr(), self.theta) / (d * d)
    }

    pub fn inverse(&self) -> Self {
        Self { theta: -self.theta, a: -self.a * C64::from_polar(1.0, self.theta) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AutomorphismKind {
    Identity,
    DiskMoebius(Moebius),
    /// Output coordinate `l` is `factors[l]` applied to input coordinate `perm[l]`.
    Polydisk { factors: Vec<Moebius>, perm: Vec<usize> },
    /// `z ↦ U·φ_a(z)` with `φ_a` the involution of the ball swapping `0` and `a`.
    BallMoebius { a: Vec<C64>, unitary: DMatrix<C64> },
    /// `z ↦ z + b` on the full space.
    Translation { b: Vec<C64> },
    /// `outer ∘ inner`.
    Composite(Box<Automorphism>, Box<Automorphism>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Automorphism {
    domain: Domain,
    kind: AutomorphismKind,
}

impl fmt::Display for Automorphism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            AutomorphismKind::Identity => write!(f, "identity"),
            AutomorphismKind::DiskMoebius(m) => write!(f, "disk-moebius(theta={}, a={})", m.theta, m.a),
            AutomorphismKind::Polydisk { factors, perm } => {
                write!(f, "polydisk(")?;
                for (i, m) in factors.iter().enumerate() {
                    write!(f, "{}[theta={}, a={}]", if i > 0 { ", " } else { "" }, m.theta, m.a)?;
                }
                write!(f, "; perm={perm:?})")
            }
            AutomorphismKind::BallMoebius { a, .. } => {
                write!(f, "ball-moebius(a={})", CPoint::new(a.clone()).map_err(|_| fmt::Error)?)
            }
            AutomorphismKind::Translation { b } => write!(f, "translation({})", CPoint::new(b.clone()).map_err(|_| fmt::Error)?),
            AutomorphismKind::Composite(o, i) => write!(f, "({o}) o ({i})"),
        }
    }
}

fn perm_sign(perm: &[usize]) -> f64 {
    let mut seen = vec![false; perm.len()];
    let mut sign = 1.0;
    for s in 0..perm.len() {
        if seen[s] {
            continue;
        }
        let mut len = 0;
        let mut j = s;
        while !seen[j] {
            seen[j] = true;
            j = perm[j];
            len += 1;
        }
        if len % 2 == 0 {
            sign = -sign;
        }
    }
    sign
}

fn ball_linear(a: &[C64]) -> DMatrix<C64> {
    let n = a.len();
    let a2: f64 = a.iter().map(|c| c.norm_sqr()).sum();
    let s = (1.0 - a2).sqrt();
    if a2 == 0.0 {
        return DMatrix::identity(n, n);
    }
    // A = P_a + s·Q_a, P_a = a a*/|a|².
    DMatrix::from_fn(n, n, |i, j| {
        let p = a[i] * a[j].conj() / a2;
        let id = if i == j { 1.0 } else { 0.0 };
        p + (C64::from(id) - p) * s
    })
}

impl Automorphism {
    pub fn identity(domain: Domain) -> Self {
        Self { domain, kind: AutomorphismKind::Identity }
    }

    pub fn disk_moebius(domain: Domain, theta: f64, a: C64) -> Result<Self> {
        if !domain.is_planar_disk() {
            return Err(Error::Unsupported(format!("disk Möbius maps need a one-dimensional disk, got {domain}")));
        }
        Ok(Self { domain, kind: AutomorphismKind::DiskMoebius(Moebius::new(theta, a)?) })
    }

    pub fn polydisk(domain: Domain, factors: Vec<Moebius>, perm: Vec<usize>) -> Result<Self> {
        let n = domain.dim();
        if !domain.is_polydisk_like() {
            return Err(Error::Unsupported(format!("polydisk automorphisms need a polydisk, got {domain}")));
        }
        if factors.len() != n || perm.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: factors.len().max(perm.len()) });
        }
        let mut seen = vec![false; n];
        for &p in &perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidArgument(format!("{perm:?} is not a permutation")));
            }
        }
        for m in &factors {
            Moebius::new(m.theta, m.a)?;
        }
        Ok(Self { domain, kind: AutomorphismKind::Polydisk { factors, perm } })
    }

    pub fn ball_moebius(domain: Domain, a: Vec<C64>, unitary: Option<DMatrix<C64>>) -> Result<Self> {
        let n = domain.dim();
        if !domain.is_ball_like() {
            return Err(Error::Unsupported(format!("ball automorphisms need a ball, got {domain}")));
        }
        if a.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: a.len() });
        }
        let p = CPoint::new(a.clone())?;
        if p.norm() >= 1.0 {
            return Err(Error::InvalidArgument(format!("ball Möbius parameter {p} must lie in the ball")));
        }
        let u = unitary.unwrap_or_else(|| DMatrix::identity(n, n));
        if u.nrows() != n || u.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: u.nrows() });
        }
        let dev = (u.adjoint() * &u - DMatrix::<C64>::identity(n, n)).norm();
        if dev > UNITARY_TOL {
            return Err(Error::InvalidArgument(format!("matrix is not unitary (deviation {dev:e})")));
        }
        Ok(Self { domain, kind: AutomorphismKind::BallMoebius { a, unitary: u } })
    }

    pub fn translation(domain: Domain, b: Vec<C64>) -> Result<Self> {
        if domain.kind() != DomainKind::FullSpace {
            return Err(Error::Unsupported("translations are automorphisms of the full space only".into()));
        }
        if b.len() != domain.dim() {
            return Err(Error::DimensionMismatch { expected: domain.dim(), got: b.len() });
        }
        CPoint::new(b.clone())?;
        Ok(Self { domain, kind: AutomorphismKind::Translation { b } })
    }

    /// `outer ∘ inner`.
    pub fn compose(outer: &Automorphism, inner: &Automorphism) -> Result<Self> {
        if outer.domain != inner.domain {
            return Err(Error::InvalidArgument("cannot compose automorphisms of different domains".into()));
        }
        Ok(Self { domain: outer.domain, kind: AutomorphismKind::Composite(Box::new(outer.clone()), Box::new(inner.clone())) })
    }

    /// A catalog automorphism sending the domain center to `x`.
    pub fn transitive_to(domain: Domain, x: &CPoint) -> Result<Self> {
        domain.check_point(x)?;
        let c = x.coords();
        match domain.kind() {
            _ if domain.is_planar_disk() => Self::disk_moebius(domain, 0.0, -c[0]),
            DomainKind::UnitPolydisk => Self::polydisk(
                domain,
                c.iter().map(|&z| Moebius { theta: 0.0, a: -z }).collect(),
                (0..domain.dim()).collect(),
            ),
            DomainKind::UnitBall => Self::ball_moebius(domain, c.to_vec(), None),
            DomainKind::FullSpace => Self::translation(domain, c.to_vec()),
            DomainKind::UnitDisk => unreachable!("planar disk handled above"),
        }
    }

    /// A random catalog automorphism whose parameter point has norm ≤ `max_a`.
    pub fn random<R: Rng + ?Sized>(domain: Domain, rng: &mut R, max_a: f64) -> Result<Self> {
        let n = domain.dim();
        let disk_point = |rng: &mut R| C64::from_polar(max_a * rng.gen::<f64>().sqrt(), 2.0 * PI * rng.gen::<f64>());
        match domain.kind() {
            _ if domain.is_planar_disk() => {
                let a = disk_point(rng);
                Self::disk_moebius(domain, 2.0 * PI * rng.gen::<f64>() - PI, a)
            }
            DomainKind::UnitPolydisk => {
                let factors = (0..n).map(|_| Moebius { theta: 2.0 * PI * rng.gen::<f64>() - PI, a: disk_point(rng) }).collect();
                let mut perm: Vec<usize> = (0..n).collect();
                for i in (1..n).rev() {
                    perm.swap(i, rng.gen_range(0..=i));
                }
                Self::polydisk(domain, factors, perm)
            }
            DomainKind::UnitBall => {
                let a = domain.sample(rng, max_a);
                Self::ball_moebius(domain, a.coords().to_vec(), Some(random_unitary(rng, n)))
            }
            DomainKind::FullSpace => {
                let b = domain.sample(rng, max_a);
                Self::translation(domain, b.coords().to_vec())
            }
            DomainKind::UnitDisk => unreachable!("planar disk handled above"),
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn kind(&self) -> &AutomorphismKind {
        &self.kind
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, AutomorphismKind::Identity)
    }

    pub fn inverse(&self) -> Self {
        let kind = match &self.kind {
            AutomorphismKind::Identity => AutomorphismKind::Identity,
            AutomorphismKind::DiskMoebius(m) => AutomorphismKind::DiskMoebius(m.inverse()),
            AutomorphismKind::Polydisk { factors, perm } => {
                let mut q = vec![0; perm.len()];
                for (l, &p) in perm.iter().enumerate() {
                    q[p] = l;
                }
                AutomorphismKind::Polydisk { factors: q.iter().map(|&l| factors[l].inverse()).collect(), perm: q }
            }
            AutomorphismKind::BallMoebius { a, unitary } => {
                let ua = unitary * nalgebra::DVector::from_column_slice(a);
                AutomorphismKind::BallMoebius { a: ua.iter().copied().collect(), unitary: unitary.adjoint() }
            }
            AutomorphismKind::Translation { b } => AutomorphismKind::Translation { b: b.iter().map(|c| -c).collect() },
            AutomorphismKind::Composite(o, i) => AutomorphismKind::Composite(Box::new(i.inverse()), Box::new(o.inverse())),
        };
        Self { domain: self.domain, kind }
    }

    fn map(&self, z: &[C64]) -> Vec<C64> {
        match &self.kind {
            AutomorphismKind::Identity => z.to_vec(),
            AutomorphismKind::DiskMoebius(m) => vec![m.apply(z[0])],
            AutomorphismKind::Polydisk { factors, perm } => {
                factors.iter().zip(perm).map(|(m, &p)| m.apply(z[p])).collect()
            }
            AutomorphismKind::BallMoebius { a, unitary } => {
                let d = C64::new(1.0, 0.0) - z.iter().zip(a).map(|(zi, ai)| zi * ai.conj()).sum::<C64>();
                let az = ball_linear(a) * nalgebra::DVector::from_column_slice(z);
                let phi = nalgebra::DVector::from_fn(a.len(), |i, _| (a[i] - az[i]) / d);
                (unitary * phi).iter().copied().collect()
            }
            AutomorphismKind::Translation { b } => z.iter().zip(b).map(|(p, q)| p + q).collect(),
            AutomorphismKind::Composite(o, i) => o.map(&i.map(z)),
        }
    }

    fn jac(&self, z: &[C64]) -> DMatrix<C64> {
        let n = z.len();
        match &self.kind {
            AutomorphismKind::Identity | AutomorphismKind::Translation { .. } => DMatrix::identity(n, n),
            AutomorphismKind::DiskMoebius(m) => DMatrix::from_element(1, 1, m.derivative(z[0])),
            AutomorphismKind::Polydisk { factors, perm } => {
                let mut j = DMatrix::zeros(n, n);
                for (l, (m, &p)) in factors.iter().zip(perm).enumerate() {
                    j[(l, p)] = m.derivative(z[p]);
                }
                j
            }
            AutomorphismKind::BallMoebius { a, unitary } => {
                // Dφ_a = (−A·d + N·āᵀ)/d², N = a − A z, d = 1 − ⟨z, a⟩.
                let d = C64::new(1.0, 0.0) - z.iter().zip(a).map(|(zi, ai)| zi * ai.conj()).sum::<C64>();
                let am = ball_linear(a);
                let num = nalgebra::DVector::from_column_slice(a) - &am * nalgebra::DVector::from_column_slice(z);
                let abar = nalgebra::DVector::from_iterator(n, a.iter().map(|c| c.conj()));
                let dphi = (-am * d + num * abar.transpose()) / (d * d);
                unitary * dphi
            }
            AutomorphismKind::Composite(o, i) => o.jac(&i.map(z)) * i.jac(z),
        }
    }

    /// Complex Jacobian determinant `J_Φ(z)` in closed form.
    pub fn jacobian_det(&self, z: &[C64]) -> C64 {
        match &self.kind {
            AutomorphismKind::Identity | AutomorphismKind::Translation { .. } => C64::new(1.0, 0.0),
            AutomorphismKind::DiskMoebius(m) => m.derivative(z[0]),
            AutomorphismKind::Polydisk { factors, perm } => {
                factors.iter().zip(perm).map(|(m, &p)| m.derivative(z[p])).product::<C64>() * perm_sign(perm)
            }
            AutomorphismKind::BallMoebius { a, unitary } => {
                let n = a.len() as i32;
                let a2: f64 = a.iter().map(|c| c.norm_sqr()).sum();
                let d = C64::new(1.0, 0.0) - z.iter().zip(a).map(|(zi, ai)| zi * ai.conj()).sum::<C64>();
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                unitary.determinant() * sign * (1.0 - a2).powf((n as f64 + 1.0) / 2.0) / d.powi(n + 1)
            }
            AutomorphismKind::Composite(o, i) => o.jacobian_det(&i.map(z)) * i.jacobian_det(z),
        }
    }

    /// Image of a point, checked to stay inside the domain.
    pub fn apply_point(&self, z: &CPoint) -> Result<CPoint> {
        self.domain.check_point(z)?;
        let w = CPoint::new(self.map(z.coords()))?;
        self.domain.check_point(&w)?;
        Ok(w)
    }
}

impl PointMap for Automorphism {
    fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn apply(&self, z: &[C64]) -> Result<Vec<C64>> {
        let w = self.map(z);
        if w.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite(format!("automorphism {self}")));
        }
        Ok(w)
    }

    fn jacobian(&self, z: &[C64]) -> Result<DMatrix<C64>> {
        Ok(self.jac(z))
    }

    fn describe(&self) -> String {
        self.to_string()
    }
}

/// Haar-distributed unitary via QR of a complex Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<C64> {
    let g = DMatrix::from_fn(n, n, |_, _| C64::new(gaussian(rng), gaussian(rng)));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = DMatrix::from_fn(n, n, |i, j| {
        if i == j && r[(i, i)].norm() > 0.0 { r[(i, i)] / r[(i, i)].norm() } else { C64::new(0.0, 0.0) }
    });
    q * phases
}

/// JSON form: `{"kind":"disk-moebius","theta":0.0,"a":[0.3,0.1]}` and friends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AutoSpec {
    Identity,
    DiskMoebius {
        #[serde(default)]
        theta: f64,
        a: C64,
    },
    Polydisk {
        factors: Vec<Moebius>,
        #[serde(default)]
        perm: Option<Vec<usize>>,
    },
    BallMoebius {
        a: Vec<C64>,
        #[serde(default)]
        unitary: Option<Vec<Vec<C64>>>,
    },
    Translation {
        b: Vec<C64>,
    },
    Compose {
        outer: Box<AutoSpec>,
        inner: Box<AutoSpec>,
    },
    Inverse {
        of: Box<AutoSpec>,
    },
}

impl AutoSpec {
    pub fn build(&self, domain: Domain) -> Result<Automorphism> {
        match self {
            Self::Identity => Ok(Automorphism::identity(domain)),
            Self::DiskMoebius { theta, a } => Automorphism::disk_moebius(domain, *theta, *a),
            Self::Polydisk { factors, perm } => {
                let perm = perm.clone().unwrap_or_else(|| (0..factors.len()).collect());
                Automorphism::polydisk(domain, factors.clone(), perm)
            }
            Self::BallMoebius { a, unitary } => {
                let u = match unitary {
                    None => None,
                    Some(rows) => {
                        let n = rows.len();
                        if rows.iter().any(|r| r.len() != n) {
                            return Err(Error::InvalidArgument("unitary must be square".into()));
                        }
                        Some(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
                    }
                };
                Automorphism::ball_moebius(domain, a.clone(), u)
            }
            Self::Translation { b } => Automorphism::translation(domain, b.clone()),
            Self::Compose { outer, inner } => Automorphism::compose(&outer.build(domain)?, &inner.build(domain)?),
            Self::Inverse { of } => Ok(of.build(domain)?.inverse()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fd_jacobian(phi: &Automorphism, z: &[C64]) -> DMatrix<C64> {
        let n = z.len();
        let h = 1e-6;
        DMatrix::from_fn(n, n, |l, j| {
            let mut p = z.to_vec();
            let mut m = z.to_vec();
            p[j] += h;
            m[j] -= h;
            (phi.map(&p)[l] - phi.map(&m)[l]) / (2.0 * h)
        })
    }

    fn check_roundtrip_and_jacobian(phi: &Automorphism, z: &CPoint) {
        let w = phi.apply_point(z).unwrap();
        let back = phi.inverse().apply_point(&w).unwrap();
        let err: f64 = back.coords().iter().zip(z.coords()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{phi}: inverse error {err}");
        let jac = phi.jac(z.coords());
        let fd = fd_jacobian(phi, z.coords());
        assert!((&jac - &fd).norm() < 1e-7 * (1.0 + jac.norm()), "{phi}: {jac} vs {fd}");
        let det = phi.jacobian_det(z.coords());
        assert!((det - fd.determinant()).norm() < 1e-7 * (1.0 + det.norm()), "{phi}: det {det}");
    }

    #[test]
    fn catalog_maps_invert_and_match_differenced_jacobians() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for domain in [
            Domain::disk(),
            Domain::polydisk(3).unwrap(),
            Domain::ball(1).unwrap(),
            Domain::ball(2).unwrap(),
            Domain::ball(3).unwrap(),
            Domain::full_space(2).unwrap(),
        ] {
            for _ in 0..5 {
                let phi = Automorphism::random(domain, &mut rng, 0.8).unwrap();
                let psi = Automorphism::random(domain, &mut rng, 0.8).unwrap();
                let comp = Automorphism::compose(&phi, &psi).unwrap();
                let z = domain.sample(&mut rng, 0.7);
                check_roundtrip_and_jacobian(&phi, &z);
                check_roundtrip_and_jacobian(&comp, &z);
            }
        }
    }

    #[test]
    fn transitive_maps_send_center_to_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for domain in [Domain::disk(), Domain::polydisk(2).unwrap(), Domain::ball(3).unwrap()] {
            let x = domain.sample(&mut rng, 0.9);
            let phi = Automorphism::transitive_to(domain, &x).unwrap();
            let w = phi.apply_point(&domain.center()).unwrap();
            let err: f64 = w.coords().iter().zip(x.coords()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-14);
        }
    }

    #[test]
    fn json_spec() {
        let spec: AutoSpec = serde_json::from_str(r#"{"kind":"disk-moebius","theta":0.0,"a":[0.3,0.1]}"#).unwrap();
        let phi = spec.build(Domain::disk()).unwrap();
        assert_eq!(phi.kind(), &AutomorphismKind::DiskMoebius(Moebius { theta: 0.0, a: C64::new(0.3, 0.1) }));
        assert!(AutoSpec::DiskMoebius { theta: 0.0, a: C64::new(1.0, 0.0) }.build(Domain::disk()).is_err());
        assert!(matches!(spec.build(Domain::ball(2).unwrap()), Err(Error::Unsupported(_))));
    }

    #[test]
    fn permutation_sign() {
        assert_eq!(perm_sign(&[0, 1, 2]), 1.0);
        assert_eq!(perm_sign(&[1, 0, 2]), -1.0);
        assert_eq!(perm_sign(&[1, 2, 0]), 1.0);
    }
}
