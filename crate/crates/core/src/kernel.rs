//! The kernel-expression language: catalog leaves and the kernel algebra.

use crate::holo::{HoloExpr, HoloMap, VarNames};

#[derive(Debug, Clone, PartialEq)]
pub enum KernelExpr {
    /// Bergman kernel of the bound domain (Lebesgue area measure).
    Bergman,
    /// Szegő kernel of the bound domain.
    Szego,
    /// `exp(⟨x, y⟩)`.
    Fock,
    /// `h(x)·conj(h(y))`.
    Rank1(HoloExpr),
    /// Positive constant kernel.
    Const(f64),
    /// Raw sesqui-holomorphic expression in `x1..xn`, `conj(y1)..conj(yn)`; not assumed psd.
    Sesqui(HoloExpr),
    Product(Box<KernelExpr>, Box<KernelExpr>),
    Power { base: Box<KernelExpr>, exponent: f64, well_defined: bool },
    /// `ω(x)·conj(ω(y))·K(x,y)`.
    Rescale(Box<KernelExpr>, HoloExpr),
    /// `K(Φ(x), Φ(y))`.
    Pullback(Box<KernelExpr>, HoloMap),
}

impl KernelExpr {
    pub fn product(a: KernelExpr, b: KernelExpr) -> Self {
        Self::Product(Box::new(a), Box::new(b))
    }

    /// Power node; the flag is the static part of the well-definedness test (see
    /// [`KernelExpr::power_is_statically_defined`]). Parsing refines it by sampling.
    pub fn power(base: KernelExpr, exponent: f64) -> Self {
        let well_defined = Self::power_is_statically_defined(&base, exponent);
        Self::Power { base: Box::new(base), exponent, well_defined }
    }

    pub fn rescale(base: KernelExpr, weight: HoloExpr) -> Self {
        Self::Rescale(Box::new(base), weight)
    }

    pub fn pullback(base: KernelExpr, map: HoloMap) -> Self {
        Self::Pullback(Box::new(base), map)
    }

    /// Non-negative integer powers are always defined; anything else needs a
    /// kernel known not to vanish.
    pub fn power_is_statically_defined(base: &KernelExpr, exponent: f64) -> bool {
        (exponent.fract() == 0.0 && exponent >= 0.0) || base.known_nonvanishing()
    }

    pub fn is_integer_power(exponent: f64) -> bool {
        exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64
    }

    /// Whether positive semi-definiteness follows from the construction.
    pub fn known_psd(&self) -> bool {
        match self {
            Self::Bergman | Self::Szego | Self::Fock | Self::Rank1(_) | Self::Const(_) => true,
            Self::Sesqui(_) => false,
            Self::Product(a, b) => a.known_psd() && b.known_psd(),
            Self::Power { base, exponent, .. } => {
                exponent.fract() == 0.0 && *exponent >= 0.0 && base.known_psd()
            }
            Self::Rescale(a, _) | Self::Pullback(a, _) => a.known_psd(),
        }
    }

    /// Whether the kernel is known never to vanish on the domain.
    pub fn known_nonvanishing(&self) -> bool {
        match self {
            Self::Bergman | Self::Szego | Self::Fock | Self::Const(_) => true,
            Self::Rank1(_) | Self::Sesqui(_) => false,
            Self::Product(a, b) => a.known_nonvanishing() && b.known_nonvanishing(),
            Self::Power { base, .. } => base.known_nonvanishing(),
            // Rescale weights are checked to be non-vanishing at compile time.
            Self::Rescale(a, _) | Self::Pullback(a, _) => a.known_nonvanishing(),
        }
    }

    fn write(&self, out: &mut String, n: usize) {
        match self {
            Self::Bergman => out.push_str("bergman"),
            Self::Szego => out.push_str("szego"),
            Self::Fock => out.push_str("fock"),
            Self::Rank1(h) => out.push_str(&format!("rank1({})", h.display_with(VarNames::Holo))),
            Self::Const(c) => out.push_str(&format!("const({c:?})")),
            Self::Sesqui(e) => out.push_str(&format!("sesqui({})", e.display_with(VarNames::Sesqui { n }))),
            Self::Product(a, b) => {
                out.push_str("product(");
                a.write(out, n);
                out.push_str(", ");
                b.write(out, n);
                out.push(')');
            }
            Self::Power { base, exponent, .. } => {
                out.push_str("power(");
                base.write(out, n);
                out.push_str(&format!(", {exponent:?})"));
            }
            Self::Rescale(a, w) => {
                out.push_str("rescale(");
                a.write(out, n);
                out.push_str(&format!(", {})", w.display_with(VarNames::Holo)));
            }
            Self::Pullback(a, map) => {
                out.push_str("pullback(");
                a.write(out, n);
                out.push_str(", [");
                for (i, e) in map.exprs().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    out.push_str(&e.display_with(VarNames::Holo));
                }
                out.push_str("])");
            }
        }
    }

    /// Prints in the DSL; `n` is the dimension of the domain the kernel lives on.
    pub fn to_dsl(&self, n: usize) -> String {
        let mut s = String::new();
        self.write(&mut s, n);
        s
    }
}
