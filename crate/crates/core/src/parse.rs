//! Recursive-descent parser for holomorphic expressions and the kernel DSL.
//!
//! ```text
//! kernel := name | name "(" args ")"
//!         | "product(" kernel "," kernel ")" | "power(" kernel "," real ")"
//!         | "rescale(" kernel "," holo ")" | "pullback(" kernel "," map ")"
//!         | sesqui
//! name   := "bergman" | "szego" | "fock" | "rank1" | "const" | "sesqui"
//! map    := holo | "[" holo ("," holo)* "]"
//! holo   := arithmetic over z1..zn (z when n = 1) with exp, integer powers, a+bi literals
//! sesqui := arithmetic over x1..xn and conj(y1)..conj(yn)
//! ```

use num_complex::Complex64;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::holo::{HoloExpr, HoloMap};
use crate::kernel::KernelExpr;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Imag(f64),
    Ident(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, ch) = chars[i];
        let single = match ch {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            '+' => Some(Tok::Plus),
            '-' | '−' => Some(Tok::Minus),
            '*' | '·' | '×' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            _ => None,
        };
        if let Some(t) = single {
            toks.push((pos, t));
            i += 1;
            continue;
        }
        if ch.is_ascii_digit() || ch == '.' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                i += 1;
            }
            // Exponent only when followed by a digit (optionally signed).
            if i < chars.len() && (chars[i].1 == 'e' || chars[i].1 == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j].1 == '+' || chars[j].1 == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].1.is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].1.is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let end = chars.get(i).map_or(text.len(), |c| c.0);
            let lit = &text[pos..end];
            let v: f64 = lit
                .parse()
                .map_err(|_| Error::Syntax { pos, msg: format!("bad number `{lit}`") })?;
            let imag = i < chars.len()
                && chars[i].1 == 'i'
                && !chars.get(i + 1).is_some_and(|c| c.1.is_alphanumeric() || c.1 == '_');
            if imag {
                i += 1;
                toks.push((chars[start].0, Tok::Imag(v)));
            } else {
                toks.push((chars[start].0, Tok::Num(v)));
            }
            continue;
        }
        if ch.is_alphabetic() || ch == '_' {
            let start = pos;
            while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_') {
                i += 1;
            }
            let end = chars.get(i).map_or(text.len(), |c| c.0);
            let word = &text[start..end];
            if word == "i" {
                toks.push((start, Tok::Imag(1.0)));
            } else {
                toks.push((start, Tok::Ident(word.to_string())));
            }
            continue;
        }
        return Err(Error::Syntax { pos, msg: format!("unexpected character `{ch}`") });
    }
    Ok(toks)
}

/// Which variables an expression may mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Vars {
    /// No variables: real or complex constants only.
    None,
    /// `z1..zn`.
    Holo(usize),
    /// `x1..xn` and `conj(y1)..conj(yn)`.
    Sesqui(usize),
}

const KERNEL_WORDS: &[&str] = &[
    "bergman", "szego", "fock", "rank1", "const", "sesqui", "product", "power", "rescale", "pullback",
];

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    at: usize,
    len: usize,
    domain: &'a Domain,
}

impl<'a> Parser<'a> {
    fn new(text: &str, domain: &'a Domain) -> Result<Self> {
        Ok(Self { toks: lex(text)?, at: 0, len: text.len(), domain })
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.len, |t| t.0)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.1)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.at + k).map(|t| &t.1)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|t| t.1.clone());
        self.at += 1;
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Syntax { pos: self.pos(), msg: msg.into() })
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        if self.peek() == Some(&want) {
            self.at += 1;
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn finish(&self) -> Result<()> {
        if self.at < self.toks.len() {
            self.err("unexpected trailing input")
        } else {
            Ok(())
        }
    }

    // ---- kernels ----

    fn kernel(&mut self) -> Result<KernelExpr> {
        let word = match self.peek() {
            Some(Tok::Ident(w)) if KERNEL_WORDS.contains(&w.as_str()) => w.clone(),
            Some(Tok::Ident(w))
                if self.peek_at(1) == Some(&Tok::LParen)
                    && !matches!(w.as_str(), "exp" | "conj") =>
            {
                return Err(Error::UnknownName(w.clone()));
            }
            _ => {
                let n = self.domain.dim();
                let e = self.expr(Vars::Sesqui(n))?;
                return Ok(KernelExpr::Sesqui(e));
            }
        };
        self.at += 1;
        let has_args = self.peek() == Some(&Tok::LParen);
        let dim = self.domain.dim();
        let k = match word.as_str() {
            "bergman" | "szego" | "fock" => {
                if has_args {
                    self.at += 1;
                    self.expect(Tok::RParen, "`)` (this kernel takes no arguments)")?;
                }
                match word.as_str() {
                    "bergman" => KernelExpr::Bergman,
                    "szego" => KernelExpr::Szego,
                    _ => KernelExpr::Fock,
                }
            }
            _ if !has_args => return self.err(format!("`{word}` needs arguments")),
            "rank1" => {
                self.at += 1;
                let h = self.expr(Vars::Holo(dim))?;
                self.expect(Tok::RParen, "`)`")?;
                KernelExpr::Rank1(h)
            }
            "const" => {
                self.at += 1;
                let pos = self.pos();
                let v = self.real()?;
                if v.is_nan() || v <= 0.0 {
                    return Err(Error::Syntax { pos, msg: "const needs a positive value".into() });
                }
                self.expect(Tok::RParen, "`)`")?;
                KernelExpr::Const(v)
            }
            "sesqui" => {
                self.at += 1;
                let e = self.expr(Vars::Sesqui(dim))?;
                self.expect(Tok::RParen, "`)`")?;
                KernelExpr::Sesqui(e)
            }
            "product" => {
                self.at += 1;
                let a = self.kernel()?;
                self.expect(Tok::Comma, "`,`")?;
                let b = self.kernel()?;
                self.expect(Tok::RParen, "`)`")?;
                KernelExpr::product(a, b)
            }
            "power" => {
                self.at += 1;
                let a = self.kernel()?;
                self.expect(Tok::Comma, "`,`")?;
                let s = self.real()?;
                self.expect(Tok::RParen, "`)`")?;
                KernelExpr::power(a, s)
            }
            "rescale" => {
                self.at += 1;
                let a = self.kernel()?;
                self.expect(Tok::Comma, "`,`")?;
                let w = self.expr(Vars::Holo(dim))?;
                self.expect(Tok::RParen, "`)`")?;
                KernelExpr::rescale(a, w)
            }
            "pullback" => {
                self.at += 1;
                let a = self.kernel()?;
                self.expect(Tok::Comma, "`,`")?;
                let comps = if self.peek() == Some(&Tok::LBracket) {
                    self.at += 1;
                    let mut v = vec![self.expr(Vars::Holo(dim))?];
                    while self.peek() == Some(&Tok::Comma) {
                        self.at += 1;
                        v.push(self.expr(Vars::Holo(dim))?);
                    }
                    self.expect(Tok::RBracket, "`]`")?;
                    v
                } else {
                    vec![self.expr(Vars::Holo(dim))?]
                };
                self.expect(Tok::RParen, "`)`")?;
                KernelExpr::pullback(a, HoloMap::new(comps, dim)?)
            }
            _ => unreachable!(),
        };
        Ok(k)
    }

    fn real(&mut self) -> Result<f64> {
        let pos = self.pos();
        let e = self.expr(Vars::None)?;
        match e.as_const() {
            Some(z) if z.im == 0.0 && z.re.is_finite() => Ok(z.re),
            _ => Err(Error::Syntax { pos, msg: "expected a real constant".into() }),
        }
    }

    // ---- holomorphic arithmetic ----

    fn expr(&mut self, vars: Vars) -> Result<HoloExpr> {
        let mut lhs = self.term(vars)?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.at += 1;
                    lhs = HoloExpr::add(lhs, self.term(vars)?);
                }
                Some(Tok::Minus) => {
                    self.at += 1;
                    lhs = HoloExpr::sub(lhs, self.term(vars)?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self, vars: Vars) -> Result<HoloExpr> {
        let mut lhs = self.unary(vars)?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.at += 1;
                    lhs = HoloExpr::mul(lhs, self.unary(vars)?);
                }
                Some(Tok::Slash) => {
                    self.at += 1;
                    lhs = HoloExpr::div(lhs, self.unary(vars)?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self, vars: Vars) -> Result<HoloExpr> {
        match self.peek() {
            Some(Tok::Minus) => {
                self.at += 1;
                Ok(HoloExpr::neg(self.unary(vars)?))
            }
            Some(Tok::Plus) => {
                self.at += 1;
                self.unary(vars)
            }
            _ => self.power(vars),
        }
    }

    fn power(&mut self, vars: Vars) -> Result<HoloExpr> {
        let base = self.atom(vars)?;
        if self.peek() != Some(&Tok::Caret) {
            return Ok(base);
        }
        self.at += 1;
        let k = self.int_exponent()?;
        Ok(HoloExpr::pow(base, k))
    }

    fn int_exponent(&mut self) -> Result<i32> {
        let paren = self.peek() == Some(&Tok::LParen);
        if paren {
            self.at += 1;
        }
        let neg = self.peek() == Some(&Tok::Minus);
        if neg {
            self.at += 1;
        }
        let pos = self.pos();
        let k = match self.bump() {
            Some(Tok::Num(v)) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => v as i32,
            _ => return Err(Error::Syntax { pos, msg: "exponent must be an integer".into() }),
        };
        if paren {
            self.expect(Tok::RParen, "`)`")?;
        }
        Ok(if neg { -k } else { k })
    }

    fn atom(&mut self, vars: Vars) -> Result<HoloExpr> {
        let pos = self.pos();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(HoloExpr::constant(Complex64::new(v, 0.0))),
            Some(Tok::Imag(v)) => Ok(HoloExpr::constant(Complex64::new(0.0, v))),
            Some(Tok::LParen) => {
                let e = self.expr(vars)?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Ident(w)) => self.ident(&w, pos, vars),
            Some(t) => Err(Error::Syntax { pos, msg: format!("unexpected token {t:?}") }),
            None => Err(Error::Syntax { pos, msg: "unexpected end of input".into() }),
        }
    }

    fn ident(&mut self, w: &str, pos: usize, vars: Vars) -> Result<HoloExpr> {
        match w {
            "pi" => return Ok(HoloExpr::constant(Complex64::new(std::f64::consts::PI, 0.0))),
            "exp" => {
                self.expect(Tok::LParen, "`(` after exp")?;
                let e = self.expr(vars)?;
                self.expect(Tok::RParen, "`)`")?;
                return Ok(HoloExpr::exp(e));
            }
            "conj" => {
                let Vars::Sesqui(n) = vars else {
                    return Err(Error::Syntax {
                        pos,
                        msg: "conjugation is only allowed on second-slot variables of a sesqui kernel".into(),
                    });
                };
                self.expect(Tok::LParen, "`(` after conj")?;
                let vpos = self.pos();
                let j = match self.bump() {
                    Some(Tok::Ident(v)) => var_index(&v, 'y', n, vpos)?,
                    _ => None,
                };
                let Some(j) = j else {
                    return Err(Error::Syntax { pos: vpos, msg: "conj() applies only to y1..yn".into() });
                };
                self.expect(Tok::RParen, "`)`")?;
                return Ok(HoloExpr::var(n + j));
            }
            _ => {}
        }
        let idx = match vars {
            Vars::None => None,
            Vars::Holo(n) => var_index(w, 'z', n, pos)?,
            Vars::Sesqui(n) => {
                if w.starts_with('y') && var_index(w, 'y', n, pos)?.is_some() {
                    return Err(Error::Syntax {
                        pos,
                        msg: "second-slot variables must appear conjugated, as conj(y)".into(),
                    });
                }
                var_index(w, 'x', n, pos)?
            }
        };
        match idx {
            Some(j) => Ok(HoloExpr::var(j)),
            None => Err(Error::UnknownName(w.to_string())),
        }
    }
}

/// `z` (when n = 1) or `z1..zn`; `Ok(None)` for unrelated identifiers.
fn var_index(word: &str, letter: char, n: usize, pos: usize) -> Result<Option<usize>> {
    let Some(rest) = word.strip_prefix(letter) else {
        return Ok(None);
    };
    if rest.is_empty() {
        return if n == 1 {
            Ok(Some(0))
        } else {
            Err(Error::Syntax { pos, msg: format!("`{letter}` is ambiguous in dimension {n}; use {letter}1..{letter}{n}") })
        };
    }
    let Ok(k) = rest.parse::<usize>() else {
        return Ok(None);
    };
    if k == 0 || k > n {
        return Err(Error::DimensionMismatch { expected: n, got: k });
    }
    Ok(Some(k - 1))
}

/// Parses the kernel DSL for the given domain. The resulting tree carries the
/// power-node well-definedness flags for that domain.
pub fn parse_kernel(text: &str, domain: &Domain) -> Result<KernelExpr> {
    let mut p = Parser::new(text, domain)?;
    let k = p.kernel()?;
    p.finish()?;
    Ok(crate::eval::annotate_powers(k, domain))
}

/// Parses a holomorphic expression in `z1..zn`.
pub fn parse_holo(text: &str, n: usize) -> Result<HoloExpr> {
    let d = Domain::full_space(n.max(1))?;
    let mut p = Parser::new(text, &d)?;
    let e = p.expr(Vars::Holo(n))?;
    p.finish()?;
    Ok(e)
}

/// Parses a real constant expression such as `4*pi` or `2.5`.
pub fn parse_real(text: &str) -> Result<f64> {
    let d = Domain::disk();
    let mut p = Parser::new(text, &d)?;
    let v = p.real()?;
    p.finish()?;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk() -> Domain {
        Domain::disk()
    }

    #[test]
    fn leaves_and_composition() {
        assert_eq!(parse_kernel("bergman", &disk()).unwrap(), KernelExpr::Bergman);
        assert_eq!(parse_kernel("fock()", &disk()).unwrap(), KernelExpr::Fock);
        let k = parse_kernel("rescale(bergman, exp(z1))", &disk()).unwrap();
        match k {
            KernelExpr::Rescale(inner, w) => {
                assert_eq!(*inner, KernelExpr::Bergman);
                assert_eq!(w, HoloExpr::exp(HoloExpr::var(0)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn power_flag_on_disk() {
        match parse_kernel("power(szego, 2.5)", &disk()).unwrap() {
            KernelExpr::Power { exponent, well_defined, .. } => {
                assert_eq!(exponent, 2.5);
                assert!(well_defined);
            }
            other => panic!("{other:?}"),
        }
        match parse_kernel("power(rank1(z), 0.5)", &disk()).unwrap() {
            KernelExpr::Power { well_defined, .. } => assert!(!well_defined),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn complex_literals_and_unicode() {
        let e = parse_holo("2+3i - 1.5e-1i*z", 1).unwrap();
        let v = e.eval(&[Complex64::new(1.0, 0.0)]).unwrap();
        assert!((v - Complex64::new(2.0, 3.0 - 0.15)).norm() < 1e-15);
        let k = parse_kernel("1 − x·conj(y)", &disk()).unwrap();
        assert!(matches!(k, KernelExpr::Sesqui(_)));
        assert_eq!(parse_real("4*pi").unwrap(), 4.0 * std::f64::consts::PI);
    }

    #[test]
    fn errors_carry_positions() {
        match parse_kernel("product(bergman, )", &disk()) {
            Err(Error::Syntax { pos, .. }) => assert_eq!(pos, 17),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_kernel("bargman(1)", &disk()), Err(Error::UnknownName(_))));
        assert!(matches!(parse_kernel("rank1(z3)", &disk()), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(parse_kernel("x*y", &disk()), Err(Error::Syntax { .. })));
        assert!(matches!(parse_kernel("rank1(conj(z))", &disk()), Err(Error::Syntax { .. })));
        assert!(matches!(parse_kernel("const(-1)", &disk()), Err(Error::Syntax { .. })));
        let ball = Domain::ball(2).unwrap();
        assert!(parse_kernel("rank1(z)", &ball).is_err());
        assert!(parse_kernel("pullback(bergman, [z2, z1])", &ball).is_ok());
        assert!(matches!(parse_kernel("pullback(bergman, z1)", &ball), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn exponent_forms() {
        let a = parse_holo("z^-2", 1).unwrap();
        let b = parse_holo("z^(-2)", 1).unwrap();
        assert_eq!(a, b);
        assert!(parse_holo("z^1.5", 1).is_err());
        assert_eq!(parse_holo("-z^2", 1).unwrap(), HoloExpr::neg(HoloExpr::pow(HoloExpr::var(0), 2)));
    }
}
