//! Rescaling detection, projective invariance, multipliers and their cocycle,
//! weighted-composition unitarity, metric invariance, and the weighted Bergman
//! power law.
//!
//! Equalities that only hold up to a unimodular constant are compared as
//! `|ratio| = 1` plus constancy of the ratio across samples.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::automorphism::Automorphism;
use crate::distance::{delta1, delta2};
use crate::domain::{CPoint, Domain};
use crate::error::{Error, Result};
use crate::eval::{compile_str, KernelEvaluator};
use crate::metric::{metric_tensor, MetricProfile};
use crate::oracle::{series_kernel_oracle, RadialWeight};
use crate::wirtinger::{log_mixed_hessian, wirtinger_of, DiffConfig};

type C64 = Complex64;

/// Failing samples kept as witnesses per report.
const MAX_WITNESSES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub points: Vec<CPoint>,
    pub deviation: f64,
    pub note: String,
}

/// Common result of every check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub check: String,
    pub verdict: Verdict,
    pub max_dev: f64,
    pub tol: f64,
    pub samples: usize,
    pub witnesses: Vec<Witness>,
    pub details: BTreeMap<String, Value>,
}

impl InvarianceReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    fn not_applicable(check: &str, tol: f64, samples: usize, reason: impl Into<String>) -> Self {
        let mut details = BTreeMap::new();
        details.insert("reason".into(), Value::String(reason.into()));
        Self { check: check.into(), verdict: Verdict::NotApplicable, max_dev: f64::NAN, tol, samples, witnesses: vec![], details }
    }
}

/// Running maximum of deviations with the worst failing samples; fed in sample
/// order so reports do not depend on scheduling.
#[derive(Debug, Clone)]
struct Tracker {
    tol: f64,
    max_dev: f64,
    count: usize,
    worst: Option<Witness>,
    failing: Vec<Witness>,
}

impl Tracker {
    fn new(tol: f64) -> Self {
        Self { tol, max_dev: 0.0, count: 0, worst: None, failing: Vec::new() }
    }

    fn add(&mut self, dev: f64, points: &[CPoint], note: impl FnOnce() -> String) {
        self.count += 1;
        let dev = if dev.is_nan() { f64::INFINITY } else { dev };
        let fails = dev > self.tol;
        if dev > self.max_dev || self.worst.is_none() {
            self.max_dev = self.max_dev.max(dev);
            let w = Witness { points: points.to_vec(), deviation: dev, note: note() };
            if fails && self.failing.len() < MAX_WITNESSES {
                self.failing.push(w.clone());
            }
            self.worst = Some(w);
        } else if fails && self.failing.len() < MAX_WITNESSES {
            self.failing.push(Witness { points: points.to_vec(), deviation: dev, note: note() });
        }
    }

    fn merge(&mut self, other: Tracker) {
        self.count += other.count;
        if other.max_dev > self.max_dev || self.worst.is_none() {
            self.max_dev = self.max_dev.max(other.max_dev);
            self.worst = other.worst;
        }
        for w in other.failing {
            if self.failing.len() < MAX_WITNESSES {
                self.failing.push(w);
            }
        }
    }

    fn passed(&self) -> bool {
        self.max_dev <= self.tol
    }

    fn report(self, check: &str, details: BTreeMap<String, Value>) -> InvarianceReport {
        let verdict = if self.passed() { Verdict::Pass } else { Verdict::Fail };
        let mut witnesses = self.failing;
        if verdict == Verdict::Fail && witnesses.is_empty() {
            witnesses.extend(self.worst);
        }
        witnesses.sort_by(|a, b| b.deviation.total_cmp(&a.deviation));
        InvarianceReport { check: check.into(), verdict, max_dev: self.max_dev, tol: self.tol, samples: self.count, witnesses, details }
    }
}

/// Deterministic sample points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleConfig {
    pub count: usize,
    pub seed: u64,
    /// Defaults to the domain's margin-limited radius.
    pub radius: Option<f64>,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { count: 24, seed: 0, radius: None }
    }
}

impl SampleConfig {
    pub fn new(count: usize, seed: u64) -> Self {
        Self { count, seed, radius: None }
    }

    pub fn with_radius(self, r: f64) -> Self {
        Self { radius: Some(r), ..self }
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    pub fn points(&self, domain: &Domain, stream: u64) -> Vec<CPoint> {
        let r = self.radius.unwrap_or_else(|| domain.default_sample_radius());
        domain.sample_points(&mut self.rng(stream), self.count, r)
    }
}

const STREAM_POINTS: u64 = 1;
const STREAM_FRESH: u64 = 2;
const STREAM_WORDS: u64 = 3;

/// Consecutive pairs `(p_i, p_{i+1 mod m})`.
fn pairs(points: &[CPoint]) -> Vec<(CPoint, CPoint)> {
    let m = points.len();
    (0..m).map(|i| (points[i].clone(), points[(i + 1) % m].clone())).collect()
}

fn same_domain(k: &KernelEvaluator, l: &KernelEvaluator) -> Result<()> {
    if k.domain() != l.domain() {
        return Err(Error::InvalidArgument(format!("kernels live on {} and {}", k.domain(), l.domain())));
    }
    Ok(())
}

fn enough_samples(s: &SampleConfig) -> Result<()> {
    if s.count < 2 {
        return Err(Error::InvalidArgument("at least two samples are needed".into()));
    }
    Ok(())
}

/// `|K(x,y)|²/(K̂(x)K̂(y))`.
pub fn normalized_modulus(k: &KernelEvaluator, x: &CPoint, y: &CPoint) -> Result<f64> {
    let v = k.eval(x, y)?;
    Ok(v.norm_sqr() / (k.diag(x)? * k.diag(y)?))
}

/// `‖A − B‖/max(1, ‖A‖, ‖B‖)`.
fn matrix_dev(a: &nalgebra::DMatrix<C64>, b: &nalgebra::DMatrix<C64>) -> f64 {
    (a - b).norm() / 1f64.max(a.norm()).max(b.norm())
}

fn fold_trackers(tol: f64, parts: Vec<Tracker>) -> Tracker {
    let mut t = Tracker::new(tol);
    for p in parts {
        t.merge(p);
    }
    t
}

// ---------------------------------------------------------------------------
// Rescaling

/// Runs the log-Hessian criterion and the normalized-modulus criterion
/// independently; passes when both do.
pub fn is_rescaling(k: &KernelEvaluator, l: &KernelEvaluator, samples: &SampleConfig, tol: f64, cfg: &DiffConfig) -> Result<InvarianceReport> {
    same_domain(k, l)?;
    enough_samples(samples)?;
    let pts = samples.points(k.domain(), STREAM_POINTS);
    let hess: Vec<Tracker> = pts
        .par_iter()
        .map(|x| {
            let mut t = Tracker::new(tol);
            let a = log_mixed_hessian(k, x, cfg)?;
            let b = log_mixed_hessian(l, x, cfg)?;
            t.add(matrix_dev(&a, &b), std::slice::from_ref(x), || "log-Hessian mismatch".into());
            Ok(t)
        })
        .collect::<Result<_>>()?;
    let modulus: Vec<Tracker> = pairs(&pts)
        .par_iter()
        .map(|(x, y)| {
            let mut t = Tracker::new(tol);
            let dev = (normalized_modulus(k, x, y)? - normalized_modulus(l, x, y)?).abs();
            t.add(dev, &[x.clone(), y.clone()], || "normalized modulus mismatch".into());
            Ok(t)
        })
        .collect::<Result<_>>()?;
    let (hess, modulus) = (fold_trackers(tol, hess), fold_trackers(tol, modulus));
    let (pass_h, pass_m) = (hess.passed(), modulus.passed());
    let mut details = BTreeMap::new();
    details.insert("kernel".into(), json!(k.describe()));
    details.insert("other".into(), json!(l.describe()));
    details.insert("log_hessian".into(), json!({"max_dev": hess.max_dev, "pass": pass_h}));
    details.insert("normalized_modulus".into(), json!({"max_dev": modulus.max_dev, "pass": pass_m}));
    details.insert("criteria_agree".into(), json!(pass_h == pass_m));
    let mut all = hess;
    all.merge(modulus);
    Ok(all.report("rescaling", details))
}

/// `ω` with `K = ω⊗ω̄·L`, normalized so that `ω(y₀) > 0`.
#[derive(Debug, Clone)]
pub struct RescalingWeight {
    target: KernelEvaluator,
    source: KernelEvaluator,
    anchor: CPoint,
    anchor_value: f64,
}

impl RescalingWeight {
    /// `ω(x) = K(x, y₀)/(ω(y₀)·L(x, y₀))`.
    pub fn value(&self, x: &CPoint) -> Result<C64> {
        let num = self.target.eval(x, &self.anchor)?;
        let den = self.source.eval(x, &self.anchor)? * self.anchor_value;
        if num.norm() == 0.0 || den.norm() == 0.0 {
            return Err(Error::Pole(format!("kernel vanishes against the anchor at {x}; choose another anchor")));
        }
        Ok(num / den)
    }

    pub fn anchor(&self) -> &CPoint {
        &self.anchor
    }

    pub fn anchor_value(&self) -> f64 {
        self.anchor_value
    }

    /// Differenced `∂ω/∂z̄_j`; vanishes for a genuine rescaling weight.
    pub fn dbar(&self, x: &CPoint, j: usize, cfg: &DiffConfig) -> Result<C64> {
        wirtinger_of(|p| self.value(p), x, j, true, cfg)
    }

    /// `max |K(x,y) − ω(x)conj(ω(y))L(x,y)|/√(K̂(x)K̂(y))` over consecutive pairs.
    pub fn residual(&self, points: &[CPoint]) -> Result<f64> {
        Ok(self.residual_tracker(points, f64::INFINITY)?.max_dev)
    }

    fn residual_tracker(&self, points: &[CPoint], tol: f64) -> Result<Tracker> {
        let parts: Vec<Tracker> = pairs(points)
            .par_iter()
            .map(|(x, y)| {
                let mut t = Tracker::new(tol);
                let lhs = self.target.eval(x, y)?;
                let rhs = self.value(x)? * self.value(y)?.conj() * self.source.eval(x, y)?;
                let scale = (self.target.diag(x)? * self.target.diag(y)?).sqrt();
                t.add((lhs - rhs).norm() / scale, &[x.clone(), y.clone()], || "rescaling residual".into());
                Ok(t)
            })
            .collect::<Result<_>>()?;
        Ok(fold_trackers(tol, parts))
    }
}

/// Extracts the weight rescaling `l` to `k` and verifies it on fresh samples;
/// returns the weight and the largest residual.
pub fn extract_rescaling_weight(
    k: &KernelEvaluator,
    l: &KernelEvaluator,
    anchor: &CPoint,
    samples: &SampleConfig,
    tol: f64,
) -> Result<(RescalingWeight, f64)> {
    same_domain(k, l)?;
    let anchor_value = (k.diag(anchor)? / l.diag(anchor)?).sqrt();
    let w = RescalingWeight { target: k.clone(), source: l.clone(), anchor: anchor.clone(), anchor_value };
    let fresh = samples.points(k.domain(), STREAM_FRESH);
    let res = w.residual_tracker(&fresh, tol)?;
    if !res.passed() {
        return Err(Error::Verification(format!("rescaling residual {:e} exceeds {tol:e}", res.max_dev)));
    }
    Ok((w, res.max_dev))
}

// ---------------------------------------------------------------------------
// Projective invariance and multipliers

/// A word in the generators and their inverses, applied right to left.
#[derive(Debug, Clone)]
struct Word {
    letters: Vec<(usize, bool)>,
    map: Automorphism,
}

impl Word {
    fn label(&self) -> String {
        self.letters
            .iter()
            .map(|(g, inv)| if *inv { format!("g{g}^-1") } else { format!("g{g}") })
            .collect::<Vec<_>>()
            .join("·")
    }
}

fn words(generators: &[Automorphism], extra: usize, seed: &SampleConfig) -> Result<Vec<Word>> {
    let mut out: Vec<Word> = generators
        .iter()
        .enumerate()
        .map(|(i, g)| Word { letters: vec![(i, false)], map: g.clone() })
        .collect();
    let mut rng = seed.rng(STREAM_WORDS);
    for _ in 0..extra {
        let len = rng.gen_range(2..=3);
        let mut letters = Vec::with_capacity(len);
        let mut map: Option<Automorphism> = None;
        for _ in 0..len {
            let g = rng.gen_range(0..generators.len());
            let inv = rng.gen_bool(0.5);
            let step = if inv { generators[g].inverse() } else { generators[g].clone() };
            map = Some(match map {
                None => step,
                Some(m) => Automorphism::compose(&step, &m)?,
            });
            letters.push((g, inv));
        }
        out.push(Word { letters, map: map.expect("len ≥ 2") });
    }
    Ok(out)
}

/// Random words of length 2–3 added to the generators.
pub const RANDOM_WORDS: usize = 8;

/// Compares `|K(Φx,Φy)|²/(K̂(Φx)K̂(Φy))` with `|K(x,y)|²/(K̂(x)K̂(y))` for each
/// generator and for random short words in the generators.
pub fn projective_invariance_check(
    k: &KernelEvaluator,
    generators: &[Automorphism],
    samples: &SampleConfig,
    tol: f64,
) -> Result<InvarianceReport> {
    enough_samples(samples)?;
    if generators.is_empty() {
        return Err(Error::InvalidArgument("no generators".into()));
    }
    if let Some(g) = generators.iter().find(|g| g.domain() != k.domain()) {
        return Err(Error::InvalidArgument(format!("generator {g} acts on {}, kernel on {}", g.domain(), k.domain())));
    }
    let words = words(generators, if generators.len() > 1 || !generators[0].is_identity() { RANDOM_WORDS } else { 0 }, samples)?;
    let pts = samples.points(k.domain(), STREAM_POINTS);
    let prs = pairs(&pts);
    let mut tracker = Tracker::new(tol);
    let mut per_word = Vec::new();
    let mut skipped = 0usize;
    for w in &words {
        let parts: Vec<Option<Tracker>> = prs
            .par_iter()
            .map(|(x, y)| {
                let (fx, fy) = match (w.map.apply_point(x), w.map.apply_point(y)) {
                    (Ok(a), Ok(b)) => (a, b),
                    _ => return Ok(None),
                };
                let mut t = Tracker::new(tol);
                let dev = (normalized_modulus(k, &fx, &fy)? - normalized_modulus(k, x, y)?).abs();
                t.add(dev, &[x.clone(), y.clone()], || format!("word {}", w.label()));
                Ok(Some(t))
            })
            .collect::<Result<_>>()?;
        skipped += parts.iter().filter(|p| p.is_none()).count();
        let t = fold_trackers(tol, parts.into_iter().flatten().collect());
        per_word.push(json!({"word": w.label(), "map": w.map.to_string(), "max_dev": t.max_dev}));
        tracker.merge(t);
    }
    let mut details = BTreeMap::new();
    details.insert("kernel".into(), json!(k.describe()));
    details.insert("words".into(), Value::Array(per_word));
    details.insert("skipped_escapes".into(), json!(skipped));
    Ok(tracker.report("projective-invariance", details))
}

/// The multiplier `ω^K_Φ`: the weight rescaling `K∘Φ` to `K`, positive at the anchor.
#[derive(Debug, Clone)]
pub struct MultiplierField {
    automorphism: Automorphism,
    weight: RescalingWeight,
    residual: f64,
}

impl MultiplierField {
    pub fn value(&self, x: &CPoint) -> Result<C64> {
        self.weight.value(x)
    }

    pub fn automorphism(&self) -> &Automorphism {
        &self.automorphism
    }

    pub fn anchor(&self) -> &CPoint {
        self.weight.anchor()
    }

    /// Residual of the rescaling identity on the verification samples.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn weight(&self) -> &RescalingWeight {
        &self.weight
    }
}

/// Extracts `ω^K_Φ` with phase fixed by `ω(y₀) > 0`; fails when `K∘Φ` is not a
/// rescaling of `K` on the verification samples.
pub fn multiplier(k: &KernelEvaluator, phi: &Automorphism, anchor: &CPoint, samples: &SampleConfig, tol: f64) -> Result<MultiplierField> {
    if phi.domain() != k.domain() {
        return Err(Error::InvalidArgument(format!("automorphism acts on {}, kernel on {}", phi.domain(), k.domain())));
    }
    let pulled = k.pullback(Arc::new(phi.clone()))?;
    let (weight, residual) = extract_rescaling_weight(k, &pulled, anchor, samples, tol)?;
    Ok(MultiplierField { automorphism: phi.clone(), weight, residual })
}

/// `r(x) = ω_{Φ∘Ψ}(x)/(ω_Ψ(x)·ω_Φ(Ψ(x)))` must be unimodular and constant.
pub fn cocycle_check(
    k: &KernelEvaluator,
    phi: &Automorphism,
    psi: &Automorphism,
    samples: &SampleConfig,
    tol: f64,
) -> Result<InvarianceReport> {
    enough_samples(samples)?;
    let anchor = k.domain().center();
    let comp = Automorphism::compose(phi, psi)?;
    let w_comp = multiplier(k, &comp, &anchor, samples, tol)?;
    let w_psi = multiplier(k, psi, &anchor, samples, tol)?;
    let w_phi = multiplier(k, phi, &anchor, samples, tol)?;
    let pts = samples.points(k.domain(), STREAM_POINTS);
    let ratios: Vec<C64> = pts
        .par_iter()
        .map(|x| Ok(w_comp.value(x)? / (w_psi.value(x)? * w_phi.value(&psi.apply_point(x)?)?)))
        .collect::<Result<_>>()?;
    let r0 = ratios[0];
    let mut t = Tracker::new(tol);
    for (x, r) in pts.iter().zip(&ratios) {
        let dev = (r.norm() - 1.0).abs().max((r - r0).norm());
        t.add(dev, std::slice::from_ref(x), || format!("ratio {r}"));
    }
    let mut details = BTreeMap::new();
    details.insert("kernel".into(), json!(k.describe()));
    details.insert("phi".into(), json!(phi.to_string()));
    details.insert("psi".into(), json!(psi.to_string()));
    details.insert("ratio".into(), json!([r0.re, r0.im]));
    Ok(t.report("cocycle", details))
}

/// Sampled Gram identity `ω(x_i)conj(ω(x_j))K(Φx_i, Φx_j) = K(x_i, x_j)`,
/// entrywise relative to `√(K̂(x_i)K̂(x_j))`.
pub fn unitarity_check<W>(k: &KernelEvaluator, omega: W, phi: &Automorphism, points: &[CPoint], tol: f64) -> Result<InvarianceReport>
where
    W: Fn(&CPoint) -> Result<C64> + Sync,
{
    crate::gram::reject_duplicates(points)?;
    let images: Vec<CPoint> = points.iter().map(|x| phi.apply_point(x)).collect::<Result<_>>()?;
    let w: Vec<C64> = points.iter().map(&omega).collect::<Result<_>>()?;
    let diag: Vec<f64> = points.iter().map(|x| k.diag(x)).collect::<Result<_>>()?;
    let m = points.len();
    let rows: Vec<Tracker> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut t = Tracker::new(tol);
            for j in 0..m {
                let lhs = w[i] * w[j].conj() * k.eval(&images[i], &images[j])?;
                let dev = (lhs - k.eval(&points[i], &points[j])?).norm() / (diag[i] * diag[j]).sqrt();
                t.add(dev, &[points[i].clone(), points[j].clone()], || format!("entry ({i}, {j})"));
            }
            Ok(t)
        })
        .collect::<Result<_>>()?;
    let mut details = BTreeMap::new();
    details.insert("kernel".into(), json!(k.describe()));
    details.insert("automorphism".into(), json!(phi.to_string()));
    Ok(fold_trackers(tol, rows).report("unitarity", details))
}

/// Compares `G_x` with `DΦᵀ·G_{Φx}·conj(DΦ)` and `δᵢ(x, y)` with `δᵢ(Φx, Φy)`.
pub fn metric_invariance_check(
    k: &KernelEvaluator,
    p: &MetricProfile,
    phi: &Automorphism,
    samples: &SampleConfig,
    tol: f64,
    cfg: &DiffConfig,
) -> Result<InvarianceReport> {
    enough_samples(samples)?;
    if phi.domain() != k.domain() {
        return Err(Error::InvalidArgument(format!("automorphism acts on {}, kernel on {}", phi.domain(), k.domain())));
    }
    let pts = samples.points(k.domain(), STREAM_POINTS);
    let tensor: Vec<Tracker> = pts
        .par_iter()
        .map(|x| {
            let mut t = Tracker::new(tol);
            let fx = phi.apply_point(x)?;
            let g = metric_tensor(k, p, x, cfg)?.matrix;
            let d = crate::eval::PointMap::jacobian(phi, x.coords())?;
            let pushed = d.transpose() * metric_tensor(k, p, &fx, cfg)?.matrix * d.map(|c| c.conj());
            t.add(matrix_dev(&g, &pushed), std::slice::from_ref(x), || "metric tensor".into());
            Ok(t)
        })
        .collect::<Result<_>>()?;
    let dist: Vec<(Tracker, Tracker)> = pairs(&pts)
        .par_iter()
        .map(|(x, y)| {
            let (fx, fy) = (phi.apply_point(x)?, phi.apply_point(y)?);
            let (mut t1, mut t2) = (Tracker::new(tol), Tracker::new(tol));
            let pair = [x.clone(), y.clone()];
            t1.add((delta1(k, x, y)? - delta1(k, &fx, &fy)?).abs(), &pair, || "delta1".into());
            t2.add((delta2(k, x, y)? - delta2(k, &fx, &fy)?).abs(), &pair, || "delta2".into());
            Ok((t1, t2))
        })
        .collect::<Result<_>>()?;
    let tensor = fold_trackers(tol, tensor);
    let (d1, d2): (Vec<_>, Vec<_>) = dist.into_iter().unzip();
    let (d1, d2) = (fold_trackers(tol, d1), fold_trackers(tol, d2));
    let mut details = BTreeMap::new();
    details.insert("kernel".into(), json!(k.describe()));
    details.insert("profile".into(), json!(p.name()));
    details.insert("automorphism".into(), json!(phi.to_string()));
    details.insert("tensor_max_dev".into(), json!(tensor.max_dev));
    details.insert("delta1_max_dev".into(), json!(d1.max_dev));
    details.insert("delta2_max_dev".into(), json!(d2.max_dev));
    let mut all = tensor;
    all.merge(d1);
    all.merge(d2);
    Ok(all.report("metric-invariance", details))
}

/// If `|ω^K_Φ| = |ω^L_Φ|` for the generators (plus catalog maps sending the
/// center to each sample), the ratio `K/L` must be a positive constant `c`.
/// Reported as not applicable when either kernel fails projective invariance or
/// the multiplier moduli differ.
pub fn multiplier_rigidity_check(
    k: &KernelEvaluator,
    l: &KernelEvaluator,
    generators: &[Automorphism],
    samples: &SampleConfig,
    tol: f64,
) -> Result<InvarianceReport> {
    const CHECK: &str = "multiplier-rigidity";
    same_domain(k, l)?;
    enough_samples(samples)?;
    for (name, ker) in [("kernel", k), ("other", l)] {
        let r = projective_invariance_check(ker, generators, samples, tol)?;
        if !r.passed() {
            return Ok(InvarianceReport::not_applicable(
                CHECK,
                tol,
                samples.count,
                format!("{name} is not projectively invariant (deviation {:e})", r.max_dev),
            ));
        }
    }
    let domain = *k.domain();
    let pts = samples.points(&domain, STREAM_POINTS);
    let mut maps: Vec<Automorphism> = generators.to_vec();
    for x in pts.iter().take(4) {
        maps.push(Automorphism::transitive_to(domain, x)?);
    }
    // |ω_Φ|² = K̂/K̂∘Φ, so comparing moduli reduces to comparing these ratios.
    let mut moduli = Tracker::new(tol);
    for phi in &maps {
        let anchor = domain.center();
        let wk = multiplier(k, phi, &anchor, samples, tol.max(1e-9))?;
        let wl = multiplier(l, phi, &anchor, samples, tol.max(1e-9))?;
        for x in &pts {
            let (a, b) = (wk.value(x)?.norm(), wl.value(x)?.norm());
            moduli.add((a - b).abs() / a.max(b), std::slice::from_ref(x), || format!("map {phi}"));
        }
    }
    let mut details = BTreeMap::new();
    details.insert("kernel".into(), json!(k.describe()));
    details.insert("other".into(), json!(l.describe()));
    details.insert("multiplier_modulus_max_dev".into(), json!(moduli.max_dev));
    if !moduli.passed() {
        let mut r = InvarianceReport::not_applicable(CHECK, tol, samples.count, "multiplier moduli differ; precondition fails");
        r.details.extend(details);
        return Ok(r);
    }
    let ratios: Vec<(CPoint, CPoint, C64)> = pairs(&pts)
        .into_iter()
        .map(|(x, y)| Ok((x.clone(), y.clone(), k.eval(&x, &y)? / l.eval(&x, &y)?)))
        .collect::<Result<_>>()?;
    let c = ratios.iter().map(|r| r.2).sum::<C64>() / ratios.len() as f64;
    let mut t = Tracker::new(tol);
    for (x, y, r) in &ratios {
        t.add((r - c).norm() / c.norm(), &[x.clone(), y.clone()], || format!("ratio {r}"));
    }
    t.add(c.im.abs() / c.norm(), &[], || "non-real constant".into());
    details.insert("c".into(), json!(c.re));
    Ok(t.report(CHECK, details))
}

/// Truncation of the weighted series used by [`weighted_bergman_power_check`].
pub const WEIGHTED_TRUNCATION: usize = 200;

/// Fits `c` in `K^w ≈ c·K^{α+1}` for `w = (π(1 − r²)²)^α` by least squares over
/// sampled pairs and reports the largest relative residual.
pub fn weighted_bergman_power_check(alpha: f64, samples: &SampleConfig, tol: f64, truncation: usize) -> Result<InvarianceReport> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::Unsupported(format!("weight exponent α = {alpha}; only α ≥ 0 is supported")));
    }
    enough_samples(samples)?;
    let domain = Domain::disk();
    let oracle = series_kernel_oracle(RadialWeight::bergman_power(alpha), truncation)?;
    let closed = compile_str(&format!("power(bergman, {:?})", alpha + 1.0), &domain)?;
    let pts = samples.points(&domain, STREAM_POINTS);
    let vals: Vec<(CPoint, CPoint, C64, C64)> = pairs(&pts)
        .into_iter()
        .map(|(x, y)| Ok((x.clone(), y.clone(), oracle.eval(&x, &y)?, closed.eval(&x, &y)?)))
        .collect::<Result<_>>()?;
    let num: f64 = vals.iter().map(|v| (v.3.conj() * v.2).re).sum();
    let den: f64 = vals.iter().map(|v| v.3.norm_sqr()).sum();
    let c = num / den;
    let mut t = Tracker::new(tol);
    for (x, y, a, b) in &vals {
        t.add((a - b * c).norm() / a.norm(), &[x.clone(), y.clone()], || "power-law residual".into());
    }
    let mut details = BTreeMap::new();
    details.insert("alpha".into(), json!(alpha));
    details.insert("truncation".into(), json!(truncation));
    details.insert("c".into(), json!(c));
    Ok(t.report("weighted-power", details))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk() -> Domain {
        Domain::disk()
    }

    fn k(text: &str) -> KernelEvaluator {
        compile_str(text, &disk()).unwrap()
    }

    fn moebius(theta: f64, re: f64, im: f64) -> Automorphism {
        Automorphism::disk_moebius(disk(), theta, C64::new(re, im)).unwrap()
    }

    #[test]
    fn rescaling_suite() {
        let s = SampleConfig::new(12, 1);
        let cfg = DiffConfig::default();
        assert!(is_rescaling(&k("bergman"), &k("rescale(bergman, exp(z))"), &s, 1e-8, &cfg).unwrap().passed());
        let r = is_rescaling(&k("bergman"), &k("szego"), &s, 1e-8, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(!r.witnesses.is_empty());
        assert!(is_rescaling(&k("bergman"), &k("power(szego, 2)"), &s, 1e-8, &cfg).unwrap().passed());
    }

    #[test]
    fn extracted_weights() {
        let s = SampleConfig::new(10, 2);
        let o = CPoint::zero(1);
        let (w, _) = extract_rescaling_weight(&k("bergman"), &k("power(szego, 2)"), &o, &s, 1e-10).unwrap();
        let x = CPoint::scalar(C64::new(0.3, -0.4));
        assert!((w.value(&x).unwrap() - 2.0 * std::f64::consts::PI.sqrt()).norm() < 1e-12);
        let (w, _) = extract_rescaling_weight(&k("rescale(szego, exp(z))"), &k("szego"), &o, &s, 1e-10).unwrap();
        assert!((w.value(&x).unwrap().norm() - x.coords()[0].exp().norm()).abs() < 1e-12);
        assert!(w.dbar(&x, 0, &DiffConfig::default()).unwrap().norm() < 1e-6);
        assert!(extract_rescaling_weight(&k("bergman"), &k("szego"), &o, &s, 1e-8).is_err());
    }

    #[test]
    fn projective_invariance_verdicts() {
        let s = SampleConfig::new(10, 3);
        let gens = [moebius(0.4, 0.3, -0.2), moebius(-1.0, -0.5, 0.1)];
        assert!(projective_invariance_check(&k("bergman"), &gens, &s, 1e-9).unwrap().passed());
        assert!(projective_invariance_check(&k("rank1(z + 2)"), &gens, &s, 1e-9).unwrap().passed());
        let r = projective_invariance_check(&k("fock"), &[moebius(0.0, 0.3, 0.0)], &s, 1e-9).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(r.max_dev > 0.01);
    }

    #[test]
    fn multiplier_moduli_match_jacobian() {
        let s = SampleConfig::new(8, 4);
        let b = k("bergman");
        let phi = moebius(0.7, 0.2, 0.5);
        let w = multiplier(&b, &phi, &CPoint::zero(1), &s, 1e-10).unwrap();
        for x in s.points(&disk(), 9) {
            let j = phi.jacobian_det(x.coords()).norm_sqr();
            assert!((w.value(&x).unwrap().norm_sqr() - j).abs() < 1e-9 * j);
        }
        let id = multiplier(&b, &Automorphism::identity(disk()), &CPoint::zero(1), &s, 1e-12).unwrap();
        assert!((id.value(&CPoint::scalar(C64::new(0.5, 0.1))).unwrap() - 1.0).norm() < 1e-14);
    }

    #[test]
    fn cocycle_and_unitarity() {
        let s = SampleConfig::new(8, 5);
        let b = k("bergman");
        let (phi, psi) = (moebius(0.3, 0.4, 0.1), moebius(-2.0, -0.2, 0.6));
        assert!(cocycle_check(&b, &phi, &psi, &s, 1e-9).unwrap().passed());
        assert!(cocycle_check(&k("rank1(exp(z))"), &phi, &psi, &s, 1e-9).unwrap().passed());
        let w = multiplier(&b, &phi, &CPoint::zero(1), &s, 1e-10).unwrap();
        let pts = s.points(&disk(), 7);
        assert!(unitarity_check(&b, |x| w.value(x), &phi, &pts, 1e-9).unwrap().passed());
        let r = unitarity_check(&b, |_| Ok(C64::new(1.0, 0.0)), &phi, &pts, 1e-9).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(!r.witnesses.is_empty());
    }

    #[test]
    fn metric_invariance_fs_vs_euclidean() {
        let s = SampleConfig::new(10, 6);
        let b = k("bergman");
        let phi = moebius(0.0, 0.5, 0.0);
        let cfg = DiffConfig::default();
        assert!(metric_invariance_check(&b, &MetricProfile::fubini_study(), &phi, &s, 1e-9, &cfg).unwrap().passed());
        let r = metric_invariance_check(&b, &MetricProfile::euclidean(), &phi, &s, 1e-9, &cfg).unwrap();
        assert!(r.max_dev > 0.1);
        let id = Automorphism::identity(disk());
        let r = metric_invariance_check(&b, &MetricProfile::euclidean(), &id, &s, 0.0, &cfg).unwrap();
        assert_eq!(r.max_dev, 0.0);
    }

    #[test]
    fn multiplier_rigidity_cases() {
        let s = SampleConfig::new(8, 7);
        let gens = [moebius(0.3, 0.2, 0.1)];
        let r = multiplier_rigidity_check(&k("bergman"), &k("product(const(3), bergman)"), &gens, &s, 1e-9).unwrap();
        assert!(r.passed());
        assert!((r.details["c"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let r = multiplier_rigidity_check(&k("bergman"), &k("power(bergman, 2)"), &gens, &s, 1e-9).unwrap();
        assert_eq!(r.verdict, Verdict::NotApplicable);
        let r = multiplier_rigidity_check(&k("bergman"), &k("product(const(4*pi), power(szego, 2))"), &gens, &s, 1e-9).unwrap();
        assert!(r.passed());
        assert!((r.details["c"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_power_alpha_zero_is_bergman() {
        let r = weighted_bergman_power_check(0.0, &SampleConfig::new(10, 8).with_radius(0.8), 1e-6, 120).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!((r.details["c"].as_f64().unwrap() - 1.0).abs() < 1e-9);
        assert!(weighted_bergman_power_check(-1.0, &SampleConfig::default(), 1e-6, 10).is_err());
    }
}
