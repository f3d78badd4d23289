use kml_core::automorphism::Automorphism;
use kml_core::distance::{length_equivalence_report, ParametricCurve, QuadConfig};
use kml_core::gram::{gram, PSD_TOL};
use kml_core::invariance::{
    cocycle_check, extract_rescaling_weight, is_rescaling, metric_invariance_check, multiplier_rigidity_check, multiplier,
    projective_invariance_check, unitarity_check, weighted_bergman_power_check, InvarianceReport, SampleConfig, Verdict,
};
use kml_core::metric::{degeneracy_check, is_kahler, profile_positive_definite, KahlerVerdict, MetricProfile};
use kml_core::wirtinger::DiffConfig;
use kml_core::{compile_str, CPoint, Domain, Error, KernelEvaluator, Result};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{CheckKind, Command, Format, RunArgs, WeightChoice};
use crate::input;

/// Overall result of a command, mapped to the exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Pass,
    Fail,
    NotApplicable,
    Done,
}

impl Outcome {
    fn of(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }

    fn from_verdict(v: Verdict) -> Self {
        match v {
            Verdict::Pass => Outcome::Pass,
            Verdict::Fail => Outcome::Fail,
            Verdict::NotApplicable => Outcome::NotApplicable,
        }
    }
}

#[derive(Debug, Serialize)]
struct Report<'a> {
    command: String,
    config: &'a RunArgs,
    outcome: Outcome,
    result: Value,
}

/// Rows for CSV output.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub struct Output {
    pub outcome: Outcome,
    pub body: String,
}

struct Ctx {
    args: RunArgs,
    domain: Domain,
    kernel: KernelEvaluator,
    diff: DiffConfig,
}

impl Ctx {
    fn samples(&self) -> SampleConfig {
        SampleConfig { count: self.args.samples, seed: self.args.seed, radius: self.args.radius }
    }

    fn points(&self) -> Result<Vec<CPoint>> {
        match &self.args.points {
            Some(text) => input::points(text, self.domain.dim()),
            None => Ok(self.samples().points(&self.domain, 0)),
        }
    }

    fn profile(&self) -> Result<MetricProfile> {
        MetricProfile::by_name(&self.args.profile)
    }

    fn kernel2(&self) -> Result<KernelEvaluator> {
        let text = self.args.kernel2.as_deref().ok_or_else(|| Error::InvalidArgument("--kernel2 is required".into()))?;
        compile_str(text, &self.domain)
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.args.seed ^ 0x6b6d_6c5f_6175_746f)
    }

    /// Automorphisms from `--auto`, or `count` random catalog maps.
    fn automorphisms(&self, text: Option<&str>, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Automorphism>> {
        match text {
            Some(t) => input::automorphisms(t, self.domain),
            None => (0..count).map(|_| Automorphism::random(self.domain, rng, 0.7)).collect(),
        }
    }

    fn tol(&mut self, default: f64) -> f64 {
        *self.args.tol.get_or_insert(default)
    }
}

fn coords_json(p: &CPoint) -> Value {
    json!(p.coords().iter().map(|z| [z.re, z.im]).collect::<Vec<_>>())
}

fn coord_columns(dim: usize) -> Vec<String> {
    (1..=dim).flat_map(|j| [format!("re{j}"), format!("im{j}")]).collect()
}

fn coord_cells(p: &CPoint) -> Vec<String> {
    p.coords().iter().flat_map(|z| [z.re.to_string(), z.im.to_string()]).collect()
}

fn log_grid(extra: &[f64]) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=60).map(|i| 10f64.powf(-3.0 + 0.1 * i as f64)).collect();
    grid.extend(extra.iter().copied().filter(|r| *r > 0.0 && r.is_finite()));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

fn csv_only_for_tables() -> Error {
    Error::InvalidArgument("csv output is only available for point tables (eval, metric, check lengths)".into())
}

pub fn run(command: &Command, args: &RunArgs) -> Result<Output> {
    let domain: Domain = args.domain.parse()?;
    let kernel = compile_str(&args.kernel, &domain)?;
    let diff = DiffConfig { step: args.step, ..DiffConfig::default() };
    diff.validate()?;
    if args.mesh_min > args.mesh_max || args.mesh_max > 20 {
        return Err(Error::InvalidArgument("need mesh-min ≤ mesh-max ≤ 20".into()));
    }
    let mut ctx = Ctx { args: args.clone(), domain, kernel, diff };
    let (name, outcome, result, table) = match command {
        Command::Eval => {
            let (v, t) = eval(&ctx)?;
            ("eval".to_string(), Outcome::Done, v, Some(t))
        }
        Command::Metric => {
            let (v, t) = metric(&ctx)?;
            ("metric".to_string(), Outcome::Done, v, Some(t))
        }
        Command::Check { kind } => {
            let (outcome, v, t) = check(&mut ctx, *kind)?;
            let name = serde_json::to_value(kind).expect("plain enum");
            (format!("check {}", name.as_str().unwrap_or_default()), outcome, v, t)
        }
    };
    let body = match ctx.args.format {
        Format::Json => {
            let report = Report { command: name, config: &ctx.args, outcome, result };
            serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
        }
        Format::Csv => write_csv(&table.ok_or_else(csv_only_for_tables)?)?,
    };
    Ok(Output { outcome, body })
}

fn write_csv(t: &Table) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
    w.write_record(&t.header).map_err(io)?;
    for r in &t.rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv of ascii numbers"))
}

fn eval(ctx: &Ctx) -> Result<(Value, Table)> {
    let pts = ctx.points()?;
    let k = &ctx.kernel;
    let diag: Vec<f64> = pts.iter().map(|p| k.diag_raw(p)).collect::<Result<_>>()?;
    let values: Vec<Vec<[f64; 2]>> = pts
        .iter()
        .map(|x| pts.iter().map(|y| k.eval(x, y).map(|v| [v.re, v.im])).collect())
        .collect::<Result<_>>()?;
    let mut header = vec!["index".to_string()];
    header.extend(coord_columns(ctx.domain.dim()));
    header.push("diag".into());
    let rows = pts
        .iter()
        .zip(&diag)
        .enumerate()
        .map(|(i, (p, d))| {
            let mut r = vec![i.to_string()];
            r.extend(coord_cells(p));
            r.push(d.to_string());
            r
        })
        .collect();
    let v = json!({
        "kernel": k.describe(),
        "flags": k.flags(),
        "points": pts.iter().map(coords_json).collect::<Vec<_>>(),
        "diag": diag,
        "values": values,
    });
    Ok((v, Table { header, rows }))
}

fn metric(ctx: &Ctx) -> Result<(Value, Table)> {
    let pts = ctx.points()?;
    let p = ctx.profile()?;
    let n = ctx.domain.dim();
    let reports = pts.iter().map(|x| degeneracy_check(&ctx.kernel, &p, x, &ctx.diff)).collect::<Result<Vec<_>>>()?;
    let diag: Vec<f64> = reports.iter().map(|r| ctx.kernel.diag_raw(&r.tensor.base)).collect::<Result<_>>()?;
    let grid = log_grid(&diag);
    let pd = profile_positive_definite(&p, &grid)?;
    let kahler = is_kahler(&p, &grid, 1e-6)?;
    let mut header = vec!["index".to_string()];
    header.extend(coord_columns(n));
    header.extend(["diag".to_string(), "rank".to_string()]);
    header.extend((1..=n).map(|j| format!("eig{j}")));
    let mut rows = Vec::new();
    let mut per_point = Vec::new();
    for (i, (r, d)) in reports.iter().zip(&diag).enumerate() {
        let eig = r.tensor.eigenvalues();
        let mut row = vec![i.to_string()];
        row.extend(coord_cells(&r.tensor.base));
        row.extend([d.to_string(), r.rank.to_string()]);
        row.extend(eig.iter().map(f64::to_string));
        rows.push(row);
        per_point.push(json!({
            "point": coords_json(&r.tensor.base),
            "diag": d,
            "tensor": r.tensor.as_pairs(),
            "eigenvalues": eig,
            "norm": r.tensor.norm(),
            "rank": r.rank,
            "cutoff": r.cutoff,
            "nullspace": r.nullspace.iter().map(|u| u.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>()).collect::<Vec<_>>(),
        }));
    }
    let v = json!({
        "kernel": ctx.kernel.describe(),
        "profile": p.name(),
        "positive_definite": pd,
        "kahler": kahler,
        "points": per_point,
    });
    Ok((v, Table { header, rows }))
}

fn report_value(r: &InvarianceReport) -> Value {
    serde_json::to_value(r).expect("report serializes")
}

fn check(ctx: &mut Ctx, kind: CheckKind) -> Result<(Outcome, Value, Option<Table>)> {
    let mut rng = ctx.rng();
    let samples = ctx.samples();
    match kind {
        CheckKind::Psd => {
            let tol = ctx.tol(PSD_TOL);
            let r = gram(&ctx.kernel, &ctx.points()?, tol)?;
            Ok((Outcome::of(r.is_psd()), serde_json::to_value(&r).expect("serializes"), None))
        }
        CheckKind::Rescaling => {
            let tol = ctx.tol(1e-8);
            let other = ctx.kernel2()?;
            let r = is_rescaling(&ctx.kernel, &other, &samples, tol, &ctx.diff)?;
            let mut v = report_value(&r);
            if r.passed() {
                v["weight"] = weight_summary(ctx, &other, &samples, tol);
            }
            Ok((Outcome::from_verdict(r.verdict), v, None))
        }
        CheckKind::Invariance => {
            let tol = ctx.tol(1e-9);
            let gens = ctx.automorphisms(ctx.args.auto.as_deref(), 3, &mut rng)?;
            let p = ctx.profile()?;
            let proj = projective_invariance_check(&ctx.kernel, &gens, &samples, tol)?;
            let metric = gens
                .iter()
                .map(|g| metric_invariance_check(&ctx.kernel, &p, g, &samples, tol, &ctx.diff))
                .collect::<Result<Vec<_>>>()?;
            let pass = proj.passed() && metric.iter().all(InvarianceReport::passed);
            let v = json!({
                "projective": report_value(&proj),
                "metric": metric.iter().map(report_value).collect::<Vec<_>>(),
            });
            Ok((Outcome::of(pass), v, None))
        }
        CheckKind::Cocycle => {
            let tol = ctx.tol(1e-9);
            let phi = ctx.automorphisms(ctx.args.auto.as_deref(), 1, &mut rng)?.remove(0);
            let psi = ctx.automorphisms(ctx.args.auto2.as_deref(), 1, &mut rng)?.remove(0);
            let r = cocycle_check(&ctx.kernel, &phi, &psi, &samples, tol)?;
            Ok((Outcome::from_verdict(r.verdict), report_value(&r), None))
        }
        CheckKind::Unitarity => {
            let tol = ctx.tol(1e-9);
            let phi = ctx.automorphisms(ctx.args.auto.as_deref(), 1, &mut rng)?.remove(0);
            let pts = ctx.points()?;
            let r = match ctx.args.weight {
                WeightChoice::Multiplier => {
                    let w = multiplier(&ctx.kernel, &phi, &ctx.domain.center(), &samples, tol.max(1e-9))?;
                    unitarity_check(&ctx.kernel, |x| w.value(x), &phi, &pts, tol)?
                }
                WeightChoice::One => unitarity_check(&ctx.kernel, |_| Ok(Complex64::new(1.0, 0.0)), &phi, &pts, tol)?,
            };
            Ok((Outcome::from_verdict(r.verdict), report_value(&r), None))
        }
        CheckKind::Kahler => {
            let tol = ctx.tol(1e-6);
            let p = ctx.profile()?;
            let grid = log_grid(&[]);
            let k = is_kahler(&p, &grid, tol)?;
            let pd = profile_positive_definite(&p, &grid)?;
            let v = json!({"profile": p.name(), "kahler": k, "positive_definite": pd, "grid": [grid[0], grid[grid.len() - 1], grid.len()]});
            Ok((Outcome::of(k.verdict != KahlerVerdict::NotKahler), v, None))
        }
        CheckKind::Lengths => {
            let tol = ctx.tol(1e-3);
            let p = ctx.profile()?;
            let curve = match &ctx.args.curve {
                Some(t) => input::curve(t, ctx.domain.dim())?,
                None => {
                    let mut b = vec![Complex64::new(0.0, 0.0); ctx.domain.dim()];
                    b[0] = Complex64::new(0.5, 0.0);
                    ParametricCurve::segment(&ctx.domain.center(), &CPoint::new(b)?)?
                }
            };
            let meshes: Vec<usize> = (ctx.args.mesh_min..=ctx.args.mesh_max).map(|k| 1usize << k).collect();
            let r = length_equivalence_report(&ctx.kernel, &p, &curve, &meshes, &QuadConfig::default(), &ctx.diff)?;
            let orders_ok = [r.order1, r.order2].iter().all(|o| o.is_none_or(|o| o >= 1.0));
            let pass = r.final_deviation() < tol && orders_ok;
            let table = Table {
                header: ["mesh", "delta1", "delta2", "dev1", "dev2"].map(String::from).to_vec(),
                rows: r
                    .rows
                    .iter()
                    .map(|m| vec![m.mesh.to_string(), m.delta1.to_string(), m.delta2.to_string(), m.dev1.to_string(), m.dev2.to_string()])
                    .collect(),
            };
            let mut v = serde_json::to_value(&r).expect("serializes");
            v["final_deviation"] = json!(r.final_deviation());
            Ok((Outcome::of(pass), v, Some(table)))
        }
        CheckKind::WeightedPower => {
            let tol = ctx.tol(1e-6);
            let s = SampleConfig { radius: Some(ctx.args.radius.unwrap_or(0.8)), ..samples };
            let r = weighted_bergman_power_check(ctx.args.alpha, &s, tol, ctx.args.truncation)?;
            Ok((Outcome::from_verdict(r.verdict), report_value(&r), None))
        }
        CheckKind::MultiplierRigidity => {
            let tol = ctx.tol(1e-9);
            let other = ctx.kernel2()?;
            let gens = ctx.automorphisms(ctx.args.auto.as_deref(), 2, &mut rng)?;
            let r = multiplier_rigidity_check(&ctx.kernel, &other, &gens, &samples, tol)?;
            Ok((Outcome::from_verdict(r.verdict), report_value(&r), None))
        }
    }
}

/// The extracted weight at the sample points, or the reason extraction failed.
fn weight_summary(ctx: &Ctx, other: &KernelEvaluator, samples: &SampleConfig, tol: f64) -> Value {
    let anchor = ctx.domain.center();
    let summary = || -> Result<Value> {
        let (w, residual) = extract_rescaling_weight(&ctx.kernel, other, &anchor, samples, tol)?;
        let pts: Vec<CPoint> = ctx.samples().points(&ctx.domain, 0).into_iter().take(8).collect();
        let values = pts.iter().map(|x| w.value(x).map(|z| [z.re, z.im])).collect::<Result<Vec<_>>>()?;
        let mut dbar: f64 = 0.0;
        for x in &pts {
            for j in 0..ctx.domain.dim() {
                dbar = dbar.max(w.dbar(x, j, &ctx.diff)?.norm());
            }
        }
        Ok(json!({
            "anchor": coords_json(&anchor),
            "anchor_value": w.anchor_value(),
            "residual": residual,
            "points": pts.iter().map(coords_json).collect::<Vec<_>>(),
            "values": values,
            "max_dbar": dbar,
        }))
    };
    summary().unwrap_or_else(|e| json!({"error": e.to_string()}))
}
