use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use fractalconfig::bounds::{
    fiber_moment_sup, holder_chain_on, holder_params, verify_main_bound, DualLattice, FiberConfig,
};
use fractalconfig::bump::Profile;
use fractalconfig::forms::fixtures::{bump_inputs, enveloped_tables};
use fractalconfig::forms::{
    default_y_nodes, lambda_direct, lambda_dual, DualOptions, Kernel, LambdaResult,
};
use fractalconfig::fourier::{
    certify_fourier_decay, fourier_table, FourierDecayReport, FourierTable,
};
use fractalconfig::grid::GridFunction;
use fractalconfig::io::{
    json_float, load_measure, load_table, save_table, write_measure, write_table,
};
use fractalconfig::measures::{
    build_cantor_measure, build_smooth_measure, certify_ball_decay, BallDecayReport, CantorSpec,
    GridMeasure, SUPPORT_HALFWIDTH,
};
use fractalconfig::oscillatory::{certify_j_decay, eval_j, JEvaluator};
use fractalconfig::patterns::{check_nondegenerate, check_pattern_spec, MatrixSystem, PatternSpec};
use fractalconfig::regularity::fixtures::{smooth_bump, smoothed_box};
use fractalconfig::regularity::{
    bohr_measure, diophantine_density, reg_decompose, BohrSet, DiophantineMode, Kappa, RegOptions,
};
use fractalconfig::transference::{
    embed_unit_box, pattern_search, positivity_pipeline, split_measure, CellSet, PipelineOptions,
    SearchOptions, SplitMode, SplitOptions, Verdict,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, SpecParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Preconditions of the underlying statement are unmet.
    HypothesisFailed,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::HypothesisFailed => "hypothesis_failed",
        }
    }
}

pub struct Outcome {
    pub results: Value,
    pub status: Status,
    /// File name and bytes of every artifact besides the report.
    pub artifacts: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    fn ok(results: Value) -> Self {
        Self {
            results,
            status: Status::Ok,
            artifacts: Vec::new(),
        }
    }

    fn with_status(mut self, failed: bool) -> Self {
        if failed {
            self.status = Status::HypothesisFailed;
        }
        self
    }

    fn with_artifact(mut self, name: &str, bytes: Vec<u8>) -> Self {
        self.artifacts.push((name.to_string(), bytes));
        self
    }
}

pub struct RunContext<'a> {
    pub config: &'a RunConfig,
    pub cache: Option<PathBuf>,
}

impl RunContext<'_> {
    fn seed(&self) -> u64 {
        self.config.seed.unwrap_or(0)
    }

    fn budget(&self) -> Option<u64> {
        self.config.budget
    }

    fn measure(&self) -> Result<GridMeasure> {
        let path = self.config.input("measure")?;
        load_measure(path).with_context(|| format!("loading {}", path.display()))
    }

    /// Transform of the input measure, read from or written to the cache directory when one is set.
    fn table(&self, mu: &GridMeasure, xi_max: usize, spacing: f64) -> Result<FourierTable> {
        let Some(dir) = &self.cache else {
            return Ok(fourier_table(mu, xi_max, spacing)?);
        };
        let mut bytes = Vec::new();
        write_measure(&mut bytes, mu)?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hasher.update((xi_max as u64).to_le_bytes());
        hasher.update(spacing.to_le_bytes());
        let path = dir.join(format!("{}.fct", hex(&hasher.finalize())));
        if path.is_file() {
            if let Ok(t) = load_table(&path) {
                return Ok(t);
            }
        }
        let t = fourier_table(mu, xi_max, spacing)?;
        std::fs::create_dir_all(dir)?;
        save_table(&path, &t)?;
        Ok(t)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha256(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

pub fn run(ctx: &RunContext) -> Result<Outcome> {
    let command = ctx.config.command.as_deref().unwrap_or_default();
    match command {
        "measure.build" => measure_build(ctx),
        "measure.certify" => measure_certify(ctx),
        "fourier.table" => fourier_table_cmd(ctx),
        "fourier.certify" => fourier_certify(ctx),
        "patterns.check" => patterns_check(ctx),
        "osc.eval" => osc_eval(ctx),
        "osc.certify" => osc_certify(ctx),
        "forms.direct" | "forms.dual" | "forms.invert" => forms(ctx, command),
        "bounds.holder" => bounds_holder(ctx),
        "bounds.fiber" => bounds_fiber(ctx),
        "bounds.main" => bounds_main(ctx),
        "reg.decompose" => reg_decompose_cmd(ctx),
        "reg.bohr" => reg_bohr(ctx),
        "reg.dio" => reg_dio(ctx),
        "pipeline.split" => pipeline_split(ctx),
        "pipeline.positivity" => pipeline_positivity(ctx),
        "search.pattern" => search_pattern(ctx),
        other => bail!("unknown command '{other}'"),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct MeasureBuild {
    kind: String,
    n: usize,
    branching: usize,
    keep: usize,
    generations: u32,
    res: Option<usize>,
    halfwidth: Option<f64>,
    profile: String,
}

impl Default for MeasureBuild {
    fn default() -> Self {
        Self {
            kind: "cantor".into(),
            n: 1,
            branching: 4,
            keep: 2,
            generations: 5,
            res: None,
            halfwidth: None,
            profile: "gaussian-bump".into(),
        }
    }
}

fn measure_build(ctx: &RunContext) -> Result<Outcome> {
    let p: MeasureBuild = ctx.config.params()?;
    let halfwidth = p.halfwidth.unwrap_or(SUPPORT_HALFWIDTH);
    let mu = match p.kind.as_str() {
        "cantor" => {
            let mut spec = CantorSpec::new(p.n, p.branching, p.keep, p.generations, ctx.seed());
            spec.halfwidth = halfwidth;
            if let Some(r) = p.res {
                spec = spec.with_res(r);
            }
            build_cantor_measure(&spec)?
        }
        "smooth" => build_smooth_measure(
            p.n,
            p.profile.parse::<Profile>()?,
            p.res.unwrap_or(64),
            halfwidth,
        )?,
        "uniform" => GridMeasure::uniform(p.n, p.res.unwrap_or(64), halfwidth),
        "point" => GridMeasure::point_mass(p.n, p.res.unwrap_or(64), halfwidth),
        other => bail!("unknown measure kind '{other}'"),
    };
    let mut bytes = Vec::new();
    write_measure(&mut bytes, &mu)?;
    let results = json!({
        "n": mu.n,
        "res": mu.res,
        "halfwidth": mu.halfwidth,
        "total_mass": mu.total_mass(),
        "support_cells": mu.support().len(),
        "target_dimension": mu.target_dimension,
        "sha256": sha256(&bytes),
    });
    Ok(Outcome::ok(results).with_artifact("measure.fcm", bytes))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct MeasureCertify {
    alpha: f64,
}

fn measure_certify(ctx: &RunContext) -> Result<Outcome> {
    let p: MeasureCertify = ctx.config.params()?;
    let report = certify_ball_decay(&ctx.measure()?, p.alpha)?;
    let failed = report.small_radius_blowup;
    Ok(Outcome::ok(to_value(&report)).with_status(failed))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TableParams {
    xi_max: usize,
    spacing: f64,
}

impl Default for TableParams {
    fn default() -> Self {
        Self {
            xi_max: 16,
            spacing: 1.0,
        }
    }
}

fn fourier_table_cmd(ctx: &RunContext) -> Result<Outcome> {
    let p: TableParams = ctx.config.params()?;
    let table = ctx.table(&ctx.measure()?, p.xi_max, p.spacing)?;
    let mut bytes = Vec::new();
    write_table(&mut bytes, &table)?;
    let results = json!({
        "n": table.n,
        "xi_max": table.xi_max,
        "spacing": table.spacing,
        "entries": table.len(),
        "sup_norm": table.sup_norm(),
        "sha256": sha256(&bytes),
    });
    Ok(Outcome::ok(results).with_artifact("table.fct", bytes))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FourierCertify {
    beta: Option<f64>,
    xi_max: usize,
    spacing: f64,
}

impl Default for FourierCertify {
    fn default() -> Self {
        Self {
            beta: None,
            xi_max: 16,
            spacing: 1.0,
        }
    }
}

fn fourier_certify(ctx: &RunContext) -> Result<Outcome> {
    let p: FourierCertify = ctx.config.params()?;
    let table = match ctx.config.inputs.get("table") {
        Some(path) => load_table(path)?,
        None => ctx.table(&ctx.measure()?, p.xi_max, p.spacing)?,
    };
    let report = fourier_certificate(&table, p.beta)?;
    let failed = !(report.fitted_exponent > 1e-6);
    Ok(Outcome::ok(to_value(&report)).with_status(failed))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PatternsCheck {
    spec: SpecParams,
    beta0: f64,
    hessian_threshold: f64,
}

impl Default for PatternsCheck {
    fn default() -> Self {
        Self {
            spec: SpecParams::fixture("showcase"),
            beta0: 0.5,
            hessian_threshold: 1e-6,
        }
    }
}

fn patterns_check(ctx: &RunContext) -> Result<Outcome> {
    let p: PatternsCheck = ctx.config.params()?;
    let spec = p.spec.build()?;
    let check = check_pattern_spec(&spec, p.beta0, p.hessian_threshold);
    let nondegeneracy = check_nondegenerate(&spec.system)?;
    let passes = check.passes();
    let results = json!({ "check": to_value(&check), "nondegeneracy": to_value(&nondegeneracy), "passes": passes });
    Ok(Outcome::ok(results).with_status(!passes))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct OscEval {
    spec: SpecParams,
    xi: Vec<f64>,
    theta: Option<Vec<f64>>,
}

impl Default for OscEval {
    fn default() -> Self {
        Self {
            spec: SpecParams::fixture("showcase"),
            xi: Vec::new(),
            theta: None,
        }
    }
}

fn osc_eval(ctx: &RunContext) -> Result<Outcome> {
    let p: OscEval = ctx.config.params()?;
    let spec = p.spec.build()?;
    let theta = p.theta.unwrap_or_else(|| vec![0.0; spec.m()]);
    let sample = eval_j(&spec, &p.xi, &theta)?;
    Ok(Outcome::ok(to_value(&sample)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct OscCertify {
    spec: SpecParams,
    m_prime: Option<f64>,
    rays: usize,
}

impl Default for OscCertify {
    fn default() -> Self {
        Self {
            spec: SpecParams::fixture("showcase"),
            m_prime: None,
            rays: 8,
        }
    }
}

fn osc_certify(ctx: &RunContext) -> Result<Outcome> {
    let p: OscCertify = ctx.config.params()?;
    let spec = p.spec.build()?;
    let report = certify_j_decay(
        &spec,
        p.m_prime.unwrap_or(spec.m() as f64),
        p.rays,
        ctx.seed(),
    )?;
    let csv = report.to_csv().into_bytes();
    Ok(Outcome::ok(to_value(&report)).with_artifact("rays.csv", csv))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FormsParams {
    spec: SpecParams,
    res: usize,
    xi_max: usize,
    y_nodes: Option<usize>,
    tails: bool,
}

impl Default for FormsParams {
    fn default() -> Self {
        Self {
            spec: SpecParams::fixture("toy"),
            res: 64,
            xi_max: 16,
            y_nodes: None,
            tails: true,
        }
    }
}

/// Three bumps by default, or `k+1` copies of the input measure's density.
fn form_inputs(ctx: &RunContext, spec: &PatternSpec, res: usize) -> Result<Vec<GridFunction>> {
    if ctx.config.inputs.contains_key("measure") {
        let f = embed_unit_box(&ctx.measure()?.density())?;
        if f.n != spec.n() {
            bail!(
                "measure dimension {} does not match the pattern's n = {}",
                f.n,
                spec.n()
            );
        }
        return Ok(vec![f; spec.k() + 1]);
    }
    if spec.k() != 2 {
        bail!("the built-in bump inputs need k = 2");
    }
    Ok(bump_inputs(spec.n(), res))
}

fn dual_value(
    spec: &PatternSpec,
    f: &[GridFunction],
    p: &FormsParams,
    budget: Option<u64>,
) -> Result<LambdaResult> {
    let eval = JEvaluator::new(spec);
    let kernel = Kernel::j(&eval, vec![0.0; spec.m()])?;
    let mut opts = DualOptions::default();
    if let Some(b) = budget {
        opts.budget = b;
    }
    if !p.tails {
        opts.tail = None;
    }
    Ok(lambda_dual(&enveloped_tables(f, p.xi_max), &kernel, &opts)?)
}

fn lambda_json(r: &LambdaResult) -> Value {
    let mut v = to_value(r);
    v["truncation_tail"] = json_float(r.truncation_tail);
    v
}

fn forms(ctx: &RunContext, command: &str) -> Result<Outcome> {
    let p: FormsParams = ctx.config.params()?;
    let spec = p.spec.build()?;
    let f = form_inputs(ctx, &spec, p.res)?;
    let y_nodes = p.y_nodes.unwrap_or_else(|| default_y_nodes(spec.m()));
    let results = match command {
        "forms.direct" => lambda_json(&lambda_direct(&spec, &f, y_nodes)?),
        "forms.dual" => lambda_json(&dual_value(&spec, &f, &p, ctx.budget())?),
        _ => {
            let lhs = lambda_direct(&spec, &f, y_nodes)?;
            let rhs = dual_value(&spec, &f, &p, ctx.budget())?;
            let gap = (lhs.value - rhs.value).abs();
            let relative_gap = gap / lhs.value.abs().max(0.01);
            let allowance = 0.02 + rhs.truncation_tail / lhs.value.abs().max(0.01);
            json!({
                "lhs": lhs.value,
                "rhs": rhs.value,
                "rhs_imag": rhs.imag,
                "gap": gap,
                "relative_gap": relative_gap,
                "tail": json_float(rhs.truncation_tail),
                "within_tolerance": relative_gap <= allowance,
            })
        }
    };
    Ok(Outcome::ok(results))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct BoundsHolder {
    trials: usize,
    k: usize,
    s: f64,
    xi_max: usize,
}

impl Default for BoundsHolder {
    fn default() -> Self {
        Self {
            trials: 1000,
            k: 2,
            s: 2.0,
            xi_max: 5,
        }
    }
}

/// `n = 1`, `m = k` with `A_j = e_j`.
fn coordinate_system(k: usize) -> Result<MatrixSystem> {
    let matrices = (0..k)
        .map(|j| (0..k).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    Ok(MatrixSystem::new(1, k, matrices)?)
}

fn bounds_holder(ctx: &RunContext) -> Result<Outcome> {
    let p: BoundsHolder = ctx.config.params()?;
    let hp = holder_params(p.k, p.s)?;
    let system = coordinate_system(p.k)?;
    let lattice = DualLattice::new(1, p.k, p.xi_max, 1.0)?;
    let kernel = Kernel::majorant(&system, vec![0.0; p.k], p.k as f64);
    let kv: Vec<f64> = lattice
        .points
        .iter()
        .map(|x| kernel.eval(x).map(|v| v.re))
        .collect::<Result<_, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed());
    let side = 2 * p.xi_max + 1;
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["trial", "lhs", "rhs", "holds"])?;
    let (mut violations, mut worst) = (0usize, 0.0f64);
    for trial in 0..p.trials {
        let f: Vec<Vec<f64>> = (0..=p.k)
            .map(|_| {
                (0..side)
                    .map(|_| {
                        let x: f64 = rng.gen_range(0.0..1.0);
                        if rng.gen_bool(0.2) {
                            0.0
                        } else {
                            x * x
                        }
                    })
                    .collect()
            })
            .collect();
        let c = holder_chain_on(&lattice, &f, &kv, hp.tau, hp.p)?;
        let holds = c.holds(1e-9);
        violations += usize::from(!holds);
        if c.rhs > 0.0 {
            worst = worst.max(c.lhs / c.rhs);
        }
        writer.write_record([
            trial.to_string(),
            format!("{:.16e}", c.lhs),
            format!("{:.16e}", c.rhs),
            holds.to_string(),
        ])?;
    }
    let csv = writer.into_inner().map_err(|e| anyhow!("csv: {e}"))?;
    let results = json!({
        "trials": p.trials,
        "violations": violations,
        "max_ratio": worst,
        "params": to_value(&hp),
    });
    Ok(Outcome::ok(results).with_artifact("trials.csv", csv))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct BoundsFiber {
    spec: SpecParams,
    q: f64,
    etas: usize,
    eta_range: f64,
    radius: f64,
    panel_nodes: usize,
}

impl Default for BoundsFiber {
    fn default() -> Self {
        Self {
            spec: SpecParams::fixture("toy"),
            q: 2.0,
            etas: 16,
            eta_range: 20.0,
            radius: 64.0,
            panel_nodes: 64,
        }
    }
}

fn bounds_fiber(ctx: &RunContext) -> Result<Outcome> {
    let p: BoundsFiber = ctx.config.params()?;
    let spec = p.spec.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed());
    let etas: Vec<Vec<f64>> = (0..p.etas)
        .map(|_| {
            (0..spec.n())
                .map(|_| rng.gen_range(-p.eta_range..p.eta_range))
                .collect()
        })
        .collect();
    let cfg = FiberConfig {
        radius: p.radius,
        panel_nodes: p.panel_nodes,
        ..Default::default()
    };
    let report = fiber_moment_sup(&spec.system, p.q, &etas, &[vec![0.0; spec.m()]], &cfg)?;
    let mut v = to_value(&report);
    v["variation"] = json_float(report.variation());
    Ok(Outcome::ok(v))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct BoundsMain {
    spec: SpecParams,
    m_prime: Option<f64>,
    s: f64,
    xi_max: usize,
}

impl Default for BoundsMain {
    fn default() -> Self {
        Self {
            spec: SpecParams::fixture("toy"),
            m_prime: None,
            s: 2.0,
            xi_max: 8,
        }
    }
}

fn bounds_main(ctx: &RunContext) -> Result<Outcome> {
    let p: BoundsMain = ctx.config.params()?;
    let spec = p.spec.build()?;
    let mu = ctx.measure()?;
    let table = ctx.table(&mu, p.xi_max, 1.0)?.abs_pow(1.0);
    let tables = vec![table; spec.k() + 1];
    let report = verify_main_bound(
        &tables,
        &spec.system,
        &[vec![0.0; spec.m()]],
        p.m_prime.unwrap_or(spec.m() as f64),
        p.s,
    )?;
    let failed = !report.hypothesis;
    let mut v = to_value(&report);
    v["holds"] = Value::Bool(report.holds());
    Ok(Outcome::ok(v).with_status(failed))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RegDecompose {
    fixture: String,
    n: usize,
    res: usize,
    eps: f64,
    /// Constant decay function in place of the default.
    kappa: Option<f64>,
    ap_samples: usize,
}

impl Default for RegDecompose {
    fn default() -> Self {
        Self {
            fixture: "box".into(),
            n: 2,
            res: 64,
            eps: 0.5,
            kappa: None,
            ap_samples: 1000,
        }
    }
}

fn reg_decompose_cmd(ctx: &RunContext) -> Result<Outcome> {
    let p: RegDecompose = ctx.config.params()?;
    let f = match p.fixture.as_str() {
        "box" => smoothed_box(p.n, p.res),
        "bump" => smooth_bump(p.n, p.res),
        other => bail!("unknown torus fixture '{other}'"),
    };
    let kappa = match p.kappa {
        None => Kappa::Default,
        Some(c) => Kappa::Custom {
            id: format!("const:{c}"),
            f: Arc::new(move |_, _, _| c),
        },
    };
    let opts = RegOptions {
        ap_samples: p.ap_samples,
        seed: ctx.seed(),
        ..Default::default()
    };
    let dec = reg_decompose(&f, p.eps, &kappa, &opts)?;
    let results = json!({
        "summary": to_value(&dec.summary()),
        "holds": dec.holds(),
        "reconstruction_error": dec.reconstruction_error(&f),
        "integral_gap": (dec.f1.integral() - f.integral()).abs(),
        "support_ok": dec.support_ok,
        "periodization_ratio": dec.periodization_ratio,
        "rejection_hits": dec.rejection_hits,
    });
    Ok(Outcome::ok(results))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RegBohr {
    gamma: Vec<Vec<i64>>,
    delta: f64,
    samples: usize,
}

impl Default for RegBohr {
    fn default() -> Self {
        Self {
            gamma: Vec::new(),
            delta: 0.25,
            samples: 100_000,
        }
    }
}

fn reg_bohr(ctx: &RunContext) -> Result<Outcome> {
    let p: RegBohr = ctx.config.params()?;
    let n = p
        .gamma
        .first()
        .map(Vec::len)
        .ok_or_else(|| anyhow!("gamma needs at least one frequency"))?;
    let bohr = BohrSet::new(n, p.gamma, p.delta)?;
    let report = bohr_measure(&bohr, p.samples, ctx.seed())?;
    Ok(Outcome::ok(to_value(&report)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RegDio {
    xi: Vec<Vec<f64>>,
    eps: f64,
    n_max: Option<u64>,
    c: Option<f64>,
    nodes: usize,
}

impl Default for RegDio {
    fn default() -> Self {
        Self {
            xi: Vec::new(),
            eps: 0.1,
            n_max: None,
            c: None,
            nodes: 100_000,
        }
    }
}

fn reg_dio(ctx: &RunContext) -> Result<Outcome> {
    let p: RegDio = ctx.config.params()?;
    let mode = match (p.n_max, p.c) {
        (Some(n_max), None) => DiophantineMode::Integer { n_max },
        (None, Some(c)) => DiophantineMode::Real { c, nodes: p.nodes },
        _ => bail!("give exactly one of n_max (integer mode) or c (real mode)"),
    };
    let density = diophantine_density(mode, &p.xi, p.eps)?;
    Ok(Outcome::ok(json!({ "density": density })))
}

/// Certified ball decay at `alpha`, or at the fitted exponent when absent.
fn ball_certificate(mu: &GridMeasure, alpha: Option<f64>) -> Result<BallDecayReport> {
    let alpha = match alpha {
        Some(a) => a,
        None => certify_ball_decay(mu, mu.n as f64)?
            .fitted_alpha
            .clamp(1e-6, mu.n as f64),
    };
    Ok(certify_ball_decay(mu, alpha)?)
}

/// Certified Fourier decay at `beta`, or at the fitted shell exponent when absent.
fn fourier_certificate(table: &FourierTable, beta: Option<f64>) -> Result<FourierDecayReport> {
    let n = table.n as f64;
    let beta = match beta {
        Some(b) => b,
        None => certify_fourier_decay(table, n / 2.0)?
            .fitted_exponent
            .clamp(1e-6, n * (1.0 - 1e-9)),
    };
    Ok(certify_fourier_decay(table, beta)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PipelineSplit {
    alpha: Option<f64>,
    beta: Option<f64>,
    xi_max: usize,
    spacing: f64,
    mode: String,
}

impl Default for PipelineSplit {
    fn default() -> Self {
        Self {
            alpha: None,
            beta: None,
            xi_max: 16,
            spacing: 1.0,
            mode: "auto".into(),
        }
    }
}

fn split_mode(name: &str) -> Result<SplitMode> {
    match name {
        "auto" => Ok(SplitMode::Auto),
        "grid" => Ok(SplitMode::Grid),
        "analytic" => Ok(SplitMode::Analytic),
        other => bail!("unknown split mode '{other}'"),
    }
}

fn pipeline_split(ctx: &RunContext) -> Result<Outcome> {
    let p: PipelineSplit = ctx.config.params()?;
    let mu = ctx.measure()?;
    let a = ball_certificate(&mu, p.alpha)?;
    let b = fourier_certificate(&ctx.table(&mu, p.xi_max, p.spacing)?, p.beta)?;
    let opts = SplitOptions {
        xi_max: p.xi_max,
        spacing: p.spacing,
        mode: split_mode(&p.mode)?,
    };
    let split = split_measure(&mu, &a, &b, &opts)?;
    let results = json!({
        "split": to_value(&split),
        "consistency_defect": split.consistency_defect(),
        "density_bounded": split.density_bounded(),
        "mu1_mass": split.mu1.total_mass(),
    });
    Ok(Outcome::ok(results))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PipelinePositivity {
    spec: SpecParams,
    alpha: Option<f64>,
    beta: Option<f64>,
    eps: Option<f64>,
    reg_eps: f64,
    main_res: usize,
    xi_max: usize,
    y_nodes: usize,
    search: bool,
}

impl Default for PipelinePositivity {
    fn default() -> Self {
        Self {
            spec: SpecParams {
                support: Some(1.0 / 16.0),
                ..SpecParams::fixture("showcase")
            },
            alpha: None,
            beta: None,
            eps: None,
            reg_eps: 0.25,
            main_res: 256,
            xi_max: 16,
            y_nodes: 16,
            search: true,
        }
    }
}

fn pipeline_positivity(ctx: &RunContext) -> Result<Outcome> {
    let p: PipelinePositivity = ctx.config.params()?;
    let spec = p.spec.build()?;
    let mu = ctx.measure()?;
    let a = ball_certificate(&mu, p.alpha)?;
    let b = fourier_certificate(&ctx.table(&mu, p.xi_max, 1.0)?, p.beta)?;
    let mut opts = PipelineOptions {
        eps: p.eps,
        reg_eps: p.reg_eps,
        main_res: p.main_res,
        split: SplitOptions {
            xi_max: p.xi_max,
            ..Default::default()
        },
        ..Default::default()
    };
    opts.search = p.search.then(|| SearchOptions {
        y_nodes: p.y_nodes,
        budget: ctx.budget().unwrap_or(SearchOptions::default().budget),
    });
    if let Some(budget) = ctx.budget() {
        opts.dual.budget = budget;
    }
    let report = positivity_pipeline(&spec, &mu, &a, &b, &opts)?;
    let mut results = report.verdict_json();
    results["margin"] = json_float(report.margin);
    results["eps"] = json_float(report.eps);
    results["mu2_bound"] = json_float(report.mu2_bound);
    results["dual_window"] = json_float(report.dual_window);
    results["alpha"] = json_float(a.alpha);
    results["beta"] = json_float(b.beta);
    results["c1"] = json_float(report.split.c1);
    results["split_mode"] = to_value(&report.split.mode);
    if let Some(s) = &report.search {
        results["search"] = json!({ "examined": s.examined, "complete": s.complete });
    }
    if let Some(mb) = &report.main_bound {
        results["main_bound_holds"] = Value::Bool(mb.holds());
    }
    let failed = report.verdict == Verdict::HypothesisFailed;
    Ok(Outcome::ok(results).with_status(failed))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SearchPattern {
    spec: SpecParams,
    tol: Option<f64>,
    y_nodes: usize,
    exclude_coordinate_planes: bool,
}

impl Default for SearchPattern {
    fn default() -> Self {
        Self {
            spec: SpecParams {
                support: Some(1.0 / 16.0),
                ..SpecParams::fixture("showcase")
            },
            tol: None,
            y_nodes: 16,
            exclude_coordinate_planes: true,
        }
    }
}

fn search_pattern(ctx: &RunContext) -> Result<Outcome> {
    let p: SearchPattern = ctx.config.params()?;
    let mut spec = p.spec.build()?;
    if p.exclude_coordinate_planes {
        spec = spec.excluding_coordinate_planes();
    }
    let cells = CellSet::from_support(&ctx.measure()?);
    let tol = p
        .tol
        .unwrap_or(cells.cell_width() * (cells.n as f64).sqrt());
    let opts = SearchOptions {
        y_nodes: p.y_nodes,
        budget: ctx.budget().unwrap_or(SearchOptions::default().budget),
    };
    let report = pattern_search(&spec, &cells, tol, &opts)?;
    let mut v = to_value(&report);
    v["tol"] = json_float(tol);
    Ok(Outcome::ok(v))
}

/// Exit code for a library error: unmet certificates are hypothesis failures.
pub fn error_status(err: &anyhow::Error) -> Option<Status> {
    match err.downcast_ref::<fractalconfig::Error>() {
        Some(fractalconfig::Error::Certificate(_)) => Some(Status::HypothesisFailed),
        _ => None,
    }
}
