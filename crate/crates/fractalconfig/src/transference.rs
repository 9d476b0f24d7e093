//! Splitting a fractal measure into a bounded smooth part and a
//! Fourier-small remainder, the positivity pipeline built on it, the
//! configuration-measure pairings and the brute-force configuration search.

use std::f64::consts::{E, PI};

use serde::Serialize;

use crate::bounds::{largest_admissible_eps, verify_main_bound, MainBoundReport};
use crate::bump::Profile;
use crate::bump::{bump, bump_transform_defect, BUMP_INTEGRAL};
use crate::error::{param, Error, Result};
use crate::forms::{
    default_y_nodes, dual_tail, grid_weight, lambda_direct, lambda_dual, lambda_smoothed,
    DualOptions, Kernel,
};
use crate::fourier::{fourier_table, Envelope, FourierDecayReport, FourierTable};
use crate::grid::{flatten, unflatten, GridFunction};
use crate::io::json_float;
use crate::measures::{mollify, BallDecayReport, GridMeasure, MollifierSpec};
use crate::oscillatory::JEvaluator;
use crate::par;
use crate::patterns::{check_pattern_spec, PatternSpec};
use crate::regularity::{abscont_lower, AbscontReport, Kappa, RegOptions};
use crate::tail::TailConfig;

/// Radius of the ball holding the support of the unscaled cutoff `φ`.
pub const CUTOFF_RADIUS: f64 = 1.0 / 16.0;
/// `δ` in `s = (2+δ)/(1−ε)` when the pipeline picks `ε` itself.
pub const PIPELINE_DELTA: f64 = 0.1;

/// Half side of the cube carrying `φ`, chosen so the cube sits in `B(0, 1/16)`.
fn cutoff_halfside(n: usize) -> f64 {
    CUTOFF_RADIUS / (n as f64).sqrt()
}

/// `‖φ‖∞` for the product bump normalized to unit mass.
pub fn cutoff_sup(n: usize) -> f64 {
    (bump(0.0) / (cutoff_halfside(n) * BUMP_INTEGRAL)).powi(n as i32)
}

/// `1 − φ̂(ω)` without cancellation.
fn cutoff_defect(n: usize, omega: &[f64]) -> f64 {
    let h = cutoff_halfside(n);
    let log_keep: f64 = omega
        .iter()
        .map(|w| (-bump_transform_defect(h * w)).ln_1p())
        .sum();
    -log_keep.exp_m1()
}

/// How the bounded part `f = μ ∗ φ_L` is realized in space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SplitMode {
    /// Sampled mollifier on the measure's grid; needs `1/(16√n·L)` of at least one cell.
    Grid,
    /// Exact on the frequency side for any `L`; in space each cell carries
    /// its mass uniformly, so for sub-cell `L` the density is the cell density.
    Analytic,
    /// `Grid` when resolvable, otherwise `Analytic`.
    Auto,
}

#[derive(Clone, Debug)]
pub struct SplitOptions {
    pub xi_max: usize,
    pub spacing: f64,
    pub mode: SplitMode,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            xi_max: 16,
            spacing: 1.0,
            mode: SplitMode::Auto,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TransferenceSplit {
    /// Cell masses of `μ₁ = f dx`.
    #[serde(skip)]
    pub mu1: GridMeasure,
    #[serde(skip)]
    pub mu_hat: FourierTable,
    #[serde(skip)]
    pub mu1_hat: FourierTable,
    #[serde(skip)]
    pub mu2_hat: FourierTable,
    pub mode: SplitMode,
    /// `ln L` with `L = exp(1/(n−α))`; `L` itself may overflow.
    pub log_l: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Measured `sup|μ̂₂|` over the window.
    pub sup_bound: f64,
    /// `sup_ξ min(2, 2π|ξ|/(16L))·min(1, D_β(1+|ξ|)^{−β/2})`, valid on `ℝⁿ` where the envelope holds.
    pub global_bound: f64,
    /// `exp(−(β/(2+β))/(n−α))`.
    pub shape: f64,
    /// Measured `‖f‖∞`.
    pub c1: f64,
    pub c0: f64,
    pub d_const: f64,
    /// `C₀·D·e`.
    pub c1_bound: f64,
    /// Largest `|μ̂₂(ξ)| / (min(1, |ξ|/L)|μ̂(ξ)|)` over the window.
    pub factor_constant: f64,
}

impl TransferenceSplit {
    pub fn l(&self) -> f64 {
        self.log_l.exp()
    }

    pub fn density_bounded(&self) -> bool {
        self.c1 <= self.c1_bound
    }

    /// Largest `|μ̂₁ + μ̂₂ − μ̂|` on the window.
    pub fn consistency_defect(&self) -> f64 {
        (0..self.mu_hat.len())
            .map(|i| {
                (self.mu1_hat.values[i] + self.mu2_hat.values[i] - self.mu_hat.values[i]).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Density of `μ₁` on its grid.
    pub fn density(&self) -> GridFunction {
        self.mu1.density()
    }
}

/// Largest `α` whose `L` the grid can realize in [`SplitMode::Grid`].
pub fn max_grid_alpha(mu: &GridMeasure) -> Option<f64> {
    let l_max = cutoff_halfside(mu.n) / mu.cell_width();
    (l_max > 1.0).then(|| mu.n as f64 - 1.0 / l_max.ln())
}

/// `ln sup_r min(2, 2πr/(16L))·min(1, D(1+r)^{−β/2})`, scanned in `ln r`.
fn log_global_bound(log_l: f64, d: f64, beta: f64) -> f64 {
    let value = |t: f64| {
        let a = (2f64).ln().min((2.0 * PI * CUTOFF_RADIUS).ln() + t - log_l);
        let b = 0f64.min(d.ln() - beta / 2.0 * t.exp().ln_1p());
        a + b
    };
    let kink_a = (2.0 / (2.0 * PI * CUTOFF_RADIUS)).ln() + log_l;
    let kink_b = if d > 1.0 {
        (d.powf(2.0 / beta) - 1.0).max(1e-300).ln()
    } else {
        f64::NEG_INFINITY
    };
    let (lo, hi) = (-20.0, kink_a.max(kink_b) + 20.0);
    let steps = 4000;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=steps {
        best = best.max(value(lo + (hi - lo) * i as f64 / steps as f64));
    }
    for t in [kink_a, kink_b] {
        if t.is_finite() {
            best = best.max(value(t));
        }
    }
    best
}

/// `μ = μ₁ + μ₂` with `μ₁ = (μ ∗ φ_L) dx` and `L = exp(1/(n−α))`.
pub fn split_measure(
    mu: &GridMeasure,
    alpha_cert: &BallDecayReport,
    beta_cert: &FourierDecayReport,
    opts: &SplitOptions,
) -> Result<TransferenceSplit> {
    let n = mu.n;
    let alpha = alpha_cert.alpha;
    if !(alpha < n as f64) {
        return param(format!("alpha {alpha} must be below n = {n}"));
    }
    let log_l = 1.0 / (n as f64 - alpha);
    let eps_l = cutoff_halfside(n) * (-log_l).exp();
    let resolvable = eps_l >= mu.cell_width() * (1.0 - 1e-12);
    let mode = match opts.mode {
        SplitMode::Grid if !resolvable => {
            let advice = max_grid_alpha(mu).map_or("none".to_string(), |a| format!("{a:.6}"));
            return Err(Error::Resolution(format!(
                "L = e^{log_l:.4} needs a cutoff of {eps_l:.3e}, below the cell width {}; max feasible alpha {advice}",
                mu.cell_width()
            )));
        }
        SplitMode::Auto if resolvable => SplitMode::Grid,
        SplitMode::Auto => SplitMode::Analytic,
        m => m,
    };
    let mu_hat = fourier_table(mu, opts.xi_max, opts.spacing)?;
    let (mu1, mu1_hat, mu2_hat) = match mode {
        SplitMode::Grid => {
            let mu1 = mollify(mu, &MollifierSpec::new(Profile::GaussianBump, eps_l))?;
            let mu1_hat = fourier_table(&mu1, opts.xi_max, opts.spacing)?;
            let values = mu_hat
                .values
                .iter()
                .zip(&mu1_hat.values)
                .map(|(a, b)| a - b)
                .collect();
            let mu2_hat = FourierTable {
                values,
                ..mu_hat.clone()
            };
            (mu1, mu1_hat, mu2_hat)
        }
        _ => {
            let scale = (-log_l).exp();
            let defects: Vec<f64> = (0..mu_hat.len())
                .map(|i| {
                    let omega: Vec<f64> = mu_hat
                        .lattice(i)
                        .iter()
                        .map(|&k| k as f64 * mu_hat.spacing * scale)
                        .collect();
                    cutoff_defect(n, &omega)
                })
                .collect();
            let keep = mu_hat
                .values
                .iter()
                .zip(&defects)
                .map(|(v, d)| v * (1.0 - d))
                .collect();
            let rest = mu_hat
                .values
                .iter()
                .zip(&defects)
                .map(|(v, d)| v * *d)
                .collect();
            (
                mu.clone(),
                FourierTable {
                    values: keep,
                    ..mu_hat.clone()
                },
                FourierTable {
                    values: rest,
                    ..mu_hat.clone()
                },
            )
        }
    };
    let c1 = mu1.mass.iter().cloned().fold(0.0, f64::max) / mu1.cell_volume();
    let c0 = cutoff_sup(n);
    let d_const = alpha_cert.d_const;
    let sup_bound = mu2_hat.sup_norm();
    let factor_constant = (0..mu_hat.len())
        .map(|i| {
            let r = mu_hat.radius(i);
            let base = mu_hat.values[i].norm() * (r * (-log_l).exp()).min(1.0);
            if base > 0.0 {
                mu2_hat.values[i].norm() / base
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    let beta = beta_cert.beta;
    Ok(TransferenceSplit {
        mu1,
        mu_hat,
        mu1_hat,
        mu2_hat,
        mode,
        log_l,
        alpha,
        beta,
        sup_bound,
        global_bound: log_global_bound(log_l, beta_cert.d_alpha, beta).exp(),
        shape: (-(beta / (2.0 + beta)) * log_l).exp(),
        c1,
        c0,
        d_const,
        c1_bound: c0 * d_const * E,
        factor_constant,
    })
}

/// Cells of a grid measure's support.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSet {
    pub n: usize,
    pub res: usize,
    pub halfwidth: f64,
    pub mask: Vec<bool>,
}

impl CellSet {
    pub fn from_support(mu: &GridMeasure) -> Self {
        Self {
            n: mu.n,
            res: mu.res,
            halfwidth: mu.halfwidth,
            mask: mu.mass.iter().map(|&m| m > 0.0).collect(),
        }
    }

    pub fn cell_width(&self) -> f64 {
        2.0 * self.halfwidth / self.res as f64
    }

    pub fn cells(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| self.mask[i]).collect()
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.n];
        unflatten(flat, self.res, self.n, &mut idx);
        let w = self.cell_width();
        idx.iter()
            .map(|&i| -self.halfwidth + (i as f64 + 0.5) * w)
            .collect()
    }

    /// Whether some cell centre lies within `tol` of `p` in the max norm.
    pub fn near(&self, p: &[f64], tol: f64) -> bool {
        let w = self.cell_width();
        let reach = (tol / w).ceil() as i64 + 1;
        let base: Vec<i64> = p
            .iter()
            .map(|x| ((x + self.halfwidth) / w - 0.5).round() as i64)
            .collect();
        let side = (2 * reach + 1) as usize;
        let total = side.pow(self.n as u32);
        let mut off = vec![0usize; self.n];
        let mut idx = vec![0usize; self.n];
        'outer: for o in 0..total {
            unflatten(o, side, self.n, &mut off);
            for a in 0..self.n {
                let i = base[a] + off[a] as i64 - reach;
                if i < 0 || i >= self.res as i64 {
                    continue 'outer;
                }
                let c = -self.halfwidth + (i as f64 + 0.5) * w;
                if (c - p[a]).abs() > tol {
                    continue 'outer;
                }
                idx[a] = i as usize;
            }
            if self.mask[flatten(&idx, self.res)] {
                return true;
            }
        }
        false
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `x, x + φ₁(y), …, x + φ_k(y)`.
    pub images: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct SearchOptions {
    /// Midpoint nodes per axis of the `y` grid over `[−c, c]^m`.
    pub y_nodes: usize,
    /// Largest number of `(x, y)` pairs examined.
    pub budget: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            y_nodes: 16,
            budget: 2_000_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchReport {
    pub witness: Option<Witness>,
    /// Pairs examined before stopping.
    pub examined: u64,
    /// False when the budget cut the search short.
    pub complete: bool,
}

fn witness_at(
    spec: &PatternSpec,
    cells: &CellSet,
    x: &[f64],
    y: &[f64],
    tol: f64,
) -> Option<Witness> {
    if y.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= tol {
        return None;
    }
    let point: Vec<f64> = x.iter().chain(y).cloned().collect();
    if spec
        .excluded
        .iter()
        .any(|b| PatternSpec::distance_to_subspace(&point, b) <= tol)
    {
        return None;
    }
    let mut images = vec![x.to_vec()];
    for s in spec.shifts_unchecked(y) {
        let p: Vec<f64> = x.iter().zip(&s).map(|(a, b)| a + b).collect();
        if !cells.near(&p, tol) {
            return None;
        }
        images.push(p);
    }
    Some(Witness {
        x: x.to_vec(),
        y: y.to_vec(),
        images,
    })
}

/// First `(x, y)` in lexicographic order whose configuration lies within `tol` of `E`.
pub fn pattern_search(
    spec: &PatternSpec,
    cells: &CellSet,
    tol: f64,
    opts: &SearchOptions,
) -> Result<SearchReport> {
    if cells.n != spec.n() {
        return param("cell set and pattern live in different dimensions");
    }
    let diameter = cells.cell_width() * (cells.n as f64).sqrt();
    if tol < diameter * (1.0 - 1e-12) {
        return param(format!("tol {tol} below the cell diameter {diameter}"));
    }
    let m = spec.m();
    let c = spec.cutoff.support;
    let h = 2.0 * c / opts.y_nodes as f64;
    let ys: Vec<Vec<f64>> = (0..opts.y_nodes.pow(m as u32))
        .map(|flat| {
            let mut idx = vec![0; m];
            unflatten(flat, opts.y_nodes, m, &mut idx);
            idx.iter().map(|&i| -c + (i as f64 + 0.5) * h).collect()
        })
        .collect();
    let xs = cells.cells();
    let per_x = ys.len() as u64;
    let allowed = (opts.budget / per_x.max(1)) as usize;
    let limit = xs.len().min(allowed);
    let block = 64usize;
    let mut start = 0;
    while start < limit {
        let batch: Vec<usize> = (start..limit)
            .step_by(block)
            .take(par::CHUNK / block + 16)
            .collect();
        let found = par::map_slice(&batch, |&b| {
            for &cell in &xs[b..(b + block).min(limit)] {
                let x = cells.center(cell);
                for y in &ys {
                    if let Some(w) = witness_at(spec, cells, &x, y, tol) {
                        return Some((cell, w));
                    }
                }
            }
            None
        });
        if let Some((cell, w)) = found.into_iter().flatten().next() {
            let pos = xs.iter().position(|&c| c == cell).unwrap_or(0) as u64;
            let row = ys.iter().position(|y| *y == w.y).unwrap_or(0) as u64;
            return Ok(SearchReport {
                witness: Some(w),
                examined: pos * per_x + row + 1,
                complete: true,
            });
        }
        start = batch.last().map_or(limit, |&b| (b + block).min(limit));
    }
    Ok(SearchReport {
        witness: None,
        examined: limit as u64 * per_x,
        complete: limit == xs.len(),
    })
}

/// `⟨ν_ε, F⟩ = Λ(μ_ε, …, μ_ε; F)` at two mollification scales.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Pairing {
    pub eps: f64,
    pub value: f64,
    /// Same pairing at `2ε`.
    pub coarse: f64,
    /// `|value − coarse| / max(|value|, |coarse|)`, zero when both vanish.
    pub stabilization: f64,
}

fn mollified_density(mu: &GridMeasure, eps: f64) -> Result<GridFunction> {
    if eps < mu.cell_width() * (1.0 - 1e-12) {
        return Err(Error::Resolution(format!(
            "eps {eps} below the cell width {}",
            mu.cell_width()
        )));
    }
    Ok(mollify(mu, &MollifierSpec::new(Profile::GaussianBump, eps))?.density())
}

fn pairing_at<W>(spec: &PatternSpec, mu: &GridMeasure, eps: f64, weight: &W) -> Result<f64>
where
    W: Fn(&[f64], &[f64]) -> f64 + Sync + Send,
{
    let f = mollified_density(mu, eps)?;
    let copies = vec![f; spec.k() + 1];
    Ok(lambda_smoothed(spec, &copies, default_y_nodes(spec.m()), weight)?.value)
}

/// Pairing against a grid function on `ℝ^{n+m}`, or `F ≡ 1` when `f` is `None`.
pub fn config_pairing(
    spec: &PatternSpec,
    mu: &GridMeasure,
    f: Option<&GridFunction>,
    eps: f64,
) -> Result<Pairing> {
    if let Some(g) = f {
        if g.n != spec.n() + spec.m() {
            return param("F must live on R^{n+m}");
        }
    }
    let run = |e: f64| match f {
        Some(g) => pairing_at(spec, mu, e, &grid_weight(g)),
        None => pairing_at(spec, mu, e, &|_: &[f64], _: &[f64]| 1.0),
    };
    let value = run(eps)?;
    let coarse = run(2.0 * eps)?;
    let scale = value.abs().max(coarse.abs());
    let stabilization = if scale > 0.0 {
        (value - coarse).abs() / scale
    } else {
        0.0
    };
    Ok(Pairing {
        eps,
        value,
        coarse,
        stabilization,
    })
}

/// Flat-top transverse profile: 1 on `|t| ≤ 1`, a bump taper to 0 at `|t| = 2`.
pub fn slab_profile(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        1.0
    } else if a >= 2.0 {
        0.0
    } else {
        bump(a - 1.0) / bump(0.0)
    }
}

/// Hyperplane `{z ∈ ℝ^{n+m} : normal·z = offset}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Hyperplane {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Hyperplane {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return param("hyperplane normal must be nonzero");
        }
        Ok(Self {
            normal: normal.iter().map(|v| v / norm).collect(),
            offset: offset / norm,
        })
    }

    pub fn signed_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter()
            .chain(y)
            .zip(&self.normal)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            - self.offset
    }
}

/// `⟨ν_ε, Ξ(dist_H/w)⟩` with the flat-top profile [`slab_profile`].
pub fn hyperplane_slab_mass(
    spec: &PatternSpec,
    mu: &GridMeasure,
    plane: &Hyperplane,
    w: f64,
    eps: f64,
) -> Result<f64> {
    if plane.normal.len() != spec.n() + spec.m() {
        return param("hyperplane must live in R^{n+m}");
    }
    if !(w > 0.0) {
        return param("slab width must be positive");
    }
    pairing_at(spec, mu, eps, &|x: &[f64], y: &[f64]| {
        slab_profile(plane.signed_distance(x, y) / w)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Positive,
    Inconclusive,
    HypothesisFailed,
}

#[derive(Clone, Debug)]
pub struct PipelineOptions {
    /// Defaults to half the largest admissible value.
    pub eps: Option<f64>,
    pub split: SplitOptions,
    /// `ε` for the regularity decomposition inside the main term.
    pub reg_eps: f64,
    pub search: Option<SearchOptions>,
    pub dual: DualOptions,
    /// Cells per axis on `[−1/2, 1/2]ⁿ` for the main term; the density is block-averaged down to it.
    pub main_res: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            eps: None,
            split: SplitOptions::default(),
            reg_eps: 0.25,
            search: Some(SearchOptions::default()),
            dual: DualOptions {
                tail: Some(TailConfig::coarse()),
                ..Default::default()
            },
            main_res: 256,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineReport {
    /// `Λ(μ₁, …, μ₁) = C₁^{k+1}·Λ(μ₁/C₁, …, μ₁/C₁)`.
    pub main_term: f64,
    /// `(2^{k+1}−1)·2^{k+1}·‖μ̂₂‖∞^ε·Λ*(|μ̂|^{1−ε}, …; |J|)` on the window.
    pub error_terms: f64,
    /// The same factor times the envelope tail of `Λ*` outside the window.
    pub tails: f64,
    pub verdict: Verdict,
    /// `main − errors − tails`.
    pub margin: f64,
    pub eps: f64,
    pub mu2_bound: f64,
    pub dual_window: f64,
    pub dual_tail: f64,
    pub split: TransferenceSplit,
    pub abscont: Option<AbscontReport>,
    pub main_bound: Option<MainBoundReport>,
    pub search: Option<SearchReport>,
}

impl PipelineReport {
    /// `margin > factor × tails` with a positive verdict.
    pub fn positive_with_margin(&self, factor: f64) -> bool {
        self.verdict == Verdict::Positive && self.margin > factor * self.tails
    }

    /// The `{main_term, error_terms, tails, verdict, witness?}` block.
    pub fn verdict_json(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "main_term": json_float(self.main_term),
            "error_terms": json_float(self.error_terms),
            "tails": json_float(self.tails),
            "verdict": self.verdict,
        });
        if let Some(w) = self.search.as_ref().and_then(|s| s.witness.as_ref()) {
            v["witness"] = serde_json::to_value(w).expect("witness serializes");
        }
        v
    }
}

/// Embed a grid function on a small centred box into `[−1/2, 1/2]ⁿ` at the same cell width.
pub fn embed_unit_box(f: &GridFunction) -> Result<GridFunction> {
    let ratio = 0.5 / f.halfwidth;
    let res = (f.res as f64 * ratio).round() as usize;
    if (res as f64 - f.res as f64 * ratio).abs() > 1e-9
        || !(res - f.res).is_multiple_of(2)
        || f.halfwidth > 0.5
    {
        return param("measure grid does not tile [-1/2, 1/2]^n");
    }
    let off = (res - f.res) / 2;
    let mut out = GridFunction::zeros(f.n, res, 0.5);
    let mut idx = vec![0; f.n];
    for (flat, &v) in f.values.iter().enumerate() {
        unflatten(flat, f.res, f.n, &mut idx);
        idx.iter_mut().for_each(|i| *i += off);
        out.values[flatten(&idx, res)] = v;
    }
    Ok(out)
}

/// Block average down to `res` cells per axis.
fn coarsen(f: &GridFunction, res: usize) -> Result<GridFunction> {
    if res == 0 || !f.res.is_multiple_of(res) {
        return param(format!(
            "main_res {res} must divide the grid resolution {}",
            f.res
        ));
    }
    let ratio = f.res / res;
    let scale = (ratio as f64).powi(f.n as i32).recip();
    let mut out = GridFunction::zeros(f.n, res, f.halfwidth);
    let mut idx = vec![0; f.n];
    for (flat, &v) in f.values.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        unflatten(flat, f.res, f.n, &mut idx);
        idx.iter_mut().for_each(|i| *i /= ratio);
        out.values[flatten(&idx, res)] += v * scale;
    }
    Ok(out)
}

/// Positivity of `Λ(μ, …, μ)` through the split `μ = μ₁ + μ₂`.
pub fn positivity_pipeline(
    spec: &PatternSpec,
    mu: &GridMeasure,
    alpha_cert: &BallDecayReport,
    beta_cert: &FourierDecayReport,
    opts: &PipelineOptions,
) -> Result<PipelineReport> {
    if alpha_cert.small_radius_blowup {
        return Err(Error::Certificate(
            "ball condition fails at small radii".into(),
        ));
    }
    if !(beta_cert.fitted_exponent > 1e-6) {
        return Err(Error::Certificate("no Fourier decay measured".into()));
    }
    let (n, k, m) = (spec.n(), spec.k(), spec.m());
    let split = split_measure(mu, alpha_cert, beta_cert, &opts.split)?;
    let eps = match opts
        .eps
        .or_else(|| largest_admissible_eps(n, k, m, PIPELINE_DELTA).map(|e| e / 2.0))
    {
        Some(e) => e,
        None => return param("no admissible eps for these dimensions"),
    };
    let hypothesis = check_pattern_spec(spec, 0.5, 0.0).passes();

    let f = coarsen(&embed_unit_box(&split.density())?, opts.main_res)?;
    let c1 = split.c1;
    let scaled = f.scaled(1.0 / c1);
    let abscont = abscont_lower(
        spec,
        &scaled,
        None,
        opts.reg_eps,
        &Kappa::Default,
        &RegOptions::default(),
    )?;
    let main_term = c1.powi(k as i32 + 1) * abscont.lambda_value;

    let powered: Vec<FourierTable> = (0..=k)
        .map(|_| {
            let t = split.mu_hat.abs_pow(1.0 - eps);
            let env = Envelope {
                amplitude: beta_cert.d_alpha,
                exponent: beta_cert.beta / 2.0,
                sup: 1.0,
            };
            t.with_envelope(env.powf(1.0 - eps))
        })
        .collect();
    let eval = JEvaluator::new(spec);
    let kernel = Kernel::j(&eval, vec![0.0; m])?.abs_pow(1.0);
    let window = lambda_dual(
        &powered,
        &kernel,
        &DualOptions {
            tail: None,
            ..opts.dual.clone()
        },
    )?;
    let tail = match &opts.dual.tail {
        Some(cfg) => dual_tail(&powered, &kernel, cfg),
        None => f64::INFINITY,
    };
    let factor =
        ((1u64 << (k + 1)) - 1) as f64 * (1u64 << (k + 1)) as f64 * split.global_bound.powf(eps);
    let error_terms = factor * window.value.abs();
    let tails = factor * tail;
    let margin = main_term - error_terms - tails;
    let verdict = if !hypothesis {
        Verdict::HypothesisFailed
    } else if margin > 0.0 {
        Verdict::Positive
    } else {
        Verdict::Inconclusive
    };
    let s = (2.0 + PIPELINE_DELTA) / (1.0 - eps);
    let main_bound = verify_main_bound(
        &powered,
        &spec.system,
        &[vec![0.0; m]],
        (1.0 - eps) * m as f64,
        s,
    )
    .ok();
    let search = match &opts.search {
        Some(so) => {
            let cells = CellSet::from_support(mu);
            let tol = cells.cell_width() * (n as f64).sqrt();
            Some(pattern_search(
                &spec.clone().excluding_coordinate_planes(),
                &cells,
                tol,
                so,
            )?)
        }
        None => None,
    };
    Ok(PipelineReport {
        main_term,
        error_terms,
        tails,
        verdict,
        margin,
        eps,
        mu2_bound: split.global_bound,
        dual_window: window.value,
        dual_tail: tail,
        split,
        abscont: Some(abscont),
        main_bound,
        search,
    })
}

/// `Λ(μ_ε, …, μ_ε)` from the spatial side, for cross-checks.
pub fn mollified_lambda(spec: &PatternSpec, mu: &GridMeasure, eps: f64) -> Result<f64> {
    let f = mollified_density(mu, eps)?;
    Ok(lambda_direct(spec, &vec![f; spec.k() + 1], default_y_nodes(spec.m()))?.value)
}
