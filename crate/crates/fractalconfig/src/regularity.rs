//! Bohr sets on the torus, the constructive U² regularity decomposition,
//! diophantine densities and the absolutely continuous lower bound.
//!
//! Functions on `𝕋ⁿ = [−1/2, 1/2)ⁿ` are sampled on a uniform lattice
//! `origin + i/res`. Data live at cell centres; mollifiers live on the
//! nodes `i/res`, so a centred function convolved with a node function is
//! again exactly a centred function.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::fft::fftn;
use crate::forms::{default_y_nodes, lambda_direct};
use crate::grid::{unflatten, GridFunction};
use crate::par;
use crate::patterns::{check_pattern_spec, PatternSpec};

/// Two-sided 99% normal quantile.
const Z99: f64 = 2.575_829_303_548_901;
/// Samples per seeded Monte Carlo stream.
const STREAM: usize = 4096;
/// Schedule constant in `max(δ_{i+1}, η_{i+1}) = c·min(κ, ε²)`.
const SCHEDULE_C: f64 = 0.25;
/// Initial Bohr radius.
const DELTA0: f64 = 1.0 / 8.0;
/// Half side of the support cube required by the decomposition.
pub const SUPPORT_HALFWIDTH: f64 = 1.0 / 8.0;

/// Distance from `t` to the nearest integer.
pub fn torus_dist(t: f64) -> f64 {
    (t - t.round()).abs()
}

/// `B(Γ, δ) = {x ∈ 𝕋ⁿ : ‖ξ·x‖ ≤ δ for all ξ ∈ Γ}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BohrSet {
    pub n: usize,
    pub gamma: Vec<Vec<i64>>,
    pub delta: f64,
}

impl BohrSet {
    pub fn new(n: usize, gamma: Vec<Vec<i64>>, delta: f64) -> Result<Self> {
        if n == 0 {
            return param("torus dimension must be positive");
        }
        if !(delta > 0.0 && delta <= 0.5) {
            return param(format!("delta {delta} outside (0, 1/2]"));
        }
        if gamma.iter().any(|g| g.len() != n) {
            return param("frequency with the wrong dimension");
        }
        Ok(Self { n, gamma, delta })
    }

    /// The coordinate frequencies `e₁, …, eₙ`.
    pub fn coordinate(n: usize, delta: f64) -> Result<Self> {
        let gamma = (0..n)
            .map(|a| (0..n).map(|b| i64::from(a == b)).collect())
            .collect();
        Self::new(n, gamma, delta)
    }

    pub fn d(&self) -> usize {
        self.gamma.len()
    }

    /// `B_ρ`: same frequencies, radius `ρδ`.
    pub fn dilate(&self, rho: f64) -> Self {
        Self {
            n: self.n,
            gamma: self.gamma.clone(),
            delta: self.delta * rho,
        }
    }

    /// `sup_{ξ∈Γ} ‖ξ·x‖`.
    pub fn radius(&self, x: &[f64]) -> f64 {
        self.gamma
            .iter()
            .map(|g| torus_dist(g.iter().zip(x).map(|(a, b)| *a as f64 * b).sum()))
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.radius(x) <= self.delta
    }

    /// `(δ/2)^d`.
    pub fn lower_bound(&self) -> f64 {
        (self.delta / 2.0).powi(self.d() as i32)
    }

    /// Whether `res` nodes per axis put at least four nodes across the box
    /// `|x|∞ ≤ δ/max‖ξ‖₁` inscribed in `B`.
    pub fn resolved_by(&self, res: usize) -> bool {
        res as f64 * self.delta >= 8.0 * self.max_l1().max(1.0)
    }

    fn max_l1(&self) -> f64 {
        self.gamma
            .iter()
            .map(|g| g.iter().map(|v| v.unsigned_abs() as f64).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn has_coordinates(&self) -> bool {
        (0..self.n).all(|a| {
            self.gamma.iter().any(|g| {
                g.iter()
                    .enumerate()
                    .all(|(b, v)| if a == b { v.abs() == 1 } else { *v == 0 })
            })
        })
    }
}

/// A Monte Carlo estimate with a 99% Wilson half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub estimate: f64,
    pub half_width: f64,
    pub samples: usize,
}

impl Estimate {
    fn from_hits(hits: usize, samples: usize, scale: f64) -> Self {
        let nn = samples as f64;
        let p = hits as f64 / nn;
        let z2 = Z99 * Z99;
        let denom = 1.0 + z2 / nn;
        let centre = (p + z2 / (2.0 * nn)) / denom;
        let spread = Z99 * (p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)).sqrt() / denom;
        let half = (centre + spread - p).max(p - (centre - spread));
        Self {
            estimate: p * scale,
            half_width: half * scale,
            samples,
        }
    }

    pub fn upper(&self) -> f64 {
        self.estimate + self.half_width
    }
}

/// Hit count of `hit` over `samples` uniform draws in `[0,1)^dim`, one ChaCha
/// stream per block so the count is independent of the thread count.
fn monte_carlo_hits<F>(dim: usize, samples: usize, seed: u64, hit: F) -> usize
where
    F: Fn(&[f64]) -> bool + Sync + Send,
{
    let blocks = samples.div_ceil(STREAM);
    par::map_range(blocks, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        let count = STREAM.min(samples - b * STREAM);
        let mut u = vec![0.0; dim];
        (0..count)
            .filter(|_| {
                u.iter_mut().for_each(|v| *v = rng.gen::<f64>());
                hit(&u)
            })
            .count()
    })
    .into_iter()
    .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BohrMeasure {
    pub estimate: Estimate,
    pub lower_bound: f64,
    /// `estimate + half_width ≥ (δ/2)^d`.
    pub consistent: bool,
}

pub fn bohr_measure(bohr: &BohrSet, samples: usize, seed: u64) -> Result<BohrMeasure> {
    if samples < 10_000 {
        return param("at least 10⁴ samples are required");
    }
    let hits = monte_carlo_hits(bohr.n, samples, seed, |u| {
        let x: Vec<f64> = u.iter().map(|v| v - 0.5).collect();
        bohr.contains(&x)
    });
    let estimate = Estimate::from_hits(hits, samples, 1.0);
    let lower_bound = bohr.lower_bound();
    Ok(BohrMeasure {
        estimate,
        lower_bound,
        consistent: estimate.upper() >= lower_bound,
    })
}

/// A real function on `𝕋ⁿ` sampled at `origin + i/res` along every axis.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusFunction {
    pub n: usize,
    pub res: usize,
    pub origin: f64,
    pub values: Vec<f64>,
}

/// Signed frequency of FFT index `k`.
fn signed(k: usize, res: usize) -> i64 {
    if k < res / 2 {
        k as i64
    } else {
        k as i64 - res as i64
    }
}

fn cis(turns: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * turns)
}

impl TorusFunction {
    /// Samples at cell centres `−1/2 + (i + 1/2)/res`.
    pub fn new(n: usize, res: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || res < 4 || !res.is_multiple_of(2) {
            return param("torus grids need n ≥ 1 and an even res ≥ 4");
        }
        if values.len() != res.pow(n as u32) {
            return param(format!(
                "expected {} samples, got {}",
                res.pow(n as u32),
                values.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return param("non-finite sample");
        }
        Ok(Self {
            n,
            res,
            origin: -0.5 + 0.5 / res as f64,
            values,
        })
    }

    pub fn from_fn(n: usize, res: usize, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        Self::from_grid(&GridFunction::from_fn(n, res, 0.5, f))
    }

    /// A grid function on `[−1/2, 1/2]ⁿ` read as a function on the torus.
    pub fn from_grid(g: &GridFunction) -> Result<Self> {
        if (g.halfwidth - 0.5).abs() > 1e-12 {
            return param("torus functions need a grid on [-1/2, 1/2]^n");
        }
        Self::new(g.n, g.res, g.values.clone())
    }

    pub fn to_grid(&self) -> GridFunction {
        GridFunction {
            n: self.n,
            res: self.res,
            halfwidth: 0.5,
            values: self.values.clone(),
        }
    }

    fn len(&self) -> usize {
        self.values.len()
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        self.origin + i as f64 / self.res as f64
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.n];
        unflatten(flat, self.res, self.n, &mut idx);
        idx.iter().map(|&i| self.coordinate(i)).collect()
    }

    /// Signed frequency vector for coefficient slot `flat`.
    pub fn frequency(&self, flat: usize) -> Vec<i64> {
        let mut idx = vec![0; self.n];
        unflatten(flat, self.res, self.n, &mut idx);
        idx.iter().map(|&k| signed(k, self.res)).collect()
    }

    /// `∫ f` over the unit torus.
    pub fn integral(&self) -> f64 {
        par::pairwise_sum(&self.values) / self.len() as f64
    }

    pub fn l1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() / self.len() as f64
    }

    pub fn l2(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() / self.len() as f64).sqrt()
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `f̂(m) = res^{-n} Σᵢ f(xᵢ) e(−m·xᵢ)` in FFT slot order.
    pub fn coefficients(&self) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = self
            .values
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        fftn(&mut data, &vec![self.res; self.n], false);
        let scale = 1.0 / self.len() as f64;
        for (flat, c) in data.iter_mut().enumerate() {
            let s: i64 = self.frequency(flat).iter().sum();
            *c *= cis(-self.origin * s as f64) * scale;
        }
        data
    }

    /// Inverse of [`coefficients`](Self::coefficients) on the same lattice (real part).
    pub fn from_coefficients(n: usize, res: usize, origin: f64, coeffs: &[Complex64]) -> Self {
        let mut out = Self {
            n,
            res,
            origin,
            values: vec![0.0; coeffs.len()],
        };
        let mut data: Vec<Complex64> = coeffs
            .iter()
            .enumerate()
            .map(|(flat, c)| {
                let s: i64 = out.frequency(flat).iter().sum();
                c * cis(origin * s as f64)
            })
            .collect();
        fftn(&mut data, &vec![res; n], true);
        out.values = data.iter().map(|c| c.re).collect();
        out
    }

    /// `(f ∗ ν)(x) = res^{-n} Σⱼ f(x − tⱼ) ν(tⱼ)` for `ν` sampled on the nodes `j/res`.
    pub fn convolve(&self, nu: &TorusFunction) -> Result<Self> {
        if nu.n != self.n || nu.res != self.res || nu.origin.abs() > 1e-15 {
            return param("convolution needs a node-sampled kernel on the same lattice");
        }
        let product: Vec<Complex64> = self
            .coefficients()
            .iter()
            .zip(nu.coefficients())
            .map(|(a, b)| a * b)
            .collect();
        Ok(Self::from_coefficients(
            self.n,
            self.res,
            self.origin,
            &product,
        ))
    }

    /// `x ↦ f(x + t)` through the trigonometric interpolant.
    pub fn shifted(&self, t: &[f64]) -> Self {
        let coeffs = self.coefficients();
        self.shift_from(&coeffs, t)
    }

    fn shift_from(&self, coeffs: &[Complex64], t: &[f64]) -> Self {
        let moved: Vec<Complex64> = coeffs
            .iter()
            .enumerate()
            .map(|(flat, c)| {
                let m = self.frequency(flat);
                c * cis(m.iter().zip(t).map(|(a, b)| *a as f64 * b).sum())
            })
            .collect();
        Self::from_coefficients(self.n, self.res, self.origin, &moved)
    }

    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Self {
            values,
            ..self.clone()
        }
    }
}

/// Mollifier samples without the resolution gate.
fn mollifier_values(bohr: &BohrSet, res: usize) -> Vec<f64> {
    let total = res.pow(bohr.n as u32);
    if bohr.delta <= 1.0 / res as f64 && bohr.has_coordinates() {
        // Only the origin node lies inside B: the discrete identity.
        let mut v = vec![0.0; total];
        v[0] = total as f64;
        return v;
    }
    let n = bohr.n;
    let phi = par::map_range(total, |flat| {
        let mut idx = vec![0; n];
        unflatten(flat, res, n, &mut idx);
        let x: Vec<f64> = idx.iter().map(|&i| i as f64 / res as f64).collect();
        (1.0 - bohr.radius(&x) / bohr.delta).max(0.0)
    });
    let mean = par::pairwise_sum(&phi) / total as f64;
    phi.into_iter().map(|p| p / mean).collect()
}

/// `ν_B = φ_B/∫φ_B` with `φ_B(x) = Δ(sup_{ξ∈Γ}‖ξ·x‖/δ)`, sampled on the nodes `j/res`.
pub fn build_bohr_mollifier(bohr: &BohrSet, res: usize) -> Result<TorusFunction> {
    if !bohr.resolved_by(res) {
        return Err(Error::Resolution(format!(
            "res {res} does not resolve delta {} (need ≥ 8·max‖ξ‖₁/δ)",
            bohr.delta
        )));
    }
    if res < 4 || !res.is_multiple_of(2) {
        return param("res must be even and at least 4");
    }
    Ok(TorusFunction {
        n: bohr.n,
        res,
        origin: 0.0,
        values: mollifier_values(bohr, res),
    })
}

/// Sampled properties of a Bohr mollifier.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MollifierCheck {
    pub integral: f64,
    pub sup: f64,
    /// `2(δ/4)^{−d}`.
    pub sup_bound: f64,
    /// `ν_B` vanishes at every sample outside `B`.
    pub support_ok: bool,
    /// `ν_B ≥ 1/2` on `B_{1/2}`.
    pub half_ok: bool,
    /// `max_{ξ∈Γ} |ν̂_B(ξ) − 1|`.
    pub gamma_defect: f64,
}

impl MollifierCheck {
    pub fn holds(&self) -> bool {
        (self.integral - 1.0).abs() < 1e-9
            && self.sup <= self.sup_bound
            && self.support_ok
            && self.half_ok
    }
}

pub fn check_mollifier(bohr: &BohrSet, nu: &TorusFunction) -> MollifierCheck {
    let half = bohr.dilate(0.5);
    let mut support_ok = true;
    let mut half_ok = true;
    for (flat, &v) in nu.values.iter().enumerate() {
        let x = nu.point(flat);
        let r = bohr.radius(&x);
        if r > bohr.delta && v != 0.0 {
            support_ok = false;
        }
        if r <= half.delta && v < 0.5 - 1e-12 {
            half_ok = false;
        }
    }
    let coeffs = nu.coefficients();
    let gamma_defect = bohr
        .gamma
        .iter()
        .map(|g| {
            let flat = g.iter().rev().fold((0usize, 1usize), |(acc, stride), &m| {
                (
                    acc + m.rem_euclid(nu.res as i64) as usize * stride,
                    stride * nu.res,
                )
            });
            (coeffs[flat.0] - 1.0).norm()
        })
        .fold(0.0, f64::max);
    MollifierCheck {
        integral: nu.integral(),
        sup: nu.linf(),
        sup_bound: 2.0 * (bohr.delta / 4.0).powi(-(bohr.d() as i32)),
        support_ok,
        half_ok,
        gamma_defect,
    }
}

/// A decay function `κ(ε, a, b)`.
#[derive(Clone)]
pub enum Kappa {
    /// `ε·a·b/64`.
    Default,
    Custom {
        id: String,
        f: Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>,
    },
}

impl Kappa {
    pub fn eval(&self, eps: f64, a: f64, b: f64) -> f64 {
        match self {
            Kappa::Default => eps * a * b / 64.0,
            Kappa::Custom { f, .. } => f(eps, a, b),
        }
    }

    pub fn id(&self) -> &str {
        match self {
            Kappa::Default => "default",
            Kappa::Custom { id, .. } => id,
        }
    }
}

impl std::fmt::Debug for Kappa {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Kappa({})", self.id())
    }
}

#[derive(Clone, Debug)]
pub struct RegOptions {
    /// Shifts sampled from the Bohr set for the almost-periodicity defect.
    pub ap_samples: usize,
    /// Uniform draws tried before falling back to an inscribed box.
    pub max_tries: usize,
    pub seed: u64,
}

impl Default for RegOptions {
    fn default() -> Self {
        Self {
            ap_samples: 1000,
            max_tries: 200_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Achieved {
    /// Largest sampled `‖T^t f₁ − f₁‖∞`.
    pub ap_sup: f64,
    /// `‖f₂‖₂`.
    pub l2: f64,
    /// `‖f̂₃‖_{ℓ∞(ℤⁿ)}`.
    pub fourier_sup: f64,
}

/// One level of the spectral schedule.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Level {
    pub d: usize,
    pub delta: f64,
    pub eta: f64,
    /// `ln δ̃` with `δ̃ = ρδ`, `ρ = ε(δ/4)^d/2`.
    pub log_delta_tilde: f64,
    pub kappa: f64,
    /// Whether the grid resolves `B(Γᵢ, δᵢ)` (see [`BohrSet::resolved_by`]).
    pub resolved: bool,
}

#[derive(Clone, Debug)]
pub struct RegDecomposition {
    pub f1: TorusFunction,
    pub f2: TorusFunction,
    pub f3: TorusFunction,
    /// `B(Γᵢ, δ̃ᵢ)`; its radius may underflow to zero.
    pub bohr: BohrSet,
    pub eps: f64,
    pub kappa_id: String,
    pub achieved: Achieved,
    /// `κ(ε, dᵢ⁻¹, δ̃ᵢ)`, the bound for `‖f̂₃‖∞`.
    pub kappa_bound: f64,
    /// Selected index `i`.
    pub iterations: usize,
    pub levels: Vec<Level>,
    /// `‖f̂₃‖` on the half-integer lattice over `‖f̂₃‖` on `ℤⁿ`.
    pub periodization_ratio: Option<f64>,
    /// Number of shifts drawn by rejection (the rest come from an inscribed box).
    pub rejection_hits: usize,
    /// Support inside `[−1/8, 1/8]ⁿ`.
    pub support_ok: bool,
    /// Every level up to `i + 1` resolved on the grid.
    pub resolved: bool,
}

/// JSON summary of a decomposition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecompositionSummary {
    pub eps: f64,
    pub kappa_id: String,
    pub iterations: usize,
    pub d: usize,
    pub delta: f64,
    pub achieved: Achieved,
    pub kappa_bound: f64,
    pub resolved: bool,
}

impl RegDecomposition {
    pub fn holds(&self) -> bool {
        self.achieved.ap_sup <= self.eps
            && self.achieved.l2 <= self.eps
            && self.achieved.fourier_sup <= self.kappa_bound
    }

    /// Largest pointwise `|f₁ + f₂ + f₃ − f|`.
    pub fn reconstruction_error(&self, f: &TorusFunction) -> f64 {
        f.values
            .iter()
            .enumerate()
            .map(|(i, v)| (self.f1.values[i] + self.f2.values[i] + self.f3.values[i] - v).abs())
            .fold(0.0, f64::max)
    }

    pub fn summary(&self) -> DecompositionSummary {
        DecompositionSummary {
            eps: self.eps,
            kappa_id: self.kappa_id.clone(),
            iterations: self.iterations,
            d: self.bohr.d(),
            delta: self.bohr.delta,
            achieved: self.achieved,
            kappa_bound: self.kappa_bound,
            resolved: self.resolved,
        }
    }
}

struct Spectrum {
    mask: Vec<bool>,
    list: Vec<Vec<i64>>,
}

impl Spectrum {
    fn add(&mut self, f: &TorusFunction, flat: usize) {
        if !self.mask[flat] {
            self.mask[flat] = true;
            self.list.push(f.frequency(flat));
        }
    }
}

/// Constructive regularity decomposition `f = f₁ + f₂ + f₃`.
pub fn reg_decompose(
    f: &TorusFunction,
    eps: f64,
    kappa: &Kappa,
    opts: &RegOptions,
) -> Result<RegDecomposition> {
    if !(eps > 0.0 && eps <= 1.0) {
        return param(format!("eps {eps} outside (0, 1]"));
    }
    if f.values
        .iter()
        .any(|&v| !(-1e-12..=1.0 + 1e-12).contains(&v))
    {
        return param("f takes values outside [0, 1]");
    }
    let support_ok = f.values.iter().enumerate().all(|(flat, &v)| {
        v.abs() <= 1e-12
            || f.point(flat)
                .iter()
                .all(|x| x.abs() <= SUPPORT_HALFWIDTH + 0.5 / f.res as f64)
    });
    let (n, res, total) = (f.n, f.res, f.values.len());
    let fc = f.coefficients();
    let energy: Vec<f64> = fc.iter().map(|c| c.norm_sqr()).collect();
    let cap = (4.0 / (eps * eps)).ceil() as usize;

    let mut gamma = Spectrum {
        mask: vec![false; total],
        list: Vec::new(),
    };
    let base = BohrSet::coordinate(n, DELTA0)?;
    for g in &base.gamma {
        let flat = g.iter().fold(0usize, |acc, &m| {
            acc * res + m.rem_euclid(res as i64) as usize
        });
        gamma.add(f, flat);
    }
    let mut masks = vec![gamma.mask.clone()];
    let mut lists = vec![gamma.list.clone()];
    let mut nus: Vec<Vec<Complex64>> = Vec::new();
    let mut levels: Vec<Level> = Vec::new();
    let mut delta = DELTA0;
    let mut eta = f64::NAN;

    let level_for = |bohr: &BohrSet, eta: f64| {
        let (d, delta) = (bohr.d(), bohr.delta);
        let log_rho = eps.ln() + d as f64 * (delta / 4.0).ln() - 2f64.ln();
        let log_delta_tilde = log_rho + delta.ln();
        let kappa_value = kappa.eval(eps, 1.0 / d as f64, log_delta_tilde.exp());
        Level {
            d,
            delta,
            eta,
            log_delta_tilde,
            kappa: kappa_value,
            resolved: bohr.resolved_by(res),
        }
    };

    let mut selected = None;
    for i in 0..=cap + 2 {
        // Level i from Γᵢ.
        let bohr = BohrSet {
            n,
            gamma: lists[i].clone(),
            delta,
        };
        let level = level_for(&bohr, eta);
        let nu = TorusFunction {
            n,
            res,
            origin: 0.0,
            values: mollifier_values(&bohr, res),
        };
        nus.push(nu.coefficients());
        let next = SCHEDULE_C * level.kappa.min(eps * eps);
        levels.push(level);
        if i >= 2 {
            let j = i - 2;
            let gap: f64 = (0..total)
                .filter(|&m| masks[i][m] && !masks[j][m])
                .map(|m| energy[m])
                .sum();
            if gap <= eps * eps / 2.0 {
                selected = Some(j);
                break;
            }
        }
        // Γ_{i+1}.
        delta = next;
        eta = next;
        for m in 0..total {
            if gamma.mask[m] {
                continue;
            }
            if fc[m].norm() >= eta || nus.iter().any(|nc| nc[m].norm() >= eta) {
                gamma.add(f, m);
            }
        }
        masks.push(gamma.mask.clone());
        lists.push(gamma.list.clone());
    }
    let i = selected
        .ok_or_else(|| Error::Resource("no spectral gap found within the Tchebychev cap".into()))?;

    let g1: Vec<Complex64> = fc.iter().zip(&nus[i]).map(|(a, b)| a * b).collect();
    let g2: Vec<Complex64> = fc.iter().zip(&nus[i + 1]).map(|(a, b)| a * b).collect();
    let f1 = TorusFunction::from_coefficients(n, res, f.origin, &g1);
    let smooth2 = TorusFunction::from_coefficients(n, res, f.origin, &g2);
    let f2 = smooth2.combine(1.0, &f1, -1.0);
    let f3 = f.combine(1.0, &smooth2, -1.0);
    let f3c: Vec<Complex64> = fc
        .iter()
        .zip(&nus[i + 1])
        .map(|(a, b)| a * (Complex64::new(1.0, 0.0) - b))
        .collect();
    let fourier_sup = f3c.iter().map(|c| c.norm()).fold(0.0, f64::max);

    let level = &levels[i];
    let bohr = BohrSet {
        n,
        gamma: lists[i].clone(),
        delta: level.log_delta_tilde.exp(),
    };
    let (shifts, rejection_hits) = sample_bohr(&bohr, opts);
    let ap_sup = par::map_slice(&shifts, |t| {
        let moved = f1.shift_from(&g1, t);
        moved
            .values
            .iter()
            .zip(&f1.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    })
    .into_iter()
    .fold(0.0, f64::max);

    let half_sup = half_lattice_sup(&f3);
    let periodization_ratio = (fourier_sup > 0.0).then(|| half_sup / fourier_sup);
    let resolved = levels[..=i + 1].iter().all(|l| l.resolved);
    Ok(RegDecomposition {
        achieved: Achieved {
            ap_sup,
            l2: f2.l2(),
            fourier_sup,
        },
        kappa_bound: level.kappa,
        f1,
        f2,
        f3,
        bohr,
        eps,
        kappa_id: kappa.id().to_string(),
        iterations: i,
        levels,
        periodization_ratio,
        rejection_hits,
        support_ok,
        resolved,
    })
}

/// Shifts in `B`: rejection sampling on the torus, topped up from the box
/// `|t|∞ ≤ δ/max‖ξ‖₁`, which lies inside `B`.
fn sample_bohr(bohr: &BohrSet, opts: &RegOptions) -> (Vec<Vec<f64>>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = Vec::with_capacity(opts.ap_samples);
    for _ in 0..opts.max_tries {
        if out.len() == opts.ap_samples {
            break;
        }
        let t: Vec<f64> = (0..bohr.n).map(|_| rng.gen::<f64>() - 0.5).collect();
        if bohr.contains(&t) {
            out.push(t);
        }
    }
    let hits = out.len();
    let reach = if bohr.max_l1() > 0.0 {
        (bohr.delta / bohr.max_l1()).min(0.5)
    } else {
        0.5
    };
    while out.len() < opts.ap_samples {
        out.push(
            (0..bohr.n)
                .map(|_| reach * (2.0 * rng.gen::<f64>() - 1.0))
                .collect(),
        );
    }
    (out, hits)
}

/// `sup |f̂(ξ)|` over `ξ ∈ (½ℤ)ⁿ`, treating `f` as zero outside `[−1/2, 1/2]ⁿ`.
fn half_lattice_sup(f: &TorusFunction) -> f64 {
    let (n, res) = (f.n, f.res);
    let side = 2 * res;
    let mut data = vec![Complex64::new(0.0, 0.0); side.pow(n as u32)];
    let mut idx = vec![0; n];
    for (flat, &v) in f.values.iter().enumerate() {
        unflatten(flat, res, n, &mut idx);
        let at = idx.iter().fold(0usize, |acc, &i| acc * side + i + res / 2);
        data[at] = Complex64::new(v, 0.0);
    }
    fftn(&mut data, &vec![side; n], false);
    data.iter().map(|c| c.norm()).fold(0.0, f64::max) / f.values.len() as f64
}

/// How `diophantine_density` reads its range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DiophantineMode {
    /// Integers `|n| ≤ n_max`.
    Integer { n_max: u64 },
    /// Reals in `[−c, c]` on a midpoint grid with `nodes` points.
    Real { c: f64, nodes: usize },
}

/// Fraction of the range where `‖yʲ ξ_j‖ ≤ ε` for every `j = 1..ℓ`, with
/// `‖·‖` the max-coordinate distance to the integer lattice.
///
/// Both modes return a proportion in `[0, 1]`: integer counts are divided by
/// `2N + 1` and real measures by `2c`.
pub fn diophantine_density(mode: DiophantineMode, xi: &[Vec<f64>], eps: f64) -> Result<f64> {
    if xi.is_empty() {
        return param("at least one frequency vector is required");
    }
    if !(eps > 0.0 && eps < 0.5) {
        return param(format!("eps {eps} outside (0, 1/2)"));
    }
    let good = |y: f64| {
        xi.iter().enumerate().all(|(j, v)| {
            let p = y.powi(j as i32 + 1);
            v.iter().all(|c| torus_dist(p * c) <= eps)
        })
    };
    Ok(match mode {
        DiophantineMode::Integer { n_max } => {
            let span = 2 * n_max as usize + 1;
            let count = par::sum_range(span, |i| {
                if good(i as f64 - n_max as f64) {
                    1.0
                } else {
                    0.0
                }
            });
            count / span as f64
        }
        DiophantineMode::Real { c, nodes } => {
            if !(c > 0.0) || nodes == 0 {
                return param("real mode needs c > 0 and at least one node");
            }
            let h = 2.0 * c / nodes as f64;
            let count = par::sum_range(nodes, |i| {
                if good(-c + (i as f64 + 0.5) * h) {
                    1.0
                } else {
                    0.0
                }
            });
            count / nodes as f64
        }
    })
}

fn in_eset(spec: &PatternSpec, bohr: &BohrSet, y: &[f64]) -> bool {
    spec.shifts_unchecked(y).iter().all(|s| bohr.contains(s))
}

/// Monte Carlo `|E|` for `E = {y ∈ [−c, c]^m : φ₁(y), …, φ_k(y) ∈ B}`.
pub fn eset_measure(
    spec: &PatternSpec,
    bohr: &BohrSet,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    if bohr.n != spec.n() {
        return param("Bohr set and pattern live in different dimensions");
    }
    if samples == 0 {
        return param("at least one sample is required");
    }
    let c = spec.cutoff.support;
    let m = spec.m();
    let hits = monte_carlo_hits(m, samples, seed, |u| {
        let y: Vec<f64> = u.iter().map(|v| c * (2.0 * v - 1.0)).collect();
        in_eset(spec, bohr, &y)
    });
    Ok(Estimate::from_hits(hits, samples, (2.0 * c).powi(m as i32)))
}

/// Midpoint-grid `|E|` with `nodes` points per axis.
pub fn eset_grid(spec: &PatternSpec, bohr: &BohrSet, nodes: usize) -> Result<f64> {
    if bohr.n != spec.n() {
        return param("Bohr set and pattern live in different dimensions");
    }
    let (c, m) = (spec.cutoff.support, spec.m());
    let h = 2.0 * c / nodes as f64;
    let total = nodes.pow(m as u32);
    let hits = par::sum_range(total, |flat| {
        let mut idx = vec![0; m];
        unflatten(flat, nodes, m, &mut idx);
        let y: Vec<f64> = idx.iter().map(|&i| -c + (i as f64 + 0.5) * h).collect();
        if in_eset(spec, bohr, &y) {
            1.0
        } else {
            0.0
        }
    });
    Ok(hits * h.powi(m as i32))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AbscontReport {
    pub lambda_value: f64,
    pub tau: f64,
    /// `∫_E ψ`, estimated with the same draws as `|E|`.
    pub eset_weight: f64,
    pub eset: Estimate,
    /// Measured surrogate for the `O(ε)` loss: `k·ap·τ + (2^{k+1} − 1)·‖f₂‖₂`.
    pub error_term: f64,
    /// `(∫_E ψ)·(τ^{k+1} − error_term)`.
    pub chain_value: f64,
    pub decomposition: DecompositionSummary,
    pub dimension_gate: bool,
    pub positive: bool,
    /// `lambda_value ≥ chain_value − tolerance`.
    pub chain_holds: bool,
}

/// `Λ(f, …, f)` beside the regularity lower pathway restricted to `E`.
pub fn abscont_lower(
    spec: &PatternSpec,
    f: &GridFunction,
    tau: Option<f64>,
    eps: f64,
    kappa: &Kappa,
    opts: &RegOptions,
) -> Result<AbscontReport> {
    let torus = TorusFunction::from_grid(f)?;
    if torus.n != spec.n() {
        return param("f and the pattern live in different dimensions");
    }
    let measured_tau = torus.integral();
    if let Some(t) = tau {
        if (t - measured_tau).abs() > 1e-6_f64.max(1e-3 * t.abs()) {
            return param(format!("tau {t} does not match ∫f = {measured_tau}"));
        }
    }
    let dimension_gate = check_pattern_spec(spec, 0.5, 0.0).dimension_gate;
    let k = spec.k();
    let copies = vec![f.clone(); k + 1];
    let lambda_value = lambda_direct(spec, &copies, default_y_nodes(spec.m()))?.value;
    let dec = reg_decompose(&torus, eps, kappa, opts)?;

    let c = spec.cutoff.support;
    let m = spec.m();
    let samples: usize = 100_000;
    let volume = (2.0 * c).powi(m as i32);
    let blocks = samples.div_ceil(STREAM);
    let parts = par::map_range(blocks, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
        rng.set_stream(b as u64);
        let count = STREAM.min(samples - b * STREAM);
        let (mut hits, mut weight) = (0usize, 0.0);
        for _ in 0..count {
            let y: Vec<f64> = (0..m).map(|_| c * (2.0 * rng.gen::<f64>() - 1.0)).collect();
            if in_eset(spec, &dec.bohr, &y) {
                hits += 1;
                weight += spec.psi(&y);
            }
        }
        (hits, weight)
    });
    let hits: usize = parts.iter().map(|p| p.0).sum();
    let weight: f64 = parts.iter().map(|p| p.1).sum::<f64>() * volume / samples as f64;
    let eset = Estimate::from_hits(hits, samples, volume);
    let error_term = k as f64 * dec.achieved.ap_sup * measured_tau
        + ((1u64 << (k + 1)) - 1) as f64 * dec.achieved.l2;
    let chain_value = weight * (measured_tau.powi(k as i32 + 1) - error_term);
    let tolerance = 1e-9 + 1e-3 * lambda_value.abs();
    Ok(AbscontReport {
        lambda_value,
        tau: measured_tau,
        eset_weight: weight,
        eset,
        error_term,
        chain_value,
        decomposition: dec.summary(),
        dimension_gate,
        positive: lambda_value > 0.0,
        chain_holds: lambda_value >= chain_value - tolerance,
    })
}

/// Test functions on the torus shared by the test suites and the CLI.
pub mod fixtures {
    use super::TorusFunction;
    use crate::bump::bump;

    /// `∏ bump(9x_a)`, scaled to peak at 0.9.
    pub fn smooth_bump(n: usize, res: usize) -> TorusFunction {
        TorusFunction::from_fn(n, res, |x| {
            x.iter().map(|v| bump(9.0 * v)).product::<f64>() * 0.9 / (-1.0f64).exp().powi(n as i32)
        })
        .expect("valid fixture grid")
    }

    /// Sub-box `[−1/16, 1/16]ⁿ` with linear ramps of width 1/32.
    pub fn smoothed_box(n: usize, res: usize) -> TorusFunction {
        TorusFunction::from_fn(n, res, |x| {
            x.iter()
                .map(|v| ((1.0 / 16.0 + 1.0 / 32.0 - v.abs()) * 32.0).clamp(0.0, 1.0))
                .product()
        })
        .expect("valid fixture grid")
    }
}
