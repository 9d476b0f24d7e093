//! Discretized probability measures: construction, mollification and ball-decay certificates.

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bump::{bump, Profile};
use crate::error::{param, Error, Result};
use crate::fft::fftn;
use crate::grid::{flatten, unflatten, GridFunction};

/// Half-side of the cube holding fractal supports.
pub const SUPPORT_HALFWIDTH: f64 = 1.0 / 16.0;

/// Default half-side (and bump radius) for smooth test measures.
pub const SMOOTH_HALFWIDTH: f64 = 0.5;

/// Atomic measure with all mass of a cell at its centre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMeasure {
    pub n: usize,
    pub halfwidth: f64,
    pub res: usize,
    pub mass: Vec<f64>,
    pub seed: u64,
    pub target_dimension: Option<f64>,
}

impl GridMeasure {
    pub fn new(n: usize, res: usize, halfwidth: f64, mass: Vec<f64>) -> Result<Self> {
        let mu = Self {
            n,
            halfwidth,
            res,
            mass,
            seed: 0,
            target_dimension: None,
        };
        mu.validate()?;
        Ok(mu)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > 8 {
            return param(format!("dimension {} outside 1..=8", self.n));
        }
        if !self.res.is_power_of_two() {
            return param(format!("res {} is not a power of two", self.res));
        }
        if self.mass.len() != self.res.pow(self.n as u32) {
            return param("mass array length does not match res^n");
        }
        if self.mass.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return param("masses must be finite and non-negative");
        }
        Ok(())
    }

    /// Unit mass in the cell just above the origin on every axis.
    pub fn point_mass(n: usize, res: usize, halfwidth: f64) -> Self {
        let mut mass = vec![0.0; res.pow(n as u32)];
        mass[flatten(&vec![res / 2; n], res)] = 1.0;
        Self {
            n,
            halfwidth,
            res,
            mass,
            seed: 0,
            target_dimension: Some(0.0),
        }
    }

    pub fn uniform(n: usize, res: usize, halfwidth: f64) -> Self {
        let len = res.pow(n as u32);
        Self {
            n,
            halfwidth,
            res,
            mass: vec![1.0 / len as f64; len],
            seed: 0,
            target_dimension: Some(n as f64),
        }
    }

    pub fn total_mass(&self) -> f64 {
        crate::par::pairwise_sum(&self.mass)
    }

    pub fn cell_width(&self) -> f64 {
        2.0 * self.halfwidth / self.res as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_width().powi(self.n as i32)
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        self.grid_shell().center(flat)
    }

    fn grid_shell(&self) -> GridFunction {
        GridFunction {
            n: self.n,
            res: self.res,
            halfwidth: self.halfwidth,
            values: Vec::new(),
        }
    }

    /// Density `mass / cell volume` on the same grid.
    pub fn density(&self) -> GridFunction {
        let v = self.cell_volume();
        GridFunction {
            n: self.n,
            res: self.res,
            halfwidth: self.halfwidth,
            values: self.mass.iter().map(|m| m / v).collect(),
        }
    }

    /// Atomic measure from density samples (midpoint masses).
    pub fn from_density(f: &GridFunction) -> Result<Self> {
        let v = f.cell_volume();
        Self::new(
            f.n,
            f.res,
            f.halfwidth,
            f.values.iter().map(|x| x * v).collect(),
        )
    }

    /// Flat indices of cells carrying positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.mass.len())
            .filter(|&i| self.mass[i] > 0.0)
            .collect()
    }
}

/// Parameters of the seeded random Cantor construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CantorSpec {
    pub n: usize,
    pub branching: usize,
    pub keep: usize,
    pub generations: u32,
    pub seed: u64,
    pub res: Option<usize>,
    pub halfwidth: f64,
}

impl CantorSpec {
    pub fn new(n: usize, branching: usize, keep: usize, generations: u32, seed: u64) -> Self {
        Self {
            n,
            branching,
            keep,
            generations,
            seed,
            res: None,
            halfwidth: SUPPORT_HALFWIDTH,
        }
    }

    pub fn with_res(mut self, res: usize) -> Self {
        self.res = Some(res);
        self
    }

    pub fn dimension(&self) -> f64 {
        (self.keep as f64).ln() / (self.branching as f64).ln()
    }
}

pub fn build_cantor_measure(spec: &CantorSpec) -> Result<GridMeasure> {
    let n = spec.n;
    let m = spec.branching;
    if n == 0 || n > 8 {
        return param("dimension must lie in 1..=8");
    }
    if m < 2 {
        return param("branching must be at least 2");
    }
    if spec.generations < 1 {
        return param("at least one generation is required");
    }
    let children = m
        .checked_pow(n as u32)
        .ok_or_else(|| Error::Parameter("branching^n overflows".into()))?;
    if spec.keep < 1 || spec.keep > children {
        return param(format!("keep {} outside [1, {}]", spec.keep, children));
    }
    let finest = m
        .checked_pow(spec.generations)
        .ok_or_else(|| Error::Parameter("branching^generations overflows".into()))?;
    let res = spec.res.unwrap_or(finest);
    if res < finest {
        return Err(Error::Resolution(format!(
            "res {res} cannot resolve {} generations (needs {finest})",
            spec.generations
        )));
    }
    if !res.is_power_of_two() || !res.is_multiple_of(finest) {
        return param(format!(
            "res {res} must be a power of two divisible by {finest}"
        ));
    }
    if res.checked_pow(n as u32).is_none_or(|c| c > 1 << 28) {
        return Err(Error::Resource(format!(
            "grid of {res}^{n} cells exceeds the memory budget"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut cells: Vec<Vec<usize>> = vec![vec![0; n]];
    let mut digit = vec![0usize; n];
    for _ in 0..spec.generations {
        let mut next = Vec::with_capacity(cells.len() * spec.keep);
        for parent in &cells {
            let mut picks = sample(&mut rng, children, spec.keep).into_vec();
            picks.sort_unstable();
            for p in picks {
                unflatten(p, m, n, &mut digit);
                next.push(
                    parent
                        .iter()
                        .zip(&digit)
                        .map(|(c, d)| c * m + d)
                        .collect::<Vec<_>>(),
                );
            }
        }
        next.sort();
        cells = next;
    }

    let sub = res / finest;
    let sub_cells = sub.pow(n as u32);
    let cell_mass = 1.0 / (cells.len() as f64 * sub_cells as f64);
    let mut mass = vec![0.0; res.pow(n as u32)];
    let mut idx = vec![0usize; n];
    for cell in &cells {
        for s in 0..sub_cells {
            unflatten(s, sub, n, &mut digit);
            for a in 0..n {
                idx[a] = cell[a] * sub + digit[a];
            }
            mass[flatten(&idx, res)] = cell_mass;
        }
    }
    Ok(GridMeasure {
        n,
        halfwidth: spec.halfwidth,
        res,
        mass,
        seed: spec.seed,
        target_dimension: Some(spec.dimension()),
    })
}

/// Sampled smooth density filling `[-halfwidth, halfwidth]^n`, normalized to mass one.
pub fn build_smooth_measure(
    n: usize,
    profile: Profile,
    res: usize,
    halfwidth: f64,
) -> Result<GridMeasure> {
    if !res.is_power_of_two() {
        return param("res must be a power of two");
    }
    match profile {
        Profile::DeltaLike => Ok(GridMeasure::point_mass(n, res, halfwidth)),
        Profile::GaussianBump => {
            let f = GridFunction::from_fn(n, res, halfwidth, |x| {
                x.iter().map(|t| bump(t / halfwidth)).product()
            });
            let total: f64 = crate::par::pairwise_sum(&f.values);
            let mut mu = GridMeasure::new(
                n,
                res,
                halfwidth,
                f.values.iter().map(|v| v / total).collect(),
            )?;
            mu.target_dimension = Some(n as f64);
            Ok(mu)
        }
    }
}

/// Mollifier `φ_ε` (and dilation `L` for the transference bump).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub profile: String,
    pub eps: f64,
    pub dilation: f64,
}

impl MollifierSpec {
    pub fn new(profile: Profile, eps: f64) -> Self {
        Self {
            profile: profile.name().into(),
            eps,
            dilation: 1.0,
        }
    }

    pub fn validate(&self) -> Result<Profile> {
        let p: Profile = self.profile.parse()?;
        if !(self.eps > 0.0) {
            return param("mollifier eps must be positive");
        }
        if !(self.dilation >= 1.0) {
            return param("mollifier dilation must be at least 1");
        }
        Ok(p)
    }
}

/// One-dimensional weights of the sampled profile at integer cell offsets, summing to one.
pub fn sampled_kernel(profile: Profile, eps: f64, cell: f64) -> Vec<f64> {
    match profile {
        Profile::DeltaLike => vec![1.0],
        Profile::GaussianBump => {
            let reach = ((eps / cell) * (1.0 - 1e-12)).ceil() as isize - 1;
            let reach = reach.max(0);
            let raw: Vec<f64> = (-reach..=reach)
                .map(|k| bump(k as f64 * cell / eps))
                .collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / total).collect()
        }
    }
}

/// `μ * φ_ε` on the grid; the box doubles (same cell width) while the result would leak out.
pub fn mollify(mu: &GridMeasure, spec: &MollifierSpec) -> Result<GridMeasure> {
    let profile = spec.validate()?;
    let w = mu.cell_width();
    if spec.eps < w * (1.0 - 1e-12) {
        return Err(Error::Resolution(format!(
            "eps {} below cell width {}",
            spec.eps, w
        )));
    }
    let kernel = sampled_kernel(profile, spec.eps, w);
    let reach = kernel.len() / 2;
    let n = mu.n;

    let mut cur = mu.clone();
    while touches_boundary(&cur, reach) {
        cur = double_box(&cur);
    }
    let res = cur.res;
    let mut data = cur.mass.clone();
    let mut idx = vec![0usize; n];
    for axis in 0..n {
        let mut out = vec![0.0; data.len()];
        let stride = res.pow((n - 1 - axis) as u32);
        for (flat, &v) in data.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            unflatten(flat, res, n, &mut idx);
            let i = idx[axis] as isize;
            for (k, &kv) in kernel.iter().enumerate() {
                let j = i + k as isize - reach as isize;
                if j >= 0 && (j as usize) < res {
                    let target = (flat as isize + (j - i) * stride as isize) as usize;
                    out[target] += v * kv;
                }
            }
        }
        data = out;
    }
    Ok(GridMeasure { mass: data, ..cur })
}

fn touches_boundary(mu: &GridMeasure, reach: usize) -> bool {
    if reach == 0 {
        return false;
    }
    let mut idx = vec![0usize; mu.n];
    mu.mass.iter().enumerate().any(|(flat, &m)| {
        if m == 0.0 {
            return false;
        }
        unflatten(flat, mu.res, mu.n, &mut idx);
        idx.iter().any(|&i| i < reach || i + reach >= mu.res)
    })
}

fn double_box(mu: &GridMeasure) -> GridMeasure {
    let n = mu.n;
    let res = mu.res * 2;
    let offset = mu.res / 2;
    let mut mass = vec![0.0; res.pow(n as u32)];
    let mut idx = vec![0usize; n];
    for (flat, &m) in mu.mass.iter().enumerate() {
        unflatten(flat, mu.res, n, &mut idx);
        for i in idx.iter_mut() {
            *i += offset;
        }
        mass[flatten(&idx, res)] = m;
    }
    GridMeasure {
        res,
        halfwidth: mu.halfwidth * 2.0,
        mass,
        ..mu.clone()
    }
}

/// Ball-condition certificate `μ[B(x,r)] ≤ D r^α`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallDecayReport {
    pub alpha: f64,
    pub d_const: f64,
    /// Dyadic radii from the box side down to one cell width.
    pub radii: Vec<f64>,
    /// Largest ball mass at each radius.
    pub max_ball_mass: Vec<f64>,
    /// Largest `μ[B(x,r)] r^{-α}` at each radius.
    pub ratios: Vec<f64>,
    pub worst_ratio: f64,
    /// Least-squares slope of `log max_x μ[B(x,r)]` against `log r`.
    pub fitted_alpha: f64,
    /// Set when the smallest radii show the ball condition failing at exponent α.
    pub small_radius_blowup: bool,
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return f64::NAN;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Masses of all Euclidean balls of radius `r` centred at the cells.
pub fn ball_masses(mu: &GridMeasure, r: f64) -> Vec<f64> {
    let n = mu.n;
    let res = mu.res;
    let p = 2 * res;
    let dims = vec![p; n];
    let total = p.pow(n as u32);
    let reach2 = (r / mu.cell_width()).powi(2) * (1.0 + 1e-12) + 1e-12;

    let mut signal = vec![Complex64::new(0.0, 0.0); total];
    let mut idx = vec![0usize; n];
    for (flat, &m) in mu.mass.iter().enumerate() {
        unflatten(flat, res, n, &mut idx);
        signal[flatten(&idx, p)].re = m;
    }
    fftn(&mut signal, &dims, false);

    let mut kernel = vec![Complex64::new(0.0, 0.0); total];
    for (flat, k) in kernel.iter_mut().enumerate() {
        unflatten(flat, p, n, &mut idx);
        let d2: f64 = idx
            .iter()
            .map(|&q| {
                let d = if q < res {
                    q as f64
                } else {
                    q as f64 - p as f64
                };
                d * d
            })
            .sum();
        if d2 <= reach2 {
            k.re = 1.0;
        }
    }
    fftn(&mut kernel, &dims, false);
    for (s, k) in signal.iter_mut().zip(&kernel) {
        *s *= *k;
    }
    fftn(&mut signal, &dims, true);
    let norm = 1.0 / total as f64;
    (0..mu.mass.len())
        .map(|flat| {
            unflatten(flat, res, n, &mut idx);
            (signal[flatten(&idx, p)].re * norm).max(0.0)
        })
        .collect()
}

/// Radii below this many cells see the grid, not the measure.
const QUANTIZED_RADII: f64 = 2.0;

pub fn certify_ball_decay(mu: &GridMeasure, alpha: f64) -> Result<BallDecayReport> {
    if !(alpha > 0.0 && alpha <= mu.n as f64) {
        return param(format!("alpha {alpha} outside (0, {}]", mu.n));
    }
    let w = mu.cell_width();
    let mut radii = Vec::new();
    let mut r = 2.0 * mu.halfwidth;
    while r >= w * (1.0 - 1e-12) {
        radii.push(r);
        r /= 2.0;
    }
    let max_ball_mass: Vec<f64> = crate::par::map_slice(&radii, |&r| {
        ball_masses(mu, r).into_iter().fold(0.0, f64::max)
    });
    let ratios: Vec<f64> = radii
        .iter()
        .zip(&max_ball_mass)
        .map(|(r, m)| m * r.powf(-alpha))
        .collect();
    let worst_ratio = ratios.iter().cloned().fold(0.0, f64::max);

    let total = mu.total_mass();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (r, m) in radii.iter().zip(&max_ball_mass) {
        if *m < total * (1.0 - 1e-9) && *m > 0.0 && *r >= QUANTIZED_RADII * w * (1.0 - 1e-12) {
            xs.push(r.ln());
            ys.push(m.ln());
        }
    }
    if xs.len() < 2 {
        xs = radii.iter().map(|r| r.ln()).collect();
        ys = max_ball_mass.iter().map(|m| m.max(1e-300).ln()).collect();
    }
    let fitted_alpha = fit_slope(&xs, &ys);
    let resolved = radii
        .iter()
        .take_while(|&&r| r >= QUANTIZED_RADII * w * (1.0 - 1e-12))
        .count();
    let tail = resolved.min(3);
    let local = if tail >= 2 {
        let k = resolved - tail;
        fit_slope(
            &radii[k..resolved]
                .iter()
                .map(|r| r.ln())
                .collect::<Vec<_>>(),
            &max_ball_mass[k..resolved]
                .iter()
                .map(|m| m.max(1e-300).ln())
                .collect::<Vec<_>>(),
        )
    } else {
        alpha
    };
    Ok(BallDecayReport {
        alpha,
        d_const: worst_ratio,
        radii,
        max_ball_mass,
        ratios,
        worst_ratio,
        fitted_alpha,
        small_radius_blowup: local < 0.5 * alpha,
    })
}
