//! Singular-integral bounds: exponent algebra, fiber moments, the two-step Hölder chain,
//! the main `L^s` bound and the generalized Hölder inequality of the linear case.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::forms::Kernel;
use crate::fourier::FourierTable;
use crate::grid::unflatten;
use crate::patterns::MatrixSystem;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderParams {
    pub k: f64,
    pub s: f64,
    pub tau: f64,
    pub p: f64,
    pub p_prime: f64,
}

impl HolderParams {
    /// Largest defect among the conjugacy, the two `s` identities and `(k+1)/s = k/p + 1/p′`.
    pub fn identity_defect(&self) -> f64 {
        let HolderParams {
            k,
            s,
            tau,
            p,
            p_prime,
        } = *self;
        [
            (1.0 / p + 1.0 / p_prime - 1.0).abs(),
            ((k + 1.0) / k * p * tau - s).abs(),
            ((k + 1.0) * p_prime * (1.0 - tau) - s).abs(),
            ((k + 1.0) / s - (k / p + 1.0 / p_prime)).abs(),
            (1.0 / p_prime - (k - (k + 1.0) / s) / (k - 1.0)).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// The unique `(τ, p)` turning the Hölder chain into a single `L^s` bound.
pub fn holder_params(k: usize, s: f64) -> Result<HolderParams> {
    if k < 2 {
        return param("k must be at least 2");
    }
    let kf = k as f64;
    let lower = 1.0 + 1.0 / kf;
    if s <= lower {
        return param(format!("s = {s} must exceed 1 + 1/k = {lower}"));
    }
    if s >= kf + 1.0 {
        return param(format!("s = {s} must be below k + 1 = {}", kf + 1.0));
    }
    let inv_p = ((kf + 1.0) / s - 1.0) / (kf - 1.0);
    let inv_pp = (kf - (kf + 1.0) / s) / (kf - 1.0);
    let tau = kf / (kf - 1.0) * (1.0 - s / (kf + 1.0));
    let out = HolderParams {
        k: kf,
        s,
        tau,
        p: 1.0 / inv_p,
        p_prime: 1.0 / inv_pp,
    };
    debug_assert!(out.identity_defect() < 1e-10);
    Ok(out)
}

/// `m′ > 2kn − 2(k+1)n/s`.
pub fn main_bound_hypothesis(n: usize, k: usize, m_prime: f64, s: f64) -> bool {
    let (n, k) = (n as f64, k as f64);
    m_prime > 2.0 * k * n - 2.0 * (k + 1.0) * n / s
}

/// Largest `ε` with `m′ = (1−ε)m`, `s = (2+δ)/(1−ε)` meeting the main-bound hypothesis and `s < k+1`.
pub fn largest_admissible_eps(n: usize, k: usize, m: usize, delta: f64) -> Option<f64> {
    let (nf, kf, mf) = (n as f64, k as f64, m as f64);
    let hyp = 1.0 - 2.0 * kf * nf / (mf + 2.0 * (kf + 1.0) * nf / (2.0 + delta));
    let range = 1.0 - (2.0 + delta) / (kf + 1.0);
    let eps = hyp.min(range);
    (eps > 0.0).then_some(eps)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberMoment {
    pub j: usize,
    pub q: f64,
    /// Truncated integral plus the tail bound.
    pub value: f64,
    pub truncated: f64,
    pub tail: f64,
    pub radius: f64,
    /// `(V(4R) − V(2R)) / (V(2R) − V(R))` of the truncated values.
    pub growth_ratio: f64,
    pub divergent: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberConfig {
    pub radius: f64,
    pub face_nodes: Option<usize>,
    /// Simpson intervals per dyadic radial panel.
    pub panel_nodes: usize,
}

impl Default for FiberConfig {
    fn default() -> Self {
        Self {
            radius: 64.0,
            face_nodes: None,
            panel_nodes: 64,
        }
    }
}

/// Growth ratio above which the truncated integrals are declared divergent.
pub const DIVERGENCE_RATIO: f64 = 0.85;

/// Orthonormal basis of the null space of `rows`, by Gram–Schmidt over the standard basis.
fn null_basis(rows: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let d = rows.ncols();
    let mut span: Vec<DVector<f64>> = Vec::new();
    for r in 0..rows.nrows() {
        let mut v = rows.row(r).transpose();
        for b in &span {
            let c = b.dot(&v);
            v -= b * c;
        }
        let norm = v.norm();
        if norm > 1e-12 {
            span.push(v / norm);
        }
    }
    let fixed = span.len();
    for i in 0..d {
        let mut v = DVector::zeros(d);
        v[i] = 1.0;
        for b in &span {
            let c = b.dot(&v);
            v -= b * c;
        }
        let norm = v.norm();
        if norm > 1e-9 {
            span.push(v / norm);
        }
    }
    span.split_off(fixed)
}

fn constraint(n: usize, k: usize, j: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, k * n, |a, col| {
        let (block, axis) = (col / n, col % n);
        if axis != a {
            0.0
        } else if j == 0 {
            -1.0
        } else if block == j - 1 {
            1.0
        } else {
            0.0
        }
    })
}

fn stacked_transpose(system: &MatrixSystem) -> DMatrix<f64> {
    system.stacked().transpose()
}

/// Simpson rule of `g` on `[a, b]` with an even number of intervals.
fn simpson(a: f64, b: f64, intervals: usize, g: impl Fn(f64) -> f64) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut s = g(a) + g(b);
    for i in 1..n {
        s += g(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `∫_{|u|∞ ≤ R} (1 + √(|Bu|² + g²))^{−q} du` on the cube boundary parametrization.
fn cube_integral(
    b: &DMatrix<f64>,
    gamma2: f64,
    q: f64,
    radius: f64,
    face_nodes: usize,
    panel_nodes: usize,
) -> f64 {
    let d = b.ncols();
    let per_face = face_nodes.pow(d as u32 - 1);
    let face_area = (2.0 / face_nodes as f64).powi(d as i32 - 1);
    let mut panels = vec![(0.0, 1.0f64.min(radius))];
    let mut lo = 1.0;
    while lo < radius {
        let hi = (2.0 * lo).min(radius);
        panels.push((lo, hi));
        lo = hi;
    }
    let parts = crate::par::map_range(2 * d * per_face, |job| {
        let face = job / per_face;
        let (axis, sign) = (face / 2, if face.is_multiple_of(2) { 1.0 } else { -1.0 });
        let mut idx = vec![0usize; d.saturating_sub(1)];
        unflatten(job % per_face, face_nodes, d - 1, &mut idx);
        let mut v = DVector::zeros(d);
        let mut c = 0;
        for a in 0..d {
            if a == axis {
                v[a] = sign;
            } else {
                v[a] = -1.0 + (idx[c] as f64 + 0.5) * 2.0 / face_nodes as f64;
                c += 1;
            }
        }
        let slope2 = (b * &v).norm_squared();
        let g = |rho: f64| {
            (1.0 + (rho * rho * slope2 + gamma2).sqrt()).powf(-q) * rho.powi(d as i32 - 1)
        };
        panels
            .iter()
            .map(|&(a, bb)| simpson(a, bb, panel_nodes, g))
            .sum::<f64>()
    });
    crate::par::pairwise_sum(&parts) * face_area
}

/// `∫_{ξ_j = η} (1 + |𝐀ᵀξ + θ|)^{−q} dσ(ξ)` with `ξ₀ = −(ξ₁+⋯+ξ_k)`.
pub fn fiber_moment(
    system: &MatrixSystem,
    j: usize,
    q: f64,
    eta: &[f64],
    theta: &[f64],
    cfg: &FiberConfig,
) -> Result<FiberMoment> {
    let (n, m, k) = (system.n, system.m, system.k);
    if j > k || eta.len() != n || theta.len() != m {
        return param("fiber index or point dimensions out of range");
    }
    if !(q > 0.0) {
        return param("q must be positive");
    }
    let dprime = (k - 1) * n;
    let at = stacked_transpose(system);
    let basis = null_basis(&constraint(n, k, j));
    let rot = DMatrix::from_columns(&basis);
    let mut base = DVector::zeros(k * n);
    for a in 0..n {
        if j == 0 {
            for i in 0..k {
                base[i * n + a] = -eta[a] / k as f64;
            }
        } else {
            base[(j - 1) * n + a] = eta[a];
        }
    }
    let c = &at * &base + DVector::from_column_slice(theta);
    if dprime == 0 {
        let v = (1.0 + c.norm()).powf(-q);
        return Ok(FiberMoment {
            j,
            q,
            value: v,
            truncated: v,
            tail: 0.0,
            radius: 0.0,
            growth_ratio: 0.0,
            divergent: false,
        });
    }
    let bmat = &at * &rot;
    let svd = bmat.clone().svd(true, true);
    let top = svd.singular_values.max();
    let sigma_min = if svd.singular_values.len() < dprime {
        0.0
    } else {
        svd.singular_values.min()
    };
    let gamma2 = match svd.solve(&c, 1e-12 * top.max(1e-300)) {
        Ok(shift) => (&c - &bmat * shift).norm_squared(),
        Err(_) => c.norm_squared(),
    };
    let face_nodes = cfg.face_nodes.unwrap_or(match dprime {
        1 | 2 => 32,
        3 => 16,
        _ => 6,
    });
    let r = cfg.radius;
    let v1 = cube_integral(&bmat, gamma2, q, r, face_nodes, cfg.panel_nodes);
    let v2 = cube_integral(&bmat, gamma2, q, 2.0 * r, face_nodes, cfg.panel_nodes);
    let v4 = cube_integral(&bmat, gamma2, q, 4.0 * r, face_nodes, cfg.panel_nodes);
    let growth_ratio = if v2 > v1 { (v4 - v2) / (v2 - v1) } else { 0.0 };
    let injective = sigma_min > 1e-10 * top;
    let divergent = !injective || growth_ratio > DIVERGENCE_RATIO || q <= dprime as f64;
    let d = dprime as f64;
    let tail = if divergent {
        f64::INFINITY
    } else {
        let area = 2.0 * d * 2f64.powi(dprime as i32 - 1);
        area * sigma_min.powf(-d) * (1.0 + sigma_min * r).powf(d - q) / (q - d)
    };
    Ok(FiberMoment {
        j,
        q,
        value: v1 + tail,
        truncated: v1,
        tail,
        radius: r,
        growth_ratio,
        divergent,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberMomentReport {
    pub q: f64,
    /// Max over fibers `j` and sampled `(η, θ)`.
    pub sup_value: f64,
    pub min_value: f64,
    pub argmax_fiber: usize,
    pub samples: usize,
    pub divergent: bool,
}

impl FiberMomentReport {
    /// `(max − min)/max` across the samples.
    pub fn variation(&self) -> f64 {
        (self.sup_value - self.min_value) / self.sup_value
    }
}

pub fn fiber_moment_sup(
    system: &MatrixSystem,
    q: f64,
    etas: &[Vec<f64>],
    thetas: &[Vec<f64>],
    cfg: &FiberConfig,
) -> Result<FiberMomentReport> {
    let mut rep = FiberMomentReport {
        q,
        sup_value: 0.0,
        min_value: f64::INFINITY,
        argmax_fiber: 0,
        samples: 0,
        divergent: false,
    };
    for j in 0..=system.k {
        for eta in etas {
            for theta in thetas {
                let f = fiber_moment(system, j, q, eta, theta, cfg)?;
                rep.samples += 1;
                rep.divergent |= f.divergent;
                if f.value > rep.sup_value {
                    rep.sup_value = f.value;
                    rep.argmax_fiber = j;
                }
                rep.min_value = rep.min_value.min(f.value);
            }
        }
    }
    Ok(rep)
}

/// Every `(ξ₀, ξ₁, …, ξ_k)` of a common window with `ξ₀ = −Σξ_j` inside it.
#[derive(Clone, Debug)]
pub struct DualLattice {
    pub n: usize,
    pub k: usize,
    pub xi_max: usize,
    pub spacing: f64,
    /// Flat table indices `[i₀, i₁, …, i_k]` per configuration.
    pub configs: Vec<Vec<usize>>,
    /// `ξ₁…ξ_k` per configuration.
    pub points: Vec<Vec<f64>>,
}

/// Configurations above this count are refused.
pub const LATTICE_BUDGET: usize = 20_000_000;

impl DualLattice {
    pub fn new(n: usize, k: usize, xi_max: usize, spacing: f64) -> Result<Self> {
        let side = 2 * xi_max + 1;
        let block = side.pow(n as u32);
        let total = block.checked_pow(k as u32).unwrap_or(usize::MAX);
        if total > LATTICE_BUDGET {
            return Err(crate::Error::Resource(format!(
                "{total} lattice configurations exceed {LATTICE_BUDGET}"
            )));
        }
        let probe =
            FourierTable::constant(n, xi_max, spacing, num_complex::Complex64::new(0.0, 0.0));
        let mut configs = Vec::new();
        let mut points = Vec::new();
        let mut choice = vec![0usize; k];
        let mut lat = vec![0i64; n];
        for flat in 0..total {
            unflatten(flat, block, k, &mut choice);
            let mut sum = vec![0i64; n];
            let mut xi = Vec::with_capacity(k * n);
            for &c in &choice {
                probe.lattice_into(c, &mut lat);
                for a in 0..n {
                    sum[a] += lat[a];
                    xi.push(lat[a] as f64 * spacing);
                }
            }
            let neg: Vec<i64> = sum.iter().map(|s| -s).collect();
            if let Some(i0) = probe.index_of(&neg) {
                let mut cfg = Vec::with_capacity(k + 1);
                cfg.push(i0);
                cfg.extend_from_slice(&choice);
                configs.push(cfg);
                points.push(xi);
            }
        }
        Ok(Self {
            n,
            k,
            xi_max,
            spacing,
            configs,
            points,
        })
    }

    pub fn for_tables(tables: &[FourierTable]) -> Result<Self> {
        let t = &tables[0];
        if tables
            .iter()
            .any(|u| u.n != t.n || u.xi_max != t.xi_max || u.spacing != t.spacing)
        {
            return param("tables must share dimension, window and spacing");
        }
        Self::new(t.n, tables.len() - 1, t.xi_max, t.spacing)
    }

    fn volume(&self, dims: usize) -> f64 {
        self.spacing.powi(dims as i32)
    }

    pub fn block_len(&self) -> usize {
        (2 * self.xi_max + 1).pow(self.n as u32)
    }
}

fn lattice_integral(t: &[f64], power: f64, cell: f64) -> f64 {
    crate::par::pairwise_sum(&t.iter().map(|v| v.powf(power)).collect::<Vec<_>>()) * cell
}

/// `|F_j|` as plain arrays.
fn moduli(tables: &[FourierTable]) -> Vec<Vec<f64>> {
    tables
        .iter()
        .map(|t| t.values.iter().map(|v| v.norm()).collect())
        .collect()
}

fn kernel_values(lattice: &DualLattice, kernel: &Kernel) -> Result<Vec<f64>> {
    crate::par::map_slice(&lattice.points, |xi| kernel.eval(xi).map(|v| v.norm()))
        .into_iter()
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderChain {
    pub lhs: f64,
    pub rhs: f64,
    /// `∫(∏F_j)^{τp}`.
    pub i1: f64,
    /// `∫(∏F_j)^{(1−τ)p′} K^{p′}`.
    pub i2: f64,
    /// Bound on `i1` after the first splitting.
    pub i1_bound: f64,
    /// Bound on `i2` after slicing.
    pub i2_bound: f64,
    /// Max fiber mass of `K^{p′}` over the support of `∏F_j`.
    pub h: f64,
}

impl HolderChain {
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn holds(&self, rel: f64) -> bool {
        self.lhs <= self.rhs * (1.0 + rel)
    }
}

/// Max over `j` and `η` of `Σ_{ξ_j = η} w(ξ)` restricted to `support`.
fn fiber_sup(lattice: &DualLattice, weights: &[f64], support: &[bool]) -> f64 {
    let block = lattice.block_len();
    let mut best = 0.0f64;
    for j in 0..=lattice.k {
        let mut acc = vec![0.0; block];
        for ((cfg, w), &on) in lattice.configs.iter().zip(weights).zip(support) {
            if on {
                acc[cfg[j]] += w;
            }
        }
        best = acc.into_iter().fold(best, f64::max);
    }
    best * lattice.volume((lattice.k - 1) * lattice.n)
}

/// Both sides of the two-step Hölder chain for `Λ*(F; K)` on the lattice window.
pub fn holder_chain_bound(
    tables: &[FourierTable],
    kernel: &Kernel,
    tau: f64,
    p: f64,
) -> Result<HolderChain> {
    let lattice = DualLattice::for_tables(tables)?;
    let k = kernel_values(&lattice, kernel)?;
    holder_chain_on(&lattice, &moduli(tables), &k, tau, p)
}

/// Hölder chain from precomputed lattice, table moduli and kernel values.
pub fn holder_chain_on(
    lattice: &DualLattice,
    f: &[Vec<f64>],
    kernel: &[f64],
    tau: f64,
    p: f64,
) -> Result<HolderChain> {
    if !(tau > 0.0 && tau < 1.0) {
        return param("tau must lie in (0,1)");
    }
    if !(p > 1.0 && p.is_finite()) {
        return param("p must lie in (1,∞)");
    }
    if f.len() != lattice.k + 1 {
        return param("need k + 1 tables");
    }
    let kf = lattice.k as f64;
    let pp = p / (p - 1.0);
    let vol = lattice.volume(lattice.k * lattice.n);
    let cell = lattice.volume(lattice.n);
    let prods: Vec<f64> = lattice
        .configs
        .iter()
        .map(|c| c.iter().enumerate().map(|(j, &i)| f[j][i]).product())
        .collect();
    let support: Vec<bool> = prods.iter().map(|&x| x > 0.0).collect();
    let sum = |g: &(dyn Fn(usize) -> f64 + Sync)| crate::par::sum_range(prods.len(), g) * vol;
    let lhs = sum(&|i| prods[i] * kernel[i]);
    let i1 = sum(&|i| prods[i].powf(tau * p));
    let i2 = sum(&|i| prods[i].powf((1.0 - tau) * pp) * kernel[i].powf(pp));
    let kpow: Vec<f64> = kernel.iter().map(|x| x.powf(pp)).collect();
    let h = fiber_sup(lattice, &kpow, &support);
    let a: Vec<f64> = f
        .iter()
        .map(|t| lattice_integral(t, tau * p * (kf + 1.0) / kf, cell))
        .collect();
    let b: Vec<f64> = f
        .iter()
        .map(|t| lattice_integral(t, (1.0 - tau) * pp * (kf + 1.0), cell))
        .collect();
    let i1_bound: f64 = a.iter().map(|x| x.powf(kf / (kf + 1.0))).product();
    let i2_bound: f64 = h * b.iter().map(|x| x.powf(1.0 / (kf + 1.0))).product::<f64>();
    let rhs = h.powf(1.0 / pp)
        * a.iter()
            .zip(&b)
            .map(|(x, y)| x.powf(kf / ((kf + 1.0) * p)) * y.powf(1.0 / ((kf + 1.0) * pp)))
            .product::<f64>();
    Ok(HolderChain {
        lhs,
        rhs,
        i1,
        i2,
        i1_bound,
        i2_bound,
        h,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MainBoundReport {
    pub hypothesis: bool,
    pub params: Option<HolderParams>,
    /// Max over the `θ` sweep of `Λ*(F; K_{θ,m′})`.
    pub lhs: f64,
    /// `H^{1/p′} ∏‖F_j‖_s` with `H` the max lattice fiber mass over the sweep.
    pub rhs: f64,
    pub lattice_h: f64,
    /// Continuum fiber moment of order `p′m′/2` at `η = 0` over the sweep.
    pub continuum_h: Option<f64>,
    pub norms: Vec<f64>,
    pub per_theta: Vec<(f64, f64)>,
}

impl MainBoundReport {
    pub fn holds(&self) -> bool {
        self.hypothesis && self.lhs <= self.rhs * (1.0 + 1e-9)
    }
}

pub fn verify_main_bound(
    tables: &[FourierTable],
    system: &MatrixSystem,
    thetas: &[Vec<f64>],
    m_prime: f64,
    s: f64,
) -> Result<MainBoundReport> {
    let k = system.k;
    if tables.len() != k + 1 {
        return param("need k + 1 tables");
    }
    let hypothesis = main_bound_hypothesis(system.n, k, m_prime, s);
    let params = holder_params(k, s).ok();
    let empty = MainBoundReport {
        hypothesis: false,
        params,
        lhs: 0.0,
        rhs: 0.0,
        lattice_h: 0.0,
        continuum_h: None,
        norms: Vec::new(),
        per_theta: Vec::new(),
    };
    let Some(hp) = params.filter(|_| hypothesis) else {
        return Ok(empty);
    };
    let lattice = DualLattice::for_tables(tables)?;
    let f = moduli(tables);
    let cell = lattice.volume(lattice.n);
    let norms: Vec<f64> = f
        .iter()
        .map(|t| lattice_integral(t, s, cell).powf(1.0 / s))
        .collect();
    let mut per_theta = Vec::new();
    let (mut lhs, mut h) = (0.0f64, 0.0f64);
    for theta in thetas {
        let kernel = Kernel::majorant(system, theta.clone(), m_prime);
        let kv = kernel_values(&lattice, &kernel)?;
        let chain = holder_chain_on(&lattice, &f, &kv, hp.tau, hp.p)?;
        per_theta.push((chain.lhs, chain.rhs));
        lhs = lhs.max(chain.lhs);
        h = h.max(chain.h);
    }
    let rhs = h.powf(1.0 / hp.p_prime) * norms.iter().product::<f64>();
    let q = hp.p_prime * m_prime / 2.0;
    let mut continuum: Option<f64> = Some(0.0);
    for theta in thetas {
        for j in 0..=k {
            let fm = fiber_moment(
                system,
                j,
                q,
                &vec![0.0; system.n],
                theta,
                &FiberConfig::default(),
            )?;
            continuum = continuum.map(|c| c.max(fm.value)).filter(|c| c.is_finite());
        }
    }
    Ok(MainBoundReport {
        hypothesis,
        params,
        lhs,
        rhs,
        lattice_h: h,
        continuum_h: continuum,
        norms,
        per_theta,
    })
}

/// Binomial coefficient as a float.
pub fn binomial(n: usize, r: usize) -> f64 {
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Size-`r` subsets of `0..l` in lexicographic order.
pub fn subsets(l: usize, r: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, l: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..=l - left {
            cur.push(i);
            rec(i + 1, l, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if r <= l {
        rec(0, l, r, &mut Vec::new(), &mut out);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalitySides {
    pub lhs: f64,
    pub rhs: f64,
}

impl InequalitySides {
    pub fn holds(&self, rel: f64) -> bool {
        self.lhs <= self.rhs * (1.0 + rel)
    }
}

/// `∫∏|F_j| ≤ ∏_S (∫∏_{j∈S}|F_j|^{ℓ/r})^{1/C(ℓ,r)}` on a weighted point set.
pub fn gen_holder_check(r: usize, f: &[Vec<f64>], weights: &[f64]) -> Result<InequalitySides> {
    let l = f.len();
    if r == 0 || r > l {
        return param(format!("r = {r} must lie in [1, {l}]"));
    }
    if f.iter().any(|g| g.len() != weights.len()) {
        return param("functions and weights must share a length");
    }
    let len = weights.len();
    let lhs = crate::par::sum_range(len, |i| {
        weights[i] * f.iter().map(|g| g[i].abs()).product::<f64>()
    });
    let c = binomial(l, r);
    let power = l as f64 / r as f64;
    let rhs = subsets(l, r)
        .iter()
        .map(|s| {
            let inner = crate::par::sum_range(len, |i| {
                weights[i]
                    * s.iter()
                        .map(|&j| f[j][i].abs().powf(power))
                        .product::<f64>()
            });
            inner.powf(1.0 / c)
        })
        .product();
    Ok(InequalitySides { lhs, rhs })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearDualBound {
    pub lhs: f64,
    /// After generalized Hölder over size-`r` subsets of `{0,…,k}`.
    pub intermediate: f64,
    pub rhs: f64,
    /// Max fiber mass of `|K|^{1/r}` over fibers `{ξ_S = η}`.
    pub h: f64,
}

/// `Λ*(F; |K|) ≤ H ∏‖F_j‖_{(k+1)/r}` for the linear case.
pub fn linear_dual_bound(
    tables: &[FourierTable],
    kernel: &Kernel,
    r: usize,
) -> Result<LinearDualBound> {
    let lattice = DualLattice::for_tables(tables)?;
    let k = lattice.k;
    if r == 0 || r > k {
        return param(format!("r = {r} must lie in [1, {k}]"));
    }
    let f = moduli(tables);
    let kv = kernel_values(&lattice, kernel)?;
    let vol = lattice.volume(k * lattice.n);
    let len = lattice.configs.len();
    let lhs = crate::par::sum_range(len, |i| {
        lattice.configs[i]
            .iter()
            .enumerate()
            .map(|(j, &c)| f[j][c])
            .product::<f64>()
            * kv[i]
    }) * vol;
    let sets = subsets(k + 1, r);
    let c = binomial(k + 1, r);
    let power = (k + 1) as f64 / r as f64;
    let intermediate: f64 = sets
        .iter()
        .map(|s| {
            let inner = crate::par::sum_range(len, |i| {
                s.iter()
                    .map(|&j| f[j][lattice.configs[i][j]].powf(power))
                    .product::<f64>()
                    * kv[i].powf(1.0 / r as f64)
            }) * vol;
            inner.powf(1.0 / c)
        })
        .product();
    // Fiber masses over {ξ_S = η}, keyed by the tuple of table indices.
    let mut h = 0.0f64;
    for s in &sets {
        let mut acc: std::collections::HashMap<Vec<usize>, f64> = std::collections::HashMap::new();
        for (cfg, kval) in lattice.configs.iter().zip(&kv) {
            let key: Vec<usize> = s.iter().map(|&j| cfg[j]).collect();
            *acc.entry(key).or_insert(0.0) += kval.powf(1.0 / r as f64);
        }
        h = acc.values().cloned().fold(h, f64::max);
    }
    h *= lattice.volume((k - r) * lattice.n);
    let cell = lattice.volume(lattice.n);
    let rhs = h * f
        .iter()
        .map(|t| lattice_integral(t, power, cell).powf(1.0 / power))
        .product::<f64>();
    Ok(LinearDualBound {
        lhs,
        intermediate,
        rhs,
        h,
    })
}

/// Fitted `e` in `value ≈ C (n − α)^{−e}` across an `α` sweep.
pub fn fit_growth_exponent(n: usize, alphas: &[f64], values: &[f64]) -> f64 {
    let xs: Vec<f64> = alphas.iter().map(|a| (n as f64 - a).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    -crate::measures::fit_slope(&xs, &ys)
}

/// CSV rows `trial,lhs,rhs,margin`.
pub fn margins_csv(rows: &[(f64, f64)]) -> String {
    let mut out = String::from("trial,lhs,rhs,margin\n");
    for (i, (l, r)) in rows.iter().enumerate() {
        out.push_str(&format!("{i},{l:e},{r:e},{:e}\n", r - l));
    }
    out
}
