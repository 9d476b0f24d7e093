//! The oscillatory integral `J_θ(ξ) = ∫ e[(θ + 𝐀ᵀξ)·y + ξ_{kn} Q(y)] ψ(y) dy` and its kernels.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::RwLock;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::grid::unflatten;
use crate::patterns::{MatrixSystem, PatternSpec};

/// Minimum trapezoid intervals per axis.
pub const MIN_NODES: usize = 64;
/// Largest tensor grid for the non-separable path.
pub const NODE_BUDGET: usize = 1 << 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillatorySample {
    pub xi: Vec<f64>,
    pub theta: Vec<f64>,
    pub value: Complex64,
    pub est_error: f64,
}

fn e(x: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * x)
}

/// Sup over `|t| ≤ s` of `|p'(t)|`, bounded termwise.
fn derivative_bound(coeffs: &[f64], s: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(p, c)| c.abs() * p as f64 * s.powi(p as i32 - 1))
        .sum()
}

fn intervals_for(gradient_bound: f64, support: f64) -> usize {
    let step = 1.0 / (8.0 * gradient_bound.max(1e-300));
    let mut nodes = ((2.0 * support / step).ceil() as usize).max(MIN_NODES);
    if nodes % 2 == 1 {
        nodes += 1;
    }
    nodes
}

/// Evaluator with a memo of one-dimensional factors for separable phases.
pub struct JEvaluator<'a> {
    spec: &'a PatternSpec,
    parts: Option<Vec<Vec<f64>>>,
    cache: RwLock<HashMap<(usize, u64, u64), (Complex64, f64)>>,
    /// Multiplier on the trapezoid resolution (1 = default step rule).
    pub refine: usize,
}

impl<'a> JEvaluator<'a> {
    pub fn new(spec: &'a PatternSpec) -> Self {
        Self {
            spec,
            parts: spec.q.separable_parts(),
            cache: RwLock::new(HashMap::new()),
            refine: 1,
        }
    }

    pub fn refined(spec: &'a PatternSpec, refine: usize) -> Self {
        Self {
            refine: refine.max(1),
            ..Self::new(spec)
        }
    }

    pub fn spec(&self) -> &PatternSpec {
        self.spec
    }

    pub fn is_separable(&self) -> bool {
        self.parts.is_some()
    }

    /// `(γ, t) ↦ ∫ e(γ y + t q_axis(y)) ψ₁(y) dy` with a step-doubling error estimate.
    fn axis_factor(&self, axis: usize, gamma: f64, t: f64) -> (Complex64, f64) {
        let key = (axis, gamma.to_bits(), t.to_bits());
        if let Some(v) = self.cache.read().expect("cache lock").get(&key) {
            return *v;
        }
        let q = &self.parts.as_ref().expect("separable phase")[axis];
        let s = self.spec.cutoff.support;
        let bound = gamma.abs() + t.abs() * derivative_bound(q, s);
        let nodes = intervals_for(bound, s) * self.refine;
        let h = 2.0 * s / nodes as f64;
        let (mut fine, mut coarse) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for i in 1..nodes {
            let y = -s + i as f64 * h;
            let qy: f64 = q
                .iter()
                .enumerate()
                .map(|(p, c)| c * y.powi(p as i32))
                .sum();
            let v = e(gamma * y + t * qy) * self.spec.cutoff.axis(y);
            fine += v;
            if i % 2 == 0 {
                coarse += v;
            }
        }
        fine *= h;
        coarse *= 2.0 * h;
        let floor = 1e-15 * self.spec.cutoff.axis_integral();
        let out = (fine, (fine - coarse).norm() + floor);
        self.cache.write().expect("cache lock").insert(key, out);
        out
    }

    /// Evaluate at `ξ ∈ ℝ^{kn}` and `θ ∈ ℝ^m`.
    pub fn eval(&self, xi: &[f64], theta: &[f64]) -> Result<OscillatorySample> {
        let sys = &self.spec.system;
        let (n, m, k) = (sys.n, sys.m, sys.k);
        if xi.len() != k * n || theta.len() != m {
            return param("xi must have length kn and theta length m");
        }
        let mut gamma = vec![0.0; m];
        sys.transpose_apply(xi, &mut gamma);
        for (g, th) in gamma.iter_mut().zip(theta) {
            *g += th;
        }
        let t = xi[k * n - 1];
        let (value, est_error) = if self.parts.is_some() {
            let factors: Vec<(Complex64, f64)> =
                (0..m).map(|i| self.axis_factor(i, gamma[i], t)).collect();
            let value = factors
                .iter()
                .fold(Complex64::new(1.0, 0.0), |acc, f| acc * f.0);
            let mut err = 0.0;
            for i in 0..m {
                let others: f64 = (0..m)
                    .filter(|&j| j != i)
                    .map(|j| factors[j].0.norm() + factors[j].1)
                    .product();
                err += factors[i].1 * others;
            }
            (value, err)
        } else {
            self.tensor_quadrature(&gamma, t)?
        };
        Ok(OscillatorySample {
            xi: xi.to_vec(),
            theta: theta.to_vec(),
            value,
            est_error,
        })
    }

    fn tensor_quadrature(&self, gamma: &[f64], t: f64) -> Result<(Complex64, f64)> {
        let m = gamma.len();
        let s = self.spec.cutoff.support;
        let grad_q: f64 = self
            .spec
            .q
            .coeffs
            .iter()
            .map(|(ex, c)| {
                let deg: u32 = ex.iter().sum();
                c.abs() * deg as f64 * s.powi(deg as i32 - 1) * (m as f64).sqrt()
            })
            .sum();
        let bound = gamma.iter().map(|g| g * g).sum::<f64>().sqrt() + t.abs() * grad_q;
        let nodes = intervals_for(bound, s) * self.refine;
        let inner = nodes - 1;
        let total = inner.checked_pow(m as u32).unwrap_or(usize::MAX);
        if total > NODE_BUDGET {
            return Err(Error::Resource(format!(
                "phase gradient {bound:.3e} needs {nodes} nodes per axis ({total} total) beyond the budget"
            )));
        }
        let h = 2.0 * s / nodes as f64;
        let sums = crate::par::map_range(inner, |first| {
            let mut idx = vec![0usize; m];
            let mut y = vec![0.0; m];
            let rest = inner.pow(m as u32 - 1);
            let (mut fine, mut coarse) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
            for r in 0..rest {
                unflatten(r, inner, m - 1, &mut idx[1..]);
                idx[0] = first;
                for a in 0..m {
                    y[a] = -s + (idx[a] + 1) as f64 * h;
                }
                let phase: f64 = gamma.iter().zip(&y).map(|(g, v)| g * v).sum::<f64>()
                    + t * self.spec.q.eval(&y);
                let v = e(phase) * self.spec.psi(&y);
                fine += v;
                if idx.iter().all(|i| (i + 1) % 2 == 0) {
                    coarse += v;
                }
            }
            (fine, coarse)
        });
        let fine: Complex64 =
            crate::par::pairwise_sum_complex(&sums.iter().map(|p| p.0).collect::<Vec<_>>())
                * h.powi(m as i32);
        let coarse: Complex64 =
            crate::par::pairwise_sum_complex(&sums.iter().map(|p| p.1).collect::<Vec<_>>())
                * (2.0 * h).powi(m as i32);
        Ok((
            fine,
            (fine - coarse).norm() + 1e-15 * self.spec.cutoff.integral(),
        ))
    }
}

pub fn eval_j(spec: &PatternSpec, xi: &[f64], theta: &[f64]) -> Result<OscillatorySample> {
    JEvaluator::new(spec).eval(xi, theta)
}

/// `K_{θ,m′}(ξ) = (1 + |𝐀ᵀξ + θ|)^{−m′/2}`.
pub fn eval_kernel_k(system: &MatrixSystem, theta: &[f64], m_prime: f64, xi: &[f64]) -> f64 {
    let mut g = vec![0.0; system.m];
    system.transpose_apply(xi, &mut g);
    let norm = g
        .iter()
        .zip(theta)
        .map(|(a, b)| (a + b) * (a + b))
        .sum::<f64>()
        .sqrt();
    (1.0 + norm).powf(-m_prime / 2.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaySample {
    pub t: f64,
    pub abs_j: f64,
    pub est_error: f64,
    /// `|J|·(1+|𝐀ᵀξ(t)|)^{m′/2}`.
    pub envelope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayReport {
    pub id: usize,
    pub direction: Vec<f64>,
    pub image_norm: f64,
    pub kernel_direction: bool,
    pub samples: Vec<RaySample>,
    /// Decay exponent of `|J|` against `1 + t|𝐀ᵀv|`; `None` when fewer than three samples clear the floor.
    pub fitted_exponent: Option<f64>,
    pub decayed_below_floor: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JDecayReport {
    pub m_prime: f64,
    pub target: f64,
    pub rays: Vec<RayReport>,
    /// Largest envelope value over every sample.
    pub c_fit: f64,
    pub min_exponent: Option<f64>,
    pub pass: bool,
}

impl JDecayReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ray,t,abs_j,envelope\n");
        for r in &self.rays {
            for s in &r.samples {
                out.push_str(&format!(
                    "{},{:.17e},{:.17e},{:.17e}\n",
                    r.id, s.t, s.abs_j, s.envelope
                ));
            }
        }
        out
    }
}

/// Dyadic samples per ray.
pub const RAY_SAMPLES: usize = 12;
/// Allowed shortfall of the fitted exponent below `m′/2`.
pub const EXPONENT_SLACK: f64 = 0.2;

fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.1 && norm <= 1.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Sample `|J₀|` along one ray `ξ(t) = t·v`.
pub fn sample_ray(eval: &JEvaluator, id: usize, v: &[f64], m_prime: f64) -> Result<RayReport> {
    let spec = eval.spec();
    let sys = &spec.system;
    let theta = vec![0.0; sys.m];
    let mut g = vec![0.0; sys.m];
    sys.transpose_apply(v, &mut g);
    let image_norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    let kernel_direction = image_norm < 1e-9;
    let s = spec.cutoff.support;
    let scale = if kernel_direction {
        v[v.len() - 1].abs().max(1e-3)
    } else {
        image_norm
    };
    let t0 = 1.0 / (s * scale);
    let floor_abs = 1e-13 * spec.cutoff.integral();
    let mut samples = Vec::with_capacity(RAY_SAMPLES + 1);
    let base = eval.eval(&vec![0.0; v.len()], &theta)?;
    samples.push(RaySample {
        t: 0.0,
        abs_j: base.value.norm(),
        est_error: base.est_error,
        envelope: base.value.norm(),
    });
    for i in 0..RAY_SAMPLES {
        let t = t0 * 2f64.powi(i as i32);
        let xi: Vec<f64> = v.iter().map(|c| c * t).collect();
        let smp = eval.eval(&xi, &theta)?;
        let abs_j = smp.value.norm();
        samples.push(RaySample {
            t,
            abs_j,
            est_error: smp.est_error,
            envelope: abs_j * eval_kernel_k(sys, &theta, m_prime, &xi).recip(),
        });
    }
    let usable: Vec<&RaySample> = samples[1..]
        .iter()
        .filter(|s| s.abs_j > 10.0 * s.est_error && s.abs_j > floor_abs)
        .collect();
    let (fitted_exponent, decayed_below_floor) = if kernel_direction || usable.len() < 3 {
        (None, !kernel_direction)
    } else {
        let xs: Vec<f64> = usable
            .iter()
            .map(|s| (1.0 + s.t * image_norm).ln())
            .collect();
        let ys: Vec<f64> = usable.iter().map(|s| s.abs_j.ln()).collect();
        (Some(-crate::measures::fit_slope(&xs, &ys)), false)
    };
    Ok(RayReport {
        id,
        direction: v.to_vec(),
        image_norm,
        kernel_direction,
        samples,
        fitted_exponent,
        decayed_below_floor,
    })
}

/// Kernel directions of `𝐀ᵀ` (unit vectors spanning its null space).
pub fn kernel_directions(system: &MatrixSystem) -> Vec<Vec<f64>> {
    let a = system.stacked();
    let at = a.transpose();
    let d = at.ncols();
    let svd = DMatrix::<f64>::from(at.clone()).svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let top = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut out = Vec::new();
    for i in 0..vt.nrows() {
        let s = svd.singular_values.get(i).cloned().unwrap_or(0.0);
        if s <= 1e-10 * top {
            out.push(vt.row(i).iter().cloned().collect());
        }
    }
    // Rows beyond the singular value count also lie in the null space.
    if vt.nrows() < d {
        let full = at.clone().transpose() * at;
        let eig = full.symmetric_eigen();
        for (i, ev) in eig.eigenvalues.iter().enumerate() {
            if ev.abs() <= 1e-10 * top * top {
                out.push(eig.eigenvectors.column(i).iter().cloned().collect());
            }
        }
    }
    out
}

/// Fit the decay of `|J₀|` along seeded random rays plus the kernel directions of `𝐀ᵀ`.
pub fn certify_j_decay(
    spec: &PatternSpec,
    m_prime: f64,
    rays: usize,
    seed: u64,
) -> Result<JDecayReport> {
    let eval = JEvaluator::new(spec);
    let sys = &spec.system;
    let d = sys.k * sys.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs: Vec<Vec<f64>> = (0..rays).map(|_| unit_vector(&mut rng, d)).collect();
    dirs.extend(kernel_directions(sys));
    let reports: Vec<RayReport> =
        crate::par::map_range(dirs.len(), |i| sample_ray(&eval, i, &dirs[i], m_prime))
            .into_iter()
            .collect::<Result<_>>()?;
    let c_fit = reports
        .iter()
        .flat_map(|r| r.samples.iter().map(|s| s.envelope))
        .fold(0.0, f64::max);
    let target = m_prime / 2.0;
    let min_exponent = reports
        .iter()
        .filter_map(|r| r.fitted_exponent)
        .fold(None, |acc: Option<f64>, x| {
            Some(acc.map_or(x, |a| a.min(x)))
        });
    let pass = c_fit.is_finite()
        && reports.iter().filter(|r| !r.kernel_direction).all(|r| {
            r.decayed_below_floor
                || r.fitted_exponent
                    .is_some_and(|x| x >= target - EXPONENT_SLACK)
        });
    Ok(JDecayReport {
        m_prime,
        target,
        rays: reports,
        c_fit,
        min_exponent,
        pass,
    })
}
