//! The configuration form on the spatial side, its frequency-side dual, the smoothed
//! form and the sup-factoring bound.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fourier::FourierTable;
use crate::grid::{unflatten, GridFunction};
use crate::oscillatory::{certify_j_decay, JEvaluator};
use crate::patterns::{MatrixSystem, PatternSpec};
use crate::tail::{exterior_integral, TailConfig};

/// Default cap on dual lattice terms.
pub const DEFAULT_BUDGET: u64 = 100_000_000;
/// Products below this fraction of the product of sups are skipped.
pub const CONTRIBUTION_FLOOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Spatial,
    Dual,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub grid_res: Option<usize>,
    pub y_nodes: Option<usize>,
    pub xi_max: Option<usize>,
    pub spacing: Option<f64>,
    pub terms: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaResult {
    pub value: f64,
    pub imag: f64,
    pub truncation_tail: f64,
    pub side: Side,
    pub resolution: Resolution,
}

/// Radial majorant of a kernel: `min(sup, amplitude·(1+|𝐀ᵀξ+θ|)^{-exponent})`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelEnvelope {
    pub sup: f64,
    pub amplitude: f64,
    pub exponent: f64,
}

/// Kernels accepted by the dual form.
#[derive(Clone)]
pub enum Kernel<'a> {
    /// `J_θ`.
    J {
        eval: &'a JEvaluator<'a>,
        theta: Vec<f64>,
        envelope: KernelEnvelope,
    },
    /// `|J_θ|^power`.
    AbsJ {
        eval: &'a JEvaluator<'a>,
        theta: Vec<f64>,
        power: f64,
        envelope: KernelEnvelope,
    },
    /// `K_{θ,m′}^power`.
    Majorant {
        system: &'a MatrixSystem,
        theta: Vec<f64>,
        m_prime: f64,
        power: f64,
    },
    Constant(f64),
    /// Arbitrary kernel with a global bound used for tails.
    Custom {
        f: Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync + 'a>,
        sup: f64,
    },
}

/// Rays used to fit the `J` envelope constant.
const ENVELOPE_RAYS: usize = 8;

impl<'a> Kernel<'a> {
    /// `J_θ` with an envelope constant fitted on seeded rays.
    pub fn j(eval: &'a JEvaluator<'a>, theta: Vec<f64>) -> Result<Self> {
        let spec = eval.spec();
        let m = spec.m() as f64;
        let fit = certify_j_decay(spec, m, ENVELOPE_RAYS, 0)?;
        let sup = spec.cutoff.integral();
        let envelope = KernelEnvelope {
            sup,
            amplitude: fit.c_fit.max(sup),
            exponent: m / 2.0,
        };
        Ok(Kernel::J {
            eval,
            theta,
            envelope,
        })
    }

    pub fn majorant(system: &'a MatrixSystem, theta: Vec<f64>, m_prime: f64) -> Self {
        Kernel::Majorant {
            system,
            theta,
            m_prime,
            power: 1.0,
        }
    }

    /// `|K|^p`.
    pub fn abs_pow(&self, p: f64) -> Self {
        match self {
            Kernel::J {
                eval,
                theta,
                envelope,
            } => Kernel::AbsJ {
                eval,
                theta: theta.clone(),
                power: p,
                envelope: *envelope,
            },
            Kernel::AbsJ {
                eval,
                theta,
                power,
                envelope,
            } => Kernel::AbsJ {
                eval,
                theta: theta.clone(),
                power: power * p,
                envelope: *envelope,
            },
            Kernel::Majorant {
                system,
                theta,
                m_prime,
                power,
            } => Kernel::Majorant {
                system,
                theta: theta.clone(),
                m_prime: *m_prime,
                power: power * p,
            },
            Kernel::Constant(c) => Kernel::Constant(c.abs().powf(p)),
            Kernel::Custom { f, sup } => {
                let f = f.clone();
                Kernel::Custom {
                    f: Arc::new(move |x| Complex64::new(f(x).norm().powf(p), 0.0)),
                    sup: sup.abs().powf(p),
                }
            }
        }
    }

    pub fn eval(&self, xi: &[f64]) -> Result<Complex64> {
        Ok(match self {
            Kernel::J { eval, theta, .. } => eval.eval(xi, theta)?.value,
            Kernel::AbsJ {
                eval, theta, power, ..
            } => Complex64::new(eval.eval(xi, theta)?.value.norm().powf(*power), 0.0),
            Kernel::Majorant {
                system,
                theta,
                m_prime,
                power,
            } => Complex64::new(
                crate::oscillatory::eval_kernel_k(system, theta, *m_prime, xi).powf(*power),
                0.0,
            ),
            Kernel::Constant(c) => Complex64::new(*c, 0.0),
            Kernel::Custom { f, .. } => f(xi),
        })
    }

    pub fn sup(&self) -> f64 {
        match self {
            Kernel::J { envelope, .. } => envelope.sup,
            Kernel::AbsJ {
                envelope, power, ..
            } => envelope.sup.powf(*power),
            Kernel::Majorant { .. } => 1.0,
            Kernel::Constant(c) => c.abs(),
            Kernel::Custom { sup, .. } => *sup,
        }
    }

    /// Majorant at `ξ` used for truncation tails.
    pub fn envelope(&self, xi: &[f64]) -> f64 {
        let image = |system: &MatrixSystem, theta: &[f64]| {
            let mut g = vec![0.0; system.m];
            system.transpose_apply(xi, &mut g);
            g.iter()
                .zip(theta)
                .map(|(a, b)| (a + b) * (a + b))
                .sum::<f64>()
                .sqrt()
        };
        match self {
            Kernel::J {
                eval,
                theta,
                envelope,
            } => {
                let r = image(&eval.spec().system, theta);
                envelope
                    .sup
                    .min(envelope.amplitude * (1.0 + r).powf(-envelope.exponent))
            }
            Kernel::AbsJ {
                eval,
                theta,
                power,
                envelope,
            } => {
                let r = image(&eval.spec().system, theta);
                envelope
                    .sup
                    .min(envelope.amplitude * (1.0 + r).powf(-envelope.exponent))
                    .powf(*power)
            }
            Kernel::Majorant {
                system,
                theta,
                m_prime,
                power,
            } => (1.0 + image(system, theta)).powf(-m_prime / 2.0 * power),
            Kernel::Constant(c) => c.abs(),
            Kernel::Custom { sup, .. } => *sup,
        }
    }
}

fn check_spatial_inputs(spec: &PatternSpec, f: &[GridFunction]) -> Result<()> {
    let k = spec.k();
    if f.len() != k + 1 {
        return param(format!("expected {} functions, got {}", k + 1, f.len()));
    }
    if f[0].n != spec.n() || f.iter().any(|g| !g.same_grid(&f[0])) {
        return param("grid mismatch among the input functions");
    }
    Ok(())
}

/// Midpoint `y` nodes over the cutoff support.
fn y_grid(spec: &PatternSpec, nodes: usize) -> (Vec<f64>, f64) {
    let s = spec.cutoff.support;
    let h = 2.0 * s / nodes as f64;
    ((0..nodes).map(|i| -s + (i as f64 + 0.5) * h).collect(), h)
}

/// `∫∫ f₀(x) ∏ f_j(x + φ_j(y)) W(x,y) ψ(y) dx dy` by tensor quadrature.
fn spatial_form<W>(
    spec: &PatternSpec,
    f: &[GridFunction],
    y_nodes: usize,
    weight: W,
) -> Result<LambdaResult>
where
    W: Fn(&[f64], &[f64]) -> f64 + Sync + Send,
{
    check_spatial_inputs(spec, f)?;
    let (n, m, k) = (spec.n(), spec.m(), spec.k());
    let (axis, h) = y_grid(spec, y_nodes);
    let x_nodes: Vec<(Vec<f64>, f64)> = (0..f[0].len())
        .filter(|&i| f[0].values[i] != 0.0)
        .map(|i| (f[0].center(i), f[0].values[i]))
        .collect();
    let total_y = y_nodes.pow(m as u32);
    let cell = f[0].cell_volume();
    let wy = h.powi(m as i32);
    let value = crate::par::sum_range(total_y, |flat| {
        let mut idx = [0usize; 8];
        unflatten(flat, y_nodes, m, &mut idx[..m]);
        let y: Vec<f64> = idx[..m].iter().map(|&i| axis[i]).collect();
        let psi = spec.psi(&y);
        if psi == 0.0 {
            return 0.0;
        }
        let shifts = spec.shifts_unchecked(&y);
        let mut point = vec![0.0; n];
        let mut acc = 0.0;
        for (x, v0) in &x_nodes {
            let mut prod = *v0;
            for (j, s) in shifts.iter().enumerate() {
                for a in 0..n {
                    point[a] = x[a] + s[a];
                }
                prod *= f[j + 1].interpolate(&point);
                if prod == 0.0 {
                    break;
                }
            }
            if prod != 0.0 {
                acc += prod * weight(x, &y);
            }
        }
        acc * psi
    }) * cell
        * wy;
    let _ = k;
    Ok(LambdaResult {
        value,
        imag: 0.0,
        truncation_tail: 0.0,
        side: Side::Spatial,
        resolution: Resolution {
            grid_res: Some(f[0].res),
            y_nodes: Some(y_nodes),
            ..Default::default()
        },
    })
}

/// Default `y` nodes per axis for a given `m`.
pub fn default_y_nodes(m: usize) -> usize {
    match m {
        1 => 256,
        2 => 64,
        _ => 32,
    }
}

pub fn lambda_direct(
    spec: &PatternSpec,
    f: &[GridFunction],
    y_nodes: usize,
) -> Result<LambdaResult> {
    spatial_form(spec, f, y_nodes, |_, _| 1.0)
}

/// The smoothed form with weight `F(x,y)`; `F ≡ 1` reproduces `lambda_direct` exactly.
pub fn lambda_smoothed<W>(
    spec: &PatternSpec,
    f: &[GridFunction],
    y_nodes: usize,
    weight: W,
) -> Result<LambdaResult>
where
    W: Fn(&[f64], &[f64]) -> f64 + Sync + Send,
{
    spatial_form(spec, f, y_nodes, weight)
}

/// `F(x,y)` from a grid over `ℝ^{n+m}` by multilinear interpolation.
pub fn grid_weight(g: &GridFunction) -> impl Fn(&[f64], &[f64]) -> f64 + Sync + Send + '_ {
    move |x, y| {
        let mut z = [0.0; 8];
        z[..x.len()].copy_from_slice(x);
        z[x.len()..x.len() + y.len()].copy_from_slice(y);
        g.interpolate(&z[..x.len() + y.len()])
    }
}

#[derive(Clone, Debug)]
pub struct DualOptions {
    pub budget: u64,
    pub tail: Option<TailConfig>,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            tail: Some(TailConfig::default()),
        }
    }
}

fn check_tables(tables: &[FourierTable]) -> Result<(usize, usize, f64)> {
    if tables.len() < 2 {
        return param("need at least two tables");
    }
    let t0 = &tables[0];
    if tables
        .iter()
        .any(|t| t.n != t0.n || t.xi_max != t0.xi_max || t.spacing != t0.spacing)
    {
        return param("tables must share dimension, window and spacing");
    }
    Ok((t0.n, t0.xi_max, t0.spacing))
}

/// Lattice coordinates of every flat index of an `n`-dimensional window.
fn lattice_points(n: usize, xi_max: usize) -> Vec<Vec<i64>> {
    let side = 2 * xi_max + 1;
    let mut idx = vec![0usize; n];
    (0..side.pow(n as u32))
        .map(|flat| {
            unflatten(flat, side, n, &mut idx);
            idx.iter().map(|&i| i as i64 - xi_max as i64).collect()
        })
        .collect()
}

/// `Σ_{ξ₁…ξ_k} F₀(−Σξ_j) ∏ F_j(ξ_j) K(ξ)` times the lattice cell volume, with its tail.
pub fn lambda_dual(
    tables: &[FourierTable],
    kernel: &Kernel,
    opts: &DualOptions,
) -> Result<LambdaResult> {
    let (n, xi_max, spacing) = check_tables(tables)?;
    let k = tables.len() - 1;
    let side = 2 * xi_max + 1;
    let block = side.pow(n as u32);
    let terms = (block as u64).checked_pow(k as u32).unwrap_or(u64::MAX);
    if terms > opts.budget {
        return Err(Error::Resource(format!(
            "{terms} dual terms exceed the budget of {}",
            opts.budget
        )));
    }
    let points = lattice_points(n, xi_max);
    let sups: Vec<f64> = tables.iter().map(|t| t.sup_norm()).collect();
    let floor = CONTRIBUTION_FLOOR * sups.iter().product::<f64>() * kernel.sup();
    let k_sup = kernel.sup();

    let partials: Vec<Result<Complex64>> = crate::par::map_range(block, |first| {
        let mut choice = vec![0usize; k];
        choice[0] = first;
        let mut xi = vec![0.0; k * n];
        let mut total = Complex64::new(0.0, 0.0);
        let mut rest_sup = vec![1.0; k + 1];
        for j in (1..=k).rev() {
            rest_sup[j - 1] = rest_sup[j] * if j < k { sups[j + 1] } else { 1.0 };
        }
        dual_recurse(
            tables,
            kernel,
            &points,
            &sups,
            &rest_sup,
            floor / (sups[0] * k_sup).max(1e-300),
            1,
            &mut choice,
            &mut xi,
            &mut total,
            n,
            spacing,
        )?;
        Ok(total)
    });
    let parts: Vec<Complex64> = partials.into_iter().collect::<Result<_>>()?;
    let sum = crate::par::pairwise_sum_complex(&parts) * spacing.powi((k * n) as i32);

    let truncation_tail = match &opts.tail {
        Some(cfg) => dual_tail(tables, kernel, cfg),
        None => 0.0,
    };
    Ok(LambdaResult {
        value: sum.re,
        imag: sum.im,
        truncation_tail,
        side: Side::Dual,
        resolution: Resolution {
            xi_max: Some(xi_max),
            spacing: Some(spacing),
            terms: Some(terms),
            ..Default::default()
        },
    })
}

#[allow(clippy::too_many_arguments)]
fn dual_recurse(
    tables: &[FourierTable],
    kernel: &Kernel,
    points: &[Vec<i64>],
    sups: &[f64],
    rest_sup: &[f64],
    floor: f64,
    depth: usize,
    choice: &mut [usize],
    xi: &mut [f64],
    total: &mut Complex64,
    n: usize,
    spacing: f64,
) -> Result<()> {
    let k = tables.len() - 1;
    // Partial product over chosen factors j = 1..depth.
    let partial: f64 = (1..=depth)
        .map(|j| tables[j].values[choice[j - 1]].norm())
        .product();
    if partial * rest_sup[depth - 1] < floor || partial == 0.0 {
        return Ok(());
    }
    if depth < k {
        for c in 0..points.len() {
            choice[depth] = c;
            dual_recurse(
                tables,
                kernel,
                points,
                sups,
                rest_sup,
                floor,
                depth + 1,
                choice,
                xi,
                total,
                n,
                spacing,
            )?;
        }
        return Ok(());
    }
    let mut sum_k = [0i64; 8];
    for j in 0..k {
        let p = &points[choice[j]];
        for a in 0..n {
            sum_k[a] += p[a];
            xi[j * n + a] = p[a] as f64 * spacing;
        }
    }
    let neg: Vec<i64> = sum_k[..n].iter().map(|c| -c).collect();
    let f0 = match tables[0].get(&neg) {
        Some(v) => v,
        None => return Ok(()),
    };
    let mut prod = f0;
    for j in 0..k {
        prod *= tables[j + 1].values[choice[j]];
    }
    if prod.norm() < floor * sups[0] {
        return Ok(());
    }
    *total += prod * kernel.eval(xi)?;
    let _ = sups;
    Ok(())
}

/// Envelope-product integral over the complement of the computed window.
pub fn dual_tail(tables: &[FourierTable], kernel: &Kernel, cfg: &TailConfig) -> f64 {
    let n = tables[0].n;
    let k = tables.len() - 1;
    let reach = (tables[0].xi_max as f64 + 0.5) * tables[0].spacing;
    let block_norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let sum_block =
        |v: &[f64]| -> Vec<f64> { (0..n).map(|a| (0..k).map(|j| v[j * n + a]).sum()).collect() };
    exterior_integral(
        k * n,
        |v| {
            let s = sum_block(v);
            let sup = s.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            reach / sup
        },
        |xi| {
            let s = sum_block(xi);
            let mut val = tables[0].envelope_at(block_norm(&s));
            for j in 0..k {
                val *= tables[j + 1].envelope_at(block_norm(&xi[j * n..(j + 1) * n]));
                if val == 0.0 {
                    return 0.0;
                }
            }
            val * kernel.envelope(xi)
        },
        cfg,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorBound {
    pub lhs: f64,
    pub rhs: f64,
    pub lhs_tail: f64,
    pub rhs_tail: f64,
}

impl FactorBound {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + self.lhs_tail + self.rhs_tail + 1e-12 * self.rhs.abs()
    }
}

/// `|Λ*(F;K)| ≤ ∏‖F_j‖∞^ε · Λ*(|F|^{1−ε}; |K|)`.
pub fn factor_sup_bound(
    tables: &[FourierTable],
    eps: f64,
    kernel: &Kernel,
    opts: &DualOptions,
) -> Result<FactorBound> {
    if !(eps > 0.0 && eps < 1.0) {
        return param("eps must lie in (0,1)");
    }
    let lhs = lambda_dual(tables, kernel, opts)?;
    let powered: Vec<FourierTable> = tables.iter().map(|t| t.abs_pow(1.0 - eps)).collect();
    let abs_kernel = kernel.abs_pow(1.0);
    let rhs = lambda_dual(&powered, &abs_kernel, opts)?;
    let factor: f64 = tables.iter().map(|t| t.sup_norm().powf(eps)).product();
    Ok(FactorBound {
        lhs: Complex64::new(lhs.value, lhs.imag).norm(),
        rhs: factor * rhs.value,
        lhs_tail: lhs.truncation_tail,
        rhs_tail: factor * rhs.truncation_tail,
    })
}

/// Dual side of the smoothed form: `Σ_{κ,θ,ξ} F̂(κ,θ) F₀(−κ−Σξ) ∏F_j(ξ_j) J_θ(ξ)`.
pub fn lambda_smoothed_dual(
    eval: &JEvaluator,
    tables: &[FourierTable],
    weight_table: &FourierTable,
    opts: &DualOptions,
) -> Result<LambdaResult> {
    let spec = eval.spec();
    let (n, m) = (spec.n(), spec.m());
    if weight_table.n != n + m {
        return param("weight table must live on Z^{n+m}");
    }
    let (_, xi_max, spacing) = check_tables(tables)?;
    let k = tables.len() - 1;
    let side = 2 * xi_max + 1;
    let block = side.pow(n as u32);
    let terms = (block as u64).pow(k as u32) * weight_table.len() as u64;
    if terms > opts.budget {
        return Err(Error::Resource(format!(
            "{terms} dual terms exceed the budget of {}",
            opts.budget
        )));
    }
    let points = lattice_points(n, xi_max);
    let floor = CONTRIBUTION_FLOOR
        * weight_table.sup_norm()
        * tables.iter().map(|t| t.sup_norm()).product::<f64>();
    let parts: Vec<Result<Complex64>> = crate::par::map_range(weight_table.len(), |w| {
        let coef = weight_table.values[w];
        if coef.norm() == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let kt = weight_table.lattice(w);
        let kappa = &kt[..n];
        let theta: Vec<f64> = kt[n..]
            .iter()
            .map(|&c| c as f64 * weight_table.spacing)
            .collect();
        let mut acc = Complex64::new(0.0, 0.0);
        let mut choice = vec![0usize; k];
        let mut xi = vec![0.0; k * n];
        let total_choices = block.pow(k as u32);
        for flat in 0..total_choices {
            unflatten(flat, block, k, &mut choice);
            let mut sum = vec![0i64; n];
            let mut prod = coef;
            for j in 0..k {
                let p = &points[choice[j]];
                for a in 0..n {
                    sum[a] += p[a];
                    xi[j * n + a] = p[a] as f64 * spacing;
                }
                prod *= tables[j + 1].values[choice[j]];
            }
            let neg: Vec<i64> = (0..n).map(|a| -sum[a] - kappa[a]).collect();
            let Some(f0) = tables[0].get(&neg) else {
                continue;
            };
            prod *= f0;
            if prod.norm() < floor {
                continue;
            }
            acc += prod * eval.eval(&xi, &theta)?.value;
        }
        Ok(acc)
    });
    let parts: Vec<Complex64> = parts.into_iter().collect::<Result<_>>()?;
    let sum = crate::par::pairwise_sum_complex(&parts) * spacing.powi((k * n) as i32);
    Ok(LambdaResult {
        value: sum.re,
        imag: sum.im,
        truncation_tail: 0.0,
        side: Side::Dual,
        resolution: Resolution {
            xi_max: Some(xi_max),
            spacing: Some(spacing),
            terms: Some(terms),
            ..Default::default()
        },
    })
}

/// Inputs shared by the inversion checks in the test suites and the CLI.
pub mod fixtures {
    use crate::bump::bump;
    use crate::fourier::{function_table, FourierTable};
    use crate::grid::GridFunction;

    /// Product bump of half width `halfwidth` centred at `center`, on `[−1/2, 1/2]ⁿ`.
    pub fn bump_fn(n: usize, res: usize, center: &[f64], halfwidth: f64) -> GridFunction {
        let c = center.to_vec();
        GridFunction::from_fn(n, res, 0.5, move |x| {
            x.iter()
                .zip(&c)
                .map(|(a, b)| bump((a - b) / halfwidth))
                .product()
        })
    }

    /// Three bumps of half width 1/4 at slightly different centres.
    pub fn bump_inputs(n: usize, res: usize) -> Vec<GridFunction> {
        let offsets = [0.0, 0.02, -0.03];
        offsets
            .iter()
            .map(|o| {
                let c: Vec<f64> = (0..n).map(|a| o * (a as f64 + 1.0)).collect();
                bump_fn(n, res, &c, 0.25)
            })
            .collect()
    }

    /// Transforms with fitted envelopes attached, ready for the dual form.
    pub fn enveloped_tables(f: &[GridFunction], xi_max: usize) -> Vec<FourierTable> {
        f.iter()
            .map(|g| {
                let t = function_table(g, xi_max, 1.0).expect("valid window");
                let e = t.fitted_envelope();
                t.with_envelope(e)
            })
            .collect()
    }
}
