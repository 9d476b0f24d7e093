//! Configuration maps `Φ(x,y) = (x, x+A₁y, …, x+A_ky+Q(y)eₙ)` and their hypothesis checks.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bump::{bump, Profile, BUMP_INTEGRAL};
use crate::error::{param, Error, Result};

/// Relative singular-value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

pub fn numerical_rank(mat: &DMatrix<f64>) -> usize {
    if mat.nrows() == 0 || mat.ncols() == 0 {
        return 0;
    }
    let sv = mat.clone().svd(false, false).singular_values;
    let top = sv.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * top).count()
}

/// The matrices `A₁…A_k`, each `n × m` and stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixSystem {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub matrices: Vec<Vec<f64>>,
}

impl MatrixSystem {
    pub fn new(n: usize, m: usize, matrices: Vec<Vec<f64>>) -> Result<Self> {
        let k = matrices.len();
        if n == 0 || m == 0 || k == 0 {
            return param("n, m and k must be positive");
        }
        if let Some(bad) = matrices.iter().position(|a| a.len() != n * m) {
            return param(format!(
                "matrix {} has {} entries, expected {}",
                bad + 1,
                matrices[bad].len(),
                n * m
            ));
        }
        Ok(Self { n, m, k, matrices })
    }

    pub fn from_rows(rows: &[&[&[f64]]]) -> Result<Self> {
        let n = rows.first().map_or(0, |a| a.len());
        let m = rows.first().and_then(|a| a.first()).map_or(0, |r| r.len());
        let matrices = rows
            .iter()
            .map(|a| a.iter().flat_map(|r| r.iter().cloned()).collect())
            .collect();
        Self::new(n, m, matrices)
    }

    /// `A_j` as a matrix; `A₀ = 0`.
    pub fn matrix(&self, j: usize) -> DMatrix<f64> {
        if j == 0 {
            DMatrix::zeros(self.n, self.m)
        } else {
            DMatrix::from_row_slice(self.n, self.m, &self.matrices[j - 1])
        }
    }

    /// The `kn × m` matrix `𝐀` with `𝐀ᵀ = [A₁ᵀ … A_kᵀ]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.k * self.n, self.m);
        for j in 0..self.k {
            out.rows_mut(j * self.n, self.n)
                .copy_from(&self.matrix(j + 1));
        }
        out
    }

    /// `A_j y` (zero for `j = 0`).
    pub fn apply(&self, j: usize, y: &[f64], out: &mut [f64]) {
        if j == 0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let a = &self.matrices[j - 1];
        for r in 0..self.n {
            out[r] = (0..self.m).map(|c| a[r * self.m + c] * y[c]).sum();
        }
    }

    /// `𝐀ᵀξ` for `ξ = (ξ₁,…,ξ_k)` flattened to length `kn`.
    pub fn transpose_apply(&self, xi: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.k {
            let a = &self.matrices[j];
            for r in 0..self.n {
                let x = xi[j * self.n + r];
                if x != 0.0 {
                    for c in 0..self.m {
                        out[c] += a[r * self.m + c] * x;
                    }
                }
            }
        }
    }

    pub fn scaled(&self, j: usize, s: f64) -> Self {
        let mut out = self.clone();
        out.matrices[j - 1].iter_mut().for_each(|v| *v *= s);
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    pub nondegenerate: bool,
    /// First index set (from `{0,…,k}`) whose stacked matrix is rank deficient.
    pub witness: Option<Vec<usize>>,
    pub r: usize,
    pub n_prime: usize,
    /// Verdict of the omission/difference form, checked when `m ≥ (k−1)n`.
    pub omission_form: Option<bool>,
}

impl NondegeneracyReport {
    pub fn forms_agree(&self) -> bool {
        self.omission_form.is_none_or(|b| b == self.nondegenerate)
    }
}

fn subsets(size: usize, pool: usize) -> Vec<Vec<usize>> {
    fn rec(
        start: usize,
        pool: usize,
        left: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..=pool - left {
            cur.push(i);
            rec(i + 1, pool, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if size <= pool {
        rec(0, pool, size, &mut Vec::new(), &mut out);
    }
    out
}

fn hstack(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks[0].nrows();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.columns_mut(c, b.ncols()).copy_from(b);
        c += b.ncols();
    }
    out
}

pub fn check_nondegenerate(system: &MatrixSystem) -> Result<NondegeneracyReport> {
    let (n, m, k) = (system.n, system.m, system.k);
    if m < n || m >= k * n {
        return param(format!(
            "m = {m} admits no decomposition (k−r)n + n' with 1 ≤ r < k for n = {n}, k = {k}"
        ));
    }
    let blocks = m / n;
    let r = k - blocks;
    let n_prime = m % n;
    let width = blocks + 1;

    let mut witness = None;
    for set in subsets(width, k + 1) {
        let mut mat = DMatrix::zeros(m + n, width * n);
        for (c, &j) in set.iter().enumerate() {
            mat.view_mut((0, c * n), (m, n))
                .copy_from(&system.matrix(j).transpose());
            mat.view_mut((m, c * n), (n, n))
                .copy_from(&DMatrix::identity(n, n));
        }
        if numerical_rank(&mat) < width * n {
            witness = Some(set);
            break;
        }
    }

    let omission_form = (m >= (k - 1) * n).then(|| {
        (1..=k).all(|j| {
            let others: Vec<usize> = (1..=k).filter(|&i| i != j).collect();
            if others.is_empty() {
                return true;
            }
            let omit = hstack(
                &others
                    .iter()
                    .map(|&i| system.matrix(i).transpose())
                    .collect::<Vec<_>>(),
            );
            let diff = hstack(
                &others
                    .iter()
                    .map(|&i| system.matrix(i).transpose() - system.matrix(j).transpose())
                    .collect::<Vec<_>>(),
            );
            numerical_rank(&omit) == (k - 1) * n && numerical_rank(&diff) == (k - 1) * n
        })
    });

    Ok(NondegeneracyReport {
        nondegenerate: witness.is_none(),
        witness,
        r,
        n_prime,
        omission_form,
    })
}

/// Real polynomial in `m` variables, keyed by exponent multi-index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialPhase {
    pub m: usize,
    pub coeffs: BTreeMap<Vec<u32>, f64>,
}

impl PolynomialPhase {
    pub fn new(m: usize, coeffs: BTreeMap<Vec<u32>, f64>) -> Result<Self> {
        if coeffs.keys().any(|k| k.len() != m) {
            return param("multi-index length differs from m");
        }
        let q = Self {
            m,
            coeffs: coeffs.into_iter().filter(|(_, c)| *c != 0.0).collect(),
        };
        if q.coeffs.contains_key(&vec![0; m]) {
            return param("Q must vanish at the origin");
        }
        Ok(q)
    }

    pub fn zero(m: usize) -> Self {
        Self {
            m,
            coeffs: BTreeMap::new(),
        }
    }

    /// `|y|²`.
    pub fn squared_norm(m: usize) -> Self {
        let coeffs = (0..m)
            .map(|i| {
                let mut e = vec![0; m];
                e[i] = 2;
                (e, 1.0)
            })
            .collect();
        Self { m, coeffs }
    }

    pub fn with_term(mut self, exps: Vec<u32>, c: f64) -> Self {
        *self.coeffs.entry(exps).or_insert(0.0) += c;
        self.coeffs.retain(|_, v| *v != 0.0);
        self
    }

    pub fn degree(&self) -> u32 {
        self.coeffs
            .keys()
            .map(|e| e.iter().sum())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .map(|(e, c)| {
                c * e
                    .iter()
                    .zip(y)
                    .map(|(&p, &v)| v.powi(p as i32))
                    .product::<f64>()
            })
            .sum()
    }

    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.m];
        for (e, c) in &self.coeffs {
            for i in 0..self.m {
                if e[i] == 0 {
                    continue;
                }
                let mut t = c * e[i] as f64;
                for (a, (&p, &v)) in e.iter().zip(y).enumerate() {
                    let p = if a == i { p - 1 } else { p };
                    t *= v.powi(p as i32);
                }
                g[i] += t;
            }
        }
        g
    }

    pub fn hessian(&self, y: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.m, self.m);
        for (e, c) in &self.coeffs {
            for i in 0..self.m {
                for j in 0..self.m {
                    let mut ex = e.clone();
                    let mut t = *c;
                    if ex[i] == 0 {
                        continue;
                    }
                    t *= ex[i] as f64;
                    ex[i] -= 1;
                    if ex[j] == 0 {
                        continue;
                    }
                    t *= ex[j] as f64;
                    ex[j] -= 1;
                    h[(i, j)] += t * ex
                        .iter()
                        .zip(y)
                        .map(|(&p, &v)| v.powi(p as i32))
                        .product::<f64>();
                }
            }
        }
        h
    }

    /// Per-axis coefficient lists (index = power) when no monomial mixes variables.
    pub fn separable_parts(&self) -> Option<Vec<Vec<f64>>> {
        let mut parts = vec![vec![0.0; self.degree() as usize + 1]; self.m];
        for (e, c) in &self.coeffs {
            let nz: Vec<usize> = (0..self.m).filter(|&i| e[i] > 0).collect();
            if nz.len() > 1 {
                return None;
            }
            if let Some(&i) = nz.first() {
                parts[i][e[i] as usize] += c;
            }
        }
        Some(parts)
    }
}

/// Tensor bump cutoff `ψ` with `ψ ≥ 1` on `[−c,c]^m`, supported in `[−support, support]^m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub m: usize,
    pub c: f64,
    pub support: f64,
    pub profile: String,
}

impl CutoffSpec {
    pub fn new(m: usize, support: f64) -> Self {
        Self {
            m,
            c: support / 2.0,
            support,
            profile: Profile::GaussianBump.name().into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p: Profile = self.profile.parse()?;
        if p != Profile::GaussianBump {
            return param("cutoff profile must be gaussian-bump");
        }
        if !(self.c > 0.0 && self.c < self.support) {
            return param("cutoff needs 0 < c < support");
        }
        Ok(())
    }

    /// Per-axis amplitude: `ψ(0) = 2` unless `ψ ≥ 1` on the inner box forces more.
    pub fn amplitude(&self) -> f64 {
        let inner = bump(0.0) / bump(self.c / self.support);
        2f64.powf(1.0 / self.m as f64).max(inner)
    }

    pub fn axis(&self, t: f64) -> f64 {
        self.amplitude() * bump(t / self.support) / bump(0.0)
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        let a = self.amplitude() / bump(0.0);
        y.iter().map(|&t| a * bump(t / self.support)).product()
    }

    pub fn axis_integral(&self) -> f64 {
        self.amplitude() * self.support * BUMP_INTEGRAL / bump(0.0)
    }

    pub fn integral(&self) -> f64 {
        self.axis_integral().powi(self.m as i32)
    }
}

/// Matrices, polynomial, cutoff and excluded subspaces of `ℝ^{n+m}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternSpec {
    pub system: MatrixSystem,
    pub q: PolynomialPhase,
    pub cutoff: CutoffSpec,
    pub excluded: Vec<Vec<Vec<f64>>>,
}

impl PatternSpec {
    pub fn new(system: MatrixSystem, q: PolynomialPhase, cutoff: CutoffSpec) -> Result<Self> {
        let spec = Self {
            system,
            q,
            cutoff,
            excluded: Vec::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q.m != self.system.m || self.cutoff.m != self.system.m {
            return param("Q, cutoff and matrices disagree on m");
        }
        self.cutoff.validate()?;
        let d = self.system.n + self.system.m;
        for basis in &self.excluded {
            if basis.iter().any(|v| v.len() != d) {
                return param("excluded subspace vectors must live in R^{n+m}");
            }
            let mat = DMatrix::from_fn(d, basis.len(), |r, c| basis[c][r]);
            if numerical_rank(&mat) >= d {
                return param("excluded subspaces must be strict");
            }
        }
        Ok(())
    }

    /// Exclude the coordinate hyperplanes `{y_i = 0}`.
    pub fn excluding_coordinate_planes(mut self) -> Self {
        let (n, m) = (self.system.n, self.system.m);
        for i in 0..m {
            let basis = (0..n + m)
                .filter(|&c| c != n + i)
                .map(|c| {
                    let mut v = vec![0.0; n + m];
                    v[c] = 1.0;
                    v
                })
                .collect();
            self.excluded.push(basis);
        }
        self
    }

    pub fn n(&self) -> usize {
        self.system.n
    }

    pub fn m(&self) -> usize {
        self.system.m
    }

    pub fn k(&self) -> usize {
        self.system.k
    }

    pub fn psi(&self, y: &[f64]) -> f64 {
        self.cutoff.eval(y)
    }

    /// Shifts `(A₁y, …, A_{k−1}y, A_ky + Q(y)eₙ)` without the domain check.
    pub fn shifts_unchecked(&self, y: &[f64]) -> Vec<Vec<f64>> {
        let (n, k) = (self.n(), self.k());
        let mut out = vec![vec![0.0; n]; k];
        for (j, s) in out.iter_mut().enumerate() {
            self.system.apply(j + 1, y, s);
        }
        out[k - 1][n - 1] += self.q.eval(y);
        out
    }

    pub fn eval_shifts(&self, y: &[f64]) -> Result<Vec<Vec<f64>>> {
        if y.len() != self.m() {
            return param("y has the wrong length");
        }
        if y.iter().any(|v| v.abs() > self.cutoff.support) {
            return Err(Error::Domain(format!(
                "y outside the cutoff support [-{0}, {0}]^m",
                self.cutoff.support
            )));
        }
        Ok(self.shifts_unchecked(y))
    }

    /// Distance from `(x, y)` to an excluded subspace.
    pub fn distance_to_subspace(point: &[f64], basis: &[Vec<f64>]) -> f64 {
        let d = point.len();
        if basis.is_empty() {
            return point.iter().map(|v| v * v).sum::<f64>().sqrt();
        }
        let mat = DMatrix::from_fn(d, basis.len(), |r, c| basis[c][r]);
        let svd = mat.svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let top = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let p = nalgebra::DVector::from_column_slice(point);
        let mut proj = nalgebra::DVector::zeros(d);
        for (i, s) in svd.singular_values.iter().enumerate() {
            if *s > RANK_TOL * top {
                let col = u.column(i);
                proj += col * col.dot(&p);
            }
        }
        (p - proj).norm()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternCheckReport {
    pub dimension_gate: bool,
    pub beta0_in_range: bool,
    pub nondegenerate: bool,
    pub q_vanishes_at_zero: bool,
    pub hessian_det_at_zero: f64,
    pub hessian_nonsingular: bool,
    pub hessian_min_abs_det: f64,
    pub hessian_bounded_away: bool,
}

impl PatternCheckReport {
    pub fn passes(&self) -> bool {
        self.dimension_gate
            && self.beta0_in_range
            && self.nondegenerate
            && self.q_vanishes_at_zero
            && self.hessian_nonsingular
            && self.hessian_bounded_away
    }
}

/// Samples per axis for the Hessian scan over the cutoff support.
const HESSIAN_SAMPLES: usize = 9;

pub fn check_pattern_spec(
    spec: &PatternSpec,
    beta0: f64,
    hessian_threshold: f64,
) -> PatternCheckReport {
    let (n, m, k) = (spec.n(), spec.m(), spec.k());
    let dimension_gate = (k - 1) * n < m && m < k * n;
    let nondegenerate = check_nondegenerate(&spec.system)
        .map(|r| r.nondegenerate)
        .unwrap_or(false);
    let det0 = spec.q.hessian(&vec![0.0; m]).determinant();
    let mut min_det = f64::INFINITY;
    let s = spec.cutoff.support;
    let total = HESSIAN_SAMPLES.pow(m as u32);
    let mut idx = vec![0usize; m];
    let mut y = vec![0.0; m];
    for flat in 0..total {
        crate::grid::unflatten(flat, HESSIAN_SAMPLES, m, &mut idx);
        for a in 0..m {
            y[a] = -s + 2.0 * s * idx[a] as f64 / (HESSIAN_SAMPLES - 1) as f64;
        }
        min_det = min_det.min(spec.q.hessian(&y).determinant().abs());
    }
    PatternCheckReport {
        dimension_gate,
        beta0_in_range: beta0 > 0.0 && beta0 < n as f64,
        nondegenerate,
        q_vanishes_at_zero: spec.q.eval(&vec![0.0; m]) == 0.0,
        hessian_det_at_zero: det0,
        hessian_nonsingular: det0.abs() > 1e-10,
        hessian_min_abs_det: min_det,
        hessian_bounded_away: min_det > hessian_threshold,
    }
}

/// Fixtures used across the crate.
pub mod fixtures {
    use super::*;

    /// `n=1, m=1, k=2` with `A₁=[1]`, `A₂=[2]`, `Q=y²` and cutoff support 1/8.
    pub fn toy_spec() -> PatternSpec {
        PatternSpec::new(
            MatrixSystem::new(1, 1, vec![vec![1.0], vec![2.0]]).expect("valid toy system"),
            PolynomialPhase::squared_norm(1),
            CutoffSpec::new(1, 1.0 / 8.0),
        )
        .expect("valid toy spec")
    }

    /// `A₁=[[1,0,0],[0,1,0]]`, `A₂=[[0,0,1],[1,0,0]]`.
    pub fn showcase_system() -> MatrixSystem {
        MatrixSystem::new(
            2,
            3,
            vec![
                vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0],
            ],
        )
        .expect("valid showcase system")
    }

    pub fn degenerate_system() -> MatrixSystem {
        MatrixSystem::new(
            2,
            3,
            vec![
                vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            ],
        )
        .expect("valid system")
    }

    pub fn repaired_system() -> MatrixSystem {
        MatrixSystem::new(
            2,
            3,
            vec![
                vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0, 1.0, 1.0, 1.0],
            ],
        )
        .expect("valid system")
    }

    /// Showcase system with `Q = |y|²` and the given cutoff support.
    pub fn showcase_spec(support: f64) -> PatternSpec {
        PatternSpec::new(
            showcase_system(),
            PolynomialPhase::squared_norm(3),
            CutoffSpec::new(3, support),
        )
        .expect("valid showcase spec")
    }
}
