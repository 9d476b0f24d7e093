//! Exact Fourier–Stieltjes tables of atomic grid measures, decay certificates and moment norms.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fft::fftn;
use crate::grid::{flatten, unflatten, GridFunction};
use crate::measures::{fit_slope, GridMeasure};

/// Largest table accepted, in complex entries.
pub const TABLE_BUDGET: usize = 1 << 27;

/// Polynomial majorant `|F(ξ)| ≤ min(sup, amplitude·(1+|ξ|)^{-exponent})`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub amplitude: f64,
    pub exponent: f64,
    pub sup: f64,
}

impl Envelope {
    pub fn at(&self, radius: f64) -> f64 {
        self.sup
            .min(self.amplitude * (1.0 + radius).powf(-self.exponent))
    }

    pub fn powf(&self, p: f64) -> Envelope {
        Envelope {
            amplitude: self.amplitude.powf(p),
            exponent: self.exponent * p,
            sup: self.sup.powf(p),
        }
    }
}

/// Values of a transform on `{spacing·k : k ∈ ℤⁿ, |k|∞ ≤ xi_max}`, lexicographic in `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierTable {
    pub n: usize,
    pub xi_max: usize,
    pub spacing: f64,
    pub values: Vec<Complex64>,
    pub envelope: Option<Envelope>,
}

impl FourierTable {
    pub fn side(&self) -> usize {
        2 * self.xi_max + 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn constant(n: usize, xi_max: usize, spacing: f64, value: Complex64) -> Self {
        let len = (2 * xi_max + 1).pow(n as u32);
        Self {
            n,
            xi_max,
            spacing,
            values: vec![value; len],
            envelope: None,
        }
    }

    pub fn from_fn(n: usize, xi_max: usize, spacing: f64, f: impl Fn(&[i64]) -> Complex64) -> Self {
        let mut t = Self::constant(n, xi_max, spacing, Complex64::new(0.0, 0.0));
        let mut k = vec![0i64; n];
        for flat in 0..t.values.len() {
            t.lattice_into(flat, &mut k);
            t.values[flat] = f(&k);
        }
        t
    }

    /// Integer lattice coordinates of a flat index.
    pub fn lattice_into(&self, flat: usize, k: &mut [i64]) {
        let mut idx = [0usize; 8];
        unflatten(flat, self.side(), self.n, &mut idx[..self.n]);
        for a in 0..self.n {
            k[a] = idx[a] as i64 - self.xi_max as i64;
        }
    }

    pub fn lattice(&self, flat: usize) -> Vec<i64> {
        let mut k = vec![0; self.n];
        self.lattice_into(flat, &mut k);
        k
    }

    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        let r = self.xi_max as i64;
        let mut flat = 0usize;
        for &c in k {
            if c < -r || c > r {
                return None;
            }
            flat = flat * self.side() + (c + r) as usize;
        }
        Some(flat)
    }

    pub fn get(&self, k: &[i64]) -> Option<Complex64> {
        self.index_of(k).map(|i| self.values[i])
    }

    /// Euclidean length of the frequency at a flat index.
    pub fn radius(&self, flat: usize) -> f64 {
        let mut k = [0i64; 8];
        self.lattice_into(flat, &mut k[..self.n]);
        k[..self.n]
            .iter()
            .map(|&c| (c as f64 * self.spacing).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.n as i32)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// `|F|^p` as a real table, carrying the powered envelope.
    pub fn abs_pow(&self, p: f64) -> Self {
        Self {
            values: self
                .values
                .iter()
                .map(|v| Complex64::new(v.norm().powf(p), 0.0))
                .collect(),
            envelope: self.envelope.map(|e| e.powf(p)),
            ..self.clone()
        }
    }

    /// Majorant at an arbitrary frequency radius: the envelope if present, else the table sup.
    pub fn envelope_at(&self, radius: f64) -> f64 {
        match &self.envelope {
            Some(e) => e.at(radius),
            None => self.sup_norm(),
        }
    }

    pub fn with_envelope(mut self, e: Envelope) -> Self {
        self.envelope = Some(e);
        self
    }

    /// Envelope whose exponent is the fitted shell decay of this table.
    pub fn fitted_envelope(&self) -> Envelope {
        let exponent = shell_fit(self).0.max(0.0);
        let amplitude = (0..self.len())
            .map(|i| self.values[i].norm() * (1.0 + self.radius(i)).powf(exponent))
            .fold(0.0, f64::max);
        Envelope {
            amplitude,
            exponent,
            sup: self.sup_norm(),
        }
    }

    /// Make `values(-k) = conj(values(k))` hold exactly.
    pub fn symmetrize(&mut self) {
        let len = self.values.len();
        for i in 0..len / 2 {
            let j = len - 1 - i;
            let a = self.values[i];
            let b = self.values[j];
            let avg = (a + b.conj()) * 0.5;
            self.values[i] = avg;
            self.values[j] = avg.conj();
        }
        let mid = len / 2;
        self.values[mid].im = 0.0;
    }
}

fn twiddle_cost(lines: usize, res: usize, side: usize) -> f64 {
    (lines * res * side) as f64
}

fn fft_cost(lines: usize, p: usize) -> f64 {
    lines as f64 * p as f64 * (p as f64).log2().max(1.0) * 2.0
}

/// Replace axis `axis` of length `res` by the window of length `side`.
fn transform_axis(
    data: &[Complex64],
    dims: &[usize],
    axis: usize,
    xi_max: usize,
    spacing: f64,
    coords: &[f64],
    cell: f64,
) -> Vec<Complex64> {
    let res = dims[axis];
    let side = 2 * xi_max + 1;
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    let lines = outer * inner;
    let mut out = vec![Complex64::new(0.0, 0.0); outer * side * inner];

    let period = 1.0 / (spacing * cell);
    let p_int = period.round();
    let commensurate = (period - p_int).abs() < 1e-9 * period && p_int as usize >= res;
    let use_fft = commensurate && fft_cost(lines, p_int as usize) < twiddle_cost(lines, res, side);

    if use_fft {
        let p = p_int as usize;
        let phase: Vec<Complex64> = (0..side)
            .map(|q| {
                let k = q as f64 - xi_max as f64;
                Complex64::from_polar(1.0, -2.0 * PI * spacing * k * coords[0])
            })
            .collect();
        let mut buf = vec![Complex64::new(0.0, 0.0); p];
        for o in 0..outer {
            for i in 0..inner {
                buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
                for j in 0..res {
                    buf[j] = data[(o * res + j) * inner + i];
                }
                fftn(&mut buf, &[p], false);
                for q in 0..side {
                    let k = q as i64 - xi_max as i64;
                    let r = k.rem_euclid(p as i64) as usize;
                    out[(o * side + q) * inner + i] = buf[r] * phase[q];
                }
            }
        }
    } else {
        let tw: Vec<Complex64> = (0..side)
            .flat_map(|q| {
                let k = q as f64 - xi_max as f64;
                coords
                    .iter()
                    .map(move |&x| Complex64::from_polar(1.0, -2.0 * PI * spacing * k * x))
            })
            .collect();
        let rows = crate::par::map_range(outer * side, |row| {
            let (o, q) = (row / side, row % side);
            let t = &tw[q * res..(q + 1) * res];
            (0..inner)
                .map(|i| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for j in 0..res {
                        acc += data[(o * res + j) * inner + i] * t[j];
                    }
                    acc
                })
                .collect::<Vec<_>>()
        });
        for (row, vals) in rows.into_iter().enumerate() {
            out[row * inner..(row + 1) * inner].copy_from_slice(&vals);
        }
    }
    out
}

/// Exact exponential sum of cell-centred atoms.
pub fn transform_atoms(
    n: usize,
    res: usize,
    halfwidth: f64,
    masses: &[f64],
    xi_max: usize,
    spacing: f64,
) -> Result<FourierTable> {
    if xi_max < 1 {
        return param("xi_max must be at least 1");
    }
    if !(spacing > 0.0) {
        return param("spacing must be positive");
    }
    let side = 2 * xi_max + 1;
    let entries = side.checked_pow(n as u32).unwrap_or(usize::MAX);
    if entries > TABLE_BUDGET {
        let advisory = (TABLE_BUDGET as f64).powf(1.0 / n as f64) as usize / 2;
        return Err(Error::Resource(format!(
            "window of {entries} entries exceeds the budget; use xi_max <= {advisory}"
        )));
    }
    let cell = 2.0 * halfwidth / res as f64;
    let coords: Vec<f64> = (0..res)
        .map(|j| -halfwidth + (j as f64 + 0.5) * cell)
        .collect();
    let mut data: Vec<Complex64> = masses.iter().map(|&m| Complex64::new(m, 0.0)).collect();
    let mut dims = vec![res; n];
    for axis in 0..n {
        data = transform_axis(&data, &dims, axis, xi_max, spacing, &coords, cell);
        dims[axis] = side;
    }
    let mut t = FourierTable {
        n,
        xi_max,
        spacing,
        values: data,
        envelope: None,
    };
    t.symmetrize();
    Ok(t)
}

pub fn fourier_table(mu: &GridMeasure, xi_max: usize, spacing: f64) -> Result<FourierTable> {
    transform_atoms(mu.n, mu.res, mu.halfwidth, &mu.mass, xi_max, spacing)
}

/// Transform of a sampled density (midpoint rule, i.e. the atomic transform of its cell masses).
pub fn function_table(f: &GridFunction, xi_max: usize, spacing: f64) -> Result<FourierTable> {
    let v = f.cell_volume();
    let masses: Vec<f64> = f.values.iter().map(|x| x * v).collect();
    transform_atoms(f.n, f.res, f.halfwidth, &masses, xi_max, spacing)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierDecayReport {
    pub beta: f64,
    pub d_alpha: f64,
    pub window: usize,
    /// Lattice point attaining `d_alpha` (lowest frequency among ties).
    pub argmax: Vec<i64>,
    /// Least-squares decay exponent of `|F|` over dyadic shells.
    pub fitted_exponent: f64,
    pub shell_radii: Vec<f64>,
    pub shell_max: Vec<f64>,
}

impl FourierDecayReport {
    /// Certified envelope `D_α (1+|ξ|)^{-β/2}`.
    pub fn envelope(&self, sup: f64) -> Envelope {
        Envelope {
            amplitude: self.d_alpha,
            exponent: self.beta / 2.0,
            sup,
        }
    }
}

/// Decay exponent fitted on dyadic shells, with the shell data.
fn shell_fit(table: &FourierTable) -> (f64, Vec<f64>, Vec<f64>) {
    let reach = table.xi_max as f64 * table.spacing;
    let mut shells: Vec<(f64, f64)> = Vec::new();
    let mut j = 0;
    while 2f64.powi(j) <= reach {
        shells.push((0.0, 0.0));
        j += 1;
    }
    for i in 0..table.len() {
        let r = table.radius(i);
        if r < 1.0 {
            continue;
        }
        let s = r.log2().floor() as usize;
        if s < shells.len() {
            let v = table.values[i].norm();
            if v > shells[s].1 {
                shells[s] = (r, v);
            }
        }
    }
    let full = shells
        .iter()
        .enumerate()
        .filter(|(j, _)| 2f64.powi(*j as i32 + 1) <= reach)
        .count()
        .max(2);
    let used: Vec<(f64, f64)> = shells
        .into_iter()
        .take(full)
        .filter(|(r, v)| *r > 0.0 && *v > 0.0)
        .collect();
    let xs: Vec<f64> = used.iter().map(|(r, _)| (1.0 + r).ln()).collect();
    let ys: Vec<f64> = used.iter().map(|(_, v)| v.ln()).collect();
    let slope = fit_slope(&xs, &ys);
    (
        -slope,
        used.iter().map(|u| u.0).collect(),
        used.iter().map(|u| u.1).collect(),
    )
}

pub fn certify_fourier_decay(table: &FourierTable, beta: f64) -> Result<FourierDecayReport> {
    if !(beta > 0.0 && beta < table.n as f64) {
        return param(format!("beta {beta} outside (0, {})", table.n));
    }
    if table.is_empty() {
        return param("empty table");
    }
    let mut best = (f64::NEG_INFINITY, f64::INFINITY, 0usize);
    for i in 0..table.len() {
        let r = table.radius(i);
        let v = table.values[i].norm() * (1.0 + r).powf(beta / 2.0);
        if v > best.0 || (v == best.0 && r < best.1) {
            best = (v, r, i);
        }
    }
    let (fitted_exponent, shell_radii, shell_max) = shell_fit(table);
    Ok(FourierDecayReport {
        beta,
        d_alpha: best.0,
        window: table.xi_max,
        argmax: table.lattice(best.2),
        fitted_exponent,
        shell_radii,
        shell_max,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentNormReport {
    pub delta: f64,
    pub norm: f64,
    pub critical_exponent: f64,
    /// `2 + δ ≥ p₀`.
    pub regime: bool,
    /// `norm / D_α^{1/2}`.
    pub constant: f64,
}

/// `p₀ = 2 + 4(n − α)/β`.
pub fn critical_exponent(n: usize, alpha: f64, beta: f64) -> f64 {
    2.0 + 4.0 * (n as f64 - alpha) / beta
}

pub fn moment_norm(
    table: &FourierTable,
    delta: f64,
    alpha: f64,
    decay: &FourierDecayReport,
) -> Result<MomentNormReport> {
    if !(delta > 0.0) {
        return param("delta must be positive");
    }
    let q = 2.0 + delta;
    let sum = crate::par::sum_range(table.len(), |i| table.values[i].norm().powf(q));
    let norm = (sum * table.cell_volume()).powf(1.0 / q);
    let p0 = critical_exponent(table.n, alpha, decay.beta);
    Ok(MomentNormReport {
        delta,
        norm,
        critical_exponent: p0,
        regime: q >= p0 - 1e-12,
        constant: norm / decay.d_alpha.sqrt(),
    })
}

/// Index helper for callers holding integer frequencies.
pub fn flat_index(k: &[i64], xi_max: usize) -> Option<usize> {
    let r = xi_max as i64;
    if k.iter().any(|&c| c < -r || c > r) {
        return None;
    }
    let idx: Vec<usize> = k.iter().map(|&c| (c + r) as usize).collect();
    Some(flatten(&idx, 2 * xi_max + 1))
}
