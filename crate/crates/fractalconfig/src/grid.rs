//! Cell-centred sample grids over centred cubes.

use crate::error::{param, Result};

/// Row-major (first axis slowest) flattening helpers for `side^n` arrays.
pub fn unflatten(mut flat: usize, side: usize, n: usize, out: &mut [usize]) {
    for a in (0..n).rev() {
        out[a] = flat % side;
        flat /= side;
    }
}

pub fn flatten(idx: &[usize], side: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * side + i)
}

/// Samples of a real function at the cell centres of `[-halfwidth, halfwidth]^n`.
///
/// Off-grid evaluation is multilinear between cell centres, with the function
/// taken to vanish at the centres of the (virtual) cells just outside the box.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub n: usize,
    pub res: usize,
    pub halfwidth: f64,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(n: usize, res: usize, halfwidth: f64) -> Self {
        Self {
            n,
            res,
            halfwidth,
            values: vec![0.0; res.pow(n as u32)],
        }
    }

    pub fn from_fn(n: usize, res: usize, halfwidth: f64, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut g = Self::zeros(n, res, halfwidth);
        let mut x = vec![0.0; n];
        for flat in 0..g.values.len() {
            g.center_into(flat, &mut x);
            g.values[flat] = f(&x);
        }
        g
    }

    pub fn new(n: usize, res: usize, halfwidth: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != res.pow(n as u32) {
            return param(format!(
                "expected {} samples, got {}",
                res.pow(n as u32),
                values.len()
            ));
        }
        Ok(Self {
            n,
            res,
            halfwidth,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cell_width(&self) -> f64 {
        2.0 * self.halfwidth / self.res as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_width().powi(self.n as i32)
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        -self.halfwidth + (i as f64 + 0.5) * self.cell_width()
    }

    pub fn center_into(&self, flat: usize, x: &mut [f64]) {
        let mut idx = [0usize; 8];
        unflatten(flat, self.res, self.n, &mut idx[..self.n]);
        for a in 0..self.n {
            x[a] = self.coordinate(idx[a]);
        }
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        self.center_into(flat, &mut x);
        x
    }

    /// Midpoint-rule integral.
    pub fn integral(&self) -> f64 {
        crate::par::pairwise_sum(&self.values) * self.cell_volume()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.n == other.n && self.res == other.res && self.halfwidth == other.halfwidth
    }

    /// Multilinear interpolation; zero beyond the outer ring of virtual cells.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let w = self.cell_width();
        let res = self.res as isize;
        let mut base = [0isize; 8];
        let mut frac = [0.0f64; 8];
        for a in 0..n {
            let u = (x[a] + self.halfwidth) / w - 0.5;
            let f = u.floor();
            base[a] = f as isize;
            if base[a] < -1 || base[a] >= res {
                return 0.0;
            }
            frac[a] = u - f;
        }
        let mut total = 0.0;
        'corner: for corner in 0..(1usize << n) {
            let mut weight = 1.0;
            let mut flat = 0usize;
            for a in 0..n {
                let bit = (corner >> (n - 1 - a)) & 1;
                let i = base[a] + bit as isize;
                if i < 0 || i >= res {
                    continue 'corner;
                }
                weight *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                flat = flat * self.res + i as usize;
            }
            if weight != 0.0 {
                total += weight * self.values[flat];
            }
        }
        total
    }

    /// Pointwise linear combination on a shared grid.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if !self.same_grid(other) {
            return param("grid mismatch in linear combination");
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }
}
