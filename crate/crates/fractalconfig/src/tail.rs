//! Integrals of envelope majorants over the exterior of a truncation window.
//!
//! Points are written `ξ = ρv` with `v` on the boundary of the unit cube
//! `[-1,1]^d`, so `dξ = ρ^{d-1} dρ dS(v)`.  Each face carries a midpoint grid
//! and each direction a log-spaced radial trapezoid, closed by a power-law
//! remainder fitted to the last two radial samples.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailConfig {
    /// Midpoint nodes per face axis.
    pub face_nodes: usize,
    /// Radial nodes per e-fold.
    pub radial_per_efold: usize,
    /// Number of e-folds integrated before the power-law remainder.
    pub efolds: f64,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            face_nodes: 8,
            radial_per_efold: 8,
            efolds: 8.0,
        }
    }
}

impl TailConfig {
    pub fn coarse() -> Self {
        Self {
            face_nodes: 4,
            radial_per_efold: 6,
            efolds: 6.0,
        }
    }
}

/// `∫_{ρ > ρ_min(v)} g(ρv) ρ^{d-1} dρ dS(v)`; `+∞` when the integrand does not decay faster than `ρ^{-d}`.
pub fn exterior_integral<R, G>(dim: usize, rho_min: R, integrand: G, cfg: &TailConfig) -> f64
where
    R: Fn(&[f64]) -> f64 + Sync + Send,
    G: Fn(&[f64]) -> f64 + Sync + Send,
{
    if dim == 0 {
        return 0.0;
    }
    let g = cfg.face_nodes.max(1);
    let per_face = g.pow(dim as u32 - 1);
    let face_area = (2.0 / g as f64).powi(dim as i32 - 1);
    let steps = ((cfg.efolds * cfg.radial_per_efold as f64).ceil() as usize).max(2);
    let du = cfg.efolds / steps as f64;
    let d = dim as f64;

    let contributions = crate::par::map_range(2 * dim * per_face, |job| {
        let face = job / per_face;
        let cell = job % per_face;
        let (axis, sign) = (face / 2, if face.is_multiple_of(2) { 1.0 } else { -1.0 });
        let mut v = vec![0.0; dim];
        let mut idx = vec![0usize; dim.saturating_sub(1)];
        crate::grid::unflatten(cell, g, dim - 1, &mut idx);
        let mut c = 0;
        for (a, slot) in v.iter_mut().enumerate() {
            if a == axis {
                *slot = sign;
            } else {
                *slot = -1.0 + (idx[c] as f64 + 0.5) * 2.0 / g as f64;
                c += 1;
            }
        }
        let r0 = rho_min(&v);
        if !r0.is_finite() {
            return 0.0;
        }
        let mut point = vec![0.0; dim];
        let mut eval = |rho: f64| {
            for (p, x) in point.iter_mut().zip(&v) {
                *p = rho * x;
            }
            integrand(&point) * rho.powf(d)
        };
        let mut sum = 0.0;
        let mut last = (0.0, 0.0);
        let mut prev = (0.0, 0.0);
        for s in 0..=steps {
            let rho = r0 * (s as f64 * du).exp();
            let val = eval(rho);
            let wgt = if s == 0 || s == steps { 0.5 } else { 1.0 };
            sum += wgt * val * du;
            prev = last;
            last = (rho, val);
        }
        // Remainder: val(ρ) = g ρ^d behaves like ρ^{d-γ}; ∫_{ρ_max}^∞ g ρ^{d-1} dρ = val/(γ-d).
        let remainder = if last.1 <= 0.0 {
            0.0
        } else if prev.1 <= 0.0 {
            f64::INFINITY
        } else {
            let slope = (last.1 / prev.1).ln() / (last.0 / prev.0).ln();
            if slope < -1e-9 {
                last.1 / -slope
            } else {
                f64::INFINITY
            }
        };
        (sum + remainder) * face_area
    });
    if contributions.iter().any(|c| c.is_infinite()) {
        return f64::INFINITY;
    }
    crate::par::pairwise_sum(&contributions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_exterior_of_square() {
        // ∫_{|ξ|∞ > 1} (1+|ξ|∞)^{-4} dξ in 2-D: 8 ∫_1^∞ ρ (1+ρ)^{-4} dρ = 8 (1/(2·4) - 1/(3·8)) = 2/3.
        let v = exterior_integral(
            2,
            |_| 1.0,
            |x| (1.0 + x[0].abs().max(x[1].abs())).powi(-4),
            &TailConfig::default(),
        );
        assert!((v - 2.0 / 3.0).abs() < 2e-2, "{v}");
    }

    #[test]
    fn slow_decay_is_infinite() {
        let v = exterior_integral(
            2,
            |_| 1.0,
            |x| (1.0 + x[0].abs() + x[1].abs()).powi(-1),
            &TailConfig::default(),
        );
        assert!(v.is_infinite());
    }
}
