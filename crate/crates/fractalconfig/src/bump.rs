//! The smooth bump `exp(-1/(1-t^2))` and its one-dimensional transforms.

use std::f64::consts::PI;
use std::str::FromStr;

use crate::error::Error;

/// `∫_{-1}^{1} exp(-1/(1-t^2)) dt`.
pub const BUMP_INTEGRAL: f64 = 0.443_993_816_168_079_4;

/// Trapezoid nodes used for one-dimensional bump quadrature.
const NODES: usize = 512;

pub fn bump(t: f64) -> f64 {
    let s = 1.0 - t * t;
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

/// Named smooth profiles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Profile {
    GaussianBump,
    DeltaLike,
}

impl Profile {
    pub fn name(&self) -> &'static str {
        match self {
            Profile::GaussianBump => "gaussian-bump",
            Profile::DeltaLike => "delta-like",
        }
    }
}

impl FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "gaussian-bump" => Ok(Profile::GaussianBump),
            "delta-like" => Ok(Profile::DeltaLike),
            other => Err(Error::Parameter(format!("unknown profile '{other}'"))),
        }
    }
}

fn trapezoid(f: impl Fn(f64) -> f64, nodes: usize) -> f64 {
    let h = 2.0 / nodes as f64;
    (1..nodes).map(|i| f(-1.0 + i as f64 * h)).sum::<f64>() * h
}

/// `∫ b(t) e(-ω t) dt`, real because `b` is even.
pub fn bump_transform(omega: f64) -> f64 {
    let nodes = NODES.max((16.0 * omega.abs()) as usize);
    trapezoid(|t| bump(t) * (2.0 * PI * omega * t).cos(), nodes)
}

/// `1 - b̂(ω)/b̂(0)` computed without cancellation.
pub fn bump_transform_defect(omega: f64) -> f64 {
    let nodes = NODES.max((16.0 * omega.abs()) as usize);
    let s = |t: f64| (PI * omega * t).sin();
    trapezoid(|t| 2.0 * bump(t) * s(t) * s(t), nodes) / BUMP_INTEGRAL
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integral_constant() {
        assert!((bump_transform(0.0) - BUMP_INTEGRAL).abs() < 1e-13);
    }

    #[test]
    fn defect_matches_difference_at_moderate_frequency() {
        let w = 0.7;
        let direct = 1.0 - bump_transform(w) / BUMP_INTEGRAL;
        assert!((direct - bump_transform_defect(w)).abs() < 1e-12);
        let tiny = bump_transform_defect(1e-9);
        assert!(tiny > 0.0 && tiny < 1e-16);
    }
}
