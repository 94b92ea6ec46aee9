//! Smooth manufactured solutions with closed-form forcing.
//!
//! Finite differences are exact on quadratics, so quadratic solutions only
//! test round-off. The problems here have nontrivial fourth derivatives and
//! therefore exercise the truncation error:
//!
//! * `Poisson`: `u = |x|² + e^{x₁} cos x₂`, `Δu = 2n` (requires `n ≥ 2`);
//! * `Separable`: `u = Σ_i G(x_i)` with `G(0) = 0` and
//!   `G'(t) = (t|t|^p + 1)^{1/(p+1)}`, so that `|G'|^p G'' = |t|^p` and the
//!   forcing is `f = Σ_i |x_i|^p`. `G` is smooth for `|t| < 1`.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::operators::{abs_pow, DegeneracyExponent};

const GAUSS_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GAUSS_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];
const PANELS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Problem {
    Poisson { dim: usize },
    Separable { dim: usize, p: f64 },
}

impl Problem {
    pub fn poisson(dim: usize) -> Result<Self> {
        if !(2..=4).contains(&dim) {
            return Err(invalid(format!(
                "the Poisson problem needs 2 <= n <= 4, got {dim}"
            )));
        }
        Ok(Self::Poisson { dim })
    }

    pub fn separable(dim: usize, p: DegeneracyExponent) -> Result<Self> {
        if !(1..=4).contains(&dim) {
            return Err(invalid(format!("dimension must be in 1..=4, got {dim}")));
        }
        Ok(Self::Separable { dim, p: p.value() })
    }

    pub fn dim(&self) -> usize {
        match *self {
            Self::Poisson { dim } | Self::Separable { dim, .. } => dim,
        }
    }

    pub fn p(&self) -> DegeneracyExponent {
        match *self {
            Self::Poisson { .. } => DegeneracyExponent::new(0.0).expect("zero is admissible"),
            Self::Separable { p, .. } => {
                DegeneracyExponent::new(p).expect("validated at construction")
            }
        }
    }

    pub fn exact(&self, x: &[f64]) -> f64 {
        match *self {
            Self::Poisson { .. } => x.iter().map(|v| v * v).sum::<f64>() + x[0].exp() * x[1].cos(),
            Self::Separable { p, .. } => x.iter().map(|&t| separable_profile(t, p)).sum(),
        }
    }

    pub fn forcing(&self, x: &[f64]) -> f64 {
        match *self {
            Self::Poisson { dim } => 2.0 * dim as f64,
            Self::Separable { p, .. } => x.iter().map(|&t| abs_pow(t, p)).sum(),
        }
    }
}

/// `G'(t) = sgn(s)|s|^{1/(p+1)}` with `s = t|t|^p + 1`.
pub fn separable_derivative(t: f64, p: f64) -> f64 {
    let s = abs_pow(t, p) * t + 1.0;
    s.signum() * s.abs().powf(1.0 / (p + 1.0))
}

/// `G(t) = ∫_0^t G'` by composite five-point Gauss-Legendre quadrature.
/// The integrand is smooth on each side of 0, so the integral is split there.
pub fn separable_profile(t: f64, p: f64) -> f64 {
    let w = t / PANELS as f64;
    let mut acc = 0.0;
    for k in 0..PANELS {
        let mid = (k as f64 + 0.5) * w;
        for (xi, wi) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
            acc += wi * separable_derivative(mid + 0.5 * w * xi, p);
        }
    }
    0.5 * w * acc
}
