//! Pucci extremal operators, the coordinatewise weighted Hessian and the
//! residuals of the two viscosity inequalities
//!
//! ```text
//! M-( D(|Du|^{p/2}) D²u D(|Du|^{p/2}) ) - Λ|Du|^{p+1} <= f
//! M+( D(|Du|^{p/2}) D²u D(|Du|^{p/2}) ) + Λ|Du|^{p+1} >= f
//! ```

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::matrix::{sym_eigenvalues, SymMatrix};

/// Ellipticity constants `0 < lambda <= Lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EllipticityParams {
    lambda: f64,
    cap_lambda: f64,
}

impl EllipticityParams {
    pub fn new(lambda: f64, cap_lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && cap_lambda.is_finite() && lambda > 0.0 && lambda <= cap_lambda) {
            return Err(invalid(format!(
                "ellipticity requires 0 < lambda <= Lambda, got lambda = {lambda}, Lambda = {cap_lambda}"
            )));
        }
        Ok(Self { lambda, cap_lambda })
    }

    /// `lambda = Lambda = 1`, where both Pucci operators reduce to the trace.
    pub fn unit() -> Self {
        Self {
            lambda: 1.0,
            cap_lambda: 1.0,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn cap_lambda(&self) -> f64 {
        self.cap_lambda
    }
}

/// Degeneracy exponent `p >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct DegeneracyExponent(f64);

impl DegeneracyExponent {
    pub fn new(p: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 0.0) {
            return Err(invalid(format!(
                "degeneracy exponent must satisfy p >= 0, got {p}"
            )));
        }
        Ok(Self(p))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `|x|^e` with the convention `0^0 = 1`.
#[inline]
pub fn abs_pow(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if e == 1.0 {
        x.abs()
    } else if e == 2.0 {
        x * x
    } else {
        x.abs().powf(e)
    }
}

pub fn euclidean_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn split_sums(m: &SymMatrix) -> Result<(f64, f64)> {
    let ev = sym_eigenvalues(m)?;
    let neg = ev.iter().filter(|&&e| e < 0.0).sum();
    let pos = ev.iter().filter(|&&e| e > 0.0).sum();
    Ok((neg, pos))
}

/// `M-(M) = Λ Σ_{e<0} e + λ Σ_{e>0} e`.
pub fn pucci_minus(m: &SymMatrix, e: EllipticityParams) -> Result<f64> {
    let (neg, pos) = split_sums(m)?;
    Ok(e.cap_lambda * neg + e.lambda * pos)
}

/// `M+(M) = λ Σ_{e<0} e + Λ Σ_{e>0} e`.
pub fn pucci_plus(m: &SymMatrix, e: EllipticityParams) -> Result<f64> {
    let (neg, pos) = split_sums(m)?;
    Ok(e.lambda * neg + e.cap_lambda * pos)
}

/// Entry `(i, j)` is `|g_i|^{p/2} |g_j|^{p/2} H_ij`. Vanishing gradient
/// components zero out the matching row and column when `p > 0`.
pub fn weighted_hessian(g: &[f64], h: &SymMatrix, p: DegeneracyExponent) -> SymMatrix {
    assert_eq!(g.len(), h.dim(), "gradient and Hessian dimensions differ");
    let w: Vec<f64> = g.iter().map(|&gi| abs_pow(gi, p.0 / 2.0)).collect();
    h.conjugate_diag(&w)
}

fn check_dims(g: &[f64], h: &SymMatrix) -> Result<()> {
    if g.len() != h.dim() {
        return Err(invalid(format!(
            "gradient has {} components but Hessian is {}x{}",
            g.len(),
            h.dim(),
            h.dim()
        )));
    }
    Ok(())
}

/// `M-(weighted Hessian) - Λ|g|^{p+1} - f`.
pub fn lower_residual(
    g: &[f64],
    h: &SymMatrix,
    p: DegeneracyExponent,
    e: EllipticityParams,
    f_val: f64,
) -> Result<f64> {
    check_dims(g, h)?;
    let m = pucci_minus(&weighted_hessian(g, h, p), e)?;
    Ok(m - e.cap_lambda * abs_pow(euclidean_norm(g), p.0 + 1.0) - f_val)
}

/// `M+(weighted Hessian) + Λ|g|^{p+1} - f`.
pub fn upper_residual(
    g: &[f64],
    h: &SymMatrix,
    p: DegeneracyExponent,
    e: EllipticityParams,
    f_val: f64,
) -> Result<f64> {
    check_dims(g, h)?;
    let m = pucci_plus(&weighted_hessian(g, h, p), e)?;
    Ok(m + e.cap_lambda * abs_pow(euclidean_norm(g), p.0 + 1.0) - f_val)
}

/// `Σ_i |g_i|^p H_ii`.
pub fn pseudo_laplacian(g: &[f64], h: &SymMatrix, p: DegeneracyExponent) -> f64 {
    assert_eq!(g.len(), h.dim(), "gradient and Hessian dimensions differ");
    g.iter()
        .enumerate()
        .map(|(i, &gi)| abs_pow(gi, p.0) * h.get(i, i))
        .sum()
}
