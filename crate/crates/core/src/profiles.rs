//! Closed-form anisotropic profiles.
//!
//! * the sliding "paraboloid" `φ(x) = -K (1+p)/(2+p) Σ|x_i|^b`,
//! * the barrier `Φ₀(x) = (1/(ab)) |x|_b^{-a}` and its shift
//!   `Φ(x) = K (Φ₀(x) - Φ₀(5n e₁))`,
//!
//! with `b = 1 + 1/(1+p)`, `|x|_b = Σ|x_i|^b` and `x^b = (|x_i|^{b-1} x_i)`.
//! Both profiles are `C¹` but not `C²` across the hyperplanes `{x_i = 0}`, so
//! every Hessian routine refuses points within [`HYPERPLANE_MARGIN`] of them.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::matrix::SymMatrix;
use crate::operators::{
    abs_pow, euclidean_norm, pucci_minus, weighted_hessian, DegeneracyExponent, EllipticityParams,
};

/// Relative exclusion margin around the coordinate hyperplanes.
pub const HYPERPLANE_MARGIN: f64 = 1e-8;

/// Points per axis of the barrier verification sample.
pub const BARRIER_SAMPLES_PER_AXIS: usize = 41;

/// Largest exponent tried by [`select_barrier_exponent`].
pub const MAX_BARRIER_EXPONENT: f64 = 1_048_576.0;

/// `b = 1 + 1/(1+p)`, the homogeneity of the anisotropic profiles.
pub fn profile_exponent(p: DegeneracyExponent) -> f64 {
    1.0 + 1.0 / (1.0 + p.value())
}

fn degenerate_indices(x: &[f64]) -> Vec<usize> {
    let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    x.iter()
        .enumerate()
        .filter(|(_, v)| v.abs() <= HYPERPLANE_MARGIN * scale)
        .map(|(i, _)| i)
        .collect()
}

fn require_off_hyperplanes(x: &[f64]) -> Result<()> {
    let bad = degenerate_indices(x);
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::DegenerateDirection { indices: bad })
    }
}

/// True when every coordinate is outside the hyperplane exclusion margin.
pub fn off_hyperplanes(x: &[f64]) -> bool {
    degenerate_indices(x).is_empty()
}

/// Parameters of the sliding profile `φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParaboloidParams {
    k: f64,
    p: DegeneracyExponent,
    b: f64,
}

impl ParaboloidParams {
    pub fn new(k: f64, p: DegeneracyExponent) -> Result<Self> {
        if !(k.is_finite() && k > 1.0) {
            return Err(invalid(format!(
                "paraboloid amplitude must satisfy K > 1, got {k}"
            )));
        }
        Ok(Self {
            k,
            p,
            b: profile_exponent(p),
        })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn p(&self) -> DegeneracyExponent {
        self.p
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// `K (1+p)/(2+p)`, the coefficient in front of `Σ|x_i|^b`.
    pub fn coefficient(&self) -> f64 {
        let p = self.p.value();
        self.k * (1.0 + p) / (2.0 + p)
    }

    /// `(1+p) / K^{1+p}`: the factor linking `D_x y` with the weighted Hessian.
    pub fn jacobian_factor(&self) -> f64 {
        let p = self.p.value();
        (1.0 + p) / self.k.powf(1.0 + p)
    }
}

pub fn phi_eval(x: &[f64], pp: &ParaboloidParams) -> f64 {
    -pp.coefficient() * bnorm_eval(x, pp.b)
}

/// `D_i φ = -K |x_i|^{1/(1+p)} sgn(x_i)`, continuous everywhere.
pub fn phi_grad(x: &[f64], pp: &ParaboloidParams) -> Vec<f64> {
    let e = 1.0 / (1.0 + pp.p.value());
    x.iter()
        .map(|&xi| -pp.k * abs_pow(xi, e) * sign(xi))
        .collect()
}

/// `D²φ = -(K/(1+p)) diag(|x_i|^{-p/(1+p)})`, defined off the hyperplanes.
pub fn phi_hess(x: &[f64], pp: &ParaboloidParams) -> Result<SymMatrix> {
    require_off_hyperplanes(x)?;
    let p = pp.p.value();
    let e = -p / (1.0 + p);
    let c = -pp.k / (1.0 + p);
    Ok(SymMatrix::diagonal(
        &x.iter().map(|&xi| c * abs_pow(xi, e)).collect::<Vec<_>>(),
    ))
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// The anisotropic "norm" `|x|_b = Σ|x_i|^b` (not a norm: it is `b`-homogeneous).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnisotropicNorm {
    b: f64,
}

impl AnisotropicNorm {
    pub fn new(b: f64) -> Result<Self> {
        if !(b.is_finite() && b > 1.0) {
            return Err(invalid(format!(
                "anisotropic exponent must satisfy b > 1, got {b}"
            )));
        }
        Ok(Self { b })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        bnorm_eval(x, self.b)
    }

    pub fn signed_power(&self, x: &[f64]) -> Vec<f64> {
        signed_power(x, self.b)
    }
}

/// `|x|_b = Σ|x_i|^b`.
pub fn bnorm_eval(x: &[f64], b: f64) -> f64 {
    x.iter().map(|&xi| abs_pow(xi, b)).sum()
}

/// `x^b = (|x_i|^{b-1} x_i)`.
pub fn signed_power(x: &[f64], b: f64) -> Vec<f64> {
    x.iter().map(|&xi| abs_pow(xi, b - 1.0) * xi).collect()
}

/// Parameters of the barrier `Φ₀` and its shifted form `Φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierParams {
    a: f64,
    b: f64,
    k: f64,
    p: DegeneracyExponent,
}

impl BarrierParams {
    pub fn new(a: f64, p: DegeneracyExponent, k: f64) -> Result<Self> {
        if !(a.is_finite() && a > 1.0) {
            return Err(invalid(format!(
                "barrier exponent must satisfy a > 1, got {a}"
            )));
        }
        if !(k.is_finite() && k > 1.0) {
            return Err(invalid(format!(
                "barrier amplitude must satisfy K > 1, got {k}"
            )));
        }
        Ok(Self {
            a,
            b: profile_exponent(p),
            k,
            p,
        })
    }

    /// Barrier with the smallest power-of-two amplitude `K` for which the
    /// shifted barrier exceeds 2 on the (closed) cube `Q_4` in dimension `n`.
    pub fn with_default_amplitude(a: f64, p: DegeneracyExponent, n: usize) -> Result<Self> {
        let unit = Self::new(a, p, 2.0)?;
        // Φ₀ is decreasing along rays and the corner of Q_4 maximizes |x|_b.
        let corner = vec![4.0; n];
        let gap = barrier_eval(&corner, &unit)? - barrier_eval(&shift_point(n), &unit)?;
        if !(gap > 0.0) {
            return Err(Error::SearchFailure(format!(
                "shifted barrier cannot exceed 2 on Q_4 (a = {a}, gap = {gap:e})"
            )));
        }
        let mut k = 2.0;
        while k * gap <= 2.0 {
            k *= 2.0;
            if !k.is_finite() {
                return Err(Error::SearchFailure(format!(
                    "shift amplitude overflows for a = {a}"
                )));
            }
        }
        Self::new(a, p, k)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn p(&self) -> DegeneracyExponent {
        self.p
    }
}

fn shift_point(n: usize) -> Vec<f64> {
    let mut e1 = vec![0.0; n];
    e1[0] = 5.0 * n as f64;
    e1
}

fn require_nonzero(x: &[f64], what: &str) -> Result<()> {
    if x.iter().all(|&v| v == 0.0) {
        Err(Error::Singularity(format!(
            "{what} is undefined at the origin"
        )))
    } else {
        Ok(())
    }
}

/// `Φ₀(x) = (1/(ab)) |x|_b^{-a}`.
pub fn barrier_eval(x: &[f64], bp: &BarrierParams) -> Result<f64> {
    require_nonzero(x, "barrier")?;
    Ok(bnorm_eval(x, bp.b).powf(-bp.a) / (bp.a * bp.b))
}

/// `DΦ₀(x) = -|x|_b^{-(a+1)} x^{b-1}`.
pub fn barrier_grad(x: &[f64], bp: &BarrierParams) -> Result<Vec<f64>> {
    require_nonzero(x, "barrier gradient")?;
    let s = bnorm_eval(x, bp.b).powf(-(bp.a + 1.0));
    Ok(signed_power(x, bp.b - 1.0)
        .into_iter()
        .map(|v| -s * v)
        .collect())
}

/// `D²Φ₀ = b(a+1)|x|_b^{-(a+2)} x^{b-1} ⊗ x^{b-1} - (b-1)|x|_b^{-(a+1)} diag(|x_i|^{b-2})`.
pub fn barrier_hess(x: &[f64], bp: &BarrierParams) -> Result<SymMatrix> {
    require_nonzero(x, "barrier Hessian")?;
    require_off_hyperplanes(x)?;
    let sb = bnorm_eval(x, bp.b);
    let v = signed_power(x, bp.b - 1.0);
    let outer = bp.b * (bp.a + 1.0) * sb.powf(-(bp.a + 2.0));
    let diag = (bp.b - 1.0) * sb.powf(-(bp.a + 1.0));
    Ok(SymMatrix::from_upper_fn(x.len(), |i, j| {
        let d = if i == j {
            diag * abs_pow(x[i], bp.b - 2.0)
        } else {
            0.0
        };
        outer * v[i] * v[j] - d
    }))
}

/// `Φ(x) = K (Φ₀(x) - Φ₀(5n e₁))`.
pub fn barrier_shifted_eval(x: &[f64], bp: &BarrierParams) -> Result<f64> {
    Ok(bp.k * (barrier_eval(x, bp)? - barrier_eval(&shift_point(x.len()), bp)?))
}

/// `DΦ = K DΦ₀`.
pub fn barrier_shifted_grad(x: &[f64], bp: &BarrierParams) -> Result<Vec<f64>> {
    Ok(barrier_grad(x, bp)?.into_iter().map(|v| bp.k * v).collect())
}

/// `D²Φ = K D²Φ₀`.
pub fn barrier_shifted_hess(x: &[f64], bp: &BarrierParams) -> Result<SymMatrix> {
    Ok(barrier_hess(x, bp)?.scaled(bp.k))
}

/// `M-(D(|DΦ₀|^{p/2}) D²Φ₀ D(|DΦ₀|^{p/2})) - Λ|DΦ₀|^{p+1}` by composing the
/// generic operators. The value carries the factor `|x|_b^{-(a+1)(p+1)}`, so it
/// under- or overflows for large `a`; see [`barrier_normalized_residual`].
pub fn barrier_lower_residual(x: &[f64], bp: &BarrierParams, e: EllipticityParams) -> Result<f64> {
    let g = barrier_grad(x, bp)?;
    let h = barrier_hess(x, bp)?;
    let m = pucci_minus(&weighted_hessian(&g, &h, bp.p), e)?;
    Ok(m - e.cap_lambda() * abs_pow(euclidean_norm(&g), bp.p.value() + 1.0))
}

/// [`barrier_lower_residual`] multiplied by `|x|_b^{(a+1)(p+1)}`, evaluated on
/// the rescaled gradient `-x^{b-1}` and Hessian so nothing under/overflows.
/// Has the same sign as the raw residual.
pub fn barrier_normalized_residual(
    x: &[f64],
    bp: &BarrierParams,
    e: EllipticityParams,
) -> Result<f64> {
    require_nonzero(x, "barrier residual")?;
    require_off_hyperplanes(x)?;
    let sb = bnorm_eval(x, bp.b);
    let v = signed_power(x, bp.b - 1.0);
    let g: Vec<f64> = v.iter().map(|vi| -vi).collect();
    let h = SymMatrix::from_upper_fn(x.len(), |i, j| {
        let d = if i == j {
            (bp.b - 1.0) * abs_pow(x[i], bp.b - 2.0)
        } else {
            0.0
        };
        bp.b * (bp.a + 1.0) / sb * v[i] * v[j] - d
    });
    let m = pucci_minus(&weighted_hessian(&g, &h, bp.p), e)?;
    Ok(m - e.cap_lambda() * abs_pow(euclidean_norm(&g), bp.p.value() + 1.0))
}

/// Closed form of [`barrier_normalized_residual`] from the rank-one structure
/// `b(a+1) w⊗w - (b-1) I` with `|w| = 1`: eigenvalue `b(a+1) - (b-1)` once and
/// `-(b-1)` with multiplicity `n-1`.
pub fn barrier_normalized_residual_closed_form(
    x: &[f64],
    bp: &BarrierParams,
    e: EllipticityParams,
) -> Result<f64> {
    require_nonzero(x, "barrier residual")?;
    require_off_hyperplanes(x)?;
    let n = x.len() as f64;
    let top = bp.b * (bp.a + 1.0) - (bp.b - 1.0);
    let pucci = e.lambda() * top - e.cap_lambda() * (bp.b - 1.0) * (n - 1.0);
    let grad_norm = euclidean_norm(&signed_power(x, bp.b - 1.0));
    Ok(pucci - e.cap_lambda() * abs_pow(grad_norm, bp.p.value() + 1.0))
}

/// The verification sample: a `41^n` tensor grid over the closed cube
/// `[-6n, 6n]^n`, minus points inside `Q_{1/8n}` and points on a coordinate
/// hyperplane.
pub fn barrier_sample(n: usize) -> Vec<Vec<f64>> {
    let m = BARRIER_SAMPLES_PER_AXIS;
    let half = 6.0 * n as f64;
    let inner = 1.0 / (8.0 * n as f64);
    let axis: Vec<f64> = (0..m)
        .map(|i| -half + 2.0 * half * i as f64 / (m - 1) as f64)
        .collect();
    let total = m.pow(n as u32);
    (0..total)
        .map(|mut flat| {
            let mut x = vec![0.0; n];
            for d in (0..n).rev() {
                x[d] = axis[flat % m];
                flat /= m;
            }
            x
        })
        .filter(|x| off_hyperplanes(x) && x.iter().any(|v| v.abs() >= inner))
        .collect()
}

/// Summary of the barrier exponent search.
#[derive(Debug, Clone, Serialize)]
pub struct BarrierSelection {
    pub a: f64,
    pub sample_count: usize,
    /// Minimum of [`barrier_normalized_residual`] over the sample.
    pub min_normalized_residual: f64,
    /// Minimum of the raw [`barrier_lower_residual`] over the sample.
    pub min_raw_residual: f64,
    /// Sample points where the raw residual exceeds 1.
    pub raw_above_one: usize,
    /// Exponents rejected before `a`.
    pub rejected: Vec<f64>,
}

/// Smallest `a` in the ladder `2, 4, 8, ...` for which the barrier is a strict
/// subsolution, i.e. the normalized residual is positive on every sample point.
///
/// The raw residual carries `|x|_b^{-(a+1)(p+1)}`, which decays exponentially
/// in `a` wherever `|x|_b > 1`; it is reported alongside (minimum and the
/// count of points above 1) but positivity is what the ladder tests.
pub fn select_barrier_exponent(
    n: usize,
    p: DegeneracyExponent,
    e: EllipticityParams,
) -> Result<BarrierSelection> {
    if !(1..=4).contains(&n) {
        return Err(invalid(format!(
            "barrier search supports 1 <= n <= 4, got {n}"
        )));
    }
    let sample = barrier_sample(n);
    let mut rejected = Vec::new();
    let mut a = 2.0;
    while a <= MAX_BARRIER_EXPONENT {
        let bp = BarrierParams::new(a, p, 2.0)?;
        let min_norm = sample
            .par_iter()
            .map(|x| barrier_normalized_residual(x, &bp, e))
            .try_reduce(|| f64::INFINITY, |l, r| Ok(l.min(r)))?;
        if min_norm > 0.0 {
            let raw: Vec<f64> = sample
                .par_iter()
                .map(|x| barrier_lower_residual(x, &bp, e))
                .collect::<Result<_>>()?;
            return Ok(BarrierSelection {
                a,
                sample_count: sample.len(),
                min_normalized_residual: min_norm,
                min_raw_residual: raw.iter().copied().fold(f64::INFINITY, f64::min),
                raw_above_one: raw.iter().filter(|&&r| r > 1.0).count(),
                rejected,
            });
        }
        rejected.push(a);
        a *= 2.0;
    }
    Err(Error::SearchFailure(format!(
        "no exponent a <= {MAX_BARRIER_EXPONENT} makes the barrier a subsolution (n = {n}, p = {})",
        p.value()
    )))
}

/// `(DΦ)^{-1}(v) = -K^{1/(ab+1)} |v|_{2+p}^{-(a+1)/(ab+1)} v^{1+p}`.
pub fn inverse_gradient(v: &[f64], bp: &BarrierParams) -> Result<Vec<f64>> {
    require_nonzero(v, "inverse gradient")?;
    let p = bp.p.value();
    let ab1 = bp.a * bp.b + 1.0;
    let t = bnorm_eval(v, 2.0 + p);
    let c = -bp.k.powf(1.0 / ab1) * t.powf(-(bp.a + 1.0) / ab1);
    Ok(v.iter().map(|&vi| c * abs_pow(vi, p) * vi).collect())
}

/// The bounded middle factor
/// `B(v) = -((a+1)/(ab+1))(2+p) w⊗w + (1+p) I`, `w = v^{1+p/2} / |v|_{2+p}^{1/2}`.
pub fn inverse_gradient_core(v: &[f64], bp: &BarrierParams) -> Result<SymMatrix> {
    require_nonzero(v, "inverse gradient")?;
    let p = bp.p.value();
    let beta = (bp.a + 1.0) / (bp.a * bp.b + 1.0);
    let t = bnorm_eval(v, 2.0 + p).sqrt();
    let w: Vec<f64> = signed_power(v, 1.0 + p / 2.0)
        .iter()
        .map(|x| x / t)
        .collect();
    Ok(SymMatrix::from_upper_fn(v.len(), |i, j| {
        let id = if i == j { 1.0 + p } else { 0.0 };
        -beta * (2.0 + p) * w[i] * w[j] + id
    }))
}

/// `D((DΦ)^{-1})(v) = -K^{1/(ab+1)} |v|_{2+p}^{-(a+1)/(ab+1)} D(|v_i|^{p/2}) B(v) D(|v_i|^{p/2})`.
pub fn inverse_gradient_jacobian(v: &[f64], bp: &BarrierParams) -> Result<SymMatrix> {
    let core = inverse_gradient_core(v, bp)?;
    let p = bp.p.value();
    let ab1 = bp.a * bp.b + 1.0;
    let c = -bp.k.powf(1.0 / ab1) * bnorm_eval(v, 2.0 + p).powf(-(bp.a + 1.0) / ab1);
    let d: Vec<f64> = v.iter().map(|&vi| abs_pow(vi, p / 2.0)).collect();
    Ok(core.conjugate_diag(&d).scaled(c))
}

/// Entrywise bound on `B(v)`: `(a+1)(2+p)/(ab+1) + 1 + p`.
pub fn inverse_gradient_core_bound(bp: &BarrierParams) -> f64 {
    let p = bp.p.value();
    (bp.a + 1.0) * (2.0 + p) / (bp.a * bp.b + 1.0) + 1.0 + p
}
