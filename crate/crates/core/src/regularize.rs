//! Inf-convolution `u_ε(x) = min_y u(y) + |x - y|² / ε` over the grid nodes.
//!
//! The quadratic penalty is a sum over axes, so the minimum over all nodes
//! equals the composition of one-dimensional minima along each axis; each
//! of those is an exact lower envelope of parabolas computed in linear time.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::grid::{fd_hessian, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InfConvParams {
    epsilon: f64,
}

impl InfConvParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(invalid(format!(
                "inf-convolution requires epsilon > 0, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// `out[i] = min_j f[j] + w (i - j)²` for `w > 0`.
fn lower_envelope(f: &[f64], w: f64, out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let key = |q: usize| f[q] + w * (q * q) as f64;
    let mut k = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s = (key(q) - key(v[k])) / (2.0 * w * (q - v[k]) as f64);
        // z[0] = -inf, so the loop stops at k = 0 at the latest.
        while s <= z[k] {
            k -= 1;
            s = (key(q) - key(v[k])) / (2.0 * w * (q - v[k]) as f64);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0;
    for (i, o) in out.iter_mut().enumerate() {
        while z[k + 1] < i as f64 {
            k += 1;
        }
        let d = i as f64 - v[k] as f64;
        *o = f[v[k]] + w * d * d;
    }
}

/// Exact discrete inf-convolution over the grid's own nodes.
pub fn inf_convolution(u: &ScalarField, params: InfConvParams) -> Result<ScalarField> {
    let spec = u.spec().clone();
    let n = spec.points_per_axis();
    let h = spec.spacing();
    let w = h * h / params.epsilon;
    let mut values = u.values().to_vec();
    for axis in 0..spec.dim() {
        let stride = spec.stride(axis);
        let line_starts: Vec<usize> = (0..spec.node_count())
            .filter(|&k| (k / stride) % n == 0)
            .collect();
        let lines: Vec<Vec<f64>> = line_starts
            .par_iter()
            .map(|&start| {
                let line: Vec<f64> = (0..n).map(|i| values[start + i * stride]).collect();
                let mut out = vec![0.0; n];
                lower_envelope(&line, w, &mut out);
                out
            })
            .collect();
        for (&start, line) in line_starts.iter().zip(&lines) {
            for (i, v) in line.iter().enumerate() {
                values[start + i * stride] = *v;
            }
        }
    }
    ScalarField::new(spec, values)
}

/// `u^ε = -(-u)_ε`, the matching semiconvex regularization from above.
pub fn sup_convolution(u: &ScalarField, params: InfConvParams) -> Result<ScalarField> {
    inf_convolution(&u.map(|v| -v)?, params)?.map(|v| -v)
}

/// Checks of the two defining properties of `u_ε` against `u`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfConvDiagnostics {
    pub epsilon: f64,
    /// `max (u_ε - u)`, never positive for an inf-convolution.
    pub max_increase: f64,
    /// Largest pure second difference of `u_ε` over interior nodes.
    pub max_second_difference: f64,
    /// `2/ε`, the semiconcavity bound on every pure second difference.
    pub semiconcavity_bound: f64,
    pub below_input: bool,
    pub semiconcave: bool,
}

/// Relative slack on the semiconcavity bound, for rounding in the differences.
const SEMICONCAVITY_SLACK: f64 = 1e-9;

pub fn inf_convolution_diagnostics(
    u: &ScalarField,
    u_eps: &ScalarField,
    params: InfConvParams,
) -> Result<InfConvDiagnostics> {
    if u.spec() != u_eps.spec() {
        return Err(invalid("u and its regularization live on different grids"));
    }
    let spec = u.spec();
    let max_increase = u_eps
        .values()
        .iter()
        .zip(u.values())
        .map(|(a, b)| a - b)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut max_d2 = f64::NEG_INFINITY;
    for k in 0..spec.node_count() {
        let idx = spec.multi_index(k);
        if spec.is_boundary(&idx) {
            continue;
        }
        let h = fd_hessian(u_eps, &idx)?;
        for d in 0..spec.dim() {
            max_d2 = max_d2.max(h.get(d, d));
        }
    }
    let bound = 2.0 / params.epsilon;
    let scale = u.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let slack = SEMICONCAVITY_SLACK * (bound + scale / (spec.spacing() * spec.spacing()));
    Ok(InfConvDiagnostics {
        epsilon: params.epsilon,
        max_increase,
        max_second_difference: max_d2,
        semiconcavity_bound: bound,
        below_input: max_increase <= 0.0,
        semiconcave: max_d2 <= bound + slack,
    })
}
