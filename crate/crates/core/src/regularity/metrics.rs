//! Empirical regularity metrics on grid fields: level-set tails with a
//! power-law fit, the Harnack ratio on `B_{1/2}`, and a Hölder exponent from
//! the decay of oscillation over shrinking balls.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grid::ScalarField;

/// Least-squares line `y = slope·x + intercept` with the RMS residual.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    (slope, intercept, (rss / n).sqrt())
}

/// Node fraction of `{u > t}` for each threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCurve {
    pub thresholds: Vec<f64>,
    pub fractions: Vec<f64>,
}

/// `fraction ≈ C t^{-ε}` over the decaying window `[first, last]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailFit {
    pub epsilon: f64,
    pub c: f64,
    /// RMS residual of the log-log regression.
    pub residual: f64,
    /// Inclusive index range of the curve used by the fit.
    pub first: usize,
    pub last: usize,
}

/// `count ≥ 2` thresholds spaced geometrically from `lo` to `hi`.
pub fn geometric_thresholds(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || count < 2 {
        return Err(invalid(format!(
            "geometric thresholds need 0 < lo < hi and count >= 2, got {lo}, {hi}, {count}"
        )));
    }
    let ratio = (hi / lo).ln() / (count - 1) as f64;
    Ok((0..count).map(|i| lo * (ratio * i as f64).exp()).collect())
}

/// `u / inf u` for a positive field, so that the infimum is exactly 1.
pub fn normalize_to_unit_inf(u: &ScalarField) -> Result<ScalarField> {
    let m = u.min();
    if !(m > 0.0) {
        return Err(Error::DegenerateMeasurement(format!(
            "normalization needs a positive field, inf = {m}"
        )));
    }
    u.map(|v| v / m)
}

/// Requires strictly increasing positive thresholds and `min u ≤ 1`.
pub fn tail_distribution(u: &ScalarField, thresholds: &[f64]) -> Result<TailCurve> {
    if thresholds.is_empty() {
        return Err(invalid("at least one threshold is required"));
    }
    if thresholds.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
        return Err(invalid("thresholds must be positive and finite"));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("thresholds must be strictly increasing"));
    }
    if u.min() > 1.0 {
        return Err(invalid(format!(
            "tail curves need a field normalized to inf <= 1, got inf = {}",
            u.min()
        )));
    }
    let mut sorted = u.values().to_vec();
    sorted.sort_by(f64::total_cmp);
    let total = sorted.len() as f64;
    let fractions = thresholds
        .iter()
        .map(|&t| {
            let at_or_below = sorted.partition_point(|&v| v <= t);
            (sorted.len() - at_or_below) as f64 / total
        })
        .collect();
    Ok(TailCurve {
        thresholds: thresholds.to_vec(),
        fractions,
    })
}

/// Skips the flat head (points equal to the first fraction) and the empty
/// tail (zero fractions), and fits the rest on log-log axes.
pub fn fit_tail(curve: &TailCurve) -> Result<TailFit> {
    let fr = &curve.fractions;
    let head = fr.first().copied().unwrap_or(0.0);
    let first = fr.iter().position(|&v| v < head);
    let last = fr.iter().rposition(|&v| v > 0.0);
    let (first, last) = match (first, last) {
        (Some(a), Some(b)) if b >= a && b - a + 1 >= 3 => (a, b),
        _ => {
            return Err(Error::FitUndefined(
                "fewer than three decaying nonzero tail points".into(),
            ))
        }
    };
    let xs: Vec<f64> = curve.thresholds[first..=last]
        .iter()
        .map(|t| t.ln())
        .collect();
    let ys: Vec<f64> = fr[first..=last].iter().map(|v| v.ln()).collect();
    let (slope, intercept, residual) = linear_fit(&xs, &ys);
    Ok(TailFit {
        epsilon: -slope,
        c: intercept.exp(),
        residual,
        first,
        last,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnackReport {
    pub ratio: f64,
    pub sup_half_ball: f64,
    pub inf_half_ball: f64,
    /// `‖f‖_{L^n(B_1)}^{1/(1+p)}` on the grid.
    pub forcing_term: f64,
    pub half_ball_nodes: usize,
}

fn radial_distance(x: &[f64], c: &[f64]) -> f64 {
    x.iter()
        .zip(c)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// `sup_{B_{1/2}} u / (inf_{B_{1/2}} u + ‖f‖_{L^n}^{1/(1+p)})` with balls
/// `{|x - x₀| < r}` about the grid center and the grid norm
/// `(Σ_{B_1} |f|^n h^n)^{1/n}`.
pub fn harnack_report(u: &ScalarField, f: &ScalarField, p: f64) -> Result<HarnackReport> {
    if u.spec() != f.spec() {
        return Err(invalid("u and f live on different grids"));
    }
    if !(p.is_finite() && p >= 0.0) {
        return Err(invalid(format!("p must be >= 0, got {p}")));
    }
    if u.min() < 0.0 {
        return Err(invalid(format!(
            "Harnack ratio needs u >= 0, min is {}",
            u.min()
        )));
    }
    let spec = u.spec();
    let n = spec.dim();
    let c = spec.center();
    let mut sup = f64::NEG_INFINITY;
    let mut inf = f64::INFINITY;
    let mut count = 0;
    let mut fsum = 0.0;
    for k in 0..spec.node_count() {
        let r = radial_distance(&spec.coord_flat(k), c);
        if r < 0.5 {
            let v = u.get_flat(k);
            sup = sup.max(v);
            inf = inf.min(v);
            count += 1;
        }
        if r < 1.0 {
            fsum += f.get_flat(k).abs().powi(n as i32);
        }
    }
    if count == 0 {
        return Err(invalid("no grid node lies in B_{1/2}"));
    }
    let norm = (fsum * spec.cell_volume()).powf(1.0 / n as f64);
    let forcing_term = norm.powf(1.0 / (1.0 + p));
    let denom = inf + forcing_term;
    if denom <= 0.0 {
        return Err(Error::DegenerateMeasurement(
            "u and f vanish on B_{1/2}; the Harnack ratio is undefined".into(),
        ));
    }
    Ok(HarnackReport {
        ratio: sup / denom,
        sup_half_ball: sup,
        inf_half_ball: inf,
        forcing_term,
        half_ball_nodes: count,
    })
}

/// Oscillation decay `osc(r) ≈ C r^α`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderReport {
    pub alpha: f64,
    pub c: f64,
    pub residual: f64,
    pub radii: Vec<f64>,
    pub oscillations: Vec<f64>,
    pub centers: usize,
}

/// For `r = r₀, r₀/2, ...` with `r₀ = half_width/4` and `r ≥ 2h`, the maximum
/// over centers `|x₀| < half_width/2` of `sup - inf` over the closed ball
/// `|z - x₀| ≤ r`; `α` is the slope of `log osc` against `log r`. Closed
/// balls contain the nodes `x₀ ± r e_i`, so the oscillation of a field that
/// is affine in one coordinate is exactly proportional to `r`.
pub fn holder_report(u: &ScalarField) -> Result<HolderReport> {
    let spec = u.spec();
    let n = spec.dim();
    let h = spec.spacing();
    let m = spec.points_per_axis();
    let hw = spec.half_width();
    let c = spec.center();
    let centers: Vec<Vec<usize>> = (0..spec.node_count())
        .map(|k| spec.multi_index(k))
        .filter(|idx| radial_distance(&spec.coord(idx), c) < hw / 2.0)
        .collect();
    let mut radii = Vec::new();
    let mut r = hw / 4.0;
    while r >= 2.0 * h * (1.0 - 1e-12) {
        radii.push(r);
        r /= 2.0;
    }
    if radii.len() < 2 {
        return Err(Error::FitUndefined("grid too coarse for two radii".into()));
    }
    let oscillations: Vec<f64> = radii
        .iter()
        .map(|&r| {
            let reach = (r / h + 1e-9).floor() as isize;
            let r2 = (r / h) * (r / h) * (1.0 + 1e-12);
            // Offsets (in nodes) inside the closed ball.
            let side = (2 * reach + 1) as usize;
            let offsets: Vec<Vec<isize>> = (0..side.pow(n as u32))
                .map(|mut f| {
                    let mut o = vec![0isize; n];
                    for d in (0..n).rev() {
                        o[d] = (f % side) as isize - reach;
                        f /= side;
                    }
                    o
                })
                .filter(|o| (o.iter().map(|v| (v * v) as f64).sum::<f64>()) <= r2)
                .collect();
            centers
                .iter()
                .map(|ctr| {
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    let mut idx = vec![0usize; n];
                    'off: for o in &offsets {
                        for d in 0..n {
                            let v = ctr[d] as isize + o[d];
                            if v < 0 || v >= m as isize {
                                continue 'off;
                            }
                            idx[d] = v as usize;
                        }
                        let val = u.get(&idx);
                        lo = lo.min(val);
                        hi = hi.max(val);
                    }
                    hi - lo
                })
                .fold(0.0, f64::max)
        })
        .collect();
    if oscillations.iter().any(|&o| o <= 0.0) {
        return Err(Error::FitUndefined(
            "oscillation vanishes on some radius".into(),
        ));
    }
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = oscillations.iter().map(|o| o.ln()).collect();
    let (alpha, intercept, residual) = linear_fit(&xs, &ys);
    Ok(HolderReport {
        alpha,
        c: intercept.exp(),
        residual,
        radii,
        oscillations,
        centers: centers.len(),
    })
}

/// Collected regularity measurements of one field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub harnack: Option<HarnackReport>,
    pub holder: Option<HolderReport>,
    pub tail: Option<TailFit>,
}
