//! Sliding paraboloids from below: touching points, the vertex map, the
//! partition by nondegenerate directions, Jacobian determinants, and the
//! grid version of the measure estimate.
//!
//! A vertex `y` produces the concave profile `z ↦ φ(z - y)`; it is lifted
//! until it first touches `u` from below, at `x = argmin_z u(z) - φ(z - y)`.
//! At such a point `Du(x) = Dφ(x - y)`, which inverts to
//! `y_i = x_i + K^{-(1+p)} |D_i u|^p D_i u`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grid::{enumerate_slices, fd_hessian, restrict_slice, GridSpec, ScalarField};
use crate::matrix::{min_eigenvalue, SymMatrix};
use crate::operators::{abs_pow, weighted_hessian, DegeneracyExponent};
use crate::profiles::{
    barrier_shifted_hess, inverse_gradient_jacobian, phi_eval, phi_grad, BarrierParams,
    ParaboloidParams,
};

/// Relative slack (in units of `h`) used when comparing coordinate gaps
/// against the degeneracy threshold, so that a gap of exactly one cell is not
/// misclassified through round-off.
const GAP_SLACK: f64 = 1e-9;

/// Relative tolerance of the touching-inequality rescan.
const RESCAN_TOL: f64 = 1e-12;

/// Thresholds `δ`, `μ`, `M` and the degeneracy cut `ε_deg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdConfig {
    delta: f64,
    mu: f64,
    m: f64,
    eps_deg: Option<f64>,
}

impl ThresholdConfig {
    /// `eps_deg = None` selects the grid spacing of the field under study.
    pub fn new(delta: f64, mu: f64, m: f64, eps_deg: Option<f64>) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
        }
        if !(mu > 0.0 && mu < 1.0) {
            return Err(invalid(format!("mu must lie in (0, 1), got {mu}")));
        }
        if !(m.is_finite() && m > 1.0) {
            return Err(invalid(format!("M must exceed 1, got {m}")));
        }
        if let Some(e) = eps_deg {
            if !(e.is_finite() && e >= 0.0) {
                return Err(invalid(format!("eps_deg must be >= 0, got {e}")));
            }
        }
        Ok(Self {
            delta,
            mu,
            m,
            eps_deg,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn eps_deg(&self, spec: &GridSpec) -> f64 {
        self.eps_deg.unwrap_or_else(|| spec.spacing())
    }
}

/// Smallest power of two `K ≥ 2` with `c K (1 - 1/(4n))² > 1 + c K / 2`,
/// `c = (1+p)/(2+p)`, together with `M = c K (1 - 1/(4n))²`.
///
/// For vertices and a test point in `Q_{1/4n}` every coordinate gap is at
/// most `1/(2n)`, hence `|x₀ - y|_b ≤ n/(2n) = 1/2`; on `∂Q_1` the gap in
/// some coordinate is at least `1 - 1/(4n)`.
pub fn default_amplitude(n: usize, p: DegeneracyExponent) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(invalid("dimension must be positive"));
    }
    let pv = p.value();
    let c = (1.0 + pv) / (2.0 + pv);
    let edge = (1.0 - 1.0 / (4.0 * n as f64)).powi(2);
    let mut k = 2.0f64;
    while c * k * (edge - 0.5) <= 1.0 {
        k *= 2.0;
    }
    Ok((k, c * k * edge))
}

/// One slide: vertex, first-contact node, offset and classification.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TouchingRecord {
    pub vertex: Vec<f64>,
    pub touch: Vec<f64>,
    pub touch_index: Vec<usize>,
    /// `C₀ = min_z u(z) - φ(z - y)`.
    pub offset: f64,
    /// Axes with `|x_i - y_i| > ε_deg`, ascending.
    pub nondeg_set: Vec<usize>,
    /// `det(I + c W H W)` on the nondegenerate axes, `c = (1+p)/K^{1+p}`,
    /// with `W = D(|Dφ(x-y)|^{p/2})` and `H` the central-difference Hessian
    /// of `u`. Absent for boundary-adjacent touches and when no axis is
    /// nondegenerate.
    pub jac_det: Option<f64>,
    /// Smallest eigenvalue of `A = c W (D²u - D²φ(x-y)) W` on the
    /// nondegenerate axes, both Hessians by the same difference stencil.
    pub a_min_eig: Option<f64>,
}

/// `y_i = x_i + K^{-(1+p)} |g_i|^p g_i`.
pub fn vertex_from_gradient(x: &[f64], g: &[f64], pp: &ParaboloidParams) -> Vec<f64> {
    let pv = pp.p().value();
    let s = pp.k().powf(-(1.0 + pv));
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| xi + s * abs_pow(gi, pv) * gi)
        .collect()
}

/// `det(I + ((1+p)/K^{1+p}) D(|g|^{p/2}) H D(|g|^{p/2}))`.
pub fn touch_jacobian_det(g: &[f64], h: &SymMatrix, pp: &ParaboloidParams) -> Result<f64> {
    if g.len() != h.dim() {
        return Err(invalid("gradient and Hessian dimensions differ"));
    }
    let a = weighted_hessian(g, h, pp.p()).scaled(pp.jacobian_factor());
    Ok(SymMatrix::identity(g.len()).add(&a).determinant())
}

/// `|det(D((DΦ)^{-1})(g) · (D²Φ(x - y) - H))|` for the shifted barrier `Φ`.
pub fn barrier_touch_jacobian_det(
    x_minus_y: &[f64],
    g: &[f64],
    h: &SymMatrix,
    bp: &BarrierParams,
) -> Result<f64> {
    if g.len() != h.dim() || x_minus_y.len() != h.dim() {
        return Err(invalid("dimensions of the barrier touch data differ"));
    }
    if g.iter().all(|&v| v == 0.0) {
        return Err(Error::Singularity(
            "barrier touch needs a nonzero gradient".into(),
        ));
    }
    let jinv = inverse_gradient_jacobian(g, bp)?.to_dmatrix();
    let diff = barrier_shifted_hess(x_minus_y, bp)?.sub(h).to_dmatrix();
    Ok((jinv * diff).determinant().abs())
}

/// Central-difference Hessian of a closed-form function at `x`, using the
/// same stencil as [`fd_hessian`].
fn stencil_hessian(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> SymMatrix {
    let n = x.len();
    let at = |shifts: &[(usize, f64)]| {
        let mut z = x.to_vec();
        for &(d, s) in shifts {
            z[d] += s * h;
        }
        f(&z)
    };
    let c = f(x);
    SymMatrix::from_upper_fn(n, |i, j| {
        if i == j {
            (at(&[(i, 1.0)]) - 2.0 * c + at(&[(i, -1.0)])) / (h * h)
        } else {
            (at(&[(i, 1.0), (j, 1.0)]) - at(&[(i, 1.0), (j, -1.0)]) - at(&[(i, -1.0), (j, 1.0)])
                + at(&[(i, -1.0), (j, -1.0)]))
                / (4.0 * h * h)
        }
    })
}

/// Slides `φ(· - y)` under `u` and classifies the first contact.
/// Ties are broken by the smallest linear (row-major) index.
pub fn slide_vertex(
    u: &ScalarField,
    y: &[f64],
    pp: &ParaboloidParams,
    eps_deg: f64,
) -> Result<TouchingRecord> {
    let spec = u.spec();
    if !spec.contains(y) {
        return Err(Error::OutOfDomain(format!(
            "vertex {y:?} lies outside the grid cube"
        )));
    }
    let n = spec.dim();
    let mut best = (f64::INFINITY, 0usize);
    let mut z = vec![0.0; n];
    for k in 0..spec.node_count() {
        let idx = spec.multi_index(k);
        for d in 0..n {
            z[d] = spec.axis_coord(d, idx[d]) - y[d];
        }
        let val = u.get_flat(k) - phi_eval(&z, pp);
        if val < best.0 {
            best = (val, k);
        }
    }
    let touch_index = spec.multi_index(best.1);
    let touch = spec.coord(&touch_index);
    let h = spec.spacing();
    let cut = eps_deg + GAP_SLACK * h;
    let nondeg_set: Vec<usize> = (0..n).filter(|&i| (touch[i] - y[i]).abs() > cut).collect();

    let (jac_det, a_min_eig) = if nondeg_set.is_empty() || spec.boundary_distance(&touch_index) < 1
    {
        (None, None)
    } else {
        let xy: Vec<f64> = touch.iter().zip(y).map(|(a, b)| a - b).collect();
        let g_full = phi_grad(&xy, pp);
        let g: Vec<f64> = nondeg_set.iter().map(|&i| g_full[i]).collect();
        let hu = fd_hessian(u, &touch_index)?.principal(&nondeg_set);
        let hphi = stencil_hessian(|z| phi_eval(z, pp), &xy, h).principal(&nondeg_set);
        let jac = touch_jacobian_det(&g, &hu, pp)?;
        let a = weighted_hessian(&g, &hu.sub(&hphi), pp.p()).scaled(pp.jacobian_factor());
        (Some(jac), Some(min_eigenvalue(&a)?))
    };
    Ok(TouchingRecord {
        vertex: y.to_vec(),
        touch,
        touch_index,
        offset: best.0,
        nondeg_set,
        jac_det,
        a_min_eig,
    })
}

/// Number of nodes violating `u(z) - φ(z - y) ≥ offset` (full rescan).
pub fn rescan_violations(u: &ScalarField, rec: &TouchingRecord, pp: &ParaboloidParams) -> usize {
    let spec = u.spec();
    let tol = RESCAN_TOL * (1.0 + rec.offset.abs());
    (0..spec.node_count())
        .filter(|&k| {
            let z: Vec<f64> = spec
                .coord_flat(k)
                .iter()
                .zip(&rec.vertex)
                .map(|(a, b)| a - b)
                .collect();
            u.get_flat(k) - phi_eval(&z, pp) < rec.offset - tol
        })
        .count()
}

/// Vertex and touch tallies for one nondegenerate index set `I`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassCount {
    pub nondeg_set: Vec<usize>,
    pub vertices: usize,
    /// Distinct touching nodes.
    pub touches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureReport {
    pub dim: usize,
    pub p: f64,
    pub k: f64,
    pub m: f64,
    pub delta: f64,
    pub mu: f64,
    pub eps_deg: f64,
    pub h: f64,
    /// Frozen axes of a sliced run (empty for the full-dimensional run).
    pub frozen_axes: Vec<usize>,
    pub slices: usize,
    /// Node fraction of `{u > M}` in the grid cube.
    pub large_fraction: f64,
    /// Whether `large_fraction ≥ 1 - δ`.
    pub measure_hypothesis: bool,
    /// Minimum of `u` over the nodes of the vertex cube `Q_{r/4n}`.
    pub min_u_vertex_cube: f64,
    /// `(Σ |f|^n h^n)^{1/n}` over the grid.
    pub forcing_norm: f64,
    pub vertex_count: usize,
    pub classes: Vec<ClassCount>,
    /// `max_I |V_I| / (|T_I| + (μ/h)^n)` over classes with vertices.
    pub empirical_c: Option<f64>,
    pub rescan_violations: usize,
    /// Records whose touching node has `u ≥ M`.
    pub touch_not_below_m: usize,
    /// Records with `u(touch) > M` and `touch = vertex`.
    pub case2_violations: usize,
    pub min_jac_det: Option<f64>,
    pub min_a_eig: Option<f64>,
    pub notice: Option<String>,
    #[serde(skip)]
    pub records: Vec<TouchingRecord>,
}

impl MeasureReport {
    /// `key = value` lines, one per scalar, then one line per class.
    pub fn to_key_value(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| format!("{x:.12e}"));
        let mut s = String::new();
        let _ = writeln!(s, "dim = {}", self.dim);
        let _ = writeln!(s, "p = {:.12e}", self.p);
        let _ = writeln!(s, "K = {:.12e}", self.k);
        let _ = writeln!(s, "M = {:.12e}", self.m);
        let _ = writeln!(s, "delta = {:.12e}", self.delta);
        let _ = writeln!(s, "mu = {:.12e}", self.mu);
        let _ = writeln!(s, "eps_deg = {:.12e}", self.eps_deg);
        let _ = writeln!(s, "h = {:.12e}", self.h);
        let _ = writeln!(s, "frozen_axes = {}", index_set_label(&self.frozen_axes));
        let _ = writeln!(s, "slices = {}", self.slices);
        let _ = writeln!(s, "large_fraction = {:.12e}", self.large_fraction);
        let _ = writeln!(s, "measure_hypothesis = {}", self.measure_hypothesis);
        let _ = writeln!(s, "min_u_vertex_cube = {:.12e}", self.min_u_vertex_cube);
        let _ = writeln!(s, "forcing_norm = {:.12e}", self.forcing_norm);
        let _ = writeln!(s, "vertex_count = {}", self.vertex_count);
        let _ = writeln!(s, "empirical_C = {}", opt(self.empirical_c));
        let _ = writeln!(s, "rescan_violations = {}", self.rescan_violations);
        let _ = writeln!(s, "touch_not_below_M = {}", self.touch_not_below_m);
        let _ = writeln!(s, "case2_violations = {}", self.case2_violations);
        let _ = writeln!(s, "min_jac_det = {}", opt(self.min_jac_det));
        let _ = writeln!(s, "min_A_eig = {}", opt(self.min_a_eig));
        for c in &self.classes {
            let label = index_set_label(&c.nondeg_set);
            let _ = writeln!(s, "V[{label}] = {}", c.vertices);
            let _ = writeln!(s, "T[{label}] = {}", c.touches);
        }
        if let Some(n) = &self.notice {
            let _ = writeln!(s, "notice = {n}");
        }
        s
    }
}

/// `{0,2}`-style label; `{}` for the empty set.
pub fn index_set_label(set: &[usize]) -> String {
    let items: Vec<String> = set.iter().map(usize::to_string).collect();
    format!("{{{}}}", items.join(","))
}

fn all_subsets(n: usize) -> Vec<Vec<usize>> {
    (0..1usize << n)
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
        .collect()
}

fn lp_norm(f: &ScalarField, n: usize) -> f64 {
    let vol = f.spec().cell_volume();
    let s: f64 = f.values().iter().map(|v| v.abs().powi(n as i32)).sum();
    (s * vol).powf(1.0 / n as f64)
}

/// Records and per-class tallies of one (possibly sliced) run, with index
/// sets already mapped to global axes.
struct Partial {
    records: Vec<TouchingRecord>,
    vertices: BTreeMap<Vec<usize>, usize>,
    touches: BTreeMap<Vec<usize>, usize>,
    rescan: usize,
    not_below: usize,
    case2: usize,
}

fn run_slides(
    u: &ScalarField,
    pp: &ParaboloidParams,
    m: f64,
    eps_deg: f64,
    vertex_half: f64,
    axis_map: &[usize],
) -> Result<Partial> {
    let spec = u.spec();
    let margin = 1e-12 * spec.half_width();
    let vertices: Vec<usize> = (0..spec.node_count())
        .filter(|&k| {
            let x = spec.coord_flat(k);
            u.get_flat(k) > m
                && x.iter()
                    .zip(spec.center())
                    .all(|(a, c)| (a - c).abs() < vertex_half - margin)
        })
        .collect();
    let records: Vec<TouchingRecord> = vertices
        .par_iter()
        .map(|&k| slide_vertex(u, &spec.coord_flat(k), pp, eps_deg))
        .collect::<Result<_>>()?;
    let rescan: usize = records
        .par_iter()
        .map(|r| rescan_violations(u, r, pp))
        .sum();

    let mut vcount = BTreeMap::new();
    let mut tnodes: BTreeMap<Vec<usize>, std::collections::BTreeSet<Vec<usize>>> = BTreeMap::new();
    let mut not_below = 0;
    let mut case2 = 0;
    for r in &records {
        let global: Vec<usize> = r.nondeg_set.iter().map(|&i| axis_map[i]).collect();
        *vcount.entry(global.clone()).or_insert(0) += 1;
        tnodes
            .entry(global)
            .or_default()
            .insert(r.touch_index.clone());
        let ut = u.get(&r.touch_index);
        if ut >= m {
            not_below += 1;
        }
        if ut > m && r.touch == r.vertex {
            case2 += 1;
        }
    }
    let touches = tnodes.into_iter().map(|(k, v)| (k, v.len())).collect();
    Ok(Partial {
        records,
        vertices: vcount,
        touches,
        rescan,
        not_below,
        case2,
    })
}

fn assemble(
    u: &ScalarField,
    f: &ScalarField,
    t: &ThresholdConfig,
    pp: &ParaboloidParams,
    frozen: &[usize],
    parts: Vec<Partial>,
) -> MeasureReport {
    let spec = u.spec();
    let n = spec.dim();
    let h = spec.spacing();
    let vertex_half = spec.half_width() / (4.0 * n as f64);
    let large = u.values().iter().filter(|&&v| v > t.m()).count();
    let large_fraction = large as f64 / spec.node_count() as f64;
    let min_u_vertex_cube = (0..spec.node_count())
        .filter(|&k| {
            spec.coord_flat(k)
                .iter()
                .zip(spec.center())
                .all(|(a, c)| (a - c).abs() < vertex_half)
        })
        .map(|k| u.get_flat(k))
        .fold(f64::INFINITY, f64::min);

    let mut vtot: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut ttot: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let (mut rescan, mut not_below, mut case2) = (0, 0, 0);
    let slices = parts.len();
    let mut records = Vec::new();
    for part in parts {
        for (k, v) in part.vertices {
            *vtot.entry(k).or_insert(0) += v;
        }
        for (k, v) in part.touches {
            *ttot.entry(k).or_insert(0) += v;
        }
        rescan += part.rescan;
        not_below += part.not_below;
        case2 += part.case2;
        records.extend(part.records);
    }
    let budget = (t.mu() / h).powi(n as i32);
    let classes: Vec<ClassCount> = all_subsets(n)
        .into_iter()
        .map(|s| ClassCount {
            vertices: vtot.get(&s).copied().unwrap_or(0),
            touches: ttot.get(&s).copied().unwrap_or(0),
            nondeg_set: s,
        })
        .collect();
    let empirical_c = classes
        .iter()
        .filter(|c| c.vertices > 0)
        .map(|c| c.vertices as f64 / (c.touches as f64 + budget))
        .reduce(f64::max);
    let fold_opt = |vals: Vec<f64>| vals.into_iter().reduce(f64::min);
    let min_jac_det = fold_opt(records.iter().filter_map(|r| r.jac_det).collect());
    let min_a_eig = fold_opt(records.iter().filter_map(|r| r.a_min_eig).collect());
    let vertex_count = records.len();
    MeasureReport {
        dim: n,
        p: pp.p().value(),
        k: pp.k(),
        m: t.m(),
        delta: t.delta(),
        mu: t.mu(),
        eps_deg: t.eps_deg(spec),
        h,
        frozen_axes: frozen.to_vec(),
        slices,
        large_fraction,
        measure_hypothesis: large_fraction >= 1.0 - t.delta(),
        min_u_vertex_cube,
        forcing_norm: lp_norm(f, n),
        vertex_count,
        classes,
        empirical_c,
        rescan_violations: rescan,
        touch_not_below_m: not_below,
        case2_violations: case2,
        min_jac_det,
        min_a_eig,
        notice: (vertex_count == 0).then(|| "empty vertex set".to_string()),
        records,
    }
}

fn check_inputs(u: &ScalarField, f: &ScalarField) -> Result<()> {
    if u.spec() != f.spec() {
        return Err(invalid("u and f live on different grids"));
    }
    if u.min() < 0.0 {
        return Err(invalid(format!(
            "the measure estimate needs u >= 0, min is {}",
            u.min()
        )));
    }
    Ok(())
}

/// Vertex set `V = {u > M} ∩ Q_{r/4n}` (grid nodes, open cube about the grid
/// center), one slide per vertex, partition by nondegenerate set.
pub fn measure_estimate_experiment(
    u: &ScalarField,
    f: &ScalarField,
    t: &ThresholdConfig,
    pp: &ParaboloidParams,
) -> Result<MeasureReport> {
    check_inputs(u, f)?;
    let spec = u.spec();
    let n = spec.dim();
    let vertex_half = spec.half_width() / (4.0 * n as f64);
    let axes: Vec<usize> = (0..n).collect();
    let part = run_slides(u, pp, t.m(), t.eps_deg(spec), vertex_half, &axes)?;
    Ok(assemble(u, f, t, pp, &[], vec![part]))
}

/// Runs the experiment on every slice freezing the axes `frozen` at grid
/// nodes and sums the tallies. Slices whose frozen coordinates leave the
/// vertex cube `Q_{r/4n}` (with the full dimension `n`) carry no vertices and
/// are skipped. An empty `frozen` is the full-dimensional experiment.
pub fn sliced_measure_experiment(
    u: &ScalarField,
    f: &ScalarField,
    t: &ThresholdConfig,
    pp: &ParaboloidParams,
    frozen: &[usize],
) -> Result<MeasureReport> {
    if frozen.is_empty() {
        return measure_estimate_experiment(u, f, t, pp);
    }
    check_inputs(u, f)?;
    let spec = u.spec();
    let n = spec.dim();
    let vertex_half = spec.half_width() / (4.0 * n as f64);
    let margin = 1e-12 * spec.half_width();
    let eps_deg = t.eps_deg(spec);
    let mut parts = Vec::new();
    for s in enumerate_slices(spec, frozen)? {
        let inside = s
            .frozen_axes()
            .iter()
            .zip(s.frozen_values())
            .all(|(&d, &a)| (a - spec.center()[d]).abs() < vertex_half - margin);
        if !inside {
            continue;
        }
        let us = restrict_slice(u, &s)?;
        let free = s.free_axes(n);
        let mut part = run_slides(&us, pp, t.m(), eps_deg, vertex_half, &free)?;
        // Report coordinates in the full space.
        for r in &mut part.records {
            r.vertex = embed(&r.vertex, &free, &s);
            r.touch = embed(&r.touch, &free, &s);
            r.nondeg_set = r.nondeg_set.iter().map(|&i| free[i]).collect();
        }
        parts.push(part);
    }
    Ok(assemble(u, f, t, pp, frozen, parts))
}

fn embed(local: &[f64], free: &[usize], s: &crate::grid::SliceSpec) -> Vec<f64> {
    let n = free.len() + s.frozen_axes().len();
    let mut x = vec![0.0; n];
    for (&d, &v) in free.iter().zip(local) {
        x[d] = v;
    }
    for (&d, &v) in s.frozen_axes().iter().zip(s.frozen_values()) {
        x[d] = v;
    }
    x
}
