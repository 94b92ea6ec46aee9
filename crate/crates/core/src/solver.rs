//! Explicit relaxation solver for the Dirichlet problem of the degenerate
//! pseudo-(p+2)-Laplacian `Σ_i |∂_i u|^p ∂_ii u = f`, a-posteriori residuals of
//! the Pucci inequalities, and the scaling transform `ũ(x) = u(rx)/K`.
//!
//! Each sweep reads the previous iterate and writes the next one
//! (nonlinear Jacobi), with the pointwise step
//! `dt = safety · h² / (2 Σ_i a_i + h Σ_i |a_i'| |D_ii u|)`,
//! `a_i = max(|D_i u|^p, floor)`. With frozen coefficients the update is
//! nondecreasing in every neighbour value; the second sum damps the step
//! where the coefficients react strongly to the neighbours through the
//! central gradient, which otherwise lets the iteration blow up near
//! `{D_i u = 0}` for `p > 0`.

pub mod manufactured;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grid::{fd_gradient, fd_hessian, GridSpec, ScalarField};
use crate::operators::{
    abs_pow, lower_residual, upper_residual, DegeneracyExponent, EllipticityParams,
};

/// Residuals are sampled at step 0, every power of two, and the final step.
const TRACE_BASE: usize = 2;

/// Divergence is declared once the residual exceeds this multiple of the
/// initial residual.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveConfig {
    tol: f64,
    max_steps: usize,
    safety: f64,
    floor: f64,
}

impl SolveConfig {
    pub fn new(tol: f64, max_steps: usize, safety: f64, floor: f64) -> Result<Self> {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(invalid(format!("tolerance must be positive, got {tol}")));
        }
        if max_steps == 0 {
            return Err(invalid("max_steps must be positive"));
        }
        if !(safety > 0.0 && safety <= 1.0) {
            return Err(invalid(format!("safety must lie in (0, 1], got {safety}")));
        }
        if !(floor.is_finite() && floor >= 0.0) {
            return Err(invalid(format!(
                "coefficient floor must be >= 0, got {floor}"
            )));
        }
        Ok(Self {
            tol,
            max_steps,
            safety,
            floor,
        })
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn safety(&self) -> f64 {
        self.safety
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn mode(&self) -> CoefficientMode {
        if self.floor > 0.0 {
            CoefficientMode::Floored
        } else {
            CoefficientMode::Degenerate
        }
    }
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_steps: 500_000,
            safety: 0.9,
            floor: 0.0,
        }
    }
}

/// Whether the coefficients `|D_i u|^p` are used as is or floored from below.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientMode {
    Degenerate,
    Floored,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub steps: usize,
    pub converged: bool,
    /// Sup norm of `Σ a_i D_ii u - f` over interior nodes at the start.
    pub initial_residual: f64,
    /// Sup norm of `Σ a_i D_ii u - f` at the returned iterate.
    pub final_residual: f64,
    /// Sup norm of `Σ |D_i u|^p D_ii u - f` at the returned iterate (differs
    /// from `final_residual` only in floored mode).
    pub equation_residual: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Interior nodes where every coefficient vanished and no step was taken.
    pub stalled_nodes: usize,
    pub mode: CoefficientMode,
    pub floor: f64,
    /// `(step, residual)` samples.
    pub residual_trace: Vec<(usize, f64)>,
}

struct Stencil {
    interior: Vec<usize>,
    strides: Vec<usize>,
    h: f64,
}

impl Stencil {
    fn new(spec: &GridSpec) -> Self {
        let interior = (0..spec.node_count())
            .filter(|&k| !spec.is_boundary(&spec.multi_index(k)))
            .collect();
        Self {
            interior,
            strides: (0..spec.dim()).map(|d| spec.stride(d)).collect(),
            h: spec.spacing(),
        }
    }

    /// `(Σ a_i D_ii u - f, Σ a_i, Σ |D_i u|^p D_ii u - f, step denominator)`
    /// at node `k`; the denominator is `2 Σ a_i + h Σ |a_i'| |D_ii u|`.
    fn eval(&self, v: &[f64], k: usize, f: f64, p: f64, floor: f64) -> (f64, f64, f64, f64) {
        let h = self.h;
        let mut op = 0.0;
        let mut exact = 0.0;
        let mut sum_a = 0.0;
        let mut sens = 0.0;
        for &s in &self.strides {
            let (up, dn, c) = (v[k + s], v[k - s], v[k]);
            let g = (up - dn) / (2.0 * h);
            let d2 = (up - 2.0 * c + dn) / (h * h);
            let w = abs_pow(g, p);
            let a = w.max(floor);
            if p > 0.0 && w >= floor {
                // |g|^{p-1} is unbounded at 0 for p < 1; cap it at scale h.
                sens += p * abs_pow(g.abs().max(h), p - 1.0) * d2.abs();
            }
            sum_a += a;
            op += a * d2;
            exact += w * d2;
        }
        (op - f, sum_a, exact - f, 2.0 * sum_a + h * sens)
    }
}

fn initial_guess(spec: &GridSpec, boundary: &ScalarField) -> Vec<f64> {
    let n = spec.points_per_axis();
    let last = n - 1;
    let b = boundary.values();
    (0..spec.node_count())
        .map(|k| {
            let idx = spec.multi_index(k);
            if spec.is_boundary(&idx) {
                return b[k];
            }
            let mut acc = 0.0;
            for d in 0..spec.dim() {
                let s = spec.stride(d);
                let i = idx[d];
                let lo = b[k - i * s];
                let hi = b[k + (last - i) * s];
                let t = i as f64 / last as f64;
                acc += (1.0 - t) * lo + t * hi;
            }
            acc / spec.dim() as f64
        })
        .collect()
}

/// Solves `Σ|∂_i u|^p ∂_ii u = f` in the interior of `spec` with the boundary
/// values of `boundary` (its interior values are ignored). The interior is
/// initialized by averaging, over the axes, the linear interpolation of the
/// boundary data along each grid line.
pub fn solve_dirichlet(
    spec: &GridSpec,
    f: &ScalarField,
    boundary: &ScalarField,
    p: DegeneracyExponent,
    cfg: &SolveConfig,
) -> Result<(ScalarField, SolveReport)> {
    if f.spec() != spec || boundary.spec() != spec {
        return Err(invalid(
            "forcing and boundary data must live on the solver grid",
        ));
    }
    let st = Stencil::new(spec);
    let pv = p.value();
    let floor = cfg.floor;
    let fv = f.values();
    let mut cur = initial_guess(spec, boundary);
    let mut next = cur.clone();

    let sweep = |cur: &[f64]| -> Vec<(f64, f64, f64, f64)> {
        st.interior
            .par_iter()
            .map(|&k| st.eval(cur, k, fv[k], pv, floor))
            .collect()
    };
    let sup = |evals: &[(f64, f64, f64, f64)]| evals.iter().fold(0.0f64, |m, e| m.max(e.0.abs()));

    let mut evals = sweep(&cur);
    let initial = sup(&evals);
    let mut report = SolveReport {
        steps: 0,
        converged: false,
        initial_residual: initial,
        final_residual: initial,
        equation_residual: 0.0,
        dt_min: f64::INFINITY,
        dt_max: 0.0,
        stalled_nodes: 0,
        mode: cfg.mode(),
        floor,
        residual_trace: vec![(0, initial)],
    };
    let h2 = st.h * st.h;
    let mut next_trace = 1;
    loop {
        let res = sup(&evals);
        report.final_residual = res;
        if res <= cfg.tol {
            report.converged = true;
            break;
        }
        if !res.is_finite() || res > DIVERGENCE_FACTOR * initial {
            report.equation_residual = evals.iter().fold(0.0f64, |m, e| m.max(e.2.abs()));
            report.residual_trace.push((report.steps, res));
            return Err(Error::Divergence(Box::new(report)));
        }
        if report.steps == cfg.max_steps {
            break;
        }
        let mut stalled = 0;
        for (&k, &(r, sum_a, _, denom)) in st.interior.iter().zip(&evals) {
            if sum_a > 0.0 {
                let dt = cfg.safety * h2 / denom;
                report.dt_min = report.dt_min.min(dt);
                report.dt_max = report.dt_max.max(dt);
                next[k] = cur[k] + dt * r;
            } else {
                stalled += 1;
                next[k] = cur[k];
            }
        }
        report.stalled_nodes = stalled;
        std::mem::swap(&mut cur, &mut next);
        report.steps += 1;
        evals = sweep(&cur);
        if report.steps == next_trace {
            report.residual_trace.push((report.steps, sup(&evals)));
            next_trace *= TRACE_BASE;
        }
    }
    if report.residual_trace.last().map(|t| t.0) != Some(report.steps) {
        report
            .residual_trace
            .push((report.steps, report.final_residual));
    }
    report.equation_residual = evals.iter().fold(0.0f64, |m, e| m.max(e.2.abs()));
    if report.dt_min == f64::INFINITY {
        report.dt_min = 0.0;
    }
    Ok((ScalarField::new(spec.clone(), cur)?, report))
}

/// Pointwise residuals of both inequalities at interior nodes.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualCheck {
    /// Linear indices of the interior nodes, ascending.
    pub nodes: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ResidualCheck {
    pub fn max_lower(&self) -> f64 {
        self.lower.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_upper(&self) -> f64 {
        self.upper.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `lower_residual` and `upper_residual` on central differences of `u`.
/// Requires `λ ≤ 1 ≤ Λ`, so that the trace operator lies between the Pucci
/// operators.
pub fn viscosity_residual_check(
    u: &ScalarField,
    f: &ScalarField,
    p: DegeneracyExponent,
    e: EllipticityParams,
) -> Result<ResidualCheck> {
    if e.lambda() > 1.0 || e.cap_lambda() < 1.0 {
        return Err(Error::EllipticityNormalization {
            lambda: e.lambda(),
            cap_lambda: e.cap_lambda(),
        });
    }
    if u.spec() != f.spec() {
        return Err(invalid("solution and forcing live on different grids"));
    }
    let spec = u.spec();
    let nodes: Vec<usize> = (0..spec.node_count())
        .filter(|&k| !spec.is_boundary(&spec.multi_index(k)))
        .collect();
    let pairs: Vec<(f64, f64)> = nodes
        .par_iter()
        .map(|&k| {
            let idx = spec.multi_index(k);
            let g = fd_gradient(u, &idx)?;
            let h = fd_hessian(u, &idx)?;
            let fk = f.get_flat(k);
            Ok((
                lower_residual(&g, &h, p, e, fk)?,
                upper_residual(&g, &h, p, e, fk)?,
            ))
        })
        .collect::<Result<_>>()?;
    let (lower, upper) = pairs.into_iter().unzip();
    Ok(ResidualCheck {
        nodes,
        lower,
        upper,
    })
}

/// `ũ(x) = u(rx)/K` and `f̃(x) = (r^{p+2}/K^{p+1}) f(rx)` sampled on `target`
/// by nearest-node lookup in the source grid.
pub fn rescale(
    u: &ScalarField,
    r: f64,
    kdiv: f64,
    f: &ScalarField,
    p: DegeneracyExponent,
    target: &GridSpec,
) -> Result<(ScalarField, ScalarField)> {
    if !(r.is_finite() && r > 0.0 && kdiv.is_finite() && kdiv > 0.0) {
        return Err(invalid(format!(
            "scaling needs r > 0 and K > 0, got r = {r}, K = {kdiv}"
        )));
    }
    let src = u.spec();
    if f.spec() != src {
        return Err(invalid("solution and forcing live on different grids"));
    }
    if target.dim() != src.dim() {
        return Err(invalid("target grid dimension differs from the source"));
    }
    let pv = p.value();
    let fscale = r.powf(pv + 2.0) / kdiv.powf(pv + 1.0);
    let mut ut = Vec::with_capacity(target.node_count());
    let mut ft = Vec::with_capacity(target.node_count());
    for k in 0..target.node_count() {
        let x: Vec<f64> = target.coord_flat(k).iter().map(|c| r * c).collect();
        let idx = src.nearest_index(&x).ok_or_else(|| {
            Error::OutOfDomain(format!("scaled point {x:?} lies outside the source cube"))
        })?;
        ut.push(u.get(&idx) / kdiv);
        ft.push(fscale * f.get(&idx));
    }
    Ok((
        ScalarField::new(target.clone(), ut)?,
        ScalarField::new(target.clone(), ft)?,
    ))
}

/// One row of a refinement study.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub points_per_axis: usize,
    pub h: f64,
    pub error: f64,
    /// `log2(e_{prev}/e)/log2(h_{prev}/h)` against the previous row.
    pub order: Option<f64>,
    pub steps: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Solves a manufactured problem on `Q_r(0)` for each resolution and
/// records the sup-norm error against the exact solution.
pub fn convergence_study(
    problem: &manufactured::Problem,
    half_width: f64,
    resolutions: &[usize],
    cfg: &SolveConfig,
) -> Result<Vec<ConvergenceRow>> {
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for &m in resolutions {
        let spec = GridSpec::centered(problem.dim(), half_width, m)?;
        let exact = ScalarField::from_fn(&spec, |x| problem.exact(x))?;
        let f = ScalarField::from_fn(&spec, |x| problem.forcing(x))?;
        let (u, rep) = solve_dirichlet(&spec, &f, &exact, problem.p(), cfg)?;
        let error = u
            .values()
            .iter()
            .zip(exact.values())
            .fold(0.0f64, |e, (a, b)| e.max((a - b).abs()));
        let h = spec.spacing();
        let order = rows
            .last()
            .map(|prev| (prev.error / error).ln() / (prev.h / h).ln());
        rows.push(ConvergenceRow {
            points_per_axis: m,
            h,
            error,
            order,
            steps: rep.steps,
            residual: rep.final_residual,
            converged: rep.converged,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: f64) -> DegeneracyExponent {
        DegeneracyExponent::new(v).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SolveConfig::new(0.0, 10, 0.5, 0.0).is_err());
        assert!(SolveConfig::new(1e-6, 0, 0.5, 0.0).is_err());
        assert!(SolveConfig::new(1e-6, 10, 1.5, 0.0).is_err());
        assert!(SolveConfig::new(1e-6, 10, 0.5, -1.0).is_err());
        assert_eq!(
            SolveConfig::new(1e-6, 10, 0.5, 1e-6).unwrap().mode(),
            CoefficientMode::Floored
        );
    }

    #[test]
    fn affine_data_is_a_fixed_point() {
        for pv in [0.0, 1.0, 2.5] {
            let spec = GridSpec::centered(2, 1.0, 9).unwrap();
            let b = ScalarField::from_fn(&spec, |x| 1.0 + 2.0 * x[0] - 0.5 * x[1]).unwrap();
            let f = ScalarField::constant(&spec, 0.0).unwrap();
            let (u, rep) = solve_dirichlet(&spec, &f, &b, p(pv), &SolveConfig::default()).unwrap();
            assert!(rep.converged);
            assert_eq!(rep.steps, 0);
            for (a, e) in u.values().iter().zip(b.values()) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn max_steps_reports_honestly() {
        let spec = GridSpec::centered(2, 1.0, 9).unwrap();
        let b = ScalarField::constant(&spec, 0.0).unwrap();
        let f = ScalarField::constant(&spec, 1.0).unwrap();
        let cfg = SolveConfig::new(1e-12, 3, 0.9, 0.0).unwrap();
        let (_, rep) = solve_dirichlet(&spec, &f, &b, p(0.0), &cfg).unwrap();
        assert_eq!(rep.steps, 3);
        assert!(!rep.converged);
        assert!(rep.final_residual > 1e-12);
        assert_eq!(rep.residual_trace.last().unwrap().0, 3);
    }

    #[test]
    fn degenerate_nodes_stall() {
        // Constant data with p > 0: every coefficient vanishes.
        let spec = GridSpec::centered(2, 1.0, 9).unwrap();
        let b = ScalarField::constant(&spec, 1.0).unwrap();
        let f = ScalarField::constant(&spec, 1.0).unwrap();
        let cfg = SolveConfig::new(1e-8, 5, 0.9, 0.0).unwrap();
        let (_, rep) = solve_dirichlet(&spec, &f, &b, p(1.0), &cfg).unwrap();
        assert_eq!(rep.stalled_nodes, 49);
        assert!(!rep.converged);
    }

    #[test]
    fn ellipticity_normalization_enforced() {
        let spec = GridSpec::centered(2, 1.0, 9).unwrap();
        let u = ScalarField::constant(&spec, 1.0).unwrap();
        let e = EllipticityParams::new(1.5, 2.0).unwrap();
        assert!(matches!(
            viscosity_residual_check(&u, &u, p(0.0), e),
            Err(Error::EllipticityNormalization { .. })
        ));
    }

    #[test]
    fn residuals_of_affine_vanish() {
        let spec = GridSpec::centered(2, 1.0, 9).unwrap();
        let u = ScalarField::from_fn(&spec, |x| 0.5 * x[0] - x[1]).unwrap();
        let f = ScalarField::constant(&spec, 0.0).unwrap();
        let e = EllipticityParams::new(0.5, 2.0).unwrap();
        let c = viscosity_residual_check(&u, &f, p(1.0), e).unwrap();
        assert_eq!(c.nodes.len(), 49);
        // Pure gradient term remains: ∓Λ|Du|^{p+1}.
        let g = 2.0 * 1.25;
        assert!(c.lower.iter().all(|r| (r + g).abs() < 1e-12));
        assert!(c.upper.iter().all(|r| (r - g).abs() < 1e-12));
    }

    #[test]
    fn rescale_identity() {
        let spec = GridSpec::centered(2, 1.0, 9).unwrap();
        let u = ScalarField::from_fn(&spec, |x| x[0] * x[0] + x[1]).unwrap();
        let f = ScalarField::from_fn(&spec, |x| x[0]).unwrap();
        let (ut, ft) = rescale(&u, 1.0, 1.0, &f, p(1.0), &spec).unwrap();
        assert_eq!(ut, u);
        assert_eq!(ft, f);
    }

    #[test]
    fn rescale_out_of_domain() {
        let spec = GridSpec::centered(2, 1.0, 9).unwrap();
        let u = ScalarField::constant(&spec, 0.0).unwrap();
        assert!(matches!(
            rescale(&u, 2.0, 1.0, &u, p(0.0), &spec),
            Err(Error::OutOfDomain(_))
        ));
    }
}
