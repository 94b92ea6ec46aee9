//! Experiment orchestration. Every number in a report comes from a
//! `pseudop-core` operation; this module only wires inputs to outputs.

use std::fs;
use std::path::{Path, PathBuf};

use pseudop_core::field_io::{field_io_read, field_io_write};
use pseudop_core::grid::{GridSpec, ScalarField};
use pseudop_core::profiles::{select_barrier_exponent, ParaboloidParams};
use pseudop_core::regularity::{
    cz_check, fit_tail, geometric_thresholds, harnack_report, holder_report, normalize_to_unit_inf,
    predecessor_closure, tail_distribution, CzVerdict,
};
use pseudop_core::regularize::{inf_convolution, inf_convolution_diagnostics};
use pseudop_core::sliding::{default_amplitude, index_set_label, sliced_measure_experiment};
use pseudop_core::solver::manufactured::Problem;
use pseudop_core::solver::{convergence_study, solve_dirichlet, viscosity_residual_check};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::*;
use crate::output::{num, opt_num, write_json, write_text, Plot, Series, Table};
use crate::RunError;

#[derive(Debug, Clone)]
pub struct RunContext {
    pub out: PathBuf,
    pub seed: u64,
    pub verbose: bool,
}

/// A named assertion evaluated on the experiment outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        passed,
        detail: detail.into(),
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub artifacts: Vec<PathBuf>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

struct Sink<'a> {
    ctx: &'a RunContext,
    artifacts: Vec<PathBuf>,
}

impl Sink<'_> {
    fn dir(&self) -> &Path {
        &self.ctx.out
    }

    fn keep(&mut self, p: PathBuf) {
        if self.ctx.verbose {
            eprintln!("wrote {}", p.display());
        }
        self.artifacts.push(p);
    }

    fn table(&mut self, t: &Table, name: &str) -> Result<(), RunError> {
        let p = t.write(self.dir(), name)?;
        self.keep(p);
        Ok(())
    }

    fn plot(&mut self, p: &Plot, name: &str) -> Result<(), RunError> {
        let path = p.write(self.dir(), name)?;
        self.keep(path);
        Ok(())
    }

    fn field(&mut self, u: &ScalarField, name: &str) -> Result<(), RunError> {
        let p = self.dir().join(name);
        field_io_write(u, &p)?;
        self.keep(p);
        Ok(())
    }

    fn note(&self, msg: impl AsRef<str>) {
        if self.ctx.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn forcing_or_zero(path: &Option<PathBuf>, like: &ScalarField) -> Result<ScalarField, RunError> {
    match path {
        Some(p) => {
            let f = field_io_read(p)?;
            if f.spec() != like.spec() {
                return Err(RunError::Setup(format!(
                    "forcing field {} lives on a different grid than the input field",
                    p.display()
                )));
            }
            Ok(f)
        }
        None => Ok(ScalarField::constant(like.spec(), 0.0)?),
    }
}

/// Runs one experiment, writes `report.json` plus kind-specific tables and
/// plots into `ctx.out`, and returns the evaluated checks.
pub fn run(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Outcome, RunError> {
    fs::create_dir_all(&ctx.out).map_err(|source| RunError::Io {
        path: ctx.out.display().to_string(),
        source,
    })?;
    let mut sink = Sink {
        ctx,
        artifacts: Vec::new(),
    };
    let (result, checks) = match &cfg.experiment {
        Experiment::Solve(e) => run_solve(e, &mut sink)?,
        Experiment::BarrierVerify(e) => run_barrier(e, &mut sink)?,
        Experiment::Slide(e) => run_slide(e, &mut sink)?,
        Experiment::Infconv(e) => run_infconv(e, &mut sink)?,
        Experiment::Harnack(e) => run_harnack(e, &mut sink)?,
        Experiment::Holder(e) => run_holder(e, &mut sink)?,
        Experiment::Tail(e) => run_tail(e, &mut sink)?,
        Experiment::CzCheck(e) => run_cz(e, ctx.seed, &mut sink)?,
    };
    let report = json!({
        "kind": cfg.kind.name(),
        "seed": ctx.seed,
        "config": cfg.entries,
        "checks": checks,
        "passed": checks.iter().all(|c| c.passed),
        "result": result,
    });
    let p = write_json(&ctx.out, "report.json", &report)?;
    sink.keep(p);
    for c in &checks {
        sink.note(format!(
            "{} {}: {}",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.detail
        ));
    }
    Ok(Outcome {
        checks,
        artifacts: sink.artifacts,
    })
}

type Ran = Result<(Value, Vec<Check>), RunError>;

fn run_solve(e: &SolveExperiment, sink: &mut Sink<'_>) -> Ran {
    match &e.problem {
        SolveProblem::Poisson { dim } | SolveProblem::Separable { dim } => {
            let problem = match e.problem {
                SolveProblem::Poisson { .. } => Problem::poisson(*dim)?,
                _ => Problem::separable(*dim, e.p)?,
            };
            sink.note(format!("convergence study on {:?}", e.resolutions));
            let rows = convergence_study(&problem, e.half_width, &e.resolutions, &e.solver)?;
            let mut t = Table::new(&[
                "points_per_axis",
                "h",
                "error",
                "order",
                "steps",
                "residual",
                "converged",
            ]);
            for r in &rows {
                t.push(vec![
                    r.points_per_axis.to_string(),
                    num(r.h),
                    num(r.error),
                    opt_num(r.order),
                    r.steps.to_string(),
                    num(r.residual),
                    r.converged.to_string(),
                ]);
            }
            sink.table(&t, "convergence.csv")?;
            sink.plot(
                &Plot {
                    title: "sup-norm error against grid spacing".into(),
                    x_label: "h".into(),
                    y_label: "error".into(),
                    log_x: true,
                    log_y: true,
                    series: vec![Series {
                        label: "error".into(),
                        points: rows.iter().map(|r| (r.h, r.error)).collect(),
                    }],
                },
                "convergence.svg",
            )?;
            let min_order = rows.iter().filter_map(|r| r.order).reduce(f64::min);
            let mut checks = vec![check(
                "all_converged",
                rows.iter().all(|r| r.converged),
                format!(
                    "{} of {} resolutions converged",
                    rows.iter().filter(|r| r.converged).count(),
                    rows.len()
                ),
            )];
            if let Some(target) = e.min_order {
                checks.push(check(
                    "observed_order",
                    min_order.is_some_and(|o| o >= target),
                    format!(
                        "min observed order {} against {}",
                        opt_num(min_order),
                        num(target)
                    ),
                ));
            }
            Ok((json!({ "rows": rows, "min_order": min_order }), checks))
        }
        SolveProblem::Dirichlet { boundary, forcing } => {
            let b = field_io_read(boundary)?;
            let f = forcing_or_zero(forcing, &b)?;
            let (u, rep) = solve_dirichlet(b.spec(), &f, &b, e.p, &e.solver)?;
            sink.field(&u, "solution.bin")?;
            let chk = viscosity_residual_check(&u, &f, e.p, e.ellipticity)?;
            let (max_lower, min_upper) = (chk.max_lower(), chk.min_upper());
            let mut t = Table::new(&["step", "residual"]);
            for (s, r) in &rep.residual_trace {
                t.push(vec![s.to_string(), num(*r)]);
            }
            sink.table(&t, "residual_trace.csv")?;
            sink.plot(
                &Plot {
                    title: "scheme residual during relaxation".into(),
                    x_label: "step".into(),
                    y_label: "residual".into(),
                    log_x: false,
                    log_y: true,
                    series: vec![Series {
                        label: "residual".into(),
                        points: rep
                            .residual_trace
                            .iter()
                            .map(|&(s, r)| (s as f64, r))
                            .collect(),
                    }],
                },
                "residual_trace.svg",
            )?;
            let mut checks = vec![check(
                "converged",
                rep.converged,
                format!("{} steps, residual {}", rep.steps, num(rep.final_residual)),
            )];
            if let Some(tau) = e.residual_tolerance {
                checks.push(check(
                    "viscosity_sandwich",
                    max_lower <= tau && min_upper >= -tau,
                    format!(
                        "max lower {}, min upper {}, tolerance {}",
                        num(max_lower),
                        num(min_upper),
                        num(tau)
                    ),
                ));
            }
            Ok((
                json!({ "solve": rep, "max_lower_residual": max_lower, "min_upper_residual": min_upper }),
                checks,
            ))
        }
    }
}

fn run_barrier(e: &BarrierExperiment, sink: &mut Sink<'_>) -> Ran {
    let sel = select_barrier_exponent(e.dim, e.p, e.ellipticity)?;
    let mut t = Table::new(&["a", "status"]);
    for a in &sel.rejected {
        t.push(vec![num(*a), "rejected".into()]);
    }
    t.push(vec![num(sel.a), "selected".into()]);
    sink.table(&t, "ladder.csv")?;
    let checks = vec![
        check(
            "normalized_residual_positive",
            sel.min_normalized_residual > 0.0,
            format!(
                "min normalized residual {}",
                num(sel.min_normalized_residual)
            ),
        ),
        check(
            "raw_residual_above_one",
            sel.raw_above_one == sel.sample_count,
            format!(
                "{} of {} sample points, min raw residual {}",
                sel.raw_above_one,
                sel.sample_count,
                num(sel.min_raw_residual)
            ),
        ),
    ];
    Ok((serde_json::to_value(&sel)?, checks))
}

fn run_slide(e: &SlideExperiment, sink: &mut Sink<'_>) -> Ran {
    let u = field_io_read(&e.field)?;
    let f = forcing_or_zero(&e.forcing, &u)?;
    let n = u.spec().dim();
    let (k, m) = match e.amplitude {
        Some(km) => km,
        None => default_amplitude(n, e.p)?,
    };
    let pp = ParaboloidParams::new(k, e.p)?;
    let t = e.thresholds(m)?;
    let rep = sliced_measure_experiment(&u, &f, &t, &pp, &e.frozen_axes)?;
    let mut header: Vec<String> = (0..n).map(|d| format!("y{d}")).collect();
    header.extend((0..n).map(|d| format!("x{d}")));
    header.extend(["offset", "nondeg_set", "jac_det", "a_min_eig"].map(String::from));
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut records = Table::new(&header_ref);
    for r in &rep.records {
        let mut row: Vec<String> = r.vertex.iter().chain(&r.touch).map(|v| num(*v)).collect();
        row.push(num(r.offset));
        row.push(index_set_label(&r.nondeg_set));
        row.push(opt_num(r.jac_det));
        row.push(opt_num(r.a_min_eig));
        records.push(row);
    }
    sink.table(&records, "records.csv")?;
    let mut classes = Table::new(&["nondeg_set", "vertices", "touches"]);
    for c in &rep.classes {
        classes.push(vec![
            index_set_label(&c.nondeg_set),
            c.vertices.to_string(),
            c.touches.to_string(),
        ]);
    }
    sink.table(&classes, "classes.csv")?;
    let p = write_text(sink.dir(), "measure.txt", &rep.to_key_value())?;
    sink.keep(p);
    let mut checks = vec![check(
        "touching_rescan",
        rep.rescan_violations == 0,
        format!(
            "{} violations over {} slides",
            rep.rescan_violations, rep.vertex_count
        ),
    )];
    // Slices that miss the low point of u can legitimately touch at the vertex.
    if e.frozen_axes.is_empty() {
        checks.push(check(
            "case2_touch_differs_from_vertex",
            rep.case2_violations == 0,
            format!("{} records", rep.case2_violations),
        ));
    }
    Ok((serde_json::to_value(&rep)?, checks))
}

fn run_infconv(e: &InfconvExperiment, sink: &mut Sink<'_>) -> Ran {
    let u = field_io_read(&e.field)?;
    let r = inf_convolution(&u, e.params)?;
    let d = inf_convolution_diagnostics(&u, &r, e.params)?;
    sink.field(&r, "infconv.bin")?;
    let mut t = Table::new(&["node", "u", "u_eps"]);
    for k in 0..u.spec().node_count() {
        t.push(vec![k.to_string(), num(u.get_flat(k)), num(r.get_flat(k))]);
    }
    sink.table(&t, "infconv.csv")?;
    let checks = vec![
        check(
            "below_input",
            d.below_input,
            format!("max increase {}", num(d.max_increase)),
        ),
        check(
            "semiconcave",
            d.semiconcave,
            format!(
                "max second difference {} against {}",
                num(d.max_second_difference),
                num(d.semiconcavity_bound)
            ),
        ),
    ];
    Ok((serde_json::to_value(&d)?, checks))
}

fn run_harnack(e: &HarnackExperiment, sink: &mut Sink<'_>) -> Ran {
    let u = field_io_read(&e.field)?;
    let f = forcing_or_zero(&e.forcing, &u)?;
    let rep = harnack_report(&u, &f, e.p.value())?;
    let mut t = Table::new(&[
        "ratio",
        "sup_half_ball",
        "inf_half_ball",
        "forcing_term",
        "half_ball_nodes",
    ]);
    t.push(vec![
        num(rep.ratio),
        num(rep.sup_half_ball),
        num(rep.inf_half_ball),
        num(rep.forcing_term),
        rep.half_ball_nodes.to_string(),
    ]);
    sink.table(&t, "harnack.csv")?;
    let checks = vec![check(
        "ratio_finite",
        rep.ratio.is_finite(),
        format!("ratio {}", num(rep.ratio)),
    )];
    Ok((serde_json::to_value(&rep)?, checks))
}

fn run_holder(e: &HolderExperiment, sink: &mut Sink<'_>) -> Ran {
    let u = field_io_read(&e.field)?;
    let rep = holder_report(&u)?;
    let mut t = Table::new(&["radius", "oscillation"]);
    for (r, o) in rep.radii.iter().zip(&rep.oscillations) {
        t.push(vec![num(*r), num(*o)]);
    }
    sink.table(&t, "oscillation.csv")?;
    sink.plot(
        &Plot {
            title: format!("oscillation decay, alpha = {:.4}", rep.alpha),
            x_label: "radius".into(),
            y_label: "oscillation".into(),
            log_x: true,
            log_y: true,
            series: vec![Series {
                label: "osc".into(),
                points: rep
                    .radii
                    .iter()
                    .copied()
                    .zip(rep.oscillations.iter().copied())
                    .collect(),
            }],
        },
        "oscillation.svg",
    )?;
    let checks = vec![check(
        "alpha_positive",
        rep.alpha > 0.0,
        format!("alpha {}", num(rep.alpha)),
    )];
    Ok((serde_json::to_value(&rep)?, checks))
}

fn run_tail(e: &TailExperiment, sink: &mut Sink<'_>) -> Ran {
    let raw = field_io_read(&e.field)?;
    let u = if e.normalize {
        normalize_to_unit_inf(&raw)?
    } else {
        raw
    };
    let thresholds = match &e.thresholds {
        Thresholds::Explicit(t) => t.clone(),
        Thresholds::Geometric { min, max, count } => geometric_thresholds(*min, *max, *count)?,
    };
    let curve = tail_distribution(&u, &thresholds)?;
    let mut t = Table::new(&["threshold", "fraction"]);
    for (th, fr) in curve.thresholds.iter().zip(&curve.fractions) {
        t.push(vec![num(*th), num(*fr)]);
    }
    sink.table(&t, "tail.csv")?;
    sink.plot(
        &Plot {
            title: "level-set tail".into(),
            x_label: "t".into(),
            y_label: "fraction of nodes with u > t".into(),
            log_x: true,
            log_y: true,
            series: vec![Series {
                label: "tail".into(),
                points: curve
                    .thresholds
                    .iter()
                    .copied()
                    .zip(curve.fractions.iter().copied())
                    .collect(),
            }],
        },
        "tail.svg",
    )?;
    let (fit, checks) = match fit_tail(&curve) {
        Ok(fit) => {
            let c = check(
                "epsilon_positive",
                fit.epsilon > 0.0,
                format!("epsilon {}", num(fit.epsilon)),
            );
            (Some(fit), vec![c])
        }
        Err(err) => (None, vec![check("fit_defined", false, err.to_string())]),
    };
    Ok((json!({ "curve": curve, "fit": fit }), checks))
}

/// Clustered random node set: a few boxes plus sparse noise.
fn random_set(rng: &mut ChaCha8Rng, spec: &GridSpec, density: f64, max_boxes: usize) -> Vec<bool> {
    let n = spec.dim();
    let m = spec.points_per_axis();
    let boxes: Vec<(Vec<usize>, usize)> = (0..rng.gen_range(1..=max_boxes))
        .map(|_| {
            (
                (0..n).map(|_| rng.gen_range(0..m)).collect(),
                rng.gen_range(1..=m / 4),
            )
        })
        .collect();
    (0..spec.node_count())
        .map(|k| {
            let idx = spec.multi_index(k);
            boxes
                .iter()
                .any(|(c, w)| idx.iter().zip(c).all(|(i, j)| i.abs_diff(*j) < *w))
                || rng.gen_bool(density)
        })
        .collect()
}

const MAX_REJECTIONS: usize = 10_000;

fn run_cz(e: &CzExperiment, seed: u64, sink: &mut Sink<'_>) -> Ran {
    let spec = GridSpec::centered(e.dim, 1.0, e.points_per_axis)?;
    let total = spec.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut verdicts = Vec::with_capacity(e.instances);
    let mut t = Table::new(&["instance", "e_count", "f_count", "verdict"]);
    let mut expected = 0;
    for i in 0..e.instances {
        let (set_e, set_f) = match e.construction {
            CzConstruction::Random => {
                let mut tries = 0;
                let set_e = loop {
                    let s = random_set(&mut rng, &spec, e.density, 3);
                    if s.iter().filter(|&&b| b).count() as f64 <= e.delta * total as f64 {
                        break s;
                    }
                    tries += 1;
                    if tries == MAX_REJECTIONS {
                        return Err(RunError::Setup(format!(
                            "no random set with |E| <= delta |Q| after {MAX_REJECTIONS} draws; lower density"
                        )));
                    }
                };
                let f = predecessor_closure(&spec, &set_e, e.delta)?;
                (set_e, f)
            }
            CzConstruction::MeasureViolation => {
                let d = e.delta + (1.0 - e.delta) / 2.0;
                let s: Vec<bool> = (0..total).map(|_| rng.gen_bool(d)).collect();
                (s.clone(), s)
            }
            CzConstruction::PredecessorViolation => {
                // One full box in a random corner: its dense subcubes have
                // predecessors that stick out of F = E.
                let m = spec.points_per_axis();
                let side = m / 4;
                let corner: Vec<bool> = (0..e.dim).map(|_| rng.gen_bool(0.5)).collect();
                let s: Vec<bool> = (0..total)
                    .map(|k| {
                        spec.multi_index(k).iter().zip(&corner).all(|(&i, &hi)| {
                            if hi {
                                i >= m - side
                            } else {
                                i < side
                            }
                        })
                    })
                    .collect();
                (s.clone(), s)
            }
        };
        let v = cz_check(&spec, &set_e, &set_f, e.delta)?;
        let ok = match e.construction {
            CzConstruction::Random => v.is_confirmed(),
            CzConstruction::MeasureViolation => matches!(v, CzVerdict::MeasureHypothesis { .. }),
            CzConstruction::PredecessorViolation => {
                matches!(v, CzVerdict::PredecessorHypothesis { .. })
            }
        };
        expected += ok as usize;
        let name = serde_json::to_value(&v)?["verdict"]
            .as_str()
            .unwrap_or("")
            .to_string();
        t.push(vec![
            i.to_string(),
            set_e.iter().filter(|&&b| b).count().to_string(),
            set_f.iter().filter(|&&b| b).count().to_string(),
            name,
        ]);
        verdicts.push(v);
    }
    sink.table(&t, "instances.csv")?;
    let want = match e.construction {
        CzConstruction::Random => "confirmed",
        CzConstruction::MeasureViolation => "measure_hypothesis",
        CzConstruction::PredecessorViolation => "predecessor_hypothesis",
    };
    let checks = vec![check(
        "expected_verdicts",
        expected == e.instances,
        format!("{expected} of {} instances gave {want}", e.instances),
    )];
    Ok((json!({ "verdicts": verdicts }), checks))
}
