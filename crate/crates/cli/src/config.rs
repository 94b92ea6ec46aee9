//! Line-oriented `key = value` experiment configuration.
//!
//! Blank lines and everything after `#` are ignored. Every key the chosen
//! experiment kind does not read is an error, as are duplicate keys. Lists
//! are comma separated. Relative paths resolve against the config file's
//! directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pseudop_core::operators::{DegeneracyExponent, EllipticityParams};
use pseudop_core::regularize::InfConvParams;
use pseudop_core::sliding::ThresholdConfig;
use pseudop_core::solver::SolveConfig;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: key `{key}` repeats the one on line {first}")]
    DuplicateKey {
        key: String,
        line: usize,
        first: usize,
    },
    #[error("missing required key `{key}`")]
    MissingKey { key: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: key `{key}` expects {expected}, found `{value}`")]
    Type {
        key: String,
        line: usize,
        expected: &'static str,
        value: String,
    },
    #[error("line {line}: key `{key}`: {message}")]
    Constraint {
        key: String,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Solve,
    BarrierVerify,
    Slide,
    Infconv,
    Harnack,
    Holder,
    Tail,
    CzCheck,
}

impl Kind {
    pub const ALL: [Kind; 8] = [
        Kind::Solve,
        Kind::BarrierVerify,
        Kind::Slide,
        Kind::Infconv,
        Kind::Harnack,
        Kind::Holder,
        Kind::Tail,
        Kind::CzCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Solve => "solve",
            Kind::BarrierVerify => "barrier-verify",
            Kind::Slide => "slide",
            Kind::Infconv => "infconv",
            Kind::Harnack => "harnack",
            Kind::Holder => "holder",
            Kind::Tail => "tail",
            Kind::CzCheck => "cz-check",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Kind::ALL.into_iter().find(|k| k.name() == s).ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveProblem {
    Poisson {
        dim: usize,
    },
    Separable {
        dim: usize,
    },
    Dirichlet {
        boundary: PathBuf,
        forcing: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveExperiment {
    pub problem: SolveProblem,
    pub p: DegeneracyExponent,
    pub half_width: f64,
    pub resolutions: Vec<usize>,
    pub solver: SolveConfig,
    pub min_order: Option<f64>,
    pub ellipticity: EllipticityParams,
    pub residual_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierExperiment {
    pub dim: usize,
    pub p: DegeneracyExponent,
    pub ellipticity: EllipticityParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlideExperiment {
    pub field: PathBuf,
    pub forcing: Option<PathBuf>,
    pub p: DegeneracyExponent,
    /// `(K, M)`; `None` selects the default amplitude for the field's dimension.
    pub amplitude: Option<(f64, f64)>,
    pub delta: f64,
    pub mu: f64,
    pub eps_deg: Option<f64>,
    pub frozen_axes: Vec<usize>,
}

impl SlideExperiment {
    pub fn thresholds(&self, m: f64) -> pseudop_core::Result<ThresholdConfig> {
        ThresholdConfig::new(self.delta, self.mu, m, self.eps_deg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfconvExperiment {
    pub field: PathBuf,
    pub params: InfConvParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnackExperiment {
    pub field: PathBuf,
    pub forcing: Option<PathBuf>,
    pub p: DegeneracyExponent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolderExperiment {
    pub field: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Thresholds {
    Explicit(Vec<f64>),
    Geometric { min: f64, max: f64, count: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailExperiment {
    pub field: PathBuf,
    pub normalize: bool,
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CzConstruction {
    Random,
    MeasureViolation,
    PredecessorViolation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CzExperiment {
    pub dim: usize,
    pub points_per_axis: usize,
    pub delta: f64,
    pub instances: usize,
    pub density: f64,
    pub construction: CzConstruction,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    Solve(SolveExperiment),
    BarrierVerify(BarrierExperiment),
    Slide(SlideExperiment),
    Infconv(InfconvExperiment),
    Harnack(HarnackExperiment),
    Holder(HolderExperiment),
    Tail(TailExperiment),
    CzCheck(CzExperiment),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub experiment: Experiment,
    /// The parsed `key = value` pairs in key order, for echoing into reports.
    pub entries: BTreeMap<String, String>,
}

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

/// Typed access to the raw entries that remembers which keys were read.
struct Keys {
    entries: BTreeMap<String, Entry>,
    base: PathBuf,
}

type Res<T> = Result<T, ConfigError>;

impl Keys {
    fn raw(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.line)
    }

    fn parsed<T: FromStr>(&mut self, key: &str, expected: &'static str) -> Res<Option<(T, usize)>> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => {
                v.parse::<T>()
                    .map(|t| Some((t, line)))
                    .map_err(|_| ConfigError::Type {
                        key: key.into(),
                        line,
                        expected,
                        value: v,
                    })
            }
        }
    }

    fn f64_opt(&mut self, key: &str) -> Res<Option<f64>> {
        match self.parsed::<f64>(key, "a real number")? {
            Some((v, line)) if !v.is_finite() => Err(ConfigError::Type {
                key: key.into(),
                line,
                expected: "a finite real number",
                value: v.to_string(),
            }),
            other => Ok(other.map(|(v, _)| v)),
        }
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Res<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn f64_req(&mut self, key: &str) -> Res<f64> {
        self.f64_opt(key)?.ok_or_else(|| missing(key))
    }

    fn usize_opt(&mut self, key: &str) -> Res<Option<usize>> {
        Ok(self
            .parsed::<usize>(key, "a nonnegative integer")?
            .map(|(v, _)| v))
    }

    fn usize_or(&mut self, key: &str, default: usize) -> Res<usize> {
        Ok(self.usize_opt(key)?.unwrap_or(default))
    }

    fn bool_or(&mut self, key: &str, default: bool) -> Res<bool> {
        Ok(self
            .parsed::<bool>(key, "true or false")?
            .map_or(default, |(v, _)| v))
    }

    fn list<T: FromStr>(&mut self, key: &str, expected: &'static str) -> Res<Option<Vec<T>>> {
        let Some((v, line)) = self.raw(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|s| s.trim().parse::<T>())
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
            .map_err(|_| ConfigError::Type {
                key: key.into(),
                line,
                expected,
                value: v,
            })
    }

    fn path_opt(&mut self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|(v, _)| self.base.join(v))
    }

    fn path_req(&mut self, key: &str) -> Res<PathBuf> {
        self.path_opt(key).ok_or_else(|| missing(key))
    }

    fn word_or(&mut self, key: &str, default: &str) -> String {
        self.raw(key)
            .map_or_else(|| default.to_string(), |(v, _)| v)
    }

    fn constraint(&self, key: &str, message: impl fmt::Display) -> ConfigError {
        ConfigError::Constraint {
            key: key.into(),
            line: self.line(key),
            message: message.to_string(),
        }
    }

    fn p(&mut self) -> Res<DegeneracyExponent> {
        let v = self.f64_or("p", 0.0)?;
        DegeneracyExponent::new(v).map_err(|e| self.constraint("p", e))
    }

    fn ellipticity(&mut self, lambda: f64, cap: f64) -> Res<EllipticityParams> {
        let l = self.f64_or("lambda", lambda)?;
        let c = self.f64_or("Lambda", cap)?;
        EllipticityParams::new(l, c).map_err(|_| {
            let key = if self.entries.contains_key("lambda") {
                "lambda"
            } else {
                "Lambda"
            };
            self.constraint(
                key,
                format!("requires 0 < lambda <= Lambda, got lambda = {l}, Lambda = {c}"),
            )
        })
    }

    fn dim(&mut self, default: usize, range: std::ops::RangeInclusive<usize>) -> Res<usize> {
        let n = self.usize_or("dim", default)?;
        if !range.contains(&n) {
            return Err(self.constraint(
                "dim",
                format!(
                    "dimension must lie in {}..={}, got {n}",
                    range.start(),
                    range.end()
                ),
            ));
        }
        Ok(n)
    }

    fn finish(self) -> Res<()> {
        match self
            .entries
            .iter()
            .filter(|(_, e)| !e.used)
            .min_by_key(|(_, e)| e.line)
        {
            Some((k, e)) => Err(ConfigError::UnknownKey {
                key: k.clone(),
                line: e.line,
            }),
            None => Ok(()),
        }
    }
}

fn missing(key: &str) -> ConfigError {
    ConfigError::MissingKey { key: key.into() }
}

fn tokenize(text: &str) -> Res<BTreeMap<String, Entry>> {
    let mut out: BTreeMap<String, Entry> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                text: raw.trim().into(),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() || k.contains(char::is_whitespace) {
            return Err(ConfigError::Syntax {
                line,
                text: raw.trim().into(),
            });
        }
        if let Some(prev) = out.get(k) {
            return Err(ConfigError::DuplicateKey {
                key: k.into(),
                line,
                first: prev.line,
            });
        }
        out.insert(
            k.into(),
            Entry {
                value: v.into(),
                line,
                used: false,
            },
        );
    }
    Ok(out)
}

/// Parses and validates a configuration; relative paths resolve against `base`.
pub fn parse_config(text: &str, base: &Path) -> Res<ExperimentConfig> {
    let entries = tokenize(text)?;
    let echo = entries
        .iter()
        .map(|(k, e)| (k.clone(), e.value.clone()))
        .collect();
    let mut keys = Keys {
        entries,
        base: base.to_path_buf(),
    };
    let (kind_text, kind_line) = keys.raw("kind").ok_or_else(|| missing("kind"))?;
    let kind: Kind = kind_text.parse().map_err(|_| ConfigError::Constraint {
        key: "kind".into(),
        line: kind_line,
        message: format!(
            "unknown experiment kind `{kind_text}`, expected one of {}",
            Kind::ALL.map(Kind::name).join(", ")
        ),
    })?;
    let experiment = match kind {
        Kind::Solve => Experiment::Solve(parse_solve(&mut keys)?),
        Kind::BarrierVerify => Experiment::BarrierVerify(BarrierExperiment {
            dim: keys.dim(2, 1..=4)?,
            p: keys.p()?,
            ellipticity: keys.ellipticity(1.0, 1.0)?,
        }),
        Kind::Slide => Experiment::Slide(parse_slide(&mut keys)?),
        Kind::Infconv => {
            let field = keys.path_req("field")?;
            let eps = keys.f64_req("epsilon")?;
            let params = InfConvParams::new(eps).map_err(|e| keys.constraint("epsilon", e))?;
            Experiment::Infconv(InfconvExperiment { field, params })
        }
        Kind::Harnack => Experiment::Harnack(HarnackExperiment {
            field: keys.path_req("field")?,
            forcing: keys.path_opt("forcing"),
            p: keys.p()?,
        }),
        Kind::Holder => Experiment::Holder(HolderExperiment {
            field: keys.path_req("field")?,
        }),
        Kind::Tail => Experiment::Tail(parse_tail(&mut keys)?),
        Kind::CzCheck => Experiment::CzCheck(parse_cz(&mut keys)?),
    };
    keys.finish()?;
    Ok(ExperimentConfig {
        kind,
        experiment,
        entries: echo,
    })
}

fn parse_solve(keys: &mut Keys) -> Res<SolveExperiment> {
    let problem_name = keys.raw("problem").ok_or_else(|| missing("problem"))?.0;
    let problem = match problem_name.as_str() {
        "poisson" => SolveProblem::Poisson {
            dim: keys.dim(2, 2..=4)?,
        },
        "separable" => SolveProblem::Separable {
            dim: keys.dim(2, 1..=4)?,
        },
        "dirichlet" => SolveProblem::Dirichlet {
            boundary: keys.path_req("boundary")?,
            forcing: keys.path_opt("forcing"),
        },
        other => {
            return Err(keys.constraint(
                "problem",
                format!("expected poisson, separable or dirichlet, got `{other}`"),
            ))
        }
    };
    let p = keys.p()?;
    if matches!(problem, SolveProblem::Poisson { .. }) && p.value() != 0.0 {
        return Err(keys.constraint("p", "the poisson problem has p = 0"));
    }
    let manufactured = !matches!(problem, SolveProblem::Dirichlet { .. });
    let (half_width, resolutions, min_order) = if manufactured {
        let hw = keys.f64_or("half_width", 0.5)?;
        if !(hw > 0.0) {
            return Err(keys.constraint("half_width", "must be positive"));
        }
        let res = keys
            .list::<usize>("resolutions", "a list of odd integers")?
            .unwrap_or_else(|| vec![9, 17, 33, 65]);
        if res.is_empty()
            || res.iter().any(|&m| m < 9 || m % 2 == 0)
            || res.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(keys.constraint(
                "resolutions",
                "need increasing odd points per axis, each at least 9",
            ));
        }
        let mo = keys.f64_opt("min_order")?;
        (hw, res, mo)
    } else {
        (0.0, Vec::new(), None)
    };
    let tol = keys.f64_or("tol", 1e-9)?;
    let max_steps = keys.usize_or("max_steps", 500_000)?;
    let safety = keys.f64_or("safety", 0.9)?;
    let floor = keys.f64_or("floor", 0.0)?;
    let solver = SolveConfig::new(tol, max_steps, safety, floor).map_err(|e| {
        let key = ["tol", "max_steps", "safety", "floor"]
            .into_iter()
            .find(|k| keys.entries.contains_key(*k))
            .unwrap_or("tol");
        keys.constraint(key, e)
    })?;
    let (ellipticity, residual_tolerance) = if manufactured {
        (EllipticityParams::unit(), None)
    } else {
        let e = keys.ellipticity(0.5, 2.0)?;
        if e.lambda() > 1.0 || e.cap_lambda() < 1.0 {
            return Err(keys.constraint("lambda", "the residual check needs lambda <= 1 <= Lambda"));
        }
        (e, keys.f64_opt("residual_tolerance")?)
    };
    Ok(SolveExperiment {
        problem,
        p,
        half_width,
        resolutions,
        solver,
        min_order,
        ellipticity,
        residual_tolerance,
    })
}

fn parse_slide(keys: &mut Keys) -> Res<SlideExperiment> {
    let field = keys.path_req("field")?;
    let forcing = keys.path_opt("forcing");
    let p = keys.p()?;
    let k = keys.f64_opt("K")?;
    let m = keys.f64_opt("M")?;
    let amplitude = match (k, m) {
        (Some(k), Some(m)) => {
            if !(k > 1.0) {
                return Err(keys.constraint("K", format!("K must exceed 1, got {k}")));
            }
            Some((k, m))
        }
        (None, None) => None,
        (Some(_), None) => return Err(missing("M")),
        (None, Some(_)) => return Err(missing("K")),
    };
    let delta = keys.f64_or("delta", 0.5)?;
    let mu = keys.f64_or("mu", 0.5)?;
    let eps_deg = keys.f64_opt("eps_deg")?;
    let frozen_axes = keys
        .list::<usize>("frozen_axes", "a list of axis indices")?
        .unwrap_or_default();
    let exp = SlideExperiment {
        field,
        forcing,
        p,
        amplitude,
        delta,
        mu,
        eps_deg,
        frozen_axes,
    };
    for (key, v) in [("delta", exp.delta), ("mu", exp.mu)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(keys.constraint(key, format!("must lie in (0, 1), got {v}")));
        }
    }
    if let Some(m) = m.filter(|&m| !(m > 1.0)) {
        return Err(keys.constraint("M", format!("M must exceed 1, got {m}")));
    }
    if let Some(e) = eps_deg.filter(|&e| e < 0.0) {
        return Err(keys.constraint("eps_deg", format!("must be >= 0, got {e}")));
    }
    Ok(exp)
}

fn parse_tail(keys: &mut Keys) -> Res<TailExperiment> {
    let field = keys.path_req("field")?;
    let normalize = keys.bool_or("normalize", true)?;
    let explicit = keys.list::<f64>("thresholds", "a list of real numbers")?;
    let thresholds = match explicit {
        Some(t) => {
            if keys.entries.contains_key("threshold_min")
                || keys.entries.contains_key("threshold_max")
                || keys.entries.contains_key("threshold_count")
            {
                return Err(keys.constraint(
                    "thresholds",
                    "give either an explicit list or threshold_min/max/count, not both",
                ));
            }
            if t.iter().any(|&v| !(v > 0.0)) || t.windows(2).any(|w| w[0] >= w[1]) {
                return Err(
                    keys.constraint("thresholds", "must be positive and strictly increasing")
                );
            }
            Thresholds::Explicit(t)
        }
        None => {
            let min = keys.f64_or("threshold_min", 1.0)?;
            let max = keys.f64_or("threshold_max", 1000.0)?;
            let count = keys.usize_or("threshold_count", 31)?;
            if !(min > 0.0 && max > min) {
                return Err(
                    keys.constraint("threshold_min", "need 0 < threshold_min < threshold_max")
                );
            }
            if count < 3 {
                return Err(keys.constraint("threshold_count", "need at least 3 thresholds"));
            }
            Thresholds::Geometric { min, max, count }
        }
    };
    Ok(TailExperiment {
        field,
        normalize,
        thresholds,
    })
}

fn parse_cz(keys: &mut Keys) -> Res<CzExperiment> {
    let dim = keys.dim(2, 1..=4)?;
    let points_per_axis = keys.usize_or("points_per_axis", 17)?;
    if points_per_axis < 9 || points_per_axis % 2 == 0 {
        return Err(keys.constraint("points_per_axis", "must be odd and at least 9"));
    }
    let delta = keys.f64_or("delta", 0.5)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(keys.constraint("delta", "must lie in (0, 1)"));
    }
    let instances = keys.usize_or("instances", 100)?;
    if instances == 0 {
        return Err(keys.constraint("instances", "must be positive"));
    }
    let density = keys.f64_or("density", 0.02)?;
    if !(0.0..1.0).contains(&density) {
        return Err(keys.constraint("density", "must lie in [0, 1)"));
    }
    let construction =
        match keys.word_or("construct", "random").as_str() {
            "random" => CzConstruction::Random,
            "measure_violation" => CzConstruction::MeasureViolation,
            "predecessor_violation" => CzConstruction::PredecessorViolation,
            other => return Err(keys.constraint(
                "construct",
                format!(
                    "expected random, measure_violation or predecessor_violation, got `{other}`"
                ),
            )),
        };
    Ok(CzExperiment {
        dim,
        points_per_axis,
        delta,
        instances,
        density,
        construction,
    })
}
