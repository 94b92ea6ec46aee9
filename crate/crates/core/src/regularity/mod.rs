//! Dyadic cubes with the Calderón-Zygmund check, and empirical regularity
//! metrics (tail decay, Harnack ratio, Hölder exponent). All measures are
//! node-counting measures.

pub mod dyadic;
pub mod metrics;

pub use dyadic::{cz_check, predecessor_closure, CzVerdict, DyadicCube};
pub use metrics::{
    fit_tail, geometric_thresholds, harnack_report, holder_report, normalize_to_unit_inf,
    tail_distribution, HarnackReport, HolderReport, RegularityReport, TailCurve, TailFit,
};
