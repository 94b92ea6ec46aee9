//! Dyadic subdivision of the grid cube and the Calderón-Zygmund check.
//!
//! Node `i` on an axis with `N` nodes belongs to cell
//! `min(⌊i 2^L / (N-1)⌋, 2^L - 1)` at level `L`; cells are nested across
//! levels and the measure of a cube is the number of nodes it contains.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::grid::GridSpec;

/// Level cap; `2^L` cells per axis must fit the index type.
pub const MAX_LEVEL: u32 = 24;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct DyadicCube {
    level: u32,
    index: Vec<u32>,
}

impl DyadicCube {
    pub fn new(level: u32, index: Vec<u32>) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(invalid(format!("dyadic level {level} exceeds {MAX_LEVEL}")));
        }
        if index.is_empty() {
            return Err(invalid("dyadic cube needs at least one axis"));
        }
        let side = 1u32 << level;
        if let Some(i) = index.iter().find(|&&i| i >= side) {
            return Err(invalid(format!(
                "cell index {i} out of range at level {level}"
            )));
        }
        Ok(Self { level, index })
    }

    pub fn root(dim: usize) -> Self {
        Self {
            level: 0,
            index: vec![0; dim],
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn index(&self) -> &[u32] {
        &self.index
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn predecessor(&self) -> Result<Self> {
        if self.level == 0 {
            return Err(invalid("the root cube has no predecessor"));
        }
        Ok(Self {
            level: self.level - 1,
            index: self.index.iter().map(|i| i >> 1).collect(),
        })
    }

    /// The `2^n` children, ordered by the bit pattern of their offsets.
    pub fn children(&self) -> Result<Vec<Self>> {
        if self.level == MAX_LEVEL {
            return Err(invalid("children would exceed the level cap"));
        }
        let n = self.dim();
        Ok((0..1u32 << n)
            .map(|mask| Self {
                level: self.level + 1,
                index: self
                    .index
                    .iter()
                    .enumerate()
                    .map(|(d, &i)| 2 * i + ((mask >> (n - 1 - d)) & 1))
                    .collect(),
            })
            .collect())
    }

    /// Whether `other` is `self` or one of its descendants.
    pub fn contains(&self, other: &Self) -> bool {
        other.dim() == self.dim()
            && other.level >= self.level
            && other
                .index
                .iter()
                .zip(&self.index)
                .all(|(o, s)| o >> (other.level - self.level) == *s)
    }

    /// The level-`level` cell containing grid node `idx`.
    pub fn of_node(spec: &GridSpec, idx: &[usize], level: u32) -> Self {
        let last = (spec.points_per_axis() - 1) as u64;
        let side = 1u64 << level;
        Self {
            level,
            index: idx
                .iter()
                .map(|&i| ((i as u64 * side) / last).min(side - 1) as u32)
                .collect(),
        }
    }
}

/// Deepest level scanned: the first where every cell spans less than two
/// node gaps, so that each node of a set is isolated in some cell.
pub fn finest_level(spec: &GridSpec) -> u32 {
    let gaps = (spec.points_per_axis() - 1) as u64;
    let mut l = 0;
    while (1u64 << l) < 2 * gaps {
        l += 1;
    }
    l
}

/// Outcome of [`cz_check`]; the first violated hypothesis wins.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum CzVerdict {
    /// Both hypotheses hold and `|E| ≤ δ|F|`.
    Confirmed {
        e_count: usize,
        f_count: usize,
        delta: f64,
        levels_scanned: u32,
    },
    /// `|E| > δ|Q_1|`.
    MeasureHypothesis {
        e_count: usize,
        total: usize,
        delta: f64,
    },
    /// A cube with `|E ∩ Q| > δ|Q|` whose predecessor is not inside `F`.
    PredecessorHypothesis {
        cube: DyadicCube,
        predecessor: DyadicCube,
        e_in_cube: usize,
        cube_count: usize,
    },
    /// Both hypotheses hold but the conclusion fails (an implementation bug).
    ConclusionFailed {
        e_count: usize,
        f_count: usize,
        delta: f64,
    },
}

impl CzVerdict {
    pub fn is_confirmed(&self) -> bool {
        matches!(self, Self::Confirmed { .. })
    }
}

fn check_sets(spec: &GridSpec, e: &[bool], f: &[bool], delta: f64) -> Result<()> {
    if e.len() != spec.node_count() || f.len() != spec.node_count() {
        return Err(invalid("node sets must have one flag per grid node"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    if let Some(k) = (0..e.len()).find(|&k| e[k] && !f[k]) {
        return Err(invalid(format!("E is not contained in F (node {k})")));
    }
    Ok(())
}

/// `(node count, count in set)` per nonempty cube at `level`, keyed by cube.
fn tally(spec: &GridSpec, set: &[bool], level: u32) -> BTreeMap<DyadicCube, (usize, usize)> {
    let mut map: BTreeMap<DyadicCube, (usize, usize)> = BTreeMap::new();
    for (k, &inside) in set.iter().enumerate() {
        let c = DyadicCube::of_node(spec, &spec.multi_index(k), level);
        let e = map.entry(c).or_insert((0, 0));
        e.0 += 1;
        e.1 += inside as usize;
    }
    map
}

/// Checks both hypotheses of the Calderón-Zygmund lemma for `E ⊆ F` by an
/// exhaustive scan of all dyadic levels down to grid resolution, then the
/// conclusion `|E| ≤ δ|F|`.
pub fn cz_check(spec: &GridSpec, e: &[bool], f: &[bool], delta: f64) -> Result<CzVerdict> {
    check_sets(spec, e, f, delta)?;
    let e_count = e.iter().filter(|&&b| b).count();
    let f_count = f.iter().filter(|&&b| b).count();
    let total = spec.node_count();
    if e_count as f64 > delta * total as f64 {
        return Ok(CzVerdict::MeasureHypothesis {
            e_count,
            total,
            delta,
        });
    }
    let top = finest_level(spec);
    let mut f_prev = tally(spec, f, 0);
    for level in 1..=top {
        let e_here = tally(spec, e, level);
        for (cube, &(count, e_in)) in &e_here {
            if e_in as f64 > delta * count as f64 {
                let pred = cube.predecessor()?;
                let (pc, pf) = f_prev[&pred];
                if pf < pc {
                    return Ok(CzVerdict::PredecessorHypothesis {
                        cube: cube.clone(),
                        predecessor: pred,
                        e_in_cube: e_in,
                        cube_count: count,
                    });
                }
            }
        }
        f_prev = tally(spec, f, level);
    }
    if e_count as f64 <= delta * f_count as f64 {
        Ok(CzVerdict::Confirmed {
            e_count,
            f_count,
            delta,
            levels_scanned: top,
        })
    } else {
        Ok(CzVerdict::ConclusionFailed {
            e_count,
            f_count,
            delta,
        })
    }
}

/// `E` together with every node of every predecessor of a cube (level ≥ 1)
/// where `E` is denser than `δ`. The result satisfies the predecessor
/// hypothesis by construction.
pub fn predecessor_closure(spec: &GridSpec, e: &[bool], delta: f64) -> Result<Vec<bool>> {
    if e.len() != spec.node_count() {
        return Err(invalid("node set must have one flag per grid node"));
    }
    let top = finest_level(spec);
    let mut marked: Vec<DyadicCube> = Vec::new();
    for level in 1..=top {
        for (cube, (count, e_in)) in tally(spec, e, level) {
            if e_in as f64 > delta * count as f64 {
                marked.push(cube.predecessor()?);
            }
        }
    }
    let mut by_level: BTreeMap<u32, std::collections::BTreeSet<DyadicCube>> = BTreeMap::new();
    for c in marked {
        by_level.entry(c.level()).or_default().insert(c);
    }
    Ok((0..spec.node_count())
        .map(|k| {
            e[k] || {
                let idx = spec.multi_index(k);
                by_level
                    .iter()
                    .any(|(&l, set)| set.contains(&DyadicCube::of_node(spec, &idx, l)))
            }
        })
        .collect())
}
