//! Uniform grids over cubes `Q_r(x₀)`, scalar fields, central finite
//! differences and coordinate slices.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::matrix::SymMatrix;

/// Largest supported spatial dimension.
pub const MAX_GRID_DIM: usize = 4;

/// Smallest supported number of nodes per axis.
pub const MIN_POINTS_PER_AXIS: usize = 9;

/// Tolerance (in units of `h`) for deciding that a coordinate lies on a grid line.
const ON_GRID_TOL: f64 = 1e-9;

/// Tensor grid with `points_per_axis` nodes per axis over the closed cube
/// `center + [-half_width, half_width]^dim`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    dim: usize,
    center: Vec<f64>,
    half_width: f64,
    points_per_axis: usize,
}

impl GridSpec {
    pub fn new(
        dim: usize,
        center: Vec<f64>,
        half_width: f64,
        points_per_axis: usize,
    ) -> Result<Self> {
        if dim == 0 || dim > MAX_GRID_DIM {
            return Err(invalid(format!(
                "grid dimension must be in 1..={MAX_GRID_DIM}, got {dim}"
            )));
        }
        if center.len() != dim {
            return Err(invalid(format!(
                "grid center has {} coordinates, expected {dim}",
                center.len()
            )));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(invalid("grid center must be finite"));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(invalid(format!(
                "half width must be positive, got {half_width}"
            )));
        }
        if points_per_axis < MIN_POINTS_PER_AXIS || points_per_axis % 2 == 0 {
            return Err(invalid(format!(
                "points per axis must be odd and >= {MIN_POINTS_PER_AXIS}, got {points_per_axis}"
            )));
        }
        if points_per_axis.checked_pow(dim as u32).is_none() {
            return Err(invalid("node count overflows"));
        }
        Ok(Self {
            dim,
            center,
            half_width,
            points_per_axis,
        })
    }

    /// Grid over `Q_r(0)`.
    pub fn centered(dim: usize, half_width: f64, points_per_axis: usize) -> Result<Self> {
        Self::new(dim, vec![0.0; dim], half_width, points_per_axis)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    /// Node spacing `h = 2 r / (N - 1)`.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.points_per_axis - 1) as f64
    }

    pub fn node_count(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    /// Row-major linear index (last axis fastest).
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dim);
        idx.iter().fold(0, |acc, &i| acc * self.points_per_axis + i)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let n = self.points_per_axis;
        let mut idx = vec![0; self.dim];
        for d in (0..self.dim).rev() {
            idx[d] = flat % n;
            flat /= n;
        }
        idx
    }

    /// Stride of axis `d` in the linear index.
    pub fn stride(&self, d: usize) -> usize {
        self.points_per_axis.pow((self.dim - 1 - d) as u32)
    }

    pub fn axis_coord(&self, d: usize, i: usize) -> f64 {
        self.center[d] - self.half_width + i as f64 * self.spacing()
    }

    pub fn coord(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(d, &i)| self.axis_coord(d, i))
            .collect()
    }

    pub fn coord_flat(&self, flat: usize) -> Vec<f64> {
        self.coord(&self.multi_index(flat))
    }

    /// Distance (in nodes) from `idx` to the nearest boundary face.
    pub fn boundary_distance(&self, idx: &[usize]) -> usize {
        idx.iter()
            .map(|&i| i.min(self.points_per_axis - 1 - i))
            .min()
            .unwrap_or(0)
    }

    pub fn is_boundary(&self, idx: &[usize]) -> bool {
        self.boundary_distance(idx) == 0
    }

    /// Whether `x` lies in the closed cube.
    pub fn contains(&self, x: &[f64]) -> bool {
        let tol = ON_GRID_TOL * self.spacing();
        x.len() == self.dim
            && x.iter()
                .zip(&self.center)
                .all(|(xi, ci)| (xi - ci).abs() <= self.half_width + tol)
    }

    /// Nearest node to `x`, or `None` if `x` is outside the closed cube.
    pub fn nearest_index(&self, x: &[f64]) -> Option<Vec<usize>> {
        if !self.contains(x) {
            return None;
        }
        let h = self.spacing();
        let last = (self.points_per_axis - 1) as f64;
        Some(
            x.iter()
                .enumerate()
                .map(|(d, &xi)| {
                    let t = (xi - self.center[d] + self.half_width) / h;
                    t.round().clamp(0.0, last) as usize
                })
                .collect(),
        )
    }

    /// Node index of `x` along axis `d` when `x` lies on a grid line.
    pub fn axis_node(&self, d: usize, x: f64) -> Option<usize> {
        let t = (x - self.center[d] + self.half_width) / self.spacing();
        let r = t.round();
        if (t - r).abs() <= ON_GRID_TOL && r >= 0.0 && r <= (self.points_per_axis - 1) as f64 {
            Some(r as usize)
        } else {
            None
        }
    }

    /// Node volume `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }
}

/// Values on every node of a [`GridSpec`], stored in linear-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    spec: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.node_count() {
            return Err(invalid(format!(
                "field has {} values but the grid has {} nodes",
                values.len(),
                spec.node_count()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("field value {k} is not finite")));
        }
        Ok(Self { spec, values })
    }

    /// Samples `f` at every node.
    pub fn from_fn(spec: &GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..spec.node_count())
            .map(|k| f(&spec.coord_flat(k)))
            .collect();
        Self::new(spec.clone(), values)
    }

    pub fn constant(spec: &GridSpec, c: f64) -> Result<Self> {
        Self::new(spec.clone(), vec![c; spec.node_count()])
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[self.spec.flat_index(idx)]
    }

    pub fn get_flat(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.spec.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Pointwise `a·self + b·other` on the same grid.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.spec != other.spec {
            return Err(invalid("fields live on different grids"));
        }
        Self::new(
            self.spec.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        )
    }
}

fn require_interior(spec: &GridSpec, idx: &[usize], required: usize) -> Result<()> {
    if idx.len() != spec.dim() || idx.iter().any(|&i| i >= spec.points_per_axis()) {
        return Err(invalid(format!("index {idx:?} is not a node of the grid")));
    }
    if spec.boundary_distance(idx) < required {
        return Err(Error::BoundaryProximity {
            index: idx.to_vec(),
            required,
        });
    }
    Ok(())
}

/// Central-difference gradient `(u_{+e_i} - u_{-e_i}) / 2h`.
pub fn fd_gradient(u: &ScalarField, idx: &[usize]) -> Result<Vec<f64>> {
    let spec = u.spec();
    require_interior(spec, idx, 1)?;
    let k = spec.flat_index(idx);
    let h = spec.spacing();
    Ok((0..spec.dim())
        .map(|d| {
            let s = spec.stride(d);
            (u.values[k + s] - u.values[k - s]) / (2.0 * h)
        })
        .collect())
}

/// Central-difference Hessian: three-point second differences on the
/// diagonal, the four-point cross stencil off it. Only nearest neighbours and
/// diagonal neighbours are read, so one node of margin suffices.
pub fn fd_hessian(u: &ScalarField, idx: &[usize]) -> Result<SymMatrix> {
    let spec = u.spec();
    require_interior(spec, idx, 1)?;
    let k = spec.flat_index(idx);
    let h2 = spec.spacing() * spec.spacing();
    let v = &u.values;
    Ok(SymMatrix::from_upper_fn(spec.dim(), |i, j| {
        let si = spec.stride(i);
        if i == j {
            (v[k + si] - 2.0 * v[k] + v[k - si]) / h2
        } else {
            let sj = spec.stride(j);
            (v[k + si + sj] - v[k + si - sj] - v[k - si + sj] + v[k - si - sj]) / (4.0 * h2)
        }
    }))
}

/// Coordinate slice `{z_j = a_j, j ∈ J}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceSpec {
    frozen_axes: Vec<usize>,
    frozen_values: Vec<f64>,
}

impl SliceSpec {
    /// `frozen_axes` must be strictly increasing.
    pub fn new(frozen_axes: Vec<usize>, frozen_values: Vec<f64>) -> Result<Self> {
        if frozen_axes.len() != frozen_values.len() {
            return Err(Error::InvalidSlice(format!(
                "{} frozen axes but {} frozen values",
                frozen_axes.len(),
                frozen_values.len()
            )));
        }
        if frozen_axes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSlice(
                "frozen axes must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            frozen_axes,
            frozen_values,
        })
    }

    pub fn frozen_axes(&self) -> &[usize] {
        &self.frozen_axes
    }

    pub fn frozen_values(&self) -> &[f64] {
        &self.frozen_values
    }

    /// Axes left free by the slice, ascending.
    pub fn free_axes(&self, dim: usize) -> Vec<usize> {
        (0..dim).filter(|d| !self.frozen_axes.contains(d)).collect()
    }

    fn validate(&self, spec: &GridSpec) -> Result<Vec<usize>> {
        let n = spec.dim();
        if self.frozen_axes.is_empty() || self.frozen_axes.len() >= n {
            return Err(Error::InvalidSlice(format!(
                "frozen axes must be a nonempty proper subset of 0..{n}, got {:?}",
                self.frozen_axes
            )));
        }
        if let Some(&d) = self.frozen_axes.iter().find(|&&d| d >= n) {
            return Err(Error::InvalidSlice(format!(
                "axis {d} out of range for dimension {n}"
            )));
        }
        self.frozen_axes
            .iter()
            .zip(&self.frozen_values)
            .map(|(&d, &a)| {
                spec.axis_node(d, a).ok_or_else(|| {
                    Error::InvalidSlice(format!("value {a} on axis {d} is not on a grid line"))
                })
            })
            .collect()
    }
}

/// Every slice freezing `axes` at grid nodes, in lexicographic order of the
/// frozen node indices.
pub fn enumerate_slices(spec: &GridSpec, axes: &[usize]) -> Result<Vec<SliceSpec>> {
    let m = spec.points_per_axis();
    let count = m.pow(axes.len() as u32);
    (0..count)
        .map(|mut flat| {
            let mut vals = vec![0.0; axes.len()];
            for j in (0..axes.len()).rev() {
                vals[j] = spec.axis_coord(axes[j], flat % m);
                flat /= m;
            }
            SliceSpec::new(axes.to_vec(), vals)
        })
        .collect()
}

/// The `(n - |J|)`-dimensional field `z ↦ u(z, a_J)` on the free axes.
pub fn restrict_slice(u: &ScalarField, s: &SliceSpec) -> Result<ScalarField> {
    let spec = u.spec();
    let frozen_nodes = s.validate(spec)?;
    let free = s.free_axes(spec.dim());
    let sub = GridSpec::new(
        free.len(),
        free.iter().map(|&d| spec.center()[d]).collect(),
        spec.half_width(),
        spec.points_per_axis(),
    )?;
    let mut full = vec![0; spec.dim()];
    for (&d, &i) in s.frozen_axes.iter().zip(&frozen_nodes) {
        full[d] = i;
    }
    let values = (0..sub.node_count())
        .map(|k| {
            let local = sub.multi_index(k);
            for (&d, &i) in free.iter().zip(&local) {
                full[d] = i;
            }
            u.get(&full)
        })
        .collect();
    ScalarField::new(sub, values)
}
