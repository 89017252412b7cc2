//! Structured cell-centered grids on the unit box `[0,1]^D`.
//!
//! A [`Grid`] stores per-axis cell edges together with the derived cell
//! centers and the tensor-product quadrature weights `w_j = Π_k Δx^(k)_{j_k}`.
//! A [`Field`] is a set of samples at the cell centers of a grid, laid out
//! row-major (the last axis varies fastest).
//!
//! The weighted norm `‖h‖²_{w,2} = Σ_j w_j h_j²` is the midpoint-rule Riemann
//! sum of `∫ h²` over the box, so it converges to the continuous L² norm at
//! second order for smooth functions on every geometry supported here.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{invalid, FcpError, Result};

/// How the cell edges of a grid were produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GridKind {
    /// `T(t) = ½(t + 1)`.
    Uniform,
    /// `T(t) = ½(t³ + 1)`; cells shrink toward the middle of each axis.
    ClusteredCenter,
    /// `T(t) = ½(sin(πt/2) + 1)`; cells shrink toward the domain boundary.
    ClusteredBoundary,
    /// Edges supplied by the caller.
    Explicit,
}

impl GridKind {
    pub const MAPPED: [GridKind; 3] = [
        GridKind::Uniform,
        GridKind::ClusteredCenter,
        GridKind::ClusteredBoundary,
    ];

    /// Maps a parameter `t ∈ [-1, 1]` to a coordinate in `[0, 1]`.
    /// Returns `None` for [`GridKind::Explicit`].
    pub fn map(self, t: f64) -> Option<f64> {
        match self {
            GridKind::Uniform => Some(0.5 * (t + 1.0)),
            GridKind::ClusteredCenter => Some(0.5 * (t * t * t + 1.0)),
            GridKind::ClusteredBoundary => Some(0.5 * ((FRAC_PI_2 * t).sin() + 1.0)),
            GridKind::Explicit => None,
        }
    }

    /// Byte code used by the dataset format.
    pub fn code(self) -> u8 {
        match self {
            GridKind::Uniform => 0,
            GridKind::ClusteredCenter => 1,
            GridKind::ClusteredBoundary => 2,
            GridKind::Explicit => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(GridKind::Uniform),
            1 => Some(GridKind::ClusteredCenter),
            2 => Some(GridKind::ClusteredBoundary),
            3 => Some(GridKind::Explicit),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GridKind::Uniform => "uniform",
            GridKind::ClusteredCenter => "center",
            GridKind::ClusteredBoundary => "boundary",
            GridKind::Explicit => "explicit",
        }
    }
}

impl fmt::Display for GridKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GridKind {
    type Err = FcpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(GridKind::Uniform),
            "center" | "clustered_center" | "clustered-center" => Ok(GridKind::ClusteredCenter),
            "boundary" | "clustered_boundary" | "clustered-boundary" => Ok(GridKind::ClusteredBoundary),
            "explicit" => Ok(GridKind::Explicit),
            other => invalid(format!("unknown grid kind '{other}'")),
        }
    }
}

struct GridInner {
    kind: GridKind,
    shape: Vec<usize>,
    edges: Vec<Vec<f64>>,
    centers: Vec<Vec<f64>>,
    spacings: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

/// An immutable structured grid. Cloning is cheap (shared storage).
#[derive(Clone)]
pub struct Grid(Arc<GridInner>);

impl Grid {
    /// Builds a grid by mapping `N_k + 1` uniformly spaced parameters
    /// `t_i = -1 + 2i/N_k` through the geometry's coordinate map.
    pub fn new(kind: GridKind, cell_counts: &[usize]) -> Result<Self> {
        if kind == GridKind::Explicit {
            return invalid("explicit grids are built with Grid::explicit");
        }
        if cell_counts.is_empty() {
            return invalid("a grid needs at least one axis");
        }
        let mut edges = Vec::with_capacity(cell_counts.len());
        for (axis, &n) in cell_counts.iter().enumerate() {
            if n == 0 {
                return invalid(format!("axis {axis} has zero cells"));
            }
            let mut e: Vec<f64> = (0..=n)
                .map(|i| {
                    let t = -1.0 + 2.0 * i as f64 / n as f64;
                    kind.map(t).expect("mapped kind")
                })
                .collect();
            e[0] = 0.0;
            e[n] = 1.0;
            edges.push(e);
        }
        Self::from_edges(kind, edges)
    }

    /// Shorthand for a uniform grid.
    pub fn uniform(cell_counts: &[usize]) -> Result<Self> {
        Self::new(GridKind::Uniform, cell_counts)
    }

    /// Builds a grid from caller-supplied edges. Each axis must start at 0,
    /// end at 1 and be strictly increasing.
    pub fn explicit(edges: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_edges(GridKind::Explicit, edges)
    }

    fn from_edges(kind: GridKind, edges: Vec<Vec<f64>>) -> Result<Self> {
        if edges.is_empty() {
            return invalid("a grid needs at least one axis");
        }
        for (axis, e) in edges.iter().enumerate() {
            if e.len() < 2 {
                return invalid(format!("axis {axis} needs at least two edges"));
            }
            if e[0] != 0.0 || e[e.len() - 1] != 1.0 {
                return invalid(format!("axis {axis} edges must span exactly [0, 1]"));
            }
            if let Some(i) = e.windows(2).position(|w| !(w[1] > w[0])) {
                return invalid(format!("axis {axis} edges are not strictly increasing at index {i}"));
            }
        }
        let shape: Vec<usize> = edges.iter().map(|e| e.len() - 1).collect();
        let centers: Vec<Vec<f64>> = edges
            .iter()
            .map(|e| e.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect())
            .collect();
        let spacings: Vec<Vec<f64>> = edges
            .iter()
            .map(|e| e.windows(2).map(|w| w[1] - w[0]).collect())
            .collect();

        let total: usize = shape.iter().product();
        let mut weights = vec![1.0; total];
        let mut stride = total;
        for (axis, dx) in spacings.iter().enumerate() {
            let n = shape[axis];
            stride /= n;
            for (flat, w) in weights.iter_mut().enumerate() {
                *w *= dx[(flat / stride) % n];
            }
        }

        Ok(Grid(Arc::new(GridInner {
            kind,
            shape,
            edges,
            centers,
            spacings,
            weights,
        })))
    }

    pub fn kind(&self) -> GridKind {
        self.0.kind
    }

    pub fn dim(&self) -> usize {
        self.0.shape.len()
    }

    /// Cells per axis.
    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    /// Total number of cells `d = Π N_k`.
    pub fn len(&self) -> usize {
        self.0.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.weights.is_empty()
    }

    pub fn edges(&self, axis: usize) -> &[f64] {
        &self.0.edges[axis]
    }

    pub fn centers(&self, axis: usize) -> &[f64] {
        &self.0.centers[axis]
    }

    pub fn spacings(&self, axis: usize) -> &[f64] {
        &self.0.spacings[axis]
    }

    /// Cell volumes in row-major order.
    pub fn weights(&self) -> &[f64] {
        &self.0.weights
    }

    /// Splits a row-major flat index into per-axis indices.
    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        for axis in (0..self.dim()).rev() {
            let n = self.0.shape[axis];
            out[axis] = flat % n;
            flat /= n;
        }
    }

    /// Coordinates of the center of cell `flat`.
    pub fn center(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim()];
        self.unravel(flat, &mut idx);
        idx.iter()
            .enumerate()
            .map(|(axis, &i)| self.0.centers[axis][i])
            .collect()
    }

    /// True if every axis has equal spacing (up to rounding).
    pub fn is_uniform(&self) -> bool {
        self.0.spacings.iter().all(|dx| {
            let h = 1.0 / dx.len() as f64;
            dx.iter().all(|&d| (d - h).abs() <= 1e-12)
        })
    }

    /// Same underlying storage, or the same kind and identical edges.
    pub fn same_as(&self, other: &Grid) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || (self.0.kind == other.0.kind && self.0.edges == other.0.edges)
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("kind", &self.0.kind)
            .field("shape", &self.0.shape)
            .finish()
    }
}

/// Quadrature weights of `grid` in row-major order.
pub fn quadrature_weights(grid: &Grid) -> &[f64] {
    grid.weights()
}

/// Samples of a function at the cell centers of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid(format!(
                "field has {} values but the grid has {} cells",
                values.len(),
                grid.len()
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FcpError::Numeric(format!("non-finite field value at index {i}")));
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Field {
            grid: grid.clone(),
            values: vec![value; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        ensure_same_grid(self, other)?;
        Ok(Field {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a - b)
    }
}

pub(crate) fn ensure_same_grid(a: &Field, b: &Field) -> Result<()> {
    if a.grid.same_as(&b.grid) {
        Ok(())
    } else {
        invalid(format!("fields live on different grids ({:?} vs {:?})", a.grid, b.grid))
    }
}

/// `sqrt(Σ_j w_j v_j²)`.
pub fn weighted_norm(field: &Field) -> f64 {
    field
        .grid
        .weights()
        .iter()
        .zip(&field.values)
        .map(|(w, v)| w * v * v)
        .sum::<f64>()
        .sqrt()
}

/// Weighted norm of `a - b`.
pub fn weighted_distance(a: &Field, b: &Field) -> Result<f64> {
    ensure_same_grid(a, b)?;
    Ok(a.grid
        .weights()
        .iter()
        .zip(a.values.iter().zip(&b.values))
        .map(|(w, (x, y))| w * (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// `‖pred − truth‖_{w,2} / ‖pred‖_{w,2}`, the relative weighted L² error.
pub fn relative_weighted_error(pred: &Field, truth: &Field) -> Result<f64> {
    let num = weighted_distance(pred, truth)?;
    let den = weighted_norm(pred);
    if den == 0.0 {
        return Err(FcpError::DegenerateDenominator {
            context: "prediction".into(),
        });
    }
    Ok(num / den)
}

/// Relative L² error with every sample weighted equally (the plain
/// Euclidean norm of the sample vectors).
pub fn relative_unweighted_error(pred: &Field, truth: &Field) -> Result<f64> {
    ensure_same_grid(pred, truth)?;
    let num: f64 = pred
        .values
        .iter()
        .zip(&truth.values)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    let den: f64 = pred.values.iter().map(|p| p * p).sum();
    if den == 0.0 {
        return Err(FcpError::DegenerateDenominator {
            context: "prediction".into(),
        });
    }
    Ok((num / den).sqrt())
}

/// Evaluates `f` at every cell center of `grid`.
pub fn discretize(f: impl Fn(&[f64]) -> f64, grid: &Grid) -> Result<Field> {
    let mut idx = vec![0; grid.dim()];
    let mut x = vec![0.0; grid.dim()];
    let mut values = Vec::with_capacity(grid.len());
    for flat in 0..grid.len() {
        grid.unravel(flat, &mut idx);
        for (axis, &i) in idx.iter().enumerate() {
            x[axis] = grid.centers(axis)[i];
        }
        let v = f(&x);
        if !v.is_finite() {
            return Err(FcpError::Numeric(format!(
                "function is not finite at cell {flat} (x = {x:?})"
            )));
        }
        values.push(v);
    }
    Ok(Field {
        grid: grid.clone(),
        values,
    })
}

/// Bracketing source indices and interpolation fraction for one coordinate.
fn bracket(centers: &[f64], x: f64) -> (usize, usize, f64) {
    let n = centers.len();
    if x <= centers[0] {
        return (0, 0, 0.0);
    }
    if x >= centers[n - 1] {
        return (n - 1, n - 1, 0.0);
    }
    // centers[lo] <= x < centers[lo + 1]
    let lo = centers.partition_point(|&c| c <= x) - 1;
    let frac = (x - centers[lo]) / (centers[lo + 1] - centers[lo]);
    (lo, lo + 1, frac)
}

/// Multilinear interpolation from the cell centers of `field`'s grid to the
/// cell centers of `target`. Targets outside the hull of the source centers
/// take the value of the nearest source cell along that axis.
pub fn resample(field: &Field, target: &Grid) -> Result<Field> {
    let src = &field.grid;
    let dim = src.dim();
    if target.dim() != dim {
        return invalid(format!(
            "cannot resample a {dim}-D field onto a {}-D grid",
            target.dim()
        ));
    }
    if src.same_as(target) {
        return Ok(field.clone());
    }
    let brackets: Vec<Vec<(usize, usize, f64)>> = (0..dim)
        .map(|axis| {
            target
                .centers(axis)
                .iter()
                .map(|&x| bracket(src.centers(axis), x))
                .collect()
        })
        .collect();
    let mut strides = vec![1usize; dim];
    for axis in (0..dim.saturating_sub(1)).rev() {
        strides[axis] = strides[axis + 1] * src.shape()[axis + 1];
    }

    let mut idx = vec![0; dim];
    let mut values = Vec::with_capacity(target.len());
    for flat in 0..target.len() {
        target.unravel(flat, &mut idx);
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut weight = 1.0;
            let mut offset = 0;
            for axis in 0..dim {
                let (lo, hi, t) = brackets[axis][idx[axis]];
                let upper = (corner >> axis) & 1 == 1;
                let (i, w) = if upper { (hi, t) } else { (lo, 1.0 - t) };
                weight *= w;
                offset += i * strides[axis];
            }
            if weight != 0.0 {
                acc += weight * field.values[offset];
            }
        }
        values.push(acc);
    }
    Field::new(target.clone(), values)
}
