//! Uniform cell-centered Cartesian grids in one or two dimensions, scalar
//! fields on them and the homogeneous-Neumann discrete operators.
//!
//! The Neumann condition is realized with mirror ghost cells: the ghost value
//! across a boundary face equals the adjacent interior value, so boundary faces
//! carry zero flux and every stencil row sums to zero.

mod snapshot;
mod solve;

pub use snapshot::{read_snapshot, write_snapshot, SnapshotError};
pub use solve::{solve_helmholtz, solve_shifted, HelmholtzInfo, SolverPath};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("axis {axis}: need at least 3 cells, got {cells}")]
    TooFewCells { axis: usize, cells: usize },
    #[error("axis {axis}: extent must be positive and finite, got {extent}")]
    Extent { axis: usize, extent: f64 },
    #[error("field has {got} values, grid has {expected} cells")]
    Length { expected: usize, got: usize },
    #[error("non-finite field value {value} at cell {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("Helmholtz coefficient must be positive, found {value} at cell {index}")]
    NonPositiveCoefficient { index: usize, value: f64 },
    #[error("linear solver did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular linear system (zero pivot at row {0})")]
    Singular(usize),
}

/// Uniform cell-centered mesh on an interval or a rectangle `[0, L1] x [0, L2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    cells: [usize; 2],
    extent: [f64; 2],
}

impl Grid {
    pub fn new(cells: &[usize], extent: &[f64]) -> Result<Self, GridError> {
        let dim = cells.len();
        if !(1..=2).contains(&dim) {
            return Err(GridError::Dimension(dim));
        }
        if extent.len() != dim {
            return Err(GridError::Dimension(extent.len()));
        }
        let mut c = [1, 1];
        let mut e = [1.0, 1.0];
        for axis in 0..dim {
            if cells[axis] < 3 {
                return Err(GridError::TooFewCells { axis, cells: cells[axis] });
            }
            if !(extent[axis] > 0.0 && extent[axis].is_finite()) {
                return Err(GridError::Extent { axis, extent: extent[axis] });
            }
            c[axis] = cells[axis];
            e[axis] = extent[axis];
        }
        Ok(Self { dim, cells: c, extent: e })
    }

    pub fn new_1d(cells: usize, extent: f64) -> Result<Self, GridError> {
        Self::new(&[cells], &[extent])
    }

    pub fn new_2d(cells: [usize; 2], extent: [f64; 2]) -> Result<Self, GridError> {
        Self::new(&cells, &extent)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent[..self.dim]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extent[axis] / self.cells[axis] as f64
    }

    /// Total number of cells.
    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    /// Measure of the domain.
    pub fn measure(&self) -> f64 {
        self.extent().iter().product()
    }

    /// Center of the cell with flat (row-major) index `idx`.
    pub fn cell_center(&self, idx: usize) -> [f64; 2] {
        let (i, j) = (idx / self.cells[1], idx % self.cells[1]);
        let x = (i as f64 + 0.5) * self.spacing(0);
        let y = if self.dim == 2 {
            (j as f64 + 0.5) * self.spacing(1)
        } else {
            0.0
        };
        [x, y]
    }

    /// Stride between neighbours along `axis` in the flat layout.
    fn stride(&self, axis: usize) -> usize {
        if axis == 0 {
            self.cells[1]
        } else {
            1
        }
    }

    /// Calls `visit(p, q, 1/h^2)` for every interior face between cells p < q.
    pub(crate) fn for_each_face(&self, mut visit: impl FnMut(usize, usize, f64)) {
        let [n1, n2] = self.cells;
        for axis in 0..self.dim {
            let w = 1.0 / (self.spacing(axis) * self.spacing(axis));
            let s = self.stride(axis);
            for i in 0..n1 {
                for j in 0..n2 {
                    let pos = if axis == 0 { i } else { j };
                    let n = self.cells[axis];
                    if pos + 1 < n {
                        let p = i * n2 + j;
                        visit(p, p + s, w);
                    }
                }
            }
        }
    }

    /// Diagonal of `-Δ_h` per cell: sum over existing neighbours of 1/h^2.
    pub(crate) fn neg_laplacian_diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.len()];
        self.for_each_face(|p, q, w| {
            d[p] += w;
            d[q] += w;
        });
        d
    }
}

/// One real value per grid cell, stored row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Length { expected: grid.len(), got: values.len() });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GridError::NonFinite { index, value });
        }
        Ok(Self { grid, values })
    }

    /// Constructor for values produced by internal operators, which are
    /// finite by construction whenever their inputs are.
    pub(crate) fn from_vec(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self::from_vec(grid, vec![c; grid.len()])
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `g` at the cell centers.
    pub fn from_fn(grid: Grid, g: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| g(grid.cell_center(k))).collect();
        Self::from_vec(grid, values)
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

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, g: impl Fn(f64) -> f64) -> Field {
        Self::from_vec(self.grid, self.values.iter().map(|&v| g(v)).collect())
    }

    pub fn zip_map(&self, other: &Field, g: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.grid.cells(), other.grid.cells());
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| g(a, b)).collect();
        Self::from_vec(self.grid, values)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `Σ v_i h^dim`.
    pub fn integrate(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Discrete L² inner product.
    pub fn dot(&self, other: &Field) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>()
            * self.grid.cell_volume()
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `‖∇_h v‖` from face-centered differences; boundary faces carry no flux.
    pub fn h1_seminorm(&self) -> f64 {
        let v = &self.values;
        let mut acc = 0.0;
        self.grid.for_each_face(|p, q, w| {
            let d = v[q] - v[p];
            acc += d * d * w;
        });
        (acc * self.grid.cell_volume()).sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.integrate() / self.grid.measure()
    }

    /// Mean of `(v - mean(v))²` over the domain.
    pub fn spatial_variance(&self) -> f64 {
        let m = self.mean();
        self.map(|v| (v - m) * (v - m)).mean()
    }

    /// Neumann Laplacian: 3-point stencil in 1D, 5-point in 2D.
    pub fn laplacian(&self) -> Field {
        let v = &self.values;
        let mut out = vec![0.0; v.len()];
        self.grid.for_each_face(|p, q, w| {
            let flux = (v[q] - v[p]) * w;
            out[p] += flux;
            out[q] -= flux;
        });
        Self::from_vec(self.grid, out)
    }

    /// `a ⊙ v - Δ_h v`.
    pub fn apply_helmholtz(&self, a: &Field) -> Field {
        let lap = self.laplacian();
        let values = self
            .values
            .iter()
            .zip(&a.values)
            .zip(&lap.values)
            .map(|((v, a), l)| a * v - l)
            .collect();
        Self::from_vec(self.grid, values)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Field {
        self.map(|v| s * v)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
