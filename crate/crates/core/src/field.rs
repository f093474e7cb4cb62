//! Single 2D scalar field on a grid (temperature, source strength or mask weight).

use ndarray::Array2;

use crate::error::{PsrError, Result};
use crate::grid::GridSpec;

/// 2D scalar field; values are finite after any public operation.
/// Stored row-major with shape `(ny, nx)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field2D {
    grid: GridSpec,
    values: Array2<f64>,
}

impl Field2D {
    pub fn new(grid: GridSpec, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (grid.ny, grid.nx) {
            return Err(PsrError::invalid(format!(
                "field shape {:?} does not match grid {}x{}",
                values.dim(),
                grid.nx,
                grid.ny
            )));
        }
        check_finite(&values, 0)?;
        Ok(Field2D { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Field2D { grid, values: Array2::zeros((grid.ny, grid.nx)) }
    }

    pub fn constant(grid: GridSpec, v: f64) -> Result<Self> {
        if !v.is_finite() {
            return Err(PsrError::invalid(format!("non-finite fill value {v}")));
        }
        Ok(Field2D { grid, values: Array2::from_elem((grid.ny, grid.nx), v) })
    }

    /// Builds a field from a function of pixel indices `(ix, iy)`.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let values = Array2::from_shape_fn((grid.ny, grid.nx), |(iy, ix)| f(ix, iy));
        Field2D::new(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[[iy, ix]]
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Field2D> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        if w == 0 || h == 0 || x0 + w > nx || y0 + h > ny {
            return Err(PsrError::OutOfBounds { x0, y0, w, h, nx, ny });
        }
        let grid = GridSpec { nx: w, ny: h, ..self.grid };
        let values = self.values.slice(ndarray::s![y0..y0 + h, x0..x0 + w]).to_owned();
        Ok(Field2D { grid, values })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Field2D> {
        Field2D::new(self.grid, self.values.mapv(&f))
    }

    pub fn add(&self, other: &Field2D) -> Result<Field2D> {
        self.zip(other, |a, b| a + b, "field add")
    }

    pub fn sub(&self, other: &Field2D) -> Result<Field2D> {
        self.zip(other, |a, b| a - b, "field sub")
    }

    pub fn hadamard(&self, other: &Field2D) -> Result<Field2D> {
        self.zip(other, |a, b| a * b, "field hadamard")
    }

    pub fn scale(&self, c: f64) -> Result<Field2D> {
        self.map(|v| c * v)
    }

    fn zip(
        &self,
        other: &Field2D,
        f: impl Fn(f64, f64) -> f64,
        context: &'static str,
    ) -> Result<Field2D> {
        self.require_same_spatial(other, context)?;
        let mut values = self.values.clone();
        values.zip_mut_with(&other.values, |a, &b| *a = f(*a, b));
        Field2D::new(self.grid, values)
    }

    pub fn require_same_spatial(&self, other: &Field2D, context: &'static str) -> Result<()> {
        if !self.grid.same_spatial(&other.grid) {
            return Err(PsrError::GridMismatch {
                context,
                expected: self.grid.describe_spatial(),
                actual: other.grid.describe_spatial(),
            });
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.values.sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.grid.n_pixels() as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn norm_l2(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Pixel index of the maximum value (first occurrence in row-major order).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut bv = f64::NEG_INFINITY;
        for (iy, row) in self.values.outer_iter().enumerate() {
            for (ix, &v) in row.iter().enumerate() {
                if v > bv {
                    bv = v;
                    best = (ix, iy);
                }
            }
        }
        best
    }
}

pub(crate) fn check_finite(values: &Array2<f64>, frame: usize) -> Result<()> {
    for (iy, row) in values.outer_iter().enumerate() {
        for (ix, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(PsrError::NonFinite { frame, x: ix, y: iy });
            }
        }
    }
    Ok(())
}
