//! Time-ordered stack of thermograms.

use ndarray::Array2;

use crate::error::{PsrError, Result};
use crate::field::{check_finite, Field2D};
use crate::grid::GridSpec;

/// A sequence of `nt` temperature frames on a common grid.
///
/// The first `t0_frames` frames are the pre-trigger segment recorded before
/// the illumination started; the remaining frames are post-trigger, frame `k`
/// (counted from the trigger) sampled at `t = (k+1)*dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThermogramStack {
    grid: GridSpec,
    frames: Vec<Array2<f64>>,
    t0_frames: usize,
    pulse_length: f64,
}

impl ThermogramStack {
    pub fn new(
        grid: GridSpec,
        frames: Vec<Array2<f64>>,
        t0_frames: usize,
        pulse_length: f64,
    ) -> Result<Self> {
        if frames.len() != grid.nt {
            return Err(PsrError::invalid(format!(
                "stack holds {} frames but grid declares nt = {}",
                frames.len(),
                grid.nt
            )));
        }
        if t0_frames >= grid.nt {
            return Err(PsrError::invalid(format!(
                "pre-trigger segment ({t0_frames}) leaves no post-trigger frames (nt = {})",
                grid.nt
            )));
        }
        if !(pulse_length >= 0.0 && pulse_length.is_finite()) {
            return Err(PsrError::invalid(format!("pulse length must be >= 0, got {pulse_length}")));
        }
        for (k, frame) in frames.iter().enumerate() {
            if frame.dim() != (grid.ny, grid.nx) {
                return Err(PsrError::invalid(format!(
                    "frame {k} has shape {:?}, expected ({}, {})",
                    frame.dim(),
                    grid.ny,
                    grid.nx
                )));
            }
            check_finite(frame, k)?;
        }
        Ok(ThermogramStack { grid, frames, t0_frames, pulse_length })
    }

    /// Stack with every frame equal to `value`.
    pub fn constant(grid: GridSpec, value: f64, t0_frames: usize, pulse_length: f64) -> Result<Self> {
        let frames = (0..grid.nt).map(|_| Array2::from_elem((grid.ny, grid.nx), value)).collect();
        ThermogramStack::new(grid, frames, t0_frames, pulse_length)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn t0_frames(&self) -> usize {
        self.t0_frames
    }

    pub fn pulse_length(&self) -> f64 {
        self.pulse_length
    }

    pub fn frames(&self) -> &[Array2<f64>] {
        &self.frames
    }

    pub fn frame(&self, k: usize) -> &Array2<f64> {
        &self.frames[k]
    }

    pub fn frame_field(&self, k: usize) -> Field2D {
        let grid = GridSpec { nt: 1, ..self.grid };
        Field2D::new(grid, self.frames[k].clone()).expect("stack frames are finite")
    }

    /// Count of post-trigger frames.
    pub fn n_post(&self) -> usize {
        self.grid.nt - self.t0_frames
    }

    /// Post-trigger frame index nearest to time `t`; ties toward earlier.
    pub fn post_frame_nearest(&self, t: f64) -> usize {
        let post = GridSpec { nt: self.n_post(), ..self.grid };
        post.frame_nearest(t)
    }

    /// Mean of the last `n` pre-trigger frames, the per-pixel initial
    /// temperature estimate.
    pub fn estimate_t0(&self, n: usize) -> Result<Field2D> {
        if n == 0 {
            return Err(PsrError::invalid("t0 estimation needs at least one pre-trigger frame"));
        }
        if n > self.t0_frames {
            return Err(PsrError::invalid(format!(
                "requested {n} pre-trigger frames but only {} are present",
                self.t0_frames
            )));
        }
        let mut acc = Array2::<f64>::zeros((self.grid.ny, self.grid.nx));
        for k in self.t0_frames - n..self.t0_frames {
            acc += &self.frames[k];
        }
        acc /= n as f64;
        let grid = GridSpec { nt: 1, ..self.grid };
        Field2D::new(grid, acc)
    }

    /// Subtracts the initial temperature estimated from the last `n`
    /// pre-trigger frames and drops the whole pre-trigger segment.
    pub fn subtract_t0(&self, n: usize) -> Result<ThermogramStack> {
        let t0 = self.estimate_t0(n)?;
        let n_post = self.n_post();
        if n_post == 0 {
            return Err(PsrError::invalid("stack has no post-trigger frames"));
        }
        let frames = self.frames[self.t0_frames..]
            .iter()
            .map(|f| f - t0.values())
            .collect();
        let grid = self.grid.with_nt(n_post)?;
        ThermogramStack::new(grid, frames, 0, self.pulse_length)
    }

    pub fn crop_roi(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<ThermogramStack> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        if w == 0 || h == 0 || x0 + w > nx || y0 + h > ny {
            return Err(PsrError::OutOfBounds { x0, y0, w, h, nx, ny });
        }
        let frames = self
            .frames
            .iter()
            .map(|f| f.slice(ndarray::s![y0..y0 + h, x0..x0 + w]).to_owned())
            .collect();
        let grid = GridSpec { nx: w, ny: h, ..self.grid };
        ThermogramStack::new(grid, frames, self.t0_frames, self.pulse_length)
    }

    pub fn require_same_grid(&self, other: &ThermogramStack, context: &'static str) -> Result<()> {
        if self.grid != other.grid {
            return Err(PsrError::GridMismatch {
                context,
                expected: format!("{:?}", self.grid),
                actual: format!("{:?}", other.grid),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn grid(nx: usize, ny: usize, nt: usize) -> GridSpec {
        GridSpec::new(nx, ny, nt, 1e-4, 1e-4, 0.00625).unwrap()
    }

    #[test]
    fn constant_stack_yields_zero_t_diff() {
        let s = ThermogramStack::constant(grid(3, 2, 8), 300.0, 5, 0.5).unwrap();
        let d = s.subtract_t0(5).unwrap();
        assert_eq!(d.grid().nt, 3);
        assert_eq!(d.t0_frames(), 0);
        assert!(d.frames().iter().all(|f| f.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn t0_is_the_arithmetic_mean() {
        let g = grid(1, 1, 3);
        let frames = vec![array![[1.0]], array![[3.0]], array![[4.0]]];
        let s = ThermogramStack::new(g, frames, 2, 0.5).unwrap();
        let d = s.subtract_t0(2).unwrap();
        assert_eq!(d.frame(0)[[0, 0]], 2.0);
    }

    #[test]
    fn subtract_more_than_available_fails() {
        let s = ThermogramStack::constant(grid(2, 2, 6), 1.0, 2, 0.5).unwrap();
        assert!(s.subtract_t0(3).is_err());
        assert!(s.subtract_t0(0).is_err());
        assert!(s.subtract_t0(2).is_ok());
    }

    #[test]
    fn subtract_is_idempotent_on_zero_mean_pre_trigger() {
        let g = grid(2, 1, 4);
        let frames = vec![
            array![[1.0, -2.0]],
            array![[-1.0, 2.0]],
            array![[5.0, 6.0]],
            array![[7.0, 8.0]],
        ];
        let s = ThermogramStack::new(g, frames.clone(), 2, 0.5).unwrap();
        let d = s.subtract_t0(2).unwrap();
        assert_eq!(d.frame(0), &frames[2]);
        assert_eq!(d.frame(1), &frames[3]);
    }

    #[test]
    fn crop_commutes_with_subtract_t0() {
        let g = grid(4, 3, 5);
        let frames: Vec<_> = (0..5)
            .map(|k| {
                Array2::from_shape_fn((3, 4), |(iy, ix)| (k * 100 + iy * 10 + ix) as f64 * 0.5)
            })
            .collect();
        let s = ThermogramStack::new(g, frames, 2, 0.5).unwrap();
        let a = s.subtract_t0(2).unwrap().crop_roi(1, 1, 2, 2).unwrap();
        let b = s.crop_roi(1, 1, 2, 2).unwrap().subtract_t0(2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pre_trigger_must_leave_post_frames() {
        assert!(ThermogramStack::constant(grid(2, 2, 4), 0.0, 4, 0.5).is_err());
    }
}
