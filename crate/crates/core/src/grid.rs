//! Spatio-temporal sampling grid.
//!
//! Pixel `(ix, iy)` covers the cell `[ix*dx, (ix+1)*dx] x [iy*dy, (iy+1)*dy]`
//! with its centre at `((ix+0.5)*dx, (iy+0.5)*dy)`. Post-trigger frame `k`
//! corresponds to `t = (k+1)*dt`: the first frame is recorded one interval
//! after the illumination trigger.

use crate::error::{PsrError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    /// Pixel count along x.
    pub nx: usize,
    /// Pixel count along y.
    pub ny: usize,
    /// Frame count.
    pub nt: usize,
    /// Pixel pitch along x in metres.
    pub dx: f64,
    /// Pixel pitch along y in metres.
    pub dy: f64,
    /// Frame interval in seconds (1 / f_cam).
    pub dt: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, nt: usize, dx: f64, dy: f64, dt: f64) -> Result<Self> {
        if nx < 1 || ny < 1 || nt < 1 {
            return Err(PsrError::invalid(format!(
                "grid counts must be >= 1 (nx={nx}, ny={ny}, nt={nt})"
            )));
        }
        if !(dx > 0.0 && dx.is_finite() && dy > 0.0 && dy.is_finite() && dt > 0.0 && dt.is_finite())
        {
            return Err(PsrError::invalid(format!(
                "grid pitches must be positive and finite (dx={dx}, dy={dy}, dt={dt})"
            )));
        }
        Ok(GridSpec { nx, ny, nt, dx, dy, dt })
    }

    /// Single-frame grid for standalone fields; `nt`/`dt` carry no meaning.
    pub fn spatial(nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Self> {
        GridSpec::new(nx, ny, 1, dx, dy, 1.0)
    }

    pub fn n_pixels(&self) -> usize {
        self.nx * self.ny
    }

    /// Spatial layout equality; `nt`/`dt` ignored.
    pub fn same_spatial(&self, other: &GridSpec) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.dx == other.dx && self.dy == other.dy
    }

    /// Physical extent (nx*dx, ny*dy) in metres.
    pub fn extent(&self) -> (f64, f64) {
        (self.nx as f64 * self.dx, self.ny as f64 * self.dy)
    }

    /// Centre coordinate of pixel `(ix, iy)` in metres.
    pub fn pixel_centre(&self, ix: usize, iy: usize) -> (f64, f64) {
        ((ix as f64 + 0.5) * self.dx, (iy as f64 + 0.5) * self.dy)
    }

    /// Time of post-trigger frame `k`.
    pub fn frame_time(&self, k: usize) -> f64 {
        (k as f64 + 1.0) * self.dt
    }

    /// Total observation time `nt * dt`.
    pub fn duration(&self) -> f64 {
        self.nt as f64 * self.dt
    }

    /// Index of the frame nearest to `t`, ties resolved toward the earlier frame.
    pub fn frame_nearest(&self, t: f64) -> usize {
        let kf = t / self.dt - 1.0;
        if kf <= 0.0 {
            return 0;
        }
        let k0 = kf.floor() as usize;
        if k0 + 1 >= self.nt {
            return self.nt - 1;
        }
        let d0 = t - self.frame_time(k0);
        let d1 = self.frame_time(k0 + 1) - t;
        if d0 <= d1 {
            k0
        } else {
            k0 + 1
        }
    }

    pub fn with_nt(&self, nt: usize) -> Result<Self> {
        GridSpec::new(self.nx, self.ny, nt, self.dx, self.dy, self.dt)
    }

    pub(crate) fn describe_spatial(&self) -> String {
        format!("{}x{} @ ({}, {}) m", self.nx, self.ny, self.dx, self.dy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_grids() {
        assert!(GridSpec::new(0, 1, 1, 1e-4, 1e-4, 0.01).is_err());
        assert!(GridSpec::new(1, 1, 1, 0.0, 1e-4, 0.01).is_err());
        assert!(GridSpec::new(1, 1, 1, 1e-4, 1e-4, -0.01).is_err());
        assert!(GridSpec::new(1, 1, 0, 1e-4, 1e-4, 0.01).is_err());
    }

    #[test]
    fn frame_nearest_ties_toward_earlier() {
        let g = GridSpec::new(4, 4, 10, 1e-4, 1e-4, 0.5).unwrap();
        // frame times: 0.5, 1.0, 1.5, ...
        assert_eq!(g.frame_nearest(0.5), 0);
        assert_eq!(g.frame_nearest(0.75), 0); // exactly between frames 0 and 1
        assert_eq!(g.frame_nearest(0.76), 1);
        assert_eq!(g.frame_nearest(100.0), 9);
        assert_eq!(g.frame_nearest(0.0), 0);
    }

    #[test]
    fn spatial_comparison_ignores_time() {
        let a = GridSpec::new(4, 3, 10, 1e-4, 2e-4, 0.5).unwrap();
        let b = GridSpec::new(4, 3, 7, 1e-4, 2e-4, 0.125).unwrap();
        assert!(a.same_spatial(&b));
        assert_ne!(a, b);
    }
}
