//! Conventional single-illumination evaluations used for comparison:
//! difference thermogram, pristine-region subtraction and pulsed phase
//! thermography (PPT).

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{PsrError, Result};
use crate::field::Field2D;
use crate::grid::GridSpec;
use crate::stack::ThermogramStack;

/// Amplitude and phase images of a PPT evaluation at one frequency bin.
#[derive(Clone, Debug)]
pub struct PptResult {
    /// The exact bin frequency that was evaluated (nearest to the request).
    pub frequency: f64,
    /// DFT bin index.
    pub bin: usize,
    pub amplitude: Field2D,
    /// Phase in radians, wrapped to (-pi, pi].
    pub phase: Field2D,
}

/// The frame of a T_diff stack nearest to `t_eval` (ties toward earlier).
pub fn difference_thermogram(stack: &ThermogramStack, t_eval: f64) -> Result<Field2D> {
    let grid = stack.grid();
    let n_post = stack.n_post();
    let t_max = n_post as f64 * grid.dt;
    if !(t_eval >= grid.dt && t_eval <= t_max * (1.0 + 1e-12)) {
        return Err(PsrError::invalid(format!(
            "t_eval = {t_eval} s outside the stack time range [{}, {t_max}] s",
            grid.dt
        )));
    }
    let k = stack.post_frame_nearest(t_eval);
    Ok(stack.frame_field(stack.t0_frames() + k))
}

/// Difference thermogram minus the spatial mean of the same frame over a
/// defect-free reference rectangle `(x0, y0, w, h)`.
pub fn pristine_subtracted(
    stack: &ThermogramStack,
    region: (usize, usize, usize, usize),
    t_eval: f64,
) -> Result<Field2D> {
    let frame = difference_thermogram(stack, t_eval)?;
    let (x0, y0, w, h) = region;
    let reference = frame.crop(x0, y0, w, h)?;
    frame.map(|v| v - reference.mean())
}

/// Pulsed phase thermography: per-pixel DFT over time, evaluated at the bin
/// nearest to `f`. The result reports the exact bin frequency. `hann` applies
/// a Hann window before the transform (off by default for bit-reproducible
/// raw-sequence bins).
pub fn ppt_windowed(stack: &ThermogramStack, f: f64, hann: bool) -> Result<PptResult> {
    let grid = stack.grid();
    let nt = stack.n_post();
    if nt < 2 {
        return Err(PsrError::invalid("ppt needs at least two post-trigger frames"));
    }
    let nyquist = 0.5 / grid.dt;
    if !(0.0..=nyquist).contains(&f) {
        return Err(PsrError::invalid(format!(
            "requested frequency {f} Hz above the Nyquist limit {nyquist} Hz"
        )));
    }
    let t_obs = nt as f64 * grid.dt;
    let bin = ((f * t_obs).round() as usize).min(nt / 2);
    let frequency = bin as f64 / t_obs;

    let window: Vec<f64> = if hann {
        (0..nt)
            .map(|k| {
                let x = std::f64::consts::PI * k as f64 / nt as f64;
                x.sin() * x.sin() * 2.0
            })
            .collect()
    } else {
        vec![1.0; nt]
    };

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(nt);
    let mut amplitude = Array2::<f64>::zeros((grid.ny, grid.nx));
    let mut phase = Array2::<f64>::zeros((grid.ny, grid.nx));
    let mut series = vec![Complex64::default(); nt];
    let offset = stack.t0_frames();
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            for (k, s) in series.iter_mut().enumerate() {
                *s = Complex64::new(stack.frame(offset + k)[[iy, ix]] * window[k], 0.0);
            }
            fft.process(&mut series);
            let v = series[bin];
            amplitude[[iy, ix]] = v.norm();
            let mut arg = v.arg();
            if arg <= -std::f64::consts::PI {
                arg = std::f64::consts::PI;
            }
            phase[[iy, ix]] = arg;
        }
    }
    let grid1 = GridSpec { nt: 1, ..*grid };
    Ok(PptResult {
        frequency,
        bin,
        amplitude: Field2D::new(grid1, amplitude)?,
        phase: Field2D::new(grid1, phase)?,
    })
}

/// PPT on the raw sequence (no window).
pub fn ppt(stack: &ThermogramStack, f: f64) -> Result<PptResult> {
    ppt_windowed(stack, f, false)
}
