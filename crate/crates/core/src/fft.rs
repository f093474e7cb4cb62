//! Zero-padded linear convolution on 2D grids via FFT, plus a direct
//! summation path used as the oracle in tests.
//!
//! Every convolution here is linear (zero-padded), never circular over the
//! region of interest: the working grid is padded to at least
//! `(2*nx - 1, 2*ny - 1)` before any spectral product, and results are cropped
//! back to the ROI window.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

/// Smallest 5-smooth number (2^a * 3^b * 5^c) that is >= n.
pub fn next_fast_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Planned 2D FFT of fixed size `(h, w)`, row-major buffers of length `h*w`.
pub struct Fft2 {
    w: usize,
    h: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(w: usize, h: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            w,
            h,
            row_fwd: planner.plan_fft(w, FftDirection::Forward),
            row_inv: planner.plan_fft(w, FftDirection::Inverse),
            col_fwd: planner.plan_fft(h, FftDirection::Forward),
            col_inv: planner.plan_fft(h, FftDirection::Inverse),
        }
    }

    /// Number of points in one transform buffer (always positive).
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.w * self.h
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, true);
    }

    /// Unnormalized inverse: `inverse(forward(x)) = len() * x`.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.transform(buf, false);
    }

    fn transform(&self, buf: &mut [Complex64], forward: bool) {
        assert_eq!(buf.len(), self.len());
        let (row, col) = if forward {
            (&self.row_fwd, &self.col_fwd)
        } else {
            (&self.row_inv, &self.col_inv)
        };
        row.process(buf);
        let mut t = transpose(buf, self.w, self.h);
        col.process(&mut t);
        transpose_into(&t, self.h, self.w, buf);
    }
}

fn transpose(src: &[Complex64], w: usize, h: usize) -> Vec<Complex64> {
    let mut dst = vec![Complex64::default(); src.len()];
    for i in 0..h {
        for j in 0..w {
            dst[j * h + i] = src[i * w + j];
        }
    }
    dst
}

fn transpose_into(src: &[Complex64], w: usize, h: usize, dst: &mut [Complex64]) {
    for i in 0..h {
        for j in 0..w {
            dst[j * h + i] = src[i * w + j];
        }
    }
}

/// Padded working grid tied to an `nx` x `ny` region of interest.
pub struct SpectralGrid {
    pub nx: usize,
    pub ny: usize,
    pub pw: usize,
    pub ph: usize,
    fft: Fft2,
}

impl SpectralGrid {
    pub fn for_roi(nx: usize, ny: usize) -> Self {
        let pw = next_fast_size(2 * nx - 1);
        let ph = next_fast_size(2 * ny - 1);
        SpectralGrid { nx, ny, pw, ph, fft: Fft2::new(pw, ph) }
    }

    /// Padded pixel count.
    pub fn n(&self) -> usize {
        self.pw * self.ph
    }

    /// Embeds an ROI-sized (or padded-sized) real array at the origin of the
    /// padded grid.
    pub fn embed(&self, v: &Array2<f64>) -> Vec<Complex64> {
        let (h, w) = v.dim();
        assert!(w <= self.pw && h <= self.ph, "array exceeds padded grid");
        let mut buf = vec![Complex64::default(); self.n()];
        for (iy, row) in v.outer_iter().enumerate() {
            for (ix, &x) in row.iter().enumerate() {
                buf[iy * self.pw + ix].re = x;
            }
        }
        buf
    }

    /// Real part of the ROI window of a padded buffer.
    pub fn extract(&self, buf: &[Complex64]) -> Array2<f64> {
        Array2::from_shape_fn((self.ny, self.nx), |(iy, ix)| buf[iy * self.pw + ix].re)
    }

    /// Real part of the full padded buffer as an array.
    pub fn extract_padded(&self, buf: &[Complex64]) -> Array2<f64> {
        Array2::from_shape_fn((self.ph, self.pw), |(iy, ix)| buf[iy * self.pw + ix].re)
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.fft.forward(buf);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.fft.inverse(buf);
    }

    pub fn forward_of(&self, v: &Array2<f64>) -> Vec<Complex64> {
        let mut buf = self.embed(v);
        self.forward(&mut buf);
        buf
    }

    /// Spectrum of a convolution kernel whose origin pixel is `(ox, oy)`:
    /// the kernel is rolled so that its origin lands on padded index (0, 0).
    pub fn kernel_spectrum(&self, kernel: &Array2<f64>, origin: (usize, usize)) -> Vec<Complex64> {
        let (ky, kx) = kernel.dim();
        assert!(kx <= self.pw && ky <= self.ph, "kernel exceeds padded grid");
        let (ox, oy) = origin;
        let mut buf = vec![Complex64::default(); self.n()];
        for iy in 0..ky {
            let py = (iy + self.ph - oy) % self.ph;
            for ix in 0..kx {
                let px = (ix + self.pw - ox) % self.pw;
                buf[py * self.pw + px].re = kernel[[iy, ix]];
            }
        }
        self.forward(&mut buf);
        buf
    }

    /// Linear convolution of `input` (ROI-sized) with a kernel given by its
    /// padded spectrum; result cropped to the ROI window.
    pub fn convolve(&self, kernel_spectrum: &[Complex64], input: &Array2<f64>) -> Array2<f64> {
        let mut buf = self.forward_of(input);
        self.multiply_inverse(kernel_spectrum, &mut buf);
        self.extract(&buf)
    }

    /// `buf <- ifft(kernel_spectrum * buf) / n`, in place.
    pub fn multiply_inverse(&self, kernel_spectrum: &[Complex64], buf: &mut [Complex64]) {
        let scale = 1.0 / self.n() as f64;
        for (b, &k) in buf.iter_mut().zip(kernel_spectrum) {
            *b *= k * scale;
        }
        self.inverse(buf);
    }
}

/// One-shot linear convolution, same-size output over the input window.
pub fn conv2_same_fft(
    kernel: &Array2<f64>,
    origin: (usize, usize),
    input: &Array2<f64>,
) -> Array2<f64> {
    let (h, w) = input.dim();
    let sg = SpectralGrid::for_roi(w, h);
    let ks = sg.kernel_spectrum(kernel, origin);
    sg.convolve(&ks, input)
}

/// Direct dense summation of the same linear convolution. O(n^2 m^2); the
/// independent oracle for the FFT path.
pub fn conv2_same_direct(
    kernel: &Array2<f64>,
    origin: (usize, usize),
    input: &Array2<f64>,
) -> Array2<f64> {
    let (ih, iw) = input.dim();
    let (kh, kw) = kernel.dim();
    let (ox, oy) = (origin.0 as isize, origin.1 as isize);
    let mut out = Array2::<f64>::zeros((ih, iw));
    for py in 0..ih as isize {
        for px in 0..iw as isize {
            let mut acc = 0.0;
            for qy in 0..ih as isize {
                let ky = py - qy + oy;
                if ky < 0 || ky >= kh as isize {
                    continue;
                }
                for qx in 0..iw as isize {
                    let kx = px - qx + ox;
                    if kx < 0 || kx >= kw as isize {
                        continue;
                    }
                    acc += input[[qy as usize, qx as usize]] * kernel[[ky as usize, kx as usize]];
                }
            }
            out[[py as usize, px as usize]] = acc;
        }
    }
    out
}
