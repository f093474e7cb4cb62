//! Closed-form forward model for synthetic measurement stacks.
//!
//! A measurement frame is
//!
//! ```text
//! T(t) = phi_t * ( p + zeta * D .* (phi_ref * p) ) + T0 + noise,
//! ```
//!
//! where `p` is the rasterized illumination pattern, `D` the defect map,
//! `phi_t` the PSF frame at time `t` and `phi_ref` the deposited-energy
//! footprint (the PSF frame at the pulse end) scaled to unit peak so that the
//! defect contrast `zeta` keeps its [0, 1) meaning. All spatial convolutions
//! are zero-padded linear, never circular.

use ndarray::Array2;

use crate::error::{PsrError, Result};
use crate::fft::SpectralGrid;
use crate::field::Field2D;
use crate::grid::GridSpec;
use crate::psf::PsfStack;
use crate::rng::{rng_from_seed, standard_normal};
use crate::stack::ThermogramStack;

/// Internal defect distribution: binary ground truth or a non-negative
/// reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct DefectMap {
    field: Field2D,
}

impl DefectMap {
    pub fn new(field: Field2D) -> Result<Self> {
        if field.values().iter().any(|&v| v < 0.0) {
            return Err(PsrError::invalid("defect map values must be >= 0"));
        }
        Ok(DefectMap { field })
    }

    /// Binary ground-truth map; every value must be exactly 0 or 1.
    pub fn binary(field: Field2D) -> Result<Self> {
        if field.values().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(PsrError::invalid("ground-truth defect map must be exactly binary"));
        }
        Ok(DefectMap { field })
    }

    /// Binary map with ones inside the given pixel rectangles `(x0, y0, w, h)`.
    pub fn from_rects(grid: GridSpec, rects: &[(usize, usize, usize, usize)]) -> Result<Self> {
        let mut values = Array2::<f64>::zeros((grid.ny, grid.nx));
        for &(x0, y0, w, h) in rects {
            if x0 + w > grid.nx || y0 + h > grid.ny {
                return Err(PsrError::OutOfBounds { x0, y0, w, h, nx: grid.nx, ny: grid.ny });
            }
            values.slice_mut(ndarray::s![y0..y0 + h, x0..x0 + w]).fill(1.0);
        }
        let grid1 = GridSpec { nt: 1, ..grid };
        DefectMap::binary(Field2D::new(grid1, values)?)
    }

    pub fn field(&self) -> &Field2D {
        &self.field
    }

    pub fn grid(&self) -> &GridSpec {
        self.field.grid()
    }

    pub fn is_binary(&self) -> bool {
        self.field.values().iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn is_zero(&self) -> bool {
        self.field.values().iter().all(|&v| v == 0.0)
    }
}

/// Synthetic measurement settings.
#[derive(Clone, Debug)]
pub struct ForwardSpec {
    /// Defect contrast in [0, 1).
    pub zeta: f64,
    /// Gaussian noise standard deviation in kelvin, >= 0.
    pub noise_sigma: f64,
    /// Initial temperature field.
    pub t0: Field2D,
    /// Noise stream seed.
    pub seed: u64,
}

impl ForwardSpec {
    pub fn new(zeta: f64, noise_sigma: f64, t0: Field2D, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&zeta) {
            return Err(PsrError::invalid(format!("zeta must lie in [0, 1), got {zeta}")));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(PsrError::invalid(format!("noise sigma must be >= 0, got {noise_sigma}")));
        }
        Ok(ForwardSpec { zeta, noise_sigma, t0, seed })
    }
}

/// Forward operator with the PSF spectra cached on the padded working grid.
/// Reusable across measurements of the same stack geometry.
pub struct ForwardOperator {
    grid: GridSpec,
    sg: SpectralGrid,
    frame_spectra: Vec<Vec<num_complex::Complex64>>,
    ref_spectrum: Vec<num_complex::Complex64>,
    pulse_length: f64,
}

impl ForwardOperator {
    pub fn new(psf: &PsfStack) -> Result<Self> {
        let grid = *psf.grid();
        let sg = SpectralGrid::for_roi(grid.nx, grid.ny);
        let origin = psf.origin_pixel()?;
        let frame_spectra = psf.frames().iter().map(|f| sg.kernel_spectrum(f, origin)).collect();
        let ref_spectrum = sg.kernel_spectrum(&psf.unit_peak_reference()?, origin);
        Ok(ForwardOperator {
            grid,
            sg,
            frame_spectra,
            ref_spectrum,
            pulse_length: psf.spec().pulse_length,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn require_spatial(&self, f: &Field2D, context: &'static str) -> Result<()> {
        if !f.grid().same_spatial(&self.grid) {
            return Err(PsrError::GridMismatch {
                context,
                expected: self.grid.describe_spatial(),
                actual: f.grid().describe_spatial(),
            });
        }
        Ok(())
    }

    /// Unit-peak reference footprint convolved with the pattern, gated by the
    /// defect map: the local deposited-energy weight that couples defects to
    /// the heating (no heating, no signal).
    pub fn defect_coupling(&self, pattern: &Field2D, defects: &DefectMap) -> Result<Field2D> {
        self.require_spatial(pattern, "defect_coupling pattern")?;
        self.require_spatial(defects.field(), "defect_coupling defects")?;
        let inner = self.sg.convolve(&self.ref_spectrum, pattern.values());
        let grid1 = GridSpec { nt: 1, ..self.grid };
        let inner = Field2D::new(grid1, inner)?;
        defects.field().hadamard(&inner)
    }

    /// Response frames to an arbitrary source field (no T0, no noise).
    fn response(&self, source: &Array2<f64>) -> Vec<Array2<f64>> {
        let src_hat = self.sg.forward_of(source);
        self.frame_spectra
            .iter()
            .map(|ks| {
                let mut buf = src_hat.clone();
                self.sg.multiply_inverse(ks, &mut buf);
                self.sg.extract(&buf)
            })
            .collect()
    }

    /// Pristine response `phi_t * pattern` (zeta = 0, T0 = 0, no noise).
    pub fn pristine(&self, pattern: &Field2D) -> Result<ThermogramStack> {
        self.require_spatial(pattern, "pristine pattern")?;
        ThermogramStack::new(self.grid, self.response(pattern.values()), 0, self.pulse_length)
    }

    /// Full synthetic measurement stack.
    pub fn simulate(
        &self,
        pattern: &Field2D,
        defects: &DefectMap,
        spec: &ForwardSpec,
    ) -> Result<ThermogramStack> {
        self.require_spatial(pattern, "simulate pattern")?;
        self.require_spatial(defects.field(), "simulate defects")?;
        self.require_spatial(&spec.t0, "simulate t0")?;
        let coupling = self.defect_coupling(pattern, defects)?;
        let source = pattern.add(&coupling.scale(spec.zeta)?)?;
        let mut frames = self.response(source.values());
        let mut rng = rng_from_seed(spec.seed);
        for frame in frames.iter_mut() {
            *frame += spec.t0.values();
            if spec.noise_sigma > 0.0 {
                for v in frame.iter_mut() {
                    *v += spec.noise_sigma * standard_normal(&mut rng);
                }
            }
        }
        ThermogramStack::new(self.grid, frames, 0, self.pulse_length)
    }

    /// Least-squares defect contrast and the coefficient of determination of
    /// the fitted model against the measurement.
    ///
    /// The model is affine in zeta, so the minimizer is the closed-form ratio
    /// `sum(D_t . (T_t - P_t - T0)) / sum(D_t . D_t)` with `P_t` the pristine
    /// response and `D_t` the defect response frames.
    pub fn fit_zeta(
        &self,
        measured: &ThermogramStack,
        pattern: &Field2D,
        defects: &DefectMap,
        t0: &Field2D,
    ) -> Result<(f64, f64)> {
        self.require_spatial(pattern, "fit_zeta pattern")?;
        self.require_spatial(t0, "fit_zeta t0")?;
        if *measured.grid() != self.grid {
            return Err(PsrError::GridMismatch {
                context: "fit_zeta measurement",
                expected: format!("{:?}", self.grid),
                actual: format!("{:?}", measured.grid()),
            });
        }
        let coupling = self.defect_coupling(pattern, defects)?;
        if coupling.values().iter().all(|&v| v == 0.0) {
            return Err(PsrError::invalid(
                "defect response is identically zero; zeta is unidentifiable",
            ));
        }
        let pristine = self.response(pattern.values());
        let defect_resp = self.response(coupling.values());
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, dr) in defect_resp.iter().enumerate() {
            let meas = measured.frame(k);
            let pri = &pristine[k];
            for ((d, m), (p, t)) in dr.iter().zip(meas.iter()).zip(pri.iter().zip(t0.values().iter()))
            {
                num += d * (m - p - t);
                den += d * d;
            }
        }
        let zeta = num / den;
        // R^2 of the fitted model over all pixels and frames
        let mut model_frames = Vec::with_capacity(defect_resp.len());
        for (k, dr) in defect_resp.iter().enumerate() {
            let mut f = pristine[k].clone();
            f.scaled_add(zeta, dr);
            f += t0.values();
            model_frames.push(f);
        }
        let model = ThermogramStack::new(self.grid, model_frames, 0, self.pulse_length)?;
        let r2 = r_squared(&model, measured)?;
        Ok((zeta, r2))
    }
}

/// One-shot convenience wrapper around [`ForwardOperator::simulate`].
pub fn simulate_measurement(
    pattern: &Field2D,
    defects: &DefectMap,
    psf: &PsfStack,
    spec: &ForwardSpec,
) -> Result<ThermogramStack> {
    ForwardOperator::new(psf)?.simulate(pattern, defects, spec)
}

/// Convenience wrapper around [`ForwardOperator::fit_zeta`].
pub fn fit_zeta(
    measured: &ThermogramStack,
    pattern: &Field2D,
    defects: &DefectMap,
    psf: &PsfStack,
    t0: &Field2D,
) -> Result<(f64, f64)> {
    ForwardOperator::new(psf)?.fit_zeta(measured, pattern, defects, t0)
}

/// Coefficient of determination of `prediction` against `measured` over all
/// pixels and frames: `1 - SS_res / SS_tot`.
pub fn r_squared(prediction: &ThermogramStack, measured: &ThermogramStack) -> Result<f64> {
    measured.require_same_grid(prediction, "r_squared")?;
    let n = (measured.grid().nt * measured.grid().n_pixels()) as f64;
    let mean: f64 = measured.frames().iter().map(|f| f.sum()).sum::<f64>() / n;
    let mut ss_tot = 0.0;
    let mut ss_res = 0.0;
    for (p, m) in prediction.frames().iter().zip(measured.frames()) {
        for (pv, mv) in p.iter().zip(m.iter()) {
            ss_tot += (mv - mean).powi(2);
            ss_res += (mv - pv).powi(2);
        }
    }
    if ss_tot == 0.0 {
        return Err(PsrError::invalid("r_squared: measurement is constant (zero variance)"));
    }
    Ok(1.0 - ss_res / ss_tot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::conv2_same_direct;
    use crate::material::MaterialSpec;
    use crate::psf::{psf_pulse, PsfSpec};
    use crate::rng::standard_normal;

    fn small_psf(n: usize, nt: usize) -> PsfStack {
        let grid = GridSpec::new(n, n, nt, 1e-4, 1e-4, 0.025).unwrap();
        let c = grid.pixel_centre(n / 2, n / 2);
        let spec = PsfSpec::new(MaterialSpec::stainless_316l(), 2.1e-3, 3, 0.1, c, 1e-12).unwrap();
        psf_pulse(&spec, &grid).unwrap()
    }

    fn cluster_pattern(grid: &GridSpec, x0: usize, y0: usize, w: usize, h: usize) -> Field2D {
        Field2D::from_fn(*grid, |ix, iy| {
            if (x0..x0 + w).contains(&ix) && (y0..y0 + h).contains(&iy) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap()
    }

    #[test]
    fn zero_zeta_equals_pristine_plus_t0() {
        let psf = small_psf(17, 3);
        let grid = *psf.grid();
        let op = ForwardOperator::new(&psf).unwrap();
        let pattern = cluster_pattern(&grid, 6, 6, 4, 4);
        let defects = DefectMap::from_rects(grid, &[(8, 8, 2, 2)]).unwrap();
        let t0 = Field2D::constant(GridSpec { nt: 1, ..grid }, 293.15).unwrap();
        let spec = ForwardSpec::new(0.0, 0.0, t0.clone(), 1).unwrap();
        let sim = op.simulate(&pattern, &defects, &spec).unwrap();
        let pristine = op.pristine(&pattern).unwrap();
        for (s, p) in sim.frames().iter().zip(pristine.frames()) {
            for (a, b) in s.iter().zip(p.iter()) {
                assert_eq!(*a, b + 293.15);
            }
        }
    }

    #[test]
    fn zero_defects_match_zero_zeta() {
        let psf = small_psf(15, 2);
        let grid = *psf.grid();
        let op = ForwardOperator::new(&psf).unwrap();
        let pattern = cluster_pattern(&grid, 4, 4, 5, 5);
        let none = DefectMap::new(Field2D::zeros(GridSpec { nt: 1, ..grid })).unwrap();
        let some = DefectMap::from_rects(grid, &[(7, 7, 2, 2)]).unwrap();
        let t0 = Field2D::zeros(GridSpec { nt: 1, ..grid });
        let a = op
            .simulate(&pattern, &none, &ForwardSpec::new(0.7, 0.0, t0.clone(), 1).unwrap())
            .unwrap();
        let b = op.simulate(&pattern, &some, &ForwardSpec::new(0.0, 0.0, t0, 2).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn defect_excess_matches_dense_summation() {
        let psf = small_psf(17, 3);
        let grid = *psf.grid();
        let op = ForwardOperator::new(&psf).unwrap();
        let pattern = cluster_pattern(&grid, 6, 6, 4, 4);
        let defects = DefectMap::from_rects(grid, &[(8, 8, 1, 1)]).unwrap();
        let t0 = Field2D::zeros(GridSpec { nt: 1, ..grid });
        let zeta = 0.5;
        let sim = op
            .simulate(&pattern, &defects, &ForwardSpec::new(zeta, 0.0, t0.clone(), 0).unwrap())
            .unwrap();
        let pristine = op.pristine(&pattern).unwrap();

        // dense-summation oracle for the same quantity
        let origin = psf.origin_pixel().unwrap();
        let ref_unit = psf.unit_peak_reference().unwrap();
        let inner = conv2_same_direct(&ref_unit, origin, pattern.values());
        let coupled = defects.field().values() * &inner;
        let scale = sim
            .frames()
            .iter()
            .map(|f| f.iter().fold(0.0f64, |a, &b| a.max(b.abs())))
            .fold(0.0, f64::max);
        for k in 0..grid.nt {
            let oracle = conv2_same_direct(psf.frame(k), origin, &coupled);
            for ((s, p), o) in sim.frame(k).iter().zip(pristine.frame(k).iter()).zip(oracle.iter())
            {
                let excess = s - p;
                assert!(
                    (excess - zeta * o).abs() <= 1e-10 * scale,
                    "frame {k}: {excess} vs {}",
                    zeta * o
                );
            }
        }
    }

    #[test]
    fn superposition_of_pristine_responses() {
        let psf = small_psf(15, 2);
        let grid = *psf.grid();
        let op = ForwardOperator::new(&psf).unwrap();
        let p1 = cluster_pattern(&grid, 2, 3, 3, 3);
        let p2 = cluster_pattern(&grid, 9, 8, 4, 2);
        let both = p1.add(&p2).unwrap();
        let a = op.pristine(&both).unwrap();
        let b1 = op.pristine(&p1).unwrap();
        let b2 = op.pristine(&p2).unwrap();
        let scale = a.frames()[0].iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        for k in 0..grid.nt {
            for ((x, y), z) in a.frame(k).iter().zip(b1.frame(k).iter()).zip(b2.frame(k).iter()) {
                assert!((x - (y + z)).abs() <= 1e-12 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn defect_excess_grows_with_zeta() {
        let psf = small_psf(15, 2);
        let grid = *psf.grid();
        let op = ForwardOperator::new(&psf).unwrap();
        let pattern = cluster_pattern(&grid, 5, 5, 5, 5);
        let defects = DefectMap::from_rects(grid, &[(7, 7, 2, 2)]).unwrap();
        let t0 = Field2D::zeros(GridSpec { nt: 1, ..grid });
        let sim = |z: f64| {
            op.simulate(&pattern, &defects, &ForwardSpec::new(z, 0.0, t0.clone(), 0).unwrap())
                .unwrap()
        };
        let s0 = sim(0.2);
        let s1 = sim(0.6);
        for (a, b) in s0.frames().iter().zip(s1.frames()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!(*y >= x - 1e-13);
            }
        }
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let psf = small_psf(9, 2);
        let grid = *psf.grid();
        let op = ForwardOperator::new(&psf).unwrap();
        let pattern = cluster_pattern(&grid, 3, 3, 3, 3);
        let defects = DefectMap::from_rects(grid, &[(4, 4, 1, 1)]).unwrap();
        let t0 = Field2D::zeros(GridSpec { nt: 1, ..grid });
        let spec = ForwardSpec::new(0.4, 0.025, t0.clone(), 77).unwrap();
        let a = op.simulate(&pattern, &defects, &spec).unwrap();
        let b = op.simulate(&pattern, &defects, &spec).unwrap();
        assert_eq!(a, b);
        let spec2 = ForwardSpec::new(0.4, 0.025, t0, 78).unwrap();
        let c = op.simulate(&pattern, &defects, &spec2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_zeta_recovery_is_exact() {
        let psf = small_psf(17, 3);
        let grid = *psf.grid();
        let op = ForwardOperator::new(&psf).unwrap();
        let pattern = cluster_pattern(&grid, 5, 5, 6, 6);
        let defects = DefectMap::from_rects(grid, &[(8, 8, 2, 2)]).unwrap();
        let t0 = Field2D::constant(GridSpec { nt: 1, ..grid }, 295.0).unwrap();
        let spec = ForwardSpec::new(0.494, 0.0, t0.clone(), 0).unwrap();
        let meas = op.simulate(&pattern, &defects, &spec).unwrap();
        let (zeta, r2) = op.fit_zeta(&meas, &pattern, &defects, &t0).unwrap();
        assert!((zeta - 0.494).abs() < 1e-12, "zeta = {zeta}");
        assert!((r2 - 1.0).abs() < 1e-12, "r2 = {r2}");
    }

    #[test]
    fn pristine_measurement_fits_zero_zeta() {
        let psf = small_psf(15, 2);
        let grid = *psf.grid();
        let op = ForwardOperator::new(&psf).unwrap();
        let pattern = cluster_pattern(&grid, 5, 5, 5, 5);
        let defects = DefectMap::from_rects(grid, &[(7, 7, 2, 2)]).unwrap();
        let t0 = Field2D::zeros(GridSpec { nt: 1, ..grid });
        let meas = op
            .simulate(&pattern, &defects, &ForwardSpec::new(0.0, 0.0, t0.clone(), 0).unwrap())
            .unwrap();
        let (zeta, r2) = op.fit_zeta(&meas, &pattern, &defects, &t0).unwrap();
        assert!(zeta.abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unidentifiable_zeta_is_an_error() {
        let psf = small_psf(9, 2);
        let grid = *psf.grid();
        let op = ForwardOperator::new(&psf).unwrap();
        let pattern = cluster_pattern(&grid, 3, 3, 3, 3);
        let none = DefectMap::new(Field2D::zeros(GridSpec { nt: 1, ..grid })).unwrap();
        let t0 = Field2D::zeros(GridSpec { nt: 1, ..grid });
        let meas = op
            .simulate(&pattern, &none, &ForwardSpec::new(0.0, 0.0, t0.clone(), 0).unwrap())
            .unwrap();
        assert!(op.fit_zeta(&meas, &pattern, &none, &t0).is_err());
    }

    #[test]
    fn t0_recovery_from_a_synthetic_measurement() {
        // build a full measured stack: pre-trigger frames around a known T0
        // field plus simulated post-trigger frames, then recover T0
        let psf = small_psf(15, 3);
        let grid = *psf.grid();
        let op = ForwardOperator::new(&psf).unwrap();
        let pattern = cluster_pattern(&grid, 4, 4, 6, 6);
        let defects = DefectMap::from_rects(grid, &[(6, 6, 2, 2)]).unwrap();
        let t0 = Field2D::from_fn(GridSpec { nt: 1, ..grid }, |ix, iy| {
            293.0 + 0.01 * (ix as f64) - 0.005 * (iy as f64)
        })
        .unwrap();
        let sigma = 0.05;
        let n_pre = 50usize;
        let post = op
            .simulate(&pattern, &defects, &ForwardSpec::new(0.4, sigma, t0.clone(), 3).unwrap())
            .unwrap();
        let mut rng = crate::rng::rng_from_seed(99);
        let mut frames = Vec::new();
        for _ in 0..n_pre {
            let mut f = t0.values().clone();
            for v in f.iter_mut() {
                *v += sigma * standard_normal(&mut rng);
            }
            frames.push(f);
        }
        frames.extend(post.frames().iter().cloned());
        let full = ThermogramStack::new(
            grid.with_nt(n_pre + grid.nt).unwrap(),
            frames,
            n_pre,
            psf.spec().pulse_length,
        )
        .unwrap();

        let recovered = full.estimate_t0(n_pre).unwrap();
        let se = sigma / (n_pre as f64).sqrt();
        let mut sq = 0.0;
        let mut worst = 0.0f64;
        for (r, t) in recovered.values().iter().zip(t0.values()) {
            let err = (r - t).abs();
            sq += err * err;
            worst = worst.max(err);
        }
        let rms = (sq / grid.n_pixels() as f64).sqrt();
        assert!(rms <= 1.25 * se, "rms {rms:.2e} vs standard error {se:.2e}");
        assert!(worst <= 5.0 * se, "worst {worst:.2e} vs standard error {se:.2e}");

        // and the difference stack equals post frames minus the estimate
        let diff = full.subtract_t0(n_pre).unwrap();
        let expect = post.frame(0) - recovered.values();
        for (a, b) in diff.frame(0).iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn r_squared_examples() {
        let grid = GridSpec::new(2, 2, 2, 1e-4, 1e-4, 0.01).unwrap();
        let frames = vec![
            ndarray::array![[1.0, 2.0], [3.0, 4.0]],
            ndarray::array![[2.0, 3.0], [4.0, 5.0]],
        ];
        let meas = ThermogramStack::new(grid, frames.clone(), 0, 0.1).unwrap();
        assert_eq!(r_squared(&meas, &meas).unwrap(), 1.0);

        let mean = 3.0;
        let pred_mean = ThermogramStack::constant(grid, mean, 0, 0.1).unwrap();
        assert!(r_squared(&pred_mean, &meas).unwrap().abs() < 1e-12);

        // one frame perturbed by delta against itself
        let delta = 0.25;
        let mut pframes = frames.clone();
        pframes[1].mapv_inplace(|v| v + delta);
        let pred = ThermogramStack::new(grid, pframes, 0, 0.1).unwrap();
        let ss_tot: f64 = frames.iter().flatten().map(|v| (v - mean).powi(2)).sum();
        let expect = 1.0 - delta * delta * 4.0 / ss_tot;
        assert!((r_squared(&pred, &meas).unwrap() - expect).abs() < 1e-12);

        let constant = ThermogramStack::constant(grid, 5.0, 0, 0.1).unwrap();
        assert!(r_squared(&constant, &constant).is_err());
    }
}
