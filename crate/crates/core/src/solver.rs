//! Regularized inversion of the measurement stacks to a sparse internal
//! heat-source map, by ADMM in the spatial-frequency domain.
//!
//! The data enters through per-frequency aggregates only: with `F_t(k)` the
//! padded PSF frame spectra and `B_t^m` the pattern-response-subtracted
//! measurement frames, the solver keeps
//!
//! ```text
//! s2(k)   = sum_t |F_t(k)|^2
//! d^m(k)  = sum_t conj(F_t(k)) * Bhat_t^m(k)
//! e^m     = sum_t ||Bhat_t^m||^2
//! ```
//!
//! The x-update is closed-form per frequency,
//! `xhat = (d + rho (zhat - uhat)) / (s2 + 2 lambda_2 + rho)`, the z-update is
//! a group soft-threshold (joint-pixel or per-measurement grouping) followed
//! by projection onto the non-negative orthant, and the dual ascends by
//! `u += x - z`. The working grid is zero-padded to at least (2nx-1, 2ny-1),
//! so the circular spectral products realize linear convolutions over the ROI.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{PsrError, Result};
use crate::fft::SpectralGrid;
use crate::field::Field2D;
use crate::forward::DefectMap;
use crate::grid::GridSpec;
use crate::psf::PsfStack;
use crate::stack::ThermogramStack;

/// How measurements and pixels are grouped in the l2,1 term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Grouping {
    /// One group per pixel across measurements (joint sparsity); the default.
    JointPixel,
    /// One group per measurement: a plain sum of per-measurement l2 norms.
    PerMeasurement,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub lambda_21: f64,
    pub lambda_2: f64,
    pub rho_admm: f64,
    pub n_iter: usize,
    pub grouping: Grouping,
    /// Stop early once both residual norms fall below this threshold.
    pub convergence_tol: Option<f64>,
    /// Non-negativity projection in the z-update; disabled only by scaling
    /// property tests.
    pub nonneg: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda_21: 490.0,
            lambda_2: 34.4,
            rho_admm: 9900.0,
            n_iter: 100,
            grouping: Grouping::JointPixel,
            convergence_tol: None,
            nonneg: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_21 >= 0.0 && self.lambda_21.is_finite()) {
            return Err(PsrError::invalid("lambda_21 must be finite and >= 0"));
        }
        if !(self.lambda_2 >= 0.0 && self.lambda_2.is_finite()) {
            return Err(PsrError::invalid("lambda_2 must be finite and >= 0"));
        }
        if !(self.rho_admm > 0.0 && self.rho_admm.is_finite()) {
            return Err(PsrError::invalid("rho_admm must be finite and > 0"));
        }
        if self.n_iter < 1 {
            return Err(PsrError::invalid("n_iter must be >= 1"));
        }
        if let Some(tol) = self.convergence_tol {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(PsrError::invalid("convergence_tol must be finite and > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ReconstructionResult {
    /// Per-measurement reconstructions on the ROI grid.
    pub a_rec_per_m: Vec<Field2D>,
    /// Root-mean-square aggregate over measurements, masked to the
    /// pattern-coverage region.
    pub defect_map: DefectMap,
    /// Objective value after each iteration.
    pub objective_trace: Vec<f64>,
    /// (primal, dual) residual norms after each iteration.
    pub residual_trace: Vec<(f64, f64)>,
    pub config: SolverConfig,
    pub iterations: usize,
}

/// The l2,1 norm of a set of fields under the chosen grouping.
pub fn l21_norm(fields: &[Field2D], grouping: Grouping) -> Result<f64> {
    if fields.is_empty() {
        return Err(PsrError::invalid("l21_norm needs at least one field"));
    }
    for f in &fields[1..] {
        fields[0].require_same_spatial(f, "l21_norm")?;
    }
    let arrays: Vec<&Array2<f64>> = fields.iter().map(|f| f.values()).collect();
    Ok(l21_of_arrays(&arrays, grouping))
}

fn l21_of_arrays(arrays: &[&Array2<f64>], grouping: Grouping) -> f64 {
    match grouping {
        Grouping::PerMeasurement => {
            arrays.iter().map(|a| a.iter().map(|v| v * v).sum::<f64>().sqrt()).sum()
        }
        Grouping::JointPixel => {
            let mut acc = Array2::<f64>::zeros(arrays[0].dim());
            for a in arrays {
                acc.zip_mut_with(a, |s, &v| *s += v * v);
            }
            acc.iter().map(|s| s.sqrt()).sum()
        }
    }
}

/// The inversion problem reduced to per-frequency aggregates on the padded
/// working grid. Building it performs the known-illumination subtraction:
/// the pristine response `phi_t * pattern^m` is computed on the ROI and
/// subtracted from each measurement frame before anything is transformed.
pub struct SpectralProblem {
    pub sg: SpectralGrid,
    /// ROI grid of the measurements.
    pub roi: GridSpec,
    /// `sum_t |F_t(k)|^2` per padded frequency.
    pub s2: Vec<f64>,
    /// `sum_t conj(F_t) Bhat_t^m` per measurement.
    pub d: Vec<Vec<Complex64>>,
    /// `sum_t ||Bhat_t^m||^2` per measurement.
    pub e: Vec<f64>,
    /// Union support of the rasterized patterns (all-ones when every pattern
    /// is identically zero, so masking never erases an unpatterned problem).
    pub coverage: Array2<f64>,
    pub n_m: usize,
    pub nt: usize,
}

impl SpectralProblem {
    pub fn build(
        t_diff: &[ThermogramStack],
        psf: &PsfStack,
        patterns: &[Field2D],
    ) -> Result<Self> {
        if t_diff.is_empty() || t_diff.len() != patterns.len() {
            return Err(PsrError::invalid(format!(
                "need matching non-empty measurement and pattern sets, got {} and {}",
                t_diff.len(),
                patterns.len()
            )));
        }
        let grid = *psf.grid();
        for s in t_diff {
            if *s.grid() != grid {
                return Err(PsrError::GridMismatch {
                    context: "solver measurements",
                    expected: format!("{grid:?}"),
                    actual: format!("{:?}", s.grid()),
                });
            }
        }
        for p in patterns {
            if !p.grid().same_spatial(&grid) {
                return Err(PsrError::GridMismatch {
                    context: "solver patterns",
                    expected: grid.describe_spatial(),
                    actual: p.grid().describe_spatial(),
                });
            }
        }
        let n_m = t_diff.len();
        let nt = grid.nt;
        let sg = SpectralGrid::for_roi(grid.nx, grid.ny);
        let origin = psf.origin_pixel()?;
        let n = sg.n();

        let pattern_hats: Vec<Vec<Complex64>> =
            patterns.par_iter().map(|p| sg.forward_of(p.values())).collect();

        let mut s2 = vec![0.0f64; n];
        let mut d = vec![vec![Complex64::default(); n]; n_m];
        let mut e = vec![0.0f64; n_m];
        for t in 0..nt {
            let f_hat = sg.kernel_spectrum(psf.frame(t), origin);
            for (v, fk) in s2.iter_mut().zip(&f_hat) {
                *v += fk.norm_sqr();
            }
            let parts: Vec<(Vec<Complex64>, f64)> = (0..n_m)
                .into_par_iter()
                .map(|m| {
                    // pristine response on the ROI, subtracted there
                    let mut pristine = pattern_hats[m].clone();
                    sg.multiply_inverse(&f_hat, &mut pristine);
                    let mut b = Array2::<f64>::zeros((grid.ny, grid.nx));
                    let meas = t_diff[m].frame(t);
                    for iy in 0..grid.ny {
                        for ix in 0..grid.nx {
                            b[[iy, ix]] = meas[[iy, ix]] - pristine[iy * sg.pw + ix].re;
                        }
                    }
                    let b_hat = sg.forward_of(&b);
                    let e_part: f64 = b_hat.iter().map(|v| v.norm_sqr()).sum();
                    (b_hat, e_part)
                })
                .collect();
            for (m, (b_hat, e_part)) in parts.into_iter().enumerate() {
                for ((dv, fk), bv) in d[m].iter_mut().zip(&f_hat).zip(&b_hat) {
                    *dv += fk.conj() * bv;
                }
                e[m] += e_part;
            }
        }

        let mut coverage = Array2::<f64>::zeros((grid.ny, grid.nx));
        let mut any = false;
        for p in patterns {
            for (c, &v) in coverage.iter_mut().zip(p.values()) {
                if v > 0.0 {
                    *c = 1.0;
                    any = true;
                }
            }
        }
        if !any {
            coverage.fill(1.0);
        }

        Ok(SpectralProblem { sg, roi: grid, s2, d, e, coverage, n_m, nt })
    }

    /// The objective the iteration minimizes, evaluated at padded-grid fields:
    /// `0.5 sum_{m,t} ||F_t z^m - B_t^m||^2 + lambda_21 l21(z) + lambda_2 ||z||^2`
    /// with the data term computed spectrally (exact by Parseval).
    pub fn objective_of(
        &self,
        z: &[Array2<f64>],
        lambda_21: f64,
        lambda_2: f64,
        grouping: Grouping,
    ) -> f64 {
        let data: f64 = (0..self.n_m)
            .map(|m| {
                let z_hat = self.sg.forward_of(&z[m]);
                self.data_term_of_hat(m, &z_hat)
            })
            .sum();
        0.5 * data / self.sg.n() as f64 + self.regularizer_of(z, lambda_21, lambda_2, grouping)
    }

    fn data_term_of_hat(&self, m: usize, z_hat: &[Complex64]) -> f64 {
        let mut acc = self.e[m];
        for ((&s2k, dk), zk) in self.s2.iter().zip(&self.d[m]).zip(z_hat) {
            acc += s2k * zk.norm_sqr() - 2.0 * (zk * dk.conj()).re;
        }
        acc
    }

    fn regularizer_of(
        &self,
        z: &[Array2<f64>],
        lambda_21: f64,
        lambda_2: f64,
        grouping: Grouping,
    ) -> f64 {
        let arrays: Vec<&Array2<f64>> = z.iter().collect();
        let sq: f64 = z.iter().map(|a| a.iter().map(|v| v * v).sum::<f64>()).sum();
        lambda_21 * l21_of_arrays(&arrays, grouping) + lambda_2 * sq
    }

    /// Largest eigenvalue of the data-term Hessian, `max_k s2(k) + 2 lambda_2`.
    pub fn lipschitz(&self, lambda_2: f64) -> f64 {
        self.s2.iter().copied().fold(0.0f64, f64::max) + 2.0 * lambda_2
    }
}

/// Group soft-threshold with threshold `kappa`, combined with projection onto
/// the non-negative orthant, in place.
///
/// The projection is applied before the threshold: that order is the exact
/// proximal operator of `kappa * ||.||_2 + indicator(>= 0)` per group (any
/// component with a non-positive input is zero at the optimum, and the
/// remainder reduces to plain group shrinkage of the positive part), so the
/// ADMM z-step and a proximal-gradient step on the same objective share their
/// fixed points.
pub fn group_shrink(v: &mut [Array2<f64>], kappa: f64, grouping: Grouping, nonneg: bool) {
    if nonneg {
        for a in v.iter_mut() {
            a.mapv_inplace(|x| x.max(0.0));
        }
    }
    match grouping {
        Grouping::PerMeasurement => {
            for a in v.iter_mut() {
                let g = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let factor = if g > kappa { 1.0 - kappa / g } else { 0.0 };
                a.mapv_inplace(|x| factor * x);
            }
        }
        Grouping::JointPixel => {
            let dim = v[0].dim();
            let mut g = Array2::<f64>::zeros(dim);
            for a in v.iter() {
                g.zip_mut_with(a, |s, &x| *s += x * x);
            }
            g.mapv_inplace(f64::sqrt);
            for a in v.iter_mut() {
                a.zip_mut_with(&g, |x, &gk| {
                    *x = if gk > kappa { (1.0 - kappa / gk) * *x } else { 0.0 }
                });
            }
        }
    }
}

struct MeasurementState {
    z: Array2<f64>,
    u: Array2<f64>,
    x: Array2<f64>,
    u_hat: Vec<Complex64>,
    x_hat_prev: Vec<Complex64>,
}

/// Runs the ADMM iteration on a prebuilt [`SpectralProblem`].
pub fn admm_solve(prob: &SpectralProblem, cfg: &SolverConfig) -> Result<ReconstructionResult> {
    cfg.validate()?;
    let sg = &prob.sg;
    let n = sg.n() as f64;
    let shape = (sg.ph, sg.pw);
    let rho = cfg.rho_admm;
    let kappa = cfg.lambda_21 / rho;
    let denom: Vec<f64> = prob.s2.iter().map(|&s| s + 2.0 * cfg.lambda_2 + rho).collect();

    let mut states: Vec<MeasurementState> = (0..prob.n_m)
        .map(|_| MeasurementState {
            z: Array2::zeros(shape),
            u: Array2::zeros(shape),
            x: Array2::zeros(shape),
            u_hat: vec![Complex64::default(); sg.n()],
            x_hat_prev: vec![Complex64::default(); sg.n()],
        })
        .collect();

    let mut objective_trace: Vec<f64> = Vec::with_capacity(cfg.n_iter);
    let mut residual_trace: Vec<(f64, f64)> = Vec::with_capacity(cfg.n_iter);
    // regularizer value of the z that entered the current iteration
    let mut pending_reg = 0.0;
    let mut iterations = 0;

    for iter in 0..cfg.n_iter {
        // x-update; also completes the previous iteration's objective entry
        let data_parts: Vec<f64> = states
            .par_iter_mut()
            .enumerate()
            .map(|(m, st)| {
                let mut z_hat = sg.embed(&st.z);
                sg.forward(&mut z_hat);
                let data = prob.data_term_of_hat(m, &z_hat);
                for ((uh, xh), zh) in st.u_hat.iter_mut().zip(&st.x_hat_prev).zip(&z_hat) {
                    *uh += xh - zh;
                }
                let d_m = &prob.d[m];
                for k in 0..z_hat.len() {
                    let x_hat = (d_m[k] + rho * (z_hat[k] - st.u_hat[k])) / denom[k];
                    st.x_hat_prev[k] = x_hat;
                    z_hat[k] = x_hat;
                }
                sg.inverse(&mut z_hat);
                st.x = Array2::from_shape_fn(shape, |(iy, ix)| z_hat[iy * sg.pw + ix].re / n);
                data
            })
            .collect();
        if iter > 0 {
            objective_trace.push(0.5 * data_parts.iter().sum::<f64>() / n + pending_reg);
        }

        // z-update: group soft-threshold on x + u, then projection
        let z_prev: Vec<Array2<f64>> = states.iter().map(|st| st.z.clone()).collect();
        let mut v: Vec<Array2<f64>> = states.iter().map(|st| &st.x + &st.u).collect();
        group_shrink(&mut v, kappa, cfg.grouping, cfg.nonneg);

        let mut primal_sq = 0.0;
        let mut dual_sq = 0.0;
        for (m, st) in states.iter_mut().enumerate() {
            let z_new = std::mem::replace(&mut v[m], Array2::zeros((0, 0)));
            primal_sq += st.x.iter().zip(z_new.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            dual_sq +=
                z_new.iter().zip(z_prev[m].iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            // u += x - z
            ndarray::Zip::from(&mut st.u).and(&st.x).and(&z_new).for_each(|u, &x, &z| {
                *u += x - z;
            });
            st.z = z_new;
        }
        let primal = primal_sq.sqrt();
        let dual = rho * dual_sq.sqrt();
        residual_trace.push((primal, dual));

        pending_reg = {
            let zs: Vec<&Array2<f64>> = states.iter().map(|st| &st.z).collect();
            let sq: f64 = zs.iter().map(|a| a.iter().map(|v| v * v).sum::<f64>()).sum();
            cfg.lambda_21 * l21_of_arrays(&zs, cfg.grouping) + cfg.lambda_2 * sq
        };
        iterations = iter + 1;

        if let Some(tol) = cfg.convergence_tol {
            if primal < tol && dual < tol {
                break;
            }
        }
    }

    // close the objective trace with the final z
    let final_data: f64 = states
        .par_iter()
        .enumerate()
        .map(|(m, st)| {
            let mut z_hat = sg.embed(&st.z);
            sg.forward(&mut z_hat);
            prob.data_term_of_hat(m, &z_hat)
        })
        .sum::<f64>();
    objective_trace.push(0.5 * final_data / n + pending_reg);

    // extract ROI results
    let roi1 = GridSpec { nt: 1, ..prob.roi };
    let a_rec_per_m: Vec<Field2D> = states
        .iter()
        .map(|st| {
            let window = Array2::from_shape_fn((prob.roi.ny, prob.roi.nx), |(iy, ix)| {
                st.z[[iy, ix]]
            });
            Field2D::new(roi1, window).expect("solver iterates are finite")
        })
        .collect();

    let mut rms = Array2::<f64>::zeros((prob.roi.ny, prob.roi.nx));
    for f in &a_rec_per_m {
        rms.zip_mut_with(f.values(), |s, &v| *s += v * v);
    }
    let n_m = prob.n_m as f64;
    ndarray::Zip::from(&mut rms).and(&prob.coverage).for_each(|s, &c| {
        *s = (*s / n_m).sqrt() * c;
    });
    let defect_map = DefectMap::new(Field2D::new(roi1, rms)?)?;

    Ok(ReconstructionResult {
        a_rec_per_m,
        defect_map,
        objective_trace,
        residual_trace,
        config: cfg.clone(),
        iterations,
    })
}

/// Builds the spectral problem (including the known-illumination subtraction)
/// and solves it.
pub fn admm_reconstruct(
    t_diff: &[ThermogramStack],
    psf: &PsfStack,
    patterns: &[Field2D],
    cfg: &SolverConfig,
) -> Result<ReconstructionResult> {
    let prob = SpectralProblem::build(t_diff, psf, patterns)?;
    admm_solve(&prob, cfg)
}

/// The full objective of the reconstruction problem, evaluated directly on
/// the ROI with zero-padded linear convolutions:
/// `sum_m [ 0.5 sum_t ||phi_t * (a^m + p^m) - T^m_t||^2 ] + lambda_21 l21(a) + lambda_2 ||a||^2`.
///
/// The pattern term carries the known external sources, so passing the raw
/// `T_diff` stacks here evaluates the same quantity the solver minimizes up
/// to the padded-domain boundary treatment.
pub fn objective(
    a_per_m: &[Field2D],
    t_diff: &[ThermogramStack],
    psf: &PsfStack,
    patterns: &[Field2D],
    lambda_21: f64,
    lambda_2: f64,
    grouping: Grouping,
) -> Result<f64> {
    if a_per_m.is_empty() || a_per_m.len() != t_diff.len() || a_per_m.len() != patterns.len() {
        return Err(PsrError::invalid("objective: mismatched set sizes"));
    }
    let grid = *psf.grid();
    let sg = SpectralGrid::for_roi(grid.nx, grid.ny);
    let origin = psf.origin_pixel()?;
    let spectra: Vec<Vec<Complex64>> =
        psf.frames().iter().map(|f| sg.kernel_spectrum(f, origin)).collect();
    let mut data = 0.0;
    for ((a, p), stack) in a_per_m.iter().zip(patterns).zip(t_diff) {
        a.require_same_spatial(p, "objective pattern")?;
        if !a.grid().same_spatial(&grid) || *stack.grid() != grid {
            return Err(PsrError::GridMismatch {
                context: "objective",
                expected: format!("{grid:?}"),
                actual: format!("{:?}", stack.grid()),
            });
        }
        let source = a.add(p)?;
        let src_hat = sg.forward_of(source.values());
        for (t, ks) in spectra.iter().enumerate() {
            let mut buf = src_hat.clone();
            sg.multiply_inverse(ks, &mut buf);
            let pred = sg.extract(&buf);
            let meas = stack.frame(t);
            data += pred.iter().zip(meas.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        }
    }
    let arrays: Vec<&Array2<f64>> = a_per_m.iter().map(|f| f.values()).collect();
    let sq: f64 = arrays.iter().map(|a| a.iter().map(|v| v * v).sum::<f64>()).sum();
    Ok(0.5 * data + lambda_21 * l21_of_arrays(&arrays, grouping) + lambda_2 * sq)
}
