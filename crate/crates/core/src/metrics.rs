//! Reconstruction quality scoring against a known defect distribution.
//!
//! The cost `C = NMSE(D, a) + ||(1 - eta') .* a||_2` combines the pixel-wise
//! error with a location-dependent penalty: `eta = D * phi_ref` normalized to
//! [0, 1] decays with distance from any true defect, so false positives far
//! from the defects (beyond roughly three PSF widths) are charged their full
//! l2 weight. The reconstruction is normalized to unit maximum before scoring
//! because its physical scale depends on the heating amplitude and defect
//! contrast while the ground truth is binary; the cost is therefore invariant
//! to positive rescaling.

use crate::error::{PsrError, Result};
use crate::fft::conv2_same_fft;
use crate::field::Field2D;
use crate::forward::DefectMap;
use crate::grid::GridSpec;
use crate::psf::PsfStack;

/// Location-dependent penalty mask.
#[derive(Clone, Debug)]
pub struct PenaltyMask {
    pub grid: GridSpec,
    /// Raw mask `D * phi_ref`.
    pub eta: Field2D,
    /// Mask normalized to unit maximum, in [0, 1].
    pub eta_norm: Field2D,
}

/// Normalized mean squared error of `rec` against `truth`:
/// `||truth - rec||^2 / ||truth - mean(truth)||^2`.
pub fn nmse(truth: &Field2D, rec: &Field2D) -> Result<f64> {
    truth.require_same_spatial(rec, "nmse")?;
    let mean = truth.mean();
    let ss_tot: f64 = truth.values().iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(PsrError::invalid("nmse: truth is constant"));
    }
    let ss_res: f64 =
        truth.values().iter().zip(rec.values()).map(|(t, r)| (t - r).powi(2)).sum();
    Ok(ss_res / ss_tot)
}

/// Penalty mask of a defect map under the PSF's deposited-energy footprint.
pub fn penalty_mask(defects: &DefectMap, psf: &PsfStack) -> Result<PenaltyMask> {
    if !defects.grid().same_spatial(psf.grid()) {
        return Err(PsrError::GridMismatch {
            context: "penalty_mask",
            expected: psf.grid().describe_spatial(),
            actual: defects.grid().describe_spatial(),
        });
    }
    if defects.is_zero() {
        return Err(PsrError::invalid("penalty_mask: defect map is identically zero"));
    }
    let origin = psf.origin_pixel()?;
    let mut eta = conv2_same_fft(psf.reference_frame(), origin, defects.field().values());
    // clamp FFT round-off; the convolution of non-negative factors is >= 0
    eta.mapv_inplace(|v| v.max(0.0));
    let max = eta.iter().copied().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Err(PsrError::invalid("penalty_mask: PSF reference frame is identically zero"));
    }
    let eta_norm = eta.mapv(|v| (v / max).min(1.0));
    let grid = *defects.grid();
    Ok(PenaltyMask {
        grid,
        eta: Field2D::new(grid, eta)?,
        eta_norm: Field2D::new(grid, eta_norm)?,
    })
}

/// Location-penalized reconstruction cost `C` of a reconstruction against a
/// binary ground truth. `rec` is normalized to unit maximum first (all-zero
/// reconstructions are allowed and score `NMSE(D, 0)`).
pub fn reconstruction_cost(rec: &DefectMap, truth: &DefectMap, psf: &PsfStack) -> Result<f64> {
    if !truth.is_binary() {
        return Err(PsrError::invalid("reconstruction_cost: truth must be binary"));
    }
    rec.field().require_same_spatial(truth.field(), "reconstruction_cost")?;
    let mask = penalty_mask(truth, psf)?;
    let max = rec.field().max();
    let rec_norm =
        if max > 0.0 { rec.field().scale(1.0 / max)? } else { rec.field().clone() };
    let err = nmse(truth.field(), &rec_norm)?;
    let penalty: f64 = rec_norm
        .values()
        .iter()
        .zip(mask.eta_norm.values())
        .map(|(r, e)| ((1.0 - e) * r).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(err + penalty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::MaterialSpec;
    use crate::psf::{psf_pulse, sigma_psf, PsfSpec};

    fn grid(n: usize) -> GridSpec {
        GridSpec::spatial(n, n, 1e-4, 1e-4).unwrap()
    }

    fn psf_on(n: usize) -> PsfStack {
        let g = GridSpec::new(n, n, 2, 1e-4, 1e-4, 0.05).unwrap();
        let c = g.pixel_centre(n / 2, n / 2);
        let spec = PsfSpec::new(MaterialSpec::stainless_316l(), 2.1e-3, 3, 0.1, c, 1e-12).unwrap();
        psf_pulse(&spec, &g).unwrap()
    }

    #[test]
    fn nmse_examples() {
        let g = GridSpec::spatial(2, 2, 1e-4, 1e-4).unwrap();
        let truth =
            Field2D::new(g, ndarray::array![[0.0, 0.0], [1.0, 1.0]]).unwrap();
        assert_eq!(nmse(&truth, &truth).unwrap(), 0.0);
        let mean = Field2D::constant(g, truth.mean()).unwrap();
        assert!((nmse(&truth, &mean).unwrap() - 1.0).abs() < 1e-15);
        // truth {0,0,1,1} against all-zero: 2 / 1 = 2
        let zero = Field2D::zeros(g);
        assert!((nmse(&truth, &zero).unwrap() - 2.0).abs() < 1e-15);
        // constant truth is rejected
        let flat = Field2D::constant(g, 1.0).unwrap();
        assert!(nmse(&flat, &zero).is_err());
    }

    #[test]
    fn single_pixel_mask_is_the_unit_peak_psf() {
        let psf = psf_on(33);
        let g = *psf.grid();
        let defects = DefectMap::from_rects(g, &[(16, 16, 1, 1)]).unwrap();
        let mask = penalty_mask(&defects, &psf).unwrap();
        let reference = psf.unit_peak_reference().unwrap();
        let scale = reference.iter().copied().fold(0.0f64, f64::max);
        for (got, want) in mask.eta_norm.values().iter().zip(reference.iter()) {
            assert!((got - want).abs() <= 1e-9 * scale, "{got} vs {want}");
        }
        assert!((mask.eta_norm.max() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn far_separated_defects_superpose() {
        let psf = psf_on(61);
        let g = *psf.grid();
        let sigma = sigma_psf(&psf, psf.reference_frame_index()).unwrap();
        let sep_px = (12.0 * sigma / g.dx).ceil() as usize;
        // two defects separated by > 10 sigma (fits a 61-px grid only if
        // sigma is small; otherwise fall back to opposite corners)
        let (a, b) = if 5 + sep_px + 1 < g.nx { (5, 5 + sep_px) } else { (2, g.nx - 3) };
        let two = DefectMap::from_rects(g, &[(a, 30, 1, 1), (b, 30, 1, 1)]).unwrap();
        let one = DefectMap::from_rects(g, &[(a, 30, 1, 1)]).unwrap();
        let m2 = penalty_mask(&two, &psf).unwrap();
        let m1 = penalty_mask(&one, &psf).unwrap();
        // near the first defect the two-defect mask matches the single mask
        for dy in 0..3usize {
            for dx in 0..3usize {
                let (ix, iy) = (a + dx - 1, 30 + dy - 1);
                let x = m2.eta_norm.at(ix, iy);
                let y = m1.eta_norm.at(ix, iy);
                assert!((x - y).abs() <= 1e-6, "({ix},{iy}): {x} vs {y}");
            }
        }
    }

    #[test]
    fn saturated_defect_map_saturates_the_mask() {
        let psf = psf_on(41);
        let g = *psf.grid();
        let all = DefectMap::from_rects(g, &[(0, 0, 41, 41)]).unwrap();
        let mask = penalty_mask(&all, &psf).unwrap();
        assert!(mask.eta_norm.at(20, 20) > 0.9);
    }

    #[test]
    fn mask_decays_beyond_three_sigma() {
        let psf = psf_on(61);
        let g = *psf.grid();
        let defects = DefectMap::from_rects(g, &[(30, 30, 1, 1)]).unwrap();
        let mask = penalty_mask(&defects, &psf).unwrap();
        let sigma = sigma_psf(&psf, psf.reference_frame_index()).unwrap();
        let r = 3.0 * sigma;
        for ((iy, ix), &v) in mask.eta_norm.values().indexed_iter() {
            let (x, y) = g.pixel_centre(ix, iy);
            let (cx, cy) = g.pixel_centre(30, 30);
            let dist = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
            if dist > r {
                assert!(v < 0.05, "eta_norm {v} at distance {dist:.2e} (3 sigma = {r:.2e})");
            }
        }
    }

    #[test]
    fn cost_examples() {
        let psf = psf_on(33);
        let g = *psf.grid();
        let truth = DefectMap::from_rects(g, &[(14, 14, 4, 4)]).unwrap();

        // zero reconstruction scores pure NMSE(D, 0)
        let zero = DefectMap::new(Field2D::zeros(GridSpec { nt: 1, ..g })).unwrap();
        let mean = truth.field().mean();
        let ss_tot: f64 =
            truth.field().values().iter().map(|v| (v - mean).powi(2)).sum();
        let ss: f64 = truth.field().values().iter().map(|v| v * v).sum();
        let c0 = reconstruction_cost(&zero, &truth, &psf).unwrap();
        assert!((c0 - ss / ss_tot).abs() < 1e-12);

        // perfect reconstruction: zero NMSE plus the residual penalty term
        let c1 = reconstruction_cost(&truth, &truth, &psf).unwrap();
        let mask = penalty_mask(&truth, &psf).unwrap();
        let expect: f64 = truth
            .field()
            .values()
            .iter()
            .zip(mask.eta_norm.values())
            .map(|(d, e)| ((1.0 - e) * d).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((c1 - expect).abs() < 1e-12);

        // a distant false positive adds roughly its full unit weight
        let sigma = sigma_psf(&psf, psf.reference_frame_index()).unwrap();
        let fp_x = 14 + (4.0 * sigma / g.dx).ceil() as usize + 4;
        let fp = fp_x.min(g.nx - 1);
        let mut values = truth.field().values().clone();
        values[[2, fp]] = 1.0;
        let rec = DefectMap::new(Field2D::new(GridSpec { nt: 1, ..g }, values).unwrap()).unwrap();
        let c2 = reconstruction_cost(&rec, &truth, &psf).unwrap();
        assert!(c2 > c1 + 0.5, "false positive barely penalized: {c2} vs {c1}");
    }

    #[test]
    fn cost_is_invariant_to_positive_rescaling() {
        let psf = psf_on(33);
        let g = *psf.grid();
        let truth = DefectMap::from_rects(g, &[(10, 10, 3, 3), (22, 20, 2, 2)]).unwrap();
        let rec_field = Field2D::from_fn(GridSpec { nt: 1, ..g }, |ix, iy| {
            let d1 = ((ix as f64 - 11.0).powi(2) + (iy as f64 - 11.0).powi(2)).sqrt();
            (-d1 / 3.0).exp()
        })
        .unwrap();
        let rec = DefectMap::new(rec_field.clone()).unwrap();
        let c = reconstruction_cost(&rec, &truth, &psf).unwrap();
        for scale in [0.1, 2.0, 100.0] {
            let scaled = DefectMap::new(rec_field.scale(scale).unwrap()).unwrap();
            let cs = reconstruction_cost(&scaled, &truth, &psf).unwrap();
            assert!((cs - c).abs() <= 1e-12 * c.max(1.0), "scale {scale}: {cs} vs {c}");
        }
    }

    #[test]
    fn moving_a_false_positive_away_never_lowers_the_cost() {
        let psf = psf_on(61);
        let g = *psf.grid();
        let truth = DefectMap::from_rects(g, &[(8, 28, 3, 3)]).unwrap();
        let mut last = f64::NEG_INFINITY;
        for fp_x in [14usize, 22, 30, 38, 46, 54] {
            let mut values = truth.field().values().clone();
            values[[30, fp_x]] = 1.0;
            let rec =
                DefectMap::new(Field2D::new(GridSpec { nt: 1, ..g }, values).unwrap()).unwrap();
            let c = reconstruction_cost(&rec, &truth, &psf).unwrap();
            assert!(c >= last - 1e-12, "cost decreased moving the false positive to {fp_x}");
            last = c;
        }
    }

    #[test]
    fn nmse_is_permutation_invariant() {
        let g = grid(4);
        let truth = Field2D::from_fn(g, |ix, iy| ((3 * ix + 7 * iy) % 5) as f64).unwrap();
        let rec = Field2D::from_fn(g, |ix, iy| ((ix * iy) % 3) as f64).unwrap();
        let base = nmse(&truth, &rec).unwrap();
        // apply the same pixel permutation (transpose) to both
        let tt = Field2D::from_fn(g, |ix, iy| truth.at(iy, ix)).unwrap();
        let rt = Field2D::from_fn(g, |ix, iy| rec.at(iy, ix)).unwrap();
        assert!((nmse(&tt, &rt).unwrap() - base).abs() < 1e-15);
    }

    #[test]
    fn all_zero_truth_is_rejected() {
        let psf = psf_on(17);
        let g = *psf.grid();
        let zero = DefectMap::new(Field2D::zeros(GridSpec { nt: 1, ..g })).unwrap();
        let rec = DefectMap::from_rects(g, &[(4, 4, 2, 2)]).unwrap();
        assert!(reconstruction_cost(&rec, &zero, &psf).is_err());
    }
}
