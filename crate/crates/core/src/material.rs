//! Thermal material parameters of the plate under test.

use crate::error::{PsrError, Result};

/// Thermally thin plate: diffusivity, volumetric heat capacity, thickness and
/// the reflection coefficient of the thermal wave at the plate faces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialSpec {
    /// Thermal diffusivity in m^2/s.
    pub alpha: f64,
    /// Density in kg/m^3.
    pub rho: f64,
    /// Specific heat capacity in J/(kg K).
    pub cp: f64,
    /// Thermal conductivity in W/(m K).
    pub k: f64,
    /// Plate thickness in metres.
    pub thickness: f64,
    /// Thermal reflection coefficient at the plate faces, in [0, 1].
    pub reflection: f64,
}

impl MaterialSpec {
    pub fn new(
        alpha: f64,
        rho: f64,
        cp: f64,
        k: f64,
        thickness: f64,
        reflection: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("alpha", alpha),
            ("rho", rho),
            ("cp", cp),
            ("k", k),
            ("thickness", thickness),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PsrError::invalid(format!(
                    "material {name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&reflection) || !reflection.is_finite() {
            return Err(PsrError::invalid(format!(
                "reflection coefficient must lie in [0, 1], got {reflection}"
            )));
        }
        // alpha must agree with k/(rho*cp) to within 2%.
        let derived = k / (rho * cp);
        if ((derived - alpha) / alpha).abs() > 0.02 {
            return Err(PsrError::invalid(format!(
                "inconsistent material: k/(rho*cp) = {derived:.4e} vs alpha = {alpha:.4e}"
            )));
        }
        Ok(MaterialSpec { alpha, rho, cp, k, thickness, reflection })
    }

    /// Additively manufactured 316L stainless steel, 4.5 mm plate, R = 1.
    pub fn stainless_316l() -> Self {
        MaterialSpec::new(3.76e-6, 7950.0, 502.0, 15.0, 4.5e-3, 1.0)
            .expect("built-in material is consistent")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_material_is_consistent() {
        let m = MaterialSpec::stainless_316l();
        assert!(((m.k / (m.rho * m.cp) - m.alpha) / m.alpha).abs() <= 0.02);
    }

    #[test]
    fn rejects_inconsistent_properties() {
        // alpha off by 10% from k/(rho*cp)
        assert!(MaterialSpec::new(4.2e-6, 7950.0, 502.0, 15.0, 4.5e-3, 1.0).is_err());
    }

    #[test]
    fn rejects_bad_reflection() {
        assert!(MaterialSpec::new(3.76e-6, 7950.0, 502.0, 15.0, 4.5e-3, 1.5).is_err());
        assert!(MaterialSpec::new(3.76e-6, 7950.0, 502.0, 15.0, 4.5e-3, -0.1).is_err());
    }
}
