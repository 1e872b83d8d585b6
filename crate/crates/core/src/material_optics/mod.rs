//! Refractive-index models for the wire material and the special functions
//! the step-index eigenvalue equation needs.

mod bessel;

pub use bessel::{
    bessel_j, bessel_j_derivative, bessel_k, bessel_k_derivative, bessel_k_scaled,
};
pub(crate) use bessel::{j012, k012_scaled};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Three-term Sellmeier dispersion formula,
/// `n² = 1 + Σ Bᵢ λ² / (λ² − Cᵢ²)` with λ and Cᵢ in µm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SellmeierModel {
    /// (strength Bᵢ, resonance wavelength Cᵢ in µm)
    pub terms: [(f64, f64); 3],
    /// Inclusive wavelength interval in µm where the model may be evaluated.
    pub valid_range_um: (f64, f64),
}

impl SellmeierModel {
    /// Room-temperature fused silica (Malitson).
    pub const fn fused_silica() -> Self {
        SellmeierModel {
            terms: [
                (0.696_166_3, 0.068_404_3),
                (0.407_942_6, 0.116_241_4),
                (0.897_479_4, 9.896_161),
            ],
            valid_range_um: (0.4, 2.0),
        }
    }

    pub fn refractive_index(&self, lambda_um: f64) -> Result<f64> {
        let (lo, hi) = self.valid_range_um;
        if !(lambda_um >= lo && lambda_um <= hi) {
            return Err(Error::OutOfRange {
                value: lambda_um,
                min: lo,
                max: hi,
                unit: "um",
            });
        }
        let l2 = lambda_um * lambda_um;
        let n2 = 1.0
            + self
                .terms
                .iter()
                .map(|&(b, c)| b * l2 / (l2 - c * c))
                .sum::<f64>();
        Ok(n2.sqrt())
    }
}

impl Default for SellmeierModel {
    fn default() -> Self {
        Self::fused_silica()
    }
}

/// Index model of the wire material.
///
/// `Constant` is a dispersionless medium, handy for isolating waveguide
/// dispersion from material dispersion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IndexModel {
    Sellmeier(SellmeierModel),
    Constant { index: f64, valid_range_um: (f64, f64) },
}

impl IndexModel {
    pub fn silica() -> Self {
        IndexModel::Sellmeier(SellmeierModel::fused_silica())
    }

    pub fn constant(index: f64) -> Self {
        IndexModel::Constant {
            index,
            valid_range_um: (0.4, 2.0),
        }
    }

    pub fn valid_range_um(&self) -> (f64, f64) {
        match self {
            IndexModel::Sellmeier(m) => m.valid_range_um,
            IndexModel::Constant { valid_range_um, .. } => *valid_range_um,
        }
    }

    pub fn refractive_index(&self, lambda_um: f64) -> Result<f64> {
        match self {
            IndexModel::Sellmeier(m) => m.refractive_index(lambda_um),
            IndexModel::Constant {
                index,
                valid_range_um: (lo, hi),
            } => {
                if !(lambda_um >= *lo && lambda_um <= *hi) {
                    return Err(Error::OutOfRange {
                        value: lambda_um,
                        min: *lo,
                        max: *hi,
                        unit: "um",
                    });
                }
                Ok(*index)
            }
        }
    }
}

impl Default for IndexModel {
    fn default() -> Self {
        Self::silica()
    }
}

/// Convenience wrapper around [`SellmeierModel::refractive_index`].
pub fn refractive_index(model: &SellmeierModel, lambda_um: f64) -> Result<f64> {
    model.refractive_index(lambda_um)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent evaluation of the Malitson formula written out term by term.
    fn malitson_oracle(l: f64) -> f64 {
        let l2 = l * l;
        (1.0 + 0.6961663 * l2 / (l2 - 0.0684043f64.powi(2))
            + 0.4079426 * l2 / (l2 - 0.1162414f64.powi(2))
            + 0.8974794 * l2 / (l2 - 9.896161f64.powi(2)))
        .sqrt()
    }

    #[test]
    fn silica_reference_points() {
        let m = SellmeierModel::fused_silica();
        let n_pump = m.refractive_index(1.0318).unwrap();
        let n_sig = m.refractive_index(1.31).unwrap();
        assert!((n_pump - 1.4500).abs() < 1e-3, "{n_pump}");
        assert!((n_sig - 1.4468).abs() < 1e-3, "{n_sig}");
        assert!((n_pump - malitson_oracle(1.0318)).abs() < 1e-15);
        let n_idl = m.refractive_index(0.851).unwrap();
        assert!(n_idl > n_pump && n_pump > n_sig);
    }

    #[test]
    fn out_of_range_names_interval() {
        let err = SellmeierModel::fused_silica()
            .refractive_index(2.5)
            .unwrap_err();
        assert_eq!(
            err,
            Error::OutOfRange {
                value: 2.5,
                min: 0.4,
                max: 2.0,
                unit: "um"
            }
        );
        assert!(err.to_string().contains("[0.4, 2]"));
        assert!(SellmeierModel::fused_silica()
            .refractive_index(f64::NAN)
            .is_err());
    }

    #[test]
    fn normal_dispersion_window() {
        let m = SellmeierModel::fused_silica();
        let mut prev = f64::INFINITY;
        for i in 0..=1100 {
            let l = 0.6 + i as f64 * 1e-3;
            let n = m.refractive_index(l).unwrap();
            assert!(n > 1.0 && n < 2.0);
            assert!(n < prev);
            prev = n;
        }
    }

    #[test]
    fn finite_difference_slope_bounded() {
        let m = SellmeierModel::fused_silica();
        let h = 1e-6;
        for i in 0..160 {
            let l = 0.4 + 1e-3 + i as f64 * 0.01;
            let slope = (m.refractive_index(l + h).unwrap() - m.refractive_index(l).unwrap()) / h;
            assert!(slope.abs() < 0.5, "slope {slope} at {l}");
        }
    }

    #[test]
    fn constant_model() {
        let m = IndexModel::constant(1.45);
        assert_eq!(m.refractive_index(1.0).unwrap(), 1.45);
        assert!(m.refractive_index(0.1).is_err());
    }
}
