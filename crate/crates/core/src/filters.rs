//! Filter shapes (CWDM super-Gaussian, Gaussian band-pass, logistic edges)
//! and binning of spectral densities into per-channel rates.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sfwm::SpectralDensity;

pub const CWDM_FIRST_NM: f64 = 1270.0;
pub const CWDM_SPACING_NM: f64 = 20.0;
pub const CWDM_CHANNELS: usize = 18;
pub const CWDM_HALF_BW_NM: f64 = 9.0;
pub const CWDM_ORDER: u32 = 3;
/// Wavelength span a density must cover to be binned into the bank.
pub const CWDM_COVERAGE_NM: (f64, f64) = (1250.0, 1630.0);
pub const DEFAULT_EDGE_WIDTH_NM: f64 = 10.0;

/// `ln(10^0.05)`: 0.5 dB expressed as a natural-log attenuation.
const HALF_DB: f64 = 0.05 * std::f64::consts::LN_10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterSpec {
    /// `exp(−ln(10^0.05)((λ−λc)/h)^(2m))`, so `T(λc ± h) = −0.5 dB`.
    SuperGaussian {
        center_nm: f64,
        half_bw_nm: f64,
        order: u32,
    },
    GaussianBandpass { center_nm: f64, fwhm_nm: f64 },
    /// Logistic edge; `transition_nm` is the 1 % to 99 % width.
    LongPassEdge { cutoff_nm: f64, transition_nm: f64 },
    ShortPassEdge { cutoff_nm: f64, transition_nm: f64 },
}

impl FilterSpec {
    pub fn cwdm(center_nm: f64) -> Self {
        FilterSpec::SuperGaussian {
            center_nm,
            half_bw_nm: CWDM_HALF_BW_NM,
            order: CWDM_ORDER,
        }
    }

    pub fn long_pass(cutoff_nm: f64) -> Self {
        FilterSpec::LongPassEdge {
            cutoff_nm,
            transition_nm: DEFAULT_EDGE_WIDTH_NM,
        }
    }

    pub fn short_pass(cutoff_nm: f64) -> Self {
        FilterSpec::ShortPassEdge {
            cutoff_nm,
            transition_nm: DEFAULT_EDGE_WIDTH_NM,
        }
    }

    pub fn transmission(&self, lambda_nm: f64) -> f64 {
        match *self {
            FilterSpec::SuperGaussian {
                center_nm,
                half_bw_nm,
                order,
            } => {
                let x = ((lambda_nm - center_nm) / half_bw_nm).powi(2 * order as i32);
                (-HALF_DB * x).exp()
            }
            FilterSpec::GaussianBandpass { center_nm, fwhm_nm } => {
                (-4.0 * std::f64::consts::LN_2 * ((lambda_nm - center_nm) / fwhm_nm).powi(2)).exp()
            }
            FilterSpec::LongPassEdge {
                cutoff_nm,
                transition_nm,
            } => logistic((lambda_nm - cutoff_nm) / edge_scale(transition_nm)),
            FilterSpec::ShortPassEdge {
                cutoff_nm,
                transition_nm,
            } => logistic((cutoff_nm - lambda_nm) / edge_scale(transition_nm)),
        }
    }
}

/// Free-function form of [`FilterSpec::transmission`].
pub fn transmission(filter: &FilterSpec, lambda_nm: f64) -> f64 {
    filter.transmission(lambda_nm)
}

fn edge_scale(width_1_99: f64) -> f64 {
    width_1_99 / (2.0 * 99f64.ln())
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CwdmBank {
    channel_centers: Vec<f64>,
    half_bw_nm: f64,
    order: u32,
}

impl Default for CwdmBank {
    fn default() -> Self {
        Self::standard()
    }
}

impl CwdmBank {
    /// 18 channels, 1270–1610 nm on a 20 nm grid, 9 nm half 0.5 dB width, m = 3.
    pub fn standard() -> Self {
        Self::with_order(CWDM_ORDER).unwrap()
    }

    pub fn with_order(order: u32) -> Result<Self> {
        if order == 0 {
            return Err(Error::Argument("super-Gaussian order must be >= 1".into()));
        }
        Ok(CwdmBank {
            channel_centers: (0..CWDM_CHANNELS)
                .map(|k| CWDM_FIRST_NM + CWDM_SPACING_NM * k as f64)
                .collect(),
            half_bw_nm: CWDM_HALF_BW_NM,
            order,
        })
    }

    pub fn centers(&self) -> &[f64] {
        &self.channel_centers
    }

    pub fn len(&self) -> usize {
        self.channel_centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channel_centers.is_empty()
    }

    pub fn channel(&self, k: usize) -> FilterSpec {
        FilterSpec::SuperGaussian {
            center_nm: self.channel_centers[k],
            half_bw_nm: self.half_bw_nm,
            order: self.order,
        }
    }

    /// Index of the channel centred at `center_nm`.
    pub fn index_of(&self, center_nm: f64) -> Option<usize> {
        self.channel_centers
            .iter()
            .position(|c| (c - center_nm).abs() < 1e-9)
    }

    /// Centre of the channel whose passband contains `lambda_nm` best.
    pub fn nearest_channel(&self, lambda_nm: f64) -> f64 {
        *self
            .channel_centers
            .iter()
            .min_by(|a, b| (*a - lambda_nm).abs().partial_cmp(&(*b - lambda_nm).abs()).unwrap())
            .unwrap()
    }
}

/// Per-channel rates `∫ density·T_k dλ` by the trapezoidal rule on the
/// density grid, which must cover 1250–1630 nm.
pub fn bin_spectrum(density: &SpectralDensity, bank: &CwdmBank) -> Result<Vec<f64>> {
    let (lo, hi) = CWDM_COVERAGE_NM;
    let (g_lo, g_hi) = match (density.lambda_nm.first(), density.lambda_nm.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::Argument("empty spectral density".into())),
    };
    if g_lo > lo || g_hi < hi {
        let value = if g_lo > lo { g_lo } else { g_hi };
        return Err(Error::OutOfRange {
            value,
            min: lo,
            max: hi,
            unit: "nm",
        });
    }
    Ok((0..bank.len())
        .into_par_iter()
        .map(|k| {
            let f = bank.channel(k);
            let x = &density.lambda_nm;
            let y: Vec<f64> = x
                .iter()
                .zip(&density.density)
                .map(|(&l, &d)| d * f.transmission(l))
                .collect();
            x.windows(2)
                .zip(y.windows(2))
                .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
                .sum()
        })
        .collect())
}

fn check_efficiencies(rates: &[f64], efficiencies: &[f64], reference: usize) -> Result<()> {
    if rates.len() != efficiencies.len() || reference >= rates.len() {
        return Err(Error::Argument(format!(
            "{} rates, {} efficiencies, reference channel {reference}",
            rates.len(),
            efficiencies.len()
        )));
    }
    if let Some(bad) = efficiencies.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::domain(
            "normalize_channels",
            format!("channel efficiency must be positive, got {bad}"),
        ));
    }
    Ok(())
}

/// Rescales each channel to the reference channel's efficiency:
/// `rate_k · η_ref/η_k`.
pub fn normalize_channels(rates: &[f64], efficiencies: &[f64], reference: usize) -> Result<Vec<f64>> {
    check_efficiencies(rates, efficiencies, reference)?;
    let eref = efficiencies[reference];
    Ok(rates.iter().zip(efficiencies).map(|(r, e)| r * eref / e).collect())
}

/// Inverse of [`normalize_channels`].
pub fn denormalize_channels(rates: &[f64], efficiencies: &[f64], reference: usize) -> Result<Vec<f64>> {
    check_efficiencies(rates, efficiencies, reference)?;
    let eref = efficiencies[reference];
    Ok(rates.iter().zip(efficiencies).map(|(r, e)| r * e / eref).collect())
}

/// Per-channel SFWM, Raman and total rates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelHistogram {
    pub channel_center_nm: Vec<f64>,
    pub total_rate: Vec<f64>,
    pub sfwm_rate: Vec<f64>,
    pub raman_rate: Vec<f64>,
}

impl ChannelHistogram {
    /// Bins both series into `bank`; `raman_weight` scales the Raman series
    /// relative to the SFWM one before they are added.
    pub fn from_spectra(
        sfwm: &SpectralDensity,
        raman: &SpectralDensity,
        raman_weight: f64,
        bank: &CwdmBank,
    ) -> Result<Self> {
        let s = bin_spectrum(sfwm, bank)?;
        let r: Vec<f64> = bin_spectrum(raman, bank)?
            .into_iter()
            .map(|v| v * raman_weight)
            .collect();
        Ok(ChannelHistogram {
            channel_center_nm: bank.centers().to_vec(),
            total_rate: s.iter().zip(&r).map(|(a, b)| a + b).collect(),
            sfwm_rate: s,
            raman_rate: r,
        })
    }

    /// Channel centre where `series` peaks.
    pub fn peak_channel(&self, series: &[f64]) -> f64 {
        let k = series
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(k, _)| k)
            .unwrap_or(0);
        self.channel_center_nm[k]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "channel_center_nm,total_rate,sfwm_rate,raman_rate")?;
        for k in 0..self.channel_center_nm.len() {
            writeln!(
                w,
                "{},{},{},{}",
                self.channel_center_nm[k], self.total_rate[k], self.sfwm_rate[k], self.raman_rate[k]
            )?;
        }
        Ok(())
    }
}
