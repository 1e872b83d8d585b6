//! Raman noise spectrum, analytic counting rates and CAR, power-scan fits
//! and production-rate bookkeeping.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::constants::{nm_to_thz, H, K_B};
use crate::error::{Error, Result};
use crate::sfwm::SpectralDensity;

/// First-order silica Raman gain against detuning (THz), unit peak at 13.2 THz.
pub const SILICA_RAMAN_GAIN: [(f64, f64); 40] = [
    (1.0, 0.0687),
    (2.0, 0.1430),
    (3.0, 0.2088),
    (4.0, 0.2671),
    (5.0, 0.3259),
    (6.0, 0.3976),
    (7.0, 0.4831),
    (8.0, 0.5770),
    (9.0, 0.6765),
    (10.0, 0.7774),
    (11.0, 0.8721),
    (12.0, 0.9524),
    (13.2, 1.0000),
    (14.0, 0.9689),
    (15.0, 0.8470),
    (16.0, 0.6268),
    (17.0, 0.3904),
    (18.0, 0.2425),
    (19.0, 0.1950),
    (20.0, 0.1198),
    (21.0, 0.0854),
    (22.0, 0.0737),
    (23.0, 0.0675),
    (24.0, 0.0780),
    (25.0, 0.0930),
    (26.0, 0.0847),
    (27.0, 0.0595),
    (28.0, 0.0419),
    (29.0, 0.0366),
    (30.0, 0.0331),
    (31.0, 0.0304),
    (32.0, 0.0328),
    (33.0, 0.0397),
    (34.0, 0.0419),
    (35.0, 0.0363),
    (36.0, 0.0316),
    (37.0, 0.0309),
    (38.0, 0.0303),
    (39.0, 0.0269),
    (40.0, 0.0211),
];

pub const DEFAULT_CASCADE_ORDERS: usize = 5;
pub const DEFAULT_CASCADE_DECAY: f64 = 0.3;
pub const ROOM_TEMPERATURE_K: f64 = 300.0;

/// Phonon occupation `1/(exp(hν/k_BT) − 1)` for a detuning in THz.
pub fn bose_factor(detuning_thz: f64, temperature_k: f64) -> Result<f64> {
    if !(detuning_thz > 0.0) || !(temperature_k > 0.0) {
        return Err(Error::domain(
            "bose_factor",
            format!("detuning and temperature must be positive, got {detuning_thz} THz, {temperature_k} K"),
        ));
    }
    let x = H * detuning_thz * 1e12 / (K_B * temperature_k);
    Ok(1.0 / x.exp_m1())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamanModel {
    gain_table: Vec<(f64, f64)>,
    cascade_amplitudes: Vec<f64>,
    temperature_k: f64,
}

impl RamanModel {
    pub fn new(
        gain_table: Vec<(f64, f64)>,
        cascade_amplitudes: Vec<f64>,
        temperature_k: f64,
    ) -> Result<Self> {
        if gain_table.is_empty() {
            return Err(Error::Argument("Raman gain table is empty".into()));
        }
        if gain_table[0].0 <= 0.0 || gain_table.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Argument(
                "Raman detunings must be positive and ascending".into(),
            ));
        }
        if gain_table.iter().any(|g| !(g.1 >= 0.0)) {
            return Err(Error::Argument("Raman gains must be non-negative".into()));
        }
        if cascade_amplitudes.first() != Some(&1.0)
            || cascade_amplitudes.iter().any(|w| !(*w >= 0.0))
        {
            return Err(Error::Argument(
                "cascade weights must be non-negative with order-1 weight 1".into(),
            ));
        }
        if !(temperature_k >= 0.0) {
            return Err(Error::Argument("temperature must be >= 0 K".into()));
        }
        Ok(RamanModel {
            gain_table,
            cascade_amplitudes,
            temperature_k,
        })
    }

    /// Built-in silica table, five orders with weights 0.3^(n−1), 300 K.
    pub fn silica() -> Self {
        let cascade = (0..DEFAULT_CASCADE_ORDERS)
            .map(|n| DEFAULT_CASCADE_DECAY.powi(n as i32))
            .collect();
        RamanModel {
            gain_table: SILICA_RAMAN_GAIN.to_vec(),
            cascade_amplitudes: cascade,
            temperature_k: ROOM_TEMPERATURE_K,
        }
    }

    pub fn with_temperature(mut self, temperature_k: f64) -> Result<Self> {
        if !(temperature_k >= 0.0) {
            return Err(Error::Argument("temperature must be >= 0 K".into()));
        }
        self.temperature_k = temperature_k;
        Ok(self)
    }

    pub fn with_cascade(self, cascade_amplitudes: Vec<f64>) -> Result<Self> {
        Self::new(self.gain_table, cascade_amplitudes, self.temperature_k)
    }

    pub fn gain_table(&self) -> &[(f64, f64)] {
        &self.gain_table
    }

    pub fn cascade_amplitudes(&self) -> &[f64] {
        &self.cascade_amplitudes
    }

    pub fn temperature_k(&self) -> f64 {
        self.temperature_k
    }

    /// First-order gain by linear interpolation; zero at zero detuning and
    /// beyond the last node.
    pub fn gain(&self, detuning_thz: f64) -> f64 {
        let nu = detuning_thz.abs();
        let t = &self.gain_table;
        let last = t[t.len() - 1];
        if nu >= last.0 {
            return if nu == last.0 { last.1 } else { 0.0 };
        }
        let k = t.partition_point(|p| p.0 <= nu);
        let (x0, y0) = if k == 0 { (0.0, 0.0) } else { t[k - 1] };
        let (x1, y1) = t[k];
        y0 + (y1 - y0) * (nu - x0) / (x1 - x0)
    }

    fn occupation(&self, nu: f64) -> f64 {
        if self.temperature_k == 0.0 {
            0.0
        } else {
            bose_factor(nu, self.temperature_k).unwrap_or(0.0)
        }
    }

    /// Density of cascade order `order` (1-based) at signed detuning
    /// `ν_p − ν` (positive on the Stokes side), before normalisation.
    pub fn order_density(&self, order: usize, detuning_thz: f64) -> f64 {
        let nu = detuning_thz.abs();
        if order == 0 || order > self.cascade_amplitudes.len() || nu == 0.0 {
            return 0.0;
        }
        let w = self.cascade_amplitudes[order - 1];
        let g = self.gain(nu / order as f64);
        let n_th = self.occupation(nu);
        let pop = if detuning_thz > 0.0 { n_th + 1.0 } else { n_th };
        w * g * pop
    }

    /// Peak of the first-order Stokes density, used as the normalisation.
    fn first_order_peak(&self) -> f64 {
        let top = self.gain_table.last().unwrap().0;
        let n = 20_000;
        let mut best = self
            .gain_table
            .iter()
            .map(|&(nu, _)| self.order_density(1, nu))
            .fold(0.0, f64::max);
        for k in 1..=n {
            best = best.max(self.order_density(1, top * k as f64 / n as f64));
        }
        best
    }
}

/// Raman density on a wavelength grid split by cascade order; the total is
/// the sum of the components.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RamanSpectrum {
    pub total: SpectralDensity,
    pub orders: Vec<SpectralDensity>,
}

/// Raman spectrum with each cascade order kept separately, normalised to the
/// unit first-order Stokes peak.
pub fn raman_spectrum(model: &RamanModel, lambda_p_nm: f64, grid_nm: &[f64]) -> Result<RamanSpectrum> {
    if !(lambda_p_nm > 0.0) {
        return Err(Error::Argument(format!("pump wavelength must be positive, got {lambda_p_nm}")));
    }
    if grid_nm.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::Argument("wavelength grid must be positive".into()));
    }
    let norm = model.first_order_peak();
    let nu_p = nm_to_thz(lambda_p_nm);
    let detunings: Vec<f64> = grid_nm.iter().map(|&l| nu_p - nm_to_thz(l)).collect();
    let orders = (1..=model.cascade_amplitudes.len())
        .map(|n| {
            let d = detunings
                .iter()
                .map(|&dn| {
                    let v = model.order_density(n, dn);
                    if norm > 0.0 { v / norm } else { v }
                })
                .collect();
            SpectralDensity::new(grid_nm.to_vec(), d)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = vec![0.0; grid_nm.len()];
    for o in &orders {
        total.iter_mut().zip(&o.density).for_each(|(t, v)| *t += v);
    }
    Ok(RamanSpectrum {
        total: SpectralDensity::new(grid_nm.to_vec(), total)?,
        orders,
    })
}

/// Total Raman density (all cascade orders), unit first-order Stokes peak.
pub fn raman_spectral_density(
    model: &RamanModel,
    lambda_p_nm: f64,
    grid_nm: &[f64],
) -> Result<SpectralDensity> {
    Ok(raman_spectrum(model, lambda_p_nm, grid_nm)?.total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountingModel {
    pub mu_pair: f64,
    pub mu_raman_s: f64,
    pub mu_raman_i: f64,
    pub eta_s: f64,
    pub eta_i: f64,
    pub dark_s: f64,
    pub dark_i: f64,
    pub rep_rate_hz: f64,
    pub gate_divisor: u32,
}

impl CountingModel {
    /// Low-power operating point: 0.0005 pairs and 0.002 signal photons per pulse.
    pub fn low_power() -> Self {
        CountingModel {
            mu_pair: 0.0005,
            mu_raman_s: 0.0015,
            mu_raman_i: 0.0,
            eta_s: 0.02,
            eta_i: 0.10,
            dark_s: 0.0,
            dark_i: 0.0,
            rep_rate_hz: 62.56e6,
            gate_divisor: 9,
        }
    }

    /// High-power operating point: 0.03 pairs and 0.06 signal photons per pulse.
    pub fn high_power() -> Self {
        CountingModel {
            mu_pair: 0.03,
            mu_raman_s: 0.03,
            ..Self::low_power()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let means = [
            ("mu_pair", self.mu_pair),
            ("mu_raman_s", self.mu_raman_s),
            ("mu_raman_i", self.mu_raman_i),
            ("dark_s", self.dark_s),
            ("dark_i", self.dark_i),
        ];
        for (name, v) in means {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Argument(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [("eta_s", self.eta_s), ("eta_i", self.eta_i)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Argument(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.rep_rate_hz > 0.0) || self.gate_divisor == 0 {
            return Err(Error::Argument(
                "rep_rate_hz must be positive and gate_divisor >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Per-pulse click probability of the signal detector.
    pub fn p_signal(&self) -> f64 {
        -(-(self.mu_pair + self.mu_raman_s) * self.eta_s - self.dark_s).exp_m1()
    }

    /// Per-pulse click probability of the idler detector.
    pub fn p_idler(&self) -> f64 {
        -(-(self.mu_pair + self.mu_raman_i) * self.eta_i - self.dark_i).exp_m1()
    }

    /// Same model with pair and noise means multiplied by `x`.
    pub fn scaled(&self, x: f64) -> Self {
        CountingModel {
            mu_pair: self.mu_pair * x,
            mu_raman_s: self.mu_raman_s * x,
            mu_raman_i: self.mu_raman_i * x,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticRates {
    pub singles_s: f64,
    pub singles_i: f64,
    pub coincidence: f64,
    pub accidental: f64,
}

/// Singles, coincidence and adjacent-pulse accidental rates in Hz.
pub fn analytic_rates(model: &CountingModel) -> Result<AnalyticRates> {
    model.validate()?;
    let ps = model.p_signal();
    let pi = model.p_idler();
    let acc = ps * pi;
    let coinc = model.mu_pair * model.eta_s * model.eta_i + acc;
    Ok(AnalyticRates {
        singles_s: ps * model.rep_rate_hz / model.gate_divisor as f64,
        singles_i: pi * model.rep_rate_hz,
        coincidence: coinc * model.rep_rate_hz,
        accidental: acc * model.rep_rate_hz,
    })
}

/// Coincidence-to-accidental ratio `C/A` (C includes the accidental floor).
pub fn car_analytic(model: &CountingModel) -> Result<f64> {
    let r = analytic_rates(model)?;
    if r.accidental <= 0.0 {
        return Err(Error::UndefinedCar);
    }
    Ok(r.coincidence / r.accidental)
}

/// Per-point uncertainties for [`fit_power_scan`].
#[derive(Debug, Clone, PartialEq)]
pub enum Sigma {
    /// `σ = sqrt(N t)/t`, floored at one count, for counting time `t` seconds.
    Poisson { counting_time_s: f64 },
    PerPoint(Vec<f64>),
}

impl Default for Sigma {
    fn default() -> Self {
        Sigma::Poisson { counting_time_s: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerScanFit {
    /// Hz/mW
    pub s1: f64,
    /// Hz/mW²
    pub s2: f64,
    /// Covariance of the unconstrained `(s1, s2)` estimate.
    pub cov: [[f64; 2]; 2],
}

impl PowerScanFit {
    /// Linear share `s1 P/(s1 P + s2 P²)` at power `p_mw`.
    pub fn raman_fraction(&self, p_mw: f64) -> f64 {
        let lin = self.s1 * p_mw;
        let total = lin + self.s2 * p_mw * p_mw;
        if total > 0.0 { lin / total } else { 0.0 }
    }

    pub fn stderr_s1(&self) -> f64 {
        self.cov[0][0].sqrt()
    }

    pub fn stderr_s2(&self) -> f64 {
        self.cov[1][1].sqrt()
    }

    /// `{s1, s2, cov, raman_fraction_at: {P: fraction}}`.
    pub fn report_json(&self, powers_mw: &[f64]) -> serde_json::Value {
        let at: BTreeMap<String, f64> = powers_mw
            .iter()
            .map(|&p| (format!("{p}"), self.raman_fraction(p)))
            .collect();
        serde_json::json!({
            "s1": self.s1,
            "s2": self.s2,
            "cov": self.cov,
            "raman_fraction_at": at,
        })
    }
}

/// Weighted least squares for `N = s1 P + s2 P²` with `s1, s2 ≥ 0`.
pub fn fit_power_scan(points: &[(f64, f64)], sigma: &Sigma) -> Result<PowerScanFit> {
    let sig: Vec<f64> = match sigma {
        Sigma::Poisson { counting_time_s: t } => {
            if !(*t > 0.0) {
                return Err(Error::Argument("counting time must be positive".into()));
            }
            points.iter().map(|&(_, n)| (n * t).sqrt().max(1.0) / t).collect()
        }
        Sigma::PerPoint(s) => {
            if s.len() != points.len() {
                return Err(Error::Argument(format!(
                    "{} sigmas for {} points",
                    s.len(),
                    points.len()
                )));
            }
            s.clone()
        }
    };
    if sig.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Argument("uncertainties must be positive".into()));
    }
    if points.iter().any(|&(p, n)| !(n >= 0.0) || !p.is_finite()) {
        return Err(Error::Argument("counts must be non-negative and powers finite".into()));
    }
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 distinct powers, got {}",
            distinct.len()
        )));
    }

    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&(p, n), s) in points.iter().zip(&sig) {
        let w = 1.0 / (s * s);
        a11 += w * p * p;
        a12 += w * p * p * p;
        a22 += w * p * p * p * p;
        b1 += w * p * n;
        b2 += w * p * p * n;
    }
    let det = a11 * a22 - a12 * a12;
    if !(det > 1e-12 * a11 * a22) {
        return Err(Error::Fit("rank-deficient power scan".into()));
    }
    let cov = [[a22 / det, -a12 / det], [-a12 / det, a11 / det]];
    let chi2 = |s1: f64, s2: f64| -> f64 {
        points
            .iter()
            .zip(&sig)
            .map(|(&(p, n), s)| ((n - s1 * p - s2 * p * p) / s).powi(2))
            .sum()
    };
    let unconstrained = ((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det);
    let candidates = [
        unconstrained,
        (0.0, (b2 / a22).max(0.0)),
        ((b1 / a11).max(0.0), 0.0),
        (0.0, 0.0),
    ];
    let (s1, s2) = candidates
        .into_iter()
        .filter(|&(a, b)| a >= 0.0 && b >= 0.0)
        .min_by(|x, y| chi2(x.0, x.1).partial_cmp(&chi2(y.0, y.1)).unwrap())
        .unwrap();
    Ok(PowerScanFit { s1, s2, cov })
}

#[derive(Debug, Deserialize)]
struct ScanRow {
    #[serde(rename = "power_mW")]
    power_mw: f64,
    #[serde(rename = "counts_Hz")]
    counts_hz: f64,
    #[serde(rename = "sigma_Hz", default)]
    sigma_hz: Option<f64>,
}

/// Reads `power_mW,counts_Hz[,sigma_Hz]`. Sigmas are returned only when every
/// row carries one.
pub fn read_power_scan_csv<R: Read>(reader: R) -> Result<(Vec<(f64, f64)>, Option<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut points = Vec::new();
    let mut sigmas = Vec::new();
    for rec in rdr.deserialize::<ScanRow>() {
        let row = rec.map_err(|e| Error::Argument(format!("power scan: {e}")))?;
        points.push((row.power_mw, row.counts_hz));
        sigmas.push(row.sigma_hz);
    }
    let sigmas = if !sigmas.is_empty() && sigmas.iter().all(Option::is_some) {
        Some(sigmas.into_iter().map(Option::unwrap).collect())
    } else {
        None
    };
    Ok((points, sigmas))
}

/// Photons per pulse from a counting rate: `rate/(gate_rate η)`.
pub fn deduce_production_rate(counting_rate_hz: f64, gate_rate_hz: f64, eta: f64) -> Result<f64> {
    if !(eta > 0.0) || !(gate_rate_hz > 0.0) {
        return Err(Error::domain(
            "deduce_production_rate",
            format!("efficiency and gate rate must be positive, got {eta}, {gate_rate_hz} Hz"),
        ));
    }
    Ok(counting_rate_hz / (gate_rate_hz * eta))
}

/// Product of stage efficiencies, each in [0, 1].
pub fn efficiency_chain(stages: &[f64]) -> Result<f64> {
    if let Some(bad) = stages.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::domain(
            "efficiency_chain",
            format!("stage efficiency {bad} outside [0, 1]"),
        ));
    }
    Ok(stages.iter().product())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn bose_reference_points() {
        // h*13.2e12/(k_B*300) = 2.1125...
        let x: f64 = 6.62607015e-34 * 13.2e12 / (1.380649e-23 * 300.0);
        assert_relative_eq!(bose_factor(13.2, 300.0).unwrap(), 1.0 / (x.exp() - 1.0), max_relative = 1e-12);
        assert!((bose_factor(13.2, 300.0).unwrap() - 0.1375).abs() < 1e-3);
        assert!(bose_factor(63.0, 300.0).unwrap() < 1e-4);
        assert!(bose_factor(1e4, 300.0).unwrap() < 1e-300);
        assert!(bose_factor(0.0, 300.0).is_err());
        assert!(bose_factor(10.0, -1.0).is_err());
    }

    #[test]
    fn bose_monotonic_on_grid() {
        for ti in 0..=30 {
            let t = 100.0 + 10.0 * ti as f64;
            let mut prev = f64::INFINITY;
            for ni in 0..=99 {
                let nu = 1.0 + ni as f64;
                let n = bose_factor(nu, t).unwrap();
                assert!(n < prev);
                assert!(n < bose_factor(nu, t + 10.0).unwrap());
                prev = n;
            }
        }
    }

    proptest! {
        #[test]
        fn anti_stokes_weight_below_stokes(nu in 0.01f64..200.0, t in 1.0f64..1000.0) {
            let n = bose_factor(nu, t).unwrap();
            prop_assert!(n / (n + 1.0) < 1.0);
        }
    }

    #[test]
    fn idler_band_occupation_asymmetry() {
        let nu = nm_to_thz(851.06) - nm_to_thz(1031.8);
        assert!((nu - 61.7).abs() < 1.5, "{nu}");
        let n63 = bose_factor(63.0, 300.0).unwrap();
        assert!(n63 <= 1e-4 * (n63 + 1.0));
    }

    #[test]
    fn gain_table_shape() {
        let m = RamanModel::silica();
        assert_eq!(m.gain(13.2), 1.0);
        assert_eq!(m.gain(0.0), 0.0);
        assert_eq!(m.gain(45.0), 0.0);
        assert_relative_eq!(m.gain(0.5), 0.5 * 0.0687);
        for k in 0..4000 {
            assert!(m.gain(k as f64 * 0.01) <= 1.0);
        }
    }

    #[test]
    fn model_validation() {
        assert!(RamanModel::new(vec![(2.0, 1.0), (1.0, 1.0)], vec![1.0], 300.0).is_err());
        assert!(RamanModel::new(vec![(1.0, -1.0)], vec![1.0], 300.0).is_err());
        assert!(RamanModel::new(vec![(1.0, 1.0)], vec![0.5], 300.0).is_err());
        assert!(RamanModel::new(vec![(1.0, 1.0)], vec![1.0, -0.1], 300.0).is_err());
        assert!(RamanModel::new(vec![(1.0, 1.0)], vec![1.0], 300.0).is_ok());
    }

    fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        crate::sfwm::wavelength_grid(lo, hi, step)
    }

    #[test]
    fn first_order_stokes_peak_is_unit() {
        let m = RamanModel::silica().with_cascade(vec![1.0]).unwrap();
        let s = raman_spectral_density(&m, 1031.8, &grid(1000.0, 1150.0, 0.01)).unwrap();
        let max = s.density.iter().cloned().fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-3, "{max}");
        let (_, at) = s.peak().unwrap();
        let nu = nm_to_thz(1031.8) - nm_to_thz(at);
        assert!((nu - 13.2).abs() < 0.5, "{nu}");
    }

    #[test]
    fn zero_temperature_kills_anti_stokes() {
        let m = RamanModel::silica().with_temperature(0.0).unwrap();
        let s = raman_spectral_density(&m, 1031.8, &grid(800.0, 1031.0, 0.5)).unwrap();
        assert!(s.density.iter().all(|&d| d == 0.0));
        let s = raman_spectral_density(&m, 1031.8, &grid(1040.0, 1100.0, 0.5)).unwrap();
        assert!(s.density.iter().any(|&d| d > 0.1));
    }

    #[test]
    fn fifth_order_sits_near_1330() {
        let m = RamanModel::silica();
        let r = raman_spectrum(&m, 1031.8, &grid(1250.0, 1630.0, 0.1)).unwrap();
        assert_eq!(r.orders.len(), 5);
        let (_, at) = r.orders[4].peak().unwrap();
        let nu = nm_to_thz(1031.8) - nm_to_thz(at);
        assert!((nu - 66.0).abs() < 1.0, "{nu}");
        assert!((at - 1330.0).abs() < 15.0, "{at}");
        let sum: f64 = r.orders.iter().map(|o| o.density[100]).sum();
        assert_relative_eq!(sum, r.total.density[100], max_relative = 1e-12);
    }

    #[test]
    fn pump_shift_translates_in_frequency() {
        let m = RamanModel::silica();
        let (lp1, lp2) = (1031.8, 1050.3);
        let dnu = nm_to_thz(lp2) - nm_to_thz(lp1);
        let base = grid(1100.0, 1500.0, 5.0);
        let shifted: Vec<f64> = base
            .iter()
            .map(|&l| crate::constants::thz_to_nm(nm_to_thz(l) + dnu))
            .collect();
        let a = raman_spectral_density(&m, lp1, &base).unwrap();
        let b = raman_spectral_density(&m, lp2, &shifted).unwrap();
        for (x, y) in a.density.iter().zip(&b.density) {
            assert!((x - y).abs() < 1e-9 * x.max(1e-3), "{x} {y}");
        }
    }

    #[test]
    fn low_power_point() {
        let m = CountingModel::low_power();
        let r = analytic_rates(&m).unwrap();
        // p_s = 1 - exp(-0.002*0.02), p_i = 1 - exp(-0.0005*0.1)
        let ps = 1.0 - (-4e-5f64).exp();
        let pi = 1.0 - (-5e-5f64).exp();
        assert_relative_eq!(r.accidental, ps * pi * 62.56e6, max_relative = 1e-12);
        assert_relative_eq!(r.coincidence, (1e-6 + ps * pi) * 62.56e6, max_relative = 1e-12);
        assert_relative_eq!(r.singles_s, ps * 62.56e6 / 9.0, max_relative = 1e-12);
        assert_relative_eq!(r.singles_i, pi * 62.56e6, max_relative = 1e-12);
        let car = car_analytic(&m).unwrap();
        assert!((car - 501.0).abs() < 2.0, "{car}");
        assert!((r.coincidence - 62.7).abs() < 0.5);
    }

    #[test]
    fn high_power_point() {
        let car = car_analytic(&CountingModel::high_power()).unwrap();
        assert!((car - 17.7).abs() < 0.3, "{car}");
    }

    #[test]
    fn rate_limits() {
        let mut m = CountingModel::low_power();
        m.mu_pair = 0.0;
        m.mu_raman_i = 0.001;
        let r = analytic_rates(&m).unwrap();
        assert_eq!(r.coincidence, r.accidental);
        let mut m = CountingModel::low_power();
        m.eta_s = 0.0;
        let r = analytic_rates(&m).unwrap();
        assert_eq!((r.singles_s, r.coincidence, r.accidental), (0.0, 0.0, 0.0));
        assert!(matches!(car_analytic(&m), Err(Error::UndefinedCar)));
        m.eta_s = 1.5;
        assert!(analytic_rates(&m).is_err());
    }

    #[test]
    fn car_falls_with_scale() {
        let base = CountingModel::low_power();
        let mut prev = f64::INFINITY;
        for k in 1..=200 {
            let x = 0.1 * k as f64 / 200.0;
            let car = car_analytic(&base.scaled(x)).unwrap();
            assert!(car < prev);
            prev = car;
        }
    }

    #[test]
    fn exact_quadratic_recovery() {
        let pts: Vec<(f64, f64)> = (1..=10).map(|p| (p as f64, 2.0 * (p * p) as f64)).collect();
        let f = fit_power_scan(&pts, &Sigma::default()).unwrap();
        assert!(f.s1.abs() < 1e-9, "{}", f.s1);
        assert_relative_eq!(f.s2, 2.0, max_relative = 1e-10);
        assert!(f.raman_fraction(9.0) < 1e-9);
    }

    #[test]
    fn negative_coefficient_is_clamped() {
        let pts: Vec<(f64, f64)> = (1..=10)
            .map(|p| {
                let p = p as f64;
                (p, (3.0 * p * p - 2.0 * p).max(0.0))
            })
            .collect();
        let f = fit_power_scan(&pts, &Sigma::PerPoint(vec![1.0; 10])).unwrap();
        assert_eq!(f.s1, 0.0);
        assert!(f.s2 > 0.0);
    }

    #[test]
    fn fit_errors() {
        let same = vec![(2.0, 4.0); 5];
        assert!(matches!(fit_power_scan(&same, &Sigma::default()), Err(Error::Fit(_))));
        let pts = vec![(1.0, 1.0), (2.0, 4.0), (3.0, 9.0)];
        assert!(fit_power_scan(&pts, &Sigma::PerPoint(vec![1.0])).is_err());
        assert!(fit_power_scan(&[(1.0, -1.0), (2.0, 4.0), (3.0, 9.0)], &Sigma::default()).is_err());
    }

    #[test]
    fn covariance_matches_normal_equations() {
        // two-point-per-power design with unit sigma: cov = (XᵀX)⁻¹
        let pts = vec![(1.0, 8.0), (2.0, 22.0), (3.0, 42.0)];
        let f = fit_power_scan(&pts, &Sigma::PerPoint(vec![1.0; 3])).unwrap();
        let (a, b, c) = (14.0, 36.0, 98.0);
        let det = a * c - b * b;
        assert_relative_eq!(f.cov[0][0], c / det, max_relative = 1e-12);
        assert_relative_eq!(f.cov[0][1], -b / det, max_relative = 1e-12);
        assert_relative_eq!(f.s1, 5.0, max_relative = 1e-10);
        assert_relative_eq!(f.s2, 3.0, max_relative = 1e-10);
        let j = f.report_json(&[1.0, 9.0]);
        assert!(j["raman_fraction_at"]["9"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn power_scan_csv() {
        let (p, s) = read_power_scan_csv("power_mW,counts_Hz,sigma_Hz\n1,5,1\n2,20,2\n".as_bytes()).unwrap();
        assert_eq!(p, vec![(1.0, 5.0), (2.0, 20.0)]);
        assert_eq!(s, Some(vec![1.0, 2.0]));
        let (_, s) = read_power_scan_csv("power_mW,counts_Hz\n1,5\n".as_bytes()).unwrap();
        assert_eq!(s, None);
        assert!(read_power_scan_csv("power_mW,counts_Hz\n1,x\n".as_bytes()).is_err());
    }

    #[test]
    fn production_rate_round_trip() {
        assert_relative_eq!(deduce_production_rate(2780.0, 6.95e6, 0.02).unwrap(), 0.02, max_relative = 1e-12);
        let singles = 0.002 * 0.02 * 6.95e6;
        assert_relative_eq!(singles, 278.0, max_relative = 1e-12);
        assert_relative_eq!(deduce_production_rate(singles, 6.95e6, 0.02).unwrap(), 0.002, max_relative = 1e-12);
        assert_eq!(deduce_production_rate(10.0, 5.0, 1.0).unwrap(), 2.0);
        assert!(deduce_production_rate(1.0, 1.0, 0.0).is_err());
        assert!(deduce_production_rate(1.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn efficiency_products() {
        assert_eq!(efficiency_chain(&[]).unwrap(), 1.0);
        assert_eq!(efficiency_chain(&[0.75, 0.0, 0.4]).unwrap(), 0.0);
        let x: f64 = 0.02 / (0.75 * 0.10);
        assert!((x - 0.267).abs() < 1e-3);
        assert_relative_eq!(efficiency_chain(&[0.75, 0.10, x]).unwrap(), 0.02, max_relative = 1e-12);
        assert!(efficiency_chain(&[1.2]).is_err());
    }
}
