//! Spontaneous four-wave mixing: energy conservation, phase mismatch,
//! phase-matching curves and signal-photon spectra for homogeneous and
//! segmented (diameter-inhomogeneous) wires.

use std::collections::HashMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::um_to_omega;
use crate::error::{Error, Result};
use crate::interp::bisect;
use crate::mode_solver::{solve_he11, FiberCrossSection, PropagationTable};

/// Upper end of the signal-wavelength scan, nm.
pub const SIGNAL_SCAN_MAX_NM: f64 = 1700.0;
/// Pump tuning range accepted without warning, nm.
pub const PUMP_TUNING_NM: (f64, f64) = (1031.0, 1051.0);
/// Pump range of the phase-matching curves accepted without warning, nm.
pub const CURVE_PUMP_RANGE_NM: (f64, f64) = (850.0, 1150.0);

/// Default correlation length of random diameter profiles, m.
pub const DEFAULT_CORRELATION_LENGTH_M: f64 = 0.003;

const SCAN_STEP_NM: f64 = 0.5;
const SCAN_START_OFFSET_NM: f64 = 0.1;
const ROOT_TOL_NM: f64 = 1e-6;
const PUMP_SAMPLES: usize = 41;
const PUMP_SPAN_FWHM: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpSpec {
    pub lambda_nm: f64,
    pub fwhm_nm: f64,
    pub rep_rate_hz: f64,
    pub pulse_s: f64,
    pub avg_power_w: f64,
    pub gamma_per_w_m: f64,
    pub spm_enabled: bool,
}

impl Default for PumpSpec {
    fn default() -> Self {
        PumpSpec {
            lambda_nm: 1031.8,
            fwhm_nm: 1.5,
            rep_rate_hz: 62.56e6,
            pulse_s: 250e-15,
            avg_power_w: 1e-3,
            gamma_per_w_m: 0.1,
            spm_enabled: false,
        }
    }
}

impl PumpSpec {
    pub fn at(lambda_nm: f64) -> Self {
        PumpSpec {
            lambda_nm,
            ..Default::default()
        }
    }

    /// Rectangular-pulse peak power `P_a / (f_rep τ)`, W.
    pub fn peak_power_w(&self) -> f64 {
        self.avg_power_w / (self.rep_rate_hz * self.pulse_s)
    }

    /// Self-phase-modulation term `2γP_p` in rad/m, zero when disabled.
    pub fn spm_term(&self) -> f64 {
        if self.spm_enabled {
            2.0 * self.gamma_per_w_m * self.peak_power_w()
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda_nm", self.lambda_nm),
            ("rep_rate_hz", self.rep_rate_hz),
            ("pulse_s", self.pulse_s),
            ("avg_power_w", self.avg_power_w),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Argument(format!("pump {name} must be positive, got {v}")));
            }
        }
        if !(self.fwhm_nm >= 0.0) || !(self.gamma_per_w_m >= 0.0) {
            return Err(Error::Argument(
                "pump fwhm_nm and gamma_per_w_m must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Soft warning when the centre wavelength leaves the tunable range.
    pub fn tuning_warning(&self) -> Option<String> {
        let (lo, hi) = PUMP_TUNING_NM;
        (self.lambda_nm < lo || self.lambda_nm > hi).then(|| {
            format!(
                "pump wavelength {} nm outside tuning range [{lo}, {hi}] nm",
                self.lambda_nm
            )
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub length_m: f64,
    pub diameter_um: f64,
}

/// Piecewise-uniform diameter profile along the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberProfile {
    segments: Vec<Segment>,
}

impl FiberProfile {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Argument("fiber profile needs at least one segment".into()));
        }
        for s in &segments {
            if !(s.length_m > 0.0) || !(s.diameter_um > 0.0) {
                return Err(Error::Argument(format!(
                    "segment lengths and diameters must be positive, got {s:?}"
                )));
            }
        }
        Ok(FiberProfile { segments })
    }

    pub fn homogeneous(length_m: f64, diameter_um: f64) -> Result<Self> {
        Self::new(vec![Segment {
            length_m,
            diameter_um,
        }])
    }

    /// Same wire cut into `n` equal pieces; physically identical.
    pub fn split(&self, n: usize) -> Self {
        let segments = self
            .segments
            .iter()
            .flat_map(|s| {
                std::iter::repeat(Segment {
                    length_m: s.length_m / n as f64,
                    diameter_um: s.diameter_um,
                })
                .take(n)
            })
            .collect();
        FiberProfile { segments }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_length_m(&self) -> f64 {
        self.segments.iter().map(|s| s.length_m).sum()
    }

    /// Reads a two-column `length_m,diameter_um` CSV (header required).
    pub fn from_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut segments = Vec::new();
        for rec in rdr.deserialize::<Segment>() {
            segments.push(rec.map_err(|e| Error::Argument(format!("profile file: {e}")))?);
        }
        Self::new(segments)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseMatchPoint {
    pub lambda_p_nm: f64,
    pub lambda_s_nm: f64,
    pub lambda_i_nm: f64,
    pub residual_rad_per_m: f64,
}

impl PhaseMatchPoint {
    /// Relative violation of `2/λp = 1/λs + 1/λi`.
    pub fn energy_residual(&self) -> f64 {
        let lhs = 2.0 / self.lambda_p_nm;
        (lhs - 1.0 / self.lambda_s_nm - 1.0 / self.lambda_i_nm).abs() / lhs
    }
}

/// Photon spectral rate on an ascending wavelength grid (nm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    pub lambda_nm: Vec<f64>,
    pub density: Vec<f64>,
}

impl SpectralDensity {
    pub fn new(lambda_nm: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if lambda_nm.len() != density.len() {
            return Err(Error::Argument(format!(
                "grid has {} points but density has {}",
                lambda_nm.len(),
                density.len()
            )));
        }
        if lambda_nm.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument("spectral grid must be strictly ascending".into()));
        }
        if density.iter().any(|&d| !(d >= 0.0)) {
            return Err(Error::Argument("spectral density must be non-negative".into()));
        }
        Ok(SpectralDensity { lambda_nm, density })
    }

    pub fn len(&self) -> usize {
        self.lambda_nm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda_nm.is_empty()
    }

    /// Index and wavelength of the global maximum.
    pub fn peak(&self) -> Option<(usize, f64)> {
        self.density
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
                Some((_, b)) if b >= v => best,
                _ => Some((i, v)),
            })
            .map(|(i, _)| (i, self.lambda_nm[i]))
    }

    /// Trapezoidal integral over the grid.
    pub fn integral(&self) -> f64 {
        self.lambda_nm
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SpectralDensity {
            lambda_nm: self.lambda_nm.clone(),
            density: self.density.iter().map(|d| d * factor).collect(),
        }
    }

    /// Rescales so the maximum is 1; all-zero densities are left unchanged.
    pub fn normalized(mut self) -> Self {
        let max = self.density.iter().cloned().fold(0.0, f64::max);
        if max > 0.0 {
            self.density.iter_mut().for_each(|d| *d /= max);
        }
        self
    }

    /// Pointwise sum of two densities on the same grid.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.lambda_nm != other.lambda_nm {
            return Err(Error::Argument("spectra are on different grids".into()));
        }
        Ok(SpectralDensity {
            lambda_nm: self.lambda_nm.clone(),
            density: self
                .density
                .iter()
                .zip(&other.density)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// CSV with header `lambda_nm,density_rel`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "lambda_nm,density_rel")?;
        for (l, d) in self.lambda_nm.iter().zip(&self.density) {
            writeln!(w, "{l},{d}")?;
        }
        Ok(())
    }
}

/// Idler wavelength fixed by energy conservation, `1/(2/λp − 1/λs)`.
pub fn energy_conserving_idler(lambda_p_nm: f64, lambda_s_nm: f64) -> Result<f64> {
    let inv = 2.0 / lambda_p_nm - 1.0 / lambda_s_nm;
    if !(lambda_p_nm > 0.0 && lambda_s_nm > 0.0) || !(inv > 0.0) {
        return Err(Error::domain(
            "energy_conserving_idler",
            format!("no positive idler frequency for pump {lambda_p_nm} nm, signal {lambda_s_nm} nm"),
        ));
    }
    Ok(1.0 / inv)
}

/// Source of propagation constants for one cross-section.
pub trait PropagationModel: Sync {
    /// β in rad/m at a vacuum wavelength in nm.
    fn beta_per_m(&self, lambda_nm: f64) -> Result<f64>;
}

/// Direct HE11 solve at every call.
#[derive(Debug, Clone, Copy)]
pub struct ExactHe11(pub FiberCrossSection);

impl PropagationModel for ExactHe11 {
    fn beta_per_m(&self, lambda_nm: f64) -> Result<f64> {
        Ok(solve_he11(&self.0, lambda_nm * 1e-3)?.beta * 1e6)
    }
}

impl PropagationModel for PropagationTable {
    fn beta_per_m(&self, lambda_nm: f64) -> Result<f64> {
        Ok(self.beta(lambda_nm * 1e-3)? * 1e6)
    }
}

/// `Δκ = 2β(λp) − β(λs) − β(λi) − 2γP_p` in rad/m with any propagation model.
pub fn phase_mismatch_with<M: PropagationModel + ?Sized>(
    model: &M,
    lambda_p_nm: f64,
    lambda_s_nm: f64,
    pump: &PumpSpec,
) -> Result<f64> {
    let lambda_i_nm = energy_conserving_idler(lambda_p_nm, lambda_s_nm)?;
    Ok(2.0 * model.beta_per_m(lambda_p_nm)?
        - model.beta_per_m(lambda_s_nm)?
        - model.beta_per_m(lambda_i_nm)?
        - pump.spm_term())
}

/// Phase mismatch of a silica wire in air of diameter `diameter_um`, using
/// exact mode solves.
pub fn phase_mismatch(
    diameter_um: f64,
    lambda_p_nm: f64,
    lambda_s_nm: f64,
    pump: &PumpSpec,
) -> Result<f64> {
    let model = ExactHe11(FiberCrossSection::silica_in_air(diameter_um)?);
    phase_mismatch_with(&model, lambda_p_nm, lambda_s_nm, pump)
}

/// Phase-matching solver bound to one tabulated cross-section.
#[derive(Debug, Clone)]
pub struct PhaseMatcher {
    table: PropagationTable,
}

/// Phase-matched points for one pump wavelength; empty when no sideband exists.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub lambda_p_nm: f64,
    pub points: Vec<PhaseMatchPoint>,
}

impl PhaseMatcher {
    pub fn new(diameter_um: f64) -> Result<Self> {
        let cs = FiberCrossSection::silica_in_air(diameter_um)?;
        Ok(PhaseMatcher {
            table: PropagationTable::full_range(&cs)?,
        })
    }

    pub fn from_table(table: PropagationTable) -> Self {
        PhaseMatcher { table }
    }

    pub fn table(&self) -> &PropagationTable {
        &self.table
    }

    pub fn mismatch(&self, lambda_p_nm: f64, lambda_s_nm: f64, pump: &PumpSpec) -> Result<f64> {
        phase_mismatch_with(&self.table, lambda_p_nm, lambda_s_nm, pump)
    }

    /// Non-degenerate roots of Δκ for `λs ∈ (λp, 1700 nm]`, refined by bisection.
    pub fn solve(&self, lambda_p_nm: f64, pump: &PumpSpec) -> Result<Vec<PhaseMatchPoint>> {
        let (t_lo, t_hi) = self.table.lambda_range_um();
        if !(lambda_p_nm * 1e-3 >= t_lo && lambda_p_nm * 1e-3 <= t_hi) {
            return Err(Error::OutOfRange {
                value: lambda_p_nm,
                min: t_lo * 1e3,
                max: t_hi * 1e3,
                unit: "nm",
            });
        }
        let idler_min_nm = t_lo * 1e3;
        let signal_max_nm = SIGNAL_SCAN_MAX_NM.min(t_hi * 1e3);
        let beta_p = self.table.beta_per_m(lambda_p_nm)?;
        let spm = pump.spm_term();
        let dk = |ls: f64| -> Result<f64> {
            let li = energy_conserving_idler(lambda_p_nm, ls)?;
            Ok(2.0 * beta_p - self.table.beta_per_m(ls)? - self.table.beta_per_m(li)? - spm)
        };

        let mut roots = Vec::new();
        let mut ls = lambda_p_nm + SCAN_START_OFFSET_NM;
        let mut prev: Option<(f64, f64)> = None;
        while ls <= signal_max_nm {
            let li = energy_conserving_idler(lambda_p_nm, ls).ok();
            match li {
                Some(li) if li >= idler_min_nm => {}
                _ => break,
            }
            let f = dk(ls)?;
            if let Some((lp, fp)) = prev {
                if fp == 0.0 {
                    roots.push(lp);
                } else if fp.signum() != f.signum() && f != 0.0 {
                    roots.push(bisect(&dk, lp, ls, fp, ROOT_TOL_NM)?);
                }
            }
            prev = Some((ls, f));
            ls += SCAN_STEP_NM;
        }
        roots
            .into_iter()
            .map(|ls| {
                Ok(PhaseMatchPoint {
                    lambda_p_nm,
                    lambda_s_nm: ls,
                    lambda_i_nm: energy_conserving_idler(lambda_p_nm, ls)?,
                    residual_rad_per_m: dk(ls)?,
                })
            })
            .collect()
    }

    /// Pump sweep from `min` to `max` (inclusive) in `step` increments.
    pub fn curve(
        &self,
        lambda_p_min_nm: f64,
        lambda_p_max_nm: f64,
        step_nm: f64,
        pump: &PumpSpec,
    ) -> Result<Vec<CurveRow>> {
        if !(step_nm > 0.0) || !(lambda_p_min_nm < lambda_p_max_nm) {
            return Err(Error::Argument(format!(
                "pump sweep needs min < max and step > 0, got [{lambda_p_min_nm}, {lambda_p_max_nm}] step {step_nm}"
            )));
        }
        let n = ((lambda_p_max_nm - lambda_p_min_nm) / step_nm + 1e-9).floor() as usize + 1;
        (0..n)
            .into_par_iter()
            .map(|k| {
                let lp = lambda_p_min_nm + k as f64 * step_nm;
                Ok(CurveRow {
                    lambda_p_nm: lp,
                    points: self.solve(lp, pump)?,
                })
            })
            .collect()
    }
}

/// Phase-matched signal/idler pairs of a silica wire for one pump wavelength.
pub fn solve_phase_matching(
    diameter_um: f64,
    lambda_p_nm: f64,
    pump: &PumpSpec,
) -> Result<Vec<PhaseMatchPoint>> {
    PhaseMatcher::new(diameter_um)?.solve(lambda_p_nm, pump)
}

/// Phase-matching curve over a pump sweep; rows with no solution stay empty.
pub fn phase_matching_curve(
    diameter_um: f64,
    lambda_p_min_nm: f64,
    lambda_p_max_nm: f64,
    step_nm: f64,
    pump: &PumpSpec,
) -> Result<Vec<CurveRow>> {
    PhaseMatcher::new(diameter_um)?.curve(lambda_p_min_nm, lambda_p_max_nm, step_nm, pump)
}

/// Warning text when a curve leaves the 850–1150 nm pump window.
pub fn curve_range_warning(lambda_p_min_nm: f64, lambda_p_max_nm: f64) -> Option<String> {
    let (lo, hi) = CURVE_PUMP_RANGE_NM;
    (lambda_p_min_nm < lo || lambda_p_max_nm > hi).then(|| {
        format!("pump sweep [{lambda_p_min_nm}, {lambda_p_max_nm}] nm leaves [{lo}, {hi}] nm")
    })
}

/// CSV rows `lambda_p_nm,lambda_s_nm,lambda_i_nm,residual_rad_per_m`; pumps
/// without a solution are written with `none` in the solution columns.
pub fn write_curve_csv<W: Write>(rows: &[CurveRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "lambda_p_nm,lambda_s_nm,lambda_i_nm,residual_rad_per_m")?;
    for row in rows {
        if row.points.is_empty() {
            writeln!(w, "{},none,none,none", row.lambda_p_nm)?;
        }
        for p in &row.points {
            writeln!(
                w,
                "{},{},{},{}",
                p.lambda_p_nm, p.lambda_s_nm, p.lambda_i_nm, p.residual_rad_per_m
            )?;
        }
    }
    Ok(())
}

/// Coherent sum `Σ_j L_j sinc(Δκ_j L_j/2) exp(i[Φ_j + Δκ_j L_j/2])` over
/// `(length m, Δκ rad/m)` pieces, with `Φ_j` the phase accumulated before
/// piece `j`. Returns (re, im) in metres.
pub fn coherent_amplitude(pieces: &[(f64, f64)]) -> (f64, f64) {
    let mut re = 0.0;
    let mut im = 0.0;
    let mut phi = 0.0;
    for &(len, dk) in pieces {
        let half = 0.5 * dk * len;
        let sinc = if half.abs() < 1e-8 {
            1.0 - half * half / 6.0
        } else {
            half.sin() / half
        };
        let mag = len * sinc;
        let arg = phi + half;
        re += mag * arg.cos();
        im += mag * arg.sin();
        phi += dk * len;
    }
    (re, im)
}

/// Pump sample wavelengths and Gaussian intensity weights (normalised to sum 1).
fn pump_samples(pump: &PumpSpec) -> Vec<(f64, f64)> {
    if pump.fwhm_nm <= 0.0 {
        return vec![(pump.lambda_nm, 1.0)];
    }
    let span = PUMP_SPAN_FWHM * pump.fwhm_nm;
    let raw: Vec<(f64, f64)> = (0..PUMP_SAMPLES)
        .map(|k| {
            let x = -span + 2.0 * span * k as f64 / (PUMP_SAMPLES - 1) as f64;
            let w = (-4.0 * std::f64::consts::LN_2 * (x / pump.fwhm_nm).powi(2)).exp();
            (pump.lambda_nm + x, w)
        })
        .collect();
    let total: f64 = raw.iter().map(|p| p.1).sum();
    raw.into_iter().map(|(l, w)| (l, w / total)).collect()
}

/// Propagation tables for each distinct diameter, covering `[lo_um, hi_um]`
/// with node spacing no coarser than the 512-node full-range table.
fn tables_for(
    profile: &FiberProfile,
    lo_um: f64,
    hi_um: f64,
) -> Result<HashMap<u64, PropagationTable>> {
    let mut diameters: Vec<f64> = profile.segments.iter().map(|s| s.diameter_um).collect();
    diameters.sort_by(|a, b| a.partial_cmp(b).unwrap());
    diameters.dedup();
    let probe = FiberCrossSection::silica_in_air(diameters[0])?;
    let (m_lo, m_hi) = probe.core.valid_range_um();
    let lo = (lo_um * 0.995).max(m_lo);
    let hi = (hi_um * 1.005).min(m_hi);
    let full_span = um_to_omega(m_lo) - um_to_omega(m_hi);
    let span = um_to_omega(lo) - um_to_omega(hi);
    let nodes = ((span / full_span * 511.0).ceil() as usize + 1).max(16);
    diameters
        .par_iter()
        .map(|&d| {
            let cs = FiberCrossSection::silica_in_air(d)?;
            Ok((d.to_bits(), PropagationTable::build(&cs, lo, hi, nodes)?))
        })
        .collect()
}

/// Relative signal-photon spectral density (unit peak) of a segmented wire.
///
/// With a finite pump bandwidth the monochromatic response is averaged over a
/// discretised Gaussian pump spectrum, both pump photons taken at the same
/// frequency.
pub fn signal_spectrum(
    profile: &FiberProfile,
    pump: &PumpSpec,
    lambda_s_grid_nm: &[f64],
) -> Result<SpectralDensity> {
    if lambda_s_grid_nm.is_empty() {
        return Err(Error::Argument("signal grid is empty".into()));
    }
    pump.validate()?;
    let samples = pump_samples(pump);
    let (g_lo, g_hi) = lambda_s_grid_nm
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let p_lo = samples.first().unwrap().0;
    let p_hi = samples.last().unwrap().0;
    // idler extremes over the grid and pump band
    let mut l_lo = g_lo.min(p_lo);
    let mut l_hi = g_hi.max(p_hi);
    for &(lp, _) in &samples {
        for &ls in &[g_lo, g_hi] {
            if let Ok(li) = energy_conserving_idler(lp, ls) {
                l_lo = l_lo.min(li);
                l_hi = l_hi.max(li);
            }
        }
    }
    let tables = tables_for(profile, l_lo * 1e-3, l_hi * 1e-3)?;
    let seg_tables: Vec<(&PropagationTable, f64)> = profile
        .segments
        .iter()
        .map(|s| (&tables[&s.diameter_um.to_bits()], s.length_m))
        .collect();
    let spm = pump.spm_term();

    // 2β(λp) per (pump sample, segment)
    let beta_p: Vec<Vec<f64>> = samples
        .iter()
        .map(|&(lp, _)| {
            seg_tables
                .iter()
                .map(|(t, _)| t.beta_per_m(lp))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let density = lambda_s_grid_nm
        .par_iter()
        .map(|&ls| {
            let mut acc = 0.0;
            let mut pieces = Vec::with_capacity(seg_tables.len());
            for (k, &(lp, w)) in samples.iter().enumerate() {
                let li = match energy_conserving_idler(lp, ls) {
                    Ok(li) => li,
                    Err(_) => continue,
                };
                pieces.clear();
                for (j, (t, len)) in seg_tables.iter().enumerate() {
                    let dk = 2.0 * beta_p[k][j] - t.beta_per_m(ls)? - t.beta_per_m(li)? - spm;
                    pieces.push((*len, dk));
                }
                let (re, im) = coherent_amplitude(&pieces);
                acc += w * (re * re + im * im);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut grid = lambda_s_grid_nm.to_vec();
    let mut density = density;
    if grid.windows(2).any(|w| w[1] < w[0]) {
        let mut idx: Vec<usize> = (0..grid.len()).collect();
        idx.sort_by(|&a, &b| grid[a].partial_cmp(&grid[b]).unwrap());
        grid = idx.iter().map(|&i| lambda_s_grid_nm[i]).collect();
        density = idx.iter().map(|&i| density[i]).collect();
    }
    Ok(SpectralDensity::new(grid, density)?.normalized())
}

/// Idler-band density obtained from the signal band through energy
/// conservation, including the `λs²/λi²` per-nm Jacobian.
pub fn idler_spectrum(signal: &SpectralDensity, lambda_p_nm: f64) -> Result<SpectralDensity> {
    let mut pairs = signal
        .lambda_nm
        .iter()
        .zip(&signal.density)
        .map(|(&ls, &d)| {
            let li = energy_conserving_idler(lambda_p_nm, ls)?;
            Ok((li, d * (ls * ls) / (li * li)))
        })
        .collect::<Result<Vec<_>>>()?;
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let (l, d) = pairs.into_iter().unzip();
    SpectralDensity::new(l, d)
}

/// Diameter profile whose fractional deviations follow a stationary
/// first-order autoregressive process with standard deviation
/// `relative_sigma` and correlation length `correlation_length_m`.
pub fn random_diameter_profile(
    d_mean_um: f64,
    relative_sigma: f64,
    n_segments: usize,
    correlation_length_m: f64,
    total_length_m: f64,
    seed: u64,
) -> Result<FiberProfile> {
    if !(0.0..=0.05).contains(&relative_sigma) {
        return Err(Error::Argument(format!(
            "relative_sigma must lie in [0, 0.05], got {relative_sigma}"
        )));
    }
    if n_segments == 0 || !(total_length_m > 0.0) || !(d_mean_um > 0.0) {
        return Err(Error::Argument(
            "need n_segments >= 1, positive length and diameter".into(),
        ));
    }
    if !(correlation_length_m >= 0.0) {
        return Err(Error::Argument("correlation length must be >= 0".into()));
    }
    let dz = total_length_m / n_segments as f64;
    let rho = if correlation_length_m > 0.0 {
        (-dz / correlation_length_m).exp()
    } else {
        0.0
    };
    let innov = (1.0 - rho * rho).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: f64 = StandardNormal.sample(&mut rng);
    let mut segments = Vec::with_capacity(n_segments);
    for k in 0..n_segments {
        if k > 0 {
            let xi: f64 = StandardNormal.sample(&mut rng);
            x = rho * x + innov * xi;
        }
        segments.push(Segment {
            length_m: dz,
            diameter_um: d_mean_um * (1.0 + relative_sigma * x),
        });
    }
    FiberProfile::new(segments)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fwhm {
    pub width_nm: f64,
    pub peak_nm: f64,
    /// Set when a half-maximum crossing is missing on either side; the
    /// width is then measured to the grid edge and is only a lower bound.
    pub lower_bound: bool,
}

/// Full width at half maximum around the global peak, with linear
/// interpolation of the crossings.
pub fn spectral_fwhm(density: &SpectralDensity) -> Result<Fwhm> {
    if density.len() < 2 {
        return Err(Error::Argument("density needs at least two points".into()));
    }
    let (ip, peak_nm) = density.peak().unwrap();
    let ymax = density.density[ip];
    let ymin = density.density.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(ymax > 0.0) || ymax == ymin {
        return Err(Error::Argument("density is flat or zero".into()));
    }
    let half = 0.5 * ymax;
    let (x, y) = (&density.lambda_nm, &density.density);
    let mut lower_bound = false;

    let mut i = ip;
    while i > 0 && y[i - 1] > half {
        i -= 1;
    }
    let left = if i == 0 {
        lower_bound = true;
        x[0]
    } else {
        let (x0, x1, y0, y1) = (x[i - 1], x[i], y[i - 1], y[i]);
        x0 + (half - y0) * (x1 - x0) / (y1 - y0)
    };

    let mut j = ip;
    let n = y.len();
    while j + 1 < n && y[j + 1] > half {
        j += 1;
    }
    let right = if j + 1 == n {
        lower_bound = true;
        x[n - 1]
    } else {
        let (x0, x1, y0, y1) = (x[j], x[j + 1], y[j], y[j + 1]);
        x0 + (half - y0) * (x1 - x0) / (y1 - y0)
    };
    Ok(Fwhm {
        width_nm: right - left,
        peak_nm,
        lower_bound,
    })
}

/// Diameter (µm) of a silica wire whose phase matching pairs `lambda_s_nm`
/// with `lambda_p_nm`: the root of Δκ(d) inside `[d_lo_um, d_hi_um]`.
pub fn infer_diameter(
    lambda_p_nm: f64,
    lambda_s_nm: f64,
    pump: &PumpSpec,
    d_lo_um: f64,
    d_hi_um: f64,
) -> Result<f64> {
    let f = |d: f64| phase_mismatch(d, lambda_p_nm, lambda_s_nm, pump);
    let n = 40;
    let mut prev_d = d_lo_um;
    let mut prev_f = f(prev_d)?;
    for k in 1..=n {
        let d = d_lo_um + (d_hi_um - d_lo_um) * k as f64 / n as f64;
        let fd = f(d)?;
        if prev_f.signum() != fd.signum() {
            return bisect(f, prev_d, d, prev_f, 1e-9);
        }
        prev_d = d;
        prev_f = fd;
    }
    Err(Error::Numerical(format!(
        "no diameter in [{d_lo_um}, {d_hi_um}] um phase-matches {lambda_s_nm} nm at pump {lambda_p_nm} nm"
    )))
}

/// Wavelength grid from `lo` to `hi` nm with spacing `step` (inclusive ends).
pub fn wavelength_grid(lo_nm: f64, hi_nm: f64, step_nm: f64) -> Vec<f64> {
    let n = ((hi_nm - lo_nm) / step_nm + 1e-9).floor() as usize + 1;
    (0..n).map(|k| lo_nm + k as f64 * step_nm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn mono(lambda_nm: f64) -> PumpSpec {
        PumpSpec {
            lambda_nm,
            fwhm_nm: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn idler_from_energy_conservation() {
        let li = energy_conserving_idler(1031.8, 1310.0).unwrap();
        assert_relative_eq!(2.0 / 1031.8, 1.0 / 1310.0 + 1.0 / li, max_relative = 1e-14);
        assert!(li < 1031.8);
        assert!(energy_conserving_idler(1000.0, 400.0).is_err());
        assert!(energy_conserving_idler(-1.0, 1300.0).is_err());
    }

    #[test]
    fn single_piece_is_sinc() {
        for &(len, dk) in &[(0.15, 0.0), (0.15, 20.0), (0.01, -350.0), (1.0, 1e-9)] {
            let (re, im) = coherent_amplitude(&[(len, dk)]);
            let x = 0.5 * dk * len;
            let sinc = if x == 0.0 { 1.0 } else { x.sin() / x };
            assert_relative_eq!(re * re + im * im, (len * sinc).powi(2), max_relative = 1e-12, epsilon = 1e-20);
        }
    }

    proptest! {
        #[test]
        fn splitting_is_exact(len in 0.01f64..1.0, dk in -500.0f64..500.0, n in 1usize..40) {
            let (r1, i1) = coherent_amplitude(&[(len, dk)]);
            let pieces = vec![(len / n as f64, dk); n];
            let (rn, in_) = coherent_amplitude(&pieces);
            prop_assert!(((r1 * r1 + i1 * i1) - (rn * rn + in_ * in_)).abs() < 1e-10);
        }

        #[test]
        fn idler_closes_energy_balance(lp in 850.0f64..1150.0, ds in 0.5f64..600.0) {
            let ls = lp + ds;
            let li = energy_conserving_idler(lp, ls).unwrap();
            let r = (2.0 / lp - 1.0 / ls - 1.0 / li).abs() * lp / 2.0;
            prop_assert!(r < 1e-12);
        }
    }

    #[test]
    fn phase_matching_at_design_diameter() {
        let m = PhaseMatcher::new(0.9).unwrap();
        let pts = m.solve(1031.8, &mono(1031.8)).unwrap();
        assert_eq!(pts.len(), 1, "{pts:?}");
        let p = pts[0];
        assert!((p.lambda_s_nm - 1494.3).abs() < 1.0, "{p:?}");
        assert!(p.energy_residual() < 1e-12);
        assert!(p.residual_rad_per_m.abs() < 1e-2);
        let exact = phase_mismatch(0.9, p.lambda_p_nm, p.lambda_s_nm, &mono(1031.8)).unwrap();
        assert!(exact.abs() < 0.5, "exact residual {exact}");
    }

    #[test]
    fn signal_moves_blue_as_pump_moves_red() {
        let m = PhaseMatcher::new(0.9).unwrap();
        let rows = m.curve(1031.0, 1051.0, 5.0, &mono(1031.0)).unwrap();
        let ls: Vec<f64> = rows.iter().map(|r| r.points[0].lambda_s_nm).collect();
        assert!(ls.windows(2).all(|w| w[1] < w[0]), "{ls:?}");
    }

    #[test]
    fn no_solution_is_empty_not_error() {
        // pump deep in normal dispersion of a thick wire
        let m = PhaseMatcher::new(2.5).unwrap();
        let pts = m.solve(1100.0, &mono(1100.0)).unwrap();
        assert!(pts.iter().all(|p| p.lambda_s_nm > 1100.0));
        let m = PhaseMatcher::new(0.9).unwrap();
        assert!(m.solve(2500.0, &mono(2500.0)).is_err());
    }

    #[test]
    fn spm_shifts_the_root() {
        let m = PhaseMatcher::new(0.9).unwrap();
        let mut pump = mono(1031.8);
        let off = m.solve(1031.8, &pump).unwrap()[0].lambda_s_nm;
        pump.spm_enabled = true;
        pump.avg_power_w = 0.05;
        let on = m.solve(1031.8, &pump).unwrap()[0].lambda_s_nm;
        assert!((on - off).abs() > 1e-3);
    }

    #[test]
    fn peak_sits_on_the_root() {
        let pump = mono(1031.8);
        let root = solve_phase_matching(0.9, 1031.8, &pump).unwrap()[0].lambda_s_nm;
        let grid = wavelength_grid(1480.0, 1510.0, 0.05);
        let prof = FiberProfile::homogeneous(0.15, 0.9).unwrap();
        let s = signal_spectrum(&prof, &pump, &grid).unwrap();
        let (_, peak) = s.peak().unwrap();
        assert!((peak - root).abs() <= 0.05 + 1e-9, "{peak} vs {root}");
        assert_relative_eq!(s.density.iter().cloned().fold(0.0, f64::max), 1.0);
    }

    #[test]
    fn homogeneous_spectrum_matches_sinc_squared() {
        let pump = mono(1031.8);
        let prof = FiberProfile::homogeneous(0.15, 0.9).unwrap();
        let grid = wavelength_grid(1490.0, 1499.0, 0.25);
        let s = signal_spectrum(&prof, &pump, &grid).unwrap();
        let raw: Vec<f64> = grid
            .iter()
            .map(|&ls| {
                let dk = phase_mismatch(0.9, 1031.8, ls, &pump).unwrap();
                let x = 0.5 * dk * 0.15;
                (0.15 * if x == 0.0 { 1.0 } else { x.sin() / x }).powi(2)
            })
            .collect();
        let max = raw.iter().cloned().fold(0.0, f64::max);
        for (a, b) in s.density.iter().zip(&raw) {
            // tabulated vs direct β differ by ~1e-3 rad/m
            assert!((a - b / max).abs() < 1e-4, "{a} vs {}", b / max);
        }
    }

    #[test]
    fn split_profile_gives_same_spectrum() {
        let pump = mono(1031.8);
        let one = FiberProfile::homogeneous(0.15, 0.9).unwrap();
        let ten = one.split(10);
        assert_eq!(ten.segments().len(), 10);
        let grid = wavelength_grid(1485.0, 1505.0, 0.5);
        let a = signal_spectrum(&one, &pump, &grid).unwrap();
        let b = signal_spectrum(&ten, &pump, &grid).unwrap();
        for (x, y) in a.density.iter().zip(&b.density) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn pump_bandwidth_broadens() {
        let prof = FiberProfile::homogeneous(0.15, 0.9).unwrap();
        let grid = wavelength_grid(1470.0, 1520.0, 0.05);
        let narrow = signal_spectrum(&prof, &mono(1031.8), &grid).unwrap();
        let wide = signal_spectrum(&prof, &PumpSpec::at(1031.8), &grid).unwrap();
        let fn_ = spectral_fwhm(&narrow).unwrap().width_nm;
        let fw = spectral_fwhm(&wide).unwrap().width_nm;
        assert!(fw > 3.0 * fn_, "{fn_} {fw}");
    }

    #[test]
    fn idler_band_jacobian() {
        let s = SpectralDensity::new(vec![1300.0, 1310.0, 1320.0], vec![0.5, 1.0, 0.5]).unwrap();
        let i = idler_spectrum(&s, 1031.8).unwrap();
        assert!(i.lambda_nm.windows(2).all(|w| w[1] > w[0]));
        let li = energy_conserving_idler(1031.8, 1310.0).unwrap();
        assert_relative_eq!(i.density[1], 1310.0f64.powi(2) / li.powi(2), max_relative = 1e-12);
    }

    #[test]
    fn ar1_profile_properties() {
        let a = random_diameter_profile(0.9, 0.01, 2000, 0.01, 1.0, 7).unwrap();
        let b = random_diameter_profile(0.9, 0.01, 2000, 0.01, 1.0, 7).unwrap();
        assert_eq!(a, b);
        let c = random_diameter_profile(0.9, 0.01, 2000, 0.01, 1.0, 8).unwrap();
        assert_ne!(a, c);
        let x: Vec<f64> = a.segments().iter().map(|s| s.diameter_um / 0.9 - 1.0).collect();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!((var.sqrt() - 0.01).abs() < 0.003, "{}", var.sqrt());
        let lag1 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / (n - 1.0) / var;
        let rho = (-0.0005f64 / 0.01).exp();
        assert!((lag1 - rho).abs() < 0.05, "{lag1} vs {rho}");
        assert_relative_eq!(a.total_length_m(), 1.0, max_relative = 1e-12);

        let flat = random_diameter_profile(0.9, 0.0, 5, 0.03, 0.15, 1).unwrap();
        assert!(flat.segments().iter().all(|s| s.diameter_um == 0.9));
        assert!(random_diameter_profile(0.9, 0.06, 5, 0.03, 0.15, 1).is_err());
        assert!(random_diameter_profile(0.9, 0.01, 0, 0.03, 0.15, 1).is_err());
    }

    #[test]
    fn fwhm_of_gaussian_and_edges() {
        let x = wavelength_grid(1280.0, 1340.0, 0.01);
        let w = 7.0;
        let y: Vec<f64> = x
            .iter()
            .map(|l| (-4.0 * std::f64::consts::LN_2 * ((l - 1310.0) / w).powi(2)).exp())
            .collect();
        let f = spectral_fwhm(&SpectralDensity::new(x.clone(), y).unwrap()).unwrap();
        assert!((f.width_nm - w).abs() < 1e-4);
        assert!(!f.lower_bound);
        let y: Vec<f64> = x.iter().map(|l| (l - 1270.0) / 70.0).collect();
        let f = spectral_fwhm(&SpectralDensity::new(x, y).unwrap()).unwrap();
        assert!(f.lower_bound);
    }

    #[test]
    fn density_validation() {
        assert!(SpectralDensity::new(vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(SpectralDensity::new(vec![2.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(SpectralDensity::new(vec![1.0, 2.0], vec![1.0, -1.0]).is_err());
        let s = SpectralDensity::new(vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 1.0]).unwrap();
        assert_relative_eq!(s.integral(), 2.0);
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().starts_with("lambda_nm,density_rel\n0,1\n"));
    }

    #[test]
    fn profile_csv_round_trip() {
        let p = FiberProfile::from_csv("length_m,diameter_um\n0.05,0.9\n0.1, 0.91\n".as_bytes()).unwrap();
        assert_eq!(p.segments().len(), 2);
        assert_relative_eq!(p.total_length_m(), 0.15, max_relative = 1e-12);
        assert!(FiberProfile::from_csv("length_m,diameter_um\n0.05,-1\n".as_bytes()).is_err());
        assert!(FiberProfile::from_csv("length_m,diameter_um\n".as_bytes()).is_err());
    }

    #[test]
    fn diameter_inversion() {
        let pump = mono(1031.8);
        let d = infer_diameter(1031.8, 1310.0, &pump, 0.8, 0.95).unwrap();
        assert!((d - 0.865).abs() < 0.01, "{d}");
        let ls = solve_phase_matching(d, 1031.8, &pump).unwrap()[0].lambda_s_nm;
        assert!((ls - 1310.0).abs() < 0.5, "{ls}");
    }
}
