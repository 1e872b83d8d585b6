//! Group-velocity dispersion of the fundamental mode from tabulated
//! propagation constants, and location of the zero-GVD wavelengths.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::constants::{omega_to_um, um_to_omega, C};
use crate::error::{Error, Result};
use crate::interp::{bisect, cubic_at, linspace};
use crate::material_optics::IndexModel;
use crate::mode_solver::{solve_he11, FiberCrossSection};

pub const MIN_POINTS: usize = 64;
pub const DEFAULT_POINTS: usize = 512;
pub const DEFAULT_RANGE_UM: (f64, f64) = (0.5, 1.7);

// sign flips of D where both neighbours sit below this are roundoff, not roots
const D_NOISE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionProfile {
    /// Ascending wavelengths, µm.
    pub lambda_um: Vec<f64>,
    pub n_eff: Vec<f64>,
    /// rad/µm
    pub beta: Vec<f64>,
    /// ps/km
    pub beta1: Vec<f64>,
    /// ps²/km
    pub beta2: Vec<f64>,
    /// ps/(nm·km)
    pub d: Vec<f64>,
    /// µm, ascending
    pub zero_gvd_um: Vec<f64>,
}

fn check_grid(lambda_min_um: f64, lambda_max_um: f64, n_points: usize) -> Result<()> {
    if !(lambda_min_um < lambda_max_um) {
        return Err(Error::Argument(format!(
            "lambda_min ({lambda_min_um}) must be below lambda_max ({lambda_max_um})"
        )));
    }
    if n_points < MIN_POINTS {
        return Err(Error::Argument(format!(
            "dispersion grid needs at least {MIN_POINTS} points, got {n_points}"
        )));
    }
    Ok(())
}

/// Wavelength nodes (ascending) of a grid uniform in angular frequency.
fn omega_grid(lambda_min_um: f64, lambda_max_um: f64, n_points: usize) -> (Vec<f64>, f64) {
    let w = linspace(um_to_omega(lambda_min_um), um_to_omega(lambda_max_um), n_points);
    let h = w[0] - w[1];
    let mut l: Vec<f64> = w.iter().map(|&x| omega_to_um(x)).collect();
    // pin the ends exactly to the requested bounds
    l[0] = lambda_min_um;
    l[n_points - 1] = lambda_max_um;
    (l, h)
}

/// Profile of the HE11 mode of `cs` over `[lambda_min_um, lambda_max_um]`.
pub fn build_dispersion_profile(
    cs: &FiberCrossSection,
    lambda_min_um: f64,
    lambda_max_um: f64,
    n_points: usize,
) -> Result<DispersionProfile> {
    check_grid(lambda_min_um, lambda_max_um, n_points)?;
    let (lambdas, h) = omega_grid(lambda_min_um, lambda_max_um, n_points);
    let n_eff = lambdas
        .par_iter()
        .map(|&l| solve_he11(cs, l).map(|m| m.n_eff))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(lambdas, n_eff, h))
}

/// Plane-wave limit of an unbounded medium: `β = 2π n(λ)/λ`.
pub fn build_bulk_profile(
    material: &IndexModel,
    lambda_min_um: f64,
    lambda_max_um: f64,
    n_points: usize,
) -> Result<DispersionProfile> {
    check_grid(lambda_min_um, lambda_max_um, n_points)?;
    let (lambdas, h) = omega_grid(lambda_min_um, lambda_max_um, n_points);
    let n_eff = lambdas
        .iter()
        .map(|&l| material.refractive_index(l))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(lambdas, n_eff, h))
}

fn assemble(lambda_um: Vec<f64>, n_eff: Vec<f64>, h_omega: f64) -> DispersionProfile {
    let n = lambda_um.len();
    let beta: Vec<f64> = lambda_um
        .iter()
        .zip(&n_eff)
        .map(|(&l, &ne)| 2.0 * PI * ne / l)
        .collect();

    // lambda ascending => omega descending with spacing -h; differentiate in
    // increasing omega by walking the arrays backwards.
    let b: Vec<f64> = beta.iter().rev().map(|x| x * 1e6).collect(); // rad/m
    let mut b1 = vec![0.0; n];
    let mut b2 = vec![0.0; n];
    for i in 1..n - 1 {
        b1[i] = (b[i + 1] - b[i - 1]) / (2.0 * h_omega);
        b2[i] = (b[i + 1] - 2.0 * b[i] + b[i - 1]) / (h_omega * h_omega);
    }
    b1[0] = (-3.0 * b[0] + 4.0 * b[1] - b[2]) / (2.0 * h_omega);
    b1[n - 1] = (3.0 * b[n - 1] - 4.0 * b[n - 2] + b[n - 3]) / (2.0 * h_omega);
    b2[0] = (2.0 * b[0] - 5.0 * b[1] + 4.0 * b[2] - b[3]) / (h_omega * h_omega);
    b2[n - 1] =
        (2.0 * b[n - 1] - 5.0 * b[n - 2] + 4.0 * b[n - 3] - b[n - 4]) / (h_omega * h_omega);
    b1.reverse();
    b2.reverse();

    let beta1: Vec<f64> = b1.iter().map(|x| x * 1e15).collect();
    let beta2: Vec<f64> = b2.iter().map(|x| x * 1e27).collect();
    let d: Vec<f64> = lambda_um
        .iter()
        .zip(&beta2)
        .map(|(&l, &b2)| d_from_beta2(l, b2))
        .collect();

    let mut profile = DispersionProfile {
        lambda_um,
        n_eff,
        beta,
        beta1,
        beta2,
        d,
        zero_gvd_um: Vec::new(),
    };
    profile.zero_gvd_um = find_zero_gvd(&profile);
    profile
}

/// `D = −(2πc/λ²)·β₂` with λ in µm, β₂ in ps²/km, D in ps/(nm·km).
pub fn d_from_beta2(lambda_um: f64, beta2_ps2_per_km: f64) -> f64 {
    let l = lambda_um * 1e-6;
    -(2.0 * PI * C / (l * l)) * (beta2_ps2_per_km * 1e-27) * 1e6
}

fn find_zero_gvd(p: &DispersionProfile) -> Vec<f64> {
    let mut roots = Vec::new();
    for i in 0..p.d.len() - 1 {
        let (a, b) = (p.d[i], p.d[i + 1]);
        if a.abs().max(b.abs()) < D_NOISE_FLOOR {
            continue;
        }
        if a == 0.0 {
            roots.push(p.lambda_um[i]);
            continue;
        }
        if a.signum() != b.signum() && b != 0.0 {
            let f = |l: f64| -> Result<f64> { Ok(cubic_at(&p.lambda_um, &p.d, l)) };
            if let Ok(r) = bisect(f, p.lambda_um[i], p.lambda_um[i + 1], a, 1e-10) {
                roots.push(r);
            }
        }
    }
    if let Some(&last) = p.d.last() {
        if last == 0.0 {
            roots.push(*p.lambda_um.last().unwrap());
        }
    }
    roots
}

/// Dispersion parameter D (ps/(nm·km)) at `lambda_um` by local cubic
/// interpolation of the tabulated values.
pub fn gvd_at(profile: &DispersionProfile, lambda_um: f64) -> Result<f64> {
    let lo = profile.lambda_um[0];
    let hi = *profile.lambda_um.last().unwrap();
    if !(lambda_um >= lo && lambda_um <= hi) {
        return Err(Error::OutOfRange {
            value: lambda_um,
            min: lo,
            max: hi,
            unit: "um",
        });
    }
    Ok(cubic_at(&profile.lambda_um, &profile.d, lambda_um))
}

impl DispersionProfile {
    /// CSV with header
    /// `lambda_um,n_eff,beta_rad_per_um,beta2_ps2_per_km,D_ps_per_nm_km`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "lambda_um,n_eff,beta_rad_per_um,beta2_ps2_per_km,D_ps_per_nm_km")?;
        for i in 0..self.lambda_um.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.lambda_um[i], self.n_eff[i], self.beta[i], self.beta2[i], self.d[i]
            )?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lambda_um.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda_um.is_empty()
    }
}
