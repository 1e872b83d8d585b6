//! Physical constants (CODATA 2018, exact SI values where defined).

/// Speed of light in vacuum, m/s.
pub const C: f64 = 299_792_458.0;

/// Planck constant, J·s.
pub const H: f64 = 6.626_070_15e-34;

/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Vacuum wavelength in nm to optical frequency in THz.
pub fn nm_to_thz(lambda_nm: f64) -> f64 {
    C / (lambda_nm * 1e-9) * 1e-12
}

/// Optical frequency in THz to vacuum wavelength in nm.
pub fn thz_to_nm(nu_thz: f64) -> f64 {
    C / (nu_thz * 1e12) * 1e9
}

/// Vacuum wavelength in µm to angular frequency in rad/s.
pub fn um_to_omega(lambda_um: f64) -> f64 {
    2.0 * std::f64::consts::PI * C / (lambda_um * 1e-6)
}

/// Angular frequency in rad/s to vacuum wavelength in µm.
pub fn omega_to_um(omega: f64) -> f64 {
    2.0 * std::f64::consts::PI * C / omega * 1e6
}
