//! Signal spectrum of a uniform wire and of one with random diameter
//! fluctuations.

use mnf_sfwm::sfwm::{
    random_diameter_profile, signal_spectrum, spectral_fwhm, wavelength_grid, FiberProfile,
    PumpSpec, DEFAULT_CORRELATION_LENGTH_M,
};

fn main() -> mnf_sfwm::Result<()> {
    let (d, length) = (0.9, 0.15);
    let grid = wavelength_grid(1300.0, 1700.0, 0.1);

    let mono = PumpSpec {
        fwhm_nm: 0.0,
        ..PumpSpec::default()
    };
    let uniform = FiberProfile::homogeneous(length, d)?;
    for (label, pump) in [("monochromatic pump", mono), ("1.5 nm pump", PumpSpec::default())] {
        let w = spectral_fwhm(&signal_spectrum(&uniform, &pump, &grid)?)?;
        println!("uniform wire, {label}: FWHM {:.2} nm at {:.1} nm", w.width_nm, w.peak_nm);
    }

    for seed in 1..=4 {
        let profile =
            random_diameter_profile(d, 0.01, 50, DEFAULT_CORRELATION_LENGTH_M, length, seed)?;
        let s = signal_spectrum(&profile, &PumpSpec::default(), &grid)?;
        let w = spectral_fwhm(&s)?;
        println!(
            "1% diameter noise, seed {seed}: FWHM {:.1} nm{}",
            w.width_nm,
            if w.lower_bound { " (lower bound)" } else { "" }
        );
    }
    Ok(())
}
