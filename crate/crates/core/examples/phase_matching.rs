//! Phase-matched signal and idler wavelengths versus pump wavelength.

use mnf_sfwm::sfwm::{PhaseMatcher, PumpSpec};

fn main() -> mnf_sfwm::Result<()> {
    let d = 0.9;
    let pump = PumpSpec::default();
    let matcher = PhaseMatcher::new(d)?;

    println!("d = {d} um, peak pump power {:.1} W", pump.peak_power_w());
    println!("pump_nm  signal_nm  idler_nm");
    for row in matcher.curve(940.0, 1130.0, 10.0, &pump)? {
        match row.points.first() {
            Some(p) => println!("{:<7}  {:<9.1}  {:.1}", row.lambda_p_nm, p.lambda_s_nm, p.lambda_i_nm),
            None => println!("{:<7}  -          -", row.lambda_p_nm),
        }
    }

    // self-phase modulation adds a modulation-instability root next to the
    // pump and nudges the far-detuned one
    let spm = PumpSpec {
        spm_enabled: true,
        avg_power_w: 9e-3,
        ..pump
    };
    for (label, p) in [("SPM off", &pump), ("SPM on, 9 mW", &spm)] {
        let roots: Vec<String> = matcher
            .solve(1031.8, p)?
            .iter()
            .map(|r| format!("{:.2}", r.lambda_s_nm))
            .collect();
        println!("\n{label}: signal roots at 1031.8 nm pump: {}", roots.join(", "));
    }
    Ok(())
}
