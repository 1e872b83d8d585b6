//! Dispersion of sub-micron wires and their two zero-GVD wavelengths.
//!
//! `cargo run --example zero_gvd -- 0.9` prints the D curve for one diameter.

use mnf_sfwm::dispersion::{build_dispersion_profile, DEFAULT_POINTS};
use mnf_sfwm::mode_solver::FiberCrossSection;

fn main() -> mnf_sfwm::Result<()> {
    let arg: Option<f64> = std::env::args().nth(1).and_then(|s| s.parse().ok());
    if let Some(d) = arg {
        let cs = FiberCrossSection::silica_in_air(d)?;
        let p = build_dispersion_profile(&cs, 0.5, 1.7, 128)?;
        println!("lambda_um,D_ps_per_nm_km");
        for (l, dv) in p.lambda_um.iter().zip(&p.d) {
            println!("{l:.4},{dv:.2}");
        }
        return Ok(());
    }

    for d in [0.8, 0.85, 0.9, 0.95] {
        let cs = FiberCrossSection::silica_in_air(d)?;
        let p = build_dispersion_profile(&cs, 0.5, 1.7, DEFAULT_POINTS)?;
        let zdw: Vec<String> = p.zero_gvd_um.iter().map(|z| format!("{:.1} nm", z * 1e3)).collect();
        println!("d = {d} um: zero GVD at {}", zdw.join(" and "));
    }
    Ok(())
}
