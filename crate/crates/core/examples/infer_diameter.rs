//! Wire diameter that places the signal at a chosen wavelength.

use mnf_sfwm::sfwm::{infer_diameter, solve_phase_matching, PumpSpec};

fn main() -> mnf_sfwm::Result<()> {
    let lp = 1031.8;
    let pump = PumpSpec::default();
    for target in [1290.0, 1310.0, 1330.0, 1550.0] {
        let d = infer_diameter(lp, target, &pump, 0.8, 1.0)?;
        let check = solve_phase_matching(d, lp, &pump)?;
        let s = check.first().map(|p| p.lambda_s_nm).unwrap_or(f64::NAN);
        println!("signal {target} nm <- d = {d:.4} um (re-solved: {s:.2} nm)");
    }
    Ok(())
}
