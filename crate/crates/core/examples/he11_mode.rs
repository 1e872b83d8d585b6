//! Effective index of the fundamental mode of a silica wire in air.

use mnf_sfwm::mode_solver::{solve_he11, v_number, FiberCrossSection};

fn main() -> mnf_sfwm::Result<()> {
    let lambda_um = 1.0318;
    println!("d_um   V       n_eff     U        W");
    for d in [0.5, 0.7, 0.9, 1.2, 2.0] {
        let cs = FiberCrossSection::silica_in_air(d)?;
        let m = solve_he11(&cs, lambda_um)?;
        println!(
            "{d:<5}  {:.4}  {:.6}  {:.5}  {:.5}",
            v_number(&cs, lambda_um)?,
            m.n_eff,
            m.u,
            m.w
        );
    }
    Ok(())
}
