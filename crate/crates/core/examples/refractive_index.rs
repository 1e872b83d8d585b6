//! Fused-silica index and the Bessel functions behind the HE11 equation.

use mnf_sfwm::material_optics::{bessel_j, bessel_k, IndexModel};

fn main() -> mnf_sfwm::Result<()> {
    let silica = IndexModel::silica();
    println!("lambda_um  n");
    for l in [0.5, 0.8, 1.0, 1.31, 1.55, 1.7] {
        println!("{l:<9}  {:.6}", silica.refractive_index(l)?);
    }

    println!("\nx     J0        J1        K0        K1");
    for x in [0.5, 1.0, 2.405, 5.0] {
        println!(
            "{x:<5} {:+.6} {:+.6} {:.6} {:.6}",
            bessel_j(0, x)?,
            bessel_j(1, x)?,
            bessel_k(0, x)?,
            bessel_k(1, x)?
        );
    }

    // outside the fitted range the model refuses to extrapolate
    match silica.refractive_index(2.5) {
        Err(e) => println!("\n2.5 um: {e}"),
        Ok(n) => println!("\n2.5 um: {n}"),
    }
    Ok(())
}
