//! Analytic coincidence and accidental rates versus pump power.

use mnf_sfwm::noise_stats::{analytic_rates, car_analytic, CountingModel};

fn main() -> mnf_sfwm::Result<()> {
    let base = CountingModel::low_power();
    println!("P_mW  singles_s_Hz  coinc_Hz  acc_Hz   CAR");
    for p in [1.0, 3.0, 5.0, 7.0, 9.0] {
        // pairs grow with the square of the pump power, Raman photons linearly
        let m = CountingModel {
            mu_pair: base.mu_pair * p * p,
            mu_raman_s: base.mu_raman_s * p,
            ..base
        };
        let r = analytic_rates(&m)?;
        println!(
            "{p:<4}  {:<12.0}  {:<8.1}  {:<7.3}  {:.1}",
            r.singles_s,
            r.coincidence,
            r.accidental,
            car_analytic(&m)?
        );
    }
    println!("\ntabulated 9 mW point: CAR {:.1}", car_analytic(&CountingModel::high_power())?);
    Ok(())
}
