//! Pulse-by-pulse counting simulation compared with the analytic CAR.

use mnf_sfwm::counting_sim::{car_confidence, simulate, SimConfig};
use mnf_sfwm::noise_stats::{car_analytic, CountingModel};

fn main() -> mnf_sfwm::Result<()> {
    for (label, model, pulses) in [
        ("1 mW", CountingModel::low_power(), 10_000_000_000u64),
        ("9 mW", CountingModel::high_power(), 10_000_000),
    ] {
        let cfg = SimConfig::new(model, pulses, 42);
        let r = simulate(&cfg)?;
        let est = car_confidence(&r);
        println!(
            "{label}: {pulses:e} pulses, C = {}, A = {}, CAR = {:.1} +- {:.1} (analytic {:.1})",
            r.coincidences,
            r.accidentals,
            est.car,
            est.stderr.unwrap_or(f64::NAN),
            car_analytic(&model)?
        );
    }

    let mut cfg = SimConfig::new(CountingModel::high_power(), 1_000_000, 7);
    cfg.heralded = true;
    let r = simulate(&cfg)?;
    println!("\nheralded gating: {} gates, {} gated signal clicks", r.gated_pulses, r.gated_singles_s);
    println!("{}", serde_json::to_string_pretty(&r.to_json()).unwrap());
    Ok(())
}
