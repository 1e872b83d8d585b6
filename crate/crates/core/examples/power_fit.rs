//! Split a singles-versus-power scan into linear (Raman) and quadratic
//! (pair) parts.

use mnf_sfwm::noise_stats::{fit_power_scan, Sigma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> mnf_sfwm::Result<()> {
    let (s1, s2) = (208.5, 69.5);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let points: Vec<(f64, f64)> = (1..=9)
        .map(|p| {
            let p = p as f64;
            let n = s1 * p + s2 * p * p;
            let noise: f64 = rng.sample(StandardNormal);
            (p, n * (1.0 + 0.01 * noise))
        })
        .collect();
    let sigmas = points.iter().map(|&(p, _)| 0.01 * (s1 * p + s2 * p * p)).collect();

    let fit = fit_power_scan(&points, &Sigma::PerPoint(sigmas))?;
    println!("s1 = {:.1} +- {:.1} Hz/mW   (true {s1})", fit.s1, fit.stderr_s1());
    println!("s2 = {:.2} +- {:.2} Hz/mW^2 (true {s2})", fit.s2, fit.stderr_s2());
    let report = fit.report_json(&[1.0, 9.0]);
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(())
}
