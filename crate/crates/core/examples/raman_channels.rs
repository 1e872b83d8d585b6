//! Raman background and SFWM signal binned into CWDM channels.

use mnf_sfwm::filters::{ChannelHistogram, CwdmBank, CWDM_COVERAGE_NM};
use mnf_sfwm::noise_stats::{raman_spectrum, RamanModel};
use mnf_sfwm::sfwm::{infer_diameter, signal_spectrum, wavelength_grid, FiberProfile, PumpSpec};

fn main() -> mnf_sfwm::Result<()> {
    let bank = CwdmBank::standard();
    let grid = wavelength_grid(CWDM_COVERAGE_NM.0, CWDM_COVERAGE_NM.1, 0.1);
    let d = infer_diameter(1031.8, 1310.0, &PumpSpec::default(), 0.8, 0.95)?;
    let fiber = FiberProfile::homogeneous(0.15, d)?;
    println!("wire diameter {d:.4} um");

    for lp in [1031.8, 1050.3] {
        let sfwm = signal_spectrum(&fiber, &PumpSpec::at(lp), &grid)?;
        let raman = raman_spectrum(&RamanModel::silica(), lp, &grid)?;
        let h = ChannelHistogram::from_spectra(&sfwm, &raman.total, 0.5, &bank)?;
        println!("\npump {lp} nm");
        println!("channel  sfwm    raman");
        for k in 0..8 {
            println!(
                "{:<7}  {:.3}  {:.4}",
                h.channel_center_nm[k], h.sfwm_rate[k], h.raman_rate[k]
            );
        }
        let fifth = raman.orders[4].peak().map(|p| p.1).unwrap_or(f64::NAN);
        println!(
            "SFWM peaks in {} nm; 5th-order Raman component peaks at {fifth:.1} nm",
            h.peak_channel(&h.sfwm_rate)
        );
    }
    Ok(())
}
