//! Command-line front end: TOML run configuration with flag overrides and
//! CSV/JSON output for each subcommand.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 I/O failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::counting_sim::{car_confidence, simulate, SimConfig, DEFAULT_PARTITIONS};
use crate::dispersion::{build_dispersion_profile, DEFAULT_POINTS, DEFAULT_RANGE_UM};
use crate::error::Error;
use crate::filters::{ChannelHistogram, CwdmBank, CWDM_COVERAGE_NM};
use crate::mode_solver::FiberCrossSection;
use crate::noise_stats::{
    analytic_rates, fit_power_scan, raman_spectrum, read_power_scan_csv, CountingModel,
    RamanModel, Sigma, DEFAULT_CASCADE_DECAY, DEFAULT_CASCADE_ORDERS,
};
use crate::sfwm::{
    curve_range_warning, random_diameter_profile, signal_spectrum, spectral_fwhm,
    wavelength_grid, write_curve_csv, CurveRow, FiberProfile, PhaseMatcher, PumpSpec,
    DEFAULT_CORRELATION_LENGTH_M,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_DIAMETER_UM: f64 = 0.9;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_numerical() || matches!(e, Error::Overflow { .. }) {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiberConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diameter_um: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile_file: Option<PathBuf>,
    pub length_m: f64,
    /// Fractional diameter standard deviation of a random profile; 0 keeps
    /// the wire homogeneous.
    pub relative_sigma: f64,
    pub n_segments: usize,
    pub correlation_length_m: f64,
}

impl Default for FiberConfig {
    fn default() -> Self {
        FiberConfig {
            diameter_um: None,
            profile_file: None,
            length_m: 0.15,
            relative_sigma: 0.0,
            n_segments: 50,
            correlation_length_m: DEFAULT_CORRELATION_LENGTH_M,
        }
    }
}

impl FiberConfig {
    fn check(&self) -> CliResult<()> {
        if self.diameter_um.is_some() && self.profile_file.is_some() {
            return Err(CliError::Config(
                "fiber.diameter_um and fiber.profile_file are mutually exclusive".into(),
            ));
        }
        Ok(())
    }

    /// Single diameter for commands that work on one cross-section.
    pub fn diameter(&self) -> CliResult<f64> {
        self.check()?;
        if self.profile_file.is_some() {
            return Err(CliError::Config(
                "this command needs fiber.diameter_um, not a profile file".into(),
            ));
        }
        let d = self.diameter_um.unwrap_or(DEFAULT_DIAMETER_UM);
        if !(d > 0.0 && d.is_finite()) {
            return Err(CliError::Config(format!("fiber.diameter_um must be positive, got {d}")));
        }
        Ok(d)
    }

    pub fn profile(&self, seed: u64) -> CliResult<FiberProfile> {
        self.check()?;
        if let Some(path) = &self.profile_file {
            let file = std::fs::File::open(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            return Ok(FiberProfile::from_csv(file)?);
        }
        let d = self.diameter()?;
        if self.relative_sigma > 0.0 {
            Ok(random_diameter_profile(
                d,
                self.relative_sigma,
                self.n_segments,
                self.correlation_length_m,
                self.length_m,
                seed,
            )?)
        } else {
            Ok(FiberProfile::homogeneous(self.length_m, d)?)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PumpConfig {
    pub lambda_nm: f64,
    pub fwhm_nm: f64,
    pub rep_rate_hz: f64,
    pub pulse_s: f64,
    pub avg_power_mw: f64,
    pub gamma_per_w_m: f64,
    pub spm: bool,
}

impl Default for PumpConfig {
    fn default() -> Self {
        let p = PumpSpec::default();
        PumpConfig {
            lambda_nm: p.lambda_nm,
            fwhm_nm: p.fwhm_nm,
            rep_rate_hz: p.rep_rate_hz,
            pulse_s: p.pulse_s,
            avg_power_mw: p.avg_power_w * 1e3,
            gamma_per_w_m: p.gamma_per_w_m,
            spm: p.spm_enabled,
        }
    }
}

impl PumpConfig {
    pub fn spec(&self) -> CliResult<PumpSpec> {
        let p = PumpSpec {
            lambda_nm: self.lambda_nm,
            fwhm_nm: self.fwhm_nm,
            rep_rate_hz: self.rep_rate_hz,
            pulse_s: self.pulse_s,
            avg_power_w: self.avg_power_mw * 1e-3,
            gamma_per_w_m: self.gamma_per_w_m,
            spm_enabled: self.spm,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub lambda_min_um: f64,
    pub lambda_max_um: f64,
    pub dispersion_points: usize,
    pub zerogvd_diameters_um: Vec<f64>,
    pub pump_min_nm: f64,
    pub pump_max_nm: f64,
    pub pump_step_nm: f64,
    pub signal_min_nm: f64,
    pub signal_max_nm: f64,
    pub signal_step_nm: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            lambda_min_um: DEFAULT_RANGE_UM.0,
            lambda_max_um: DEFAULT_RANGE_UM.1,
            dispersion_points: DEFAULT_POINTS,
            zerogvd_diameters_um: vec![0.8, 0.85, 0.9, 0.95],
            pump_min_nm: 850.0,
            pump_max_nm: 1150.0,
            pump_step_nm: 1.0,
            signal_min_nm: 1250.0,
            signal_max_nm: 1700.0,
            signal_step_nm: 0.1,
        }
    }
}

impl GridConfig {
    fn signal_grid(&self) -> CliResult<Vec<f64>> {
        if !(self.signal_step_nm > 0.0) || !(self.signal_min_nm < self.signal_max_nm) {
            return Err(CliError::Config(format!(
                "signal grid needs min < max and step > 0, got [{}, {}] step {}",
                self.signal_min_nm, self.signal_max_nm, self.signal_step_nm
            )));
        }
        Ok(wavelength_grid(self.signal_min_nm, self.signal_max_nm, self.signal_step_nm))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CountingConfig {
    /// Means below are per pulse at this average pump power.
    pub reference_power_mw: f64,
    pub mu_pair: f64,
    pub mu_raman_s: f64,
    pub mu_raman_i: f64,
    pub eta_s: f64,
    pub eta_i: f64,
    pub dark_s: f64,
    pub dark_i: f64,
    pub gate_divisor: u32,
    pub powers_mw: Vec<f64>,
    pub n_pulses: u64,
    pub heralded: bool,
    pub partitions: usize,
}

impl Default for CountingConfig {
    fn default() -> Self {
        let m = CountingModel::low_power();
        CountingConfig {
            reference_power_mw: 1.0,
            mu_pair: m.mu_pair,
            mu_raman_s: m.mu_raman_s,
            mu_raman_i: m.mu_raman_i,
            eta_s: m.eta_s,
            eta_i: m.eta_i,
            dark_s: m.dark_s,
            dark_i: m.dark_i,
            gate_divisor: m.gate_divisor,
            powers_mw: vec![1.0, 3.0, 5.0, 7.0, 9.0],
            n_pulses: 10_000_000,
            heralded: false,
            partitions: DEFAULT_PARTITIONS,
        }
    }
}

impl CountingConfig {
    /// Counting model at `power_mw`: pairs scale as P², Raman as P.
    pub fn model_at(&self, power_mw: f64, rep_rate_hz: f64) -> CliResult<CountingModel> {
        if !(self.reference_power_mw > 0.0) || !(power_mw >= 0.0) {
            return Err(CliError::Config(format!(
                "powers must be non-negative and the reference positive, got {power_mw} / {}",
                self.reference_power_mw
            )));
        }
        let x = power_mw / self.reference_power_mw;
        let m = CountingModel {
            mu_pair: self.mu_pair * x * x,
            mu_raman_s: self.mu_raman_s * x,
            mu_raman_i: self.mu_raman_i * x,
            eta_s: self.eta_s,
            eta_i: self.eta_i,
            dark_s: self.dark_s,
            dark_i: self.dark_i,
            rep_rate_hz,
            gate_divisor: self.gate_divisor,
        };
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RamanConfig {
    pub temperature_k: f64,
    pub cascade_weights: Vec<f64>,
    /// Raman series weight relative to the unit-peak SFWM series.
    pub scale: f64,
}

impl Default for RamanConfig {
    fn default() -> Self {
        RamanConfig {
            temperature_k: 300.0,
            cascade_weights: (0..DEFAULT_CASCADE_ORDERS)
                .map(|n| DEFAULT_CASCADE_DECAY.powi(n as i32))
                .collect(),
            scale: 1.0,
        }
    }
}

impl RamanConfig {
    pub fn model(&self) -> CliResult<RamanModel> {
        Ok(RamanModel::silica()
            .with_cascade(self.cascade_weights.clone())?
            .with_temperature(self.temperature_k)?)
    }
}

/// Resolved run configuration; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub fiber: FiberConfig,
    pub pump: PumpConfig,
    pub grids: GridConfig,
    pub counting: CountingConfig,
    pub raman: RamanConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: DEFAULT_SEED,
            fiber: FiberConfig::default(),
            pump: PumpConfig::default(),
            grids: GridConfig::default(),
            counting: CountingConfig::default(),
            raman: RamanConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// The resolved config as `# `-prefixed comment lines.
    pub fn csv_header(&self) -> String {
        self.to_toml()
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| format!("# {l}\n"))
            .collect()
    }

    fn json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serialises")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "mnf", version, about = "Micro/nano-fiber photon-pair source modelling")]
pub struct Cli {
    /// TOML run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file (stdout when omitted)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct FiberArgs {
    #[arg(long)]
    pub diameter_um: Option<f64>,
    #[arg(long)]
    pub length_m: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// n_eff, β, β2 and D against wavelength
    Dispersion {
        #[command(flatten)]
        fiber: FiberArgs,
        #[arg(long)]
        lambda_min_um: Option<f64>,
        #[arg(long)]
        lambda_max_um: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Zero-GVD wavelengths for a list of diameters
    Zerogvd {
        #[arg(long, value_delimiter = ',')]
        diameters_um: Option<Vec<f64>>,
    },
    /// Phase-matched signal/idler wavelengths over a pump sweep
    Phasematch {
        #[command(flatten)]
        fiber: FiberArgs,
        #[arg(long)]
        pump_min_nm: Option<f64>,
        #[arg(long)]
        pump_max_nm: Option<f64>,
        #[arg(long)]
        step_nm: Option<f64>,
        /// Single pump wavelength instead of a sweep
        #[arg(long, conflicts_with_all = ["pump_min_nm", "pump_max_nm", "step_nm"])]
        pump_nm: Option<f64>,
    },
    /// Signal-photon spectrum and its FWHM
    Spectrum {
        #[command(flatten)]
        fiber: FiberArgs,
        #[arg(long)]
        pump_nm: Option<f64>,
        #[arg(long)]
        pump_fwhm_nm: Option<f64>,
        #[arg(long)]
        relative_sigma: Option<f64>,
        #[arg(long)]
        segments: Option<usize>,
        #[arg(long)]
        correlation_length_m: Option<f64>,
    },
    /// SFWM and Raman rates binned into the CWDM channels
    Channels {
        #[command(flatten)]
        fiber: FiberArgs,
        #[arg(long)]
        pump_nm: Option<f64>,
        #[arg(long)]
        raman_scale: Option<f64>,
    },
    /// Analytic singles, coincidences and CAR over a power sweep
    Car {
        #[arg(long, value_delimiter = ',')]
        powers_mw: Option<Vec<f64>>,
    },
    /// Monte Carlo of the coincidence measurement
    Simulate {
        #[arg(long)]
        pulses: Option<u64>,
        #[arg(long)]
        power_mw: Option<f64>,
        #[arg(long)]
        heralded: bool,
        #[arg(long)]
        partitions: Option<usize>,
    },
    /// Fit N = s1·P + s2·P² to a power scan
    Fit {
        /// CSV with columns power_mW,counts_Hz[,sigma_Hz]
        #[arg(long)]
        input: PathBuf,
        /// Counting time for Poisson weights when no sigma column is given
        #[arg(long, default_value_t = 1.0)]
        counting_time_s: f64,
    },
}

fn set<T: Copy>(dst: &mut T, src: Option<T>) {
    if let Some(v) = src {
        *dst = v;
    }
}

fn apply_fiber(cfg: &mut RunConfig, f: &FiberArgs) {
    if let Some(d) = f.diameter_um {
        cfg.fiber.diameter_um = Some(d);
        cfg.fiber.profile_file = None;
    }
    set(&mut cfg.fiber.length_m, f.length_m);
}

/// Folds command-line flags into the loaded config; flags win.
pub fn resolve(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    match &cli.command {
        Command::Dispersion {
            fiber,
            lambda_min_um,
            lambda_max_um,
            points,
        } => {
            apply_fiber(&mut cfg, fiber);
            set(&mut cfg.grids.lambda_min_um, *lambda_min_um);
            set(&mut cfg.grids.lambda_max_um, *lambda_max_um);
            set(&mut cfg.grids.dispersion_points, *points);
        }
        Command::Zerogvd { diameters_um } => {
            if let Some(d) = diameters_um {
                cfg.grids.zerogvd_diameters_um = d.clone();
            }
        }
        Command::Phasematch {
            fiber,
            pump_min_nm,
            pump_max_nm,
            step_nm,
            pump_nm,
        } => {
            apply_fiber(&mut cfg, fiber);
            set(&mut cfg.grids.pump_min_nm, *pump_min_nm);
            set(&mut cfg.grids.pump_max_nm, *pump_max_nm);
            set(&mut cfg.grids.pump_step_nm, *step_nm);
            if let Some(p) = pump_nm {
                cfg.grids.pump_min_nm = *p;
                cfg.grids.pump_max_nm = *p;
            }
        }
        Command::Spectrum {
            fiber,
            pump_nm,
            pump_fwhm_nm,
            relative_sigma,
            segments,
            correlation_length_m,
        } => {
            apply_fiber(&mut cfg, fiber);
            set(&mut cfg.pump.lambda_nm, *pump_nm);
            set(&mut cfg.pump.fwhm_nm, *pump_fwhm_nm);
            set(&mut cfg.fiber.relative_sigma, *relative_sigma);
            set(&mut cfg.fiber.n_segments, *segments);
            set(&mut cfg.fiber.correlation_length_m, *correlation_length_m);
        }
        Command::Channels {
            fiber,
            pump_nm,
            raman_scale,
        } => {
            apply_fiber(&mut cfg, fiber);
            set(&mut cfg.pump.lambda_nm, *pump_nm);
            set(&mut cfg.raman.scale, *raman_scale);
        }
        Command::Car { powers_mw } => {
            if let Some(p) = powers_mw {
                cfg.counting.powers_mw = p.clone();
            }
        }
        Command::Simulate {
            pulses,
            power_mw,
            heralded,
            partitions,
        } => {
            set(&mut cfg.counting.n_pulses, *pulses);
            set(&mut cfg.pump.avg_power_mw, *power_mw);
            cfg.counting.heralded |= *heralded;
            set(&mut cfg.counting.partitions, *partitions);
        }
        Command::Fit { .. } => {}
    }
    Ok(cfg)
}

/// Rendered command output plus optional sidecar files.
struct Output {
    body: String,
    sidecars: Vec<(&'static str, String)>,
}

fn json_text(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serialises");
    s.push('\n');
    s
}

fn csv_text<F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>>(header: String, f: F) -> String {
    let mut buf = header.into_bytes();
    f(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("utf-8 output")
}

fn cmd_dispersion(cfg: &RunConfig, fmt: Format) -> CliResult<Output> {
    let d = cfg.fiber.diameter()?;
    let cs = FiberCrossSection::silica_in_air(d)?;
    let g = &cfg.grids;
    let prof = build_dispersion_profile(&cs, g.lambda_min_um, g.lambda_max_um, g.dispersion_points)?;
    let sidecar = json!({ "diameter_um": d, "zero_gvd_um": prof.zero_gvd_um });
    let body = match fmt {
        Format::Csv => {
            let mut header = cfg.csv_header();
            header.push_str(&format!("# zero_gvd_um = {:?}\n", prof.zero_gvd_um));
            csv_text(header, |w| prof.write_csv(w))
        }
        Format::Json => json_text(&json!({ "config": cfg.json(), "diameter_um": d, "profile": prof })),
    };
    Ok(Output {
        body,
        sidecars: vec![("zero_gvd.json", json_text(&sidecar))],
    })
}

fn cmd_zerogvd(cfg: &RunConfig, fmt: Format) -> CliResult<Output> {
    let g = &cfg.grids;
    if g.zerogvd_diameters_um.is_empty() {
        return Err(CliError::Config("grids.zerogvd_diameters_um is empty".into()));
    }
    let mut results = Vec::new();
    for &d in &g.zerogvd_diameters_um {
        let cs = FiberCrossSection::silica_in_air(d)?;
        let prof = build_dispersion_profile(&cs, g.lambda_min_um, g.lambda_max_um, g.dispersion_points)?;
        results.push((d, prof.zero_gvd_um));
    }
    let body = match fmt {
        Format::Csv => csv_text(cfg.csv_header(), |w| {
            writeln!(w, "diameter_um,zero_gvd_um")?;
            for (d, roots) in &results {
                if roots.is_empty() {
                    writeln!(w, "{d},none")?;
                }
                for r in roots {
                    writeln!(w, "{d},{r}")?;
                }
            }
            Ok(())
        }),
        Format::Json => {
            let rows: Vec<_> = results
                .iter()
                .map(|(d, r)| json!({ "diameter_um": d, "zero_gvd_um": r }))
                .collect();
            json_text(&json!({ "config": cfg.json(), "results": rows }))
        }
    };
    Ok(Output {
        body,
        sidecars: vec![],
    })
}

fn cmd_phasematch(cfg: &RunConfig, fmt: Format, warn: &mut dyn Write) -> CliResult<Output> {
    let d = cfg.fiber.diameter()?;
    let pump = cfg.pump.spec()?;
    let g = &cfg.grids;
    if let Some(msg) = curve_range_warning(g.pump_min_nm, g.pump_max_nm) {
        writeln!(warn, "warning: {msg}")?;
    }
    let matcher = PhaseMatcher::new(d)?;
    let rows = if g.pump_min_nm == g.pump_max_nm {
        vec![CurveRow {
            lambda_p_nm: g.pump_min_nm,
            points: matcher.solve(g.pump_min_nm, &pump)?,
        }]
    } else {
        matcher.curve(g.pump_min_nm, g.pump_max_nm, g.pump_step_nm, &pump)?
    };
    let body = match fmt {
        Format::Csv => csv_text(cfg.csv_header(), |w| write_curve_csv(&rows, w)),
        Format::Json => json_text(&json!({ "config": cfg.json(), "diameter_um": d, "rows": rows })),
    };
    Ok(Output {
        body,
        sidecars: vec![],
    })
}

fn cmd_spectrum(cfg: &RunConfig, fmt: Format, warn: &mut dyn Write) -> CliResult<Output> {
    let pump = cfg.pump.spec()?;
    if let Some(msg) = pump.tuning_warning() {
        writeln!(warn, "warning: {msg}")?;
    }
    let grid = cfg.grids.signal_grid()?;
    let profile = cfg.fiber.profile(cfg.seed)?;
    let spec = signal_spectrum(&profile, &pump, &grid)?;
    let fwhm = spectral_fwhm(&spec)?;
    // homogeneous reference for inhomogeneous runs
    let reference = if cfg.fiber.relative_sigma > 0.0 && cfg.fiber.profile_file.is_none() {
        let h = FiberProfile::homogeneous(cfg.fiber.length_m, cfg.fiber.diameter()?)?;
        Some(spectral_fwhm(&signal_spectrum(&h, &pump, &grid)?)?)
    } else {
        None
    };
    let summary = json!({
        "fwhm_nm": fwhm.width_nm,
        "peak_nm": fwhm.peak_nm,
        "fwhm_lower_bound": fwhm.lower_bound,
        "homogeneous_fwhm_nm": reference.map(|r| r.width_nm),
    });
    let body = match fmt {
        Format::Csv => {
            let mut header = cfg.csv_header();
            header.push_str(&format!("# fwhm_nm = {}\n", fwhm.width_nm));
            header.push_str(&format!("# peak_nm = {}\n", fwhm.peak_nm));
            header.push_str(&format!("# fwhm_lower_bound = {}\n", fwhm.lower_bound));
            if let Some(r) = reference {
                header.push_str(&format!("# homogeneous_fwhm_nm = {}\n", r.width_nm));
            }
            csv_text(header, |w| spec.write_csv(w))
        }
        Format::Json => json_text(&json!({
            "config": cfg.json(),
            "fwhm": summary,
            "spectrum": spec,
        })),
    };
    Ok(Output {
        body,
        sidecars: vec![("fwhm.json", json_text(&summary))],
    })
}

/// SFWM and Raman channel histogram for the resolved config.
pub fn channel_histogram(cfg: &RunConfig) -> CliResult<ChannelHistogram> {
    let pump = cfg.pump.spec()?;
    let g = &cfg.grids;
    let lo = g.signal_min_nm.min(CWDM_COVERAGE_NM.0);
    let hi = g.signal_max_nm.max(CWDM_COVERAGE_NM.1);
    if !(g.signal_step_nm > 0.0) {
        return Err(CliError::Config("grids.signal_step_nm must be positive".into()));
    }
    let grid = wavelength_grid(lo, hi, g.signal_step_nm);
    let profile = cfg.fiber.profile(cfg.seed)?;
    let sfwm = signal_spectrum(&profile, &pump, &grid)?;
    let raman = raman_spectrum(&cfg.raman.model()?, pump.lambda_nm, &grid)?;
    Ok(ChannelHistogram::from_spectra(
        &sfwm,
        &raman.total,
        cfg.raman.scale,
        &CwdmBank::standard(),
    )?)
}

fn cmd_channels(cfg: &RunConfig, fmt: Format, warn: &mut dyn Write) -> CliResult<Output> {
    if let Some(msg) = cfg.pump.spec()?.tuning_warning() {
        writeln!(warn, "warning: {msg}")?;
    }
    let h = channel_histogram(cfg)?;
    let sfwm_peak = h.peak_channel(&h.sfwm_rate);
    let body = match fmt {
        Format::Csv => {
            let mut header = cfg.csv_header();
            header.push_str(&format!("# sfwm_peak_channel_nm = {sfwm_peak}\n"));
            csv_text(header, |w| h.write_csv(w))
        }
        Format::Json => json_text(&json!({
            "config": cfg.json(),
            "sfwm_peak_channel_nm": sfwm_peak,
            "channels": h,
        })),
    };
    Ok(Output {
        body,
        sidecars: vec![],
    })
}

fn cmd_car(cfg: &RunConfig, fmt: Format) -> CliResult<Output> {
    let mut rows = Vec::new();
    for &p in &cfg.counting.powers_mw {
        let m = cfg.counting.model_at(p, cfg.pump.rep_rate_hz)?;
        let r = analytic_rates(&m)?;
        let car = (r.accidental > 0.0).then(|| r.coincidence / r.accidental);
        rows.push((p, m, r, car));
    }
    let body = match fmt {
        Format::Csv => csv_text(cfg.csv_header(), |w| {
            writeln!(
                w,
                "power_mW,mu_pair,mu_raman_s,mu_raman_i,singles_s_Hz,singles_i_Hz,coincidence_Hz,accidental_Hz,car"
            )?;
            for (p, m, r, car) in &rows {
                let car = car.map_or("undefined".to_string(), |c| c.to_string());
                writeln!(
                    w,
                    "{p},{},{},{},{},{},{},{},{car}",
                    m.mu_pair, m.mu_raman_s, m.mu_raman_i, r.singles_s, r.singles_i, r.coincidence, r.accidental
                )?;
            }
            Ok(())
        }),
        Format::Json => {
            let rows: Vec<_> = rows
                .iter()
                .map(|(p, m, r, car)| {
                    json!({
                        "power_mW": p,
                        "model": m,
                        "rates_Hz": r,
                        "car": car,
                        "car_defined": car.is_some(),
                    })
                })
                .collect();
            json_text(&json!({ "config": cfg.json(), "rows": rows }))
        }
    };
    Ok(Output {
        body,
        sidecars: vec![],
    })
}

fn cmd_simulate(cfg: &RunConfig, fmt: Format) -> CliResult<Output> {
    let c = &cfg.counting;
    let model = c.model_at(cfg.pump.avg_power_mw, cfg.pump.rep_rate_hz)?;
    let sim = SimConfig {
        model,
        n_pulses: c.n_pulses,
        seed: cfg.seed,
        heralded: c.heralded,
        partitions: c.partitions,
    };
    let r = simulate(&sim)?;
    let body = match fmt {
        Format::Json => {
            let mut v = r.to_json();
            v["config"] = cfg.json();
            json_text(&v)
        }
        Format::Csv => {
            let est = car_confidence(&r);
            csv_text(cfg.csv_header(), |w| {
                writeln!(
                    w,
                    "singles_s,singles_i,coincidences,accidentals,car,car_stderr,car_lower_bound,n_pulses,seed,partitions"
                )?;
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{}",
                    r.singles_s,
                    r.singles_i,
                    r.coincidences,
                    r.accidentals,
                    est.car,
                    est.stderr.map_or("none".to_string(), |s| s.to_string()),
                    est.lower_bound,
                    r.n_pulses,
                    r.seed,
                    r.partitions
                )
            })
        }
    };
    Ok(Output {
        body,
        sidecars: vec![],
    })
}

fn cmd_fit(cfg: &RunConfig, fmt: Format, input: &Path, counting_time_s: f64) -> CliResult<Output> {
    let file = std::fs::File::open(input)
        .map_err(|e| CliError::Io(format!("{}: {e}", input.display())))?;
    let (points, sigmas) = read_power_scan_csv(file)?;
    let sigma = match sigmas {
        Some(s) => Sigma::PerPoint(s),
        None => Sigma::Poisson { counting_time_s },
    };
    let fit = fit_power_scan(&points, &sigma)?;
    let mut powers: Vec<f64> = points.iter().map(|p| p.0).collect();
    powers.sort_by(|a, b| a.partial_cmp(b).unwrap());
    powers.dedup();
    let body = match fmt {
        Format::Json => {
            let mut v = fit.report_json(&powers);
            v["config"] = cfg.json();
            json_text(&v)
        }
        Format::Csv => csv_text(cfg.csv_header(), |w| {
            writeln!(w, "power_mW,raman_fraction")?;
            for p in &powers {
                writeln!(w, "{p},{}", fit.raman_fraction(*p))?;
            }
            writeln!(w, "# s1_Hz_per_mW = {}", fit.s1)?;
            writeln!(w, "# s2_Hz_per_mW2 = {}", fit.s2)?;
            writeln!(w, "# cov = {:?}", fit.cov)
        }),
    };
    Ok(Output {
        body,
        sidecars: vec![],
    })
}

fn sidecar_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let cfg = resolve(cli)?;
    let default_fmt = match cli.command {
        Command::Simulate { .. } | Command::Fit { .. } => Format::Json,
        _ => Format::Csv,
    };
    let fmt = cli.format.unwrap_or(default_fmt);
    let out = match &cli.command {
        Command::Dispersion { .. } => cmd_dispersion(&cfg, fmt)?,
        Command::Zerogvd { .. } => cmd_zerogvd(&cfg, fmt)?,
        Command::Phasematch { .. } => cmd_phasematch(&cfg, fmt, stderr)?,
        Command::Spectrum { .. } => cmd_spectrum(&cfg, fmt, stderr)?,
        Command::Channels { .. } => cmd_channels(&cfg, fmt, stderr)?,
        Command::Car { .. } => cmd_car(&cfg, fmt)?,
        Command::Simulate { .. } => cmd_simulate(&cfg, fmt)?,
        Command::Fit {
            input,
            counting_time_s,
        } => cmd_fit(&cfg, fmt, input, *counting_time_s)?,
    };
    match &cli.out {
        Some(path) => {
            let write = |p: &Path, s: &str| {
                std::fs::write(p, s).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
            };
            write(path, &out.body)?;
            for (suffix, text) in &out.sidecars {
                write(&sidecar_path(path, suffix), text)?;
            }
        }
        None => stdout.write_all(out.body.as_bytes())?,
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(text.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = stderr.write_all(text.as_bytes());
                    EXIT_CONFIG
                }
            };
        }
    };
    match execute(&cli, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
