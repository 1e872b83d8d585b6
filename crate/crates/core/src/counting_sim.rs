//! Pulse-by-pulse Monte Carlo of the two-detector coincidence experiment.
//!
//! Photon numbers per pulse are Poisson and thinned by the detection
//! efficiencies, so each detector's click splits into three independent
//! sources: detected pairs seen by both arms, signal-only photons (lost
//! partners, Raman, darks) and idler-only photons. Most pulses are quiet at
//! realistic means; the sampler jumps between non-quiet pulses with a
//! geometric skip and draws the joint outcome of the three sources there.
//! This is exact and lets long runs stay cheap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise_stats::CountingModel;

pub const DEFAULT_PARTITIONS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: CountingModel,
    pub n_pulses: u64,
    pub seed: u64,
    /// Signal detector armed by idler clicks instead of every
    /// `gate_divisor`-th pulse. Only the gated-singles tallies change.
    pub heralded: bool,
    pub partitions: usize,
}

impl SimConfig {
    pub fn new(model: CountingModel, n_pulses: u64, seed: u64) -> Self {
        SimConfig {
            model,
            n_pulses,
            seed,
            heralded: false,
            partitions: DEFAULT_PARTITIONS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimResult {
    /// Signal clicks over all pulses.
    pub singles_s: u64,
    /// Idler clicks over all pulses.
    pub singles_i: u64,
    pub coincidences: u64,
    /// Signal click on pulse k with an idler click on pulse k − 1.
    pub accidentals: u64,
    /// Signal clicks on pulses where the signal gate was open.
    pub gated_singles_s: u64,
    pub gated_pulses: u64,
    pub n_pulses: u64,
    pub seed: u64,
    pub partitions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CarEstimate {
    pub car: f64,
    /// `None` when no accidentals were recorded.
    pub stderr: Option<f64>,
    /// Set when there were no accidentals; `car` is then `C/1`, a lower bound.
    pub lower_bound: bool,
}

/// CAR with Poisson error propagation `sqrt(C/A² + C²/A³)`.
pub fn car_confidence(result: &SimResult) -> CarEstimate {
    let c = result.coincidences as f64;
    let a = result.accidentals as f64;
    if result.accidentals == 0 {
        return CarEstimate {
            car: c,
            stderr: None,
            lower_bound: true,
        };
    }
    CarEstimate {
        car: c / a,
        stderr: Some((c / (a * a) + c * c / (a * a * a)).sqrt()),
        lower_bound: false,
    }
}

impl SimResult {
    /// `{singles_s, singles_i, coincidences, accidentals, car, car_stderr,
    /// n_pulses, seed, partitions}` plus gating tallies.
    pub fn to_json(&self) -> serde_json::Value {
        let est = car_confidence(self);
        serde_json::json!({
            "singles_s": self.singles_s,
            "singles_i": self.singles_i,
            "coincidences": self.coincidences,
            "accidentals": self.accidentals,
            "car": est.car,
            "car_stderr": est.stderr,
            "car_lower_bound": est.lower_bound,
            "gated_singles_s": self.gated_singles_s,
            "gated_pulses": self.gated_pulses,
            "n_pulses": self.n_pulses,
            "seed": self.seed,
            "partitions": self.partitions,
        })
    }
}

/// Per-pulse Poisson means of the three independent click sources.
#[derive(Debug, Clone, Copy)]
struct Sources {
    both: f64,
    signal_only: f64,
    idler_only: f64,
}

impl Sources {
    fn from_model(m: &CountingModel) -> Self {
        Sources {
            both: m.mu_pair * m.eta_s * m.eta_i,
            signal_only: m.mu_pair * m.eta_s * (1.0 - m.eta_i) + m.mu_raman_s * m.eta_s + m.dark_s,
            idler_only: m.mu_pair * (1.0 - m.eta_s) * m.eta_i + m.mu_raman_i * m.eta_i + m.dark_i,
        }
    }

    fn total(&self) -> f64 {
        self.both + self.signal_only + self.idler_only
    }

    /// Cumulative weights of the seven non-quiet (both, s, i) presence
    /// patterns, conditioned on at least one source firing.
    fn outcome_table(&self) -> [(f64, bool, bool); 7] {
        let q = |mu: f64| -(-mu).exp_m1();
        let (qb, qs, qi) = (q(self.both), q(self.signal_only), q(self.idler_only));
        let mut table = [(0.0, false, false); 7];
        let mut acc = 0.0;
        let mut k = 0;
        for pattern in 1..8u8 {
            let (b, s, i) = (pattern & 4 != 0, pattern & 2 != 0, pattern & 1 != 0);
            let p = (if b { qb } else { 1.0 - qb })
                * (if s { qs } else { 1.0 - qs })
                * (if i { qi } else { 1.0 - qi });
            acc += p;
            table[k] = (acc, b || s, b || i);
            k += 1;
        }
        for t in table.iter_mut() {
            t.0 /= acc;
        }
        table
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Block {
    singles_s: u64,
    singles_i: u64,
    coincidences: u64,
    accidentals: u64,
    gated_singles_s: u64,
    gated_pulses: u64,
    first_signal: bool,
    first_idler: bool,
    last_idler: bool,
}

struct Gate {
    heralded: bool,
    divisor: u64,
}

fn run_block(
    sources: &Sources,
    table: &[(f64, bool, bool); 7],
    start: u64,
    len: u64,
    rng: &mut ChaCha8Rng,
    gate: &Gate,
) -> Block {
    let mut out = Block::default();
    if !gate.heralded {
        // pulses k in [start, start+len) with k % divisor == 0
        let first = start.div_ceil(gate.divisor) * gate.divisor;
        if first < start + len {
            out.gated_pulses = (start + len - 1 - first) / gate.divisor + 1;
        }
    }
    let lambda = sources.total();
    if len == 0 || lambda <= 0.0 {
        return out;
    }
    let mut k = 0u64;
    let mut prev: Option<(u64, bool)> = None;
    // heralded mode: pulse after an idler click whose gate is not yet counted
    let mut follower: Option<u64> = None;
    loop {
        let u: f64 = 1.0 - rng.random::<f64>();
        let skip = (u.ln() / -lambda).floor();
        if !(skip < (len - k) as f64) {
            break;
        }
        k += skip as u64;
        let r: f64 = rng.random();
        let &(_, s, i) = table.iter().find(|t| r < t.0).unwrap_or(&table[6]);
        if k == 0 {
            out.first_signal = s;
            out.first_idler = i;
        }
        out.singles_s += s as u64;
        out.singles_i += i as u64;
        out.coincidences += (s && i) as u64;
        let prev_idler = matches!(prev, Some((pk, true)) if pk + 1 == k);
        if s && prev_idler {
            out.accidentals += 1;
        }
        if gate.heralded {
            if matches!(follower.take(), Some(f) if f < k) {
                out.gated_pulses += 1;
            }
            if i || prev_idler {
                out.gated_pulses += 1;
                out.gated_singles_s += s as u64;
            }
            if i {
                follower = Some(k + 1);
            }
        } else if (start + k) % gate.divisor == 0 {
            out.gated_singles_s += s as u64;
        }
        out.last_idler = i && k + 1 == len;
        prev = Some((k, i));
        k += 1;
        if k >= len {
            break;
        }
    }
    if matches!(follower, Some(f) if f < len) {
        out.gated_pulses += 1;
    }
    out
}

/// Deterministic for a fixed `(seed, partitions)`: worker `w` simulates a
/// contiguous block with its own ChaCha stream.
pub fn simulate(config: &SimConfig) -> Result<SimResult> {
    config.model.validate()?;
    if config.n_pulses == 0 || config.partitions == 0 {
        return Err(Error::Argument(
            "n_pulses and partitions must be at least 1".into(),
        ));
    }
    let sources = Sources::from_model(&config.model);
    let table = sources.outcome_table();
    let parts = config.partitions as u64;
    let base = config.n_pulses / parts;
    let extra = config.n_pulses % parts;
    let gate = Gate {
        heralded: config.heralded,
        divisor: config.model.gate_divisor as u64,
    };
    let blocks: Vec<(Block, u64)> = (0..parts)
        .into_par_iter()
        .map(|w| {
            let start = w * base + w.min(extra);
            let len = base + (w < extra) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(w);
            (run_block(&sources, &table, start, len, &mut rng, &gate), len)
        })
        .collect();

    let mut r = SimResult {
        singles_s: 0,
        singles_i: 0,
        coincidences: 0,
        accidentals: 0,
        gated_singles_s: 0,
        gated_pulses: 0,
        n_pulses: config.n_pulses,
        seed: config.seed,
        partitions: config.partitions,
    };
    for (idx, (b, _)) in blocks.iter().enumerate() {
        r.singles_s += b.singles_s;
        r.singles_i += b.singles_i;
        r.coincidences += b.coincidences;
        r.accidentals += b.accidentals;
        r.gated_singles_s += b.gated_singles_s;
        r.gated_pulses += b.gated_pulses;
        if idx > 0 {
            // adjacent-pulse pair straddling the block boundary
            let prev = &blocks[idx - 1];
            if prev.1 > 0 && prev.0.last_idler {
                r.accidentals += b.first_signal as u64;
                if config.heralded && !b.first_idler {
                    r.gated_pulses += 1;
                    r.gated_singles_s += b.first_signal as u64;
                }
            }
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise_stats::{analytic_rates, car_analytic};
    use rand_distr::{Distribution, Poisson};

    fn zero_model() -> CountingModel {
        CountingModel {
            mu_pair: 0.0,
            mu_raman_s: 0.0,
            mu_raman_i: 0.0,
            dark_s: 0.0,
            dark_i: 0.0,
            ..CountingModel::low_power()
        }
    }

    fn hot_model() -> CountingModel {
        CountingModel {
            mu_pair: 0.4,
            mu_raman_s: 0.3,
            mu_raman_i: 0.1,
            eta_s: 0.5,
            eta_i: 0.6,
            dark_s: 0.01,
            dark_i: 0.02,
            rep_rate_hz: 1e6,
            gate_divisor: 9,
        }
    }

    #[test]
    fn null_process_is_silent() {
        let r = simulate(&SimConfig::new(zero_model(), 1_000_000, 3)).unwrap();
        assert_eq!(
            (r.singles_s, r.singles_i, r.coincidences, r.accidentals, r.gated_singles_s),
            (0, 0, 0, 0, 0)
        );
        assert_eq!(r.gated_pulses, 1_000_000u64.div_ceil(9));
        let est = car_confidence(&r);
        assert!(est.lower_bound && est.stderr.is_none());
    }

    #[test]
    fn confidence_arithmetic() {
        let mut r = simulate(&SimConfig::new(zero_model(), 10, 0)).unwrap();
        r.coincidences = 400;
        r.accidentals = 4;
        let e = car_confidence(&r);
        assert_eq!(e.car, 100.0);
        assert!((e.stderr.unwrap() - 2525f64.sqrt()).abs() < 1e-12);
        r.accidentals = 400;
        assert_eq!(car_confidence(&r).car, 1.0);
        r.coincidences = 800;
        r.accidentals = 8;
        let e2 = car_confidence(&r);
        assert!((e.stderr.unwrap() / e2.stderr.unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn reruns_are_bit_identical() {
        let cfg = SimConfig::new(CountingModel::high_power(), 2_000_000, 11);
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
        let other = SimConfig { seed: 12, ..cfg };
        assert_ne!(simulate(&cfg).unwrap(), simulate(&other).unwrap());
    }

    #[test]
    fn bounds_hold() {
        let r = simulate(&SimConfig::new(hot_model(), 200_000, 5)).unwrap();
        assert!(r.coincidences <= r.singles_s.min(r.singles_i));
        assert!(r.accidentals <= r.singles_s.min(r.singles_i));
        assert!(r.gated_singles_s <= r.singles_s);
    }

    /// Exact per-pulse probabilities of the binary-click model.
    fn exact_probs(m: &CountingModel) -> (f64, f64, f64) {
        let lb = m.mu_pair * m.eta_s * m.eta_i;
        let ls = m.mu_pair * m.eta_s * (1.0 - m.eta_i) + m.mu_raman_s * m.eta_s + m.dark_s;
        let li = m.mu_pair * (1.0 - m.eta_s) * m.eta_i + m.mu_raman_i * m.eta_i + m.dark_i;
        let ps = 1.0 - (-(lb + ls)).exp();
        let pi = 1.0 - (-(lb + li)).exp();
        let psi = 1.0 - (-(lb + ls)).exp() - (-(lb + li)).exp() + (-(lb + ls + li)).exp();
        (ps, pi, psi)
    }

    fn within(count: u64, n: u64, p: f64, k: f64) -> bool {
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        (count as f64 - n as f64 * p).abs() <= k * sd.max(1.0)
    }

    #[test]
    fn naive_pulse_loop_agrees() {
        // straightforward per-pulse Poisson draws, independent of the sampler
        let m = hot_model();
        let n = 200_000u64;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let pois = |mu: f64| Poisson::new(mu).unwrap();
        let (pp, prs, pri) = (pois(m.mu_pair), pois(m.mu_raman_s), pois(m.mu_raman_i));
        let (ds, di) = (pois(m.dark_s), pois(m.dark_i));
        let (mut ss, mut si, mut cc, mut aa) = (0u64, 0u64, 0u64, 0u64);
        let mut prev_i = false;
        for _ in 0..n {
            let pairs = pp.sample(&mut rng) as u64;
            let mut s = ds.sample(&mut rng) > 0.0;
            let mut i = di.sample(&mut rng) > 0.0;
            for _ in 0..pairs {
                s |= rng.random::<f64>() < m.eta_s;
                i |= rng.random::<f64>() < m.eta_i;
            }
            for _ in 0..prs.sample(&mut rng) as u64 {
                s |= rng.random::<f64>() < m.eta_s;
            }
            for _ in 0..pri.sample(&mut rng) as u64 {
                i |= rng.random::<f64>() < m.eta_i;
            }
            ss += s as u64;
            si += i as u64;
            cc += (s && i) as u64;
            aa += (s && prev_i) as u64;
            prev_i = i;
        }
        let r = simulate(&SimConfig::new(m, n, 1)).unwrap();
        let (ps, pi, psi) = exact_probs(&m);
        for (naive, fast, p) in [
            (ss, r.singles_s, ps),
            (si, r.singles_i, pi),
            (cc, r.coincidences, psi),
            (aa, r.accidentals, ps * pi),
        ] {
            assert!(within(naive, n, p, 4.0), "naive {naive} vs {}", n as f64 * p);
            assert!(within(fast, n, p, 4.0), "sampler {fast} vs {}", n as f64 * p);
        }
    }

    #[test]
    fn partition_boundaries_keep_adjacent_pairs() {
        // every pulse clicks in both arms: all n−1 adjacent pairs are accidentals
        let m = CountingModel {
            dark_s: 60.0,
            dark_i: 60.0,
            ..zero_model()
        };
        for parts in [1, 3, 8, 16] {
            let r = simulate(&SimConfig {
                partitions: parts,
                ..SimConfig::new(m, 1000, 2)
            })
            .unwrap();
            assert_eq!(r.accidentals, 999, "partitions {parts}");
            assert_eq!(r.coincidences, 1000);
            assert_eq!(r.gated_pulses, 112);
        }
    }

    #[test]
    fn heralded_changes_only_gating() {
        let fixed = SimConfig::new(hot_model(), 300_000, 8);
        let her = SimConfig {
            heralded: true,
            ..fixed
        };
        let (a, b) = (simulate(&fixed).unwrap(), simulate(&her).unwrap());
        assert_eq!(
            (a.singles_s, a.singles_i, a.coincidences, a.accidentals),
            (b.singles_s, b.singles_i, b.coincidences, b.accidentals)
        );
        // gate open on idler pulses and their followers
        let (_, pi, _) = exact_probs(&hot_model());
        let p_open = 1.0 - (1.0 - pi) * (1.0 - pi);
        assert!(within(b.gated_pulses, 300_000, p_open, 4.5), "{}", b.gated_pulses);
        assert!(b.gated_singles_s >= b.coincidences);
        let p_fixed = a.gated_singles_s as f64 / a.gated_pulses as f64;
        assert!((p_fixed - a.singles_s as f64 / 300_000.0).abs() < 0.02);
    }

    #[test]
    fn heralded_gates_across_partitions() {
        let m = CountingModel {
            dark_i: 60.0,
            ..zero_model()
        };
        for parts in [1, 4, 7] {
            let r = simulate(&SimConfig {
                heralded: true,
                partitions: parts,
                ..SimConfig::new(m, 500, 4)
            })
            .unwrap();
            assert_eq!(r.gated_pulses, 500);
        }
        // sparse idler clicks: each opens two gates unless adjacent
        let m = CountingModel {
            dark_i: 1e-3,
            ..zero_model()
        };
        let r = simulate(&SimConfig {
            heralded: true,
            partitions: 5,
            ..SimConfig::new(m, 1_000_000, 4)
        })
        .unwrap();
        assert!(r.gated_pulses <= 2 * r.singles_i && r.gated_pulses + 10 >= 2 * r.singles_i, "{} {}", r.gated_pulses, r.singles_i);
    }

    #[test]
    fn high_power_point_matches_analytic() {
        let m = CountingModel::high_power();
        let r = simulate(&SimConfig::new(m, 10_000_000, 2024)).unwrap();
        let est = car_confidence(&r);
        let target = car_analytic(&m).unwrap();
        assert!((est.car - target).abs() < 3.0 * est.stderr.unwrap(), "{est:?} vs {target}");
        let rates = analytic_rates(&m).unwrap();
        let ps = rates.singles_s * m.gate_divisor as f64 / m.rep_rate_hz;
        assert!(within(r.singles_s, r.n_pulses, ps, 3.0));
        assert!(within(r.singles_i, r.n_pulses, rates.singles_i / m.rep_rate_hz, 3.0));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(simulate(&SimConfig::new(CountingModel::low_power(), 0, 0)).is_err());
        let mut cfg = SimConfig::new(CountingModel::low_power(), 10, 0);
        cfg.partitions = 0;
        assert!(simulate(&cfg).is_err());
        cfg.partitions = 1;
        cfg.model.eta_i = 2.0;
        assert!(simulate(&cfg).is_err());
    }
}
