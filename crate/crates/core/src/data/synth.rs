use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::records::{CycleRecord, SignalStats};
use super::BatterySeries;
use crate::error::{Error, Result};

/// Linear capacity fade with optional regeneration spikes and noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Initial capacity in Ah.
    pub c0: f64,
    /// Fraction of `c0` lost per cycle.
    pub fade_rate: f64,
    /// Height of a regeneration spike in Ah.
    pub regen_amp: f64,
    /// Cycles between spikes; 0 disables them.
    pub regen_period: usize,
    /// Standard deviation of the capacity noise in Ah.
    pub noise_std: f64,
    pub cycles: usize,
    /// Scale of the noise on voltage, current and temperature aggregates.
    pub signal_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            c0: 2.0,
            fade_rate: 0.001,
            regen_amp: 0.0,
            regen_period: 0,
            noise_std: 0.001,
            cycles: 300,
            signal_noise: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.c0 > 0.0
            && self.cycles >= 1
            && self.fade_rate.is_finite()
            && self.fade_rate >= 0.0
            && self.regen_amp.is_finite()
            && self.noise_std >= 0.0
            && self.noise_std.is_finite()
            && self.signal_noise >= 0.0
            && self.signal_noise.is_finite();
        if !ok {
            return Err(Error::InvalidArgument(format!("invalid synthetic battery config {self:?}")));
        }
        Ok(())
    }

    /// Noise-free capacity at cycle index `c` (no spikes).
    pub fn fade_line(&self, c: usize) -> f64 {
        self.c0 * (1.0 - self.fade_rate * c as f64)
    }

    fn spike(&self, c: usize) -> f64 {
        if self.regen_period == 0 || c < self.regen_period {
            return 0.0;
        }
        // sharp recovery that decays over a few cycles
        libm::exp(-((c % self.regen_period) as f64) / 2.0)
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn generate<R: Rng + ?Sized>(cfg: &SynthConfig, battery_id: &str, rng: &mut R) -> Result<Vec<CycleRecord>> {
    cfg.validate()?;
    let floor = 0.01 * cfg.c0;
    let sn = cfg.signal_noise;
    Ok((0..cfg.cycles)
        .map(|c| {
            // every draw happens unconditionally so the stream layout does
            // not depend on the config values
            let eps: [f64; 8] = core::array::from_fn(|_| normal(rng));
            let capacity = (cfg.fade_line(c) + cfg.regen_amp * cfg.spike(c) + cfg.noise_std * eps[0]).max(floor);
            let health = capacity / cfg.c0;
            let wear = 1.0 - health;

            let v_mean = 3.2 + 0.35 * health + 0.01 * sn * eps[1];
            let voltage = SignalStats {
                min: v_mean - 0.5 - 0.4 * wear - 0.01 * sn * libm::fabs(eps[2]),
                max: 4.2 + 0.002 * sn * libm::fabs(eps[3]),
                mean: v_mean,
            };
            let i_mean = -(1.7 + 0.25 * health) + 0.005 * sn * eps[4];
            let current = SignalStats {
                min: i_mean.min(-2.0) - 0.005 * sn * libm::fabs(eps[5]),
                max: 0.005 * sn * libm::fabs(eps[5]),
                mean: i_mean,
            };
            let t_mean = 30.0 + 8.0 * wear + 0.2 * sn * eps[6];
            let temperature = SignalStats {
                min: (24.0 + 0.1 * sn * eps[7]).min(t_mean),
                max: t_mean + 4.0 + 6.0 * wear + 0.2 * sn * libm::fabs(eps[7]),
                mean: t_mean,
            };
            CycleRecord {
                battery_id: String::from(battery_id),
                cycle: c as u32 + 1,
                capacity,
                voltage,
                current,
                temperature,
            }
        })
        .collect())
}

/// Cycle records of one synthetic battery, fully determined by `seed`.
pub fn synth_degradation(cfg: &SynthConfig, battery_id: &str, seed: u64) -> Result<Vec<CycleRecord>> {
    generate(cfg, battery_id, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn synth_series(cfg: &SynthConfig, battery_id: &str, seed: u64) -> Result<BatterySeries> {
    BatterySeries::from_records(&synth_degradation(cfg, battery_id, seed)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FleetConfig {
    pub batteries: usize,
    #[serde(flatten)]
    pub battery: SynthConfig,
    /// Relative spread of the fade rate across the fleet: battery `b` of `n`
    /// fades at `fade_rate * (1 + spread * (2b / (n - 1) - 1))`.
    pub fade_spread: f64,
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self {
            batteries: 4,
            battery: SynthConfig::default(),
            fade_spread: 0.1,
        }
    }
}

impl FleetConfig {
    pub fn battery_id(b: usize) -> String {
        format!("SYN{:02}", b + 1)
    }

    pub fn config_of(&self, b: usize) -> SynthConfig {
        let mut cfg = self.battery.clone();
        if self.batteries > 1 {
            let pos = 2.0 * b as f64 / (self.batteries - 1) as f64 - 1.0;
            cfg.fade_rate *= 1.0 + self.fade_spread * pos;
        }
        cfg
    }
}

/// Records of every battery in the fleet, battery-major. Battery `b` draws
/// from stream `b` of the seeded generator.
pub fn synth_fleet(fleet: &FleetConfig, seed: u64) -> Result<Vec<CycleRecord>> {
    if fleet.batteries == 0 || !(0.0..1.0).contains(&fleet.fade_spread) {
        return Err(Error::InvalidArgument(format!(
            "fleet needs >= 1 battery and fade_spread in [0, 1), got {} and {}",
            fleet.batteries, fleet.fade_spread
        )));
    }
    let mut out = Vec::with_capacity(fleet.batteries * fleet.battery.cycles);
    for b in 0..fleet.batteries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        out.extend(generate(&fleet.config_of(b), &FleetConfig::battery_id(b), &mut rng)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean(fade: f64, cycles: usize) -> SynthConfig {
        SynthConfig {
            fade_rate: fade,
            noise_std: 0.0,
            cycles,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn noise_free_capacity_strictly_decreases() {
        let s = synth_series(&clean(0.001, 300), "A", 3).unwrap();
        let cap = s.capacity().unwrap();
        assert!(cap.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn crossing_matches_fade_line() {
        for fade in [0.0015, 0.0013, 0.0007, 0.0031] {
            let cfg = clean(fade, 1000);
            let s = synth_series(&cfg, "A", 0).unwrap();
            let cap = s.capacity().unwrap();
            let threshold = 0.8 * cfg.c0;
            let crossing = cap.iter().position(|&c| c < threshold).unwrap();
            // first integer cycle with c * fade > 0.2
            let want = libm::ceil(0.2 / fade) as usize;
            assert_eq!(crossing, want, "fade {fade}");
        }
    }

    #[test]
    fn same_seed_same_series() {
        let cfg = SynthConfig {
            regen_amp: 0.05,
            regen_period: 30,
            ..SynthConfig::default()
        };
        assert_eq!(synth_series(&cfg, "A", 9).unwrap(), synth_series(&cfg, "A", 9).unwrap());
        assert_ne!(synth_series(&cfg, "A", 9).unwrap(), synth_series(&cfg, "A", 10).unwrap());
    }

    #[test]
    fn aggregates_are_ordered() {
        let recs = synth_fleet(&FleetConfig::default(), 1).unwrap();
        assert_eq!(recs.len(), 4 * 300);
        for r in &recs {
            for s in [r.voltage, r.current, r.temperature] {
                assert!(s.min <= s.mean && s.mean <= s.max, "{r:?}");
            }
        }
    }

    #[test]
    fn fleet_batteries_differ_and_regroup() {
        let recs = synth_fleet(&FleetConfig::default(), 5).unwrap();
        let series = BatterySeries::group_records(&recs).unwrap();
        assert_eq!(series.len(), 4);
        assert_eq!(series[0].battery_id, "SYN01");
        assert_ne!(series[0].values, series[1].values);
        let fades: Vec<f64> = (0..4).map(|b| FleetConfig::default().config_of(b).fade_rate).collect();
        assert!((fades[0] - 0.0009).abs() < 1e-15 && (fades[3] - 0.0011).abs() < 1e-15);
    }

    #[test]
    fn regeneration_adds_spikes() {
        let base = clean(0.001, 120);
        let spiky = SynthConfig {
            regen_amp: 0.05,
            regen_period: 40,
            ..base.clone()
        };
        let a = synth_series(&base, "A", 0).unwrap();
        let b = synth_series(&spiky, "A", 0).unwrap();
        let (ca, cb) = (a.capacity().unwrap(), b.capacity().unwrap());
        assert_eq!(&ca[..40], &cb[..40]);
        assert!((cb[40] - ca[40] - 0.05).abs() < 1e-12);
        assert!(cb[41] > cb[40] - 0.05 && cb[40] > cb[39]);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(synth_series(&SynthConfig { c0: 0.0, ..SynthConfig::default() }, "A", 0).is_err());
        assert!(synth_series(&SynthConfig { cycles: 0, ..SynthConfig::default() }, "A", 0).is_err());
    }
}
