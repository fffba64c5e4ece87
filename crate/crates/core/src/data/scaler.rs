use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use super::BatterySeries;
use crate::error::{Error, Result};

/// Per-feature z-score statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaler {
    pub feature_names: Vec<String>,
    pub mean: Vec<f64>,
    /// Population standard deviation; constant features get 1.
    pub std: Vec<f64>,
}

const MIN_STD: f64 = 1e-12;

impl Scaler {
    /// Fits on the given cycle ranges of the given series.
    pub fn fit(parts: &[(&BatterySeries, Range<usize>)]) -> Result<Self> {
        let (first, _) = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument(String::from("scaler needs training data")))?;
        let channels = first.channels();
        for (s, r) in parts {
            if s.feature_names != first.feature_names {
                return Err(Error::InvalidArgument(format!(
                    "battery `{}` has a different feature set",
                    s.battery_id
                )));
            }
            if r.end > s.len() || r.start > r.end {
                return Err(Error::InvalidArgument(format!(
                    "cycle range {r:?} outside battery `{}` ({} cycles)",
                    s.battery_id,
                    s.len()
                )));
            }
        }
        let count: usize = parts.iter().map(|(_, r)| r.len()).sum();
        if count == 0 {
            return Err(Error::InvalidArgument(String::from("scaler needs at least one training cycle")));
        }
        let mut mean = alloc::vec![0.0; channels];
        let mut std = alloc::vec![0.0; channels];
        for f in 0..channels {
            let values = || parts.iter().flat_map(|(s, r)| s.feature(f)[r.clone()].iter().copied());
            let m = values().sum::<f64>() / count as f64;
            let var = values().map(|v| (v - m) * (v - m)).sum::<f64>() / count as f64;
            let sd = libm::sqrt(var);
            mean[f] = m;
            std[f] = if sd > MIN_STD * (1.0 + libm::fabs(m)) { sd } else { 1.0 };
        }
        Ok(Self {
            feature_names: first.feature_names.clone(),
            mean,
            std,
        })
    }

    fn check(&self, s: &BatterySeries) -> Result<()> {
        if s.feature_names != self.feature_names {
            return Err(Error::InvalidArgument(format!(
                "battery `{}` features {:?} do not match scaler features {:?}",
                s.battery_id, s.feature_names, self.feature_names
            )));
        }
        Ok(())
    }

    pub fn transform(&self, s: &BatterySeries) -> Result<BatterySeries> {
        self.check(s)?;
        let mut out = s.clone();
        for f in 0..s.channels() {
            for v in out.values.row_mut(f) {
                *v = (*v - self.mean[f]) / self.std[f];
            }
        }
        Ok(out)
    }

    pub fn inverse(&self, s: &BatterySeries) -> Result<BatterySeries> {
        self.check(s)?;
        let mut out = s.clone();
        for f in 0..s.channels() {
            for v in out.values.row_mut(f) {
                *v = self.inverse_value(f, *v);
            }
        }
        Ok(out)
    }

    #[inline]
    pub fn transform_value(&self, feature: usize, v: f64) -> f64 {
        (v - self.mean[feature]) / self.std[feature]
    }

    #[inline]
    pub fn inverse_value(&self, feature: usize, v: f64) -> f64 {
        v * self.std[feature] + self.mean[feature]
    }

    /// Keeps the statistics of the features at `indices`.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            feature_names: indices.iter().map(|&i| self.feature_names[i].clone()).collect(),
            mean: indices.iter().map(|&i| self.mean[i]).collect(),
            std: indices.iter().map(|&i| self.std[i]).collect(),
        }
    }
}

/// Fits on every cycle of `train` and transforms `all`.
pub fn fit_apply_scaler(train: &[BatterySeries], all: &[BatterySeries]) -> Result<(Vec<BatterySeries>, Scaler)> {
    let parts: Vec<(&BatterySeries, Range<usize>)> = train.iter().map(|s| (s, 0..s.len())).collect();
    let scaler = Scaler::fit(&parts)?;
    let scaled = all.iter().map(|s| scaler.transform(s)).collect::<Result<_>>()?;
    Ok((scaled, scaler))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_series, SynthConfig};

    fn fleet() -> Vec<BatterySeries> {
        (0..3)
            .map(|b| {
                let cfg = SynthConfig {
                    cycles: 80,
                    noise_std: 0.01,
                    ..SynthConfig::default()
                };
                synth_series(&cfg, &alloc::format!("S{b}"), b as u64).unwrap()
            })
            .collect()
    }

    #[test]
    fn training_features_are_standardised() {
        let train = fleet();
        let (scaled, _) = fit_apply_scaler(&train, &train).unwrap();
        let count: f64 = scaled.iter().map(|s| s.len() as f64).sum();
        for f in 0..scaled[0].channels() {
            let vals = || scaled.iter().flat_map(|s| s.feature(f).iter().copied());
            let m = vals().sum::<f64>() / count;
            let sd = libm::sqrt(vals().map(|v| (v - m) * (v - m)).sum::<f64>() / count);
            assert!(m.abs() < 1e-10, "feature {f} mean {m}");
            assert!((sd - 1.0).abs() < 1e-10, "feature {f} std {sd}");
        }
    }

    #[test]
    fn constant_feature_maps_to_zero() {
        let mut train = fleet();
        for s in &mut train {
            for v in s.values.row_mut(4) {
                *v = -2.0;
            }
        }
        let (scaled, scaler) = fit_apply_scaler(&train, &train).unwrap();
        assert_eq!(scaler.std[4], 1.0);
        assert!(scaled.iter().all(|s| s.feature(4).iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn inverse_round_trip() {
        let train = fleet();
        let (scaled, scaler) = fit_apply_scaler(&train, &train).unwrap();
        for (orig, z) in train.iter().zip(&scaled) {
            let back = scaler.inverse(z).unwrap();
            assert!(back.values.max_abs_diff(&orig.values).unwrap() < 1e-12);
        }
    }

    #[test]
    fn statistics_come_from_training_data_only() {
        let mut all = fleet();
        // shift the held-out battery so its distribution differs
        for v in all[2].values.row_mut(0) {
            *v += 0.5;
        }
        let (_, train_only) = fit_apply_scaler(&all[..2], &all).unwrap();
        let (_, with_test) = fit_apply_scaler(&all, &all).unwrap();
        assert_ne!(train_only.mean[0], with_test.mean[0]);
        let z_train_only = train_only.transform(&all[2]).unwrap();
        let z_with_test = with_test.transform(&all[2]).unwrap();
        assert_ne!(z_train_only.values, z_with_test.values);
    }

    #[test]
    fn empty_training_set_rejected() {
        assert!(fit_apply_scaler(&[], &fleet()).is_err());
    }
}
