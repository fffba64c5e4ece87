use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_inputs, Forecaster};
use crate::error::{shape_err, Error, Result};
use crate::nn::{Dropout, Matrix, Tape, Var};

/// Largest odd window not above `requested` nor `lookback`.
pub fn moving_average_window(requested: usize, lookback: usize) -> usize {
    let w = requested.min(lookback).max(1);
    if w.is_multiple_of(2) {
        w - 1
    } else {
        w
    }
}

/// Splits `series` into a centred moving-average trend (edges replicated)
/// and the remainder `series - trend`.
///
/// The average is accumulated as deviations from the centre value, so a
/// constant series has a trend equal to itself and a zero remainder, and a
/// symmetric window on a straight line returns the line.
pub fn decompose(series: &[f64], window: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if window.is_multiple_of(2) || window > series.len() {
        return Err(Error::InvalidArgument(format!(
            "moving-average window {window} must be odd and at most the series length {}",
            series.len()
        )));
    }
    let half = window / 2;
    let last = series.len() - 1;
    let at = |i: isize| series[i.clamp(0, last as isize) as usize];
    let mut trend = Vec::with_capacity(series.len());
    for (i, &centre) in series.iter().enumerate() {
        let i = i as isize;
        let dev: f64 = (i - half as isize..=i + half as isize)
            .map(|j| at(j) - centre)
            .sum();
        trend.push(centre + dev / window as f64);
    }
    let remainder = series.iter().zip(&trend).map(|(s, t)| s - t).collect();
    Ok((trend, remainder))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DLinearConfig {
    pub channels: usize,
    pub lookback: usize,
    pub horizon: usize,
    /// Odd moving-average window, at most `lookback`.
    pub ma_window: usize,
}

impl DLinearConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.lookback == 0 || self.horizon == 0 {
            return Err(Error::InvalidArgument(format!(
                "channels, lookback and horizon must be positive (got {}, {}, {})",
                self.channels, self.lookback, self.horizon
            )));
        }
        if self.ma_window.is_multiple_of(2) || self.ma_window > self.lookback {
            return Err(Error::InvalidArgument(format!(
                "moving-average window {} must be odd and at most {}",
                self.ma_window, self.lookback
            )));
        }
        Ok(())
    }
}

/// Trend/remainder decomposition followed by one linear layer per
/// component, shared by all channels.
#[derive(Clone, Debug, PartialEq)]
pub struct DLinearModel {
    config: DLinearConfig,
    /// `N x L`
    pub trend_weight: Matrix,
    pub trend_bias: Matrix,
    /// `N x L`
    pub remainder_weight: Matrix,
    pub remainder_bias: Matrix,
}

impl DLinearModel {
    pub fn new<R: Rng + ?Sized>(config: DLinearConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let bound = 1.0 / libm::sqrt(config.lookback as f64);
        let (n, l) = (config.horizon, config.lookback);
        Ok(Self {
            trend_weight: Matrix::uniform(n, l, bound, rng),
            trend_bias: Matrix::zeros(1, n),
            remainder_weight: Matrix::uniform(n, l, bound, rng),
            remainder_bias: Matrix::zeros(1, n),
            config,
        })
    }

    pub fn config(&self) -> &DLinearConfig {
        &self.config
    }

    /// Univariate forecast of `N` steps from `L` observations.
    pub fn forward_series(&self, series: &[f64]) -> Result<Vec<f64>> {
        if series.len() != self.config.lookback {
            return Err(shape_err(
                "dlinear_forward",
                format!("{} observations", self.config.lookback),
                format!("{}", series.len()),
            ));
        }
        let (trend, rem) = decompose(series, self.config.ma_window)?;
        Ok((0..self.config.horizon)
            .map(|j| {
                let t: f64 = self.trend_weight.row(j).iter().zip(&trend).map(|(w, x)| w * x).sum();
                let r: f64 = self.remainder_weight.row(j).iter().zip(&rem).map(|(w, x)| w * x).sum();
                t + self.trend_bias.get(0, j) + r + self.remainder_bias.get(0, j)
            })
            .collect())
    }
}

impl Forecaster for DLinearModel {
    fn channels(&self) -> usize {
        self.config.channels
    }

    fn lookback(&self) -> usize {
        self.config.lookback
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn parameters(&self) -> Vec<&Matrix> {
        alloc::vec![
            &self.trend_weight,
            &self.trend_bias,
            &self.remainder_weight,
            &self.remainder_bias
        ]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        alloc::vec![
            &mut self.trend_weight,
            &mut self.trend_bias,
            &mut self.remainder_weight,
            &mut self.remainder_bias
        ]
    }

    fn record(&self, tape: &mut Tape, inputs: &[Matrix], _dropout: Option<&mut Dropout<'_>>) -> Result<Var> {
        let batch = check_inputs(inputs, self.config.channels, self.config.lookback)?;
        let tw = tape.param(0, &self.trend_weight)?;
        let tb = tape.param(1, &self.trend_bias)?;
        let rw = tape.param(2, &self.remainder_weight)?;
        let rb = tape.param(3, &self.remainder_bias)?;
        let l = self.config.lookback;
        let mut outputs = Vec::with_capacity(inputs.len());
        for input in inputs {
            let mut trend = Matrix::zeros(batch, l);
            let mut rem = Matrix::zeros(batch, l);
            for b in 0..batch {
                let (t, r) = decompose(input.row(b), self.config.ma_window)?;
                trend.row_mut(b).copy_from_slice(&t);
                rem.row_mut(b).copy_from_slice(&r);
            }
            let t = tape.input(trend);
            let r = tape.input(rem);
            let yt = tape.matmul_t(t, tw)?;
            let yt = tape.add_row(yt, tb)?;
            let yr = tape.matmul_t(r, rw)?;
            let yr = tape.add_row(yr, rb)?;
            outputs.push(tape.add(yt, yr)?);
        }
        tape.concat_cols(&outputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn window_clipping() {
        assert_eq!(moving_average_window(25, 16), 15);
        assert_eq!(moving_average_window(25, 64), 25);
        assert_eq!(moving_average_window(5, 16), 5);
        assert_eq!(moving_average_window(4, 16), 3);
    }

    #[test]
    fn constant_series() {
        let s = [0.1; 16];
        let (t, r) = decompose(&s, 15).unwrap();
        assert!(t.iter().all(|&v| v == 0.1));
        assert!(r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ramp_interior_is_its_own_trend() {
        let s: Vec<f64> = (0..16).map(f64::from).collect();
        let (t, r) = decompose(&s, 5).unwrap();
        for i in 2..14 {
            assert_eq!(t[i], s[i]);
            assert_eq!(r[i], 0.0);
        }
        // edge replication pulls the ends toward the boundary value
        assert_eq!(t[0], (0.0 + 0.0 + 0.0 + 1.0 + 2.0) / 5.0);
    }

    #[test]
    fn decomposition_identity_on_capacity_scale_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let s: Vec<f64> = (0..16).map(|_| rng.random_range(1.0..2.0)).collect();
            let (t, r) = decompose(&s, 15).unwrap();
            for i in 0..16 {
                assert_eq!(t[i] + r[i], s[i]);
            }
        }
    }

    #[test]
    fn rejects_even_or_oversized_window() {
        assert!(decompose(&[1.0; 8], 4).is_err());
        assert!(decompose(&[1.0; 8], 9).is_err());
    }

    #[test]
    fn series_forward_agrees_with_batched_record() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cfg = DLinearConfig {
            channels: 2,
            lookback: 16,
            horizon: 2,
            ma_window: 15,
        };
        let m = DLinearModel::new(cfg, &mut rng).unwrap();
        let window = Matrix::uniform(2, 16, 1.0, &mut rng);
        let y = m.predict(&window).unwrap();
        for c in 0..2 {
            let direct = m.forward_series(window.row(c)).unwrap();
            for j in 0..2 {
                assert!((y.get(c, j) - direct[j]).abs() < 1e-14);
            }
        }
    }
}
