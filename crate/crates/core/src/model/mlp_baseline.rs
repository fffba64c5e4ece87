use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_inputs, Forecaster};
use crate::error::{Error, Result};
use crate::nn::{Dropout, Matrix, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub channels: usize,
    pub lookback: usize,
    pub horizon: usize,
    /// Widths of the hidden layers; empty means a single linear layer.
    pub hidden: Vec<usize>,
    pub dropout: f64,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.lookback == 0 || self.horizon == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "MLP dimensions must be positive (channels {}, lookback {}, horizon {}, hidden {:?})",
                self.channels, self.lookback, self.horizon, self.hidden
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.channels * self.lookback);
        w.extend_from_slice(&self.hidden);
        w.push(self.channels * self.horizon);
        w
    }
}

/// `weight` is `out x in`, `bias` is `1 x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Matrix,
}

/// Fully connected baseline over the flattened `C * L` window, GELU between
/// layers, reshaped to `C x N` at the end.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpBaseline {
    config: MlpConfig,
    pub layers: Vec<DenseLayer>,
}

impl MlpBaseline {
    pub fn new<R: Rng + ?Sized>(config: MlpConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let layers = config
            .widths()
            .windows(2)
            .map(|io| DenseLayer {
                weight: Matrix::uniform(io[1], io[0], 1.0 / libm::sqrt(io[0] as f64), rng),
                bias: Matrix::zeros(1, io[1]),
            })
            .collect();
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }
}

impl Forecaster for MlpBaseline {
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
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    fn record(&self, tape: &mut Tape, inputs: &[Matrix], mut dropout: Option<&mut Dropout<'_>>) -> Result<Var> {
        check_inputs(inputs, self.config.channels, self.config.lookback)?;
        let channel_vars: Vec<Var> = inputs.iter().map(|m| tape.input(m.clone())).collect();
        let mut x = tape.concat_cols(&channel_vars)?;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let w = tape.param(2 * i, &layer.weight)?;
            let b = tape.param(2 * i + 1, &layer.bias)?;
            let y = tape.matmul_t(x, w)?;
            x = tape.add_row(y, b)?;
            if i < last {
                x = tape.gelu(x);
                if let Some(d) = dropout.as_deref_mut() {
                    x = tape.dropout(x, d.rate, &mut *d.rng)?;
                }
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gelu;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(hidden: Vec<usize>) -> MlpConfig {
        MlpConfig {
            channels: 2,
            lookback: 3,
            horizon: 3,
            hidden,
            dropout: 0.0,
        }
    }

    #[test]
    fn identity_single_layer_returns_flattened_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = MlpBaseline::new(cfg(vec![]), &mut rng).unwrap();
        m.layers[0].weight = Matrix::identity(6);
        let window = Matrix::uniform(2, 3, 1.0, &mut rng);
        assert_eq!(m.predict(&window).unwrap(), window);
    }

    #[test]
    fn zero_parameters_give_zero_forecast() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = MlpBaseline::new(cfg(vec![5]), &mut rng).unwrap();
        for p in m.parameters_mut() {
            *p = Matrix::zeros(p.rows(), p.cols());
        }
        let window = Matrix::uniform(2, 3, 1.0, &mut rng);
        assert_eq!(m.predict(&window).unwrap(), Matrix::zeros(2, 3));
    }

    #[test]
    fn two_layer_net_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut m = MlpBaseline::new(cfg(vec![4]), &mut rng).unwrap();
        for p in m.parameters_mut() {
            *p = Matrix::uniform(p.rows(), p.cols(), 0.5, &mut rng);
        }
        let window = Matrix::uniform(2, 3, 1.0, &mut rng);
        let x = window.as_slice();
        let (l1, l2) = (&m.layers[0], &m.layers[1]);
        let h: Vec<f64> = (0..4)
            .map(|k| gelu(l1.bias.get(0, k) + (0..6).map(|j| l1.weight.get(k, j) * x[j]).sum::<f64>()))
            .collect();
        let want: Vec<f64> = (0..6)
            .map(|o| l2.bias.get(0, o) + (0..4).map(|k| l2.weight.get(o, k) * h[k]).sum::<f64>())
            .collect();
        let got = m.predict(&window).unwrap();
        for (g, w) in got.as_slice().iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = MlpBaseline::new(cfg(vec![4]), &mut rng).unwrap();
        assert!(m.predict(&Matrix::zeros(3, 3)).is_err());
    }
}
