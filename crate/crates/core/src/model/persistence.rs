use alloc::vec::Vec;

use super::{check_inputs, Forecaster};
use crate::error::Result;
use crate::nn::{Dropout, Matrix, Tape, Var};

/// Repeats the last observed value of every channel for all `N` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct Persistence {
    pub channels: usize,
    pub lookback: usize,
    pub horizon: usize,
}

impl Forecaster for Persistence {
    fn channels(&self) -> usize {
        self.channels
    }

    fn lookback(&self) -> usize {
        self.lookback
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn parameters(&self) -> Vec<&Matrix> {
        Vec::new()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        Vec::new()
    }

    fn record(&self, tape: &mut Tape, inputs: &[Matrix], _dropout: Option<&mut Dropout<'_>>) -> Result<Var> {
        check_inputs(inputs, self.channels, self.lookback)?;
        // L x N selector with ones in the last row
        let pick = tape.input(Matrix::from_fn(self.lookback, self.horizon, |r, _| {
            if r + 1 == self.lookback {
                1.0
            } else {
                0.0
            }
        }));
        let outs: Vec<Var> = inputs
            .iter()
            .map(|m| {
                let x = tape.input(m.clone());
                tape.matmul(x, pick)
            })
            .collect::<Result<_>>()?;
        tape.concat_cols(&outs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn repeats_last_value_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Persistence {
            channels: 3,
            lookback: 5,
            horizon: 2,
        };
        let w = Matrix::uniform(3, 5, 7.0, &mut rng);
        let p = m.predict(&w).unwrap();
        for c in 0..3 {
            assert_eq!(p.row(c), &[w.get(c, 4), w.get(c, 4)]);
        }
    }
}
