use alloc::format;

use rand::Rng;

use super::{Dropout, Matrix, Tape, Var};
use crate::error::{shape_err, Result};

/// Which axis of a 2D input an [`Mlp2`] mixes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixAxis {
    /// Mix the entries of each column (vector length = row count); columns
    /// are processed independently with shared weights.
    Rows,
    /// Mix the entries of each row (vector length = column count); rows are
    /// processed independently with shared weights.
    Cols,
}

/// Two-layer perceptron `W_out * gelu(W_in * v + b_in) + b_out` applied to
/// every vector along the mixed axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp2 {
    /// `hidden x in`
    pub w_in: Matrix,
    /// `1 x hidden`
    pub b_in: Matrix,
    /// `out x hidden`
    pub w_out: Matrix,
    /// `1 x out`
    pub b_out: Matrix,
}

/// Tape handles for the four parameters of an [`Mlp2`].
#[derive(Clone, Copy, Debug)]
pub struct Mlp2Vars {
    pub w_in: Var,
    pub b_in: Var,
    pub w_out: Var,
    pub b_out: Var,
}

impl Mlp2 {
    pub const PARAMS: usize = 4;

    /// Weights uniform in `+-1/sqrt(fan_in)`, biases zero.
    pub fn random<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        let in_bound = 1.0 / libm::sqrt(input as f64);
        let hidden_bound = 1.0 / libm::sqrt(hidden as f64);
        Self {
            w_in: Matrix::uniform(hidden, input, in_bound, rng),
            b_in: Matrix::zeros(1, hidden),
            w_out: Matrix::uniform(output, hidden, hidden_bound, rng),
            b_out: Matrix::zeros(1, output),
        }
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w_in: Matrix::zeros(hidden, input),
            b_in: Matrix::zeros(1, hidden),
            w_out: Matrix::zeros(output, hidden),
            b_out: Matrix::zeros(1, output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_in.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_in.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w_out.rows()
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|m| m.len()).sum()
    }

    pub fn parameters(&self) -> [&Matrix; 4] {
        [&self.w_in, &self.b_in, &self.w_out, &self.b_out]
    }

    pub fn parameters_mut(&mut self) -> [&mut Matrix; 4] {
        [&mut self.w_in, &mut self.b_in, &mut self.w_out, &mut self.b_out]
    }

    /// Registers the parameters as ids `first_id..first_id + 4`.
    pub fn register(&self, tape: &mut Tape, first_id: usize) -> Result<Mlp2Vars> {
        Ok(Mlp2Vars {
            w_in: tape.param(first_id, &self.w_in)?,
            b_in: tape.param(first_id + 1, &self.b_in)?,
            w_out: tape.param(first_id + 2, &self.w_out)?,
            b_out: tape.param(first_id + 3, &self.b_out)?,
        })
    }

    /// Records the forward pass on `tape`. Dropout, when given, follows the
    /// hidden activation and the output.
    pub fn record(
        &self,
        tape: &mut Tape,
        x: Var,
        axis: MixAxis,
        vars: &Mlp2Vars,
        mut dropout: Option<&mut Dropout<'_>>,
    ) -> Result<Var> {
        let (rows, cols) = tape.value(x).shape();
        let mixed = match axis {
            MixAxis::Rows => rows,
            MixAxis::Cols => cols,
        };
        if mixed != self.input_dim() {
            return Err(shape_err(
                "mlp2_forward",
                format!("mixed axis of length {}", self.input_dim()),
                format!("{rows}x{cols} mixed along {axis:?}"),
            ));
        }
        let x = match axis {
            MixAxis::Cols => x,
            MixAxis::Rows => tape.transpose(x),
        };
        let h = tape.matmul_t(x, vars.w_in)?;
        let h = tape.add_row(h, vars.b_in)?;
        let mut h = tape.gelu(h);
        if let Some(d) = dropout.as_deref_mut() {
            h = tape.dropout(h, d.rate, &mut *d.rng)?;
        }
        let o = tape.matmul_t(h, vars.w_out)?;
        let mut o = tape.add_row(o, vars.b_out)?;
        if let Some(d) = dropout {
            o = tape.dropout(o, d.rate, &mut *d.rng)?;
        }
        Ok(match axis {
            MixAxis::Cols => o,
            MixAxis::Rows => tape.transpose(o),
        })
    }

    /// Inference-only forward pass.
    pub fn forward(&self, x: &Matrix, axis: MixAxis) -> Result<Matrix> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, 0)?;
        let xv = tape.input(x.clone());
        let out = self.record(&mut tape, xv, axis, &vars, None)?;
        Ok(tape.value(out).clone())
    }
}
