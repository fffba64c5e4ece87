//! Forecasters: the patch-mixing network, its head-arrangement variants, and
//! the MLP and DLinear baselines.
//!
//! Every forecaster maps a `C x L` window to a `C x N` forecast and can record
//! a batched forward pass on a [`Tape`] for training.

mod dlinear;
mod mixer;
mod mlp_baseline;
mod persistence;

pub use dlinear::{decompose, moving_average_window, DLinearConfig, DLinearModel};
pub use mixer::{
    mixing_param_count, mixing_weight_count, param_count, HeadMode, MixerBlock, MixerConfig,
    MixerModel, ProjectionParams,
};
pub use mlp_baseline::{MlpBaseline, MlpConfig};
pub use persistence::Persistence;

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::nn::{Dropout, Matrix, Tape, Var};

/// Common surface of all forecasters.
pub trait Forecaster {
    fn channels(&self) -> usize;
    fn lookback(&self) -> usize;
    fn horizon(&self) -> usize;

    /// Parameters in a fixed order; ids on the tape follow this order.
    fn parameters(&self) -> Vec<&Matrix>;
    fn parameters_mut(&mut self) -> Vec<&mut Matrix>;

    /// Records a batched forward pass. `inputs[c]` is the `B x L` batch of
    /// channel `c`; the result is `B x (C * N)` with channel-major columns.
    fn record(&self, tape: &mut Tape, inputs: &[Matrix], dropout: Option<&mut Dropout<'_>>) -> Result<Var>;

    /// Forecasts `C x N` from one `C x L` window with dropout disabled.
    fn predict(&self, window: &Matrix) -> Result<Matrix> {
        let mut out = self.predict_batch(&[window])?;
        Ok(out.pop().expect("one window in, one forecast out"))
    }

    fn predict_batch(&self, windows: &[&Matrix]) -> Result<Vec<Matrix>> {
        let inputs = batch_channels(windows, self.channels(), self.lookback())?;
        let mut tape = Tape::new();
        let out = self.record(&mut tape, &inputs, None)?;
        split_batch_output(tape.value(out), self.channels(), self.horizon())
    }

    fn param_count(&self) -> usize {
        self.parameters().iter().map(|m| m.len()).sum()
    }
}

/// Stacks channel `c` of every window into a `B x L` matrix, for each `c`.
pub fn batch_channels(windows: &[&Matrix], channels: usize, lookback: usize) -> Result<Vec<Matrix>> {
    for w in windows {
        if w.shape() != (channels, lookback) {
            return Err(shape_err(
                "forecast input",
                format!("{channels}x{lookback} window"),
                w.shape_string(),
            ));
        }
    }
    Ok((0..channels)
        .map(|c| Matrix::from_fn(windows.len(), lookback, |b, t| windows[b].get(c, t)))
        .collect())
}

/// Splits a `B x (C * N)` output into `B` matrices of shape `C x N`.
pub fn split_batch_output(out: &Matrix, channels: usize, horizon: usize) -> Result<Vec<Matrix>> {
    if out.cols() != channels * horizon {
        return Err(shape_err(
            "forecast output",
            format!("{} columns", channels * horizon),
            out.shape_string(),
        ));
    }
    (0..out.rows())
        .map(|b| Matrix::new(channels, horizon, out.row(b).to_vec()))
        .collect()
}

/// Which forecaster an experiment trains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    #[default]
    IipMixer,
    Mlp,
    Dlinear,
}

impl Arch {
    pub fn as_str(self) -> &'static str {
        match self {
            Arch::IipMixer => "iip_mixer",
            Arch::Mlp => "mlp",
            Arch::Dlinear => "dlinear",
        }
    }

    /// Row label used in metric tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Arch::IipMixer => "IIP-Mixer",
            Arch::Mlp => "MLP",
            Arch::Dlinear => "DLinear",
        }
    }
}

/// Any of the supported forecasters.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyModel {
    Mixer(MixerModel),
    Mlp(MlpBaseline),
    DLinear(DLinearModel),
}

impl AnyModel {
    pub fn arch(&self) -> Arch {
        match self {
            AnyModel::Mixer(_) => Arch::IipMixer,
            AnyModel::Mlp(_) => Arch::Mlp,
            AnyModel::DLinear(_) => Arch::Dlinear,
        }
    }

    fn inner(&self) -> &dyn Forecaster {
        match self {
            AnyModel::Mixer(m) => m,
            AnyModel::Mlp(m) => m,
            AnyModel::DLinear(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Forecaster {
        match self {
            AnyModel::Mixer(m) => m,
            AnyModel::Mlp(m) => m,
            AnyModel::DLinear(m) => m,
        }
    }
}

impl Forecaster for AnyModel {
    fn channels(&self) -> usize {
        self.inner().channels()
    }
    fn lookback(&self) -> usize {
        self.inner().lookback()
    }
    fn horizon(&self) -> usize {
        self.inner().horizon()
    }
    fn parameters(&self) -> Vec<&Matrix> {
        self.inner().parameters()
    }
    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        self.inner_mut().parameters_mut()
    }
    fn record(&self, tape: &mut Tape, inputs: &[Matrix], dropout: Option<&mut Dropout<'_>>) -> Result<Var> {
        self.inner().record(tape, inputs, dropout)
    }
}

/// Copies `values` into the model's parameters (same order and shapes).
pub fn load_parameters<F: Forecaster + ?Sized>(model: &mut F, values: &[Matrix]) -> Result<()> {
    let mut params = model.parameters_mut();
    if params.len() != values.len() {
        return Err(shape_err(
            "load_parameters",
            format!("{} tensors", params.len()),
            format!("{}", values.len()),
        ));
    }
    for (i, (p, v)) in params.iter_mut().zip(values).enumerate() {
        if p.shape() != v.shape() {
            return Err(shape_err(
                "load_parameters",
                format!("tensor {i} shaped {}", p.shape_string()),
                v.shape_string(),
            ));
        }
        p.as_mut_slice().copy_from_slice(v.as_slice());
    }
    Ok(())
}

pub(crate) fn check_inputs(inputs: &[Matrix], channels: usize, lookback: usize) -> Result<usize> {
    if inputs.len() != channels {
        return Err(shape_err(
            "forecast input",
            format!("{channels} channel batches"),
            format!("{}", inputs.len()),
        ));
    }
    let batch = inputs[0].rows();
    for m in inputs {
        if m.shape() != (batch, lookback) {
            return Err(shape_err(
                "forecast input",
                format!("{batch}x{lookback} per channel"),
                m.shape_string(),
            ));
        }
    }
    Ok(batch)
}
