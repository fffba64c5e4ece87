use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ExperimentConfig;
use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::metrics::{batch_wmse, FeatureWeights};
use crate::model::{batch_channels, AnyModel, Arch, DLinearModel, Forecaster, MixerModel, MlpBaseline};
use crate::nn::{Dropout, Matrix, Optimizer, Tape};

/// Random stream used for parameter initialisation.
pub const INIT_STREAM: u64 = 0;
/// Random stream used for shuffling and dropout masks.
pub const TRAIN_STREAM: u64 = 1;

pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn build_model(cfg: &ExperimentConfig, channels: usize, seed: u64) -> Result<AnyModel> {
    let mut rng = seeded_rng(seed, INIT_STREAM);
    let m = &cfg.model;
    Ok(match m.arch {
        Arch::IipMixer => AnyModel::Mixer(MixerModel::new(m.mixer(channels), &mut rng)?),
        Arch::Mlp => AnyModel::Mlp(MlpBaseline::new(m.mlp(channels), &mut rng)?),
        Arch::Dlinear => AnyModel::DLinear(DLinearModel::new(m.dlinear(channels), &mut rng)?),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation loss (the last
    /// epoch when there is no validation data).
    pub model: AnyModel,
    pub history: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
    /// Epoch whose loss stopped being finite; training stopped there.
    pub diverged_at: Option<usize>,
}

impl TrainOutcome {
    pub fn ensure_converged(&self) -> Result<()> {
        match self.diverged_at {
            Some(epoch) => Err(Error::Diverged { epoch }),
            None => Ok(()),
        }
    }
}

/// `B x (C * N)` targets with channel-major columns.
pub fn stack_targets(samples: &[&WindowSample]) -> Matrix {
    let (c, n) = samples[0].y.shape();
    Matrix::from_fn(samples.len(), c * n, |b, col| samples[b].y.get(col / n, col % n))
}

/// Mean weighted loss of `model` over `samples`, without dropout.
pub fn evaluate_loss<F: Forecaster + ?Sized>(model: &F, samples: &[WindowSample], w: &FeatureWeights) -> Result<f64> {
    const CHUNK: usize = 256;
    let mut total = 0.0;
    for chunk in samples.chunks(CHUNK) {
        let refs: Vec<&WindowSample> = chunk.iter().collect();
        let windows: Vec<&Matrix> = chunk.iter().map(|s| &s.x).collect();
        let inputs = batch_channels(&windows, model.channels(), model.lookback())?;
        let mut tape = Tape::new();
        let out = model.record(&mut tape, &inputs, None)?;
        let (loss, _) = batch_wmse(tape.value(out), &stack_targets(&refs), w, model.horizon())?;
        total += loss * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Minibatch training with best-validation selection. Loss weights are the
/// selected features' importances when `cfg.loss.weighted`, uniform
/// otherwise.
pub fn train_model(
    cfg: &ExperimentConfig,
    mut model: AnyModel,
    train: &[WindowSample],
    val: &[WindowSample],
    alpha: &FeatureWeights,
    seed: u64,
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::InvalidArgument(alloc::string::String::from("no training windows")));
    }
    let weights = if cfg.loss.weighted {
        alpha.clone()
    } else {
        FeatureWeights::uniform(model.channels())
    };
    if weights.len() != model.channels() {
        return Err(Error::InvalidArgument(alloc::format!(
            "{} loss weights for {} channels",
            weights.len(),
            model.channels()
        )));
    }
    let mut rng = seeded_rng(seed, TRAIN_STREAM);
    let mut opt = Optimizer::new(cfg.train.optimizer, cfg.train.lr)?;
    let dropout_rate = cfg.model.dropout;
    let (c, l, n) = (model.channels(), model.lookback(), model.horizon());

    let mut history = Vec::with_capacity(cfg.train.epochs);
    let mut best: Option<(f64, usize, Vec<Matrix>)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.train.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut finite = true;
        for batch in order.chunks(cfg.train.batch) {
            let samples: Vec<&WindowSample> = batch.iter().map(|&i| &train[i]).collect();
            let windows: Vec<&Matrix> = samples.iter().map(|s| &s.x).collect();
            let inputs = batch_channels(&windows, c, l)?;
            let targets = stack_targets(&samples);
            let mut tape = Tape::new();
            let out = if dropout_rate > 0.0 {
                let mut d = Dropout {
                    rate: dropout_rate,
                    rng: &mut rng,
                };
                model.record(&mut tape, &inputs, Some(&mut d))?
            } else {
                model.record(&mut tape, &inputs, None)?
            };
            let (loss, grad) = batch_wmse(tape.value(out), &targets, &weights, n)?;
            if !loss.is_finite() {
                finite = false;
                break;
            }
            sum += loss * batch.len() as f64;
            if model.parameters().is_empty() {
                continue;
            }
            let grads = tape.backward(&[(out, grad)])?.into_params()?;
            let mut params = model.parameters_mut();
            if opt.step(&mut params, &grads).is_err() {
                finite = false;
                break;
            }
        }
        if !finite {
            log::warn!("training diverged at epoch {epoch}");
            history.push(EpochStats {
                epoch,
                train_loss: f64::NAN,
                val_loss: None,
            });
            if let Some((_, _, params)) = &best {
                crate::model::load_parameters(&mut model, params)?;
            }
            return Ok(TrainOutcome {
                model,
                history,
                best_epoch: best.map(|b| b.1),
                diverged_at: Some(epoch),
            });
        }
        let train_loss = sum / train.len() as f64;
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(evaluate_loss(&model, val, &weights)?)
        };
        log::debug!("epoch {epoch}: train {train_loss:.6e} val {val_loss:?}");
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        let score = val_loss.unwrap_or(train_loss);
        let improved = val_loss.is_none() || best.as_ref().is_none_or(|b| score < b.0);
        if improved && score.is_finite() {
            best = Some((score, epoch, model.parameters().into_iter().cloned().collect()));
        }
    }
    if let Some((_, _, params)) = &best {
        crate::model::load_parameters(&mut model, params)?;
    }
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: best.map(|b| b.1),
        diverged_at: None,
    })
}
