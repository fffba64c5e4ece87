//! Weighted loss, regression metrics, RUL extraction and recursive rollout.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::model::Forecaster;
use crate::nn::Matrix;

/// Per-channel loss weights, normalised to sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureWeights {
    alpha: Vec<f64>,
}

impl FeatureWeights {
    /// Normalises non-negative raw weights. Rejects negative or non-finite
    /// entries and an all-zero vector.
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Weights(String::from("no weights given")));
        }
        if let Some((i, w)) = raw.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::Weights(format!("weight {i} is {w}; weights must be finite and >= 0")));
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::Weights(String::from("weights sum to zero")));
        }
        Ok(Self {
            alpha: raw.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(channels: usize) -> Self {
        Self {
            alpha: alloc::vec![1.0 / channels as f64; channels],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

fn weighted_sq_error(pred: &Matrix, truth: &Matrix, weights: &[f64]) -> Result<f64> {
    pred.check_same_shape("wmse_loss", truth)?;
    if weights.len() != pred.rows() {
        return Err(shape_err(
            "wmse_loss",
            format!("{} weights", pred.rows()),
            format!("{}", weights.len()),
        ));
    }
    let n = pred.cols() as f64;
    Ok((0..pred.rows())
        .map(|c| {
            let sq: f64 = pred.row(c).iter().zip(truth.row(c)).map(|(p, t)| (p - t) * (p - t)).sum();
            weights[c] * sq / n
        })
        .sum())
}

/// `sum_c alpha_c * mean_j (pred[c][j] - truth[c][j])^2` on `C x N` forecasts.
pub fn wmse_loss(pred: &Matrix, truth: &Matrix, w: &FeatureWeights) -> Result<f64> {
    weighted_sq_error(pred, truth, w.as_slice())
}

/// The same sum with raw (unnormalised) weights.
pub fn weighted_sq_loss(pred: &Matrix, truth: &Matrix, raw_weights: &[f64]) -> Result<f64> {
    weighted_sq_error(pred, truth, raw_weights)
}

/// Mean squared error over every entry.
pub fn mse(pred: &Matrix, truth: &Matrix) -> Result<f64> {
    let diff = pred.sub(truth)?;
    Ok(diff.as_slice().iter().map(|d| d * d).sum::<f64>() / diff.len() as f64)
}

/// Weighted loss averaged over a `B x (C * N)` batch, together with its
/// gradient with respect to `pred`.
pub fn batch_wmse(pred: &Matrix, truth: &Matrix, w: &FeatureWeights, horizon: usize) -> Result<(f64, Matrix)> {
    pred.check_same_shape("batch_wmse", truth)?;
    if pred.cols() != w.len() * horizon {
        return Err(shape_err(
            "batch_wmse",
            format!("{} columns", w.len() * horizon),
            pred.shape_string(),
        ));
    }
    let batch = pred.rows() as f64;
    let scale: Vec<f64> = (0..pred.cols())
        .map(|col| w.as_slice()[col / horizon] / (horizon as f64 * batch))
        .collect();
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    for r in 0..pred.rows() {
        for (col, &s) in scale.iter().enumerate() {
            let d = pred.get(r, col) - truth.get(r, col);
            loss += s * d * d;
            grad.set(r, col, 2.0 * s * d);
        }
    }
    Ok((loss, grad))
}

/// MAE, RMSE and MAPE (percent) of one residual set.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    /// `None` when any truth value is zero.
    pub mape: Option<f64>,
}

pub fn regression_metrics(pred: &[f64], truth: &[f64]) -> Result<Metrics> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(shape_err(
            "regression_metrics",
            format!("{} non-empty paired values", truth.len()),
            format!("{}", pred.len()),
        ));
    }
    let k = pred.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut pct = 0.0;
    let mut mape_defined = true;
    for (&p, &t) in pred.iter().zip(truth) {
        let e = p - t;
        abs += libm::fabs(e);
        sq += e * e;
        if t == 0.0 {
            mape_defined = false;
        } else {
            pct += libm::fabs(e / t);
        }
    }
    Ok(Metrics {
        mae: abs / k,
        rmse: libm::sqrt(sq / k),
        mape: mape_defined.then(|| 100.0 * pct / k),
    })
}

/// Absolute relative RUL error in percent.
pub fn are_metric(rul_pred: f64, rul_true: f64) -> Result<f64> {
    if !(rul_true > 0.0) {
        return Err(Error::InvalidArgument(format!("true RUL must be positive, got {rul_true}")));
    }
    Ok(libm::fabs(rul_pred - rul_true) / rul_true * 100.0)
}

/// Index of the first cycle with `capacity < threshold_frac * initial`.
pub fn rul_from_capacity(capacity: &[f64], initial: f64, threshold_frac: f64) -> Result<Option<usize>> {
    if capacity.is_empty() {
        return Err(Error::InvalidArgument(String::from("empty capacity series")));
    }
    if !(initial > 0.0) || !(threshold_frac > 0.0 && threshold_frac < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need initial > 0 and 0 < threshold < 1 (got {initial}, {threshold_frac})"
        )));
    }
    let limit = threshold_frac * initial;
    Ok(capacity.iter().position(|&c| c < limit))
}

/// Recursive forecast: predict `N` steps, append them to the window, slide,
/// repeat until `steps` values per channel exist. Returns `C x steps`.
pub fn rollout_forecast<F: Forecaster + ?Sized>(model: &F, window: &Matrix, steps: usize) -> Result<Matrix> {
    let (c, l) = (model.channels(), model.lookback());
    if window.shape() != (c, l) {
        return Err(shape_err("rollout_forecast", format!("{c}x{l} window"), window.shape_string()));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument(String::from("rollout needs at least one step")));
    }
    let mut history: Vec<Vec<f64>> = (0..c).map(|ch| window.row(ch).to_vec()).collect();
    let mut produced = 0;
    while produced < steps {
        let len = history[0].len();
        let current = Matrix::from_fn(c, l, |ch, t| history[ch][len - l + t]);
        let pred = model.predict(&current)?;
        for (ch, h) in history.iter_mut().enumerate() {
            h.extend_from_slice(pred.row(ch));
        }
        produced += model.horizon();
    }
    Ok(Matrix::from_fn(c, steps, |ch, t| history[ch][l + t]))
}
