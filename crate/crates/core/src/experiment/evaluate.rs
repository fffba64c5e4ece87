use alloc::string::String;
use alloc::vec::Vec;

use super::prepare::Prepared;
use super::ExperimentConfig;
use crate::data::{Scaler, WindowSample};
use crate::error::{Error, Result};
use crate::metrics::{are_metric, regression_metrics, rollout_forecast, rul_from_capacity, Metrics};
use crate::model::Forecaster;
use crate::nn::Matrix;

/// Why an ARE value is missing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AreStatus {
    Ok,
    /// The true capacity never falls below the threshold after the start.
    NoTrueCrossing,
    /// The rollout never falls below the threshold within its budget.
    NoPredictedCrossing,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatteryRul {
    pub battery_id: String,
    /// Cycle index of the first forecast step.
    pub start: usize,
    pub rul_true: Option<usize>,
    pub rul_pred: Option<usize>,
    pub are: Option<f64>,
    pub status: AreStatus,
    /// Rollout against the observed capacity from `start` on.
    pub rollout: Option<Metrics>,
    /// Denormalised capacity trajectory of the rollout.
    pub trajectory: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub method: String,
    /// Capacity-channel one-step metrics in Ah / percent.
    pub mae: f64,
    pub rmse: f64,
    pub mape: Option<f64>,
    /// Mean ARE over batteries where it is defined.
    pub are: Option<f64>,
    pub rul_true: Option<f64>,
    pub rul_pred: Option<f64>,
    pub rollout_mae: Option<f64>,
    pub rollout_rmse: Option<f64>,
    pub per_battery: Vec<BatteryRul>,
}

#[derive(Clone, Copy, Debug)]
pub struct RulSettings {
    pub threshold: f64,
    pub start: Option<usize>,
    /// Rollout length is `horizon_factor * cycles` of the battery.
    pub horizon_factor: usize,
}

impl RulSettings {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            threshold: cfg.data.rul_threshold,
            start: cfg.data.rul_start,
            horizon_factor: 3,
        }
    }
}

/// Denormalised capacity forecasts and truths of every window, flattened
/// over the horizon.
pub fn capacity_pairs<F: Forecaster + ?Sized>(
    model: &F,
    samples: &[WindowSample],
    scaler: &Scaler,
    cap: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut pred = Vec::with_capacity(samples.len() * model.horizon());
    let mut truth = Vec::with_capacity(pred.capacity());
    for chunk in samples.chunks(256) {
        let windows: Vec<&Matrix> = chunk.iter().map(|s| &s.x).collect();
        let out = model.predict_batch(&windows)?;
        for (p, s) in out.iter().zip(chunk) {
            for t in 0..model.horizon() {
                pred.push(scaler.inverse_value(cap, p.get(cap, t)));
                truth.push(scaler.inverse_value(cap, s.y.get(cap, t)));
            }
        }
    }
    Ok((pred, truth))
}

pub fn evaluate_model<F: Forecaster + ?Sized>(
    model: &F,
    method: &str,
    data: &Prepared,
    rul: RulSettings,
) -> Result<EvalReport> {
    if data.test.is_empty() {
        return Err(Error::InvalidArgument(String::from("test split is empty")));
    }
    let cap = data.capacity_channel;
    let (pred, truth) = capacity_pairs(model, &data.test, &data.scaler, cap)?;
    let one_step = regression_metrics(&pred, &truth)?;

    let mut per_battery = Vec::new();
    for b in data.plan.test_batteries() {
        per_battery.push(battery_rul(model, data, b, rul)?);
    }
    let ares: Vec<f64> = per_battery.iter().filter_map(|r| r.are).collect();
    let mean_of = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let defined: Vec<&BatteryRul> = per_battery.iter().filter(|r| r.are.is_some()).collect();
    let rollouts: Vec<Metrics> = per_battery.iter().filter_map(|r| r.rollout).collect();
    Ok(EvalReport {
        method: String::from(method),
        mae: one_step.mae,
        rmse: one_step.rmse,
        mape: one_step.mape,
        are: mean_of(&ares),
        rul_true: mean_of(&defined.iter().filter_map(|r| r.rul_true.map(|v| v as f64)).collect::<Vec<_>>()),
        rul_pred: mean_of(&defined.iter().filter_map(|r| r.rul_pred.map(|v| v as f64)).collect::<Vec<_>>()),
        rollout_mae: mean_of(&rollouts.iter().map(|m| m.mae).collect::<Vec<_>>()),
        rollout_rmse: mean_of(&rollouts.iter().map(|m| m.rmse).collect::<Vec<_>>()),
        per_battery,
    })
}

fn battery_rul<F: Forecaster + ?Sized>(model: &F, data: &Prepared, b: usize, rul: RulSettings) -> Result<BatteryRul> {
    let raw = &data.batteries[b];
    let scaled = &data.scaled[b];
    let cap = data.capacity_channel;
    let l = model.lookback();
    let m = raw.len();
    let start = rul.start.unwrap_or(l);
    if start < l || start > m {
        return Err(Error::InvalidArgument(alloc::format!(
            "RUL start {start} outside [{l}, {m}] for battery `{}`",
            raw.battery_id
        )));
    }
    let observed = raw.capacity()?;
    let initial = observed[0];
    let true_idx = rul_from_capacity(observed, initial, rul.threshold)?;
    let rul_true = true_idx.filter(|&i| i > start).map(|i| i - start);

    let steps = (rul.horizon_factor * m).max(1);
    let window = scaled.window(start - l, l);
    let forecast = rollout_forecast(model, &window, steps)?;
    let trajectory: Vec<f64> = forecast
        .row(cap)
        .iter()
        .map(|&v| data.scaler.inverse_value(cap, v))
        .collect();
    let limit = rul.threshold * initial;
    let rul_pred = trajectory.iter().position(|&c| c < limit);
    // index 0 of the trajectory is cycle `start`, so a crossing at position p
    // is p cycles after the start
    let overlap = m - start;
    let rollout = if overlap > 0 {
        Some(regression_metrics(&trajectory[..overlap], &observed[start..])?)
    } else {
        None
    };
    let (are, status) = match (rul_true, rul_pred) {
        (None, _) => (None, AreStatus::NoTrueCrossing),
        (Some(_), None) => (None, AreStatus::NoPredictedCrossing),
        (Some(t), Some(p)) => (Some(are_metric(p as f64, t as f64)?), AreStatus::Ok),
    };
    Ok(BatteryRul {
        battery_id: raw.battery_id.clone(),
        start,
        rul_true,
        rul_pred,
        are,
        status,
        rollout,
        trajectory,
    })
}

/// Field-wise arithmetic mean of several reports of the same method.
/// Optional fields are averaged only when every report has them.
pub fn mean_report(reports: &[EvalReport]) -> Result<EvalReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidArgument(String::from("no reports to average")))?;
    let k = reports.len() as f64;
    let mean = |f: &dyn Fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
    let mean_opt = |f: &dyn Fn(&EvalReport) -> Option<f64>| {
        let v: Option<Vec<f64>> = reports.iter().map(f).collect();
        v.map(|v| v.iter().sum::<f64>() / k)
    };
    Ok(EvalReport {
        method: first.method.clone(),
        mae: mean(&|r| r.mae),
        rmse: mean(&|r| r.rmse),
        mape: mean_opt(&|r| r.mape),
        are: mean_opt(&|r| r.are),
        rul_true: mean_opt(&|r| r.rul_true),
        rul_pred: mean_opt(&|r| r.rul_pred),
        rollout_mae: mean_opt(&|r| r.rollout_mae),
        rollout_rmse: mean_opt(&|r| r.rollout_rmse),
        per_battery: Vec::new(),
    })
}
