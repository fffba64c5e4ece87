use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::ExperimentConfig;
use crate::data::{derive_features, split_dataset, BatterySeries, Scaler, SplitPlan, WindowSample, CAPACITY};
use crate::error::{Error, Result};
use crate::importance::{fit_random_forest, select_top_k, selection_of, Selection};
use crate::nn::Matrix;

/// Everything a training run needs, derived from raw batteries and the
/// data section of the config only.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    /// Unscaled series with every feature (derived ones included).
    pub batteries: Vec<BatterySeries>,
    pub plan: SplitPlan,
    /// Importance of every feature of `batteries`.
    pub importances: Vec<f64>,
    pub selection: Selection,
    /// Scaler over the selected features.
    pub scaler: Scaler,
    /// Scaled series restricted to the selected features.
    pub scaled: Vec<BatterySeries>,
    /// Row of the capacity feature within the selected features.
    pub capacity_channel: usize,
    pub train: Vec<WindowSample>,
    pub val: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
}

impl Prepared {
    pub fn feature_names(&self) -> &[String] {
        &self.scaled[0].feature_names
    }

    pub fn all_feature_names(&self) -> &[String] {
        &self.batteries[0].feature_names
    }
}

/// Next-cycle capacity regression set over the scaler's training cycles:
/// features of cycle `c` against capacity of cycle `c + 1`.
pub fn importance_dataset(scaled: &[BatterySeries], plan: &SplitPlan) -> Result<(Matrix, Vec<f64>)> {
    let cap = scaled[0].capacity_index()?;
    let channels = scaled[0].channels();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (b, range) in &plan.scaler_cycles {
        let s = &scaled[*b];
        for c in range.start..range.end.saturating_sub(1) {
            rows.extend((0..channels).map(|f| s.values.get(f, c)));
            y.push(s.values.get(cap, c + 1));
        }
    }
    Ok((Matrix::new(y.len(), channels, rows)?, y))
}

pub fn prepare(cfg: &ExperimentConfig, raw: &[BatterySeries]) -> Result<Prepared> {
    cfg.validate()?;
    if raw.is_empty() {
        return Err(Error::InvalidArgument(String::from("no battery data")));
    }
    let batteries: Vec<BatterySeries> = raw.iter().map(derive_features).collect::<Result<_>>()?;
    for b in &batteries[1..] {
        if b.feature_names != batteries[0].feature_names {
            return Err(Error::InvalidArgument(format!(
                "battery `{}` has a different feature set than `{}`",
                b.battery_id, batteries[0].battery_id
            )));
        }
    }
    let ids: Vec<&str> = batteries.iter().map(|b| b.battery_id.as_str()).collect();
    let policy = cfg.data.policy(&ids)?;
    let (l, n, stride) = (cfg.model.lookback, cfg.model.horizon, cfg.data.stride);
    let plan = split_dataset(&batteries, &policy, l, n, stride)?;
    if !plan.is_leak_free() {
        return Err(Error::InvalidArgument(String::from(
            "split would expose test targets to training, validation or scaling",
        )));
    }

    let parts: Vec<_> = plan.scaler_cycles.iter().map(|(b, r)| (&batteries[*b], r.clone())).collect();
    let full_scaler = Scaler::fit(&parts)?;
    let full_scaled: Vec<BatterySeries> = batteries.iter().map(|b| full_scaler.transform(b)).collect::<Result<_>>()?;

    let c = batteries[0].channels();
    let cap = batteries[0].capacity_index()?;
    let importances = if cfg.loss.uniform_importance {
        alloc::vec![1.0 / c as f64; c]
    } else {
        let (x, y) = importance_dataset(&full_scaled, &plan)?;
        let forest = fit_random_forest(&x, &y, &cfg.data.forest, cfg.data.forest_seed)?;
        forest.importances()
    };
    let k = cfg.data.principal_features.unwrap_or(c);
    if k > c {
        return Err(Error::InvalidArgument(format!("{k} principal features requested from {c}")));
    }
    let mut selection = select_top_k(&importances, k)?;
    if cfg.data.force_capacity && !selection.indices.contains(&cap) {
        let others: Vec<f64> = importances
            .iter()
            .enumerate()
            .map(|(i, &v)| if i == cap { f64::NEG_INFINITY } else { v })
            .collect();
        let mut idx = if k > 1 { select_top_k(&others, k - 1)?.indices } else { Vec::new() };
        idx.push(cap);
        selection = selection_of(&importances, idx)?;
    }
    let capacity_channel = selection
        .indices
        .iter()
        .position(|&i| i == cap)
        .ok_or_else(|| Error::InvalidArgument(format!("{CAPACITY} is not among the selected features")))?;

    let scaler = full_scaler.select(&selection.indices);
    let scaled: Vec<BatterySeries> = full_scaled
        .iter()
        .map(|s| s.select(&selection.indices))
        .collect::<Result<_>>()?;
    let train = plan.samples(&scaled, &plan.train)?;
    let val = plan.samples(&scaled, &plan.val)?;
    let test = plan.samples(&scaled, &plan.test)?;
    if train.is_empty() {
        return Err(Error::InvalidArgument(String::from("training split is empty")));
    }
    if test.is_empty() {
        return Err(Error::InvalidArgument(String::from("test split is empty")));
    }
    Ok(Prepared {
        batteries,
        plan,
        importances,
        selection,
        scaler,
        scaled,
        capacity_channel,
        train,
        val,
        test,
    })
}
