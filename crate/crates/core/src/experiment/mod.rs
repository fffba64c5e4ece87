//! Config-driven pipeline: feature preparation, training with validation
//! selection, evaluation, and the ablation grid.

mod ablation;
mod config;
mod evaluate;
mod prepare;
mod train;

pub use ablation::{ablation_variants, AblationAxis, Variant};
pub use config::{DataSection, ExperimentConfig, LossSection, ModelSection, SplitKind, TrainSection};
pub use evaluate::{capacity_pairs, evaluate_model, mean_report, AreStatus, BatteryRul, EvalReport, RulSettings};
pub use prepare::{importance_dataset, prepare, Prepared};
pub use train::{
    build_model, evaluate_loss, seeded_rng, stack_targets, train_model, EpochStats, TrainOutcome, INIT_STREAM,
    TRAIN_STREAM,
};

use alloc::string::String;

/// Result of one seed of one configuration.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub outcome: TrainOutcome,
    pub report: EvalReport,
}

/// Builds, trains and evaluates one seed on prepared data.
pub fn run_seed(cfg: &ExperimentConfig, data: &Prepared, seed: u64, method: &str) -> crate::Result<SeedRun> {
    let model = build_model(cfg, data.selection.indices.len(), seed)?;
    let outcome = train_model(cfg, model, &data.train, &data.val, &data.selection.alpha, seed)?;
    outcome.ensure_converged()?;
    let report = evaluate_model(&outcome.model, method, data, RulSettings::from_config(cfg))?;
    Ok(SeedRun {
        seed,
        outcome,
        report,
    })
}

/// Row label of a config's architecture.
pub fn method_name(cfg: &ExperimentConfig) -> String {
    String::from(cfg.model.arch.display_name())
}
