//! Multi-seed runs, the run directory layout and ablation tables.

use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use anyhow::{bail, Context, Result};
use iipmix_core::data::{derive_features, BatterySeries};
use iipmix_core::experiment::{
    ablation_variants, build_model, evaluate_model, mean_report, method_name, prepare, train_model, AblationAxis,
    EvalReport, ExperimentConfig, Prepared, RulSettings, SeedRun, TrainOutcome,
};

use crate::checkpoint::Checkpoint;
use crate::config::{canonical, config_hash, split_hash};
use crate::io;

/// Applies `f` to every item on up to `jobs` threads. Output order follows
/// input order, whatever the scheduling.
pub fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    thread::scope(|s| {
        let handles: Vec<_> = (0..jobs)
            .map(|k| {
                let f = &f;
                s.spawn(move || {
                    (k..items.len())
                        .step_by(jobs)
                        .map(|i| (i, f(&items[i])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker thread panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every slot is filled")).collect()
}

pub fn default_jobs() -> usize {
    thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub hash: String,
    pub config: ExperimentConfig,
    pub data: Prepared,
    pub seeds: Vec<SeedRun>,
    pub mean: EvalReport,
}

/// Training outcome of every seed; divergence is reported, not raised.
pub fn train_seeds(cfg: &ExperimentConfig, data: &Prepared, jobs: usize) -> Result<Vec<(u64, TrainOutcome)>> {
    let outcomes = par_map(&cfg.train.seeds, jobs, |&seed| -> iipmix_core::Result<(u64, TrainOutcome)> {
        let model = build_model(cfg, data.selection.indices.len(), seed)?;
        let out = train_model(cfg, model, &data.train, &data.val, &data.selection.alpha, seed)?;
        Ok((seed, out))
    });
    Ok(outcomes.into_iter().collect::<iipmix_core::Result<_>>()?)
}

fn evaluate_seeds(cfg: &ExperimentConfig, data: &Prepared, outcomes: Vec<(u64, TrainOutcome)>) -> Result<Vec<SeedRun>> {
    let method = method_name(cfg);
    outcomes
        .into_iter()
        .map(|(seed, outcome)| {
            let report = evaluate_model(&outcome.model, &method, data, RulSettings::from_config(cfg))?;
            Ok(SeedRun { seed, outcome, report })
        })
        .collect()
}

/// Prepares, trains every seed and evaluates, without touching the disk.
pub fn run_experiment(cfg: &ExperimentConfig, batteries: &[BatterySeries], jobs: usize) -> Result<RunResult> {
    let data = prepare(cfg, batteries)?;
    let outcomes = train_seeds(cfg, &data, jobs)?;
    for (seed, o) in &outcomes {
        o.ensure_converged().with_context(|| format!("seed {seed}"))?;
    }
    finish(cfg, data, outcomes)
}

fn finish(cfg: &ExperimentConfig, data: Prepared, outcomes: Vec<(u64, TrainOutcome)>) -> Result<RunResult> {
    let seeds = evaluate_seeds(cfg, &data, outcomes)?;
    let reports: Vec<EvalReport> = seeds.iter().map(|r| r.report.clone()).collect();
    Ok(RunResult {
        hash: config_hash(cfg)?,
        config: cfg.clone(),
        mean: mean_report(&reports)?,
        data,
        seeds,
    })
}

fn history_rows<'a>(outcomes: &[(u64, &'a TrainOutcome)]) -> Vec<(u64, &'a [iipmix_core::experiment::EpochStats])> {
    outcomes.iter().map(|(s, o)| (*s, o.history.as_slice())).collect()
}

/// Files are written into a scratch directory that is renamed into place,
/// so an interrupted or failed run leaves no partial run directory.
fn publish(out_root: &Path, hash: &str, write: impl FnOnce(&Path) -> Result<()>) -> Result<PathBuf> {
    fs::create_dir_all(out_root).with_context(|| format!("creating {}", out_root.display()))?;
    let staging = out_root.join(format!(".staging-{hash}-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir(&staging)?;
    if let Err(e) = write(&staging) {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    let dir = out_root.join(hash);
    if dir.exists() {
        fs::remove_dir_all(&dir).with_context(|| format!("replacing {}", dir.display()))?;
    }
    fs::rename(&staging, &dir)?;
    Ok(dir)
}

fn create(dir: &Path, name: &str) -> Result<fs::File> {
    let p = dir.join(name);
    fs::File::create(&p).with_context(|| format!("creating {}", p.display()))
}

/// Trains every seed and writes `out_root/<hash>/`:
///
/// - `config.toml`, `checkpoint`
/// - `history.csv` per-epoch losses
/// - `report.csv` mean over seeds, `seeds.csv` per seed
/// - `rul.csv`, `trajectory.csv` rollout results
/// - `importance.csv`
///
/// A diverged seed still gets its history written (and nothing else)
/// before the error is returned.
pub fn train_to_dir(
    cfg: &ExperimentConfig,
    batteries: &[BatterySeries],
    out_root: &Path,
    jobs: usize,
) -> Result<(PathBuf, RunResult)> {
    let hash = config_hash(cfg)?;
    let data = prepare(cfg, batteries)?;
    let outcomes = train_seeds(cfg, &data, jobs)?;
    if let Some((seed, o)) = outcomes.iter().find(|(_, o)| o.diverged_at.is_some()) {
        let refs: Vec<(u64, &TrainOutcome)> = outcomes.iter().map(|(s, o)| (*s, o)).collect();
        let dir = publish(out_root, &hash, |d| io::write_history(create(d, "history.csv")?, &history_rows(&refs)))?;
        let err = o.ensure_converged().unwrap_err();
        bail!("seed {seed}: {err}; partial history in {}", dir.display());
    }
    let result = finish(cfg, data, outcomes)?;
    let dir = publish(out_root, &hash, |d| write_run(d, &result))?;
    Ok((dir, result))
}

fn write_run(dir: &Path, r: &RunResult) -> Result<()> {
    fs::write(dir.join("config.toml"), canonical(&r.config)?)?;
    let ckpt = Checkpoint::from_runs(&r.config, &r.data, &r.seeds)?;
    fs::write(dir.join("checkpoint"), ckpt.to_text()?)?;
    let refs: Vec<(u64, &TrainOutcome)> = r.seeds.iter().map(|s| (s.seed, &s.outcome)).collect();
    io::write_history(create(dir, "history.csv")?, &history_rows(&refs))?;
    io::write_report(create(dir, "report.csv")?, &[(r.mean.method.as_str(), &r.mean)])?;
    io::write_seed_reports(create(dir, "seeds.csv")?, &r.seeds)?;
    io::write_rul(create(dir, "rul.csv")?, &r.seeds)?;
    io::write_trajectories(create(dir, "trajectory.csv")?, &r.seeds, &r.data.batteries)?;
    io::write_importance(
        create(dir, "importance.csv")?,
        r.data.all_feature_names(),
        &r.data.importances,
        &r.data.selection.indices,
    )?;
    Ok(())
}

/// Mean report of every seed of `ckpt`, re-deriving the data from its
/// config.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, batteries: &[BatterySeries]) -> Result<(Vec<SeedRun>, EvalReport)> {
    let cfg = &ckpt.config;
    let data = prepare(cfg, batteries)?;
    ckpt.check_preprocessing(&data)?;
    let method = method_name(cfg);
    let mut runs = Vec::new();
    for i in 0..ckpt.models.len() {
        let model = ckpt.model(i)?;
        let report = evaluate_model(&model, &method, &data, RulSettings::from_config(cfg))?;
        runs.push(SeedRun {
            seed: ckpt.models[i].0,
            outcome: TrainOutcome {
                model,
                history: Vec::new(),
                best_epoch: None,
                diverged_at: None,
            },
            report,
        });
    }
    let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
    let mean = mean_report(&reports)?;
    Ok((runs, mean))
}

/// One row of an ablation table.
#[derive(Clone, Debug)]
pub struct AblationRow {
    pub label: String,
    pub split_hash: String,
    pub result: RunResult,
}

/// Every variant of `axis`, each with all seeds of `base`.
pub fn run_ablation(
    base: &ExperimentConfig,
    batteries: &[BatterySeries],
    axis: AblationAxis,
    jobs: usize,
) -> Result<Vec<AblationRow>> {
    let first = batteries.first().context("no battery data")?;
    let total = derive_features(first)?.channels();
    let mut rows = Vec::new();
    for v in ablation_variants(base, axis, total) {
        log::info!("ablation {}: {}", axis.as_str(), v.label);
        let result = run_experiment(&v.config, batteries, jobs).with_context(|| format!("variant {}", v.label))?;
        rows.push(AblationRow {
            split_hash: split_hash(&v.config)?,
            label: v.label,
            result,
        });
    }
    Ok(rows)
}

pub fn write_ablation(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let table: Vec<(&str, &EvalReport)> = rows.iter().map(|r| (r.label.as_str(), &r.result.mean)).collect();
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    io::write_report(f, &table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_keeps_order() {
        let items: Vec<u64> = (0..23).collect();
        for jobs in [1, 2, 5, 64] {
            assert_eq!(par_map(&items, jobs, |x| x * x), items.iter().map(|x| x * x).collect::<Vec<_>>());
        }
        assert!(par_map(&Vec::<u8>::new(), 4, |x| *x).is_empty());
    }
}
