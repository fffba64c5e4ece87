//! Plain-text checkpoint: the config, the fitted preprocessing and the
//! parameters of every seed's model. Floats are stored as the hex of their
//! bit patterns so a save/load round trip is exact.

use anyhow::{anyhow, bail, Context, Result};
use iipmix_core::experiment::{build_model, ExperimentConfig, Prepared, SeedRun};
use iipmix_core::model::{load_parameters, AnyModel, Forecaster};
use iipmix_core::Matrix;

use crate::config::{canonical, config_hash, parse_config};

const MAGIC: &str = "iipmix-checkpoint 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub hash: String,
    pub config: ExperimentConfig,
    /// Names of the selected features, in channel order.
    pub features: Vec<String>,
    pub scaler_mean: Vec<f64>,
    pub scaler_std: Vec<f64>,
    pub alpha: Vec<f64>,
    /// `(seed, parameters)` per trained model.
    pub models: Vec<(u64, Vec<Matrix>)>,
}

fn hex_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{:016x}", v.to_bits()))
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_floats<'a>(words: impl Iterator<Item = &'a str>) -> Result<Vec<f64>> {
    words
        .map(|w| {
            u64::from_str_radix(w, 16)
                .map(f64::from_bits)
                .map_err(|_| anyhow!("bad float bits `{w}`"))
        })
        .collect()
}

impl Checkpoint {
    pub fn from_runs(cfg: &ExperimentConfig, data: &Prepared, runs: &[SeedRun]) -> Result<Self> {
        Ok(Checkpoint {
            hash: config_hash(cfg)?,
            config: cfg.clone(),
            features: data.feature_names().to_vec(),
            scaler_mean: data.scaler.mean.clone(),
            scaler_std: data.scaler.std.clone(),
            alpha: data.selection.alpha.as_slice().to_vec(),
            models: runs
                .iter()
                .map(|r| (r.seed, r.outcome.model.parameters().into_iter().cloned().collect()))
                .collect(),
        })
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        out.push_str(&format!("hash {}\n", self.hash));
        out.push_str(&format!("features {}\n", self.features.join(",")));
        out.push_str(&format!("scaler_mean {}\n", hex_floats(&self.scaler_mean)));
        out.push_str(&format!("scaler_std {}\n", hex_floats(&self.scaler_std)));
        out.push_str(&format!("alpha {}\n", hex_floats(&self.alpha)));
        for (seed, params) in &self.models {
            out.push_str(&format!("model {seed} {}\n", params.len()));
            for p in params {
                out.push_str(&format!("tensor {} {} {}\n", p.rows(), p.cols(), hex_floats(p.as_slice())));
            }
        }
        out.push_str("config\n");
        out.push_str(&canonical(&self.config)?);
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            bail!("not a checkpoint (missing `{MAGIC}` header)");
        }
        let mut field = |name: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| anyhow!("checkpoint ends before `{name}`"))?;
            let rest = line
                .strip_prefix(name)
                .ok_or_else(|| anyhow!("expected `{name}`, found `{line}`"))?;
            Ok(rest.trim().to_string())
        };
        let hash = field("hash")?;
        let features: Vec<String> = field("features")?.split(',').map(String::from).collect();
        let scaler_mean = parse_floats(field("scaler_mean")?.split_whitespace())?;
        let scaler_std = parse_floats(field("scaler_std")?.split_whitespace())?;
        let alpha = parse_floats(field("alpha")?.split_whitespace())?;

        let mut models = Vec::new();
        let config_text = loop {
            let line = lines.next().ok_or_else(|| anyhow!("checkpoint has no config section"))?;
            if line == "config" {
                break lines.collect::<Vec<_>>().join("\n");
            }
            let mut words = line.split_whitespace();
            if words.next() != Some("model") {
                bail!("expected `model` or `config`, found `{line}`");
            }
            let seed: u64 = words.next().context("model seed")?.parse()?;
            let count: usize = words.next().context("tensor count")?.parse()?;
            let mut params = Vec::with_capacity(count);
            for _ in 0..count {
                let line = lines.next().context("checkpoint ends inside a model")?;
                let mut words = line.split_whitespace();
                if words.next() != Some("tensor") {
                    bail!("expected `tensor`, found `{line}`");
                }
                let rows: usize = words.next().context("tensor rows")?.parse()?;
                let cols: usize = words.next().context("tensor cols")?.parse()?;
                params.push(Matrix::new(rows, cols, parse_floats(words)?)?);
            }
            models.push((seed, params));
        };
        let config = parse_config(&config_text, &[])?;
        if config_hash(&config)? != hash {
            bail!("checkpoint config does not match its hash {hash}");
        }
        Ok(Checkpoint {
            hash,
            config,
            features,
            scaler_mean,
            scaler_std,
            alpha,
            models,
        })
    }

    /// Rebuilds the model of entry `i`.
    pub fn model(&self, i: usize) -> Result<AnyModel> {
        let (seed, params) = &self.models[i];
        let mut m = build_model(&self.config, self.features.len(), *seed)?;
        load_parameters(&mut m, params)?;
        Ok(m)
    }

    /// Errors unless `data` was prepared with the same features and
    /// scaling as the checkpoint.
    pub fn check_preprocessing(&self, data: &Prepared) -> Result<()> {
        if data.feature_names() != self.features.as_slice() {
            bail!(
                "checkpoint features [{}] differ from the prepared data [{}]",
                self.features.join(","),
                data.feature_names().join(",")
            );
        }
        let same = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        if !same(&self.scaler_mean, &data.scaler.mean) || !same(&self.scaler_std, &data.scaler.std) {
            bail!("checkpoint scaler differs from the one fitted on this data");
        }
        Ok(())
    }
}
