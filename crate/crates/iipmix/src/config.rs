//! TOML experiment configs, `key=value` overrides and config hashes.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use iipmix_core::experiment::ExperimentConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

/// Parses `text`, applies `overrides` (dotted `section.key=value`) and
/// validates the result.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut table: Table = text.parse().context("parsing config")?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let cfg: ExperimentConfig = Value::Table(table).try_into().context("invalid config")?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads the config at `path`, or starts from the defaults when `path` is
/// `None`.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?,
        None => String::new(),
    };
    parse_config(&text, overrides)
}

/// Value of an override: any TOML value, or a bare string.
fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

pub fn apply_override(table: &mut Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{assignment}` is not key=value"))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        bail!("bad override key `{key}`");
    }
    let (last, parents) = path.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override `{key}`: `{p}` is not a section"))?;
    }
    cur.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Canonical TOML of a config: every field, in declaration order.
pub fn canonical(cfg: &ExperimentConfig) -> Result<String> {
    Ok(toml::to_string(cfg)?)
}

fn hash_hex<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let text = toml::to_string(value)?;
    let digest = Sha256::digest(text.as_bytes());
    let mut out = String::with_capacity(16);
    for b in &digest[..8] {
        write!(out, "{b:02x}").expect("writing to a String");
    }
    Ok(out)
}

/// Short hash of the full config; names the run directory.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    hash_hex(cfg)
}

#[derive(Serialize)]
struct SplitKey<'a> {
    path: &'a Option<String>,
    synth: &'a iipmix_core::data::FleetConfig,
    synth_seed: u64,
    split: iipmix_core::experiment::SplitKind,
    test_battery: &'a Option<String>,
    train_frac: f64,
    val_frac: f64,
    stride: usize,
    lookback: usize,
    horizon: usize,
}

/// Hash of everything that decides split membership. Configs with equal
/// split hashes train, validate and test on the same windows.
pub fn split_hash(cfg: &ExperimentConfig) -> Result<String> {
    let d = &cfg.data;
    hash_hex(&SplitKey {
        path: &d.path,
        synth: &d.synth,
        synth_seed: d.synth_seed,
        split: d.split,
        test_battery: &d.test_battery,
        train_frac: d.train_frac,
        val_frac: d.val_frac,
        stride: d.stride,
        lookback: cfg.model.lookback,
        horizon: cfg.model.horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use iipmix_core::model::{Arch, HeadMode};

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(parse_config("", &[]).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn sections_and_overrides() {
        let text = "[model]\narch = \"mlp\"\n[train]\nlr = 0.01\nseeds = [4, 5, 6]\n";
        let cfg = parse_config(
            text,
            &[
                "model.head_mode=inter_only".into(),
                "train.lr=0.5".into(),
                "data.test_battery=SYN02".into(),
                "data.synth.cycles=200".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.model.arch, Arch::Mlp);
        assert_eq!(cfg.model.head_mode, HeadMode::InterOnly);
        assert_eq!(cfg.train.lr, 0.5);
        assert_eq!(cfg.train.seeds, vec![4, 5, 6]);
        assert_eq!(cfg.data.test_battery.as_deref(), Some("SYN02"));
        assert_eq!(cfg.data.synth.battery.cycles, 200);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(parse_config("[model]\nlookbak = 16\n", &[]).is_err());
        assert!(parse_config("", &["model.patch_len=5".into()]).is_err());
        assert!(parse_config("", &["train.lr".into()]).is_err());
        assert!(parse_config("", &["train.lr.x=1".into()]).is_err());
    }

    #[test]
    fn canonical_text_reparses_to_the_same_config() {
        let mut cfg = ExperimentConfig::default();
        cfg.data.principal_features = Some(4);
        cfg.data.test_battery = Some("SYN03".into());
        let text = canonical(&cfg).unwrap();
        assert_eq!(parse_config(&text, &[]).unwrap(), cfg);
    }

    #[test]
    fn hashes_track_the_right_fields() {
        let base = ExperimentConfig::default();
        let mut other = base.clone();
        other.model.head_mode = HeadMode::IntraOnly;
        other.data.principal_features = Some(2);
        assert_ne!(config_hash(&base).unwrap(), config_hash(&other).unwrap());
        assert_eq!(split_hash(&base).unwrap(), split_hash(&other).unwrap());
        other.data.stride = 2;
        assert_ne!(split_hash(&base).unwrap(), split_hash(&other).unwrap());
        assert_eq!(config_hash(&base).unwrap(), config_hash(&base.clone()).unwrap());
    }
}
