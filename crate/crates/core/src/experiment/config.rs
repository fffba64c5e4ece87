use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{FleetConfig, SplitPolicy};
use crate::error::{Error, Result};
use crate::importance::ForestConfig;
use crate::model::{moving_average_window, Arch, DLinearConfig, HeadMode, MixerConfig, MlpConfig};
use crate::nn::OptimizerKind;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub train: TrainSection,
    pub data: DataSection,
    pub loss: LossSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub arch: Arch,
    pub lookback: usize,
    pub horizon: usize,
    pub patch_len: usize,
    pub n_blocks: usize,
    pub expansion_factor: usize,
    pub dropout: f64,
    pub head_mode: HeadMode,
    pub shared_channels: bool,
    /// Hidden widths of the MLP baseline.
    pub mlp_hidden: Vec<usize>,
    /// Requested moving-average window of the DLinear baseline.
    pub ma_window: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            arch: Arch::IipMixer,
            lookback: 16,
            horizon: 1,
            patch_len: 4,
            n_blocks: 2,
            expansion_factor: 2,
            dropout: 0.0,
            head_mode: HeadMode::Parallel,
            shared_channels: false,
            mlp_hidden: vec![64],
            ma_window: 25,
        }
    }
}

impl ModelSection {
    pub fn mixer(&self, channels: usize) -> MixerConfig {
        MixerConfig {
            channels,
            lookback: self.lookback,
            horizon: self.horizon,
            patch_len: self.patch_len,
            n_blocks: self.n_blocks,
            expansion_factor: self.expansion_factor,
            dropout: self.dropout,
            head_mode: self.head_mode,
            shared_channels: self.shared_channels,
        }
    }

    pub fn mlp(&self, channels: usize) -> MlpConfig {
        MlpConfig {
            channels,
            lookback: self.lookback,
            horizon: self.horizon,
            hidden: self.mlp_hidden.clone(),
            dropout: self.dropout,
        }
    }

    pub fn dlinear(&self, channels: usize) -> DLinearConfig {
        DLinearConfig {
            channels,
            lookback: self.lookback,
            horizon: self.horizon,
            ma_window: moving_average_window(self.ma_window, self.lookback),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seeds: Vec<u64>,
    pub optimizer: OptimizerKind,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            lr: 0.001,
            epochs: 500,
            batch: 32,
            seeds: vec![0, 1, 2],
            optimizer: OptimizerKind::Sgd,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    #[default]
    LeaveOneOut,
    Chronological,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Cycle-level CSV; the synthetic fleet is used when absent.
    pub path: Option<String>,
    pub synth: FleetConfig,
    pub synth_seed: u64,
    pub split: SplitKind,
    /// Held-out battery; defaults to the last battery.
    pub test_battery: Option<String>,
    pub train_frac: f64,
    pub val_frac: f64,
    pub stride: usize,
    /// Number of principal features; all features when absent.
    pub principal_features: Option<usize>,
    /// Keep the capacity channel even when it ranks outside the top `k`.
    pub force_capacity: bool,
    pub forest: ForestConfig,
    pub forest_seed: u64,
    pub rul_threshold: f64,
    /// Cycle index of the first forecast step of the RUL rollout; defaults
    /// to the lookback.
    pub rul_start: Option<usize>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            path: None,
            synth: FleetConfig::default(),
            synth_seed: 0,
            split: SplitKind::LeaveOneOut,
            test_battery: None,
            train_frac: 0.6,
            val_frac: 0.2,
            stride: 1,
            principal_features: None,
            force_capacity: true,
            forest: ForestConfig::default(),
            forest_seed: 0,
            rul_threshold: 0.8,
            rul_start: None,
        }
    }
}

impl DataSection {
    pub fn policy(&self, battery_ids: &[&str]) -> Result<SplitPolicy> {
        Ok(match self.split {
            SplitKind::LeaveOneOut => {
                let test_battery = match &self.test_battery {
                    Some(id) => id.clone(),
                    None => String::from(
                        *battery_ids
                            .last()
                            .ok_or_else(|| Error::InvalidArgument(String::from("no batteries")))?,
                    ),
                };
                SplitPolicy::LeaveOneOut {
                    test_battery,
                    val_frac: self.val_frac,
                }
            }
            SplitKind::Chronological => SplitPolicy::Chronological {
                train_frac: self.train_frac,
                val_frac: self.val_frac,
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    /// Weight channels by feature importance; plain MSE when off.
    pub weighted: bool,
    /// Replace the forest importances with uniform ones.
    pub uniform_importance: bool,
}

impl Default for LossSection {
    fn default() -> Self {
        Self {
            weighted: true,
            uniform_importance: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        let t = &self.train;
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if m.lookback == 0 || m.horizon == 0 {
            return bad(format!("lookback {} and horizon {} must be >= 1", m.lookback, m.horizon));
        }
        match m.arch {
            Arch::IipMixer => m.mixer(1).validate()?,
            Arch::Mlp => m.mlp(1).validate()?,
            Arch::Dlinear => m.dlinear(1).validate()?,
        }
        if !(t.lr.is_finite() && t.lr >= 0.0) {
            return bad(format!("learning rate {} must be finite and >= 0", t.lr));
        }
        if t.batch == 0 {
            return bad(String::from("batch size must be >= 1"));
        }
        if t.seeds.is_empty() {
            return bad(String::from("at least one seed is required"));
        }
        let d = &self.data;
        if d.stride == 0 {
            return bad(String::from("stride must be >= 1"));
        }
        if d.principal_features == Some(0) {
            return bad(String::from("principal_features must be >= 1"));
        }
        if !(d.rul_threshold > 0.0 && d.rul_threshold < 1.0) {
            return bad(format!("rul_threshold {} outside (0, 1)", d.rul_threshold));
        }
        if let Some(s) = d.rul_start {
            if s < m.lookback {
                return bad(format!("rul_start {s} is before the first full lookback window ({})", m.lookback));
            }
        }
        Ok(())
    }
}
