use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::ExperimentConfig;
use crate::error::{Error, Result};
use crate::model::{Arch, HeadMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationAxis {
    /// intra only / inter only / parallel
    Heads,
    /// serial intra-first / serial inter-first / parallel
    Serial,
    /// importance-weighted loss on / off
    Weighted,
    /// univariate / all features / principal features
    Features,
    /// the mixer against the MLP and DLinear baselines
    Arch,
}

impl AblationAxis {
    pub const ALL: [AblationAxis; 5] = [
        AblationAxis::Heads,
        AblationAxis::Serial,
        AblationAxis::Weighted,
        AblationAxis::Features,
        AblationAxis::Arch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationAxis::Heads => "heads",
            AblationAxis::Serial => "serial",
            AblationAxis::Weighted => "weighted",
            AblationAxis::Features => "features",
            AblationAxis::Arch => "arch",
        }
    }
}

impl core::str::FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationAxis::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown ablation axis `{s}`")))
    }
}

/// One row of an ablation table.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub label: String,
    pub config: ExperimentConfig,
}

/// Configs of one ablation axis; everything but the ablated field is taken
/// from `base`. `total_features` is the feature count of the prepared data.
pub fn ablation_variants(base: &ExperimentConfig, axis: AblationAxis, total_features: usize) -> Vec<Variant> {
    let with = |label: &str, f: &dyn Fn(&mut ExperimentConfig)| {
        let mut config = base.clone();
        f(&mut config);
        Variant {
            label: label.to_string(),
            config,
        }
    };
    let mixer = |mode: HeadMode| {
        move |c: &mut ExperimentConfig| {
            c.model.arch = Arch::IipMixer;
            c.model.head_mode = mode;
        }
    };
    match axis {
        AblationAxis::Heads => [HeadMode::IntraOnly, HeadMode::InterOnly, HeadMode::Parallel]
            .into_iter()
            .map(|m| with(m.as_str(), &mixer(m)))
            .collect(),
        AblationAxis::Serial => [HeadMode::SerialIntraFirst, HeadMode::SerialInterFirst, HeadMode::Parallel]
            .into_iter()
            .map(|m| with(m.as_str(), &mixer(m)))
            .collect(),
        AblationAxis::Weighted => alloc::vec![
            with("weighted", &|c| c.loss.weighted = true),
            with("unweighted", &|c| c.loss.weighted = false),
        ],
        AblationAxis::Features => {
            let principal = base.data.principal_features.unwrap_or(total_features).min(total_features);
            alloc::vec![
                with("univariate", &|c| c.data.principal_features = Some(1)),
                with(&format!("all_{total_features}"), &|c| c.data.principal_features = Some(total_features)),
                with(&format!("principal_{principal}"), &|c| c.data.principal_features = Some(principal)),
            ]
        }
        AblationAxis::Arch => [Arch::IipMixer, Arch::Mlp, Arch::Dlinear]
            .into_iter()
            .map(|a| with(a.display_name(), &|c| c.model.arch = a))
            .collect(),
    }
}
