use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::FinetuneError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneId {
    Densenet121,
    EfficientnetB3,
    Resnet50,
    Resnest50,
    Vit,
}

impl BackboneId {
    pub const ALL: [BackboneId; 5] = [
        BackboneId::Densenet121,
        BackboneId::EfficientnetB3,
        BackboneId::Resnet50,
        BackboneId::Resnest50,
        BackboneId::Vit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BackboneId::Densenet121 => "densenet121",
            BackboneId::EfficientnetB3 => "efficientnet_b3",
            BackboneId::Resnet50 => "resnet50",
            BackboneId::Resnest50 => "resnest50",
            BackboneId::Vit => "vit",
        }
    }

    /// Batch size and learning rate selected per network.
    pub fn default_hyperparameters(self) -> (usize, f64) {
        match self {
            BackboneId::Densenet121 | BackboneId::EfficientnetB3 | BackboneId::Resnet50 => (16, 1e-3),
            BackboneId::Resnest50 => (16, 1e-4),
            BackboneId::Vit => (16, 1e-5),
        }
    }
}

impl fmt::Display for BackboneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackboneId {
    type Err = FinetuneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BackboneId::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| FinetuneError::UnknownBackbone(s.to_string()))
    }
}

/// Full-size architecture or a narrow, shallow variant of the same family
/// for CPU-scale runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Standard,
    Tiny,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::Tiny => "tiny",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub id: BackboneId,
    #[serde(default)]
    pub variant: Variant,
    /// Load body weights from the provider instead of seeded initialization.
    #[serde(default)]
    pub pretrained: bool,
    pub input_dim: usize,
}

impl BackboneSpec {
    pub fn new(id: BackboneId, variant: Variant, input_dim: usize) -> Self {
        Self {
            id,
            variant,
            pretrained: false,
            input_dim,
        }
    }

    /// Width of the pooled feature vector fed to the head.
    pub fn feature_dim(&self) -> usize {
        super::backbone::feature_dim(self.id, self.variant)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarlyStopMetric {
    #[default]
    ValLoss,
    ValAccuracy,
}

impl EarlyStopMetric {
    /// Whether `candidate` strictly beats `best`.
    pub fn improves(self, candidate: f64, best: f64) -> bool {
        match self {
            EarlyStopMetric::ValLoss => candidate < best,
            EarlyStopMetric::ValAccuracy => candidate > best,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Head rate in both stages; the body trains at a tenth of it in stage 2.
    pub learning_rate: f64,
    pub stage1_epochs: usize,
    pub stage2_max_epochs: usize,
    pub early_stop_patience: usize,
    pub early_stop_metric: EarlyStopMetric,
    pub seed: u64,
    pub use_cyclegan_aug: bool,
    pub aug_ratio: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            learning_rate: 1e-3,
            stage1_epochs: 1,
            stage2_max_epochs: 50,
            early_stop_patience: 5,
            early_stop_metric: EarlyStopMetric::ValLoss,
            seed: 0,
            use_cyclegan_aug: false,
            aug_ratio: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), FinetuneError> {
        let bad = |m: &str| Err(FinetuneError::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.aug_ratio) {
            return bad("aug_ratio must lie in [0, 1]");
        }
        Ok(())
    }
}
