//! Experiment configuration: one JSON document, dotted `--set` overrides,
//! paths resolved against the config file's directory.

use std::path::{Path, PathBuf};

use ctaug_core::cyclegan::{CycleGanLossWeights, DiscriminatorSpec, GeneratorSpec};
use ctaug_core::finetune::{BackboneId, BackboneSpec, EarlyStopMetric, Variant};
use ctaug_core::preprocess::{AugmentPolicy, GaussianSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const CACHE_ENV: &str = "CTAUG_CACHE";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifest_path: PathBuf,
    pub cache_dir: PathBuf,
    pub report_dir: PathBuf,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub cyclegan: CycleGanConfig,
    pub backbones: Vec<BackboneEntry>,
    #[serde(default)]
    pub training: TrainingConfig,
    /// Root of `<id>-<variant>.weights` files for pretrained backbones.
    #[serde(default)]
    pub weights_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ratios: [0.70, 0.15, 0.15],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub gaussian: GaussianSpec,
    pub augment: AugmentPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CycleGanConfig {
    pub enabled: bool,
    pub input_dim: usize,
    pub base_width: usize,
    /// Defaults to the resolution rule of the standard generator.
    pub n_res_blocks: Option<usize>,
    pub disc_base_width: usize,
    pub disc_layers: usize,
    pub weights: CycleGanLossWeights,
    /// Passes over the larger domain. Ignored when `steps` is set.
    pub epochs: u64,
    pub steps: Option<u64>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub buffer_capacity: usize,
    /// Fraction of each class translated into the other class.
    pub ratio: f64,
    pub seed: u64,
    /// Checkpoint location; defaults to `<cache>/cyclegan/model.ckpt`.
    pub checkpoint: Option<PathBuf>,
}

impl Default for CycleGanConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            input_dim: 256,
            base_width: 64,
            n_res_blocks: None,
            disc_base_width: 64,
            disc_layers: 3,
            weights: CycleGanLossWeights::default(),
            epochs: 100,
            steps: None,
            batch_size: 1,
            learning_rate: 2e-4,
            buffer_capacity: 50,
            ratio: 1.0,
            seed: 0,
            checkpoint: None,
        }
    }
}

impl CycleGanConfig {
    pub fn generator_spec(&self) -> GeneratorSpec {
        let standard = GeneratorSpec::standard(self.input_dim, 1);
        GeneratorSpec {
            base_width: self.base_width,
            n_res_blocks: self.n_res_blocks.unwrap_or(standard.n_res_blocks),
            ..standard
        }
    }

    pub fn discriminator_spec(&self) -> DiscriminatorSpec {
        DiscriminatorSpec {
            input_dim: self.input_dim,
            channels: 1,
            base_width: self.disc_base_width,
            n_layers: self.disc_layers,
        }
    }

    /// Total optimizer steps for domains of `n_a` and `n_b` images.
    pub fn total_steps(&self, n_a: usize, n_b: usize) -> u64 {
        self.steps.unwrap_or_else(|| {
            let per_epoch = n_a.max(n_b).div_ceil(self.batch_size.max(1)) as u64;
            self.epochs * per_epoch.max(1)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneEntry {
    pub id: BackboneId,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default)]
    pub pretrained: bool,
    /// Falls back to the per-network default.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub learning_rate: Option<f64>,
}

impl BackboneEntry {
    pub fn spec(&self, input_dim: usize) -> BackboneSpec {
        BackboneSpec {
            pretrained: self.pretrained,
            ..BackboneSpec::new(self.id, self.variant, input_dim)
        }
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size.unwrap_or(self.id.default_hyperparameters().0)
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate.unwrap_or(self.id.default_hyperparameters().1)
    }

    /// Directory name for this entry's artifacts.
    pub fn label(&self) -> String {
        match self.variant {
            Variant::Standard => self.id.as_str().to_string(),
            v => format!("{}-{}", self.id, v.as_str()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub stage1_epochs: usize,
    pub stage2_max_epochs: usize,
    pub patience: usize,
    pub early_stop_metric: EarlyStopMetric,
    pub n_runs: usize,
    /// Run `k` uses `seed + k` for weight init and data order.
    pub seed: u64,
    pub eval_batch_size: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            stage1_epochs: 1,
            stage2_max_epochs: 50,
            patience: 5,
            early_stop_metric: EarlyStopMetric::ValLoss,
            n_runs: 10,
            seed: 0,
            eval_batch_size: 32,
        }
    }
}

/// Sets `path` (dot separated, numeric segments index arrays) to `raw`,
/// parsed as JSON when possible and as a string otherwise.
pub fn apply_override(doc: &mut Value, path: &str, raw: &str) -> Result<(), CliError> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(CliError::Config(format!("bad override key `{path}`")));
    }
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(seg.to_string(), value);
                    return Ok(());
                }
                map.entry(seg.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| CliError::Config(format!("`{path}`: `{seg}` indexes an array")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| CliError::Config(format!("`{path}`: index {idx} out of {len}")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(CliError::Config(format!("`{path}`: `{seg}` is not inside an object"))),
        };
    }
    unreachable!("loop returns on the last segment")
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    /// Reads `path`, applies `KEY=VALUE` overrides and the cache override,
    /// resolves relative paths and validates.
    pub fn load(path: &Path, overrides: &[String], cache_override: Option<PathBuf>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut doc: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override `{o}` is not KEY=VALUE")))?;
            apply_override(&mut doc, k.trim(), v.trim())?;
        }
        let mut cfg: ExperimentConfig =
            serde_json::from_value(doc).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(cache) = cache_override {
            cfg.cache_dir = cache;
        }
        cfg.manifest_path = resolve(base, &cfg.manifest_path);
        cfg.cache_dir = resolve(base, &cfg.cache_dir);
        cfg.report_dir = resolve(base, &cfg.report_dir);
        cfg.weights_dir = cfg.weights_dir.map(|w| resolve(base, &w));
        cfg.cyclegan.checkpoint = cfg.cyclegan.checkpoint.map(|c| resolve(base, &c));
        cfg.validate()?;
        Ok(cfg)
    }

    // Negated comparisons reject NaN along with out-of-range values.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !self.manifest_path.is_file() {
            return bad(format!("manifest {} does not exist", self.manifest_path.display()));
        }
        if let Some(w) = &self.weights_dir {
            if !w.is_dir() {
                return bad(format!("weights_dir {} does not exist", w.display()));
            }
        }
        if self.backbones.is_empty() {
            return bad("at least one backbone is required".into());
        }
        if self.training.n_runs == 0 {
            return bad("training.n_runs must be at least 1".into());
        }
        if self.training.patience == 0 {
            return bad("training.patience must be at least 1".into());
        }
        if self.training.stage1_epochs + self.training.stage2_max_epochs == 0 {
            return bad("training needs at least one epoch".into());
        }
        self.preprocess.gaussian.validate().or_else(|e| bad(e.to_string()))?;
        self.preprocess.augment.validate().or_else(|e| bad(e.to_string()))?;
        for b in &self.backbones {
            if b.batch_size() == 0 || !(b.learning_rate() > 0.0) {
                return bad(format!("{}: batch_size and learning_rate must be positive", b.label()));
            }
        }
        let r = self.split.ratios;
        if r.iter().any(|v| !(*v >= 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 || r[0] <= 0.0 {
            return bad(format!("split.ratios {r:?} must be non-negative, sum to 1 and give train a share"));
        }
        let c = &self.cyclegan;
        if c.enabled {
            c.generator_spec().validate().or_else(|e| bad(e.to_string()))?;
            c.discriminator_spec().validate().or_else(|e| bad(e.to_string()))?;
            c.weights.validate().or_else(|e| bad(e.to_string()))?;
            if !(0.0..=1.0).contains(&c.ratio) {
                return bad(format!("cyclegan.ratio {} must lie in [0, 1]", c.ratio));
            }
            if c.batch_size == 0 || !(c.learning_rate >= 0.0) {
                return bad("cyclegan.batch_size must be positive and learning_rate non-negative".into());
            }
        }
        Ok(())
    }

    pub fn cyclegan_checkpoint(&self) -> PathBuf {
        self.cyclegan
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.cache_dir.join("cyclegan").join("model.ckpt"))
    }
}
