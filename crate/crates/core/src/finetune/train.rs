use ctaug_autograd::{Adam, Ctx, Graph, Group, Scalar, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BackboneSpec, Classifier, EarlyStopMetric, FinetuneError, TrainConfig};
use crate::data_catalog::Label;
use crate::preprocess::{
    augment, presize_and_center_crop, presize_and_random_crop, to_model_tensor, AugmentPolicy, Image,
    IMAGENET_MEAN, IMAGENET_STD,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Global epoch index, counting from 0 across both stages.
    pub epoch: usize,
    pub stage: u8,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

impl EpochRecord {
    pub fn metric(&self, metric: EarlyStopMetric) -> f64 {
        match metric {
            EarlyStopMetric::ValLoss => self.val_loss,
            EarlyStopMetric::ValAccuracy => self.val_accuracy,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub records: Vec<EpochRecord>,
}

impl LearningCurve {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_loss,val_accuracy";

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Epoch of the first occurrence of the best metric value.
    pub fn best_epoch(&self, metric: EarlyStopMetric) -> Option<usize> {
        let mut best: Option<&EpochRecord> = None;
        for r in &self.records {
            if best.is_none_or(|b| metric.improves(r.metric(metric), b.metric(metric))) {
                best = Some(r);
            }
        }
        best.map(|r| r.epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.val_loss, r.val_accuracy));
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Stops once the best value is more than `patience` epochs old. An empty
/// curve continues with best epoch 0.
pub fn early_stop_check(curve: &LearningCurve, patience: usize, metric: EarlyStopMetric) -> (StopDecision, usize) {
    let (Some(best), Some(last)) = (curve.best_epoch(metric), curve.records.last()) else {
        return (StopDecision::Continue, 0);
    };
    let decision = if last.epoch - best > patience {
        StopDecision::Stop
    } else {
        StopDecision::Continue
    };
    (decision, best)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainRun {
    pub config: TrainConfig,
    pub backbone: BackboneSpec,
    pub curve: LearningCurve,
    /// The model's weights are those from this epoch.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Indexed training samples. Training draws pass an rng so random
/// augmentation can be applied; evaluation passes `None`.
pub trait SampleSource<T> {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `i`-th sample as a model-ready `[3, d, d]` image.
    fn sample(&self, i: usize, rng: Option<&mut ChaCha8Rng>) -> Result<(Image<T>, Label), FinetuneError>;
}

/// Grayscale `[0, 1]` slices with their labels and the crop/augment policy.
#[derive(Clone, Debug)]
pub struct ImageSource<T> {
    pub items: Vec<(Image<T>, Label)>,
    pub policy: AugmentPolicy,
}

fn model_ready<T: Scalar>(img: &Image<T>) -> Result<Image<T>, FinetuneError> {
    to_model_tensor(img, IMAGENET_MEAN, IMAGENET_STD).map_err(|e| FinetuneError::Data(e.to_string()))
}

impl<T: Scalar> SampleSource<T> for ImageSource<T> {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn sample(&self, i: usize, rng: Option<&mut ChaCha8Rng>) -> Result<(Image<T>, Label), FinetuneError> {
        let (img, label) = &self.items[i];
        let data = |e: crate::preprocess::PreprocessError| FinetuneError::Data(e.to_string());
        let cropped = match rng {
            Some(rng) => {
                let c = presize_and_random_crop(img, &self.policy, rng).map_err(data)?;
                augment(&c, &self.policy, rng)
            }
            None => presize_and_center_crop(img, &self.policy).map_err(data)?,
        };
        Ok((model_ready(&cropped)?, *label))
    }
}

/// Deterministic presize, center crop and normalization of every item.
pub fn prepared_eval_set<T: Scalar>(
    items: &[(Image<T>, Label)],
    policy: &AugmentPolicy,
) -> Result<Vec<(Image<T>, Label)>, FinetuneError> {
    items
        .iter()
        .map(|(img, label)| {
            let c = presize_and_center_crop(img, policy).map_err(|e| FinetuneError::Data(e.to_string()))?;
            Ok((model_ready(&c)?, *label))
        })
        .collect()
}

fn batch_tensor<T: Scalar>(items: &[(Image<T>, Label)]) -> Result<(Tensor<T>, Vec<usize>), FinetuneError> {
    let refs: Vec<&Image<T>> = items.iter().map(|(img, _)| img).collect();
    let x = Image::batch(&refs).map_err(|e| FinetuneError::Shape(e.to_string()))?;
    Ok((x, items.iter().map(|(_, l)| l.index()).collect()))
}

/// Mean cross-entropy and accuracy over `val`.
fn validate<T: Scalar>(
    model: &Classifier<T>,
    val: &[(Image<T>, Label)],
    batch_size: usize,
) -> Result<(f64, f64), FinetuneError> {
    let (mut loss, mut correct) = (0.0, 0usize);
    for chunk in val.chunks(batch_size) {
        let (x, y) = batch_tensor(chunk)?;
        model.check_input(&x)?;
        let graph = Graph::new();
        let cx = Ctx::new(&graph, &model.store);
        let logits = model.logits(&cx, graph.input(x));
        loss += logits.cross_entropy(&y).item().to_f64().unwrap_or(f64::NAN) * chunk.len() as f64;
        let lv = logits.value();
        for (row, &t) in lv.data().chunks(model.n_classes).zip(&y) {
            // Ties go to the lowest index.
            let mut arg = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[arg] {
                    arg = k;
                }
            }
            correct += usize::from(arg == t);
        }
    }
    let n = val.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// One pass over `train` in a seeded order; returns the mean batch loss
/// weighted by batch size.
fn train_epoch<T: Scalar>(
    model: &mut Classifier<T>,
    optim: &mut Adam<T>,
    train: &dyn SampleSource<T>,
    cfg: &TrainConfig,
    rates: (f64, f64),
    epoch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64, FinetuneError> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(rng);
    let (body_lr, head_lr) = (T::lit(rates.0), T::lit(rates.1));
    let mut total = 0.0;
    for idx in order.chunks(cfg.batch_size) {
        let items = idx
            .iter()
            .map(|&i| train.sample(i, Some(&mut *rng)))
            .collect::<Result<Vec<_>, _>>()?;
        let (x, y) = batch_tensor(&items)?;
        model.check_input(&x)?;
        let graph = Graph::new();
        graph.track(&model.store);
        let grads = {
            let cx = Ctx::new(&graph, &model.store);
            let loss = model.logits(&cx, graph.input(x)).cross_entropy(&y);
            let value = loss.item().to_f64().unwrap_or(f64::NAN);
            if !value.is_finite() {
                return Err(FinetuneError::NonFiniteLoss { epoch });
            }
            total += value * idx.len() as f64;
            graph.backward(loss)
        };
        if !grads.all_finite() {
            return Err(FinetuneError::NonFiniteLoss { epoch });
        }
        optim.step(&mut model.store, &grads, |g| match g {
            Group::Body => body_lr,
            Group::Head => head_lr,
        });
    }
    Ok(total / train.len() as f64)
}

/// Stage 1 trains the head for `stage1_epochs` with the body frozen. Stage 2
/// trains all parameters, the body at `learning_rate / 10`, for at most
/// `stage2_max_epochs` or until [`early_stop_check`] says stop. The weights
/// from the best epoch are restored before returning. `val` must already be
/// model-ready (see [`prepared_eval_set`]).
pub fn two_stage_finetune<T: Scalar>(
    model: &mut Classifier<T>,
    train: &dyn SampleSource<T>,
    val: &[(Image<T>, Label)],
    cfg: &TrainConfig,
) -> Result<TrainRun, FinetuneError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(FinetuneError::EmptyTraining);
    }
    if val.is_empty() {
        return Err(FinetuneError::EmptyValidation);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut optim = Adam::new(0.9, 0.999);
    let metric = cfg.early_stop_metric;
    let mut curve = LearningCurve::default();
    let mut best: Option<(f64, Vec<Tensor<T>>)> = None;
    let mut stopped_early = false;
    let lr = cfg.learning_rate;
    let stages = [(1u8, cfg.stage1_epochs, (0.0, lr)), (2u8, cfg.stage2_max_epochs, (lr / 10.0, lr))];
    'stages: for (stage, epochs, rates) in stages {
        model.store.set_group_frozen(Group::Body, stage == 1);
        for _ in 0..epochs {
            let epoch = curve.len();
            let train_loss = train_epoch(model, &mut optim, train, cfg, rates, epoch, &mut rng)?;
            let (val_loss, val_accuracy) = validate(model, val, cfg.batch_size)?;
            if !val_loss.is_finite() {
                return Err(FinetuneError::NonFiniteLoss { epoch });
            }
            let record = EpochRecord {
                epoch,
                stage,
                train_loss,
                val_loss,
                val_accuracy,
            };
            log::info!(
                "epoch {epoch} (stage {stage}): train_loss {train_loss:.4} val_loss {val_loss:.4} val_acc {val_accuracy:.4}"
            );
            curve.records.push(record);
            let value = record.metric(metric);
            if best.as_ref().is_none_or(|(b, _)| metric.improves(value, *b)) {
                best = Some((value, model.store.snapshot()));
            }
            if stage == 2 && early_stop_check(&curve, cfg.early_stop_patience, metric).0 == StopDecision::Stop {
                stopped_early = true;
                break 'stages;
            }
        }
    }
    model.store.set_group_frozen(Group::Body, false);
    if let Some((_, weights)) = &best {
        model.store.restore(weights)?;
    }
    let best_epoch = curve.best_epoch(metric).unwrap_or(0);
    Ok(TrainRun {
        config: cfg.clone(),
        backbone: model.spec.clone(),
        curve,
        best_epoch,
        stopped_early,
    })
}
