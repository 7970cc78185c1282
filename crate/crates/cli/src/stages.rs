//! The five pipeline stages. Each checks its upstream stamp, does its work
//! and stamps its own outputs.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ctaug_core::cyclegan::{
    generate_augmented_set, to_generator_range, train_cyclegan as run_cyclegan, CycleGanError, CycleGanModel,
    CycleGanOptim, CycleGanTrainConfig, LossBreakdown,
};
use ctaug_core::data_catalog::{
    class_counts, load_manifest, slices_for, split_by_patient, write_manifest, DatasetManifest, Label, Partition,
    SliceRecord, SplitAssignment, Source,
};
use ctaug_core::evalkit::{
    aggregate_metric_sets, comparison_table, evaluate_predictions, roc_curve, ConfusionMatrix, EvalReport,
    MetricSet,
};
use ctaug_core::finetune::{
    build_classifier, prepared_eval_set, two_stage_finetune, Classifier, ClassifierCheckpoint, FinetuneError,
    ImageSource, NoPretrained, TrainConfig, WeightDir, WeightProvider,
};
use ctaug_core::preprocess::{load_image, presize_and_center_crop, AugmentPolicy, Image, PreprocessCache};
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{BackboneEntry, ExperimentConfig};
use crate::plot::{line_chart, Series, BLUE, GRAY, GREEN, ORANGE};
use crate::stamp::{cyclegan_hash, generate_hash, hash_parts, prepare_hash, require_stamp, write_stamp};
use crate::{write_file, CliError};

pub const SPLIT_FILE: &str = "split.json";
pub const TRAIN_MANIFEST: &str = "train_manifest.csv";
pub const AUGMENTED_MANIFEST: &str = "augmented_manifest.csv";
pub const COMPARISON_FILE: &str = "comparison.md";
pub const PREDICTIONS_HEADER: &str = "truth,p_normal,p_covid,predicted,slice_path";

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn finetune_error(context: &str, e: FinetuneError) -> CliError {
    let msg = format!("{context}: {e}");
    match e {
        FinetuneError::MissingWeights(_) | FinetuneError::Data(_) => CliError::Data(msg),
        FinetuneError::UnknownBackbone(_) | FinetuneError::Config(_) | FinetuneError::InputDim { .. } => {
            CliError::Config(msg)
        }
        _ => CliError::Training(msg),
    }
}

fn cyclegan_error(e: CycleGanError) -> CliError {
    match e {
        CycleGanError::Spec(m) => CliError::Config(m),
        CycleGanError::Io(_) | CycleGanError::Load(_) | CycleGanError::Checkpoint(_) | CycleGanError::EmptyDomain => {
            data(e)
        }
        _ => CliError::Training(e.to_string()),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionCounts {
    pub patients: usize,
    pub slices: usize,
    pub covid: usize,
    pub normal: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    /// Train, val, test.
    pub partitions: [PartitionCounts; 3],
    pub covid: usize,
    pub normal: usize,
}

/// Channel mean when a slice was stored in colour.
fn to_gray(img: Image<f32>) -> Image<f32> {
    if img.channels() == 1 {
        return img;
    }
    let c = img.channels() as f32;
    Image::from_fn(1, img.height(), img.width(), |_, y, x| {
        (0..img.channels()).map(|ch| img.get(ch, y, x)).sum::<f32>() / c
    })
}

fn filter_cache(cfg: &ExperimentConfig) -> PreprocessCache {
    PreprocessCache::new(cfg.cache_dir.join("filtered"))
}

/// Gaussian-filtered grayscale slice, from the cache when present.
fn filtered(cfg: &ExperimentConfig, r: &SliceRecord) -> Result<Image<f32>, CliError> {
    filter_cache(cfg)
        .load_or_create::<f32>(&r.slice_path, &cfg.preprocess.gaussian)
        .map(to_gray)
        .map_err(data)
}

/// Originals are filtered; generated slices were produced from filtered
/// inputs and load as stored.
fn training_image(cfg: &ExperimentConfig, r: &SliceRecord) -> Result<Image<f32>, CliError> {
    match r.source {
        Source::Original => filtered(cfg, r),
        Source::Generated => load_image::<f32>(&r.slice_path).map(to_gray).map_err(data),
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<PrepareSummary, CliError> {
    let hash = prepare_hash(cfg)?;
    let manifest = load_manifest(&cfg.manifest_path).map_err(data)?;
    if let Some(r) = manifest.records().iter().find(|r| r.source != Source::Original) {
        return Err(CliError::Data(format!(
            "{}: input manifest lists generated slice {}",
            cfg.manifest_path.display(),
            r.slice_path.display()
        )));
    }
    let split = split_by_patient(&manifest, cfg.split.ratios, cfg.split.seed).map_err(data)?;
    write_file(&cfg.cache_dir.join(SPLIT_FILE), split.to_json())?;

    let cache = filter_cache(cfg);
    for (i, r) in manifest.records().iter().enumerate() {
        cache
            .load_or_create::<f32>(&r.slice_path, &cfg.preprocess.gaussian)
            .map_err(|e| CliError::Data(format!("{} row {}: {e}", cfg.manifest_path.display(), i + 2)))?;
    }

    let mut partitions = [PartitionCounts::default(); 3];
    for (i, part) in Partition::ALL.into_iter().enumerate() {
        let records = slices_for(&split, &manifest, part).map_err(data)?;
        let (covid, normal) = class_counts(&records);
        partitions[i] = PartitionCounts {
            patients: split.patients_in(part),
            slices: records.len(),
            covid,
            normal,
        };
        if part == Partition::Train {
            write_file(&cfg.cache_dir.join(TRAIN_MANIFEST), write_manifest(&records, true))?;
        }
    }
    let (covid, normal) = class_counts(manifest.records());
    let summary = PrepareSummary {
        partitions,
        covid,
        normal,
    };
    println!("{:<6} {:>9} {:>7} {:>7} {:>7}", "split", "patients", "slices", "covid", "normal");
    for (part, c) in Partition::ALL.iter().zip(&summary.partitions) {
        println!(
            "{:<6} {:>9} {:>7} {:>7} {:>7}",
            part.as_str(),
            c.patients,
            c.slices,
            c.covid,
            c.normal
        );
    }
    println!("{:<6} {:>9} {:>7} {:>7} {:>7}", "total", manifest.patients().len(), manifest.len(), covid, normal);
    write_stamp(&cfg.cache_dir, "prepare", &hash)?;
    Ok(summary)
}

struct Prepared {
    manifest: DatasetManifest,
    split: SplitAssignment,
    hash: String,
}

fn load_prepared(cfg: &ExperimentConfig) -> Result<Prepared, CliError> {
    let hash = prepare_hash(cfg)?;
    require_stamp(&cfg.cache_dir, "prepare", &hash)?;
    let manifest = load_manifest(&cfg.manifest_path).map_err(data)?;
    let split = SplitAssignment::from_json(&read_text(&cfg.cache_dir.join(SPLIT_FILE))?).map_err(data)?;
    Ok(Prepared { manifest, split, hash })
}

/// Splits `records` into the normal (A) and covid (B) translator domains,
/// refusing anything that is not an original train-partition slice.
pub fn cyclegan_domains(
    records: &[SliceRecord],
    split: &SplitAssignment,
) -> Result<(Vec<SliceRecord>, Vec<SliceRecord>), CliError> {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for r in records {
        let part = split.partition_of.get(&r.patient_id).copied();
        if part != Some(Partition::Train) || r.source != Source::Original {
            return Err(CliError::Data(format!(
                "refusing to train the translator on {}: patient {} is {} and the slice is {}",
                r.slice_path.display(),
                r.patient_id,
                part.map_or("unassigned", Partition::as_str),
                r.source.as_str()
            )));
        }
        match r.label {
            Label::Normal => a.push(r.clone()),
            Label::Covid => b.push(r.clone()),
        }
    }
    if a.is_empty() || b.is_empty() {
        return Err(CliError::Data(format!(
            "the train partition needs both classes for the translator ({} normal, {} covid)",
            a.len(),
            b.len()
        )));
    }
    Ok((a, b))
}

fn generator_input(cfg: &ExperimentConfig, r: &SliceRecord) -> Result<Image<f32>, CliError> {
    let dim = cfg.cyclegan.input_dim;
    let img = presize_and_center_crop(&filtered(cfg, r)?, &AugmentPolicy::identity(dim, dim)).map_err(data)?;
    Ok(to_generator_range(&img))
}

fn losses_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.cache_dir.join("cyclegan").join("losses.csv")
}

/// Keeps the header and the first `steps` rows of an existing loss log.
fn truncated_loss_log(path: &Path, steps: u64) -> String {
    let mut out = format!("{}\n", LossBreakdown::CSV_HEADER);
    if let Ok(text) = std::fs::read_to_string(path) {
        for line in text.lines().skip(1).take(steps as usize) {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

pub fn train_cyclegan(cfg: &ExperimentConfig, force: bool) -> Result<(), CliError> {
    if !cfg.cyclegan.enabled {
        return Err(CliError::Config("cyclegan.enabled is false".into()));
    }
    let prep = load_prepared(cfg)?;
    let hash = cyclegan_hash(cfg, &prep.hash);
    let ckpt = cfg.cyclegan_checkpoint();
    let stamped = crate::stamp::read_stamp(&cfg.cache_dir, "train-cyclegan").is_some_and(|s| s.hash == hash);
    if !force && stamped && ckpt.is_file() {
        println!("translator is up to date: {}", ckpt.display());
        return Ok(());
    }

    let train = slices_for(&prep.split, &prep.manifest, Partition::Train).map_err(data)?;
    let (recs_a, recs_b) = cyclegan_domains(&train, &prep.split)?;
    let domain_a = recs_a.iter().map(|r| generator_input(cfg, r)).collect::<Result<Vec<_>, _>>()?;
    let domain_b = recs_b.iter().map(|r| generator_input(cfg, r)).collect::<Result<Vec<_>, _>>()?;
    let c = &cfg.cyclegan;
    let total = c.total_steps(domain_a.len(), domain_b.len());

    let resumed = if force || !ckpt.is_file() {
        None
    } else {
        match CycleGanModel::<f32>::load_checkpoint(&ckpt) {
            Ok((m, o, extra)) if extra["config_hash"] == hash => Some((m, o)),
            _ => None,
        }
    };
    let (mut model, mut optim) = match resumed {
        Some(pair) => {
            info!("resuming translator at step {}", pair.0.step);
            pair
        }
        None => (
            CycleGanModel::new(c.generator_spec(), c.discriminator_spec(), c.buffer_capacity, c.seed)
                .map_err(cyclegan_error)?,
            CycleGanOptim::default(),
        ),
    };

    let log_path = losses_path(cfg);
    let mut log = truncated_loss_log(&log_path, model.step);
    let every = (total / 20).max(1);
    let train_cfg = CycleGanTrainConfig {
        total_steps: total,
        batch_size: c.batch_size,
        learning_rate: c.learning_rate,
        weights: c.weights,
        seed: c.seed,
    };
    info!(
        "training translator on {} normal and {} covid slices for {total} steps",
        domain_a.len(),
        domain_b.len()
    );
    let result = run_cyclegan(&mut model, &mut optim, &domain_a, &domain_b, &train_cfg, |l| {
        log.push_str(&l.csv_row());
        log.push('\n');
        if l.step % every == 0 || l.step == total {
            info!(
                "step {}/{total}: generator {:.4} cycle {:.4} disc {:.4}/{:.4}",
                l.step,
                l.generator,
                l.cycle(),
                l.disc_a,
                l.disc_b
            );
        }
    });
    write_file(&log_path, &log)?;
    result.map_err(cyclegan_error)?;
    model
        .save_checkpoint(&optim, &ckpt, serde_json::json!({ "config_hash": hash }))
        .map_err(cyclegan_error)?;
    write_stamp(&cfg.cache_dir, "train-cyclegan", &hash)?;
    println!("wrote {} after {} steps", ckpt.display(), model.step);
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub generated_covid: usize,
    pub generated_normal: usize,
    pub manifest: PathBuf,
}

pub fn generate(cfg: &ExperimentConfig) -> Result<GenerateSummary, CliError> {
    if !cfg.cyclegan.enabled {
        return Err(CliError::Config("cyclegan.enabled is false".into()));
    }
    let prep = load_prepared(cfg)?;
    let h_cyclegan = cyclegan_hash(cfg, &prep.hash);
    require_stamp(&cfg.cache_dir, "train-cyclegan", &h_cyclegan)?;
    let ckpt = cfg.cyclegan_checkpoint();
    if !ckpt.is_file() {
        return Err(CliError::Data(format!("missing translator checkpoint {}", ckpt.display())));
    }
    let (model, _, extra) = CycleGanModel::<f32>::load_checkpoint(&ckpt).map_err(cyclegan_error)?;
    if extra["config_hash"] != h_cyclegan {
        return Err(CliError::Data(format!(
            "{} was trained under a different configuration",
            ckpt.display()
        )));
    }
    let train = slices_for(&prep.split, &prep.manifest, Partition::Train).map_err(data)?;
    let out_dir = cfg.cache_dir.join("generated");
    if out_dir.exists() {
        std::fs::remove_dir_all(&out_dir).map_err(|e| CliError::Data(format!("{}: {e}", out_dir.display())))?;
    }
    let generated = generate_augmented_set(&model, &train, cfg.cyclegan.ratio, &cfg.cache_dir, cfg.cyclegan.seed, |r| {
        filtered(cfg, r).map_err(|e| CycleGanError::Load(e.to_string()))
    })
    .map_err(cyclegan_error)?;

    // Generated records must land in train only.
    let mut all = prep.manifest.records().to_vec();
    all.extend(generated.iter().cloned());
    let combined = DatasetManifest::from_records(all).map_err(data)?;
    slices_for(&prep.split, &combined, Partition::Train).map_err(data)?;

    let mut augmented = train;
    augmented.extend(generated.iter().cloned());
    let path = cfg.cache_dir.join(AUGMENTED_MANIFEST);
    write_file(&path, write_manifest(&augmented, true))?;
    let (generated_covid, generated_normal) = class_counts(&generated);
    write_stamp(&cfg.cache_dir, "generate", &generate_hash(cfg, &h_cyclegan))?;
    println!(
        "generated {generated_covid} covid and {generated_normal} normal slices; wrote {}",
        path.display()
    );
    Ok(GenerateSummary {
        generated_covid,
        generated_normal,
        manifest: path,
    })
}

/// One test-set prediction as stored in `predictions.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub truth: Label,
    pub probs: [f64; 2],
    pub predicted: Label,
    pub slice_path: PathBuf,
}

pub fn predictions_csv(preds: &[Prediction]) -> String {
    let mut out = format!("{PREDICTIONS_HEADER}\n");
    for p in preds {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.truth.as_str(),
            p.probs[0],
            p.probs[1],
            p.predicted.as_str(),
            p.slice_path.display()
        ));
    }
    out
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, CliError> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(PREDICTIONS_HEADER) {
        return Err(CliError::Data(format!("{}: unexpected header", path.display())));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || CliError::Data(format!("{} row {}: malformed `{line}`", path.display(), i + 2));
            let f: Vec<&str> = line.splitn(5, ',').collect();
            if f.len() != 5 {
                return Err(bad());
            }
            let label = |s: &str| Label::parse(s).ok_or_else(bad);
            let prob = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(Prediction {
                truth: label(f[0])?,
                probs: [prob(f[1])?, prob(f[2])?],
                predicted: label(f[3])?,
                slice_path: PathBuf::from(f[4]),
            })
        })
        .collect()
}

/// Summary of one training repetition, stored as `run.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub hash: String,
    pub seed: u64,
    pub metrics: MetricSet<f64>,
    pub confusion: ConfusionMatrix,
    pub epochs: usize,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

pub fn condition_name(cyclegan: bool) -> &'static str {
    if cyclegan {
        "with_cyclegan"
    } else {
        "without_cyclegan"
    }
}

/// Hash of the data a condition trains on.
fn condition_data_hash(cfg: &ExperimentConfig, prepare: &str, cyclegan: bool) -> String {
    if cyclegan {
        generate_hash(cfg, &cyclegan_hash(cfg, prepare))
    } else {
        prepare.to_string()
    }
}

fn run_hash(cfg: &ExperimentConfig, data_hash: &str, b: &BackboneEntry, cyclegan: bool, run: usize) -> String {
    let j = |v: &dyn erased::Json| v.value();
    hash_parts(&[
        Value::from("train-eval"),
        Value::from(data_hash),
        j(&cfg.preprocess.augment),
        j(b),
        j(&cfg.training),
        Value::from(cyclegan),
        Value::from(run),
    ])
}

mod erased {
    use serde::Serialize;
    use serde_json::Value;

    pub trait Json {
        fn value(&self) -> Value;
    }

    impl<T: Serialize> Json for T {
        fn value(&self) -> Value {
            serde_json::to_value(self).expect("config sections serialize")
        }
    }
}

/// Hash embedded in a condition's report; covers every run.
pub fn report_hash(cfg: &ExperimentConfig, prepare: &str, b: &BackboneEntry, cyclegan: bool) -> String {
    let data_hash = condition_data_hash(cfg, prepare, cyclegan);
    let runs: Vec<Value> = (0..cfg.training.n_runs)
        .map(|k| Value::from(run_hash(cfg, &data_hash, b, cyclegan, k)))
        .collect();
    hash_parts(&runs)
}

fn conditions(cfg: &ExperimentConfig) -> Vec<bool> {
    if cfg.cyclegan.enabled {
        vec![false, true]
    } else {
        vec![false]
    }
}

fn load_items(
    cfg: &ExperimentConfig,
    records: &[SliceRecord],
    memo: &mut HashMap<PathBuf, Image<f32>>,
) -> Result<Vec<(Image<f32>, Label)>, CliError> {
    records
        .iter()
        .map(|r| {
            if !memo.contains_key(&r.slice_path) {
                memo.insert(r.slice_path.clone(), training_image(cfg, r)?);
            }
            Ok((memo[&r.slice_path].clone(), r.label))
        })
        .collect()
}

fn provider(cfg: &ExperimentConfig, b: &BackboneEntry) -> Result<Box<dyn WeightProvider>, CliError> {
    match (b.pretrained, &cfg.weights_dir) {
        (false, _) => Ok(Box::new(NoPretrained)),
        (true, Some(dir)) => Ok(Box::new(WeightDir::new(dir))),
        (true, None) => Err(CliError::Config(format!("{} is pretrained but weights_dir is unset", b.label()))),
    }
}

fn write_run_plots(run_dir: &Path, run: &ctaug_core::finetune::TrainRun, roc: &[[f64; 2]]) -> Result<(), CliError> {
    let epochs = |f: &dyn Fn(&ctaug_core::finetune::EpochRecord) -> f64| {
        run.curve.records.iter().map(|r| [r.epoch as f64, f(r)]).collect::<Vec<_>>()
    };
    let curve = [
        Series {
            points: epochs(&|r| r.train_loss),
            color: BLUE,
        },
        Series {
            points: epochs(&|r| r.val_loss),
            color: ORANGE,
        },
        Series {
            points: epochs(&|r| r.val_accuracy),
            color: GREEN,
        },
    ];
    line_chart(&run_dir.join("curve.png"), &curve, None, None).map_err(CliError::Data)?;
    write_roc_plot(&run_dir.join("roc.png"), roc)
}

fn write_roc_plot(path: &Path, roc: &[[f64; 2]]) -> Result<(), CliError> {
    let series = [
        Series {
            points: vec![[0.0, 0.0], [1.0, 1.0]],
            color: GRAY,
        },
        Series {
            points: roc.to_vec(),
            color: BLUE,
        },
    ];
    line_chart(path, &series, Some((0.0, 1.0)), Some((0.0, 1.0))).map_err(CliError::Data)
}

struct EvalData {
    val: Vec<(Image<f32>, Label)>,
    test: Vec<(Image<f32>, Label)>,
    test_paths: Vec<PathBuf>,
}

#[allow(clippy::too_many_arguments)]
fn train_one_run(
    cfg: &ExperimentConfig,
    b: &BackboneEntry,
    cyclegan: bool,
    k: usize,
    hash: &str,
    train: &ImageSource<f32>,
    eval: &EvalData,
    run_dir: &Path,
) -> Result<RunRecord, CliError> {
    let context = format!("{} {} run {}", b.label(), condition_name(cyclegan), k);
    let t = &cfg.training;
    let seed = t.seed + k as u64;
    let spec = b.spec(cfg.preprocess.augment.final_dim);
    let provider = provider(cfg, b)?;
    let mut model: Classifier<f32> =
        build_classifier(&spec, 2, provider.as_ref(), seed).map_err(|e| finetune_error(&context, e))?;
    let tc = TrainConfig {
        batch_size: b.batch_size(),
        learning_rate: b.learning_rate(),
        stage1_epochs: t.stage1_epochs,
        stage2_max_epochs: t.stage2_max_epochs,
        early_stop_patience: t.patience,
        early_stop_metric: t.early_stop_metric,
        seed,
        use_cyclegan_aug: cyclegan,
        aug_ratio: cfg.cyclegan.ratio,
    };
    let run = two_stage_finetune(&mut model, train, &eval.val, &tc).map_err(|e| finetune_error(&context, e))?;

    let mut probs = Vec::with_capacity(eval.test.len());
    for chunk in eval.test.chunks(t.eval_batch_size.max(1)) {
        let refs: Vec<&Image<f32>> = chunk.iter().map(|(img, _)| img).collect();
        let x = Image::batch(&refs).map_err(|e| CliError::Training(format!("{context}: {e}")))?;
        let p = model.predict_probs(&x).map_err(|e| finetune_error(&context, e))?;
        probs.extend(p.into_iter().map(|[a, c]| [f64::from(a), f64::from(c)]));
    }
    let truths: Vec<Label> = eval.test.iter().map(|(_, l)| *l).collect();
    let ev = evaluate_predictions(&probs, &truths, Label::Covid)
        .map_err(|e| CliError::Training(format!("{context}: {e}")))?;
    let preds: Vec<Prediction> = (0..probs.len())
        .map(|i| Prediction {
            truth: truths[i],
            probs: probs[i],
            predicted: ev.preds[i],
            slice_path: eval.test_paths[i].clone(),
        })
        .collect();

    write_file(&run_dir.join("predictions.csv"), predictions_csv(&preds))?;
    write_file(&run_dir.join("curve.csv"), run.curve.to_csv())?;
    write_file(&run_dir.join("roc.csv"), ev.roc.to_csv())?;
    write_run_plots(run_dir, &run, &ev.roc.coords())?;
    let info = ClassifierCheckpoint {
        best_epoch: Some(run.best_epoch),
        config_hash: hash.to_string(),
    };
    model
        .save(&run_dir.join("model.ckpt"), &info)
        .map_err(|e| finetune_error(&context, e))?;
    let record = RunRecord {
        hash: hash.to_string(),
        seed,
        metrics: ev.metrics,
        confusion: ev.confusion,
        epochs: run.curve.len(),
        best_epoch: run.best_epoch,
        stopped_early: run.stopped_early,
    };
    write_file(
        &run_dir.join("run.json"),
        serde_json::to_string_pretty(&record).expect("run record serializes"),
    )?;
    Ok(record)
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

pub fn train_eval(cfg: &ExperimentConfig, force: bool) -> Result<Vec<EvalReport>, CliError> {
    let prep = load_prepared(cfg)?;
    let policy = &cfg.preprocess.augment;
    let mut memo = HashMap::new();

    let val_records = slices_for(&prep.split, &prep.manifest, Partition::Val).map_err(data)?;
    let test_records = slices_for(&prep.split, &prep.manifest, Partition::Test).map_err(data)?;
    if val_records.is_empty() || test_records.is_empty() {
        return Err(CliError::Data(format!(
            "val has {} and test has {} slices; both need at least one (adjust split.ratios)",
            val_records.len(),
            test_records.len()
        )));
    }
    let eval = EvalData {
        val: prepared_eval_set(&load_items(cfg, &val_records, &mut memo)?, policy).map_err(data)?,
        test: prepared_eval_set(&load_items(cfg, &test_records, &mut memo)?, policy).map_err(data)?,
        test_paths: test_records.iter().map(|r| r.slice_path.clone()).collect(),
    };

    let mut reports = Vec::new();
    for cyclegan in conditions(cfg) {
        let data_hash = condition_data_hash(cfg, &prep.hash, cyclegan);
        let train_records = if cyclegan {
            require_stamp(&cfg.cache_dir, "generate", &data_hash)?;
            let aug = load_manifest(&cfg.cache_dir.join(AUGMENTED_MANIFEST)).map_err(data)?;
            let generated: Vec<SliceRecord> =
                aug.records().iter().filter(|r| r.source == Source::Generated).cloned().collect();
            let mut all = prep.manifest.records().to_vec();
            all.extend(generated);
            let combined = DatasetManifest::from_records(all).map_err(data)?;
            slices_for(&prep.split, &combined, Partition::Train).map_err(data)?
        } else {
            slices_for(&prep.split, &prep.manifest, Partition::Train).map_err(data)?
        };
        let train = ImageSource {
            items: load_items(cfg, &train_records, &mut memo)?,
            policy: policy.clone(),
        };

        for b in &cfg.backbones {
            let cond_dir = cfg.report_dir.join(b.label()).join(condition_name(cyclegan));
            let mut runs = Vec::new();
            let mut pooled_scores = Vec::new();
            let mut pooled_truths = Vec::new();
            // The report carries the last run's matrix; the ROC pools every run.
            let mut confusion = ConfusionMatrix::default();
            for k in 0..cfg.training.n_runs {
                let hash = run_hash(cfg, &data_hash, b, cyclegan, k);
                let run_dir = cond_dir.join(format!("run{k}"));
                let cached = std::fs::read_to_string(run_dir.join("run.json"))
                    .ok()
                    .and_then(|t| serde_json::from_str::<RunRecord>(&t).ok())
                    .filter(|r| r.hash == hash && run_dir.join("predictions.csv").is_file());
                let record = match cached {
                    Some(r) if !force => {
                        info!("{} {} run {k}: reusing saved outputs", b.label(), condition_name(cyclegan));
                        r
                    }
                    _ => train_one_run(cfg, b, cyclegan, k, &hash, &train, &eval, &run_dir)?,
                };
                println!(
                    "{} {} run {}/{}: accuracy {} precision {} recall {} f1 {} auc {} ({} epochs, best {})",
                    b.label(),
                    condition_name(cyclegan),
                    k + 1,
                    cfg.training.n_runs,
                    fmt_metric(record.metrics.accuracy),
                    fmt_metric(record.metrics.precision),
                    fmt_metric(record.metrics.recall),
                    fmt_metric(record.metrics.f1),
                    fmt_metric(record.metrics.auc),
                    record.epochs,
                    record.best_epoch
                );
                for p in read_predictions(&run_dir.join("predictions.csv"))? {
                    pooled_scores.push(p.probs[1]);
                    pooled_truths.push(p.truth);
                }
                confusion = record.confusion;
                runs.push(record.metrics);
            }
            let roc = roc_curve(&pooled_scores, &pooled_truths, Label::Covid)
                .map(|c| c.coords())
                .unwrap_or_default();
            write_roc_plot(&cond_dir.join("roc.png"), &roc)?;
            let report = EvalReport {
                backbone: b.label(),
                cyclegan,
                aggregate: aggregate_metric_sets(&runs).map_err(|e| CliError::Training(e.to_string()))?,
                runs,
                confusion,
                roc,
                config_hash: report_hash(cfg, &prep.hash, b, cyclegan),
            };
            write_file(
                &cond_dir.join("report.json"),
                serde_json::to_string_pretty(&report).expect("report serializes"),
            )?;
            reports.push(report);
        }
    }
    let table = comparison_table(&reports);
    write_file(&cfg.report_dir.join(COMPARISON_FILE), &table)?;
    println!("\n{table}");
    Ok(reports)
}

/// Rebuilds `comparison.md` from the saved reports, rejecting any produced
/// under a different configuration.
pub fn report(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let prepare = prepare_hash(cfg)?;
    let mut reports = Vec::new();
    for cyclegan in conditions(cfg) {
        for b in &cfg.backbones {
            let path = cfg
                .report_dir
                .join(b.label())
                .join(condition_name(cyclegan))
                .join("report.json");
            if !path.is_file() {
                return Err(CliError::Data(format!("missing {}; run `ctaug train-eval` first", path.display())));
            }
            let r: EvalReport = serde_json::from_str(&read_text(&path)?).map_err(|e| data(format!("{}: {e}", path.display())))?;
            let expected = report_hash(cfg, &prepare, b, cyclegan);
            if r.config_hash != expected {
                return Err(CliError::Data(format!(
                    "{} was produced under a different configuration; rerun `ctaug train-eval`",
                    path.display()
                )));
            }
            reports.push(r);
        }
    }
    let table = comparison_table(&reports);
    write_file(&cfg.report_dir.join(COMPARISON_FILE), &table)?;
    println!("{table}");
    Ok(table)
}
