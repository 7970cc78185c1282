//! Acceptance checks, one PASS/FAIL line per criterion. Every expected value
//! comes from an oracle written here, independent of the library code paths
//! it checks. Exits non-zero when any criterion fails.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ctaug_core::autograd::{Graph, Group, Tensor};
use ctaug_core::cyclegan::{
    to_generator_range, CycleGanLossWeights, CycleGanModel, CycleGanOptim, Direction, DiscriminatorSpec,
    GeneratorSpec, LinearDecay,
};
use ctaug_core::data_catalog::{slices_for, split_by_patient, DatasetManifest, Label, Partition, SliceRecord};
use ctaug_core::evalkit::{aggregate_runs, auc, confusion, metrics_from_confusion, roc_curve};
use ctaug_core::finetune::{
    build_classifier, prepared_eval_set, two_stage_finetune, BackboneId, BackboneSpec, Classifier, ImageSource,
    NoPretrained, TrainConfig, Variant,
};
use ctaug_core::preprocess::{gaussian_filter, AugmentPolicy, GaussianSpec, Image};
use ctaug_core::synthetic::{brightness_set, shape_domain, write_synthetic_dataset, Shape};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// Criterion 1: metric formulas against direct counting.

/// Exact metrics from explicit label lists: accuracy, precision, recall, F1.
fn counting_oracle(preds: &[Label], truths: &[Label]) -> [Option<Ratio<i64>>; 4] {
    let (mut tp, mut tn, mut fp, mut fneg) = (0i64, 0i64, 0i64, 0i64);
    for (p, t) in preds.iter().zip(truths) {
        match (*p == Label::Covid, *t == Label::Covid) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
        }
    }
    let frac = |n: i64, d: i64| (d != 0).then(|| Ratio::new(n, d));
    let precision = frac(tp, tp + fp);
    let recall = frac(tp, tp + fneg);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r != Ratio::from_integer(0) => Some(Ratio::from_integer(2) * p * r / (p + r)),
        _ => None,
    };
    [frac(tp + tn, tp + tn + fp + fneg), precision, recall, f1]
}

fn to_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut undefined = 0;
    for case in 0..10_000 {
        let n = rng.random_range(1..=60);
        // Skewed class rates reach zero-denominator corners.
        let (pt, pp) = (rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0));
        let truths: Vec<Label> =
            (0..n).map(|_| if rng.random_bool(pt) { Label::Covid } else { Label::Normal }).collect();
        let preds: Vec<Label> =
            (0..n).map(|_| if rng.random_bool(pp) { Label::Covid } else { Label::Normal }).collect();
        let want = counting_oracle(&preds, &truths);
        let cm = confusion(&preds, &truths, Label::Covid).map_err(|e| e.to_string())?;
        let exact = metrics_from_confusion::<Ratio<i64>>(&cm);
        let float = metrics_from_confusion::<f64>(&cm);
        let got_exact = [exact.accuracy, exact.precision, exact.recall, exact.f1];
        let got_float = [float.accuracy, float.precision, float.recall, float.f1];
        for k in 0..4 {
            ensure(got_exact[k] == want[k], || format!("case {case} metric {k}: {:?} vs {:?}", got_exact[k], want[k]))?;
            match (got_float[k], want[k]) {
                (Some(g), Some(w)) => ensure((g - to_f64(w)).abs() <= 1e-12, || {
                    format!("case {case} metric {k}: {g} vs {w}")
                })?,
                (None, None) => undefined += 1,
                (g, w) => return Err(format!("case {case} metric {k}: {g:?} vs {w:?}")),
            }
        }
    }
    Ok(format!("10000 cases exact, {undefined} undefined metrics agree"))
}

// Criterion 2: trapezoidal AUC against the pairwise statistic.

fn pairwise_auc(scores: &[f64], truths: &[Label]) -> f64 {
    let mut wins = 0.0;
    let (mut np, mut nn) = (0usize, 0usize);
    for (i, &si) in scores.iter().enumerate() {
        if truths[i] != Label::Covid {
            nn += 1;
            continue;
        }
        np += 1;
        for (j, &sj) in scores.iter().enumerate() {
            if truths[j] != Label::Covid {
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
    }
    wins / (np * nn) as f64
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for case in 0..500 {
        let n = rng.random_range(2..=200);
        let mut truths: Vec<Label> =
            (0..n).map(|_| if rng.random_bool(0.5) { Label::Covid } else { Label::Normal }).collect();
        truths[0] = Label::Covid;
        truths[1] = Label::Normal;
        let coarse = case % 2 == 0;
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if coarse {
                    rng.random_range(0..6) as f64 / 5.0
                } else {
                    rng.random_range(0.0..1.0)
                }
            })
            .collect();
        let curve = roc_curve(&scores, &truths, Label::Covid).map_err(|e| e.to_string())?;
        let diff = (auc(&curve) - pairwise_auc(&scores, &truths)).abs();
        worst = worst.max(diff);
        ensure(diff <= 1e-9, || format!("case {case}: |diff| = {diff:e}"))?;
    }
    Ok(format!("500 score sets, max |diff| {worst:.1e}"))
}

// Criterion 3: patient split properties.

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ratios = [0.70, 0.15, 0.15];
    let mut worst = [0.0f64; 3];
    for case in 0..1000 {
        let n_patients = rng.random_range(1..=500);
        let mut records = Vec::new();
        for p in 0..n_patients {
            let label = if rng.random_bool(0.5) { Label::Covid } else { Label::Normal };
            for s in 0..rng.random_range(1..=40) {
                records.push(SliceRecord::new(format!("pt{p}"), format!("pt{p}/{s}.png"), label));
            }
        }
        let m = DatasetManifest::from_records(records).map_err(|e| e.to_string())?;
        let a = split_by_patient(&m, ratios, rng.random()).map_err(|e| e.to_string())?;

        let mut owner: BTreeMap<&str, Partition> = BTreeMap::new();
        let mut covered = 0;
        let mut patients = [HashSet::new(), HashSet::new(), HashSet::new()];
        for (k, part) in Partition::ALL.into_iter().enumerate() {
            for r in slices_for(&a, &m, part).map_err(|e| e.to_string())? {
                covered += 1;
                let prev = *owner.entry(m.patients().get_key_value(&r.patient_id).unwrap().0).or_insert(part);
                ensure(prev == part, || format!("case {case}: patient {} in two partitions", r.patient_id))?;
                patients[k].insert(r.patient_id);
            }
        }
        ensure(covered == m.len(), || format!("case {case}: {covered} of {} slices covered", m.len()))?;
        ensure(owner.len() == n_patients, || format!("case {case}: {} of {n_patients} patients", owner.len()))?;
        for k in 0..3 {
            let dev = (patients[k].len() as f64 - ratios[k] * n_patients as f64).abs();
            worst[k] = worst[k].max(dev);
        }
        ensure(worst[1] <= 1.0 + 1e-9 && worst[2] <= 1.0 + 1e-9, || {
            format!("case {case}: val/test deviation {:.3}/{:.3}", worst[1], worst[2])
        })?;
    }
    Ok(format!(
        "1000 manifests disjoint and covered; max deviation val {:.2}, test {:.2} (train absorbs both floors: {:.2})",
        worst[1], worst[2], worst[0]
    ))
}

// Criterion 4: separable Gaussian filter against dense 2-D convolution.

fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    while i < 0 || i >= n {
        i = if i < 0 { -i } else { 2 * (n - 1) - i };
    }
    i as usize
}

fn dense_gaussian(img: &Image<f32>, sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let weight = |dy: isize, dx: isize| (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
    let total: f64 = (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dy, dx))).map(|(dy, dx)| weight(dy, dx)).sum();
    let (h, w) = (img.height(), img.width());
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let v = img.get(0, mirror(y as isize + dy, h), mirror(x as isize + dx, w)) as f64;
                    acc += weight(dy, dx) / total * v;
                }
            }
            out.push(acc);
        }
    }
    out
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let img = Image::from_fn(1, 32, 32, |_, _, _| rng.random_range(0.0f32..1.0));
        let spec = GaussianSpec {
            sigma: rng.random_range(0.5..3.0),
            radius: rng.random_range(1..=4),
        };
        let fast = gaussian_filter(&img, &spec).map_err(|e| e.to_string())?;
        let slow = dense_gaussian(&img, spec.sigma, spec.radius);
        for (i, want) in slow.iter().enumerate() {
            let got = fast.get(0, i / 32, i % 32) as f64;
            worst = worst.max((got - want).abs());
        }
        ensure(worst <= 1e-6, || format!("case {case}: max |diff| {worst:e}"))?;
    }
    for v in [0.0f32, 0.37, 1.0] {
        let img = Image::from_fn(1, 32, 32, |_, _, _| v);
        let out = gaussian_filter(&img, &GaussianSpec::default()).map_err(|e| e.to_string())?;
        ensure(out == img, || format!("constant {v} image changed"))?;
    }
    Ok(format!("100 images, max |diff| {worst:.1e}; constant images exact"))
}

// Criterion 5: translator smoke run on squares and circles.

fn criterion_5() -> Outcome {
    let dim = 64;
    let a: Vec<Image<f32>> = shape_domain(Shape::Square, dim, 200, 50).iter().map(to_generator_range).collect();
    let b: Vec<Image<f32>> = shape_domain(Shape::Circle, dim, 200, 51).iter().map(to_generator_range).collect();
    let gen = GeneratorSpec {
        input_dim: dim,
        channels: 1,
        base_width: 8,
        n_res_blocks: 2,
    };
    let disc = DiscriminatorSpec {
        input_dim: dim,
        channels: 1,
        base_width: 8,
        n_layers: 2,
    };
    let capacity = 50;
    let mut model: CycleGanModel<f32> = CycleGanModel::new(gen, disc, capacity, 5).map_err(|e| e.to_string())?;
    let mut optim = CycleGanOptim::default();
    let weights = CycleGanLossWeights::default();
    let steps = 200;
    let schedule = LinearDecay::halfway(2e-4, steps);
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut cycles = Vec::new();
    for _ in 0..steps {
        let pick = |pool: &[Image<f32>], rng: &mut ChaCha8Rng| {
            Image::batch(&[&pool[rng.random_range(0..pool.len())]]).map_err(|e| e.to_string())
        };
        let (xa, xb) = (pick(&a, &mut rng)?, pick(&b, &mut rng)?);
        let lr = schedule.rate(model.step);
        let l = model
            .train_step(&mut optim, &xa, &xb, &weights, lr, &mut rng)
            .map_err(|e| e.to_string())?;
        ensure(l.generator.is_finite(), || format!("step {}: generator loss {}", l.step, l.generator))?;
        let lens = (model.buffer_a.len(), model.buffer_b.len());
        ensure(lens.0 <= capacity && lens.1 <= capacity, || format!("step {}: buffer sizes {lens:?}", l.step))?;
        cycles.push(l.cycle());
    }
    let first = cycles[0];
    let last = *cycles.last().unwrap();
    let tail = cycles[cycles.len() - 10..].iter().sum::<f64>() / 10.0;
    ensure(last <= 0.5 * first, || {
        format!("cycle loss {first:.4} -> {last:.4} (last-10 mean {tail:.4}) fell less than 50%")
    })?;
    for (pool, dir) in [(&a, Direction::AToB), (&b, Direction::BToA)] {
        for chunk in pool.chunks(50) {
            let refs: Vec<&Image<f32>> = chunk.iter().collect();
            let y = model
                .translate(&Image::batch(&refs).map_err(|e| e.to_string())?, dir)
                .map_err(|e| e.to_string())?;
            ensure(y.data().iter().all(|v| (-1.0..=1.0).contains(v)), || format!("{dir:?} output outside [-1, 1]"))?;
        }
    }
    Ok(format!(
        "cycle loss {first:.4} -> {last:.4} ({:.0}% drop, last-10 mean {tail:.4}); 400 outputs in range; buffers <= {capacity}",
        100.0 * (1.0 - last / first)
    ))
}

// Criterion 6: generator gradients against central differences.

fn criterion_6() -> Outcome {
    let gen = GeneratorSpec {
        input_dim: 8,
        channels: 1,
        base_width: 4,
        n_res_blocks: 1,
    };
    let disc = DiscriminatorSpec {
        input_dim: 8,
        channels: 1,
        base_width: 4,
        n_layers: 1,
    };
    let mut model: CycleGanModel<f64> = CycleGanModel::new(gen, disc, 1, 61).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = Tensor::from_fn(vec![2, 1, 8, 8], |_| rng.random_range(-1.0..1.0));
    let b = Tensor::from_fn(vec![2, 1, 8, 8], |_| rng.random_range(-1.0..1.0));
    let w = CycleGanLossWeights::default();
    let objective = |m: &CycleGanModel<f64>| -> f64 {
        let g = Graph::new();
        m.generator_objective(&g, g.input(a.clone()), g.input(b.clone()), &w)
            .expect("shapes match")
            .total
            .item()
    };
    let graph = Graph::new();
    graph.track(&model.generators);
    let terms = model
        .generator_objective(&graph, graph.input(a.clone()), graph.input(b.clone()), &w)
        .map_err(|e| e.to_string())?;
    let grads = graph.backward(terms.total);
    let ids: Vec<_> = model.generators.ids().collect();
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let id = ids[rng.random_range(0..ids.len())];
        let i = rng.random_range(0..model.generators.value(id).numel());
        let analytic = grads.get(&model.generators, id).map(|g| g.data()[i]).unwrap_or(0.0);
        let orig = model.generators.value(id).data()[i];
        let h = 1e-6;
        model.generators.value_mut(id).data_mut()[i] = orig + h;
        let plus = objective(&model);
        model.generators.value_mut(id).data_mut()[i] = orig - h;
        let minus = objective(&model);
        model.generators.value_mut(id).data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
        let name = model.generators.param(id).name.clone();
        ensure(rel <= 1e-3, || format!("sample {k} {name}[{i}]: analytic {analytic}, numeric {numeric}"))?;
    }
    Ok(format!("20 parameters, max relative error {worst:.1e}"))
}

// Criterion 7: fine-tuning the smallest backbone on a separable set.

fn param_count(spec: &BackboneSpec) -> Result<usize, String> {
    let m: Classifier<f32> = build_classifier(spec, 2, &NoPretrained, 0).map_err(|e| e.to_string())?;
    Ok(m.store.iter().map(|(_, p)| p.value.numel()).sum())
}

fn criterion_7() -> Outcome {
    let dim = 32;
    let mut sized = Vec::new();
    for id in BackboneId::ALL {
        let spec = BackboneSpec::new(id, Variant::Tiny, dim);
        sized.push((param_count(&spec)?, spec));
    }
    sized.sort_by_key(|(n, _)| *n);
    let (n_params, spec) = sized[0].clone();

    let policy = AugmentPolicy::identity(dim, dim);
    let mut set = brightness_set::<f32>(100, dim, 7);
    let val_items = set.split_off(80);
    let train = ImageSource {
        items: set,
        policy: policy.clone(),
    };
    let val = prepared_eval_set(&val_items, &policy).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        batch_size: 16,
        learning_rate: 1e-3,
        stage1_epochs: 1,
        stage2_max_epochs: 4,
        early_stop_patience: 4,
        seed: 7,
        ..TrainConfig::default()
    };

    // Stage 1 alone, to compare the body bit for bit.
    let body_bits = |m: &Classifier<f32>| -> Vec<Vec<u32>> {
        m.store
            .iter()
            .filter(|(_, p)| p.group == Group::Body)
            .map(|(_, p)| p.value.data().iter().map(|v| v.to_bits()).collect())
            .collect()
    };
    let mut model: Classifier<f32> = build_classifier(&spec, 2, &NoPretrained, 7).map_err(|e| e.to_string())?;
    let before = body_bits(&model);
    let stage1 = TrainConfig {
        stage2_max_epochs: 0,
        ..cfg.clone()
    };
    two_stage_finetune(&mut model, &train, &val, &stage1).map_err(|e| e.to_string())?;
    ensure(body_bits(&model) == before, || "stage 1 moved a body parameter".into())?;

    let mut model: Classifier<f32> = build_classifier(&spec, 2, &NoPretrained, 7).map_err(|e| e.to_string())?;
    let run = two_stage_finetune(&mut model, &train, &val, &cfg).map_err(|e| e.to_string())?;
    let epochs = run.curve.len();
    let best = run.curve.records.iter().map(|r| r.val_accuracy).fold(0.0, f64::max);
    ensure(epochs <= 5, || format!("{epochs} epochs"))?;
    ensure(best >= 0.95, || format!("best validation accuracy {best:.3} after {epochs} epochs"))?;
    Ok(format!(
        "{} ({n_params} params) reached {:.1}% val accuracy in {epochs} epochs; stage-1 body bitwise unchanged",
        spec.id.as_str(),
        100.0 * best
    ))
}

// Criterion 8: t-interval aggregation.

fn criterion_8() -> Outcome {
    let r = aggregate_runs(&[0.9f64, 1.0], 0.95).map_err(|e| e.to_string())?;
    // One degree of freedom is Cauchy: t(0.975, 1) = tan(0.475 pi) = 12.7062.
    // s = 0.05 sqrt(2), so half = t * s / sqrt(2) = t * 0.05.
    let half = (0.475 * std::f64::consts::PI).tan() * 0.05;
    ensure((r.mean - 0.95).abs() < 1e-12, || format!("mean {}", r.mean))?;
    ensure((r.half_width - 0.6353).abs() <= 1e-4, || format!("half-width {}", r.half_width))?;
    ensure((r.half_width - half).abs() < 1e-9, || format!("half-width {} vs {half}", r.half_width))?;
    let flat = aggregate_runs(&[0.83f64; 10], 0.95).map_err(|e| e.to_string())?;
    ensure(flat.half_width == 0.0, || format!("equal runs half-width {}", flat.half_width))?;
    Ok(format!("0.95 ± {:.6}; ten equal values give exactly 0", r.half_width))
}

// Criteria 9 and 10 drive the binary.

fn ctaug(dir: &Path, args: &[&str], env: &[(&str, &Path)]) -> Result<String, String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ctaug"));
    cmd.args(args).current_dir(dir).env("RUST_LOG", "warn").env_remove("CTAUG_CACHE");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("`ctaug {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn write_config(dir: &Path, cfg: &Value) -> Result<(), String> {
    std::fs::write(dir.join("cfg.json"), serde_json::to_string_pretty(cfg).unwrap()).map_err(|e| e.to_string())
}

struct Pred {
    truth: Label,
    p_covid: f64,
    predicted: Label,
}

fn parse_label(s: &str) -> Result<Label, String> {
    match s {
        "covid" => Ok(Label::Covid),
        "normal" => Ok(Label::Normal),
        _ => Err(format!("unknown label `{s}`")),
    }
}

fn read_preds(path: &Path) -> Result<Vec<Pred>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.splitn(5, ',').collect();
            let p_normal: f64 = f[1].parse().map_err(|_| format!("bad row `{line}`"))?;
            let p_covid: f64 = f[2].parse().map_err(|_| format!("bad row `{line}`"))?;
            let predicted = parse_label(f[3])?;
            // The saved call must be the larger probability.
            if p_covid != p_normal && (p_covid > p_normal) != (predicted == Label::Covid) {
                return Err(format!("row `{line}` predicts the smaller probability"));
            }
            Ok(Pred {
                truth: parse_label(f[0])?,
                p_covid,
                predicted,
            })
        })
        .collect()
}

/// Sample mean and 95% half-width for three runs; t(0.975, 2) = 4.302652729911275.
fn three_run_interval(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 4.302652729911275 * (var / n).sqrt())
}

fn parse_cell(cell: &str) -> Option<(f64, f64)> {
    let (m, h) = cell.trim().split_once(" ± ")?;
    Some((m.parse().ok()?, h.parse().ok()?))
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    ctaug(dir, &["make-synthetic", "--out", "data", "--patients", "40", "--slices", "5", "--dim", "64"], &[])?;
    write_config(
        dir,
        &json!({
            "manifest_path": "data/manifest.csv",
            "cache_dir": "cache",
            "report_dir": "reports",
            "preprocess": {"augment": {"presize_dim": 40, "final_dim": 32}},
            "cyclegan": {
                "input_dim": 32, "base_width": 8, "n_res_blocks": 1,
                "disc_base_width": 8, "disc_layers": 2, "steps": 40
            },
            "backbones": [{"id": "resnet50", "variant": "tiny"}],
            "training": {"n_runs": 3, "stage2_max_epochs": 10, "patience": 3}
        }),
    )?;
    for stage in ["prepare", "train-cyclegan", "generate", "train-eval"] {
        ctaug(dir, &[stage, "--config", "cfg.json"], &[])?;
    }
    let table = ctaug(dir, &["report", "--config", "cfg.json"], &[])?;

    let names = ["accuracy", "precision", "recall", "f1", "auc"];
    let mut checked = 0;
    for (cond, heading) in [("without_cyclegan", "Results without CycleGAN"), ("with_cyclegan", "Results with CycleGAN")] {
        let cond_dir = dir.join("reports/resnet50-tiny").join(cond);
        let report: Value = serde_json::from_str(
            &std::fs::read_to_string(cond_dir.join("report.json")).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let runs = report["runs"].as_array().ok_or("report has no runs")?;
        ensure(runs.len() == 3, || format!("{cond}: {} runs", runs.len()))?;
        let mut per_metric: Vec<Vec<f64>> = vec![Vec::new(); 5];
        for (k, run) in runs.iter().enumerate() {
            let preds = read_preds(&cond_dir.join(format!("run{k}/predictions.csv")))?;
            let truths: Vec<Label> = preds.iter().map(|p| p.truth).collect();
            let calls: Vec<Label> = preds.iter().map(|p| p.predicted).collect();
            let scores: Vec<f64> = preds.iter().map(|p| p.p_covid).collect();
            let [acc, prec, rec, f1] = counting_oracle(&calls, &truths);
            let want = [acc, prec, rec, f1].map(|m| m.map(to_f64));
            let pairwise = pairwise_auc(&scores, &truths);
            for (i, name) in names.iter().enumerate() {
                let (expected, tol) = if i == 4 { (Some(pairwise), 1e-9) } else { (want[i], 1e-12) };
                let got = run[name].as_f64();
                match (got, expected) {
                    (Some(g), Some(w)) => {
                        ensure((g - w).abs() <= tol, || format!("{cond} run {k} {name}: {g} vs oracle {w}"))?;
                        per_metric[i].push(g);
                    }
                    (g, w) => return Err(format!("{cond} run {k} {name}: {g:?} vs oracle {w:?}")),
                }
                checked += 1;
            }
        }

        // The table row must show every metric as mean ± half-width in percent.
        let section = table.split(heading).nth(1).ok_or_else(|| format!("table lacks `{heading}`"))?;
        let row = section
            .lines()
            .find(|l| l.starts_with("| resnet50-tiny |"))
            .ok_or_else(|| format!("{heading}: no resnet50-tiny row"))?;
        let cells: Vec<&str> = row.trim_matches('|').split('|').collect();
        ensure(cells.len() == 7 && cells[1].trim() == "3", || format!("{heading}: row `{row}`"))?;
        for (i, name) in names.iter().enumerate() {
            let (mean, half) = three_run_interval(&per_metric[i]);
            let (m, h) = parse_cell(cells[2 + i]).ok_or_else(|| format!("{heading} {name}: cell `{}`", cells[2 + i]))?;
            ensure((m - 100.0 * mean).abs() <= 0.005 + 1e-9 && (h - 100.0 * half).abs() <= 0.005 + 1e-9, || {
                format!("{heading} {name}: `{}` vs {:.4} ± {:.4}", cells[2 + i], 100.0 * mean, 100.0 * half)
            })?;
        }
    }
    Ok(format!(
        "5 subcommands on 200 slices; {checked} per-run metrics match the oracles; both tables agree"
    ))
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    write_synthetic_dataset(&dir.join("data"), 20, 4, 32, 10).map_err(|e| e.to_string())?;
    write_config(
        dir,
        &json!({
            "manifest_path": "data/manifest.csv",
            "cache_dir": "cache",
            "report_dir": "reports",
            "preprocess": {"augment": {"presize_dim": 36, "final_dim": 32}},
            "cyclegan": {"enabled": false},
            "backbones": [{"id": "resnet50", "variant": "tiny"}],
            "training": {"n_runs": 2, "stage1_epochs": 1, "stage2_max_epochs": 0}
        }),
    )?;
    let mut splits = Vec::new();
    let mut metrics = Vec::new();
    for rep in ["a", "b"] {
        let cache: PathBuf = dir.join(format!("cache-{rep}"));
        let env = [("CTAUG_CACHE", cache.as_path())];
        let report_dir = format!("report_dir=reports-{rep}");
        ctaug(dir, &["prepare", "--config", "cfg.json"], &env)?;
        ctaug(dir, &["train-eval", "--config", "cfg.json", "--set", &report_dir], &env)?;
        splits.push(std::fs::read(cache.join("split.json")).map_err(|e| e.to_string())?);
        let report: Value = serde_json::from_str(
            &std::fs::read_to_string(dir.join(format!("reports-{rep}/resnet50-tiny/without_cyclegan/report.json")))
                .map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        metrics.push(report["runs"].clone());
    }
    ensure(splits[0] == splits[1], || "split.json differs between repeats".into())?;
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for (ra, rb) in metrics[0].as_array().unwrap().iter().zip(metrics[1].as_array().unwrap()) {
        for name in ["accuracy", "precision", "recall", "f1", "auc"] {
            match (ra[name].as_f64(), rb[name].as_f64()) {
                (Some(x), Some(y)) => {
                    worst = worst.max((x - y).abs());
                    compared += 1;
                }
                (None, None) => {}
                (x, y) => return Err(format!("{name}: {x:?} vs {y:?}")),
            }
        }
    }
    ensure(worst <= 1e-6, || format!("metric values differ by {worst:e}"))?;
    Ok(format!("identical split JSON; {compared} metric values within {worst:.1e}"))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome, Option<Duration>); 10] = [
        (1, "metric oracle equivalence", criterion_1, Some(Duration::from_secs(10))),
        (2, "AUC identity", criterion_2, Some(Duration::from_secs(30))),
        (3, "patient split properties", criterion_3, Some(Duration::from_secs(30))),
        (4, "Gaussian filter vs dense oracle", criterion_4, None),
        (5, "translator smoke run", criterion_5, Some(Duration::from_secs(15 * 60))),
        (6, "generator gradient check", criterion_6, Some(Duration::from_secs(120))),
        (7, "fine-tune smoke run", criterion_7, Some(Duration::from_secs(10 * 60))),
        (8, "aggregation", criterion_8, None),
        (9, "end-to-end pipeline", criterion_9, None),
        (10, "determinism", criterion_10, None),
    ];
    let only: Option<u32> = std::env::args().nth(1).and_then(|a| a.parse().ok());
    let mut failed = 0;
    for (n, name, check, budget) in criteria {
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let mut outcome = check();
        let took = start.elapsed();
        if let (Ok(detail), Some(limit)) = (&outcome, budget) {
            if took > limit {
                outcome = Err(format!("{detail}; took {took:.1?}, budget {limit:?}"));
            }
        }
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail} [{:.1}s]", took.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail} [{:.1}s]", took.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
