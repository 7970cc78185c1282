use std::str::FromStr;

use ctaug_core::autograd::{Ctx, Graph, Group, Tensor};
use ctaug_core::data_catalog::Label;
use ctaug_core::finetune::{
    build_classifier, early_stop_check, export_body_weights, prepared_eval_set, softmax_pairs, two_stage_finetune,
    BackboneId, BackboneSpec, Classifier, ClassifierCheckpoint, EarlyStopMetric, EpochRecord, FinetuneError,
    ImageSource, LearningCurve, NoPretrained, StopDecision, TrainConfig, Variant, WeightDir,
};
use ctaug_core::preprocess::{AugmentPolicy, Image};
use ctaug_core::synthetic::brightness_set;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny(id: BackboneId, dim: usize) -> BackboneSpec {
    BackboneSpec::new(id, Variant::Tiny, dim)
}

fn curve_of(values: &[f64]) -> LearningCurve {
    LearningCurve {
        records: values
            .iter()
            .enumerate()
            .map(|(epoch, &v)| EpochRecord {
                epoch,
                stage: 2,
                train_loss: v,
                val_loss: v,
                val_accuracy: 1.0 - v,
            })
            .collect(),
    }
}

fn small_sets(n: usize, dim: usize, seed: u64) -> (ImageSource<f32>, Vec<(Image<f32>, Label)>) {
    let policy = AugmentPolicy::identity(dim, dim);
    let train = ImageSource {
        items: brightness_set(n, dim, seed),
        policy: policy.clone(),
    };
    let val = prepared_eval_set(&brightness_set(n / 2, dim, seed + 1), &policy).unwrap();
    (train, val)
}

#[test]
fn early_stop_hand_trace() {
    let losses = [1.0, 0.9, 0.95, 0.96, 0.97];
    let (d, best) = early_stop_check(&curve_of(&losses[..4]), 2, EarlyStopMetric::ValLoss);
    assert_eq!((d, best), (StopDecision::Continue, 1));
    let (d, best) = early_stop_check(&curve_of(&losses), 2, EarlyStopMetric::ValLoss);
    assert_eq!((d, best), (StopDecision::Stop, 1));
}

#[test]
fn early_stop_on_accuracy_tracks_maximum() {
    let c = curve_of(&[0.5, 0.2, 0.3, 0.4]);
    assert_eq!(early_stop_check(&c, 1, EarlyStopMetric::ValAccuracy), (StopDecision::Stop, 1));
}

proptest! {
    #[test]
    fn strictly_improving_curve_continues(start in 1.0f64..10.0, n in 1usize..30, patience in 1usize..10) {
        let values: Vec<f64> = (0..n).map(|i| start - i as f64 * 0.01).collect();
        let (d, best) = early_stop_check(&curve_of(&values), patience, EarlyStopMetric::ValLoss);
        prop_assert_eq!(d, StopDecision::Continue);
        prop_assert_eq!(best, n - 1);
    }

    #[test]
    fn patience_beyond_curve_length_continues(values in prop::collection::vec(0.0f64..5.0, 1..20)) {
        let (d, _) = early_stop_check(&curve_of(&values), values.len(), EarlyStopMetric::ValLoss);
        prop_assert_eq!(d, StopDecision::Continue);
    }

    #[test]
    fn softmax_pairs_sum_to_one(logits in prop::collection::vec(-30.0f64..30.0, 2..40)) {
        let even = &logits[..logits.len() / 2 * 2];
        for p in softmax_pairs(even) {
            prop_assert!((p[0] + p[1] - 1.0).abs() <= 1e-6);
            prop_assert!(p[0] >= 0.0 && p[1] >= 0.0);
        }
    }
}

#[test]
fn softmax_pair_examples() {
    let p = softmax_pairs(&[0.0f64, 0.0, 3f64.ln(), 0.0]);
    assert_eq!(p[0], [0.5, 0.5]);
    assert!((p[1][0] - 0.75).abs() < 1e-12 && (p[1][1] - 0.25).abs() < 1e-12);
}

#[test]
fn backbone_ids_parse_and_reject_unknown() {
    for id in BackboneId::ALL {
        assert_eq!(BackboneId::from_str(id.as_str()).unwrap(), id);
    }
    assert!(matches!(BackboneId::from_str("alexnet"), Err(FinetuneError::UnknownBackbone(s)) if s == "alexnet"));
}

#[test]
fn selected_hyperparameters() {
    assert_eq!(BackboneId::Resnet50.default_hyperparameters(), (16, 1e-3));
    assert_eq!(BackboneId::Densenet121.default_hyperparameters(), (16, 1e-3));
    assert_eq!(BackboneId::EfficientnetB3.default_hyperparameters(), (16, 1e-3));
    assert_eq!(BackboneId::Resnest50.default_hyperparameters(), (16, 1e-4));
    assert_eq!(BackboneId::Vit.default_hyperparameters(), (16, 1e-5));
}

#[test]
fn config_rejects_zero_batch_and_patience() {
    let bad_batch = TrainConfig {
        batch_size: 0,
        ..TrainConfig::default()
    };
    assert!(matches!(bad_batch.validate(), Err(FinetuneError::Config(_))));
    let bad_patience = TrainConfig {
        early_stop_patience: 0,
        ..TrainConfig::default()
    };
    assert!(matches!(bad_patience.validate(), Err(FinetuneError::Config(_))));
}

#[test]
fn every_tiny_backbone_emits_two_probabilities() {
    let x = Tensor::from_fn(vec![2, 3, 32, 32], |i| ((i % 17) as f32 - 8.0) / 8.0);
    for id in BackboneId::ALL {
        let model: Classifier<f32> = build_classifier(&tiny(id, 32), 2, &NoPretrained, 3).unwrap();
        let probs = model.predict_probs(&x).unwrap();
        assert_eq!(probs.len(), 2, "{id}");
        for p in probs {
            assert!((p[0] + p[1] - 1.0).abs() < 1e-6, "{id}: {p:?}");
        }
        let head = model.store.id_of("head.weight").unwrap();
        assert_eq!(model.store.value(head).shape(), &[2, model.spec.feature_dim()], "{id}");
        assert_eq!(model.store.param(head).group, Group::Head);
        assert!(model.store.iter().filter(|(_, p)| !p.name.starts_with("head.")).all(|(_, p)| p.group == Group::Body));
        assert_eq!(model.predict_probs(&x).unwrap(), model.predict_probs(&x).unwrap());
    }
}

#[test]
fn resnet50_standard_emits_two_logits_at_224() {
    let spec = BackboneSpec::new(BackboneId::Resnet50, Variant::Standard, 224);
    assert_eq!(spec.feature_dim(), 2048);
    let model: Classifier<f32> = build_classifier(&spec, 2, &NoPretrained, 0).unwrap();
    let x = Tensor::zeros(vec![1, 3, 224, 224]);
    let graph = Graph::new();
    let cx = Ctx::new(&graph, &model.store);
    assert_eq!(model.logits(&cx, graph.input(x)).shape(), vec![1, 2]);
}

#[test]
fn standard_feature_widths() {
    let dim = |id| BackboneSpec::new(id, Variant::Standard, 224).feature_dim();
    assert_eq!(dim(BackboneId::Densenet121), 1024);
    assert_eq!(dim(BackboneId::EfficientnetB3), 1536);
    assert_eq!(dim(BackboneId::Resnest50), 2048);
    assert_eq!(dim(BackboneId::Vit), 768);
}

#[test]
fn vit_rejects_input_not_divisible_by_patch() {
    for variant in [Variant::Standard, Variant::Tiny] {
        let spec = BackboneSpec::new(BackboneId::Vit, variant, 225);
        let err = build_classifier::<f32>(&spec, 2, &NoPretrained, 0).unwrap_err();
        assert!(matches!(err, FinetuneError::InputDim { input_dim: 225, .. }), "{err}");
    }
}

#[test]
fn wrong_input_shape_is_an_error() {
    let model: Classifier<f32> = build_classifier(&tiny(BackboneId::Resnet50, 32), 2, &NoPretrained, 0).unwrap();
    let x = Tensor::zeros(vec![1, 3, 16, 16]);
    assert!(matches!(model.predict_probs(&x), Err(FinetuneError::Shape(_))));
}

#[test]
fn pretrained_body_comes_from_provider() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = tiny(BackboneId::Densenet121, 32);
    let donor: Classifier<f32> = build_classifier(&spec, 2, &NoPretrained, 11).unwrap();
    let provider = WeightDir::new(dir.path());
    export_body_weights(&donor.store, &provider.path_for(&spec)).unwrap();

    spec.pretrained = true;
    assert!(matches!(
        build_classifier::<f32>(&spec, 2, &NoPretrained, 5),
        Err(FinetuneError::MissingWeights(_))
    ));
    let model: Classifier<f32> = build_classifier(&spec, 2, &provider, 5).unwrap();
    for ((_, a), (_, b)) in model.store.iter().zip(donor.store.iter()) {
        if a.group == Group::Body {
            assert_eq!(a.value.data(), b.value.data(), "{}", a.name);
        }
    }
    let other = tiny(BackboneId::Resnet50, 32);
    let missing = BackboneSpec { pretrained: true, ..other };
    assert!(matches!(
        build_classifier::<f32>(&missing, 2, &provider, 5),
        Err(FinetuneError::MissingWeights(_))
    ));
}

#[test]
fn untrained_head_loss_is_near_ln2() {
    let model: Classifier<f32> = build_classifier(&tiny(BackboneId::Resnet50, 32), 2, &NoPretrained, 1).unwrap();
    let (_, val) = small_sets(16, 32, 4);
    let refs: Vec<&Image<f32>> = val.iter().map(|(i, _)| i).collect();
    let y: Vec<usize> = val.iter().map(|(_, l)| l.index()).collect();
    let graph = Graph::new();
    let cx = Ctx::new(&graph, &model.store);
    let loss = model.logits(&cx, graph.input(Image::batch(&refs).unwrap())).cross_entropy(&y).item();
    assert!((loss - std::f32::consts::LN_2).abs() < 0.2, "loss {loss}");
}

#[test]
fn head_gradient_matches_central_differences() {
    let mut model: Classifier<f64> = build_classifier(&tiny(BackboneId::Resnet50, 16), 2, &NoPretrained, 8).unwrap();
    model.store.set_group_frozen(Group::Body, true);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Tensor::from_fn(vec![3, 3, 16, 16], |_| rng.random_range(-1.0..1.0));
    let y = [0usize, 1, 1];
    let loss_of = |m: &Classifier<f64>| {
        let graph = Graph::new();
        let cx = Ctx::new(&graph, &m.store);
        m.logits(&cx, graph.input(x.clone())).cross_entropy(&y).item()
    };
    let graph = Graph::new();
    graph.track(&model.store);
    let cx = Ctx::new(&graph, &model.store);
    let grads = graph.backward(model.logits(&cx, graph.input(x.clone())).cross_entropy(&y));
    let body_grads = model
        .store
        .iter()
        .filter(|(id, p)| p.group == Group::Body && grads.get(&model.store, *id).is_some())
        .count();
    assert_eq!(body_grads, 0, "frozen body received gradients");
    for name in ["head.weight", "head.bias"] {
        let id = model.store.id_of(name).unwrap();
        let analytic = grads.get(&model.store, id).unwrap().clone();
        for i in 0..analytic.numel() {
            let orig = model.store.value(id).data()[i];
            let h = 1e-5;
            model.store.value_mut(id).data_mut()[i] = orig + h;
            let plus = loss_of(&model);
            model.store.value_mut(id).data_mut()[i] = orig - h;
            let minus = loss_of(&model);
            model.store.value_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            assert!(rel <= 1e-3, "{name}[{i}]: analytic {a}, numeric {numeric}");
        }
    }
}

#[test]
fn stage_one_leaves_body_bitwise_unchanged() {
    let mut model: Classifier<f32> = build_classifier(&tiny(BackboneId::Resnet50, 32), 2, &NoPretrained, 4).unwrap();
    let before: Vec<(String, Vec<u32>, Group)> = model
        .store
        .iter()
        .map(|(_, p)| (p.name.clone(), p.value.data().iter().map(|v| v.to_bits()).collect(), p.group))
        .collect();
    let (train, val) = small_sets(32, 32, 9);
    let cfg = TrainConfig {
        batch_size: 8,
        stage1_epochs: 2,
        stage2_max_epochs: 0,
        ..TrainConfig::default()
    };
    let run = two_stage_finetune(&mut model, &train, &val, &cfg).unwrap();
    assert_eq!(run.curve.len(), 2);
    let mut head_changed = false;
    for ((_, p), (name, bits, group)) in model.store.iter().zip(&before) {
        let now: Vec<u32> = p.value.data().iter().map(|v| v.to_bits()).collect();
        match group {
            Group::Body => assert_eq!(&now, bits, "{name} moved during stage 1"),
            Group::Head => head_changed |= &now != bits,
        }
    }
    assert!(head_changed);
}

#[test]
fn seeded_runs_repeat_and_respect_the_stopping_bound() {
    let (train, val) = small_sets(24, 32, 2);
    let cfg = TrainConfig {
        batch_size: 8,
        stage1_epochs: 1,
        stage2_max_epochs: 6,
        early_stop_patience: 1,
        seed: 17,
        ..TrainConfig::default()
    };
    let run = |seed| {
        let mut m: Classifier<f32> =
            build_classifier(&tiny(BackboneId::Densenet121, 32), 2, &NoPretrained, seed).unwrap();
        let r = two_stage_finetune(&mut m, &train, &val, &cfg).unwrap();
        (r, m)
    };
    let (a, model_a) = run(1);
    let (b, _) = run(1);
    assert_eq!(a.curve.len(), b.curve.len());
    for (x, y) in a.curve.records.iter().zip(&b.curve.records) {
        assert!((x.train_loss - y.train_loss).abs() <= 1e-6);
        assert!((x.val_loss - y.val_loss).abs() <= 1e-6);
    }
    for (i, r) in a.curve.records.iter().enumerate() {
        assert_eq!(r.epoch, i);
        assert!(r.train_loss.is_finite() && r.val_loss.is_finite());
    }
    let stage2 = a.curve.records.iter().filter(|r| r.stage == 2).count();
    assert!(stage2 <= a.best_epoch + cfg.early_stop_patience + 1);
    assert_eq!(Some(a.best_epoch), a.curve.best_epoch(EarlyStopMetric::ValLoss));

    // The returned weights reproduce the best epoch's validation loss.
    let refs: Vec<&Image<f32>> = val.iter().map(|(i, _)| i).collect();
    let y: Vec<usize> = val.iter().map(|(_, l)| l.index()).collect();
    let graph = Graph::new();
    let cx = Ctx::new(&graph, &model_a.store);
    let loss = model_a.logits(&cx, graph.input(Image::batch(&refs).unwrap())).cross_entropy(&y).item() as f64;
    let best = a.curve.records[a.best_epoch].val_loss;
    assert!((loss - best).abs() < 1e-4, "restored loss {loss}, best {best}");
}

#[test]
fn empty_streams_are_rejected() {
    let mut model: Classifier<f32> = build_classifier(&tiny(BackboneId::Resnet50, 32), 2, &NoPretrained, 0).unwrap();
    let (train, val) = small_sets(4, 32, 0);
    let empty = ImageSource {
        items: Vec::new(),
        policy: train.policy.clone(),
    };
    let cfg = TrainConfig::default();
    assert!(matches!(
        two_stage_finetune(&mut model, &empty, &val, &cfg),
        Err(FinetuneError::EmptyTraining)
    ));
    assert!(matches!(
        two_stage_finetune(&mut model, &train, &[], &cfg),
        Err(FinetuneError::EmptyValidation)
    ));
}

#[test]
fn checkpoint_roundtrip_preserves_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let model: Classifier<f32> = build_classifier(&tiny(BackboneId::Resnest50, 32), 2, &NoPretrained, 6).unwrap();
    let info = ClassifierCheckpoint {
        best_epoch: Some(3),
        config_hash: "abc".into(),
    };
    model.save(&path, &info).unwrap();
    let (loaded, got) = Classifier::<f32>::load(&path).unwrap();
    assert_eq!(got, info);
    assert_eq!(loaded.spec, model.spec);
    let x = Tensor::from_fn(vec![2, 3, 32, 32], |i| (i % 7) as f32 / 7.0);
    assert_eq!(loaded.predict_probs(&x).unwrap(), model.predict_probs(&x).unwrap());
}
