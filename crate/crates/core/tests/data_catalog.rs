use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use ctaug_core::data_catalog::{
    class_counts, load_manifest, parse_manifest, slices_for, split_by_patient, write_manifest, CatalogError,
    DatasetManifest, Label, Partition, SliceRecord, Source, SplitAssignment,
};
use proptest::prelude::*;

fn manifest_with(slices_per_patient: &[usize]) -> DatasetManifest {
    let mut records = Vec::new();
    for (p, &n) in slices_per_patient.iter().enumerate() {
        let label = if p % 3 == 0 { Label::Normal } else { Label::Covid };
        for s in 0..n {
            records.push(SliceRecord::new(format!("pat{p}"), format!("/data/pat{p}/s{s}.png"), label));
        }
    }
    DatasetManifest::from_records(records).unwrap()
}

/// Independent check of every split invariant; returns patient counts.
fn check_split(m: &DatasetManifest, a: &SplitAssignment) -> [usize; 3] {
    let ids: HashSet<&String> = m.patients().keys().collect();
    assert_eq!(a.partition_of.len(), ids.len(), "every patient gets exactly one partition");
    assert!(a.partition_of.keys().all(|k| ids.contains(k)));

    let mut owner: BTreeMap<String, Partition> = BTreeMap::new();
    let mut seen = HashSet::new();
    let mut total = 0;
    for part in Partition::ALL {
        let slices = slices_for(a, m, part).unwrap();
        total += slices.len();
        for r in &slices {
            if let Some(prev) = owner.insert(r.patient_id.clone(), part) {
                assert_eq!(prev, part, "patient {} spans two partitions", r.patient_id);
            }
            assert!(seen.insert(r.slice_path.clone()), "slice returned twice");
        }
    }
    assert_eq!(total, m.len(), "union covers every record");
    let mut counts = [0; 3];
    for (i, part) in Partition::ALL.into_iter().enumerate() {
        counts[i] = a.patients_in(part);
    }
    counts
}

fn ratios_strategy() -> impl Strategy<Value = [f64; 3]> {
    (1u32..100, 0u32..100, 0u32..100).prop_map(|(a, b, c)| {
        let s = f64::from(a + b + c);
        let (v, t) = (f64::from(b) / s, f64::from(c) / s);
        [1.0 - v - t, v, t]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn random_manifests_split_disjointly(
        slices in prop::collection::vec(1usize..=40, 1..=500),
        ratios in ratios_strategy(),
        seed in any::<u64>(),
    ) {
        let m = manifest_with(&slices);
        let a = split_by_patient(&m, ratios, seed).unwrap();
        let counts = check_split(&m, &a);
        // Val and test are floored, so each is short by less than one
        // patient and train absorbs both shortfalls.
        let p = slices.len() as f64;
        let dev: Vec<f64> = counts.iter().zip(ratios).map(|(&c, r)| c as f64 - r * p).collect();
        prop_assert!(dev[1] <= 1e-9 && dev[1] > -1.0, "{counts:?} vs {ratios:?} of {p}");
        prop_assert!(dev[2] <= 1e-9 && dev[2] > -1.0, "{counts:?} vs {ratios:?} of {p}");
        prop_assert!(dev[0] >= -1e-9 && dev[0] < 2.0, "{counts:?} vs {ratios:?} of {p}");
        prop_assert_eq!(&split_by_patient(&m, ratios, seed).unwrap(), &a);
    }
}

#[test]
fn paper_ratios_on_189_patients() {
    let m = manifest_with(&[2; 189]);
    let a = split_by_patient(&m, [0.70, 0.15, 0.15], 7).unwrap();
    assert_eq!(check_split(&m, &a), [133, 28, 28]);
}

#[test]
fn single_patient_lands_in_train() {
    let m = manifest_with(&[5]);
    let a = split_by_patient(&m, [0.70, 0.15, 0.15], 0).unwrap();
    assert_eq!(slices_for(&a, &m, Partition::Train).unwrap().len(), 5);
    assert!(slices_for(&a, &m, Partition::Val).unwrap().is_empty());
    assert!(slices_for(&a, &m, Partition::Test).unwrap().is_empty());
}

#[test]
fn split_errors() {
    let m = manifest_with(&[1, 1]);
    assert!(matches!(split_by_patient(&m, [0.5, 0.2, 0.2], 0), Err(CatalogError::InvalidRatios(_))));
    assert!(matches!(split_by_patient(&m, [0.0, 0.5, 0.5], 0), Err(CatalogError::InvalidRatios(_))));
    let empty = DatasetManifest::default();
    assert!(matches!(split_by_patient(&empty, [0.7, 0.15, 0.15], 0), Err(CatalogError::EmptyManifest)));
}

#[test]
fn split_json_roundtrips_and_foreign_patients_are_rejected() {
    let m = manifest_with(&[3, 2, 4]);
    let a = split_by_patient(&m, [0.70, 0.15, 0.15], 3).unwrap();
    assert_eq!(SplitAssignment::from_json(&a.to_json()).unwrap(), a);
    let mut foreign = a.clone();
    foreign.partition_of.insert("ghost".into(), Partition::Val);
    assert!(matches!(
        slices_for(&foreign, &m, Partition::Train),
        Err(CatalogError::UnknownPatient(p)) if p == "ghost"
    ));
}

#[test]
fn generated_records_cannot_reach_val_or_test() {
    let m = manifest_with(&[1; 20]);
    let a = split_by_patient(&m, [0.70, 0.15, 0.15], 1).unwrap();
    let (val_patient, _) = a.partition_of.iter().find(|(_, p)| **p == Partition::Val).unwrap();
    let mut records = m.records().to_vec();
    let mut fake = SliceRecord::new(val_patient.clone(), "/gen/x.png", Label::Covid);
    fake.source = Source::Generated;
    records.push(fake);
    let augmented = DatasetManifest::from_records(records).unwrap();
    assert!(matches!(
        slices_for(&a, &augmented, Partition::Train),
        Err(CatalogError::GeneratedOutsideTrain { .. })
    ));
}

#[test]
fn full_size_manifest_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut records = Vec::new();
    for i in 0..3163 {
        let label = if i < 1766 { Label::Covid } else { Label::Normal };
        records.push(SliceRecord::new(format!("p{}", i / 17), format!("slices/{i}.png"), label));
    }
    let path = dir.path().join("manifest.csv");
    std::fs::write(&path, write_manifest(&records, false)).unwrap();
    let m = load_manifest(&path).unwrap();
    assert_eq!(m.len(), 3163);
    assert_eq!(class_counts(m.records()), (1766, 1397));
    assert_eq!(m.records()[0].slice_path, dir.path().join("slices/0.png"));
}

#[test]
fn class_count_examples() {
    assert_eq!(class_counts(&[]), (0, 0));
    let covid: Vec<SliceRecord> = (0..5)
        .map(|i| SliceRecord::new("p", format!("{i}.png"), Label::Covid))
        .collect();
    assert_eq!(class_counts(&covid), (5, 0));
}

#[test]
fn manifest_errors_name_rows() {
    let base = Path::new("/d");
    let err = parse_manifest("patient_id,slice_path,label\np1,a.png,covid\np1,b.png,pneumonia\n", base).unwrap_err();
    assert!(matches!(&err, CatalogError::UnknownLabel { row: 3, label } if label == "pneumonia"), "{err}");
    assert!(err.to_string().contains("row 3") && err.to_string().contains("pneumonia"));

    let err = parse_manifest("patient_id,slice_path,label\np1,a.png\n", base).unwrap_err();
    assert!(matches!(err, CatalogError::Malformed { row: 2, .. }));

    let err = parse_manifest("patient_id,slice_path,label\np1,a.png,covid\np2,a.png,normal\n", base).unwrap_err();
    assert!(matches!(err, CatalogError::DuplicateSlice { row: 3, first_row: 2, .. }));

    assert!(matches!(parse_manifest("id,path,label\n", base), Err(CatalogError::Header(_))));
    assert!(matches!(
        load_manifest(Path::new("/nonexistent/manifest.csv")),
        Err(CatalogError::Io { .. })
    ));
    assert!(parse_manifest("patient_id,slice_path,label\n", base).unwrap().is_empty());
}

#[test]
fn source_column_roundtrips() {
    let mut g = SliceRecord::new("p2", "/x/g.png", Label::Normal);
    g.source = Source::Generated;
    let records = vec![SliceRecord::new("p1", "/x/a.png", Label::Covid), g];
    let m = parse_manifest(&write_manifest(&records, true), Path::new("/")).unwrap();
    assert_eq!(m.records(), &records[..]);
}

#[test]
fn unreadable_images_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.png"), b"not an image").unwrap();
    let m = parse_manifest("patient_id,slice_path,label\np,bad.png,covid\n", dir.path()).unwrap();
    assert!(matches!(m.check_images(), Err(CatalogError::UnreadableImage { row: 2, .. })));
}
