use std::collections::HashSet;
use std::path::{Path, PathBuf};

use ctaug_autograd::Scalar;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{from_generator_range, to_generator_range, CycleGanError, CycleGanModel, Direction};
use crate::data_catalog::{Label, SliceRecord, Source};
use crate::preprocess::{presize_and_center_crop, save_png, AugmentPolicy, Image};

const BATCH: usize = 8;

/// Number of records of a class with `n` members to translate.
pub fn generated_count(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Direction that turns `label` into the opposite class.
pub fn direction_for(label: Label) -> Direction {
    match label {
        Label::Normal => Direction::AToB,
        Label::Covid => Direction::BToA,
    }
}

fn fit_to_model<T: Scalar>(img: &Image<T>, dim: usize, channels: usize) -> Result<Image<T>, CycleGanError> {
    let policy = AugmentPolicy::identity(dim, dim);
    let sq = presize_and_center_crop(img, &policy).map_err(|e| CycleGanError::Shape(e.to_string()))?;
    match (sq.channels(), channels) {
        (c, m) if c == m => Ok(sq),
        (1, m) => {
            let plane = sq.plane(0);
            let data = (0..m).flat_map(|_| plane.iter().copied()).collect();
            Image::new(m, dim, dim, data).map_err(|e| CycleGanError::Shape(e.to_string()))
        }
        (c, m) => Err(CycleGanError::Shape(format!(
            "image has {c} channels, generator expects {m}"
        ))),
    }
}

/// Channel mean as a single-channel image.
fn to_gray<T: Scalar>(img: &Image<T>) -> Image<T> {
    let c = img.channels();
    let inv = T::one() / T::from_usize_lossy(c);
    Image::from_fn(1, img.height(), img.width(), |_, y, x| {
        (0..c).map(|ch| img.get(ch, y, x)).fold(T::zero(), |a, b| a + b) * inv
    })
}

/// Translates `ceil(ratio * N_c)` seeded-random records of each class into
/// the opposite class and writes them to
/// `<cache_dir>/generated/<direction>/<stem>.png`. Each returned record keeps
/// its source's patient id, carries the opposite label and is flagged
/// generated. `load` yields a source slice as grayscale in `[0, 1]`.
pub fn generate_augmented_set<T, L>(
    model: &CycleGanModel<T>,
    train_records: &[SliceRecord],
    ratio: f64,
    cache_dir: &Path,
    seed: u64,
    mut load: L,
) -> Result<Vec<SliceRecord>, CycleGanError>
where
    T: Scalar,
    L: FnMut(&SliceRecord) -> Result<Image<T>, CycleGanError>,
{
    if !(0.0..=1.0).contains(&ratio) {
        return Err(CycleGanError::Spec(format!("ratio {ratio} must lie in [0, 1]")));
    }
    if let Some(r) = train_records.iter().find(|r| r.source != Source::Original) {
        return Err(CycleGanError::Spec(format!(
            "{} is already generated; only original train records can be translated",
            r.slice_path.display()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (dim, channels) = (model.gen_spec.input_dim, model.gen_spec.channels);
    let mut out = Vec::new();
    for label in [Label::Covid, Label::Normal] {
        let members: Vec<&SliceRecord> = train_records.iter().filter(|r| r.label == label).collect();
        let k = generated_count(ratio, members.len());
        if k == 0 {
            continue;
        }
        let mut chosen = rand::seq::index::sample(&mut rng, members.len(), k).into_vec();
        chosen.sort_unstable();
        let direction = direction_for(label);
        let dir = cache_dir.join("generated").join(direction.as_str());
        std::fs::create_dir_all(&dir).map_err(|e| CycleGanError::Io(format!("{}: {e}", dir.display())))?;
        let mut used = HashSet::new();
        for group in chosen.chunks(BATCH) {
            let mut inputs = Vec::with_capacity(group.len());
            for &i in group {
                inputs.push(to_generator_range(&fit_to_model(&load(members[i])?, dim, channels)?));
            }
            let refs: Vec<&Image<T>> = inputs.iter().collect();
            let batch = Image::batch(&refs).map_err(|e| CycleGanError::Shape(e.to_string()))?;
            let translated = model.translate(&batch, direction)?;
            let images = Image::unbatch(&translated).map_err(|e| CycleGanError::Shape(e.to_string()))?;
            for (&i, img) in group.iter().zip(images) {
                let src = members[i];
                let path = unique_path(&dir, &src.slice_path, &mut used);
                save_png(&to_gray(&from_generator_range(&img)), &path)
                    .map_err(|e| CycleGanError::Io(e.to_string()))?;
                out.push(SliceRecord {
                    patient_id: src.patient_id.clone(),
                    slice_path: path,
                    label: label.opposite(),
                    source: Source::Generated,
                });
            }
        }
    }
    Ok(out)
}

fn unique_path(dir: &Path, source: &Path, used: &mut HashSet<String>) -> PathBuf {
    let stem = source
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "slice".into());
    let mut name = stem.clone();
    let mut n = 1;
    while !used.insert(name.clone()) {
        name = format!("{stem}-{n}");
        n += 1;
    }
    dir.join(format!("{name}.png"))
}
