//! Seeded stand-in data for smoke runs and tests: toy shape domains,
//! brightness-separable image sets and CT-like slices written as a dataset.

use std::path::{Path, PathBuf};

use ctaug_autograd::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data_catalog::{write_manifest, Label, SliceRecord};
use crate::preprocess::{save_png, Image, PreprocessError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Square,
    Circle,
}

/// `n` single-channel `dim x dim` images, each a bright filled shape of
/// random size and position on a dark background.
pub fn shape_domain<T: Scalar>(shape: Shape, dim: usize, n: usize, seed: u64) -> Vec<Image<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = dim as f64;
    (0..n)
        .map(|_| {
            let r = rng.random_range(0.15..0.3) * d;
            let cx = rng.random_range(r..d - r);
            let cy = rng.random_range(r..d - r);
            Image::from_fn(1, dim, dim, |_, y, x| {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let inside = match shape {
                    Shape::Square => dx.abs() <= r && dy.abs() <= r,
                    Shape::Circle => dx * dx + dy * dy <= r * r,
                };
                T::lit(if inside { 0.9 } else { 0.1 })
            })
        })
        .collect()
}

/// Balanced grayscale set in `[0, 1]` whose classes differ only in mean
/// intensity: 0.3 for normal and 0.7 for covid, plus N(0, 0.05) pixel noise.
/// Labels alternate starting with normal.
pub fn brightness_set<T: Scalar>(n: usize, dim: usize, seed: u64) -> Vec<(Image<T>, Label)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.05).expect("valid std");
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Normal } else { Label::Covid };
            let base: f64 = if label == Label::Covid { 0.7 } else { 0.3 };
            let img = Image::from_fn(1, dim, dim, |_, _, _| {
                T::lit((base + noise.sample(&mut rng)).clamp(0.0, 1.0))
            });
            (img, label)
        })
        .collect()
}

/// A chest-like slice: an elliptical body with two dark lungs. Covid slices
/// add bright patchy opacities inside the lungs.
pub fn ct_like_slice<T: Scalar, R: Rng + ?Sized>(label: Label, height: usize, width: usize, rng: &mut R) -> Image<T> {
    let (h, w) = (height as f64, width as f64);
    let jitter = |rng: &mut R| rng.random_range(-0.03..0.03);
    let lung_x = [0.32 + jitter(rng), 0.68 + jitter(rng)];
    let lung_y = 0.5 + jitter(rng);
    let lesions: Vec<(f64, f64, f64)> = if label == Label::Covid {
        (0..rng.random_range(3..7))
            .map(|_| {
                let side = rng.random_range(0..2);
                (
                    lung_x[side] + rng.random_range(-0.08..0.08),
                    lung_y + rng.random_range(-0.15..0.15),
                    rng.random_range(0.04..0.08),
                )
            })
            .collect()
    } else {
        Vec::new()
    };
    let noise = Normal::new(0.0, 0.02).expect("valid std");
    let mut pixels = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            let (u, v) = ((x as f64 + 0.5) / w, (y as f64 + 0.5) / h);
            let body = ((u - 0.5) / 0.45).powi(2) + ((v - 0.5) / 0.38).powi(2) <= 1.0;
            let in_lung = lung_x
                .iter()
                .any(|lx| ((u - lx) / 0.13).powi(2) + ((v - lung_y) / 0.27).powi(2) <= 1.0);
            let mut val = match (body, in_lung) {
                (_, true) => 0.15,
                (true, false) => 0.6,
                (false, false) => 0.05,
            };
            if in_lung {
                for &(cx, cy, r) in &lesions {
                    let d2 = (u - cx).powi(2) + (v - cy).powi(2);
                    val += 0.35 * (-d2 / (2.0 * r * r)).exp();
                }
            }
            pixels.push(T::lit((val + noise.sample(rng)).clamp(0.0, 1.0)));
        }
    }
    Image::gray(height, width, pixels).expect("dimensions match data")
}

/// Writes `n_patients` patients with `slices_per_patient` CT-like PNG slices
/// each under `dir/images/`, and `dir/manifest.csv` with paths relative to
/// `dir`. Patients alternate normal and covid. Returns the manifest path.
pub fn write_synthetic_dataset(
    dir: &Path,
    n_patients: usize,
    slices_per_patient: usize,
    dim: usize,
    seed: u64,
) -> Result<PathBuf, PreprocessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n_patients * slices_per_patient);
    for p in 0..n_patients {
        let label = if p % 2 == 0 { Label::Normal } else { Label::Covid };
        let pid = format!("p{p:03}");
        for s in 0..slices_per_patient {
            let rel = PathBuf::from("images").join(format!("{pid}_{s:02}.png"));
            let img: Image<f32> = ct_like_slice(label, dim, dim, &mut rng);
            save_png(&img, &dir.join(&rel))?;
            records.push(SliceRecord::new(pid.clone(), rel, label));
        }
    }
    let manifest = dir.join("manifest.csv");
    std::fs::write(&manifest, write_manifest(&records, false)).map_err(|e| PreprocessError::Io {
        path: manifest.clone(),
        detail: e.to_string(),
    })?;
    Ok(manifest)
}
