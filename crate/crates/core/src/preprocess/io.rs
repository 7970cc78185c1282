use std::path::{Path, PathBuf};

use ctaug_autograd::Scalar;
use image::{ImageBuffer, Luma};
use sha2::{Digest, Sha256};

use super::{gaussian_filter, GaussianSpec, Image, PreprocessError};

fn io_err(path: &Path, detail: impl ToString) -> PreprocessError {
    PreprocessError::Io {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    }
}

/// Decodes a PNG or JPEG as single-channel luma in `[0, 1]`.
pub fn load_image<T: Scalar>(path: &Path) -> Result<Image<T>, PreprocessError> {
    let decoded = image::ImageReader::open(path)
        .map_err(|e| io_err(path, e))?
        .with_guessed_format()
        .map_err(|e| io_err(path, e))?
        .decode()
        .map_err(|e| io_err(path, e))?;
    let luma = decoded.to_luma32f();
    let (w, h) = luma.dimensions();
    let data = luma
        .into_raw()
        .into_iter()
        .map(|v| T::lit(v.clamp(0.0, 1.0) as f64))
        .collect();
    Image::gray(h as usize, w as usize, data)
}

/// Rounds to the 16-bit grid used by [`save_png`].
pub fn quantize16<T: Scalar>(img: &Image<T>) -> Image<T> {
    let q = T::lit(65535.0);
    img.map(|v| (v.max(T::zero()).min(T::one()) * q).round() / q)
}

/// Writes a single-channel image as a 16-bit grayscale PNG, clamping to `[0, 1]`.
pub fn save_png<T: Scalar>(img: &Image<T>, path: &Path) -> Result<(), PreprocessError> {
    if img.channels() != 1 {
        return Err(PreprocessError::NotGrayscale(img.channels()));
    }
    let raw: Vec<u16> = img
        .data()
        .iter()
        .map(|v| (v.to_f64().unwrap_or(0.0).clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, raw).expect("buffer size");
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| io_err(path, e))
}

/// Content-addressed store of Gaussian-filtered slices at
/// `<dir>/<sha256(source path, spec)>.png`.
#[derive(Clone, Debug)]
pub struct PreprocessCache {
    dir: PathBuf,
}

impl PreprocessCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(source: &Path, spec: &GaussianSpec) -> String {
        let mut h = Sha256::new();
        h.update(source.to_string_lossy().as_bytes());
        h.update(b"\n");
        h.update(serde_json::to_string(spec).expect("spec serializes").as_bytes());
        hex::encode(h.finalize())
    }

    pub fn path_for(&self, source: &Path, spec: &GaussianSpec) -> PathBuf {
        self.dir.join(format!("{}.png", Self::key(source, spec)))
    }

    /// Filtered image for `source`, computing and storing it on a miss. A miss
    /// returns the re-decoded entry so hits and misses agree bit for bit.
    pub fn load_or_create<T: Scalar>(&self, source: &Path, spec: &GaussianSpec) -> Result<Image<T>, PreprocessError> {
        let cached = self.path_for(source, spec);
        if cached.is_file() {
            return load_image(&cached);
        }
        let filtered = gaussian_filter(&load_image::<T>(source)?, spec)?;
        // Entries appear atomically.
        let tmp = cached.with_extension("png.partial");
        save_png(&filtered, &tmp)?;
        std::fs::rename(&tmp, &cached).map_err(|e| io_err(&cached, e))?;
        load_image(&cached)
    }
}
