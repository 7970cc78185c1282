//! Grayscale slice images, Gaussian denoising, presizing, training-time
//! augmentation and the on-disk preprocessing cache.

mod augment;
mod gaussian;
mod io;
mod resize;

use std::path::PathBuf;

use ctaug_autograd::{Scalar, Tensor};
use thiserror::Error;

pub use augment::{augment, hflip, AugmentPolicy};
pub use gaussian::{gaussian_filter, gaussian_kernel, reflect_index, GaussianSpec};
pub use io::{load_image, quantize16, save_png, PreprocessCache};
pub use resize::{presize_and_center_crop, presize_and_random_crop, presize_dims, resize_bilinear};

/// Per-channel statistics of the natural-image pretraining corpus.
pub const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("gaussian sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("gaussian kernel radius must be at least 1")]
    InvalidRadius,
    #[error("image {height}x{width} is smaller than 2x2")]
    TooSmall { height: usize, width: usize },
    #[error("standard deviation for channel {0} is zero")]
    ZeroStd(usize),
    #[error("expected a single-channel image, got {0} channels")]
    NotGrayscale(usize),
    #[error("invalid augmentation policy: {0}")]
    Policy(String),
    #[error("{path}: {detail}")]
    Io { path: PathBuf, detail: String },
}

/// Channel-major image.
///
/// Invariant: every dimension is at least 1, `data.len() == c * h * w` and
/// every value is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self, PreprocessError> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(PreprocessError::InvalidImage(format!(
                "dimensions {channels}x{height}x{width} must be positive"
            )));
        }
        if data.len() != channels * height * width {
            return Err(PreprocessError::InvalidImage(format!(
                "{} values for a {channels}x{height}x{width} image",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(PreprocessError::InvalidImage(format!("value {i} is not finite")));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn gray(height: usize, width: usize, data: Vec<T>) -> Result<Self, PreprocessError> {
        Self::new(1, height, width, data)
    }

    /// # Panics
    /// If a dimension is zero or `f` yields a non-finite value.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data).unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Self {
        Self::from_fn(channels, height, width, |_, _, _| value)
    }

    pub(crate) fn from_parts_unchecked(channels: usize, height: usize, width: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), channels * height * width);
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn min_max(&self) -> (T, T) {
        self.data.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        let data = self.data.iter().map(|&v| f(v)).collect();
        Self::new(self.channels, self.height, self.width, data).unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::lit(v.to_f64().unwrap_or(0.0))).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(
            (self.channels, self.height, self.width),
            (other.channels, other.height, other.width),
            "image shape mismatch"
        );
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// Stacks same-shape images into an `[n, c, h, w]` tensor.
    pub fn batch(images: &[&Image<T>]) -> Result<Tensor<T>, PreprocessError> {
        let first = images
            .first()
            .ok_or_else(|| PreprocessError::InvalidImage("empty batch".into()))?;
        let dims = (first.channels, first.height, first.width);
        let mut data = Vec::with_capacity(images.len() * first.data.len());
        for img in images {
            if (img.channels, img.height, img.width) != dims {
                return Err(PreprocessError::InvalidImage(format!(
                    "batch mixes {}x{}x{} with {}x{}x{}",
                    img.channels, img.height, img.width, dims.0, dims.1, dims.2
                )));
            }
            data.extend_from_slice(&img.data);
        }
        Tensor::new(vec![images.len(), dims.0, dims.1, dims.2], data)
            .map_err(|e| PreprocessError::InvalidImage(e.to_string()))
    }

    /// Splits an `[n, c, h, w]` tensor into images.
    pub fn unbatch(t: &Tensor<T>) -> Result<Vec<Image<T>>, PreprocessError> {
        let (n, c, h, w) = t.dims4().map_err(|e| PreprocessError::InvalidImage(e.to_string()))?;
        t.data()
            .chunks(c * h * w)
            .take(n)
            .map(|chunk| Image::new(c, h, w, chunk.to_vec()))
            .collect()
    }
}

/// Replicates a grayscale image to three channels and standardizes each
/// channel as `(x - mean[c]) / std[c]`.
pub fn to_model_tensor<T: Scalar>(
    img: &Image<T>,
    mean: [f64; 3],
    std: [f64; 3],
) -> Result<Image<T>, PreprocessError> {
    if img.channels != 1 {
        return Err(PreprocessError::NotGrayscale(img.channels));
    }
    if let Some(c) = std.iter().position(|&s| s == 0.0 || !s.is_finite()) {
        return Err(PreprocessError::ZeroStd(c));
    }
    let n = img.height * img.width;
    let mut data = Vec::with_capacity(3 * n);
    for c in 0..3 {
        let (m, s) = (T::lit(mean[c]), T::lit(std[c]));
        data.extend(img.data.iter().map(|&v| (v - m) / s));
    }
    Image::new(3, img.height, img.width, data)
}
