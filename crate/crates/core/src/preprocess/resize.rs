use ctaug_autograd::Scalar;
use rand::Rng;

use super::{AugmentPolicy, Image, PreprocessError};

/// Samples `src` at pixel-center-aligned positions; equal sizes are a copy.
pub fn resize_bilinear<T: Scalar>(img: &Image<T>, out_h: usize, out_w: usize) -> Image<T> {
    assert!(out_h > 0 && out_w > 0, "resize target must be positive");
    let (c, h, w) = (img.channels(), img.height(), img.width());
    if (out_h, out_w) == (h, w) {
        return img.clone();
    }
    let taps = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let (ty, tx) = (taps(h, out_h), taps(w, out_w));
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let p = img.plane(ch);
        for &(y0, y1, fy) in &ty {
            let fy = T::lit(fy);
            for &(x0, x1, fx) in &tx {
                let fx = T::lit(fx);
                let top = p[y0 * w + x0] + (p[y0 * w + x1] - p[y0 * w + x0]) * fx;
                let bot = p[y1 * w + x0] + (p[y1 * w + x1] - p[y1 * w + x0]) * fx;
                out.push(top + (bot - top) * fy);
            }
        }
    }
    Image::from_parts_unchecked(c, out_h, out_w, out)
}

/// Size after scaling the short side to `presize` with the aspect ratio kept.
pub fn presize_dims(height: usize, width: usize, presize: usize) -> (usize, usize) {
    let long = |l: usize, s: usize| ((l as f64 * presize as f64 / s as f64).round() as usize).max(presize);
    if height <= width {
        (presize, long(width, height))
    } else {
        (long(height, width), presize)
    }
}

fn presize<T: Scalar>(img: &Image<T>, policy: &AugmentPolicy) -> Result<Image<T>, PreprocessError> {
    policy.validate()?;
    if img.height() < 2 || img.width() < 2 {
        return Err(PreprocessError::TooSmall {
            height: img.height(),
            width: img.width(),
        });
    }
    let (h, w) = presize_dims(img.height(), img.width(), policy.presize_dim);
    Ok(resize_bilinear(img, h, w))
}

fn crop<T: Scalar>(img: &Image<T>, top: usize, left: usize, side: usize) -> Image<T> {
    let (c, w) = (img.channels(), img.width());
    let mut out = Vec::with_capacity(c * side * side);
    for ch in 0..c {
        let p = img.plane(ch);
        for y in top..top + side {
            out.extend_from_slice(&p[y * w + left..y * w + left + side]);
        }
    }
    Image::from_parts_unchecked(c, side, side, out)
}

/// Evaluation-time presizing: short side to `presize_dim`, then a centered
/// `final_dim` square.
pub fn presize_and_center_crop<T: Scalar>(
    img: &Image<T>,
    policy: &AugmentPolicy,
) -> Result<Image<T>, PreprocessError> {
    let big = presize(img, policy)?;
    let f = policy.final_dim;
    Ok(crop(&big, (big.height() - f) / 2, (big.width() - f) / 2, f))
}

/// Training-time presizing with a uniformly placed `final_dim` square.
pub fn presize_and_random_crop<T: Scalar, R: Rng + ?Sized>(
    img: &Image<T>,
    policy: &AugmentPolicy,
    rng: &mut R,
) -> Result<Image<T>, PreprocessError> {
    let big = presize(img, policy)?;
    let f = policy.final_dim;
    let top = rng.random_range(0..=big.height() - f);
    let left = rng.random_range(0..=big.width() - f);
    Ok(crop(&big, top, left, f))
}
