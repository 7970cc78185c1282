use ctaug_autograd::Scalar;
use serde::{Deserialize, Serialize};

use super::{Image, PreprocessError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianSpec {
    pub sigma: f64,
    /// Kernel size is `2 * radius + 1`.
    pub radius: usize,
}

impl Default for GaussianSpec {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            radius: 2,
        }
    }
}

impl GaussianSpec {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(PreprocessError::InvalidSigma(self.sigma));
        }
        if self.radius == 0 {
            return Err(PreprocessError::InvalidRadius);
        }
        Ok(())
    }
}

/// `exp(-i^2 / (2 sigma^2))` for `i` in `-radius..=radius`, normalized to sum
/// to one. Evaluated in `f64`.
pub fn gaussian_kernel(spec: &GaussianSpec) -> Result<Vec<f64>, PreprocessError> {
    spec.validate()?;
    let r = spec.radius as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * spec.sigma * spec.sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// Mirror index without repeating the edge sample: `-1 -> 1`, `n -> n - 2`.
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Separable Gaussian smoothing of every channel with reflect padding.
/// Each tap accumulates `k * (x_i - x_center)` onto the center value, so
/// constant regions come back bit-identical.
pub fn gaussian_filter<T: Scalar>(img: &Image<T>, spec: &GaussianSpec) -> Result<Image<T>, PreprocessError> {
    let kernel: Vec<T> = gaussian_kernel(spec)?.into_iter().map(T::lit).collect();
    let r = spec.radius as isize;
    let (c, h, w) = (img.channels(), img.height(), img.width());
    let xs: Vec<Vec<usize>> = (0..w as isize)
        .map(|x| (-r..=r).map(|d| reflect_index(x + d, w)).collect())
        .collect();
    let ys: Vec<Vec<usize>> = (0..h as isize)
        .map(|y| (-r..=r).map(|d| reflect_index(y + d, h)).collect())
        .collect();
    let mut out = Vec::with_capacity(c * h * w);
    let mut tmp = vec![T::zero(); h * w];
    for ch in 0..c {
        let src = img.plane(ch);
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            for x in 0..w {
                let c0 = row[x];
                tmp[y * w + x] = c0 + xs[x].iter().zip(&kernel).map(|(&i, &k)| (row[i] - c0) * k).sum::<T>();
            }
        }
        for y in 0..h {
            for x in 0..w {
                let c0 = tmp[y * w + x];
                out.push(c0 + ys[y].iter().zip(&kernel).map(|(&i, &k)| (tmp[i * w + x] - c0) * k).sum::<T>());
            }
        }
    }
    Ok(Image::from_parts_unchecked(c, h, w, out))
}
