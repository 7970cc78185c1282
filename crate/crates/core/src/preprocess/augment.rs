use ctaug_autograd::Scalar;
use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Image, PreprocessError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentPolicy {
    pub flip_prob: f64,
    pub max_rotate_deg: f64,
    pub zoom_range: [f64; 2],
    /// Corner displacement bound as a fraction of the image side, in the
    /// `[-1, 1]` normalized frame (so pixels move at most `warp * dim / 2`).
    pub warp_magnitude: f64,
    /// Multiplicative bounds shared by brightness and contrast.
    pub lighting_range: [f64; 2],
    pub presize_dim: usize,
    pub final_dim: usize,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            flip_prob: 0.5,
            max_rotate_deg: 10.0,
            zoom_range: [1.0, 1.1],
            warp_magnitude: 0.2,
            lighting_range: [0.8, 1.2],
            presize_dim: 256,
            final_dim: 224,
        }
    }
}

impl AugmentPolicy {
    /// A policy whose `augment` is the identity.
    pub fn identity(presize_dim: usize, final_dim: usize) -> Self {
        Self {
            flip_prob: 0.0,
            max_rotate_deg: 0.0,
            zoom_range: [1.0, 1.0],
            warp_magnitude: 0.0,
            lighting_range: [1.0, 1.0],
            presize_dim,
            final_dim,
        }
    }

    pub fn validate(&self) -> Result<(), PreprocessError> {
        let bad = |m: &str| Err(PreprocessError::Policy(m.to_string()));
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return bad("flip_prob must lie in [0, 1]");
        }
        if !(self.max_rotate_deg >= 0.0 && self.max_rotate_deg.is_finite()) {
            return bad("max_rotate_deg must be non-negative");
        }
        let [lo, hi] = self.zoom_range;
        if !(lo > 0.0 && lo <= 1.0 && hi >= 1.0 && hi.is_finite()) {
            return bad("zoom_range must satisfy 0 < lo <= 1 <= hi");
        }
        if !(self.warp_magnitude >= 0.0 && self.warp_magnitude < 1.0) {
            return bad("warp_magnitude must lie in [0, 1)");
        }
        let [lo, hi] = self.lighting_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("lighting_range must satisfy 0 < lo <= hi");
        }
        if self.final_dim == 0 || self.final_dim > self.presize_dim {
            return bad("final_dim must satisfy 1 <= final_dim <= presize_dim");
        }
        Ok(())
    }
}

/// Mirrors every row.
pub fn hflip<T: Scalar>(img: &Image<T>) -> Image<T> {
    let w = img.width();
    let mut data = img.data().to_vec();
    for row in data.chunks_mut(w) {
        row.reverse();
    }
    Image::from_parts_unchecked(img.channels(), img.height(), w, data)
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Homography taking `src[i]` to `dst[i]`, or `None` if degenerate.
fn homography(src: &[[f64; 2]; 4], dst: &[[f64; 2]; 4]) -> Option<Matrix3<f64>> {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for i in 0..4 {
        let ([x, y], [u, v]) = (src[i], dst[i]);
        let r = 2 * i;
        a.row_mut(r).copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
        a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
        b[r] = u;
        b[r + 1] = v;
    }
    let h = a.lu().solve(&b)?;
    Some(Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0))
}

/// Reflects a continuous coordinate into `[0, n - 1]`.
fn reflect_coord(v: f64, n: usize) -> f64 {
    if n == 1 {
        return 0.0;
    }
    let period = 2.0 * (n - 1) as f64;
    let m = v.rem_euclid(period);
    if m <= (n - 1) as f64 {
        m
    } else {
        period - m
    }
}

fn warp_image<T: Scalar>(img: &Image<T>, inverse: &Matrix3<f64>) -> Image<T> {
    let (c, h, w) = (img.channels(), img.height(), img.width());
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let mut taps = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let p = inverse * Vector3::new(x as f64 - cx, y as f64 - cy, 1.0);
            let (sx, sy) = if p.z.abs() > 1e-12 {
                (p.x / p.z + cx, p.y / p.z + cy)
            } else {
                (x as f64, y as f64)
            };
            let (sx, sy) = (reflect_coord(sx, w), reflect_coord(sy, h));
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            taps.push((x0, x1, y0, y1, T::lit(sx - x0 as f64), T::lit(sy - y0 as f64)));
        }
    }
    let mut out = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        let p = img.plane(ch);
        for &(x0, x1, y0, y1, fx, fy) in &taps {
            let top = p[y0 * w + x0] + (p[y0 * w + x1] - p[y0 * w + x0]) * fx;
            let bot = p[y1 * w + x0] + (p[y1 * w + x1] - p[y1 * w + x0]) * fx;
            out.push(top + (bot - top) * fy);
        }
    }
    Image::from_parts_unchecked(c, h, w, out)
}

/// Random horizontal flip, rotation, zoom, perspective warp and lighting, in
/// that order, then clamping to `[0, 1]`. Draws the same number of variates
/// for every policy. Stages whose sampled parameters are neutral are skipped,
/// so the identity policy returns the input unchanged.
pub fn augment<T: Scalar, R: Rng + ?Sized>(img: &Image<T>, policy: &AugmentPolicy, rng: &mut R) -> Image<T> {
    let flip = rng.random::<f64>() < policy.flip_prob;
    let angle = uniform(rng, -policy.max_rotate_deg, policy.max_rotate_deg).to_radians();
    let zoom = uniform(rng, policy.zoom_range[0], policy.zoom_range[1]);
    let mut shifts = [[0.0; 2]; 4];
    for s in shifts.iter_mut().flatten() {
        *s = uniform(rng, -policy.warp_magnitude, policy.warp_magnitude);
    }
    let brightness = uniform(rng, policy.lighting_range[0], policy.lighting_range[1]);
    let contrast = uniform(rng, policy.lighting_range[0], policy.lighting_range[1]);

    let mut out = if flip { hflip(img) } else { img.clone() };

    let warped = shifts.iter().flatten().any(|&s| s != 0.0);
    if angle != 0.0 || zoom != 1.0 || warped {
        let (hw, hh) = ((out.width() as f64 - 1.0) / 2.0, (out.height() as f64 - 1.0) / 2.0);
        let rot = Matrix3::new(angle.cos(), -angle.sin(), 0.0, angle.sin(), angle.cos(), 0.0, 0.0, 0.0, 1.0);
        let scale = Matrix3::new(zoom, 0.0, 0.0, 0.0, zoom, 0.0, 0.0, 0.0, 1.0);
        let corners = [[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh]];
        let mut moved = corners;
        for (m, s) in moved.iter_mut().zip(&shifts) {
            m[0] += s[0] * hw.max(0.5);
            m[1] += s[1] * hh.max(0.5);
        }
        let persp = homography(&corners, &moved).unwrap_or_else(Matrix3::identity);
        let forward = persp * scale * rot;
        if let Some(inverse) = forward.try_inverse() {
            out = warp_image(&out, &inverse);
        }
    }

    if brightness != 1.0 || contrast != 1.0 {
        let (b, c, half) = (T::lit(brightness), T::lit(contrast), T::lit(0.5));
        out = out.map(|v| half + (v * b - half) * c);
    }
    out.map(|v| v.max(T::zero()).min(T::one()))
}
