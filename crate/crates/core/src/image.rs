//! RGB images and single-channel masks with values in `[0, 1]`.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// `h×w×3`, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

/// `h×w` soft mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        if h == 0 || w == 0 || data.len() != h * w * 3 {
            return Err(Error::InvalidShape {
                op: "image",
                shape: vec![h, w, data.len()],
                reason: "expected h·w·3 values",
            });
        }
        let mut img = Self { h, w, data };
        img.clamp();
        Ok(img)
    }

    pub fn filled(h: usize, w: usize, v: f32) -> Self {
        Self {
            h,
            w,
            data: vec![v.clamp(0.0, 1.0); h * w * 3],
        }
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.w + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Clamps every value to `[0, 1]`; NaN becomes 0.
    pub fn clamp(&mut self) {
        for v in &mut self.data {
            *v = clamp01(*v);
        }
    }

    pub fn l1_distance(&self, other: &Image) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum::<f64>()
            / self.data.len() as f64
    }
}

impl Mask {
    pub fn new(h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        if h == 0 || w == 0 || data.len() != h * w {
            return Err(Error::InvalidShape {
                op: "mask",
                shape: vec![h, w, data.len()],
                reason: "expected h·w values",
            });
        }
        Ok(Self {
            h,
            w,
            data: data.into_iter().map(clamp01).collect(),
        })
    }

    pub fn filled(h: usize, w: usize, v: f32) -> Self {
        Self {
            h,
            w,
            data: vec![clamp01(v); h * w],
        }
    }

    pub fn mass(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    /// Centered soft ellipse covering roughly the middle of the frame; the
    /// fallback when no face-region mask is available.
    pub fn ellipse(h: usize, w: usize) -> Self {
        let (cy, cx) = ((h as f32 - 1.0) / 2.0, (w as f32 - 1.0) / 2.0);
        let (ry, rx) = (0.42 * h as f32, 0.32 * w as f32);
        let soft = 1.5 / (h.min(w) as f32);
        let data = (0..h * w)
            .map(|i| {
                let (y, x) = ((i / w) as f32, (i % w) as f32);
                let d = ((y - cy) / ry).powi(2) + ((x - cx) / rx).powi(2);
                clamp01((1.0 - d.sqrt()) / soft + 0.5)
            })
            .collect();
        Self { h, w, data }
    }
}

pub(crate) fn clamp01(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Stacks equally sized images into an `N×h×w×3` tensor.
pub fn batch_tensor<T: Real>(images: &[&Image]) -> Result<Tensor<T>> {
    let first = images.first().ok_or(Error::InvalidShape {
        op: "batch_tensor",
        shape: vec![0],
        reason: "empty batch",
    })?;
    let (h, w) = (first.h, first.w);
    let mut data = Vec::with_capacity(images.len() * h * w * 3);
    for img in images {
        if (img.h, img.w) != (h, w) {
            return Err(Error::ShapeMismatch {
                op: "batch_tensor",
                lhs: vec![h, w],
                rhs: vec![img.h, img.w],
            });
        }
        data.extend(img.data.iter().map(|&v| T::cst(v as f64)));
    }
    Tensor::new(&[images.len(), h, w, 3], data)
}

/// Bilinear sample of a single-channel plane at fractional `(y, x)`.
/// Out-of-range coordinates read `outside`, or the nearest edge when
/// `outside` is `None`.
pub(crate) fn bilinear(
    plane: &[f32],
    h: usize,
    w: usize,
    y: f32,
    x: f32,
    outside: Option<f32>,
) -> f32 {
    let fetch = |yy: i64, xx: i64| -> f32 {
        if yy < 0 || xx < 0 || yy >= h as i64 || xx >= w as i64 {
            match outside {
                Some(v) => return v,
                None => {
                    let cy = yy.clamp(0, h as i64 - 1) as usize;
                    let cx = xx.clamp(0, w as i64 - 1) as usize;
                    return plane[cy * w + cx];
                }
            }
        }
        plane[yy as usize * w + xx as usize]
    };
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let (y0, x0) = (y0 as i64, x0 as i64);
    let mut acc = fetch(y0, x0) * (1.0 - fy) * (1.0 - fx);
    if fx != 0.0 {
        acc += fetch(y0, x0 + 1) * (1.0 - fy) * fx;
    }
    if fy != 0.0 {
        acc += fetch(y0 + 1, x0) * fy * (1.0 - fx);
        if fx != 0.0 {
            acc += fetch(y0 + 1, x0 + 1) * fy * fx;
        }
    }
    acc
}

/// Separable Gaussian blur with edge clamping. `sigma ≤ 0` returns the
/// input unchanged.
pub(crate) fn gaussian_blur(plane: &[f32], h: usize, w: usize, sigma: f32) -> Vec<f32> {
    if sigma <= 0.0 {
        return plane.to_vec();
    }
    let r = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f32> = (-r..=r)
        .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let z: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= z);
    let mut tmp = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (j, &kv) in k.iter().enumerate() {
                let xx = (x as i64 + j as i64 - r).clamp(0, w as i64 - 1) as usize;
                s += kv * plane[y * w + xx];
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (j, &kv) in k.iter().enumerate() {
                let yy = (y as i64 + j as i64 - r).clamp(0, h as i64 - 1) as usize;
                s += kv * tmp[yy * w + x];
            }
            out[y * w + x] = s;
        }
    }
    out
}

/// Hexcone RGB → HSV; hue in turns `[0, 1)`.
pub fn rgb_to_hsv([r, g, b]: [f32; 3]) -> [f32; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let v = max;
    let s = if max > 0.0 { d / max } else { 0.0 };
    let h = if d <= 0.0 {
        0.0
    } else if max == r {
        wrap((g - b) / d, 6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    [h, s, v]
}

/// Inverse of [`rgb_to_hsv`].
pub fn hsv_to_rgb([h, s, v]: [f32; 3]) -> [f32; 3] {
    let h6 = wrap(h, 1.0) * 6.0;
    let sector = (h6.floor() as i32).rem_euclid(6);
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn wrap(v: f32, m: f32) -> f32 {
    let r = v % m;
    if r < 0.0 {
        r + m
    } else {
        r
    }
}

/// ITU-R BT.601 luma.
pub fn luma([r, g, b]: [f32; 3]) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}
