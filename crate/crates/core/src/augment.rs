//! Simulated spoof cues.
//!
//! SPSC turns a live image into a print-like (color jitter) or replay-like
//! (moiré) sample. SDSC self-blends a color/geometry-shifted copy of the
//! image back into itself through a deformed face mask. Every function is a
//! pure function of its inputs, the spec and a seed.

use alloc::format;
use alloc::vec::Vec;
use core::f32::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{bilinear, clamp01, gaussian_blur, hsv_to_rgb, luma, rgb_to_hsv, Image, Mask};
use crate::rng::{derive_seed_str, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JitterSpec {
    pub brightness: [f64; 2],
    pub contrast: [f64; 2],
    pub saturation: [f64; 2],
    /// Hue shift bound in turns; the shift is drawn from `[-hue, hue]`.
    pub hue: f64,
}

impl JitterSpec {
    pub fn identity() -> Self {
        Self {
            brightness: [1.0, 1.0],
            contrast: [1.0, 1.0],
            saturation: [1.0, 1.0],
            hue: 0.0,
        }
    }
}

impl Default for JitterSpec {
    fn default() -> Self {
        Self {
            brightness: [0.6, 1.4],
            contrast: [0.6, 1.4],
            saturation: [0.6, 1.4],
            hue: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoireSpec {
    /// Cycles per pixel, shared by the radial and angular terms.
    pub freq: [f64; 2],
    pub amplitude: f64,
    /// Radians.
    pub phase: [f64; 2],
}

impl Default for MoireSpec {
    fn default() -> Self {
        Self {
            freq: [0.05, 0.25],
            amplitude: 0.15,
            phase: [0.0, 2.0 * core::f64::consts::PI],
        }
    }
}

/// Small random similarity transform: translation in pixels, relative scale
/// change and rotation in radians, each drawn from `[-x, x]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineJitter {
    pub translate: f64,
    pub scale: f64,
    pub rotate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdscSpec {
    /// Source shift in pixels per axis.
    pub translate: [f64; 2],
    /// Source zoom about the image center.
    pub resize: [f64; 2],
    /// Source hue shift bound in turns.
    pub hue: f64,
    pub brightness: [f64; 2],
    pub elastic_alpha: f64,
    pub elastic_sigma: f64,
    pub blur_sigma: f64,
    pub mask_affine: AffineJitter,
}

impl SdscSpec {
    /// Leaves both the source copy and the mask untouched.
    pub fn identity() -> Self {
        Self {
            translate: [0.0, 0.0],
            resize: [1.0, 1.0],
            hue: 0.0,
            brightness: [1.0, 1.0],
            elastic_alpha: 0.0,
            elastic_sigma: 1.0,
            blur_sigma: 0.0,
            mask_affine: AffineJitter {
                translate: 0.0,
                scale: 0.0,
                rotate: 0.0,
            },
        }
    }
}

impl Default for SdscSpec {
    fn default() -> Self {
        Self {
            translate: [-2.0, 2.0],
            resize: [0.94, 1.06],
            hue: 0.06,
            brightness: [0.75, 1.25],
            elastic_alpha: 6.0,
            elastic_sigma: 3.0,
            blur_sigma: 1.0,
            mask_affine: AffineJitter {
                translate: 1.5,
                scale: 0.05,
                rotate: 0.08,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSpec {
    pub jitter: JitterSpec,
    pub moire: MoireSpec,
    pub sdsc: SdscSpec,
    pub seed: u64,
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<()> {
        let j = &self.jitter;
        let s = &self.sdsc;
        let ranges = [
            ("jitter.brightness", j.brightness),
            ("jitter.contrast", j.contrast),
            ("jitter.saturation", j.saturation),
            ("moire.freq", self.moire.freq),
            ("moire.phase", self.moire.phase),
            ("sdsc.translate", s.translate),
            ("sdsc.resize", s.resize),
            ("sdsc.brightness", s.brightness),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo <= hi) {
                return Err(Error::InvalidConfig(format!("{name}: lo {lo} > hi {hi}")));
            }
        }
        if !(0.0..=1.0).contains(&self.moire.amplitude) {
            return Err(Error::InvalidConfig(format!(
                "moire.amplitude {} outside [0, 1]",
                self.moire.amplitude
            )));
        }
        let nonneg = [
            ("jitter.hue", j.hue),
            ("sdsc.hue", s.hue),
            ("sdsc.elastic_alpha", s.elastic_alpha),
            ("sdsc.blur_sigma", s.blur_sigma),
            ("sdsc.mask_affine.translate", s.mask_affine.translate),
            ("sdsc.mask_affine.scale", s.mask_affine.scale),
            ("sdsc.mask_affine.rotate", s.mask_affine.rotate),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be >= 0, got {v}"
                )));
            }
        }
        if !(s.elastic_sigma > 0.0) {
            return Err(Error::InvalidConfig(
                "sdsc.elastic_sigma must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Factors actually applied by [`color_jitter`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterDraw {
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
    pub hue: f32,
}

impl JitterDraw {
    pub fn sample(spec: &JitterSpec, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        Self {
            brightness: rng.uniform(spec.brightness[0], spec.brightness[1]) as f32,
            contrast: rng.uniform(spec.contrast[0], spec.contrast[1]) as f32,
            saturation: rng.uniform(spec.saturation[0], spec.saturation[1]) as f32,
            hue: rng.uniform(-spec.hue, spec.hue) as f32,
        }
    }
}

/// Brightness (multiply), contrast (blend with the mean gray level),
/// saturation (blend with per-pixel luma), hue (rotation in HSV), each
/// clamped to `[0, 1]`.
pub fn color_jitter(img: &Image, spec: &JitterSpec, seed: u64) -> Image {
    apply_jitter(img, &JitterDraw::sample(spec, seed))
}

pub fn apply_jitter(img: &Image, d: &JitterDraw) -> Image {
    let mut out = img.clone();
    // blends are written as x·f + ref·(1 − f) so that f = 1 is exact
    for v in &mut out.data {
        *v = clamp01(*v * d.brightness);
    }
    let mean = out.data.iter().map(|&v| v as f64).sum::<f64>() as f32 / out.data.len() as f32;
    for v in &mut out.data {
        *v = clamp01(*v * d.contrast + mean * (1.0 - d.contrast));
    }
    for px in out.data.chunks_mut(3) {
        let l = luma([px[0], px[1], px[2]]);
        for v in px.iter_mut() {
            *v = clamp01(*v * d.saturation + l * (1.0 - d.saturation));
        }
    }
    if d.hue != 0.0 {
        for px in out.data.chunks_mut(3) {
            let [h, s, v] = rgb_to_hsv([px[0], px[1], px[2]]);
            let rgb = hsv_to_rgb([h + d.hue, s, v]);
            for (dst, src) in px.iter_mut().zip(rgb) {
                *dst = clamp01(src);
            }
        }
    }
    out
}

/// Parameters of one moiré pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoireDraw {
    pub center: [f32; 2],
    pub freq_r: f32,
    pub freq_theta: f32,
    pub phase_r: f32,
    pub phase_theta: f32,
    pub amplitude: f32,
}

impl MoireDraw {
    pub fn sample(spec: &MoireSpec, h: usize, w: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        Self {
            center: [
                rng.uniform(0.0, h as f64 - 1.0) as f32,
                rng.uniform(0.0, w as f64 - 1.0) as f32,
            ],
            freq_r: rng.uniform(spec.freq[0], spec.freq[1]) as f32,
            freq_theta: rng.uniform(spec.freq[0], spec.freq[1]) as f32,
            phase_r: rng.uniform(spec.phase[0], spec.phase[1]) as f32,
            phase_theta: rng.uniform(spec.phase[0], spec.phase[1]) as f32,
            amplitude: spec.amplitude as f32,
        }
    }

    /// `a·sin(2πf·r + φ)·sin(2πf′·θ + φ′)` in polar coordinates about the
    /// center.
    pub fn pattern(&self, y: usize, x: usize) -> f32 {
        let dy = y as f32 - self.center[0];
        let dx = x as f32 - self.center[1];
        let r = (dy * dy + dx * dx).sqrt();
        let theta = dy.atan2(dx);
        self.amplitude
            * (2.0 * PI * self.freq_r * r + self.phase_r).sin()
            * (2.0 * PI * self.freq_theta * theta + self.phase_theta).sin()
    }
}

/// Adds a polar interference pattern to every channel.
pub fn moire_synthesize(img: &Image, spec: &MoireSpec, seed: u64) -> Image {
    apply_moire(img, &MoireDraw::sample(spec, img.h, img.w, seed))
}

pub fn apply_moire(img: &Image, d: &MoireDraw) -> Image {
    let mut out = img.clone();
    if d.amplitude == 0.0 {
        return out;
    }
    for y in 0..img.h {
        for x in 0..img.w {
            let p = d.pattern(y, x);
            let i = (y * img.w + x) * 3;
            for v in &mut out.data[i..i + 3] {
                *v = clamp01(*v + p);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpscBranch {
    /// Color jitter.
    Print,
    /// Moiré.
    Replay,
}

/// Seeds used by [`spsc`]: the branch coin and the per-branch sub-seed.
pub fn spsc_seeds(seed: u64) -> (SpscBranch, u64) {
    let coin = SplitMix64::new(derive_seed_str(seed, "spsc.branch")).coin();
    if coin {
        (SpscBranch::Print, derive_seed_str(seed, "spsc.print"))
    } else {
        (SpscBranch::Replay, derive_seed_str(seed, "spsc.replay"))
    }
}

/// Fair seeded choice between the print and replay cues.
pub fn spsc(img: &Image, spec: &AugmentSpec, seed: u64) -> (Image, SpscBranch) {
    let (branch, sub) = spsc_seeds(seed);
    let out = match branch {
        SpscBranch::Print => color_jitter(img, &spec.jitter, sub),
        SpscBranch::Replay => moire_synthesize(img, &spec.moire, sub),
    };
    (out, branch)
}

/// Affine jitter, then a smoothed random displacement field, then Gaussian
/// blur. Resampling is bilinear and reads zero outside the frame.
pub fn deform_mask(mask: &Mask, spec: &SdscSpec, seed: u64) -> Mask {
    let (h, w) = (mask.h, mask.w);
    let mut rng = SplitMix64::new(seed);
    let a = &spec.mask_affine;
    let ty = rng.uniform(-a.translate, a.translate) as f32;
    let tx = rng.uniform(-a.translate, a.translate) as f32;
    let sc = 1.0 + rng.uniform(-a.scale, a.scale) as f32;
    let rot = rng.uniform(-a.rotate, a.rotate) as f32;
    let field_seed = rng.next_u64();

    let mut plane = mask.data.clone();
    if ty != 0.0 || tx != 0.0 || sc != 1.0 || rot != 0.0 {
        plane = warp(&plane, h, w, Some(0.0), |y, x| {
            let (cy, cx) = ((h as f32 - 1.0) / 2.0, (w as f32 - 1.0) / 2.0);
            let (py, px) = ((y - cy - ty) / sc, (x - cx - tx) / sc);
            let (s, c) = rot.sin_cos();
            (c * py - s * px + cy, s * py + c * px + cx)
        });
    }
    if spec.elastic_alpha > 0.0 {
        let (dy, dx) = elastic_field(
            h,
            w,
            spec.elastic_alpha as f32,
            spec.elastic_sigma as f32,
            field_seed,
        );
        plane = warp(&plane, h, w, Some(0.0), |y, x| {
            let i = y as usize * w + x as usize;
            (y + dy[i], x + dx[i])
        });
    }
    plane = gaussian_blur(&plane, h, w, spec.blur_sigma as f32);
    Mask {
        h,
        w,
        data: plane.into_iter().map(clamp01).collect(),
    }
}

/// Smoothed uniform noise scaled by `alpha`.
fn elastic_field(h: usize, w: usize, alpha: f32, sigma: f32, seed: u64) -> (Vec<f32>, Vec<f32>) {
    let mut rng = SplitMix64::new(seed);
    let mut noise = || -> Vec<f32> { (0..h * w).map(|_| rng.uniform(-1.0, 1.0) as f32).collect() };
    let (ny, nx) = (noise(), noise());
    let scale = |v: Vec<f32>| v.into_iter().map(|u| u * alpha).collect::<Vec<f32>>();
    (
        scale(gaussian_blur(&ny, h, w, sigma)),
        scale(gaussian_blur(&nx, h, w, sigma)),
    )
}

/// Output pixel `(y, x)` reads the input at `src(y, x)`.
fn warp(
    plane: &[f32],
    h: usize,
    w: usize,
    outside: Option<f32>,
    src: impl Fn(f32, f32) -> (f32, f32),
) -> Vec<f32> {
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = src(y as f32, x as f32);
            out.push(bilinear(plane, h, w, sy, sx, outside));
        }
    }
    out
}

/// Intermediate images of one SDSC draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SdscParts {
    pub source: Image,
    pub target: Image,
    pub mask: Mask,
    pub output: Image,
}

/// Self-blend: a jittered, zoomed and shifted copy of the image is pasted
/// back through the deformed mask, `out = M·source + (1 − M)·target`.
pub fn sdsc(img: &Image, mask: &Mask, spec: &SdscSpec, seed: u64) -> Result<Image> {
    Ok(sdsc_parts(img, mask, spec, seed)?.output)
}

pub fn sdsc_parts(img: &Image, mask: &Mask, spec: &SdscSpec, seed: u64) -> Result<SdscParts> {
    if (mask.h, mask.w) != (img.h, img.w) {
        return Err(Error::MaskSizeMismatch {
            mask: [mask.h, mask.w],
            image: [img.h, img.w],
        });
    }
    let (h, w) = (img.h, img.w);
    let mut rng = SplitMix64::new(derive_seed_str(seed, "sdsc.source"));
    let jitter = JitterDraw {
        brightness: rng.uniform(spec.brightness[0], spec.brightness[1]) as f32,
        contrast: 1.0,
        saturation: 1.0,
        hue: rng.uniform(-spec.hue, spec.hue) as f32,
    };
    let zoom = rng.uniform(spec.resize[0], spec.resize[1]) as f32;
    let ty = rng.uniform(spec.translate[0], spec.translate[1]) as f32;
    let tx = rng.uniform(spec.translate[0], spec.translate[1]) as f32;

    let target = img.clone();
    let mut source = apply_jitter(img, &jitter);
    if zoom != 1.0 || ty != 0.0 || tx != 0.0 {
        let (cy, cx) = ((h as f32 - 1.0) / 2.0, (w as f32 - 1.0) / 2.0);
        let mut planes = [Vec::new(), Vec::new(), Vec::new()];
        for (c, plane) in planes.iter_mut().enumerate() {
            let ch: Vec<f32> = source.data.iter().skip(c).step_by(3).copied().collect();
            *plane = warp(&ch, h, w, None, |y, x| {
                ((y - cy - ty) / zoom + cy, (x - cx - tx) / zoom + cx)
            });
        }
        for i in 0..h * w {
            for c in 0..3 {
                source.data[i * 3 + c] = clamp01(planes[c][i]);
            }
        }
    }

    let m = deform_mask(mask, spec, derive_seed_str(seed, "sdsc.mask"));
    let mut output = target.clone();
    for i in 0..h * w {
        let a = m.data[i];
        for c in 0..3 {
            let j = i * 3 + c;
            output.data[j] = clamp01(target.data[j] + a * (source.data[j] - target.data[j]));
        }
    }
    Ok(SdscParts {
        source,
        target,
        mask: m,
        output,
    })
}
