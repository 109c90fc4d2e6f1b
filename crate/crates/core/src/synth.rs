//! Procedural face-like identities, dataset planning and verification pairs.
//!
//! Every live render sits on a neutral gray backdrop. Identities differ in
//! face geometry, skin and hair color, feature layout and a sinusoidal skin
//! texture; variants of one identity differ only by small pose, scale and
//! lighting changes plus pixel noise.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::augment::{sdsc, spsc, AugmentSpec};
use crate::error::{Error, Result};
use crate::image::{clamp01, hsv_to_rgb, Image, Mask};
use crate::rng::{derive_seed, derive_seed_str, SplitMix64};

/// Identity parameters; geometry is in units of the image side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentitySpec {
    pub identity_id: usize,
    pub face_center: [f32; 2],
    pub face_radii: [f32; 2],
    pub skin: [f32; 3],
    pub hair: [f32; 3],
    pub hairline: f32,
    pub eye_offset: [f32; 2],
    pub eye_radius: f32,
    pub eye_color: [f32; 3],
    pub mouth_offset: f32,
    pub mouth_size: [f32; 2],
    pub mouth_color: [f32; 3],
    pub texture_freq: [f32; 2],
    pub texture_phase: [f32; 2],
    pub texture_amp: f32,
}

impl IdentitySpec {
    /// Flat parameter vector.
    pub fn to_vec(&self) -> Vec<f32> {
        let mut v = Vec::with_capacity(32);
        v.extend_from_slice(&self.face_center);
        v.extend_from_slice(&self.face_radii);
        v.extend_from_slice(&self.skin);
        v.extend_from_slice(&self.hair);
        v.push(self.hairline);
        v.extend_from_slice(&self.eye_offset);
        v.push(self.eye_radius);
        v.extend_from_slice(&self.eye_color);
        v.push(self.mouth_offset);
        v.extend_from_slice(&self.mouth_size);
        v.extend_from_slice(&self.mouth_color);
        v.extend_from_slice(&self.texture_freq);
        v.extend_from_slice(&self.texture_phase);
        v.push(self.texture_amp);
        v
    }
}

pub fn gen_identity(identity_id: usize, global_seed: u64) -> IdentitySpec {
    let mut rng = SplitMix64::new(derive_seed(
        derive_seed_str(global_seed, "identity"),
        identity_id as u64,
    ));
    let mut u = |lo: f64, hi: f64| rng.uniform(lo, hi) as f32;
    let face_center = [u(0.50, 0.56), u(0.47, 0.53)];
    let face_radii = [u(0.25, 0.31), u(0.18, 0.23)];
    let skin = hsv_to_rgb([u(0.02, 0.11), u(0.25, 0.65), u(0.45, 0.92)]);
    let hair = hsv_to_rgb([u(0.0, 1.0), u(0.2, 0.9), u(0.08, 0.6)]);
    let hairline = u(0.35, 0.65);
    let eye_offset = [u(0.07, 0.15), u(0.08, 0.14)];
    let eye_radius = u(0.025, 0.045);
    let eye_color = hsv_to_rgb([u(0.0, 1.0), u(0.3, 0.9), u(0.05, 0.4)]);
    let mouth_offset = u(0.11, 0.20);
    let mouth_size = [u(0.015, 0.035), u(0.06, 0.15)];
    let mouth_color = hsv_to_rgb([u(0.95, 1.02), u(0.4, 0.8), u(0.35, 0.75)]);
    let texture_freq = [u(2.0, 7.0), u(2.0, 7.0)];
    let texture_phase = [u(0.0, core::f64::consts::TAU), u(0.0, core::f64::consts::TAU)];
    let texture_amp = u(0.02, 0.07);
    IdentitySpec {
        identity_id,
        face_center,
        face_radii,
        skin,
        hair,
        hairline,
        eye_offset,
        eye_radius,
        eye_color,
        mouth_offset,
        mouth_size,
        mouth_color,
        texture_freq,
        texture_phase,
        texture_amp,
    }
}

/// Head outline relative to the face-region ellipse.
const HEAD_SCALE: f32 = 1.3;

/// Rasterizes one variant of an identity at `size×size` and returns it with
/// the face-region mask (1 inside the face ellipse, a one-pixel linear ramp
/// at the edge, 0 outside). Skin and hair extend past the mask to the head
/// outline.
pub fn render_face(spec: &IdentitySpec, variation_seed: u64, size: usize) -> (Image, Mask) {
    let mut rng = SplitMix64::new(variation_seed);
    let mut u = |lo: f64, hi: f64| rng.uniform(lo, hi) as f32;
    let shift = [u(-0.03, 0.03), u(-0.03, 0.03)];
    let zoom = u(0.96, 1.04);
    let gain = u(0.94, 1.06);
    let tilt = u(-0.04, 0.04);
    let noise_seed = rng.next_u64();
    let mut noise = SplitMix64::new(noise_seed);

    let s = size as f32;
    let cy = spec.face_center[0] + shift[0];
    let cx = spec.face_center[1] + shift[1];
    let ry = spec.face_radii[0] * zoom;
    let rx = spec.face_radii[1] * zoom;
    let (hy, hx) = (ry * HEAD_SCALE, rx * HEAD_SCALE);
    let mut img = Vec::with_capacity(size * size * 3);
    let mut mask = Vec::with_capacity(size * size);
    for py in 0..size {
        for px in 0..size {
            let y = (py as f32 + 0.5) / s;
            let x = (px as f32 + 0.5) / s;
            let gray = 0.6 + 0.3 * (y - 0.5) + tilt * (x - 0.5);
            let mut rgb = [gray; 3];

            // soft coverage of an ellipse with radii (ey, ex), one pixel ramp
            let cover = |ey: f32, ex: f32| {
                let (ny, nx) = ((y - cy) / ey, (x - cx) / ex);
                let d = (ny * ny + nx * nx).sqrt();
                clamp01((1.0 - d) * ey.min(ex) * s + 0.5)
            };
            mask.push(cover(ry, rx));
            let head = cover(hy, hx);
            if head > 0.0 {
                let (ny, nx) = ((y - cy) / ry, (x - cx) / rx);
                let mut face = spec.skin;
                let tex = spec.texture_amp
                    * (core::f32::consts::TAU * spec.texture_freq[0] * ny + spec.texture_phase[0])
                        .sin()
                    * (core::f32::consts::TAU * spec.texture_freq[1] * nx + spec.texture_phase[1])
                        .sin();
                face.iter_mut().for_each(|c| *c += tex);
                if (y - cy) / hy < -spec.hairline {
                    face = spec.hair;
                }
                let eye_y = -spec.eye_offset[0] / ry * zoom;
                for side in [-1.0f32, 1.0] {
                    let ex = side * spec.eye_offset[1] / rx * zoom;
                    let de = ((ny - eye_y) * ry).powi(2) + ((nx - ex) * rx).powi(2);
                    if de.sqrt() < spec.eye_radius * zoom {
                        face = spec.eye_color;
                    }
                }
                let my = spec.mouth_offset / ry * zoom;
                let (mh, mw) = (spec.mouth_size[0] * zoom, spec.mouth_size[1] * zoom);
                if ((ny - my) * ry).abs() < mh && (nx * rx).abs() < mw {
                    face = spec.mouth_color;
                }
                for c in 0..3 {
                    rgb[c] = rgb[c] * (1.0 - head) + face[c] * head;
                }
            }
            for c in rgb {
                let n = noise.uniform(-0.015, 0.015) as f32;
                img.push(clamp01(c * gain + n));
            }
        }
    }
    (
        Image {
            h: size,
            w: size,
            data: img,
        },
        Mask {
            h: size,
            w: size,
            data: mask,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Live,
    Spoof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpoofKind {
    None,
    Spsc,
    Sdsc,
}

impl Label {
    /// 1 = bona fide, 0 = spoof.
    pub fn target(self) -> u8 {
        match self {
            Label::Live => 1,
            Label::Spoof => 0,
        }
    }
}

macro_rules! text_enum {
    ($t:ty { $($v:ident => $s:literal),* }) => {
        impl $t {
            pub fn as_str(self) -> &'static str {
                match self { $(Self::$v => $s),* }
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
        impl core::str::FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok(Self::$v),)*
                    other => Err(Error::InvalidConfig(format!(
                        "unknown {} {other:?}", stringify!($t)
                    ))),
                }
            }
        }
    };
}

text_enum!(Split { Train => "train", Val => "val", Test => "test" });
text_enum!(Label { Live => "live", Spoof => "spoof" });
text_enum!(SpoofKind { None => "none", Spsc => "spsc", Sdsc => "sdsc" });

/// One manifest row. Spoof ids are `<source id>-<kind>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub identity_id: usize,
    pub label: Label,
    pub spoof_kind: SpoofKind,
    pub split: Split,
    pub path: String,
}

impl SampleRecord {
    /// The live sample a spoof was derived from.
    pub fn source_id(&self) -> Option<&str> {
        match self.spoof_kind {
            SpoofKind::None => None,
            _ => self.sample_id.rsplit_once('-').map(|(src, _)| src),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub n_identities: usize,
    pub per_identity: usize,
    pub image_size: usize,
    /// Fraction of live samples that also get a spoof copy, half SPSC and
    /// half SDSC.
    pub spoof_ratio: f64,
    /// Fraction of identities held out entirely for testing.
    pub test_fraction: f64,
    /// Variants of each training identity kept for validation.
    pub val_per_identity: usize,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_identities: 16,
            per_identity: 8,
            image_size: 64,
            spoof_ratio: 0.5,
            test_fraction: 0.25,
            val_per_identity: 2,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_identities < 2 {
            return Err(Error::TooFewIdentities(self.n_identities));
        }
        if self.per_identity == 0 || self.image_size == 0 {
            return Err(Error::InvalidConfig(
                "per_identity and image_size must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.spoof_ratio) || !(0.0..1.0).contains(&self.test_fraction)
        {
            return Err(Error::InvalidConfig(
                "spoof_ratio must be in [0, 1] and test_fraction in [0, 1)".into(),
            ));
        }
        if self.val_per_identity >= self.per_identity {
            return Err(Error::InvalidConfig(format!(
                "val_per_identity {} leaves no training variants of {}",
                self.val_per_identity, self.per_identity
            )));
        }
        Ok(())
    }

    pub fn n_test_identities(&self) -> usize {
        let n = (self.n_identities as f64 * self.test_fraction).round() as usize;
        n.min(self.n_identities - 1)
    }
}

/// Where every sample comes from.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedSample {
    pub record: SampleRecord,
    pub variant: usize,
    pub source_index: Option<usize>,
}

/// Lays out records without rendering. Live samples come first in
/// identity-major order, spoofs follow in source order.
pub fn plan_manifest(spec: &DatasetSpec) -> Result<Vec<PlannedSample>> {
    spec.validate()?;
    let mut ids: Vec<usize> = (0..spec.n_identities).collect();
    SplitMix64::new(derive_seed_str(spec.seed, "split")).shuffle(&mut ids);
    let test_ids = &ids[..spec.n_test_identities()];

    let mut out = Vec::new();
    for id in 0..spec.n_identities {
        let mut variants: Vec<usize> = (0..spec.per_identity).collect();
        SplitMix64::new(derive_seed(derive_seed_str(spec.seed, "val"), id as u64))
            .shuffle(&mut variants);
        let val: Vec<usize> = variants[..spec.val_per_identity].to_vec();
        for v in 0..spec.per_identity {
            let split = if test_ids.contains(&id) {
                Split::Test
            } else if val.contains(&v) {
                Split::Val
            } else {
                Split::Train
            };
            let sample_id = format!("{:06}", out.len());
            out.push(PlannedSample {
                record: SampleRecord {
                    path: format!("images/{sample_id}.ppm"),
                    sample_id,
                    identity_id: id,
                    label: Label::Live,
                    spoof_kind: SpoofKind::None,
                    split,
                },
                variant: v,
                source_index: None,
            });
        }
    }

    let n_live = out.len();
    let n_spoof = (n_live as f64 * spec.spoof_ratio).round() as usize;
    let mut sources: Vec<usize> = (0..n_live).collect();
    SplitMix64::new(derive_seed_str(spec.seed, "spoof")).shuffle(&mut sources);
    let (a, b) = sources[..n_spoof].split_at(n_spoof.div_ceil(2));
    let mut kinds: Vec<(usize, SpoofKind)> = a.iter().map(|&i| (i, SpoofKind::Spsc)).collect();
    kinds.extend(b.iter().map(|&i| (i, SpoofKind::Sdsc)));
    kinds.sort_by_key(|&(i, _)| i);
    for (src, kind) in kinds {
        let base = &out[src].record;
        let sample_id = format!("{}-{kind}", base.sample_id);
        let record = SampleRecord {
            path: format!("images/{sample_id}.ppm"),
            sample_id,
            identity_id: base.identity_id,
            label: Label::Spoof,
            spoof_kind: kind,
            split: base.split,
        };
        let variant = out[src].variant;
        out.push(PlannedSample {
            record,
            variant,
            source_index: Some(src),
        });
    }
    Ok(out)
}

/// Seed of the `variant`-th render of an identity.
pub fn variation_seed(spec: &DatasetSpec, identity: usize, variant: usize) -> u64 {
    derive_seed(
        derive_seed(derive_seed_str(spec.seed, "variant"), identity as u64),
        variant as u64,
    )
}

/// A rendered sample and the mask of its live source.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub record: SampleRecord,
    pub image: Image,
}

/// Renders every planned sample. SDSC spoofs blend through their own
/// source's face-region mask.
pub fn build_dataset(spec: &DatasetSpec, aug: &AugmentSpec) -> Result<Vec<Sample>> {
    aug.validate()?;
    let plan = plan_manifest(spec)?;
    let mut rendered: Vec<(Image, Mask)> = Vec::with_capacity(plan.len());
    let mut out = Vec::with_capacity(plan.len());
    for p in &plan {
        let image = match p.source_index {
            None => {
                let ident = gen_identity(p.record.identity_id, spec.seed);
                let (img, mask) = render_face(
                    &ident,
                    variation_seed(spec, p.record.identity_id, p.variant),
                    spec.image_size,
                );
                rendered.push((img.clone(), mask));
                img
            }
            Some(src) => {
                let (img, mask) = &rendered[src];
                let seed = derive_seed_str(aug.seed ^ spec.seed, &p.record.sample_id);
                match p.record.spoof_kind {
                    SpoofKind::Spsc => spsc(img, aug, seed).0,
                    SpoofKind::Sdsc => sdsc(img, mask, &aug.sdsc, seed)?,
                    SpoofKind::None => unreachable!("spoof records carry a kind"),
                }
            }
        };
        out.push(Sample {
            record: p.record.clone(),
            image,
        });
    }
    Ok(out)
}

/// One verification comparison, by index into the sample list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationPair {
    pub a: usize,
    pub b: usize,
    pub genuine: bool,
}

/// Samples genuine and impostor pairs without replacement from live
/// test-split records.
pub fn sample_pairs(
    records: &[SampleRecord],
    n_genuine: usize,
    n_impostor: usize,
    seed: u64,
) -> Result<Vec<VerificationPair>> {
    let live: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.label == Label::Live && r.split == Split::Test)
        .map(|(i, _)| i)
        .collect();
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for (k, &i) in live.iter().enumerate() {
        for &j in &live[k + 1..] {
            let g = records[i].identity_id == records[j].identity_id;
            let pair = VerificationPair { a: i, b: j, genuine: g };
            if g {
                genuine.push(pair);
            } else {
                impostor.push(pair);
            }
        }
    }
    if genuine.len() < n_genuine || impostor.len() < n_impostor {
        return Err(Error::InsufficientSamples(format!(
            "requested {n_genuine} genuine / {n_impostor} impostor pairs, \
             test split offers {} / {}",
            genuine.len(),
            impostor.len()
        )));
    }
    let mut rng = SplitMix64::new(derive_seed_str(seed, "pairs"));
    rng.shuffle(&mut genuine);
    rng.shuffle(&mut impostor);
    genuine.truncate(n_genuine);
    impostor.truncate(n_impostor);
    genuine.extend(impostor);
    Ok(genuine)
}


