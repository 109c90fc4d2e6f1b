mod common;

use common::*;
use unispoof_core::augment::{
    apply_jitter, color_jitter, deform_mask, moire_synthesize, sdsc, sdsc_parts, spsc, spsc_seeds,
    AugmentSpec, JitterDraw, JitterSpec, MoireSpec, SdscSpec, SpscBranch,
};
use unispoof_core::image::{Image, Mask};
use unispoof_core::Error;

#[test]
fn identity_jitter_is_exact_noop() {
    let img = noise_image(16, 12, 1);
    for seed in 0..20 {
        assert_eq!(color_jitter(&img, &JitterSpec::identity(), seed), img);
    }
}

#[test]
fn brightness_doubles_mid_gray() {
    let spec = JitterSpec {
        brightness: [2.0, 2.0],
        ..JitterSpec::identity()
    };
    let out = color_jitter(&Image::filled(8, 8, 0.4), &spec, 3);
    assert!(out.data.iter().all(|&v| (v - 0.8).abs() <= 1e-6));
}

#[test]
fn contrast_and_saturation_match_blend_formulas() {
    let img = noise_image(6, 5, 2);
    let mean = img.data.iter().map(|&v| v as f64).sum::<f64>() / img.data.len() as f64;
    let c = JitterSpec {
        contrast: [0.5, 0.5],
        ..JitterSpec::identity()
    };
    let out = color_jitter(&img, &c, 0);
    for (o, i) in out.data.iter().zip(&img.data) {
        let want = (mean + 0.5 * (*i as f64 - mean)).clamp(0.0, 1.0);
        assert!((*o as f64 - want).abs() <= 1e-6);
    }
    let s = JitterSpec {
        saturation: [0.0, 0.0],
        ..JitterSpec::identity()
    };
    let gray = color_jitter(&img, &s, 0);
    for px in gray.data.chunks(3) {
        assert!((px[0] - px[1]).abs() <= 1e-6 && (px[1] - px[2]).abs() <= 1e-6);
    }
}

#[test]
fn third_turn_hue_maps_red_to_green() {
    let img = Image::new(1, 2, vec![1.0, 0.0, 0.0, 0.2, 0.2, 0.2]).unwrap();
    let draw = JitterDraw {
        brightness: 1.0,
        contrast: 1.0,
        saturation: 1.0,
        hue: 1.0 / 3.0,
    };
    // contrast 1 and saturation 1 leave pixels alone, so only the hue acts
    let out = apply_jitter(&img, &draw);
    let want = [0.0, 1.0, 0.0, 0.2, 0.2, 0.2];
    for (o, w) in out.data.iter().zip(want) {
        assert!((o - w).abs() <= 1e-6, "{:?}", out.data);
    }
}

#[test]
fn zero_amplitude_moire_is_exact_noop() {
    let img = noise_image(16, 16, 5);
    let spec = MoireSpec {
        amplitude: 0.0,
        ..MoireSpec::default()
    };
    for seed in 0..10 {
        assert_eq!(moire_synthesize(&img, &spec, seed), img);
    }
}

#[test]
fn moire_is_bounded_by_amplitude() {
    let img = Image::filled(32, 32, 0.5);
    let spec = MoireSpec::default();
    for seed in 0..20 {
        let out = moire_synthesize(&img, &spec, seed);
        let max = out
            .data
            .iter()
            .zip(&img.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max <= spec.amplitude as f32 + 1e-6, "{max}");
        assert!(max > 0.0);
    }
}

#[test]
fn moire_spectrum_peaks_at_injected_frequency() {
    for f in [0.08, 0.15, 0.22] {
        let spec = MoireSpec {
            freq: [f, f],
            ..MoireSpec::default()
        };
        let peak = moire_radial_peak(128, &spec, 20);
        assert!((peak - f).abs() <= 0.1 * f, "f={f} peak={peak}");
    }
}

#[test]
fn spsc_branches_are_fair_and_composable() {
    let img = noise_image(8, 8, 6);
    let spec = AugmentSpec::default();
    let mut print = 0;
    for seed in 0..1000u64 {
        if spsc_seeds(seed).0 == SpscBranch::Print {
            print += 1;
        }
    }
    assert!((450..=550).contains(&print), "{print}");
    for seed in 0..40u64 {
        let (out, branch) = spsc(&img, &spec, seed);
        let (b, sub) = spsc_seeds(seed);
        assert_eq!(branch, b);
        let direct = match b {
            SpscBranch::Print => color_jitter(&img, &spec.jitter, sub),
            SpscBranch::Replay => moire_synthesize(&img, &spec.moire, sub),
        };
        assert_eq!(out, direct);
        assert_eq!(spsc(&img, &spec, seed), (out, branch));
    }
}

fn interior_mask(n: usize) -> Mask {
    let mut m = Mask::filled(n, n, 0.0);
    for y in n / 4..3 * n / 4 {
        for x in n / 4..3 * n / 4 {
            m.data[y * n + x] = 1.0;
        }
    }
    m
}

#[test]
fn identity_deformation_keeps_mask() {
    let m = Mask::ellipse(24, 24);
    let out = deform_mask(&m, &SdscSpec::identity(), 9);
    let max = out
        .data
        .iter()
        .zip(&m.data)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    assert!(max <= 1e-6, "{max}");
}

#[test]
fn blur_only_conserves_interior_mass() {
    let m = interior_mask(32);
    let spec = SdscSpec {
        blur_sigma: 1.5,
        ..SdscSpec::identity()
    };
    let out = deform_mask(&m, &spec, 1);
    let rel = (out.mass() - m.mass()).abs() / m.mass();
    assert!(rel <= 0.02, "{rel}");
    assert!(out != m);
}

#[test]
fn deformed_masks_stay_in_unit_range() {
    let m = Mask::ellipse(20, 20);
    let spec = SdscSpec {
        elastic_alpha: 40.0,
        ..SdscSpec::default()
    };
    for seed in 0..50 {
        let out = deform_mask(&m, &spec, seed);
        assert!(out.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn sdsc_degenerate_masks_return_original() {
    let img = noise_image(16, 16, 7);
    let zero = Mask::filled(16, 16, 0.0);
    for seed in 0..10 {
        assert_eq!(sdsc(&img, &zero, &SdscSpec::default(), seed).unwrap(), img);
    }
    let one = Mask::filled(16, 16, 1.0);
    let mut spec = SdscSpec::identity();
    spec.elastic_alpha = 3.0;
    spec.blur_sigma = 1.0;
    for seed in 0..10 {
        assert_eq!(sdsc(&img, &one, &spec, seed).unwrap(), img);
    }
}

#[test]
fn sdsc_output_is_a_convex_blend() {
    let img = noise_image(24, 24, 8);
    let mask = Mask::ellipse(24, 24);
    for seed in 0..30 {
        let parts = sdsc_parts(&img, &mask, &SdscSpec::default(), seed).unwrap();
        assert_eq!(parts.target, img);
        for i in 0..parts.output.data.len() {
            let (s, t, o) = (
                parts.source.data[i],
                parts.target.data[i],
                parts.output.data[i],
            );
            assert!(o >= s.min(t) - 1e-6 && o <= s.max(t) + 1e-6, "{s} {t} {o}");
        }
    }
}

#[test]
fn sdsc_rejects_mismatched_mask() {
    let img = noise_image(8, 8, 1);
    assert_eq!(
        sdsc(&img, &Mask::filled(8, 6, 1.0), &SdscSpec::default(), 0).unwrap_err(),
        Error::MaskSizeMismatch {
            mask: [8, 6],
            image: [8, 8]
        }
    );
}

#[test]
fn thousand_seed_sweep_stays_in_range_and_changes_input() {
    let img = noise_image(12, 12, 10);
    let mask = Mask::ellipse(12, 12);
    let spec = AugmentSpec::default();
    for seed in 0..1000u64 {
        let (a, _) = spsc(&img, &spec, seed);
        let b = sdsc(&img, &mask, &spec.sdsc, seed).unwrap();
        let c = color_jitter(&img, &spec.jitter, seed);
        let d = moire_synthesize(&img, &spec.moire, seed);
        let m = deform_mask(&mask, &spec.sdsc, seed);
        assert!(in_range(&a) && in_range(&b) && in_range(&c) && in_range(&d));
        assert!(m.data.iter().all(|v| (0.0..=1.0).contains(v)));
        if seed < 100 {
            assert!(
                a.l1_distance(&img) > 0.0 && b.l1_distance(&img) > 0.0,
                "seed {seed}"
            );
        }
    }
}

#[test]
fn spec_validation() {
    let spec = AugmentSpec::default();
    spec.validate().unwrap();
    let mut bad = spec;
    bad.moire.amplitude = 1.5;
    assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
    let mut bad = spec;
    bad.jitter.contrast = [1.2, 0.8];
    assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
}
