use unispoof::checkpoint::Checkpoint;
use unispoof::config::RunConfig;
use unispoof::dataset::{read_dataset, read_manifest, write_dataset, write_manifest, MANIFEST};
use unispoof::imageio::{read_image, read_mask, write_image, write_mask};
use unispoof::scores::{read_scores, write_scores};
use unispoof::CliError;
use unispoof_core::augment::AugmentSpec;
use unispoof_core::image::{Image, Mask};
use unispoof_core::metrics::ScoreRecord;
use unispoof_core::model::ModelConfig;
use unispoof_core::synth::DatasetSpec;
use unispoof_core::train::embed_images;

fn ramp(h: usize, w: usize) -> Image {
    let data = (0..h * w * 3).map(|i| (i % 97) as f32 / 96.0).collect();
    Image::new(h, w, data).unwrap()
}

#[test]
fn images_round_trip_to_eight_bits() {
    let dir = tempfile::tempdir().unwrap();
    let img = ramp(5, 7);
    for name in ["a.ppm", "a.png"] {
        let p = dir.path().join(name);
        write_image(&p, &img).unwrap();
        let back = read_image(&p).unwrap();
        assert_eq!((back.h, back.w), (5, 7));
        for (a, b) in img.data.iter().zip(&back.data) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }
    let mask = Mask::ellipse(6, 6);
    let p = dir.path().join("m.pgm");
    write_mask(&p, &mask).unwrap();
    let back = read_mask(&p).unwrap();
    for (a, b) in mask.data.iter().zip(&back.data) {
        assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
    }
    assert!(matches!(
        write_image(&dir.path().join("a.bmp"), &img),
        Err(CliError::Format { .. })
    ));
}

#[test]
fn dataset_directory_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let spec = DatasetSpec {
        n_identities: 4,
        per_identity: 4,
        val_per_identity: 1,
        ..DatasetSpec::default()
    };
    let written = write_dataset(dir.path(), &spec, &AugmentSpec::default()).unwrap();
    let records = read_manifest(&dir.path().join(MANIFEST)).unwrap();
    let want: Vec<_> = written.iter().map(|s| s.record.clone()).collect();
    assert_eq!(records, want);

    let again = dir.path().join("copy.csv");
    write_manifest(&again, &records).unwrap();
    assert_eq!(
        std::fs::read(&again).unwrap(),
        std::fs::read(dir.path().join(MANIFEST)).unwrap()
    );

    let read = read_dataset(dir.path()).unwrap();
    assert_eq!(read.len(), written.len());
    for (a, b) in written.iter().zip(&read) {
        let worst = a
            .image
            .data
            .iter()
            .zip(&b.image.data)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f32, f32::max);
        assert!(worst <= 0.5 / 255.0 + 1e-6, "{}", a.record.sample_id);
    }
}

#[test]
fn manifest_header_is_checked() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join(MANIFEST);
    std::fs::write(&p, "id,score\n1,2\n").unwrap();
    assert!(matches!(read_manifest(&p), Err(CliError::Format { .. })));
}

#[test]
fn score_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("scores.csv");
    let recs = vec![
        ScoreRecord { id: "000001".into(), score: 0.125, label: 1 },
        ScoreRecord { id: "p3".into(), score: -0.3333333333333333, label: 0 },
    ];
    write_scores(&p, &recs).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("pair_or_sample_id,score,label\n"));
    assert_eq!(read_scores(&p).unwrap(), recs);

    std::fs::write(&p, "pair_or_sample_id,score,label\nx,0.5,2\n").unwrap();
    assert!(read_scores(&p).is_err());
    std::fs::write(&p, "pair_or_sample_id,score,label\nx,NaN,1\n").unwrap();
    assert!(read_scores(&p).is_err());
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let model = ModelConfig::swin_desk();
    let params = model.init_frm_model::<f32>(5, 3).unwrap();
    let ckpt = Checkpoint {
        model: model.clone(),
        params,
        meta: serde_json::json!({ "kind": "frm", "class_ids": [0, 1, 2, 3, 4] }),
    };
    let p = dir.path().join("m.ckpt");
    ckpt.save(&p).unwrap();
    let back = Checkpoint::load(&p).unwrap();
    assert_eq!(back.model, model);
    assert_eq!(back.meta, ckpt.meta);
    assert_eq!(back.params.len(), ckpt.params.len());
    for ((na, a), (nb, b)) in ckpt.params.iter().zip(back.params.iter()) {
        assert_eq!(na, nb);
        assert_eq!(a.shape(), b.shape());
        let bits = |t: &unispoof_core::Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b), "{na}");
    }
    assert_eq!(back.to_bytes().unwrap(), std::fs::read(&p).unwrap());

    let imgs = [ramp(64, 64), Image::filled(64, 64, 0.3)];
    let refs: Vec<_> = imgs.iter().collect();
    let before = embed_images(&ckpt.params, &model, &refs, 2).unwrap();
    let after = embed_images(&back.params, &model, &refs, 2).unwrap();
    for (x, y) in before.iter().zip(&after) {
        let xb: Vec<u32> = x.iter().map(|v| v.to_bits()).collect();
        let yb: Vec<u32> = y.iter().map(|v| v.to_bits()).collect();
        assert_eq!(xb, yb);
    }
}

#[test]
fn truncated_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let model = ModelConfig::swin_desk();
    let ckpt = Checkpoint {
        model: model.clone(),
        params: model.init_frm_model::<f32>(2, 0).unwrap(),
        meta: serde_json::Value::Null,
    };
    let mut bytes = ckpt.to_bytes().unwrap();
    bytes.truncate(bytes.len() - 4);
    let p = dir.path().join("bad.ckpt");
    std::fs::write(&p, &bytes).unwrap();
    assert!(matches!(Checkpoint::load(&p), Err(CliError::Format { .. })));
    std::fs::write(&p, b"short").unwrap();
    assert!(Checkpoint::load(&p).is_err());
}

#[test]
fn preset_config_files_parse() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (file, preset) in [
        ("swin-desk.json", ModelConfig::swin_desk()),
        ("swin-base-paper.json", ModelConfig::swin_base_paper()),
    ] {
        let cfg = RunConfig::load(&root.join(file)).unwrap();
        assert_eq!(cfg.model.resolve().unwrap(), preset, "{file}");
    }
    let desk = RunConfig::load(&root.join("swin-desk.json")).unwrap();
    assert_eq!(desk, RunConfig::default());
    desk.validate().unwrap();
}

#[test]
fn config_rejects_unknown_fields_and_versions() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    std::fs::write(&p, r#"{"seed": 3, "colour": 1}"#).unwrap();
    assert!(matches!(RunConfig::load(&p), Err(CliError::Format { .. })));
    std::fs::write(&p, r#"{"schema_version": 9}"#).unwrap();
    assert!(RunConfig::load(&p).is_err());
    std::fs::write(&p, r#"{"seed": 3, "model": "swin-base-paper"}"#).unwrap();
    let cfg = RunConfig::load(&p).unwrap();
    assert_eq!(cfg.seed, 3);
    // desk dataset images do not fit the full-size model
    assert!(cfg.validate().is_err());
}
