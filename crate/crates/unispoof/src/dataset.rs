//! Dataset directories: `manifest.csv`, `images/*.ppm` and, for live
//! samples, `masks/*.pgm`.

use std::fs;
use std::path::Path;

use unispoof_core::augment::AugmentSpec;
use unispoof_core::synth::{
    gen_identity, plan_manifest, render_face, build_dataset, DatasetSpec, Sample, SampleRecord,
};

use crate::error::{CliError, Result};
use crate::imageio::{read_image, write_image, write_mask};

pub const MANIFEST: &str = "manifest.csv";
pub const HEADER: [&str; 6] = ["sample_id", "identity_id", "label", "spoof_kind", "split", "path"];

pub fn write_manifest(path: &Path, records: &[SampleRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::format(path, e))?;
    for r in records {
        w.serialize(r).map_err(|e| CliError::format(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<SampleRecord>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header = r.headers().map_err(|e| CliError::format(path, e))?;
    if header.iter().ne(HEADER) {
        return Err(CliError::format(
            path,
            format!("expected header {}", HEADER.join(",")),
        ));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| CliError::format(path, e)))
        .collect()
}

fn mask_path(record: &SampleRecord) -> String {
    format!("masks/{}.pgm", record.sample_id)
}

/// Renders the dataset and writes it under `dir`. Returns the samples as
/// rendered (before 8-bit quantization).
pub fn write_dataset(dir: &Path, spec: &DatasetSpec, aug: &AugmentSpec) -> Result<Vec<Sample>> {
    let samples = build_dataset(spec, aug)?;
    for sub in ["images", "masks"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| CliError::io(&p, e))?;
    }
    for s in &samples {
        write_image(&dir.join(&s.record.path), &s.image)?;
    }
    // masks are re-rendered from the plan; live images come first
    for p in plan_manifest(spec)?.iter().filter(|p| p.source_index.is_none()) {
        let ident = gen_identity(p.record.identity_id, spec.seed);
        let seed = unispoof_core::synth::variation_seed(spec, p.record.identity_id, p.variant);
        let (_, mask) = render_face(&ident, seed, spec.image_size);
        write_mask(&dir.join(mask_path(&p.record)), &mask)?;
    }
    let records: Vec<_> = samples.iter().map(|s| s.record.clone()).collect();
    write_manifest(&dir.join(MANIFEST), &records)?;
    Ok(samples)
}

/// Loads every record of `dir/manifest.csv` with its image.
pub fn read_dataset(dir: &Path) -> Result<Vec<Sample>> {
    let records = read_manifest(&dir.join(MANIFEST))?;
    records
        .into_iter()
        .map(|record| {
            let image = read_image(&dir.join(&record.path))?;
            Ok(Sample { record, image })
        })
        .collect()
}
