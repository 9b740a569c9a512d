use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::manifest::{write_manifest, SampleRecord};
use crate::providers::synthetic_image_bytes;

/// Writes `n_real + n_fake` tagged synthetic images under `dir/images` and a
/// `dir/manifest.jsonl` listing them with alternating labels while both
/// classes last. Ids are `{prefix}{index:06}`. Returns the manifest path.
pub fn write_synthetic_corpus(dir: &Path, prefix: &str, n_real: usize, n_fake: usize) -> Result<PathBuf> {
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let (mut real_left, mut fake_left) = (n_real, n_fake);
    let mut records = Vec::with_capacity(n_real + n_fake);
    for index in 0..n_real + n_fake {
        let label = match (real_left, fake_left) {
            (0, _) => Label::Fake,
            (_, 0) => Label::Real,
            _ if index % 2 == 0 => Label::Real,
            _ => Label::Fake,
        };
        match label {
            Label::Real => real_left -= 1,
            Label::Fake => fake_left -= 1,
        }
        let id = format!("{prefix}{index:06}");
        let rel = format!("images/{id}.synth");
        let path = dir.join(&rel);
        fs::write(&path, synthetic_image_bytes(&id, label)).map_err(|e| Error::io(&path, e))?;
        records.push(SampleRecord::new(id, rel, label));
    }
    let manifest = dir.join("manifest.jsonl");
    write_manifest(&manifest, &records)?;
    Ok(manifest)
}
