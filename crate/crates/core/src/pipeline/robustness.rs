use std::fs;
use std::path::{Path, PathBuf};

use image::DynamicImage;
use serde::Serialize;
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::eval::{encode_jpeg, perturb, PerturbationKind, PerturbationSpec};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PerturbSummary {
    /// Output paths of perturbed images, relative to the output directory.
    pub images: Vec<PathBuf>,
    /// Non-image files copied unchanged.
    pub copied: Vec<PathBuf>,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
}

/// Noise seed for one file: the run seed mixed with the relative path.
fn file_seed(seed: u64, rel: &Path) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(rel.to_string_lossy().as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Applies `spec` to every PNG/JPEG under `input`, mirroring the directory
/// layout under `output`. Results are 16-bit PNG, or `.jpg` for the JPEG
/// perturbation. Other files are copied as they are.
pub fn perturb_directory(input: &Path, output: &Path, spec: &PerturbationSpec) -> Result<PerturbSummary> {
    spec.validate()?;
    if !input.is_dir() {
        return Err(Error::InvalidInput(format!("{} is not a directory", input.display())));
    }
    let mut summary = PerturbSummary::default();
    for entry in WalkDir::new(input).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().map_or_else(|| input.to_path_buf(), Path::to_path_buf);
            Error::io(path, e.into())
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(input).expect("walk stays under input").to_path_buf();
        let target = output.join(&rel);
        if let Some(dir) = target.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        if !is_image(&rel) {
            fs::copy(entry.path(), &target).map_err(|e| Error::io(entry.path(), e))?;
            summary.copied.push(rel);
            continue;
        }
        let pixels = image::open(entry.path())
            .map_err(|e| Error::ImageDecode(format!("{}: {e}", entry.path().display())))?
            .to_rgb32f();
        let out_rel = match spec.kind {
            PerturbationKind::Jpeg => {
                let out_rel = rel.with_extension("jpg");
                let bytes = encode_jpeg(&pixels, spec.param as u8)?;
                let dest = output.join(&out_rel);
                fs::write(&dest, bytes).map_err(|e| Error::io(dest, e))?;
                out_rel
            }
            _ => {
                let out_rel = rel.with_extension("png");
                let file_spec = PerturbationSpec {
                    seed: file_seed(spec.seed, &rel),
                    ..*spec
                };
                let result = perturb(&pixels, &file_spec)?;
                let dest = output.join(&out_rel);
                DynamicImage::ImageRgb32F(result)
                    .to_rgb16()
                    .save(&dest)
                    .map_err(|e| Error::EncodeError(format!("{}: {e}", dest.display())))?;
                out_rel
            }
        };
        summary.images.push(out_rel);
    }
    Ok(summary)
}
