use std::io::Cursor;
use std::path::Path;
use std::sync::Arc;

use image::{DynamicImage, ImageFormat};
use rayon::prelude::*;
use serde::Serialize;

use super::config::RunConfig;
use crate::error::{Error, ErrorClass, Result};
use crate::eval::{center_crop, crop_object, to_rgb8, PixelBuffer};
use crate::label::Label;
use crate::manifest::SampleRecord;
use crate::providers::{
    FileProvider, ImageRef, ObjectDetection, Provider, ProviderConfig, ProviderKind, RemoteProvider,
    SyntheticProvider,
};
use crate::representation::{average_local, combine, global_distance, local_distance, Misalignment};

/// Final per-sample representation plus the two levels it was fused from.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationRecord {
    pub id: String,
    pub label: Label,
    pub d_global: Misalignment,
    pub d_local: Misalignment,
    pub d_combined: Misalignment,
    pub n_objects: usize,
}

/// A featurized sample and a copy of its record with the caption and raw
/// detections filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Featurized {
    pub representation: RepresentationRecord,
    pub augmented: SampleRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleFailure {
    pub id: String,
    /// Position in the manifest, 0-based.
    pub index: usize,
    pub class: ErrorClass,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct FeaturizeOutput {
    /// Successful samples in manifest order.
    pub featurized: Vec<Featurized>,
    pub failures: Vec<SampleFailure>,
}

impl FeaturizeOutput {
    pub fn representations(&self) -> Vec<RepresentationRecord> {
        self.featurized.iter().map(|f| f.representation.clone()).collect()
    }

    /// Augmented records for successes, untouched input records for failures,
    /// in manifest order.
    pub fn augmented_manifest(&self, input: &[SampleRecord]) -> Vec<SampleRecord> {
        let mut done = self.featurized.iter().map(|f| &f.augmented).peekable();
        input
            .iter()
            .map(|r| match done.peek() {
                Some(a) if a.id == r.id => done.next().cloned().unwrap_or_else(|| r.clone()),
                _ => r.clone(),
            })
            .collect()
    }
}

/// Instantiates the configured provider. Relative artifact roots resolve
/// against `image_root`, which is also the default.
pub fn build_provider(cfg: &ProviderConfig, image_root: &Path, records: &[SampleRecord]) -> Result<Arc<dyn Provider>> {
    cfg.validate()?;
    Ok(match cfg.kind {
        ProviderKind::Synthetic => Arc::new(SyntheticProvider::new(
            cfg.embedding_dim,
            cfg.seed,
            cfg.synthetic_params.clone(),
        )?),
        ProviderKind::File => {
            let artifacts = cfg
                .artifact_root
                .as_ref()
                .map_or_else(|| image_root.to_path_buf(), |a| image_root.join(a));
            Arc::new(FileProvider::new(image_root, &artifacts, records, cfg.embedding_dim))
        }
        ProviderKind::Remote => {
            let endpoint = cfg.endpoint.as_deref().unwrap_or_default();
            Arc::new(RemoteProvider::new(endpoint, cfg.embedding_dim, &cfg.remote)?)
        }
    })
}

fn png_bytes(image: &PixelBuffer) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    DynamicImage::ImageRgb8(to_rgb8(image))
        .write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| Error::EncodeError(e.to_string()))?;
    Ok(buf.into_inner())
}

/// Produces what the encoder sees for the whole image and for object regions.
enum EncoderInput {
    /// The provider resolves paths and regions itself.
    ByReference(ImageRef),
    /// Decoded pixels; crops are made locally and sent inline.
    Pixels(PixelBuffer, u32),
}

impl EncoderInput {
    fn new(image: &ImageRef, provider: &dyn Provider, crop: u32) -> Result<Self> {
        if !provider.wants_pixels() {
            return Ok(EncoderInput::ByReference(image.clone()));
        }
        let bytes = image.bytes()?;
        let pixels = image::load_from_memory(&bytes)
            .map_err(|e| Error::ImageDecode(format!("{image}: {e}")))?
            .to_rgb32f();
        if pixels.width() == 0 || pixels.height() == 0 {
            return Err(Error::ImageDecode(format!("{image}: image is empty")));
        }
        Ok(EncoderInput::Pixels(pixels, crop))
    }

    fn whole(&self) -> Result<ImageRef> {
        match self {
            EncoderInput::ByReference(r) => Ok(r.clone()),
            EncoderInput::Pixels(p, size) => Ok(ImageRef::inline(png_bytes(&center_crop(p, *size))?)),
        }
    }

    fn region(&self, object: &ObjectDetection) -> Result<ImageRef> {
        match self {
            EncoderInput::ByReference(r) => Ok(r.clone().with_region(object.bbox)),
            EncoderInput::Pixels(p, size) => {
                let crop = crop_object(p, object.bbox.coords())?;
                Ok(ImageRef::inline(png_bytes(&center_crop(&crop, *size))?))
            }
        }
    }
}

/// Caption, embed, ground and fuse one sample. Caption and detections stored
/// in the record are used instead of calling the provider. Errors carry the
/// sample id.
pub fn featurize(sample: &SampleRecord, provider: &dyn Provider, image_root: &Path, cfg: &RunConfig) -> Result<Featurized> {
    featurize_untagged(sample, provider, image_root, cfg).map_err(|e| Error::for_sample(&sample.id, e))
}

fn featurize_untagged(
    sample: &SampleRecord,
    provider: &dyn Provider,
    image_root: &Path,
    cfg: &RunConfig,
) -> Result<Featurized> {
    let dim = provider.embedding_dim();
    let image = ImageRef::file(image_root.join(&sample.image));
    let encoder_input = EncoderInput::new(&image, provider, cfg.crop.size)?;

    let caption = match &sample.caption {
        Some(c) => c.clone(),
        None => provider.caption(&image)?,
    };
    let image_emb = provider.embed_image(&encoder_input.whole()?)?;
    let caption_emb = provider.embed_text(&caption)?;
    let d_global = global_distance(&image_emb, &caption_emb)?;
    if d_global.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: d_global.dim(),
        });
    }

    let detections = match &sample.objects {
        Some(o) => o.clone(),
        None => provider.detect_objects(&image, &caption)?,
    };
    let objects = cfg.provider.detection.apply(&detections);
    let locals = objects
        .iter()
        .map(|o| {
            let crop_emb = provider.embed_image(&encoder_input.region(o)?)?;
            let phrase_emb = provider.embed_text(&o.phrase)?;
            local_distance(&crop_emb, &phrase_emb)
        })
        .collect::<Result<Vec<_>>>()?;
    let d_local = average_local(&locals, dim, cfg.fusion.empty_object_policy)?;
    let d_combined = combine(&d_global, &d_local, &cfg.fusion)?;

    let mut augmented = sample.clone();
    augmented.caption = Some(caption);
    augmented.objects = Some(detections);
    Ok(Featurized {
        representation: RepresentationRecord {
            id: sample.id.clone(),
            label: sample.label,
            d_global,
            d_local,
            d_combined,
            n_objects: objects.len(),
        },
        augmented,
    })
}

/// Featurizes a whole manifest on `cfg.parallelism` threads. Output order is
/// manifest order. Failures are reported, or returned as an error for the
/// first failing sample when `cfg.strict` is set.
pub fn featurize_corpus(
    records: &[SampleRecord],
    provider: &dyn Provider,
    image_root: &Path,
    cfg: &RunConfig,
) -> Result<FeaturizeOutput> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let results: Vec<Result<Featurized>> = pool.install(|| {
        records
            .par_iter()
            .map(|r| featurize(r, provider, image_root, cfg))
            .collect()
    });

    let mut out = FeaturizeOutput::default();
    for (index, (record, result)) in records.iter().zip(results).enumerate() {
        match result {
            Ok(f) => out.featurized.push(f),
            Err(e) if cfg.strict => return Err(e),
            Err(e) => {
                log::warn!("{e}");
                let message = match &e {
                    Error::Sample { source, .. } => source.to_string(),
                    other => other.to_string(),
                };
                out.failures.push(SampleFailure {
                    id: record.id.clone(),
                    index,
                    class: e.class(),
                    message,
                });
            }
        }
    }
    if out.featurized.is_empty() {
        return Err(Error::AllSamplesFailed(records.len()));
    }
    Ok(out)
}
