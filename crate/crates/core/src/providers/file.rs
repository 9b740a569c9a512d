use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use super::{ImageRef, ImageSource, ObjectDetection, Provider};
use crate::embedding_file::EmbeddingFile;
use crate::error::{Error, Result};
use crate::manifest::{EmbeddingRef, SampleRecord};
use crate::representation::Embedding;

/// Serves captions, detections and embeddings recorded in a manifest and its
/// embedding files. Nothing is computed: a missing field is an error.
pub struct FileProvider {
    dim: usize,
    artifact_root: PathBuf,
    records: Vec<SampleRecord>,
    by_image: HashMap<PathBuf, usize>,
    by_text: HashMap<String, EmbeddingRef>,
    files: Mutex<HashMap<String, Arc<EmbeddingFile>>>,
}

impl FileProvider {
    /// `image_root` resolves the records' image paths; `artifact_root`
    /// resolves embedding file names.
    pub fn new(image_root: &Path, artifact_root: &Path, records: &[SampleRecord], dim: usize) -> Self {
        let mut by_image = HashMap::new();
        let mut by_text = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            by_image.entry(image_root.join(&r.image)).or_insert(i);
            let Some(refs) = &r.embedding_refs else { continue };
            if let (Some(c), Some(e)) = (&r.caption, &refs.caption_text) {
                by_text.entry(c.clone()).or_insert_with(|| e.clone());
            }
            if let (Some(objects), Some(phrases)) = (&r.objects, &refs.object_phrases) {
                for (o, e) in objects.iter().zip(phrases) {
                    by_text.entry(o.phrase.clone()).or_insert_with(|| e.clone());
                }
            }
        }
        Self {
            dim,
            artifact_root: artifact_root.to_path_buf(),
            records: records.to_vec(),
            by_image,
            by_text,
            files: Mutex::new(HashMap::new()),
        }
    }

    fn record(&self, image: &ImageRef) -> Result<&SampleRecord> {
        let ImageSource::File(path) = &image.source else {
            return Err(Error::MissingArtifact(
                "file provider only resolves images by path".into(),
            ));
        };
        self.by_image
            .get(path)
            .map(|&i| &self.records[i])
            .ok_or_else(|| Error::MissingArtifact(format!("no manifest record for {}", path.display())))
    }

    fn file(&self, name: &str) -> Result<Arc<EmbeddingFile>> {
        let mut files = self.files.lock().expect("embedding cache poisoned");
        if let Some(f) = files.get(name) {
            return Ok(f.clone());
        }
        let path = self.artifact_root.join(name);
        let file = EmbeddingFile::read(&path).map_err(|e| match e {
            Error::Io { path, source } => Error::MissingArtifact(format!("{}: {source}", path.display())),
            other => other,
        })?;
        if file.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: file.dim(),
            });
        }
        let file = Arc::new(file);
        files.insert(name.to_string(), file.clone());
        Ok(file)
    }

    fn load(&self, r: &EmbeddingRef) -> Result<Embedding> {
        let file = self.file(&r.file)?;
        let row = usize::try_from(r.row)
            .map_err(|_| Error::MissingArtifact(format!("row {} out of range", r.row)))?;
        Embedding::from_f32(file.row(row)?)
    }
}

fn missing(record: &SampleRecord, field: &str) -> Error {
    Error::MissingArtifact(format!("record {} has no {field}", record.id))
}

impl Provider for FileProvider {
    fn embedding_dim(&self) -> usize {
        self.dim
    }

    fn caption(&self, image: &ImageRef) -> Result<String> {
        let r = self.record(image)?;
        r.caption.clone().ok_or_else(|| missing(r, "caption"))
    }

    fn embed_image(&self, image: &ImageRef) -> Result<Embedding> {
        let r = self.record(image)?;
        let refs = r.embedding_refs.as_ref().ok_or_else(|| missing(r, "embedding_refs"))?;
        match image.region {
            None => self.load(refs.global_image.as_ref().ok_or_else(|| missing(r, "global_image ref"))?),
            Some(region) => {
                let objects = r.objects.as_ref().ok_or_else(|| missing(r, "objects"))?;
                let i = objects
                    .iter()
                    .position(|o| o.bbox == region)
                    .ok_or_else(|| Error::MissingArtifact(format!(
                        "record {} has no object with box {:?}",
                        r.id,
                        region.coords()
                    )))?;
                let list = refs.object_images.as_ref().ok_or_else(|| missing(r, "object_images refs"))?;
                self.load(&list[i])
            }
        }
    }

    fn embed_text(&self, text: &str) -> Result<Embedding> {
        if text.trim().is_empty() {
            return Err(Error::InvalidInput("cannot embed empty text".into()));
        }
        let r = self
            .by_text
            .get(text)
            .ok_or_else(|| Error::MissingArtifact(format!("no stored embedding for text {text:?}")))?;
        self.load(r)
    }

    fn detect_objects(&self, image: &ImageRef, _caption: &str) -> Result<Vec<ObjectDetection>> {
        let r = self.record(image)?;
        r.objects.clone().ok_or_else(|| missing(r, "objects"))
    }
}
