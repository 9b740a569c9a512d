//! JSONL corpus manifests: one labelled sample per line.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::providers::ObjectDetection;

/// Pointer to one row of an embedding file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmbeddingRef {
    pub file: String,
    pub row: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRefs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_image: Option<EmbeddingRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_text: Option<EmbeddingRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_images: Option<Vec<EmbeddingRef>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_phrases: Option<Vec<EmbeddingRef>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    /// Image path relative to the manifest's directory.
    pub image: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objects: Option<Vec<ObjectDetection>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_refs: Option<EmbeddingRefs>,
}

impl SampleRecord {
    pub fn new(id: impl Into<String>, image: impl Into<String>, label: Label) -> Self {
        Self {
            id: id.into(),
            image: image.into(),
            label,
            caption: None,
            objects: None,
            embedding_refs: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidInput("id is empty".into()));
        }
        if self.image.is_empty() {
            return Err(Error::InvalidInput("image path is empty".into()));
        }
        if let Some(c) = &self.caption {
            if c.trim().is_empty() {
                return Err(Error::InvalidInput("caption is present but empty".into()));
            }
        }
        for o in self.objects.iter().flatten() {
            o.validate()?;
        }
        if let Some(refs) = &self.embedding_refs {
            let n_objects = self.objects.as_ref().map(Vec::len);
            for (name, list) in [("object_images", &refs.object_images), ("object_phrases", &refs.object_phrases)] {
                if let Some(list) = list {
                    if Some(list.len()) != n_objects {
                        return Err(Error::InvalidInput(format!(
                            "{name} has {} entries but the record has {} objects",
                            list.len(),
                            n_objects.map_or("no".to_string(), |n| n.to_string())
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn parse_manifest(text: &str, origin: &Path) -> Result<Vec<SampleRecord>> {
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: line_no,
            message,
        };
        let record: SampleRecord = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        record.validate().map_err(|e| parse_err(e.to_string()))?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId {
                id: record.id,
                line: line_no,
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Reads a manifest, keeping file order and rejecting duplicate ids.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path)
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[SampleRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Directory that relative image paths in `manifest` resolve against.
pub fn manifest_root(manifest: &Path) -> PathBuf {
    manifest
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}
