//! Backends for the three pretrained models the detector consumes: a caption
//! model, a joint image/text encoder and a phrase-grounding object detector.
//!
//! [`SyntheticProvider`] fabricates geometrically controlled embeddings for
//! testing, [`FileProvider`] replays precomputed artifacts, and
//! [`RemoteProvider`] talks to a model sidecar over HTTP. All three implement
//! [`Provider`], so switching between them is a configuration change.

mod file;
mod remote;
mod synthetic;

use std::fmt;
use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::representation::Embedding;

pub use file::FileProvider;
pub use remote::{RemoteConfig, RemoteProvider};
pub use synthetic::{synthetic_image_bytes, SyntheticParams, SyntheticProvider};

/// A normalized `(x0, y0, x1, y1)` box with `0 <= x0 < x1 <= 1` and the same for y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox([f64; 4]);

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::try_from([x0, y0, x1, y1])
    }

    pub fn coords(&self) -> [f64; 4] {
        self.0
    }

    pub fn area(&self) -> f64 {
        let [x0, y0, x1, y1] = self.0;
        (x1 - x0) * (y1 - y0)
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        let [x0, y0, x1, y1] = c;
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !c.iter().all(|&v| unit(v)) {
            return Err(Error::InvalidInput(format!("box {c:?} has coordinates outside [0, 1]")));
        }
        if !(x0 < x1 && y0 < y1) {
            return Err(Error::InvalidInput(format!("box {c:?} is not ordered (need x0 < x1, y0 < y1)")));
        }
        Ok(Self(c))
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageSource {
    File(PathBuf),
    Inline(Vec<u8>),
}

/// An image, optionally narrowed to a region that should be embedded on its own.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRef {
    pub source: ImageSource,
    pub region: Option<BBox>,
}

impl ImageRef {
    pub fn file(path: impl Into<PathBuf>) -> Self {
        Self {
            source: ImageSource::File(path.into()),
            region: None,
        }
    }

    pub fn inline(bytes: Vec<u8>) -> Self {
        Self {
            source: ImageSource::Inline(bytes),
            region: None,
        }
    }

    pub fn with_region(mut self, region: BBox) -> Self {
        self.region = Some(region);
        self
    }

    /// Raw encoded bytes of the image. Unreadable files surface as decode
    /// errors, the same as unparseable content.
    pub fn bytes(&self) -> Result<std::borrow::Cow<'_, [u8]>> {
        match &self.source {
            ImageSource::Inline(b) => Ok(std::borrow::Cow::Borrowed(b)),
            ImageSource::File(p) => fs::read(p)
                .map(std::borrow::Cow::Owned)
                .map_err(|e| Error::ImageDecode(format!("{}: {e}", p.display()))),
        }
    }
}

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.source {
            ImageSource::File(p) => write!(f, "{}", p.display())?,
            ImageSource::Inline(b) => write!(f, "<{} inline bytes>", b.len())?,
        }
        if let Some(r) = self.region {
            write!(f, " region {:?}", r.coords())?;
        }
        Ok(())
    }
}

/// One grounded caption phrase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectDetection {
    pub phrase: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub confidence: f64,
}

impl ObjectDetection {
    pub fn validate(&self) -> Result<()> {
        if self.phrase.trim().is_empty() {
            return Err(Error::InvalidInput("object phrase is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::InvalidInput(format!(
                "confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        Ok(())
    }
}

/// Caption model, joint encoder and grounding detector behind one interface.
pub trait Provider: Send + Sync {
    /// Dimension shared by image and text embeddings.
    fn embedding_dim(&self) -> usize;

    fn caption(&self, image: &ImageRef) -> Result<String>;

    /// Embeds the whole image, or only `image.region` when set.
    fn embed_image(&self, image: &ImageRef) -> Result<Embedding>;

    fn embed_text(&self, text: &str) -> Result<Embedding>;

    fn detect_objects(&self, image: &ImageRef, caption: &str) -> Result<Vec<ObjectDetection>>;

    /// Whether the provider runs real models on pixels. When true the
    /// pipeline decodes, crops and re-encodes images before handing them over.
    fn wants_pixels(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Synthetic,
    File,
    Remote,
}

impl std::str::FromStr for ProviderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(ProviderKind::Synthetic),
            "file" => Ok(ProviderKind::File),
            "remote" => Ok(ProviderKind::Remote),
            other => Err(Error::InvalidConfig(format!("unknown provider {other:?}"))),
        }
    }
}

/// Post-filter applied to detector output before local distances are taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionFilter {
    pub min_confidence: f64,
    pub max_objects: usize,
}

impl Default for DetectionFilter {
    fn default() -> Self {
        Self {
            min_confidence: 0.3,
            max_objects: 8,
        }
    }
}

impl DetectionFilter {
    /// Drops low-confidence detections and keeps the `max_objects` most
    /// confident. Equal confidences keep detector order.
    pub fn apply(&self, detections: &[ObjectDetection]) -> Vec<ObjectDetection> {
        let mut kept: Vec<ObjectDetection> = detections
            .iter()
            .filter(|d| d.confidence >= self.min_confidence)
            .cloned()
            .collect();
        kept.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        kept.truncate(self.max_objects);
        kept
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub embedding_dim: usize,
    pub endpoint: Option<String>,
    pub artifact_root: Option<PathBuf>,
    pub seed: u64,
    pub synthetic_params: SyntheticParams,
    pub remote: RemoteConfig,
    pub detection: DetectionFilter,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Synthetic,
            embedding_dim: 768,
            endpoint: None,
            artifact_root: None,
            seed: 0,
            synthetic_params: SyntheticParams::default(),
            remote: RemoteConfig::default(),
            detection: DetectionFilter::default(),
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(Error::InvalidConfig("embedding_dim must be >= 1".into()));
        }
        if self.kind == ProviderKind::Remote && self.endpoint.is_none() {
            return Err(Error::InvalidConfig("remote provider needs an endpoint".into()));
        }
        self.synthetic_params.validate()?;
        Ok(())
    }
}
