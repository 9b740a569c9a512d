//! Image-text misalignment vectors and their hierarchical combination.
//!
//! A misalignment is the difference of the unit-normalized image embedding
//! and the unit-normalized text embedding. Its squared length equals
//! `2 - 2 cos(theta)` between the two embeddings, so it grows as the pair
//! drifts apart, independent of the raw embedding lengths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms at or below this value are treated as zero.
pub const NORM_FLOOR: f64 = 1e-12;

/// A fixed-dimension vector produced by an image or text encoder.
///
/// Values are held at double precision regardless of the encoder's native
/// precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("embedding must have dim >= 1".into()));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { values })
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MisalignmentKind {
    Global,
    LocalSingle,
    LocalMean,
    Combined,
}

impl MisalignmentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MisalignmentKind::Global => "global",
            MisalignmentKind::LocalSingle => "local_single",
            MisalignmentKind::LocalMean => "local_mean",
            MisalignmentKind::Combined => "combined",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Misalignment {
    values: Vec<f64>,
    kind: MisalignmentKind,
}

impl Misalignment {
    /// Builds a misalignment from raw values. Used for deserialized or
    /// hand-constructed representations; entries must be finite.
    pub fn from_values(values: Vec<f64>, kind: MisalignmentKind) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("misalignment must have dim >= 1".into()));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { values, kind })
    }

    pub fn zeros(dim: usize, kind: MisalignmentKind) -> Self {
        Self {
            values: vec![0.0; dim],
            kind,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> MisalignmentKind {
        self.kind
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    GlobalOnly,
    LocalOnly,
    #[default]
    Both,
}

/// What to do with a sample for which the detector produced no objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyObjectPolicy {
    /// Local term is the zero vector, so the combined vector is `w1 * global`.
    #[default]
    ZeroLocal,
    /// The sample cannot be represented and is reported as failed.
    SkipSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub w1: f64,
    pub w2: f64,
    pub mode: FusionMode,
    pub empty_object_policy: EmptyObjectPolicy,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            w1: 1.0,
            w2: 1.0,
            mode: FusionMode::Both,
            empty_object_policy: EmptyObjectPolicy::ZeroLocal,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.w1.is_finite() || !self.w2.is_finite() {
            return Err(Error::InvalidConfig("fusion weights must be finite".into()));
        }
        let (w1, w2) = self.effective_weights();
        if w1 == 0.0 && w2 == 0.0 {
            return Err(Error::InvalidConfig(format!(
                "fusion weights are both zero under mode {:?}",
                self.mode
            )));
        }
        Ok(())
    }

    /// Weights after the mode override is applied.
    pub fn effective_weights(&self) -> (f64, f64) {
        match self.mode {
            FusionMode::Both => (self.w1, self.w2),
            FusionMode::GlobalOnly => (self.w1, 0.0),
            FusionMode::LocalOnly => (0.0, self.w2),
        }
    }
}

fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            actual: b,
        });
    }
    Ok(())
}

pub fn l2_normalize(v: &Embedding) -> Result<Embedding> {
    let norm = v.norm();
    if norm <= NORM_FLOOR {
        return Err(Error::ZeroNormEmbedding { norm });
    }
    Ok(Embedding {
        values: v.values.iter().map(|x| x / norm).collect(),
    })
}

/// `image / |image| - text / |text|`, entrywise.
pub fn misalignment(image_emb: &Embedding, text_emb: &Embedding) -> Result<Misalignment> {
    misalignment_of_kind(image_emb, text_emb, MisalignmentKind::Global)
}

fn misalignment_of_kind(
    image_emb: &Embedding,
    text_emb: &Embedding,
    kind: MisalignmentKind,
) -> Result<Misalignment> {
    check_dims(image_emb.dim(), text_emb.dim())?;
    let image = l2_normalize(image_emb)?;
    let text = l2_normalize(text_emb)?;
    let values = image
        .values
        .iter()
        .zip(&text.values)
        .map(|(i, t)| i - t)
        .collect();
    Ok(Misalignment { values, kind })
}

/// Misalignment between the whole image and its full caption.
pub fn global_distance(whole_image_emb: &Embedding, full_caption_emb: &Embedding) -> Result<Misalignment> {
    misalignment_of_kind(whole_image_emb, full_caption_emb, MisalignmentKind::Global)
}

/// Misalignment between one grounded object crop and its caption phrase.
pub fn local_distance(object_image_emb: &Embedding, object_phrase_emb: &Embedding) -> Result<Misalignment> {
    misalignment_of_kind(object_image_emb, object_phrase_emb, MisalignmentKind::LocalSingle)
}

/// Uniform mean of per-object misalignments.
///
/// `dim` is the configured embedding dimension; it fixes the size of the zero
/// vector returned for an empty list under [`EmptyObjectPolicy::ZeroLocal`]
/// and is checked against every element.
pub fn average_local(
    locals: &[Misalignment],
    dim: usize,
    policy: EmptyObjectPolicy,
) -> Result<Misalignment> {
    if locals.is_empty() {
        return match policy {
            EmptyObjectPolicy::ZeroLocal => Ok(Misalignment::zeros(dim, MisalignmentKind::LocalMean)),
            EmptyObjectPolicy::SkipSample => Err(Error::EmptyObjectSet),
        };
    }
    let mut sum = vec![0.0; dim];
    for local in locals {
        check_dims(dim, local.dim())?;
        if local.kind != MisalignmentKind::LocalSingle {
            return Err(Error::KindMismatch {
                expected: MisalignmentKind::LocalSingle.as_str(),
                actual: local.kind.as_str(),
            });
        }
        for (acc, v) in sum.iter_mut().zip(&local.values) {
            *acc += v;
        }
    }
    let n = locals.len() as f64;
    Ok(Misalignment {
        values: sum.into_iter().map(|s| s / n).collect(),
        kind: MisalignmentKind::LocalMean,
    })
}

/// `w1 * global + w2 * local`, with the mode zeroing the excluded weight.
pub fn combine(global: &Misalignment, local: &Misalignment, cfg: &FusionConfig) -> Result<Misalignment> {
    check_dims(global.dim(), local.dim())?;
    if global.kind != MisalignmentKind::Global {
        return Err(Error::KindMismatch {
            expected: MisalignmentKind::Global.as_str(),
            actual: global.kind.as_str(),
        });
    }
    if local.kind != MisalignmentKind::LocalMean {
        return Err(Error::KindMismatch {
            expected: MisalignmentKind::LocalMean.as_str(),
            actual: local.kind.as_str(),
        });
    }
    let (w1, w2) = cfg.effective_weights();
    let values = global
        .values
        .iter()
        .zip(&local.values)
        .map(|(g, l)| w1 * g + w2 * l)
        .collect();
    Ok(Misalignment {
        values,
        kind: MisalignmentKind::Combined,
    })
}

pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    let na = a.norm();
    if na <= NORM_FLOOR {
        return Err(Error::ZeroNormEmbedding { norm: na });
    }
    let nb = b.norm();
    if nb <= NORM_FLOOR {
        return Err(Error::ZeroNormEmbedding { norm: nb });
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}
