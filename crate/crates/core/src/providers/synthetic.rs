//! Deterministic stand-in for the caption model, encoder and detector.
//!
//! Text embeddings are pseudo-random directions keyed by the text, spread
//! around a shared mean direction the way real text encoders fill a narrow
//! cone rather than the whole sphere. Image
//! embeddings are then placed at a controlled angle from the embedding of
//! their own caption (whole image) or of their grounded phrase (object
//! region): a small angle for real images and a larger one for fakes, with
//! Gaussian jitter. Raw lengths are randomized on both sides so that only
//! the direction carries signal.
//!
//! Synthetic images are tiny tagged byte blobs produced by
//! [`synthetic_image_bytes`]; any other input must decode as an ordinary
//! image and is treated as real.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BBox, ImageRef, ObjectDetection, Provider};
use crate::error::{Error, Result};
use crate::label::Label;
use crate::representation::Embedding;

const SYNTH_MAGIC: &[u8] = b"MISALIGN-SYNTH\n";

const NOUNS: [&str; 32] = [
    "cat", "dog", "tree", "car", "house", "bicycle", "horse", "boat", "chair", "table", "bird",
    "flower", "mountain", "river", "bridge", "lamp", "clock", "book", "cup", "window", "door",
    "train", "bus", "sheep", "cow", "bench", "umbrella", "kite", "guitar", "pizza", "laptop",
    "bottle",
];

const ADJECTIVES: [&str; 16] = [
    "red", "blue", "green", "small", "large", "old", "young", "wooden", "bright", "dark", "white",
    "black", "striped", "shiny", "quiet", "tall",
];

/// Tagged bytes standing in for an image of the given class.
pub fn synthetic_image_bytes(id: &str, label: Label) -> Vec<u8> {
    format!("MISALIGN-SYNTH\nlabel={}\nid={id}\n", label.name()).into_bytes()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticParams {
    /// Mean angle in degrees between a real image and its caption.
    pub real_align_deg: f64,
    pub fake_align_deg: f64,
    /// Standard deviation of the per-embedding angle jitter, in degrees.
    pub noise_deg: f64,
    pub objects_per_image: usize,
    /// Object-level angles; default to the image-level ones when unset.
    pub object_real_align_deg: Option<f64>,
    pub object_fake_align_deg: Option<f64>,
    /// Cosine between every text direction and a shared seed-derived mean
    /// direction. Zero gives isotropic text embeddings.
    pub text_cone_cos: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            real_align_deg: 20.0,
            fake_align_deg: 60.0,
            noise_deg: 5.0,
            objects_per_image: 3,
            object_real_align_deg: None,
            object_fake_align_deg: None,
            text_cone_cos: 0.5,
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<()> {
        let angles = [
            Some(self.real_align_deg),
            Some(self.fake_align_deg),
            self.object_real_align_deg,
            self.object_fake_align_deg,
        ];
        for a in angles.into_iter().flatten() {
            if !(0.0..=180.0).contains(&a) {
                return Err(Error::InvalidConfig(format!("alignment angle {a} outside [0, 180]")));
            }
        }
        if !(0.0..1.0).contains(&self.text_cone_cos) {
            return Err(Error::InvalidConfig("text_cone_cos must be in [0, 1)".into()));
        }
        if !(self.noise_deg >= 0.0 && self.noise_deg.is_finite()) {
            return Err(Error::InvalidConfig("noise_deg must be >= 0".into()));
        }
        if self.objects_per_image > NOUNS.len() {
            return Err(Error::InvalidConfig(format!(
                "objects_per_image must be <= {}",
                NOUNS.len()
            )));
        }
        Ok(())
    }

    fn angle(&self, label: Label, object: bool) -> f64 {
        match (label, object) {
            (Label::Real, false) => self.real_align_deg,
            (Label::Fake, false) => self.fake_align_deg,
            (Label::Real, true) => self.object_real_align_deg.unwrap_or(self.real_align_deg),
            (Label::Fake, true) => self.object_fake_align_deg.unwrap_or(self.fake_align_deg),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticProvider {
    dim: usize,
    seed: u64,
    params: SyntheticParams,
}

/// Content digest plus the class the content declares.
struct ImageKey {
    digest: [u8; 32],
    label: Label,
}

impl SyntheticProvider {
    pub fn new(dim: usize, seed: u64, params: SyntheticParams) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidConfig("synthetic provider needs embedding_dim >= 2".into()));
        }
        params.validate()?;
        Ok(Self { dim, seed, params })
    }

    pub fn params(&self) -> &SyntheticParams {
        &self.params
    }

    fn rng(&self, domain: &str, parts: &[&[u8]]) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update((domain.len() as u64).to_le_bytes());
        h.update(domain.as_bytes());
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p);
        }
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    fn key(&self, image: &ImageRef) -> Result<ImageKey> {
        let bytes = image.bytes()?;
        let label = if let Some(rest) = bytes.strip_prefix(SYNTH_MAGIC) {
            let text = std::str::from_utf8(rest)
                .map_err(|_| Error::ImageDecode("synthetic image is not UTF-8".into()))?;
            match text.lines().find_map(|l| l.strip_prefix("label=")) {
                Some("real") => Label::Real,
                Some("fake") => Label::Fake,
                other => {
                    return Err(Error::ImageDecode(format!(
                        "synthetic image has bad label tag {other:?}"
                    )))
                }
            }
        } else {
            image::load_from_memory(&bytes).map_err(|e| Error::ImageDecode(format!("{image}: {e}")))?;
            Label::Real
        };
        Ok(ImageKey {
            digest: Sha256::digest(&bytes).into(),
            label,
        })
    }

    fn phrases(&self, key: &ImageKey) -> Vec<String> {
        let mut rng = self.rng("caption", &[&key.digest]);
        let k = self.params.objects_per_image.max(1);
        index::sample(&mut rng, NOUNS.len(), k)
            .into_iter()
            .map(|i| format!("{} {}", ADJECTIVES[rng.random_range(0..ADJECTIVES.len())], NOUNS[i]))
            .collect()
    }

    fn caption_for(&self, key: &ImageKey) -> String {
        let items: Vec<String> = self.phrases(key).iter().map(|p| format!("a {p}")).collect();
        let body = match items.split_last() {
            Some((last, [])) => last.clone(),
            Some((last, rest)) => format!("{} and {last}", rest.join(", ")),
            None => unreachable!("at least one phrase"),
        };
        format!("a photo showing {body}.")
    }

    fn detections_for(&self, key: &ImageKey, caption: &str) -> Vec<ObjectDetection> {
        let mut phrases: Vec<String> = self
            .phrases(key)
            .into_iter()
            .filter(|p| caption.contains(p.as_str()))
            .collect();
        if phrases.is_empty() {
            phrases = NOUNS
                .iter()
                .filter(|n| caption.contains(*n))
                .map(|n| n.to_string())
                .collect();
        }
        phrases
            .into_iter()
            .take(self.params.objects_per_image)
            .enumerate()
            .map(|(i, phrase)| {
                let mut rng = self.rng("box", &[&key.digest, &(i as u64).to_le_bytes()]);
                let w: f64 = rng.random_range(0.2..0.4);
                let h: f64 = rng.random_range(0.2..0.4);
                let x0: f64 = rng.random_range(0.0..1.0 - w);
                let y0: f64 = rng.random_range(0.0..1.0 - h);
                ObjectDetection {
                    phrase,
                    bbox: BBox::new(x0, y0, x0 + w, y0 + h).expect("box within unit square"),
                    confidence: rng.random_range(0.5..1.0),
                }
            })
            .collect()
    }

    fn gaussian(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.dim).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// Unit vector at cosine `text_cone_cos` from the shared text mean.
    fn text_direction(&self, text: &str) -> Vec<f64> {
        let mean = unit(self.gaussian(&mut self.rng("text-mean", &[])));
        let mut rng = self.rng("text", &[text.as_bytes()]);
        let spread = orthogonal_unit(self.gaussian(&mut rng), &mean);
        let c = self.params.text_cone_cos;
        let s = (1.0 - c * c).sqrt();
        mean.iter().zip(&spread).map(|(m, g)| c * m + s * g).collect()
    }

    /// Vector at `angle_deg` (jittered) from `anchor`, in a random orthogonal
    /// direction, scaled to a random length.
    fn place(&self, anchor: &[f64], angle_deg: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let jitter: f64 = rng.sample(StandardNormal);
        let theta = (angle_deg + self.params.noise_deg * jitter).clamp(0.0, 180.0).to_radians();
        let v = orthogonal_unit(self.gaussian(rng), anchor);
        let len: f64 = rng.random_range(5.0..15.0);
        anchor
            .iter()
            .zip(&v)
            .map(|(a, b)| len * (theta.cos() * a + theta.sin() * b))
            .collect()
    }
}

/// `v` with its component along the unit vector `axis` removed, normalized.
fn orthogonal_unit(mut v: Vec<f64>, axis: &[f64]) -> Vec<f64> {
    let proj: f64 = v.iter().zip(axis).map(|(a, b)| a * b).sum();
    for (x, a) in v.iter_mut().zip(axis) {
        *x -= proj * a;
    }
    unit(v)
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

impl Provider for SyntheticProvider {
    fn embedding_dim(&self) -> usize {
        self.dim
    }

    fn caption(&self, image: &ImageRef) -> Result<String> {
        Ok(self.caption_for(&self.key(image)?))
    }

    fn embed_image(&self, image: &ImageRef) -> Result<Embedding> {
        let key = self.key(image)?;
        let values = match image.region {
            None => {
                let anchor = self.text_direction(&self.caption_for(&key));
                let mut rng = self.rng("image", &[&key.digest]);
                self.place(&anchor, self.params.angle(key.label, false), &mut rng)
            }
            Some(region) => {
                let dets = self.detections_for(&key, &self.caption_for(&key));
                match dets.iter().position(|d| d.bbox == region) {
                    Some(i) => {
                        let anchor = self.text_direction(&dets[i].phrase);
                        let mut rng = self.rng("object", &[&key.digest, &(i as u64).to_le_bytes()]);
                        self.place(&anchor, self.params.angle(key.label, true), &mut rng)
                    }
                    None => {
                        let coords: Vec<u8> = region.coords().iter().flat_map(|c| c.to_le_bytes()).collect();
                        let mut rng = self.rng("region", &[&key.digest, &coords]);
                        let anchor = unit(self.gaussian(&mut rng));
                        self.place(&anchor, 90.0, &mut rng)
                    }
                }
            }
        };
        Embedding::new(values)
    }

    fn embed_text(&self, text: &str) -> Result<Embedding> {
        if text.trim().is_empty() {
            return Err(Error::InvalidInput("cannot embed empty text".into()));
        }
        let mut rng = self.rng("text-length", &[text.as_bytes()]);
        let len: f64 = rng.random_range(0.5..2.0);
        Embedding::new(self.text_direction(text).into_iter().map(|x| x * len).collect())
    }

    fn detect_objects(&self, image: &ImageRef, caption: &str) -> Result<Vec<ObjectDetection>> {
        if caption.trim().is_empty() {
            return Err(Error::InvalidInput("caption is empty".into()));
        }
        Ok(self.detections_for(&self.key(image)?, caption))
    }
}
