use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::label::Label;
use crate::representation::Misalignment;

/// Probability of "fake" at or above which a sample is labelled fake.
pub const FAKE_THRESHOLD: f64 = 0.5;

/// Classifier parameters. Matrices are row-major: `w1` is
/// `hidden_dim x input_dim`, `w2` is `2 x hidden_dim`. Output unit 0 is
/// "real", unit 1 is "fake".
#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead {
    pub(crate) input_dim: usize,
    pub(crate) hidden_dim: usize,
    pub(crate) w1: Vec<f64>,
    pub(crate) b1: Vec<f64>,
    pub(crate) w2: Vec<f64>,
    pub(crate) b2: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub prob_real: f64,
    pub prob_fake: f64,
    pub label: Label,
}

impl Prediction {
    fn from_logits(logits: [f64; 2]) -> Self {
        let (prob_real, prob_fake) = softmax2(logits);
        let label = if prob_fake >= FAKE_THRESHOLD {
            Label::Fake
        } else {
            Label::Real
        };
        Self {
            prob_real,
            prob_fake,
            label,
        }
    }
}

/// Two-way softmax with max subtraction.
pub(crate) fn softmax2(logits: [f64; 2]) -> (f64, f64) {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let s = e0 + e1;
    (e0 / s, e1 / s)
}

impl MlpHead {
    /// Glorot-uniform weights from a seeded generator, zero biases.
    pub fn init(input_dim: usize, hidden_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "head dims must be >= 1 (input {input_dim}, hidden {hidden_dim})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limit1 = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        let w1 = (0..hidden_dim * input_dim)
            .map(|_| rng.random_range(-limit1..limit1))
            .collect();
        let limit2 = (6.0 / (hidden_dim + 2) as f64).sqrt();
        let w2 = (0..2 * hidden_dim)
            .map(|_| rng.random_range(-limit2..limit2))
            .collect();
        Ok(Self {
            input_dim,
            hidden_dim,
            w1,
            b1: vec![0.0; hidden_dim],
            w2,
            b2: [0.0; 2],
        })
    }

    /// A head with every parameter set to zero.
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            w1: vec![0.0; hidden_dim * input_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; 2 * hidden_dim],
            b2: [0.0; 2],
        }
    }

    /// Assembles a head from explicit parameters, checking shapes and finiteness.
    pub fn from_parameters(
        input_dim: usize,
        hidden_dim: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: [f64; 2],
    ) -> Result<Self> {
        let expect = |name: &str, got: usize, want: Option<usize>| match want {
            Some(w) if w == got => Ok(()),
            _ => Err(Error::InvalidInput(format!(
                "{name} has {got} values, expected {want:?}"
            ))),
        };
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::InvalidInput("head dims must be >= 1".into()));
        }
        expect("w1", w1.len(), hidden_dim.checked_mul(input_dim))?;
        expect("b1", b1.len(), Some(hidden_dim))?;
        expect("w2", w2.len(), hidden_dim.checked_mul(2))?;
        let head = Self {
            input_dim,
            hidden_dim,
            w1,
            b1,
            w2,
            b2,
        };
        if !head.all_finite() {
            return Err(Error::InvalidInput("head parameters must be finite".into()));
        }
        Ok(head)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn w1(&self) -> &[f64] {
        &self.w1
    }

    pub fn b1(&self) -> &[f64] {
        &self.b1
    }

    pub fn w2(&self) -> &[f64] {
        &self.w2
    }

    pub fn b2(&self) -> [f64; 2] {
        self.b2
    }

    pub fn set_b2(&mut self, b2: [f64; 2]) {
        self.b2 = b2;
    }

    pub(crate) fn check_input(&self, dim: usize) -> Result<()> {
        if dim != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: dim,
            });
        }
        Ok(())
    }

    /// Fills `hidden_pre` with `w1 x + b1` and returns the output logits.
    pub(crate) fn logits_into(&self, x: &[f64], hidden_pre: &mut [f64]) -> [f64; 2] {
        for (j, pre) in hidden_pre.iter_mut().enumerate() {
            let row = &self.w1[j * self.input_dim..(j + 1) * self.input_dim];
            *pre = self.b1[j] + dot(row, x);
        }
        let mut logits = self.b2;
        for (k, logit) in logits.iter_mut().enumerate() {
            let row = &self.w2[k * self.hidden_dim..(k + 1) * self.hidden_dim];
            *logit += row
                .iter()
                .zip(hidden_pre.iter())
                .map(|(w, h)| w * h.max(0.0))
                .sum::<f64>();
        }
        logits
    }

    pub(crate) fn forward_values(&self, x: &[f64]) -> Result<Prediction> {
        self.check_input(x.len())?;
        let mut hidden = vec![0.0; self.hidden_dim];
        Ok(Prediction::from_logits(self.logits_into(x, &mut hidden)))
    }

    pub fn forward(&self, d: &Misalignment) -> Result<Prediction> {
        self.forward_values(d.values())
    }

    /// Forward pass with the fixed 0.5 threshold on the fake probability.
    pub fn predict(&self, d: &Misalignment) -> Result<Prediction> {
        self.forward(d)
    }

    pub(crate) fn params_mut(&mut self) -> [&mut [f64]; 4] {
        [&mut self.w1[..], &mut self.b1[..], &mut self.w2[..], &mut self.b2[..]]
    }

    pub(crate) fn all_finite(&self) -> bool {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .all(|v| v.is_finite())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
