use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::head::{softmax2, MlpHead};
use crate::error::{Error, Result};
use crate::label::Label;
use crate::representation::Misalignment;

/// Floor applied to probabilities inside the log of the cross-entropy.
const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub hidden_dim: usize,
    pub seed: u64,
    pub betas: (f64, f64),
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 1e-3,
            weight_decay: 1e-3,
            batch_size: 64,
            hidden_dim: 256,
            seed: 0,
            betas: (0.9, 0.999),
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.epochs < 1 {
            return bad("epochs must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1");
        }
        if self.hidden_dim < 1 {
            return bad("hidden_dim must be >= 1");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be >= 0");
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be > 0");
        }
        Ok(())
    }
}

/// Gradient of the summed loss, shaped like [`MlpHead`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: [f64; 2],
}

impl Gradients {
    fn zeros_like(head: &MlpHead) -> Self {
        Self {
            w1: vec![0.0; head.w1.len()],
            b1: vec![0.0; head.b1.len()],
            w2: vec![0.0; head.w2.len()],
            b2: [0.0; 2],
        }
    }

    fn clear(&mut self) {
        self.w1.fill(0.0);
        self.b1.fill(0.0);
        self.w2.fill(0.0);
        self.b2 = [0.0; 2];
    }

    fn as_slices(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }
}

fn sample_loss(prob_real: f64, prob_fake: f64, label: Label) -> f64 {
    match label {
        Label::Fake => -prob_fake.max(LOG_FLOOR).ln(),
        Label::Real => -prob_real.max(LOG_FLOOR).ln(),
    }
}

fn check_batch<'a, I>(head: &MlpHead, batch: I) -> Result<()>
where
    I: IntoIterator<Item = &'a (Misalignment, Label)>,
{
    let mut any = false;
    for (d, _) in batch {
        head.check_input(d.dim())?;
        any = true;
    }
    if any {
        Ok(())
    } else {
        Err(Error::EmptyBatch)
    }
}

/// Summed binary cross-entropy of the fake probability over the batch.
pub fn batch_loss(head: &MlpHead, batch: &[(Misalignment, Label)]) -> Result<f64> {
    check_batch(head, batch)?;
    let mut hidden = vec![0.0; head.hidden_dim];
    Ok(batch
        .iter()
        .map(|(d, y)| {
            let (pr, pf) = softmax2(head.logits_into(d.values(), &mut hidden));
            sample_loss(pr, pf, *y)
        })
        .sum())
}

/// Analytic gradient of [`batch_loss`] with respect to every parameter.
pub fn gradients(head: &MlpHead, batch: &[(Misalignment, Label)]) -> Result<Gradients> {
    check_batch(head, batch)?;
    let mut grads = Gradients::zeros_like(head);
    let mut scratch = Scratch::new(head.hidden_dim);
    for (d, y) in batch {
        accumulate(head, d.values(), *y, &mut grads, &mut scratch);
    }
    Ok(grads)
}

struct Scratch {
    pre: Vec<f64>,
    dpre: Vec<f64>,
}

impl Scratch {
    fn new(hidden: usize) -> Self {
        Self {
            pre: vec![0.0; hidden],
            dpre: vec![0.0; hidden],
        }
    }
}

/// Adds one sample's gradient into `grads` and returns its loss.
fn accumulate(head: &MlpHead, x: &[f64], y: Label, grads: &mut Gradients, s: &mut Scratch) -> f64 {
    let hd = head.hidden_dim;
    let logits = head.logits_into(x, &mut s.pre);
    let (pr, pf) = softmax2(logits);
    let loss = sample_loss(pr, pf, y);

    // d loss / d logits = softmax - onehot, unless the log floor is active.
    let p_target = if y.is_fake() { pf } else { pr };
    if p_target <= LOG_FLOOR {
        return loss;
    }
    let target = if y.is_fake() { [0.0, 1.0] } else { [1.0, 0.0] };
    let dz = [pr - target[0], pf - target[1]];

    for k in 0..2 {
        grads.b2[k] += dz[k];
        let grow = &mut grads.w2[k * hd..(k + 1) * hd];
        for (g, h) in grow.iter_mut().zip(&s.pre) {
            *g += dz[k] * h.max(0.0);
        }
    }
    for j in 0..hd {
        s.dpre[j] = if s.pre[j] > 0.0 {
            dz[0] * head.w2[j] + dz[1] * head.w2[hd + j]
        } else {
            0.0
        };
    }
    let n = head.input_dim;
    for j in 0..hd {
        let dp = s.dpre[j];
        if dp == 0.0 {
            continue;
        }
        grads.b1[j] += dp;
        for (g, xi) in grads.w1[j * n..(j + 1) * n].iter_mut().zip(x) {
            *g += dp * xi;
        }
    }
    loss
}

/// First and second moment estimates for one parameter tensor.
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// AdamW with decoupled weight decay applied to the weight matrices only.
struct AdamW {
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    moments: Vec<Moments>,
}

impl AdamW {
    fn new(head: &MlpHead, cfg: &TrainConfig) -> Self {
        let sizes = [head.w1.len(), head.b1.len(), head.w2.len(), 2];
        Self {
            lr: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            beta1: cfg.betas.0,
            beta2: cfg.betas.1,
            eps: cfg.eps,
            step: 0,
            moments: sizes
                .iter()
                .map(|&n| Moments {
                    m: vec![0.0; n],
                    v: vec![0.0; n],
                })
                .collect(),
        }
    }

    fn step(&mut self, head: &mut MlpHead, grads: &Gradients) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let (lr, wd, b1, b2, eps) = (self.lr, self.weight_decay, self.beta1, self.beta2, self.eps);
        // index 0 and 2 are w1 and w2; biases are not decayed
        for (idx, ((params, g), mom)) in head
            .params_mut()
            .into_iter()
            .zip(grads.as_slices())
            .zip(self.moments.iter_mut())
            .enumerate()
        {
            let decay = if idx % 2 == 0 { 1.0 - lr * wd } else { 1.0 };
            for i in 0..params.len() {
                mom.m[i] = b1 * mom.m[i] + (1.0 - b1) * g[i];
                mom.v[i] = b2 * mom.v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = mom.m[i] / bc1;
                let v_hat = mom.v[i] / bc2;
                params[i] = params[i] * decay - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub head: MlpHead,
    /// Summed loss over the whole dataset, evaluated after each epoch.
    pub epoch_losses: Vec<f64>,
}

pub fn train(dataset: &[(Misalignment, Label)], cfg: &TrainConfig) -> Result<MlpHead> {
    train_with_history(dataset, cfg).map(|o| o.head)
}

/// Trains a freshly initialized head. Initialization and per-epoch
/// shuffling are both driven by `cfg.seed`.
pub fn train_with_history(dataset: &[(Misalignment, Label)], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let first = dataset.first().ok_or(Error::EmptyDataset)?;
    let dim = first.0.dim();
    let mut head = MlpHead::init(dim, cfg.hidden_dim, cfg.seed)?;
    check_batch(&head, dataset)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut opt = AdamW::new(&head, cfg);
    let mut grads = Gradients::zeros_like(&head);
    let mut scratch = Scratch::new(head.hidden_dim);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            grads.clear();
            let mut loss = 0.0;
            for &i in chunk {
                let (d, y) = &dataset[i];
                loss += accumulate(&head, d.values(), *y, &mut grads, &mut scratch);
            }
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            opt.step(&mut head, &grads);
        }
        if !head.all_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let total = batch_loss(&head, dataset)?;
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        log::debug!("epoch {epoch}: loss {total:.6}");
        epoch_losses.push(total);
    }
    Ok(TrainOutcome { head, epoch_losses })
}

/// Fraction of samples whose predicted label matches.
#[cfg(test)]
pub(crate) fn training_accuracy(head: &MlpHead, dataset: &[(Misalignment, Label)]) -> f64 {
    let hits = dataset
        .iter()
        .filter(|(d, y)| head.predict(d).unwrap().label == *y)
        .count();
    hits as f64 / dataset.len() as f64
}
