//! Two-layer MLP head over misalignment vectors, trained with binary
//! cross-entropy and AdamW.

mod artifact;
mod head;
mod train;

pub use artifact::{MODEL_MAGIC, MODEL_VERSION};
pub use head::{MlpHead, Prediction, FAKE_THRESHOLD};
pub use train::{batch_loss, gradients, train, train_with_history, Gradients, TrainConfig, TrainOutcome};
