//! Fake-image detection from image-text misalignment.
//!
//! An image is captioned, both are embedded into a joint vision-language
//! space, and the difference of the unit-normalized embeddings is taken as
//! the feature. The same is done for each grounded object in the caption,
//! the per-object differences are averaged, and the weighted sum of the two
//! levels is classified by a small MLP head.

pub mod classifier;
pub mod embedding_file;
pub mod error;
pub mod eval;
pub mod label;
pub mod manifest;
pub mod pipeline;
pub mod providers;
pub mod representation;

pub use error::{Error, ErrorClass, Result};
pub use label::Label;
