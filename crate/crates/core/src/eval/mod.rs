//! Detection metrics and the robustness perturbations.

mod metrics;
mod perturb;

pub use metrics::{accuracy, average_precision, pr_curve, MetricsReport, PrPoint, ScoredSample};
pub use perturb::{
    center_crop, crop_object, encode_jpeg, from_rgb8, perturb, perturb_gaussian_blur, perturb_gaussian_noise,
    perturb_jpeg, to_rgb8, PerturbationKind, PerturbationSpec, PixelBuffer, DEFAULT_CROP,
};
