//! Black-box optimization of beneficial visual noise against remotely served
//! vision-language models, plus a harness for object-hallucination benchmarks.
//!
//! The crate is organised bottom-up:
//!
//! * [`image`] and [`schedule`]: tensors, the L∞ budget and forward-diffusion distortion;
//! * [`backends`]: model/embedder clients over HTTP and deterministic mocks;
//! * [`vap`]: the composite loss, the zeroth-order estimator and the optimization loop;
//! * [`metrics`]: POPE, BEAF and CHAIR;
//! * [`harness`]: run orchestration, persistence, flip analysis and reports.

pub mod backends;
pub mod config;
pub mod error;
pub mod harness;
pub mod image;
pub mod metrics;
mod par;
pub mod schedule;
pub mod seed;
pub mod vap;

pub use backends::{BackendDescriptor, Embedding, ModelResponse, TextEmbedder, VisionModel};
pub use error::{BackendError, Error, Result};
pub use image::{apply_perturbation, clamp_project, load_image, save_image, ImageTensor, Perturbation};
pub use schedule::{distort, NoiseSchedule};
pub use vap::{
    estimate_gradient, evaluate_loss, gaussian_baseline, run_vap, LossWeights, PerturbationConfig, VapResult,
};
