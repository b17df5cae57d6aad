//! The perturbation optimizer: composite loss, zeroth-order gradient
//! estimation and the projected sign-ascent loop.

mod config;
mod estimator;
mod loss;

use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{LossWeights, ModelPreset, PerturbationConfig, UpdateRule, WeightSpec, MODEL_PRESETS};
pub use estimator::{estimate_gradient, estimate_gradient_flat, estimate_gradient_with, GradientEstimate};
pub use loss::{composite_loss, evaluate_loss, LossBreakdown, LossEvaluation};

use crate::backends::{TextEmbedder, VisionModel};
use crate::error::{Error, Result};
use crate::image::{apply_perturbation, clamp_project, ImageTensor, Perturbation};
use crate::schedule::distort;
use crate::seed::{derive_seed, derive_seed_indexed};

/// Model responses `(r1, r2, r3)`: prompted, null prompt, null prompt on the distorted image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Responses {
    pub r1: String,
    pub r2: String,
    pub r3: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VapResult {
    pub perturbed_image: ImageTensor,
    pub delta: Perturbation,
    /// Base-point loss of every round, in order.
    pub loss_trace: Vec<LossBreakdown>,
    pub loss_evaluations: u64,
    pub model_calls: u64,
    pub embedding_calls: u64,
    pub initial_responses: Responses,
    /// Only filled when `PerturbationConfig::final_responses` is set.
    pub final_responses: Option<Responses>,
}

/// A run that stopped on a backend or estimation failure, with the rounds it finished.
#[derive(Debug, Error)]
#[error("perturbation run aborted after {} completed round(s): {source}", .trace.len())]
pub struct VapAbort {
    #[source]
    pub source: Error,
    pub trace: Vec<LossBreakdown>,
}

impl From<VapAbort> for Error {
    fn from(abort: VapAbort) -> Self {
        abort.source
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Optimizes a budget-bounded perturbation of `x` against `model`.
///
/// The distorted image and its caption `r3` are computed once. Each round
/// evaluates the composite loss at the current image plus `num_queries`
/// probes, then takes one projected step. Query cost is exactly
/// `rounds·(N+1)` loss evaluations, `2·rounds·(N+1) + 1` model calls and
/// `3·rounds·(N+1)` embedding calls (plus 2 model calls with `final_responses`).
pub fn run_vap(
    x: &ImageTensor,
    prompt: &str,
    model: &dyn VisionModel,
    embedder: &dyn TextEmbedder,
    config: &PerturbationConfig,
) -> std::result::Result<VapResult, VapAbort> {
    let mut trace = Vec::new();
    let abort = |source: Error, trace: &Vec<LossBreakdown>| VapAbort {
        source,
        trace: trace.clone(),
    };
    config.validate().map_err(|e| abort(e, &trace))?;
    let weights = config.weights.resolve();

    let distorted = distort(
        x,
        config.timestep,
        &config.schedule,
        derive_seed(config.seed, "distort"),
    )
    .map_err(|e| abort(e, &trace))?;
    let r3 = model
        .respond(&distorted, None)
        .map_err(|source| abort(Error::LossTerm { term: "r3", source }, &trace))?
        .text;

    let mut model_calls = 1u64;
    let mut embedding_calls = 0u64;
    let mut loss_evaluations = 0u64;
    let mut delta = Perturbation::zeros_like(x);
    let mut current = x.clone();
    let mut initial: Option<Responses> = None;
    let concurrency = model.max_concurrency();

    for round in 0..config.rounds {
        let base: Mutex<Option<LossEvaluation>> = Mutex::new(None);
        let estimate = estimate_gradient_with(
            |n, img| {
                let eval = evaluate_loss(img, prompt, &r3, model, embedder, &weights)?;
                let value = eval.breakdown.composite;
                if n == 0 {
                    *base.lock().unwrap_or_else(|e| e.into_inner()) = Some(eval);
                }
                Ok(value)
            },
            &current,
            config.beta,
            config.num_queries,
            derive_seed_indexed(config.seed, "round", u64::from(round)),
            concurrency,
        )
        .map_err(|e| abort(e, &trace))?;

        let evals = estimate.evaluations as u64;
        loss_evaluations += evals;
        model_calls += 2 * evals;
        embedding_calls += 3 * evals;

        let base = base
            .into_inner()
            .unwrap_or_else(|e| e.into_inner())
            .expect("base point is always evaluated");
        trace.push(base.breakdown);
        if initial.is_none() {
            initial = Some(Responses {
                r1: base.r1,
                r2: base.r2,
                r3: r3.clone(),
            });
        }

        let stepped: Vec<f64> = delta
            .data()
            .iter()
            .zip(estimate.gradient.data())
            .map(|(d, g)| match config.update {
                UpdateRule::Sign => d + config.alpha * sign(*g),
                UpdateRule::Raw => d + config.alpha * g,
            })
            .collect();
        let (h, w) = x.shape();
        let stepped = Perturbation::new(h, w, stepped).map_err(|e| abort(e, &trace))?;
        delta = clamp_project(&stepped, config.epsilon).map_err(|e| abort(e, &trace))?;
        if config.update == UpdateRule::Sign {
            delta.snap_to_grid();
        }
        current = apply_perturbation(x, &delta, 1.0).map_err(|e| abort(e, &trace))?;
    }

    let final_responses = if config.final_responses {
        let respond = |p: Option<&str>, term: &'static str| {
            model
                .respond(&current, p)
                .map(|r| r.text)
                .map_err(|source| abort(Error::LossTerm { term, source }, &trace))
        };
        let r1 = respond(Some(prompt), "final r1")?;
        let r2 = respond(None, "final r2")?;
        model_calls += 2;
        Some(Responses { r1, r2, r3: r3.clone() })
    } else {
        None
    };

    Ok(VapResult {
        perturbed_image: current,
        delta,
        loss_trace: trace,
        loss_evaluations,
        model_calls,
        embedding_calls,
        initial_responses: initial.expect("rounds >= 1"),
        final_responses,
    })
}

/// Matched-strength control: i.i.d. Gaussian noise with standard deviation
/// `epsilon/255`, clipped to the same `±epsilon/255` budget, then clamped to `[0,1]`.
pub fn gaussian_baseline(x: &ImageTensor, epsilon: f64, seed: u64) -> Result<ImageTensor> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::validation(format!("epsilon must be >= 0, got {epsilon}")));
    }
    if epsilon == 0.0 {
        return Ok(x.clone());
    }
    let bound = epsilon / 255.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..x.len())
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (z * bound).clamp(-bound, bound)
        })
        .collect();
    let (h, w) = x.shape();
    apply_perturbation(x, &Perturbation::new(h, w, noise)?, 1.0)
}
