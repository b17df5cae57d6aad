use serde::{Deserialize, Serialize};

use super::config::LossWeights;
use crate::backends::{similarity, TextEmbedder, VisionModel};
use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// The three similarity terms and their weighted combination.
///
/// `composite = w1·s1 − w2·s2 − w3·s3` is maximized: agreement between the
/// prompted and unprompted responses is rewarded, agreement with the
/// distorted-image caption is penalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub composite: f64,
}

impl LossBreakdown {
    pub fn combine(s1: f64, s2: f64, s3: f64, w: &LossWeights) -> Self {
        Self {
            s1,
            s2,
            s3,
            composite: w.w1 * s1 - w.w2 * s2 - w.w3 * s3,
        }
    }
}

/// A loss value together with the responses that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEvaluation {
    pub breakdown: LossBreakdown,
    pub r1: String,
    pub r2: String,
}

/// Two model calls (prompted, null prompt) and three embedding calls.
pub fn evaluate_loss(
    image: &ImageTensor,
    prompt: &str,
    distorted_caption: &str,
    model: &dyn VisionModel,
    embedder: &dyn TextEmbedder,
    weights: &LossWeights,
) -> Result<LossEvaluation> {
    let term = |term: &'static str| move |source| Error::LossTerm { term, source };
    let r1 = model.respond(image, Some(prompt)).map_err(term("r1"))?.text;
    let r2 = model.respond(image, None).map_err(term("r2"))?.text;
    let e1 = embedder.embed(&r1).map_err(term("embed(r1)"))?;
    let e2 = embedder.embed(&r2).map_err(term("embed(r2)"))?;
    let e3 = embedder.embed(distorted_caption).map_err(term("embed(r3)"))?;
    let breakdown = LossBreakdown::combine(
        similarity(&e1, &e2)?,
        similarity(&e1, &e3)?,
        similarity(&e2, &e3)?,
        weights,
    );
    Ok(LossEvaluation { breakdown, r1, r2 })
}

pub fn composite_loss(
    image: &ImageTensor,
    prompt: &str,
    distorted_caption: &str,
    model: &dyn VisionModel,
    embedder: &dyn TextEmbedder,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    evaluate_loss(image, prompt, distorted_caption, model, embedder, weights).map(|e| e.breakdown)
}
