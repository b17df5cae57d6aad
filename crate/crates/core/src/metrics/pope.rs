//! Polling-based object probing: yes/no triplet generation.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::answer::Answer;
use super::coco::AnnotationSet;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

pub const DEFAULT_K: usize = 3;
pub const DEFAULT_QUESTIONS_PER_IMAGE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PopeStrategy {
    Random,
    Popular,
    Adversarial,
}

impl PopeStrategy {
    pub const ALL: [PopeStrategy; 3] = [PopeStrategy::Random, PopeStrategy::Popular, PopeStrategy::Adversarial];

    pub fn as_str(self) -> &'static str {
        match self {
            PopeStrategy::Random => "random",
            PopeStrategy::Popular => "popular",
            PopeStrategy::Adversarial => "adversarial",
        }
    }
}

impl fmt::Display for PopeStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PopeStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(PopeStrategy::Random),
            "popular" => Ok(PopeStrategy::Popular),
            "adversarial" => Ok(PopeStrategy::Adversarial),
            other => Err(Error::validation(format!("unknown POPE strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopeTriplet {
    pub image_id: String,
    pub question: String,
    pub ground_truth: Answer,
    pub strategy: PopeStrategy,
    pub probed_object: String,
}

pub fn pope_question(object: &str) -> String {
    format!("Is there a {object} in the image?")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopeOptions {
    pub k: usize,
    pub questions_per_image: usize,
}

impl Default for PopeOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            questions_per_image: DEFAULT_QUESTIONS_PER_IMAGE,
        }
    }
}

/// Absent objects ranked by the strategy's score, best first; ties by name.
/// Random returns every absent object, in vocabulary order.
pub fn negative_candidates<'a>(
    annotations: &'a AnnotationSet,
    image_objects: &BTreeSet<String>,
    strategy: PopeStrategy,
    k: usize,
) -> Vec<&'a str> {
    let absent: Vec<&str> = annotations
        .vocabulary
        .iter()
        .map(String::as_str)
        .filter(|o| !image_objects.contains(*o))
        .collect();
    let score: Box<dyn Fn(&str) -> usize> = match strategy {
        PopeStrategy::Random => return absent,
        PopeStrategy::Popular => {
            let freq = annotations.frequencies();
            Box::new(move |o| freq.get(o).copied().unwrap_or(0))
        }
        PopeStrategy::Adversarial => {
            let co = annotations.cooccurrence();
            Box::new(move |o| {
                image_objects
                    .iter()
                    .map(|g| co.get(&(o, g.as_str())).copied().unwrap_or(0))
                    .sum()
            })
        }
    };
    let mut ranked: Vec<(usize, &str)> = absent.into_iter().map(|o| (score(o), o)).collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
    ranked.into_iter().take(k).map(|(_, o)| o).collect()
}

/// Balanced yes/no triplets per image. Each image contributes
/// `min(questions_per_image / 2, |objects|, |candidates|)` pairs; images
/// with no objects or no absent candidates are skipped with a warning.
pub fn generate_pope_triplets(
    annotations: &AnnotationSet,
    strategy: PopeStrategy,
    options: PopeOptions,
    seed: u64,
) -> Result<Vec<PopeTriplet>> {
    if annotations.images.is_empty() {
        return Err(Error::validation("annotation set has no images"));
    }
    if options.k == 0 {
        return Err(Error::validation("k must be >= 1"));
    }
    if options.questions_per_image < 2 {
        return Err(Error::validation("questions_per_image must be >= 2"));
    }
    let mut out = Vec::new();
    for (image_id, image) in &annotations.images {
        let candidates = negative_candidates(annotations, &image.objects, strategy, options.k);
        let pairs = (options.questions_per_image / 2)
            .min(image.objects.len())
            .min(candidates.len());
        if pairs == 0 {
            tracing::warn!(image_id, strategy = %strategy, "no positive or negative object available, skipping image");
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("pope/{strategy}/{image_id}")));
        let present: Vec<&str> = image.objects.iter().map(String::as_str).collect();
        let mut positives: Vec<&str> = present.choose_multiple(&mut rng, pairs).copied().collect();
        positives.sort_unstable();
        let negatives: Vec<&str> = match strategy {
            PopeStrategy::Random => {
                let mut n: Vec<&str> = candidates.choose_multiple(&mut rng, pairs).copied().collect();
                n.shuffle(&mut rng);
                n
            }
            _ => candidates[..pairs].to_vec(),
        };
        for (pos, neg) in positives.into_iter().zip(negatives) {
            for (object, truth) in [(pos, Answer::Yes), (neg, Answer::No)] {
                out.push(PopeTriplet {
                    image_id: image_id.clone(),
                    question: pope_question(object),
                    ground_truth: truth,
                    strategy,
                    probed_object: object.to_string(),
                });
            }
        }
    }
    Ok(out)
}

pub fn write_triplets_jsonl(triplets: &[PopeTriplet], mut w: impl std::io::Write) -> Result<()> {
    for t in triplets {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_triplets_jsonl(r: impl std::io::BufRead) -> Result<Vec<PopeTriplet>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::validation(format!("triplet line {}: {e}", i + 1)))?);
    }
    Ok(out)
}
