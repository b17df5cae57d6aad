use std::collections::HashSet;
use std::path::{Path, PathBuf};

use super::{BeafSide, EvalSample, SampleTask};
use crate::error::{Error, Result};
use crate::metrics::{AnnotationSet, BeafItem, PopeTriplet};

pub const DEFAULT_CAPTION_PROMPT: &str = "Please describe this image in detail.";

fn image_path(image_dir: &Path, annotations: Option<&AnnotationSet>, image_id: &str) -> PathBuf {
    let file = annotations
        .and_then(|a| a.images.get(image_id))
        .and_then(|i| i.file_name.clone())
        .unwrap_or_else(|| format!("{image_id}.png"));
    image_dir.join(file)
}

fn check_unique(samples: &[EvalSample]) -> Result<()> {
    let mut seen = HashSet::new();
    for s in samples {
        if !seen.insert(s.sample_id.as_str()) {
            return Err(Error::validation(format!("duplicate sample id {}", s.sample_id)));
        }
    }
    Ok(())
}

/// One sample per triplet. Images resolve to the annotation's `file_name`,
/// or `{image_id}.png`, under `image_dir`.
pub fn pope_samples(
    triplets: &[PopeTriplet],
    image_dir: &Path,
    annotations: Option<&AnnotationSet>,
) -> Result<Vec<EvalSample>> {
    let samples: Vec<EvalSample> = triplets
        .iter()
        .map(|t| EvalSample {
            sample_id: format!("pope/{}/{}/{}", t.strategy, t.image_id, t.probed_object),
            image: image_path(image_dir, annotations, &t.image_id),
            prompt: t.question.clone(),
            task: SampleTask::Pope {
                image_id: t.image_id.clone(),
                strategy: t.strategy,
                object: t.probed_object.clone(),
                ground_truth: t.ground_truth,
            },
        })
        .collect();
    check_unique(&samples)?;
    Ok(samples)
}

/// Two samples per manifest item, one per image of the pair.
pub fn beaf_samples(items: &[BeafItem], image_dir: &Path) -> Result<Vec<EvalSample>> {
    let mut samples = Vec::with_capacity(items.len() * 2);
    for item in items {
        for (side, image, gold) in [
            (BeafSide::Original, &item.original_image, item.gold_original),
            (BeafSide::Manipulated, &item.manipulated_image, item.gold_manipulated),
        ] {
            let side_name = match side {
                BeafSide::Original => "original",
                BeafSide::Manipulated => "manipulated",
            };
            samples.push(EvalSample {
                sample_id: format!("beaf/{}/{side_name}", item.id),
                image: image_dir.join(image),
                prompt: item.question.clone(),
                task: SampleTask::Beaf {
                    item_id: item.id.clone(),
                    side,
                    ground_truth: gold,
                    removed: item.removed,
                },
            });
        }
    }
    check_unique(&samples)?;
    Ok(samples)
}

/// One caption request per annotated image.
pub fn chair_samples(annotations: &AnnotationSet, image_dir: &Path, prompt: &str) -> Vec<EvalSample> {
    annotations
        .images
        .iter()
        .map(|(id, img)| EvalSample {
            sample_id: format!("chair/{id}"),
            image: image_path(image_dir, Some(annotations), id),
            prompt: prompt.to_string(),
            task: SampleTask::Chair {
                image_id: id.clone(),
                annotated_objects: img.objects.clone(),
            },
        })
        .collect()
}
