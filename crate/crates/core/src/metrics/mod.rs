//! Hallucination evaluation protocols: POPE triplets and confusion metrics,
//! BEAF change-aware metrics, CHAIR caption metrics and answer parsing.

pub mod answer;
pub mod beaf;
pub mod chair;
pub mod coco;
pub mod confusion;
pub mod pope;

pub use answer::{parse_yes_no, Answer, ParsedAnswer};
pub use beaf::{beaf_metrics, f1_tuid, load_beaf_manifest, BeafCells, BeafItem, BeafMetrics, BeafRecord};
pub use chair::{chair_metrics, extract_objects, ChairMetrics, ChairSample};
pub use coco::{AnnotatedImage, AnnotationSet, SynonymMap, COCO_CATEGORIES};
pub use confusion::{confusion_metrics, harmonic_mean, ConfusionCounts, ConfusionMetrics};
pub use pope::{
    generate_pope_triplets, negative_candidates, pope_question, read_triplets_jsonl, write_triplets_jsonl, PopeOptions,
    PopeStrategy, PopeTriplet,
};
