//! Caption hallucination: object extraction and instance/sentence rates.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::coco::SynonymMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChairSample {
    pub image_id: String,
    pub caption: String,
    pub annotated_objects: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChairMetrics {
    pub chair_i: f64,
    pub chair_s: f64,
    pub mentions: u64,
    pub hallucinated_mentions: u64,
    pub captions: u64,
    pub hallucinated_captions: u64,
}

fn tokenize(caption: &str) -> Vec<String> {
    caption
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|w| w.trim_matches('\'').to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Singular candidates for a (possibly plural) word, the word itself first.
fn singulars(word: &str) -> Vec<String> {
    let mut out = vec![word.to_string()];
    if let Some(stem) = word.strip_suffix("ies") {
        out.push(format!("{stem}y"));
    }
    if let Some(stem) = word.strip_suffix("es") {
        out.push(stem.to_string());
    }
    if let Some(stem) = word.strip_suffix('s') {
        if !stem.is_empty() {
            out.push(stem.to_string());
        }
    }
    out
}

/// Categories mentioned in the caption: longest phrase match at each word
/// position, with simple plural folding on the phrase's last word.
pub fn extract_objects(caption: &str, synonyms: &SynonymMap) -> BTreeSet<String> {
    let words = tokenize(caption);
    let mut found = BTreeSet::new();
    let mut i = 0;
    while i < words.len() {
        let mut advanced = false;
        for len in (1..=synonyms.max_words().min(words.len() - i)).rev() {
            let head = words[i..i + len - 1].join(" ");
            let hit = singulars(&words[i + len - 1]).into_iter().find_map(|last| {
                let phrase = if head.is_empty() {
                    last
                } else {
                    format!("{head} {last}")
                };
                synonyms.lookup(&phrase).map(str::to_string)
            });
            if let Some(category) = hit {
                found.insert(category);
                i += len;
                advanced = true;
                break;
            }
        }
        if !advanced {
            i += 1;
        }
    }
    found
}

/// Each category counts once per caption. CHAIR_I is 0 when nothing is mentioned.
pub fn chair_metrics(samples: &[ChairSample], synonyms: &SynonymMap) -> Result<ChairMetrics> {
    if samples.is_empty() {
        return Err(Error::validation("CHAIR needs at least one caption"));
    }
    let mut m = ChairMetrics {
        captions: samples.len() as u64,
        ..Default::default()
    };
    for s in samples {
        let mentioned = extract_objects(&s.caption, synonyms);
        let bad = mentioned.iter().filter(|o| !s.annotated_objects.contains(*o)).count() as u64;
        m.mentions += mentioned.len() as u64;
        m.hallucinated_mentions += bad;
        if bad > 0 {
            m.hallucinated_captions += 1;
        }
    }
    m.chair_i = if m.mentions == 0 {
        0.0
    } else {
        100.0 * m.hallucinated_mentions as f64 / m.mentions as f64
    };
    m.chair_s = 100.0 * m.hallucinated_captions as f64 / m.captions as f64;
    Ok(m)
}
