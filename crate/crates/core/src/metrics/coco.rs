//! COCO-style annotation ingestion and the category/synonym vocabulary.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 80 COCO detection categories, in category-id order.
pub const COCO_CATEGORIES: [&str; 80] = [
    "person",
    "bicycle",
    "car",
    "motorcycle",
    "airplane",
    "bus",
    "train",
    "truck",
    "boat",
    "traffic light",
    "fire hydrant",
    "stop sign",
    "parking meter",
    "bench",
    "bird",
    "cat",
    "dog",
    "horse",
    "sheep",
    "cow",
    "elephant",
    "bear",
    "zebra",
    "giraffe",
    "backpack",
    "umbrella",
    "handbag",
    "tie",
    "suitcase",
    "frisbee",
    "skis",
    "snowboard",
    "sports ball",
    "kite",
    "baseball bat",
    "baseball glove",
    "skateboard",
    "surfboard",
    "tennis racket",
    "bottle",
    "wine glass",
    "cup",
    "fork",
    "knife",
    "spoon",
    "bowl",
    "banana",
    "apple",
    "sandwich",
    "orange",
    "broccoli",
    "carrot",
    "hot dog",
    "pizza",
    "donut",
    "cake",
    "chair",
    "couch",
    "potted plant",
    "bed",
    "dining table",
    "toilet",
    "tv",
    "laptop",
    "mouse",
    "remote",
    "keyboard",
    "cell phone",
    "microwave",
    "oven",
    "toaster",
    "sink",
    "refrigerator",
    "book",
    "clock",
    "vase",
    "scissors",
    "teddy bear",
    "hair drier",
    "toothbrush",
];

const DEFAULT_SYNONYMS: &str = include_str!("../../data/coco_synonyms.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedImage {
    pub file_name: Option<String>,
    pub objects: BTreeSet<String>,
}

/// Image id → set of present categories, plus the category vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub vocabulary: Vec<String>,
    pub images: BTreeMap<String, AnnotatedImage>,
}

#[derive(Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Deserialize)]
struct CocoImage {
    id: serde_json::Value,
    #[serde(default)]
    file_name: Option<String>,
}

#[derive(Deserialize)]
struct CocoAnnotation {
    image_id: serde_json::Value,
    category_id: u64,
}

#[derive(Deserialize)]
struct CocoCategory {
    id: u64,
    name: String,
}

fn id_string(v: &serde_json::Value) -> Result<String> {
    match v {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        other => Err(Error::validation(format!("unsupported image id {other}"))),
    }
}

impl AnnotationSet {
    pub fn from_pairs<I, S, O>(images: I) -> Self
    where
        I: IntoIterator<Item = (S, Vec<O>)>,
        S: Into<String>,
        O: Into<String>,
    {
        let mut set = AnnotationSet::default();
        let mut vocab = BTreeSet::new();
        for (id, objects) in images {
            let objects: BTreeSet<String> = objects.into_iter().map(Into::into).collect();
            vocab.extend(objects.iter().cloned());
            set.images.insert(
                id.into(),
                AnnotatedImage {
                    file_name: None,
                    objects,
                },
            );
        }
        set.vocabulary = vocab.into_iter().collect();
        set
    }

    pub fn with_vocabulary<S: Into<String>>(mut self, vocabulary: impl IntoIterator<Item = S>) -> Self {
        self.vocabulary = vocabulary.into_iter().map(Into::into).collect();
        self
    }

    /// Parses an instances JSON (`images`, `annotations`, `categories`).
    pub fn from_coco_reader(reader: impl Read) -> Result<Self> {
        let file: CocoFile = serde_json::from_reader(reader)?;
        let mut categories: Vec<&CocoCategory> = file.categories.iter().collect();
        categories.sort_by_key(|c| c.id);
        let names: HashMap<u64, String> = categories
            .iter()
            .map(|c| (c.id, c.name.trim().to_lowercase()))
            .collect();
        let mut images = BTreeMap::new();
        for img in &file.images {
            images.insert(
                id_string(&img.id)?,
                AnnotatedImage {
                    file_name: img.file_name.clone(),
                    objects: BTreeSet::new(),
                },
            );
        }
        for ann in &file.annotations {
            let image_id = id_string(&ann.image_id)?;
            let name = names.get(&ann.category_id).ok_or_else(|| {
                Error::validation(format!("annotation refers to unknown category {}", ann.category_id))
            })?;
            images
                .get_mut(&image_id)
                .ok_or_else(|| Error::validation(format!("annotation refers to unknown image {image_id}")))?
                .objects
                .insert(name.clone());
        }
        Ok(Self {
            vocabulary: categories.iter().map(|c| c.name.trim().to_lowercase()).collect(),
            images,
        })
    }

    pub fn from_coco_file(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::from_coco_reader(std::io::BufReader::new(file))
    }

    /// Number of images containing each category.
    pub fn frequencies(&self) -> BTreeMap<&str, usize> {
        let mut freq: BTreeMap<&str, usize> = self.vocabulary.iter().map(|v| (v.as_str(), 0)).collect();
        for img in self.images.values() {
            for o in &img.objects {
                *freq.entry(o.as_str()).or_default() += 1;
            }
        }
        freq
    }

    /// Number of images containing both categories, for every unordered pair.
    pub fn cooccurrence(&self) -> HashMap<(&str, &str), usize> {
        let mut counts = HashMap::new();
        for img in self.images.values() {
            for a in &img.objects {
                for b in &img.objects {
                    if a != b {
                        *counts.entry((a.as_str(), b.as_str())).or_default() += 1;
                    }
                }
            }
        }
        counts
    }
}

/// Category → synonym phrases, used for caption object extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynonymMap {
    categories: BTreeMap<String, Vec<String>>,
    phrases: HashMap<String, String>,
    max_words: usize,
}

impl SynonymMap {
    /// Parses `category, synonym, synonym...` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut categories: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut items = line.split(',').map(normalize_phrase).filter(|s| !s.is_empty());
            let category = items
                .next()
                .ok_or_else(|| Error::validation(format!("synonym line {} is empty", lineno + 1)))?;
            let entry = categories.entry(category.clone()).or_default();
            if !entry.contains(&category) {
                entry.push(category.clone());
            }
            for syn in items {
                if !entry.contains(&syn) {
                    entry.push(syn);
                }
            }
        }
        let mut phrases = HashMap::new();
        for (category, syns) in &categories {
            for syn in syns {
                if let Some(prev) = phrases.insert(syn.clone(), category.clone()) {
                    if prev != *category {
                        return Err(Error::validation(format!(
                            "synonym `{syn}` maps to both `{prev}` and `{category}`"
                        )));
                    }
                }
            }
        }
        let max_words = phrases.keys().map(|p| p.split(' ').count()).max().unwrap_or(1);
        Ok(Self {
            categories,
            phrases,
            max_words,
        })
    }

    pub fn coco_default() -> Self {
        Self::parse(DEFAULT_SYNONYMS).expect("bundled synonym file is valid")
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.categories.keys().map(String::as_str)
    }

    /// Fails unless every listed category has an entry.
    pub fn check_covers<S: AsRef<str>>(&self, vocabulary: &[S]) -> Result<()> {
        let missing: Vec<&str> = vocabulary
            .iter()
            .map(AsRef::as_ref)
            .filter(|c| !self.categories.contains_key(*c))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::validation(format!("synonym map lacks categories: {missing:?}")))
        }
    }

    pub(crate) fn lookup(&self, phrase: &str) -> Option<&str> {
        self.phrases.get(phrase).map(String::as_str)
    }

    pub(crate) fn max_words(&self) -> usize {
        self.max_words
    }
}

fn normalize_phrase(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}
