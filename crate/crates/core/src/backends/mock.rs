//! Deterministic stand-ins for the model and the embedder.
//!
//! The brightness-oracle model answers from the 8-bit quantized image:
//!
//! * null prompt: `"a bright image"` if the mean level exceeds the threshold, else `"a dark image"`;
//! * `"Is there a {object} in the image?"`: yes iff the object's marker pixel is painted;
//! * any other prompt mentioning "bright": `"Yes"` / `"No"` by the same mean rule;
//! * anything else: the null caption followed by the painted objects.
//!
//! Marker pixels: object `i` of the vocabulary owns pixel `i` (row-major), and
//! is present iff that pixel is painted [`MARKER_RGB`].

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use crate::backends::{Embedding, ModelResponse, TextEmbedder, VisionModel, MOCK_SCHEME};
use crate::error::{BackendError, Error, Result};
use crate::image::{ImageTensor, CHANNELS};
use crate::metrics::coco::COCO_CATEGORIES;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_EMBED_DIM: usize = 256;
pub const MARKER_RGB: [u8; 3] = [255, 0, 255];

const EMPTY_TOKEN: &str = "<empty>";

/// Query parameters of a `mock://name?k=v&...` URL.
#[derive(Debug, Default)]
pub struct MockParams {
    values: HashMap<String, String>,
}

impl MockParams {
    pub fn parse(url: &str) -> Result<Self> {
        let rest = url
            .strip_prefix(MOCK_SCHEME)
            .ok_or_else(|| Error::Config(format!("not a mock url: {url}")))?;
        let mut values = HashMap::new();
        if let Some((_, query)) = rest.split_once('?') {
            for pair in query.split('&').filter(|p| !p.is_empty()) {
                let (k, v) = pair
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("malformed mock parameter `{pair}`")))?;
                values.insert(k.to_string(), v.to_string());
            }
        }
        Ok(Self { values })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("bad mock parameter {key}={v}")))
            })
            .transpose()
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockRules {
    pub threshold: f64,
    pub vocabulary: Vec<String>,
}

impl Default for MockRules {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            vocabulary: COCO_CATEGORIES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl MockRules {
    pub fn with_threshold(threshold: f64) -> Self {
        Self {
            threshold,
            ..Self::default()
        }
    }

    pub fn from_url(url: &str) -> Result<Self> {
        let params = MockParams::parse(url)?;
        let mut rules = Self::default();
        if let Some(t) = params.get_f64("threshold")? {
            rules.threshold = t;
        }
        Ok(rules)
    }

    pub fn marker_index(&self, object: &str) -> Option<usize> {
        let object = object.trim().to_lowercase();
        self.vocabulary.iter().position(|v| *v == object)
    }

    /// Computes the reply for an 8-bit RGB image.
    pub fn reply(&self, rgb: &[u8], prompt: Option<&str>) -> String {
        let bright = mean_level(rgb) > self.threshold;
        let caption = if bright { "a bright image" } else { "a dark image" };
        let prompt = match prompt.map(str::trim) {
            None | Some("") => return caption.to_string(),
            Some(p) => p.to_lowercase(),
        };
        if let Some(object) = asked_object(&prompt) {
            return if self.object_present(rgb, &object) {
                format!("Yes, there is a {object} in the image.")
            } else {
                format!("No, there is no {object} in the image.")
            };
        }
        if prompt.contains("bright") {
            return if bright { "Yes".into() } else { "No".into() };
        }
        let present: Vec<&str> = self
            .vocabulary
            .iter()
            .filter(|v| self.object_present(rgb, v))
            .map(String::as_str)
            .collect();
        match present.as_slice() {
            [] => caption.to_string(),
            [only] => format!("{caption} with a {only}"),
            [init @ .., last] => format!("{caption} with a {} and a {last}", init.join(", a ")),
        }
    }

    fn object_present(&self, rgb: &[u8], object: &str) -> bool {
        match self.marker_index(object) {
            Some(i) => rgb.get(i * CHANNELS..i * CHANNELS + CHANNELS) == Some(&MARKER_RGB[..]),
            None => false,
        }
    }

    /// Paints marker pixels for `objects` onto a uniform background.
    pub fn render_objects<S: AsRef<str>>(
        &self,
        objects: &[S],
        height: usize,
        width: usize,
        background: u8,
    ) -> Result<ImageTensor> {
        let mut rgb = vec![background; height * width * CHANNELS];
        for object in objects {
            let object = object.as_ref();
            let i = self
                .marker_index(object)
                .ok_or_else(|| Error::validation(format!("`{object}` is not in the mock vocabulary")))?;
            if i >= height * width {
                return Err(Error::validation(format!(
                    "image {height}x{width} too small for marker {i}"
                )));
            }
            rgb[i * CHANNELS..i * CHANNELS + CHANNELS].copy_from_slice(&MARKER_RGB);
        }
        ImageTensor::from_rgb8(height, width, &rgb)
    }
}

fn mean_level(rgb: &[u8]) -> f64 {
    if rgb.is_empty() {
        return 0.0;
    }
    rgb.iter().map(|&b| f64::from(b)).sum::<f64>() / (255.0 * rgb.len() as f64)
}

fn asked_object(prompt: &str) -> Option<String> {
    let start = ["is there an ", "is there a "]
        .iter()
        .find_map(|p| prompt.find(p).map(|i| i + p.len()))?;
    let rest = &prompt[start..];
    let end = rest
        .find(" in the image")
        .or_else(|| rest.find('?'))
        .unwrap_or(rest.len());
    let object = rest[..end].trim();
    (!object.is_empty()).then(|| object.to_string())
}

/// In-process brightness-oracle model.
#[derive(Debug)]
pub struct MockVisionModel {
    id: String,
    rules: MockRules,
    calls: AtomicU64,
}

impl MockVisionModel {
    pub fn new(id: impl Into<String>, rules: MockRules) -> Self {
        Self {
            id: id.into(),
            rules,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl VisionModel for MockVisionModel {
    fn id(&self) -> &str {
        &self.id
    }

    fn respond(&self, image: &ImageTensor, prompt: Option<&str>) -> Result<ModelResponse, BackendError> {
        let start = Instant::now();
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = self.rules.reply(&image.to_rgb8(), prompt);
        Ok(ModelResponse {
            raw: serde_json::json!({ "mock": true, "content": text }),
            text,
            latency: start.elapsed(),
        })
    }

    fn max_concurrency(&self) -> usize {
        8
    }
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn fnv1a(seed: u64, token: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in seed.to_le_bytes().iter().chain(token.as_bytes()) {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Hashed bag-of-words embedder: one count per token in bucket `fnv1a(seed, token) % dim`.
#[derive(Debug)]
pub struct HashedEmbedder {
    id: String,
    dim: usize,
    seed: u64,
    calls: AtomicU64,
}

impl HashedEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be >= 1".into()));
        }
        Ok(Self {
            id: format!("hashed-{dim}"),
            dim,
            seed,
            calls: AtomicU64::new(0),
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(self.seed, token) % self.dim as u64) as usize
    }

    /// Unnormalized bucket counts.
    pub fn raw_vector(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let tokens = tokenize(text);
        if tokens.is_empty() {
            v[self.bucket(EMPTY_TOKEN)] = 1.0;
        }
        for t in tokens {
            v[self.bucket(&t)] += 1.0;
        }
        v
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl TextEmbedder for HashedEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, text: &str) -> Result<Embedding, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Embedding::normalized(self.raw_vector(text))
    }
}
