use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{Embedding, EmbeddingProvider};
use crate::corpus::WordToken;
use crate::error::{Error, Result};

pub const DEFAULT_LEVELS: [usize; 5] = [1, 2, 3, 4, 5];
pub const DEFAULT_CHARSET: &str = "abcdefghijklmnopqrstuvwxyz0123456789";

/// Pyramidal histogram of characters.
///
/// At split level `s` the word is cut into `s` equal regions; the character
/// at position `k` of an `n`-character word falls into region
/// `floor(k * s / n)`. Each (level, region, character) triple is one binary
/// bin. Characters outside the charset are dropped before embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct PhocEmbedder {
    levels: Vec<usize>,
    charset: Vec<char>,
}

impl Default for PhocEmbedder {
    fn default() -> Self {
        PhocEmbedder {
            levels: DEFAULT_LEVELS.to_vec(),
            charset: DEFAULT_CHARSET.chars().collect(),
        }
    }
}

impl PhocEmbedder {
    pub fn new(levels: Vec<usize>, charset: &str) -> Result<Self> {
        if levels.is_empty() || levels.contains(&0) {
            return Err(Error::InvalidArgument(
                "PHOC levels must be non-empty and positive".into(),
            ));
        }
        let charset: Vec<char> = charset.chars().collect();
        if charset.is_empty() {
            return Err(Error::InvalidArgument("PHOC charset is empty".into()));
        }
        let mut sorted = charset.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != charset.len() {
            return Err(Error::InvalidArgument("PHOC charset has duplicate characters".into()));
        }
        Ok(PhocEmbedder { levels, charset })
    }

    pub fn dim(&self) -> usize {
        self.levels.iter().sum::<usize>() * self.charset.len()
    }

    pub fn embed(&self, word: &str) -> Result<Embedding> {
        let lowered = word.to_lowercase();
        let chars: Vec<usize> = lowered
            .chars()
            .filter_map(|c| self.charset.iter().position(|&x| x == c))
            .collect();
        if chars.is_empty() {
            return Err(Error::Unembeddable(word.to_string()));
        }
        let n = chars.len();
        let alphabet = self.charset.len();
        let mut values = vec![0.0; self.dim()];
        let mut offset = 0;
        for &s in &self.levels {
            for (k, &c) in chars.iter().enumerate() {
                let region = k * s / n;
                values[offset + region * alphabet + c] = 1.0;
            }
            offset += s * alphabet;
        }
        Ok(Embedding::normalized(values))
    }

    /// Clean embedding plus isotropic Gaussian noise of standard deviation
    /// `sigma` per coordinate, renormalized. `sigma == 0` returns the clean
    /// embedding exactly.
    pub fn embed_noisy(&self, word: &str, sigma: f64, seed: u64) -> Result<Embedding> {
        if sigma < 0.0 || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("noise scale {sigma} must be >= 0")));
        }
        let clean = self.embed(word)?;
        if sigma == 0.0 {
            return Ok(clean);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = clean
            .values
            .iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + sigma * z
            })
            .collect();
        Ok(Embedding::normalized(values))
    }

    fn describe(&self) -> String {
        let levels: Vec<String> = self.levels.iter().map(ToString::to_string).collect();
        let charset: String = self.charset.iter().collect();
        format!("phoc(levels={};charset={charset})", levels.join(","))
    }
}

/// Clean PHOC for both text and word images; word images are embedded from
/// their transcription.
impl EmbeddingProvider for PhocEmbedder {
    fn dim(&self) -> usize {
        PhocEmbedder::dim(self)
    }

    fn embed_text(&self, word: &str) -> Result<Embedding> {
        self.embed(word)
    }

    fn embed_word_image(&self, doc_id: &str, word: &WordToken) -> Result<Embedding> {
        let text = word.text.as_deref().ok_or_else(|| Error::MissingTranscription {
            doc_id: doc_id.to_string(),
            word_id: word.word_id,
        })?;
        self.embed(text)
    }

    fn fingerprint(&self) -> String {
        self.describe()
    }
}

/// Simulates the visual-domain gap: text is embedded cleanly, word images
/// get seeded Gaussian noise keyed by (seed, doc id, word id).
#[derive(Debug, Clone)]
pub struct NoisyPhocEmbedder {
    pub phoc: PhocEmbedder,
    pub sigma: f64,
    pub seed: u64,
}

impl NoisyPhocEmbedder {
    pub fn new(phoc: PhocEmbedder, sigma: f64, seed: u64) -> Result<Self> {
        if sigma < 0.0 || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("noise scale {sigma} must be >= 0")));
        }
        Ok(NoisyPhocEmbedder { phoc, sigma, seed })
    }

    fn word_seed(&self, doc_id: &str, word_id: u32) -> u64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(doc_id.as_bytes());
        h.update([0u8]);
        h.update(word_id.to_le_bytes());
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}

impl EmbeddingProvider for NoisyPhocEmbedder {
    fn dim(&self) -> usize {
        self.phoc.dim()
    }

    fn embed_text(&self, word: &str) -> Result<Embedding> {
        self.phoc.embed(word)
    }

    fn embed_word_image(&self, doc_id: &str, word: &WordToken) -> Result<Embedding> {
        let text = word.text.as_deref().ok_or_else(|| Error::MissingTranscription {
            doc_id: doc_id.to_string(),
            word_id: word.word_id,
        })?;
        self.phoc
            .embed_noisy(text, self.sigma, self.word_seed(doc_id, word.word_id))
    }

    fn fingerprint(&self) -> String {
        format!(
            "noisy-{}(sigma={:e};seed={})",
            self.phoc.describe(),
            self.sigma,
            self.seed
        )
    }
}
