use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Embedding, EmbeddingProvider};
use crate::binio::{put_string, Reader};
use crate::corpus::WordToken;
use crate::error::{Error, Result};

const RENORMALIZE_TOLERANCE: f64 = 1e-6;

/// Externally computed embeddings keyed by `t:<word>` (text) and
/// `i:<doc_id>:<word_id>` (word images).
///
/// Binary layout, little-endian: `dim: u32`, `count: u64`, then `count` keys
/// each as `len: u32` + UTF-8 bytes, then `count * dim` `f32` values in key
/// order. A JSON fallback `{"dim": D, "entries": {key: [floats]}}` is read
/// from files with a `.json` extension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingStore {
    dim: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct JsonStore {
    dim: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

pub fn text_key(word: &str) -> String {
    format!("t:{word}")
}

pub fn image_key(doc_id: &str, word_id: u32) -> String {
    format!("i:{doc_id}:{word_id}")
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, key: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: values.len(),
            });
        }
        self.entries.insert(key.into(), values);
        Ok(())
    }

    pub fn insert_text(&mut self, word: &str, values: Vec<f64>) -> Result<()> {
        self.insert(text_key(word), values)
    }

    pub fn insert_image(&mut self, doc_id: &str, word_id: u32, values: Vec<f64>) -> Result<()> {
        self.insert(image_key(doc_id, word_id), values)
    }

    /// The stored vector, as loaded.
    pub fn vector(&self, key: &str) -> Option<&[f64]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    fn lookup(&self, key: &str) -> Result<Embedding> {
        self.entries
            .get(key)
            .map(|v| Embedding::normalized(v.clone()))
            .ok_or_else(|| Error::MissingEmbedding(key.to_string()))
    }

    fn from_entries(path: &Path, dim: usize, entries: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        let mut store = EmbeddingStore::new(dim);
        for (key, mut v) in entries {
            if v.len() != dim {
                return Err(Error::format(
                    path,
                    format!("vector {key:?} has dimension {} but the store declares {dim}", v.len()),
                ));
            }
            let norm = crate::linalg::norm(&v);
            if (norm - 1.0).abs() > RENORMALIZE_TOLERANCE {
                crate::linalg::normalize_in_place(&mut v);
            }
            store.entries.insert(key, v);
        }
        Ok(store)
    }

    pub fn save_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for key in self.entries.keys() {
            put_string(&mut buf, key);
        }
        for v in self.entries.values() {
            for &x in v {
                buf.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let body = serde_json::to_vec(&JsonStore {
            dim: self.dim,
            entries: self.entries.clone(),
        })?;
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    fn load_binary(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let fail = |m: String| Error::format(path, m);
        let mut r = Reader::new(&bytes);
        let dim = r.u32().map_err(fail)? as usize;
        let count = r.u64().map_err(fail)? as usize;
        let keys = (0..count)
            .map(|_| r.string())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(fail)?;
        let mut entries = BTreeMap::new();
        for key in keys {
            let v = r.f32s(dim).map_err(fail)?.into_iter().map(f64::from).collect();
            if entries.insert(key.clone(), v).is_some() {
                return Err(fail(format!("duplicate key {key:?}")));
            }
        }
        r.finish().map_err(fail)?;
        Self::from_entries(path, dim, entries)
    }

    fn load_json(path: &Path) -> Result<Self> {
        let body = fs::read(path).map_err(|e| Error::io(path, e))?;
        let store: JsonStore = serde_json::from_slice(&body).map_err(|e| Error::format(path, e.to_string()))?;
        Self::from_entries(path, store.dim, store.entries)
    }
}

/// Loads a store; `.json` files use the JSON layout, anything else the
/// binary one.
pub fn load_embedding_store(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        EmbeddingStore::load_json(path)
    } else {
        EmbeddingStore::load_binary(path)
    }
}

impl EmbeddingProvider for EmbeddingStore {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, word: &str) -> Result<Embedding> {
        self.lookup(&text_key(word))
    }

    /// Falls back to the text vector of the transcription when no image
    /// vector is stored.
    fn embed_word_image(&self, doc_id: &str, word: &WordToken) -> Result<Embedding> {
        let key = image_key(doc_id, word.word_id);
        if self.entries.contains_key(&key) {
            return self.lookup(&key);
        }
        match &word.text {
            Some(text) if self.entries.contains_key(&text_key(text)) => self.lookup(&text_key(text)),
            _ => Err(Error::MissingEmbedding(key)),
        }
    }

    fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        for (k, v) in &self.entries {
            h.update(k.as_bytes());
            h.update([0u8]);
            for x in v {
                h.update(x.to_le_bytes());
            }
        }
        format!("store(dim={};sha256={})", self.dim, hex::encode(h.finalize()))
    }
}
