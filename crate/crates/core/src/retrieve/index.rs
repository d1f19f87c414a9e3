use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::{Encoder, StageConfig};
use crate::binio::{put_string, Reader};
use crate::corpus::Document;
use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};

/// One aggregate vector per document, stored as `f32`.
///
/// File layout, little-endian: fingerprint (`u32` length + UTF-8), `dim: u32`,
/// `count: u64`, `count` document ids (`u32` length + UTF-8), then
/// `count * dim` `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentIndex {
    pub fingerprint: String,
    pub dim: usize,
    pub doc_ids: Vec<String>,
    pub vectors: Vec<Vec<f32>>,
}

/// Embeds, projects and aggregates the content words of every document.
/// Documents without content words get the zero vector.
pub fn build_index(
    documents: &[Document],
    provider: &dyn EmbeddingProvider,
    stage: &StageConfig,
) -> Result<DocumentIndex> {
    stage.validate(provider)?;
    let encoder = Encoder::new(provider, stage);
    let vectors = documents
        .par_iter()
        .map(|doc| {
            encoder
                .document_vector(doc)
                .map(|v| v.values.iter().map(|&x| x as f32).collect::<Vec<f32>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DocumentIndex {
        fingerprint: stage.fingerprint(provider),
        dim: encoder.output_dim(),
        doc_ids: documents.iter().map(|d| d.doc_id.clone()).collect(),
        vectors,
    })
}

impl DocumentIndex {
    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn check_fingerprint(&self, expected: &str) -> Result<()> {
        if self.fingerprint == expected {
            Ok(())
        } else {
            Err(Error::FingerprintMismatch {
                expected: expected.to_string(),
                found: self.fingerprint.clone(),
            })
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        put_string(&mut buf, &self.fingerprint);
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.doc_ids.len() as u64).to_le_bytes());
        for id in &self.doc_ids {
            put_string(&mut buf, id);
        }
        for v in &self.vectors {
            for x in v {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        buf
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Reads an index; refuses it when `expected_fingerprint` is given and
    /// differs from the stored one.
    pub fn load(path: impl AsRef<Path>, expected_fingerprint: Option<&str>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let index = Self::from_bytes(&bytes).map_err(|m| Error::format(path, m))?;
        if let Some(fp) = expected_fingerprint {
            index.check_fingerprint(fp)?;
        }
        Ok(index)
    }

    fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader::new(bytes);
        let fingerprint = r.string()?;
        let dim = r.u32()? as usize;
        let count = r.u64()? as usize;
        let doc_ids = (0..count)
            .map(|_| r.string())
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let vectors = (0..count)
            .map(|_| r.f32s(dim))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        r.finish()?;
        Ok(DocumentIndex {
            fingerprint,
            dim,
            doc_ids,
            vectors,
        })
    }
}
