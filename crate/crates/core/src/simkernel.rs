//! Set-to-set similarity: the maximum pairwise cosine between two sentence
//! vector sets, batched into matrices, plus multiple-choice scoring.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedder::{EmbeddingSet, EmbeddingVector};

/// Similarity assigned when either set is empty; below every real cosine.
pub const SENTINEL: f64 = -2.0;

const MAGIC: &[u8; 8] = b"MAXSIMM1";

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("classification needs at least 2 choices, got {0}")]
    TooFewChoices(usize),
    #[error("corrupt similarity matrix file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, SimError> {
    if a.dim() != b.dim() {
        return Err(SimError::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    let dot: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

/// Maximum cosine over all sentence pairs, or [`SENTINEL`] if a set is empty.
pub fn set_similarity(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<f64, SimError> {
    if a.is_empty() || b.is_empty() {
        return Ok(SENTINEL);
    }
    let mut best = f64::NEG_INFINITY;
    for x in &a.vectors {
        for y in &b.vectors {
            best = best.max(cosine(x, y)?);
        }
    }
    Ok(best)
}

/// Dense row-major similarities. Values are held at f32 precision so that a
/// matrix read back from disk equals the one that was written.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub query_ids: Vec<String>,
    pub db_ids: Vec<String>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    query_ids: Vec<String>,
    db_ids: Vec<String>,
    rows: usize,
    cols: usize,
}

impl SimilarityMatrix {
    /// Build from row-major values; panics if the shape does not match.
    pub fn from_values(query_ids: Vec<String>, db_ids: Vec<String>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), query_ids.len() * db_ids.len(), "matrix shape mismatch");
        let values = values.into_iter().map(|v| f64::from(v as f32)).collect();
        SimilarityMatrix { query_ids, db_ids, values }
    }

    pub fn rows(&self) -> usize {
        self.query_ids.len()
    }

    pub fn cols(&self) -> usize {
        self.db_ids.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn query_index(&self, id: &str) -> Option<usize> {
        self.query_ids.iter().position(|q| q == id)
    }

    pub fn db_index(&self, id: &str) -> Option<usize> {
        self.db_ids.iter().position(|d| d == id)
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let header = serde_json::to_vec(&Header {
            query_ids: self.query_ids.clone(),
            db_ids: self.db_ids.clone(),
            rows: self.rows(),
            cols: self.cols(),
        })
        .expect("header serializes");
        w.write_all(MAGIC)?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, SimError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SimError::Corrupt("bad magic".into()));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut header)?;
        let h: Header = serde_json::from_slice(&header).map_err(|e| SimError::Corrupt(e.to_string()))?;
        if h.rows != h.query_ids.len() || h.cols != h.db_ids.len() {
            return Err(SimError::Corrupt("header dims disagree with id lists".into()));
        }
        let mut raw = Vec::new();
        r.read_to_end(&mut raw)?;
        if raw.len() != h.rows * h.cols * 4 {
            return Err(SimError::Corrupt(format!(
                "expected {} value bytes, found {}",
                h.rows * h.cols * 4,
                raw.len()
            )));
        }
        let values = raw.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))).collect();
        Ok(SimilarityMatrix { query_ids: h.query_ids, db_ids: h.db_ids, values })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// All query × database set similarities, rows computed in parallel.
pub fn similarity_matrix(queries: &[EmbeddingSet], db: &[EmbeddingSet]) -> Result<SimilarityMatrix, SimError> {
    let cols = db.len();
    let mut values = vec![0.0; queries.len() * cols];
    if cols > 0 {
        values.par_chunks_mut(cols).zip(queries.par_iter()).try_for_each(|(row, q)| -> Result<(), SimError> {
            for (slot, d) in row.iter_mut().zip(db) {
                *slot = set_similarity(q, d)?;
            }
            Ok(())
        })?;
    }
    Ok(SimilarityMatrix::from_values(
        queries.iter().map(|s| s.sample_id.clone()).collect(),
        db.iter().map(|s| s.sample_id.clone()).collect(),
        values,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub index: usize,
    pub scores: Vec<f64>,
    /// The description was empty, so every choice scored the sentinel.
    pub unscored: bool,
}

/// Pick the choice most similar to the description; ties go to the lowest index.
pub fn classify(description: &EmbeddingSet, choices: &[EmbeddingSet]) -> Result<Classification, SimError> {
    if choices.len() < 2 {
        return Err(SimError::TooFewChoices(choices.len()));
    }
    let scores = choices.iter().map(|c| set_similarity(description, c)).collect::<Result<Vec<_>, _>>()?;
    let mut index = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[index] {
            index = i;
        }
    }
    Ok(Classification { index, scores, unscored: description.is_empty() })
}
