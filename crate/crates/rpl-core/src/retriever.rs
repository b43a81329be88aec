//! Toy embedding and exact cosine retrieval.
//!
//! The embedder is a hashed term-frequency vector over character 3-grams of
//! lowercased words (whole word when shorter), dimension 256, L2-normalized.
//! It is fully deterministic across processes: the bucket of a gram is its
//! FNV-1a 64-bit hash modulo the dimension. Long injected payloads shift
//! real mass around, so injection *can* perturb retrieval, which is exactly
//! the failure mode the harness measures.

use serde::{Deserialize, Serialize};

use crate::chunker::Chunk;

/// Embedding dimension of the toy embedder.
pub const EMBED_DIM: usize = 256;

pub type EmbeddingVector = Vec<f64>;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x1_0000_01b3);
    }
    hash
}

/// Embed text as a unit-norm hashed trigram frequency vector.
///
/// Empty or gram-free text embeds to the all-zero vector.
pub fn embed(text: &str) -> EmbeddingVector {
    let mut counts = vec![0.0f64; EMBED_DIM];
    let lower = text.to_lowercase();
    for word in lower.split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() < 3 {
            let bucket = (fnv1a(word.as_bytes()) % EMBED_DIM as u64) as usize;
            counts[bucket] += 1.0;
        } else {
            for gram in chars.windows(3) {
                let g: String = gram.iter().collect();
                let bucket = (fnv1a(g.as_bytes()) % EMBED_DIM as u64) as usize;
                counts[bucket] += 1.0;
            }
        }
    }
    let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm > 0.0 {
        for c in &mut counts {
            *c /= norm;
        }
    }
    counts
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoreEntry {
    pub id: usize,
    pub vector: EmbeddingVector,
    pub text: String,
    #[serde(skip)]
    pub chunk: Option<Chunk>,
}

/// Immutable in-memory vector store with exact cosine ranking.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct VectorStore {
    pub entries: Vec<StoreEntry>,
}

/// Embed and index chunks, one entry per chunk in insertion order.
pub fn index(chunks: &[Chunk]) -> VectorStore {
    VectorStore {
        entries: chunks
            .iter()
            .enumerate()
            .map(|(id, chunk)| StoreEntry {
                id,
                vector: embed(&chunk.text),
                text: chunk.text.clone(),
                chunk: Some(chunk.clone()),
            })
            .collect(),
    }
}

/// A ranked retrieval hit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hit {
    pub id: usize,
    pub score: f64,
    pub text: String,
}

/// Rank store entries by descending cosine similarity to the query, ties
/// broken by ascending id. Returns at most `top_k` hits.
pub fn retrieve(store: &VectorStore, query: &str, top_k: usize) -> Vec<Hit> {
    assert!(top_k >= 1, "top_k must be at least 1");
    let q = embed(query);
    let mut scored: Vec<Hit> = store
        .entries
        .iter()
        .map(|e| Hit {
            id: e.id,
            score: cosine(&q, &e.vector),
            text: e.text.clone(),
        })
        .collect();
    scored.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.id.cmp(&b.id))
    });
    scored.truncate(top_k);
    scored
}

impl VectorStore {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("store serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        Ok(VectorStore {
            entries: serde_json::from_str(json)?,
        })
    }
}
