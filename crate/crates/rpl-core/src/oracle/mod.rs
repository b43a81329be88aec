//! Model oracle: tokenizer, vocabulary, and the generation/logits/gradient
//! interface the attack engine drives.
//!
//! The built-in implementation is [`ToyModel`], a fixed-window feed-forward
//! language model small enough to train on the fixture corpus in seconds yet
//! differentiable enough to supply exact gradients with respect to one-hot
//! token indicators. Real-model adapters can implement [`ModelOracle`]
//! without touching the attack engine.

mod model;
mod train;

pub use model::{ModelDims, ToyModel, ToyOracle};
pub use train::{train_toy, TrainConfig};

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::TargetResponse;

pub type TokenId = usize;

pub const UNK: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
const RESERVED: [&str; 3] = ["<unk>", "<bos>", "<eos>"];

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("training loss diverged at epoch {epoch}: {loss}")]
    DivergedLoss { epoch: usize, loss: f64 },
    #[error("model file malformed: {0}")]
    BadModelFile(String),
    #[error("vocab file malformed: {0}")]
    BadVocabFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Split text into lowercase word and punctuation tokens.
///
/// Each whitespace-separated piece sheds maximal leading and trailing runs of
/// ASCII punctuation as single-character tokens; the remaining core, which
/// may contain internal punctuation, stays whole. This keeps URLs and dose
/// strings single tokens while separating sentence punctuation.
pub fn word_tokens(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    for piece in text.to_lowercase().split_whitespace() {
        let chars: Vec<char> = piece.chars().collect();
        let mut start = 0;
        let mut end = chars.len();
        while start < end && chars[start].is_ascii_punctuation() {
            start += 1;
        }
        while end > start && chars[end - 1].is_ascii_punctuation() {
            end -= 1;
        }
        if start == end {
            words.extend(chars.iter().map(|c| c.to_string()));
        } else {
            words.extend(chars[..start].iter().map(|c| c.to_string()));
            words.push(chars[start..end].iter().collect());
            words.extend(chars[end..].iter().map(|c| c.to_string()));
        }
    }
    words
}

/// Bidirectional word/id map with reserved ids 0 = UNK, 1 = BOS, 2 = EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    ids: BTreeMap<String, TokenId>,
}

impl Vocab {
    /// Build a vocabulary from texts, assigning ids in first-appearance order
    /// after the reserved entries.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut vocab = Self::empty();
        for text in texts {
            for word in word_tokens(text) {
                vocab.intern(word);
            }
        }
        vocab
    }

    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let mut vocab = Self::empty();
        for word in words {
            vocab.intern(word.to_string());
        }
        vocab
    }

    fn empty() -> Self {
        let words: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let ids = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocab { words, ids }
    }

    fn intern(&mut self, word: String) -> TokenId {
        if let Some(&id) = self.ids.get(&word) {
            return id;
        }
        let id = self.words.len();
        self.words.push(word.clone());
        self.ids.insert(word, id);
        id
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved entries always present
    }

    pub fn id(&self, word: &str) -> Option<TokenId> {
        self.ids.get(word).copied()
    }

    pub fn word(&self, id: TokenId) -> &str {
        &self.words[id]
    }

    pub fn is_reserved(id: TokenId) -> bool {
        id < RESERVED.len()
    }

    /// Tokenize text; unknown words map to UNK.
    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        word_tokens(text)
            .into_iter()
            .map(|w| self.ids.get(&w).copied().unwrap_or(UNK))
            .collect()
    }

    /// Join token words with single spaces.
    pub fn detokenize(&self, tokens: &[TokenId]) -> String {
        tokens
            .iter()
            .map(|&id| self.word(id))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Serialize as a JSON word-to-id object.
    pub fn to_json(&self) -> String {
        let map: BTreeMap<&str, usize> = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.as_str(), i))
            .collect();
        serde_json::to_string_pretty(&map).expect("vocab serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, OracleError> {
        let map: BTreeMap<String, usize> =
            serde_json::from_str(json).map_err(|e| OracleError::BadVocabFile(e.to_string()))?;
        let mut words = vec![String::new(); map.len()];
        for (word, id) in map {
            if id >= words.len() {
                return Err(OracleError::BadVocabFile(format!(
                    "id {id} out of range for {} entries",
                    words.len()
                )));
            }
            words[id] = word;
        }
        for (i, reserved) in RESERVED.iter().enumerate() {
            if words.get(i).map(String::as_str) != Some(*reserved) {
                return Err(OracleError::BadVocabFile(format!(
                    "reserved id {i} must be {reserved}"
                )));
            }
        }
        let ids = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Ok(Vocab { words, ids })
    }
}

/// Dense row-major matrix of scores; used for both logits and gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        assert!(rows.iter().all(|r| r.len() == cols));
        Matrix {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Per-position logits, one row per predicted position.
pub type LogitMatrix = Matrix;
/// d(loss)/d(one-hot), one row per attack-sequence position.
pub type GradientMatrix = Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub seed: u64,
}

impl GenerationConfig {
    pub fn new(temperature: f64, max_new_tokens: usize, seed: u64) -> Self {
        assert!(temperature > 0.0, "temperature must be positive");
        Self {
            temperature,
            max_new_tokens,
            seed,
        }
    }

    /// Greedy decoding: below this threshold sampling degrades to argmax.
    pub const GREEDY_EPSILON: f64 = 1e-6;

    pub fn greedy(max_new_tokens: usize) -> Self {
        Self::new(1e-9, max_new_tokens, 0)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| ((l - max) / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

pub(crate) fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let dart: f64 = rng.gen::<f64>();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if dart < acc {
            return i;
        }
    }
    probs.len() - 1
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Derive a per-iteration generation seed from a base seed (splitmix64).
pub fn derive_seed(base: u64, iteration: u64) -> u64 {
    let mut z = base.wrapping_add(iteration.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The crate-wide seeded RNG (ChaCha8): deterministic across platforms.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generation, scoring, and gradient access to a language model.
///
/// `teacher_logits` returns one row per target position: row `i` holds the
/// logits for the token following `input` extended with the first `i` target
/// tokens (teacher forcing). `grad_onehot` returns the exact gradient of the
/// attack engine's weighted loss with respect to the one-hot indicator of
/// each listed sequence position. Oracles are read-only after construction,
/// so calls may run from several scoring threads at once.
pub trait ModelOracle: Sync {
    fn vocab(&self) -> &Vocab;

    fn generate(&self, input: &[TokenId], config: &GenerationConfig) -> Vec<TokenId>;

    fn teacher_logits(&self, input: &[TokenId], target: &[TokenId]) -> LogitMatrix;

    fn grad_onehot(
        &self,
        input: &[TokenId],
        seq_positions: &[usize],
        target: &TargetResponse,
        crucial_weight: f64,
    ) -> GradientMatrix;
}
