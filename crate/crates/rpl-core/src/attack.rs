//! Gradient-guided attack sequence crafting.
//!
//! The engine iteratively mutates a fixed-length token sequence embedded in
//! the augmented request: generate and test for success, score the weighted
//! loss against the targeted response, take the gradient with respect to
//! one-hot token indicators, propose `k` single-token mutations drawn from
//! each position's most-negative gradient shortlist, and keep the best of
//! the candidates and the current sequence. Because the current sequence
//! stays in the selection pool, the best-so-far loss never increases.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doc::Document;
use crate::inject::{inject, verify_invisibility, InjectError, InjectionPoint, InvisibleFeature};
use crate::oracle::{
    derive_seed, GenerationConfig, GradientMatrix, LogitMatrix, ModelOracle, TokenId, Vocab,
};
use crate::prompter::AugmentedRequest;

/// The attacker's desired response with its crucial positions marked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetResponse {
    pub tokens: Vec<TokenId>,
    pub crucial_mask: Vec<bool>,
    /// The essential substring whose appearance in a response counts as
    /// success.
    pub crucial_string: String,
}

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("logit rows {rows} do not match target length {target_len}")]
    ShapeMismatch { rows: usize, target_len: usize },
    #[error("crucial string {0:?} not found in target tokens")]
    CrucialNotInTarget(String),
    #[error("target must be non-empty with at least one crucial position")]
    EmptyTarget,
    #[error(transparent)]
    Inject(#[from] InjectError),
}

impl TargetResponse {
    pub fn new(
        tokens: Vec<TokenId>,
        crucial_mask: Vec<bool>,
        crucial_string: String,
    ) -> Result<Self, AttackError> {
        if tokens.is_empty()
            || tokens.len() != crucial_mask.len()
            || !crucial_mask.iter().any(|&m| m)
        {
            return Err(AttackError::EmptyTarget);
        }
        Ok(TargetResponse {
            tokens,
            crucial_mask,
            crucial_string,
        })
    }

    /// Tokenize a response sentence and mark every occurrence of the crucial
    /// substring's token run. The target ends with EOS (never crucial).
    pub fn from_text(vocab: &Vocab, response: &str, crucial: &str) -> Result<Self, AttackError> {
        if crucial.trim().is_empty() {
            return Err(AttackError::EmptyTarget);
        }
        let mut tokens = vocab.tokenize(response);
        tokens.push(crate::oracle::EOS);
        let needle = vocab.tokenize(crucial);
        let mut mask = vec![false; tokens.len()];
        if !needle.is_empty() {
            for start in 0..tokens.len().saturating_sub(needle.len() - 1) {
                if tokens[start..start + needle.len()] == needle[..] {
                    mask[start..start + needle.len()]
                        .iter_mut()
                        .for_each(|m| *m = true);
                }
            }
        }
        if !mask.iter().any(|&m| m) {
            return Err(AttackError::CrucialNotInTarget(crucial.to_string()));
        }
        TargetResponse::new(tokens, mask, crucial.to_string())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Per-row weights of the weighted loss:
/// `(1-w)/len` for every row plus `w/crucial_count` on crucial rows, so that
/// the weighted sum equals `(1-w)*CE_all + w*CE_crucial` with both CE terms
/// being means.
pub fn loss_row_weights(target: &TargetResponse, w: f64) -> Vec<f64> {
    let len = target.tokens.len() as f64;
    let crucial_count = target.crucial_mask.iter().filter(|&&m| m).count() as f64;
    target
        .crucial_mask
        .iter()
        .map(|&m| (1.0 - w) / len + if m { w / crucial_count } else { 0.0 })
        .collect()
}

/// Weighted cross-entropy of teacher-forced logits against the target:
/// `CE_all * (1-w) + CE_crucial * w`.
pub fn weighted_loss(
    logits: &LogitMatrix,
    target: &TargetResponse,
    w: f64,
) -> Result<f64, AttackError> {
    if logits.rows != target.tokens.len() {
        return Err(AttackError::ShapeMismatch {
            rows: logits.rows,
            target_len: target.tokens.len(),
        });
    }
    let weights = loss_row_weights(target, w);
    let mut loss = 0.0;
    for (i, (&token, &weight)) in target.tokens.iter().zip(&weights).enumerate() {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = row.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
        loss += weight * (log_z - row[token]);
    }
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Candidate sequences per iteration.
    pub k: usize,
    /// Crucial-loss weight `w` in `[0, 1]`.
    pub crucial_weight: f64,
    pub max_step: usize,
    /// Gradient shortlist size per position.
    pub top_b: usize,
    /// Attack sequence length in tokens.
    pub init_length: usize,
    /// Token the sequence is initialized with.
    pub filler_token: TokenId,
    pub seed: u64,
    /// Worker threads for candidate scoring; 1 scores sequentially. Results
    /// are ordered by candidate index either way.
    pub jobs: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            k: 32,
            crucial_weight: 0.5,
            max_step: 500,
            top_b: 64,
            init_length: 32,
            filler_token: crate::oracle::UNK,
            seed: 0,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub success: bool,
    pub seq: Vec<TokenId>,
    pub seq_text: String,
    pub iterations: usize,
    /// Best-so-far weighted loss per iteration; non-increasing.
    pub loss_trace: Vec<f64>,
    /// Detokenized response of the final iteration.
    pub response: String,
}

/// True iff the crucial string occurs in the normalized response.
pub fn success_check(response: &str, target: &TargetResponse) -> bool {
    if target.crucial_string.is_empty() {
        return false;
    }
    normalize(response).contains(&normalize(&target.crucial_string))
}

fn normalize(text: &str) -> String {
    text.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Propose `k` sequences, each differing from `seq` at exactly one uniformly
/// chosen position, the replacement drawn uniformly from that position's
/// `top_b` tokens ranked by most-negative gradient (current token and
/// reserved ids excluded).
pub fn mutate_candidates(
    seq: &[TokenId],
    grad: &GradientMatrix,
    k: usize,
    top_b: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<TokenId>> {
    assert_eq!(grad.rows, seq.len(), "gradient rows must match seq length");
    assert!(k >= 1 && top_b >= 1);
    let mut shortlists: Vec<Option<Vec<TokenId>>> = vec![None; seq.len()];
    let mut candidates = Vec::with_capacity(k);
    for _ in 0..k {
        let mut position = rng.gen_range(0..seq.len());
        // A position can lack replacements only in degenerate vocabularies;
        // fall back to scanning every position before giving up.
        for attempt in 0..=seq.len() {
            if !shortlist(seq, grad, top_b, position, &mut shortlists).is_empty() {
                break;
            }
            assert!(
                attempt < seq.len(),
                "no position admits a replacement token"
            );
            position = (position + 1) % seq.len();
        }
        let list = shortlists[position].as_deref().expect("computed above");
        let replacement = list[rng.gen_range(0..list.len())];
        let mut candidate = seq.to_vec();
        candidate[position] = replacement;
        candidates.push(candidate);
    }
    candidates
}

fn shortlist<'a>(
    seq: &[TokenId],
    grad: &GradientMatrix,
    top_b: usize,
    position: usize,
    cache: &'a mut [Option<Vec<TokenId>>],
) -> &'a [TokenId] {
    if cache[position].is_none() {
        let row = grad.row(position);
        let mut allowed: Vec<TokenId> = (0..row.len())
            .filter(|&v| !Vocab::is_reserved(v) && v != seq[position])
            .collect();
        allowed.sort_by(|&a, &b| {
            row[a]
                .partial_cmp(&row[b])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        allowed.truncate(top_b);
        cache[position] = Some(allowed);
    }
    cache[position].as_deref().unwrap()
}

/// Pick the minimum-loss sequence among the candidates and the current one.
/// Ties go to the current sequence, then to the lowest candidate index.
/// Returns the winner and its loss.
pub fn select(
    current: (&[TokenId], f64),
    candidates: &[Vec<TokenId>],
    losses: &[f64],
) -> (Vec<TokenId>, f64) {
    debug_assert_eq!(candidates.len(), losses.len());
    let (mut best_seq, mut best_loss) = (current.0.to_vec(), current.1);
    for (candidate, &loss) in candidates.iter().zip(losses) {
        if loss < best_loss {
            best_seq = candidate.clone();
            best_loss = loss;
        }
    }
    (best_seq, best_loss)
}

fn score_candidates<F>(candidates: &[Vec<TokenId>], jobs: usize, scorer: F) -> Vec<f64>
where
    F: Fn(&[TokenId]) -> f64 + Sync,
{
    if jobs <= 1 || candidates.len() <= 1 {
        return candidates.iter().map(|c| scorer(c)).collect();
    }
    let chunk = candidates.len().div_ceil(jobs);
    let mut out = vec![0.0; candidates.len()];
    std::thread::scope(|scope| {
        for (cands, slots) in candidates.chunks(chunk).zip(out.chunks_mut(chunk)) {
            let scorer = &scorer;
            scope.spawn(move || {
                for (c, slot) in cands.iter().zip(slots) {
                    *slot = scorer(c);
                }
            });
        }
    });
    out
}

/// Run the crafting loop against a prefix/suffix token context.
///
/// The sequence sits between `prefix` and `suffix`; each iteration generates
/// a response (per-iteration derived seed), checks success, and otherwise
/// mutates under the weighted-loss gradient. Non-convergence is not an
/// error: the result simply carries `success = false`.
pub fn optimize_sequence(
    oracle: &dyn ModelOracle,
    prefix: &[TokenId],
    suffix: &[TokenId],
    target: &TargetResponse,
    config: &AttackConfig,
    gen: &GenerationConfig,
) -> AttackResult {
    assert!(config.k >= 1 && config.top_b >= 1 && config.init_length >= 1);
    assert!((0.0..=1.0).contains(&config.crucial_weight));
    let w = config.crucial_weight;
    let mut rng = crate::oracle::seeded_rng(config.seed);
    let mut seq = vec![config.filler_token; config.init_length];
    let seq_positions: Vec<usize> = (prefix.len()..prefix.len() + seq.len()).collect();

    let assemble = |seq: &[TokenId]| {
        let mut input = Vec::with_capacity(prefix.len() + seq.len() + suffix.len());
        input.extend_from_slice(prefix);
        input.extend_from_slice(seq);
        input.extend_from_slice(suffix);
        input
    };
    let score = |seq: &[TokenId]| {
        let input = assemble(seq);
        let logits = oracle.teacher_logits(&input, &target.tokens);
        weighted_loss(&logits, target, w).expect("teacher logits match target shape")
    };

    let mut loss_trace: Vec<f64> = Vec::new();
    let mut current_loss: Option<f64> = None;
    let mut response = String::new();
    let mut iterations = 0;

    while iterations < config.max_step {
        iterations += 1;
        let input = assemble(&seq);
        let gen_cfg = gen.with_seed(derive_seed(gen.seed, iterations as u64));
        let response_tokens = oracle.generate(&input, &gen_cfg);
        response = oracle.vocab().detokenize(&response_tokens);

        let loss = current_loss.unwrap_or_else(|| score(&seq));
        loss_trace.push(loss);
        debug_assert!(
            loss_trace.windows(2).all(|w| w[1] <= w[0]),
            "best-so-far loss must not increase"
        );

        if success_check(&response, target) {
            return AttackResult {
                success: true,
                seq_text: oracle.vocab().detokenize(&seq),
                seq,
                iterations,
                loss_trace,
                response,
            };
        }

        let grad = oracle.grad_onehot(&input, &seq_positions, target, w);
        let candidates = mutate_candidates(&seq, &grad, config.k, config.top_b, &mut rng);
        let losses = score_candidates(&candidates, config.jobs, score);
        let (next_seq, next_loss) = select((&seq, loss), &candidates, &losses);
        seq = next_seq;
        current_loss = Some(next_loss);
    }

    AttackResult {
        success: false,
        seq_text: oracle.vocab().detokenize(&seq),
        seq,
        iterations,
        loss_trace,
        response,
    }
}

/// Algorithm entry point against an assembled augmented request: the
/// sequence is embedded at the character offset `pos` (which must fall in
/// the content slot) and optimized in place.
pub fn craft_sequence(
    oracle: &dyn ModelOracle,
    areq: &AugmentedRequest,
    pos: usize,
    target: &TargetResponse,
    config: &AttackConfig,
    gen: &GenerationConfig,
) -> AttackResult {
    assert!(
        pos >= areq.content_range.start && pos <= areq.content_range.end,
        "injection position must map into the content range"
    );
    let vocab = oracle.vocab();
    let prefix = vocab.tokenize(&areq.text[..pos]);
    let suffix = vocab.tokenize(&areq.text[pos..]);
    optimize_sequence(oracle, &prefix, &suffix, target, config, gen)
}

/// Final crafting step: hide the optimized sequence in the original document.
/// The crafted document is verified invisible before being returned.
pub fn craft_document(
    orig: &Document,
    seq: &[TokenId],
    vocab: &Vocab,
    feature: InvisibleFeature,
    point: &InjectionPoint,
) -> Result<Document, AttackError> {
    if seq.is_empty() {
        return Ok(orig.clone());
    }
    let payload = vocab.detokenize(seq);
    let crafted = inject(orig, &payload, point, feature)?;
    assert!(
        verify_invisibility(orig, &crafted, &payload),
        "crafted document must render identically to the original"
    );
    Ok(crafted)
}
