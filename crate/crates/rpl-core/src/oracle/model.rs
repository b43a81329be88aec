//! The built-in differentiable language model.
//!
//! A fixed-window MLP: the last `context` token embeddings (zero-padded on
//! the left) are concatenated, passed through one tanh hidden layer, and
//! projected to vocabulary logits. No biases, no attention. Small enough to
//! backpropagate by hand, which is what `grad_onehot` does.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use super::{
    argmax, sample_index, seeded_rng, softmax, GenerationConfig, GradientMatrix, LogitMatrix,
    Matrix, ModelOracle, OracleError, TokenId, Vocab, EOS,
};
use crate::attack::{loss_row_weights, TargetResponse};

/// Network dimensions: embedding width, context window, hidden width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub embed: usize,
    pub context: usize,
    pub hidden: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            embed: 32,
            context: 8,
            hidden: 64,
        }
    }
}

/// Fixed-window feed-forward next-token model.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub vocab_size: usize,
    pub dims: ModelDims,
    /// `vocab_size x embed`, row-major.
    pub embedding: Vec<f64>,
    /// `(context*embed) x hidden`, row-major.
    pub w_hidden: Vec<f64>,
    /// `hidden x vocab_size`, row-major.
    pub w_out: Vec<f64>,
}

/// Cached activations of one forward position.
pub(crate) struct ForwardPass {
    pub x: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

impl ToyModel {
    pub fn zeros(vocab_size: usize, dims: ModelDims) -> Self {
        ToyModel {
            vocab_size,
            dims,
            embedding: vec![0.0; vocab_size * dims.embed],
            w_hidden: vec![0.0; dims.context * dims.embed * dims.hidden],
            w_out: vec![0.0; dims.hidden * vocab_size],
        }
    }

    /// Seeded uniform init in [-scale, scale], filled in declaration order.
    pub fn seeded(vocab_size: usize, dims: ModelDims, seed: u64, scale: f64) -> Self {
        let mut model = Self::zeros(vocab_size, dims);
        let mut rng = seeded_rng(seed);
        for w in model
            .embedding
            .iter_mut()
            .chain(model.w_hidden.iter_mut())
            .chain(model.w_out.iter_mut())
        {
            *w = rng.gen_range(-scale..scale);
        }
        model
    }

    pub fn embedding_row(&self, token: TokenId) -> &[f64] {
        let d = self.dims.embed;
        &self.embedding[token * d..(token + 1) * d]
    }

    /// Token at each context slot for predicting position `pos` of `stream`;
    /// `None` slots are left padding embedded as zero vectors. The most
    /// recent token always occupies the last slot.
    fn context_slots(&self, stream: &[TokenId], pos: usize) -> Vec<Option<TokenId>> {
        let c = self.dims.context;
        (0..c)
            .map(|j| {
                let idx = pos as i64 - c as i64 + j as i64;
                (idx >= 0).then(|| stream[idx as usize])
            })
            .collect()
    }

    pub(crate) fn forward(&self, stream: &[TokenId], pos: usize) -> ForwardPass {
        let ModelDims { embed: d, context: c, .. } = self.dims;
        let mut x = vec![0.0; c * d];
        for (j, slot) in self.context_slots(stream, pos).into_iter().enumerate() {
            if let Some(token) = slot {
                debug_assert!(token < self.vocab_size, "token id within vocab");
                x[j * d..(j + 1) * d].copy_from_slice(self.embedding_row(token));
            }
        }
        let (hidden, logits) = self.forward_from_x(&x);
        ForwardPass { x, hidden, logits }
    }

    /// Forward pass from an explicit input vector (used by tests that probe
    /// mixed embeddings).
    pub fn forward_from_x(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        debug_assert_eq!(x.len(), self.dims.context * self.dims.embed);
        let h = self.dims.hidden;
        let mut hidden = vec![0.0; h];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.w_hidden[i * h..(i + 1) * h];
            for (j, &w) in row.iter().enumerate() {
                hidden[j] += xi * w;
            }
        }
        for v in &mut hidden {
            *v = v.tanh();
        }
        let mut logits = vec![0.0; self.vocab_size];
        for (j, &hj) in hidden.iter().enumerate() {
            let row = &self.w_out[j * self.vocab_size..(j + 1) * self.vocab_size];
            for (v, &w) in row.iter().enumerate() {
                logits[v] += hj * w;
            }
        }
        (hidden, logits)
    }

    /// Logits for the next token after `stream`.
    pub fn next_logits(&self, stream: &[TokenId]) -> Vec<f64> {
        self.forward(stream, stream.len()).logits
    }

    /// Teacher-forced logits: row `i` is conditioned on
    /// `input ++ target[..i]`.
    pub fn teacher_logits(&self, input: &[TokenId], target: &[TokenId]) -> LogitMatrix {
        let mut stream = Vec::with_capacity(input.len() + target.len());
        stream.extend_from_slice(input);
        stream.extend_from_slice(target);
        let rows: Vec<Vec<f64>> = (0..target.len())
            .map(|i| self.forward(&stream, input.len() + i).logits)
            .collect();
        Matrix::from_rows(rows)
    }

    /// Autoregressive sampling from `softmax(logits / T)`, stopping at EOS
    /// (excluded from the output) or after `max_new_tokens`.
    pub fn generate(&self, input: &[TokenId], config: &GenerationConfig) -> Vec<TokenId> {
        assert!(config.temperature > 0.0, "temperature must be positive");
        let mut rng = seeded_rng(config.seed);
        let mut stream = input.to_vec();
        let mut out = Vec::new();
        for _ in 0..config.max_new_tokens {
            let logits = self.next_logits(&stream);
            let token = if config.temperature < GenerationConfig::GREEDY_EPSILON {
                argmax(&logits)
            } else {
                sample_index(&softmax(&logits, config.temperature), &mut rng)
            };
            if token == EOS {
                break;
            }
            stream.push(token);
            out.push(token);
        }
        out
    }

    /// Exact gradient of the weighted loss w.r.t. the one-hot indicator of
    /// each position in `seq_positions`.
    ///
    /// Treating the embedding fed at position `p` as the mixture
    /// `x_p = sum_v alpha_v E[v]` with `alpha` one-hot, the gradient entry
    /// `(p, v)` is the inner product of `E[v]` with the loss gradient at that
    /// input slot, accumulated over every teacher-forced row whose context
    /// window covers `p`.
    pub fn grad_onehot(
        &self,
        input: &[TokenId],
        seq_positions: &[usize],
        target: &TargetResponse,
        crucial_weight: f64,
    ) -> GradientMatrix {
        let ModelDims { embed: d, context: c, hidden: h } = self.dims;
        assert!(
            seq_positions.iter().all(|&p| p < input.len()),
            "sequence positions must lie inside the input"
        );
        let mut stream = Vec::with_capacity(input.len() + target.tokens.len());
        stream.extend_from_slice(input);
        stream.extend_from_slice(&target.tokens);

        let row_weights = loss_row_weights(target, crucial_weight);
        let mut grad = Matrix::zeros(seq_positions.len(), self.vocab_size);

        for (i, (&target_token, &weight)) in
            target.tokens.iter().zip(&row_weights).enumerate()
        {
            if weight == 0.0 {
                continue;
            }
            let pos = input.len() + i;
            // Positions a context slot can reference: pos - c .. pos.
            // Skip rows whose window cannot touch any sequence position.
            let window_start = pos.saturating_sub(c);
            if !seq_positions
                .iter()
                .any(|&p| p >= window_start && p < pos)
            {
                continue;
            }
            let fwd = self.forward(&stream, pos);
            let probs = softmax(&fwd.logits, 1.0);

            // d loss / d logits = weight * (softmax - onehot)
            let mut dlogits = probs;
            dlogits[target_token] -= 1.0;
            for g in &mut dlogits {
                *g *= weight;
            }
            // back through the output layer
            let mut dhidden = vec![0.0; h];
            for (j, dh) in dhidden.iter_mut().enumerate() {
                let row = &self.w_out[j * self.vocab_size..(j + 1) * self.vocab_size];
                *dh = row.iter().zip(&dlogits).map(|(w, g)| w * g).sum();
            }
            // through tanh
            for (dh, hj) in dhidden.iter_mut().zip(&fwd.hidden) {
                *dh *= 1.0 - hj * hj;
            }
            // back through the hidden layer to the input vector
            let mut dx = vec![0.0; c * d];
            for (ix, dxi) in dx.iter_mut().enumerate() {
                let row = &self.w_hidden[ix * h..(ix + 1) * h];
                *dxi = row.iter().zip(&dhidden).map(|(w, g)| w * g).sum();
            }
            // scatter slot gradients onto the sequence positions they read
            for (j, slot) in self.context_slots(&stream, pos).into_iter().enumerate() {
                let Some(_) = slot else { continue };
                let abs = (pos + j).checked_sub(c).expect("non-padding slot");
                let Some(row_idx) = seq_positions.iter().position(|&p| p == abs) else {
                    continue;
                };
                let slot_grad = &dx[j * d..(j + 1) * d];
                let grad_row = grad.row_mut(row_idx);
                for (g, emb) in grad_row.iter_mut().zip(self.embedding.chunks_exact(d)) {
                    *g += emb.iter().zip(slot_grad).map(|(e, sg)| e * sg).sum::<f64>();
                }
            }
        }
        grad
    }

    /// Serialize as `[V, d, c, h]` little-endian u32 header followed by the
    /// row-major f64 weight arrays (embedding, hidden, output).
    pub fn save(&self, path: &Path) -> Result<(), OracleError> {
        let mut out = Vec::with_capacity(16 + 8 * self.embedding.len());
        for dim in [
            self.vocab_size,
            self.dims.embed,
            self.dims.context,
            self.dims.hidden,
        ] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for w in self
            .embedding
            .iter()
            .chain(&self.w_hidden)
            .chain(&self.w_out)
        {
            out.extend_from_slice(&w.to_le_bytes());
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(&out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, OracleError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 16 {
            return Err(OracleError::BadModelFile("missing header".into()));
        }
        let dim_at = |i: usize| {
            u32::from_le_bytes(bytes[i * 4..(i + 1) * 4].try_into().unwrap()) as usize
        };
        let (v, d, c, h) = (dim_at(0), dim_at(1), dim_at(2), dim_at(3));
        let dims = ModelDims {
            embed: d,
            context: c,
            hidden: h,
        };
        let counts = [v * d, c * d * h, h * v];
        let expected = 16 + 8 * counts.iter().sum::<usize>();
        if bytes.len() != expected {
            return Err(OracleError::BadModelFile(format!(
                "expected {expected} bytes for V={v} d={d} c={c} h={h}, found {}",
                bytes.len()
            )));
        }
        let mut offset = 16;
        let mut read_array = |count: usize| {
            let mut arr = Vec::with_capacity(count);
            for _ in 0..count {
                arr.push(f64::from_le_bytes(
                    bytes[offset..offset + 8].try_into().unwrap(),
                ));
                offset += 8;
            }
            arr
        };
        let model = ToyModel {
            vocab_size: v,
            dims,
            embedding: read_array(counts[0]),
            w_hidden: read_array(counts[1]),
            w_out: read_array(counts[2]),
        };
        if !model
            .embedding
            .iter()
            .chain(&model.w_hidden)
            .chain(&model.w_out)
            .all(|w| w.is_finite())
        {
            return Err(OracleError::BadModelFile("non-finite weights".into()));
        }
        Ok(model)
    }
}

/// A trained model paired with its vocabulary: the built-in [`ModelOracle`].
#[derive(Debug, Clone)]
pub struct ToyOracle {
    pub model: ToyModel,
    pub vocab: Vocab,
}

impl ToyOracle {
    pub fn new(model: ToyModel, vocab: Vocab) -> Self {
        assert_eq!(
            model.vocab_size,
            vocab.len(),
            "model and vocab sizes must agree"
        );
        ToyOracle { model, vocab }
    }

    pub fn load(model_path: &Path, vocab_path: &Path) -> Result<Self, OracleError> {
        let model = ToyModel::load(model_path)?;
        let vocab = Vocab::from_json(&std::fs::read_to_string(vocab_path)?)?;
        if model.vocab_size != vocab.len() {
            return Err(OracleError::BadModelFile(format!(
                "model vocab size {} does not match vocab file size {}",
                model.vocab_size,
                vocab.len()
            )));
        }
        Ok(ToyOracle { model, vocab })
    }
}

impl ModelOracle for ToyOracle {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn generate(&self, input: &[TokenId], config: &GenerationConfig) -> Vec<TokenId> {
        self.model.generate(input, config)
    }

    fn teacher_logits(&self, input: &[TokenId], target: &[TokenId]) -> LogitMatrix {
        self.model.teacher_logits(input, target)
    }

    fn grad_onehot(
        &self,
        input: &[TokenId],
        seq_positions: &[usize],
        target: &TargetResponse,
        crucial_weight: f64,
    ) -> GradientMatrix {
        self.model
            .grad_onehot(input, seq_positions, target, crucial_weight)
    }
}
