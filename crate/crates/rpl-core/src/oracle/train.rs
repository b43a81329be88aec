//! Seeded full-batch gradient descent on next-token cross-entropy.

use super::{softmax, ModelDims, OracleError, ToyModel, TokenId};

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub dims: ModelDims,
    /// Half-width of the uniform weight init.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 0.1,
            seed: 7,
            dims: ModelDims::default(),
            init_scale: 0.1,
        }
    }
}

/// Train a [`ToyModel`] on `(prompt, completion)` token pairs.
///
/// Plain deterministic gradient descent: every epoch accumulates the mean
/// cross-entropy gradient over all completion positions of all pairs, then
/// applies one update. Returns the model and the per-epoch mean loss curve
/// (entry 0 is the loss of the seeded init).
pub fn train_toy(
    vocab_size: usize,
    corpus: &[(Vec<TokenId>, Vec<TokenId>)],
    config: &TrainConfig,
) -> Result<(ToyModel, Vec<f64>), OracleError> {
    assert!(!corpus.is_empty(), "training corpus must be non-empty");
    let mut model = ToyModel::seeded(vocab_size, config.dims, config.seed, config.init_scale);
    let total_rows: usize = corpus.iter().map(|(_, completion)| completion.len()).sum();
    assert!(total_rows > 0, "corpus has no completion tokens");

    let mut losses = Vec::with_capacity(config.epochs + 1);
    let mut grads = Gradients::zeros(&model);
    for epoch in 0..=config.epochs {
        grads.clear();
        let mut loss_sum = 0.0;
        for (prompt, completion) in corpus {
            let mut stream = Vec::with_capacity(prompt.len() + completion.len());
            stream.extend_from_slice(prompt);
            stream.extend_from_slice(completion);
            for (i, &target) in completion.iter().enumerate() {
                let pos = prompt.len() + i;
                loss_sum += backward_row(&model, &stream, pos, target, total_rows, &mut grads);
            }
        }
        let mean_loss = loss_sum / total_rows as f64;
        if !mean_loss.is_finite() {
            return Err(OracleError::DivergedLoss {
                epoch,
                loss: mean_loss,
            });
        }
        losses.push(mean_loss);
        if epoch == config.epochs {
            break; // final loss recorded, no further update
        }
        grads.apply(&mut model, config.learning_rate);
    }
    Ok((model, losses))
}

struct Gradients {
    embedding: Vec<f64>,
    w_hidden: Vec<f64>,
    w_out: Vec<f64>,
}

impl Gradients {
    fn zeros(model: &ToyModel) -> Self {
        Gradients {
            embedding: vec![0.0; model.embedding.len()],
            w_hidden: vec![0.0; model.w_hidden.len()],
            w_out: vec![0.0; model.w_out.len()],
        }
    }

    fn clear(&mut self) {
        self.embedding.iter_mut().for_each(|g| *g = 0.0);
        self.w_hidden.iter_mut().for_each(|g| *g = 0.0);
        self.w_out.iter_mut().for_each(|g| *g = 0.0);
    }

    fn apply(&self, model: &mut ToyModel, lr: f64) {
        for (w, g) in model.embedding.iter_mut().zip(&self.embedding) {
            *w -= lr * g;
        }
        for (w, g) in model.w_hidden.iter_mut().zip(&self.w_hidden) {
            *w -= lr * g;
        }
        for (w, g) in model.w_out.iter_mut().zip(&self.w_out) {
            *w -= lr * g;
        }
    }
}

/// Forward + backward for one teacher-forced row; returns the row's loss
/// (not yet averaged) and accumulates `d(mean loss)` into `grads`.
fn backward_row(
    model: &ToyModel,
    stream: &[TokenId],
    pos: usize,
    target: TokenId,
    total_rows: usize,
    grads: &mut Gradients,
) -> f64 {
    let ModelDims { embed: d, context: c, hidden: h } = model.dims;
    let v_count = model.vocab_size;
    let fwd = model.forward(stream, pos);
    let probs = softmax(&fwd.logits, 1.0);
    let loss = -probs[target].max(f64::MIN_POSITIVE).ln();

    // d(mean loss)/d logits
    let scale = 1.0 / total_rows as f64;
    let mut dlogits = probs;
    dlogits[target] -= 1.0;
    for g in &mut dlogits {
        *g *= scale;
    }

    // output layer: w_out[j][v] += hidden[j] * dlogits[v]
    let mut dhidden = vec![0.0; h];
    for (j, (dh, &hj)) in dhidden.iter_mut().zip(&fwd.hidden).enumerate() {
        let out_row = &mut grads.w_out[j * v_count..(j + 1) * v_count];
        let w_row = &model.w_out[j * v_count..(j + 1) * v_count];
        let mut acc = 0.0;
        for ((g, &w), &dl) in out_row.iter_mut().zip(w_row).zip(&dlogits) {
            *g += hj * dl;
            acc += w * dl;
        }
        *dh = acc * (1.0 - hj * hj);
    }

    // hidden layer and embeddings
    let slots: Vec<Option<TokenId>> = (0..c)
        .map(|j| {
            let idx = pos as i64 - c as i64 + j as i64;
            (idx >= 0).then(|| stream[idx as usize])
        })
        .collect();
    for (i, &xi) in fwd.x.iter().enumerate() {
        let w_row = &model.w_hidden[i * h..(i + 1) * h];
        let g_row = &mut grads.w_hidden[i * h..(i + 1) * h];
        let mut dxi = 0.0;
        for (j, &dh) in dhidden.iter().enumerate() {
            g_row[j] += xi * dh;
            dxi += w_row[j] * dh;
        }
        let slot = i / d;
        if let Some(token) = slots[slot] {
            grads.embedding[token * d + (i % d)] += dxi;
        }
    }
    loss
}
