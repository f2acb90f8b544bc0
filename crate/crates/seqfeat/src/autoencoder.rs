//! The action-sequence autoencoder.
//!
//! Encoding embeds each action of a sequence as a K-vector (rows of the
//! embedding matrix), runs the encoder RNN over the embedded sequence and
//! keeps the last output as the latent representation. Decoding replicates
//! that K-vector T times, runs the decoder RNN, and maps each output to a
//! categorical distribution over actions with a multinomial logit head whose
//! last category is the reference (implicit zero parameters). The
//! reconstruction loss is the mean negative log-probability of the realized
//! actions.

use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, softmax_row, Matrix};
use crate::rng::Rng;
use crate::rnn::{rnn_backward, rnn_forward, CellKind, RnnParams};

/// Probabilities are floored at this value inside the log so the loss stays
/// finite; the analytic gradients use the exact softmax.
pub const PROB_CLAMP: f64 = 1e-12;

/// The finite action set with a stable label-to-index bijection.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ActionVocabulary {
    actions: Vec<String>,
    index: HashMap<String, usize>,
}

impl ActionVocabulary {
    /// Build from an ordered list of distinct, non-empty labels (N >= 2).
    pub fn new(actions: Vec<String>) -> Result<Self> {
        if actions.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "vocabulary needs at least 2 actions, got {}",
                actions.len()
            )));
        }
        let mut index = HashMap::with_capacity(actions.len());
        for (i, a) in actions.iter().enumerate() {
            if a.is_empty() {
                return Err(Error::InvalidInput("empty action label".into()));
            }
            if index.insert(a.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate action label {a:?}")));
            }
        }
        Ok(ActionVocabulary { actions, index })
    }

    /// Upper-case letter vocabulary A.., ending in Z: A, B, ..., Z for
    /// n = 26; A, B, C, Z for n = 4. Supports 2..=26 actions.
    pub fn letters(n: usize) -> Result<Self> {
        if !(2..=26).contains(&n) {
            return Err(Error::InvalidInput(format!(
                "letter vocabulary supports 2..=26 actions, got {n}"
            )));
        }
        let mut labels: Vec<String> = (0..n - 1).map(|i| ((b'A' + i as u8) as char).to_string()).collect();
        labels.push("Z".to_string());
        ActionVocabulary::new(labels)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn label(&self, i: usize) -> &str {
        &self.actions[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.actions
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }
}

impl TryFrom<Vec<String>> for ActionVocabulary {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        ActionVocabulary::new(v)
    }
}

impl From<ActionVocabulary> for Vec<String> {
    fn from(v: ActionVocabulary) -> Vec<String> {
        v.actions
    }
}

/// One response process, stored as 0-based action indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSequence {
    pub id: String,
    steps: Vec<usize>,
}

impl ActionSequence {
    pub fn new(id: impl Into<String>, steps: Vec<usize>) -> Result<Self> {
        let id = id.into();
        if steps.is_empty() {
            return Err(Error::EmptySequence(format!("sequence {id:?} has no steps")));
        }
        Ok(ActionSequence { id, steps })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    /// Check every index against a vocabulary size.
    pub fn validate_against(&self, n_actions: usize) -> Result<()> {
        if let Some(&bad) = self.steps.iter().find(|&&s| s >= n_actions) {
            return Err(Error::VocabularyMismatch(format!(
                "sequence {:?} uses action index {bad}, vocabulary has {n_actions} actions",
                self.id
            )));
        }
        Ok(())
    }

    /// Render as labels.
    pub fn labels<'a>(&self, vocab: &'a ActionVocabulary) -> Vec<&'a str> {
        self.steps.iter().map(|&i| vocab.label(i)).collect()
    }
}

/// All trainable parameters of the autoencoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderParams {
    /// N x K embedding matrix; row j is the latent vector of action j.
    pub embedding: Matrix,
    pub encoder: RnnParams,
    pub decoder: RnnParams,
    /// Multinomial-logit biases for categories 1..N-1 (category N is the
    /// reference with implicit zero parameters).
    pub mlm_bias: Vec<f64>,
    /// (N-1) x K multinomial-logit weights.
    pub mlm_weights: Matrix,
}

impl AutoencoderParams {
    /// Fresh parameters: embedding uniform on [-0.05, 0.05], RNN weights
    /// uniform on [-1/sqrt(K), 1/sqrt(K)], MLM weights and biases zero so
    /// initial reconstructions start near uniform.
    pub fn init(cell: CellKind, n_actions: usize, k: usize, rng: &mut Rng) -> Result<Self> {
        if n_actions < 2 {
            return Err(Error::InvalidInput("autoencoder needs at least 2 actions".into()));
        }
        if k == 0 {
            return Err(Error::InvalidInput("hidden dimension must be positive".into()));
        }
        let mut embedding = Matrix::zeros(n_actions, k);
        for v in embedding.data_mut() {
            *v = rng.random_range(-0.05..0.05);
        }
        let encoder = RnnParams::init(cell, k, rng);
        let decoder = RnnParams::init(cell, k, rng);
        Ok(AutoencoderParams {
            embedding,
            encoder,
            decoder,
            mlm_bias: vec![0.0; n_actions - 1],
            mlm_weights: Matrix::zeros(n_actions - 1, k),
        })
    }

    /// All-zero parameters with the same shapes.
    pub fn zeros_like(&self) -> Self {
        AutoencoderParams {
            embedding: Matrix::zeros(self.embedding.rows(), self.embedding.cols()),
            encoder: RnnParams::zeros(self.encoder.cell, self.encoder.hidden_dim),
            decoder: RnnParams::zeros(self.decoder.cell, self.decoder.hidden_dim),
            mlm_bias: vec![0.0; self.mlm_bias.len()],
            mlm_weights: Matrix::zeros(self.mlm_weights.rows(), self.mlm_weights.cols()),
        }
    }

    pub fn n_actions(&self) -> usize {
        self.embedding.rows()
    }

    pub fn k(&self) -> usize {
        self.embedding.cols()
    }

    pub fn cell(&self) -> CellKind {
        self.encoder.cell
    }

    pub fn param_count(&self) -> usize {
        self.embedding.rows() * self.embedding.cols()
            + self.encoder.param_count()
            + self.decoder.param_count()
            + self.mlm_bias.len()
            + self.mlm_weights.rows() * self.mlm_weights.cols()
    }

    /// Visit every parameter in a fixed order: embedding, encoder, decoder,
    /// MLM biases, MLM weights.
    pub fn visit(&self, f: &mut impl FnMut(f64)) {
        for &v in self.embedding.data() {
            f(v);
        }
        self.encoder.visit(f);
        self.decoder.visit(f);
        for &v in &self.mlm_bias {
            f(v);
        }
        for &v in self.mlm_weights.data() {
            f(v);
        }
    }

    /// Mutable visit in the same order as [`AutoencoderParams::visit`].
    pub fn visit_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        for v in self.embedding.data_mut() {
            f(v);
        }
        self.encoder.visit_mut(f);
        self.decoder.visit_mut(f);
        for v in &mut self.mlm_bias {
            f(v);
        }
        for v in self.mlm_weights.data_mut() {
            f(v);
        }
    }

    /// Copy all parameters into a flat vector (visit order).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(&mut |v| out.push(v));
        out
    }

    /// Overwrite all parameters from a flat vector (visit order).
    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::InvalidInput(format!(
                "flat vector has {} entries, expected {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut i = 0;
        self.visit_mut(&mut |v| {
            *v = flat[i];
            i += 1;
        });
        Ok(())
    }
}

/// A decoded sequence: per-step categorical distributions and the loss.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    /// T x N matrix; row t is the distribution of the action at step t.
    pub probs: Matrix,
    pub loss: f64,
}

/// Embed a sequence: X = S E, i.e. row t of X is the embedding row of the
/// action at step t.
fn embed(params: &AutoencoderParams, seq: &ActionSequence) -> Result<Matrix> {
    seq.validate_against(params.n_actions())?;
    let k = params.k();
    let mut x = Matrix::zeros(seq.len(), k);
    for (t, &action) in seq.steps().iter().enumerate() {
        x.row_mut(t).copy_from_slice(params.embedding.row(action));
    }
    Ok(x)
}

/// Latent representation of a sequence: the last output of the encoder RNN
/// applied to the embedded sequence, starting from the zero state.
pub fn encode(params: &AutoencoderParams, seq: &ActionSequence) -> Result<Vec<f64>> {
    let x = embed(params, seq)?;
    let trace = rnn_forward(&params.encoder, &x, &vec![0.0; params.k()])?;
    Ok(trace.last_output().to_vec())
}

/// Per-step action distributions decoded from a latent vector, for a target
/// length of `t_len` steps.
pub fn decode(params: &AutoencoderParams, theta: &[f64], t_len: usize) -> Result<Matrix> {
    if t_len == 0 {
        return Err(Error::EmptySequence("decode with target length 0".into()));
    }
    let k = params.k();
    if theta.len() != k {
        return Err(Error::InvalidInput(format!(
            "latent vector has length {}, expected {k}",
            theta.len()
        )));
    }
    let mut replicated = Matrix::zeros(t_len, k);
    for t in 0..t_len {
        replicated.row_mut(t).copy_from_slice(theta);
    }
    let trace = rnn_forward(&params.decoder, &replicated, &vec![0.0; k])?;
    mlm_probs(params, trace.outputs())
}

/// Apply the multinomial-logit head to each decoder output row.
fn mlm_probs(params: &AutoencoderParams, outputs: &Matrix) -> Result<Matrix> {
    let n = params.n_actions();
    let t_len = outputs.rows();
    let mut probs = Matrix::zeros(t_len, n);
    let mut logits = vec![0.0; n];
    for t in 0..t_len {
        let y = outputs.row(t);
        for j in 0..n - 1 {
            logits[j] = params.mlm_bias[j] + dot(y, params.mlm_weights.row(j));
        }
        logits[n - 1] = 0.0; // reference category
        let row = softmax_row(&logits)?;
        probs.row_mut(t).copy_from_slice(&row);
    }
    Ok(probs)
}

/// Mean negative log-probability of the realized actions.
///
/// Probabilities are clamped at [`PROB_CLAMP`] inside the log, so the result
/// is finite (and at most -ln(PROB_CLAMP)) even for degenerate rows.
pub fn reconstruction_loss(seq: &ActionSequence, probs: &Matrix) -> Result<f64> {
    if probs.rows() != seq.len() {
        return Err(Error::InvalidInput(format!(
            "probs has {} rows, sequence {:?} has {} steps",
            probs.rows(),
            seq.id,
            seq.len()
        )));
    }
    let n = probs.cols();
    let mut total = 0.0;
    for (t, &action) in seq.steps().iter().enumerate() {
        if action >= n {
            return Err(Error::VocabularyMismatch(format!(
                "sequence {:?} uses action index {action}, probs have {n} columns",
                seq.id
            )));
        }
        total -= probs.get(t, action).max(PROB_CLAMP).ln();
    }
    Ok(total / seq.len() as f64)
}

/// Encode, decode and score one sequence.
pub fn reconstruct(params: &AutoencoderParams, seq: &ActionSequence) -> Result<Reconstruction> {
    let theta = encode(params, seq)?;
    let probs = decode(params, &theta, seq.len())?;
    let loss = reconstruction_loss(seq, &probs)?;
    Ok(Reconstruction { probs, loss })
}

/// Reconstruction loss of one sequence (forward pass only).
pub fn sequence_loss(params: &AutoencoderParams, seq: &ActionSequence) -> Result<f64> {
    Ok(reconstruct(params, seq)?.loss)
}

/// Loss and exact gradients of the reconstruction loss with respect to every
/// parameter, by backpropagation through the decode-encode-embed chain.
pub fn autoencoder_grad(
    params: &AutoencoderParams,
    seq: &ActionSequence,
) -> Result<(f64, AutoencoderParams)> {
    let k = params.k();
    let n = params.n_actions();
    let t_len = seq.len();

    let x = embed(params, seq)?;
    let enc_trace = rnn_forward(&params.encoder, &x, &vec![0.0; k])?;
    let theta = enc_trace.last_output().to_vec();

    let mut replicated = Matrix::zeros(t_len, k);
    for t in 0..t_len {
        replicated.row_mut(t).copy_from_slice(&theta);
    }
    let dec_trace = rnn_forward(&params.decoder, &replicated, &vec![0.0; k])?;
    let probs = mlm_probs(params, dec_trace.outputs())?;
    let loss = reconstruction_loss(seq, &probs)?;

    let mut grads = params.zeros_like();
    let inv_t = 1.0 / t_len as f64;

    // Softmax cross-entropy: d loss / d logit_{t,j} = (p_{t,j} - 1{j=s_t}) / T
    // for the free categories j < N (the reference logit is fixed at zero).
    // From there, the head's parameter gradients and d loss / d y_t.
    let mut dec_out_grads = Matrix::zeros(t_len, k);
    for t in 0..t_len {
        let y = dec_trace.outputs().row(t);
        let realized = seq.steps()[t];
        for j in 0..n - 1 {
            let mut dl = probs.get(t, j) * inv_t;
            if j == realized {
                dl -= inv_t;
            }
            if dl == 0.0 {
                continue;
            }
            grads.mlm_bias[j] += dl;
            let wrow = grads.mlm_weights.row_mut(j);
            for (g, &yi) in wrow.iter_mut().zip(y) {
                *g += dl * yi;
            }
            let dy = dec_out_grads.row_mut(t);
            for (d, &w) in dy.iter_mut().zip(params.mlm_weights.row(j)) {
                *d += dl * w;
            }
        }
    }

    let (dec_grads, dec_input_grads) = rnn_backward(&params.decoder, &dec_trace, &dec_out_grads)?;
    grads.decoder = dec_grads;

    // Every decoder input row is theta, so d loss / d theta is the sum of the
    // decoder's per-step input gradients; it enters the encoder at step T.
    let mut dtheta = vec![0.0; k];
    for t in 0..t_len {
        for (d, &g) in dtheta.iter_mut().zip(dec_input_grads.row(t)) {
            *d += g;
        }
    }
    let mut enc_out_grads = Matrix::zeros(t_len, k);
    enc_out_grads.row_mut(t_len - 1).copy_from_slice(&dtheta);

    let (enc_grads, enc_input_grads) = rnn_backward(&params.encoder, &enc_trace, &enc_out_grads)?;
    grads.encoder = enc_grads;

    // X = S E: the gradient of embedding row j accumulates the input
    // gradients of every step where action j occurs; absent actions get zero.
    for (t, &action) in seq.steps().iter().enumerate() {
        let row = grads.embedding.row_mut(action);
        for (g, &d) in row.iter_mut().zip(enc_input_grads.row(t)) {
            *g += d;
        }
    }

    Ok((loss, grads))
}
