//! Training procedures for the autoencoder: plain SGD over the whole
//! dataset, SGD with validation-based early stopping, and k-fold
//! cross-validation for choosing the latent dimension K.
//!
//! Every stochastic choice (initialization, splits, permutations, sampling)
//! flows from the single config seed, so identical configs produce identical
//! results bitwise.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{autoencoder_grad, sequence_loss, ActionSequence, AutoencoderParams};
use crate::error::{Error, Result};
use crate::optim::{Optimizer, OptimizerKind};
use crate::rng::{derive_seed, rng_from_seed};
use crate::rnn::CellKind;

/// Tags for deriving sub-seeds; values are arbitrary but fixed.
const TAG_CV_SPLIT: u64 = 0xc5;
const TAG_CV_TRAIN: u64 = 0xc6;

/// Configuration shared by the training procedures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub cell: CellKind,
    /// Latent dimension (embedding width and RNN hidden width).
    pub k: usize,
    /// Step size.
    pub alpha: f64,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    /// Fraction of the dataset held out for early stopping, in (0, 1).
    pub validation_fraction: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(cell: CellKind, k: usize, seed: u64) -> Self {
        TrainConfig {
            cell,
            k,
            alpha: 0.001,
            optimizer: OptimizerKind::adam_default(),
            epochs: 100,
            validation_fraction: 0.10,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be positive".into()));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "step size must be >= 0, got {}",
                self.alpha
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "validation fraction must be in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// Per-epoch record: mean pre-update loss over the epoch's updates and, when
/// a validation split exists, the mean validation loss after the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    /// True when this epoch produced a new best validation loss.
    pub is_best: bool,
}

/// What a training run produced besides the parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    /// Validation loss of the freshly initialized parameters (early stopping
    /// only).
    pub initial_val_loss: Option<f64>,
    /// Epoch whose snapshot was returned; 0 means the initialization.
    pub best_epoch: usize,
    pub best_val_loss: Option<f64>,
}

fn check_dataset(sequences: &[ActionSequence], vocab_len: usize) -> Result<()> {
    if sequences.is_empty() {
        return Err(Error::InsufficientData("training needs a non-empty dataset".into()));
    }
    for s in sequences {
        s.validate_against(vocab_len)?;
    }
    Ok(())
}

/// Mean reconstruction loss over a set of sequence indices.
fn mean_loss(params: &AutoencoderParams, sequences: &[ActionSequence], idx: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for &i in idx {
        total += sequence_loss(params, &sequences[i])?;
    }
    Ok(total / idx.len() as f64)
}

/// Plain stochastic gradient descent: `epochs * n` single-sequence updates,
/// sampling uniformly with replacement. Returns the final parameters.
pub fn train_plain(
    sequences: &[ActionSequence],
    vocab_len: usize,
    config: &TrainConfig,
) -> Result<(AutoencoderParams, TrainReport)> {
    config.validate()?;
    check_dataset(sequences, vocab_len)?;
    let n = sequences.len();

    let mut rng = rng_from_seed(config.seed);
    let mut params = AutoencoderParams::init(config.cell, vocab_len, config.k, &mut rng)?;
    let mut opt = Optimizer::new(config.optimizer, config.alpha, params.param_count())?;

    let mut records = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let mut epoch_loss = 0.0;
        for _ in 0..n {
            let i = rng.random_range(0..n);
            let (loss, grads) = autoencoder_grad(&params, &sequences[i])?;
            epoch_loss += loss;
            opt.step(&mut params, &grads)?;
        }
        records.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / n as f64,
            val_loss: None,
            is_best: false,
        });
    }

    let report = TrainReport {
        records,
        initial_val_loss: None,
        best_epoch: config.epochs,
        best_val_loss: None,
    };
    Ok((params, report))
}

/// SGD with validation-based early stopping.
///
/// The dataset is split once by `validation_fraction`; each epoch permutes
/// the training indices, sweeps them once, then evaluates the validation
/// loss. The returned parameters are the snapshot with the smallest
/// validation loss seen (the initialization counts as epoch 0).
pub fn train_early_stopping(
    sequences: &[ActionSequence],
    vocab_len: usize,
    config: &TrainConfig,
) -> Result<(AutoencoderParams, TrainReport)> {
    config.validate()?;
    check_dataset(sequences, vocab_len)?;
    let n = sequences.len();

    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "cannot split {n} sequences into non-empty training and validation sets"
        )));
    }
    let n_val = ((config.validation_fraction * n as f64).round() as usize).clamp(1, n - 1);

    let mut rng = rng_from_seed(config.seed);

    // Step (a): random split.
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    let (val_idx, train_idx) = indices.split_at(n_val);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    // Step (b): initialize and score the validation set.
    let mut params = AutoencoderParams::init(config.cell, vocab_len, config.k, &mut rng)?;
    let mut opt = Optimizer::new(config.optimizer, config.alpha, params.param_count())?;
    let initial_val_loss = mean_loss(&params, sequences, &val_idx)?;

    let mut best = params.clone();
    let mut best_val = initial_val_loss;
    let mut best_epoch = 0usize;

    let mut records = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        // Step (c): permute, step (d): sweep.
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for &i in &train_idx {
            let (loss, grads) = autoencoder_grad(&params, &sequences[i])?;
            epoch_loss += loss;
            opt.step(&mut params, &grads)?;
        }
        // Step (e): validation loss; snapshot on improvement.
        let val = mean_loss(&params, sequences, &val_idx)?;
        let is_best = val < best_val;
        if is_best {
            best_val = val;
            best = params.clone();
            best_epoch = epoch;
        }
        records.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / train_idx.len() as f64,
            val_loss: Some(val),
            is_best,
        });
    }

    let report = TrainReport {
        records,
        initial_val_loss: Some(initial_val_loss),
        best_epoch,
        best_val_loss: Some(best_val),
    };
    Ok((best, report))
}

/// Result of cross-validating the latent dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub chosen_k: usize,
    /// Per candidate: (k, mean held-out loss, per-fold held-out losses).
    pub per_k: Vec<(usize, f64, Vec<f64>)>,
}

/// Disjoint fold partition of `0..n`, shuffled by the given seed. Fold sizes
/// differ by at most one.
pub fn fold_partition(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = rng_from_seed(seed);
    indices.shuffle(&mut rng);
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        out.push(indices[start..start + size].to_vec());
        start += size;
    }
    out
}

/// Choose K by k-fold cross-validation: for each candidate, train on
/// `folds - 1` folds (with early stopping) and record the mean reconstruction
/// loss on the held-out fold. The candidate with the smallest mean held-out
/// loss wins; ties break toward the smaller K.
///
/// Fold/candidate jobs run in parallel, each with a seed derived from
/// (config seed, K, fold).
pub fn cross_validate_k(
    sequences: &[ActionSequence],
    vocab_len: usize,
    candidates: &[usize],
    folds: usize,
    config: &TrainConfig,
) -> Result<CvReport> {
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("no candidate values for k".into()));
    }
    if folds < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {folds}")));
    }
    if sequences.len() < folds {
        return Err(Error::InsufficientData(format!(
            "{} sequences cannot fill {folds} folds",
            sequences.len()
        )));
    }
    check_dataset(sequences, vocab_len)?;

    let mut sorted: Vec<usize> = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    let partition = fold_partition(sequences.len(), folds, derive_seed(config.seed, &[TAG_CV_SPLIT]));

    let jobs: Vec<(usize, usize)> = sorted
        .iter()
        .flat_map(|&k| (0..folds).map(move |f| (k, f)))
        .collect();

    let fold_losses: Vec<f64> = jobs
        .par_iter()
        .map(|&(k, f)| -> Result<f64> {
            let held_out = &partition[f];
            let train_set: Vec<ActionSequence> = partition
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, idx)| idx.iter().map(|&i| sequences[i].clone()))
                .collect();
            let fold_config = TrainConfig {
                k,
                seed: derive_seed(config.seed, &[TAG_CV_TRAIN, k as u64, f as u64]),
                ..config.clone()
            };
            let (params, _) = train_early_stopping(&train_set, vocab_len, &fold_config)?;
            let all: Vec<usize> = (0..held_out.len()).collect();
            let held: Vec<ActionSequence> =
                held_out.iter().map(|&i| sequences[i].clone()).collect();
            mean_loss(&params, &held, &all)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut per_k = Vec::with_capacity(sorted.len());
    for (ci, &k) in sorted.iter().enumerate() {
        let losses: Vec<f64> = (0..folds).map(|f| fold_losses[ci * folds + f]).collect();
        let mean = losses.iter().sum::<f64>() / folds as f64;
        per_k.push((k, mean, losses));
    }

    // Ascending candidates with strict improvement keeps ties at smaller K.
    let mut chosen = per_k[0].0;
    let mut best = per_k[0].1;
    for &(k, mean, _) in &per_k[1..] {
        if mean < best {
            best = mean;
            chosen = k;
        }
    }

    Ok(CvReport { chosen_k: chosen, per_k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::ActionVocabulary;

    fn tiny_dataset(n: usize, seed: u64) -> (ActionVocabulary, Vec<ActionSequence>) {
        use rand::Rng as _;
        let vocab = ActionVocabulary::letters(4).unwrap();
        let mut rng = rng_from_seed(seed);
        let seqs = (0..n)
            .map(|i| {
                let mid = 1 + rng.random_range(0..2usize);
                ActionSequence::new(format!("s{i}"), vec![0, mid, 3]).unwrap()
            })
            .collect();
        (vocab, seqs)
    }

    #[test]
    fn zero_step_size_changes_nothing() {
        let (vocab, seqs) = tiny_dataset(6, 60);
        let mut config = TrainConfig::new(CellKind::Gru, 3, 1);
        config.alpha = 0.0;
        config.epochs = 3;
        let (params, _) = train_plain(&seqs, vocab.len(), &config).unwrap();

        let mut rng = rng_from_seed(config.seed);
        let fresh = AutoencoderParams::init(config.cell, vocab.len(), config.k, &mut rng).unwrap();
        assert_eq!(params, fresh);
    }

    #[test]
    fn train_plain_memorizes_a_singleton() {
        // One distinct two-step sequence repeated: 200 epochs at K = 4
        // should drive the mean per-step loss below 0.05.
        let vocab = ActionVocabulary::letters(4).unwrap();
        let seqs: Vec<ActionSequence> = (0..4)
            .map(|i| ActionSequence::new(format!("s{i}"), vec![0, 3]).unwrap())
            .collect();
        let mut config = TrainConfig::new(CellKind::Gru, 4, 7);
        config.epochs = 200;
        config.alpha = 0.01;
        let (params, _) = train_plain(&seqs, vocab.len(), &config).unwrap();
        let loss = sequence_loss(&params, &seqs[0]).unwrap();
        assert!(loss < 0.05, "memorization loss {loss}");
    }

    #[test]
    fn train_plain_is_deterministic() {
        let (vocab, seqs) = tiny_dataset(8, 61);
        let mut config = TrainConfig::new(CellKind::Gru, 2, 99);
        config.epochs = 3;
        let (p1, r1) = train_plain(&seqs, vocab.len(), &config).unwrap();
        let (p2, r2) = train_plain(&seqs, vocab.len(), &config).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(r1, r2);
    }

    #[test]
    fn train_plain_rejects_empty_dataset() {
        let vocab = ActionVocabulary::letters(3).unwrap();
        let config = TrainConfig::new(CellKind::Gru, 2, 1);
        assert!(matches!(
            train_plain(&[], vocab.len(), &config),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn early_stopping_returns_best_snapshot() {
        let (vocab, seqs) = tiny_dataset(20, 62);
        let mut config = TrainConfig::new(CellKind::Gru, 2, 5);
        config.epochs = 8;
        config.validation_fraction = 0.2;
        let (params, report) = train_early_stopping(&seqs, vocab.len(), &config).unwrap();

        // The returned parameters reproduce the reported best validation
        // loss when re-evaluated.
        let n = seqs.len();
        let n_val = ((config.validation_fraction * n as f64).round() as usize).clamp(1, n - 1);
        let mut rng = rng_from_seed(config.seed);
        let mut indices: Vec<usize> = (0..n).collect();
        indices.shuffle(&mut rng);
        let val_idx = indices[..n_val].to_vec();
        let recomputed = mean_loss(&params, &seqs, &val_idx).unwrap();
        let best = report.best_val_loss.unwrap();
        assert!((recomputed - best).abs() < 1e-10);

        // best = min over recorded epochs and the initialization.
        let min_epoch = report
            .records
            .iter()
            .filter_map(|r| r.val_loss)
            .fold(f64::INFINITY, f64::min);
        assert!(best <= min_epoch + 1e-15);
        assert!(best <= report.initial_val_loss.unwrap() + 1e-15);

        // The recorded best epoch matches a snapshot that achieves it.
        if report.best_epoch > 0 {
            let rec = &report.records[report.best_epoch - 1];
            assert_eq!(rec.val_loss.unwrap(), best);
        }
    }

    #[test]
    fn early_stopping_dominates_final_epoch() {
        let (vocab, seqs) = tiny_dataset(20, 63);
        let mut config = TrainConfig::new(CellKind::Lstm, 2, 11);
        config.epochs = 6;
        config.validation_fraction = 0.2;
        let (_, report) = train_early_stopping(&seqs, vocab.len(), &config).unwrap();
        let last_val = report.records.last().unwrap().val_loss.unwrap();
        assert!(report.best_val_loss.unwrap() <= last_val);
    }

    #[test]
    fn early_stopping_monotone_loss_picks_last_epoch() {
        // With a healthy setup the validation loss on this easy dataset
        // decreases across a few epochs, so the last epoch is the best.
        let (vocab, seqs) = tiny_dataset(30, 64);
        let mut config = TrainConfig::new(CellKind::Gru, 3, 21);
        config.epochs = 4;
        config.validation_fraction = 0.2;
        let (_, report) = train_early_stopping(&seqs, vocab.len(), &config).unwrap();
        let vals: Vec<f64> = report.records.iter().map(|r| r.val_loss.unwrap()).collect();
        let monotone = vals.windows(2).all(|w| w[1] < w[0]);
        if monotone {
            assert_eq!(report.best_epoch, config.epochs);
        } else {
            // Fall back to the general contract.
            let (min_i, _) = vals
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap();
            if vals[min_i] < report.initial_val_loss.unwrap() {
                assert_eq!(report.best_epoch, min_i + 1);
            }
        }
    }

    #[test]
    fn early_stopping_rejects_undersized_dataset() {
        let vocab = ActionVocabulary::letters(3).unwrap();
        let seqs = vec![ActionSequence::new("a", vec![0, 2]).unwrap()];
        let config = TrainConfig::new(CellKind::Gru, 2, 1);
        assert!(matches!(
            train_early_stopping(&seqs, vocab.len(), &config),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn fold_partition_is_a_disjoint_cover() {
        let folds = fold_partition(23, 5, 99);
        assert_eq!(folds.len(), 5);
        let mut seen = vec![false; 23];
        for fold in &folds {
            for &i in fold {
                assert!(!seen[i], "index {i} in two folds");
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
        let sizes: Vec<usize> = folds.iter().map(|f| f.len()).collect();
        assert!(sizes.iter().all(|&s| s == 4 || s == 5));
    }

    #[test]
    fn cv_single_candidate_is_returned() {
        let (vocab, seqs) = tiny_dataset(12, 65);
        let mut config = TrainConfig::new(CellKind::Gru, 2, 3);
        config.epochs = 2;
        config.validation_fraction = 0.25;
        let report = cross_validate_k(&seqs, vocab.len(), &[3], 2, &config).unwrap();
        assert_eq!(report.chosen_k, 3);
        assert_eq!(report.per_k.len(), 1);
    }

    #[test]
    fn cv_rejects_bad_configs() {
        let (vocab, seqs) = tiny_dataset(6, 66);
        let config = TrainConfig::new(CellKind::Gru, 2, 3);
        assert!(cross_validate_k(&seqs, vocab.len(), &[], 2, &config).is_err());
        assert!(cross_validate_k(&seqs, vocab.len(), &[2], 1, &config).is_err());
        assert!(matches!(
            cross_validate_k(&seqs, vocab.len(), &[2], 10, &config),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn cv_picks_dominating_candidate() {
        // A K that cannot represent the data (k=1) against a comfortable
        // one; the comfortable one should win on held-out loss.
        let (vocab, seqs) = tiny_dataset(20, 67);
        let mut config = TrainConfig::new(CellKind::Gru, 2, 13);
        config.epochs = 12;
        config.validation_fraction = 0.2;
        let report = cross_validate_k(&seqs, vocab.len(), &[1, 6], 2, &config).unwrap();
        let k1 = report.per_k.iter().find(|e| e.0 == 1).unwrap().1;
        let k6 = report.per_k.iter().find(|e| e.0 == 6).unwrap().1;
        if k6 < k1 {
            assert_eq!(report.chosen_k, 6);
        } else {
            assert_eq!(report.chosen_k, 1);
        }
    }

    #[test]
    fn cv_is_deterministic() {
        let (vocab, seqs) = tiny_dataset(10, 68);
        let mut config = TrainConfig::new(CellKind::Gru, 2, 17);
        config.epochs = 2;
        config.validation_fraction = 0.25;
        let a = cross_validate_k(&seqs, vocab.len(), &[2, 3], 2, &config).unwrap();
        let b = cross_validate_k(&seqs, vocab.len(), &[2, 3], 2, &config).unwrap();
        assert_eq!(a, b);
    }
}
