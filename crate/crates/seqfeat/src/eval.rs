//! Derived-variable indicators and the two-column scenario evaluation:
//! mean reconstruction accuracy of derived variables and group
//! classification accuracy, both from logistic models on the principal
//! features.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{ActionSequence, ActionVocabulary};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::glm::{evaluate_prediction, fit_logistic};
use crate::linalg::Matrix;
use crate::rng::rng_from_seed;

/// What a derived variable indicates: an action occurring anywhere in a
/// sequence, or an ordered pair of actions occurring at adjacent positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DerivedKind {
    Action(usize),
    Pair(usize, usize),
}

impl DerivedKind {
    pub fn label(&self, vocab: &ActionVocabulary) -> String {
        match *self {
            DerivedKind::Action(a) => vocab.label(a).to_string(),
            DerivedKind::Pair(a, b) => format!("{}>{}", vocab.label(a), vocab.label(b)),
        }
    }
}

/// Retained derived-variable definitions and their n-by-d indicator matrix.
#[derive(Clone, Debug)]
pub struct DerivedVariableSet {
    pub definitions: Vec<DerivedKind>,
    /// indicator(i, v) = 1 iff sequence i contains definition v.
    pub indicators: Matrix,
}

impl DerivedVariableSet {
    pub fn len(&self) -> usize {
        self.definitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.definitions.is_empty()
    }
}

/// Enumerate every action and every consecutive ordered action pair present
/// in the corpus, drop the ones appearing in fewer than
/// `ceil(threshold * n)` sequences, and return presence indicators.
pub fn derive_variables(
    sequences: &[ActionSequence],
    vocab: &ActionVocabulary,
    threshold: f64,
) -> Result<DerivedVariableSet> {
    if sequences.is_empty() {
        return Err(Error::EmptyDataset("no sequences to derive variables from".into()));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidInput(format!(
            "threshold must be in [0, 1], got {threshold}"
        )));
    }
    let n_actions = vocab.len();
    let n = sequences.len();

    // Per-sequence presence sets.
    let mut action_present = vec![false; n_actions];
    let mut pair_present = vec![false; n_actions * n_actions];
    let mut action_counts = vec![0usize; n_actions];
    let mut pair_counts = vec![0usize; n_actions * n_actions];
    let mut per_seq: Vec<(Vec<usize>, Vec<usize>)> = Vec::with_capacity(n);

    for seq in sequences {
        seq.validate_against(n_actions)?;
        action_present.iter_mut().for_each(|v| *v = false);
        pair_present.iter_mut().for_each(|v| *v = false);
        let steps = seq.steps();
        for &a in steps {
            action_present[a] = true;
        }
        for w in steps.windows(2) {
            pair_present[w[0] * n_actions + w[1]] = true;
        }
        let actions: Vec<usize> = (0..n_actions).filter(|&a| action_present[a]).collect();
        let pairs: Vec<usize> = (0..n_actions * n_actions)
            .filter(|&p| pair_present[p])
            .collect();
        for &a in &actions {
            action_counts[a] += 1;
        }
        for &p in &pairs {
            pair_counts[p] += 1;
        }
        per_seq.push((actions, pairs));
    }

    let min_count = (threshold * n as f64).ceil() as usize;
    let mut definitions = Vec::new();
    let mut column_of_action = vec![usize::MAX; n_actions];
    let mut column_of_pair = vec![usize::MAX; n_actions * n_actions];
    for a in 0..n_actions {
        if action_counts[a] > 0 && action_counts[a] >= min_count {
            column_of_action[a] = definitions.len();
            definitions.push(DerivedKind::Action(a));
        }
    }
    for first in 0..n_actions {
        for second in 0..n_actions {
            let p = first * n_actions + second;
            if pair_counts[p] > 0 && pair_counts[p] >= min_count {
                column_of_pair[p] = definitions.len();
                definitions.push(DerivedKind::Pair(first, second));
            }
        }
    }

    let mut indicators = Matrix::zeros(n, definitions.len());
    for (i, (actions, pairs)) in per_seq.iter().enumerate() {
        for &a in actions {
            let c = column_of_action[a];
            if c != usize::MAX {
                indicators.set(i, c, 1.0);
            }
        }
        for &p in pairs {
            let c = column_of_pair[p];
            if c != usize::MAX {
                indicators.set(i, c, 1.0);
            }
        }
    }

    Ok(DerivedVariableSet { definitions, indicators })
}

/// Options for [`scenario_evaluation`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvaluationOptions {
    /// Fraction of sequences in the training split (the rest is the test
    /// split); 0.8 gives the 4:1 split.
    pub train_fraction: f64,
    /// Ridge penalty for the logistic fits on standardized features.
    pub lambda: f64,
    /// Rarity threshold for derived variables.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        EvaluationOptions {
            train_fraction: 0.8,
            lambda: 1e-3,
            threshold: 0.05,
            seed: 0,
        }
    }
}

/// The two Table-style columns plus per-variable detail.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioReport {
    /// Mean test accuracy over all retained derived variables.
    pub reconstruction_accuracy: f64,
    /// Test accuracy of the group classifier.
    pub group_accuracy: f64,
    /// (variable label, test accuracy) per retained derived variable.
    pub per_variable: Vec<(String, f64)>,
    pub n_variables: usize,
    pub n_train: usize,
    pub n_test: usize,
}

/// Column-standardize by train-split statistics; constant columns pass
/// through unscaled. The transform is frozen on the training rows and then
/// applied to all rows.
fn standardize(features: &Matrix, train_idx: &[usize]) -> Matrix {
    let k = features.cols();
    let nt = train_idx.len() as f64;
    let mut mean = vec![0.0; k];
    for &r in train_idx {
        for (m, v) in mean.iter_mut().zip(features.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nt);
    let mut sd = vec![0.0; k];
    for &r in train_idx {
        for c in 0..k {
            sd[c] += (features.get(r, c) - mean[c]).powi(2);
        }
    }
    for s in &mut sd {
        *s = (*s / (nt - 1.0).max(1.0)).sqrt();
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    let mut out = features.clone();
    for r in 0..out.rows() {
        for c in 0..k {
            out.set(r, c, (out.get(r, c) - mean[c]) / sd[c]);
        }
    }
    out
}

fn subset(features: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(idx.len(), features.cols());
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).copy_from_slice(features.row(i));
    }
    out
}

/// Fit one logistic model per retained derived variable and one for the
/// group label, all on a seeded 4:1 train/test split of the principal
/// features (standardized by train statistics), and report mean test
/// accuracy for the variables and test accuracy for the group.
pub fn scenario_evaluation(
    sequences: &[ActionSequence],
    labels: &[u8],
    vocab: &ActionVocabulary,
    features: &FeatureMatrix,
    opts: &EvaluationOptions,
) -> Result<ScenarioReport> {
    let n = sequences.len();
    if n == 0 {
        return Err(Error::EmptyDataset("nothing to evaluate".into()));
    }
    if labels.len() != n {
        return Err(Error::InvalidInput("labels and sequences differ in length".into()));
    }
    if features.n() != n {
        return Err(Error::InvalidInput(format!(
            "features have {} rows, dataset has {n}",
            features.n()
        )));
    }
    for (seq, fid) in sequences.iter().zip(&features.ids) {
        if &seq.id != fid {
            return Err(Error::InvalidInput(format!(
                "feature rows misaligned: dataset id {:?} vs feature id {fid:?}",
                seq.id
            )));
        }
    }
    if !(opts.train_fraction > 0.0 && opts.train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction must be in (0, 1), got {}",
            opts.train_fraction
        )));
    }

    let derived = derive_variables(sequences, vocab, opts.threshold)?;

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = rng_from_seed(opts.seed);
    indices.shuffle(&mut rng);
    let n_train = ((opts.train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let train_idx = indices[..n_train].to_vec();
    let test_idx = indices[n_train..].to_vec();

    let standardized = standardize(&features.principal, &train_idx);
    let x_train = subset(&standardized, &train_idx);
    let x_test = subset(&standardized, &test_idx);

    let accuracy_of = |y: &[f64]| -> Result<f64> {
        let y_train: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
        let y_test: Vec<f64> = test_idx.iter().map(|&i| y[i]).collect();
        let model = fit_logistic(&x_train, &y_train, opts.lambda)?;
        evaluate_prediction(&model, &x_test, &y_test)
    };

    let per_variable: Vec<(String, f64)> = (0..derived.len())
        .into_par_iter()
        .map(|v| -> Result<(String, f64)> {
            let y = derived.indicators.col(v);
            let acc = accuracy_of(&y)?;
            Ok((derived.definitions[v].label(vocab), acc))
        })
        .collect::<Result<Vec<_>>>()?;

    let group_y: Vec<f64> = labels.iter().map(|&l| f64::from(l) - 1.0).collect();
    let group_accuracy = accuracy_of(&group_y)?;

    let reconstruction_accuracy =
        per_variable.iter().map(|(_, a)| a).sum::<f64>() / per_variable.len().max(1) as f64;

    Ok(ScenarioReport {
        reconstruction_accuracy,
        group_accuracy,
        n_variables: per_variable.len(),
        per_variable,
        n_train: train_idx.len(),
        n_test: test_idx.len(),
    })
}
