//! Markov-chain simulation of action sequences with planted two-group
//! structure.
//!
//! Sequences run over a letter vocabulary whose first action A marks the
//! start and whose last action Z marks the end: transition matrices have a
//! zero first column (nothing returns to A) and an absorbing last row
//! (Z maps to itself). Scenario I draws the two groups from two different
//! chains; Scenario II draws everything from one chain and interior-reverses
//! the second group's sequences.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{ActionSequence, ActionVocabulary};
use crate::error::{Error, Result};
use crate::linalg::{softmax_row, Matrix};
use crate::rng::{derive_seed, rng_from_seed, Rng};

/// Simulation scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    I,
    II,
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scenario::I => write!(f, "I"),
            Scenario::II => write!(f, "II"),
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Scenario::I),
            "II" | "2" => Ok(Scenario::II),
            other => Err(Error::InvalidInput(format!("unknown scenario {other:?}"))),
        }
    }
}

/// A first-order chain over the letter vocabulary with absorbing end state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovChain {
    pub vocab: ActionVocabulary,
    /// N x N row-stochastic transition matrix.
    pub transition: Matrix,
}

impl MarkovChain {
    pub fn n_actions(&self) -> usize {
        self.vocab.len()
    }

    /// Check the structural invariants: rows sum to one, the first column is
    /// zero, and the last row is a unit vector at the end action.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_actions();
        if self.transition.rows() != n || self.transition.cols() != n {
            return Err(Error::InvalidInput("transition matrix shape mismatch".into()));
        }
        for i in 0..n {
            let row_sum: f64 = self.transition.row(i).iter().sum();
            if (row_sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!("row {i} sums to {row_sum}")));
            }
            if self.transition.get(i, 0) != 0.0 {
                return Err(Error::InvalidInput(format!("row {i} can return to the start action")));
            }
        }
        for j in 0..n - 1 {
            if self.transition.get(n - 1, j) != 0.0 {
                return Err(Error::InvalidInput("end action is not absorbing".into()));
            }
        }
        if self.transition.get(n - 1, n - 1) != 1.0 {
            return Err(Error::InvalidInput("end action is not absorbing".into()));
        }
        Ok(())
    }
}

/// Sample a transition matrix: the free (N-1) x (N-1) block (rows = all
/// non-end states, columns = everything but the start) is the row-softmax of
/// a matrix of logits drawn uniformly from [-10, 10].
pub fn sample_transition_matrix(n_actions: usize, rng: &mut Rng) -> Result<MarkovChain> {
    if n_actions < 2 {
        return Err(Error::InvalidInput(format!(
            "a chain needs at least 2 actions, got {n_actions}"
        )));
    }
    let vocab = ActionVocabulary::letters(n_actions)?;
    let n = n_actions;
    let mut transition = Matrix::zeros(n, n);
    for i in 0..n - 1 {
        let logits: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-10.0..10.0)).collect();
        let probs = softmax_row(&logits)?;
        for (j, &p) in probs.iter().enumerate() {
            transition.set(i, j + 1, p);
        }
    }
    transition.set(n - 1, n - 1, 1.0);
    let chain = MarkovChain { vocab, transition };
    chain.validate()?;
    Ok(chain)
}

/// Draw one sequence: start at A, follow the chain until Z absorbs.
///
/// Errors with [`Error::Truncated`] if Z is not reached within `max_len`
/// steps; callers discard and redraw.
pub fn generate_sequence(
    chain: &MarkovChain,
    rng: &mut Rng,
    max_len: usize,
    id: impl Into<String>,
) -> Result<ActionSequence> {
    let n = chain.n_actions();
    let end = n - 1;
    let mut steps = vec![0usize];
    let mut current = 0usize;
    while current != end {
        if steps.len() >= max_len {
            return Err(Error::Truncated { max_len });
        }
        let row = chain.transition.row(current);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = end;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = j;
                break;
            }
        }
        steps.push(next);
        current = next;
    }
    ActionSequence::new(id, steps)
}

/// Reverse the actions strictly between the first and last positions.
///
/// The endpoints must be well-formed: the first action may not reappear
/// later and the last action may not appear earlier. Applying the reversal
/// twice is the identity.
pub fn reverse_interior(seq: &ActionSequence) -> Result<ActionSequence> {
    let steps = seq.steps();
    if steps.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "sequence {:?} is too short to have endpoints",
            seq.id
        )));
    }
    let first = steps[0];
    let last = steps[steps.len() - 1];
    if steps[1..].contains(&first) {
        return Err(Error::InvalidInput(format!(
            "sequence {:?}: start action reappears after position 1",
            seq.id
        )));
    }
    if steps[..steps.len() - 1].contains(&last) {
        return Err(Error::InvalidInput(format!(
            "sequence {:?}: end action appears before the final position",
            seq.id
        )));
    }
    let mut out = steps.to_vec();
    out[1..steps.len() - 1].reverse();
    ActionSequence::new(seq.id.clone(), out)
}

/// A simulated two-group dataset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub sequences: Vec<ActionSequence>,
    /// Group per sequence, 1 or 2, aligned with `sequences`.
    pub labels: Vec<u8>,
    pub scenario: Scenario,
    pub seed: u64,
    /// Number of draws discarded for hitting `max_len` before absorption.
    pub truncated_draws: usize,
}

/// Knobs for dataset generation.
#[derive(Clone, Copy, Debug)]
pub struct DatasetOptions {
    /// Reject draws that have not been absorbed after this many actions.
    pub max_len: usize,
    /// How many rejected draws per sequence before giving up.
    pub max_attempts: usize,
    /// Scenario II only: reverse the group-1 draws themselves instead of
    /// reversing an independent fresh set.
    pub paired_reversal: bool,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            max_len: 1000,
            max_attempts: 100,
            paired_reversal: false,
        }
    }
}

fn draw_with_retry(
    chain: &MarkovChain,
    seed: u64,
    opts: &DatasetOptions,
    id: &str,
) -> Result<(ActionSequence, usize)> {
    let mut rng = rng_from_seed(seed);
    let mut discarded = 0;
    for _ in 0..opts.max_attempts {
        match generate_sequence(chain, &mut rng, opts.max_len, id) {
            Ok(seq) => return Ok((seq, discarded)),
            Err(Error::Truncated { .. }) => discarded += 1,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Truncated { max_len: opts.max_len })
}

/// Generate a labeled dataset of `n` sequences (n even), n/2 per group.
///
/// Scenario I needs two chains; Scenario II uses only the first. Generation
/// parallelizes across sequences, each with its own RNG stream derived from
/// `(seed, group, index)`, so results do not depend on scheduling.
pub fn make_dataset(
    scenario: Scenario,
    n: usize,
    chains: (&MarkovChain, Option<&MarkovChain>),
    seed: u64,
    opts: &DatasetOptions,
) -> Result<LabeledDataset> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidInput(format!("n must be even and >= 2, got {n}")));
    }
    let (p1, p2) = chains;
    match scenario {
        Scenario::I => {
            if p2.is_none() {
                return Err(Error::InvalidInput("scenario I needs two chains".into()));
            }
        }
        Scenario::II => {}
    }
    let half = n / 2;

    let group1: Vec<(ActionSequence, usize)> = (0..half)
        .into_par_iter()
        .map(|i| draw_with_retry(p1, derive_seed(seed, &[1, i as u64]), opts, &format!("s{i:06}")))
        .collect::<Result<Vec<_>>>()?;

    let group2: Vec<(ActionSequence, usize)> = match scenario {
        Scenario::I => {
            let c2 = p2.unwrap();
            (0..half)
                .into_par_iter()
                .map(|i| {
                    draw_with_retry(
                        c2,
                        derive_seed(seed, &[2, i as u64]),
                        opts,
                        &format!("s{:06}", half + i),
                    )
                })
                .collect::<Result<Vec<_>>>()?
        }
        Scenario::II => {
            if opts.paired_reversal {
                group1
                    .iter()
                    .enumerate()
                    .map(|(i, (seq, _))| {
                        let renamed =
                            ActionSequence::new(format!("s{:06}", half + i), seq.steps().to_vec())?;
                        Ok((reverse_interior(&renamed)?, 0))
                    })
                    .collect::<Result<Vec<_>>>()?
            } else {
                (0..half)
                    .into_par_iter()
                    .map(|i| {
                        let (seq, discarded) = draw_with_retry(
                            p1,
                            derive_seed(seed, &[2, i as u64]),
                            opts,
                            &format!("s{:06}", half + i),
                        )?;
                        Ok((reverse_interior(&seq)?, discarded))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        }
    };

    let truncated_draws = group1.iter().chain(&group2).map(|(_, d)| d).sum();
    let mut sequences = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (seq, _) in group1 {
        sequences.push(seq);
        labels.push(1);
    }
    for (seq, _) in group2 {
        sequences.push(seq);
        labels.push(2);
    }

    Ok(LabeledDataset {
        sequences,
        labels,
        scenario,
        seed,
        truncated_draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_from_rows(rows: &[Vec<f64>]) -> MarkovChain {
        let n = rows.len();
        MarkovChain {
            vocab: ActionVocabulary::letters(n).unwrap(),
            transition: Matrix::from_rows(rows).unwrap(),
        }
    }

    #[test]
    fn sampled_chain_satisfies_invariants() {
        let mut rng = rng_from_seed(80);
        for n in [2usize, 4, 26] {
            let chain = sample_transition_matrix(n, &mut rng).unwrap();
            chain.validate().unwrap();
            for i in 0..n {
                let sum: f64 = chain.transition.row(i).iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12);
                assert_eq!(chain.transition.get(i, 0), 0.0);
            }
            assert_eq!(chain.transition.get(n - 1, n - 1), 1.0);
        }
        assert!(sample_transition_matrix(1, &mut rng).is_err());
    }

    #[test]
    fn equal_logits_give_uniform_free_rows() {
        // Force equal logits by checking the formula directly: with all
        // u_ij equal the softmax is uniform over the N-1 free columns.
        let probs = softmax_row(&[3.0; 5]).unwrap();
        for p in probs {
            assert!((p - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn deterministic_chain_gives_a_z() {
        let chain = chain_from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0]]);
        let mut rng = rng_from_seed(81);
        for _ in 0..5 {
            let seq = generate_sequence(&chain, &mut rng, 10, "x").unwrap();
            assert_eq!(seq.steps(), &[0, 1]);
        }
    }

    #[test]
    fn sequences_have_clean_endpoints() {
        let mut rng = rng_from_seed(82);
        let chain = sample_transition_matrix(6, &mut rng).unwrap();
        let opts = DatasetOptions::default();
        for i in 0..50u64 {
            let (seq, _) = draw_with_retry(&chain, derive_seed(82, &[i]), &opts, "s").unwrap();
            let steps = seq.steps();
            assert_eq!(steps[0], 0);
            assert_eq!(*steps.last().unwrap(), 5);
            assert!(!steps[1..].contains(&0), "A after position 1");
            assert!(!steps[..steps.len() - 1].contains(&5), "Z before the end");
        }
    }

    #[test]
    fn truncation_is_reported() {
        // A chain that cycles B -> C -> B ... never absorbing from B.
        let chain = chain_from_rows(&[
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ]);
        let mut rng = rng_from_seed(83);
        assert!(matches!(
            generate_sequence(&chain, &mut rng, 20, "x"),
            Err(Error::Truncated { max_len: 20 })
        ));
    }

    #[test]
    fn empirical_transition_frequencies_match_p() {
        // Monte Carlo oracle: frequencies over 1e5 simulated transitions
        // from each free state match the matrix within 0.01.
        let mut rng = rng_from_seed(84);
        let chain = sample_transition_matrix(4, &mut rng).unwrap();
        let n = 4;
        let draws = 100_000usize;
        for i in 0..n - 1 {
            let mut counts = vec![0usize; n];
            let row = chain.transition.row(i).to_vec();
            for _ in 0..draws {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut next = n - 1;
                for (j, &p) in row.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        next = j;
                        break;
                    }
                }
                counts[next] += 1;
            }
            for j in 0..n {
                let freq = counts[j] as f64 / draws as f64;
                assert!(
                    (freq - chain.transition.get(i, j)).abs() < 0.01,
                    "state {i} -> {j}: {freq} vs {}",
                    chain.transition.get(i, j)
                );
            }
        }
    }

    #[test]
    fn mean_length_matches_absorbing_chain_theory() {
        // N = 3 with P(A->B) = 1 and P(B->Z) = q: the B-visits are
        // geometric, so E[len] = 2 + 1/q. Check within 3 standard errors.
        let q = 0.3;
        let chain = chain_from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 1.0 - q, q],
            vec![0.0, 0.0, 1.0],
        ]);
        let mut rng = rng_from_seed(85);
        let draws = 10_000usize;
        let mut total = 0.0;
        let mut sq = 0.0;
        for i in 0..draws {
            let len = generate_sequence(&chain, &mut rng, 100_000, format!("s{i}"))
                .unwrap()
                .len() as f64;
            total += len;
            sq += len * len;
        }
        let mean = total / draws as f64;
        let var = sq / draws as f64 - mean * mean;
        let se = (var / draws as f64).sqrt();
        let expect = 2.0 + 1.0 / q;
        assert!(
            (mean - expect).abs() < 3.0 * se + 1e-9,
            "mean {mean}, expected {expect}, se {se}"
        );
    }

    #[test]
    fn reverse_interior_paper_example() {
        // (A, B, C, Z) -> (A, C, B, Z)
        let seq = ActionSequence::new("x", vec![0, 1, 2, 3]).unwrap();
        let rev = reverse_interior(&seq).unwrap();
        assert_eq!(rev.steps(), &[0, 2, 1, 3]);
        // Involution.
        let back = reverse_interior(&rev).unwrap();
        assert_eq!(back.steps(), seq.steps());
    }

    #[test]
    fn reverse_interior_empty_interior_and_counts() {
        let seq = ActionSequence::new("x", vec![0, 3]).unwrap();
        let rev = reverse_interior(&seq).unwrap();
        assert_eq!(rev.steps(), &[0, 3]);

        // Action multiset is invariant.
        let seq =
            ActionSequence::new("y", vec![0, 2, 2, 1, 4, 1, 3]).unwrap();
        let rev = reverse_interior(&seq).unwrap();
        let count = |s: &ActionSequence, a: usize| s.steps().iter().filter(|&&x| x == a).count();
        for a in 0..5 {
            assert_eq!(count(&seq, a), count(&rev, a));
        }
    }

    #[test]
    fn reverse_interior_rejects_malformed_endpoints() {
        let bad1 = ActionSequence::new("b1", vec![0, 1, 0, 3]).unwrap();
        assert!(reverse_interior(&bad1).is_err());
        let bad2 = ActionSequence::new("b2", vec![0, 3, 1, 3]).unwrap();
        assert!(reverse_interior(&bad2).is_err());
        let bad3 = ActionSequence::new("b3", vec![0]).unwrap();
        assert!(reverse_interior(&bad3).is_err());
    }

    #[test]
    fn dataset_has_balanced_labels_and_structure() {
        let mut rng = rng_from_seed(86);
        let p1 = sample_transition_matrix(6, &mut rng).unwrap();
        let p2 = sample_transition_matrix(6, &mut rng).unwrap();
        let ds = make_dataset(Scenario::I, 30, (&p1, Some(&p2)), 7, &DatasetOptions::default())
            .unwrap();
        assert_eq!(ds.sequences.len(), 30);
        assert_eq!(ds.labels.iter().filter(|&&l| l == 1).count(), 15);
        assert_eq!(ds.labels.iter().filter(|&&l| l == 2).count(), 15);
        for seq in &ds.sequences {
            let steps = seq.steps();
            assert_eq!(steps[0], 0);
            assert_eq!(*steps.last().unwrap(), 5);
            assert!(!steps[..steps.len() - 1].contains(&5));
        }
        // ids unique
        let mut ids: Vec<&str> = ds.sequences.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 30);

        assert!(make_dataset(Scenario::I, 7, (&p1, Some(&p2)), 7, &DatasetOptions::default()).is_err());
        assert!(make_dataset(Scenario::I, 8, (&p1, None), 7, &DatasetOptions::default()).is_err());
    }

    #[test]
    fn scenario_two_smallest_case() {
        let mut rng = rng_from_seed(87);
        let p1 = sample_transition_matrix(5, &mut rng).unwrap();
        let ds = make_dataset(Scenario::II, 2, (&p1, None), 3, &DatasetOptions::default()).unwrap();
        assert_eq!(ds.sequences.len(), 2);
        assert_eq!(ds.labels, vec![1, 2]);
    }

    #[test]
    fn scenario_two_paired_reversal_mirrors_group_one() {
        let mut rng = rng_from_seed(88);
        let p1 = sample_transition_matrix(6, &mut rng).unwrap();
        let opts = DatasetOptions {
            paired_reversal: true,
            ..DatasetOptions::default()
        };
        let ds = make_dataset(Scenario::II, 10, (&p1, None), 5, &opts).unwrap();
        for i in 0..5 {
            let fwd = &ds.sequences[i];
            let rev = &ds.sequences[5 + i];
            let again = reverse_interior(rev).unwrap();
            assert_eq!(again.steps(), fwd.steps());
        }
    }

    #[test]
    fn datasets_are_deterministic_under_seed() {
        let mut rng = rng_from_seed(89);
        let p1 = sample_transition_matrix(6, &mut rng).unwrap();
        let p2 = sample_transition_matrix(6, &mut rng).unwrap();
        let a = make_dataset(Scenario::I, 20, (&p1, Some(&p2)), 11, &DatasetOptions::default())
            .unwrap();
        let b = make_dataset(Scenario::I, 20, (&p1, Some(&p2)), 11, &DatasetOptions::default())
            .unwrap();
        assert_eq!(a.sequences, b.sequences);
        assert_eq!(a.labels, b.labels);
        let c = make_dataset(Scenario::I, 20, (&p1, Some(&p2)), 12, &DatasetOptions::default())
            .unwrap();
        assert_ne!(a.sequences, c.sequences);
    }

    #[test]
    fn scenario_one_groups_differ_in_marginals() {
        // With two different chains the per-group action frequencies differ.
        let mut rng = rng_from_seed(90);
        let p1 = sample_transition_matrix(26, &mut rng).unwrap();
        let p2 = sample_transition_matrix(26, &mut rng).unwrap();
        let ds = make_dataset(Scenario::I, 400, (&p1, Some(&p2)), 13, &DatasetOptions::default())
            .unwrap();
        let freq = |label: u8| -> Vec<f64> {
            let mut counts = vec![0usize; 26];
            let mut total = 0usize;
            for (seq, &l) in ds.sequences.iter().zip(&ds.labels) {
                if l == label {
                    for &a in seq.steps() {
                        counts[a] += 1;
                        total += 1;
                    }
                }
            }
            counts.iter().map(|&c| c as f64 / total as f64).collect()
        };
        let f1 = freq(1);
        let f2 = freq(2);
        let tv: f64 = f1.iter().zip(&f2).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
        assert!(tv > 0.05, "total variation {tv} too small for distinct chains");
    }

    #[test]
    fn scenario_two_groups_share_marginals() {
        // Reversal preserves marginal action counts: a chi-square
        // homogeneity test across the 26 actions should not reject.
        let mut rng = rng_from_seed(91);
        let p1 = sample_transition_matrix(26, &mut rng).unwrap();
        let ds = make_dataset(Scenario::II, 400, (&p1, None), 17, &DatasetOptions::default())
            .unwrap();
        let counts = |label: u8| -> Vec<f64> {
            let mut counts = vec![0f64; 26];
            for (seq, &l) in ds.sequences.iter().zip(&ds.labels) {
                if l == label {
                    for &a in seq.steps() {
                        counts[a] += 1.0;
                    }
                }
            }
            counts
        };
        let c1 = counts(1);
        let c2 = counts(2);
        let t1: f64 = c1.iter().sum();
        let t2: f64 = c2.iter().sum();
        let mut stat = 0.0;
        let mut df = 0usize;
        for a in 0..26 {
            let tot = c1[a] + c2[a];
            if tot == 0.0 {
                continue;
            }
            df += 1;
            let e1 = tot * t1 / (t1 + t2);
            let e2 = tot * t2 / (t1 + t2);
            stat += (c1[a] - e1).powi(2) / e1 + (c2[a] - e2).powi(2) / e2;
        }
        let df = (df - 1) as f64;
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let p = ChiSquared::new(df).unwrap().sf(stat);
        assert!(p > 0.01, "homogeneity rejected: stat {stat}, df {df}, p {p}");
    }
}
