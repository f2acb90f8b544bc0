//! Turning a trained autoencoder plus a dataset into raw features (one
//! encoder output per sequence) and their principal-component transform.

use rayon::prelude::*;

use crate::autoencoder::{encode, ActionSequence, AutoencoderParams};
use crate::error::{Error, Result};
use crate::linalg::{pca, pearson, Matrix, PcaResult};

/// Raw and principal features for a set of sequences, row order matching the
/// input order.
#[derive(Clone, Debug)]
pub struct FeatureMatrix {
    pub ids: Vec<String>,
    /// n x K encoder outputs.
    pub raw: Matrix,
    /// n x K PCA scores of `raw`.
    pub principal: Matrix,
    /// The fitted transform (mean, components, variances, scores), kept so
    /// the same projection can be applied to new data.
    pub pca: PcaResult,
}

impl FeatureMatrix {
    pub fn n(&self) -> usize {
        self.raw.rows()
    }

    pub fn k(&self) -> usize {
        self.raw.cols()
    }
}

/// Encode every sequence and fit a PCA on the stacked raw features.
///
/// Encoding parallelizes across sequences against the read-only parameters;
/// the result does not depend on scheduling.
pub fn extract_features(
    params: &AutoencoderParams,
    sequences: &[ActionSequence],
) -> Result<FeatureMatrix> {
    if sequences.is_empty() {
        return Err(Error::EmptyDataset("no sequences to extract features from".into()));
    }
    if sequences.len() < 2 {
        return Err(Error::InsufficientData(
            "principal components need at least 2 sequences".into(),
        ));
    }
    let rows: Vec<Vec<f64>> = sequences
        .par_iter()
        .map(|s| encode(params, s))
        .collect::<Result<Vec<_>>>()?;

    let mut raw = Matrix::zeros(sequences.len(), params.k());
    for (r, row) in rows.iter().enumerate() {
        raw.row_mut(r).copy_from_slice(row);
    }
    let pca_result = pca(&raw)?;
    Ok(FeatureMatrix {
        ids: sequences.iter().map(|s| s.id.clone()).collect(),
        raw,
        principal: pca_result.scores.clone(),
        pca: pca_result,
    })
}

/// Pearson correlation of each principal feature with a covariate.
///
/// A principal column with zero variance (an exhausted direction) gets
/// correlation 0. A constant covariate is an error.
pub fn feature_correlation(features: &FeatureMatrix, covariate: &[f64]) -> Result<Vec<f64>> {
    if covariate.len() != features.n() {
        return Err(Error::InvalidInput(format!(
            "covariate has {} entries, features have {} rows",
            covariate.len(),
            features.n()
        )));
    }
    if covariate.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("covariate contains non-finite values".into()));
    }
    let first = covariate[0];
    if covariate.iter().all(|&v| v == first) {
        return Err(Error::UndefinedCorrelation("covariate is constant".into()));
    }
    let mut out = Vec::with_capacity(features.k());
    for c in 0..features.k() {
        let col = features.principal.col(c);
        match pearson(&col, covariate) {
            Ok(r) => out.push(r),
            Err(Error::UndefinedCorrelation(_)) => out.push(0.0),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Optional post-processing: flip the sign of the principal feature most
/// correlated with a covariate so the correlation comes out positive.
///
/// Flips the score column and its component column together, keeping the
/// transform consistent. Returns the index of the flipped (or already
/// positive) feature.
pub fn orient_dominant_feature(features: &mut FeatureMatrix, covariate: &[f64]) -> Result<usize> {
    let corr = feature_correlation(features, covariate)?;
    let (idx, &r) = corr
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .expect("at least one feature");
    if r < 0.0 {
        for row in 0..features.principal.rows() {
            let v = features.principal.get(row, idx);
            features.principal.set(row, idx, -v);
            let s = features.pca.scores.get(row, idx);
            features.pca.scores.set(row, idx, -s);
        }
        for row in 0..features.pca.components.rows() {
            let v = features.pca.components.get(row, idx);
            features.pca.components.set(row, idx, -v);
        }
    }
    Ok(idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::ActionVocabulary;
    use crate::rng::rng_from_seed;
    use crate::rnn::CellKind;

    fn setup(n: usize) -> (AutoencoderParams, Vec<ActionSequence>) {
        use rand::Rng as _;
        let vocab = ActionVocabulary::letters(5).unwrap();
        let mut rng = rng_from_seed(70);
        let params = AutoencoderParams::init(CellKind::Gru, vocab.len(), 3, &mut rng).unwrap();
        let seqs = (0..n)
            .map(|i| {
                let len = rng.random_range(2..6usize);
                let mut steps = vec![0usize];
                for _ in 0..len {
                    steps.push(rng.random_range(1..4usize));
                }
                steps.push(4);
                ActionSequence::new(format!("s{i}"), steps).unwrap()
            })
            .collect();
        (params, seqs)
    }

    #[test]
    fn identical_sequences_get_identical_rows() {
        let (params, _) = setup(0);
        let seqs: Vec<ActionSequence> = (0..6)
            .map(|i| ActionSequence::new(format!("s{i}"), vec![0, 2, 4]).unwrap())
            .collect();
        let features = extract_features(&params, &seqs).unwrap();
        for r in 1..6 {
            assert_eq!(features.raw.row(r), features.raw.row(0));
            assert_eq!(features.principal.row(r), features.principal.row(0));
        }
    }

    #[test]
    fn raw_rows_equal_encode_exactly() {
        let (params, seqs) = setup(8);
        let features = extract_features(&params, &seqs).unwrap();
        for (r, s) in seqs.iter().enumerate() {
            let theta = encode(&params, s).unwrap();
            assert_eq!(features.raw.row(r), theta.as_slice());
        }
        assert_eq!(features.ids[3], "s3");
    }

    #[test]
    fn pca_variance_is_conserved() {
        let (params, seqs) = setup(12);
        let features = extract_features(&params, &seqs).unwrap();
        let total: f64 = features.pca.variances.iter().sum();
        let means = features.raw.col_means();
        let mut direct = 0.0;
        for c in 0..features.k() {
            let col = features.raw.col(c);
            direct += col.iter().map(|v| (v - means[c]).powi(2)).sum::<f64>()
                / (features.n() as f64 - 1.0);
        }
        assert!((total - direct).abs() <= 1e-9 * direct.max(1e-12));
        assert!(features.pca.variances.iter().all(|&v| v >= 0.0));

        // Principal columns are centered and mutually uncorrelated.
        for a in 0..features.k() {
            let col = features.principal.col(a);
            let mean: f64 = col.iter().sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-10);
        }
        for a in 0..features.k() {
            for b in (a + 1)..features.k() {
                let ca = features.principal.col(a);
                let cb = features.principal.col(b);
                if let Ok(r) = pearson(&ca, &cb) {
                    assert!(r.abs() < 1e-8, "principal {a} and {b} correlate: {r}");
                }
            }
        }
    }

    #[test]
    fn vocabulary_mismatch_names_the_sequence() {
        let (params, mut seqs) = setup(4);
        seqs.push(ActionSequence::new("rogue", vec![0, 9, 4]).unwrap());
        let err = extract_features(&params, &seqs).unwrap_err();
        assert!(err.to_string().contains("rogue"), "{err}");
    }

    #[test]
    fn correlation_with_own_column_is_one() {
        let (params, seqs) = setup(10);
        let features = extract_features(&params, &seqs).unwrap();
        let col0 = features.principal.col(0);
        let corr = feature_correlation(&features, &col0).unwrap();
        assert!((corr[0] - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = col0.iter().map(|v| -v).collect();
        let corr_neg = feature_correlation(&features, &neg).unwrap();
        assert!((corr_neg[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_matches_direct_formula() {
        let (params, seqs) = setup(10);
        let features = extract_features(&params, &seqs).unwrap();
        let covariate: Vec<f64> = seqs.iter().map(|s| (s.len() as f64).ln()).collect();
        let corr = feature_correlation(&features, &covariate).unwrap();
        // Direct two-pass Pearson formula, computed independently.
        let n = covariate.len() as f64;
        for (c, &r) in corr.iter().enumerate() {
            let col = features.principal.col(c);
            let mx: f64 = col.iter().sum::<f64>() / n;
            let my: f64 = covariate.iter().sum::<f64>() / n;
            let mut num = 0.0;
            let mut dx = 0.0;
            let mut dy = 0.0;
            for i in 0..covariate.len() {
                num += (col[i] - mx) * (covariate[i] - my);
                dx += (col[i] - mx).powi(2);
                dy += (covariate[i] - my).powi(2);
            }
            let direct = num / (dx.sqrt() * dy.sqrt());
            assert!((r - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_covariate_is_an_error() {
        let (params, seqs) = setup(6);
        let features = extract_features(&params, &seqs).unwrap();
        let err = feature_correlation(&features, &vec![1.0; 6]).unwrap_err();
        assert!(matches!(err, Error::UndefinedCorrelation(_)));
    }

    #[test]
    fn orient_flips_toward_positive_correlation() {
        let (params, seqs) = setup(10);
        let mut features = extract_features(&params, &seqs).unwrap();
        let corr = feature_correlation(&features, &features.principal.col(0).iter().map(|v| -v).collect::<Vec<_>>());
        let covariate: Vec<f64> = features.principal.col(0).iter().map(|v| -v).collect();
        drop(corr);
        let idx = orient_dominant_feature(&mut features, &covariate).unwrap();
        assert_eq!(idx, 0);
        let after = feature_correlation(&features, &covariate).unwrap();
        assert!((after[0] - 1.0).abs() < 1e-12);
        // Applying the stored transform to the raw features reproduces the
        // flipped scores, so the sidecar stays coherent.
        let reproj = features.pca.transform(&features.raw).unwrap();
        for r in 0..features.n() {
            assert!((reproj.get(r, 0) - features.principal.get(r, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn too_small_inputs_error() {
        let (params, seqs) = setup(2);
        assert!(matches!(
            extract_features(&params, &[]),
            Err(Error::EmptyDataset(_))
        ));
        assert!(matches!(
            extract_features(&params, &seqs[..1]),
            Err(Error::InsufficientData(_))
        ));
    }
}
