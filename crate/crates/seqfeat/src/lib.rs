//! Latent feature extraction from variable-length categorical action
//! sequences with a sequence-to-sequence recurrent autoencoder.
//!
//! The crate trains an embedding + GRU/LSTM encoder that compresses an
//! action sequence into a fixed K-dimensional vector, a replicate-and-decode
//! decoder with a multinomial-logit head that reconstructs the sequence from
//! that vector, and the machinery around them: SGD/Adam training with
//! validation-based early stopping, K selection by k-fold cross-validation,
//! PCA of the resulting feature matrix, Markov-chain simulation of labeled
//! sequence datasets, and a downstream evaluation layer (derived-variable
//! indicators, penalized logistic/linear regression, forward-AIC selection,
//! chi-square tests).
//!
//! See the `seqfeat-cli` crate for the command-line surface and the
//! `seqfeat-py` crate for Python bindings.

pub mod autoencoder;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod glm;
pub mod io;
pub mod linalg;
pub mod optim;
pub mod rng;
pub mod rnn;
pub mod sim;
pub mod train;

pub use autoencoder::{
    autoencoder_grad, decode, encode, reconstruct, reconstruction_loss, sequence_loss,
    ActionSequence, ActionVocabulary, AutoencoderParams, Reconstruction,
};
pub use error::{Error, Result};
pub use eval::{
    derive_variables, scenario_evaluation, DerivedKind, DerivedVariableSet, EvaluationOptions,
    ScenarioReport,
};
pub use experiment::{run_experiment, CellSummary, ExperimentReport, ExperimentSpec, ReplicationRow};
pub use features::{extract_features, feature_correlation, orient_dominant_feature, FeatureMatrix};
pub use glm::{
    chi_square_independence, evaluate_prediction, fit_linear, fit_logistic, forward_aic_order,
    ForwardAicPath, GlmModel, LinkKind,
};
pub use linalg::{pca, softmax_row, Matrix, PcaResult};
pub use sim::{
    generate_sequence, make_dataset, reverse_interior, sample_transition_matrix, DatasetOptions,
    LabeledDataset, MarkovChain, Scenario,
};
pub use optim::{adam_step, AdamState, Optimizer, OptimizerKind};
pub use rnn::{rnn_backward, rnn_forward, CellKind, RnnParams, RnnTrace};
pub use train::{
    cross_validate_k, train_early_stopping, train_plain, CvReport, EpochRecord, TrainConfig,
    TrainReport,
};
