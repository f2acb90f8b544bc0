//! Throwaway calibration probes; run manually with --ignored --nocapture.

use std::time::Instant;

use seqfeat::rng::{derive_seed, rng_from_seed};
use seqfeat::*;

#[test]
#[ignore]
fn probe_sequence_lengths() {
    for exp_seed in [1u64, 2, 3, 7, 42] {
        let mut rng = rng_from_seed(derive_seed(exp_seed, &[0x11]));
        let p1 = sample_transition_matrix(26, &mut rng).unwrap();
        let p2 = sample_transition_matrix(26, &mut rng).unwrap();
        let ds = make_dataset(
            Scenario::I,
            500,
            (&p1, Some(&p2)),
            derive_seed(exp_seed, &[0x12, 0]),
            &DatasetOptions::default(),
        )
        .unwrap();
        let lens: Vec<usize> = ds.sequences.iter().map(|s| s.len()).collect();
        let mean = lens.iter().sum::<usize>() as f64 / lens.len() as f64;
        let max = lens.iter().max().unwrap();
        println!(
            "seed {exp_seed}: mean len {mean:.1}, max {max}, truncated {}",
            ds.truncated_draws
        );
    }
}

#[test]
#[ignore]
fn probe_training_speed_and_quality() {
    let exp_seed = 2u64;
    let mut rng = rng_from_seed(derive_seed(exp_seed, &[0x11]));
    let p1 = sample_transition_matrix(26, &mut rng).unwrap();
    let p2 = sample_transition_matrix(26, &mut rng).unwrap();
    let ds = make_dataset(
        Scenario::I,
        500,
        (&p1, Some(&p2)),
        derive_seed(exp_seed, &[0x12, 0]),
        &DatasetOptions::default(),
    )
    .unwrap();

    for (k, epochs) in [(10usize, 20usize), (20, 20)] {
        let mut config = TrainConfig::new(CellKind::Gru, k, 5);
        config.epochs = epochs;
        let start = Instant::now();
        let (params, report) = train_early_stopping(&ds.sequences, 26, &config).unwrap();
        let dt = start.elapsed().as_secs_f64();
        let last = report.records.last().unwrap();
        println!(
            "k={k} epochs={epochs}: {dt:.1}s ({:.2} s/epoch), train {:.3}, val {:.3}, best {:?} @ {}",
            dt / epochs as f64,
            last.train_loss,
            last.val_loss.unwrap(),
            report.best_val_loss,
            report.best_epoch,
        );
        let features = extract_features(&params, &ds.sequences).unwrap();
        let vocab = seqfeat::autoencoder::ActionVocabulary::letters(26).unwrap();
        let opts = EvaluationOptions {
            seed: derive_seed(exp_seed, &[0x15, 0]),
            ..EvaluationOptions::default()
        };
        let rep = scenario_evaluation(&ds.sequences, &ds.labels, &vocab, &features, &opts).unwrap();
        println!(
            "  -> recon {:.4} over {} vars, group {:.4}",
            rep.reconstruction_accuracy, rep.n_variables, rep.group_accuracy
        );
    }
}

#[test]
#[ignore]
fn probe_scenario_two() {
    let exp_seed = 2u64;
    let mut rng = rng_from_seed(derive_seed(exp_seed, &[0x11]));
    let p1 = sample_transition_matrix(26, &mut rng).unwrap();
    let ds = make_dataset(
        Scenario::II,
        500,
        (&p1, None),
        derive_seed(exp_seed, &[0x12, 0]),
        &DatasetOptions::default(),
    )
    .unwrap();
    let lens: Vec<usize> = ds.sequences.iter().map(|s| s.len()).collect();
    println!(
        "scenario II mean len {:.1}",
        lens.iter().sum::<usize>() as f64 / lens.len() as f64
    );

    for epochs in [40usize] {
        let mut config = TrainConfig::new(CellKind::Gru, 20, 5);
        config.epochs = epochs;
        let start = Instant::now();
        let (params, report) = train_early_stopping(&ds.sequences, 26, &config).unwrap();
        println!(
            "k=20 epochs={epochs}: {:.1}s, best val {:?} @ {}",
            start.elapsed().as_secs_f64(),
            report.best_val_loss,
            report.best_epoch
        );
        let features = extract_features(&params, &ds.sequences).unwrap();
        let vocab = seqfeat::autoencoder::ActionVocabulary::letters(26).unwrap();
        let opts = EvaluationOptions {
            seed: derive_seed(exp_seed, &[0x15, 0]),
            ..EvaluationOptions::default()
        };
        let rep = scenario_evaluation(&ds.sequences, &ds.labels, &vocab, &features, &opts).unwrap();
        println!(
            "  -> recon {:.4} over {} vars, group {:.4}",
            rep.reconstruction_accuracy, rep.n_variables, rep.group_accuracy
        );
    }
}
