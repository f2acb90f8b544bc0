//! File formats: JSON-lines sequence datasets with a JSON manifest, a
//! versioned JSON model file, CSV feature/report/log exports and a JSON PCA
//! sidecar.
//!
//! All floating-point values are written in Rust's shortest round-trip
//! decimal form, so save/load cycles are bit-exact and reruns with the same
//! seed produce byte-identical files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autoencoder::{ActionSequence, ActionVocabulary, AutoencoderParams};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::linalg::{Matrix, PcaResult};
use crate::sim::{LabeledDataset, MarkovChain, Scenario};
use crate::train::TrainReport;

/// One JSONL record: `{"id": ..., "label": 1|2 (optional), "actions": [...]}`.
#[derive(Debug, Serialize, Deserialize)]
struct SequenceRecord {
    id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<u8>,
    actions: Vec<String>,
}

/// A loaded dataset: the vocabulary observed (or supplied), the sequences in
/// file order, and any per-sequence labels.
#[derive(Clone, Debug)]
pub struct LoadedData {
    pub vocab: ActionVocabulary,
    pub sequences: Vec<ActionSequence>,
    pub labels: Vec<Option<u8>>,
}

impl LoadedData {
    /// Labels for every sequence, or an error naming the first unlabeled id.
    pub fn require_labels(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.labels.len());
        for (seq, label) in self.sequences.iter().zip(&self.labels) {
            match label {
                Some(l) => out.push(*l),
                None => {
                    return Err(Error::InvalidInput(format!(
                        "sequence {:?} has no label",
                        seq.id
                    )))
                }
            }
        }
        Ok(out)
    }
}

/// Read a JSONL sequence file. With `fixed_vocab` the labels must all be
/// known; otherwise the vocabulary is the sorted set of distinct observed
/// labels.
pub fn load_sequences(path: &Path, fixed_vocab: Option<&ActionVocabulary>) -> Result<LoadedData> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);

    let mut raw: Vec<(usize, SequenceRecord)> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let record: SequenceRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if record.actions.is_empty() {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("sequence {:?} has an empty actions array", record.id),
            });
        }
        raw.push((lineno + 1, record));
    }
    if raw.is_empty() {
        return Err(Error::EmptyDataset(format!("{} holds no sequences", path.display())));
    }

    let vocab = match fixed_vocab {
        Some(v) => v.clone(),
        None => {
            let mut labels: Vec<String> = raw
                .iter()
                .flat_map(|(_, r)| r.actions.iter().cloned())
                .collect();
            labels.sort_unstable();
            labels.dedup();
            ActionVocabulary::new(labels)?
        }
    };

    let mut sequences = Vec::with_capacity(raw.len());
    let mut labels = Vec::with_capacity(raw.len());
    for (_, record) in &raw {
        let mut steps = Vec::with_capacity(record.actions.len());
        for action in &record.actions {
            match vocab.index_of(action) {
                Some(i) => steps.push(i),
                None => {
                    return Err(Error::VocabularyMismatch(format!(
                        "sequence {:?} uses unknown action {action:?}",
                        record.id
                    )))
                }
            }
        }
        sequences.push(ActionSequence::new(record.id.clone(), steps)?);
        labels.push(record.label);
    }

    Ok(LoadedData { vocab, sequences, labels })
}

/// Write sequences (with optional labels) as JSONL.
pub fn save_sequences(
    path: &Path,
    vocab: &ActionVocabulary,
    sequences: &[ActionSequence],
    labels: Option<&[u8]>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for (i, seq) in sequences.iter().enumerate() {
        let record = SequenceRecord {
            id: seq.id.clone(),
            label: labels.map(|l| l[i]),
            actions: seq.labels(vocab).iter().map(|s| s.to_string()).collect(),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Manifest written next to a simulated dataset.
#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub scenario: Scenario,
    pub n: usize,
    pub seed: u64,
    pub truncated_draws: usize,
    pub chains: Vec<MarkovChain>,
    pub provenance: Provenance,
}

/// Stamped into every artifact so outputs can be traced to a seed and an
/// exact configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
}

/// SHA-256 of a serializable configuration, hex-encoded.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn save_dataset_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, manifest)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn save_dataset(
    dir: &Path,
    dataset: &LabeledDataset,
    vocab: &ActionVocabulary,
    chains: &[MarkovChain],
    provenance: Provenance,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_sequences(
        &dir.join("dataset.jsonl"),
        vocab,
        &dataset.sequences,
        Some(&dataset.labels),
    )?;
    let manifest = DatasetManifest {
        scenario: dataset.scenario,
        n: dataset.sequences.len(),
        seed: dataset.seed,
        truncated_draws: dataset.truncated_draws,
        chains: chains.to_vec(),
        provenance,
    };
    save_dataset_manifest(&dir.join("manifest.json"), &manifest)
}

const MODEL_FORMAT: &str = "seqfeat-model";
const MODEL_VERSION: u32 = 1;

/// On-disk model representation.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub vocab: ActionVocabulary,
    pub params: AutoencoderParams,
    pub provenance: Provenance,
}

/// Save a trained model (single versioned JSON file, bit-exact round trip).
pub fn save_model(
    path: &Path,
    vocab: &ActionVocabulary,
    params: &AutoencoderParams,
    provenance: Provenance,
) -> Result<()> {
    let all_finite = {
        let mut ok = true;
        params.visit(&mut |v| ok &= v.is_finite());
        ok
    };
    if !all_finite {
        return Err(Error::InvalidInput("refusing to save non-finite parameters".into()));
    }
    let file = ModelFile {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        vocab: vocab.clone(),
        params: params.clone(),
        provenance,
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &file)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Load a model saved by [`save_model`], checking format and version.
pub fn load_model(path: &Path) -> Result<ModelFile> {
    let file = File::open(path)?;
    let model: ModelFile = serde_json::from_reader(BufReader::new(file))?;
    if model.format != MODEL_FORMAT {
        return Err(Error::Format(format!(
            "expected a {MODEL_FORMAT} file, found {:?}",
            model.format
        )));
    }
    if model.version != MODEL_VERSION {
        return Err(Error::Format(format!(
            "model version {} is not supported (this build reads version {MODEL_VERSION})",
            model.version
        )));
    }
    if model.vocab.len() != model.params.n_actions() {
        return Err(Error::Format("model vocabulary and embedding disagree".into()));
    }
    Ok(model)
}

/// Feature CSV: `# provenance:` comment, then `id,pf1..pfK` rows.
pub fn save_features_csv(path: &Path, features: &FeatureMatrix, provenance: &Provenance) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "# provenance: config_sha256={} seed={}",
        provenance.config_sha256, provenance.seed
    )?;
    write!(out, "id")?;
    for k in 0..features.k() {
        write!(out, ",pf{}", k + 1)?;
    }
    writeln!(out)?;
    for (r, id) in features.ids.iter().enumerate() {
        write!(out, "{id}")?;
        for c in 0..features.k() {
            write!(out, ",{}", features.principal.get(r, c))?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Load a feature CSV written by [`save_features_csv`].
pub fn load_features_csv(path: &Path) -> Result<(Vec<String>, Matrix)> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut ids = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let first = parts.next().unwrap_or("");
        if first == "id" {
            continue; // header
        }
        let mut row = Vec::new();
        for part in parts {
            let v: f64 = part.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                message: format!("bad float {part:?}"),
            })?;
            row.push(v);
        }
        if let Some(w) = width {
            if row.len() != w {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected {w} feature columns, found {}", row.len()),
                });
            }
        } else {
            width = Some(row.len());
        }
        ids.push(first.to_string());
        rows.push(row);
    }
    if ids.is_empty() {
        return Err(Error::EmptyDataset(format!("{} holds no feature rows", path.display())));
    }
    let matrix = Matrix::from_rows(&rows)?;
    Ok((ids, matrix))
}

/// PCA sidecar: the frozen transform for applying the same projection to new
/// data (scores omitted).
#[derive(Debug, Serialize, Deserialize)]
pub struct PcaSidecar {
    pub mean: Vec<f64>,
    pub components: Matrix,
    pub variances: Vec<f64>,
    pub provenance: Provenance,
}

pub fn save_pca_sidecar(path: &Path, pca: &PcaResult, provenance: Provenance) -> Result<()> {
    let sidecar = PcaSidecar {
        mean: pca.mean.clone(),
        components: pca.components.clone(),
        variances: pca.variances.clone(),
        provenance,
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &sidecar)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_pca_sidecar(path: &Path) -> Result<PcaSidecar> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// Training-log CSV: epoch, training loss, validation loss, best-so-far flag.
pub fn save_training_log(path: &Path, report: &TrainReport, provenance: &Provenance) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "# provenance: config_sha256={} seed={}",
        provenance.config_sha256, provenance.seed
    )?;
    writeln!(out, "epoch,train_loss,val_loss,best")?;
    if let Some(initial) = report.initial_val_loss {
        writeln!(out, "0,,{initial},{}", u8::from(report.best_epoch == 0))?;
    }
    for rec in &report.records {
        let val = rec.val_loss.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{}",
            rec.epoch,
            rec.train_loss,
            val,
            u8::from(rec.is_best)
        )?;
    }
    out.flush()?;
    Ok(())
}
