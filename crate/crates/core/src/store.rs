//! The experiment database: dataset registry, append-only newline-delimited
//! record store, difficulty-based selection, and the deterministic
//! synthetic-accuracy oracle used to populate desk-scale corpora.
//!
//! # File formats
//!
//! The record store is UTF-8 NDJSON, one record per line:
//!
//! ```json
//! {"v":1,"dataset_id":"d0","layers":[{"kind":"convolution",...}],
//!  "prefix_accuracies":[0.31,0.42],"source":"synthetic",
//!  "created_at":"1970-01-01T00:00:00Z"}
//! ```
//!
//! Appends write one newline-terminated record in a single call on a file
//! opened in append mode, so a crashed append can never corrupt earlier
//! records. The dataset registry is a separate JSON document:
//! `{"v":1,"datasets":[{"id":...,"name":...,"dcn":...,"num_classes":...}]}`.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::archspace::{
    self, prefix, sample, ArchitectureSpec, LayerSpec, SampleError, SearchSpaceConfig, INPUT_SHAPE,
};
use crate::rng::derive_seed;
use crate::SCHEMA_VERSION;

/// A registered dataset: difficulty score in [0, 1] plus class count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub id: String,
    pub name: String,
    pub dcn: f64,
    pub num_classes: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("registry: {0}")]
    Registry(#[from] serde_json::Error),
    #[error("unsupported schema version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("invalid registry: {0}")]
    InvalidRegistry(String),
}

/// The dataset-registry file.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRegistry {
    datasets: Vec<DatasetMeta>,
    by_id: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct RegistryDoc {
    v: u32,
    datasets: Vec<DatasetMeta>,
}

impl DatasetRegistry {
    pub fn new(datasets: Vec<DatasetMeta>) -> Result<Self, StoreError> {
        let mut by_id = HashMap::with_capacity(datasets.len());
        for (i, d) in datasets.iter().enumerate() {
            if !(0.0..=1.0).contains(&d.dcn) {
                return Err(StoreError::InvalidRegistry(format!(
                    "dataset {:?} has dcn {} outside [0, 1]",
                    d.id, d.dcn
                )));
            }
            if d.num_classes < 2 {
                return Err(StoreError::InvalidRegistry(format!(
                    "dataset {:?} has fewer than 2 classes",
                    d.id
                )));
            }
            if by_id.insert(d.id.clone(), i).is_some() {
                return Err(StoreError::InvalidRegistry(format!("duplicate dataset id {:?}", d.id)));
            }
        }
        Ok(Self { datasets, by_id })
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let doc: RegistryDoc = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if doc.v != SCHEMA_VERSION {
            return Err(StoreError::UnsupportedVersion(doc.v));
        }
        Self::new(doc.datasets)
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let doc = RegistryDoc {
            v: SCHEMA_VERSION,
            datasets: self.datasets.clone(),
        };
        std::fs::write(path, serde_json::to_string(&doc)? + "\n")?;
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&DatasetMeta> {
        self.by_id.get(id).map(|&i| &self.datasets[i])
    }

    pub fn datasets(&self) -> &[DatasetMeta] {
        &self.datasets
    }
}

/// Provenance of an experiment record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordSource {
    Synthetic,
    External,
}

/// One experiment: an architecture trained on a dataset, with the accuracy
/// of every prefix sub-network. Entry `k` holds the accuracy of the prefix
/// with `k + 1` backbone layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub dataset_id: String,
    pub architecture: ArchitectureSpec,
    pub prefix_accuracies: Vec<f64>,
    pub source: RecordSource,
    /// ISO-8601 timestamp, kept verbatim for byte-stable round-trips.
    pub created_at: String,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    v: u32,
    dataset_id: String,
    layers: Vec<LayerSpec>,
    prefix_accuracies: Vec<f64>,
    source: RecordSource,
    created_at: String,
}

impl ExperimentRecord {
    fn to_line(&self) -> String {
        serde_json::to_string(&RecordLine {
            v: SCHEMA_VERSION,
            dataset_id: self.dataset_id.clone(),
            layers: self.architecture.layers.clone(),
            prefix_accuracies: self.prefix_accuracies.clone(),
            source: self.source,
            created_at: self.created_at.clone(),
        })
        .expect("record serialization cannot fail")
    }

    fn from_line(text: &str, line: usize) -> Result<Self, StoreError> {
        let parsed: RecordLine =
            serde_json::from_str(text).map_err(|source| StoreError::Parse { line, source })?;
        if parsed.v != SCHEMA_VERSION {
            return Err(StoreError::UnsupportedVersion(parsed.v));
        }
        Ok(Self {
            dataset_id: parsed.dataset_id,
            architecture: ArchitectureSpec::new(parsed.layers),
            prefix_accuracies: parsed.prefix_accuracies,
            source: parsed.source,
            created_at: parsed.created_at,
        })
    }

    /// Final accuracy of the full network.
    pub fn final_accuracy(&self) -> f64 {
        *self
            .prefix_accuracies
            .last()
            .expect("validated records have at least one prefix accuracy")
    }

    fn validate(&self, registry: &DatasetRegistry) -> Result<(), StoreError> {
        if registry.get(&self.dataset_id).is_none() {
            return Err(StoreError::UnknownDataset(self.dataset_id.clone()));
        }
        if self.prefix_accuracies.len() != self.architecture.layers.len() {
            return Err(StoreError::InvalidRecord(format!(
                "{} prefix accuracies for {} backbone layers",
                self.prefix_accuracies.len(),
                self.architecture.layers.len()
            )));
        }
        if self
            .prefix_accuracies
            .iter()
            .any(|a| !a.is_finite() || !(0.0..=1.0).contains(a))
        {
            return Err(StoreError::InvalidRecord("accuracy outside [0, 1]".into()));
        }
        if let Err(e) = archspace::validate(&self.architecture, INPUT_SHAPE) {
            return Err(StoreError::InvalidRecord(format!("architecture: {e}")));
        }
        if chrono::DateTime::parse_from_rfc3339(&self.created_at).is_err() {
            return Err(StoreError::InvalidRecord(format!(
                "created_at {:?} is not an ISO-8601 timestamp",
                self.created_at
            )));
        }
        Ok(())
    }
}

/// Threshold for difficulty-based record selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub tau: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { tau: 0.05 }
    }
}

/// Append-only record store bound to a dataset registry.
pub struct ExperimentStore {
    path: PathBuf,
    registry: DatasetRegistry,
    records: Vec<ExperimentRecord>,
}

impl ExperimentStore {
    /// Creates an empty store file (truncating any existing one).
    pub fn create(path: &Path, registry: DatasetRegistry) -> Result<Self, StoreError> {
        std::fs::write(path, "")?;
        Ok(Self {
            path: path.to_path_buf(),
            registry,
            records: Vec::new(),
        })
    }

    /// Opens an existing store, validating every record.
    pub fn open(path: &Path, registry: DatasetRegistry) -> Result<Self, StoreError> {
        let text = std::fs::read_to_string(path)?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let record = ExperimentRecord::from_line(line, i + 1)?;
            record.validate(&registry)?;
            records.push(record);
        }
        Ok(Self {
            path: path.to_path_buf(),
            registry,
            records,
        })
    }

    /// Validates and durably appends one record.
    pub fn append(&mut self, record: ExperimentRecord) -> Result<(), StoreError> {
        record.validate(&self.registry)?;
        let mut line = record.to_line();
        line.push('\n');
        let mut file = OpenOptions::new().create(true).append(true).open(&self.path)?;
        // One write call per record keeps appends atomic at record
        // granularity.
        file.write_all(line.as_bytes())?;
        file.flush()?;
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ExperimentRecord] {
        &self.records
    }

    pub fn registry(&self) -> &DatasetRegistry {
        &self.registry
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Records whose dataset difficulty is within `cfg.tau` of `query_dcn`,
    /// in store order.
    pub fn filter_by_dcn(&self, query_dcn: f64, cfg: &FilterConfig) -> Vec<&ExperimentRecord> {
        self.records
            .iter()
            .filter(|r| {
                let dcn = self
                    .registry
                    .get(&r.dataset_id)
                    .expect("records are validated against the registry")
                    .dcn;
                (query_dcn - dcn).abs() <= cfg.tau
            })
            .collect()
    }
}

/// Deterministic stand-in for trained-network accuracy.
///
/// `acc = 1/Nc + (1 - 1/Nc) * (1 - dcn) * q` with
/// `q = logistic(0.4*n_conv + 0.6*n_res + 0.2*bn_frac - 0.05*n_layers - 1.5)`,
/// where `n_conv`/`n_res` count convolution and residual-block backbone
/// layers, `bn_frac` is the fraction of convolutions with batch norm (0
/// when there are none), and `n_layers` is the backbone length. The
/// constants are arbitrary but fixed; the formula depends only on
/// quantities visible in the layer encoding, so a trained predictor can
/// recover it.
pub fn pseudo_accuracy(arch: &ArchitectureSpec, dcn: f64, num_classes: u32) -> f64 {
    debug_assert!((0.0..=1.0).contains(&dcn));
    debug_assert!(num_classes >= 2);
    let mut n_conv = 0u32;
    let mut n_bn = 0u32;
    let mut n_res = 0u32;
    for layer in &arch.layers {
        match layer {
            LayerSpec::Convolution { batch_norm, .. } => {
                n_conv += 1;
                if *batch_norm {
                    n_bn += 1;
                }
            }
            LayerSpec::ResidualBlock { .. } => n_res += 1,
            _ => {}
        }
    }
    let bn_frac = if n_conv > 0 { n_bn as f64 / n_conv as f64 } else { 0.0 };
    let z = 0.4 * n_conv as f64 + 0.6 * n_res as f64 + 0.2 * bn_frac
        - 0.05 * arch.layers.len() as f64
        - 1.5;
    let q = 1.0 / (1.0 + (-z).exp());
    let chance = 1.0 / num_classes as f64;
    chance + (1.0 - chance) * (1.0 - dcn) * q
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("no datasets to generate for")]
    EmptyDatasets,
    #[error(transparent)]
    Sample(#[from] SampleError),
}

/// Samples `nets_per_dataset` architectures per dataset and scores every
/// prefix with [`pseudo_accuracy`]. Record `k` of dataset `d` uses the
/// sub-stream seed `derive_seed(derive_seed(seed, d), k)`, so the corpus is
/// a pure function of its arguments.
pub fn generate_synthetic_corpus(
    datasets: &[DatasetMeta],
    nets_per_dataset: u32,
    space: &SearchSpaceConfig,
    seed: u64,
    created_at: &str,
) -> Result<Vec<ExperimentRecord>, CorpusError> {
    if datasets.is_empty() {
        return Err(CorpusError::EmptyDatasets);
    }
    let mut records = Vec::with_capacity(datasets.len() * nets_per_dataset as usize);
    for (dataset_index, dataset) in datasets.iter().enumerate() {
        let dataset_stream = derive_seed(seed, dataset_index as u64);
        for net in 0..nets_per_dataset {
            let net_seed = derive_seed(dataset_stream, net as u64);
            let arch = sample(space, dataset.num_classes, net_seed)?;
            let prefix_accuracies = (1..=arch.layers.len())
                .map(|k| {
                    let sub = prefix(&arch, k).expect("k is within the backbone");
                    pseudo_accuracy(&sub, dataset.dcn, dataset.num_classes)
                })
                .collect();
            records.push(ExperimentRecord {
                dataset_id: dataset.id.clone(),
                architecture: arch,
                prefix_accuracies,
                source: RecordSource::Synthetic,
                created_at: created_at.to_string(),
            });
        }
    }
    Ok(records)
}
