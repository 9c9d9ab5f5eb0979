//! The accuracy predictor: builds layer-pair training samples from
//! experiment records, trains the stacked-LSTM network, and predicts the
//! peak accuracy of unseen architectures layer pair by layer pair.
//!
//! Each training sample is one pair of consecutive backbone layers,
//! encoded as a 2-step sequence of 14-feature vectors. The first vector
//! carries the accuracy of the prefix ending at its layer (chance accuracy
//! `1/N_c` for the first layer), the second carries zero, and the target
//! is the accuracy of the prefix extended by the second layer. Prediction
//! runs the same pairs left to right, feeding each output back into the
//! next pair's accuracy field; recurrent state is reset per pair, so all
//! cross-pair information flows through that feedback value.

use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

use crate::archspace::{self, ArchitectureSpec, ValidationError, INPUT_SHAPE};
use crate::encoding::{
    encode_layer, fit_standardizer, EncodingVector, Standardizer, ENCODING_DIM,
};
use crate::nn::{rmsprop_step, DenseParams, LstmParams, Network, NetworkGrads, RmspropState};
use crate::rng::SplitMix64;
use crate::shape::infer;
use crate::store::{DatasetRegistry, ExperimentRecord};
use crate::SCHEMA_VERSION;

/// Network dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub lstm1_hidden: usize,
    pub lstm2_hidden: usize,
    /// Features per sequence step.
    pub input_dim: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            lstm1_hidden: 50,
            lstm2_hidden: 100,
            input_dim: ENCODING_DIM,
        }
    }
}

impl PredictorConfig {
    /// Width of the dense head input: second LSTM output plus the
    /// difficulty scalar.
    pub fn head_input_dim(&self) -> usize {
        self.lstm2_hidden + 1
    }
}

/// Optimization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub weight_decay: f64,
    pub validation_fraction: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 512,
            epochs: 50,
            seed: 0,
            weight_decay: 0.0,
            validation_fraction: 0.1,
        }
    }
}

/// One layer pair with its difficulty score and target accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub first: EncodingVector,
    pub second: EncodingVector,
    pub dcn: f64,
    pub target: f64,
}

/// Training provenance stored inside the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub num_samples: usize,
    pub final_train_loss: f64,
    pub final_val_loss: Option<f64>,
}

/// A trained predictor: network parameters, the standardizer fitted on the
/// training encodings, and training metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    pub config: PredictorConfig,
    pub standardizer: Standardizer,
    pub network: Network,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct ModelWire {
    v: u32,
    config: PredictorConfig,
    standardizer: Standardizer,
    lstm1: LstmParams,
    lstm2: LstmParams,
    dense: DenseParams,
    meta: TrainingMeta,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema version {0}")]
    UnsupportedVersion(u32),
    #[error("invalid model: {0}")]
    Invalid(String),
}

impl PredictorModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelWire {
            v: SCHEMA_VERSION,
            config: self.config,
            standardizer: self.standardizer.clone(),
            lstm1: self.network.lstm1.clone(),
            lstm2: self.network.lstm2.clone(),
            dense: self.network.dense.clone(),
            meta: self.meta.clone(),
        })
        .expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelFileError> {
        let wire: ModelWire = serde_json::from_str(text)?;
        if wire.v != SCHEMA_VERSION {
            return Err(ModelFileError::UnsupportedVersion(wire.v));
        }
        let model = Self {
            config: wire.config,
            standardizer: wire.standardizer,
            network: Network {
                lstm1: wire.lstm1,
                lstm2: wire.lstm2,
                dense: wire.dense,
            },
            meta: wire.meta,
        };
        model.validate_dims().map_err(ModelFileError::Invalid)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelFileError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelFileError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Cross-checks the parameter shapes against the config and encoder.
    pub fn validate_dims(&self) -> Result<(), String> {
        if self.config.input_dim != ENCODING_DIM {
            return Err(format!(
                "config input_dim {} does not match the {ENCODING_DIM}-feature encoding",
                self.config.input_dim
            ));
        }
        if self.network.lstm1.input_dim != self.config.input_dim
            || self.network.lstm1.hidden != self.config.lstm1_hidden
        {
            return Err(format!(
                "first LSTM is {}x{}, config says {}x{}",
                self.network.lstm1.hidden,
                self.network.lstm1.input_dim,
                self.config.lstm1_hidden,
                self.config.input_dim
            ));
        }
        if self.network.lstm2.hidden != self.config.lstm2_hidden {
            return Err(format!(
                "second LSTM has {} hidden units, config says {}",
                self.network.lstm2.hidden, self.config.lstm2_hidden
            ));
        }
        self.network.validate_dims().map_err(|e| e.to_string())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
}

/// Expands records into layer-pair samples. A record with backbone length
/// `L` yields `L - 1` samples; single-layer records yield none.
pub fn build_training_samples(
    records: &[ExperimentRecord],
    registry: &DatasetRegistry,
) -> Result<Vec<TrainingSample>, BuildError> {
    let mut samples = Vec::new();
    for record in records {
        let dataset = registry
            .get(&record.dataset_id)
            .ok_or_else(|| BuildError::UnknownDataset(record.dataset_id.clone()))?;
        let backbone = record.architecture.layers.len();
        if record.prefix_accuracies.len() != backbone {
            return Err(BuildError::InvalidRecord(format!(
                "{} prefix accuracies for {backbone} backbone layers",
                record.prefix_accuracies.len()
            )));
        }
        let trace = infer(&record.architecture, INPUT_SHAPE, dataset.num_classes)
            .map_err(|e| BuildError::InvalidRecord(e.to_string()))?;
        let chance = 1.0 / dataset.num_classes as f64;
        for pair in 0..backbone.saturating_sub(1) {
            let accuracy_field = if pair == 0 {
                chance
            } else {
                record.prefix_accuracies[pair]
            };
            let first = encode_layer(&record.architecture, pair, &trace, accuracy_field)
                .expect("pair index is within the trace");
            let second = encode_layer(&record.architecture, pair + 1, &trace, 0.0)
                .expect("pair index is within the trace");
            samples.push(TrainingSample {
                first,
                second,
                dcn: dataset.dcn,
                target: record.prefix_accuracies[pair + 1],
            });
        }
    }
    Ok(samples)
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("no training samples")]
    EmptyInput,
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged { epoch: usize },
}

// Sub-stream keys of the training seed.
const STREAM_INIT: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;

/// Trains a predictor on `samples`.
///
/// Fits the standardizer on every encoding (both pair members), splits off
/// a validation set, and minimizes mean squared error with RMSprop over
/// seeded shuffled mini-batches. The returned parameters are the average
/// of the epoch-end iterates from the last fifth of the run: constant-step
/// RMSprop oscillates around the optimum, and the tail average removes
/// that oscillation instead of freezing an arbitrary point of it.
/// Deterministic in its arguments.
pub fn train(
    samples: &[TrainingSample],
    tcfg: &TrainingConfig,
    pcfg: &PredictorConfig,
) -> Result<PredictorModel, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyInput);
    }
    assert!(tcfg.batch_size >= 1, "batch_size must be >= 1");
    assert!(tcfg.learning_rate > 0.0, "learning_rate must be positive");
    assert!(
        (0.0..1.0).contains(&tcfg.validation_fraction),
        "validation_fraction must be in [0, 1)"
    );

    let mut all_encodings = Vec::with_capacity(samples.len() * 2);
    for s in samples {
        all_encodings.push(s.first);
        all_encodings.push(s.second);
    }
    let standardizer = fit_standardizer(&all_encodings).expect("samples are non-empty");

    // Pre-standardized 2-step sequences.
    let sequences: Vec<[Vec<f64>; 2]> = samples
        .iter()
        .map(|s| {
            [
                standardizer.apply(&s.first).to_vec(),
                standardizer.apply(&s.second).to_vec(),
            ]
        })
        .collect();

    let mut network = Network::he_normal(
        pcfg.input_dim,
        pcfg.lstm1_hidden,
        pcfg.lstm2_hidden,
        &mut SplitMix64::derived(tcfg.seed, STREAM_INIT),
    );

    let mut indices: Vec<usize> = (0..samples.len()).collect();
    SplitMix64::derived(tcfg.seed, STREAM_SPLIT).shuffle(&mut indices);
    let val_count = (samples.len() as f64 * tcfg.validation_fraction) as usize;
    let (train_indices, val_indices) = indices.split_at(samples.len() - val_count);
    let mut train_order: Vec<usize> = train_indices.to_vec();
    if train_order.is_empty() {
        return Err(TrainError::EmptyInput);
    }

    let mut optimizer = RmspropState::new(
        network.param_count(),
        tcfg.learning_rate,
        tcfg.weight_decay,
    );
    let mut shuffle_rng = SplitMix64::derived(tcfg.seed, STREAM_SHUFFLE);

    // Epoch-end iterates of the last fifth of the run are averaged into
    // the returned model.
    let tail_epochs = (tcfg.epochs / 5).max(1).min(tcfg.epochs);
    let tail_start = tcfg.epochs - tail_epochs;
    let mut tail_sum = vec![0.0; network.param_count()];
    let mut tail_count = 0u32;

    for epoch in 0..tcfg.epochs {
        shuffle_rng.shuffle(&mut train_order);
        let mut epoch_loss = 0.0;
        for batch in train_order.chunks(tcfg.batch_size) {
            let mut grads = NetworkGrads::zeros_like(&network);
            let mut batch_loss = 0.0;
            for &index in batch {
                let sample = &samples[index];
                let (y, cache) = network
                    .forward(&sequences[index], sample.dcn)
                    .expect("training sequences match the network dimensions");
                let err = y - sample.target;
                batch_loss += err * err;
                let sample_grads = network
                    .backward(&cache, 2.0 * err)
                    .expect("cache comes from this network");
                grads.add_assign(&sample_grads);
            }
            grads.scale(1.0 / batch.len() as f64);
            let mut flat_params = network.flatten();
            rmsprop_step(&mut flat_params, &grads.flatten(), &mut optimizer)
                .expect("flat gradients match flat parameters");
            network
                .assign_flat(&flat_params)
                .expect("flat layout is stable");
            epoch_loss += batch_loss;
        }
        if !epoch_loss.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        if epoch >= tail_start {
            for (acc, p) in tail_sum.iter_mut().zip(network.flatten()) {
                *acc += p;
            }
            tail_count += 1;
        }
    }

    for acc in &mut tail_sum {
        *acc /= tail_count as f64;
    }
    network
        .assign_flat(&tail_sum)
        .expect("flat layout is stable");

    let mean_loss = |ixs: &[usize]| -> f64 {
        let total: f64 = ixs
            .iter()
            .map(|&i| {
                let (y, _) = network
                    .forward(&sequences[i], samples[i].dcn)
                    .expect("training sequences match the network dimensions");
                let err = y - samples[i].target;
                err * err
            })
            .sum();
        total / ixs.len() as f64
    };
    let final_train_loss = mean_loss(train_indices);
    let final_val_loss = if val_indices.is_empty() {
        None
    } else {
        Some(mean_loss(val_indices))
    };
    if !final_train_loss.is_finite() {
        return Err(TrainError::Diverged { epoch: tcfg.epochs });
    }

    Ok(PredictorModel {
        config: *pcfg,
        standardizer,
        network,
        meta: TrainingMeta {
            seed: tcfg.seed,
            epochs: tcfg.epochs,
            num_samples: samples.len(),
            final_train_loss,
            final_val_loss,
        },
    })
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredictError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(#[from] ValidationError),
    #[error("model dimension mismatch: {0}")]
    ModelDimensionMismatch(String),
}

/// Predicts the peak accuracy of `arch` on a dataset with difficulty `dcn`
/// and `num_classes` classes.
///
/// Iterates layer pairs left to right: the accuracy field starts at
/// `1/num_classes` and is replaced by each pair's output; the final output
/// is the prediction for the complete network. A single-layer backbone is
/// paired with the implied classifier layer so it still yields one step.
pub fn predict(
    arch: &ArchitectureSpec,
    dcn: f64,
    num_classes: u32,
    model: &PredictorModel,
) -> Result<f64, PredictError> {
    model
        .validate_dims()
        .map_err(PredictError::ModelDimensionMismatch)?;
    archspace::validate(arch, INPUT_SHAPE)?;
    let trace = infer(arch, INPUT_SHAPE, num_classes)?;
    let backbone = arch.layers.len();

    let pairs: Vec<(usize, usize)> = if backbone == 1 {
        // Backbone layer plus the implied fully connected classifier
        // (the last effective layer).
        vec![(0, backbone + 1)]
    } else {
        (0..backbone - 1).map(|p| (p, p + 1)).collect()
    };

    let mut accuracy = 1.0 / num_classes as f64;
    for (first_index, second_index) in pairs {
        let first = encode_layer(arch, first_index, &trace, accuracy)
            .expect("pair indices lie within the trace");
        let second = encode_layer(arch, second_index, &trace, 0.0)
            .expect("pair indices lie within the trace");
        let sequence = [
            model.standardizer.apply(&first).to_vec(),
            model.standardizer.apply(&second).to_vec(),
        ];
        let (y, _) = model
            .network
            .forward(&sequence, dcn)
            .map_err(|e| PredictError::ModelDimensionMismatch(e.to_string()))?;
        accuracy = y;
    }
    Ok(accuracy)
}

/// Per-architecture results plus throughput of a batch prediction run.
#[derive(Debug)]
pub struct BatchReport {
    pub results: Vec<Result<f64, PredictError>>,
    pub duration_seconds: f64,
    pub networks_per_second: f64,
}

/// [`predict`] over a list of architectures, with wall-clock throughput.
/// Outputs are element-wise identical to per-architecture calls.
pub fn predict_batch(
    archs: &[ArchitectureSpec],
    dcn: f64,
    num_classes: u32,
    model: &PredictorModel,
) -> BatchReport {
    let start = Instant::now();
    let results: Vec<Result<f64, PredictError>> = archs
        .iter()
        .map(|arch| predict(arch, dcn, num_classes, model))
        .collect();
    let duration_seconds = start.elapsed().as_secs_f64();
    let networks_per_second = if duration_seconds > 0.0 {
        archs.len() as f64 / duration_seconds
    } else {
        f64::INFINITY
    };
    BatchReport {
        results,
        duration_seconds,
        networks_per_second,
    }
}
