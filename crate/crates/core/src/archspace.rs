//! Architecture description types, validity rules, and the random sampler
//! over the convolutional search space.
//!
//! An [`ArchitectureSpec`] holds only the sampled backbone; every network
//! implicitly ends with a global pooling layer followed by a fully
//! connected classifier, which are appended when shapes and costs are
//! inferred (see [`crate::shape`]).

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

use crate::rng::SplitMix64;
use crate::shape::{self, TensorShape};
use crate::SCHEMA_VERSION;

/// Max-vs-average choice for pooling layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Max,
    Avg,
}

/// Spatial padding convention for convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Same,
    Valid,
}

/// One backbone layer.
///
/// Serialized as a tagged object `{"kind": "...", ...}`; this is the wire
/// schema shared by architecture files and experiment records. The pooling
/// max/avg selector is serialized as `pool` because `kind` is taken by the
/// type tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Convolution {
        kernel_size: u32,
        stride: u32,
        padding: Padding,
        out_channels: u32,
        batch_norm: bool,
    },
    Pooling {
        pool: PoolKind,
        kernel_size: u32,
        stride: u32,
    },
    BatchNorm,
    Dropout {
        rate: f64,
    },
    ResidualBlock {
        kernel_size: u32,
        stride: u32,
        out_channels: u32,
        repeat: u32,
    },
    SkipConnection {
        source_index: usize,
    },
    FullyConnected {
        units: u32,
    },
    GlobalPooling,
}

/// Layer kind without hyperparameters; used for search-space configuration,
/// one-hot encoding, and mutation applicability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Convolution,
    Pooling,
    BatchNorm,
    Dropout,
    ResidualBlock,
    SkipConnection,
    FullyConnected,
    GlobalPooling,
}

impl LayerSpec {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Convolution { .. } => LayerKind::Convolution,
            LayerSpec::Pooling { .. } => LayerKind::Pooling,
            LayerSpec::BatchNorm => LayerKind::BatchNorm,
            LayerSpec::Dropout { .. } => LayerKind::Dropout,
            LayerSpec::ResidualBlock { .. } => LayerKind::ResidualBlock,
            LayerSpec::SkipConnection { .. } => LayerKind::SkipConnection,
            LayerSpec::FullyConnected { .. } => LayerKind::FullyConnected,
            LayerSpec::GlobalPooling => LayerKind::GlobalPooling,
        }
    }
}

impl LayerKind {
    /// Slot in the 7-wide layer-type one-hot. Global pooling shares the
    /// pooling slot; the one-hot stays 7 wide.
    pub fn one_hot_slot(self) -> usize {
        match self {
            LayerKind::Convolution => 0,
            LayerKind::Pooling | LayerKind::GlobalPooling => 1,
            LayerKind::BatchNorm => 2,
            LayerKind::Dropout => 3,
            LayerKind::ResidualBlock => 4,
            LayerKind::SkipConnection => 5,
            LayerKind::FullyConnected => 6,
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            LayerKind::Convolution => "convolution",
            LayerKind::Pooling => "pooling",
            LayerKind::BatchNorm => "batch_norm",
            LayerKind::Dropout => "dropout",
            LayerKind::ResidualBlock => "residual_block",
            LayerKind::SkipConnection => "skip_connection",
            LayerKind::FullyConnected => "fully_connected",
            LayerKind::GlobalPooling => "global_pooling",
        };
        f.write_str(name)
    }
}

/// A sampled CNN backbone. The global-pooling + fully-connected tail is
/// implied and not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub layers: Vec<LayerSpec>,
}

/// On-disk architecture document.
#[derive(Serialize, Deserialize)]
struct ArchitectureDoc {
    v: u32,
    layers: Vec<LayerSpec>,
}

impl ArchitectureSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Self {
        Self { layers }
    }

    pub fn backbone_len(&self) -> usize {
        self.layers.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ArchitectureDoc {
            v: SCHEMA_VERSION,
            layers: self.layers.clone(),
        })
        .expect("architecture serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, ArchFileError> {
        let doc: ArchitectureDoc = serde_json::from_str(text)?;
        if doc.v != SCHEMA_VERSION {
            return Err(ArchFileError::UnsupportedVersion(doc.v));
        }
        Ok(Self { layers: doc.layers })
    }

    pub fn save(&self, path: &Path) -> Result<(), ArchFileError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ArchFileError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ArchFileError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema version {0}")]
    UnsupportedVersion(u32),
}

/// Validation failures for an architecture against a concrete input shape.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValidationError {
    #[error("architecture has no layers")]
    EmptyArchitecture,
    #[error("layer {index}: spatial size would drop below 1x1 ({detail})")]
    SpatialCollapse { index: usize, detail: String },
    #[error("layer {index}: skip source {source_index} does not precede the layer")]
    BadSkipSource { index: usize, source_index: usize },
    #[error("layer {index}: skip source shape {source_shape} does not match input {input}")]
    ShapeMismatch {
        index: usize,
        source_shape: TensorShape,
        input: TensorShape,
    },
    #[error("layer {index}: {reason}")]
    InvalidLayer { index: usize, reason: String },
}

/// Checks that `arch` produces valid shapes end-to-end on `input`:
/// hyperparameters in range, every spatial dimension at least 1, every
/// skip source an earlier layer with a matching output shape.
pub fn validate(arch: &ArchitectureSpec, input: TensorShape) -> Result<(), ValidationError> {
    shape::backbone_shapes(arch, input).map(|_| ())
}

/// Search-space configuration for sampling and mutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpaceConfig {
    pub max_backbone_layers: u32,
    /// Odd kernel sizes for convolutions, pooling, and residual blocks.
    pub kernel_sizes: Vec<u32>,
    /// Inclusive bounds for output channels and fully-connected units.
    pub channel_range: (u32, u32),
    pub allowed_kinds: Vec<LayerKind>,
    pub dropout_rates: Vec<f64>,
}

impl Default for SearchSpaceConfig {
    fn default() -> Self {
        Self {
            max_backbone_layers: 12,
            kernel_sizes: vec![1, 3, 5],
            channel_range: (3, 256),
            allowed_kinds: vec![
                LayerKind::Convolution,
                LayerKind::Pooling,
                LayerKind::BatchNorm,
                LayerKind::Dropout,
                LayerKind::ResidualBlock,
                LayerKind::SkipConnection,
                LayerKind::FullyConnected,
            ],
            dropout_rates: vec![0.3, 0.5],
        }
    }
}

impl SearchSpaceConfig {
    fn assert_valid(&self) {
        assert!(self.max_backbone_layers >= 1, "max_backbone_layers must be >= 1");
        assert!(!self.kernel_sizes.is_empty(), "kernel_sizes must not be empty");
        assert!(
            self.channel_range.0 >= 1 && self.channel_range.0 <= self.channel_range.1,
            "channel_range must be a non-empty interval with lower bound >= 1"
        );
        assert!(!self.allowed_kinds.is_empty(), "allowed_kinds must not be empty");
    }

    fn draw_channels(&self, rng: &mut SplitMix64) -> u32 {
        let (lo, hi) = self.channel_range;
        lo + rng.next_below((hi - lo + 1) as u64) as u32
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SampleError {
    #[error("no valid layer found at position {index} after {attempts} resamples")]
    ExhaustedRetries { index: usize, attempts: u32 },
}

/// Resample bound per layer position.
pub const SAMPLE_RETRY_BOUND: u32 = 100;

/// Input shape every architecture in this toolkit is validated and costed
/// against (all corpus datasets are resized to 32x32 RGB).
pub const INPUT_SHAPE: TensorShape = TensorShape {
    height: 32,
    width: 32,
    channels: 3,
};

/// Draws a random valid architecture.
///
/// Backbone length is uniform in `[1, max_backbone_layers]`; each layer is
/// drawn uniformly from the configured kinds and hyperparameter sets,
/// resampling up to [`SAMPLE_RETRY_BOUND`] times when a draw would violate
/// validity against [`INPUT_SHAPE`]. The result is a pure function of the
/// arguments. `num_classes` only parameterizes the implied classifier tail
/// and does not influence the backbone; it is part of the signature so
/// sampling sites carry the full problem description.
pub fn sample(
    config: &SearchSpaceConfig,
    num_classes: u32,
    seed: u64,
) -> Result<ArchitectureSpec, SampleError> {
    config.assert_valid();
    debug_assert!(num_classes >= 2);
    let mut rng = SplitMix64::new(seed);
    let backbone_len = 1 + rng.next_below(config.max_backbone_layers as u64) as usize;

    let mut layers: Vec<LayerSpec> = Vec::with_capacity(backbone_len);
    // Output shape of each accepted layer, for skip-source matching.
    let mut outputs: Vec<TensorShape> = Vec::with_capacity(backbone_len);
    let mut current = INPUT_SHAPE;

    for index in 0..backbone_len {
        let mut accepted = false;
        for _ in 0..SAMPLE_RETRY_BOUND {
            let candidate = draw_layer(config, &mut rng, &outputs, current);
            let Some(layer) = candidate else { continue };
            match shape::layer_output(&layer, current, index, &outputs) {
                Ok(out) => {
                    layers.push(layer);
                    outputs.push(out);
                    current = out;
                    accepted = true;
                    break;
                }
                Err(_) => continue,
            }
        }
        if !accepted {
            return Err(SampleError::ExhaustedRetries {
                index,
                attempts: SAMPLE_RETRY_BOUND,
            });
        }
    }

    let arch = ArchitectureSpec::new(layers);
    debug_assert!(validate(&arch, INPUT_SHAPE).is_ok());
    Ok(arch)
}

/// One hyperparameter draw. Returns `None` when the drawn kind cannot be
/// instantiated at this position (skip connection with no matching source).
/// Draw order per kind is fixed; changing it changes every sampled stream.
fn draw_layer(
    config: &SearchSpaceConfig,
    rng: &mut SplitMix64,
    outputs: &[TensorShape],
    current: TensorShape,
) -> Option<LayerSpec> {
    match *rng.choose(&config.allowed_kinds) {
        LayerKind::Convolution => Some(LayerSpec::Convolution {
            kernel_size: *rng.choose(&config.kernel_sizes),
            stride: 1 + rng.next_below(2) as u32,
            padding: if rng.next_below(2) == 0 { Padding::Same } else { Padding::Valid },
            out_channels: config.draw_channels(rng),
            batch_norm: rng.next_below(2) == 1,
        }),
        LayerKind::Pooling => Some(LayerSpec::Pooling {
            pool: if rng.next_below(2) == 0 { PoolKind::Max } else { PoolKind::Avg },
            kernel_size: *rng.choose(&config.kernel_sizes),
            stride: 1 + rng.next_below(2) as u32,
        }),
        LayerKind::BatchNorm => Some(LayerSpec::BatchNorm),
        LayerKind::Dropout => Some(LayerSpec::Dropout {
            rate: *rng.choose(&config.dropout_rates),
        }),
        LayerKind::ResidualBlock => Some(LayerSpec::ResidualBlock {
            kernel_size: *rng.choose(&config.kernel_sizes),
            stride: 1 + rng.next_below(2) as u32,
            out_channels: config.draw_channels(rng),
            repeat: 1 + rng.next_below(6) as u32,
        }),
        LayerKind::SkipConnection => {
            let sources: Vec<usize> = (0..outputs.len())
                .filter(|&j| outputs[j] == current)
                .collect();
            if sources.is_empty() {
                return None;
            }
            Some(LayerSpec::SkipConnection {
                source_index: *rng.choose(&sources),
            })
        }
        LayerKind::FullyConnected => Some(LayerSpec::FullyConnected {
            units: config.draw_channels(rng),
        }),
        LayerKind::GlobalPooling => Some(LayerSpec::GlobalPooling),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PrefixError {
    #[error("prefix length {k} outside 1..={len}")]
    IndexOutOfRange { k: usize, len: usize },
}

/// First `k` backbone layers (1-based length) with the implied tail.
///
/// Every skip connection inside the prefix necessarily references an
/// earlier in-prefix layer, so prefixes of valid architectures are valid.
pub fn prefix(arch: &ArchitectureSpec, k: usize) -> Result<ArchitectureSpec, PrefixError> {
    if k == 0 || k > arch.layers.len() {
        return Err(PrefixError::IndexOutOfRange {
            k,
            len: arch.layers.len(),
        });
    }
    Ok(ArchitectureSpec::new(arch.layers[..k].to_vec()))
}
