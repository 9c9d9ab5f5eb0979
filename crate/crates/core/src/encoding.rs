//! The 14-feature per-layer encoding vector and the feature-wise
//! standardizer applied before predictor training and prediction.
//!
//! Feature layout (fixed order):
//!
//! | index | feature |
//! |-------|---------|
//! | 0..=6 | layer-type one-hot: convolution, pooling, batch norm, dropout, residual block, skip connection, fully connected |
//! | 7     | output/input height ratio |
//! | 8     | output/input channel ratio |
//! | 9     | learnable parameters of the layer |
//! | 10    | layers from the input through this one |
//! | 11    | cumulative inference FLOPs of the prefix sub-network |
//! | 12    | cumulative inference memory (bytes) of the prefix sub-network |
//! | 13    | accuracy field in [0, 1] |
//!
//! Global pooling maps to the pooling one-hot slot, keeping the one-hot
//! exactly 7 wide.

use serde::{Deserialize, Serialize};

use crate::archspace::{ArchitectureSpec, LayerKind};
use crate::shape::ShapeTrace;

pub const ENCODING_DIM: usize = 14;

/// Index of the accuracy field within the encoding.
pub const ACCURACY_FEATURE: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodingVector(pub [f64; ENCODING_DIM]);

impl EncodingVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("layer index {index} outside the trace of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("trace does not match the architecture ({trace_backbone} backbone layers in trace, {arch_backbone} in architecture)")]
    TraceMismatch {
        trace_backbone: usize,
        arch_backbone: usize,
    },
    #[error("empty input")]
    EmptyInput,
}

/// Kind of the effective layer at `index`: backbone layers first, then the
/// implied global pooling and fully connected tail.
fn effective_kind(arch: &ArchitectureSpec, index: usize) -> LayerKind {
    let backbone = arch.layers.len();
    if index < backbone {
        arch.layers[index].kind()
    } else if index == backbone {
        LayerKind::GlobalPooling
    } else {
        LayerKind::FullyConnected
    }
}

/// Encodes effective layer `layer_index` (0-based over backbone + tail)
/// of `arch`, whose shapes and costs were inferred into `trace`.
/// `accuracy_field` is copied into feature 13 unmodified.
pub fn encode_layer(
    arch: &ArchitectureSpec,
    layer_index: usize,
    trace: &ShapeTrace,
    accuracy_field: f64,
) -> Result<EncodingVector, EncodeError> {
    if trace.backbone_len != arch.layers.len() {
        return Err(EncodeError::TraceMismatch {
            trace_backbone: trace.backbone_len,
            arch_backbone: arch.layers.len(),
        });
    }
    let Some(entry) = trace.entries.get(layer_index) else {
        return Err(EncodeError::IndexOutOfRange {
            index: layer_index,
            len: trace.entries.len(),
        });
    };
    debug_assert!((0.0..=1.0).contains(&accuracy_field));

    let mut features = [0.0; ENCODING_DIM];
    features[effective_kind(arch, layer_index).one_hot_slot()] = 1.0;
    features[7] = entry.output.height as f64 / entry.input.height as f64;
    features[8] = entry.output.channels as f64 / entry.input.channels as f64;
    features[9] = entry.cost.params as f64;
    features[10] = entry.layer_count as f64;
    features[11] = entry.cumulative_flops as f64;
    features[12] = entry.cumulative_memory_bytes as f64;
    features[ACCURACY_FEATURE] = accuracy_field;
    Ok(EncodingVector(features))
}

/// Per-feature mean and population standard deviation over a fitting set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StandardizerWire", into = "StandardizerWire")]
pub struct Standardizer {
    means: Vec<f64>,
    stds: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StandardizerWire {
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl From<Standardizer> for StandardizerWire {
    fn from(s: Standardizer) -> Self {
        Self { means: s.means, stds: s.stds }
    }
}

impl TryFrom<StandardizerWire> for Standardizer {
    type Error = String;

    fn try_from(wire: StandardizerWire) -> Result<Self, String> {
        if wire.means.len() != ENCODING_DIM || wire.stds.len() != ENCODING_DIM {
            return Err(format!(
                "standardizer must have {ENCODING_DIM} means and stds, got {} and {}",
                wire.means.len(),
                wire.stds.len()
            ));
        }
        if wire.stds.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err("standardizer stds must be finite and non-negative".into());
        }
        if wire.means.iter().any(|m| !m.is_finite()) {
            return Err("standardizer means must be finite".into());
        }
        Ok(Self { means: wire.means, stds: wire.stds })
    }
}

impl Standardizer {
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    /// Feature-wise `(v - mean) / std`, skipping the division for
    /// zero-variance features.
    pub fn apply(&self, v: &EncodingVector) -> [f64; ENCODING_DIM] {
        let mut out = [0.0; ENCODING_DIM];
        for (((o, value), mean), std) in
            out.iter_mut().zip(v.0).zip(&self.means).zip(&self.stds)
        {
            let centered = value - mean;
            *o = if *std > 0.0 { centered / std } else { centered };
        }
        out
    }

    /// Inverse of [`Standardizer::apply`] for features with positive std.
    pub fn invert(&self, v: &[f64; ENCODING_DIM]) -> [f64; ENCODING_DIM] {
        let mut out = [0.0; ENCODING_DIM];
        for (((o, value), mean), std) in
            out.iter_mut().zip(v).zip(&self.means).zip(&self.stds)
        {
            let scaled = if *std > 0.0 { value * std } else { *value };
            *o = scaled + mean;
        }
        out
    }
}

/// Per-feature population mean and standard deviation of `vectors`.
pub fn fit_standardizer(vectors: &[EncodingVector]) -> Result<Standardizer, EncodeError> {
    if vectors.is_empty() {
        return Err(EncodeError::EmptyInput);
    }
    let n = vectors.len() as f64;
    let mut means = vec![0.0; ENCODING_DIM];
    for v in vectors {
        for (m, value) in means.iter_mut().zip(v.0) {
            *m += value;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    let mut stds = vec![0.0; ENCODING_DIM];
    for v in vectors {
        for ((s, value), m) in stds.iter_mut().zip(v.0).zip(&means) {
            let d = value - m;
            *s += d * d;
        }
    }
    for s in &mut stds {
        *s = (*s / n).sqrt();
    }
    Ok(Standardizer { means, stds })
}
