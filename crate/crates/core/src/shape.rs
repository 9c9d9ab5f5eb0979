//! Tensor shape inference and per-layer cost accounting.
//!
//! Produces the quantities the layer encoder consumes: per-layer parameter
//! counts, inference FLOPs, inference memory, and cumulative prefix sums
//! over the effective layer sequence (backbone plus the implied global
//! pooling and classifier tail).
//!
//! Cost conventions, fixed so encodings are reproducible:
//! multiply and add count as separate FLOPs (one MAC = 2), convolution bias
//! FLOPs are ignored, scalars are 4 bytes, and inference memory covers
//! parameters plus the layer's output activations.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::archspace::{ArchitectureSpec, LayerSpec, ValidationError};

/// Height x width x channels of an activation tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorShape {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
}

impl TensorShape {
    pub fn new(height: u32, width: u32, channels: u32) -> Self {
        Self { height, width, channels }
    }

    /// Number of scalars in the tensor.
    pub fn volume(&self) -> u64 {
        self.height as u64 * self.width as u64 * self.channels as u64
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// Learnable parameters, inference FLOPs, and inference memory of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LayerCost {
    pub params: u64,
    pub flops: u64,
    pub memory_bytes: u64,
}

/// Shapes and costs of one effective layer, with cumulative sums over the
/// prefix sub-network ending at this layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTrace {
    pub input: TensorShape,
    pub output: TensorShape,
    pub cost: LayerCost,
    pub cumulative_flops: u64,
    pub cumulative_memory_bytes: u64,
    /// Layers from the input through this one (1-based position).
    pub layer_count: u32,
}

/// Per-layer trace over the effective sequence: backbone layers, then
/// global pooling, then the fully connected classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeTrace {
    pub entries: Vec<LayerTrace>,
    pub backbone_len: usize,
}

impl ShapeTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[inline]
fn ceil_div(n: u32, d: u32) -> u32 {
    n.div_ceil(d)
}

/// floor((n - k) / s) + 1, or None when the window does not fit.
#[inline]
fn valid_out(n: u32, k: u32, s: u32) -> Option<u32> {
    if n < k {
        None
    } else {
        Some((n - k) / s + 1)
    }
}

fn invalid(index: usize, reason: impl Into<String>) -> ValidationError {
    ValidationError::InvalidLayer { index, reason: reason.into() }
}

/// Output shape of `layer` at position `index` given the running `input`
/// shape and the outputs of all earlier layers (for skip sources).
/// Checks hyperparameter ranges and spatial validity.
pub(crate) fn layer_output(
    layer: &LayerSpec,
    input: TensorShape,
    index: usize,
    prior_outputs: &[TensorShape],
) -> Result<TensorShape, ValidationError> {
    match *layer {
        LayerSpec::Convolution { kernel_size, stride, padding, out_channels, .. } => {
            if kernel_size < 1 {
                return Err(invalid(index, "convolution kernel_size must be >= 1"));
            }
            if !(stride == 1 || stride == 2) {
                return Err(invalid(index, format!("convolution stride {stride} not in {{1, 2}}")));
            }
            if out_channels < 1 {
                return Err(invalid(index, "convolution out_channels must be >= 1"));
            }
            let (h, w) = match padding {
                crate::archspace::Padding::Same => {
                    (ceil_div(input.height, stride), ceil_div(input.width, stride))
                }
                crate::archspace::Padding::Valid => {
                    let h = valid_out(input.height, kernel_size, stride);
                    let w = valid_out(input.width, kernel_size, stride);
                    match (h, w) {
                        (Some(h), Some(w)) => (h, w),
                        _ => {
                            return Err(ValidationError::SpatialCollapse {
                                index,
                                detail: format!(
                                    "valid-padding convolution kernel {kernel_size} on {input}"
                                ),
                            })
                        }
                    }
                }
            };
            Ok(TensorShape::new(h, w, out_channels))
        }
        LayerSpec::Pooling { kernel_size, stride, .. } => {
            if kernel_size < 1 {
                return Err(invalid(index, "pooling kernel_size must be >= 1"));
            }
            if stride < 1 {
                return Err(invalid(index, "pooling stride must be >= 1"));
            }
            let h = valid_out(input.height, kernel_size, stride);
            let w = valid_out(input.width, kernel_size, stride);
            match (h, w) {
                (Some(h), Some(w)) => Ok(TensorShape::new(h, w, input.channels)),
                _ => Err(ValidationError::SpatialCollapse {
                    index,
                    detail: format!("pooling kernel {kernel_size} on {input}"),
                }),
            }
        }
        LayerSpec::BatchNorm => Ok(input),
        LayerSpec::Dropout { rate } => {
            if !(rate > 0.0 && rate < 1.0) {
                return Err(invalid(index, format!("dropout rate {rate} not in (0, 1)")));
            }
            Ok(input)
        }
        LayerSpec::ResidualBlock { kernel_size, stride, out_channels, repeat } => {
            if kernel_size < 1 {
                return Err(invalid(index, "residual kernel_size must be >= 1"));
            }
            if !(stride == 1 || stride == 2) {
                return Err(invalid(index, format!("residual stride {stride} not in {{1, 2}}")));
            }
            if out_channels < 1 {
                return Err(invalid(index, "residual out_channels must be >= 1"));
            }
            if !(1..=6).contains(&repeat) {
                return Err(invalid(index, format!("residual repeat {repeat} not in [1, 6]")));
            }
            // Same-padding convolutions throughout the block.
            Ok(TensorShape::new(
                ceil_div(input.height, stride),
                ceil_div(input.width, stride),
                out_channels,
            ))
        }
        LayerSpec::SkipConnection { source_index } => {
            if source_index >= index {
                return Err(ValidationError::BadSkipSource { index, source_index });
            }
            let source_shape = prior_outputs[source_index];
            if source_shape != input {
                return Err(ValidationError::ShapeMismatch { index, source_shape, input });
            }
            Ok(input)
        }
        LayerSpec::FullyConnected { units } => {
            if units < 1 {
                return Err(invalid(index, "fully connected units must be >= 1"));
            }
            Ok(TensorShape::new(1, 1, units))
        }
        LayerSpec::GlobalPooling => Ok(TensorShape::new(1, 1, input.channels)),
    }
}

/// Input/output shape of every backbone layer, or the first validity error.
pub(crate) fn backbone_shapes(
    arch: &ArchitectureSpec,
    input: TensorShape,
) -> Result<Vec<(TensorShape, TensorShape)>, ValidationError> {
    if arch.layers.is_empty() {
        return Err(ValidationError::EmptyArchitecture);
    }
    let mut shapes = Vec::with_capacity(arch.layers.len());
    let mut outputs = Vec::with_capacity(arch.layers.len());
    let mut current = input;
    for (index, layer) in arch.layers.iter().enumerate() {
        let out = layer_output(layer, current, index, &outputs)?;
        shapes.push((current, out));
        outputs.push(out);
        current = out;
    }
    Ok(shapes)
}

/// Parameter count, FLOPs, and memory of one layer between known shapes.
pub fn layer_cost(layer: &LayerSpec, in_shape: TensorShape, out_shape: TensorShape) -> LayerCost {
    let out_volume = out_shape.volume();
    let (params, flops) = match *layer {
        LayerSpec::Convolution { kernel_size, out_channels, batch_norm, .. } => {
            let k2 = kernel_size as u64 * kernel_size as u64;
            let c_in = in_shape.channels as u64;
            let c_out = out_channels as u64;
            let mut params = k2 * c_in * c_out + c_out;
            if batch_norm {
                params += 2 * c_out;
            }
            let flops = 2 * k2 * c_in * c_out * out_shape.height as u64 * out_shape.width as u64;
            (params, flops)
        }
        LayerSpec::Pooling { kernel_size, .. } => {
            let k2 = kernel_size as u64 * kernel_size as u64;
            (0, k2 * out_volume)
        }
        LayerSpec::BatchNorm => (2 * in_shape.channels as u64, 2 * in_shape.volume()),
        LayerSpec::Dropout { .. } => (0, in_shape.volume()),
        LayerSpec::ResidualBlock { kernel_size, stride, out_channels, repeat } => {
            residual_cost(kernel_size, stride, out_channels, repeat, in_shape, out_shape)
        }
        LayerSpec::SkipConnection { .. } => (0, in_shape.volume()),
        LayerSpec::FullyConnected { units } => {
            let fan_in = in_shape.volume();
            let units = units as u64;
            (fan_in * units + units, 2 * fan_in * units)
        }
        LayerSpec::GlobalPooling => (0, in_shape.volume()),
    };
    LayerCost {
        params,
        flops,
        memory_bytes: 4 * (params + out_volume),
    }
}

/// Expanded cost of a residual block: `repeat` pairs of same-padding
/// convolutions with batch norm, plus a 1x1 projection shortcut whenever
/// the incoming channels or stride change, plus one element-wise addition
/// per repeat.
fn residual_cost(
    kernel_size: u32,
    stride: u32,
    out_channels: u32,
    repeat: u32,
    in_shape: TensorShape,
    out_shape: TensorShape,
) -> (u64, u64) {
    let k2 = kernel_size as u64 * kernel_size as u64;
    let c_out = out_channels as u64;
    let plane = out_shape.height as u64 * out_shape.width as u64;
    let mut params = 0u64;
    let mut flops = 0u64;
    for r in 0..repeat {
        let (c_in, step_stride) = if r == 0 {
            (in_shape.channels as u64, stride as u64)
        } else {
            (c_out, 1)
        };
        // Both convolutions of the pair produce out_shape-sized activations.
        params += k2 * c_in * c_out + c_out + 2 * c_out; // conv1 + bias + bn
        flops += 2 * k2 * c_in * c_out * plane;
        flops += 2 * plane * c_out; // bn
        params += k2 * c_out * c_out + c_out + 2 * c_out; // conv2 + bias + bn
        flops += 2 * k2 * c_out * c_out * plane;
        flops += 2 * plane * c_out; // bn
        if c_in != c_out || step_stride != 1 {
            params += c_in * c_out + c_out; // 1x1 projection + bias
            flops += 2 * c_in * c_out * plane;
        }
        flops += plane * c_out; // shortcut addition
    }
    (params, flops)
}

/// Shapes and costs for the whole effective layer sequence of `arch` on
/// `input`: the backbone, then global pooling, then a fully connected
/// classifier with `num_classes` outputs.
pub fn infer(
    arch: &ArchitectureSpec,
    input: TensorShape,
    num_classes: u32,
) -> Result<ShapeTrace, ValidationError> {
    let backbone = backbone_shapes(arch, input)?;
    let mut entries: Vec<LayerTrace> = Vec::with_capacity(backbone.len() + 2);
    let mut cumulative_flops = 0u64;
    let mut cumulative_memory = 0u64;

    let mut push = |layer: &LayerSpec, inp: TensorShape, out: TensorShape,
                    entries: &mut Vec<LayerTrace>| {
        let cost = layer_cost(layer, inp, out);
        cumulative_flops += cost.flops;
        cumulative_memory += cost.memory_bytes;
        entries.push(LayerTrace {
            input: inp,
            output: out,
            cost,
            cumulative_flops,
            cumulative_memory_bytes: cumulative_memory,
            layer_count: entries.len() as u32 + 1,
        });
    };

    for (layer, &(inp, out)) in arch.layers.iter().zip(&backbone) {
        push(layer, inp, out, &mut entries);
    }

    let last = backbone.last().expect("non-empty backbone").1;
    let pooled = TensorShape::new(1, 1, last.channels);
    push(&LayerSpec::GlobalPooling, last, pooled, &mut entries);

    let classifier = LayerSpec::FullyConnected { units: num_classes };
    let logits = TensorShape::new(1, 1, num_classes);
    push(&classifier, pooled, logits, &mut entries);

    Ok(ShapeTrace {
        entries,
        backbone_len: arch.layers.len(),
    })
}
