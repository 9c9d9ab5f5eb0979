//! Single LSTM layer: parameters, forward pass with cached intermediates,
//! and exact backpropagation through time.
//!
//! Gate convention (fixed; the wire format and all trained models depend
//! on it): gates are ordered input, forget, cell, output. Per step
//!
//! ```text
//! i = sigmoid(W_i x + U_i h + b_i)      f = sigmoid(W_f x + U_f h + b_f)
//! g = tanh   (W_g x + U_g h + b_g)      o = sigmoid(W_o x + U_o h + b_o)
//! c_t = f * c_{t-1} + i * g             h_t = o * tanh(c_t)
//! ```

use serde::{Deserialize, Serialize};

use super::{he_normal_with, sigmoid, Matrix, NnError};
use crate::rng::SplitMix64;

/// Number of LSTM gates (input, forget, cell, output).
pub const GATES: usize = 4;

/// Parameters of one LSTM layer. Per gate: input weights `w`
/// (`hidden x input_dim`), recurrent weights `u` (`hidden x hidden`), and
/// a bias vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LstmWire", into = "LstmWire")]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden: usize,
    pub w: [Matrix; GATES],
    pub u: [Matrix; GATES],
    pub b: [Vec<f64>; GATES],
}

#[derive(Serialize, Deserialize)]
struct LstmWire {
    input_dim: usize,
    hidden: usize,
    w: [Matrix; GATES],
    u: [Matrix; GATES],
    b: [Vec<f64>; GATES],
}

impl From<LstmParams> for LstmWire {
    fn from(p: LstmParams) -> Self {
        Self { input_dim: p.input_dim, hidden: p.hidden, w: p.w, u: p.u, b: p.b }
    }
}

impl TryFrom<LstmWire> for LstmParams {
    type Error = String;

    fn try_from(wire: LstmWire) -> Result<Self, String> {
        let params = LstmParams {
            input_dim: wire.input_dim,
            hidden: wire.hidden,
            w: wire.w,
            u: wire.u,
            b: wire.b,
        };
        params.validate_dims().map_err(|e| e.to_string())?;
        Ok(params)
    }
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_dim,
            hidden,
            w: std::array::from_fn(|_| Matrix::zeros(hidden, input_dim)),
            u: std::array::from_fn(|_| Matrix::zeros(hidden, hidden)),
            b: std::array::from_fn(|_| vec![0.0; hidden]),
        }
    }

    /// HeNormal weights (fan-in = matrix columns), zero biases. Draw order:
    /// W for gates i,f,g,o, then U for gates i,f,g,o.
    pub fn he_normal(input_dim: usize, hidden: usize, rng: &mut SplitMix64) -> Self {
        let mut params = Self::zeros(input_dim, hidden);
        for gate in 0..GATES {
            params.w[gate] = he_normal_with(rng, hidden, input_dim);
        }
        for gate in 0..GATES {
            params.u[gate] = he_normal_with(rng, hidden, hidden);
        }
        params
    }

    pub fn validate_dims(&self) -> Result<(), NnError> {
        if self.input_dim == 0 || self.hidden == 0 {
            return Err(NnError::DimensionMismatch("zero-sized LSTM".into()));
        }
        for gate in 0..GATES {
            if self.w[gate].rows() != self.hidden || self.w[gate].cols() != self.input_dim {
                return Err(NnError::DimensionMismatch(format!(
                    "gate {gate} input weights are {}x{}, expected {}x{}",
                    self.w[gate].rows(),
                    self.w[gate].cols(),
                    self.hidden,
                    self.input_dim
                )));
            }
            if self.u[gate].rows() != self.hidden || self.u[gate].cols() != self.hidden {
                return Err(NnError::DimensionMismatch(format!(
                    "gate {gate} recurrent weights are {}x{}, expected {}x{}",
                    self.u[gate].rows(),
                    self.u[gate].cols(),
                    self.hidden,
                    self.hidden
                )));
            }
            if self.b[gate].len() != self.hidden {
                return Err(NnError::DimensionMismatch(format!(
                    "gate {gate} bias has {} entries, expected {}",
                    self.b[gate].len(),
                    self.hidden
                )));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        GATES * (self.hidden * self.input_dim + self.hidden * self.hidden + self.hidden)
    }

    pub(super) fn flatten_into(&self, out: &mut Vec<f64>) {
        for gate in 0..GATES {
            out.extend_from_slice(self.w[gate].as_slice());
        }
        for gate in 0..GATES {
            out.extend_from_slice(self.u[gate].as_slice());
        }
        for gate in 0..GATES {
            out.extend_from_slice(&self.b[gate]);
        }
    }

    pub(super) fn assign_from(&mut self, flat: &[f64], offset: &mut usize) {
        for gate in 0..GATES {
            let slice = self.w[gate].as_mut_slice();
            slice.copy_from_slice(&flat[*offset..*offset + slice.len()]);
            *offset += slice.len();
        }
        for gate in 0..GATES {
            let slice = self.u[gate].as_mut_slice();
            slice.copy_from_slice(&flat[*offset..*offset + slice.len()]);
            *offset += slice.len();
        }
        for gate in 0..GATES {
            let n = self.b[gate].len();
            self.b[gate].copy_from_slice(&flat[*offset..*offset + n]);
            *offset += n;
        }
    }
}

/// Per-step intermediates kept for the backward pass.
#[derive(Debug, Clone)]
struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: Vec<StepCache>,
    input_dim: usize,
    hidden: usize,
}

impl LstmCache {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }
}

pub struct LstmForward {
    pub hidden_seq: Vec<Vec<f64>>,
    pub final_h: Vec<f64>,
    pub final_c: Vec<f64>,
    pub cache: LstmCache,
}

/// Runs the recurrence over `sequence`, starting from `initial_state`
/// (zeros when `None`).
pub fn lstm_forward(
    params: &LstmParams,
    sequence: &[Vec<f64>],
    initial_state: Option<(&[f64], &[f64])>,
) -> Result<LstmForward, NnError> {
    let hidden = params.hidden;
    let (mut h, mut c) = match initial_state {
        Some((h0, c0)) => {
            if h0.len() != hidden || c0.len() != hidden {
                return Err(NnError::DimensionMismatch(format!(
                    "initial state has {}/{} entries, expected {hidden}",
                    h0.len(),
                    c0.len()
                )));
            }
            (h0.to_vec(), c0.to_vec())
        }
        None => (vec![0.0; hidden], vec![0.0; hidden]),
    };

    let mut hidden_seq = Vec::with_capacity(sequence.len());
    let mut steps = Vec::with_capacity(sequence.len());

    for x in sequence {
        if x.len() != params.input_dim {
            return Err(NnError::DimensionMismatch(format!(
                "input step has {} entries, expected {}",
                x.len(),
                params.input_dim
            )));
        }
        // Pre-activations per gate: W x + U h + b.
        let mut pre: [Vec<f64>; GATES] = std::array::from_fn(|gate| params.b[gate].clone());
        for ((w, u), pre_gate) in params.w.iter().zip(&params.u).zip(&mut pre) {
            w.matvec_acc(x, pre_gate);
            u.matvec_acc(&h, pre_gate);
        }
        let i: Vec<f64> = pre[0].iter().map(|&z| sigmoid(z)).collect();
        let f: Vec<f64> = pre[1].iter().map(|&z| sigmoid(z)).collect();
        let g: Vec<f64> = pre[2].iter().map(|&z| z.tanh()).collect();
        let o: Vec<f64> = pre[3].iter().map(|&z| sigmoid(z)).collect();

        let mut c_new = vec![0.0; hidden];
        let mut tanh_c = vec![0.0; hidden];
        let mut h_new = vec![0.0; hidden];
        for k in 0..hidden {
            c_new[k] = f[k] * c[k] + i[k] * g[k];
            tanh_c[k] = c_new[k].tanh();
            h_new[k] = o[k] * tanh_c[k];
        }

        steps.push(StepCache {
            x: x.clone(),
            h_prev: std::mem::replace(&mut h, h_new.clone()),
            c_prev: std::mem::replace(&mut c, c_new),
            i,
            f,
            g,
            o,
            tanh_c,
        });
        hidden_seq.push(h_new);
    }

    Ok(LstmForward {
        final_h: h,
        final_c: c,
        hidden_seq,
        cache: LstmCache {
            steps,
            input_dim: params.input_dim,
            hidden,
        },
    })
}

/// Gradients for one LSTM layer, in parameter shapes.
#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub w: [Matrix; GATES],
    pub u: [Matrix; GATES],
    pub b: [Vec<f64>; GATES],
}

impl LstmGrads {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w: std::array::from_fn(|_| Matrix::zeros(hidden, input_dim)),
            u: std::array::from_fn(|_| Matrix::zeros(hidden, hidden)),
            b: std::array::from_fn(|_| vec![0.0; hidden]),
        }
    }

    pub fn add_assign(&mut self, other: &LstmGrads) {
        for gate in 0..GATES {
            for (a, b) in self.w[gate].as_mut_slice().iter_mut().zip(other.w[gate].as_slice()) {
                *a += b;
            }
            for (a, b) in self.u[gate].as_mut_slice().iter_mut().zip(other.u[gate].as_slice()) {
                *a += b;
            }
            for (a, b) in self.b[gate].iter_mut().zip(&other.b[gate]) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for gate in 0..GATES {
            for v in self.w[gate].as_mut_slice() {
                *v *= factor;
            }
            for v in self.u[gate].as_mut_slice() {
                *v *= factor;
            }
            for v in &mut self.b[gate] {
                *v *= factor;
            }
        }
    }

    pub(super) fn flatten_into(&self, out: &mut Vec<f64>) {
        for gate in 0..GATES {
            out.extend_from_slice(self.w[gate].as_slice());
        }
        for gate in 0..GATES {
            out.extend_from_slice(self.u[gate].as_slice());
        }
        for gate in 0..GATES {
            out.extend_from_slice(&self.b[gate]);
        }
    }
}

/// Backpropagation through time. `d_hidden[t]` is dLoss/dh_t flowing in
/// from above; returns parameter gradients and dLoss/dx_t per step.
/// Gradients into the initial state are discarded (the toolkit always
/// starts sequences from zero state).
pub fn lstm_backward(
    params: &LstmParams,
    cache: &LstmCache,
    d_hidden: &[Vec<f64>],
) -> Result<(LstmGrads, Vec<Vec<f64>>), NnError> {
    if cache.input_dim != params.input_dim || cache.hidden != params.hidden {
        return Err(NnError::StaleCache);
    }
    if d_hidden.len() != cache.steps.len() {
        return Err(NnError::DimensionMismatch(format!(
            "{} upstream gradients for {} cached steps",
            d_hidden.len(),
            cache.steps.len()
        )));
    }
    let hidden = params.hidden;
    let mut grads = LstmGrads::zeros(params.input_dim, hidden);
    let mut d_inputs = vec![vec![0.0; params.input_dim]; cache.steps.len()];
    let mut dh_next = vec![0.0; hidden];
    let mut dc_next = vec![0.0; hidden];

    for (t, step) in cache.steps.iter().enumerate().rev() {
        if d_hidden[t].len() != hidden {
            return Err(NnError::DimensionMismatch(format!(
                "upstream gradient {t} has {} entries, expected {hidden}",
                d_hidden[t].len()
            )));
        }
        // Raw (pre-activation) gate gradients.
        let mut d_raw: [Vec<f64>; GATES] = std::array::from_fn(|_| vec![0.0; hidden]);
        let mut dc = vec![0.0; hidden];
        for k in 0..hidden {
            let dh = d_hidden[t][k] + dh_next[k];
            let dck = dh * step.o[k] * (1.0 - step.tanh_c[k] * step.tanh_c[k]) + dc_next[k];
            dc[k] = dck;
            d_raw[0][k] = dck * step.g[k] * step.i[k] * (1.0 - step.i[k]);
            d_raw[1][k] = dck * step.c_prev[k] * step.f[k] * (1.0 - step.f[k]);
            d_raw[2][k] = dck * step.i[k] * (1.0 - step.g[k] * step.g[k]);
            d_raw[3][k] = dh * step.tanh_c[k] * step.o[k] * (1.0 - step.o[k]);
        }

        dh_next.fill(0.0);
        for (gate, d_raw_gate) in d_raw.iter().enumerate() {
            grads.w[gate].outer_acc(d_raw_gate, &step.x);
            grads.u[gate].outer_acc(d_raw_gate, &step.h_prev);
            for (b, d) in grads.b[gate].iter_mut().zip(d_raw_gate) {
                *b += d;
            }
            params.w[gate].matvec_transposed_acc(d_raw_gate, &mut d_inputs[t]);
            params.u[gate].matvec_transposed_acc(d_raw_gate, &mut dh_next);
        }
        for ((next, &dck), f) in dc_next.iter_mut().zip(&dc).zip(&step.f) {
            *next = dck * f;
        }
    }

    Ok((grads, d_inputs))
}
