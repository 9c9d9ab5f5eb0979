//! Minimal neural substrate, implemented from scratch: a row-major matrix
//! type, HeNormal initialization, stacked-LSTM forward and exact
//! backpropagation through time, a sigmoid dense head with a scalar side
//! input, and RMSprop.
//!
//! Everything is double precision and deterministic: given the same
//! parameters and inputs, forward, backward, and optimizer steps produce
//! bit-identical results across runs.

mod lstm;
mod rmsprop;

pub use lstm::{lstm_backward, lstm_forward, LstmCache, LstmForward, LstmGrads, LstmParams};
pub use rmsprop::{rmsprop_step, RmspropState};

use serde::{Deserialize, Serialize};

use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("cache does not belong to this network")]
    StaleCache,
}

/// Dense row-major matrix of `f64`. Serialized as nested arrays of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `out[r] += sum_c self[r, c] * x[c]` for every row.
    #[inline]
    pub fn matvec_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (row, o) in self.data.chunks_exact(self.cols).zip(out) {
            let mut acc = 0.0;
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            *o += acc;
        }
    }

    /// `out[c] += sum_r self[r, c] * a[r]` (transposed product).
    #[inline]
    pub fn matvec_transposed_acc(&self, a: &[f64], out: &mut [f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (row, ar) in self.data.chunks_exact(self.cols).zip(a) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * ar;
            }
        }
    }

    /// Rank-one update `self[r, c] += a[r] * x[c]`.
    #[inline]
    pub fn outer_acc(&mut self, a: &[f64], x: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (row, ar) in self.data.chunks_exact_mut(self.cols).zip(a) {
            for (w, v) in row.iter_mut().zip(x) {
                *w += ar * v;
            }
        }
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        (0..m.rows).map(|r| m.row(r).to_vec()).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = String;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, String> {
        if rows.is_empty() {
            return Err("matrix must have at least one row".into());
        }
        let cols = rows[0].len();
        if cols == 0 {
            return Err("matrix must have at least one column".into());
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(format!(
                    "ragged matrix: row {i} has {} entries, expected {cols}",
                    row.len()
                ));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// HeNormal matrix: i.i.d. normal entries with mean 0 and standard
/// deviation `sqrt(2 / fan_in)`, `fan_in = cols`, filled row-major from
/// `rng`. Biases are initialized to zero elsewhere, not through this.
pub fn he_normal_with(rng: &mut SplitMix64, rows: usize, cols: usize) -> Matrix {
    let std = (2.0 / cols as f64).sqrt();
    let mut m = Matrix::zeros(rows, cols);
    for v in m.as_mut_slice() {
        *v = rng.next_gaussian() * std;
    }
    m
}

/// [`he_normal_with`] on a fresh stream seeded by `seed`.
pub fn he_normal_init(rows: usize, cols: usize, seed: u64) -> Matrix {
    he_normal_with(&mut SplitMix64::new(seed), rows, cols)
}

/// Single-output dense layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// The full predictor network: two stacked LSTMs, a scalar side input
/// concatenated to the second LSTM's final hidden state, and a
/// single-output dense layer with sigmoid activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub lstm1: LstmParams,
    pub lstm2: LstmParams,
    pub dense: DenseParams,
}

/// Intermediates of one [`Network::forward`] pass, sufficient for an exact
/// backward pass.
#[derive(Debug, Clone)]
pub struct NetworkCache {
    lstm1: LstmCache,
    lstm2: LstmCache,
    dense_input: Vec<f64>,
    output: f64,
    seq_len: usize,
}

/// Gradients for every parameter of a [`Network`], in the same shapes.
#[derive(Debug, Clone)]
pub struct NetworkGrads {
    pub lstm1: LstmGrads,
    pub lstm2: LstmGrads,
    pub dense_weights: Vec<f64>,
    pub dense_bias: f64,
}

impl Network {
    /// Fresh network with HeNormal weights and zero biases. Fill order is
    /// fixed (lstm1 W gates i,f,g,o, then U gates, then lstm2 likewise,
    /// then the dense row); changing it changes every trained model.
    pub fn he_normal(input_dim: usize, hidden1: usize, hidden2: usize, rng: &mut SplitMix64) -> Self {
        let lstm1 = LstmParams::he_normal(input_dim, hidden1, rng);
        let lstm2 = LstmParams::he_normal(hidden1, hidden2, rng);
        let head_in = hidden2 + 1;
        let dense_matrix = he_normal_with(rng, 1, head_in);
        Self {
            lstm1,
            lstm2,
            dense: DenseParams { weights: dense_matrix.row(0).to_vec(), bias: 0.0 },
        }
    }

    pub fn input_dim(&self) -> usize {
        self.lstm1.input_dim
    }

    /// Dimension checks shared by forward and model loading.
    pub fn validate_dims(&self) -> Result<(), NnError> {
        self.lstm1.validate_dims()?;
        self.lstm2.validate_dims()?;
        if self.lstm2.input_dim != self.lstm1.hidden {
            return Err(NnError::DimensionMismatch(format!(
                "second LSTM expects input {} but first LSTM is {} wide",
                self.lstm2.input_dim, self.lstm1.hidden
            )));
        }
        if self.dense.weights.len() != self.lstm2.hidden + 1 {
            return Err(NnError::DimensionMismatch(format!(
                "dense head has {} weights, expected {}",
                self.dense.weights.len(),
                self.lstm2.hidden + 1
            )));
        }
        Ok(())
    }

    /// Runs the sequence through both LSTMs from zero state, concatenates
    /// `scalar` to the second LSTM's final hidden state, and applies the
    /// sigmoid dense head.
    pub fn forward(&self, sequence: &[Vec<f64>], scalar: f64) -> Result<(f64, NetworkCache), NnError> {
        if sequence.is_empty() {
            return Err(NnError::DimensionMismatch("empty input sequence".into()));
        }
        let fwd1 = lstm_forward(&self.lstm1, sequence, None)?;
        let fwd2 = lstm_forward(&self.lstm2, &fwd1.hidden_seq, None)?;
        let mut dense_input = fwd2.final_h.clone();
        dense_input.push(scalar);
        let mut pre = self.dense.bias;
        for (w, x) in self.dense.weights.iter().zip(&dense_input) {
            pre += w * x;
        }
        let output = sigmoid(pre);
        Ok((
            output,
            NetworkCache {
                lstm1: fwd1.cache,
                lstm2: fwd2.cache,
                dense_input,
                output,
                seq_len: sequence.len(),
            },
        ))
    }

    /// Exact gradients of a scalar loss with respect to every parameter,
    /// given `d_output` = dLoss/dOutput at the cached forward pass.
    pub fn backward(&self, cache: &NetworkCache, d_output: f64) -> Result<NetworkGrads, NnError> {
        if cache.lstm1.input_dim() != self.lstm1.input_dim
            || cache.lstm1.hidden() != self.lstm1.hidden
            || cache.lstm2.input_dim() != self.lstm2.input_dim
            || cache.lstm2.hidden() != self.lstm2.hidden
            || cache.dense_input.len() != self.dense.weights.len()
        {
            return Err(NnError::StaleCache);
        }
        let y = cache.output;
        let d_pre = d_output * y * (1.0 - y);

        let dense_weights: Vec<f64> = cache.dense_input.iter().map(|x| d_pre * x).collect();
        let dense_bias = d_pre;

        // Upstream gradient for the second LSTM: only its final hidden
        // state feeds the head.
        let h2 = self.lstm2.hidden;
        let mut d_h2 = vec![vec![0.0; h2]; cache.seq_len];
        for (d, w) in d_h2[cache.seq_len - 1].iter_mut().zip(&self.dense.weights) {
            *d = d_pre * w;
        }
        let (lstm2_grads, d_h1) = lstm_backward(&self.lstm2, &cache.lstm2, &d_h2)?;
        let (lstm1_grads, _) = lstm_backward(&self.lstm1, &cache.lstm1, &d_h1)?;

        Ok(NetworkGrads {
            lstm1: lstm1_grads,
            lstm2: lstm2_grads,
            dense_weights,
            dense_bias,
        })
    }

    pub fn param_count(&self) -> usize {
        self.lstm1.param_count() + self.lstm2.param_count() + self.dense.weights.len() + 1
    }

    /// All parameters as one flat vector. Order: lstm1 (W gates i,f,g,o
    /// row-major, U gates, biases), lstm2 likewise, dense weights, dense
    /// bias. [`Network::assign_flat`] is the inverse.
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        self.lstm1.flatten_into(&mut flat);
        self.lstm2.flatten_into(&mut flat);
        flat.extend_from_slice(&self.dense.weights);
        flat.push(self.dense.bias);
        flat
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<(), NnError> {
        if flat.len() != self.param_count() {
            return Err(NnError::DimensionMismatch(format!(
                "{} flat parameters for a network of {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        self.lstm1.assign_from(flat, &mut offset);
        self.lstm2.assign_from(flat, &mut offset);
        let n = self.dense.weights.len();
        self.dense.weights.copy_from_slice(&flat[offset..offset + n]);
        offset += n;
        self.dense.bias = flat[offset];
        Ok(())
    }
}

impl NetworkGrads {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            lstm1: LstmGrads::zeros(net.lstm1.input_dim, net.lstm1.hidden),
            lstm2: LstmGrads::zeros(net.lstm2.input_dim, net.lstm2.hidden),
            dense_weights: vec![0.0; net.dense.weights.len()],
            dense_bias: 0.0,
        }
    }

    pub fn add_assign(&mut self, other: &NetworkGrads) {
        self.lstm1.add_assign(&other.lstm1);
        self.lstm2.add_assign(&other.lstm2);
        for (a, b) in self.dense_weights.iter_mut().zip(&other.dense_weights) {
            *a += b;
        }
        self.dense_bias += other.dense_bias;
    }

    pub fn scale(&mut self, factor: f64) {
        self.lstm1.scale(factor);
        self.lstm2.scale(factor);
        for w in &mut self.dense_weights {
            *w *= factor;
        }
        self.dense_bias *= factor;
    }

    /// Same layout as [`Network::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        self.lstm1.flatten_into(&mut flat);
        self.lstm2.flatten_into(&mut flat);
        flat.extend_from_slice(&self.dense_weights);
        flat.push(self.dense_bias);
        flat
    }
}
