//! RMSprop over flat parameter vectors.
//!
//! Update rule, element-wise:
//!
//! ```text
//! acc <- rho * acc + (1 - rho) * g^2
//! p   <- p - lr * (g + weight_decay * p) / (sqrt(acc) + epsilon)
//! ```
//!
//! Weight decay enters the update as a decoupled additive term; the
//! accumulator sees the raw gradient only.

use super::NnError;

#[derive(Debug, Clone, PartialEq)]
pub struct RmspropState {
    acc: Vec<f64>,
    pub rho: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl RmspropState {
    /// Zeroed accumulators with the conventional rho 0.9 and epsilon 1e-8.
    pub fn new(param_count: usize, learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            acc: vec![0.0; param_count],
            rho: 0.9,
            epsilon: 1e-8,
            learning_rate,
            weight_decay,
        }
    }

    pub fn accumulators(&self) -> &[f64] {
        &self.acc
    }
}

/// One RMSprop step over `params` in place.
pub fn rmsprop_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut RmspropState,
) -> Result<(), NnError> {
    if params.len() != grads.len() || params.len() != state.acc.len() {
        return Err(NnError::DimensionMismatch(format!(
            "{} params, {} grads, {} accumulators",
            params.len(),
            grads.len(),
            state.acc.len()
        )));
    }
    let one_minus_rho = 1.0 - state.rho;
    for ((p, &g), acc) in params.iter_mut().zip(grads).zip(&mut state.acc) {
        *acc = state.rho * *acc + one_minus_rho * g * g;
        *p -= state.learning_rate * (g + state.weight_decay * *p) / (acc.sqrt() + state.epsilon);
    }
    Ok(())
}
