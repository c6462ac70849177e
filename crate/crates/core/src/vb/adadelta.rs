use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

/// Per-coordinate ADADELTA learning rates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState {
    pub e_grad2: Vec<f64>,
    pub e_delta2: Vec<f64>,
    pub upsilon: f64,
    pub alpha: f64,
}

pub const DEFAULT_UPSILON: f64 = 0.95;
pub const DEFAULT_ALPHA: f64 = 1e-6;

impl AdadeltaState {
    pub fn new(dim: usize) -> Self {
        Self::with_params(dim, DEFAULT_UPSILON, DEFAULT_ALPHA)
    }

    pub fn with_params(dim: usize, upsilon: f64, alpha: f64) -> Self {
        Self { e_grad2: vec![0.0; dim], e_delta2: vec![0.0; dim], upsilon, alpha }
    }

    pub fn dim(&self) -> usize {
        self.e_grad2.len()
    }

    /// Ascent step `Δ = 𝒶∘g`, updating both moving averages.
    pub fn step(&mut self, grad: &[f64]) -> Vec<f64> {
        assert_eq!(grad.len(), self.dim(), "gradient length");
        let (u, a) = (self.upsilon, self.alpha);
        grad.iter()
            .zip(self.e_grad2.iter_mut().zip(self.e_delta2.iter_mut()))
            .map(|(&g, (eg, ed))| {
                *eg = u * *eg + (1.0 - u) * g * g;
                let delta = ((*ed + a) / (*eg + a)).sqrt() * g;
                *ed = u * *ed + (1.0 - u) * delta * delta;
                delta
            })
            .collect()
    }
}

/// Functional form of [`AdadeltaState::step`].
pub fn adadelta_step(mut state: AdadeltaState, grad: &[f64]) -> (Vec<f64>, AdadeltaState) {
    let d = state.step(grad);
    (d, state)
}
