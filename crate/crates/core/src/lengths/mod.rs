//! Segment length priors estimated from action sets alone.

mod estimate;
mod model;

pub use estimate::{
    coupled_objective, estimate_loss_based, estimate_naive, estimate_sigma, loss_based_means,
    naive_means, LossFit, LossForm, SIGMA_FLOOR,
};
pub use model::{load_length_model, save_length_model, LengthKind, LengthModel};

/// Per-class mean segment length in frames.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanLengths {
    pub lambda: Vec<f64>,
    /// Classes whose value is a fallback rather than an estimate.
    pub flagged: Vec<bool>,
}

impl MeanLengths {
    pub fn new(lambda: Vec<f64>) -> Self {
        let flagged = vec![false; lambda.len()];
        Self { lambda, flagged }
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }
}
