//! Regression backends for the inverse statics estimate.

pub mod batch;
pub mod lattice;
pub mod llm;

use serde::{Deserialize, Serialize};

use crate::model::{Configuration, TorqueVector};

pub use batch::{batch_train, BatchConfig, BatchNet};
pub use lattice::lattice_sample;
pub use llm::{Blend, LlmConfig, LocalLinearMap};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrainingSample {
    pub tau_plus: TorqueVector,
    pub q_plus: Configuration,
    pub weight: f64,
}

impl TrainingSample {
    pub fn new(tau_plus: TorqueVector, q_plus: Configuration, weight: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&weight));
        TrainingSample { tau_plus, q_plus, weight }
    }
}

/// Anything that maps configurations to torques.
pub trait InverseStatics {
    fn predict(&self, q: &[f64]) -> TorqueVector;
}

impl InverseStatics for LocalLinearMap {
    fn predict(&self, q: &[f64]) -> TorqueVector {
        LocalLinearMap::predict(self, q)
    }
}

impl InverseStatics for BatchNet {
    fn predict(&self, q: &[f64]) -> TorqueVector {
        BatchNet::predict(self, q)
    }
}

/// The true gravity term wrapped as a learner, for sanity baselines.
pub struct Oracle<'a>(pub &'a crate::model::ManipulatorModel);

impl InverseStatics for Oracle<'_> {
    fn predict(&self, q: &[f64]) -> TorqueVector {
        self.0.gravity_term(q)
    }
}
