use thiserror::Error;

use crate::belief::BeliefError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("horizon must be at least 1, got {0}")]
    InvalidHorizon(usize),
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),
    #[error("belief does not match the model: {0}")]
    BeliefMismatch(String),
    #[error("no correspondence for {perspective} factor {factor} ({name})")]
    CorrespondenceGap {
        perspective: &'static str,
        factor: usize,
        name: String,
    },
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
