//! The focal agent's model of the other agent and the factor correspondence
//! between the two perspectives.

use serde::{Deserialize, Serialize};

use super::collision::{build_collision_model_with, CollisionParams};
use super::foraging::{build_foraging_model_with, ForagingParams, FIRST_ITEM, OTHER, OWN};
use super::grid::Task;
use super::{AgentRole, GenerativeModel, ModelError};

/// One mapped factor: index in the other's model and in the focal model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorPair {
    pub other: usize,
    pub focal: usize,
}

/// Bijection between a subset of the other's factors and the focal's factors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FactorPair>", into = "Vec<FactorPair>")]
pub struct Correspondence {
    pairs: Vec<FactorPair>,
}

impl TryFrom<Vec<FactorPair>> for Correspondence {
    type Error = ModelError;

    fn try_from(pairs: Vec<FactorPair>) -> Result<Self, ModelError> {
        for (i, p) in pairs.iter().enumerate() {
            if pairs[..i].iter().any(|q| q.other == p.other || q.focal == p.focal) {
                return Err(ModelError::Invalid(format!(
                    "correspondence maps factor {}<->{} twice",
                    p.other, p.focal
                )));
            }
        }
        Ok(Self { pairs })
    }
}

impl From<Correspondence> for Vec<FactorPair> {
    fn from(c: Correspondence) -> Self {
        c.pairs
    }
}

impl Correspondence {
    pub fn new(pairs: Vec<FactorPair>) -> Result<Self, ModelError> {
        Self::try_from(pairs)
    }

    /// Checks indices and cardinalities against both models.
    pub fn check(&self, focal: &GenerativeModel, other: &GenerativeModel) -> Result<(), ModelError> {
        for p in &self.pairs {
            let (Some(fo), Some(ff)) = (other.factors.get(p.other), focal.factors.get(p.focal)) else {
                return Err(ModelError::Invalid(format!(
                    "correspondence pair {}<->{} out of range",
                    p.other, p.focal
                )));
            };
            if fo.state_count() != ff.state_count() {
                return Err(ModelError::Invalid(format!(
                    "correspondence pair {}<->{} has cardinalities {} and {}",
                    p.other,
                    p.focal,
                    fo.state_count(),
                    ff.state_count()
                )));
            }
        }
        Ok(())
    }

    pub fn pairs(&self) -> &[FactorPair] {
        &self.pairs
    }

    pub fn focal_of(&self, other: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.other == other).map(|p| p.focal)
    }

    pub fn other_of(&self, focal: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.focal == focal).map(|p| p.other)
    }

    /// Canonical mapping for a task: locations swap, items map to themselves.
    pub fn for_task(task: Task) -> Self {
        let mut pairs = vec![FactorPair { other: 0, focal: 1 }, FactorPair { other: 1, focal: 0 }];
        if task == Task::Foraging {
            debug_assert_eq!((OWN, OTHER), (0, 1));
            pairs.extend((FIRST_ITEM..FIRST_ITEM + 6).map(|k| FactorPair { other: k, focal: k }));
        }
        Self { pairs }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OtherModel {
    pub model: GenerativeModel,
    pub correspondence: Correspondence,
}

/// The other agent's model, built from its known goal (collision) or start
/// cell (foraging), with the other's preferences and its own perspective.
pub fn model_of_other(task: Task, cell: usize) -> Result<OtherModel, ModelError> {
    let model = match task {
        Task::Collision => build_collision_model_with(AgentRole::Other, &CollisionParams::new(cell))?,
        Task::Foraging => build_foraging_model_with(AgentRole::Other, &ForagingParams::new(cell))?,
    };
    Ok(OtherModel {
        model,
        correspondence: Correspondence::for_task(task),
    })
}
