//! Two-agent collision-avoidance model: own and other location, each with a
//! null state at index 0 and cells `1..=W*H` at their own index.

use serde::{Deserialize, Serialize};

use super::grid::{Grid, COLLISION_ACTIONS};
use super::{
    identity_table, AgentRole, FactorSpec, GenerativeModel, InteractionRule, ModalitySpec, ModelError, Perspective,
    Preferences,
};

pub const NULL_STATE: usize = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionParams {
    #[serde(default)]
    pub grid: Grid,
    pub goal_cell: usize,
    #[serde(default = "default_goal_preference")]
    pub goal_preference: f64,
    #[serde(default = "default_null_preference")]
    pub null_preference: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
}

fn default_goal_preference() -> f64 {
    10.0
}

fn default_null_preference() -> f64 {
    -100.0
}

fn default_horizon() -> usize {
    3
}

impl CollisionParams {
    pub fn new(goal_cell: usize) -> Self {
        Self {
            grid: Grid::default(),
            goal_cell,
            goal_preference: default_goal_preference(),
            null_preference: default_null_preference(),
            horizon: default_horizon(),
        }
    }
}

pub fn build_collision_model(role: AgentRole, goal_cell: usize) -> Result<GenerativeModel, ModelError> {
    build_collision_model_with(role, &CollisionParams::new(goal_cell))
}

pub fn build_collision_model_with(role: AgentRole, params: &CollisionParams) -> Result<GenerativeModel, ModelError> {
    let grid = params.grid;
    if !grid.contains(params.goal_cell) {
        return Err(ModelError::BadCell {
            cell: params.goal_cell,
            width: grid.width,
            height: grid.height,
        });
    }
    let cells = grid.cell_count();
    let s = cells + 1;
    let state_names: Vec<String> = std::iter::once("null".to_string())
        .chain((1..=cells).map(|c| c.to_string()))
        .collect();

    // own: deterministic, off-grid moves enter null, null absorbs
    let n_actions = COLLISION_ACTIONS.len();
    let mut own = vec![0.0; n_actions * s * s];
    for (a, &action) in COLLISION_ACTIONS.iter().enumerate() {
        for state in 0..s {
            let next = if state == NULL_STATE {
                NULL_STATE
            } else {
                grid.shift(state, action).unwrap_or(NULL_STATE)
            };
            own[(a * s + state) * s + next] = 1.0;
        }
    }

    // other: uniform over the cells its own valid moves reach
    let mut other = vec![0.0; s * s];
    other[NULL_STATE * s + NULL_STATE] = 1.0;
    for cell in 1..=cells {
        let reach = grid.reachable(cell, &COLLISION_ACTIONS);
        let p = 1.0 / reach.len() as f64;
        for next in reach {
            other[cell * s + next] = p;
        }
    }

    let mut c_own = vec![0.0; s];
    c_own[params.goal_cell] = params.goal_preference;
    c_own[NULL_STATE] = params.null_preference;

    let mut prior = vec![1.0 / cells as f64; s];
    prior[NULL_STATE] = 0.0;

    let role_name = match role {
        AgentRole::Focal => "focal",
        AgentRole::Other => "other",
    };
    Ok(GenerativeModel {
        name: format!("collision-{role_name}-goal{}", params.goal_cell),
        factors: vec![
            FactorSpec {
                name: "own-location".into(),
                states: state_names.clone(),
                parents: vec![],
                controlled: true,
                perspective: Perspective::Own,
                transition: own,
            },
            FactorSpec {
                name: "other-location".into(),
                states: state_names.clone(),
                parents: vec![],
                controlled: false,
                perspective: Perspective::World,
                transition: other,
            },
        ],
        modalities: vec![
            ModalitySpec {
                name: "own-location".into(),
                outcomes: state_names.clone(),
                parents: vec![0],
                likelihood: identity_table(s),
            },
            ModalitySpec {
                name: "other-location".into(),
                outcomes: state_names,
                parents: vec![1],
                likelihood: identity_table(s),
            },
        ],
        preferences: Preferences(vec![c_own, vec![0.0; s]]),
        priors: vec![prior.clone(), prior],
        actions: COLLISION_ACTIONS.iter().map(|a| a.label().to_string()).collect(),
        horizon: params.horizon,
        reference_action: Some(COLLISION_ACTIONS.len() - 1),
        interaction: Some(InteractionRule::StuckOnCoOccupancy {
            own_factor: 0,
            other_factor: 1,
            excluded_states: vec![NULL_STATE],
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{Categorical, FactoredBelief};

    fn at(own: usize, other: usize) -> FactoredBelief {
        FactoredBelief::new(vec![Categorical::delta(10, own), Categorical::delta(10, other)])
    }

    #[test]
    fn valid_for_every_goal() {
        for goal in 1..=9 {
            for role in [AgentRole::Focal, AgentRole::Other] {
                let m = build_collision_model(role, goal).unwrap();
                assert!(m.validate().is_empty(), "goal {goal}: {:?}", m.validate());
            }
        }
        assert!(matches!(
            build_collision_model(AgentRole::Focal, 10),
            Err(ModelError::BadCell { cell: 10, .. })
        ));
    }

    #[test]
    fn other_from_corner_is_quarter_each() {
        let m = build_collision_model(AgentRole::Focal, 9).unwrap();
        let next = m.predict(&at(5, 1), 8);
        let p = next.factor(1).probs();
        for cell in [1, 2, 4, 5] {
            assert!((p[cell] - 0.25).abs() < 1e-15);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn support_sizes_corner_edge_center() {
        let m = build_collision_model(AgentRole::Focal, 9).unwrap();
        for (cell, n) in [(1, 4), (3, 4), (2, 6), (4, 6), (5, 9)] {
            let next = m.predict(&at(5, cell), 8);
            let support = next.factor(1).probs().iter().filter(|&&p| p > 0.0).count();
            assert_eq!(support, n, "cell {cell}");
        }
    }

    #[test]
    fn own_moves_are_deterministic() {
        let m = build_collision_model(AgentRole::Focal, 9).unwrap();
        let up = m.action_index("up").unwrap();
        assert_eq!(m.predict(&at(1, 9), up).factor(0).probs()[NULL_STATE], 1.0);
        assert_eq!(m.predict(&at(5, 9), 8).factor(0).probs()[5], 1.0);
        for state in 0..10 {
            for a in 0..9 {
                let next = m.predict(&at(state, 9), a);
                assert!(next.factor(0).is_delta());
            }
        }
    }

    #[test]
    fn preferences_mark_goal_and_null() {
        let m = build_collision_model(AgentRole::Other, 1).unwrap();
        assert_eq!(m.preferences.0[0][1], 10.0);
        assert_eq!(m.preferences.0[0][0], -100.0);
        assert!(m.preferences.0[1].iter().all(|&c| c == 0.0));
    }
}
