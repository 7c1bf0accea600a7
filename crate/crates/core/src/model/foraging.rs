//! Two-agent foraging model.
//!
//! Factors: own location, other location (state `k` is cell `k + 1`), reward
//! feedback, then one apple/empty item factor per orchard cell.

use serde::{Deserialize, Serialize};

use super::grid::{Action, Grid, FORAGING_ACTIONS};
use super::{
    identity_table, AgentRole, FactorSpec, GenerativeModel, ModalitySpec, ModelError, Perspective, Preferences,
};
use crate::table::ParentLayout;

pub const OWN: usize = 0;
pub const OTHER: usize = 1;
pub const REWARD: usize = 2;
pub const FIRST_ITEM: usize = 3;

pub const APPLE: usize = 0;
pub const EMPTY: usize = 1;

pub const WASTELAND_OUTCOME: usize = 0;
pub const APPLE_OUTCOME: usize = 1;
pub const EMPTY_OUTCOME: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForagingParams {
    #[serde(default)]
    pub grid: Grid,
    pub start_cell: usize,
    #[serde(default = "default_reward_preference")]
    pub reward_preference: f64,
    #[serde(default = "default_spawn_probability")]
    pub spawn_probability: f64,
    /// Orchard cells believed with certainty to hold an apple at the start.
    #[serde(default = "default_known_apples")]
    pub known_apples: Vec<usize>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
}

fn default_reward_preference() -> f64 {
    10.0
}

fn default_spawn_probability() -> f64 {
    0.25
}

fn default_known_apples() -> Vec<usize> {
    vec![9]
}

fn default_horizon() -> usize {
    3
}

impl ForagingParams {
    pub fn new(start_cell: usize) -> Self {
        Self {
            grid: Grid::default(),
            start_cell,
            reward_preference: default_reward_preference(),
            spawn_probability: default_spawn_probability(),
            known_apples: default_known_apples(),
            horizon: default_horizon(),
        }
    }
}

pub fn build_foraging_model(role: AgentRole, start_cell: usize) -> Result<GenerativeModel, ModelError> {
    build_foraging_model_with(role, &ForagingParams::new(start_cell))
}

pub fn build_foraging_model_with(role: AgentRole, params: &ForagingParams) -> Result<GenerativeModel, ModelError> {
    let grid = params.grid;
    let bad = |cell| ModelError::BadCell {
        cell,
        width: grid.width,
        height: grid.height,
    };
    if !grid.contains(params.start_cell) {
        return Err(bad(params.start_cell));
    }
    let orchard = grid.orchard_cells();
    if let Some(&c) = params.known_apples.iter().find(|c| !orchard.contains(c)) {
        return Err(bad(c));
    }
    if !(0.0..=1.0).contains(&params.spawn_probability) {
        return Err(ModelError::Invalid(format!(
            "spawn probability {} outside [0, 1]",
            params.spawn_probability
        )));
    }

    let cells = grid.cell_count();
    let n_items = orchard.len();
    let n_actions = FORAGING_ACTIONS.len();
    let eat = FORAGING_ACTIONS
        .iter()
        .position(|&a| a == Action::Eat)
        .expect("eat action");
    let cell_names: Vec<String> = (1..=cells).map(|c| c.to_string()).collect();
    let item_of_cell = |cell: usize| orchard.iter().position(|&c| c == cell);

    // own: invalid moves stay in place
    let mut own = vec![0.0; n_actions * cells * cells];
    for (a, &action) in FORAGING_ACTIONS.iter().enumerate() {
        for s in 0..cells {
            let next = grid.shift(s + 1, action).unwrap_or(s + 1) - 1;
            own[(a * cells + s) * cells + next] = 1.0;
        }
    }

    let mut other = vec![0.0; cells * cells];
    for s in 0..cells {
        let reach = grid.reachable(s + 1, &FORAGING_ACTIONS);
        let p = 1.0 / reach.len() as f64;
        for next in reach {
            other[s * cells + next - 1] = p;
        }
    }

    // items: parent = own location; eating at the cell empties an apple
    let spawn = params.spawn_probability;
    let item_transition = |cell: usize| {
        let mut t = vec![0.0; n_actions * 2 * cells * 2];
        for a in 0..n_actions {
            for state in [APPLE, EMPTY] {
                for loc in 0..cells {
                    let base = ((a * 2 + state) * cells + loc) * 2;
                    let consumed = a == eat && loc + 1 == cell && state == APPLE;
                    if consumed {
                        t[base + EMPTY] = 1.0;
                    } else if state == APPLE {
                        t[base + APPLE] = 1.0;
                    } else {
                        t[base + APPLE] = spawn;
                        t[base + EMPTY] = 1.0 - spawn;
                    }
                }
            }
        }
        t
    };

    // reward and the item modality share the parent list [own, items...];
    // once received, the reward state is kept
    let item_parents: Vec<usize> = std::iter::once(OWN).chain(FIRST_ITEM..FIRST_ITEM + n_items).collect();
    let mut cards = vec![cells];
    cards.extend(std::iter::repeat_n(2, n_items));
    let layout = ParentLayout::new(&cards);
    let configs = layout.size();
    let mut values = vec![0usize; cards.len()];

    let mut reward = vec![0.0; n_actions * 2 * configs * 2];
    let mut item_obs = vec![0.0; configs * 3];
    for pc in 0..configs {
        layout.decode(pc, &mut values);
        let cell = values[0] + 1;
        let here = item_of_cell(cell).map(|k| values[1 + k]);
        for a in 0..n_actions {
            let got = a == eat && here == Some(APPLE);
            for r in 0..2 {
                let next = usize::from(got || r == 1);
                reward[((a * 2 + r) * configs + pc) * 2 + next] = 1.0;
            }
        }
        let o = match here {
            None => WASTELAND_OUTCOME,
            Some(APPLE) => APPLE_OUTCOME,
            Some(_) => EMPTY_OUTCOME,
        };
        item_obs[pc * 3 + o] = 1.0;
    }

    let mut factors = vec![
        FactorSpec {
            name: "own-location".into(),
            states: cell_names.clone(),
            parents: vec![],
            controlled: true,
            perspective: Perspective::Own,
            transition: own,
        },
        FactorSpec {
            name: "other-location".into(),
            states: cell_names.clone(),
            parents: vec![],
            controlled: false,
            perspective: Perspective::World,
            transition: other,
        },
        FactorSpec {
            name: "reward".into(),
            states: vec!["none".into(), "received".into()],
            parents: item_parents.clone(),
            controlled: true,
            perspective: Perspective::Own,
            transition: reward,
        },
    ];
    let mut priors = vec![
        {
            let mut d = vec![0.0; cells];
            d[params.start_cell - 1] = 1.0;
            d
        },
        vec![1.0 / cells as f64; cells],
        vec![1.0, 0.0],
    ];
    for &cell in &orchard {
        factors.push(FactorSpec {
            name: format!("item-{cell}"),
            states: vec!["apple".into(), "empty".into()],
            parents: vec![OWN],
            controlled: true,
            perspective: Perspective::World,
            transition: item_transition(cell),
        });
        priors.push(if params.known_apples.contains(&cell) {
            vec![1.0, 0.0]
        } else {
            vec![0.5, 0.5]
        });
    }

    let mut c_reward = vec![0.0, 0.0];
    c_reward[1] = params.reward_preference;

    let role_name = match role {
        AgentRole::Focal => "focal",
        AgentRole::Other => "other",
    };
    Ok(GenerativeModel {
        name: format!("foraging-{role_name}-start{}", params.start_cell),
        factors,
        modalities: vec![
            ModalitySpec {
                name: "own-location".into(),
                outcomes: cell_names.clone(),
                parents: vec![OWN],
                likelihood: identity_table(cells),
            },
            ModalitySpec {
                name: "other-location".into(),
                outcomes: cell_names,
                parents: vec![OTHER],
                likelihood: identity_table(cells),
            },
            ModalitySpec {
                name: "item-here".into(),
                outcomes: vec!["wasteland".into(), "apple".into(), "empty".into()],
                parents: item_parents,
                likelihood: item_obs,
            },
            ModalitySpec {
                name: "reward".into(),
                outcomes: vec!["none".into(), "received".into()],
                parents: vec![REWARD],
                likelihood: identity_table(2),
            },
        ],
        preferences: Preferences(vec![vec![0.0; cells], vec![0.0; cells], vec![0.0; 3], c_reward]),
        priors,
        actions: FORAGING_ACTIONS.iter().map(|a| a.label().to_string()).collect(),
        horizon: params.horizon,
        reference_action: Some(FORAGING_ACTIONS.len() - 1),
        interaction: None,
    })
}
