//! Ground-truth two-agent gridworld for both tasks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::grid::{Action, Grid, Task};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("episode already finished")]
    TerminalState,
    #[error("action {action:?} is not available in the {task:?} task")]
    BadAction { task: Task, action: Action },
    #[error("bad environment configuration: {0}")]
    Config(String),
}

pub const RED: usize = 0;
pub const PURPLE: usize = 1;
pub const AGENT_NAMES: [&str; 2] = ["red", "purple"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub task: Task,
    #[serde(default)]
    pub grid: Grid,
    /// Start cell per agent.
    pub starts: [usize; 2],
    /// Goal cell per agent (collision task).
    #[serde(default)]
    pub goals: [usize; 2],
    #[serde(default = "default_known")]
    pub known_apples: Vec<usize>,
    #[serde(default = "default_spawn")]
    pub spawn_probability: f64,
    #[serde(default = "default_cap")]
    pub step_cap: usize,
    /// Count agents exchanging cells in one step as a collision.
    #[serde(default)]
    pub swap_is_collision: bool,
}

fn default_known() -> Vec<usize> {
    vec![9]
}

fn default_spawn() -> f64 {
    0.25
}

fn default_cap() -> usize {
    12
}

impl EnvConfig {
    pub fn collision() -> Self {
        Self {
            task: Task::Collision,
            grid: Grid::default(),
            starts: [1, 9],
            goals: [9, 1],
            known_apples: default_known(),
            spawn_probability: default_spawn(),
            step_cap: default_cap(),
            swap_is_collision: false,
        }
    }

    pub fn foraging(starts: [usize; 2]) -> Self {
        Self {
            task: Task::Foraging,
            starts,
            goals: [0, 0],
            ..Self::collision()
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let g = self.grid;
        for &c in &self.starts {
            if !g.contains(c) {
                return Err(EnvError::Config(format!("start cell {c} is off the grid")));
            }
        }
        if self.task == Task::Collision {
            for &c in &self.goals {
                if !g.contains(c) {
                    return Err(EnvError::Config(format!("goal cell {c} is off the grid")));
                }
            }
            if self.starts[0] == self.starts[1] {
                return Err(EnvError::Config("agents cannot start on the same cell".into()));
            }
        }
        let orchard = g.orchard_cells();
        if let Some(c) = self.known_apples.iter().find(|c| !orchard.contains(c)) {
            return Err(EnvError::Config(format!("apple cell {c} is not an orchard cell")));
        }
        if !(0.0..=1.0).contains(&self.spawn_probability) {
            return Err(EnvError::Config("spawn probability outside [0, 1]".into()));
        }
        if self.step_cap == 0 {
            return Err(EnvError::Config("step cap must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Item {
    Apple,
    Empty,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentState {
    pub cell: usize,
    pub stuck: bool,
    /// The last move tried to leave the grid.
    pub null: bool,
    /// Apple eaten in the last step.
    pub ate: bool,
    pub apples: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridWorldState {
    pub agents: [AgentState; 2],
    /// `(cell, item)` for every orchard cell (foraging only).
    pub items: Vec<(usize, Item)>,
    pub step: usize,
    pub collided: bool,
    /// Agent that took the first apple from each initially known cell.
    #[serde(default)]
    pub known_apple_eaters: Vec<(usize, usize)>,
}

impl GridWorldState {
    pub fn item_at(&self, cell: usize) -> Option<Item> {
        self.items.iter().find(|(c, _)| *c == cell).map(|&(_, i)| i)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointAction(pub [Action; 2]);

/// What one agent perceives after a step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentObservation {
    pub own_cell: usize,
    pub other_cell: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_here: Option<ItemObservation>,
    /// Whether the agent has been fed (foraging).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fed: Option<bool>,
    pub null: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ItemObservation {
    Wasteland,
    Apple,
    Empty,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationBundle(pub [AgentObservation; 2]);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub done: bool,
    pub success: bool,
    pub collision: bool,
    pub steps: usize,
    pub apples: [u32; 2],
    pub both_fed: bool,
    /// Agent that ate the first apple at the first known apple cell.
    #[serde(default)]
    pub known_apple_eater: Option<usize>,
}

/// Uniform draw in `[0, 1)` that depends only on `(seed, step, tag)`, so the
/// same events see the same randomness whatever the agents do.
fn draw(seed: u64, step: usize, tag: u64) -> f64 {
    let key = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((step as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(tag.wrapping_mul(0x94D0_49BB_1331_11EB));
    ChaCha8Rng::seed_from_u64(key).gen()
}

const COIN_TAG: u64 = 1 << 32;

pub fn reset(config: &EnvConfig, _seed: u64) -> GridWorldState {
    let agent = |cell| AgentState {
        cell,
        stuck: false,
        null: false,
        ate: false,
        apples: 0,
    };
    let items = match config.task {
        Task::Collision => Vec::new(),
        Task::Foraging => config
            .grid
            .orchard_cells()
            .into_iter()
            .map(|c| {
                (
                    c,
                    if config.known_apples.contains(&c) {
                        Item::Apple
                    } else {
                        Item::Empty
                    },
                )
            })
            .collect(),
    };
    GridWorldState {
        agents: [agent(config.starts[0]), agent(config.starts[1])],
        items,
        step: 0,
        collided: false,
        known_apple_eaters: Vec::new(),
    }
}

fn item_observation(state: &GridWorldState, cell: usize) -> ItemObservation {
    match state.item_at(cell) {
        None => ItemObservation::Wasteland,
        Some(Item::Apple) => ItemObservation::Apple,
        Some(Item::Empty) => ItemObservation::Empty,
    }
}

pub fn observe(config: &EnvConfig, state: &GridWorldState) -> ObservationBundle {
    let one = |me: usize| {
        let a = &state.agents[me];
        let b = &state.agents[1 - me];
        let foraging = config.task == Task::Foraging;
        AgentObservation {
            own_cell: a.cell,
            other_cell: b.cell,
            item_here: foraging.then(|| item_observation(state, a.cell)),
            fed: foraging.then_some(a.apples > 0),
            null: a.null,
        }
    };
    ObservationBundle([one(RED), one(PURPLE)])
}

pub fn step(
    config: &EnvConfig,
    state: &GridWorldState,
    joint: JointAction,
    seed: u64,
) -> Result<(GridWorldState, ObservationBundle), EnvError> {
    if is_done(config, state).done {
        return Err(EnvError::TerminalState);
    }
    for &a in &joint.0 {
        if !config.task.actions().contains(&a) {
            return Err(EnvError::BadAction {
                task: config.task,
                action: a,
            });
        }
    }
    let grid = config.grid;
    let mut next = state.clone();
    next.step += 1;
    let before = [state.agents[0].cell, state.agents[1].cell];
    for (i, agent) in next.agents.iter_mut().enumerate() {
        agent.ate = false;
        agent.null = false;
        if agent.stuck {
            continue;
        }
        match grid.shift(agent.cell, joint.0[i]) {
            Some(c) => agent.cell = c,
            None => agent.null = true,
        }
    }

    if config.task == Task::Collision {
        let same = next.agents[0].cell == next.agents[1].cell;
        let swapped = config.swap_is_collision
            && next.agents[0].cell == before[1]
            && next.agents[1].cell == before[0]
            && before[0] != before[1];
        if same || swapped {
            next.collided = true;
            for a in &mut next.agents {
                a.stuck = true;
            }
        }
    } else {
        let eaters: Vec<usize> = (0..2)
            .filter(|&i| joint.0[i] == Action::Eat && state.item_at(state.agents[i].cell) == Some(Item::Apple))
            .collect();
        let mut eaten: Vec<usize> = Vec::new();
        let mut winners: Vec<usize> = Vec::new();
        match eaters.as_slice() {
            [a, b] if state.agents[*a].cell == state.agents[*b].cell => {
                let cell = state.agents[*a].cell;
                let winner = if draw(seed, next.step, COIN_TAG + cell as u64) < 0.5 {
                    RED
                } else {
                    PURPLE
                };
                winners.push(winner);
                eaten.push(cell);
            }
            list => {
                for &i in list {
                    winners.push(i);
                    eaten.push(state.agents[i].cell);
                }
            }
        }
        for (&w, &cell) in winners.iter().zip(&eaten) {
            next.agents[w].ate = true;
            next.agents[w].apples += 1;
            if let Some(slot) = next.items.iter_mut().find(|(c, _)| *c == cell) {
                slot.1 = Item::Empty;
            }
            if config.known_apples.contains(&cell) && !next.known_apple_eaters.iter().any(|&(c, _)| c == cell) {
                next.known_apple_eaters.push((cell, w));
            }
        }
        for (cell, item) in next.items.iter_mut() {
            if *item == Item::Empty
                && !eaten.contains(cell)
                && draw(seed, next.step, *cell as u64) < config.spawn_probability
            {
                *item = Item::Apple;
            }
        }
    }
    let obs = observe(config, &next);
    Ok((next, obs))
}

pub fn is_done(config: &EnvConfig, state: &GridWorldState) -> Outcome {
    let apples = [state.agents[0].apples, state.agents[1].apples];
    let both_fed = apples.iter().all(|&a| a > 0);
    let capped = state.step >= config.step_cap;
    let (done, success) = match config.task {
        Task::Collision => {
            let home = (0..2).all(|i| state.agents[i].cell == config.goals[i]);
            let stuck = state.agents.iter().any(|a| a.stuck);
            (home || stuck || capped, home && !stuck)
        }
        Task::Foraging => (both_fed || capped, both_fed),
    };
    let first_known = config.known_apples.first();
    Outcome {
        done,
        success,
        collision: state.collided,
        steps: state.step,
        apples,
        both_fed,
        known_apple_eater: state
            .known_apple_eaters
            .iter()
            .find(|(c, _)| Some(c) == first_known)
            .map(|&(_, a)| a),
    }
}
