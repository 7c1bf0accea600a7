//! Episode and batch driver: configuration, closed-loop runs, metrics and
//! tree export.

pub mod agent;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{self, EnvConfig, EnvError, GridWorldState, JointAction, ObservationBundle, Outcome, AGENT_NAMES};
use crate::error::PlanError;
use crate::model::collision::{build_collision_model_with, CollisionParams};
use crate::model::foraging::{build_foraging_model_with, ForagingParams};
use crate::model::{AgentRole, Correspondence, GenerativeModel, Grid, ModelError, OtherModel, Task};
use crate::si::SelectionMode;
use crate::tom::ToMPlannerConfig;
use crate::tree::{PlanTree, TreeError};

pub use agent::{outcome_indices, Agent, Decision, SiAgent, ToMAgent};

pub const COLLISION_PRESET: &str = include_str!("../../configs/collision.toml");
pub const FORAGING_PRESET: &str = include_str!("../../configs/foraging.toml");

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("cannot parse run configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("tree export needs a non-empty tree")]
    EmptyTree,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerKind {
    Si,
    Tom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    /// Both agents plan with sophisticated inference alone.
    NonTom,
    /// Red models purple; purple stays non-ToM.
    Tom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub planner: PlannerKind,
    pub start: usize,
    /// Goal cell (collision task).
    #[serde(default)]
    pub goal: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceConfig {
    #[serde(default = "ten")]
    pub goal: f64,
    #[serde(default = "minus_hundred")]
    pub null: f64,
    #[serde(default = "ten")]
    pub reward: f64,
}

fn ten() -> f64 {
    10.0
}

fn minus_hundred() -> f64 {
    -100.0
}

impl Default for PreferenceConfig {
    fn default() -> Self {
        Self {
            goal: ten(),
            null: minus_hundred(),
            reward: ten(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExportConfig {
    /// Keep each agent's planning tree for every step.
    #[serde(default)]
    pub trees: bool,
    /// Store posterior beliefs on observation nodes of exported trees.
    #[serde(default)]
    pub beliefs: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: Task,
    #[serde(default)]
    pub grid: Grid,
    pub red: AgentConfig,
    pub purple: AgentConfig,
    /// Shared by both agents; SI agents ignore the other-agent knobs.
    #[serde(default = "default_planner")]
    pub planner: ToMPlannerConfig,
    #[serde(default = "default_selection")]
    pub selection: SelectionMode,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_cap")]
    pub step_cap: usize,
    #[serde(default)]
    pub swap_is_collision: bool,
    #[serde(default = "default_known")]
    pub known_apples: Vec<usize>,
    #[serde(default = "default_spawn")]
    pub spawn_probability: f64,
    #[serde(default)]
    pub preferences: PreferenceConfig,
    #[serde(default)]
    pub export: ExportConfig,
}

fn default_planner() -> ToMPlannerConfig {
    toml::from_str("").expect("planner defaults")
}

fn default_selection() -> SelectionMode {
    SelectionMode::Argmax
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_cap() -> usize {
    12
}

fn default_known() -> Vec<usize> {
    vec![9]
}

fn default_spawn() -> f64 {
    0.25
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run configuration serialises")
    }

    pub fn preset(task: Task, condition: Condition) -> Self {
        let text = match task {
            Task::Collision => COLLISION_PRESET,
            Task::Foraging => FORAGING_PRESET,
        };
        let mut cfg: Self = toml::from_str(text).expect("bundled preset parses");
        cfg.set_condition(condition);
        cfg
    }

    pub fn set_condition(&mut self, condition: Condition) {
        self.red.planner = match condition {
            Condition::NonTom => PlannerKind::Si,
            Condition::Tom => PlannerKind::Tom,
        };
        self.purple.planner = PlannerKind::Si;
    }

    pub fn agents(&self) -> [&AgentConfig; 2] {
        [&self.red, &self.purple]
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.agents().iter().filter(|a| a.planner == PlannerKind::Tom).count() > 1 {
            return bad("at most one agent may use the theory-of-mind planner".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.task == Task::Collision {
            for (name, a) in AGENT_NAMES.iter().zip(self.agents()) {
                if a.goal.is_none() {
                    return bad(format!("{name} needs a goal cell in the collision task"));
                }
            }
        }
        self.planner.validate()?;
        self.env_config().validate()?;
        for role in [0, 1] {
            self.model_for(role, AgentRole::Focal)?;
        }
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            task: self.task,
            grid: self.grid,
            starts: [self.red.start, self.purple.start],
            goals: [self.red.goal.unwrap_or(0), self.purple.goal.unwrap_or(0)],
            known_apples: self.known_apples.clone(),
            spawn_probability: self.spawn_probability,
            step_cap: self.step_cap,
            swap_is_collision: self.swap_is_collision,
        }
    }

    /// Agent `of`'s generative model, in its own (focal) or modelled (other) role.
    fn model_for(&self, of: usize, role: AgentRole) -> Result<GenerativeModel, ModelError> {
        let a = self.agents()[of];
        let horizon = self.planner.base.horizon;
        match self.task {
            Task::Collision => build_collision_model_with(
                role,
                &CollisionParams {
                    grid: self.grid,
                    goal_cell: a.goal.unwrap_or(0),
                    goal_preference: self.preferences.goal,
                    null_preference: self.preferences.null,
                    horizon,
                },
            ),
            Task::Foraging => build_foraging_model_with(
                role,
                &ForagingParams {
                    grid: self.grid,
                    start_cell: a.start,
                    reward_preference: self.preferences.reward,
                    spawn_probability: self.spawn_probability,
                    known_apples: self.known_apples.clone(),
                    horizon,
                },
            ),
        }
    }

    pub fn focal_model(&self, agent: usize) -> Result<GenerativeModel, ModelError> {
        self.model_for(agent, AgentRole::Focal)
    }

    /// What `agent` believes about the other agent's model.
    pub fn other_model(&self, agent: usize) -> Result<OtherModel, ModelError> {
        Ok(OtherModel {
            model: self.model_for(1 - agent, AgentRole::Other)?,
            correspondence: Correspondence::for_task(self.task),
        })
    }

    fn build_agent(&self, agent: usize) -> Result<Box<dyn Agent + Send>, HarnessError> {
        let mut planner = self.planner.clone();
        planner.base.record_beliefs = self.export.beliefs;
        let focal = self.focal_model(agent)?;
        Ok(match self.agents()[agent].planner {
            PlannerKind::Si => Box::new(SiAgent::new(focal, planner.base)),
            PlannerKind::Tom => Box::new(ToMAgent::new(focal, self.other_model(agent)?, planner)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    pub action: String,
    pub posterior: Vec<f64>,
    pub efe: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other_posterior: Option<Vec<f64>>,
    /// Factors whose belief was reset because the observation ruled it out.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub surprised: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub cells: [usize; 2],
    pub observations: ObservationBundle,
    pub agents: [AgentStep; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub seed: u64,
    #[serde(flatten)]
    pub outcome: Outcome,
    /// Steps until each agent first stood on its goal (collision task).
    pub path_lengths: [Option<usize>; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepTree {
    pub step: usize,
    pub agent: usize,
    pub tree: PlanTree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub trace: Vec<StepRecord>,
    pub outcome: EpisodeOutcome,
    pub final_state: GridWorldState,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trees: Vec<StepTree>,
}

/// Per-step sampling stream; independent of what happened earlier.
fn step_rng(seed: u64, step: usize, agent: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((step as u64) << 1) | agent as u64);
    rng
}

/// A live episode advanced one joint step at a time.
pub struct Simulation {
    config: RunConfig,
    env: EnvConfig,
    seed: u64,
    agents: [Box<dyn Agent + Send>; 2],
    state: GridWorldState,
    obs: ObservationBundle,
    trace: Vec<StepRecord>,
    trees: Vec<StepTree>,
    arrival: [Option<usize>; 2],
}

impl Simulation {
    pub fn new(config: &RunConfig, seed: u64) -> Result<Self, HarnessError> {
        config.validate()?;
        let env = config.env_config();
        let state = env::reset(&env, seed);
        let obs = env::observe(&env, &state);
        Ok(Self {
            agents: [config.build_agent(0)?, config.build_agent(1)?],
            config: config.clone(),
            env,
            seed,
            state,
            obs,
            trace: Vec::new(),
            trees: Vec::new(),
            arrival: [None, None],
        })
    }

    pub fn state(&self) -> &GridWorldState {
        &self.state
    }

    pub fn trace(&self) -> &[StepRecord] {
        &self.trace
    }

    pub fn outcome(&self) -> EpisodeOutcome {
        EpisodeOutcome {
            seed: self.seed,
            outcome: env::is_done(&self.env, &self.state),
            path_lengths: self.arrival,
        }
    }

    pub fn is_done(&self) -> bool {
        env::is_done(&self.env, &self.state).done
    }

    /// Both agents observe, plan and act; the world then moves. Fails once the
    /// episode is over.
    pub fn step(&mut self) -> Result<&StepRecord, HarnessError> {
        let cfg = &self.config;
        let actions = cfg.task.actions();
        let step = self.state.step;
        if self.is_done() {
            return Err(EnvError::TerminalState.into());
        }
        let mut records = Vec::with_capacity(2);
        let mut joint = [actions[0]; 2];
        for (i, agent) in self.agents.iter_mut().enumerate() {
            let surprised = agent.observe(&outcome_indices(cfg.task, &self.obs.0[i]))?;
            let mut rng = step_rng(self.seed, step, i);
            let d = agent.act(cfg.selection, &mut rng, cfg.export.trees)?;
            joint[i] = actions[d.action];
            if let Some(tree) = d.tree {
                self.trees.push(StepTree { step, agent: i, tree });
            }
            records.push(AgentStep {
                action: actions[d.action].label().to_string(),
                posterior: d.posterior.probs().to_vec(),
                efe: d.efe,
                other_posterior: d.other_posterior.map(|q| q.probs().to_vec()),
                surprised,
            });
        }
        let cells = [self.state.agents[0].cell, self.state.agents[1].cell];
        let (next, next_obs) = env::step(&self.env, &self.state, JointAction(joint), self.seed)?;
        let observations = std::mem::replace(&mut self.obs, next_obs);
        self.trace.push(StepRecord {
            step,
            cells,
            observations,
            agents: records.try_into().expect("two agents"),
        });
        self.state = next;
        if cfg.task == Task::Collision {
            for i in 0..2 {
                if self.arrival[i].is_none() && Some(self.state.agents[i].cell) == cfg.agents()[i].goal {
                    self.arrival[i] = Some(self.state.step);
                }
            }
        }
        Ok(self.trace.last().expect("just pushed"))
    }

    pub fn finish(self) -> Episode {
        Episode {
            outcome: self.outcome(),
            trace: self.trace,
            final_state: self.state,
            trees: self.trees,
        }
    }
}

pub fn run_episode(config: &RunConfig, seed: u64) -> Result<Episode, HarnessError> {
    let mut sim = Simulation::new(config, seed)?;
    while !sim.is_done() {
        sim.step()?;
    }
    Ok(sim.finish())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub collisions: usize,
    pub collision_rate: f64,
    /// Mean episode length over successful episodes.
    pub mean_steps: Option<f64>,
    /// Apples eaten per agent, summed over episodes.
    pub apples: [u64; 2],
    /// Episodes in which each agent was fed.
    pub fed: [usize; 2],
    pub both_fed: usize,
    pub both_fed_rate: f64,
    /// Episodes in which each agent took the known apple.
    pub known_apple_eaters: [usize; 2],
}

impl Metrics {
    pub fn from_outcomes(outcomes: &[EpisodeOutcome]) -> Self {
        let n = outcomes.len();
        let rate = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        let count = |f: &dyn Fn(&Outcome) -> bool| outcomes.iter().filter(|o| f(&o.outcome)).count();
        let successes = count(&|o| o.success);
        let collisions = count(&|o| o.collision);
        let both_fed = count(&|o| o.both_fed);
        let steps: usize = outcomes
            .iter()
            .filter(|o| o.outcome.success)
            .map(|o| o.outcome.steps)
            .sum();
        let mut apples = [0u64; 2];
        let mut fed = [0usize; 2];
        let mut eaters = [0usize; 2];
        for o in outcomes {
            for i in 0..2 {
                apples[i] += u64::from(o.outcome.apples[i]);
                fed[i] += usize::from(o.outcome.apples[i] > 0);
            }
            if let Some(a) = o.outcome.known_apple_eater {
                eaters[a] += 1;
            }
        }
        Self {
            episodes: n,
            successes,
            success_rate: rate(successes),
            collisions,
            collision_rate: rate(collisions),
            mean_steps: (successes > 0).then(|| steps as f64 / successes as f64),
            apples,
            fed,
            both_fed,
            both_fed_rate: rate(both_fed),
            known_apple_eaters: eaters,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub metrics: Metrics,
    pub outcomes: Vec<EpisodeOutcome>,
}

impl BatchReport {
    /// One row per seed, comma separated, with a header line.
    pub fn table(&self) -> String {
        let cell = |v: Option<usize>| v.map_or(String::new(), |x| x.to_string());
        let eater = |v: Option<usize>| v.map_or(String::new(), |x| AGENT_NAMES[x].to_string());
        let mut out = String::from(
            "seed,success,collision,steps,red_apples,purple_apples,both_fed,known_apple_eater,red_path,purple_path\n",
        );
        for o in &self.outcomes {
            let r = &o.outcome;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                o.seed,
                r.success,
                r.collision,
                r.steps,
                r.apples[0],
                r.apples[1],
                r.both_fed,
                eater(r.known_apple_eater),
                cell(o.path_lengths[0]),
                cell(o.path_lengths[1]),
            ));
        }
        out
    }
}

/// Seeds run in parallel; outcomes come back in seed order.
pub fn run_batch(config: &RunConfig) -> Result<BatchReport, HarnessError> {
    config.validate()?;
    let mut quiet = config.clone();
    quiet.export = ExportConfig::default();
    let outcomes = config
        .seeds
        .par_iter()
        .map(|&seed| run_episode(&quiet, seed).map(|e| e.outcome))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BatchReport {
        metrics: Metrics::from_outcomes(&outcomes),
        outcomes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeFormat {
    /// One JSON record per node.
    Records,
    /// Graphviz DOT.
    Graph,
}

pub fn render_tree(tree: &PlanTree, format: TreeFormat) -> Result<String, HarnessError> {
    if tree.is_empty() {
        return Err(HarnessError::EmptyTree);
    }
    Ok(match format {
        TreeFormat::Records => tree.to_jsonl()?,
        TreeFormat::Graph => tree.to_dot()?,
    })
}

pub fn export_tree(tree: &PlanTree, format: TreeFormat, path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, render_tree(tree, format)?)?;
    Ok(())
}
