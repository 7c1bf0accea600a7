//! Agents that close the loop: observe, update beliefs, plan, act.

use crate::belief::{observe_with_recovery, Categorical, FactoredBelief};
use crate::env::{AgentObservation, ItemObservation};
use crate::error::PlanError;
use crate::model::foraging::{APPLE_OUTCOME, EMPTY_OUTCOME, WASTELAND_OUTCOME};
use crate::model::grid::Task;
use crate::model::{GenerativeModel, OtherModel, Perspective};
use crate::si::{plan, plan_values, select_action, PlannerConfig, SelectionMode};
use crate::tom::{ToMPlanner, ToMPlannerConfig};
use crate::tree::PlanTree;

/// Model outcome indices for an environment observation.
pub fn outcome_indices(task: Task, obs: &AgentObservation) -> Vec<usize> {
    match task {
        Task::Collision => vec![if obs.null { 0 } else { obs.own_cell }, obs.other_cell],
        Task::Foraging => vec![
            obs.own_cell - 1,
            obs.other_cell - 1,
            match obs.item_here {
                Some(ItemObservation::Apple) => APPLE_OUTCOME,
                Some(ItemObservation::Empty) => EMPTY_OUTCOME,
                _ => WASTELAND_OUTCOME,
            },
            usize::from(obs.fed == Some(true)),
        ],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub action: usize,
    pub posterior: Categorical,
    pub efe: Vec<f64>,
    /// What the agent expected the other to do (theory-of-mind agents only).
    pub other_posterior: Option<Categorical>,
    pub tree: Option<PlanTree>,
}

pub trait Agent {
    fn model(&self) -> &GenerativeModel;
    /// Takes in the observation that followed the last action (or the first
    /// observation); returns factors whose belief had to be reset by evidence.
    fn observe(&mut self, outcomes: &[usize]) -> Result<Vec<usize>, PlanError>;
    fn act(
        &mut self,
        mode: SelectionMode,
        rng: &mut dyn rand::RngCore,
        record_tree: bool,
    ) -> Result<Decision, PlanError>;
    fn belief(&self) -> Option<&FactoredBelief>;
}

pub struct SiAgent {
    model: GenerativeModel,
    config: PlannerConfig,
    belief: Option<FactoredBelief>,
    last_action: Option<usize>,
}

impl SiAgent {
    pub fn new(model: GenerativeModel, config: PlannerConfig) -> Self {
        Self {
            model,
            config,
            belief: None,
            last_action: None,
        }
    }
}

fn choose(posterior: &Categorical, mode: SelectionMode, rng: &mut dyn rand::RngCore) -> usize {
    select_action(posterior, mode, rng)
}

impl Agent for SiAgent {
    fn model(&self) -> &GenerativeModel {
        &self.model
    }

    fn observe(&mut self, outcomes: &[usize]) -> Result<Vec<usize>, PlanError> {
        let prior = match (&self.belief, self.last_action) {
            (Some(b), Some(a)) => self.model.predict(b, a),
            _ => self.model.prior_belief(),
        };
        let (post, surprised) = observe_with_recovery(&prior, &self.model.likelihoods(), outcomes)?;
        self.belief = Some(post);
        Ok(surprised)
    }

    fn act(
        &mut self,
        mode: SelectionMode,
        rng: &mut dyn rand::RngCore,
        record_tree: bool,
    ) -> Result<Decision, PlanError> {
        let belief = self.belief.clone().unwrap_or_else(|| self.model.prior_belief());
        let (posterior, efe, tree) = if record_tree {
            let p = plan(&belief, &self.model, &self.config)?;
            (p.posterior, p.efe, Some(p.tree))
        } else {
            let (q, g) = plan_values(&belief, &self.model, &self.config)?;
            (q, g, None)
        };
        let action = choose(&posterior, mode, rng);
        self.last_action = Some(action);
        Ok(Decision {
            action,
            posterior,
            efe,
            other_posterior: None,
            tree,
        })
    }

    fn belief(&self) -> Option<&FactoredBelief> {
        self.belief.as_ref()
    }
}

pub struct ToMAgent {
    focal: GenerativeModel,
    other: OtherModel,
    config: ToMPlannerConfig,
    f: Option<FactoredBelief>,
    o: Option<FactoredBelief>,
    last_action: Option<usize>,
    last_other_posterior: Option<Vec<f64>>,
    /// (other-model factor of the other's own location, focal factor tracking it).
    location_pair: (usize, usize),
    /// Focal modality observing the other's location.
    location_modality: usize,
}

impl ToMAgent {
    pub fn new(focal: GenerativeModel, other: OtherModel, config: ToMPlannerConfig) -> Result<Self, PlanError> {
        let pair = other
            .correspondence
            .pairs()
            .iter()
            .find(|p| {
                other.model.factors[p.other].perspective == Perspective::Own
                    && focal.factors[p.focal].perspective == Perspective::World
            })
            .copied()
            .ok_or_else(|| PlanError::CorrespondenceGap {
                perspective: "other",
                factor: 0,
                name: "own location".into(),
            })?;
        let location_modality = focal
            .modalities
            .iter()
            .position(|m| m.parents == [pair.focal])
            .ok_or_else(|| PlanError::InvalidConfig("no modality observes the other agent".into()))?;
        Ok(Self {
            focal,
            other,
            config,
            f: None,
            o: None,
            last_action: None,
            last_other_posterior: None,
            location_pair: (pair.other, pair.focal),
            location_modality,
        })
    }

    pub fn other_belief(&self) -> Option<&FactoredBelief> {
        self.o.as_ref()
    }

    fn planner(&self, config: &ToMPlannerConfig) -> Result<ToMPlanner<'_>, PlanError> {
        ToMPlanner::new(&self.focal, &self.other.model, &self.other.correspondence, config)
    }

    /// The other's action most consistent with where it was seen to go.
    fn infer_other_action(&self, previous: &FactoredBelief, outcomes: &[usize]) -> usize {
        let (j, i) = self.location_pair;
        let om = &self.other.model;
        let lik = self.focal.likelihood(self.location_modality);
        let o = outcomes[self.location_modality];
        let from = previous.factor(i).argmax();
        let start = Categorical::delta(om.factors[j].state_count(), from);
        let parents: Vec<&[f64]> = match &self.o {
            Some(ob) => om.factors[j].parents.iter().map(|&k| ob.factor(k).probs()).collect(),
            None => Vec::new(),
        };
        let consistent: Vec<usize> = (0..om.action_count())
            .filter(|&a| {
                om.predict_factor_from(j, start.probs(), &parents, a)
                    .probs()
                    .iter()
                    .enumerate()
                    .any(|(s, &p)| p > 0.0 && lik.table[s * lik.outcome_count + o] > 0.0)
            })
            .collect();
        let reference = om.reference_action.unwrap_or(om.action_count() - 1);
        let weights = self.last_other_posterior.as_deref();
        let mut best: Option<(usize, f64)> = None;
        for a in consistent {
            let w = weights.map_or(0.0, |q| q[a]);
            if best.is_none_or(|(_, bw)| w > bw) {
                best = Some((a, w));
            }
        }
        best.map_or(reference, |(a, _)| a)
    }

    /// The other's belief after it sees what the focal agent expects it to
    /// see, averaged over those observations.
    fn refresh_other(
        &self,
        planner: &ToMPlanner<'_>,
        predicted_other: &FactoredBelief,
        focal_post: &FactoredBelief,
    ) -> Result<FactoredBelief, PlanError> {
        // the focal agent sees where the other is: that settles the other's own location
        let mut anchored = predicted_other.clone();
        for p in self.other.correspondence.pairs() {
            if self.other.model.factors[p.other].perspective == Perspective::Own
                && self.focal.factors[p.focal].perspective == Perspective::World
            {
                anchored.set_factor(p.other, focal_post.factor(p.focal).clone());
            }
        }
        let branches = planner.other_observation_expansion(&anchored, focal_post)?;
        let mut acc: Vec<Vec<f64>> = anchored.factors().iter().map(|c| vec![0.0; c.len()]).collect();
        for b in &branches {
            for (slot, c) in acc.iter_mut().zip(b.posterior.factors()) {
                slot.iter_mut()
                    .zip(c.probs())
                    .for_each(|(s, p)| *s += b.probability * p);
            }
        }
        Ok(FactoredBelief::new(
            acc.into_iter()
                .map(|v| crate::belief::normalize(&v))
                .collect::<Result<Vec<_>, _>>()?,
        ))
    }
}

impl Agent for ToMAgent {
    fn model(&self) -> &GenerativeModel {
        &self.focal
    }

    fn observe(&mut self, outcomes: &[usize]) -> Result<Vec<usize>, PlanError> {
        let update_cfg = self.config.unpruned();
        let planner = self.planner(&update_cfg)?;
        let liks = self.focal.likelihoods();
        let (f_post, predicted_other, surprised) = match (&self.f, &self.o, self.last_action) {
            (Some(f), Some(o), Some(a_f)) => {
                let a_o = self.infer_other_action(f, outcomes);
                let reference = self
                    .other
                    .model
                    .reference_action
                    .unwrap_or(self.other.model.action_count() - 1);
                let predicted_other = self.other.model.predict(o, a_o);
                let passive = self.other.model.predict(o, reference);
                let informed = planner.message_update(f, &passive, &predicted_other)?;
                let prior = self.focal.predict(&informed, a_f);
                let (post, s) = observe_with_recovery(&prior, &liks, outcomes)?;
                (post, predicted_other, s)
            }
            _ => {
                let (post, s) = observe_with_recovery(&self.focal.prior_belief(), &liks, outcomes)?;
                (post, self.other.model.prior_belief(), s)
            }
        };
        let o = self.refresh_other(&planner, &predicted_other, &f_post)?;
        drop(planner);
        self.f = Some(f_post);
        self.o = Some(o);
        Ok(surprised)
    }

    fn act(
        &mut self,
        mode: SelectionMode,
        rng: &mut dyn rand::RngCore,
        record_tree: bool,
    ) -> Result<Decision, PlanError> {
        let f = self.f.clone().unwrap_or_else(|| self.focal.prior_belief());
        let o = self.o.clone().unwrap_or_else(|| self.other.model.prior_belief());
        let planner = self.planner(&self.config)?;
        let (posterior, efe, other_posterior, tree) = if record_tree {
            let p = planner.plan_beliefs(&f, &o)?;
            (p.posterior, p.efe, p.other_posterior, Some(p.tree))
        } else {
            let (q, g, qo) = planner.plan_values(&f, &o)?;
            (q, g, qo, None)
        };
        drop(planner);
        let action = choose(&posterior, mode, rng);
        self.last_action = Some(action);
        self.last_other_posterior = Some(other_posterior.probs().to_vec());
        Ok(Decision {
            action,
            posterior,
            efe,
            other_posterior: Some(other_posterior),
            tree,
        })
    }

    fn belief(&self) -> Option<&FactoredBelief> {
        self.f.as_ref()
    }
}
