//! Theory-of-mind planning over joint focal/other policies.
//!
//! Each horizon step expands, in order: the other agent's policies (scored by
//! the other's own sophisticated-inference search under its preferences), the
//! focal agent's policies given the other's action, the focal agent's
//! observations, and the other agent's observations. The focal posterior is a
//! softmax of expected free energy marginalised over the other's policies.

use rustc_hash::FxHashMap as HashMap;
use std::cell::RefCell;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::belief::{
    apply_message, expected_observation, observe_with_recovery, Categorical, FactoredBelief, LikelihoodMessage,
    MESSAGE_FLOOR,
};
use crate::error::PlanError;
use crate::model::{Correspondence, FactorPair, GenerativeModel, InteractionRule, Perspective};
use crate::si::{
    check_threshold, kept_actions, prune_observations, prune_policies, restricted_softmax, Context, Evaluation,
    NodeMemo, NodeValue, OutcomeRecord, PlannerConfig, SiSearch,
};
use crate::tree::{NodeKind, Owner, PlanNode, PlanTree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OtherLookahead {
    /// The other plans over the whole remaining horizon.
    Full,
    /// The other scores actions one step ahead only.
    Greedy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToMPlannerConfig {
    #[serde(flatten)]
    pub base: PlannerConfig,
    #[serde(default = "default_other_policy_threshold")]
    pub other_policy_prune_threshold: f64,
    #[serde(default = "default_other_observation_threshold")]
    pub other_observation_prune_threshold: f64,
    #[serde(default = "default_lookahead")]
    pub other_lookahead: OtherLookahead,
}

fn default_other_policy_threshold() -> f64 {
    1.0 / 16.0
}

fn default_other_observation_threshold() -> f64 {
    1.0 / 64.0
}

fn default_lookahead() -> OtherLookahead {
    OtherLookahead::Full
}

impl Default for ToMPlannerConfig {
    fn default() -> Self {
        Self {
            base: PlannerConfig::default(),
            other_policy_prune_threshold: default_other_policy_threshold(),
            other_observation_prune_threshold: default_other_observation_threshold(),
            other_lookahead: default_lookahead(),
        }
    }
}

impl ToMPlannerConfig {
    pub fn zero_thresholds(&self) -> Self {
        Self {
            base: self.base.zero_thresholds(),
            other_policy_prune_threshold: 0.0,
            other_observation_prune_threshold: 0.0,
            ..self.clone()
        }
    }

    pub fn unpruned(&self) -> Self {
        Self {
            base: self.base.unpruned(),
            ..self.zero_thresholds()
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        self.base.validate()?;
        check_threshold("other_policy_prune_threshold", self.other_policy_prune_threshold)?;
        check_threshold(
            "other_observation_prune_threshold",
            self.other_observation_prune_threshold,
        )
    }

    /// Configuration of the other agent's own search with `horizon` steps left.
    fn other_search(&self, horizon: usize) -> PlannerConfig {
        PlannerConfig {
            horizon: match self.other_lookahead {
                OtherLookahead::Full => horizon,
                OtherLookahead::Greedy => 1,
            },
            policy_prune_threshold: self.other_policy_prune_threshold,
            observation_prune_threshold: self.other_observation_prune_threshold,
            record_beliefs: false,
            ..self.base.clone()
        }
    }
}

/// The focal agent's beliefs about itself and the world, and its beliefs
/// about the other agent's beliefs about itself and the world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToMBeliefState {
    pub f_self: FactoredBelief,
    pub f_world: FactoredBelief,
    pub o_self: FactoredBelief,
    pub o_world: FactoredBelief,
    pub correspondence: Correspondence,
    /// Model factor indices of each block, in block order.
    pub f_self_factors: Vec<usize>,
    pub f_world_factors: Vec<usize>,
    pub o_self_factors: Vec<usize>,
    pub o_world_factors: Vec<usize>,
}

fn split(model: &GenerativeModel, full: &FactoredBelief) -> (FactoredBelief, FactoredBelief, Vec<usize>, Vec<usize>) {
    let own = model.factors_with(Perspective::Own);
    let world = model.factors_with(Perspective::World);
    (full.select(&own), full.select(&world), own, world)
}

fn merge(n: usize, a: &FactoredBelief, ai: &[usize], b: &FactoredBelief, bi: &[usize]) -> FactoredBelief {
    let mut slots: Vec<Option<Categorical>> = vec![None; n];
    for (k, &i) in ai.iter().enumerate() {
        slots[i] = Some(a.factor(k).clone());
    }
    for (k, &i) in bi.iter().enumerate() {
        slots[i] = Some(b.factor(k).clone());
    }
    FactoredBelief::new(
        slots
            .into_iter()
            .map(|s| s.expect("every factor in one block"))
            .collect(),
    )
}

impl ToMBeliefState {
    /// Splits full focal and other beliefs into their self and world blocks.
    pub fn new(
        focal_model: &GenerativeModel,
        other_model: &GenerativeModel,
        focal: &FactoredBelief,
        other: &FactoredBelief,
        correspondence: Correspondence,
    ) -> Result<Self, PlanError> {
        for (model, b, who) in [(focal_model, focal, "focal"), (other_model, other, "other")] {
            if b.cardinalities() != model.cardinalities() {
                return Err(PlanError::BeliefMismatch(format!(
                    "{who} belief cardinalities {:?}, model {:?}",
                    b.cardinalities(),
                    model.cardinalities()
                )));
            }
        }
        correspondence.check(focal_model, other_model)?;
        let (f_self, f_world, f_self_factors, f_world_factors) = split(focal_model, focal);
        let (o_self, o_world, o_self_factors, o_world_factors) = split(other_model, other);
        Ok(Self {
            f_self,
            f_world,
            o_self,
            o_world,
            correspondence,
            f_self_factors,
            f_world_factors,
            o_self_factors,
            o_world_factors,
        })
    }

    pub fn focal(&self) -> FactoredBelief {
        let n = self.f_self_factors.len() + self.f_world_factors.len();
        merge(
            n,
            &self.f_self,
            &self.f_self_factors,
            &self.f_world,
            &self.f_world_factors,
        )
    }

    pub fn other(&self) -> FactoredBelief {
        let n = self.o_self_factors.len() + self.o_world_factors.len();
        merge(
            n,
            &self.o_self,
            &self.o_self_factors,
            &self.o_world,
            &self.o_world_factors,
        )
    }
}

/// Ratio `posterior / prior` on each listed other factor, floored, placed on
/// the paired focal factor. Everything else is all-ones.
pub fn world_message_from_other(
    prior: &FactoredBelief,
    posterior: &FactoredBelief,
    pairs: &[FactorPair],
    focal_cards: &[usize],
) -> Result<LikelihoodMessage, PlanError> {
    let mut factors: Vec<Vec<f64>> = focal_cards.iter().map(|&c| vec![1.0; c]).collect();
    for p in pairs {
        let before = prior.factor(p.other).probs();
        let after = posterior.factor(p.other).probs();
        if factors[p.focal].len() != after.len() {
            return Err(PlanError::BeliefMismatch(format!(
                "message pair {}<->{} has mismatched cardinality",
                p.other, p.focal
            )));
        }
        factors[p.focal] = after
            .iter()
            .zip(before)
            .map(|(&q, &p)| q.max(MESSAGE_FLOOR) / p.max(MESSAGE_FLOOR))
            .collect();
    }
    Ok(LikelihoodMessage::new(factors)?)
}

/// One retained other-agent action with its predicted consequences.
#[derive(Clone, Debug, PartialEq)]
pub struct OtherBranch {
    pub action: usize,
    pub probability: f64,
    pub predicted: FactoredBelief,
}

/// One joint-policy branch after the focal action is fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct FocalBranch {
    pub action: usize,
    pub predicted: FactoredBelief,
    /// Probability the focal agent is stuck after this step.
    pub stuck: f64,
}

/// One predicted observation of the other agent.
#[derive(Clone, Debug, PartialEq)]
pub struct OtherObservation {
    pub outcomes: Vec<usize>,
    pub probability: f64,
    pub posterior: FactoredBelief,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToMPlan {
    pub posterior: Categorical,
    /// Expected free energy per focal action, marginalised over the other's policies.
    pub efe: Vec<f64>,
    /// The other agent's action posterior at the root, before pruning.
    pub other_posterior: Categorical,
    pub tree: PlanTree,
}

struct OtherPolicy {
    posterior: Vec<f64>,
    kept: Vec<(usize, f64)>,
}

struct Interaction {
    own: usize,
    other: usize,
    excluded: Vec<usize>,
}

/// Planner over a fixed pair of models; caches the other agent's policies.
pub struct ToMPlanner<'m> {
    focal: Context<'m>,
    other: Context<'m>,
    config: ToMPlannerConfig,
    message_pairs: Vec<FactorPair>,
    override_pairs: Vec<FactorPair>,
    pairing: Vec<FactorPair>,
    interaction: Option<Interaction>,
    other_reference: usize,
    memo: RefCell<HashMap<PolicyKey, Rc<OtherPolicy>>>,
    other_nodes: NodeMemo,
    joint_nodes: RefCell<HashMap<JointKey, NodeValue>>,
}

/// Other fingerprint and remaining depth.
type PolicyKey = (Vec<u64>, usize);

/// Focal and other fingerprints, stuck probability bits, remaining depth.
type JointKey = (Vec<u64>, Vec<u64>, u64, usize);

impl<'m> ToMPlanner<'m> {
    pub fn new(
        focal_model: &'m GenerativeModel,
        other_model: &'m GenerativeModel,
        correspondence: &Correspondence,
        config: &ToMPlannerConfig,
    ) -> Result<Self, PlanError> {
        config.validate()?;
        focal_model.ensure_valid()?;
        other_model.ensure_valid()?;
        correspondence.check(focal_model, other_model)?;

        let persp_f = |i: usize| focal_model.factors[i].perspective;
        let persp_o = |j: usize| other_model.factors[j].perspective;
        let mut message_pairs = Vec::new();
        let mut override_pairs = Vec::new();
        let mut pairing = Vec::new();
        for &p in correspondence.pairs() {
            match (persp_o(p.other), persp_f(p.focal)) {
                (Perspective::World, Perspective::World) => {
                    message_pairs.push(p);
                    pairing.push(p);
                }
                (Perspective::World, Perspective::Own) => pairing.push(p),
                (Perspective::Own, Perspective::World) => override_pairs.push(p),
                (Perspective::Own, Perspective::Own) => {}
            }
        }
        for j in other_model.factors_with(Perspective::World) {
            if correspondence.focal_of(j).is_none() {
                return Err(PlanError::CorrespondenceGap {
                    perspective: "other",
                    factor: j,
                    name: other_model.factors[j].name.clone(),
                });
            }
        }
        let interaction = match &focal_model.interaction {
            Some(InteractionRule::StuckOnCoOccupancy {
                own_factor,
                other_factor,
                excluded_states,
            }) => {
                if !override_pairs.iter().any(|p| p.focal == *other_factor) {
                    return Err(PlanError::CorrespondenceGap {
                        perspective: "focal",
                        factor: *other_factor,
                        name: focal_model.factors[*other_factor].name.clone(),
                    });
                }
                Some(Interaction {
                    own: *own_factor,
                    other: *other_factor,
                    excluded: excluded_states.clone(),
                })
            }
            None => None,
        };
        let other_reference = other_model.reference_action.unwrap_or(other_model.action_count() - 1);
        Ok(Self {
            focal: Context::new(focal_model),
            other: Context::new(other_model),
            config: config.clone(),
            message_pairs,
            override_pairs,
            pairing,
            interaction,
            other_reference,
            memo: RefCell::default(),
            other_nodes: NodeMemo::default(),
            joint_nodes: RefCell::default(),
        })
    }

    pub fn config(&self) -> &ToMPlannerConfig {
        &self.config
    }

    fn other_policy(&self, other: &FactoredBelief, remaining: usize) -> Result<Rc<OtherPolicy>, PlanError> {
        let key = (other.fingerprint(), remaining);
        if let Some(hit) = self.memo.borrow().get(&key) {
            return Ok(Rc::clone(hit));
        }
        let cfg = self.config.other_search(remaining);
        let search = SiSearch {
            ctx: &self.other,
            config: &cfg,
            owner: Owner::Other,
            memo: Some(&self.other_nodes),
        };
        let value = search.node(other, 0, cfg.horizon, None)?;
        // a zero threshold keeps the whole support, renormalised exactly as when pruning is off
        let threshold = if self.config.base.pruning {
            self.config.other_policy_prune_threshold
        } else {
            0.0
        };
        let kept = prune_policies(&Categorical::from_raw(value.posterior.clone()), threshold);
        let entry = Rc::new(OtherPolicy {
            posterior: value.posterior,
            kept,
        });
        self.memo.borrow_mut().insert(key, Rc::clone(&entry));
        Ok(entry)
    }

    /// What the focal agent expects the other to do from `other`, with
    /// `remaining` steps of lookahead, and where each action leads.
    pub fn other_policy_expansion(
        &self,
        other: &FactoredBelief,
        remaining: usize,
    ) -> Result<Vec<OtherBranch>, PlanError> {
        self.other.check_belief(other)?;
        let pol = self.other_policy(other, remaining.max(1))?;
        Ok(pol
            .kept
            .iter()
            .map(|&(action, probability)| OtherBranch {
                action,
                probability,
                predicted: self.other.predict(other, action),
            })
            .collect())
    }

    /// Focal belief after taking in how the other's action changed the
    /// other's world beliefs relative to it doing nothing.
    pub fn message_update(
        &self,
        focal: &FactoredBelief,
        passive: &FactoredBelief,
        predicted_other: &FactoredBelief,
    ) -> Result<FactoredBelief, PlanError> {
        let msg = world_message_from_other(passive, predicted_other, &self.message_pairs, &focal.cardinalities())?;
        Ok(apply_message(focal, &msg)?)
    }

    fn passive(&self, other: &FactoredBelief) -> FactoredBelief {
        self.other.predict(other, self.other_reference)
    }

    /// Focal prediction under `(focal_action, other_action)`.
    pub fn focal_policy_expansion(
        &self,
        focal: &FactoredBelief,
        other: &FactoredBelief,
        other_action: usize,
        focal_action: usize,
        stuck: f64,
    ) -> FocalBranch {
        let fm = self.focal.model;
        let om = self.other.model;
        let mut next: Vec<Categorical> = Vec::with_capacity(fm.factor_count());
        for i in 0..fm.factor_count() {
            let c = match self.override_pairs.iter().find(|p| p.focal == i) {
                Some(p) => {
                    let parents: Vec<&[f64]> = om.factors[p.other]
                        .parents
                        .iter()
                        .map(|&k| other.factor(k).probs())
                        .collect();
                    om.predict_factor_from(p.other, focal.factor(i).probs(), &parents, other_action)
                }
                None => self.focal.predict_factor(i, focal, focal_action),
            };
            next.push(c);
        }
        let mut stuck_next = stuck;
        if let Some(rule) = &self.interaction {
            let moved = next[rule.own].probs();
            let stay = focal.factor(rule.own).probs();
            let own: Vec<f64> = moved
                .iter()
                .zip(stay)
                .map(|(&m, &s)| (1.0 - stuck) * m + stuck * s)
                .collect();
            let co: f64 = own
                .iter()
                .zip(next[rule.other].probs())
                .enumerate()
                .filter(|(c, _)| !rule.excluded.contains(c))
                .map(|(_, (a, b))| a * b)
                .sum();
            stuck_next = stuck + (1.0 - stuck) * co;
            next[rule.own] = Categorical::from_raw(own);
        }
        FocalBranch {
            action: focal_action,
            predicted: FactoredBelief::new(next),
            stuck: stuck_next,
        }
    }

    /// Focal outcomes from a predicted focal belief, pruned, with posteriors.
    pub fn focal_observation_expansion(&self, predicted: &FactoredBelief) -> Result<Vec<OutcomeRecord>, PlanError> {
        let eval = Evaluation::new(&self.focal, predicted, self.config.base.observation_threshold())?;
        Ok(eval.branches(&self.focal, predicted))
    }

    /// The other agent's predicted belief with its world factors read from the
    /// focal agent's updated beliefs.
    fn paired(&self, predicted_other: &FactoredBelief, focal_posterior: &FactoredBelief) -> FactoredBelief {
        let mut b = predicted_other.clone();
        for p in &self.pairing {
            b.set_factor(p.other, focal_posterior.factor(p.focal).clone());
        }
        b
    }

    /// What the other agent is expected to observe, and its posterior.
    pub fn other_observation_expansion(
        &self,
        predicted_other: &FactoredBelief,
        focal_posterior: &FactoredBelief,
    ) -> Result<Vec<OtherObservation>, PlanError> {
        let paired = self.paired(predicted_other, focal_posterior);
        let mut per_modality = Vec::with_capacity(self.other.likelihoods.len());
        for lik in &self.other.likelihoods {
            let q = expected_observation(&paired, lik)?;
            per_modality.push(if self.config.base.pruning {
                prune_observations(&q, self.config.other_observation_prune_threshold)
            } else {
                prune_observations(&q, 0.0)
            });
        }
        let sizes: Vec<usize> = per_modality.iter().map(Vec::len).collect();
        let total: usize = sizes.iter().product();
        let mut out = Vec::with_capacity(total);
        let mut picks = vec![0usize; sizes.len()];
        for c in 0..total {
            let mut rest = c;
            for i in (0..sizes.len()).rev() {
                picks[i] = rest % sizes[i];
                rest /= sizes[i];
            }
            let mut probability = 1.0;
            let outcomes: Vec<usize> = picks
                .iter()
                .enumerate()
                .map(|(m, &k)| {
                    probability *= per_modality[m][k].1;
                    per_modality[m][k].0
                })
                .collect();
            let (posterior, _) = observe_with_recovery(predicted_other, &self.other.likelihoods, &outcomes)?;
            out.push(OtherObservation {
                outcomes,
                probability,
                posterior,
            });
        }
        Ok(out)
    }

    /// Without a tree, node values are memoised: they depend only on the
    /// beliefs, the stuck probability and the remaining depth.
    fn node(
        &self,
        focal: &FactoredBelief,
        other: &FactoredBelief,
        stuck: f64,
        depth: usize,
        tree: Option<(&mut PlanTree, usize)>,
    ) -> Result<NodeValue, PlanError> {
        if tree.is_some() {
            return self.expand(focal, other, stuck, depth, tree);
        }
        let key = (
            focal.fingerprint(),
            other.fingerprint(),
            stuck.to_bits(),
            self.config.base.horizon - depth,
        );
        if let Some(v) = self.joint_nodes.borrow().get(&key) {
            return Ok(v.clone());
        }
        let v = self.expand(focal, other, stuck, depth, None)?;
        self.joint_nodes.borrow_mut().insert(key, v.clone());
        Ok(v)
    }

    fn expand(
        &self,
        focal: &FactoredBelief,
        other: &FactoredBelief,
        stuck: f64,
        depth: usize,
        mut tree: Option<(&mut PlanTree, usize)>,
    ) -> Result<NodeValue, PlanError> {
        let horizon = self.config.base.horizon;
        let fm = self.focal.model;
        let nf = fm.action_count();
        let policy = self.other_policy(other, horizon - depth)?;
        let passive = self.passive(other);

        struct Joint {
            action: usize,
            weight: f64,
            predicted_other: FactoredBelief,
            branches: Vec<(FocalBranch, Evaluation)>,
        }
        let threshold = self.config.base.observation_threshold();
        let mut joints = Vec::with_capacity(policy.kept.len());
        let mut g1 = vec![0.0; nf];
        for &(a_o, w) in &policy.kept {
            let predicted_other = self.other.predict(other, a_o);
            let informed = self.message_update(focal, &passive, &predicted_other)?;
            let mut branches = Vec::with_capacity(nf);
            for (a_f, g) in g1.iter_mut().enumerate() {
                let b = self.focal_policy_expansion(&informed, other, a_o, a_f, stuck);
                let eval = Evaluation::new(&self.focal, &b.predicted, threshold)?;
                *g += w * eval.efe();
                branches.push((b, eval));
            }
            joints.push(Joint {
                action: a_o,
                weight: w,
                predicted_other,
                branches,
            });
        }
        let kept = kept_actions(&g1, &self.config.base, self.config.base.policy_prune_threshold)?;

        let mut g_joint: Vec<Vec<f64>> = Vec::with_capacity(joints.len());
        let mut ids: Vec<(usize, Vec<usize>)> = Vec::new();
        for joint in &joints {
            let other_id = tree.as_mut().map(|(t, parent)| {
                let mut n = PlanNode::new(
                    NodeKind::Policy,
                    Owner::Other,
                    depth,
                    self.other.model.actions[joint.action].clone(),
                );
                n.step = Some(1);
                n.action = Some(joint.action);
                n.probability = joint.weight;
                t.push(Some(*parent), n)
            });
            let mut row = Vec::with_capacity(nf);
            let mut focal_ids = Vec::new();
            for (a_f, (branch, eval)) in joint.branches.iter().enumerate() {
                let expand = kept[a_f] && depth + 1 < horizon;
                let mut g = eval.efe();
                let policy_id = match (&mut tree, other_id) {
                    (Some((t, _)), Some(oid)) => {
                        let mut n = PlanNode::new(NodeKind::Policy, Owner::Focal, depth, fm.actions[a_f].clone());
                        n.step = Some(2);
                        n.action = Some(a_f);
                        n.pruned = !kept[a_f];
                        let id = t.push(Some(oid), n);
                        focal_ids.push(id);
                        Some(id)
                    }
                    _ => None,
                };
                if !expand && tree.is_none() {
                    row.push(g);
                    continue;
                }
                let mut future = 0.0;
                for fb in eval.branches(&self.focal, &branch.predicted) {
                    let fobs_id = match (&mut tree, policy_id) {
                        (Some((t, _)), Some(pid)) => {
                            let mut n = PlanNode::new(
                                NodeKind::Observation,
                                Owner::Focal,
                                depth,
                                self.focal.outcome_label(&fb.outcomes),
                            );
                            n.step = Some(3);
                            n.outcome = Some(fb.outcomes.clone());
                            n.probability = fb.probability;
                            if self.config.base.record_beliefs {
                                n.belief = Some(fb.posterior.clone());
                            }
                            Some(t.push(Some(pid), n))
                        }
                        _ => None,
                    };
                    let mut inner = 0.0;
                    for ob in self.other_observation_expansion(&joint.predicted_other, &fb.posterior)? {
                        let oobs_id = match (&mut tree, fobs_id) {
                            (Some((t, _)), Some(fid)) => {
                                let mut n = PlanNode::new(
                                    NodeKind::Observation,
                                    Owner::Other,
                                    depth,
                                    self.other.outcome_label(&ob.outcomes),
                                );
                                n.step = Some(4);
                                n.outcome = Some(ob.outcomes.clone());
                                n.probability = ob.probability;
                                if self.config.base.record_beliefs {
                                    n.belief = Some(ob.posterior.clone());
                                }
                                Some(t.push(Some(fid), n))
                            }
                            _ => None,
                        };
                        let mut ev = 0.0;
                        if expand {
                            let sub = tree.as_mut().zip(oobs_id).map(|((t, _), id)| (&mut **t, id));
                            let child = self.node(&fb.posterior, &ob.posterior, branch.stuck, depth + 1, sub)?;
                            ev = child.expected();
                            inner += ob.probability * ev;
                        }
                        if let (Some((t, _)), Some(id)) = (&mut tree, oobs_id) {
                            t.node_mut(id).efe = ev;
                        }
                    }
                    future += fb.probability * inner;
                    if let (Some((t, _)), Some(id)) = (&mut tree, fobs_id) {
                        t.node_mut(id).efe = fb.utility - fb.info_gain + inner;
                    }
                }
                g += future;
                row.push(g);
            }
            g_joint.push(row);
            if let Some(oid) = other_id {
                ids.push((oid, focal_ids));
            }
        }

        let mut g = vec![0.0; nf];
        for (joint, row) in joints.iter().zip(&g_joint) {
            for (a_f, v) in row.iter().enumerate() {
                g[a_f] += joint.weight * v;
            }
        }
        let posterior = restricted_softmax(&g, &kept, self.config.base.temperature)?;
        if let Some((t, _)) = &mut tree {
            for ((oid, focal_ids), row) in ids.iter().zip(&g_joint) {
                t.node_mut(*oid).efe = row.iter().zip(&posterior).map(|(g, q)| g * q).sum();
                for (a_f, &fid) in focal_ids.iter().enumerate() {
                    let n = t.node_mut(fid);
                    n.efe = row[a_f];
                    n.probability = posterior[a_f];
                }
            }
        }
        Ok(NodeValue { efe: g, posterior })
    }

    fn check_state(&self, focal: &FactoredBelief, other: &FactoredBelief) -> Result<(), PlanError> {
        self.focal.check_belief(focal)?;
        self.other.check_belief(other)
    }

    /// Joint search from full focal and other beliefs.
    pub fn plan_beliefs(&self, focal: &FactoredBelief, other: &FactoredBelief) -> Result<ToMPlan, PlanError> {
        self.check_state(focal, other)?;
        let mut tree = PlanTree::new();
        let mut root = PlanNode::new(NodeKind::Belief, Owner::Focal, 0, "root");
        root.step = Some(5);
        root.belief = Some(focal.clone());
        let root_id = tree.push(None, root);
        let value = self.node(focal, other, 0.0, 0, Some((&mut tree, root_id)))?;
        tree.node_mut(root_id).efe = value.expected();
        let other_posterior =
            Categorical::from_raw(self.other_policy(other, self.config.base.horizon)?.posterior.clone());
        Ok(ToMPlan {
            posterior: Categorical::from_raw(value.posterior),
            efe: value.efe,
            other_posterior,
            tree,
        })
    }

    /// Same search without building a tree.
    pub fn plan_values(
        &self,
        focal: &FactoredBelief,
        other: &FactoredBelief,
    ) -> Result<(Categorical, Vec<f64>, Categorical), PlanError> {
        self.check_state(focal, other)?;
        let value = self.node(focal, other, 0.0, 0, None)?;
        let other_posterior =
            Categorical::from_raw(self.other_policy(other, self.config.base.horizon)?.posterior.clone());
        Ok((Categorical::from_raw(value.posterior), value.efe, other_posterior))
    }

    pub fn plan(&self, state: &ToMBeliefState) -> Result<ToMPlan, PlanError> {
        self.plan_beliefs(&state.focal(), &state.other())
    }
}

pub fn tom_plan(
    state: &ToMBeliefState,
    focal_model: &GenerativeModel,
    other_model: &GenerativeModel,
    config: &ToMPlannerConfig,
) -> Result<ToMPlan, PlanError> {
    ToMPlanner::new(focal_model, other_model, &state.correspondence, config)?.plan(state)
}
