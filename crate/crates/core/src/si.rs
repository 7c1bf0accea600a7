//! Sophisticated inference: recursive expected-free-energy search over actions
//! and counterfactual observations, with policy and observation pruning.

use rustc_hash::FxHashMap as HashMap;
use std::cell::RefCell;
use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{
    argmax, expected_observation, kl_slices, modality_evidence, normalize, softmax_neg, Categorical, FactoredBelief,
    ModalityLikelihood, MESSAGE_FLOOR,
};
use crate::error::PlanError;
use crate::model::GenerativeModel;
use crate::tree::{NodeKind, Owner, PlanNode, PlanTree};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_policy_threshold")]
    pub policy_prune_threshold: f64,
    #[serde(default = "default_observation_threshold")]
    pub observation_prune_threshold: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// When false, no pruning code runs at all (zero-probability outcomes are
    /// still skipped).
    #[serde(default = "default_true")]
    pub pruning: bool,
    /// Store the posterior belief on every observation node of the tree.
    #[serde(default)]
    pub record_beliefs: bool,
}

fn default_horizon() -> usize {
    3
}

fn default_policy_threshold() -> f64 {
    1.0 / 16.0
}

fn default_observation_threshold() -> f64 {
    1.0 / 64.0
}

fn default_temperature() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            policy_prune_threshold: default_policy_threshold(),
            observation_prune_threshold: default_observation_threshold(),
            temperature: default_temperature(),
            pruning: true,
            record_beliefs: false,
        }
    }
}

pub(crate) fn check_threshold(name: &str, t: f64) -> Result<(), PlanError> {
    if (0.0..1.0).contains(&t) {
        Ok(())
    } else {
        Err(PlanError::InvalidConfig(format!("{name} must lie in [0, 1), got {t}")))
    }
}

impl PlannerConfig {
    /// Thresholds zero, pruning code still active.
    pub fn zero_thresholds(&self) -> Self {
        Self {
            policy_prune_threshold: 0.0,
            observation_prune_threshold: 0.0,
            ..self.clone()
        }
    }

    pub fn unpruned(&self) -> Self {
        Self {
            pruning: false,
            ..self.zero_thresholds()
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.horizon < 1 {
            return Err(PlanError::InvalidHorizon(self.horizon));
        }
        check_threshold("policy_prune_threshold", self.policy_prune_threshold)?;
        check_threshold("observation_prune_threshold", self.observation_prune_threshold)?;
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(PlanError::InvalidConfig(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    pub(crate) fn observation_threshold(&self) -> Option<f64> {
        self.pruning.then_some(self.observation_prune_threshold)
    }
}

/// Indices kept by thresholding `probs`, with survivors renormalised. The
/// argmax always survives; zero entries never do.
fn prune(probs: &[f64], threshold: f64) -> Vec<(usize, f64)> {
    let best = argmax(probs);
    let kept: Vec<usize> = (0..probs.len())
        .filter(|&i| probs[i] > 0.0 && (i == best || probs[i] >= threshold))
        .collect();
    let total: f64 = kept.iter().map(|&i| probs[i]).sum();
    kept.into_iter().map(|i| (i, probs[i] / total)).collect()
}

/// Actions whose posterior reaches `threshold`, renormalised.
pub fn prune_policies(posterior: &Categorical, threshold: f64) -> Vec<(usize, f64)> {
    prune(posterior.probs(), threshold)
}

/// Outcomes whose probability reaches `threshold`, renormalised.
pub fn prune_observations(outcomes: &Categorical, threshold: f64) -> Vec<(usize, f64)> {
    prune(outcomes.probs(), threshold)
}

fn support(probs: &[f64]) -> Vec<(usize, f64)> {
    let total: f64 = probs.iter().filter(|&&p| p > 0.0).sum();
    (0..probs.len())
        .filter(|&i| probs[i] > 0.0)
        .map(|i| (i, probs[i] / total))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    Argmax,
    Sample,
}

pub fn select_action<R: Rng + ?Sized>(posterior: &Categorical, mode: SelectionMode, rng: &mut R) -> usize {
    match mode {
        SelectionMode::Argmax => posterior.argmax(),
        SelectionMode::Sample => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (i, &p) in posterior.probs().iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            posterior.probs().iter().rposition(|&p| p > 0.0).unwrap_or(0)
        }
    }
}

/// Per-model data reused by every expansion.
pub(crate) struct Context<'m> {
    pub model: &'m GenerativeModel,
    pub utilities: Vec<Vec<f64>>,
    pub likelihoods: Vec<ModalityLikelihood<'m>>,
    /// For each factor, the modalities that have it as a parent.
    touching: Vec<Vec<usize>>,
    /// Modality results keyed by (modality, threshold bits, parent-belief bits).
    modality_cache: RefCell<HashMap<ModalityKey, Rc<ModalityEval>>>,
    /// Predictions of factors that have parents, keyed by (factor, action,
    /// own and parent belief bits).
    factor_cache: RefCell<HashMap<FactorKey, Categorical>>,
}

type ModalityKey = (usize, u64, Vec<u64>);
type FactorKey = (usize, usize, Vec<u64>);

/// Retained outcomes of one modality and the evidence each puts on the
/// modality's parents.
struct ModalityEval {
    kept: Vec<(usize, f64)>,
    evidence: Vec<Vec<(usize, Vec<f64>)>>,
}

impl<'m> Context<'m> {
    pub fn new(model: &'m GenerativeModel) -> Self {
        let mut touching = vec![Vec::new(); model.factor_count()];
        for (m, spec) in model.modalities.iter().enumerate() {
            for &p in &spec.parents {
                if !touching[p].contains(&m) {
                    touching[p].push(m);
                }
            }
        }
        Self {
            model,
            utilities: model.preferences.utilities(),
            likelihoods: model.likelihoods(),
            touching,
            modality_cache: RefCell::default(),
            factor_cache: RefCell::default(),
        }
    }

    /// Same as [`GenerativeModel::predict_factor`]; factors with parents are cached.
    pub fn predict_factor(&self, factor: usize, belief: &FactoredBelief, action: usize) -> Categorical {
        let spec = &self.model.factors[factor];
        if spec.parents.is_empty() {
            return self.model.predict_factor(factor, belief, action);
        }
        let mut bits: Vec<u64> = belief.factor(factor).probs().iter().map(|x| x.to_bits()).collect();
        for &p in &spec.parents {
            bits.extend(belief.factor(p).probs().iter().map(|x| x.to_bits()));
        }
        let key = (factor, if spec.controlled { action } else { 0 }, bits);
        if let Some(hit) = self.factor_cache.borrow().get(&key) {
            return hit.clone();
        }
        let c = self.model.predict_factor(factor, belief, action);
        self.factor_cache.borrow_mut().insert(key, c.clone());
        c
    }

    pub fn predict(&self, belief: &FactoredBelief, action: usize) -> FactoredBelief {
        FactoredBelief::new(
            (0..self.model.factor_count())
                .map(|f| self.predict_factor(f, belief, action))
                .collect(),
        )
    }

    /// Depends only on the beliefs of the modality's parents, so results are
    /// shared between predictions that agree on them.
    fn modality_eval(
        &self,
        m: usize,
        predicted: &FactoredBelief,
        threshold: Option<f64>,
    ) -> Result<Rc<ModalityEval>, PlanError> {
        let lik = &self.likelihoods[m];
        let mut bits = Vec::new();
        for &p in lik.parents {
            bits.extend(predicted.factor(p).probs().iter().map(|x| x.to_bits()));
        }
        let key = (m, threshold.map_or(u64::MAX, f64::to_bits), bits);
        if let Some(hit) = self.modality_cache.borrow().get(&key) {
            return Ok(Rc::clone(hit));
        }
        let q = expected_observation(predicted, lik)?;
        let kept = match threshold {
            Some(t) => prune(q.probs(), t),
            None => support(q.probs()),
        };
        let evidence = kept
            .iter()
            .map(|&(o, _)| modality_evidence(predicted, lik, o))
            .collect::<Result<Vec<_>, _>>()?;
        let entry = Rc::new(ModalityEval { kept, evidence });
        self.modality_cache.borrow_mut().insert(key, Rc::clone(&entry));
        Ok(entry)
    }

    pub fn check_belief(&self, belief: &FactoredBelief) -> Result<(), PlanError> {
        if belief.cardinalities() != self.model.cardinalities() {
            return Err(PlanError::BeliefMismatch(format!(
                "belief cardinalities {:?}, model {:?}",
                belief.cardinalities(),
                self.model.cardinalities()
            )));
        }
        Ok(())
    }

    pub fn outcome_label(&self, outcomes: &[usize]) -> String {
        self.model
            .modalities
            .iter()
            .zip(outcomes)
            .map(|(m, &o)| format!("{}={}", m.name, m.outcomes[o]))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Posterior and divergence of one factor under each combination of the
/// retained outcomes of the modalities touching it.
struct FactorGroup {
    factor: usize,
    modalities: Vec<usize>,
    posteriors: Vec<(Categorical, f64)>,
}

/// One-step evaluation of a predicted belief.
pub(crate) struct Evaluation {
    pub utility: f64,
    pub info_gain: f64,
    /// Retained outcomes per modality with renormalised probabilities.
    pub outcomes: Vec<Vec<(usize, f64)>>,
    groups: Vec<FactorGroup>,
}

/// Outcome branch of an [`Evaluation`].
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeRecord {
    pub outcomes: Vec<usize>,
    pub probability: f64,
    pub utility: f64,
    pub info_gain: f64,
    pub posterior: FactoredBelief,
}

impl Evaluation {
    pub fn efe(&self) -> f64 {
        self.utility - self.info_gain
    }

    pub fn new(ctx: &Context<'_>, predicted: &FactoredBelief, threshold: Option<f64>) -> Result<Self, PlanError> {
        let nm = ctx.likelihoods.len();
        let mut outcomes = Vec::with_capacity(nm);
        let mut evidence = Vec::with_capacity(nm);
        let mut utility = 0.0;
        for m in 0..nm {
            let me = ctx.modality_eval(m, predicted, threshold)?;
            for &(o, p) in &me.kept {
                utility += p * ctx.utilities[m][o];
            }
            outcomes.push(me.kept.clone());
            evidence.push(me);
        }

        let mut groups = Vec::new();
        let mut info_gain = 0.0;
        for (f, ms) in ctx.touching.iter().enumerate() {
            if ms.is_empty() {
                continue;
            }
            let prior = predicted.factor(f).probs();
            let sizes: Vec<usize> = ms.iter().map(|&m| outcomes[m].len()).collect();
            let combos: usize = sizes.iter().product();
            let mut posteriors = Vec::with_capacity(combos);
            let mut picks = vec![0usize; ms.len()];
            for c in 0..combos {
                decode(c, &sizes, &mut picks);
                let mut weight = 1.0;
                let mut e = vec![1.0; prior.len()];
                for (j, &m) in ms.iter().enumerate() {
                    weight *= outcomes[m][picks[j]].1;
                    let w = factor_weights(&evidence[m].evidence[picks[j]], f);
                    e.iter_mut().zip(w).for_each(|(a, b)| *a *= b);
                }
                let post = posterior_or_floor(prior, &e, || {
                    let mut e = vec![1.0; prior.len()];
                    for (j, &m) in ms.iter().enumerate() {
                        let w = factor_weights(&evidence[m].evidence[picks[j]], f);
                        e.iter_mut().zip(w).for_each(|(a, b)| *a *= b.max(MESSAGE_FLOOR));
                    }
                    e
                })?;
                let kl = kl_slices(post.probs(), prior)?;
                info_gain += weight * kl;
                posteriors.push((post, kl));
            }
            groups.push(FactorGroup {
                factor: f,
                modalities: ms.clone(),
                posteriors,
            });
        }
        Ok(Self {
            utility,
            info_gain,
            outcomes,
            groups,
        })
    }

    /// Enumerates joint outcomes (product of the per-modality retained sets,
    /// last modality fastest).
    pub fn branches(&self, ctx: &Context<'_>, predicted: &FactoredBelief) -> Vec<OutcomeRecord> {
        let sizes: Vec<usize> = self.outcomes.iter().map(Vec::len).collect();
        let total: usize = sizes.iter().product();
        let mut picks = vec![0usize; sizes.len()];
        let mut out = Vec::with_capacity(total);
        for c in 0..total {
            decode(c, &sizes, &mut picks);
            let mut probability = 1.0;
            let mut utility = 0.0;
            let mut outcomes = Vec::with_capacity(sizes.len());
            for (m, &k) in picks.iter().enumerate() {
                let (o, p) = self.outcomes[m][k];
                probability *= p;
                utility += ctx.utilities[m][o];
                outcomes.push(o);
            }
            let mut posterior = predicted.clone();
            let mut info_gain = 0.0;
            for g in &self.groups {
                let mut idx = 0;
                for &m in &g.modalities {
                    idx = idx * sizes[m] + picks[m];
                }
                let (post, kl) = &g.posteriors[idx];
                info_gain += kl;
                posterior.set_factor(g.factor, post.clone());
            }
            out.push(OutcomeRecord {
                outcomes,
                probability,
                utility,
                info_gain,
                posterior,
            });
        }
        out
    }
}

fn decode(mut index: usize, sizes: &[usize], out: &mut [usize]) {
    for i in (0..sizes.len()).rev() {
        out[i] = index % sizes[i];
        index /= sizes[i];
    }
}

fn factor_weights(evidence: &[(usize, Vec<f64>)], factor: usize) -> &[f64] {
    &evidence
        .iter()
        .find(|(f, _)| *f == factor)
        .expect("modality touches factor")
        .1
}

/// `prior * evidence` normalised; when that vanishes, the evidence is
/// recomputed with every modality's weights floored.
fn posterior_or_floor(
    prior: &[f64],
    evidence: &[f64],
    floored: impl FnOnce() -> Vec<f64>,
) -> Result<Categorical, PlanError> {
    let prod: Vec<f64> = prior.iter().zip(evidence).map(|(p, e)| p * e).collect();
    match normalize(&prod) {
        Ok(c) => Ok(c),
        Err(_) => {
            let e = floored();
            let prod: Vec<f64> = prior.iter().zip(&e).map(|(p, e)| p * e).collect();
            Ok(normalize(&prod)?)
        }
    }
}

/// Predicted belief, per-outcome records and the expected free energy of one
/// action from `belief`.
#[derive(Clone, Debug, PartialEq)]
pub struct OneStep {
    pub predicted: FactoredBelief,
    pub outcomes: Vec<OutcomeRecord>,
    pub expected_utility: f64,
    pub expected_info_gain: f64,
    pub efe: f64,
}

pub fn efe_one_step(
    belief: &FactoredBelief,
    action: usize,
    model: &GenerativeModel,
    observation_threshold: f64,
) -> Result<OneStep, PlanError> {
    let ctx = Context::new(model);
    ctx.check_belief(belief)?;
    if action >= model.action_count() {
        return Err(PlanError::InvalidConfig(format!("action {action} out of range")));
    }
    let predicted = model.predict(belief, action);
    let eval = Evaluation::new(&ctx, &predicted, Some(observation_threshold))?;
    Ok(OneStep {
        outcomes: eval.branches(&ctx, &predicted),
        expected_utility: eval.utility,
        expected_info_gain: eval.info_gain,
        efe: eval.efe(),
        predicted,
    })
}

/// Root result of a plan.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub posterior: Categorical,
    /// Expected free energy per root action (pruned actions keep their
    /// one-step value).
    pub efe: Vec<f64>,
    pub tree: PlanTree,
}

/// Per-node output: G per action and the node's action posterior.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct NodeValue {
    pub efe: Vec<f64>,
    pub posterior: Vec<f64>,
}

impl NodeValue {
    pub fn expected(&self) -> f64 {
        self.efe
            .iter()
            .zip(&self.posterior)
            .filter(|(_, &q)| q > 0.0)
            .map(|(g, q)| g * q)
            .sum()
    }
}

/// Softmax over the kept actions; everything else gets zero.
pub(crate) fn restricted_softmax(g: &[f64], kept: &[bool], temperature: f64) -> Result<Vec<f64>, PlanError> {
    let idx: Vec<usize> = (0..g.len()).filter(|&a| kept[a]).collect();
    let local: Vec<f64> = idx.iter().map(|&a| g[a]).collect();
    let q = softmax_neg(&local, temperature)?;
    let mut out = vec![0.0; g.len()];
    for (&a, &p) in idx.iter().zip(q.probs()) {
        out[a] = p;
    }
    Ok(out)
}

pub(crate) fn kept_actions(g1: &[f64], config: &PlannerConfig, threshold: f64) -> Result<Vec<bool>, PlanError> {
    if !config.pruning {
        return Ok(vec![true; g1.len()]);
    }
    let q1 = softmax_neg(g1, config.temperature)?;
    let mut kept = vec![false; g1.len()];
    for (a, _) in prune_policies(&q1, threshold) {
        kept[a] = true;
    }
    Ok(kept)
}

/// Node values keyed by belief fingerprint and remaining depth.
pub(crate) type NodeMemo = RefCell<HashMap<(Vec<u64>, usize), NodeValue>>;

pub(crate) struct SiSearch<'c, 'm> {
    pub ctx: &'c Context<'m>,
    pub config: &'c PlannerConfig,
    pub owner: Owner,
    /// Consulted only when no tree is recorded; a node's value is a pure
    /// function of its belief and remaining depth.
    pub memo: Option<&'c NodeMemo>,
}

impl SiSearch<'_, '_> {
    /// Evaluates the node at `belief`, `depth` steps below the root of a
    /// search that is `horizon` steps deep.
    pub fn node(
        &self,
        belief: &FactoredBelief,
        depth: usize,
        horizon: usize,
        tree: Option<(&mut PlanTree, usize)>,
    ) -> Result<NodeValue, PlanError> {
        match (self.memo, tree) {
            (Some(memo), None) => {
                let key = (belief.fingerprint(), horizon - depth);
                if let Some(v) = memo.borrow().get(&key) {
                    return Ok(v.clone());
                }
                let v = self.expand(belief, depth, horizon, None)?;
                memo.borrow_mut().insert(key, v.clone());
                Ok(v)
            }
            (_, tree) => self.expand(belief, depth, horizon, tree),
        }
    }

    fn expand(
        &self,
        belief: &FactoredBelief,
        depth: usize,
        horizon: usize,
        mut tree: Option<(&mut PlanTree, usize)>,
    ) -> Result<NodeValue, PlanError> {
        let model = self.ctx.model;
        let na = model.action_count();
        let threshold = self.config.observation_threshold();
        let mut predictions = Vec::with_capacity(na);
        let mut g1 = Vec::with_capacity(na);
        for a in 0..na {
            let predicted = self.ctx.predict(belief, a);
            let eval = Evaluation::new(self.ctx, &predicted, threshold)?;
            g1.push(eval.efe());
            predictions.push((predicted, eval));
        }
        let kept = kept_actions(&g1, self.config, self.config.policy_prune_threshold)?;
        let mut g = g1.clone();
        let mut policy_ids = vec![0usize; na];
        for (a, (predicted, eval)) in predictions.iter().enumerate() {
            let expand = kept[a] && depth + 1 < horizon;
            let policy_id = tree.as_mut().map(|(t, parent)| {
                let mut n = PlanNode::new(NodeKind::Policy, self.owner, depth, model.actions[a].clone());
                n.action = Some(a);
                t.push(Some(*parent), n)
            });
            if !expand && tree.is_none() {
                continue;
            }
            let mut future = 0.0;
            for branch in eval.branches(self.ctx, predicted) {
                let obs_id = match (&mut tree, policy_id) {
                    (Some((t, _)), Some(pid)) => {
                        let mut n = PlanNode::new(
                            NodeKind::Observation,
                            self.owner,
                            depth,
                            self.ctx.outcome_label(&branch.outcomes),
                        );
                        n.outcome = Some(branch.outcomes.clone());
                        n.probability = branch.probability;
                        if self.config.record_beliefs {
                            n.belief = Some(branch.posterior.clone());
                        }
                        Some(t.push(Some(pid), n))
                    }
                    _ => None,
                };
                let mut value = branch.utility - branch.info_gain;
                if expand {
                    let sub = tree.as_mut().zip(obs_id).map(|((t, _), id)| (&mut **t, id));
                    let child = self.node(&branch.posterior, depth + 1, horizon, sub)?;
                    let ev = child.expected();
                    future += branch.probability * ev;
                    value += ev;
                }
                if let (Some((t, _)), Some(id)) = (&mut tree, obs_id) {
                    t.node_mut(id).efe = value;
                }
            }
            g[a] += future;
            if let Some(pid) = policy_id {
                policy_ids[a] = pid;
            }
        }
        let posterior = restricted_softmax(&g, &kept, self.config.temperature)?;
        if let Some((t, _)) = &mut tree {
            for a in 0..na {
                let n = t.node_mut(policy_ids[a]);
                n.efe = g[a];
                n.probability = posterior[a];
                n.pruned = !kept[a];
            }
        }
        Ok(NodeValue { efe: g, posterior })
    }
}

fn start(model: &GenerativeModel, belief: &FactoredBelief, config: &PlannerConfig) -> Result<(), PlanError> {
    config.validate()?;
    model.ensure_valid()?;
    if belief.cardinalities() != model.cardinalities() {
        return Err(PlanError::BeliefMismatch(format!(
            "belief cardinalities {:?}, model {:?}",
            belief.cardinalities(),
            model.cardinalities()
        )));
    }
    Ok(())
}

/// Full search returning the root action posterior and the planning tree.
pub fn plan(belief: &FactoredBelief, model: &GenerativeModel, config: &PlannerConfig) -> Result<Plan, PlanError> {
    start(model, belief, config)?;
    let ctx = Context::new(model);
    let search = SiSearch {
        ctx: &ctx,
        config,
        owner: Owner::Focal,
        memo: None,
    };
    let mut tree = PlanTree::new();
    let mut root = PlanNode::new(NodeKind::Belief, Owner::Focal, 0, "root");
    root.belief = Some(belief.clone());
    let root_id = tree.push(None, root);
    let value = search.node(belief, 0, config.horizon, Some((&mut tree, root_id)))?;
    tree.node_mut(root_id).efe = value.expected();
    Ok(Plan {
        posterior: Categorical::from_raw(value.posterior),
        efe: value.efe,
        tree,
    })
}

/// Same search as [`plan`] without building a tree.
pub fn plan_values(
    belief: &FactoredBelief,
    model: &GenerativeModel,
    config: &PlannerConfig,
) -> Result<(Categorical, Vec<f64>), PlanError> {
    start(model, belief, config)?;
    let ctx = Context::new(model);
    let memo = NodeMemo::default();
    let search = SiSearch {
        ctx: &ctx,
        config,
        owner: Owner::Focal,
        memo: Some(&memo),
    };
    let value = search.node(belief, 0, config.horizon, None)?;
    Ok((Categorical::from_raw(value.posterior), value.efe))
}
