//! Factored POMDP generative models.
//!
//! Tables are dense only over the parents each factor or modality declares.
//! Layouts (last parent varies fastest, see [`crate::table`]):
//!
//! * likelihood `P(o | parents)`: `table[config * outcomes + o]`
//! * transition `P(s' | s, parents, a)`: `table[((a * S + s) * configs + config) * S + s']`,
//!   where the action axis has length 1 for uncontrolled factors.

pub mod collision;
pub mod foraging;
pub mod grid;
mod other;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{Categorical, FactoredBelief, ModalityLikelihood, NORM_TOLERANCE};
use crate::table::{for_each_supported, ParentLayout};

pub use collision::{build_collision_model, build_collision_model_with, CollisionParams};
pub use foraging::{build_foraging_model, build_foraging_model_with, ForagingParams};
pub use grid::{Action, Grid, Task, COLLISION_ACTIONS, FORAGING_ACTIONS};
pub use other::{model_of_other, Correspondence, FactorPair, OtherModel};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cell {cell} is not on the {width}x{height} grid")]
    BadCell { cell: usize, width: usize, height: usize },
    #[error("model is malformed: {0}")]
    Invalid(String),
    #[error("model serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Which agent a model is built for; only affects naming.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentRole {
    Focal,
    Other,
}

/// Whether a factor describes the agent itself or the world around it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perspective {
    #[serde(rename = "self")]
    Own,
    World,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub name: String,
    pub states: Vec<String>,
    /// Other factors the transition is conditioned on (besides the factor itself).
    #[serde(default)]
    pub parents: Vec<usize>,
    pub controlled: bool,
    pub perspective: Perspective,
    pub transition: Vec<f64>,
}

impl FactorSpec {
    pub fn state_count(&self) -> usize {
        self.states.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalitySpec {
    pub name: String,
    pub outcomes: Vec<String>,
    pub parents: Vec<usize>,
    pub likelihood: Vec<f64>,
}

impl ModalitySpec {
    pub fn outcome_count(&self) -> usize {
        self.outcomes.len()
    }
}

/// Per-modality log-preferences `C` (nats, unnormalised).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Preferences(pub Vec<Vec<f64>>);

impl Preferences {
    /// `-ln softmax(C_m)` per modality and outcome.
    pub fn utilities(&self) -> Vec<Vec<f64>> {
        self.0
            .iter()
            .map(|c| {
                let max = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + c.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                c.iter().map(|x| lse - x).collect()
            })
            .collect()
    }
}

/// Joint-occupancy dynamics used when the other agent's next location is
/// hypothesised: co-occupying a cell leaves the agent stuck there for good.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InteractionRule {
    StuckOnCoOccupancy {
        own_factor: usize,
        other_factor: usize,
        /// States that never count as an occupied cell (the null state).
        #[serde(default)]
        excluded_states: Vec<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerativeModel {
    pub name: String,
    pub factors: Vec<FactorSpec>,
    pub modalities: Vec<ModalitySpec>,
    pub preferences: Preferences,
    pub priors: Vec<Vec<f64>>,
    pub actions: Vec<String>,
    pub horizon: usize,
    /// An action with no effect on the world, used as the passive baseline
    /// when reading off the consequences of another action.
    #[serde(default)]
    pub reference_action: Option<usize>,
    #[serde(default)]
    pub interaction: Option<InteractionRule>,
}

/// One problem found by [`GenerativeModel::validate`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

fn column_sums_ok(column: &[f64]) -> bool {
    column.iter().all(|&p| p.is_finite() && p >= 0.0) && (column.iter().sum::<f64>() - 1.0).abs() <= NORM_TOLERANCE
}

impl GenerativeModel {
    pub fn factor_count(&self) -> usize {
        self.factors.len()
    }

    pub fn modality_count(&self) -> usize {
        self.modalities.len()
    }

    pub fn action_count(&self) -> usize {
        self.actions.len()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.factors.iter().map(FactorSpec::state_count).collect()
    }

    pub fn action_index(&self, label: &str) -> Option<usize> {
        self.actions.iter().position(|a| a == label)
    }

    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.name == name)
    }

    pub fn factors_with(&self, perspective: Perspective) -> Vec<usize> {
        (0..self.factors.len())
            .filter(|&i| self.factors[i].perspective == perspective)
            .collect()
    }

    fn parent_layout(&self, parents: &[usize]) -> ParentLayout {
        ParentLayout::new(
            &parents
                .iter()
                .map(|&p| self.factors[p].state_count())
                .collect::<Vec<_>>(),
        )
    }

    /// Returns every normalisation and indexing problem; empty iff well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |location: String, message: String| out.push(Violation { location, message });
        let nf = self.factors.len();

        if self.horizon < 1 {
            push("horizon".into(), "must be at least 1".into());
        }
        if self.actions.is_empty() {
            push("actions".into(), "action list is empty".into());
        }
        if let Some(r) = self.reference_action {
            if r >= self.actions.len() {
                push("reference_action".into(), format!("index {r} out of range"));
            }
        }

        for (fi, f) in self.factors.iter().enumerate() {
            let loc = format!("factor {fi} ({})", f.name);
            if f.states.is_empty() {
                push(loc.clone(), "no states".into());
                continue;
            }
            let mut parents_ok = true;
            for &p in &f.parents {
                if p >= nf {
                    push(loc.clone(), format!("transition parent {p} out of range"));
                    parents_ok = false;
                } else if p == fi {
                    push(loc.clone(), "factor lists itself as a transition parent".into());
                    parents_ok = false;
                }
            }
            if !parents_ok {
                continue;
            }
            let s = f.state_count();
            let configs = self.parent_layout(&f.parents).size();
            let a = if f.controlled { self.actions.len() } else { 1 };
            let expected = a * s * configs * s;
            if f.transition.len() != expected {
                push(
                    loc,
                    format!("transition has {} entries, expected {expected}", f.transition.len()),
                );
                continue;
            }
            for (ci, column) in f.transition.chunks(s).enumerate() {
                if !column_sums_ok(column) {
                    push(
                        loc.clone(),
                        format!(
                            "transition column {ci} (action {}, state {}, parent config {}) sums to {}",
                            ci / (s * configs),
                            (ci / configs) % s,
                            ci % configs,
                            column.iter().sum::<f64>()
                        ),
                    );
                }
            }
        }

        for (mi, m) in self.modalities.iter().enumerate() {
            let loc = format!("modality {mi} ({})", m.name);
            if m.outcomes.is_empty() {
                push(loc.clone(), "no outcomes".into());
                continue;
            }
            if let Some(&p) = m.parents.iter().find(|&&p| p >= nf) {
                push(loc.clone(), format!("parent index {p} out of range"));
                continue;
            }
            let n = m.outcome_count();
            let configs = self.parent_layout(&m.parents).size();
            if m.likelihood.len() != configs * n {
                push(
                    loc,
                    format!(
                        "likelihood has {} entries, expected {}",
                        m.likelihood.len(),
                        configs * n
                    ),
                );
                continue;
            }
            for (ci, column) in m.likelihood.chunks(n).enumerate() {
                if !column_sums_ok(column) {
                    push(
                        loc.clone(),
                        format!("likelihood column {ci} sums to {}", column.iter().sum::<f64>()),
                    );
                }
            }
        }

        if self.preferences.0.len() != self.modalities.len() {
            push(
                "preferences".into(),
                format!(
                    "{} preference vectors for {} modalities",
                    self.preferences.0.len(),
                    self.modalities.len()
                ),
            );
        }
        for (mi, (c, m)) in self.preferences.0.iter().zip(&self.modalities).enumerate() {
            if c.len() != m.outcome_count() {
                push(
                    format!("preferences {mi}"),
                    format!("{} entries for {} outcomes", c.len(), m.outcome_count()),
                );
            }
            if c.iter().any(|x| !x.is_finite()) {
                push(format!("preferences {mi}"), "entries must be finite".into());
            }
        }

        if self.priors.len() != nf {
            push(
                "priors".into(),
                format!("{} priors for {nf} factors", self.priors.len()),
            );
        }
        for (fi, (d, f)) in self.priors.iter().zip(&self.factors).enumerate() {
            if d.len() != f.state_count() {
                push(
                    format!("prior {fi}"),
                    format!("{} entries for {} states", d.len(), f.state_count()),
                );
            } else if !column_sums_ok(d) {
                push(format!("prior {fi}"), format!("sums to {}", d.iter().sum::<f64>()));
            }
        }

        if let Some(InteractionRule::StuckOnCoOccupancy {
            own_factor,
            other_factor,
            ..
        }) = &self.interaction
        {
            if *own_factor >= nf || *other_factor >= nf {
                push("interaction".into(), "factor index out of range".into());
            } else if self.factors[*own_factor].state_count() != self.factors[*other_factor].state_count() {
                push("interaction".into(), "location factors differ in cardinality".into());
            }
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<(), ModelError> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Invalid(
                v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
            ))
        }
    }

    pub fn prior_belief(&self) -> FactoredBelief {
        FactoredBelief::new(self.priors.iter().map(|d| Categorical::from_raw(d.clone())).collect())
    }

    pub fn likelihood(&self, modality: usize) -> ModalityLikelihood<'_> {
        let m = &self.modalities[modality];
        ModalityLikelihood {
            outcome_count: m.outcome_count(),
            parents: &m.parents,
            table: &m.likelihood,
        }
    }

    pub fn likelihoods(&self) -> Vec<ModalityLikelihood<'_>> {
        (0..self.modalities.len()).map(|m| self.likelihood(m)).collect()
    }

    /// Predicts one factor, taking its own belief and its parents' beliefs
    /// explicitly.
    pub fn predict_factor_from(&self, factor: usize, own: &[f64], parents: &[&[f64]], action: usize) -> Categorical {
        let f = &self.factors[factor];
        let s = f.state_count();
        let a = if f.controlled { action } else { 0 };
        if parents.is_empty() {
            let mut out = vec![0.0; s];
            for (state, &w) in own.iter().enumerate().filter(|(_, &w)| w > 0.0) {
                let start = (a * s + state) * s;
                for (next, &p) in f.transition[start..start + s].iter().enumerate() {
                    out[next] += w * p;
                }
            }
            return Categorical::from_raw(out);
        }
        let mut dists: Vec<&[f64]> = Vec::with_capacity(parents.len() + 1);
        dists.push(own);
        dists.extend_from_slice(parents);
        let configs: usize = parents.iter().map(|d| d.len()).product();
        let base = a * s * configs;
        let mut out = vec![0.0; s];
        // (s, parents) jointly index the column once the action is fixed
        for_each_supported(&dists, |col, _, w| {
            let start = (base + col) * s;
            for (next, &p) in f.transition[start..start + s].iter().enumerate() {
                out[next] += w * p;
            }
        });
        Categorical::from_raw(out)
    }

    /// Predicts one factor from a full belief.
    pub fn predict_factor(&self, factor: usize, belief: &FactoredBelief, action: usize) -> Categorical {
        let parents: Vec<&[f64]> = self.factors[factor]
            .parents
            .iter()
            .map(|&p| belief.factor(p).probs())
            .collect();
        self.predict_factor_from(factor, belief.factor(factor).probs(), &parents, action)
    }

    /// Mean-field one-step prediction of every factor under `action`.
    pub fn predict(&self, belief: &FactoredBelief, action: usize) -> FactoredBelief {
        FactoredBelief::new(
            (0..self.factors.len())
                .map(|f| self.predict_factor(f, belief, action))
                .collect(),
        )
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Identity table over `n` states.
pub(crate) fn identity_table(n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n * n];
    for s in 0..n {
        t[s * n + s] = 1.0;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GenerativeModel {
        GenerativeModel {
            name: "tiny".into(),
            factors: vec![FactorSpec {
                name: "s".into(),
                states: vec!["a".into(), "b".into()],
                parents: vec![],
                controlled: true,
                perspective: Perspective::Own,
                // action 0 keeps, action 1 flips
                transition: vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0],
            }],
            modalities: vec![ModalitySpec {
                name: "o".into(),
                outcomes: vec!["a".into(), "b".into()],
                parents: vec![0],
                likelihood: identity_table(2),
            }],
            preferences: Preferences(vec![vec![0.0, 1.0]]),
            priors: vec![vec![0.5, 0.5]],
            actions: vec!["stay".into(), "flip".into()],
            horizon: 2,
            reference_action: Some(0),
            interaction: None,
        }
    }

    #[test]
    fn tiny_is_valid() {
        assert!(tiny().validate().is_empty());
    }

    #[test]
    fn column_not_summing_to_one_is_named() {
        let mut m = tiny();
        m.modalities[0].likelihood = vec![0.9, 0.0, 0.0, 1.0];
        let v = m.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].location.contains("modality 0 (o)"));
        assert!(v[0].message.contains("column 0"));
    }

    #[test]
    fn parent_out_of_range_is_reported() {
        let mut m = tiny();
        m.modalities[0].parents = vec![3];
        let v = m.validate();
        assert!(v.iter().any(|x| x.message.contains("out of range")));
    }

    #[test]
    fn zero_horizon_and_bad_prior_are_reported() {
        let mut m = tiny();
        m.horizon = 0;
        m.priors[0] = vec![0.7, 0.7];
        let v = m.validate();
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn prediction_follows_action() {
        let m = tiny();
        let b = FactoredBelief::new(vec![Categorical::delta(2, 0)]);
        assert_eq!(m.predict(&b, 1).factor(0).probs(), &[0.0, 1.0]);
        assert_eq!(m.predict(&b, 0).factor(0).probs(), &[1.0, 0.0]);
    }

    #[test]
    fn utilities_are_negative_log_softmax() {
        let u = Preferences(vec![vec![10.0, 0.0, 0.0]]).utilities();
        let lse = (10f64.exp() + 2.0).ln();
        assert!((u[0][0] - (lse - 10.0)).abs() < 1e-12);
        assert!((u[0][1] - lse).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let m = tiny();
        let back = GenerativeModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
