//! Exact discrete probability machinery shared by every planner.
//!
//! Beliefs over hidden states are mean-field: one [`Categorical`] per state
//! factor. Observation evidence from a modality with several parent factors is
//! marginalised onto each parent with a single sweep over the current beliefs
//! of the co-parents.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::for_each_supported;

/// Tolerance used for normalisation checks.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Smallest entry a likelihood message (or a belief it is applied to) may hold.
pub const MESSAGE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    #[error("distribution has zero total mass")]
    ZeroMass,
    #[error("posterior mass vanished for factor {factor}")]
    FactorZeroMass { factor: usize },
    #[error("negative entry {value} at index {index}")]
    NegativeEntry { index: usize, value: f64 },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("empty support")]
    EmptySupport,
    #[error("support mismatch: {left} vs {right}")]
    SupportMismatch { left: usize, right: usize },
    #[error("temperature must be positive and finite, got {0}")]
    BadTemperature(f64),
    #[error("entries sum to {0}, expected 1")]
    NotNormalized(f64),
}

pub type Result<T> = std::result::Result<T, BeliefError>;

/// A normalised probability vector over a finite support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Categorical {
    probs: Vec<f64>,
}

impl Categorical {
    /// Wraps an already normalised vector, checking the invariants.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(BeliefError::EmptySupport);
        }
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() {
                return Err(BeliefError::NonFinite { index });
            }
            if value < 0.0 {
                return Err(BeliefError::NegativeEntry { index, value });
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORM_TOLERANCE {
            return Err(BeliefError::NotNormalized(total));
        }
        Ok(Self { probs })
    }

    /// Internal constructor for vectors that are normalised by construction.
    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        debug_assert!(!probs.is_empty());
        Self { probs }
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform over an empty support");
        Self::from_raw(vec![1.0 / n as f64; n])
    }

    pub fn delta(n: usize, k: usize) -> Self {
        assert!(k < n, "delta index {k} out of range {n}");
        let mut probs = vec![0.0; n];
        probs[k] = 1.0;
        Self::from_raw(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// Index of the largest entry, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    pub fn entropy(&self) -> f64 {
        self.probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
    }

    pub fn is_delta(&self) -> bool {
        self.probs.iter().filter(|&&p| p > 0.0).count() == 1
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

impl TryFrom<Vec<f64>> for Categorical {
    type Error = BeliefError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Categorical::new(v)
    }
}

impl From<Categorical> for Vec<f64> {
    fn from(c: Categorical) -> Self {
        c.probs
    }
}

/// Lowest-index argmax of a slice.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Normalises a non-negative vector.
pub fn normalize(v: &[f64]) -> Result<Categorical> {
    if v.is_empty() {
        return Err(BeliefError::EmptySupport);
    }
    for (index, &value) in v.iter().enumerate() {
        if !value.is_finite() {
            return Err(BeliefError::NonFinite { index });
        }
        if value < 0.0 {
            return Err(BeliefError::NegativeEntry { index, value });
        }
    }
    let total: f64 = v.iter().sum();
    if total <= 0.0 {
        return Err(BeliefError::ZeroMass);
    }
    Ok(Categorical::from_raw(v.iter().map(|x| x / total).collect()))
}

/// `softmax(-values / temperature)`.
///
/// `+inf` entries receive probability zero provided at least one entry is finite.
pub fn softmax_neg(values: &[f64], temperature: f64) -> Result<Categorical> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(BeliefError::BadTemperature(temperature));
    }
    if values.is_empty() {
        return Err(BeliefError::EmptySupport);
    }
    let mut any_finite = false;
    for (index, &v) in values.iter().enumerate() {
        if v.is_nan() || v == f64::NEG_INFINITY {
            return Err(BeliefError::NonFinite { index });
        }
        any_finite |= v.is_finite();
    }
    if !any_finite {
        return Err(BeliefError::NonFinite { index: 0 });
    }
    let min = values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = values
        .iter()
        .map(|&v| {
            if v.is_finite() {
                (-(v - min) / temperature).exp()
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(Categorical::from_raw(weights.into_iter().map(|w| w / total).collect()))
}

/// `D_KL[q || p]` in nats, with `0 ln 0 = 0`.
pub fn kl_divergence(q: &Categorical, p: &Categorical) -> Result<f64> {
    kl_slices(q.probs(), p.probs())
}

pub(crate) fn kl_slices(q: &[f64], p: &[f64]) -> Result<f64> {
    if q.len() != p.len() {
        return Err(BeliefError::SupportMismatch {
            left: q.len(),
            right: p.len(),
        });
    }
    let mut total = 0.0;
    for (&qi, &pi) in q.iter().zip(p) {
        if qi > 0.0 {
            if pi <= 0.0 {
                return Ok(f64::INFINITY);
            }
            total += qi * (qi / pi).ln();
        }
    }
    Ok(total.max(0.0))
}

/// One categorical belief per state factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactoredBelief {
    factors: Vec<Categorical>,
}

impl FactoredBelief {
    pub fn new(factors: Vec<Categorical>) -> Self {
        Self { factors }
    }

    pub fn factors(&self) -> &[Categorical] {
        &self.factors
    }

    pub fn factor(&self, i: usize) -> &Categorical {
        &self.factors[i]
    }

    pub fn set_factor(&mut self, i: usize, value: Categorical) {
        self.factors[i] = value;
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.factors.iter().map(Categorical::len).collect()
    }

    /// Selects a subset of factors, in the given order.
    pub fn select(&self, indices: &[usize]) -> FactoredBelief {
        FactoredBelief::new(indices.iter().map(|&i| self.factors[i].clone()).collect())
    }

    /// Sum of per-factor divergences from `other`.
    pub fn kl_to(&self, other: &FactoredBelief) -> Result<f64> {
        if self.len() != other.len() {
            return Err(BeliefError::SupportMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        let mut total = 0.0;
        for (q, p) in self.factors.iter().zip(&other.factors) {
            total += kl_divergence(q, p)?;
        }
        Ok(total)
    }

    /// Bit patterns of every entry, usable as a hash key.
    pub fn fingerprint(&self) -> Vec<u64> {
        let mut key = Vec::new();
        for f in &self.factors {
            key.push(f.len() as u64);
            key.extend(f.probs().iter().map(|p| p.to_bits()));
        }
        key
    }
}

impl From<Vec<Categorical>> for FactoredBelief {
    fn from(factors: Vec<Categorical>) -> Self {
        Self::new(factors)
    }
}

/// Per-factor (unnormalised) evidence weights, floored at [`MESSAGE_FLOOR`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodMessage {
    factors: Vec<Vec<f64>>,
}

impl LikelihoodMessage {
    /// Builds a message, flooring every entry. Non-finite or negative entries
    /// are rejected.
    pub fn new(factors: Vec<Vec<f64>>) -> Result<Self> {
        let mut out = Vec::with_capacity(factors.len());
        for f in factors {
            let mut row = Vec::with_capacity(f.len());
            for (index, v) in f.into_iter().enumerate() {
                if v.is_nan() || v < 0.0 {
                    return Err(BeliefError::NegativeEntry { index, value: v });
                }
                row.push(if v.is_finite() {
                    v.max(MESSAGE_FLOOR)
                } else {
                    1.0 / MESSAGE_FLOOR
                });
            }
            out.push(row);
        }
        Ok(Self { factors: out })
    }

    /// The uninformative message.
    pub fn ones(cards: &[usize]) -> Self {
        Self {
            factors: cards.iter().map(|&c| vec![1.0; c]).collect(),
        }
    }

    pub fn factors(&self) -> &[Vec<f64>] {
        &self.factors
    }

    pub fn factor(&self, i: usize) -> &[f64] {
        &self.factors[i]
    }

    /// True when the factor's weights are all equal, i.e. carry no information.
    pub fn is_flat(&self, i: usize) -> bool {
        let f = &self.factors[i];
        f.iter().all(|&v| v == f[0])
    }

    pub fn is_identity(&self) -> bool {
        (0..self.factors.len()).all(|i| self.is_flat(i))
    }
}

/// Factor-wise product of a belief with a likelihood message, renormalised.
///
/// Zero belief entries are raised to the floor before multiplication so that a
/// decisive message can move a belief that was numerically certain. Flat
/// message factors leave the corresponding belief factor bit-identical.
pub fn apply_message(belief: &FactoredBelief, msg: &LikelihoodMessage) -> Result<FactoredBelief> {
    if belief.len() != msg.factors.len() {
        return Err(BeliefError::SupportMismatch {
            left: belief.len(),
            right: msg.factors.len(),
        });
    }
    let mut out = Vec::with_capacity(belief.len());
    for (i, (b, m)) in belief.factors().iter().zip(&msg.factors).enumerate() {
        if b.len() != m.len() {
            return Err(BeliefError::SupportMismatch {
                left: b.len(),
                right: m.len(),
            });
        }
        if msg.is_flat(i) {
            out.push(b.clone());
            continue;
        }
        let prod: Vec<f64> = b
            .probs()
            .iter()
            .zip(m)
            .map(|(&p, &w)| p.max(MESSAGE_FLOOR) * w)
            .collect();
        out.push(normalize(&prod).map_err(|_| BeliefError::FactorZeroMass { factor: i })?);
    }
    Ok(FactoredBelief::new(out))
}

/// Borrowed view of a modality's conditional table `P(o | parents)`.
///
/// Column `c` (a mixed-radix parent configuration, last parent fastest) holds
/// `table[c * outcome_count .. (c + 1) * outcome_count]`.
#[derive(Clone, Copy, Debug)]
pub struct ModalityLikelihood<'a> {
    pub outcome_count: usize,
    pub parents: &'a [usize],
    pub table: &'a [f64],
}

impl ModalityLikelihood<'_> {
    fn check(&self, belief: &FactoredBelief) -> Result<()> {
        let mut columns = 1usize;
        for &p in self.parents {
            if p >= belief.len() {
                return Err(BeliefError::SupportMismatch {
                    left: p,
                    right: belief.len(),
                });
            }
            columns *= belief.factor(p).len();
        }
        if columns * self.outcome_count != self.table.len() {
            return Err(BeliefError::SupportMismatch {
                left: columns * self.outcome_count,
                right: self.table.len(),
            });
        }
        Ok(())
    }

    fn parent_dists<'b>(&self, belief: &'b FactoredBelief) -> Vec<&'b [f64]> {
        self.parents.iter().map(|&p| belief.factor(p).probs()).collect()
    }
}

/// Predicted outcome distribution `sum_s P(o | s) prod_f Q(s_f)`.
pub fn expected_observation(belief: &FactoredBelief, likelihood: &ModalityLikelihood<'_>) -> Result<Categorical> {
    likelihood.check(belief)?;
    let n = likelihood.outcome_count;
    let mut out = vec![0.0; n];
    for_each_supported(&likelihood.parent_dists(belief), |col, _, w| {
        let column = &likelihood.table[col * n..(col + 1) * n];
        for (o, &a) in column.iter().enumerate() {
            out[o] += w * a;
        }
    });
    Ok(Categorical::from_raw(out))
}

/// Per-factor evidence accumulated from one or more observed modalities.
/// `None` means no evidence reached that factor.
#[derive(Clone, Debug, PartialEq)]
pub struct Evidence {
    factors: Vec<Option<Vec<f64>>>,
}

impl Evidence {
    pub fn empty(n_factors: usize) -> Self {
        Self {
            factors: vec![None; n_factors],
        }
    }

    pub fn from_factors(factors: Vec<Option<Vec<f64>>>) -> Self {
        Self { factors }
    }

    pub fn factor(&self, i: usize) -> Option<&[f64]> {
        self.factors[i].as_deref()
    }

    /// Multiplies `weights` into factor `i`.
    pub fn combine(&mut self, i: usize, weights: &[f64]) {
        match &mut self.factors[i] {
            Some(acc) => acc.iter_mut().zip(weights).for_each(|(a, w)| *a *= w),
            slot @ None => *slot = Some(weights.to_vec()),
        }
    }
}

/// Evidence that observing `outcome` on a modality puts on each of its parent
/// factors, marginalising over co-parents with the current beliefs.
/// Entries for states with zero belief are reported as zero.
pub fn modality_evidence(
    belief: &FactoredBelief,
    likelihood: &ModalityLikelihood<'_>,
    outcome: usize,
) -> Result<Vec<(usize, Vec<f64>)>> {
    likelihood.check(belief)?;
    let n = likelihood.outcome_count;
    if outcome >= n {
        return Err(BeliefError::SupportMismatch {
            left: outcome,
            right: n,
        });
    }
    let dists = likelihood.parent_dists(belief);
    let mut out: Vec<(usize, Vec<f64>)> = likelihood
        .parents
        .iter()
        .map(|&p| (p, vec![0.0; belief.factor(p).len()]))
        .collect();
    if likelihood.parents.len() == 1 {
        let e = &mut out[0].1;
        for (v, slot) in e.iter_mut().enumerate() {
            *slot = likelihood.table[v * n + outcome];
        }
        return Ok(out);
    }
    for_each_supported(&dists, |col, values, w| {
        let a = likelihood.table[col * n + outcome];
        if a == 0.0 {
            return;
        }
        for (k, &v) in values.iter().enumerate() {
            out[k].1[v] += a * w / dists[k][v];
        }
    });
    Ok(out)
}

/// Factor-wise Bayes: each factor is multiplied by its evidence and renormalised.
pub fn bayes_update(prior: &FactoredBelief, evidence: &Evidence) -> Result<FactoredBelief> {
    if prior.len() != evidence.factors.len() {
        return Err(BeliefError::SupportMismatch {
            left: prior.len(),
            right: evidence.factors.len(),
        });
    }
    let mut out = Vec::with_capacity(prior.len());
    for (i, f) in prior.factors().iter().enumerate() {
        match evidence.factor(i) {
            None => out.push(f.clone()),
            Some(e) => {
                if e.len() != f.len() {
                    return Err(BeliefError::SupportMismatch {
                        left: e.len(),
                        right: f.len(),
                    });
                }
                let prod: Vec<f64> = f.probs().iter().zip(e).map(|(p, w)| p * w).collect();
                out.push(normalize(&prod).map_err(|_| BeliefError::FactorZeroMass { factor: i })?);
            }
        }
    }
    Ok(FactoredBelief::new(out))
}

/// Evidence for a joint observation over several modalities (single sweep:
/// co-parent beliefs are the prior's).
pub fn observation_evidence(
    prior: &FactoredBelief,
    likelihoods: &[ModalityLikelihood<'_>],
    outcomes: &[usize],
) -> Result<Evidence> {
    if likelihoods.len() != outcomes.len() {
        return Err(BeliefError::SupportMismatch {
            left: likelihoods.len(),
            right: outcomes.len(),
        });
    }
    let mut evidence = Evidence::empty(prior.len());
    for (lik, &o) in likelihoods.iter().zip(outcomes) {
        for (factor, weights) in modality_evidence(prior, lik, o)? {
            evidence.combine(factor, &weights);
        }
    }
    Ok(evidence)
}

/// Posterior after observing `outcomes` (one per modality).
pub fn observe(
    prior: &FactoredBelief,
    likelihoods: &[ModalityLikelihood<'_>],
    outcomes: &[usize],
) -> Result<FactoredBelief> {
    bayes_update(prior, &observation_evidence(prior, likelihoods, outcomes)?)
}

/// Like [`observe`], but a factor whose posterior mass vanishes is replaced by
/// its normalised evidence alone. Returns the indices of such factors.
pub fn observe_with_recovery(
    prior: &FactoredBelief,
    likelihoods: &[ModalityLikelihood<'_>],
    outcomes: &[usize],
) -> Result<(FactoredBelief, Vec<usize>)> {
    let evidence = observation_evidence(prior, likelihoods, outcomes)?;
    let mut out = Vec::with_capacity(prior.len());
    let mut surprised = Vec::new();
    for (i, f) in prior.factors().iter().enumerate() {
        match evidence.factor(i) {
            None => out.push(f.clone()),
            Some(e) => {
                let prod: Vec<f64> = f.probs().iter().zip(e).map(|(p, w)| p * w).collect();
                match normalize(&prod) {
                    Ok(c) => out.push(c),
                    Err(_) => {
                        surprised.push(i);
                        out.push(normalize(e).unwrap_or_else(|_| f.clone()));
                    }
                }
            }
        }
    }
    Ok((FactoredBelief::new(out), surprised))
}
