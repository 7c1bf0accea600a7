//! Micro models and brute-force oracles shared by the integration tests.
//!
//! Oracle models keep every factor parentless and give each modality a single
//! parent factor, so the joint state stays a product and exhaustive joint
//! enumeration is exact.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tomplan::belief::{Categorical, FactoredBelief};
use tomplan::model::{
    Correspondence, FactorPair, FactorSpec, GenerativeModel, InteractionRule, ModalitySpec, Perspective, Preferences,
};

pub type Marginals = Vec<Vec<f64>>;

pub fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Random distribution; with `sparse`, some entries are zeroed (never all).
pub fn random_dist(rng: &mut ChaCha8Rng, n: usize, sparse: bool) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    if sparse && n > 1 {
        for x in v.iter_mut() {
            if rng.gen_bool(0.3) {
                *x = 0.0;
            }
        }
        if v.iter().all(|&x| x == 0.0) {
            v[rng.gen_range(0..n)] = 1.0;
        }
    }
    let t: f64 = v.iter().sum();
    v.iter().map(|x| x / t).collect()
}

pub fn factor(name: &str, transition_rows: &[Vec<Vec<f64>>], perspective: Perspective) -> FactorSpec {
    let s = transition_rows[0].len();
    FactorSpec {
        name: name.into(),
        states: names("s", s),
        parents: vec![],
        controlled: transition_rows.len() > 1,
        perspective,
        transition: transition_rows.iter().flatten().flatten().copied().collect(),
    }
}

/// `columns[s][o] = P(o | s)` for a single-parent modality.
pub fn modality(name: &str, parent: usize, columns: &[Vec<f64>]) -> ModalitySpec {
    ModalitySpec {
        name: name.into(),
        outcomes: names("o", columns[0].len()),
        parents: vec![parent],
        likelihood: columns.iter().flatten().copied().collect(),
    }
}

/// 1-2 factors with up to 3 states, up to 3 actions, one modality per factor
/// with up to 3 outcomes.
pub fn micro_model(rng: &mut ChaCha8Rng) -> GenerativeModel {
    let na = rng.gen_range(1..=3);
    let nf = rng.gen_range(1..=2);
    let mut factors = Vec::new();
    let mut modalities = Vec::new();
    let mut prefs = Vec::new();
    let mut priors = Vec::new();
    for f in 0..nf {
        let s = rng.gen_range(1..=3);
        let controlled = f == 0 || rng.gen_bool(0.5);
        let rows: Vec<Vec<Vec<f64>>> = (0..if controlled { na } else { 1 })
            .map(|_| (0..s).map(|_| random_dist(rng, s, true)).collect())
            .collect();
        let mut spec = factor(&format!("f{f}"), &rows, Perspective::Own);
        spec.controlled = controlled;
        factors.push(spec);
        let o = rng.gen_range(1..=3);
        let columns: Vec<Vec<f64>> = (0..s).map(|_| random_dist(rng, o, true)).collect();
        modalities.push(modality(&format!("m{f}"), f, &columns));
        prefs.push((0..o).map(|_| rng.gen_range(-3.0..3.0)).collect());
        priors.push(random_dist(rng, s, true));
    }
    GenerativeModel {
        name: "micro".into(),
        factors,
        modalities,
        preferences: Preferences(prefs),
        priors,
        actions: names("a", na),
        horizon: 2,
        reference_action: Some(0),
        interaction: None,
    }
}

pub fn belief(m: &[Vec<f64>]) -> FactoredBelief {
    FactoredBelief::new(m.iter().map(|v| Categorical::new(v.clone()).unwrap()).collect())
}

pub fn marginals(b: &FactoredBelief) -> Marginals {
    b.factors().iter().map(|c| c.probs().to_vec()).collect()
}

fn cards(m: &Marginals) -> Vec<usize> {
    m.iter().map(Vec::len).collect()
}

/// Mixed-radix decode, last digit fastest.
fn digits(mut index: usize, radix: &[usize]) -> Vec<usize> {
    let mut out = vec![0; radix.len()];
    for i in (0..radix.len()).rev() {
        out[i] = index % radix[i];
        index /= radix[i];
    }
    out
}

pub fn transition_row(model: &GenerativeModel, f: usize, action: usize, s: usize) -> &[f64] {
    let spec = &model.factors[f];
    let n = spec.state_count();
    let a = if spec.controlled { action } else { 0 };
    &spec.transition[(a * n + s) * n..(a * n + s + 1) * n]
}

pub fn predict_one(model: &GenerativeModel, f: usize, b: &[f64], action: usize) -> Vec<f64> {
    let mut out = vec![0.0; b.len()];
    for (s, &p) in b.iter().enumerate() {
        for (t, &q) in transition_row(model, f, action, s).iter().enumerate() {
            out[t] += p * q;
        }
    }
    out
}

pub fn predict(model: &GenerativeModel, b: &[Vec<f64>], action: usize) -> Marginals {
    (0..b.len()).map(|f| predict_one(model, f, &b[f], action)).collect()
}

fn lik(model: &GenerativeModel, m: usize, s: usize, o: usize) -> f64 {
    let spec = &model.modalities[m];
    spec.likelihood[s * spec.outcome_count() + o]
}

fn utilities(model: &GenerativeModel) -> Vec<Vec<f64>> {
    model
        .preferences
        .0
        .iter()
        .map(|c| {
            let z: f64 = c.iter().map(|x| x.exp()).sum();
            c.iter().map(|x| -(x.exp() / z).ln()).collect()
        })
        .collect()
}

pub struct Branch {
    pub probability: f64,
    pub outcomes: Vec<usize>,
    pub posterior: Marginals,
}

/// One-step G and the outcome branches, by enumerating every joint state and
/// joint outcome.
pub fn evaluate(model: &GenerativeModel, pred: &Marginals) -> (f64, Vec<Branch>) {
    let sc = cards(pred);
    let oc: Vec<usize> = model.modalities.iter().map(ModalitySpec::outcome_count).collect();
    let ns: usize = sc.iter().product();
    let no: usize = oc.iter().product();
    let u = utilities(model);
    let prior: Vec<f64> = (0..ns)
        .map(|j| digits(j, &sc).iter().enumerate().map(|(f, &s)| pred[f][s]).product())
        .collect();
    let mut g = 0.0;
    let mut branches = Vec::new();
    for oi in 0..no {
        let o = digits(oi, &oc);
        let joint: Vec<f64> = (0..ns)
            .map(|j| {
                let s = digits(j, &sc);
                let l: f64 = (0..oc.len())
                    .map(|m| lik(model, m, s[model.modalities[m].parents[0]], o[m]))
                    .product();
                prior[j] * l
            })
            .collect();
        let q: f64 = joint.iter().sum();
        if q <= 0.0 {
            continue;
        }
        let post: Vec<f64> = joint.iter().map(|x| x / q).collect();
        let kl: f64 = post
            .iter()
            .zip(&prior)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, r)| p * (p / r).ln())
            .sum();
        let utility: f64 = o.iter().enumerate().map(|(m, &k)| u[m][k]).sum();
        g += q * (utility - kl);
        let mut m = sc.iter().map(|&n| vec![0.0; n]).collect::<Marginals>();
        for (j, p) in post.iter().enumerate() {
            for (f, &s) in digits(j, &sc).iter().enumerate() {
                m[f][s] += p;
            }
        }
        branches.push(Branch {
            probability: q,
            outcomes: o,
            posterior: m,
        });
    }
    (g, branches)
}

pub fn softmax_neg(g: &[f64]) -> Vec<f64> {
    let min = g.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = g.iter().map(|x| (-(x - min)).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| x / z).collect()
}

fn expected(g: &[f64]) -> f64 {
    softmax_neg(g).iter().zip(g).map(|(q, g)| q * g).sum()
}

/// Unpruned sophisticated-inference G per action with `horizon` steps left.
pub fn si_oracle(model: &GenerativeModel, b: &[Vec<f64>], horizon: usize) -> Vec<f64> {
    (0..model.actions.len())
        .map(|a| {
            let (g1, branches) = evaluate(model, &predict(model, b, a));
            if horizon == 1 {
                return g1;
            }
            g1 + branches
                .iter()
                .map(|br| br.probability * expected(&si_oracle(model, &br.posterior, horizon - 1)))
                .sum::<f64>()
        })
        .collect()
}

/// Bayes per factor with single-parent modalities; a factor left with no mass
/// takes its normalised likelihood instead.
fn observe_recovering(model: &GenerativeModel, prior: &Marginals, outcomes: &[usize]) -> Marginals {
    let mut out = prior.clone();
    for (m, spec) in model.modalities.iter().enumerate() {
        let f = spec.parents[0];
        let l: Vec<f64> = (0..prior[f].len()).map(|s| lik(model, m, s, outcomes[m])).collect();
        let prod: Vec<f64> = out[f].iter().zip(&l).map(|(p, w)| p * w).collect();
        let z: f64 = prod.iter().sum();
        out[f] = if z > 0.0 {
            prod.iter().map(|x| x / z).collect()
        } else {
            let zl: f64 = l.iter().sum();
            l.iter().map(|x| x / zl).collect()
        };
    }
    out
}

/// Two-cell joint task: each agent stays or switches cells, the other agent
/// can also flip a light that both observe noisily, and co-occupancy leaves
/// the focal agent stuck.
pub struct JointTask {
    pub focal: GenerativeModel,
    pub other: GenerativeModel,
    pub correspondence: Correspondence,
}

pub fn joint_task(rng: &mut ChaCha8Rng) -> JointTask {
    let stay_switch = vec![
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![vec![0.0, 1.0], vec![1.0, 0.0]],
    ];
    let drift = |p: f64| vec![vec![vec![p, 1.0 - p], vec![1.0 - p, p]]];
    let light_noise = rng.gen_range(0.6..0.95);
    let light_obs = vec![
        vec![light_noise, 1.0 - light_noise],
        vec![1.0 - light_noise, light_noise],
    ];
    let identity = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let pref = |rng: &mut ChaCha8Rng| vec![0.0, rng.gen_range(-3.0..3.0)];

    let mut focal_light = factor("light", &drift(rng.gen_range(0.6..1.0)), Perspective::World);
    focal_light.controlled = false;
    let focal = GenerativeModel {
        name: "focal".into(),
        factors: vec![
            factor("self", &stay_switch, Perspective::Own),
            factor("other", &drift(rng.gen_range(0.3..0.9)), Perspective::World),
            focal_light,
        ],
        modalities: vec![
            modality("self", 0, &identity),
            modality("other", 1, &identity),
            modality("light", 2, &light_obs),
        ],
        preferences: Preferences(vec![pref(rng), pref(rng), pref(rng)]),
        priors: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]],
        actions: vec!["stay".into(), "switch".into()],
        horizon: 2,
        reference_action: Some(0),
        interaction: Some(InteractionRule::StuckOnCoOccupancy {
            own_factor: 0,
            other_factor: 1,
            excluded_states: vec![],
        }),
    };
    let keep = rng.gen_range(0.6..1.0);
    let flip = rng.gen_range(0.5..1.0);
    let light = vec![
        vec![vec![keep, 1.0 - keep], vec![1.0 - keep, keep]],
        vec![vec![1.0 - flip, flip], vec![flip, 1.0 - flip]],
    ];
    let push = rng.gen_range(0.1..0.6);
    let nudge = vec![
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![vec![1.0 - push, push], vec![push, 1.0 - push]],
    ];
    let other = GenerativeModel {
        name: "other".into(),
        factors: vec![
            factor("self", &stay_switch, Perspective::Own),
            // the other believes its own action can nudge the focal agent
            factor("other", &nudge, Perspective::World),
            factor("light", &light, Perspective::World),
        ],
        modalities: vec![
            modality("self", 0, &identity),
            modality("other", 1, &identity),
            modality("light", 2, &light_obs),
        ],
        preferences: Preferences(vec![pref(rng), pref(rng), pref(rng)]),
        priors: vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.5, 0.5]],
        actions: vec!["stay".into(), "switch".into()],
        horizon: 2,
        reference_action: Some(0),
        interaction: None,
    };
    let correspondence = Correspondence::new(vec![
        FactorPair { other: 0, focal: 1 },
        FactorPair { other: 1, focal: 0 },
        FactorPair { other: 2, focal: 2 },
    ])
    .unwrap();
    JointTask {
        focal,
        other,
        correspondence,
    }
}

const FLOOR: f64 = 1e-12;

/// Exhaustive joint-policy search over the joint task, pruning off. Returns
/// the focal G per action.
pub fn tom_oracle(task: &JointTask, f: &Marginals, o: &Marginals, stuck: f64, remaining: usize) -> Vec<f64> {
    let (fm, om) = (&task.focal, &task.other);
    let q_other = softmax_neg(&si_oracle(om, o, remaining));
    let passive = predict(om, o, 0);
    let mut g = vec![0.0; fm.actions.len()];
    for (a_o, &w) in q_other.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let pred_o = predict(om, o, a_o);
        // the other's light change, relative to it doing nothing, reaches the focal light
        let ratio: Vec<f64> = pred_o[2]
            .iter()
            .zip(&passive[2])
            .map(|(a, b)| a.max(FLOOR) / b.max(FLOOR))
            .collect();
        let mut informed = f.clone();
        if ratio.iter().any(|&r| r != ratio[0]) {
            let prod: Vec<f64> = f[2].iter().zip(&ratio).map(|(p, r)| p.max(FLOOR) * r).collect();
            let z: f64 = prod.iter().sum();
            informed[2] = prod.iter().map(|x| x / z).collect();
        }
        for (a_f, slot) in g.iter_mut().enumerate() {
            let moved = predict_one(fm, 0, &informed[0], a_f);
            let other_next = predict_one(om, 0, &informed[1], a_o);
            let own: Vec<f64> = moved
                .iter()
                .zip(&informed[0])
                .map(|(m, s)| (1.0 - stuck) * m + stuck * s)
                .collect();
            let co: f64 = own.iter().zip(&other_next).map(|(a, b)| a * b).sum();
            let stuck_next = stuck + (1.0 - stuck) * co;
            let pred_f = vec![own, other_next, predict_one(fm, 2, &informed[2], a_f)];
            let (g1, branches) = evaluate(fm, &pred_f);
            let mut total = g1;
            if remaining > 1 {
                for fb in &branches {
                    // the other sees the world as the focal agent now believes it
                    let mut paired = pred_o.clone();
                    paired[1] = fb.posterior[0].clone();
                    paired[2] = fb.posterior[2].clone();
                    let (_, obs) = evaluate(om, &paired);
                    for ob in &obs {
                        let o_post = observe_recovering(om, &pred_o, &ob.outcomes);
                        let child = tom_oracle(task, &fb.posterior, &o_post, stuck_next, remaining - 1);
                        total += fb.probability * ob.probability * expected(&child);
                    }
                }
            }
            *slot += w * total;
        }
    }
    g
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
