mod common;

use common::{belief, joint_task, micro_model, random_dist};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tomplan::belief::{
    apply_message, kl_divergence, normalize, observe_with_recovery, softmax_neg, Categorical, LikelihoodMessage,
    NORM_TOLERANCE,
};
use tomplan::env::{self, EnvConfig, JointAction};
use tomplan::si::{plan, PlannerConfig};
use tomplan::tom::{world_message_from_other, ToMPlanner, ToMPlannerConfig};
use tomplan::tree::TreeShape;

const CASES: u32 = 10_000;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: CASES,
        ..ProptestConfig::default()
    }
}

fn sums_to_one(p: &[f64]) -> bool {
    (p.iter().sum::<f64>() - 1.0).abs() <= NORM_TOLERANCE && p.iter().all(|&x| x >= 0.0)
}

fn weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..10.0f64, 1..12).prop_filter("some mass", |v| v.iter().any(|&x| x > 1e-6))
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn normalised_vectors_sum_to_one(w in weights()) {
        prop_assert!(sums_to_one(normalize(&w).unwrap().probs()));
    }

    #[test]
    fn softmax_sums_to_one(g in prop::collection::vec(-500.0..500.0f64, 1..12), t in 0.05..20.0f64) {
        prop_assert!(sums_to_one(softmax_neg(&g, t).unwrap().probs()));
    }

    #[test]
    fn prediction_update_and_plan_stay_normalised(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = micro_model(&mut rng);
        let b = model.prior_belief();
        let a = rng.gen_range(0..model.action_count());
        let predicted = model.predict(&b, a);
        for f in predicted.factors() {
            prop_assert!(sums_to_one(f.probs()));
        }
        let outcomes: Vec<usize> = model.modalities.iter().map(|m| rng.gen_range(0..m.outcome_count())).collect();
        let (post, _) = observe_with_recovery(&predicted, &model.likelihoods(), &outcomes).unwrap();
        for f in post.factors() {
            prop_assert!(sums_to_one(f.probs()));
        }
        let cfg = PlannerConfig { horizon: 1, ..PlannerConfig::default() };
        prop_assert!(sums_to_one(plan(&post, &model, &cfg).unwrap().posterior.probs()));
    }

    #[test]
    fn kl_is_non_negative(q in weights(), seed in any::<u64>()) {
        let q = normalize(&q).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = Categorical::new(random_dist(&mut rng, q.len(), false)).unwrap();
        prop_assert!(kl_divergence(&q, &p).unwrap() >= 0.0);
        prop_assert!(kl_divergence(&q, &q).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn flat_messages_leave_beliefs_identical(seed in any::<u64>(), scale in 1e-6..1e6f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cards: Vec<usize> = (0..rng.gen_range(1..5)).map(|_| rng.gen_range(1..6)).collect();
        let b = belief(&cards.iter().map(|&n| random_dist(&mut rng, n, true)).collect::<Vec<_>>());
        prop_assert_eq!(&apply_message(&b, &LikelihoodMessage::ones(&cards)).unwrap(), &b);
        let flat = LikelihoodMessage::new(cards.iter().map(|&n| vec![scale; n]).collect()).unwrap();
        prop_assert_eq!(&apply_message(&b, &flat).unwrap(), &b);
        // an other whose beliefs did not change sends nothing
        let pairs: Vec<_> = (0..cards.len())
            .map(|i| tomplan::model::FactorPair { other: i, focal: i })
            .collect();
        let msg = world_message_from_other(&b, &b, &pairs, &cards).unwrap();
        prop_assert!(msg.is_identity());
        prop_assert_eq!(&apply_message(&b, &msg).unwrap(), &b);
    }

    #[test]
    fn single_agent_trees_alternate(seed in any::<u64>(), pruning in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = micro_model(&mut rng);
        let cfg = PlannerConfig { horizon: rng.gen_range(1..=2), pruning, ..PlannerConfig::default() };
        let p = plan(&model.prior_belief(), &model, &cfg).unwrap();
        prop_assert_eq!(p.tree.check_alternation(TreeShape::Single), Ok(()));
    }

    #[test]
    fn environment_is_deterministic(seed in any::<u64>(), foraging in any::<bool>(), picks in prop::collection::vec((0usize..16, 0usize..16), 12)) {
        let cfg = if foraging { EnvConfig::foraging([8, 6]) } else { EnvConfig::collision() };
        let actions = cfg.task.actions();
        let run = || {
            let mut s = env::reset(&cfg, seed);
            let mut trace = vec![(s.clone(), env::observe(&cfg, &s))];
            for &(a, b) in &picks {
                if env::is_done(&cfg, &s).done {
                    break;
                }
                let joint = JointAction([actions[a % actions.len()], actions[b % actions.len()]]);
                let (next, obs) = env::step(&cfg, &s, joint, seed).unwrap();
                trace.push((next.clone(), obs));
                s = next;
            }
            (trace, env::is_done(&cfg, &s))
        };
        prop_assert_eq!(run(), run());
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn joint_trees_alternate(seed in any::<u64>(), pruning in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let task = joint_task(&mut rng);
        let cfg = ToMPlannerConfig {
            base: PlannerConfig { horizon: rng.gen_range(1..=2), pruning, ..PlannerConfig::default() },
            ..ToMPlannerConfig::default()
        };
        let planner = ToMPlanner::new(&task.focal, &task.other, &task.correspondence, &cfg).unwrap();
        let p = planner.plan_beliefs(&task.focal.prior_belief(), &task.other.prior_belief()).unwrap();
        prop_assert_eq!(p.tree.check_alternation(TreeShape::Joint), Ok(()));
        prop_assert!(sums_to_one(p.posterior.probs()));
        prop_assert!(sums_to_one(p.other_posterior.probs()));
    }
}
