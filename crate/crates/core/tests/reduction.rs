mod common;

use common::{belief, factor, max_abs_diff, micro_model, modality, random_dist};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tomplan::model::{Correspondence, GenerativeModel, Perspective, Preferences};
use tomplan::si::{plan_values, PlannerConfig};
use tomplan::tom::{ToMPlanner, ToMPlannerConfig};

const TOL: f64 = 1e-9;

/// An other with one state, one action and one outcome: it never moves, sees
/// nothing, and shares no factor with the focal agent.
fn inert_other() -> GenerativeModel {
    GenerativeModel {
        name: "inert".into(),
        factors: vec![factor("self", &[vec![vec![1.0]]], Perspective::Own)],
        modalities: vec![modality("self", 0, &[vec![1.0]])],
        preferences: Preferences(vec![vec![0.0]]),
        priors: vec![vec![1.0]],
        actions: vec!["wait".into()],
        horizon: 2,
        reference_action: Some(0),
        interaction: None,
    }
}

#[test]
fn degenerate_other_reduces_joint_search_to_single_agent_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7ed);
    let other = inert_other();
    let corr = Correspondence::new(vec![]).unwrap();
    let inert = belief(&[vec![1.0]]);
    for case in 0..60 {
        let model = micro_model(&mut rng);
        let horizon = rng.gen_range(1..=2);
        let start: Vec<Vec<f64>> = model
            .factors
            .iter()
            .map(|f| random_dist(&mut rng, f.state_count(), true))
            .collect();
        for pruning in [false, true] {
            let base = PlannerConfig {
                horizon,
                pruning,
                ..PlannerConfig::default()
            };
            let (q_si, g_si) = plan_values(&belief(&start), &model, &base).unwrap();
            let cfg = ToMPlannerConfig {
                base: base.clone(),
                ..ToMPlannerConfig::default()
            };
            let planner = ToMPlanner::new(&model, &other, &corr, &cfg).unwrap();
            let (q_tom, g_tom, _) = planner.plan_values(&belief(&start), &inert).unwrap();
            assert!(
                max_abs_diff(q_tom.probs(), q_si.probs()) <= TOL,
                "case {case} pruning {pruning}"
            );
            assert!(max_abs_diff(&g_tom, &g_si) <= TOL, "case {case} pruning {pruning}");
        }
    }
}
