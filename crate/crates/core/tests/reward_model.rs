mod common;

use common::{corpus, gradient_relative_error, random_regression};
use rand::Rng;
use social_rl::episode::ActionToken;
use social_rl::reward_model::{
    train, Featurizer, RegressionExample, RewardModel, RewardModelError, RewardModelParameters, RmTrainConfig,
};
use social_rl::seed;
use social_rl::sim::{Scenario, LEARNER_ID};

fn random_params(seed_: u64, dim: usize, hidden: usize) -> RewardModelParameters {
    if hidden == 0 {
        let mut rng = seed::rng(seed_);
        RewardModelParameters::Linear {
            weights: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    } else {
        RewardModelParameters::hidden(dim, hidden, seed_)
    }
}

#[test]
fn analytic_gradient_matches_central_differences() {
    for c in 0..20u64 {
        let dim = 2 + (c as usize % 7);
        let hidden = [0, 3, 8][c as usize % 3];
        let params = random_params(c, dim, hidden);
        let data = random_regression(100 + c, 5 + c as usize, dim);
        let err = gradient_relative_error(&params, &data);
        assert!(err < 1e-5, "config {c}: relative error {err}");
    }
}

#[test]
fn full_batch_linear_training_never_increases_loss() {
    let data = random_regression(1, 80, 12);
    let config = RmTrainConfig { learning_rate: 0.05, epochs: 300, batch_size: 0, seed: 0 };
    let (_, trace) = train(&RewardModelParameters::linear(12), &data, &config).unwrap();
    assert!(trace.0.windows(2).all(|w| w[1] <= w[0]), "loss went up");
    assert!(trace.last() < trace.initial());
    assert_eq!(trace.0.len(), 301);
}

#[test]
fn single_example_is_fit_exactly() {
    let data = random_regression(2, 1, 6);
    for hidden in [0, 4] {
        let config = RmTrainConfig { learning_rate: 0.1, epochs: 3000, batch_size: 0, seed: 0 };
        let (_, trace) = train(&random_params(3, 6, hidden), &data, &config).unwrap();
        assert!(trace.last() < 1e-8, "hidden {hidden}: {}", trace.last());
    }
}

#[test]
fn invalid_training_inputs() {
    let data = random_regression(4, 3, 2);
    let bad_lr = RmTrainConfig { learning_rate: 0.0, ..RmTrainConfig::default() };
    assert!(matches!(train(&RewardModelParameters::linear(2), &data, &bad_lr), Err(RewardModelError::InvalidLearningRate(_))));
    assert!(matches!(
        train(&RewardModelParameters::linear(3), &data, &RmTrainConfig::default()),
        Err(RewardModelError::DimensionMismatch { .. })
    ));
    let huge = RmTrainConfig { learning_rate: 1e3, epochs: 50, batch_size: 0, seed: 0 };
    assert!(matches!(
        train(&RewardModelParameters::linear(2), &data, &huge),
        Err(RewardModelError::DivergenceDetected { .. })
    ));
}

#[test]
fn reward_model_scores_states_through_the_featurizer() {
    let scenario = Scenario::easy();
    let featurizer = Featurizer::new(&scenario);
    let episodes = corpus(&scenario, 20, 8);
    // Reward every "rapport" utterance with 1 and everything else with 0.
    let mut data = Vec::new();
    for e in &episodes {
        for (state, u) in e.decompose(LEARNER_ID).unwrap() {
            data.push(RegressionExample {
                features: featurizer.features(&state, u.action_token).unwrap(),
                target: f64::from(u.action_token == ActionToken::Rapport),
            });
        }
    }
    let config = RmTrainConfig { learning_rate: 0.05, epochs: 600, batch_size: 0, seed: 0 };
    let (params, trace) = train(&RewardModelParameters::linear(featurizer.feature_dim()), &data, &config).unwrap();
    assert!(trace.last() < 0.25 * trace.initial());
    let rm = RewardModel { featurizer: featurizer.clone(), params };
    let (state, _) = episodes[0].decompose(LEARNER_ID).unwrap().remove(0);
    let rapport = rm.predict(&state, ActionToken::Rapport).unwrap();
    let leave = rm.predict(&state, ActionToken::Leave).unwrap();
    assert!(rapport > leave + 0.5, "{rapport} vs {leave}");
    let ctx = featurizer.context(&state);
    let idx = featurizer.action_index(ActionToken::Rapport).unwrap();
    assert_eq!(rm.predict_from_context(&ctx, idx, state.goal.target.target_units), rapport);
    assert!(matches!(rm.predict(&state, ActionToken::Propose(99)), Err(RewardModelError::UnknownToken(_))));
}

#[test]
fn saved_models_reload_bit_exactly() {
    let params = RewardModelParameters::hidden(5, 3, 9);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rm.json");
    params.save(&path).unwrap();
    assert_eq!(RewardModelParameters::load(&path).unwrap(), params);
    std::fs::write(&path, "{\"format\": \"something else\"}").unwrap();
    assert!(RewardModelParameters::load(&path).is_err());
}
