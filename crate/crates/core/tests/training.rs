use debiasfirst::eval::positional_sweep;
use debiasfirst::permute::pos_aug;
use debiasfirst::rng::streams;
use debiasfirst::scorer::synth_generate;
use debiasfirst::train::train;
use debiasfirst::{
    LossConfig, LossVariant, PropensityMatrix, RngStream, ScorerParams, SynthConfig, TrainConfig,
};

fn small_data() -> debiasfirst::SynthDataset {
    synth_generate(&SynthConfig {
        num_queries: 100,
        k: 10,
        ..SynthConfig::default()
    })
    .unwrap()
}

#[test]
fn lm_training_curve_decreases() {
    let data = small_data();
    let cfg = TrainConfig {
        learning_rate: 0.01,
        epochs: 6,
        loss: LossConfig::new(LossVariant::Lm),
        ..TrainConfig::default()
    };
    let report = train(&data.instances, &ScorerParams::zeros(8, 10, 1.0), &cfg, None).unwrap();
    for w in report.loss_curve.windows(2) {
        assert!(w[1] < w[0], "{:?}", report.loss_curve);
    }
}

#[test]
fn same_seed_same_outcome_across_runs() {
    let data = small_data();
    let cfg = TrainConfig {
        loss: LossConfig::new(LossVariant::First),
        seed: 3,
        ..TrainConfig::default()
    };
    let init = ScorerParams::with_position_prior(8, 10, 1.0, 2.0);
    let a = train(&data.instances, &init, &cfg, None).unwrap();
    let b = train(&data.instances, &init, &cfg, None).unwrap();
    assert!(a.same_outcome(&b));
    let c = train(&data.instances, &init, &TrainConfig { seed: 4, ..cfg }, None).unwrap();
    assert!(!a.same_outcome(&c));
}

#[test]
fn augmentation_flattens_the_learned_positional_profile() {
    let data = synth_generate(&SynthConfig {
        num_queries: 200,
        k: 10,
        relevance_position_skew: 1.0,
        ..SynthConfig::default()
    })
    .unwrap();
    let init = ScorerParams::zeros(8, 10, 1.0);
    let cfg = TrainConfig {
        learning_rate: 0.05,
        loss: LossConfig::new(LossVariant::First),
        ..TrainConfig::default()
    };
    let skewed = train(&data.instances, &init, &cfg, None).unwrap();
    let aug = pos_aug(&data.instances, 10, &RngStream::new(1, streams::AUGMENT)).unwrap();
    let debiased = train(
        &aug.instances,
        &init,
        &TrainConfig {
            learning_rate: 0.05 / 1e4,
            loss: LossConfig::new(LossVariant::DebiasFirst),
            ..cfg
        },
        Some(&PropensityMatrix::uniform(10)),
    )
    .unwrap();
    assert!(debiased.final_params.position_spread() < skewed.final_params.position_spread());

    let eval = synth_generate(&SynthConfig {
        num_queries: 100,
        k: 10,
        seed: 99,
        ..SynthConfig::default()
    })
    .unwrap();
    let sweep = |p: &ScorerParams| positional_sweep(p, &eval.lists(), &eval.judgments, 10).unwrap();
    assert!(sweep(&debiased.final_params).variance < sweep(&skewed.final_params).variance);
}

#[test]
fn position_blind_scorer_has_flat_sweep() {
    let eval = small_data();
    let mut params = ScorerParams::zeros(8, 10, 1.0);
    params.content_weights = eval.direction.clone();
    let sweep = positional_sweep(&params, &eval.lists(), &eval.judgments, 10).unwrap();
    assert!(sweep.variance < 1e-24, "{:?}", sweep.per_position_ndcg);
}
