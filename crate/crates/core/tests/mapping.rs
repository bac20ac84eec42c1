use jmm_core::desk::{desk_chain, desk_routing};
use jmm_core::mapping::{train_initial, Adam, AdamConfig, OnlineUpdateConfig};
use jmm_core::routing::generate_grid_dataset;
use jmm_core::{Activation, Execution, GridSpec, JointMuscleMapping, OnlineTrainer, TrainConfig};
use proptest::prelude::*;

fn small_desk_fit(epochs: usize) -> (JointMuscleMapping, jmm_core::mapping::TrainReport, jmm_core::routing::Dataset) {
    let chain = desk_chain().unwrap();
    let routing = desk_routing(&chain).unwrap();
    let data = generate_grid_dataset(&routing, &chain, &GridSpec::new(vec![5; 4]).unwrap(), Execution::Sequential).unwrap();
    let cfg = TrainConfig {
        hidden_dim: 32,
        epochs,
        adam: AdamConfig {
            learning_rate: 1e-2,
            ..AdamConfig::default()
        },
        seed: 4,
        ..TrainConfig::default()
    };
    let (net, report) = train_initial(&data, &cfg).unwrap();
    (net, report, data)
}

#[test]
fn training_drives_validation_error_down() {
    let (_, report, _) = small_desk_fit(30);
    let first = report.epochs[0].validation_rmse;
    let last = report.final_validation_rmse();
    assert!(last < 0.3 * first, "{first} -> {last}");
    assert_eq!(report.train_size + report.validation_size, 625);
}

#[test]
fn training_is_reproducible_across_execution_modes() {
    let chain = desk_chain().unwrap();
    let routing = desk_routing(&chain).unwrap();
    let data = generate_grid_dataset(&routing, &chain, &GridSpec::new(vec![5; 4]).unwrap(), Execution::Sequential).unwrap();
    let run = |execution| {
        let cfg = TrainConfig {
            hidden_dim: 16,
            epochs: 3,
            seed: 9,
            execution,
            ..TrainConfig::default()
        };
        train_initial(&data, &cfg).unwrap()
    };
    let (a, ra) = run(Execution::Sequential);
    let (b, rb) = run(Execution::Parallel);
    assert_eq!(a.params(), b.params());
    assert_eq!(ra, rb);
}

#[test]
fn saved_model_loads_bit_identical() {
    let net = JointMuscleMapping::new(4, 8, 24, Activation::Sigmoid, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("desk.jmm");
    net.save(&path).unwrap();
    let back = JointMuscleMapping::load(&path).unwrap();
    assert_eq!(back, net);
    let theta = [0.1, 0.2, -0.3, 1.0];
    assert_eq!(back.evaluate(&theta).unwrap(), net.evaluate(&theta).unwrap());
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"JMM1");
    assert_eq!(bytes.len(), 4 + 4 + 3 * 8 + 4 + 8 + 8 * net.params().len());
}

#[test]
fn truncated_model_file_is_rejected() {
    let net = JointMuscleMapping::new(2, 2, 3, Activation::Relu, 0).unwrap();
    let mut bytes = Vec::new();
    net.write_to(&mut bytes).unwrap();
    bytes.pop();
    assert!(JointMuscleMapping::read_from(bytes.as_slice()).is_err());
}

#[test]
fn first_adam_step_moves_each_parameter_by_the_learning_rate() {
    // With zero moments, m̂ = g and v̂ = g², so the step is lr·g/(|g| + ε).
    let cfg = AdamConfig::default();
    let mut adam = Adam::new(cfg, 3);
    let mut params = vec![1.0, -2.0, 0.5];
    let grad = [0.3, -7.0, 1e-3];
    adam.step(&mut params, &grad);
    let expected: Vec<f64> = [1.0, -2.0, 0.5]
        .iter()
        .zip(&grad)
        .map(|(p, g)| p - cfg.learning_rate * g / (g.abs() + cfg.epsilon))
        .collect();
    for (a, b) in params.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-15);
    }
    assert_eq!(adam.steps(), 1);
}

#[test]
fn online_update_pulls_toward_the_sample() {
    let (mut net, _, _) = small_desk_fit(20);
    let chain = desk_chain().unwrap();
    let mut trainer = OnlineTrainer::new(
        OnlineUpdateConfig {
            steps_per_event: 20,
            ..OnlineUpdateConfig::default()
        },
        chain.limits(),
        &net,
    )
    .unwrap();
    let theta = [0.6, 0.3, 0.1, 1.2];
    let mut target = net.evaluate(&theta).unwrap();
    target[0] += 3.0;
    let before = (net.evaluate(&theta).unwrap()[0] - target[0]).abs();
    let stats = trainer.update(&mut net, &theta, &target).unwrap();
    let after = (net.evaluate(&theta).unwrap()[0] - target[0]).abs();
    assert!(stats.loss_after < stats.loss_before);
    assert!(after < before, "{before} -> {after}");
}

#[test]
fn anchors_limit_forgetting_on_a_small_network() {
    let (net, _, data) = small_desk_fit(30);
    let chain = desk_chain().unwrap();
    let baseline = net.rmse(&data.samples, Execution::Sequential);
    let drift = |anchors: usize| {
        let mut net = net.clone();
        let cfg = OnlineUpdateConfig {
            anchors,
            seed: 2,
            ..OnlineUpdateConfig::default()
        };
        let mut trainer = OnlineTrainer::new(cfg, chain.limits(), &net).unwrap();
        for k in 0..100 {
            let theta = [0.6 + 0.002 * k as f64, 0.3, 0.1, 1.2];
            let mut l = net.evaluate(&theta).unwrap();
            l.iter_mut().for_each(|v| *v += 2.0);
            trainer.update(&mut net, &theta, &l).unwrap();
        }
        (net.rmse(&data.samples, Execution::Sequential) - baseline).abs()
    };
    let (with, without) = (drift(8), drift(0));
    assert!(without > with, "N=0 drift {without} vs N=8 drift {with}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn params_round_trip_through_the_file_format(seed in any::<u64>(), hidden in 1usize..12) {
        let net = JointMuscleMapping::new(3, 5, hidden, Activation::Sigmoid, seed).unwrap();
        let mut bytes = Vec::new();
        net.write_to(&mut bytes).unwrap();
        prop_assert_eq!(JointMuscleMapping::read_from(bytes.as_slice()).unwrap(), net);
    }

    #[test]
    fn sigmoid_outputs_are_bounded_by_the_output_layer(theta in prop::collection::vec(-10.0f64..10.0, 4), seed in any::<u64>()) {
        let net = JointMuscleMapping::new(4, 2, 8, Activation::Sigmoid, seed).unwrap();
        let p = net.params();
        // |out_i| ≤ Σ_k |W2_ik| + |b2_i| since hidden activations lie in (0, 1).
        let w2 = &p[8 * 4 + 8..8 * 4 + 8 + 2 * 8];
        let b2 = &p[8 * 4 + 8 + 2 * 8..];
        let out = net.evaluate(&theta).unwrap();
        for i in 0..2 {
            let bound: f64 = w2[i * 8..(i + 1) * 8].iter().map(|w| w.abs()).sum::<f64>() + b2[i].abs();
            prop_assert!(out[i].abs() <= bound + 1e-12);
        }
    }
}
