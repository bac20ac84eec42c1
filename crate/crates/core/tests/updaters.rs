use jmm_core::desk::desk_chain;
use jmm_core::plant::NoiseSource;
use jmm_core::updaters::{observe_marker, solve_ik, IkConfig, IkOutcome, Rejection, VisionUpdater};
use jmm_core::{SensorNoise, UpdateSource, UpdaterConfig};
use proptest::prelude::*;

fn interior_posture() -> impl Strategy<Value = Vec<f64>> {
    desk_chain()
        .unwrap()
        .limits()
        .into_iter()
        .map(|(lo, hi)| (lo + 0.2)..(hi - 0.2))
        .collect::<Vec<_>>()
}

fn still_history() -> Vec<Vec<f64>> {
    vec![vec![0.0; 8]; 5]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ik_recovers_an_exact_pose_from_a_nearby_start(truth in interior_posture(), offset in prop::collection::vec(-0.1f64..0.1, 4)) {
        let chain = desk_chain().unwrap();
        let target = chain.forward_kinematics(&truth).unwrap();
        let start: Vec<f64> = truth.iter().zip(&offset).map(|(q, d)| q + d).collect();
        let cfg = IkConfig::default();
        match solve_ik(&chain, &start, &target, &cfg).unwrap() {
            IkOutcome::Converged(s) => {
                let pose = chain.forward_kinematics(&s.theta).unwrap();
                prop_assert!(pose.position_error(&target).norm() < cfg.pos_tol);
                prop_assert!(pose.rotation_error(&target).norm() < cfg.rot_tol);
                prop_assert!(chain.within_limits(&s.theta, 0.0));
            }
            IkOutcome::Failed(s) => prop_assert!(false, "failed: {s:?}"),
        }
    }
}

#[test]
fn unreachable_target_fails() {
    let chain = desk_chain().unwrap();
    let mut target = chain.forward_kinematics(&[0.0; 4]).unwrap();
    target.position.z -= 200.0;
    let outcome = solve_ik(&chain, &[0.0; 4], &target, &IkConfig::default()).unwrap();
    assert!(matches!(outcome, IkOutcome::Failed(_)));
}

#[test]
fn marker_noise_has_the_configured_spread() {
    let chain = desk_chain().unwrap();
    let theta = [0.4, 0.2, 0.1, 0.9];
    let exact = chain.forward_kinematics(&theta).unwrap();
    let cfg = SensorNoise {
        seed: 21,
        ..SensorNoise::default()
    };
    let mut noise = NoiseSource::new(cfg).unwrap();
    let n = 20_000;
    let mut sum = [0.0; 3];
    let mut sq = [0.0; 3];
    let mut rot_sq = 0.0;
    for k in 0..n {
        let obs = observe_marker(&chain, &theta, &mut noise, k as f64).unwrap();
        let d = obs.pose.position - exact.position;
        for a in 0..3 {
            sum[a] += d[a];
            sq[a] += d[a] * d[a];
        }
        rot_sq += (obs.pose.orientation * exact.orientation.inverse()).scaled_axis().norm_squared();
    }
    for a in 0..3 {
        let mean = sum[a] / n as f64;
        let std = (sq[a] / n as f64 - mean * mean).sqrt();
        // Standard error of the mean is 2/√20000 ≈ 0.014 mm.
        assert!(mean.abs() < 0.06, "axis {a} mean {mean}");
        assert!((std - cfg.sigma_marker_pos).abs() < 0.05, "axis {a} std {std}");
    }
    // Three independent components: E‖r‖² = 3σ².
    let rot_rms = (rot_sq / n as f64 / 3.0).sqrt();
    assert!((rot_rms - cfg.sigma_marker_rot).abs() < 0.02 * cfg.sigma_marker_rot, "{rot_rms}");
}

#[test]
fn noiseless_observation_is_the_exact_pose() {
    let chain = desk_chain().unwrap();
    let theta = [1.0, 0.5, -0.3, 1.6];
    let mut noise = NoiseSource::new(SensorNoise::noiseless(0)).unwrap();
    let obs = observe_marker(&chain, &theta, &mut noise, 2.5).unwrap();
    assert_eq!(obs.pose, chain.forward_kinematics(&theta).unwrap());
    assert_eq!(obs.time, 2.5);
}

#[test]
fn vision_updater_pairs_ik_posture_with_commanded_lengths() {
    let chain = desk_chain().unwrap();
    let mut up = VisionUpdater::new(UpdaterConfig::default(), chain.clone()).unwrap();
    let truth = [0.5, 0.3, 0.1, 1.0];
    let mut noise = NoiseSource::new(SensorNoise::noiseless(0)).unwrap();
    let obs = observe_marker(&chain, &truth, &mut noise, 1.0).unwrap();
    let estimate = [0.55, 0.28, 0.05, 1.05];
    let l_target = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
    let sample = up.observe(&obs, &estimate, &l_target, &still_history()).unwrap().unwrap();
    assert_eq!(sample.source, UpdateSource::Vision);
    assert_eq!(sample.lengths, l_target);
    let pose = chain.forward_kinematics(&sample.theta).unwrap();
    assert!(pose.position_error(&obs.pose).norm() < 2.0);

    // Same place again: rejected by the separation gate.
    let again = up.observe(&obs, &estimate, &l_target, &still_history()).unwrap();
    assert!(matches!(again, Err(Rejection::TooClose { .. })));
}

#[test]
fn vision_updater_gates_on_estimate_disagreement() {
    let chain = desk_chain().unwrap();
    let mut up = VisionUpdater::new(UpdaterConfig::default(), chain).unwrap();
    // IK posture 0.5 rad L2 from the estimate; C is 0.35 rad.
    let rejected = up.gate(vec![0.5, 0.0, 0.0, 0.0], &[0.0; 4], &[0.0; 8], 0.0);
    assert!(matches!(rejected, Err(Rejection::IkGate { distance }) if (distance - 0.5).abs() < 1e-12));
    assert!(up.gate(vec![0.3, 0.0, 0.0, 0.0], &[0.0; 4], &[0.0; 8], 0.0).is_ok());
    assert_eq!(up.emitted().len(), 1);
}

#[test]
fn vision_updater_waits_for_settling() {
    let chain = desk_chain().unwrap();
    let mut up = VisionUpdater::new(UpdaterConfig::default(), chain.clone()).unwrap();
    let mut noise = NoiseSource::new(SensorNoise::noiseless(0)).unwrap();
    let obs = observe_marker(&chain, &[0.2; 4], &mut noise, 0.0).unwrap();
    let moving: Vec<Vec<f64>> = (0..5).map(|k| vec![k as f64; 8]).collect();
    assert_eq!(up.observe(&obs, &[0.2; 4], &[0.0; 8], &moving).unwrap(), Err(Rejection::NotSettled));
}
