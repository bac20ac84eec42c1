use jmm_core::desk::{desk_chain, desk_routing};
use jmm_core::estimator::{damped_pseudo_inverse, run_filter};
use jmm_core::plant::NoiseSource;
use jmm_core::{EkfConfig, GeometricModel, LengthModel, SensorNoise, StateEstimator};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn assert_symmetric_psd(p: &DMatrix<f64>, step: usize) {
    let asym = (p - p.transpose()).amax();
    assert!(asym <= 1e-12 * p.amax().max(1.0), "step {step}: asymmetry {asym}");
    let eig = SymmetricEigen::new(p.clone());
    let min = eig.eigenvalues.min();
    assert!(min >= -1e-12, "step {step}: eigenvalue {min}");
}

#[test]
fn static_posture_converges_within_one_degree() {
    let chain = desk_chain().unwrap();
    let routing = desk_routing(&chain).unwrap();
    let model = GeometricModel::new(&chain, &routing);
    let mut noise = NoiseSource::new(SensorNoise {
        seed: 11,
        ..SensorNoise::default()
    })
    .unwrap();
    for truth in [[0.3, 0.2, 0.1, 0.8], [1.0, 0.6, -0.4, 1.5], [0.0, 0.0, 0.0, 0.3]] {
        let clean = model.lengths(&truth);
        // Start 5 degrees off on every joint; corrections only.
        let start: Vec<f64> = truth.iter().map(|q| q + 5f64.to_radians()).collect();
        let mut ekf = StateEstimator::new(&start, 8, chain.limits(), EkfConfig::default()).unwrap();
        for _ in 0..100 {
            let meas: Vec<f64> = clean.iter().map(|l| l + noise.length_noise()).collect();
            ekf.correct(&meas, &model).unwrap();
        }
        let last = ekf.theta();
        for (j, (e, t)) in last.iter().zip(&truth).enumerate() {
            let err = (e - t).abs().to_degrees();
            assert!(err < 1.0, "posture {truth:?} joint {j}: {err} deg");
        }
    }
}

#[test]
fn covariance_stays_symmetric_psd_for_ten_thousand_steps() {
    let chain = desk_chain().unwrap();
    let routing = desk_routing(&chain).unwrap();
    let model = GeometricModel::new(&chain, &routing);
    let mut noise = NoiseSource::new(SensorNoise {
        seed: 5,
        ..SensorNoise::default()
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let limits = chain.limits();
    let mut truth = vec![0.4, 0.3, 0.0, 1.0];
    let mut ekf = StateEstimator::new(&truth, 8, limits.clone(), EkfConfig::default()).unwrap();
    let mut prev = model.lengths(&truth);
    for step in 0..10_000 {
        // Random walk of the true posture, clamped inside the limits.
        for (q, &(lo, hi)) in truth.iter_mut().zip(&limits) {
            *q = (*q + rng.random_range(-0.01..0.01)).clamp(lo + 0.05, hi - 0.05);
        }
        let meas: Vec<f64> = model.lengths(&truth).iter().map(|l| l + noise.length_noise()).collect();
        let delta: Vec<f64> = meas.iter().zip(&prev).map(|(a, b)| a - b).collect();
        ekf.predict(&delta, &model).unwrap();
        assert_symmetric_psd(&ekf.state().p, step);
        ekf.correct(&meas, &model).unwrap();
        assert_symmetric_psd(&ekf.state().p, step);
        prev = meas;
    }
}

#[test]
fn noiseless_trace_of_a_fixed_posture_is_a_fixed_point() {
    let chain = desk_chain().unwrap();
    let routing = desk_routing(&chain).unwrap();
    let model = GeometricModel::new(&chain, &routing);
    let truth = [0.7, 0.1, 0.2, 1.1];
    let trace = vec![model.lengths(&truth); 20];
    let est = run_filter(&model, &chain.limits(), &EkfConfig::default(), &trace, &truth).unwrap();
    for e in est {
        for (a, b) in e.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn undamped_pseudo_inverse_is_a_left_inverse(values in prop::collection::vec(-50.0f64..50.0, 32)) {
        let g = DMatrix::from_vec(8, 4, values);
        prop_assume!(g.clone().svd(false, false).singular_values.min() > 1.0);
        let pinv = damped_pseudo_inverse(&g, 0.0);
        let id = &pinv * &g;
        prop_assert!((id - DMatrix::<f64>::identity(4, 4)).amax() < 1e-9);
    }

    #[test]
    fn damping_only_shrinks_the_step(values in prop::collection::vec(-50.0f64..50.0, 32), d in prop::collection::vec(-5.0f64..5.0, 8)) {
        let g = DMatrix::from_vec(8, 4, values);
        let dl = nalgebra::DVector::from_vec(d);
        let plain = damped_pseudo_inverse(&g, 0.0) * &dl;
        let damped = damped_pseudo_inverse(&g, 0.1) * &dl;
        prop_assert!(damped.norm() <= plain.norm() + 1e-9);
    }
}
