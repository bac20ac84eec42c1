use approx::assert_relative_eq;
use jmm_core::desk::desk_chain;
use jmm_core::kinematics::LinkMass;
use jmm_core::{KinematicChain, RevoluteJoint};
use nalgebra::{Isometry3, UnitQuaternion, Vector3};
use proptest::prelude::*;

const L1: f64 = 120.0;
const L2: f64 = 80.0;

fn planar_two_link() -> KinematicChain {
    let joints = vec![
        RevoluteJoint::new("a", Vector3::z(), Isometry3::identity(), (-3.0, 3.0)).unwrap(),
        RevoluteJoint::new("b", Vector3::z(), Isometry3::translation(L1, 0.0, 0.0), (-3.0, 3.0)).unwrap(),
    ];
    KinematicChain::new(joints, vec![LinkMass::massless(); 2], Isometry3::translation(L2, 0.0, 0.0)).unwrap()
}

fn desk_posture() -> impl Strategy<Value = Vec<f64>> {
    let chain = desk_chain().unwrap();
    chain.limits().into_iter().map(|(lo, hi)| lo..hi).collect::<Vec<_>>()
}

#[test]
fn planar_chain_matches_hand_computed_pose() {
    let chain = planar_two_link();
    for &(a, b) in &[(0.0, 0.0), (0.3, -1.1), (1.2, 0.8), (-2.5, 2.9)] {
        let pose = chain.forward_kinematics(&[a, b]).unwrap();
        let x = L1 * f64::cos(a) + L2 * f64::cos(a + b);
        let y = L1 * f64::sin(a) + L2 * f64::sin(a + b);
        assert_relative_eq!(pose.position, Vector3::new(x, y, 0.0), epsilon = 1e-9);
        let expected = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), a + b);
        assert!(pose.orientation.angle_to(&expected) < 1e-9);
    }
}

#[test]
fn planar_jacobian_is_the_textbook_one() {
    let chain = planar_two_link();
    let (a, b) = (0.4, 0.9);
    let jac = chain.marker_jacobian(&[a, b]).unwrap();
    let s1 = f64::sin(a);
    let c1 = f64::cos(a);
    let s12 = f64::sin(a + b);
    let c12 = f64::cos(a + b);
    assert_relative_eq!(jac[(0, 0)], -L1 * s1 - L2 * s12, epsilon = 1e-9);
    assert_relative_eq!(jac[(1, 0)], L1 * c1 + L2 * c12, epsilon = 1e-9);
    assert_relative_eq!(jac[(0, 1)], -L2 * s12, epsilon = 1e-9);
    assert_relative_eq!(jac[(1, 1)], L2 * c12, epsilon = 1e-9);
    assert_relative_eq!(jac[(5, 0)], 1.0);
    assert_relative_eq!(jac[(5, 1)], 1.0);
}

#[test]
fn desk_marker_hangs_below_the_shoulder_at_zero() {
    let chain = desk_chain().unwrap();
    let pose = chain.forward_kinematics(&[0.0; 4]).unwrap();
    assert_relative_eq!(pose.position, Vector3::new(30.0, 0.0, -290.0), epsilon = 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn marker_jacobian_matches_finite_differences(theta in desk_posture()) {
        let chain = desk_chain().unwrap();
        let jac = chain.marker_jacobian(&theta).unwrap();
        let h = 1e-6;
        let base = chain.forward_kinematics(&theta).unwrap();
        for j in 0..theta.len() {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[j] += h;
            minus[j] -= h;
            let p = chain.forward_kinematics(&plus).unwrap();
            let m = chain.forward_kinematics(&minus).unwrap();
            let lin = (p.position - m.position) / (2.0 * h);
            let ang = (p.orientation * m.orientation.inverse()).scaled_axis() / (2.0 * h);
            for r in 0..3 {
                prop_assert!((jac[(r, j)] - lin[r]).abs() < 1e-4, "linear row {r} joint {j}");
                prop_assert!((jac[(r + 3, j)] - ang[r]).abs() < 1e-6, "angular row {r} joint {j}");
            }
        }
        prop_assert!((base.orientation.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gravity_torque_is_minus_energy_gradient(theta in desk_posture()) {
        let chain = desk_chain().unwrap();
        let g = 9810.0;
        let tau = chain.gravity_torque(&theta, g).unwrap();
        let h = 1e-6;
        for j in 0..theta.len() {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[j] += h;
            minus[j] -= h;
            let du = (chain.potential_energy(&plus, g).unwrap() - chain.potential_energy(&minus, g).unwrap()) / (2.0 * h);
            prop_assert!((tau[j] + du).abs() < 1e-4, "joint {j}: {} vs {}", tau[j], -du);
        }
    }

    #[test]
    fn clamp_lands_inside_limits(theta in prop::collection::vec(-5.0f64..5.0, 4)) {
        let chain = desk_chain().unwrap();
        let mut q = theta.clone();
        chain.clamp(&mut q);
        prop_assert!(chain.within_limits(&q, 0.0));
        for (a, b) in q.iter().zip(&theta) {
            if chain.within_limits(&theta, 0.0) {
                prop_assert_eq!(a, b);
            }
        }
    }
}
