//! Default desk-scale arm: a 3-DOF shoulder, an elbow and eight muscles.
//!
//! The upper arm hangs along `-z` from the shoulder at the origin; `+x` is
//! forward. Shoulder pitch and the elbow flex forward, shoulder roll abducts
//! toward `+y`, shoulder yaw turns about the upper-arm axis.
//!
//! Bodies: 0 base, 1-2 massless shoulder intermediates, 3 upper arm,
//! 4 forearm.

use nalgebra::{Isometry3, Vector3};

use crate::error::Result;
use crate::kinematics::{KinematicChain, LinkMass, RevoluteJoint};
use crate::routing::{Muscle, MuscleRouting, ViaPoint};

pub const UPPER_ARM_LENGTH: f64 = 150.0;
pub const FOREARM_LENGTH: f64 = 150.0;

pub const SHOULDER_PITCH: usize = 0;
pub const SHOULDER_ROLL: usize = 1;
pub const SHOULDER_YAW: usize = 2;
pub const ELBOW: usize = 3;

pub const BRACHIALIS: usize = 5;
pub const BICEPS: usize = 6;
pub const TRICEPS: usize = 7;

pub fn desk_chain() -> Result<KinematicChain> {
    let at = |x: f64, y: f64, z: f64| Isometry3::translation(x, y, z);
    let joints = vec![
        RevoluteJoint::new("shoulder_pitch", -Vector3::y(), Isometry3::identity(), (-0.5, 1.6))?,
        RevoluteJoint::new("shoulder_roll", Vector3::x(), Isometry3::identity(), (-0.6, 1.2))?,
        RevoluteJoint::new("shoulder_yaw", Vector3::z(), Isometry3::identity(), (-0.7, 0.7))?,
        RevoluteJoint::new("elbow", -Vector3::y(), at(0.0, 0.0, -UPPER_ARM_LENGTH), (-0.26, 2.09))?,
    ];
    let links = vec![
        LinkMass::massless(),
        LinkMass::massless(),
        LinkMass {
            mass: 0.5,
            com: Vector3::new(0.0, 0.0, -0.5 * UPPER_ARM_LENGTH),
        },
        LinkMass {
            mass: 1.0,
            com: Vector3::new(0.0, 0.0, -0.5 * FOREARM_LENGTH),
        },
    ];
    KinematicChain::new(joints, links, at(30.0, 0.0, -(FOREARM_LENGTH - 10.0)))
}

pub fn desk_muscles() -> Vec<Muscle> {
    let p = |body: usize, x: f64, y: f64, z: f64| ViaPoint {
        body,
        point: Vector3::new(x, y, z),
    };
    vec![
        Muscle::new("anterior_deltoid", vec![p(0, 23.0, 7.0, 44.0), p(3, 29.0, -16.0, -68.0)]),
        Muscle::new("posterior_deltoid", vec![p(0, -52.0, 27.0, 26.0), p(3, -8.0, -10.0, -74.0)]),
        Muscle::new("abductor", vec![p(0, 36.0, 29.0, 26.0), p(3, -21.0, 26.0, -66.0)]),
        Muscle::new("adductor", vec![p(0, 21.0, -53.0, 35.0), p(3, -4.0, -28.0, -74.0)]),
        Muscle::new("rotator", vec![p(0, 32.0, 41.0, -5.0), p(3, 14.0, -19.0, -37.0)]),
        Muscle::new("brachialis", vec![p(3, 23.0, 0.0, -57.0), p(4, 21.0, -1.0, -26.0)]),
        Muscle::new("biceps", vec![p(0, 18.0, -22.0, 21.0), p(3, 34.0, 4.0, -62.0), p(4, 21.0, 0.0, -32.0)]),
        Muscle::new(
            "triceps",
            vec![p(0, -30.0, -4.0, -16.0), p(3, -29.0, 2.0, -87.0), p(4, -29.0, -2.0, 30.0)],
        ),
    ]
}

pub fn desk_routing(chain: &KinematicChain) -> Result<MuscleRouting> {
    MuscleRouting::new(desk_muscles(), chain)
}
