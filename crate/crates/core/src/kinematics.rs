//! Serial revolute chains.
//!
//! Body `0` is the fixed base; body `k + 1` is the link carried by joint `k`.
//! The frame of body `k + 1` is `frame(k) * offset_k * Rot(axis_k, θ_k)`, so a
//! joint axis is expressed in the frame it rotates and is unchanged by its own
//! rotation.

use nalgebra::{DVector, Isometry3, Matrix6xX, Translation3, Unit, UnitQuaternion, Vector3};

use crate::error::{check_dim, Error, Result};

/// Tolerance on axis normalization.
const UNIT_TOL: f64 = 1e-9;

/// Newton-millimetre per kg·mm²/s².
const N_MM_PER_KG_MM2_S2: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct RevoluteJoint {
    pub name: String,
    /// Rotation axis in the joint's own frame.
    pub axis: Unit<Vector3<f64>>,
    /// Fixed transform from the parent body frame to the joint frame.
    pub offset: Isometry3<f64>,
    /// `[min, max]` joint angle in rad.
    pub limits: (f64, f64),
}

impl RevoluteJoint {
    pub fn new(name: impl Into<String>, axis: Vector3<f64>, offset: Isometry3<f64>, limits: (f64, f64)) -> Result<Self> {
        let name = name.into();
        let norm = axis.norm();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::Invalid {
                what: "joint axis",
                reason: format!("axis of `{name}` has norm {norm}, expected 1"),
            });
        }
        if !(limits.0 < limits.1) {
            return Err(Error::Invalid {
                what: "joint limits",
                reason: format!("`{name}` has min {} >= max {}", limits.0, limits.1),
            });
        }
        Ok(Self {
            name,
            axis: Unit::new_unchecked(axis),
            offset,
            limits,
        })
    }
}

/// Mass properties of the link carried by a joint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkMass {
    /// kg
    pub mass: f64,
    /// Center of mass in the link frame (mm).
    pub com: Vector3<f64>,
}

impl LinkMass {
    pub fn massless() -> Self {
        Self {
            mass: 0.0,
            com: Vector3::zeros(),
        }
    }
}

/// Position (mm) and orientation of a frame in the base frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self { position, orientation }
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self {
            position: iso.translation.vector,
            orientation: iso.rotation,
        }
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    /// Translation from `self` to `target` (mm).
    pub fn position_error(&self, target: &Pose) -> Vector3<f64> {
        target.position - self.position
    }

    /// Rotation vector taking `self` to `target`, in the base frame (rad).
    pub fn rotation_error(&self, target: &Pose) -> Vector3<f64> {
        (target.orientation * self.orientation.inverse()).scaled_axis()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    joints: Vec<RevoluteJoint>,
    links: Vec<LinkMass>,
    marker: Isometry3<f64>,
}

impl KinematicChain {
    /// `links[k]` is the mass carried by `joints[k]`; `marker` is the fixed
    /// transform from the terminal link to the marker frame.
    pub fn new(joints: Vec<RevoluteJoint>, links: Vec<LinkMass>, marker: Isometry3<f64>) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::Invalid {
                what: "kinematic chain",
                reason: "chain needs at least one joint".into(),
            });
        }
        check_dim("link masses", joints.len(), links.len())?;
        for (j, joint) in joints.iter().enumerate() {
            if (joint.axis.norm() - 1.0).abs() > UNIT_TOL {
                return Err(Error::Invalid {
                    what: "joint axis",
                    reason: format!("joint {j} axis is not unit length"),
                });
            }
            if !(joint.limits.0 < joint.limits.1) {
                return Err(Error::Invalid {
                    what: "joint limits",
                    reason: format!("joint {j} has min >= max"),
                });
            }
        }
        if links.iter().any(|l| !(l.mass >= 0.0) || !l.com.iter().all(|c| c.is_finite())) {
            return Err(Error::Invalid {
                what: "link mass",
                reason: "masses must be finite and non-negative".into(),
            });
        }
        Ok(Self { joints, links, marker })
    }

    pub fn n_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[RevoluteJoint] {
        &self.joints
    }

    pub fn links(&self) -> &[LinkMass] {
        &self.links
    }

    pub fn marker_attachment(&self) -> &Isometry3<f64> {
        &self.marker
    }

    pub fn limits(&self) -> Vec<(f64, f64)> {
        self.joints.iter().map(|j| j.limits).collect()
    }

    pub fn check_dims(&self, theta: &[f64]) -> Result<()> {
        check_dim("joint angles", self.n_joints(), theta.len())
    }

    pub fn within_limits(&self, theta: &[f64], tol: f64) -> bool {
        theta.len() == self.n_joints()
            && self
                .joints
                .iter()
                .zip(theta)
                .all(|(j, &q)| q >= j.limits.0 - tol && q <= j.limits.1 + tol)
    }

    pub fn clamp(&self, theta: &mut [f64]) {
        for (j, q) in self.joints.iter().zip(theta.iter_mut()) {
            *q = q.clamp(j.limits.0, j.limits.1);
        }
    }

    /// Local transform of joint `k` at angle `q`: `offset_k * Rot(axis_k, q)`.
    pub fn joint_transform(&self, k: usize, q: f64) -> Isometry3<f64> {
        let joint = &self.joints[k];
        joint.offset * UnitQuaternion::from_axis_angle(&joint.axis, q)
    }

    /// Frames of bodies `0..=n` in the base frame.
    pub fn body_frames(&self, theta: &[f64]) -> Result<Vec<Isometry3<f64>>> {
        self.check_dims(theta)?;
        let mut frames = Vec::with_capacity(self.n_joints() + 1);
        let mut current = Isometry3::identity();
        frames.push(current);
        for (k, &q) in theta.iter().enumerate() {
            current *= self.joint_transform(k, q);
            frames.push(current);
        }
        Ok(frames)
    }

    pub fn forward_kinematics(&self, theta: &[f64]) -> Result<Pose> {
        let frames = self.body_frames(theta)?;
        Ok(Pose::from_isometry(&(frames[self.n_joints()] * self.marker)))
    }

    /// World axis and world anchor point of every joint.
    fn joint_axes(&self, frames: &[Isometry3<f64>]) -> Vec<(Vector3<f64>, Vector3<f64>)> {
        (0..self.n_joints())
            .map(|k| {
                let axis = frames[k + 1].rotation * self.joints[k].axis.into_inner();
                let anchor = frames[k + 1].translation.vector;
                (axis, anchor)
            })
            .collect()
    }

    /// Geometric Jacobian of the marker frame: rows 0..3 translation (mm/rad),
    /// rows 3..6 angular velocity (rad/rad), both in the base frame.
    pub fn marker_jacobian(&self, theta: &[f64]) -> Result<Matrix6xX<f64>> {
        let frames = self.body_frames(theta)?;
        let marker = (frames[self.n_joints()] * self.marker).translation.vector;
        let mut jac = Matrix6xX::zeros(self.n_joints());
        for (k, (axis, anchor)) in self.joint_axes(&frames).into_iter().enumerate() {
            let lin = axis.cross(&(marker - anchor));
            jac.fixed_view_mut::<3, 1>(0, k).copy_from(&lin);
            jac.fixed_view_mut::<3, 1>(3, k).copy_from(&axis);
        }
        Ok(jac)
    }

    /// Gravitational potential energy (N·mm) for gravity `g` (mm/s²) along `-z`.
    pub fn potential_energy(&self, theta: &[f64], g: f64) -> Result<f64> {
        let frames = self.body_frames(theta)?;
        Ok(self
            .links
            .iter()
            .enumerate()
            .map(|(k, link)| {
                let com = frames[k + 1] * nalgebra::Point3::from(link.com);
                link.mass * g * com.z * N_MM_PER_KG_MM2_S2
            })
            .sum())
    }

    /// Joint torques exerted by gravity, `τ = -∂U/∂θ` (N·mm).
    pub fn gravity_torque(&self, theta: &[f64], g: f64) -> Result<DVector<f64>> {
        let frames = self.body_frames(theta)?;
        let coms: Vec<Vector3<f64>> = self
            .links
            .iter()
            .enumerate()
            .map(|(k, link)| (frames[k + 1] * nalgebra::Point3::from(link.com)).coords)
            .collect();
        let axes = self.joint_axes(&frames);
        let mut tau = DVector::zeros(self.n_joints());
        for (j, (axis, anchor)) in axes.iter().enumerate() {
            let mut t = 0.0;
            for (k, link) in self.links.iter().enumerate().skip(j) {
                if link.mass == 0.0 {
                    continue;
                }
                let dz = axis.cross(&(coms[k] - anchor)).z;
                t -= link.mass * g * dz * N_MM_PER_KG_MM2_S2;
            }
            tau[j] = t;
        }
        Ok(tau)
    }
}
