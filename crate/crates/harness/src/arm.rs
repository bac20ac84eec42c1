//! Arm description as it appears in a config file.

use jmm_core::desk;
use jmm_core::kinematics::{KinematicChain, LinkMass, RevoluteJoint};
use jmm_core::routing::{Muscle, ViaPoint};
use nalgebra::{Isometry3, Vector3};
use serde::{Deserialize, Serialize};

use crate::config::{deg, to_deg};
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSection {
    pub name: String,
    pub axis: [f64; 3],
    /// Translation from the parent body frame to the joint frame (mm).
    #[serde(default)]
    pub offset_mm: [f64; 3],
    pub limits_deg: [f64; 2],
    /// Mass of the link this joint carries (kg).
    #[serde(default)]
    pub mass_kg: f64,
    #[serde(default)]
    pub com_mm: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViaSection {
    /// 0 = base, `k + 1` = link carried by joint `k`.
    pub body: usize,
    pub point_mm: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuscleSection {
    pub name: String,
    pub via: Vec<ViaSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmConfig {
    pub joints: Vec<JointSection>,
    /// Marker position in the last link frame (mm).
    pub marker_mm: [f64; 3],
    pub muscles: Vec<MuscleSection>,
    /// Elbow-flexor pair compared in the antagonism scenario.
    pub agonist_pair: [usize; 2],
    /// Joint driven by the antagonism scenario.
    pub elbow_joint: usize,
}

impl Default for ArmConfig {
    fn default() -> Self {
        Self::desk()
    }
}

fn arr(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl ArmConfig {
    pub fn desk() -> Self {
        let chain = desk::desk_chain().expect("desk arm is valid");
        let joints = chain
            .joints()
            .iter()
            .zip(chain.links())
            .map(|(j, link)| JointSection {
                name: j.name.clone(),
                axis: arr(&j.axis),
                offset_mm: arr(&j.offset.translation.vector),
                limits_deg: [to_deg(j.limits.0), to_deg(j.limits.1)],
                mass_kg: link.mass,
                com_mm: arr(&link.com),
            })
            .collect();
        let muscles = desk::desk_muscles()
            .into_iter()
            .map(|m| MuscleSection {
                name: m.name,
                via: m
                    .via_points
                    .iter()
                    .map(|v| ViaSection {
                        body: v.body,
                        point_mm: arr(&v.point),
                    })
                    .collect(),
            })
            .collect();
        Self {
            joints,
            marker_mm: arr(&chain.marker_attachment().translation.vector),
            muscles,
            agonist_pair: [desk::BRACHIALIS, desk::BICEPS],
            elbow_joint: desk::ELBOW,
        }
    }

    pub fn build(&self) -> Result<(KinematicChain, Vec<Muscle>)> {
        let config = |e: jmm_core::Error| HarnessError::Config(e.to_string());
        let mut joints = Vec::with_capacity(self.joints.len());
        let mut links = Vec::with_capacity(self.joints.len());
        for j in &self.joints {
            let axis = Vector3::from(j.axis);
            let norm = axis.norm();
            if !(norm > 0.0) {
                return Err(HarnessError::Config(format!("joint `{}` has a zero axis", j.name)));
            }
            let offset = Isometry3::translation(j.offset_mm[0], j.offset_mm[1], j.offset_mm[2]);
            let limits = (deg(j.limits_deg[0]), deg(j.limits_deg[1]));
            joints.push(RevoluteJoint::new(j.name.clone(), axis / norm, offset, limits).map_err(config)?);
            links.push(LinkMass {
                mass: j.mass_kg,
                com: Vector3::from(j.com_mm),
            });
        }
        let marker = Isometry3::translation(self.marker_mm[0], self.marker_mm[1], self.marker_mm[2]);
        let chain = KinematicChain::new(joints, links, marker).map_err(config)?;
        let muscles: Vec<Muscle> = self
            .muscles
            .iter()
            .map(|m| {
                Muscle::new(
                    m.name.clone(),
                    m.via
                        .iter()
                        .map(|v| ViaPoint {
                            body: v.body,
                            point: Vector3::from(v.point_mm),
                        })
                        .collect(),
                )
            })
            .collect();
        let m = muscles.len();
        if self.agonist_pair.iter().any(|&i| i >= m) || self.elbow_joint >= chain.n_joints() {
            return Err(HarnessError::Config("arm.agonist_pair or arm.elbow_joint out of range".into()));
        }
        Ok((chain, muscles))
    }
}
