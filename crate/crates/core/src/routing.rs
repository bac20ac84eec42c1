//! Via-point muscle geometry.
//!
//! A muscle is a polyline through via-points fixed on successive bodies (see
//! [`crate::kinematics`] for body numbering). Lengths are reported relative to
//! the rest length at `θ = 0`, so every muscle reads 0 in the zero posture.

use std::io::Write;

use nalgebra::{DMatrix, Isometry3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::kinematics::KinematicChain;
use crate::model::LengthModel;
use crate::par::{self, Execution};

/// Central-difference step for [`MuscleRouting::true_moment_arms`] (rad).
pub const MOMENT_ARM_FD_STEP: f64 = 1e-5;

/// Shortest admissible segment between consecutive via-points at rest (mm).
const MIN_SEGMENT: f64 = 1.0;

const MAX_RESAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViaPoint {
    /// 0 = base, `k + 1` = link carried by joint `k`.
    pub body: usize,
    /// Point in the body frame (mm).
    pub point: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Muscle {
    pub name: String,
    pub via_points: Vec<ViaPoint>,
}

impl Muscle {
    pub fn new(name: impl Into<String>, via_points: Vec<ViaPoint>) -> Self {
        Self {
            name: name.into(),
            via_points,
        }
    }

    fn first_body(&self) -> usize {
        self.via_points[0].body
    }

    fn last_body(&self) -> usize {
        self.via_points[self.via_points.len() - 1].body
    }

    /// Joint `j` moves body `j + 1` relative to body `j`.
    pub fn spans(&self, joint: usize) -> bool {
        self.first_body() <= joint && joint < self.last_body()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuscleRouting {
    muscles: Vec<Muscle>,
    rest_lengths: Vec<f64>,
    n_joints: usize,
}

impl MuscleRouting {
    pub fn new(muscles: Vec<Muscle>, chain: &KinematicChain) -> Result<Self> {
        let n = chain.n_joints();
        validate_muscles(&muscles, n)?;
        let zero = vec![0.0; n];
        let rest_lengths: Vec<f64> = muscles.iter().map(|m| absolute_length(m, chain, &zero)).collect();
        for (m, muscle) in muscles.iter().enumerate() {
            let points = muscle_points(muscle, chain, &zero);
            if points.windows(2).any(|w| (w[1] - w[0]).norm() < MIN_SEGMENT) {
                return Err(Error::Invalid {
                    what: "muscle routing",
                    reason: format!("muscle {m} (`{}`) has a segment shorter than {MIN_SEGMENT} mm at rest", muscle.name),
                });
            }
        }
        Ok(Self {
            muscles,
            rest_lengths,
            n_joints: n,
        })
    }

    pub fn muscles(&self) -> &[Muscle] {
        &self.muscles
    }

    pub fn n_muscles(&self) -> usize {
        self.muscles.len()
    }

    pub fn n_joints(&self) -> usize {
        self.n_joints
    }

    pub fn rest_lengths(&self) -> &[f64] {
        &self.rest_lengths
    }

    fn check(&self, chain: &KinematicChain, theta: &[f64]) -> Result<()> {
        check_dim("chain joints", self.n_joints, chain.n_joints())?;
        chain.check_dims(theta)
    }

    /// Relative muscle lengths (mm); zero at `θ = 0`.
    pub fn muscle_lengths(&self, chain: &KinematicChain, theta: &[f64]) -> Result<Vec<f64>> {
        self.check(chain, theta)?;
        Ok(self.lengths_unchecked(chain, theta))
    }

    fn lengths_unchecked(&self, chain: &KinematicChain, theta: &[f64]) -> Vec<f64> {
        self.muscles
            .iter()
            .zip(&self.rest_lengths)
            .map(|(m, rest)| absolute_length(m, chain, theta) - rest)
            .collect()
    }

    /// Ground-truth muscle Jacobian `dl/dθ` (m×n, mm/rad) by central
    /// difference with step [`MOMENT_ARM_FD_STEP`]. Entries for joints a
    /// muscle does not span are exactly zero.
    pub fn true_moment_arms(&self, chain: &KinematicChain, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.check(chain, theta)?;
        let (m, n) = (self.n_muscles(), self.n_joints);
        let mut g = DMatrix::zeros(m, n);
        let mut probe = theta.to_vec();
        for j in 0..n {
            probe[j] = theta[j] + MOMENT_ARM_FD_STEP;
            let plus: Vec<f64> = self.muscles.iter().map(|mu| absolute_length(mu, chain, &probe)).collect();
            probe[j] = theta[j] - MOMENT_ARM_FD_STEP;
            let minus: Vec<f64> = self.muscles.iter().map(|mu| absolute_length(mu, chain, &probe)).collect();
            probe[j] = theta[j];
            for i in 0..m {
                if self.muscles[i].spans(j) {
                    g[(i, j)] = (plus[i] - minus[i]) / (2.0 * MOMENT_ARM_FD_STEP);
                }
            }
        }
        Ok(g)
    }

    /// Exact muscle Jacobian from polyline geometry (m×n, mm/rad).
    pub fn moment_arms(&self, chain: &KinematicChain, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.check(chain, theta)?;
        Ok(self.moment_arms_unchecked(chain, theta))
    }

    pub(crate) fn moment_arms_unchecked(&self, chain: &KinematicChain, theta: &[f64]) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.n_muscles(), self.n_joints);
        for (i, muscle) in self.muscles.iter().enumerate() {
            let (frames, first) = relative_frames(muscle, chain, theta);
            let points: Vec<Vector3<f64>> = muscle
                .via_points
                .iter()
                .map(|v| (frames[v.body - first] * Point3::from(v.point)).coords)
                .collect();
            for j in first..muscle.last_body() {
                let joint_frame = &frames[j + 1 - first];
                let axis = joint_frame.rotation * chain.joints()[j].axis.into_inner();
                let anchor = joint_frame.translation.vector;
                let velocity = |k: usize| -> Vector3<f64> {
                    if muscle.via_points[k].body > j {
                        axis.cross(&(points[k] - anchor))
                    } else {
                        Vector3::zeros()
                    }
                };
                let mut d = 0.0;
                for k in 0..points.len() - 1 {
                    let seg = points[k + 1] - points[k];
                    let len = seg.norm();
                    if len > 0.0 {
                        d += seg.dot(&(velocity(k + 1) - velocity(k))) / len;
                    }
                }
                g[(i, j)] = d;
            }
        }
        g
    }

    /// Random model error: every via-point is displaced uniformly within a
    /// ball of radius `via_point_offset_bound`, and each muscle's via-points
    /// are scaled away from / toward their body's joint axis by one factor
    /// drawn from `moment_arm_scale_range`. Random draws do not depend on the
    /// bound, so one seed gives displacements proportional to the bound.
    pub fn perturb(&self, chain: &KinematicChain, spec: &PerturbationSpec) -> Result<MuscleRouting> {
        spec.validate()?;
        check_dim("chain joints", self.n_joints, chain.n_joints())?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut last_reason = String::new();
        for _ in 0..MAX_RESAMPLES {
            let muscles: Vec<Muscle> = self
                .muscles
                .iter()
                .map(|muscle| {
                    let (lo, hi) = spec.moment_arm_scale_range;
                    let u: f64 = rng.random();
                    let scale = if hi > lo { lo + (hi - lo) * u } else { lo };
                    let via_points = muscle
                        .via_points
                        .iter()
                        .map(|v| {
                            let offset = unit_ball(&mut rng) * spec.via_point_offset_bound;
                            let mut point = v.point;
                            if scale != 1.0 {
                                point = scale_from_axis(chain, v.body, point, scale);
                            }
                            ViaPoint {
                                body: v.body,
                                point: point + offset,
                            }
                        })
                        .collect();
                    Muscle::new(muscle.name.clone(), via_points)
                })
                .collect();
            match MuscleRouting::new(muscles, chain) {
                Ok(routing) => return Ok(routing),
                Err(e) => last_reason = e.to_string(),
            }
        }
        Err(Error::PerturbationRejected {
            attempts: MAX_RESAMPLES,
            reason: last_reason,
        })
    }
}

fn validate_muscles(muscles: &[Muscle], n_joints: usize) -> Result<()> {
    if muscles.is_empty() {
        return Err(Error::Invalid {
            what: "muscle routing",
            reason: "no muscles".into(),
        });
    }
    for (m, muscle) in muscles.iter().enumerate() {
        let bad = |reason: String| Error::Invalid {
            what: "muscle routing",
            reason: format!("muscle {m} (`{}`): {reason}", muscle.name),
        };
        if muscle.via_points.len() < 2 {
            return Err(bad("needs at least 2 via-points".into()));
        }
        if let Some(v) = muscle.via_points.iter().find(|v| v.body > n_joints) {
            return Err(bad(format!("body {} does not exist", v.body)));
        }
        if muscle.via_points.windows(2).any(|w| w[1].body < w[0].body) {
            return Err(bad("via-points must follow the chain order".into()));
        }
        if muscle.first_body() == muscle.last_body() {
            return Err(bad("must span at least one joint".into()));
        }
        if !muscle.via_points.iter().all(|v| v.point.iter().all(|c| c.is_finite())) {
            return Err(bad("non-finite via-point".into()));
        }
    }
    Ok(())
}

/// Frames of bodies `first..=last` relative to the muscle's first body.
fn relative_frames(muscle: &Muscle, chain: &KinematicChain, theta: &[f64]) -> (Vec<Isometry3<f64>>, usize) {
    let first = muscle.first_body();
    let last = muscle.last_body();
    let mut frames = Vec::with_capacity(last - first + 1);
    let mut current = Isometry3::identity();
    frames.push(current);
    for j in first..last {
        current *= chain.joint_transform(j, theta[j]);
        frames.push(current);
    }
    (frames, first)
}

fn muscle_points(muscle: &Muscle, chain: &KinematicChain, theta: &[f64]) -> Vec<Vector3<f64>> {
    let (frames, first) = relative_frames(muscle, chain, theta);
    muscle
        .via_points
        .iter()
        .map(|v| (frames[v.body - first] * Point3::from(v.point)).coords)
        .collect()
}

fn absolute_length(muscle: &Muscle, chain: &KinematicChain, theta: &[f64]) -> f64 {
    muscle_points(muscle, chain, theta).windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

fn unit_ball(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm_squared() <= 1.0 {
            return v;
        }
    }
}

/// Scale the component of `point` perpendicular to the axis of the joint that
/// carries `body` (the first joint's axis for the base).
fn scale_from_axis(chain: &KinematicChain, body: usize, point: Vector3<f64>, scale: f64) -> Vector3<f64> {
    let (center, axis) = if body == 0 {
        let j0 = &chain.joints()[0];
        (j0.offset.translation.vector, j0.offset.rotation * j0.axis.into_inner())
    } else {
        (Vector3::zeros(), chain.joints()[body - 1].axis.into_inner())
    };
    let d = point - center;
    let along = axis * d.dot(&axis);
    center + along + (d - along) * scale
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    /// mm
    pub via_point_offset_bound: f64,
    pub moment_arm_scale_range: (f64, f64),
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn identity() -> Self {
        Self {
            via_point_offset_bound: 0.0,
            moment_arm_scale_range: (1.0, 1.0),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.moment_arm_scale_range;
        if !(self.via_point_offset_bound >= 0.0) || !self.via_point_offset_bound.is_finite() {
            return Err(Error::Invalid {
                what: "perturbation",
                reason: "offset bound must be finite and >= 0".into(),
            });
        }
        if !(lo > 0.5 && hi < 1.5 && lo <= hi) {
            return Err(Error::Invalid {
                what: "perturbation",
                reason: format!("scale range [{lo}, {hi}] must lie inside (0.5, 1.5)"),
            });
        }
        Ok(())
    }
}

/// Per-joint number of equally spaced grid values (endpoints included).
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub divisions: Vec<usize>,
    /// Largest dataset that may be generated.
    pub cap: usize,
}

impl GridSpec {
    pub const DEFAULT_CAP: usize = 10_000_000;

    pub fn new(divisions: Vec<usize>) -> Result<Self> {
        let spec = Self {
            divisions,
            cap: Self::DEFAULT_CAP,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(d) = self.divisions.iter().find(|d| !(5..=9).contains(*d)) {
            return Err(Error::Invalid {
                what: "grid",
                reason: format!("division count {d} outside [5, 9]"),
            });
        }
        Ok(())
    }

    pub fn count(&self) -> u128 {
        self.divisions.iter().map(|&d| d as u128).product()
    }
}

/// One `(θ, l)` pair (rad, mm).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub theta: Vec<f64>,
    pub lengths: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_joints: usize,
    pub n_muscles: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// CSV with columns `theta_0..theta_{n-1}, l_0..l_{m-1}`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.n_joints)
            .map(|j| format!("theta_{j}"))
            .chain((0..self.n_muscles).map(|i| format!("l_{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for s in &self.samples {
            let row: Vec<String> = s.theta.iter().chain(&s.lengths).map(|v| format!("{v}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Cartesian product of per-joint linspaces over the joint limits; joint 0
/// varies slowest.
pub fn generate_grid_dataset(routing: &MuscleRouting, chain: &KinematicChain, spec: &GridSpec, exec: Execution) -> Result<Dataset> {
    spec.validate()?;
    check_dim("grid divisions", chain.n_joints(), spec.divisions.len())?;
    check_dim("chain joints", routing.n_joints(), chain.n_joints())?;
    let count = spec.count();
    if count > spec.cap as u128 {
        return Err(Error::GridTooLarge { count, cap: spec.cap });
    }
    let axes: Vec<Vec<f64>> = chain
        .limits()
        .iter()
        .zip(&spec.divisions)
        .map(|(&(lo, hi), &d)| linspace(lo, hi, d))
        .collect();
    let samples = par::map_range(exec, count as usize, |mut index| {
        let mut theta = vec![0.0; axes.len()];
        for j in (0..axes.len()).rev() {
            let d = axes[j].len();
            theta[j] = axes[j][index % d];
            index /= d;
        }
        let lengths = routing.lengths_unchecked(chain, &theta);
        Sample { theta, lengths }
    });
    Ok(Dataset {
        n_joints: chain.n_joints(),
        n_muscles: routing.n_muscles(),
        samples,
    })
}

pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count)
            .map(|k| {
                if k == count - 1 {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

/// Ground-truth geometry viewed as a [`LengthModel`].
#[derive(Debug, Clone, Copy)]
pub struct GeometricModel<'a> {
    pub chain: &'a KinematicChain,
    pub routing: &'a MuscleRouting,
}

impl<'a> GeometricModel<'a> {
    pub fn new(chain: &'a KinematicChain, routing: &'a MuscleRouting) -> Self {
        Self { chain, routing }
    }
}

impl LengthModel for GeometricModel<'_> {
    fn n_joints(&self) -> usize {
        self.chain.n_joints()
    }
    fn n_muscles(&self) -> usize {
        self.routing.n_muscles()
    }
    fn lengths(&self, theta: &[f64]) -> Vec<f64> {
        assert_eq!(theta.len(), self.chain.n_joints(), "joint-angle dimension");
        self.routing.lengths_unchecked(self.chain, theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{LinkMass, RevoluteJoint};
    use approx::assert_relative_eq;

    fn hinge() -> KinematicChain {
        let joint = RevoluteJoint::new("hinge", Vector3::z(), Isometry3::identity(), (-1.5, 1.5)).unwrap();
        KinematicChain::new(vec![joint], vec![LinkMass::massless()], Isometry3::identity()).unwrap()
    }

    fn vp(body: usize, x: f64, y: f64, z: f64) -> ViaPoint {
        ViaPoint {
            body,
            point: Vector3::new(x, y, z),
        }
    }

    #[test]
    fn zero_posture_reads_zero() {
        let chain = hinge();
        let routing = MuscleRouting::new(vec![Muscle::new("a", vec![vp(0, 50.0, 0.0, 0.0), vp(1, 0.0, 50.0, 0.0)])], &chain).unwrap();
        assert_eq!(routing.muscle_lengths(&chain, &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn law_of_cosines() {
        // Both endpoints 50 mm from the axis, 90° apart at rest.
        let chain = hinge();
        let routing = MuscleRouting::new(vec![Muscle::new("a", vec![vp(0, 50.0, 0.0, 0.0), vp(1, 0.0, 50.0, 0.0)])], &chain).unwrap();
        let l = routing.muscle_lengths(&chain, &[0.5]).unwrap();
        assert_relative_eq!(l[0], 15.295877986220262, epsilon = 1e-10);
    }

    #[test]
    fn antagonists_move_in_opposite_directions() {
        let chain = hinge();
        let routing = MuscleRouting::new(
            vec![
                Muscle::new("flexor", vec![vp(0, -60.0, 20.0, 0.0), vp(1, 60.0, 20.0, 0.0)]),
                Muscle::new("extensor", vec![vp(0, -60.0, -20.0, 0.0), vp(1, 60.0, -20.0, 0.0)]),
            ],
            &chain,
        )
        .unwrap();
        for k in 1..=10 {
            let q = 0.05 * k as f64;
            let l = routing.muscle_lengths(&chain, &[q]).unwrap();
            assert!(l[0] * l[1] < 0.0, "{l:?} at {q}");
        }
    }

    #[test]
    fn pulley_like_routing_has_near_constant_arm() {
        // Far origin along the tangent at radius r: the segment stays tangent to
        // the circle, so the arm is r·cos(θ) ≈ r over a small sweep.
        let chain = hinge();
        let r = 20.0;
        let routing = MuscleRouting::new(vec![Muscle::new("pulley", vec![vp(0, -1.0e4, r, 0.0), vp(1, 0.0, r, 0.0)])], &chain).unwrap();
        for k in -10..=10 {
            let q = 0.01 * k as f64;
            let fd = routing.true_moment_arms(&chain, &[q]).unwrap();
            let an = routing.moment_arms(&chain, &[q]).unwrap();
            assert_relative_eq!(fd[(0, 0)], -r, max_relative = 6e-3);
            assert_relative_eq!(fd[(0, 0)], an[(0, 0)], epsilon = 1e-6, max_relative = 1e-6);
        }
    }

    #[test]
    fn unspanned_joint_has_exact_zero_arm() {
        let j = |name: &str| RevoluteJoint::new(name, Vector3::y(), Isometry3::translation(0.0, 0.0, -100.0), (-1.0, 1.0)).unwrap();
        let chain = KinematicChain::new(vec![j("a"), j("b")], vec![LinkMass::massless(); 2], Isometry3::identity()).unwrap();
        let routing = MuscleRouting::new(
            vec![
                Muscle::new("proximal", vec![vp(0, 20.0, 0.0, -50.0), vp(1, 20.0, 0.0, -30.0)]),
                Muscle::new("distal", vec![vp(1, 20.0, 0.0, -50.0), vp(2, 20.0, 0.0, -30.0)]),
            ],
            &chain,
        )
        .unwrap();
        let g = routing.true_moment_arms(&chain, &[0.3, -0.4]).unwrap();
        assert_eq!(g[(0, 1)], 0.0);
        assert_eq!(g[(1, 0)], 0.0);
        assert!(g[(0, 0)].abs() > 1.0 && g[(1, 1)].abs() > 1.0);
    }

    #[test]
    fn grid_count_and_corners() {
        let j = |name: &str, lim| RevoluteJoint::new(name, Vector3::z(), Isometry3::translation(0.0, 0.0, 10.0), lim).unwrap();
        let chain = KinematicChain::new(
            vec![j("a", (-1.0, 1.0)), j("b", (0.0, 2.0))],
            vec![LinkMass::massless(); 2],
            Isometry3::identity(),
        )
        .unwrap();
        let routing = MuscleRouting::new(vec![Muscle::new("m", vec![vp(0, 30.0, 0.0, 0.0), vp(2, 30.0, 0.0, 0.0)])], &chain).unwrap();
        let data = generate_grid_dataset(&routing, &chain, &GridSpec::new(vec![5, 5]).unwrap(), Execution::Sequential).unwrap();
        assert_eq!(data.len(), 25);
        for corner in [[-1.0, 0.0], [-1.0, 2.0], [1.0, 0.0], [1.0, 2.0]] {
            assert!(data.samples.iter().any(|s| s.theta == corner), "missing {corner:?}");
        }
        for s in &data.samples {
            assert_eq!(s.lengths, routing.muscle_lengths(&chain, &s.theta).unwrap());
        }
        let par = generate_grid_dataset(&routing, &chain, &GridSpec::new(vec![5, 5]).unwrap(), Execution::Parallel).unwrap();
        assert_eq!(par, data);
    }

    #[test]
    fn grid_rejections() {
        assert!(GridSpec::new(vec![4, 5]).is_err());
        assert!(GridSpec::new(vec![10]).is_err());
        let chain = hinge();
        let routing = MuscleRouting::new(vec![Muscle::new("a", vec![vp(0, 50.0, 0.0, 0.0), vp(1, 0.0, 50.0, 0.0)])], &chain).unwrap();
        let spec = GridSpec { divisions: vec![9], cap: 8 };
        assert!(matches!(
            generate_grid_dataset(&routing, &chain, &spec, Execution::Sequential),
            Err(Error::GridTooLarge { count: 9, cap: 8 })
        ));
    }

    #[test]
    fn invalid_routings() {
        let chain = hinge();
        assert!(MuscleRouting::new(vec![Muscle::new("a", vec![vp(0, 1.0, 0.0, 0.0)])], &chain).is_err());
        assert!(MuscleRouting::new(vec![Muscle::new("a", vec![vp(1, 1.0, 0.0, 0.0), vp(1, 9.0, 0.0, 0.0)])], &chain).is_err());
        assert!(MuscleRouting::new(vec![Muscle::new("a", vec![vp(1, 1.0, 0.0, 0.0), vp(0, 9.0, 0.0, 0.0)])], &chain).is_err());
    }

    #[test]
    fn perturbation_spec_bounds() {
        let mut spec = PerturbationSpec::identity();
        assert!(spec.validate().is_ok());
        spec.moment_arm_scale_range = (0.5, 1.0);
        assert!(spec.validate().is_err());
        spec.moment_arm_scale_range = (0.9, 1.5);
        assert!(spec.validate().is_err());
        spec.moment_arm_scale_range = (1.0, 1.0);
        spec.via_point_offset_bound = -1.0;
        assert!(spec.validate().is_err());
    }
}
