//! Online sources of training samples for the mapping.
//!
//! The antagonism updater pairs the estimated posture with the measured
//! lengths once the plant has come to rest. The vision updater solves IK on
//! an observed marker pose and pairs the result with the commanded lengths,
//! provided the IK answer stays within `C` of the estimate.

use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector3, Vector6};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::kinematics::{KinematicChain, Pose};
use crate::plant::{settled, NoiseSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpdateSource {
    Antagonism,
    Vision,
}

impl UpdateSource {
    pub fn as_str(self) -> &'static str {
        match self {
            UpdateSource::Antagonism => "antagonism",
            UpdateSource::Vision => "vision",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateSample {
    /// rad
    pub theta: Vec<f64>,
    /// mm
    pub lengths: Vec<f64>,
    pub source: UpdateSource,
    /// s
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkConfig {
    pub max_iter: usize,
    /// Relative damping: `λ = damping · ‖J‖₂` of the weighted Jacobian.
    pub damping: f64,
    /// mm
    pub pos_tol: f64,
    /// rad
    pub rot_tol: f64,
    /// Weight of orientation error against position error (mm/rad).
    pub rot_weight: f64,
    /// Largest joint step per iterate (rad).
    pub max_step: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            damping: 0.05,
            pos_tol: 2.0,
            rot_tol: 0.01,
            rot_weight: 100.0,
            max_step: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdaterConfig {
    /// IK gate `C` (rad, L2 over all joints); accepted iff distance `< C`.
    pub ik_gate: f64,
    /// Minimum L2 distance from remembered update postures (rad).
    pub min_posture_separation: f64,
    /// How many of the most recent update postures the separation gate
    /// compares against; `None` compares against all of them.
    pub separation_memory: Option<usize>,
    /// Settle gate window (ticks).
    pub settle_window: usize,
    /// Settle gate threshold on per-muscle length range (mm).
    pub settle_eps: f64,
    pub ik: IkConfig,
}

impl Default for UpdaterConfig {
    fn default() -> Self {
        Self {
            ik_gate: 0.35,
            min_posture_separation: 0.087,
            separation_memory: Some(1),
            settle_window: 5,
            settle_eps: 0.5,
            ik: IkConfig::default(),
        }
    }
}

impl UpdaterConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::Invalid {
                what: "updater config",
                reason: reason.into(),
            })
        };
        if !(self.ik_gate > 0.0 && self.ik_gate.is_finite()) {
            return bad("C must be > 0");
        }
        if !(self.min_posture_separation >= 0.0 && self.min_posture_separation.is_finite()) {
            return bad("posture separation must be >= 0");
        }
        if self.settle_window == 0 || !(self.settle_eps > 0.0) {
            return bad("settle gate needs window >= 1 and eps > 0");
        }
        if self.separation_memory == Some(0) {
            return bad("separation memory must be >= 1 when set");
        }
        let ik = &self.ik;
        if ik.max_iter == 0 || !(ik.damping >= 0.0) || !(ik.pos_tol > 0.0) || !(ik.rot_tol > 0.0) || !(ik.rot_weight > 0.0) || !(ik.max_step > 0.0) {
            return bad("IK parameters must be positive");
        }
        Ok(())
    }
}

/// Why an updater declined to emit a sample.
#[derive(Debug, Clone, PartialEq)]
pub enum Rejection {
    NotSettled,
    TooClose { distance: f64 },
    IkFailed { position_error: f64, rotation_error: f64 },
    IkGate { distance: f64 },
}

impl Rejection {
    pub fn reason(&self) -> &'static str {
        match self {
            Rejection::NotSettled => "not-settled",
            Rejection::TooClose { .. } => "too-close",
            Rejection::IkFailed { .. } => "ik-failed",
            Rejection::IkGate { .. } => "ik-gate",
        }
    }
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Default)]
struct PostureMemory {
    postures: Vec<Vec<f64>>,
}

impl PostureMemory {
    fn nearest(&self, theta: &[f64], memory: Option<usize>) -> Option<f64> {
        let skip = memory.map_or(0, |k| self.postures.len().saturating_sub(k));
        self.postures[skip..].iter().map(|p| l2_distance(p, theta)).reduce(f64::min)
    }

    fn gate(&self, theta: &[f64], cfg: &UpdaterConfig) -> Result<(), Rejection> {
        match self.nearest(theta, cfg.separation_memory) {
            Some(d) if d < cfg.min_posture_separation => Err(Rejection::TooClose { distance: d }),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AntagonismUpdater {
    cfg: UpdaterConfig,
    memory: PostureMemory,
}

impl AntagonismUpdater {
    pub fn new(cfg: UpdaterConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            memory: PostureMemory::default(),
        })
    }

    pub fn emitted(&self) -> &[Vec<f64>] {
        &self.memory.postures
    }

    /// `history` is the recent muscle-length log the settle gate inspects.
    pub fn observe(&mut self, time: f64, theta_est: &[f64], l_meas: &[f64], history: &[Vec<f64>]) -> Result<UpdateSample, Rejection> {
        if !settled(history, self.cfg.settle_window, self.cfg.settle_eps) {
            return Err(Rejection::NotSettled);
        }
        self.memory.gate(theta_est, &self.cfg)?;
        self.memory.postures.push(theta_est.to_vec());
        Ok(UpdateSample {
            theta: theta_est.to_vec(),
            lengths: l_meas.to_vec(),
            source: UpdateSource::Antagonism,
            time,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerObservation {
    /// Marker pose in the base frame.
    pub pose: Pose,
    /// s
    pub time: f64,
}

/// Marker pose of the true posture, with Gaussian position noise per axis and
/// a Gaussian rotation-vector perturbation applied in the base frame.
pub fn observe_marker(chain: &KinematicChain, theta_true: &[f64], noise: &mut NoiseSource, time: f64) -> Result<MarkerObservation> {
    let exact = chain.forward_kinematics(theta_true)?;
    let dp = Vector3::new(
        noise.marker_position_noise(),
        noise.marker_position_noise(),
        noise.marker_position_noise(),
    );
    let dr = Vector3::new(
        noise.marker_rotation_noise(),
        noise.marker_rotation_noise(),
        noise.marker_rotation_noise(),
    );
    Ok(MarkerObservation {
        pose: Pose::new(exact.position + dp, UnitQuaternion::from_scaled_axis(dr) * exact.orientation),
        time,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub position_error: f64,
    pub rotation_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IkOutcome {
    Converged(IkSolution),
    Failed(IkSolution),
}

fn pose_error(chain: &KinematicChain, theta: &[f64], target: &Pose) -> (Vector3<f64>, Vector3<f64>) {
    let pose = chain.forward_kinematics(theta).expect("checked dims");
    (pose.position_error(target), pose.rotation_error(target))
}

/// Damped least squares on the weighted 6D marker error, clamping every
/// iterate to the joint limits. Succeeds iff both tolerances are met.
pub fn solve_ik(chain: &KinematicChain, theta_init: &[f64], target: &Pose, cfg: &IkConfig) -> Result<IkOutcome> {
    chain.check_dims(theta_init)?;
    check_finite("IK initial posture", theta_init)?;
    check_finite("IK target", target.position.as_slice())?;
    let n = chain.n_joints();
    let mut theta = theta_init.to_vec();
    chain.clamp(&mut theta);
    let weights = Vector6::new(1.0, 1.0, 1.0, cfg.rot_weight, cfg.rot_weight, cfg.rot_weight);
    let mut iterations = 0;
    loop {
        let (dp, dr) = pose_error(chain, &theta, target);
        let solution = |theta: &[f64], iterations| IkSolution {
            theta: theta.to_vec(),
            iterations,
            position_error: dp.norm(),
            rotation_error: dr.norm(),
        };
        if dp.norm() < cfg.pos_tol && dr.norm() < cfg.rot_tol {
            return Ok(IkOutcome::Converged(solution(&theta, iterations)));
        }
        if iterations >= cfg.max_iter {
            return Ok(IkOutcome::Failed(solution(&theta, iterations)));
        }
        iterations += 1;

        let jac = chain.marker_jacobian(&theta)?;
        let mut wj = DMatrix::<f64>::zeros(6, n);
        let mut we = DVector::<f64>::zeros(6);
        for r in 0..6 {
            let e = if r < 3 { dp[r] } else { dr[r - 3] };
            we[r] = weights[r] * e;
            for c in 0..n {
                wj[(r, c)] = weights[r] * jac[(r, c)];
            }
        }
        let sigma_max = wj.clone().singular_values().amax();
        let lambda = cfg.damping * sigma_max;
        let mut normal = wj.transpose() * &wj;
        for d in 0..n {
            normal[(d, d)] += lambda * lambda;
        }
        let rhs = wj.transpose() * we;
        let Some(step) = normal.lu().solve(&rhs) else {
            return Ok(IkOutcome::Failed(solution(&theta, iterations)));
        };
        let scale = (cfg.max_step / step.amax()).min(1.0);
        let previous = theta.clone();
        for (q, s) in theta.iter_mut().zip(step.iter()) {
            *q += scale * s;
        }
        chain.clamp(&mut theta);
        if l2_distance(&previous, &theta) < 1e-12 {
            // Stalled at a limit or a least-squares floor above tolerance.
            let (dp, dr) = pose_error(chain, &theta, target);
            let done = IkSolution {
                theta,
                iterations,
                position_error: dp.norm(),
                rotation_error: dr.norm(),
            };
            return Ok(if dp.norm() < cfg.pos_tol && dr.norm() < cfg.rot_tol {
                IkOutcome::Converged(done)
            } else {
                IkOutcome::Failed(done)
            });
        }
    }
}

#[derive(Debug, Clone)]
pub struct VisionUpdater {
    cfg: UpdaterConfig,
    chain: KinematicChain,
    memory: PostureMemory,
}

impl VisionUpdater {
    /// `chain` is the nominal kinematic model IK runs on.
    pub fn new(cfg: UpdaterConfig, chain: KinematicChain) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            chain,
            memory: PostureMemory::default(),
        })
    }

    pub fn emitted(&self) -> &[Vec<f64>] {
        &self.memory.postures
    }

    pub fn observe(
        &mut self,
        obs: &MarkerObservation,
        theta_est: &[f64],
        l_target: &[f64],
        history: &[Vec<f64>],
    ) -> Result<Result<UpdateSample, Rejection>> {
        self.chain.check_dims(theta_est)?;
        if !settled(history, self.cfg.settle_window, self.cfg.settle_eps) {
            return Ok(Err(Rejection::NotSettled));
        }
        let solved = match solve_ik(&self.chain, theta_est, &obs.pose, &self.cfg.ik)? {
            IkOutcome::Converged(s) => s,
            IkOutcome::Failed(s) => {
                return Ok(Err(Rejection::IkFailed {
                    position_error: s.position_error,
                    rotation_error: s.rotation_error,
                }))
            }
        };
        Ok(self.gate(solved.theta, theta_est, l_target, obs.time))
    }

    /// The IK-distance and separation gates applied to a solved posture.
    pub fn gate(&mut self, theta_ik: Vec<f64>, theta_est: &[f64], l_target: &[f64], time: f64) -> Result<UpdateSample, Rejection> {
        let distance = l2_distance(&theta_ik, theta_est);
        if !(distance < self.cfg.ik_gate) {
            return Err(Rejection::IkGate { distance });
        }
        self.memory.gate(&theta_ik, &self.cfg)?;
        self.memory.postures.push(theta_ik.clone());
        Ok(UpdateSample {
            theta: theta_ik,
            lengths: l_target.to_vec(),
            source: UpdateSource::Vision,
            time,
        })
    }
}

/// Dimension check for a sample against a mapping's shape.
pub fn check_sample(sample: &UpdateSample, n: usize, m: usize) -> Result<()> {
    check_dim("update posture", n, sample.theta.len())?;
    check_dim("update lengths", m, sample.lengths.len())?;
    check_finite("update posture", &sample.theta)?;
    check_finite("update lengths", &sample.lengths)
}
