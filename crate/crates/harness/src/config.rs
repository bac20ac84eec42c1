//! Experiment configuration.
//!
//! Every field has a default (the desk arm and its scenarios), so a config
//! file only lists what it overrides. Angles are in degrees and lengths in
//! mm at this boundary; [`ExperimentConfig::resolve`] converts to the
//! radian-based core types.

use std::path::Path;

use jmm_core::desk;
use jmm_core::estimator::EkfConfig;
use jmm_core::jacobian::JacobianConfig;
use jmm_core::kinematics::KinematicChain;
use jmm_core::mapping::{Activation, AdamConfig, OnlineUpdateConfig, TrainConfig};
use jmm_core::plant::{ControllerGains, SensorNoise, SettleConfig};
use jmm_core::routing::{GridSpec, Muscle, PerturbationSpec};
use jmm_core::updaters::{IkConfig, UpdaterConfig};
use jmm_core::Execution;
use serde::{Deserialize, Serialize};

use crate::arm::ArmConfig;
use crate::error::{HarnessError, Result};

pub fn deg(v: f64) -> f64 {
    v.to_radians()
}

pub fn to_deg(v: f64) -> f64 {
    v.to_degrees()
}

pub fn deg_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|d| d.to_radians()).collect()
}

pub fn to_deg_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|r| r.to_degrees()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; `--seed` replaces it. Component seeds are derived from it
    /// unless set explicitly.
    pub seed: u64,
    pub arm: ArmConfig,
    pub perturbation: PerturbationConfig,
    pub grid: GridConfig,
    pub train: TrainSection,
    pub online: OnlineSection,
    pub updater: UpdaterSection,
    pub gains: GainsSection,
    pub plant: PlantSection,
    pub noise: NoiseSection,
    pub ekf: EkfSection,
    pub rig: RigSection,
    pub antagonism: AntagonismScenario,
    pub vision: VisionScenario,
    pub combined: CombinedScenario,
    pub reach: ReachScenario,
    pub jacobian_sweep: JacobianSweepScenario,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            arm: ArmConfig::desk(),
            perturbation: PerturbationConfig::default(),
            grid: GridConfig::default(),
            train: TrainSection::default(),
            online: OnlineSection::default(),
            updater: UpdaterSection::default(),
            gains: GainsSection::default(),
            plant: PlantSection::default(),
            noise: NoiseSection::default(),
            ekf: EkfSection::default(),
            rig: RigSection::default(),
            antagonism: AntagonismScenario::default(),
            vision: VisionScenario::default(),
            combined: CombinedScenario::default(),
            reach: ReachScenario::default(),
            jacobian_sweep: JacobianSweepScenario::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationConfig {
    pub via_point_offset_bound_mm: f64,
    pub moment_arm_scale: [f64; 2],
    pub seed: Option<u64>,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            via_point_offset_bound_mm: 10.0,
            moment_arm_scale: [0.8, 1.2],
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub divisions: Vec<usize>,
    pub cap: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            divisions: vec![9; 4],
            cap: GridSpec::DEFAULT_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationName {
    Sigmoid,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamSection {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamSection {
    fn default() -> Self {
        let a = AdamConfig::default();
        Self {
            learning_rate: a.learning_rate,
            beta1: a.beta1,
            beta2: a.beta2,
            epsilon: a.epsilon,
        }
    }
}

impl AdamSection {
    fn resolve(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub hidden_dim: usize,
    pub activation: ActivationName,
    pub minibatch_size: usize,
    pub epochs: usize,
    pub adam: AdamSection,
    pub validation_fraction: f64,
    pub seed: Option<u64>,
    /// Data-parallel evaluation during training.
    pub parallel: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            hidden_dim: 256,
            activation: ActivationName::Sigmoid,
            minibatch_size: 5,
            epochs: 60,
            adam: AdamSection::default(),
            validation_fraction: 0.2,
            seed: None,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineSection {
    pub anchors: usize,
    pub steps_per_event: usize,
    pub adam: AdamSection,
    pub seed: Option<u64>,
}

impl Default for OnlineSection {
    fn default() -> Self {
        Self {
            anchors: 8,
            steps_per_event: 5,
            adam: AdamSection::default(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IkSection {
    pub max_iter: usize,
    pub damping: f64,
    pub pos_tol_mm: f64,
    pub rot_tol_deg: f64,
    pub rot_weight_mm_per_rad: f64,
    pub max_step_deg: f64,
}

impl Default for IkSection {
    fn default() -> Self {
        let ik = IkConfig::default();
        Self {
            max_iter: ik.max_iter,
            damping: ik.damping,
            pos_tol_mm: ik.pos_tol,
            rot_tol_deg: to_deg(ik.rot_tol),
            rot_weight_mm_per_rad: ik.rot_weight,
            max_step_deg: to_deg(ik.max_step),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpdaterSection {
    pub ik_gate_deg: f64,
    pub min_posture_separation_deg: f64,
    /// Number of recent update postures the separation gate checks; 0 = all.
    pub separation_memory: usize,
    /// Lengths paired with the IK posture in a vision sample.
    pub vision_lengths: VisionLengths,
    pub settle_window: usize,
    pub settle_eps_mm: f64,
    pub ik: IkSection,
}

impl Default for UpdaterSection {
    fn default() -> Self {
        let u = UpdaterConfig::default();
        Self {
            ik_gate_deg: to_deg(u.ik_gate),
            min_posture_separation_deg: to_deg(u.min_posture_separation),
            separation_memory: u.separation_memory.unwrap_or(0),
            vision_lengths: VisionLengths::Target,
            settle_window: u.settle_window,
            settle_eps_mm: u.settle_eps,
            ik: IkSection::default(),
        }
    }
}

/// `Target` pairs the IK posture with the commanded lengths; `Measured`
/// uses the sensed ones, which keeps the mapping consistent with the
/// estimator at the cost of tracking accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisionLengths {
    #[default]
    Target,
    Measured,
}

/// Scalars apply to every muscle; `*_per_muscle` lists override them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainsSection {
    pub t_bias_n: f64,
    pub k_stiff_n_per_mm: f64,
    pub t_bias_per_muscle: Option<Vec<f64>>,
    pub k_stiff_per_muscle: Option<Vec<f64>>,
}

impl Default for GainsSection {
    fn default() -> Self {
        Self {
            t_bias_n: 20.0,
            k_stiff_n_per_mm: 2.0,
            t_bias_per_muscle: None,
            k_stiff_per_muscle: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSection {
    pub gravity_mm_s2: f64,
    pub max_iter: usize,
    pub grad_tol_nmm: f64,
}

impl Default for PlantSection {
    fn default() -> Self {
        let s = SettleConfig::default();
        Self {
            gravity_mm_s2: s.gravity,
            max_iter: s.max_iter,
            grad_tol_nmm: s.grad_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub sigma_length_mm: f64,
    pub sigma_marker_pos_mm: f64,
    pub sigma_marker_rot_deg: f64,
    pub seed: Option<u64>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let n = SensorNoise::default();
        Self {
            sigma_length_mm: n.sigma_length,
            sigma_marker_pos_mm: n.sigma_marker_pos,
            sigma_marker_rot_deg: to_deg(n.sigma_marker_rot),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EkfSection {
    pub process_std_deg: f64,
    pub measurement_std_mm: f64,
    pub initial_std_deg: f64,
    pub damping: f64,
    pub stencil_d1_deg: f64,
    pub stencil_d2_deg: f64,
    pub stencil_samples: usize,
}

impl Default for EkfSection {
    fn default() -> Self {
        let e = EkfConfig::default();
        Self {
            process_std_deg: to_deg(e.process_var.sqrt()),
            measurement_std_mm: e.measurement_var.sqrt(),
            initial_std_deg: to_deg(e.initial_var.sqrt()),
            damping: e.damping,
            stencil_d1_deg: to_deg(e.jacobian.d1),
            stencil_d2_deg: to_deg(e.jacobian.d2),
            stencil_samples: e.jacobian.samples_per_joint,
        }
    }
}

impl EkfSection {
    pub fn jacobian(&self) -> JacobianConfig {
        JacobianConfig {
            d1: deg(self.stencil_d1_deg),
            d2: deg(self.stencil_d2_deg),
            samples_per_joint: self.stencil_samples,
        }
    }
}

/// Closed-loop timing: each command ramps the length target over
/// `move_ticks` and then holds it for `hold_ticks`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigSection {
    pub tick_s: f64,
    pub move_ticks: usize,
    pub hold_ticks: usize,
}

impl Default for RigSection {
    fn default() -> Self {
        Self {
            tick_s: 0.1,
            move_ticks: 5,
            hold_ticks: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AntagonismScenario {
    pub cycles: usize,
    pub elbow_steps_deg: Vec<f64>,
    /// Shoulder posture held during the elbow cycles.
    pub shoulder_deg: Vec<f64>,
}

impl Default for AntagonismScenario {
    fn default() -> Self {
        Self {
            cycles: 11,
            elbow_steps_deg: vec![0.0, 30.0, 60.0, 90.0],
            shoulder_deg: vec![20.0, 10.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisionScenario {
    /// Distinct postures, visited in order once per cycle.
    pub postures_deg: Vec<Vec<f64>>,
    pub cycles: usize,
    pub max_ratio: f64,
    pub control_min_ratio: f64,
}

impl Default for VisionScenario {
    fn default() -> Self {
        Self {
            postures_deg: vec![
                vec![10.0, 5.0, 0.0, 30.0],
                vec![30.0, 15.0, 10.0, 60.0],
                vec![50.0, 25.0, -10.0, 45.0],
                vec![20.0, 35.0, 20.0, 80.0],
                vec![40.0, 10.0, -20.0, 100.0],
                vec![60.0, 30.0, 5.0, 70.0],
                vec![15.0, 20.0, -5.0, 50.0],
                vec![35.0, 40.0, 15.0, 90.0],
                vec![55.0, 15.0, -15.0, 20.0],
            ],
            cycles: 3,
            max_ratio: 0.5,
            control_min_ratio: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CombinedScenario {
    /// Learning-phase commands; empty = draw `learning_commands` random postures.
    pub learning_postures_deg: Vec<Vec<f64>>,
    pub learning_commands: usize,
    pub targets: usize,
    pub starts_per_target: usize,
    pub min_target_distance_deg: f64,
    /// Posture box (deg) for learning postures, targets and starts.
    pub region_min_deg: Vec<f64>,
    pub region_max_deg: Vec<f64>,
    pub max_joint_ratio: f64,
    pub max_hand_ratio: f64,
}

impl Default for CombinedScenario {
    fn default() -> Self {
        Self {
            learning_postures_deg: Vec::new(),
            learning_commands: 27,
            targets: 5,
            starts_per_target: 10,
            min_target_distance_deg: 20.0,
            region_min_deg: vec![-10.0, -10.0, -25.0, 10.0],
            region_max_deg: vec![70.0, 45.0, 25.0, 100.0],
            max_joint_ratio: 0.6,
            max_hand_ratio: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReachScenario {
    /// Posture whose true marker pose defines the target.
    pub target_posture_deg: Vec<f64>,
    pub attempts: usize,
    pub explorations_per_attempt: usize,
    /// Exploration postures are drawn uniformly within this many degrees of
    /// the target posture, per joint.
    pub exploration_spread_deg: f64,
    pub max_distance_ratio: f64,
}

impl Default for ReachScenario {
    fn default() -> Self {
        Self {
            target_posture_deg: vec![40.0, 20.0, 0.0, 70.0],
            attempts: 10,
            explorations_per_attempt: 3,
            exploration_spread_deg: 15.0,
            max_distance_ratio: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JacobianSweepScenario {
    pub joint: usize,
    pub points: usize,
    /// Posture of the other joints during the sweep.
    pub base_posture_deg: Vec<f64>,
    pub min_tv_fraction: f64,
}

impl Default for JacobianSweepScenario {
    fn default() -> Self {
        Self {
            joint: desk::ELBOW,
            points: 100,
            base_posture_deg: vec![20.0, 10.0, 0.0, 0.0],
            min_tv_fraction: 0.8,
        }
    }
}

/// Core-typed view of a config.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub chain: KinematicChain,
    pub muscles: Vec<Muscle>,
    pub perturbation: PerturbationSpec,
    pub grid: GridSpec,
    pub train: TrainConfig,
    pub online: OnlineUpdateConfig,
    pub updater: UpdaterConfig,
    pub gains: ControllerGains,
    pub settle: SettleConfig,
    pub noise: SensorNoise,
    pub ekf: EkfConfig,
}

fn derive_seed(master: u64, salt: u64) -> u64 {
    master
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(salt.wrapping_mul(0xbf58_476d_1ce4_e5b9))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Full-size network width.
    pub fn apply_faithful_scale(&mut self) {
        self.train.hidden_dim = 1000;
    }

    pub fn seed_for(&self, explicit: Option<u64>, salt: u64) -> u64 {
        explicit.unwrap_or_else(|| derive_seed(self.seed, salt))
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let config = |msg: String| HarnessError::Config(msg);
        let (chain, muscles) = self.arm.build()?;
        let n = chain.n_joints();
        let m = muscles.len();

        let perturbation = PerturbationSpec {
            via_point_offset_bound: self.perturbation.via_point_offset_bound_mm,
            moment_arm_scale_range: (self.perturbation.moment_arm_scale[0], self.perturbation.moment_arm_scale[1]),
            seed: self.seed_for(self.perturbation.seed, 1),
        };
        perturbation.validate().map_err(|e| config(e.to_string()))?;

        let grid = GridSpec {
            divisions: self.grid.divisions.clone(),
            cap: self.grid.cap,
        };
        grid.validate().map_err(|e| config(e.to_string()))?;
        if grid.divisions.len() != n {
            return Err(config(format!("grid.divisions has {} entries for {n} joints", grid.divisions.len())));
        }

        let train = TrainConfig {
            hidden_dim: self.train.hidden_dim,
            activation: match self.train.activation {
                ActivationName::Sigmoid => Activation::Sigmoid,
                ActivationName::Relu => Activation::Relu,
            },
            minibatch_size: self.train.minibatch_size,
            epochs: self.train.epochs,
            adam: self.train.adam.resolve(),
            validation_fraction: self.train.validation_fraction,
            seed: self.seed_for(self.train.seed, 2),
            execution: if self.train.parallel {
                Execution::Parallel
            } else {
                Execution::Sequential
            },
        };
        train.validate().map_err(|e| config(e.to_string()))?;

        let online = OnlineUpdateConfig {
            anchors: self.online.anchors,
            steps_per_event: self.online.steps_per_event,
            adam: self.online.adam.resolve(),
            seed: self.seed_for(self.online.seed, 3),
        };
        if online.steps_per_event == 0 {
            return Err(config("online.steps_per_event must be >= 1".into()));
        }

        let u = &self.updater;
        let updater = UpdaterConfig {
            ik_gate: deg(u.ik_gate_deg),
            min_posture_separation: deg(u.min_posture_separation_deg),
            separation_memory: (u.separation_memory > 0).then_some(u.separation_memory),
            settle_window: u.settle_window,
            settle_eps: u.settle_eps_mm,
            ik: IkConfig {
                max_iter: u.ik.max_iter,
                damping: u.ik.damping,
                pos_tol: u.ik.pos_tol_mm,
                rot_tol: deg(u.ik.rot_tol_deg),
                rot_weight: u.ik.rot_weight_mm_per_rad,
                max_step: deg(u.ik.max_step_deg),
            },
        };
        updater.validate().map_err(|e| config(e.to_string()))?;

        let gains = ControllerGains {
            t_bias: self.gains.t_bias_per_muscle.clone().unwrap_or_else(|| vec![self.gains.t_bias_n; m]),
            k_stiff: self
                .gains
                .k_stiff_per_muscle
                .clone()
                .unwrap_or_else(|| vec![self.gains.k_stiff_n_per_mm; m]),
        };
        if gains.t_bias.len() != m || gains.k_stiff.len() != m {
            return Err(config(format!("gains need one entry per muscle ({m})")));
        }
        gains.validate().map_err(|e| config(e.to_string()))?;

        let settle = SettleConfig {
            max_iter: self.plant.max_iter,
            grad_tol: self.plant.grad_tol_nmm,
            armijo: SettleConfig::default().armijo,
            gravity: self.plant.gravity_mm_s2,
        };
        if settle.max_iter == 0 || !(settle.grad_tol > 0.0) || !settle.gravity.is_finite() {
            return Err(config("plant needs max_iter >= 1, grad_tol > 0 and finite gravity".into()));
        }

        let noise = SensorNoise {
            sigma_length: self.noise.sigma_length_mm,
            sigma_marker_pos: self.noise.sigma_marker_pos_mm,
            sigma_marker_rot: deg(self.noise.sigma_marker_rot_deg),
            seed: self.seed_for(self.noise.seed, 4),
        };
        noise.validate().map_err(|e| config(e.to_string()))?;

        let e = &self.ekf;
        let ekf = EkfConfig {
            process_var: deg(e.process_std_deg).powi(2),
            measurement_var: e.measurement_std_mm.powi(2),
            initial_var: deg(e.initial_std_deg).powi(2),
            damping: e.damping,
            jacobian: e.jacobian(),
        };
        if !(ekf.process_var >= 0.0 && ekf.measurement_var > 0.0 && ekf.initial_var >= 0.0 && ekf.damping >= 0.0) {
            return Err(config("ekf variances must be >= 0 (measurement > 0)".into()));
        }
        ekf.jacobian.validate().map_err(|e| config(e.to_string()))?;

        if self.rig.hold_ticks == 0 || !(self.rig.tick_s > 0.0) {
            return Err(config("rig needs hold_ticks >= 1 and tick_s > 0".into()));
        }
        self.check_postures(n)?;

        Ok(Resolved {
            chain,
            muscles,
            perturbation,
            grid,
            train,
            online,
            updater,
            gains,
            settle,
            noise,
            ekf,
        })
    }

    fn check_postures(&self, n: usize) -> Result<()> {
        let check = |what: &str, v: &[f64]| {
            if v.len() == n {
                Ok(())
            } else {
                Err(HarnessError::Config(format!("{what} has {} entries for {n} joints", v.len())))
            }
        };
        for p in &self.vision.postures_deg {
            check("vision posture", p)?;
        }
        for p in &self.combined.learning_postures_deg {
            check("learning posture", p)?;
        }
        check("combined.region_min_deg", &self.combined.region_min_deg)?;
        check("combined.region_max_deg", &self.combined.region_max_deg)?;
        check("reach.target_posture_deg", &self.reach.target_posture_deg)?;
        check("jacobian_sweep.base_posture_deg", &self.jacobian_sweep.base_posture_deg)?;
        if self.jacobian_sweep.joint >= n {
            return Err(HarnessError::Config("jacobian_sweep.joint out of range".into()));
        }
        if self.antagonism.shoulder_deg.len() + 1 != n {
            return Err(HarnessError::Config("antagonism.shoulder_deg must list every joint but the last".into()));
        }
        if self.vision.postures_deg.is_empty() || self.vision.cycles < 2 {
            return Err(HarnessError::Config("vision needs postures and at least 2 cycles".into()));
        }
        if self.antagonism.cycles < 2 || self.antagonism.elbow_steps_deg.is_empty() {
            return Err(HarnessError::Config("antagonism needs elbow steps and at least 2 cycles".into()));
        }
        Ok(())
    }
}
