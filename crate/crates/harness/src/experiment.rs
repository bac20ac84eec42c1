//! Shared setup: arm, nominal and true routings, and the initially trained
//! mapping.

use jmm_core::kinematics::KinematicChain;
use jmm_core::mapping::{train_initial, JointMuscleMapping, TrainReport};
use jmm_core::plant::Plant;
use jmm_core::routing::{generate_grid_dataset, MuscleRouting};

use crate::config::{ExperimentConfig, Resolved};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub resolved: Resolved,
    pub chain: KinematicChain,
    /// Routing the mapping is trained on.
    pub nominal: MuscleRouting,
    /// Routing of the simulated robot.
    pub actual: MuscleRouting,
    pub initial: JointMuscleMapping,
    pub train_report: TrainReport,
    pub dataset_size: usize,
}

impl Experiment {
    /// Build both routings, generate the grid on the nominal one and train
    /// the initial mapping.
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        let resolved = cfg.resolve()?;
        let chain = resolved.chain.clone();
        let nominal = MuscleRouting::new(resolved.muscles.clone(), &chain)?;
        let actual = nominal.perturb(&chain, &resolved.perturbation)?;
        let dataset = generate_grid_dataset(&nominal, &chain, &resolved.grid, resolved.train.execution)?;
        log::info!("training on {} grid postures", dataset.len());
        let (initial, train_report) = train_initial(&dataset, &resolved.train)?;
        log::info!("initial validation RMSE {:.3} mm", train_report.final_validation_rmse());
        Ok(Self {
            cfg: cfg.clone(),
            chain,
            nominal,
            actual,
            initial,
            train_report,
            dataset_size: dataset.len(),
            resolved,
        })
    }

    pub fn plant(&self) -> Plant {
        Plant::new(self.chain.clone(), self.actual.clone(), self.resolved.gains.clone(), self.resolved.settle).expect("resolved config is consistent")
    }

    pub fn n_joints(&self) -> usize {
        self.chain.n_joints()
    }

    pub fn n_muscles(&self) -> usize {
        self.nominal.n_muscles()
    }
}
