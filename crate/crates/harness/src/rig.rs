//! Closed-loop run: mapping-based length commands, the quasi-static plant,
//! the joint-angle filter and the online updaters, one tick at a time.

use jmm_core::estimator::StateEstimator;
use jmm_core::mapping::{JointMuscleMapping, OnlineTrainer};
use jmm_core::plant::{measure, settled, NoiseSource, Plant, PlantState};
use jmm_core::updaters::{observe_marker, solve_ik, AntagonismUpdater, IkOutcome, Rejection, UpdateSample, UpdateSource, VisionUpdater};

use crate::config::VisionLengths;
use crate::error::Result;
use crate::experiment::Experiment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Updaters {
    pub antagonism: bool,
    pub vision: bool,
}

impl Updaters {
    pub const NONE: Self = Self {
        antagonism: false,
        vision: false,
    };
    pub const BOTH: Self = Self {
        antagonism: true,
        vision: true,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub time: f64,
    pub command: usize,
    pub theta_true: Vec<f64>,
    pub theta_est: Vec<f64>,
    pub lengths: Vec<f64>,
    pub tensions: Vec<f64>,
    pub l_target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub command: usize,
    pub source: UpdateSource,
    pub theta: Vec<f64>,
    pub lengths: Vec<f64>,
    pub accepted: bool,
    pub reason: String,
}

/// Estimate-vs-vision comparison taken at the first settled tick of a
/// command, before any update at that command.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub command: usize,
    pub theta_est: Vec<f64>,
    pub theta_true: Vec<f64>,
    /// `None` when IK failed on the observation.
    pub theta_vision: Option<Vec<f64>>,
}

pub struct Rig<'a> {
    exp: &'a Experiment,
    plant: Plant,
    pub mapping: JointMuscleMapping,
    trainer: OnlineTrainer,
    ekf: StateEstimator,
    antagonism: Option<AntagonismUpdater>,
    vision: Option<VisionUpdater>,
    noise: NoiseSource,
    state: PlantState,
    prev_meas: Vec<f64>,
    history: Vec<Vec<f64>>,
    tick: u64,
    command: usize,
    probe_vision: bool,
    pub ticks: Vec<TickRecord>,
    pub events: Vec<EventRecord>,
    pub probes: Vec<Probe>,
}

impl<'a> Rig<'a> {
    /// The plant starts settled under the mapping's command for `start`,
    /// and the filter starts at `start`.
    pub fn new(exp: &'a Experiment, mapping: JointMuscleMapping, updaters: Updaters, start: &[f64], noise_salt: u64) -> Result<Self> {
        let r = &exp.resolved;
        let plant = exp.plant();
        let limits = exp.chain.limits();
        let trainer = OnlineTrainer::new(r.online.clone(), limits.clone(), &mapping)?;
        let ekf = StateEstimator::new(start, exp.n_muscles(), limits, r.ekf.clone())?;
        let mut noise_cfg = r.noise;
        noise_cfg.seed = noise_cfg.seed.wrapping_add(noise_salt);
        let mut noise = NoiseSource::new(noise_cfg)?;
        let l_target = mapping.evaluate(start)?;
        let (state, _) = plant.settle(start, &l_target)?;
        let (l_meas, _) = measure(&state, &mut noise);
        Ok(Self {
            exp,
            antagonism: updaters.antagonism.then(|| AntagonismUpdater::new(r.updater)).transpose()?,
            vision: updaters.vision.then(|| VisionUpdater::new(r.updater, exp.chain.clone())).transpose()?,
            plant,
            mapping,
            trainer,
            ekf,
            noise,
            state,
            prev_meas: l_meas,
            history: Vec::new(),
            tick: 0,
            command: 0,
            probe_vision: false,
            ticks: Vec::new(),
            events: Vec::new(),
            probes: Vec::new(),
        })
    }

    /// Record a [`Probe`] once per command.
    pub fn with_vision_probe(mut self) -> Self {
        self.probe_vision = true;
        self
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    pub fn theta_est(&self) -> Vec<f64> {
        self.ekf.theta()
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.exp.cfg.rig.tick_s
    }

    /// Move to the mapping's lengths for `theta_cmd` and hold. Returns the
    /// index of the first tick of this command.
    pub fn command(&mut self, theta_cmd: &[f64]) -> Result<usize> {
        self.command += 1;
        let first = self.ticks.len();
        let goal = self.mapping.evaluate(theta_cmd)?;
        let from = self.state.l_target.clone();
        let rig = &self.exp.cfg.rig;
        let (move_ticks, hold_ticks) = (rig.move_ticks, rig.hold_ticks);
        let mut probed = false;
        for k in 0..move_ticks + hold_ticks {
            let s = ((k + 1) as f64 / move_ticks.max(1) as f64).min(1.0);
            let target: Vec<f64> = from.iter().zip(&goal).map(|(a, b)| a + s * (b - a)).collect();
            self.step(&target, &mut probed)?;
        }
        Ok(first)
    }

    fn step(&mut self, l_target: &[f64], probed: &mut bool) -> Result<()> {
        self.tick += 1;
        let time = self.time();
        let (state, _) = self.plant.settle(&self.state.theta, l_target)?;
        self.state = state;
        let (l_meas, _) = measure(&self.state, &mut self.noise);
        let delta: Vec<f64> = l_meas.iter().zip(&self.prev_meas).map(|(a, b)| a - b).collect();
        self.ekf.predict(&delta, &self.mapping)?;
        self.ekf.correct(&l_meas, &self.mapping)?;
        self.prev_meas = l_meas.clone();

        let window = self.exp.resolved.updater.settle_window;
        self.history.push(self.state.lengths.clone());
        if self.history.len() > window {
            self.history.remove(0);
        }
        let theta_est = self.ekf.theta();
        self.ticks.push(TickRecord {
            time,
            command: self.command,
            theta_true: self.state.theta.clone(),
            theta_est: theta_est.clone(),
            lengths: self.state.lengths.clone(),
            tensions: self.state.tensions.clone(),
            l_target: l_target.to_vec(),
        });

        let is_settled = settled(&self.history, window, self.exp.resolved.updater.settle_eps);
        if self.probe_vision && is_settled && !*probed {
            *probed = true;
            self.probe(&theta_est, time)?;
        }
        if is_settled {
            self.run_updaters(time, &theta_est, &l_meas, l_target)?;
        }
        Ok(())
    }

    fn probe(&mut self, theta_est: &[f64], time: f64) -> Result<()> {
        let obs = observe_marker(&self.exp.chain, &self.state.theta, &mut self.noise, time)?;
        let theta_vision = match solve_ik(&self.exp.chain, theta_est, &obs.pose, &self.exp.resolved.updater.ik)? {
            IkOutcome::Converged(s) => Some(s.theta),
            IkOutcome::Failed(_) => None,
        };
        self.probes.push(Probe {
            command: self.command,
            theta_est: theta_est.to_vec(),
            theta_true: self.state.theta.clone(),
            theta_vision,
        });
        Ok(())
    }

    fn run_updaters(&mut self, time: f64, theta_est: &[f64], l_meas: &[f64], l_target: &[f64]) -> Result<()> {
        if let Some(vision) = self.vision.as_mut() {
            let obs = observe_marker(&self.exp.chain, &self.state.theta, &mut self.noise, time)?;
            let outcome = vision.observe(
                &obs,
                theta_est,
                match self.exp.cfg.updater.vision_lengths {
                    VisionLengths::Target => l_target,
                    VisionLengths::Measured => l_meas,
                },
                &self.history,
            )?;
            if self.apply(outcome, UpdateSource::Vision, time)? {
                return Ok(());
            }
        }
        if let Some(antagonism) = self.antagonism.as_mut() {
            let outcome = antagonism.observe(time, theta_est, l_meas, &self.history);
            self.apply(outcome, UpdateSource::Antagonism, time)?;
        }
        Ok(())
    }

    /// Log the gate outcome and apply an emitted sample. Returns whether a
    /// sample was applied.
    fn apply(&mut self, outcome: std::result::Result<UpdateSample, Rejection>, source: UpdateSource, time: f64) -> Result<bool> {
        match outcome {
            Ok(sample) => {
                let applied = self.trainer.update(&mut self.mapping, &sample.theta, &sample.lengths);
                let reason = match &applied {
                    Ok(_) => String::new(),
                    Err(e) => format!("update-failed: {e}"),
                };
                self.events.push(EventRecord {
                    time,
                    command: self.command,
                    source,
                    theta: sample.theta,
                    lengths: sample.lengths,
                    accepted: applied.is_ok(),
                    reason,
                });
                Ok(applied.is_ok())
            }
            Err(Rejection::NotSettled) => Ok(false),
            Err(rejection) => {
                self.events.push(EventRecord {
                    time,
                    command: self.command,
                    source,
                    theta: Vec::new(),
                    lengths: Vec::new(),
                    accepted: false,
                    reason: rejection.reason().to_string(),
                });
                Ok(false)
            }
        }
    }

    pub fn accepted_events(&self) -> usize {
        self.events.iter().filter(|e| e.accepted).count()
    }
}
