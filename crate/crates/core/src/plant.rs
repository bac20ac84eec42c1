//! The simulated robot.
//!
//! Muscles are driven by stiffness control, `T = T_bias + max(0, K (l − l_target))`.
//! The plant is quasi-static: for a length command it reports the posture
//! minimizing
//!
//! `E(θ) = Σ_i Φ_i(l_i(θ) − l_target,i) + U_gravity(θ)`,
//! `Φ(e) = T_bias e + K/2 max(0, e)²`,
//!
//! whose stationarity condition is the torque balance `Gᵀ T = τ_gravity`.
//! `E` is C¹ but not C² at the slack kink.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::kinematics::KinematicChain;
use crate::routing::MuscleRouting;

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    /// N, per muscle.
    pub t_bias: Vec<f64>,
    /// N/mm, per muscle.
    pub k_stiff: Vec<f64>,
}

impl ControllerGains {
    pub fn uniform(m: usize, t_bias: f64, k_stiff: f64) -> Result<Self> {
        let gains = Self {
            t_bias: vec![t_bias; m],
            k_stiff: vec![k_stiff; m],
        };
        gains.validate()?;
        Ok(gains)
    }

    pub fn validate(&self) -> Result<()> {
        check_dim("stiffness gains", self.t_bias.len(), self.k_stiff.len())?;
        if self.t_bias.iter().any(|&t| !(t > 0.0 && t.is_finite())) || self.k_stiff.iter().any(|&k| !(k >= 0.0 && k.is_finite())) {
            return Err(Error::Invalid {
                what: "controller gains",
                reason: "need T_bias > 0 and K_stiff >= 0".into(),
            });
        }
        Ok(())
    }

    pub fn n_muscles(&self) -> usize {
        self.t_bias.len()
    }
}

/// Componentwise `T_bias + max(0, K (l_true − l_target))` (N).
pub fn stiffness_tensions(l_true: &[f64], l_target: &[f64], gains: &ControllerGains) -> Result<Vec<f64>> {
    check_dim("target lengths", l_true.len(), l_target.len())?;
    check_dim("controller gains", l_true.len(), gains.n_muscles())?;
    Ok(tensions_unchecked(l_true, l_target, gains))
}

fn tensions_unchecked(l_true: &[f64], l_target: &[f64], gains: &ControllerGains) -> Vec<f64> {
    l_true
        .iter()
        .zip(l_target)
        .enumerate()
        .map(|(i, (l, t))| gains.t_bias[i] + (gains.k_stiff[i] * (l - t)).max(0.0))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettleConfig {
    pub max_iter: usize,
    /// Projected-gradient stationarity tolerance (N·mm).
    pub grad_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Gravity along `-z` (mm/s²).
    pub gravity: f64,
}

impl Default for SettleConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 0.05,
            armijo: 1e-4,
            gravity: 9810.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    /// rad
    pub theta: Vec<f64>,
    /// Relative lengths of the true routing (mm).
    pub lengths: Vec<f64>,
    /// N
    pub tensions: Vec<f64>,
    /// Command held by the controller (mm).
    pub l_target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettleReport {
    pub iterations: usize,
    /// Infinity norm of the projected energy gradient at return (N·mm).
    pub residual: f64,
    /// Energy after every accepted iterate, starting with the initial point.
    pub energies: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Plant {
    chain: KinematicChain,
    routing: MuscleRouting,
    gains: ControllerGains,
    cfg: SettleConfig,
}

struct Evaluation {
    energy: f64,
    gradient: DVector<f64>,
}

impl Plant {
    pub fn new(chain: KinematicChain, routing: MuscleRouting, gains: ControllerGains, cfg: SettleConfig) -> Result<Self> {
        check_dim("routing joints", chain.n_joints(), routing.n_joints())?;
        check_dim("controller gains", routing.n_muscles(), gains.n_muscles())?;
        gains.validate()?;
        Ok(Self { chain, routing, gains, cfg })
    }

    pub fn chain(&self) -> &KinematicChain {
        &self.chain
    }

    pub fn routing(&self) -> &MuscleRouting {
        &self.routing
    }

    pub fn gains(&self) -> &ControllerGains {
        &self.gains
    }

    pub fn config(&self) -> &SettleConfig {
        &self.cfg
    }

    pub fn n_muscles(&self) -> usize {
        self.routing.n_muscles()
    }

    /// Total potential `E(θ)` (N·mm).
    pub fn energy(&self, theta: &[f64], l_target: &[f64]) -> Result<f64> {
        self.check(theta, l_target)?;
        Ok(self.energy_unchecked(theta, l_target))
    }

    fn check(&self, theta: &[f64], l_target: &[f64]) -> Result<()> {
        self.chain.check_dims(theta)?;
        check_dim("target lengths", self.n_muscles(), l_target.len())?;
        check_finite("target lengths", l_target)
    }

    fn energy_unchecked(&self, theta: &[f64], l_target: &[f64]) -> f64 {
        let lengths = self.routing.muscle_lengths(&self.chain, theta).expect("checked dims");
        let muscles: f64 = lengths
            .iter()
            .zip(l_target)
            .enumerate()
            .map(|(i, (l, t))| {
                let e = l - t;
                let stretch = e.max(0.0);
                self.gains.t_bias[i] * e + 0.5 * self.gains.k_stiff[i] * stretch * stretch
            })
            .sum();
        muscles + self.chain.potential_energy(theta, self.cfg.gravity).expect("checked dims")
    }

    fn evaluate(&self, theta: &[f64], l_target: &[f64]) -> Evaluation {
        let lengths = self.routing.muscle_lengths(&self.chain, theta).expect("checked dims");
        let arms = self.routing.moment_arms_unchecked(&self.chain, theta);
        let tensions = tensions_unchecked(&lengths, l_target, &self.gains);
        let tau_g = self.chain.gravity_torque(theta, self.cfg.gravity).expect("checked dims");
        let gradient = arms.transpose() * DVector::from_vec(tensions) - tau_g;
        Evaluation {
            energy: self.energy_unchecked(theta, l_target),
            gradient,
        }
    }

    /// `∂E/∂θ` (N·mm): the net torque the muscles and gravity fail to balance.
    pub fn energy_gradient(&self, theta: &[f64], l_target: &[f64]) -> Result<Vec<f64>> {
        self.check(theta, l_target)?;
        Ok(self.evaluate(theta, l_target).gradient.as_slice().to_vec())
    }

    /// Plant readings at a given posture under a given command.
    pub fn state_at(&self, theta: &[f64], l_target: &[f64]) -> Result<PlantState> {
        self.check(theta, l_target)?;
        let lengths = self.routing.muscle_lengths(&self.chain, theta)?;
        let tensions = tensions_unchecked(&lengths, l_target, &self.gains);
        Ok(PlantState {
            theta: theta.to_vec(),
            lengths,
            tensions,
            l_target: l_target.to_vec(),
        })
    }

    fn free_mask(&self, theta: &[f64], gradient: &DVector<f64>) -> Vec<bool> {
        const EDGE: f64 = 1e-12;
        self.chain
            .limits()
            .iter()
            .zip(theta)
            .zip(gradient.iter())
            .map(|((&(lo, hi), &q), &g)| !((q <= lo + EDGE && g > 0.0) || (q >= hi - EDGE && g < 0.0)))
            .collect()
    }

    /// Positive definite stand-in for the Hessian of `E` on the free joints:
    /// a central-difference Hessian of the analytic gradient with its
    /// eigenvalues floored. Pinned joints get an identity block.
    fn descent_metric(&self, theta: &[f64], l_target: &[f64], free: &[bool]) -> DMatrix<f64> {
        const STEP: f64 = 1e-5;
        let n = theta.len();
        let mut hessian = DMatrix::<f64>::zeros(n, n);
        let mut probe = theta.to_vec();
        for j in 0..n {
            probe[j] = theta[j] + STEP;
            let plus = self.evaluate(&probe, l_target).gradient;
            probe[j] = theta[j] - STEP;
            let minus = self.evaluate(&probe, l_target).gradient;
            probe[j] = theta[j];
            hessian.set_column(j, &((plus - minus) / (2.0 * STEP)));
        }
        let hessian = (&hessian + hessian.transpose()) * 0.5;
        let mut eig = hessian.symmetric_eigen();
        let floor = (1e-3 * eig.eigenvalues.amax()).max(1.0);
        eig.eigenvalues.apply(|v| *v = v.max(floor));
        let mut metric = eig.recompose();
        for j in (0..n).filter(|&j| !free[j]) {
            metric.row_mut(j).fill(0.0);
            metric.column_mut(j).fill(0.0);
            metric[(j, j)] = 1.0;
        }
        metric
    }

    /// Quasi-static equilibrium for command `l_target`, starting from `start`.
    ///
    /// Projected descent with Armijo backtracking on `E`. The search
    /// direction is the gradient preconditioned by a floored Hessian (a
    /// projected Newton step), with plain gradient descent as the fallback;
    /// the free set excludes joints pinned at a limit by the gradient.
    pub fn settle(&self, start: &[f64], l_target: &[f64]) -> Result<(PlantState, SettleReport)> {
        self.check(start, l_target)?;
        check_finite("start posture", start)?;
        let n = self.chain.n_joints();
        let limits = self.chain.limits();
        let mut theta = start.to_vec();
        self.chain.clamp(&mut theta);
        let mut eval = self.evaluate(&theta, l_target);
        let mut energies = vec![eval.energy];
        let mut iterations = 0;
        loop {
            let free = self.free_mask(&theta, &eval.gradient);
            let pg: DVector<f64> = DVector::from_iterator(n, eval.gradient.iter().zip(&free).map(|(&g, &f)| if f { g } else { 0.0 }));
            let residual = pg.amax();
            if residual < self.cfg.grad_tol {
                let state = self.state_at(&theta, l_target)?;
                return Ok((
                    state,
                    SettleReport {
                        iterations,
                        residual,
                        energies,
                    },
                ));
            }
            if iterations >= self.cfg.max_iter {
                return Err(Error::SettleDiverged { iterations, residual });
            }
            iterations += 1;

            let metric = self.descent_metric(&theta, l_target, &free);
            let scale = metric.diagonal().amax().max(1.0);
            let newton = metric.cholesky().map(|c| -c.solve(&pg)).unwrap_or_else(|| -pg.clone() / scale);
            let directions = [newton, -pg.clone() / scale];
            let mut accepted = None;
            for dir in directions.iter() {
                let slope = eval.gradient.dot(dir);
                if !(slope < 0.0) {
                    continue;
                }
                let mut alpha = 1.0;
                for _ in 0..60 {
                    let mut trial: Vec<f64> = theta.iter().zip(dir.iter()).map(|(q, d)| q + alpha * d).collect();
                    for (q, &(lo, hi)) in trial.iter_mut().zip(&limits) {
                        *q = q.clamp(lo, hi);
                    }
                    let moved: f64 = trial.iter().zip(&theta).zip(eval.gradient.iter()).map(|((t, q), g)| g * (t - q)).sum();
                    let e_trial = self.energy_unchecked(&trial, l_target);
                    if e_trial <= eval.energy + self.cfg.armijo * moved && moved < 0.0 {
                        accepted = Some(trial);
                        break;
                    }
                    alpha *= 0.5;
                }
                if accepted.is_some() {
                    break;
                }
            }
            match accepted {
                Some(next) => {
                    theta = next;
                    eval = self.evaluate(&theta, l_target);
                    energies.push(eval.energy);
                }
                None => {
                    // No representable descent left; accept if close enough.
                    if residual < 2.0 * self.cfg.grad_tol {
                        let state = self.state_at(&theta, l_target)?;
                        return Ok((
                            state,
                            SettleReport {
                                iterations,
                                residual,
                                energies,
                            },
                        ));
                    }
                    return Err(Error::SettleDiverged { iterations, residual });
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorNoise {
    /// mm
    pub sigma_length: f64,
    /// mm, per axis.
    pub sigma_marker_pos: f64,
    /// rad, per rotation-vector component.
    pub sigma_marker_rot: f64,
    pub seed: u64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        Self {
            sigma_length: 0.5,
            sigma_marker_pos: 2.0,
            sigma_marker_rot: 0.017,
            seed: 0,
        }
    }
}

impl SensorNoise {
    pub fn noiseless(seed: u64) -> Self {
        Self {
            sigma_length: 0.0,
            sigma_marker_pos: 0.0,
            sigma_marker_rot: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.sigma_length, self.sigma_marker_pos, self.sigma_marker_rot]
            .iter()
            .all(|s| *s >= 0.0 && s.is_finite())
        {
            Ok(())
        } else {
            Err(Error::Invalid {
                what: "sensor noise",
                reason: "standard deviations must be finite and >= 0".into(),
            })
        }
    }
}

/// Seeded noise streams: muscle lengths and marker observations draw from
/// independent generators.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    cfg: SensorNoise,
    length_rng: ChaCha8Rng,
    marker_rng: ChaCha8Rng,
}

impl NoiseSource {
    pub fn new(cfg: SensorNoise) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            length_rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            marker_rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15),
            cfg,
        })
    }

    pub fn config(&self) -> &SensorNoise {
        &self.cfg
    }

    fn draw(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
        if sigma == 0.0 {
            0.0
        } else {
            Normal::new(0.0, sigma).expect("validated sigma").sample(rng)
        }
    }

    pub fn length_noise(&mut self) -> f64 {
        Self::draw(&mut self.length_rng, self.cfg.sigma_length)
    }

    pub fn marker_position_noise(&mut self) -> f64 {
        Self::draw(&mut self.marker_rng, self.cfg.sigma_marker_pos)
    }

    pub fn marker_rotation_noise(&mut self) -> f64 {
        Self::draw(&mut self.marker_rng, self.cfg.sigma_marker_rot)
    }
}

/// Noisy length reading and exact tension reading.
pub fn measure(state: &PlantState, noise: &mut NoiseSource) -> (Vec<f64>, Vec<f64>) {
    let l_meas = state.lengths.iter().map(|l| l + noise.length_noise()).collect();
    (l_meas, state.tensions.clone())
}

/// True iff the last `window` length vectors exist and every muscle's range
/// over them is strictly below `eps` (mm).
pub fn settled(history: &[Vec<f64>], window: usize, eps: f64) -> bool {
    if window == 0 || history.len() < window {
        return false;
    }
    let recent = &history[history.len() - window..];
    let m = recent[0].len();
    (0..m).all(|i| {
        let (lo, hi) = recent
            .iter()
            .map(|l| l[i])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        hi - lo < eps
    })
}
