//! Joint-angle estimation from muscle lengths with an extended Kalman filter.
//!
//! Prediction integrates the measured length increment through the damped
//! pseudo-inverse of the smoothed muscle Jacobian; correction uses the length
//! model itself as the observation function.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::jacobian::{smoothed_jacobian, JacobianConfig};
use crate::model::LengthModel;

#[derive(Debug, Clone, PartialEq)]
pub struct EkfConfig {
    /// Process noise variance per joint per step (rad²).
    pub process_var: f64,
    /// Length measurement variance (mm²).
    pub measurement_var: f64,
    /// Initial covariance (rad²).
    pub initial_var: f64,
    /// Pseudo-inverse damping relative to the largest singular value.
    pub damping: f64,
    pub jacobian: JacobianConfig,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            process_var: 0.5f64.to_radians().powi(2),
            measurement_var: 0.5 * 0.5,
            initial_var: 5f64.to_radians().powi(2),
            damping: 0.1,
            jacobian: JacobianConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EkfState {
    pub theta: DVector<f64>,
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    /// `l_meas − f(θ_pred)` (mm).
    pub innovation: DVector<f64>,
    /// True when the innovation covariance needed diagonal jitter.
    pub jittered: bool,
}

const JITTER: f64 = 1e-9;

/// Damped Moore-Penrose pseudo-inverse, `V diag(σ / (σ² + λ²)) Uᵀ` with
/// `λ = damping · σ_max`.
pub fn damped_pseudo_inverse(g: &DMatrix<f64>, damping: f64) -> DMatrix<f64> {
    let svd = g.clone().svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let smax = svd.singular_values.max();
    let lambda2 = (damping * smax).powi(2);
    let inv: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|&s| if s + lambda2 > 0.0 { s / (s * s + lambda2) } else { 0.0 })
        .collect();
    v_t.transpose() * DMatrix::from_diagonal(&DVector::from_vec(inv)) * u.transpose()
}

#[derive(Debug, Clone)]
pub struct StateEstimator {
    state: EkfState,
    cfg: EkfConfig,
    limits: Vec<(f64, f64)>,
}

impl StateEstimator {
    pub fn new(theta0: &[f64], n_muscles: usize, limits: Vec<(f64, f64)>, cfg: EkfConfig) -> Result<Self> {
        let n = theta0.len();
        check_dim("joint limits", n, limits.len())?;
        check_finite("initial joint angles", theta0)?;
        cfg.jacobian.validate()?;
        if !(cfg.process_var >= 0.0 && cfg.measurement_var > 0.0 && cfg.initial_var >= 0.0) {
            return Err(Error::Invalid {
                what: "ekf config",
                reason: "variances must be non-negative (measurement variance positive)".into(),
            });
        }
        let state = EkfState {
            theta: DVector::from_column_slice(theta0),
            p: DMatrix::identity(n, n) * cfg.initial_var,
            q: DMatrix::identity(n, n) * cfg.process_var,
            r: DMatrix::identity(n_muscles, n_muscles) * cfg.measurement_var,
        };
        Ok(Self { state, cfg, limits })
    }

    pub fn state(&self) -> &EkfState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut EkfState {
        &mut self.state
    }

    pub fn theta(&self) -> Vec<f64> {
        self.state.theta.as_slice().to_vec()
    }

    fn clamp(&mut self) {
        for (q, &(lo, hi)) in self.state.theta.iter_mut().zip(&self.limits) {
            *q = q.clamp(lo, hi);
        }
    }

    fn check_model<M: LengthModel + ?Sized>(&self, model: &M) -> Result<()> {
        check_dim("model joints", self.state.theta.len(), model.n_joints())?;
        check_dim("model muscles", self.state.r.nrows(), model.n_muscles())
    }

    /// `θ ← θ + G⁺ δl`, `P ← P + Q`.
    pub fn predict<M: LengthModel + ?Sized>(&mut self, delta_l: &[f64], model: &M) -> Result<()> {
        self.check_model(model)?;
        check_dim("length increment", model.n_muscles(), delta_l.len())?;
        check_finite("length increment", delta_l)?;
        if delta_l.iter().any(|&d| d != 0.0) {
            let g = smoothed_jacobian(model, self.state.theta.as_slice(), &self.limits, &self.cfg.jacobian)?;
            let step = damped_pseudo_inverse(&g, self.cfg.damping) * DVector::from_column_slice(delta_l);
            self.state.theta += step;
            self.clamp();
        }
        self.state.p += &self.state.q;
        symmetrize(&mut self.state.p);
        Ok(())
    }

    /// Standard EKF update with observation `l = f(θ)` and `H = G(θ_pred)`;
    /// Joseph-form covariance update followed by symmetrization.
    pub fn correct<M: LengthModel + ?Sized>(&mut self, l_meas: &[f64], model: &M) -> Result<Correction> {
        self.check_model(model)?;
        check_dim("measured lengths", model.n_muscles(), l_meas.len())?;
        check_finite("measured lengths", l_meas)?;
        let theta = self.state.theta.as_slice();
        let h = smoothed_jacobian(model, theta, &self.limits, &self.cfg.jacobian)?;
        let predicted = model.lengths(theta);
        check_finite("predicted lengths", &predicted)?;
        let innovation = DVector::from_column_slice(l_meas) - DVector::from_vec(predicted);
        let p = &self.state.p;
        let s = &h * p * h.transpose() + &self.state.r;
        let mut jittered = false;
        let s_inv = match s.clone().cholesky() {
            Some(c) => c.inverse(),
            None => {
                jittered = true;
                let m = s.nrows();
                let s = s + DMatrix::identity(m, m) * JITTER;
                match s.clone().cholesky() {
                    Some(c) => c.inverse(),
                    None => s.try_inverse().ok_or(Error::NonFinite("innovation covariance"))?,
                }
            }
        };
        let gain = p * h.transpose() * s_inv;
        let n = self.state.theta.len();
        let ikh = DMatrix::identity(n, n) - &gain * &h;
        let p_new = &ikh * p * ikh.transpose() + &gain * &self.state.r * gain.transpose();
        self.state.theta += &gain * &innovation;
        self.state.p = p_new;
        symmetrize(&mut self.state.p);
        self.clamp();
        check_finite("ekf state", self.state.theta.as_slice())?;
        check_finite("ekf covariance", self.state.p.as_slice())?;
        Ok(Correction { innovation, jittered })
    }
}

fn symmetrize(p: &mut DMatrix<f64>) {
    let t = p.transpose();
    *p = (&*p + t) * 0.5;
}

/// Filter a trace of measured lengths starting from `theta0`: the first
/// sample is a correction only, later samples alternate predict (with the
/// measured increment) and correct. Returns the estimate after every sample.
pub fn run_filter<M: LengthModel + ?Sized>(
    model: &M,
    limits: &[(f64, f64)],
    cfg: &EkfConfig,
    trace: &[Vec<f64>],
    theta0: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if trace.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_dim("initial joint angles", model.n_joints(), theta0.len())?;
    let mut ekf = StateEstimator::new(theta0, model.n_muscles(), limits.to_vec(), cfg.clone())?;
    let mut out = Vec::with_capacity(trace.len());
    for (k, l) in trace.iter().enumerate() {
        if k > 0 {
            let delta: Vec<f64> = l.iter().zip(&trace[k - 1]).map(|(a, b)| a - b).collect();
            ekf.predict(&delta, model)?;
        }
        ekf.correct(l, model)?;
        out.push(ekf.theta());
    }
    Ok(out)
}
