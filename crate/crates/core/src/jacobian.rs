//! Muscle Jacobians `G = dl/dθ` of a length model.
//!
//! Differentiating the network directly inherits the ripple of its
//! activations. [`smoothed_jacobian`] instead samples each joint on a small
//! symmetric stencil, fits a quadratic by least squares and differentiates
//! the fit at the current angle.

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::mapping::JointMuscleMapping;
use crate::model::LengthModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianConfig {
    /// Inner stencil offset (rad).
    pub d1: f64,
    /// Outer stencil offset (rad).
    pub d2: f64,
    /// Odd, ≥ 3. With 5 the stencil is `{θ±d2, θ±d1, θ}`; 3 uses `{θ±d1, θ}`;
    /// larger counts continue outward in steps of `d2 - d1`.
    pub samples_per_joint: usize,
}

impl Default for JacobianConfig {
    fn default() -> Self {
        Self {
            d1: 10f64.to_radians(),
            d2: 20f64.to_radians(),
            samples_per_joint: 5,
        }
    }
}

impl JacobianConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.d1 && self.d1 < self.d2) {
            return Err(Error::Invalid {
                what: "jacobian config",
                reason: format!("need 0 < d1 < d2, got d1={} d2={}", self.d1, self.d2),
            });
        }
        if self.samples_per_joint < 3 || self.samples_per_joint % 2 == 0 {
            return Err(Error::Invalid {
                what: "jacobian config",
                reason: format!("samples per joint must be odd and >= 3, got {}", self.samples_per_joint),
            });
        }
        Ok(())
    }

    /// Stencil offsets relative to the center, ascending.
    pub fn offsets(&self) -> Vec<f64> {
        let half = self.samples_per_joint / 2;
        let mut positive = Vec::with_capacity(half);
        for k in 0..half {
            positive.push(match k {
                0 => self.d1,
                _ => self.d2 + (k as f64 - 1.0) * (self.d2 - self.d1),
            });
        }
        let mut out: Vec<f64> = positive.iter().rev().map(|d| -d).collect();
        out.push(0.0);
        out.extend(positive);
        out
    }
}

/// Abscissae for joint value `center` within `[lo, hi]`: the stencil is
/// shifted inward when it would cross a limit, and compressed when the range
/// is narrower than the stencil.
pub fn stencil(center: f64, limits: (f64, f64), offsets: &[f64]) -> Vec<f64> {
    let (lo, hi) = limits;
    let reach = offsets.last().copied().unwrap_or(0.0);
    let width = hi - lo;
    if 2.0 * reach > width {
        let scale = width / (2.0 * reach);
        let mid = 0.5 * (lo + hi);
        return offsets.iter().map(|d| mid + d * scale).collect();
    }
    let mut c = center;
    if c - reach < lo {
        c = lo + reach;
    }
    if c + reach > hi {
        c = hi - reach;
    }
    offsets.iter().map(|d| c + d).collect()
}

/// Least-squares quadratic through `(x, y)`; returns the slope at `at`.
/// Abscissae are centered on their mean before forming the normal equations.
pub fn quadratic_slope(x: &[f64], y: &[f64], at: f64) -> Result<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let mut s = [0.0f64; 5];
    let mut r = Vector3::zeros();
    for (&xi, &yi) in x.iter().zip(y) {
        let u = xi - mean;
        let mut p = 1.0;
        for sk in s.iter_mut() {
            *sk += p;
            p *= u;
        }
        r += Vector3::new(u * u * yi, u * yi, yi);
    }
    let normal = Matrix3::new(s[4], s[3], s[2], s[3], s[2], s[1], s[2], s[1], s[0]);
    let coef = normal.lu().solve(&r).ok_or_else(|| Error::Invalid {
        what: "quadratic fit",
        reason: "singular normal matrix (need 3 distinct abscissae)".into(),
    })?;
    Ok(2.0 * coef[0] * (at - mean) + coef[1])
}

/// Smoothed muscle Jacobian (m×n, mm/rad) of `model` at `theta`.
pub fn smoothed_jacobian<M: LengthModel + ?Sized>(model: &M, theta: &[f64], limits: &[(f64, f64)], cfg: &JacobianConfig) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let (n, m) = (model.n_joints(), model.n_muscles());
    check_dim("joint angles", n, theta.len())?;
    check_dim("joint limits", n, limits.len())?;
    check_finite("joint angles", theta)?;
    let offsets = cfg.offsets();
    let mut g = DMatrix::zeros(m, n);
    let mut probe = theta.to_vec();
    let mut ys = vec![vec![0.0; offsets.len()]; m];
    for j in 0..n {
        let xs = stencil(theta[j], limits[j], &offsets);
        for (k, &x) in xs.iter().enumerate() {
            probe[j] = x;
            let l = model.lengths(&probe);
            check_finite("jacobian samples", &l)?;
            for i in 0..m {
                ys[i][k] = l[i];
            }
        }
        probe[j] = theta[j];
        for i in 0..m {
            g[(i, j)] = quadratic_slope(&xs, &ys[i], theta[j])?;
        }
    }
    Ok(g)
}

/// Exact derivative of the network (the rippled baseline).
pub fn analytic_jacobian(mapping: &JointMuscleMapping, theta: &[f64]) -> Result<DMatrix<f64>> {
    mapping.input_jacobian(theta)
}

/// Sum of absolute increments along a sampled curve.
pub fn total_variation(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}
