//! The learned joint-muscle mapping `l = f(θ)`.
//!
//! A three-layer perceptron (joint angles in rad → hidden layer → relative
//! muscle lengths in mm) with no normalization layers, trained first on grid
//! data from the geometric model and then updated online with anchored
//! minibatches: the new sample, the `(0, 0)` rest anchor, and `N` random
//! postures labelled by the current mapping itself.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, check_finite, Error, Result};
use crate::model::LengthModel;
use crate::par::{self, Execution};
use crate::routing::{Dataset, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Relu,
}

impl Activation {
    pub fn id(self) -> u8 {
        match self {
            Activation::Sigmoid => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Activation::Sigmoid),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation value `a` and input `z`.
    #[inline]
    fn slope(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// MLP weights. Parameters are stored flat as
/// `[W1 (hidden×n, row-major) | b1 (hidden) | W2 (m×hidden, row-major) | b2 (m)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointMuscleMapping {
    n: usize,
    m: usize,
    hidden: usize,
    activation: Activation,
    params: Vec<f64>,
}

pub fn param_count(n: usize, m: usize, hidden: usize) -> usize {
    hidden * n + hidden + m * hidden + m
}

impl JointMuscleMapping {
    /// Glorot-uniform weights, zero biases.
    pub fn new(n: usize, m: usize, hidden: usize, activation: Activation, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(n, m, hidden, activation)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a1 = (6.0 / (n + hidden) as f64).sqrt();
        let a2 = (6.0 / (hidden + m) as f64).sqrt();
        let (w1, _, w2, _) = net.split_mut();
        w1.iter_mut().for_each(|w| *w = rng.random_range(-a1..a1));
        w2.iter_mut().for_each(|w| *w = rng.random_range(-a2..a2));
        Ok(net)
    }

    pub fn zeros(n: usize, m: usize, hidden: usize, activation: Activation) -> Result<Self> {
        if n == 0 || m == 0 || hidden == 0 {
            return Err(Error::Invalid {
                what: "mapping dimensions",
                reason: format!("n={n}, m={m}, hidden={hidden} must all be >= 1"),
            });
        }
        Ok(Self {
            n,
            m,
            hidden,
            activation,
            params: vec![0.0; param_count(n, m, hidden)],
        })
    }

    pub fn from_params(n: usize, m: usize, hidden: usize, activation: Activation, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(n, m, hidden, activation)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape(format!(
                "{} parameters for dims ({n}, {hidden}, {m}); expected {}",
                params.len(),
                net.params.len()
            )));
        }
        check_finite("mapping weights", &params)?;
        net.params = params;
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.n
    }

    pub fn output_dim(&self) -> usize {
        self.m
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_norm(&self) -> f64 {
        self.params.iter().map(|p| p * p).sum::<f64>().sqrt()
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let (w1, rest) = self.params.split_at(self.hidden * self.n);
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, b2) = rest.split_at(self.m * self.hidden);
        (w1, b1, w2, b2)
    }

    fn split_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64], &mut [f64]) {
        let (w1, rest) = self.params.split_at_mut(self.hidden * self.n);
        let (b1, rest) = rest.split_at_mut(self.hidden);
        let (w2, b2) = rest.split_at_mut(self.m * self.hidden);
        (w1, b1, w2, b2)
    }

    pub fn output_bias(&self) -> &[f64] {
        self.split().3
    }

    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        self.split_mut().3
    }

    pub fn output_weights_mut(&mut self) -> &mut [f64] {
        self.split_mut().2
    }

    /// Hidden pre-activations and activations for one input.
    fn hidden_layer(&self, theta: &[f64], z: &mut [f64], a: &mut [f64]) {
        let (w1, b1, _, _) = self.split();
        for k in 0..self.hidden {
            let row = &w1[k * self.n..(k + 1) * self.n];
            let s = b1[k] + row.iter().zip(theta).map(|(w, x)| w * x).sum::<f64>();
            z[k] = s;
            a[k] = self.activation.apply(s);
        }
    }

    fn output_layer(&self, a: &[f64], out: &mut [f64]) {
        let (_, _, w2, b2) = self.split();
        for i in 0..self.m {
            let row = &w2[i * self.hidden..(i + 1) * self.hidden];
            out[i] = b2[i] + row.iter().zip(a).map(|(w, h)| w * h).sum::<f64>();
        }
    }

    fn forward(&self, theta: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.hidden];
        let mut a = vec![0.0; self.hidden];
        let mut out = vec![0.0; self.m];
        self.hidden_layer(theta, &mut z, &mut a);
        self.output_layer(&a, &mut out);
        out
    }

    /// Relative muscle lengths (mm) at joint angles `theta` (rad).
    pub fn evaluate(&self, theta: &[f64]) -> Result<Vec<f64>> {
        check_dim("joint angles", self.n, theta.len())?;
        let out = self.forward(theta);
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::NonFinite("mapping weights"))
        }
    }

    /// Exact chain-rule derivative `df/dθ` (m×n, mm/rad).
    pub fn input_jacobian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        check_dim("joint angles", self.n, theta.len())?;
        let mut z = vec![0.0; self.hidden];
        let mut a = vec![0.0; self.hidden];
        self.hidden_layer(theta, &mut z, &mut a);
        let (w1, _, w2, _) = self.split();
        let slope: Vec<f64> = z.iter().zip(&a).map(|(&z, &a)| self.activation.slope(z, a)).collect();
        let mut jac = DMatrix::zeros(self.m, self.n);
        for i in 0..self.m {
            for k in 0..self.hidden {
                let c = w2[i * self.hidden + k] * slope[k];
                if c == 0.0 {
                    continue;
                }
                for j in 0..self.n {
                    jac[(i, j)] += c * w1[k * self.n + j];
                }
            }
        }
        Ok(jac)
    }

    /// Mean squared error over all outputs of the batch; `grad` receives
    /// `d(loss)/d(params)` (overwritten).
    pub fn loss_and_gradient(&self, batch: &[Sample], grad: &mut [f64]) -> f64 {
        assert_eq!(grad.len(), self.params.len());
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (n, m, h) = (self.n, self.m, self.hidden);
        let scale = 1.0 / (batch.len() * m) as f64;
        let (_, _, w2, _) = self.split();
        let mut z = vec![0.0; h];
        let mut a = vec![0.0; h];
        let mut out = vec![0.0; m];
        let mut dout = vec![0.0; m];
        let mut loss = 0.0;
        let (gw1, rest) = grad.split_at_mut(h * n);
        let (gb1, rest) = rest.split_at_mut(h);
        let (gw2, gb2) = rest.split_at_mut(m * h);
        for sample in batch {
            self.hidden_layer(&sample.theta, &mut z, &mut a);
            self.output_layer(&a, &mut out);
            for i in 0..m {
                let e = out[i] - sample.lengths[i];
                loss += e * e * scale;
                dout[i] = 2.0 * e * scale;
                gb2[i] += dout[i];
                let row = &mut gw2[i * h..(i + 1) * h];
                for (g, hk) in row.iter_mut().zip(&a) {
                    *g += dout[i] * hk;
                }
            }
            for k in 0..h {
                let mut dh = 0.0;
                for i in 0..m {
                    dh += w2[i * h + k] * dout[i];
                }
                let dz = dh * self.activation.slope(z[k], a[k]);
                if dz == 0.0 {
                    continue;
                }
                gb1[k] += dz;
                let row = &mut gw1[k * n..(k + 1) * n];
                for (g, x) in row.iter_mut().zip(&sample.theta) {
                    *g += dz * x;
                }
            }
        }
        loss
    }

    /// Batch loss without the gradient.
    pub fn loss(&self, batch: &[Sample]) -> f64 {
        let scale = 1.0 / (batch.len() * self.m) as f64;
        batch
            .iter()
            .map(|s| self.forward(&s.theta).iter().zip(&s.lengths).map(|(o, y)| (o - y) * (o - y)).sum::<f64>())
            .sum::<f64>()
            * scale
    }

    /// RMSE over every output of every sample (mm).
    pub fn rmse(&self, samples: &[Sample], exec: Execution) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let per_sample = par::map(exec, samples, |s| {
            self.forward(&s.theta).iter().zip(&s.lengths).map(|(o, y)| (o - y) * (o - y)).sum::<f64>()
        });
        (per_sample.iter().sum::<f64>() / (samples.len() * self.m) as f64).sqrt()
    }
}

impl LengthModel for JointMuscleMapping {
    fn n_joints(&self) -> usize {
        self.n
    }
    fn n_muscles(&self) -> usize {
        self.m
    }
    fn lengths(&self, theta: &[f64]) -> Vec<f64> {
        assert_eq!(theta.len(), self.n, "joint-angle dimension");
        self.forward(theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    cfg: AdamConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, n_params: usize) -> Self {
        Self {
            cfg,
            first: vec![0.0; n_params],
            second: vec![0.0; n_params],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.cfg;
        self.steps += 1;
        let c1 = 1.0 - beta1.powi(self.steps as i32);
        let c2 = 1.0 - beta2.powi(self.steps as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(self.first.iter_mut()).zip(self.second.iter_mut()) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + epsilon);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden_dim: usize,
    pub activation: Activation,
    pub minibatch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub validation_fraction: f64,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 256,
            activation: Activation::Sigmoid,
            minibatch_size: 5,
            epochs: 20,
            adam: AdamConfig::default(),
            validation_fraction: 0.2,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::Invalid {
                what: "train config",
                reason: reason.into(),
            })
        };
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation fraction must be in (0, 1)");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.minibatch_size == 0 || self.hidden_dim == 0 {
            return bad("minibatch size and hidden dim must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// RMSE of the pre-step minibatch losses over the epoch (mm).
    pub train_rmse: f64,
    pub validation_rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub train_size: usize,
    pub validation_size: usize,
}

impl TrainReport {
    pub fn final_validation_rmse(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.validation_rmse)
    }
}

/// Fit a fresh mapping to `dataset` with minibatch Adam. A random
/// `validation_fraction` of the rows is held out and evaluated after every
/// epoch.
pub fn train_initial(dataset: &Dataset, cfg: &TrainConfig) -> Result<(JointMuscleMapping, TrainReport)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for s in &dataset.samples {
        check_dim("dataset joint angles", dataset.n_joints, s.theta.len())?;
        check_dim("dataset muscle lengths", dataset.n_muscles, s.lengths.len())?;
        check_finite("dataset", &s.theta)?;
        check_finite("dataset", &s.lengths)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = JointMuscleMapping::new(dataset.n_joints, dataset.n_muscles, cfg.hidden_dim, cfg.activation, rng.random())?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((dataset.len() as f64 * cfg.validation_fraction).round() as usize).min(dataset.len() - 1);
    let validation: Vec<Sample> = order[..n_val].iter().map(|&i| dataset.samples[i].clone()).collect();
    let mut train: Vec<Sample> = order[n_val..].iter().map(|&i| dataset.samples[i].clone()).collect();
    let held_out: &[Sample] = if validation.is_empty() { &train } else { &validation };
    let held_out = held_out.to_vec();

    let mut adam = Adam::new(cfg.adam, net.params.len());
    let mut grad = vec![0.0; net.params.len()];
    let mut report = TrainReport {
        epochs: Vec::with_capacity(cfg.epochs),
        train_size: train.len(),
        validation_size: validation.len(),
    };
    for epoch in 0..cfg.epochs {
        train.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for batch in train.chunks(cfg.minibatch_size) {
            let loss = net.loss_and_gradient(batch, &mut grad);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            adam.step(&mut net.params, &grad);
            loss_sum += loss;
            batches += 1;
        }
        let validation_rmse = net.rmse(&held_out, cfg.execution);
        if !validation_rmse.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        report.epochs.push(EpochStats {
            epoch,
            train_rmse: (loss_sum / batches as f64).sqrt(),
            validation_rmse,
        });
    }
    Ok((net, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineUpdateConfig {
    /// Number `N` of self-labelled random anchors per batch.
    pub anchors: usize,
    pub steps_per_event: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for OnlineUpdateConfig {
    fn default() -> Self {
        Self {
            anchors: 8,
            steps_per_event: 5,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub loss_before: f64,
    pub loss_after: f64,
}

/// Exclusive writer for online updates. Keeps the Adam moments across
/// events and the random-posture generator for anchors.
#[derive(Debug, Clone)]
pub struct OnlineTrainer {
    cfg: OnlineUpdateConfig,
    limits: Vec<(f64, f64)>,
    adam: Adam,
    rng: ChaCha8Rng,
    grad: Vec<f64>,
}

impl OnlineTrainer {
    /// `limits` bound the random anchor postures.
    pub fn new(cfg: OnlineUpdateConfig, limits: Vec<(f64, f64)>, mapping: &JointMuscleMapping) -> Result<Self> {
        check_dim("joint limits", mapping.input_dim(), limits.len())?;
        let n_params = mapping.params().len();
        Ok(Self {
            adam: Adam::new(cfg.adam, n_params),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            grad: vec![0.0; n_params],
            cfg,
            limits,
        })
    }

    pub fn config(&self) -> &OnlineUpdateConfig {
        &self.cfg
    }

    pub fn adam_steps(&self) -> u64 {
        self.adam.steps()
    }

    /// `{(θ_update, l_update), (0, 0), (θ_rand, f(θ_rand)) × N}`.
    pub fn build_update_batch(&mut self, mapping: &JointMuscleMapping, theta_update: &[f64], l_update: &[f64]) -> Result<Vec<Sample>> {
        check_dim("update joint angles", mapping.input_dim(), theta_update.len())?;
        check_dim("update muscle lengths", mapping.output_dim(), l_update.len())?;
        check_finite("update sample", theta_update)?;
        check_finite("update sample", l_update)?;
        let mut batch = Vec::with_capacity(2 + self.cfg.anchors);
        batch.push(Sample {
            theta: theta_update.to_vec(),
            lengths: l_update.to_vec(),
        });
        batch.push(Sample {
            theta: vec![0.0; mapping.input_dim()],
            lengths: vec![0.0; mapping.output_dim()],
        });
        for _ in 0..self.cfg.anchors {
            let theta: Vec<f64> = self.limits.iter().map(|&(lo, hi)| self.rng.random_range(lo..=hi)).collect();
            let lengths = mapping.evaluate(&theta)?;
            batch.push(Sample { theta, lengths });
        }
        Ok(batch)
    }

    /// `steps_per_event` Adam steps on the batch MSE. On a non-finite
    /// gradient the weights and optimizer state are restored.
    pub fn apply_online_update(&mut self, mapping: &mut JointMuscleMapping, batch: &[Sample]) -> Result<UpdateStats> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let saved_params = mapping.params.clone();
        let saved_adam = self.adam.clone();
        let mut loss_before = f64::NAN;
        for step in 0..self.cfg.steps_per_event {
            let loss = mapping.loss_and_gradient(batch, &mut self.grad);
            if step == 0 {
                loss_before = loss;
            }
            if !loss.is_finite() || !self.grad.iter().all(|g| g.is_finite()) {
                mapping.params = saved_params;
                self.adam = saved_adam;
                return Err(Error::NonFinite("online-update gradient"));
            }
            self.adam.step(&mut mapping.params, &self.grad);
        }
        if !mapping.params.iter().all(|p| p.is_finite()) {
            mapping.params = saved_params;
            self.adam = saved_adam;
            return Err(Error::NonFinite("online-update weights"));
        }
        Ok(UpdateStats {
            loss_before,
            loss_after: mapping.loss(batch),
        })
    }

    /// Build the anchored batch for one sample and apply it.
    pub fn update(&mut self, mapping: &mut JointMuscleMapping, theta_update: &[f64], l_update: &[f64]) -> Result<UpdateStats> {
        let batch = self.build_update_batch(mapping, theta_update, l_update)?;
        self.apply_online_update(mapping, &batch)
    }
}

pub const MODEL_MAGIC: &[u8; 4] = b"JMM1";
pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const UNIT_RAD: u8 = 0;
pub const UNIT_MM: u8 = 0;

impl JointMuscleMapping {
    /// Layout (little-endian): magic `JMM1`, `u32` version, `u64` n, m,
    /// hidden, `u8` activation id, `u8` input unit (0 = rad), `u8` output
    /// unit (0 = mm), `u8` reserved, `u64` parameter count, then the
    /// parameters as `f64`.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MODEL_MAGIC)?;
        out.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
        for d in [self.n, self.m, self.hidden] {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        out.write_all(&[self.activation.id(), UNIT_RAD, UNIT_MM, 0])?;
        out.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for p in &self.params {
            out.write_all(&p.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        fn exact<R: Read, const N: usize>(input: &mut R, what: &str) -> Result<[u8; N]> {
            let mut buf = [0u8; N];
            input.read_exact(&mut buf).map_err(|e| match e.kind() {
                std::io::ErrorKind::UnexpectedEof => Error::Corrupt(format!("truncated while reading {what}")),
                _ => Error::Io(e),
            })?;
            Ok(buf)
        }
        let magic: [u8; 4] = exact(&mut input, "magic")?;
        if &magic != MODEL_MAGIC {
            return Err(Error::Corrupt("bad magic".into()));
        }
        let version = u32::from_le_bytes(exact(&mut input, "version")?);
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::Version(version));
        }
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            *d = u64::from_le_bytes(exact(&mut input, "dimensions")?) as usize;
        }
        let [n, m, hidden] = dims;
        let tags: [u8; 4] = exact(&mut input, "tags")?;
        let activation = Activation::from_id(tags[0]).ok_or_else(|| Error::Corrupt(format!("unknown activation id {}", tags[0])))?;
        if tags[1] != UNIT_RAD || tags[2] != UNIT_MM {
            return Err(Error::Corrupt(format!("unsupported unit tags ({}, {})", tags[1], tags[2])));
        }
        let count = u64::from_le_bytes(exact(&mut input, "parameter count")?) as usize;
        if n == 0 || m == 0 || hidden == 0 || count != param_count(n, m, hidden) {
            return Err(Error::Shape(format!(
                "header declares ({n}, {hidden}, {m}) but payload holds {count} parameters"
            )));
        }
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            params.push(f64::from_le_bytes(exact(&mut input, "parameters")?));
        }
        let mut trailing = [0u8; 1];
        if input.read(&mut trailing)? != 0 {
            return Err(Error::Corrupt("trailing bytes after parameters".into()));
        }
        Self::from_params(n, m, hidden, activation, params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(n: usize, m: usize, count: usize, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| Sample {
                theta: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                lengths: (0..m).map(|_| rng.random_range(-5.0..5.0)).collect(),
            })
            .collect()
    }

    #[test]
    fn zeroed_output_layer_returns_bias() {
        let mut net = JointMuscleMapping::new(3, 2, 7, Activation::Sigmoid, 1).unwrap();
        net.output_weights_mut().iter_mut().for_each(|w| *w = 0.0);
        net.output_bias_mut().copy_from_slice(&[1.5, -2.0]);
        for theta in [[0.0, 0.0, 0.0], [1.0, -2.0, 3.0]] {
            assert_eq!(net.evaluate(&theta).unwrap(), vec![1.5, -2.0]);
        }
        let jac = net.input_jacobian(&[0.3, 0.2, 0.1]).unwrap();
        assert!(jac.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backprop_matches_finite_differences() {
        for activation in [Activation::Sigmoid, Activation::Relu] {
            let net = JointMuscleMapping::new(2, 2, 3, activation, 11).unwrap();
            let batch = samples(2, 2, 4, 3);
            let mut grad = vec![0.0; net.params().len()];
            net.loss_and_gradient(&batch, &mut grad);
            let h = 1e-5;
            for p in 0..grad.len() {
                let mut plus = net.clone();
                plus.params_mut()[p] += h;
                let mut minus = net.clone();
                minus.params_mut()[p] -= h;
                let fd = (plus.loss(&batch) - minus.loss(&batch)) / (2.0 * h);
                let err = (fd - grad[p]).abs() / fd.abs().max(grad[p].abs()).max(1e-8);
                assert!(err < 1e-4, "{activation:?} param {p}: fd {fd} vs bp {}", grad[p]);
            }
        }
    }

    #[test]
    fn input_jacobian_matches_finite_differences() {
        let net = JointMuscleMapping::new(3, 4, 16, Activation::Sigmoid, 5).unwrap();
        let theta = [0.2, -0.4, 0.9];
        let jac = net.input_jacobian(&theta).unwrap();
        let h = 1e-6;
        for j in 0..3 {
            let mut p = theta;
            p[j] += h;
            let mut q = theta;
            q[j] -= h;
            let (fp, fq) = (net.evaluate(&p).unwrap(), net.evaluate(&q).unwrap());
            for i in 0..4 {
                let fd = (fp[i] - fq[i]) / (2.0 * h);
                assert!((fd - jac[(i, j)]).abs() <= 1e-5 * fd.abs().max(1e-3), "({i},{j})");
            }
        }
    }

    #[test]
    fn dimension_and_shape_errors() {
        let net = JointMuscleMapping::new(2, 2, 3, Activation::Sigmoid, 0).unwrap();
        assert!(matches!(net.evaluate(&[0.0]), Err(Error::Dimension { .. })));
        assert!(JointMuscleMapping::zeros(2, 2, 0, Activation::Sigmoid).is_err());
        assert!(matches!(
            JointMuscleMapping::from_params(2, 2, 3, Activation::Sigmoid, vec![0.0; 3]),
            Err(Error::Shape(_))
        ));
        assert!(JointMuscleMapping::from_params(1, 1, 1, Activation::Sigmoid, vec![f64::NAN, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn train_rejects_bad_inputs() {
        let empty = Dataset {
            n_joints: 1,
            n_muscles: 1,
            samples: vec![],
        };
        assert!(matches!(train_initial(&empty, &TrainConfig::default()), Err(Error::EmptyDataset)));
        let cfg = TrainConfig {
            validation_fraction: 1.0,
            ..TrainConfig::default()
        };
        let one = Dataset {
            n_joints: 1,
            n_muscles: 1,
            samples: samples(1, 1, 3, 0),
        };
        assert!(train_initial(&one, &cfg).is_err());
    }

    #[test]
    fn diverging_training_reports_epoch() {
        let data = Dataset {
            n_joints: 1,
            n_muscles: 1,
            samples: vec![
                Sample {
                    theta: vec![0.0],
                    lengths: vec![f64::MAX],
                },
                Sample {
                    theta: vec![1.0],
                    lengths: vec![-f64::MAX],
                },
            ],
        };
        let cfg = TrainConfig {
            hidden_dim: 4,
            ..TrainConfig::default()
        };
        assert!(matches!(train_initial(&data, &cfg), Err(Error::Diverged { epoch: 0 })));
    }

    #[test]
    fn anchored_batch_layout() {
        let net = JointMuscleMapping::new(2, 3, 8, Activation::Sigmoid, 2).unwrap();
        let limits = vec![(-1.0, 1.0), (0.0, 2.0)];
        for anchors in [0usize, 8] {
            let cfg = OnlineUpdateConfig {
                anchors,
                ..OnlineUpdateConfig::default()
            };
            let mut trainer = OnlineTrainer::new(cfg, limits.clone(), &net).unwrap();
            let batch = trainer.build_update_batch(&net, &[0.5, 1.0], &[1.0, 2.0, 3.0]).unwrap();
            assert_eq!(batch.len(), 2 + anchors);
            assert_eq!(batch[0].theta, vec![0.5, 1.0]);
            assert_eq!(batch[0].lengths, vec![1.0, 2.0, 3.0]);
            assert_eq!(batch[1].theta, vec![0.0, 0.0]);
            assert_eq!(batch[1].lengths, vec![0.0, 0.0, 0.0]);
            for s in &batch[2..] {
                assert!(s.theta[0] >= -1.0 && s.theta[0] <= 1.0 && s.theta[1] >= 0.0 && s.theta[1] <= 2.0);
                assert_eq!(s.lengths, net.evaluate(&s.theta).unwrap());
            }
        }
    }

    #[test]
    fn non_finite_update_restores_weights() {
        let mut net = JointMuscleMapping::new(1, 1, 4, Activation::Sigmoid, 2).unwrap();
        let before = net.clone();
        let mut trainer = OnlineTrainer::new(OnlineUpdateConfig::default(), vec![(-1.0, 1.0)], &net).unwrap();
        let batch = vec![Sample {
            theta: vec![0.1],
            lengths: vec![f64::INFINITY],
        }];
        assert!(trainer.apply_online_update(&mut net, &batch).is_err());
        assert_eq!(net, before);
        assert_eq!(trainer.adam_steps(), 0);
    }

    #[test]
    fn model_file_errors() {
        let net = JointMuscleMapping::new(2, 3, 4, Activation::Relu, 9).unwrap();
        let mut bytes = Vec::new();
        net.write_to(&mut bytes).unwrap();
        assert_eq!(JointMuscleMapping::read_from(&bytes[..]).unwrap(), net);

        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(JointMuscleMapping::read_from(truncated), Err(Error::Corrupt(_))));

        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(matches!(JointMuscleMapping::read_from(&wrong_version[..]), Err(Error::Version(9))));

        // Declare hidden = 5 while the payload still holds hidden = 4 weights.
        let mut wrong_dims = bytes.clone();
        wrong_dims[24] = 5;
        assert!(matches!(JointMuscleMapping::read_from(&wrong_dims[..]), Err(Error::Shape(_))));

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(JointMuscleMapping::read_from(&bad_magic[..]), Err(Error::Corrupt(_))));
    }
}
