//! Depth-to-velocity regression network with a physics penalty in the loss.
//!
//! Architecture: `1 -> 64 -> 128 -> 128 -> 1`; each hidden layer is
//! affine, batch norm, then ReLU. The input is `depth / 6`. The raw output
//! `z` maps to velocity through `v = min(0.5 + softplus(16 z - 0.5), 20)`.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fit::TrainingSample;

pub const HIDDEN: [usize; 3] = [64, 128, 128];
pub const DEPTH_SCALE: f64 = 6.0;
pub const VELOCITY_SCALE: f64 = 16.0;
pub const V_MIN: f64 = 0.5;
pub const V_MAX: f64 = 20.0;
pub const BN_EPSILON: f64 = 1e-10;
pub const BN_MOMENTUM: f64 = 0.9;
pub const MIN_TRAINING_SAMPLES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

/// Affine map `W x + b`, `weights` row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub norm: Option<BatchNorm>,
}

/// Network parameters.
///
/// `layers` runs input to output: three hidden layers carrying batch-norm
/// state, then the bare output layer. The flat parameter order used by the
/// optimizer and by [`MlpParams::flatten`] is, per layer, weights, bias,
/// then gamma and beta when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics.
    Train,
    /// Running statistics.
    Infer,
}

impl MlpParams {
    /// He-normal weights, zero biases, unit gamma, zero beta.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![1];
        sizes.extend(HIDDEN);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (inputs, outputs) = (w[0], w[1]);
                let normal = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).expect("valid std");
                let weights = (0..inputs * outputs)
                    .map(|_| normal.sample(&mut rng))
                    .collect();
                let norm = (i < HIDDEN.len()).then(|| BatchNorm {
                    gamma: vec![1.0; outputs],
                    beta: vec![0.0; outputs],
                    running_mean: vec![0.0; outputs],
                    running_var: vec![1.0; outputs],
                });
                Layer {
                    inputs,
                    outputs,
                    weights,
                    bias: vec![0.0; outputs],
                    norm,
                }
            })
            .collect();
        Self { layers }
    }

    pub fn validate(&self) -> Result<()> {
        let mut sizes = vec![1];
        sizes.extend(HIDDEN);
        sizes.push(1);
        if self.layers.len() != sizes.len() - 1 {
            return Err(invalid(format!(
                "expected {} layers, got {}",
                sizes.len() - 1,
                self.layers.len()
            )));
        }
        for (i, l) in self.layers.iter().enumerate() {
            let hidden = i < HIDDEN.len();
            if l.inputs != sizes[i]
                || l.outputs != sizes[i + 1]
                || l.weights.len() != l.inputs * l.outputs
                || l.bias.len() != l.outputs
                || l.norm.is_some() != hidden
            {
                return Err(invalid(format!("layer {i} has the wrong shape")));
            }
            if let Some(bn) = &l.norm {
                let n = l.outputs;
                if bn.gamma.len() != n
                    || bn.beta.len() != n
                    || bn.running_mean.len() != n
                    || bn.running_var.len() != n
                {
                    return Err(invalid(format!("layer {i} batch norm has the wrong shape")));
                }
                if bn.running_var.iter().any(|v| !(*v >= 0.0)) {
                    return Err(invalid(format!("layer {i} has negative running variance")));
                }
            }
        }
        if self.flatten().iter().any(|p| !p.is_finite()) {
            return Err(invalid("non-finite parameter"));
        }
        Ok(())
    }

    /// Trainable parameters in the documented flat order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(&l.weights);
            out.extend(&l.bias);
            if let Some(bn) = &l.norm {
                out.extend(&bn.gamma);
                out.extend(&bn.beta);
            }
        }
        out
    }

    pub fn unflatten(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            let mut fill = |v: &mut Vec<f64>| {
                v.iter_mut()
                    .for_each(|x| *x = it.next().expect("flat length"))
            };
            fill(&mut l.weights);
            fill(&mut l.bias);
            if let Some(bn) = &mut l.norm {
                fill(&mut bn.gamma);
                fill(&mut bn.beta);
            }
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.flatten().len()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Velocity from the raw network output and `dv/dz`.
fn output_map(z: f64) -> (f64, f64) {
    let u = VELOCITY_SCALE * z - 0.5;
    let v = V_MIN + softplus(u);
    if v >= V_MAX {
        (V_MAX, 0.0)
    } else {
        (v, VELOCITY_SCALE * sigmoid(u))
    }
}

struct LayerCache {
    input: Vec<f64>,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
    /// Post-norm, pre-activation values.
    pre: Vec<f64>,
}

struct Forward {
    caches: Vec<LayerCache>,
    z: Vec<f64>,
}

fn forward(params: &MlpParams, depths: &[f64], mode: Mode) -> Forward {
    let n = depths.len();
    let mut act: Vec<f64> = depths.iter().map(|d| d / DEPTH_SCALE).collect();
    let mut caches = Vec::with_capacity(params.layers.len());
    for l in &params.layers {
        let (ni, no) = (l.inputs, l.outputs);
        let mut h = vec![0.0; n * no];
        for s in 0..n {
            let x = &act[s * ni..(s + 1) * ni];
            for o in 0..no {
                let w = &l.weights[o * ni..(o + 1) * ni];
                h[s * no + o] = l.bias[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let mut cache = LayerCache {
            input: act,
            xhat: Vec::new(),
            inv_std: Vec::new(),
            mean: Vec::new(),
            var: Vec::new(),
            pre: Vec::new(),
        };
        if let Some(bn) = &l.norm {
            let (mean, var) = match mode {
                Mode::Train => {
                    let mut mean = vec![0.0; no];
                    let mut var = vec![0.0; no];
                    for o in 0..no {
                        mean[o] = (0..n).map(|s| h[s * no + o]).sum::<f64>() / n as f64;
                        var[o] = (0..n)
                            .map(|s| (h[s * no + o] - mean[o]).powi(2))
                            .sum::<f64>()
                            / n as f64;
                    }
                    (mean, var)
                }
                Mode::Infer => (bn.running_mean.clone(), bn.running_var.clone()),
            };
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
            let mut xhat = vec![0.0; n * no];
            for s in 0..n {
                for o in 0..no {
                    let k = s * no + o;
                    xhat[k] = (h[k] - mean[o]) * inv_std[o];
                    h[k] = bn.gamma[o] * xhat[k] + bn.beta[o];
                }
            }
            cache.xhat = xhat;
            cache.inv_std = inv_std;
            cache.mean = mean;
            cache.var = var;
            cache.pre = h.clone();
            h.iter_mut().for_each(|x| *x = x.max(0.0));
        }
        caches.push(cache);
        act = h;
    }
    Forward { caches, z: act }
}

/// Network velocity for a batch of depths.
pub fn forward_batch(params: &MlpParams, depths: &[f64], mode: Mode) -> Result<Vec<f64>> {
    if let Some(d) = depths.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::NonPositiveDepth(*d));
    }
    Ok(forward(params, depths, mode)
        .z
        .iter()
        .map(|z| output_map(*z).0)
        .collect())
}

pub fn mlp_forward(params: &MlpParams, depth: f64, mode: Mode) -> Result<f64> {
    Ok(forward_batch(params, &[depth], mode)?[0])
}

/// Batch-norm outputs (before ReLU) of each hidden layer in train mode.
pub fn normalized_activations(params: &MlpParams, depths: &[f64]) -> Vec<Vec<f64>> {
    forward(params, depths, Mode::Train)
        .caches
        .into_iter()
        .filter(|c| !c.xhat.is_empty())
        .map(|c| c.pre)
        .collect()
}

/// Where the physics constraint is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhysicsAt {
    /// The dataset optimum `v*`.
    #[default]
    DatasetOptimum,
    /// The network prediction.
    Prediction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Minibatch size; `None` trains on the full dataset each step.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub physics_at: PhysicsAt,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 2000,
            learning_rate: 1e-3,
            batch_size: None,
            seed: 0,
            physics_at: PhysicsAt::DatasetOptimum,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(invalid(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(invalid("learning rate must be positive"));
        }
        if matches!(self.batch_size, Some(b) if b < 2) {
            return Err(invalid("batch size must be at least 2 for batch norm"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub mse: f64,
    pub physics: f64,
    pub total: f64,
}

fn physics_velocity(s: &TrainingSample, pred: f64, at: PhysicsAt) -> f64 {
    match at {
        PhysicsAt::DatasetOptimum => s.v_star,
        PhysicsAt::Prediction => pred,
    }
}

/// Derivative of the constraint polynomial with respect to velocity.
fn constraint_slope(s: &TrainingSample, v: f64) -> f64 {
    let mut acc = 0.0;
    for j in (2..=5).rev() {
        acc = acc * v + (j * (j - 1)) as f64 * s.k[j - 1];
    }
    acc
}

fn loss_from_predictions(
    samples: &[TrainingSample],
    preds: &[f64],
    lambda: f64,
    at: PhysicsAt,
) -> LossParts {
    let n = samples.len() as f64;
    let mse = samples
        .iter()
        .zip(preds)
        .map(|(s, p)| (s.v_star - p).powi(2))
        .sum::<f64>()
        / n;
    let physics = samples
        .iter()
        .zip(preds)
        .map(|(s, p)| s.constraint(physics_velocity(s, *p, at)))
        .sum::<f64>();
    LossParts {
        mse,
        physics,
        total: mse + lambda * physics,
    }
}

/// Loss in train mode (batch statistics).
pub fn pgnn_loss(
    params: &MlpParams,
    samples: &[TrainingSample],
    lambda: f64,
    at: PhysicsAt,
) -> Result<LossParts> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let depths: Vec<f64> = samples.iter().map(|s| s.depth).collect();
    let preds = forward_batch(params, &depths, Mode::Train)?;
    Ok(loss_from_predictions(samples, &preds, lambda, at))
}

/// Loss and its gradient in the flat parameter order.
pub fn loss_and_gradient(
    params: &MlpParams,
    samples: &[TrainingSample],
    lambda: f64,
    at: PhysicsAt,
) -> Result<(LossParts, Vec<f64>)> {
    let (loss, grad, _) = loss_grad_forward(params, samples, lambda, at)?;
    Ok((loss, grad))
}

fn loss_grad_forward(
    params: &MlpParams,
    samples: &[TrainingSample],
    lambda: f64,
    at: PhysicsAt,
) -> Result<(LossParts, Vec<f64>, Forward)> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let depths: Vec<f64> = samples.iter().map(|s| s.depth).collect();
    if let Some(d) = depths.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::NonPositiveDepth(*d));
    }
    let fwd = forward(params, &depths, Mode::Train);
    let n = samples.len();
    let mapped: Vec<(f64, f64)> = fwd.z.iter().map(|z| output_map(*z)).collect();
    let preds: Vec<f64> = mapped.iter().map(|m| m.0).collect();
    let loss = loss_from_predictions(samples, &preds, lambda, at);

    let mut delta: Vec<f64> = samples
        .iter()
        .zip(&mapped)
        .map(|(s, (v, dvdz))| {
            let mut dl_dv = 2.0 * (v - s.v_star) / n as f64;
            if at == PhysicsAt::Prediction {
                dl_dv += lambda * constraint_slope(s, *v);
            }
            dl_dv * dvdz
        })
        .collect();

    let mut grads: Vec<Vec<f64>> = Vec::with_capacity(params.layers.len());
    for (l, c) in params.layers.iter().zip(&fwd.caches).rev() {
        let (ni, no) = (l.inputs, l.outputs);
        let mut layer_grad = Vec::new();
        let mut dgamma = Vec::new();
        let mut dbeta = Vec::new();
        if let Some(bn) = &l.norm {
            for (d, pre) in delta.iter_mut().zip(&c.pre) {
                if *pre <= 0.0 {
                    *d = 0.0;
                }
            }
            dgamma = vec![0.0; no];
            dbeta = vec![0.0; no];
            let mut dh = vec![0.0; n * no];
            for o in 0..no {
                let mut sum_dxhat = 0.0;
                let mut sum_dxhat_xhat = 0.0;
                for s in 0..n {
                    let k = s * no + o;
                    dgamma[o] += delta[k] * c.xhat[k];
                    dbeta[o] += delta[k];
                    let dxhat = delta[k] * bn.gamma[o];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * c.xhat[k];
                }
                for s in 0..n {
                    let k = s * no + o;
                    let dxhat = delta[k] * bn.gamma[o];
                    dh[k] = c.inv_std[o] / n as f64
                        * (n as f64 * dxhat - sum_dxhat - c.xhat[k] * sum_dxhat_xhat);
                }
            }
            delta = dh;
        }
        let mut dw = vec![0.0; no * ni];
        let mut db = vec![0.0; no];
        let mut dx = vec![0.0; n * ni];
        for s in 0..n {
            let x = &c.input[s * ni..(s + 1) * ni];
            for o in 0..no {
                let d = delta[s * no + o];
                if d == 0.0 {
                    continue;
                }
                db[o] += d;
                let w = &l.weights[o * ni..(o + 1) * ni];
                for i in 0..ni {
                    dw[o * ni + i] += d * x[i];
                    dx[s * ni + i] += d * w[i];
                }
            }
        }
        layer_grad.extend(dw);
        layer_grad.extend(db);
        layer_grad.extend(dgamma);
        layer_grad.extend(dbeta);
        grads.push(layer_grad);
        delta = dx;
    }
    grads.reverse();
    Ok((loss, grads.concat(), fwd))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mse: f64,
    pub physics_term: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: MlpParams,
    pub loss_curve: Vec<EpochLoss>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            theta[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

fn update_running(params: &mut MlpParams, fwd: &Forward) {
    for (l, c) in params.layers.iter_mut().zip(&fwd.caches) {
        if let Some(bn) = &mut l.norm {
            for o in 0..l.outputs {
                bn.running_mean[o] =
                    BN_MOMENTUM * bn.running_mean[o] + (1.0 - BN_MOMENTUM) * c.mean[o];
                bn.running_var[o] =
                    BN_MOMENTUM * bn.running_var[o] + (1.0 - BN_MOMENTUM) * c.var[o];
            }
        }
    }
}

/// Adam (beta 0.9 / 0.999, eps 1e-8) on the loss in train mode.
pub fn train_pgnn(dataset: &[TrainingSample], config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    if dataset.len() < MIN_TRAINING_SAMPLES {
        return Err(Error::InsufficientSamples {
            need: MIN_TRAINING_SAMPLES,
            got: dataset.len(),
        });
    }
    let mut params = MlpParams::init(config.seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut theta = params.flatten();
    let mut adam = Adam::new(theta.len(), config.learning_rate);
    let mut curve = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let batch = config
        .batch_size
        .unwrap_or(dataset.len())
        .min(dataset.len());

    for epoch in 0..config.epochs {
        if batch < dataset.len() {
            order.shuffle(&mut shuffle_rng);
        }
        let mut sums = LossParts {
            mse: 0.0,
            physics: 0.0,
            total: 0.0,
        };
        let mut seen = 0.0;
        for chunk in order.chunks(batch) {
            // a trailing singleton has no batch variance
            if chunk.len() < 2 {
                continue;
            }
            let samples: Vec<TrainingSample> = chunk.iter().map(|&i| dataset[i]).collect();
            let (loss, grad, fwd) =
                loss_grad_forward(&params, &samples, config.lambda, config.physics_at)?;
            if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::DivergenceDetected(epoch));
            }
            let w = samples.len() as f64;
            sums.mse += loss.mse * w;
            sums.physics += loss.physics * w;
            sums.total += loss.total * w;
            seen += w;
            update_running(&mut params, &fwd);
            adam.step(&mut theta, &grad);
            params.unflatten(&theta);
        }
        curve.push(EpochLoss {
            epoch,
            mse: sums.mse / seen,
            physics_term: sums.physics / seen,
            total: sums.total / seen,
        });
    }
    if params.flatten().iter().any(|p| !p.is_finite()) {
        return Err(Error::DivergenceDetected(config.epochs));
    }
    Ok(TrainedModel {
        params,
        loss_curve: curve,
    })
}

pub fn write_loss_curve_csv<W: Write>(mut w: W, curve: &[EpochLoss]) -> Result<()> {
    writeln!(w, "epoch,mse,physics_term,total")?;
    for e in curve {
        writeln!(w, "{},{},{},{}", e.epoch, e.mse, e.physics_term, e.total)?;
    }
    Ok(())
}

/// `d / v`.
pub fn trajectory_time(v_pred: f64, depth: f64) -> Result<f64> {
    if !(v_pred > 0.0) {
        return Err(Error::NonPositiveVelocity(v_pred));
    }
    if !(depth > 0.0) {
        return Err(Error::NonPositiveDepth(depth));
    }
    Ok(depth / v_pred)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgnnOutput {
    pub v_pred: f64,
    pub t_traj: f64,
    pub depth: f64,
}

pub fn predict(params: &MlpParams, depth: f64) -> Result<PgnnOutput> {
    let v_pred = mlp_forward(params, depth, Mode::Infer)?;
    Ok(PgnnOutput {
        v_pred,
        t_traj: trajectory_time(v_pred, depth)?,
        depth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(depth: f64, v_star: f64, k: [f64; 5]) -> TrainingSample {
        TrainingSample {
            depth,
            v_star,
            k,
            interior: true,
        }
    }

    #[test]
    fn shapes_and_round_trip() {
        let p = MlpParams::init(3);
        p.validate().unwrap();
        let expected = (64 + 64 + 128) + (64 * 128 + 128 * 3) + (128 * 128 + 128 * 3) + (128 + 1);
        assert_eq!(p.parameter_count(), expected);
        let back = MlpParams::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
        let mut q = p.clone();
        q.unflatten(&p.flatten());
        assert_eq!(q, p);
    }

    #[test]
    fn rejects_reshaped_params() {
        let mut p = MlpParams::init(3);
        p.layers[1].bias.pop();
        assert!(p.validate().is_err());
        assert!(MlpParams::from_json("{\"layers\": []}").is_err());
    }

    #[test]
    fn infer_is_deterministic_and_clamped() {
        let p = MlpParams::init(1);
        for d in [0.01, 2.0, 4.4, 100.0, 1e6] {
            let a = mlp_forward(&p, d, Mode::Infer).unwrap();
            assert_eq!(a, mlp_forward(&p, d, Mode::Infer).unwrap());
            assert!((V_MIN..=V_MAX).contains(&a));
        }
        assert!(matches!(
            mlp_forward(&p, 0.0, Mode::Infer),
            Err(Error::NonPositiveDepth(_))
        ));
    }

    #[test]
    fn fresh_batch_norm_is_standardized() {
        let p = MlpParams::init(7);
        let depths: Vec<f64> = (0..64).map(|i| 1.0 + 11.0 * i as f64 / 63.0).collect();
        for layer in normalized_activations(&p, &depths) {
            let width = layer.len() / 64;
            for o in 0..width {
                let col: Vec<f64> = (0..64).map(|s| layer[s * width + o]).collect();
                let mean = col.iter().sum::<f64>() / 64.0;
                let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 64.0;
                assert!(mean.abs() < 1e-6);
                assert!((var - 1.0).abs() < 1e-6, "var {var}");
            }
        }
    }

    #[test]
    fn toy_loss_by_hand() {
        let p = MlpParams::init(0);
        let samples = [
            toy(2.0, 8.0, [1.0, -0.5, 0.0, 0.0, 0.0]),
            toy(4.0, 7.0, [0.0, 0.0, 0.1, 0.0, 0.0]),
        ];
        let preds = forward_batch(&p, &[2.0, 4.0], Mode::Train).unwrap();
        let mse = ((8.0 - preds[0]).powi(2) + (7.0 - preds[1]).powi(2)) / 2.0;
        // 1 - 2*0.5*8 = -7 and 3*0.1*49 = 14.7
        let physics = -7.0 + 14.7;
        let l = pgnn_loss(&p, &samples, 0.01, PhysicsAt::DatasetOptimum).unwrap();
        assert!((l.mse - mse).abs() < 1e-12);
        assert!((l.physics - physics).abs() < 1e-12);
        assert!((l.total - (mse + 0.01 * physics)).abs() < 1e-12);
        assert_eq!(
            pgnn_loss(&p, &samples, 0.0, PhysicsAt::DatasetOptimum)
                .unwrap()
                .total,
            l.mse
        );
        assert!(matches!(
            pgnn_loss(&p, &[], 0.0, PhysicsAt::DatasetOptimum),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn trajectory_time_examples() {
        assert_eq!(trajectory_time(8.0, 4.0).unwrap(), 0.5);
        assert_eq!(trajectory_time(3.3, 3.3).unwrap(), 1.0);
        assert_eq!(trajectory_time(V_MIN, 6.0).unwrap(), 12.0);
        assert!(matches!(
            trajectory_time(0.0, 1.0),
            Err(Error::NonPositiveVelocity(_))
        ));
    }

    #[test]
    fn small_dataset_rejected() {
        let ds: Vec<_> = (0..5).map(|i| toy(2.0 + i as f64, 8.0, [0.0; 5])).collect();
        assert!(matches!(
            train_pgnn(&ds, &TrainConfig::default()),
            Err(Error::InsufficientSamples { need: 8, got: 5 })
        ));
    }

    #[test]
    fn loss_curve_header() {
        let mut buf = Vec::new();
        write_loss_curve_csv(
            &mut buf,
            &[EpochLoss {
                epoch: 0,
                mse: 1.0,
                physics_term: 0.5,
                total: 1.5,
            }],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,mse,physics_term,total\n0,1,0.5,1.5\n"
        );
    }
}
