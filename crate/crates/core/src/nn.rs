//! Multilayer perceptron Q-function: tanh hidden layers, linear output, one
//! output per action. Trained by plain per-example gradient descent on
//! `½(TQ − Q(s, a))²`, where only the selected action's output carries error.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }

    fn forward_into(&self, input: &[f64], out: &mut [f64]) {
        let n = self.inputs;
        let quads = self.outputs / 4 * 4;
        for o in (0..quads).step_by(4) {
            let z = dot4(&self.weights[o * n..(o + 4) * n], n, input);
            for k in 0..4 {
                out[o + k] = self.activate(self.biases[o + k] + z[k]);
            }
        }
        for o in quads..self.outputs {
            out[o] = self.activate(self.biases[o] + dot(self.row(o), input));
        }
    }

    fn activate(&self, z: f64) -> f64 {
        match self.activation {
            Activation::Tanh => tanh(z),
            Activation::Identity => z,
        }
    }
}

/// `tanh` through one `exp`, with the library routine near zero where the
/// quotient form loses relative precision. Agrees with `f64::tanh` to a few
/// ulp.
pub fn tanh(z: f64) -> f64 {
    let a = z.abs();
    if a < 0.05 {
        return z.tanh();
    }
    let e = (-2.0 * a).exp();
    ((1.0 - e) / (1.0 + e)).copysign(z)
}

/// Four consecutive rows of length `n` against `x`; each result is
/// bit-identical to [`dot`] on that row.
fn dot4(rows: &[f64], n: usize, x: &[f64]) -> [f64; 4] {
    let (r0, rest) = rows.split_at(n);
    let (r1, rest) = rest.split_at(n);
    let (r2, r3) = rest.split_at(n);
    let x = &x[..n];
    let mut acc = [[0.0; 4]; 4];
    let chunks = n / 4 * 4;
    for j in (0..chunks).step_by(4) {
        for (a, r) in acc.iter_mut().zip([r0, r1, r2, r3]) {
            a[0] += r[j] * x[j];
            a[1] += r[j + 1] * x[j + 1];
            a[2] += r[j + 2] * x[j + 2];
            a[3] += r[j + 3] * x[j + 3];
        }
    }
    let mut out = [0.0; 4];
    for ((o, a), r) in out.iter_mut().zip(&acc).zip([r0, r1, r2, r3]) {
        let mut tail = 0.0;
        for j in chunks..n {
            tail += r[j] * x[j];
        }
        *o = (a[0] + a[1]) + (a[2] + a[3]) + tail;
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    layers: Vec<Layer>,
}

/// Parameter gradients, same layout as the network's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    /// Flattened in [`QNetwork::parameter`] order.
    pub fn flat(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }
}

/// Reusable activation and delta buffers for the training hot path.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    activations: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Workspace {
    fn fit(&mut self, net: &QNetwork) {
        let fits = self.activations.len() == net.layers.len() + 1
            && self.activations[0].len() == net.input_dim()
            && self
                .activations
                .iter()
                .skip(1)
                .zip(&net.layers)
                .all(|(a, l)| a.len() == l.outputs);
        if !fits {
            let sizes = net.layer_sizes();
            self.activations = sizes.iter().map(|&s| vec![0.0; s]).collect();
            self.deltas = sizes[1..].iter().map(|&s| vec![0.0; s]).collect();
        }
    }

    pub fn output(&self) -> &[f64] {
        self.activations.last().map_or(&[], |v| v.as_slice())
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
        return Err(Error::InvalidParameters(format!(
            "layer sizes must have an input and an output layer, all >= 1 (got {sizes:?})"
        )));
    }
    Ok(())
}

impl QNetwork {
    /// Random weights in `±1/√fan_in`, zero biases.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        check_sizes(layer_sizes)?;
        if layer_sizes.len() < 3 {
            return Err(Error::InvalidParameters(
                "a Q-network needs at least one hidden layer".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = layer_sizes.len() - 2;
        let layers = layer_sizes
            .windows(2)
            .enumerate()
            .map(|(i, pair)| {
                let (inputs, outputs) = (pair[0], pair[1]);
                let scale = 1.0 / (inputs as f64).sqrt();
                Layer {
                    inputs,
                    outputs,
                    weights: (0..inputs * outputs)
                        .map(|_| rng.gen_range(-1.0..1.0) * scale)
                        .collect(),
                    biases: vec![0.0; outputs],
                    activation: if i == last {
                        Activation::Identity
                    } else {
                        Activation::Tanh
                    },
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// Network from explicit parameters: `weights[l]` is row-major
    /// `sizes[l+1] × sizes[l]`. Hidden layers use tanh, the output is linear.
    pub fn from_parameters(
        layer_sizes: &[usize],
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let count = layer_sizes.len() - 1;
        if weights.len() != count || biases.len() != count {
            return Err(Error::LengthMismatch {
                expected: count,
                found: weights.len().min(biases.len()),
            });
        }
        let mut layers = Vec::with_capacity(count);
        for (i, (w, b)) in weights.into_iter().zip(biases).enumerate() {
            let (inputs, outputs) = (layer_sizes[i], layer_sizes[i + 1]);
            if w.len() != inputs * outputs {
                return Err(Error::LengthMismatch {
                    expected: inputs * outputs,
                    found: w.len(),
                });
            }
            if b.len() != outputs {
                return Err(Error::LengthMismatch {
                    expected: outputs,
                    found: b.len(),
                });
            }
            layers.push(Layer {
                inputs,
                outputs,
                weights: w,
                biases: b,
                activation: if i + 1 == count {
                    Activation::Identity
                } else {
                    Activation::Tanh
                },
            });
        }
        let net = Self { layers };
        net.check_finite()?;
        Ok(net)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs)
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn n_actions(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    fn locate(&self, mut index: usize) -> (usize, bool, usize) {
        for (l, layer) in self.layers.iter().enumerate() {
            if index < layer.weights.len() {
                return (l, true, index);
            }
            index -= layer.weights.len();
            if index < layer.biases.len() {
                return (l, false, index);
            }
            index -= layer.biases.len();
        }
        panic!("parameter index out of range");
    }

    /// Parameters ordered layer by layer, weights before biases.
    pub fn parameter(&self, index: usize) -> f64 {
        match self.locate(index) {
            (l, true, i) => self.layers[l].weights[i],
            (l, false, i) => self.layers[l].biases[i],
        }
    }

    pub fn set_parameter(&mut self, index: usize, value: f64) {
        match self.locate(index) {
            (l, true, i) => self.layers[l].weights[i] = value,
            (l, false, i) => self.layers[l].biases[i] = value,
        }
    }

    /// Adds `delta` to every output bias.
    pub fn shift_outputs(&mut self, delta: f64) {
        if let Some(last) = self.layers.last_mut() {
            last.biases.iter_mut().for_each(|b| *b += delta);
        }
    }

    fn check_finite(&self) -> Result<()> {
        for (l, layer) in self.layers.iter().enumerate() {
            if layer
                .weights
                .iter()
                .chain(&layer.biases)
                .any(|v| !v.is_finite())
            {
                return Err(Error::InvalidParameters(format!(
                    "layer {l} has non-finite parameters"
                )));
            }
        }
        Ok(())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::LengthMismatch {
                expected: self.input_dim(),
                found: input.len(),
            });
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameters("network input is not finite".into()));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut ws = Workspace::default();
        Ok(self.forward_with(&mut ws, input)?.to_vec())
    }

    /// Forward pass into `ws`; returns the Q-values.
    pub fn forward_with<'w>(&self, ws: &'w mut Workspace, input: &[f64]) -> Result<&'w [f64]> {
        self.check_input(input)?;
        ws.fit(self);
        ws.activations[0].copy_from_slice(input);
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, after) = ws.activations.split_at_mut(l + 1);
            layer.forward_into(&before[l], &mut after[0]);
        }
        Ok(ws.output())
    }

    /// Forward pass that evaluates only output `action`; the other outputs
    /// in `ws` are left stale.
    fn forward_for_action(&self, ws: &mut Workspace, input: &[f64], action: usize) -> Result<f64> {
        self.check_input(input)?;
        ws.fit(self);
        ws.activations[0].copy_from_slice(input);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers[..last].iter().enumerate() {
            let (before, after) = ws.activations.split_at_mut(l + 1);
            layer.forward_into(&before[l], &mut after[0]);
        }
        let out = &self.layers[last];
        let q = out.activate(out.biases[action] + dot(out.row(action), &ws.activations[last]));
        ws.activations[last + 1][action] = q;
        Ok(q)
    }

    /// Fills `ws.deltas` with `∂L/∂z` per layer for `L = ½(Q_a − target)²`.
    fn backward(&self, ws: &mut Workspace, action: usize, err: f64) -> Result<()> {
        let count = self.layers.len();
        let out = &mut ws.deltas[count - 1];
        out.iter_mut().for_each(|d| *d = 0.0);
        out[action] = err;
        for l in (1..count).rev() {
            let layer = &self.layers[l];
            let (lower, upper) = ws.deltas.split_at_mut(l);
            let delta_in = &mut lower[l - 1];
            let delta_out = &upper[0];
            let act = &ws.activations[l];
            delta_in.iter_mut().for_each(|d| *d = 0.0);
            for (o, &d) in delta_out.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (slot, w) in delta_in.iter_mut().zip(layer.row(o)) {
                    *slot += w * d;
                }
            }
            for (slot, a) in delta_in.iter_mut().zip(act) {
                *slot *= 1.0 - a * a;
            }
            if let Some(bad) = delta_in.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    layer: l - 1,
                    detail: format!("delta {bad}, output error {err}"),
                });
            }
        }
        Ok(())
    }

    fn prepare(
        &self,
        ws: &mut Workspace,
        input: &[f64],
        action: usize,
        target: f64,
    ) -> Result<f64> {
        if action >= self.n_actions() {
            return Err(Error::InvalidParameters(format!(
                "action {action} out of range for {} outputs",
                self.n_actions()
            )));
        }
        if !target.is_finite() {
            return Err(Error::NonFiniteGradient {
                layer: self.layers.len() - 1,
                detail: format!("target {target}"),
            });
        }
        let q = self.forward_for_action(ws, input, action)?;
        let err = q - target;
        if !err.is_finite() {
            return Err(Error::NonFiniteGradient {
                layer: self.layers.len() - 1,
                detail: format!("output {q}, target {target}"),
            });
        }
        self.backward(ws, action, err)?;
        Ok(err)
    }

    /// Analytic gradient of `½(target − Q(input, action))²`, with the loss.
    pub fn gradient(&self, input: &[f64], action: usize, target: f64) -> Result<(f64, Gradients)> {
        let mut ws = Workspace::default();
        let err = self.prepare(&mut ws, input, action, target)?;
        let mut grads = Gradients {
            weights: Vec::with_capacity(self.layers.len()),
            biases: Vec::with_capacity(self.layers.len()),
        };
        for (l, layer) in self.layers.iter().enumerate() {
            let delta = &ws.deltas[l];
            let act = &ws.activations[l];
            let mut w = Vec::with_capacity(layer.weights.len());
            for &d in delta {
                w.extend(act.iter().map(|a| d * a));
            }
            grads.weights.push(w);
            grads.biases.push(delta.clone());
        }
        Ok((0.5 * err * err, grads))
    }

    /// One gradient-descent step toward `target` for the chosen action;
    /// returns the squared error before the step.
    pub fn train_on_target(
        &mut self,
        input: &[f64],
        action: usize,
        target: f64,
        step_size: f64,
    ) -> Result<f64> {
        let mut ws = Workspace::default();
        self.train_on_target_with(&mut ws, input, action, target, step_size)
    }

    pub fn train_on_target_with(
        &mut self,
        ws: &mut Workspace,
        input: &[f64],
        action: usize,
        target: f64,
        step_size: f64,
    ) -> Result<f64> {
        if !(step_size > 0.0 && step_size.is_finite()) {
            return Err(Error::InvalidParameters(format!(
                "step size must be positive, got {step_size}"
            )));
        }
        let err = self.prepare(ws, input, action, target)?;
        let count = self.layers.len();
        for (l, layer) in self.layers.iter_mut().enumerate() {
            let delta = &ws.deltas[l];
            let act = &ws.activations[l];
            let inputs = layer.inputs;
            let rows = if l + 1 == count {
                action..action + 1
            } else {
                0..layer.outputs
            };
            for o in rows {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let scaled = step_size * d;
                for (w, a) in layer.weights[o * inputs..(o + 1) * inputs]
                    .iter_mut()
                    .zip(act)
                {
                    *w -= scaled * a;
                }
                layer.biases[o] -= scaled;
            }
        }
        Ok(err * err)
    }
}

/// Trained network plus the per-component divisors applied to raw states.
#[derive(Clone, Debug, PartialEq)]
pub struct QModel {
    pub net: QNetwork,
    pub input_scale: Vec<f64>,
}

pub const CHECKPOINT_FORMAT: &str = "reflexq-qnet";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
    input_scale: Vec<f64>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl QModel {
    pub fn to_json(&self) -> Result<String> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            layer_sizes: self.net.layer_sizes(),
            activations: self.net.layers.iter().map(|l| l.activation).collect(),
            input_scale: self.input_scale.clone(),
            weights: self.net.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: self.net.layers.iter().map(|l| l.biases.clone()).collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text)?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", file.format)));
        }
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                file.version
            )));
        }
        let net = QNetwork::from_parameters(&file.layer_sizes, file.weights, file.biases)?;
        let expected: Vec<Activation> = net.layers.iter().map(|l| l.activation).collect();
        if file.activations != expected {
            return Err(Error::Checkpoint(format!(
                "activations {:?} not supported (expected {expected:?})",
                file.activations
            )));
        }
        if file.input_scale.len() != net.input_dim() {
            return Err(Error::Checkpoint(format!(
                "input scale has {} entries for {} inputs",
                file.input_scale.len(),
                net.input_dim()
            )));
        }
        Ok(Self {
            net,
            input_scale: file.input_scale,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn input(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()
    }

    #[test]
    fn init_is_seeded() {
        let a = QNetwork::init(&[6, 40, 40, 11], 1).unwrap();
        let b = QNetwork::init(&[6, 40, 40, 11], 1).unwrap();
        let c = QNetwork::init(&[6, 40, 40, 11], 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let k = 11;
        assert_eq!(a.parameter_count(), 6 * 40 + 40 + 40 * 40 + 40 + 40 * k + k);
        assert!(a.layers().iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn init_rejects_bad_sizes() {
        assert!(QNetwork::init(&[6, 11], 0).is_err());
        assert!(QNetwork::init(&[6, 0, 11], 0).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = QNetwork::from_parameters(
            &[3, 4, 2],
            vec![vec![0.0; 12], vec![0.0; 8]],
            vec![vec![0.0; 4], vec![0.0; 2]],
        )
        .unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn linear_layer_is_affine() {
        let net = QNetwork::from_parameters(
            &[2, 2],
            vec![vec![1.0, 2.0, -3.0, 0.5]],
            vec![vec![0.25, -1.0]],
        )
        .unwrap();
        assert_eq!(net.forward(&[2.0, 4.0]).unwrap(), vec![10.25, -5.0]);
    }

    #[test]
    fn forward_is_pure_and_checks_dims() {
        let net = QNetwork::init(&[6, 8, 3], 5).unwrap();
        let x = input(1, 6);
        assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
        assert!(matches!(net.forward(&x[..5]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn hand_computed_scalar_step() {
        let mut net = QNetwork::from_parameters(&[1, 1], vec![vec![0.0]], vec![vec![0.0]]).unwrap();
        let sq = net.train_on_target(&[1.0], 0, 1.0, 0.1).unwrap();
        assert_eq!(sq, 1.0);
        assert_relative_eq!(net.parameter(0), 0.1, epsilon = 1e-15);
        assert_relative_eq!(net.parameter(1), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn matching_target_leaves_parameters() {
        let mut net = QNetwork::init(&[6, 10, 10, 4], 3).unwrap();
        let x = input(2, 6);
        let q = net.forward(&x).unwrap()[2];
        let before = net.clone();
        net.train_on_target(&x, 2, q, 0.5).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn update_equals_step_times_gradient() {
        let mut net = QNetwork::init(&[6, 9, 7, 5], 11).unwrap();
        let x = input(4, 6);
        let (_, g) = net.gradient(&x, 3, 2.0).unwrap();
        let before = net.clone();
        net.train_on_target(&x, 3, 2.0, 1e-2).unwrap();
        for (i, gi) in g.flat().iter().enumerate() {
            assert_relative_eq!(
                net.parameter(i),
                before.parameter(i) - 1e-2 * gi,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let net = QNetwork::init(&[6, 12, 12, 5], seed).unwrap();
            let x = input(seed + 100, 6);
            let action = (seed % 5) as usize;
            let target = 1.5;
            let (_, g) = net.gradient(&x, action, target).unwrap();
            let loss = |n: &QNetwork| {
                let q = n.forward(&x).unwrap()[action];
                0.5 * (target - q) * (target - q)
            };
            let h = 1e-5;
            for (i, analytic) in g.flat().into_iter().enumerate() {
                let mut p = net.clone();
                p.set_parameter(i, net.parameter(i) + h);
                let up = loss(&p);
                p.set_parameter(i, net.parameter(i) - h);
                let down = loss(&p);
                let numeric = (up - down) / (2.0 * h);
                let scale = analytic.abs().max(numeric.abs()).max(1e-6);
                assert!((analytic - numeric).abs() / scale < 1e-4, "param {i}");
            }
        }
    }

    #[test]
    fn small_step_reduces_error() {
        let mut net = QNetwork::init(&[6, 40, 40, 11], 8).unwrap();
        let x = input(9, 6);
        let before = net.train_on_target(&x, 4, 3.0, 1e-4).unwrap();
        let after = (net.forward(&x).unwrap()[4] - 3.0).powi(2);
        assert!(after < before);
    }

    #[test]
    fn non_finite_target_aborts() {
        let mut net = QNetwork::init(&[2, 3, 2], 0).unwrap();
        let err = net.train_on_target(&[0.1, 0.2], 0, f64::INFINITY, 0.1).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { .. }));
    }

    #[test]
    fn clone_is_independent() {
        let mut net = QNetwork::init(&[6, 8, 3], 1).unwrap();
        let copy = net.clone();
        let x = input(3, 6);
        let out = copy.forward(&x).unwrap();
        assert_eq!(net.forward(&x).unwrap(), out);
        net.train_on_target(&x, 0, 10.0, 0.1).unwrap();
        assert_eq!(copy.forward(&x).unwrap(), out);
        assert_eq!(copy.clone(), copy);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let model = QModel {
            net: QNetwork::init(&[6, 40, 40, 11], 77).unwrap(),
            input_scale: vec![0.01, 0.01, 0.01, 0.3, 7.1, 1.0 / 3.0],
        };
        let back = QModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
        for i in 0..model.net.parameter_count() {
            assert_eq!(back.net.parameter(i).to_bits(), model.net.parameter(i).to_bits());
        }
    }

    #[test]
    fn checkpoint_rejects_wrong_version() {
        let model = QModel {
            net: QNetwork::init(&[2, 3, 2], 0).unwrap(),
            input_scale: vec![1.0, 1.0],
        };
        let text = model.to_json().unwrap().replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(QModel::from_json(&text), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn four_row_kernel_matches_single_rows() {
        let net = QNetwork::init(&[6, 40, 40, 11], 5).unwrap();
        let x = input(9, 40);
        let layer = &net.layers[1];
        for o in (0..40).step_by(4) {
            let z = dot4(&layer.weights[o * 40..(o + 4) * 40], 40, &x);
            for k in 0..4 {
                assert_eq!(z[k], dot(layer.row(o + k), &x));
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn tanh_tracks_library(z in -40.0..40.0f64) {
            let (a, b) = (tanh(z), z.tanh());
            proptest::prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * b.abs().max(f64::MIN_POSITIVE));
            proptest::prop_assert_eq!(tanh(-z), -a);
        }
    }
}
