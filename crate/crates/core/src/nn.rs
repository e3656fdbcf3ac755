//! Small fully-connected networks in double precision.
//!
//! Hidden layers use the rectifier; the output activation is chosen per
//! network (logistic for the actor, identity for critics and Q heads).
//! [`Mlp::forward_tape`] records every layer's activations on a [`Tape`] and
//! [`Mlp::backward`] replays it to accumulate exact parameter gradients and
//! return the gradient with respect to the input.

use std::fmt::Write as _;
use std::fs;
use std::ops::Deref;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &str = "#cachegym-mlp v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Logistic,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Logistic => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    fn slope(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Logistic => y * (1.0 - y),
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Logistic => "logistic",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(Activation::Identity),
            "relu" => Some(Activation::Relu),
            "logistic" => Some(Activation::Logistic),
            _ => None,
        }
    }
}

/// One affine layer; `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Dense {
    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail: f64 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in chunks_a.zip(chunks_b) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Feed-forward network: rectifier hidden layers and a configurable output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    output_activation: Activation,
}

/// Per-layer activations from one forward pass; `activations[0]` is the input.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    activations: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map_or(&[], |a| a.as_slice())
    }
}

/// Parameter gradients, shaped like the network. Accumulated, never overwritten.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zero(&mut self) {
        for w in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            w.fill(0.0);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .all(|v| v.iter().all(|&x| x == 0.0))
    }
}

impl Mlp {
    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn new(sizes: &[usize], output_activation: Activation, seed: u64) -> Result<Self> {
        let mut net = Self::zeroed(sizes, output_activation)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    /// All parameters zero.
    pub fn zeroed(sizes: &[usize], output_activation: Activation) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::invalid("a network needs at least one layer transition"));
        }
        if sizes.contains(&0) {
            return Err(Error::invalid(format!("zero-width layer in {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|pair| Dense {
                inputs: pair[0],
                outputs: pair[1],
                weights: vec![0.0; pair[0] * pair[1]],
                biases: vec![0.0; pair[1]],
            })
            .collect();
        Ok(Self {
            layers,
            output_activation,
        })
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            Activation::Relu
        }
    }

    pub fn gradients(&self) -> Gradients {
        Gradients {
            weights: self.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: self.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                context: "network input",
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        Ok(())
    }

    /// Forward pass without keeping intermediates.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut current = input.to_vec();
        for (idx, layer) in self.layers.iter().enumerate() {
            current = self.layer_forward(idx, layer, &current);
        }
        Ok(current)
    }

    fn layer_forward(&self, idx: usize, layer: &Dense, x: &[f64]) -> Vec<f64> {
        let act = self.activation_of(idx);
        (0..layer.outputs)
            .map(|o| act.apply(layer.biases[o] + dot(layer.row(o), x)))
            .collect()
    }

    /// Forward pass recording activations; returns the output slice.
    pub fn forward_tape<'t>(&self, input: &[f64], tape: &'t mut Tape) -> Result<&'t [f64]> {
        self.check_input(input)?;
        tape.activations.resize_with(self.layers.len() + 1, Vec::new);
        tape.activations[0].clear();
        tape.activations[0].extend_from_slice(input);
        for (idx, layer) in self.layers.iter().enumerate() {
            let act = self.activation_of(idx);
            let (before, after) = tape.activations.split_at_mut(idx + 1);
            let x = &before[idx];
            let out = &mut after[0];
            out.clear();
            out.extend((0..layer.outputs).map(|o| act.apply(layer.biases[o] + dot(layer.row(o), x))));
        }
        Ok(tape.output())
    }

    fn check_tape(&self, tape: &Tape) -> Result<()> {
        let consistent = tape.activations.len() == self.layers.len() + 1
            && tape.activations[0].len() == self.input_dim()
            && self
                .layers
                .iter()
                .zip(&tape.activations[1..])
                .all(|(l, a)| a.len() == l.outputs);
        if consistent {
            Ok(())
        } else {
            Err(Error::MissingTape)
        }
    }

    /// Accumulate parameter gradients of `d_output · f(input)` into `grads` and
    /// return the input gradient.
    pub fn backward(&self, tape: &Tape, d_output: &[f64], grads: &mut Gradients) -> Result<Vec<f64>> {
        self.check_grads(grads)?;
        Ok(self
            .backprop(tape, d_output, Some(grads), true)?
            .expect("input gradient requested"))
    }

    /// Like [`Mlp::backward`] but skips the input gradient.
    pub fn backward_params(&self, tape: &Tape, d_output: &[f64], grads: &mut Gradients) -> Result<()> {
        self.check_grads(grads)?;
        self.backprop(tape, d_output, Some(grads), false).map(|_| ())
    }

    /// Input gradient only; parameters untouched.
    pub fn input_gradient(&self, tape: &Tape, d_output: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .backprop(tape, d_output, None, true)?
            .expect("input gradient requested"))
    }

    fn check_grads(&self, grads: &Gradients) -> Result<()> {
        let ok = grads.weights.len() == self.layers.len()
            && self
                .layers
                .iter()
                .zip(grads.weights.iter().zip(&grads.biases))
                .all(|(l, (w, b))| w.len() == l.weights.len() && b.len() == l.biases.len());
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                context: "gradient buffers",
                expected: self.num_params(),
                actual: grads.weights.iter().chain(&grads.biases).map(Vec::len).sum(),
            })
        }
    }

    fn backprop(
        &self,
        tape: &Tape,
        d_output: &[f64],
        mut grads: Option<&mut Gradients>,
        want_input: bool,
    ) -> Result<Option<Vec<f64>>> {
        self.check_tape(tape)?;
        if d_output.len() != self.output_dim() {
            return Err(Error::ShapeMismatch {
                context: "output gradient",
                expected: self.output_dim(),
                actual: d_output.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut delta: Vec<f64> = d_output
            .iter()
            .zip(&tape.activations[last + 1])
            .map(|(g, &y)| g * self.output_activation.slope(y))
            .collect();

        for idx in (0..=last).rev() {
            let layer = &self.layers[idx];
            let x = &tape.activations[idx];
            if let Some(g) = grads.as_deref_mut() {
                let gw = &mut g.weights[idx];
                let gb = &mut g.biases[idx];
                for (o, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        axpy(&mut gw[o * layer.inputs..(o + 1) * layer.inputs], d, x);
                        gb[o] += d;
                    }
                }
            }
            if idx == 0 && !want_input {
                return Ok(None);
            }
            let mut dx = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    axpy(&mut dx, d, layer.row(o));
                }
            }
            if idx == 0 {
                return Ok(Some(dx));
            }
            // Hidden activations are rectifiers.
            for (d, &y) in dx.iter_mut().zip(x) {
                *d *= Activation::Relu.slope(y);
            }
            delta = dx;
        }
        unreachable!("loop returns at layer 0")
    }

    /// Parameters in layer order: weights row-major, then biases.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
            .collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::ShapeMismatch {
                context: "flat parameters",
                expected: self.num_params(),
                actual: values.len(),
            });
        }
        let mut rest = values;
        for layer in &mut self.layers {
            let (w, tail) = rest.split_at(layer.weights.len());
            layer.weights.copy_from_slice(w);
            let (b, tail) = tail.split_at(layer.biases.len());
            layer.biases.copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
    }

    pub fn to_checkpoint(&self) -> String {
        let mut out = String::new();
        let sizes: Vec<String> = self.sizes().iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
        let _ = writeln!(out, "sizes {}", sizes.join(" "));
        let _ = writeln!(out, "output {}", self.output_activation.as_str());
        for (idx, layer) in self.layers.iter().enumerate() {
            let _ = writeln!(out, "layer {idx} {} {}", layer.outputs, layer.inputs);
            for o in 0..layer.outputs {
                write_values(&mut out, layer.row(o));
            }
            write_values(&mut out, &layer.biases);
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::parse(0, format!("checkpoint ends before {what}")))
        };
        let (line, magic) = next("header")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::parse(line, "not a cachegym network checkpoint"));
        }
        let (line, sizes_line) = next("sizes")?;
        let sizes: Vec<usize> = sizes_line
            .strip_prefix("sizes ")
            .ok_or_else(|| Error::parse(line, "expected `sizes`"))?
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| Error::parse(line, format!("bad size {s:?}"))))
            .collect::<Result<_>>()?;
        let (line, output_line) = next("output activation")?;
        let activation = output_line
            .strip_prefix("output ")
            .and_then(Activation::parse)
            .ok_or_else(|| Error::parse(line, "expected `output <activation>`"))?;
        let mut net = Mlp::zeroed(&sizes, activation).map_err(|e| Error::parse(line, e.to_string()))?;
        for idx in 0..net.layers.len() {
            let (line, layer_line) = next("layer header")?;
            let (inputs, outputs) = (net.layers[idx].inputs, net.layers[idx].outputs);
            if layer_line != format!("layer {idx} {outputs} {inputs}") {
                return Err(Error::parse(line, format!("expected layer {idx} {outputs} {inputs}")));
            }
            for o in 0..outputs {
                let (line, row) = next("weight row")?;
                let values = parse_values(line, row, inputs)?;
                net.layers[idx].weights[o * inputs..(o + 1) * inputs].copy_from_slice(&values);
            }
            let (line, row) = next("bias row")?;
            net.layers[idx].biases = parse_values(line, row, outputs)?;
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_checkpoint())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&fs::read_to_string(path)?)
    }
}

fn write_values(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        // `{}` on f64 prints the shortest string that parses back exactly.
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

fn parse_values(line: usize, row: &str, expected: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = row
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| Error::parse(line, format!("bad value {s:?}"))))
        .collect::<Result<_>>()?;
    if values.len() != expected {
        return Err(Error::parse(line, format!("expected {expected} values, found {}", values.len())));
    }
    Ok(values)
}

/// Activations of a minibatch; each layer is `rows × width`, row-major.
#[derive(Debug, Clone, Default)]
pub struct BatchTape {
    rows: usize,
    activations: Vec<Vec<f64>>,
}

impl BatchTape {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn output(&self) -> &[f64] {
        self.activations.last().map_or(&[], |a| a.as_slice())
    }
}

/// `c ← a·b + beta·c` for row-major `c` (`m × n`); `a` is `m × k` and `b` is
/// `k × n`, each given with its row and column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: (&[f64], usize, usize), b: (&[f64], usize, usize), beta: f64, c: &mut [f64]) {
    debug_assert!(c.len() >= m * n);
    debug_assert!(m == 0 || k == 0 || a.0.len() > (m - 1) * a.1 + (k - 1) * a.2);
    debug_assert!(k == 0 || n == 0 || b.0.len() > (k - 1) * b.1 + (n - 1) * b.2);
    // SAFETY: the slices cover every index reached through the given strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1 as isize,
            a.2 as isize,
            b.0.as_ptr(),
            b.1 as isize,
            b.2 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Mlp {
    /// Forward pass over `rows` inputs stored row-major in `inputs`.
    pub fn forward_batch<'t>(&self, inputs: &[f64], rows: usize, tape: &'t mut BatchTape) -> Result<&'t [f64]> {
        if inputs.len() != rows * self.input_dim() {
            return Err(Error::ShapeMismatch {
                context: "batch input",
                expected: rows * self.input_dim(),
                actual: inputs.len(),
            });
        }
        tape.rows = rows;
        tape.activations.resize_with(self.layers.len() + 1, Vec::new);
        tape.activations[0].clear();
        tape.activations[0].extend_from_slice(inputs);
        for (idx, layer) in self.layers.iter().enumerate() {
            let act = self.activation_of(idx);
            let (before, after) = tape.activations.split_at_mut(idx + 1);
            let x = &before[idx];
            let out = &mut after[0];
            out.clear();
            out.resize(rows * layer.outputs, 0.0);
            let (ni, no) = (layer.inputs, layer.outputs);
            gemm(rows, ni, no, (x, ni, 1), (&layer.weights, 1, ni), 0.0, out);
            for r in out.chunks_exact_mut(no) {
                for (z, b) in r.iter_mut().zip(&layer.biases) {
                    *z = act.apply(*z + b);
                }
            }
        }
        Ok(tape.output())
    }

    /// Batched [`Mlp::backward`]: `d_output` is `rows × outputs`. Accumulates
    /// parameter gradients summed over rows into `grads` when given and returns
    /// the `rows × inputs` input gradient when `want_input` is set.
    pub fn backward_batch(
        &self,
        tape: &BatchTape,
        d_output: &[f64],
        mut grads: Option<&mut Gradients>,
        want_input: bool,
    ) -> Result<Option<Vec<f64>>> {
        let rows = tape.rows;
        let consistent = tape.activations.len() == self.layers.len() + 1
            && tape.activations[0].len() == rows * self.input_dim()
            && self
                .layers
                .iter()
                .zip(&tape.activations[1..])
                .all(|(l, a)| a.len() == rows * l.outputs);
        if !consistent {
            return Err(Error::MissingTape);
        }
        if d_output.len() != rows * self.output_dim() {
            return Err(Error::ShapeMismatch {
                context: "batch output gradient",
                expected: rows * self.output_dim(),
                actual: d_output.len(),
            });
        }
        if let Some(g) = grads.as_deref() {
            self.check_grads(g)?;
        }
        let last = self.layers.len() - 1;
        let mut delta: Vec<f64> = d_output
            .iter()
            .zip(&tape.activations[last + 1])
            .map(|(g, &y)| g * self.output_activation.slope(y))
            .collect();

        for idx in (0..=last).rev() {
            let layer = &self.layers[idx];
            let (ni, no) = (layer.inputs, layer.outputs);
            let x = &tape.activations[idx];
            if let Some(g) = grads.as_deref_mut() {
                gemm(no, rows, ni, (&delta, 1, no), (x, ni, 1), 1.0, &mut g.weights[idx]);
                for d in delta.chunks_exact(no) {
                    for (gb, v) in g.biases[idx].iter_mut().zip(d) {
                        *gb += v;
                    }
                }
            }
            if idx == 0 && !want_input {
                return Ok(None);
            }
            let mut dx = vec![0.0; rows * ni];
            gemm(rows, no, ni, (&delta, no, 1), (&layer.weights, ni, 1), 0.0, &mut dx);
            if idx == 0 {
                return Ok(Some(dx));
            }
            for (d, &y) in dx.iter_mut().zip(x) {
                *d *= Activation::Relu.slope(y);
            }
            delta = dx;
        }
        unreachable!("loop returns at layer 0")
    }
}

/// `target ← τ·source + (1−τ)·target`, element-wise.
pub fn soft_update(target: &mut Mlp, source: &Mlp, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid(format!("tau must be in (0, 1], got {tau}")));
    }
    if !target.same_shape(source) {
        return Err(Error::ShapeMismatch {
            context: "soft update",
            expected: source.num_params(),
            actual: target.num_params(),
        });
    }
    for (t, s) in target.layers.iter_mut().zip(&source.layers) {
        for (tv, sv) in t
            .weights
            .iter_mut()
            .chain(t.biases.iter_mut())
            .zip(s.weights.iter().chain(&s.biases))
        {
            *tv = tau * sv + (1.0 - tau) * *tv;
        }
    }
    Ok(())
}

/// A slowly tracking copy of a network, changed only by [`TargetNetwork::soft_update`].
#[derive(Debug, Clone, PartialEq)]
pub struct TargetNetwork(Mlp);

impl TargetNetwork {
    pub fn from_source(source: &Mlp) -> Self {
        TargetNetwork(source.clone())
    }

    pub fn soft_update(&mut self, source: &Mlp, tau: f64) -> Result<()> {
        soft_update(&mut self.0, source, tau)
    }
}

impl Deref for TargetNetwork {
    type Target = Mlp;

    fn deref(&self) -> &Mlp {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction; moments are shaped like the network.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Gradients,
    second: Gradients,
}

impl Adam {
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: net.gradients(),
            second: net.gradients(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    /// Descend along `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        net.check_grads(grads)?;
        net.check_grads(&self.first)?;
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bias1 = 1.0 - beta1.powi(self.step as i32);
        let bias2 = 1.0 - beta2.powi(self.step as i32);
        let step_size = learning_rate / bias1;
        let bias2_sqrt = bias2.sqrt();

        for (idx, layer) in net.layers.iter_mut().enumerate() {
            let groups = [
                (&mut layer.weights, &grads.weights[idx], &mut self.first.weights[idx], &mut self.second.weights[idx]),
                (&mut layer.biases, &grads.biases[idx], &mut self.first.biases[idx], &mut self.second.biases[idx]),
            ];
            for (params, g, m, v) in groups {
                for (((p, &g), m), v) in params.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= step_size * *m / (v.sqrt() / bias2_sqrt + epsilon);
                }
            }
        }
        Ok(())
    }
}
