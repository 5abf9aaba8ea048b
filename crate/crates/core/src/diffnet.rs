//! A small fully-connected network with exact reverse-mode gradients and Adam.
//!
//! Hidden layers use ReLU, the output layer is a single linear unit producing a
//! pre-sigmoid score. The same type backs both the discriminators and the
//! reward regressors.

use std::io::{Read, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Hidden widths used for every discriminator and reward network.
pub const DEFAULT_HIDDEN: [usize; 2] = [32, 32];

/// Adam learning rate for supervised reward networks.
pub const REWARD_LR: f64 = 1e-4;
/// Adam learning rate for discriminators.
pub const DISCRIMINATOR_LR: f64 = 1e-5;

/// One affine layer. Weights are stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<S> {
    inputs: usize,
    outputs: usize,
    weights: Vec<S>,
    bias: Vec<S>,
}

impl<S: Scalar> Layer<S> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![S::zero(); inputs * outputs],
            bias: vec![S::zero(); outputs],
        }
    }

    pub fn from_parts(inputs: usize, outputs: usize, weights: Vec<S>, bias: Vec<S>) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::config("layer dimensions must be positive"));
        }
        if weights.len() != inputs * outputs || bias.len() != outputs {
            return Err(Error::config(format!(
                "layer {inputs}->{outputs} needs {} weights and {outputs} biases, got {} and {}",
                inputs * outputs,
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self { inputs, outputs, weights, bias })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn bias(&self) -> &[S] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [S] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [S] {
        &mut self.bias
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> S {
        self.weights[row * self.inputs + col]
    }

    fn same_shape(&self, other: &Layer<S>) -> bool {
        self.inputs == other.inputs && self.outputs == other.outputs
    }
}

/// Parameters of the feed-forward scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<S> {
    layers: Vec<Layer<S>>,
}

/// Derivatives of a scalar objective with respect to every parameter of an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<S> {
    layers: Vec<Layer<S>>,
}

/// Activations recorded by [`Mlp::forward_batch`] for a later backward pass.
#[derive(Debug, Clone)]
pub struct Tape<S> {
    n: usize,
    // inputs[l] is the n x in_l matrix fed into layer l
    inputs: Vec<Vec<S>>,
    // pre[l] is the n x out_l matrix of pre-activations of layer l
    pre: Vec<Vec<S>>,
}

impl<S: Scalar> Tape<S> {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Output scores, one per example.
    pub fn scores(&self) -> &[S] {
        self.pre.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::config("a network needs at least an input and an output size"));
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::config("layer sizes must be positive"));
    }
    if *sizes.last().unwrap() != 1 {
        return Err(Error::config("the final layer must output a single score"));
    }
    Ok(())
}

impl<S: Scalar> Mlp<S> {
    /// Glorot-uniform weights and zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = (0..fan_in * fan_out)
                    .map(|_| S::lit(rng.random_range(-limit..=limit)))
                    .collect();
                Layer { inputs: fan_in, outputs: fan_out, weights, bias: vec![S::zero(); fan_out] }
            })
            .collect();
        Ok(Self { layers })
    }

    /// `input -> 32 ReLU -> 32 ReLU -> 1`.
    pub fn with_default_hidden<R: Rng + ?Sized>(input_dim: usize, rng: &mut R) -> Result<Self> {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(&DEFAULT_HIDDEN);
        sizes.push(1);
        Self::new(&sizes, rng)
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        check_sizes(sizes)?;
        Ok(Self { layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect() })
    }

    pub fn from_layers(layers: Vec<Layer<S>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("a network needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::config(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].outputs,
                    i + 1,
                    pair[1].inputs
                )));
            }
        }
        if layers.last().unwrap().outputs != 1 {
            return Err(Error::config("the final layer must output a single score"));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<S>] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Flat view over all parameters: layer by layer, weights then biases.
    pub fn values(&self) -> impl Iterator<Item = &S> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut S> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    fn check_input(&self, x: &[S]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::config(format!(
                "feature vector has {} entries, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Pre-sigmoid score of a single feature vector.
    pub fn forward(&self, x: &[S]) -> Result<S> {
        self.check_input(x)?;
        let mut current: Vec<S> = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut next = layer.bias.clone();
            for (o, out) in next.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                let mut acc = *out;
                for (w, a) in row.iter().zip(&current) {
                    acc += *w * *a;
                }
                *out = if li < last { acc.max(S::zero()) } else { acc };
            }
            current = next;
        }
        Ok(current[0])
    }

    /// Runs a batch forward and keeps the activations needed by [`Mlp::backward_tape`].
    pub fn forward_batch<X: AsRef<[S]>>(&self, batch: &[X]) -> Result<Tape<S>> {
        let n = batch.len();
        let d = self.input_dim();
        let mut input = Vec::with_capacity(n * d);
        for x in batch {
            let x = x.as_ref();
            self.check_input(x)?;
            input.extend_from_slice(x);
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = input;
        for (li, layer) in self.layers.iter().enumerate() {
            let (fi, fo) = (layer.inputs, layer.outputs);
            let mut z = vec![S::zero(); n * fo];
            for e in 0..n {
                let a = &current[e * fi..(e + 1) * fi];
                let zr = &mut z[e * fo..(e + 1) * fo];
                for o in 0..fo {
                    let row = &layer.weights[o * fi..(o + 1) * fi];
                    let mut acc = layer.bias[o];
                    for (w, v) in row.iter().zip(a) {
                        acc += *w * *v;
                    }
                    zr[o] = acc;
                }
            }
            let next = if li < last { z.iter().map(|v| v.max(S::zero())).collect() } else { Vec::new() };
            inputs.push(std::mem::replace(&mut current, next));
            pre.push(z);
        }
        Ok(Tape { n, inputs, pre })
    }

    /// Gradient of `sum_i upstream[i] * score(x_i)` given a tape of the batch.
    pub fn backward_tape(&self, tape: &Tape<S>, upstream: &[S]) -> Result<Gradient<S>> {
        if upstream.len() != tape.n {
            return Err(Error::config(format!(
                "{} upstream gradients for a batch of {}",
                upstream.len(),
                tape.n
            )));
        }
        if tape.inputs.len() != self.layers.len() {
            return Err(Error::config("tape was recorded with a different network"));
        }
        let n = tape.n;
        let mut grad = Gradient::zeros_like(self);
        let mut delta: Vec<S> = upstream.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let (fi, fo) = (layer.inputs, layer.outputs);
            let input = &tape.inputs[li];
            let g = &mut grad.layers[li];
            for e in 0..n {
                let a = &input[e * fi..(e + 1) * fi];
                let dr = &delta[e * fo..(e + 1) * fo];
                for (o, &dv) in dr.iter().enumerate() {
                    if dv == S::zero() {
                        continue;
                    }
                    g.bias[o] += dv;
                    let grow = &mut g.weights[o * fi..(o + 1) * fi];
                    for (gw, av) in grow.iter_mut().zip(a) {
                        *gw += dv * *av;
                    }
                }
            }
            if li > 0 {
                let below = &tape.pre[li - 1];
                let mut prev = vec![S::zero(); n * fi];
                for e in 0..n {
                    let dr = &delta[e * fo..(e + 1) * fo];
                    let pr = &mut prev[e * fi..(e + 1) * fi];
                    for (o, &dv) in dr.iter().enumerate() {
                        if dv == S::zero() {
                            continue;
                        }
                        let row = &layer.weights[o * fi..(o + 1) * fi];
                        for (p, w) in pr.iter_mut().zip(row) {
                            *p += dv * *w;
                        }
                    }
                    for (p, z) in pr.iter_mut().zip(&below[e * fi..(e + 1) * fi]) {
                        if *z <= S::zero() {
                            *p = S::zero();
                        }
                    }
                }
                delta = prev;
            }
        }
        Ok(grad)
    }

    /// Exact gradient of the summed per-example loss contributions, where
    /// `upstream[i]` is the derivative of example `i`'s loss with respect to its score.
    pub fn backward<X: AsRef<[S]>>(&self, batch: &[X], upstream: &[S]) -> Result<Gradient<S>> {
        if upstream.len() != batch.len() {
            return Err(Error::config(format!(
                "{} upstream gradients for a batch of {}",
                upstream.len(),
                batch.len()
            )));
        }
        let tape = self.forward_batch(batch)?;
        self.backward_tape(&tape, upstream)
    }

    /// Writes the parameter snapshot as `layer,kind,row,col,value` rows.
    /// Biases use `col = 0`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["layer", "kind", "row", "col", "value"])?;
        for (li, layer) in self.layers.iter().enumerate() {
            for r in 0..layer.outputs {
                for c in 0..layer.inputs {
                    w.write_record(&[
                        li.to_string(),
                        "weight".into(),
                        r.to_string(),
                        c.to_string(),
                        layer.weight(r, c).to_string(),
                    ])?;
                }
            }
            for (r, b) in layer.bias.iter().enumerate() {
                w.write_record(&[li.to_string(), "bias".into(), r.to_string(), "0".into(), b.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a snapshot written by [`Mlp::write_csv`]. Lines starting with `#` are skipped.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        // (layer, kind, row, col, value)
        let mut rows: Vec<(usize, bool, usize, usize, S)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 5 {
                return Err(Error::Parse(format!("expected 5 fields, found {}", rec.len())));
            }
            let parse_idx = |i: usize| -> Result<usize> {
                rec[i].trim().parse().map_err(|_| Error::Parse(format!("bad index {:?}", &rec[i])))
            };
            let is_weight = match rec[1].trim() {
                "weight" => true,
                "bias" => false,
                other => return Err(Error::Parse(format!("unknown parameter kind {other:?}"))),
            };
            let value: S =
                rec[4].trim().parse().map_err(|_| Error::Parse(format!("bad value {:?}", &rec[4])))?;
            rows.push((parse_idx(0)?, is_weight, parse_idx(2)?, parse_idx(3)?, value));
        }
        let n_layers = rows.iter().map(|r| r.0 + 1).max().ok_or_else(|| Error::Parse("empty snapshot".into()))?;
        let mut layers = Vec::with_capacity(n_layers);
        for li in 0..n_layers {
            let outputs = rows.iter().filter(|r| r.0 == li).map(|r| r.2 + 1).max().unwrap_or(0);
            let inputs = rows.iter().filter(|r| r.0 == li && r.1).map(|r| r.3 + 1).max().unwrap_or(0);
            let mut layer = Layer::zeros(inputs, outputs);
            let mut seen = vec![false; inputs * outputs + outputs];
            for &(_, is_weight, r, c, v) in rows.iter().filter(|r| r.0 == li) {
                let slot = if is_weight {
                    layer.weights[r * inputs + c] = v;
                    r * inputs + c
                } else {
                    layer.bias[r] = v;
                    inputs * outputs + r
                };
                seen[slot] = true;
            }
            if seen.iter().any(|s| !s) || inputs == 0 {
                return Err(Error::Parse(format!("snapshot layer {li} is incomplete")));
            }
            layers.push(layer);
        }
        Self::from_layers(layers)
    }
}

impl<S: Scalar> Gradient<S> {
    pub fn zeros_like(params: &Mlp<S>) -> Self {
        Self { layers: params.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect() }
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    pub fn values(&self) -> impl Iterator<Item = &S> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn matches(&self, params: &Mlp<S>) -> bool {
        self.layers.len() == params.layers.len()
            && self.layers.iter().zip(&params.layers).all(|(a, b)| a.same_shape(b))
    }

    /// Location and value of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<(String, S)> {
        for (li, l) in self.layers.iter().enumerate() {
            if let Some((i, v)) = l.weights.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Some((format!("layer {li} weight[{},{}]", i / l.inputs, i % l.inputs), *v));
            }
            if let Some((i, v)) = l.bias.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Some((format!("layer {li} bias[{i}]"), *v));
            }
        }
        None
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Gradient<S>, scale: S) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += scale * *y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += scale * *y;
            }
        }
    }

    pub fn scale(&mut self, factor: S) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v *= factor);
        }
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig<S> {
    pub lr: S,
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
}

impl<S: Scalar> AdamConfig<S> {
    /// `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn with_lr(lr: S) -> Self {
        Self { lr, beta1: S::lit(0.9), beta2: S::lit(0.999), eps: S::lit(1e-8) }
    }

    fn validate(&self) -> Result<()> {
        let positive = |v: S| v.is_finite() && v > S::zero();
        if !positive(self.lr) || !positive(self.eps) {
            return Err(Error::config("Adam learning rate and epsilon must be positive"));
        }
        if !(positive(self.beta1) && self.beta1 < S::one() && positive(self.beta2) && self.beta2 < S::one()) {
            return Err(Error::config("Adam betas must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Moment estimates and step counter of an Adam optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<S> {
    config: AdamConfig<S>,
    m: Gradient<S>,
    v: Gradient<S>,
    step: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(params: &Mlp<S>, config: AdamConfig<S>) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, m: Gradient::zeros_like(params), v: Gradient::zeros_like(params), step: 0 })
    }

    pub fn config(&self) -> &AdamConfig<S> {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &Gradient<S> {
        &self.m
    }

    pub fn second_moment(&self) -> &Gradient<S> {
        &self.v
    }
}

/// One bias-corrected Adam update of `params` along `grad`.
///
/// Fails without touching `params` or `state` if the gradient has a non-finite entry.
pub fn adam_step<S: Scalar>(params: &mut Mlp<S>, grad: &Gradient<S>, state: &mut AdamState<S>) -> Result<()> {
    if !grad.matches(params) || !state.m.matches(params) {
        return Err(Error::config("gradient, optimizer state and parameters have different shapes"));
    }
    if let Some((loc, v)) = grad.first_non_finite() {
        return Err(Error::training("non-finite gradient", loc, v.as_f64()));
    }
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = S::one() - beta1.powi(t);
    let c2 = S::one() - beta2.powi(t);
    for (li, layer) in params.layers.iter_mut().enumerate() {
        let g = &grad.layers[li];
        let m = &mut state.m.layers[li];
        let v = &mut state.v.layers[li];
        let update = |p: &mut S, g: S, m: &mut S, v: &mut S| {
            *m = beta1 * *m + (S::one() - beta1) * g;
            *v = beta2 * *v + (S::one() - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for i in 0..layer.weights.len() {
            update(&mut layer.weights[i], g.weights[i], &mut m.weights[i], &mut v.weights[i]);
        }
        for i in 0..layer.bias.len() {
            update(&mut layer.bias[i], g.bias[i], &mut m.bias[i], &mut v.bias[i]);
        }
    }
    Ok(())
}
