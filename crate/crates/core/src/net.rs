//! Dense feed-forward networks with Monte-Carlo dropout / dropconnect.
//!
//! A network is a chain of affine layers. Every layer except the last is a
//! hidden layer whose post-activation vector can be masked (MC dropout); the
//! final layer's weights can be masked instead (MC dropconnect). Masks are
//! applied without the `1/(1-p)` rescaling unless the network's
//! [`DropoutScaling`] says otherwise, so a dropped unit contributes
//! `Δa_j = -a_j` exactly.

use rand::Rng;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numstat;
use crate::seed::{derive_seed, rng_from_seed, SeedPart};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
    Softmax,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
            Activation::Softmax => "softmax",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            "softmax" => Some(Activation::Softmax),
            _ => None,
        }
    }
}

/// Ensemble-generating UQ method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UqKind {
    /// Monte-Carlo dropout on every hidden layer's activations.
    Mcd,
    /// Monte-Carlo dropconnect on the final layer's weights.
    Mcdc,
}

impl UqKind {
    pub fn label(self) -> &'static str {
        match self {
            UqKind::Mcd => "mcd",
            UqKind::Mcdc => "mcdc",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "mcd" => Some(UqKind::Mcd),
            "mcdc" => Some(UqKind::Mcdc),
            _ => None,
        }
    }
}

/// How kept units are scaled when a mask is applied at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropoutScaling {
    #[default]
    None,
    Inverted,
}

impl DropoutScaling {
    /// Factor applied to kept units for drop probability `p`.
    pub fn keep_factor(self, p: f64) -> f64 {
        match self {
            DropoutScaling::None => 1.0,
            DropoutScaling::Inverted => 1.0 / (1.0 - p),
        }
    }

    /// Variance of the per-unit multiplicative perturbation `m - 1`
    /// (`m` the applied keep factor) for drop probability `p`.
    pub fn perturbation_variance(self, p: f64) -> f64 {
        match self {
            DropoutScaling::None => p * (1.0 - p),
            DropoutScaling::Inverted => p / (1.0 - p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if weights.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::Dimension(format!(
                "layer {in_dim}->{out_dim} needs {} weights and {out_dim} biases, got {} and {}",
                in_dim * out_dim,
                weights.len(),
                bias.len()
            )));
        }
        numstat::ensure_finite(&weights)?;
        numstat::ensure_finite(&bias)?;
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        })
    }

    #[inline]
    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.in_dim + inp]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNetwork {
    layers: Vec<DenseLayer>,
    /// Drop probability per hidden layer.
    dropout: Vec<f64>,
    /// Drop probability on final-layer weights.
    dropconnect: f64,
    scaling: DropoutScaling,
}

/// Keep/drop masks for one ensemble member. Entries are `1.0` (keep) or
/// `0.0` (drop).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSet {
    pub kind: UqKind,
    /// MCD: one mask per hidden layer. MCDC: a single mask over the
    /// final layer's row-major weight matrix.
    pub masks: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Replaces one hidden layer's post-activation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationOverride {
    pub layer: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub output: Vec<f64>,
    /// Post-activation vector of every layer as fed forward (after masks and
    /// overrides); the last entry equals `output`.
    pub activations: Vec<Vec<f64>>,
}

/// `K` stochastic predictions for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveEnsemble {
    pub predictions: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Output index explained by every member: 0 for regression, the argmax
    /// of the averaged softmax for classification.
    pub target: usize,
    /// Regression: mean prediction. Classification: the predicted class.
    pub y_hat: f64,
    /// Sample variance of the members' target outputs.
    pub variance: f64,
}

/// Per-layer multiplicative gates (plus a constant term) applied to hidden
/// activations, and optional factors on the final-layer weights.
///
/// A unit's fed-forward activation is `scale * h + offset` where `h` is the
/// raw activation, so gradients keep flowing through gated units.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gating {
    hidden: Vec<Option<LayerGate>>,
    final_weights: Option<Vec<f64>>,
}

impl Gating {
    pub(crate) fn final_weights(&self) -> Option<&[f64]> {
        self.final_weights.as_deref()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LayerGate {
    scale: Vec<f64>,
    offset: Vec<f64>,
}

/// Intermediate values of one forward pass, enough for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct Trace {
    /// Input fed into each layer (x for layer 0).
    pub inputs: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
    /// Activation after the gate; for the output layer the network output.
    pub post: Vec<Vec<f64>>,
}

fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

fn check_probability(p: f64, what: &str) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "{what} probability {p} outside [0, 1)"
        )));
    }
    Ok(())
}

impl DenseNetwork {
    pub fn new(layers: Vec<DenseLayer>, dropout: Vec<f64>, dropconnect: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Dimension("network has no layers".into()));
        }
        for w in layers.windows(2) {
            if w[0].out_dim != w[1].in_dim {
                return Err(Error::Dimension(format!(
                    "layer output {} does not feed layer input {}",
                    w[0].out_dim, w[1].in_dim
                )));
            }
        }
        if let Some(l) = layers[..layers.len() - 1]
            .iter()
            .find(|l| l.activation == Activation::Softmax)
        {
            return Err(Error::UnsupportedActivation(format!(
                "{} (hidden layer {}->{})",
                l.activation.name(),
                l.in_dim,
                l.out_dim
            )));
        }
        if dropout.len() != layers.len() - 1 {
            return Err(Error::Dimension(format!(
                "expected {} dropout probabilities, got {}",
                layers.len() - 1,
                dropout.len()
            )));
        }
        for &p in &dropout {
            check_probability(p, "dropout")?;
        }
        check_probability(dropconnect, "dropconnect")?;
        Ok(Self {
            layers,
            dropout,
            dropconnect,
            scaling: DropoutScaling::None,
        })
    }

    /// He-initialised multilayer perceptron with ReLU hidden layers.
    pub fn mlp(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        output_activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden.contains(&0) {
            return Err(Error::Dimension("layer widths must be positive".into()));
        }
        let mut rng = rng_from_seed(seed);
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, w) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let std = (2.0 / fan_in as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            let weights = (0..fan_in * fan_out).map(|_| normal.sample(&mut rng)).collect();
            let activation = if i + 2 == dims.len() {
                output_activation
            } else {
                Activation::Relu
            };
            layers.push(DenseLayer::new(
                fan_in,
                fan_out,
                weights,
                vec![0.0; fan_out],
                activation,
            )?);
        }
        let hidden_count = layers.len() - 1;
        Self::new(layers, vec![0.0; hidden_count], 0.0)
    }

    pub fn with_dropout(mut self, p: f64) -> Result<Self> {
        check_probability(p, "dropout")?;
        self.dropout.iter_mut().for_each(|d| *d = p);
        Ok(self)
    }

    pub fn with_dropout_per_layer(mut self, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != self.dropout.len() {
            return Err(Error::Dimension(format!(
                "expected {} dropout probabilities, got {}",
                self.dropout.len(),
                probs.len()
            )));
        }
        for &p in &probs {
            check_probability(p, "dropout")?;
        }
        self.dropout = probs;
        Ok(self)
    }

    pub fn with_dropconnect(mut self, p: f64) -> Result<Self> {
        check_probability(p, "dropconnect")?;
        self.dropconnect = p;
        Ok(self)
    }

    pub fn with_scaling(mut self, scaling: DropoutScaling) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn dropout(&self) -> &[f64] {
        &self.dropout
    }

    pub fn dropconnect(&self) -> f64 {
        self.dropconnect
    }

    pub fn scaling(&self) -> DropoutScaling {
        self.scaling
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn hidden_count(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn output_activation(&self) -> Activation {
        self.layers[self.layers.len() - 1].activation
    }

    pub fn final_layer(&self) -> &DenseLayer {
        &self.layers[self.layers.len() - 1]
    }

    /// Replace the final layer's weights (same shape).
    pub fn with_final_weights(&self, weights: &[f64]) -> Result<Self> {
        let mut net = self.clone();
        let last = net.layers.len() - 1;
        if weights.len() != net.layers[last].weights.len() {
            return Err(Error::Dimension(format!(
                "final layer has {} weights, got {}",
                net.layers[last].weights.len(),
                weights.len()
            )));
        }
        net.layers[last].weights.copy_from_slice(weights);
        Ok(net)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has length {}, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn check_target(&self, target: Option<usize>) -> Result<usize> {
        let t = target.unwrap_or(0);
        if t >= self.output_dim() {
            return Err(Error::InvalidArgument(format!(
                "target index {t} out of range for {} outputs",
                self.output_dim()
            )));
        }
        Ok(t)
    }

    /// Draw i.i.d. Bernoulli keep/drop decisions for one ensemble member.
    pub fn sample_masks(&self, kind: UqKind, seed: u64) -> MaskSet {
        let mut rng = rng_from_seed(seed);
        let masks = match kind {
            UqKind::Mcd => self.layers[..self.hidden_count()]
                .iter()
                .zip(&self.dropout)
                .map(|(layer, &p)| bernoulli_keep(&mut rng, layer.out_dim, p))
                .collect(),
            UqKind::Mcdc => {
                vec![bernoulli_keep(
                    &mut rng,
                    self.final_layer().weights.len(),
                    self.dropconnect,
                )]
            }
        };
        MaskSet { kind, masks, seed }
    }

    fn validate_masks(&self, masks: &MaskSet) -> Result<()> {
        let shape_ok = match masks.kind {
            UqKind::Mcd => {
                masks.masks.len() == self.hidden_count()
                    && masks
                        .masks
                        .iter()
                        .zip(&self.layers)
                        .all(|(m, l)| m.len() == l.out_dim)
            }
            UqKind::Mcdc => {
                masks.masks.len() == 1 && masks.masks[0].len() == self.final_layer().weights.len()
            }
        };
        if !shape_ok {
            return Err(Error::Dimension(format!(
                "{} mask shape does not match the network",
                masks.kind.label()
            )));
        }
        Ok(())
    }

    /// Gating for masks only.
    pub(crate) fn mask_gating(&self, masks: Option<&MaskSet>) -> Result<Gating> {
        let mut gating = Gating {
            hidden: vec![None; self.hidden_count()],
            final_weights: None,
        };
        if let Some(m) = masks {
            self.validate_masks(m)?;
            match m.kind {
                UqKind::Mcd => {
                    for (l, (mask, &p)) in m.masks.iter().zip(&self.dropout).enumerate() {
                        let f = self.scaling.keep_factor(p);
                        gating.hidden[l] = Some(LayerGate {
                            scale: mask.iter().map(|v| v * f).collect(),
                            offset: vec![0.0; mask.len()],
                        });
                    }
                }
                UqKind::Mcdc => {
                    let f = self.scaling.keep_factor(self.dropconnect);
                    gating.final_weights = Some(m.masks[0].iter().map(|v| v * f).collect());
                }
            }
        }
        Ok(gating)
    }

    /// Gating for masks plus an activation override evaluated at `x`.
    ///
    /// The override becomes a gate relative to the raw activation at `x`:
    /// active units are rescaled (so gradients still flow through them) and
    /// inactive units receive the override as a constant.
    pub fn gating(
        &self,
        x: &[f64],
        masks: Option<&MaskSet>,
        ovr: Option<&ActivationOverride>,
    ) -> Result<Gating> {
        self.check_input(x)?;
        let mut gating = self.mask_gating(masks)?;
        if let Some(o) = ovr {
            if o.layer >= self.hidden_count() {
                return Err(Error::InvalidArgument(format!(
                    "override layer {} is not a hidden layer (network has {})",
                    o.layer,
                    self.hidden_count()
                )));
            }
            if o.values.len() != self.layers[o.layer].out_dim {
                return Err(Error::Dimension(format!(
                    "override for layer {} has length {}, layer width is {}",
                    o.layer,
                    o.values.len(),
                    self.layers[o.layer].out_dim
                )));
            }
            numstat::ensure_finite(&o.values)?;
            let raw = self.raw_activation(x, &gating, o.layer);
            let mut scale = vec![0.0; raw.len()];
            let mut offset = vec![0.0; raw.len()];
            for j in 0..raw.len() {
                if raw[j] != 0.0 {
                    scale[j] = o.values[j] / raw[j];
                } else {
                    offset[j] = o.values[j];
                }
            }
            gating.hidden[o.layer] = Some(LayerGate { scale, offset });
        }
        Ok(gating)
    }

    /// Raw (ungated) activation of hidden layer `upto` at `x`.
    fn raw_activation(&self, x: &[f64], gating: &Gating, upto: usize) -> Vec<f64> {
        let mut a = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate().take(upto + 1) {
            let mut h = affine(layer, &a, None);
            for v in h.iter_mut() {
                *v = activate_scalar(layer.activation, *v);
            }
            if l == upto {
                return h;
            }
            apply_gate(&mut h, gating.hidden[l].as_ref());
            a = h;
        }
        unreachable!("upto is a hidden layer index")
    }

    /// Output only, no trace.
    pub(crate) fn output_gated(&self, x: &[f64], gating: &Gating) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut a = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let wf = if l == last {
                gating.final_weights.as_deref()
            } else {
                None
            };
            let mut z = affine(layer, &a, wf);
            if layer.activation == Activation::Softmax {
                softmax_in_place(&mut z);
            } else {
                for v in z.iter_mut() {
                    *v = activate_scalar(layer.activation, *v);
                }
            }
            if l < last {
                apply_gate(&mut z, gating.hidden[l].as_ref());
            }
            a = z;
        }
        a
    }

    pub(crate) fn trace(&self, x: &[f64], gating: &Gating) -> Trace {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let wf = if l == last {
                gating.final_weights.as_deref()
            } else {
                None
            };
            let z = affine(layer, &a, wf);
            let mut h = z.clone();
            if layer.activation == Activation::Softmax {
                softmax_in_place(&mut h);
            } else {
                for v in h.iter_mut() {
                    *v = activate_scalar(layer.activation, *v);
                }
            }
            if l < last {
                apply_gate(&mut h, gating.hidden[l].as_ref());
            }
            inputs.push(std::mem::replace(&mut a, h.clone()));
            pre.push(z);
            post.push(h);
        }
        Trace { inputs, pre, post }
    }

    /// Gradient of output `target` with respect to the input under `gating`.
    pub(crate) fn gradient_gated(&self, x: &[f64], gating: &Gating, target: usize) -> Vec<f64> {
        let tr = self.trace(x, gating);
        let last = self.layers.len() - 1;
        let out_layer = &self.layers[last];
        // d output[target] / d z_last
        let mut delta = vec![0.0; out_layer.out_dim];
        match out_layer.activation {
            Activation::Identity => delta[target] = 1.0,
            Activation::Relu => {
                if tr.pre[last][target] > 0.0 {
                    delta[target] = 1.0;
                }
            }
            Activation::Softmax => {
                let p = &tr.post[last];
                for (k, d) in delta.iter_mut().enumerate() {
                    let kron = if k == target { 1.0 } else { 0.0 };
                    *d = p[target] * (kron - p[k]);
                }
            }
        }
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let wf = if l == last {
                gating.final_weights.as_deref()
            } else {
                None
            };
            // d/d input of layer l
            let mut grad_in = vec![0.0; layer.in_dim];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                match wf {
                    Some(f) => {
                        let frow = &f[o * layer.in_dim..(o + 1) * layer.in_dim];
                        for i in 0..layer.in_dim {
                            grad_in[i] += d * row[i] * frow[i];
                        }
                    }
                    None => {
                        for (g, w) in grad_in.iter_mut().zip(row) {
                            *g += d * w;
                        }
                    }
                }
            }
            if l == 0 {
                return grad_in;
            }
            // back through gate and activation of layer l-1
            let below = &self.layers[l - 1];
            let z = &tr.pre[l - 1];
            let gate = gating.hidden[l - 1].as_ref();
            delta = grad_in;
            for j in 0..delta.len() {
                let s = gate.map_or(1.0, |g| g.scale[j]);
                let act = match below.activation {
                    Activation::Relu => {
                        if z[j] > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    _ => 1.0,
                };
                delta[j] *= s * act;
            }
        }
        unreachable!()
    }

    /// Forward pass with optional masks and an optional activation override.
    pub fn forward(
        &self,
        x: &[f64],
        masks: Option<&MaskSet>,
        ovr: Option<&ActivationOverride>,
    ) -> Result<ForwardPass> {
        let gating = self.gating(x, masks, ovr)?;
        let tr = self.trace(x, &gating);
        Ok(ForwardPass {
            output: tr.post.last().cloned().unwrap_or_default(),
            activations: tr.post,
        })
    }

    /// Gradient of the target output (index 0 when `None`) with respect to x.
    pub fn input_gradient(
        &self,
        x: &[f64],
        masks: Option<&MaskSet>,
        ovr: Option<&ActivationOverride>,
        target: Option<usize>,
    ) -> Result<Vec<f64>> {
        let t = self.check_target(target)?;
        let gating = self.gating(x, masks, ovr)?;
        Ok(self.gradient_gated(x, &gating, t))
    }

    /// `K` masked forward passes. Member `k` uses masks seeded by
    /// `derive_seed(seed, ["member", k])`.
    pub fn mc_ensemble(
        &self,
        x: &[f64],
        kind: UqKind,
        k: usize,
        seed: u64,
    ) -> Result<(PredictiveEnsemble, Vec<MaskSet>)> {
        if k < 2 {
            return Err(Error::TooShort {
                required: 2,
                actual: k,
            });
        }
        self.check_input(x)?;
        let mut masks = Vec::with_capacity(k);
        let mut predictions = Vec::with_capacity(k);
        for member in 0..k {
            let ms = self.sample_masks(kind, member_seed(seed, member));
            let gating = self.mask_gating(Some(&ms))?;
            predictions.push(self.output_gated(x, &gating));
            masks.push(ms);
        }
        Ok((self.summarize(predictions)?, masks))
    }

    /// Mean, explained target and target variance of member predictions.
    pub fn summarize(&self, predictions: Vec<Vec<f64>>) -> Result<PredictiveEnsemble> {
        let out = self.output_dim();
        let kf = predictions.len() as f64;
        let mut mean = vec![0.0; out];
        for p in &predictions {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v / kf;
            }
        }
        let (target, y_hat) = if self.output_activation() == Activation::Softmax {
            let t = argmax(&mean);
            (t, t as f64)
        } else {
            (0, mean[0])
        };
        let column: Vec<[f64; 1]> = predictions.iter().map(|p| [p[target]]).collect();
        let variance = numstat::covariance_diagonal(&column)?[0];
        Ok(PredictiveEnsemble {
            predictions,
            mean,
            target,
            y_hat,
            variance,
        })
    }
}

pub fn member_seed(seed: u64, member: usize) -> u64 {
    derive_seed(seed, &[SeedPart::Label("member"), SeedPart::Int(member as u64)])
}

fn bernoulli_keep<R: Rng>(rng: &mut R, len: usize, p: f64) -> Vec<f64> {
    (0..len)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { 1.0 })
        .collect()
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[inline]
fn activate_scalar(act: Activation, z: f64) -> f64 {
    match act {
        Activation::Relu => relu(z),
        Activation::Identity | Activation::Softmax => z,
    }
}

fn apply_gate(h: &mut [f64], gate: Option<&LayerGate>) {
    if let Some(g) = gate {
        for ((v, s), c) in h.iter_mut().zip(&g.scale).zip(&g.offset) {
            *v = *v * s + c;
        }
    }
}

fn affine(layer: &DenseLayer, a: &[f64], weight_factors: Option<&[f64]>) -> Vec<f64> {
    let mut z = layer.bias.clone();
    for (o, zo) in z.iter_mut().enumerate() {
        let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
        let mut acc = 0.0;
        match weight_factors {
            Some(f) => {
                let frow = &f[o * layer.in_dim..(o + 1) * layer.in_dim];
                for i in 0..layer.in_dim {
                    acc += row[i] * frow[i] * a[i];
                }
            }
            None => {
                for (w, x) in row.iter().zip(a) {
                    acc += w * x;
                }
            }
        }
        *zo += acc;
    }
    z
}

// ---------------------------------------------------------------------------
// Training

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Mse,
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub weight_decay: f64,
    pub loss: Loss,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            weight_decay: 0.0,
            loss: Loss::Mse,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(
                "learning rate must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidArgument("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub final_loss: f64,
}

/// Inputs and targets for training. Classification targets are class
/// indices stored as `f64`.
#[derive(Debug, Clone, Copy)]
pub struct TrainingSet<'a> {
    pub inputs: &'a [Vec<f64>],
    pub targets: &'a [f64],
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

/// Train with Adam on mini-batches.
///
/// Stochastic regularisation follows the network's configuration: hidden
/// dropout and final-layer dropconnect are sampled per example with
/// inverted (`1/(1-p)`) scaling.
pub fn train(
    net: &DenseNetwork,
    data: TrainingSet<'_>,
    cfg: &TrainConfig,
) -> Result<(DenseNetwork, TrainSummary)> {
    cfg.validate()?;
    if data.inputs.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if data.inputs.len() != data.targets.len() {
        return Err(Error::LengthMismatch {
            left: data.inputs.len(),
            right: data.targets.len(),
        });
    }
    for row in data.inputs {
        net.check_input(row)?;
    }
    let classification = cfg.loss == Loss::CrossEntropy;
    if classification && net.output_activation() != Activation::Softmax {
        return Err(Error::InvalidArgument(
            "cross-entropy needs a softmax output layer".into(),
        ));
    }
    if classification {
        if let Some(t) = data
            .targets
            .iter()
            .find(|t| t.fract() != 0.0 || **t < 0.0 || **t as usize >= net.output_dim())
        {
            return Err(Error::InvalidArgument(format!("invalid class label {t}")));
        }
    }

    let mut net = net.clone();
    let mut rng = rng_from_seed(cfg.seed);
    // Start the regression output at the target mean.
    if !classification && net.output_activation() == Activation::Identity {
        let mean = data.targets.iter().sum::<f64>() / data.targets.len() as f64;
        let last = net.layers.len() - 1;
        net.layers[last].bias.iter_mut().for_each(|b| *b = mean);
    }

    let sizes: Vec<usize> = net.layers.iter().map(|l| l.weights.len() + l.bias.len()).collect();
    let mut adam = Adam {
        m: sizes.iter().map(|&s| vec![0.0; s]).collect(),
        v: sizes.iter().map(|&s| vec![0.0; s]).collect(),
        t: 0,
    };
    let mut order: Vec<usize> = (0..data.inputs.len()).collect();
    let mut final_loss = f64::NAN;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
            for &i in batch {
                let gating = training_gating(&net, &mut rng);
                epoch_loss += accumulate_example(
                    &net,
                    &data.inputs[i],
                    data.targets[i],
                    classification,
                    &gating,
                    &mut grads,
                );
            }
            let scale = 1.0 / batch.len() as f64;
            adam_step(&mut net, &mut adam, &grads, scale, cfg);
        }
        epoch_loss /= data.inputs.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: epoch_loss,
            });
        }
        final_loss = epoch_loss;
        log::trace!("epoch {epoch}: loss {epoch_loss:.6}");
    }
    Ok((
        net,
        TrainSummary {
            epochs: cfg.epochs,
            final_loss,
        },
    ))
}

fn training_gating<R: Rng>(net: &DenseNetwork, rng: &mut R) -> Gating {
    let mut gating = Gating {
        hidden: vec![None; net.hidden_count()],
        final_weights: None,
    };
    for (l, &p) in net.dropout.iter().enumerate() {
        if p > 0.0 {
            let f = 1.0 / (1.0 - p);
            let scale = bernoulli_keep(rng, net.layers[l].out_dim, p)
                .into_iter()
                .map(|m| m * f)
                .collect::<Vec<_>>();
            let n = scale.len();
            gating.hidden[l] = Some(LayerGate {
                scale,
                offset: vec![0.0; n],
            });
        }
    }
    if net.dropconnect > 0.0 {
        let f = 1.0 / (1.0 - net.dropconnect);
        gating.final_weights = Some(
            bernoulli_keep(rng, net.final_layer().weights.len(), net.dropconnect)
                .into_iter()
                .map(|m| m * f)
                .collect(),
        );
    }
    gating
}

/// Adds parameter gradients of one example's loss into `grads`; returns the loss.
fn accumulate_example(
    net: &DenseNetwork,
    x: &[f64],
    y: f64,
    classification: bool,
    gating: &Gating,
    grads: &mut [Vec<f64>],
) -> f64 {
    let tr = net.trace(x, gating);
    let last = net.layers.len() - 1;
    let out = &tr.post[last];
    let (loss, mut delta) = if classification {
        let c = y as usize;
        let loss = -(out[c].max(1e-300)).ln();
        let mut d = out.clone();
        d[c] -= 1.0;
        (loss, d)
    } else {
        let err = out[0] - y;
        let mut d = vec![0.0; out.len()];
        d[0] = 2.0 * err;
        if net.layers[last].activation == Activation::Relu && tr.pre[last][0] <= 0.0 {
            d[0] = 0.0;
        }
        (err * err, d)
    };
    for l in (0..=last).rev() {
        let layer = &net.layers[l];
        let input = &tr.inputs[l];
        let wf = if l == last {
            gating.final_weights.as_deref()
        } else {
            None
        };
        let g = &mut grads[l];
        let nw = layer.weights.len();
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let base = o * layer.in_dim;
            for i in 0..layer.in_dim {
                let f = wf.map_or(1.0, |f| f[base + i]);
                g[base + i] += d * input[i] * f;
            }
            g[nw + o] += d;
        }
        if l == 0 {
            break;
        }
        let mut grad_in = vec![0.0; layer.in_dim];
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let base = o * layer.in_dim;
            for i in 0..layer.in_dim {
                let f = wf.map_or(1.0, |f| f[base + i]);
                grad_in[i] += d * layer.weights[base + i] * f;
            }
        }
        let z = &tr.pre[l - 1];
        let gate = gating.hidden[l - 1].as_ref();
        for j in 0..grad_in.len() {
            let s = gate.map_or(1.0, |g| g.scale[j]);
            let act = match net.layers[l - 1].activation {
                Activation::Relu => (z[j] > 0.0) as u8 as f64,
                _ => 1.0,
            };
            grad_in[j] *= s * act;
        }
        delta = grad_in;
    }
    loss
}

fn adam_step(net: &mut DenseNetwork, adam: &mut Adam, grads: &[Vec<f64>], scale: f64, cfg: &TrainConfig) {
    adam.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(adam.t);
    let bc2 = 1.0 - cfg.beta2.powi(adam.t);
    for (l, layer) in net.layers.iter_mut().enumerate() {
        let nw = layer.weights.len();
        let (m, v) = (&mut adam.m[l], &mut adam.v[l]);
        for (idx, &g_raw) in grads[l].iter().enumerate() {
            let param = if idx < nw {
                &mut layer.weights[idx]
            } else {
                &mut layer.bias[idx - nw]
            };
            let mut g = g_raw * scale;
            if idx < nw {
                g += cfg.weight_decay * *param;
            }
            m[idx] = cfg.beta1 * m[idx] + (1.0 - cfg.beta1) * g;
            v[idx] = cfg.beta2 * v[idx] + (1.0 - cfg.beta2) * g * g;
            let mh = m[idx] / bc1;
            let vh = v[idx] / bc2;
            *param -= cfg.learning_rate * mh / (vh.sqrt() + cfg.adam_epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    pub(crate) fn linear_net(w: &[f64], b: f64) -> DenseNetwork {
        let layer = DenseLayer::new(w.len(), 1, w.to_vec(), vec![b], Activation::Identity).unwrap();
        DenseNetwork::new(vec![layer], vec![], 0.0).unwrap()
    }

    fn small_net(seed: u64) -> DenseNetwork {
        DenseNetwork::mlp(4, &[6, 5], 1, Activation::Identity, seed).unwrap()
    }

    #[test]
    fn affine_forward() {
        let net = linear_net(&[2.0, 3.0], 1.0);
        let out = net.forward(&[1.0, 1.0], None, None).unwrap();
        assert_eq!(out.output, vec![6.0]);
    }

    #[test]
    fn zero_probability_masks_keep_everything() {
        let net = small_net(1);
        let ms = net.sample_masks(UqKind::Mcd, 9);
        assert!(ms.masks.iter().flatten().all(|&m| m == 1.0));
        let mc = net.sample_masks(UqKind::Mcdc, 9);
        assert!(mc.masks.iter().flatten().all(|&m| m == 1.0));
        let x = [0.3, -1.0, 2.0, 0.5];
        let plain = net.forward(&x, None, None).unwrap();
        assert_eq!(net.forward(&x, Some(&ms), None).unwrap(), plain);
        assert_eq!(net.forward(&x, Some(&mc), None).unwrap(), plain);
    }

    #[test]
    fn identity_override_is_a_no_op() {
        let net = small_net(2).with_dropout(0.3).unwrap();
        let x = [0.1, 0.7, -0.4, 1.2];
        let plain = net.forward(&x, None, None).unwrap();
        let ovr = ActivationOverride {
            layer: 1,
            values: plain.activations[1].clone(),
        };
        let with = net.forward(&x, None, Some(&ovr)).unwrap();
        assert_eq!(with.output, plain.output);
        let g0 = net.input_gradient(&x, None, None, None).unwrap();
        let g1 = net.input_gradient(&x, None, Some(&ovr), None).unwrap();
        for (a, b) in g0.iter().zip(&g1) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn override_replaces_activation() {
        let net = small_net(3);
        let x = [0.5, 0.5, 0.5, 0.5];
        let ovr = ActivationOverride {
            layer: 0,
            values: vec![1.0, 0.0, 2.0, 0.0, 0.5, 3.0],
        };
        let pass = net.forward(&x, None, Some(&ovr)).unwrap();
        assert_eq!(pass.activations[0], ovr.values);
        // the rest of the network runs on the override
        let l1 = &net.layers()[1];
        let z: Vec<f64> = (0..l1.out_dim)
            .map(|o| {
                (0..l1.in_dim).map(|i| l1.weight(o, i) * ovr.values[i]).sum::<f64>() + l1.bias[o]
            })
            .map(|z: f64| z.max(0.0))
            .collect();
        assert_eq!(pass.activations[1], z);
    }

    #[test]
    fn override_errors() {
        let net = small_net(3);
        let x = [0.0; 4];
        let bad_layer = ActivationOverride {
            layer: 2,
            values: vec![0.0; 1],
        };
        assert!(net.forward(&x, None, Some(&bad_layer)).is_err());
        let bad_len = ActivationOverride {
            layer: 0,
            values: vec![0.0; 3],
        };
        assert!(matches!(
            net.forward(&x, None, Some(&bad_len)),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(net.forward(&[0.0; 3], None, None), Err(Error::Dimension(_))));
    }

    #[test]
    fn linear_gradient_is_weights() {
        let net = linear_net(&[2.0, 3.0], -4.0);
        for x in [[0.0, 0.0], [1.5, -2.0], [10.0, 3.0]] {
            assert_eq!(net.input_gradient(&x, None, None, None).unwrap(), vec![2.0, 3.0]);
        }
    }

    #[test]
    fn zero_weight_gradient() {
        let mut net = small_net(4);
        for l in net.layers_mut() {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        let g = net.input_gradient(&[1.0, 2.0, 3.0, 4.0], None, None, None).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_target_out_of_range() {
        let net = small_net(4);
        assert!(matches!(
            net.input_gradient(&[0.0; 4], None, None, Some(1)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn masks_deterministic_and_rate() {
        let net = DenseNetwork::mlp(3, &[1000, 1000], 1, Activation::Identity, 0)
            .unwrap()
            .with_dropout(0.5)
            .unwrap();
        let a = net.sample_masks(UqKind::Mcd, 77);
        assert_eq!(a, net.sample_masks(UqKind::Mcd, 77));
        assert_ne!(a, net.sample_masks(UqKind::Mcd, 78));
        let total: usize = a.masks.iter().map(|m| m.len()).sum();
        let dropped = a.masks.iter().flatten().filter(|&&m| m == 0.0).count();
        // 2000 entries per call; pool 50 seeds for 1e5 entries
        let mut drops = dropped;
        let mut count = total;
        for s in 0..49u64 {
            let m = net.sample_masks(UqKind::Mcd, 1000 + s);
            drops += m.masks.iter().flatten().filter(|&&v| v == 0.0).count();
            count += m.masks.iter().map(|v| v.len()).sum::<usize>();
        }
        assert_eq!(count, 100_000);
        let rate = drops as f64 / count as f64;
        assert!((rate - 0.5).abs() < 0.01, "drop rate {rate}");
    }

    #[test]
    fn dropconnect_masks_cover_final_layer_only() {
        let net = small_net(5).with_dropconnect(0.3).unwrap();
        let m = net.sample_masks(UqKind::Mcdc, 1);
        assert_eq!(m.masks.len(), 1);
        assert_eq!(m.masks[0].len(), net.final_layer().weights.len());
    }

    #[test]
    fn ensemble_examples() {
        let net = small_net(6);
        let x = [0.2, -0.3, 0.9, 1.1];
        let (ens, masks) = net.mc_ensemble(&x, UqKind::Mcd, 8, 3).unwrap();
        assert_eq!(masks.len(), 8);
        assert_eq!(ens.variance, 0.0);
        let det = net.forward(&x, None, None).unwrap().output[0];
        assert_eq!(ens.y_hat, det);

        let noisy = net.clone().with_dropout(0.2).unwrap();
        let (a, _) = noisy.mc_ensemble(&x, UqKind::Mcd, 20, 11).unwrap();
        let (b, _) = noisy.mc_ensemble(&x, UqKind::Mcd, 20, 11).unwrap();
        assert_eq!(a, b);
        let column: Vec<Vec<f64>> = a.predictions.iter().map(|p| vec![p[0]]).collect();
        assert_eq!(a.variance, numstat::covariance_diagonal(&column).unwrap()[0]);

        assert!(matches!(
            net.mc_ensemble(&x, UqKind::Mcd, 1, 0),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn hand_ensemble_summary() {
        let net = linear_net(&[1.0], 0.0);
        let ens = net.summarize(vec![vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(ens.y_hat, 2.0);
        assert_eq!(ens.variance, 2.0);
    }

    #[test]
    fn classification_ensemble_targets_averaged_argmax() {
        let net = DenseNetwork::mlp(3, &[8], 3, Activation::Softmax, 4)
            .unwrap()
            .with_dropout(0.3)
            .unwrap();
        let (ens, _) = net.mc_ensemble(&[0.5, -1.0, 2.0], UqKind::Mcd, 10, 2).unwrap();
        assert_eq!(ens.target, argmax(&ens.mean));
        assert_eq!(ens.y_hat, ens.target as f64);
        for p in &ens.predictions {
            assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn training_recovers_least_squares_slope() {
        // y = 2 x, so the least-squares solution is w = 2, b = 0.
        let mut rng = rng_from_seed(5);
        let xs: Vec<Vec<f64>> = (0..256).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x[0]).collect();
        let net = linear_net(&[0.0], 0.0);
        let cfg = TrainConfig {
            epochs: 300,
            batch_size: 16,
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        let (trained, summary) = train(
            &net,
            TrainingSet {
                inputs: &xs,
                targets: &ys,
            },
            &cfg,
        )
        .unwrap();
        assert!((trained.layers()[0].weights[0] - 2.0).abs() < 1e-2);
        assert!(summary.final_loss < 1e-4);
    }

    #[test]
    fn training_is_deterministic_and_validates() {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 40.0, 1.0 - i as f64 / 20.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x[0] * x[1]).collect();
        let net = DenseNetwork::mlp(2, &[5], 1, Activation::Identity, 1)
            .unwrap()
            .with_dropout(0.1)
            .unwrap();
        let data = TrainingSet {
            inputs: &xs,
            targets: &ys,
        };
        let cfg = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let a = train(&net, data, &cfg).unwrap().0;
        let b = train(&net, data, &cfg).unwrap().0;
        assert_eq!(a, b);

        let zero = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(train(&net, data, &zero).is_err());
        let empty = TrainingSet {
            inputs: &[],
            targets: &[],
        };
        assert!(train(&net, empty, &cfg).is_err());
    }

    #[test]
    fn training_reports_divergence() {
        let xs = vec![vec![1e200], vec![-1e200]];
        let ys = vec![1e200, -1e200];
        let net = linear_net(&[1e100], 0.0);
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let r = train(
            &net,
            TrainingSet {
                inputs: &xs,
                targets: &ys,
            },
            &cfg,
        );
        assert!(matches!(r, Err(Error::Diverged { .. })), "{r:?}");
    }

    #[test]
    fn probabilities_validated() {
        assert!(small_net(1).with_dropout(1.0).is_err());
        assert!(small_net(1).with_dropconnect(-0.1).is_err());
    }
}
