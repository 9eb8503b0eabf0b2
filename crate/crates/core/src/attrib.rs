//! Feature attribution explainers and uncertainty attributions.
//!
//! Every explainer maps `(network, input, masks)` to one attribution vector.
//! An uncertainty attribution explains each member of a Monte-Carlo ensemble
//! with its own masks and takes the per-feature variance across members.
//! [`analytic_uncertainty_attribution`] gives the first-order approximation
//! of that variance, `diag(J · Var(Δ) · Jᵀ)`, from a finite-difference
//! Jacobian of the explainer with respect to the perturbed quantities.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{
    ActivationOverride, DenseNetwork, Gating, MaskSet, PredictiveEnsemble, UqKind,
};
use crate::numstat;
use crate::seed::{derive_seed, rng_from_seed, SeedPart};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainerKind {
    #[serde(alias = "lrp")]
    LrpEpsilon,
    #[serde(alias = "ig")]
    IntegratedGradients,
    #[serde(alias = "ixg")]
    InputTimesGradient,
    #[serde(alias = "shapley")]
    SampledShapley,
}

impl ExplainerKind {
    pub const ALL: [ExplainerKind; 4] = [
        ExplainerKind::LrpEpsilon,
        ExplainerKind::IntegratedGradients,
        ExplainerKind::InputTimesGradient,
        ExplainerKind::SampledShapley,
    ];

    /// Short label used in method names such as `mcd+ig`.
    pub fn label(self) -> &'static str {
        match self {
            ExplainerKind::LrpEpsilon => "lrp",
            ExplainerKind::IntegratedGradients => "ig",
            ExplainerKind::InputTimesGradient => "ixg",
            ExplainerKind::SampledShapley => "shapley",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.label() == s)
    }

    pub fn is_stochastic(self) -> bool {
        self == ExplainerKind::SampledShapley
    }
}

/// What the sampled-Shapley value function does with Monte-Carlo masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapleyMasking {
    /// Every coalition is evaluated under the ensemble member's own masks.
    Member,
    /// Every coalition evaluation draws fresh masks of the member's kind, as
    /// when a sampling explainer queries a model left in stochastic mode.
    #[default]
    Resample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainerSpec {
    pub method: ExplainerKind,
    /// Reference input; `None` means the all-zero vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Vec<f64>>,
    pub ig_steps: usize,
    pub lrp_epsilon: f64,
    pub shapley_samples: usize,
    #[serde(default)]
    pub shapley_masking: ShapleyMasking,
    pub seed: u64,
}

impl ExplainerSpec {
    pub fn new(method: ExplainerKind) -> Self {
        Self {
            method,
            baseline: None,
            ig_steps: 32,
            lrp_epsilon: 1e-6,
            shapley_samples: 200,
            shapley_masking: ShapleyMasking::default(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.ig_steps < 1 {
            return Err(Error::InvalidArgument("IG step count must be at least 1".into()));
        }
        if !(self.lrp_epsilon > 0.0 && self.lrp_epsilon.is_finite()) {
            return Err(Error::InvalidArgument("LRP epsilon must be positive".into()));
        }
        if self.shapley_samples < 1 {
            return Err(Error::InvalidArgument(
                "Shapley sample count must be at least 1".into(),
            ));
        }
        if let Some(b) = &self.baseline {
            numstat::ensure_finite(b)?;
        }
        Ok(())
    }

    fn baseline_for(&self, n: usize) -> Result<Vec<f64>> {
        match &self.baseline {
            Some(b) if b.len() != n => Err(Error::Dimension(format!(
                "baseline has length {}, input has {n}",
                b.len()
            ))),
            Some(b) => Ok(b.clone()),
            None => Ok(vec![0.0; n]),
        }
    }
}

/// Per-feature variance of an attribution ensemble; always non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UncertaintyAttribution(Vec<f64>);

impl UncertaintyAttribution {
    pub fn from_members(members: &[Vec<f64>]) -> Result<Self> {
        Ok(Self(numstat::covariance_diagonal(members)?))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionEnsemble {
    pub members: Vec<Vec<f64>>,
    pub masks: Vec<MaskSet>,
}

fn target_index(net: &DenseNetwork, target: Option<usize>) -> Result<usize> {
    let t = target.unwrap_or(0);
    if t >= net.output_dim() {
        return Err(Error::InvalidArgument(format!(
            "target index {t} out of range for {} outputs",
            net.output_dim()
        )));
    }
    Ok(t)
}

// ---------------------------------------------------------------------------
// Explainers

/// `x ⊙ ∇ₓ f_target(x)`.
pub fn input_times_gradient(
    net: &DenseNetwork,
    x: &[f64],
    masks: Option<&MaskSet>,
    ovr: Option<&ActivationOverride>,
    target: Option<usize>,
) -> Result<Vec<f64>> {
    let t = target_index(net, target)?;
    let gating = net.gating(x, masks, ovr)?;
    Ok(ixg_gated(net, x, &gating, t))
}

fn ixg_gated(net: &DenseNetwork, x: &[f64], gating: &Gating, t: usize) -> Vec<f64> {
    let g = net.gradient_gated(x, gating, t);
    x.iter().zip(g).map(|(xi, gi)| xi * gi).collect()
}

/// Integrated gradients from the spec's baseline to `x`, midpoint Riemann rule.
pub fn integrated_gradients(
    net: &DenseNetwork,
    x: &[f64],
    spec: &ExplainerSpec,
    masks: Option<&MaskSet>,
    ovr: Option<&ActivationOverride>,
    target: Option<usize>,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let t = target_index(net, target)?;
    let baseline = spec.baseline_for(x.len())?;
    let gating = net.gating(x, masks, ovr)?;
    Ok(ig_gated(net, x, &baseline, spec.ig_steps, &gating, t))
}

fn ig_gated(
    net: &DenseNetwork,
    x: &[f64],
    baseline: &[f64],
    steps: usize,
    gating: &Gating,
    t: usize,
) -> Vec<f64> {
    let n = x.len();
    let diff: Vec<f64> = x.iter().zip(baseline).map(|(a, b)| a - b).collect();
    let mut total = vec![0.0; n];
    let mut point = vec![0.0; n];
    for s in 0..steps {
        let alpha = (s as f64 + 0.5) / steps as f64;
        for i in 0..n {
            point[i] = baseline[i] + alpha * diff[i];
        }
        let g = net.gradient_gated(&point, gating, t);
        for (acc, gi) in total.iter_mut().zip(g) {
            *acc += gi;
        }
    }
    total
        .iter()
        .zip(&diff)
        .map(|(g, d)| g / steps as f64 * d)
        .collect()
}

/// Layer-wise relevance propagation with the ε-rule.
///
/// The target output's pre-activation is the initial relevance; masks are
/// folded into the fed-forward activations and final-layer weights.
pub fn lrp_epsilon(
    net: &DenseNetwork,
    x: &[f64],
    masks: Option<&MaskSet>,
    ovr: Option<&ActivationOverride>,
    target: Option<usize>,
    epsilon: f64,
) -> Result<Vec<f64>> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument("LRP epsilon must be positive".into()));
    }
    let t = target_index(net, target)?;
    if let Some(l) = net
        .layers()
        .iter()
        .find(|l| l.activation == crate::net::Activation::Softmax)
    {
        return Err(Error::UnsupportedActivation(l.activation.name().into()));
    }
    let gating = net.gating(x, masks, ovr)?;
    Ok(lrp_gated(net, x, &gating, t, epsilon))
}

fn lrp_gated(net: &DenseNetwork, x: &[f64], gating: &Gating, t: usize, epsilon: f64) -> Vec<f64> {
    let tr = net.trace(x, gating);
    let layers = net.layers();
    let last = layers.len() - 1;
    let mut relevance = vec![0.0; layers[last].out_dim];
    relevance[t] = tr.pre[last][t];
    for l in (0..=last).rev() {
        let layer = &layers[l];
        let input = &tr.inputs[l];
        let z = &tr.pre[l];
        let wf = if l == last {
            gating.final_weights()
        } else {
            None
        };
        let mut below = vec![0.0; layer.in_dim];
        for (o, &r) in relevance.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            let denom = z[o] + if z[o] >= 0.0 { epsilon } else { -epsilon };
            let ratio = r / denom;
            let base = o * layer.in_dim;
            for i in 0..layer.in_dim {
                let w = layer.weights[base + i] * wf.map_or(1.0, |f| f[base + i]);
                below[i] += input[i] * w * ratio;
            }
        }
        relevance = below;
    }
    relevance
}

/// Permutation-sampling Shapley values with a fixed-baseline value function.
///
/// Under [`ShapleyMasking::Resample`] and a supplied mask set, every model
/// evaluation draws fresh masks of the same kind from the explainer seed.
pub fn sampled_shapley(
    net: &DenseNetwork,
    x: &[f64],
    spec: &ExplainerSpec,
    masks: Option<&MaskSet>,
    target: Option<usize>,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let t = target_index(net, target)?;
    let baseline = spec.baseline_for(x.len())?;
    let gating = net.gating(x, masks, None)?;
    let resample = match (spec.shapley_masking, masks) {
        (ShapleyMasking::Resample, Some(m)) => Some(m.kind),
        _ => None,
    };
    Ok(shapley_gated(net, x, &baseline, spec, &gating, resample, t))
}

fn shapley_gated(
    net: &DenseNetwork,
    x: &[f64],
    baseline: &[f64],
    spec: &ExplainerSpec,
    gating: &Gating,
    resample: Option<UqKind>,
    t: usize,
) -> Vec<f64> {
    let n = x.len();
    let mut rng = rng_from_seed(spec.seed);
    let value = |point: &[f64], rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
        match resample {
            Some(kind) => {
                let g = net
                    .mask_gating(Some(&net.sample_masks(kind, rng.random())))
                    .expect("masks drawn from the same network");
                net.output_gated(point, &g)[t]
            }
            None => net.output_gated(point, gating)[t],
        }
    };
    let base_value = value(baseline, &mut rng);
    let mut phi = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut point = baseline.to_vec();
    for _ in 0..spec.shapley_samples {
        order.shuffle(&mut rng);
        point.copy_from_slice(baseline);
        let mut prev = base_value;
        for &i in &order {
            point[i] = x[i];
            let cur = value(&point, &mut rng);
            phi[i] += cur - prev;
            prev = cur;
        }
    }
    phi.iter_mut()
        .for_each(|p| *p /= spec.shapley_samples as f64);
    phi
}

/// Dispatch on `spec.method`.
pub fn explain(
    net: &DenseNetwork,
    x: &[f64],
    spec: &ExplainerSpec,
    masks: Option<&MaskSet>,
    ovr: Option<&ActivationOverride>,
    target: Option<usize>,
) -> Result<Vec<f64>> {
    match spec.method {
        ExplainerKind::InputTimesGradient => input_times_gradient(net, x, masks, ovr, target),
        ExplainerKind::IntegratedGradients => {
            integrated_gradients(net, x, spec, masks, ovr, target)
        }
        ExplainerKind::LrpEpsilon => lrp_epsilon(net, x, masks, ovr, target, spec.lrp_epsilon),
        ExplainerKind::SampledShapley => {
            if ovr.is_some() {
                let t = target_index(net, target)?;
                spec.validate()?;
                let baseline = spec.baseline_for(x.len())?;
                let gating = net.gating(x, masks, ovr)?;
                return Ok(shapley_gated(net, x, &baseline, spec, &gating, None, t));
            }
            sampled_shapley(net, x, spec, masks, target)
        }
    }
}

// ---------------------------------------------------------------------------
// Uncertainty attribution

/// Explainer seed for ensemble member `k` of an attribution seeded `seed`.
pub fn member_explainer_seed(spec_seed: u64, seed: u64, member: usize) -> u64 {
    derive_seed(
        seed,
        &[
            SeedPart::Label("explainer"),
            SeedPart::Int(spec_seed),
            SeedPart::Int(member as u64),
        ],
    )
}

/// Explain every member of an existing ensemble against the shared target.
pub fn explain_ensemble(
    net: &DenseNetwork,
    x: &[f64],
    spec: &ExplainerSpec,
    ensemble: &PredictiveEnsemble,
    masks: &[MaskSet],
    seed: u64,
) -> Result<(UncertaintyAttribution, AttributionEnsemble)> {
    spec.validate()?;
    let mut members = Vec::with_capacity(masks.len());
    let mut member_spec = spec.clone();
    for (k, m) in masks.iter().enumerate() {
        member_spec.seed = member_explainer_seed(spec.seed, seed, k);
        members.push(explain(
            net,
            x,
            &member_spec,
            Some(m),
            None,
            Some(ensemble.target),
        )?);
    }
    let u = UncertaintyAttribution::from_members(&members)?;
    Ok((
        u,
        AttributionEnsemble {
            members,
            masks: masks.to_vec(),
        },
    ))
}

/// Draw a `K`-member ensemble, explain each member, and return the variance
/// of the explanations.
pub fn uncertainty_attribution(
    net: &DenseNetwork,
    x: &[f64],
    spec: &ExplainerSpec,
    kind: UqKind,
    k: usize,
    seed: u64,
) -> Result<(UncertaintyAttribution, AttributionEnsemble, PredictiveEnsemble)> {
    let (ensemble, masks) = net.mc_ensemble(x, kind, k, seed)?;
    let (u, attributions) = explain_ensemble(net, x, spec, &ensemble, &masks, seed)?;
    Ok((u, attributions, ensemble))
}

// ---------------------------------------------------------------------------
// Jacobian and the analytic approximation

/// Central-difference Jacobian of `f` at `point`; rows index outputs,
/// columns index the perturbed coordinates. Column `j` uses the step
/// `1e-3 * max(1, |point_j|)`.
pub fn finite_difference_jacobian<F>(point: &[f64], mut f: F) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut probe = point.to_vec();
    let mut columns = Vec::with_capacity(point.len());
    for j in 0..point.len() {
        let h = 1e-3 * point[j].abs().max(1.0);
        probe[j] = point[j] + h;
        let plus = f(&probe)?;
        probe[j] = point[j] - h;
        let minus = f(&probe)?;
        probe[j] = point[j];
        if plus.len() != minus.len() {
            return Err(Error::Dimension("explainer output length changed".into()));
        }
        columns.push(
            plus.iter()
                .zip(&minus)
                .map(|(p, m)| (p - m) / (2.0 * h))
                .collect::<Vec<f64>>(),
        );
    }
    let rows = columns.first().map_or(0, |c| c.len());
    Ok((0..rows)
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect())
}

/// Whether a stochastic explainer may be linearised with its seed frozen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StochasticPolicy {
    Reject,
    /// Differentiate the explainer with its permutation stream held fixed and
    /// no mask resampling, which makes it a deterministic function.
    FreezeSeed,
}

fn check_deterministic(spec: &ExplainerSpec, policy: StochasticPolicy) -> Result<ExplainerSpec> {
    if spec.method.is_stochastic() {
        match policy {
            StochasticPolicy::Reject => {
                return Err(Error::StochasticExplainer(spec.method.label().into()))
            }
            StochasticPolicy::FreezeSeed => {
                let mut frozen = spec.clone();
                frozen.shapley_masking = ShapleyMasking::Member;
                return Ok(frozen);
            }
        }
    }
    Ok(spec.clone())
}

/// `n x l` Jacobian of the explanation with respect to hidden layer `layer`'s
/// activations, by central differences under activation overrides.
pub fn explainer_jacobian(
    net: &DenseNetwork,
    x: &[f64],
    spec: &ExplainerSpec,
    masks: Option<&MaskSet>,
    layer: usize,
    target: Option<usize>,
) -> Result<Vec<Vec<f64>>> {
    explainer_jacobian_with(net, x, spec, masks, layer, target, StochasticPolicy::Reject)
}

pub fn explainer_jacobian_with(
    net: &DenseNetwork,
    x: &[f64],
    spec: &ExplainerSpec,
    masks: Option<&MaskSet>,
    layer: usize,
    target: Option<usize>,
    policy: StochasticPolicy,
) -> Result<Vec<Vec<f64>>> {
    let spec = check_deterministic(spec, policy)?;
    if layer >= net.hidden_count() {
        return Err(Error::InvalidArgument(format!(
            "layer {layer} is not a hidden layer (network has {})",
            net.hidden_count()
        )));
    }
    let a = net.forward(x, masks, None)?.activations[layer].clone();
    finite_difference_jacobian(&a, |values| {
        let ovr = ActivationOverride {
            layer,
            values: values.to_vec(),
        };
        explain(net, x, &spec, masks, Some(&ovr), target)
    })
}

/// `n x w` Jacobian of the explanation with respect to the final layer's
/// weights (row-major), by central differences.
pub fn explainer_weight_jacobian(
    net: &DenseNetwork,
    x: &[f64],
    spec: &ExplainerSpec,
    target: Option<usize>,
    policy: StochasticPolicy,
) -> Result<Vec<Vec<f64>>> {
    let spec = check_deterministic(spec, policy)?;
    let w = net.final_layer().weights.clone();
    finite_difference_jacobian(&w, |weights| {
        let perturbed = net.with_final_weights(weights)?;
        explain(&perturbed, x, &spec, None, None, target)
    })
}

/// `n x l` Jacobian of the explanation with respect to continuous gates on
/// hidden layer `layer`, taken at the unmasked network (every gate 1).
///
/// For explainers that only look at the activations at `x` this equals the
/// activation Jacobian times `diag(a)`; path explainers such as IG also see
/// units that are inactive at `x` but active elsewhere on the path.
pub fn explainer_gate_jacobian(
    net: &DenseNetwork,
    x: &[f64],
    spec: &ExplainerSpec,
    layer: usize,
    target: Option<usize>,
    policy: StochasticPolicy,
) -> Result<Vec<Vec<f64>>> {
    let spec = check_deterministic(spec, policy)?;
    if layer >= net.hidden_count() {
        return Err(Error::InvalidArgument(format!(
            "layer {layer} is not a hidden layer (network has {})",
            net.hidden_count()
        )));
    }
    let keep: Vec<f64> = net
        .dropout()
        .iter()
        .map(|&p| net.scaling().keep_factor(p))
        .collect();
    let width = net.layers()[layer].out_dim;
    finite_difference_jacobian(&vec![1.0; width], |gates| {
        let masks = MaskSet {
            kind: UqKind::Mcd,
            masks: net.layers()[..net.hidden_count()]
                .iter()
                .enumerate()
                .map(|(l, lay)| {
                    if l == layer {
                        gates.iter().map(|g| g / keep[l]).collect()
                    } else {
                        vec![1.0 / keep[l]; lay.out_dim]
                    }
                })
                .collect(),
            seed: 0,
        };
        explain(net, x, &spec, Some(&masks), None, target)
    })
}

/// `diag(J · v · diag(c²) · Jᵀ)` for per-column scale `c` and variance `v`.
pub fn propagate_variance(jacobian: &[Vec<f64>], scale: &[f64], variance: f64) -> Vec<f64> {
    jacobian
        .iter()
        .map(|row| {
            variance
                * row
                    .iter()
                    .zip(scale)
                    .map(|(j, c)| (j * c).powi(2))
                    .sum::<f64>()
        })
        .collect()
}

/// First-order approximation of the uncertainty attribution.
///
/// MCD: dropping unit `j` of hidden layer `layer` perturbs its activation by
/// `Δa_j = -a_j B_j` with variance `p(1-p) a_j²`; the product `J_ij a_j` is
/// obtained directly as the gate Jacobian ([`explainer_gate_jacobian`]).
/// MCDC: the same construction over the final-layer weights.
pub fn analytic_uncertainty_attribution(
    net: &DenseNetwork,
    x: &[f64],
    spec: &ExplainerSpec,
    kind: UqKind,
    p: f64,
    layer: usize,
    target: Option<usize>,
) -> Result<Vec<f64>> {
    analytic_uncertainty_attribution_with(net, x, spec, kind, p, layer, target, StochasticPolicy::Reject)
}

#[allow(clippy::too_many_arguments)]
pub fn analytic_uncertainty_attribution_with(
    net: &DenseNetwork,
    x: &[f64],
    spec: &ExplainerSpec,
    kind: UqKind,
    p: f64,
    layer: usize,
    target: Option<usize>,
    policy: StochasticPolicy,
) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1)")));
    }
    check_deterministic(spec, policy)?;
    let variance = net.scaling().perturbation_variance(p);
    match kind {
        UqKind::Mcd => {
            if layer >= net.hidden_count() {
                return Err(Error::InvalidArgument(format!("no hidden layer {layer}")));
            }
            if p == 0.0 {
                return Ok(vec![0.0; x.len()]);
            }
            let j = explainer_gate_jacobian(net, x, spec, layer, target, policy)?;
            Ok(propagate_variance(&j, &vec![1.0; j[0].len()], variance))
        }
        UqKind::Mcdc => {
            if p == 0.0 {
                return Ok(vec![0.0; x.len()]);
            }
            let w = net.final_layer().weights.clone();
            let j = explainer_weight_jacobian(net, x, spec, target, policy)?;
            Ok(propagate_variance(&j, &w, variance))
        }
    }
}

// ---------------------------------------------------------------------------
// Attribution dump

/// One line of the attribution dump: a single member's explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub fold: usize,
    pub sample_id: usize,
    pub method: String,
    pub member: usize,
    pub mask_seed: u64,
    pub y_hat: f64,
    pub attribution: Vec<f64>,
}

impl AttributionRecord {
    pub fn from_ensemble(
        fold: usize,
        sample_id: usize,
        method: &str,
        ensemble: &PredictiveEnsemble,
        attributions: &AttributionEnsemble,
    ) -> Vec<Self> {
        attributions
            .members
            .iter()
            .zip(&attributions.masks)
            .enumerate()
            .map(|(member, (a, m))| AttributionRecord {
                fold,
                sample_id,
                method: method.to_string(),
                member,
                mask_seed: m.seed,
                y_hat: ensemble.y_hat,
                attribution: a.clone(),
            })
            .collect()
    }
}

pub fn write_attribution_dump<W: Write>(mut w: W, records: &[AttributionRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")
            .map_err(|e| Error::io("<attribution dump>", e))?;
    }
    Ok(())
}

pub fn read_attribution_dump<R: BufRead>(r: R) -> Result<Vec<AttributionRecord>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| Error::io("<attribution dump>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
