//! Per-sample evaluation metrics for uncertainty attributions.
//!
//! | metric            | property    | better |
//! |-------------------|-------------|--------|
//! | feature flipping  | correctness | lower  |
//! | repeatability     | consistency | higher |
//! | RIS               | continuity  | lower  |
//! | complexity        | compactness | lower  |
//! | RRI               | conveyance  | higher |
//! | UCS               | conveyance  | higher |
//!
//! Metrics that need fresh attributions go through [`UncertaintyModel`], so
//! every perturbed input gets its own ensemble drawn from a derived seed.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::attrib::{explain_ensemble, ExplainerSpec, UncertaintyAttribution};
use crate::error::{Error, Result};
use crate::net::{DenseNetwork, UqKind};
use crate::numstat;
use crate::seed::{derive_seed, rng_from_seed, SeedPart};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    FeatureFlipping,
    Repeatability,
    Ris,
    Complexity,
    Rri,
    Ucs,
}

impl MetricKind {
    pub const ALL: [MetricKind; 6] = [
        MetricKind::Complexity,
        MetricKind::Repeatability,
        MetricKind::FeatureFlipping,
        MetricKind::Ris,
        MetricKind::Rri,
        MetricKind::Ucs,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MetricKind::FeatureFlipping => "feature_flipping",
            MetricKind::Repeatability => "repeatability",
            MetricKind::Ris => "ris",
            MetricKind::Complexity => "complexity",
            MetricKind::Rri => "rri",
            MetricKind::Ucs => "ucs",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.label() == s)
    }

    pub fn higher_is_better(self) -> bool {
        matches!(
            self,
            MetricKind::Repeatability | MetricKind::Rri | MetricKind::Ucs
        )
    }

    pub fn is_pair(self) -> bool {
        matches!(self, MetricKind::Repeatability | MetricKind::Ucs)
    }

    /// Scalar components: `ris`, or `ucs.cosine` and `ucs.spearman`.
    pub fn components(self) -> Vec<String> {
        if self.is_pair() {
            vec![
                format!("{}.cosine", self.label()),
                format!("{}.spearman", self.label()),
            ]
        } else {
            vec![self.label().to_string()]
        }
    }
}

/// Every scalar metric component, in report order.
pub fn all_components() -> Vec<String> {
    MetricKind::ALL
        .into_iter()
        .flat_map(|m| m.components())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndefinedReason {
    ZeroBaselineVariance,
    NoSurvivingPerturbations,
    AllZeroAttribution,
    StochasticExplainer,
}

impl UndefinedReason {
    pub fn code(self) -> &'static str {
        match self {
            UndefinedReason::ZeroBaselineVariance => "zero_baseline_variance",
            UndefinedReason::NoSurvivingPerturbations => "no_surviving_perturbations",
            UndefinedReason::AllZeroAttribution => "all_zero_attribution",
            UndefinedReason::StochasticExplainer => "stochastic_explainer",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        [
            UndefinedReason::ZeroBaselineVariance,
            UndefinedReason::NoSurvivingPerturbations,
            UndefinedReason::AllZeroAttribution,
            UndefinedReason::StochasticExplainer,
        ]
        .into_iter()
        .find(|r| r.code() == s)
    }
}

impl fmt::Display for UndefinedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityPair {
    pub cosine: f64,
    pub spearman: f64,
}

impl SimilarityPair {
    pub fn between(a: &[f64], b: &[f64]) -> Result<Self> {
        Ok(Self {
            cosine: numstat::cosine_similarity(a, b)?,
            spearman: numstat::spearman_rho(a, b)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreValue {
    Scalar { value: f64 },
    Pair { cosine: f64, spearman: f64 },
    Undefined { reason: UndefinedReason },
}

impl ScoreValue {
    pub fn is_defined(&self) -> bool {
        !matches!(self, ScoreValue::Undefined { .. })
    }

    /// Value of one scalar component (`"ucs.cosine"`, `"ris"`, ...).
    pub fn component(&self, suffix: Option<&str>) -> Option<f64> {
        match (self, suffix) {
            (ScoreValue::Scalar { value }, None) => Some(*value),
            (ScoreValue::Pair { cosine, .. }, Some("cosine")) => Some(*cosine),
            (ScoreValue::Pair { spearman, .. }, Some("spearman")) => Some(*spearman),
            _ => None,
        }
    }
}

impl From<SimilarityPair> for ScoreValue {
    fn from(p: SimilarityPair) -> Self {
        ScoreValue::Pair {
            cosine: p.cosine,
            spearman: p.spearman,
        }
    }
}

/// Auxiliary per-sample payload kept for plotting and auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Aux {
    /// Variance ratio `s²_t / s²_0` against flipped fraction `t / n`.
    Curve { fractions: Vec<f64>, ratios: Vec<f64> },
    Survivors { kept: usize, total: usize },
    PerFeature { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub metric: MetricKind,
    pub value: ScoreValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux: Option<Aux>,
}

impl MetricScore {
    fn scalar(metric: MetricKind, value: f64) -> Self {
        Self {
            metric,
            value: ScoreValue::Scalar { value },
            aux: None,
        }
    }

    fn undefined(metric: MetricKind, reason: UndefinedReason) -> Self {
        Self {
            metric,
            value: ScoreValue::Undefined { reason },
            aux: None,
        }
    }

    fn with_aux(mut self, aux: Aux) -> Self {
        self.aux = Some(aux);
        self
    }
}

/// One uncertainty attribution together with the predictive variance of the
/// ensemble it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedSample {
    pub attribution: Vec<f64>,
    pub variance: f64,
    /// Output index the members were explained against.
    pub target: usize,
}

/// Anything that can produce seeded uncertainty attributions.
pub trait UncertaintyModel {
    /// Predictive variance `s²` of the ensemble drawn with `seed`.
    fn variance(&self, x: &[f64], seed: u64) -> Result<f64>;

    /// Uncertainty attribution from the ensemble drawn with `seed`. Its
    /// variance must equal `self.variance(x, seed)`.
    fn attribute(&self, x: &[f64], seed: u64) -> Result<AttributedSample>;
}

/// The standard model: a `K`-member MC ensemble explained member by member.
#[derive(Debug, Clone, Copy)]
pub struct EnsembleAttributor<'a> {
    pub net: &'a DenseNetwork,
    pub spec: &'a ExplainerSpec,
    pub kind: UqKind,
    pub ensemble_size: usize,
}

impl UncertaintyModel for EnsembleAttributor<'_> {
    fn variance(&self, x: &[f64], seed: u64) -> Result<f64> {
        Ok(self
            .net
            .mc_ensemble(x, self.kind, self.ensemble_size, seed)?
            .0
            .variance)
    }

    fn attribute(&self, x: &[f64], seed: u64) -> Result<AttributedSample> {
        let (ens, masks) = self.net.mc_ensemble(x, self.kind, self.ensemble_size, seed)?;
        let (u, _) = explain_ensemble(self.net, x, self.spec, &ens, &masks, seed)?;
        Ok(AttributedSample {
            attribution: u.into_inner(),
            variance: ens.variance,
            target: ens.target,
        })
    }
}

fn sub_seed(seed: u64, metric: &str, index: u64) -> u64 {
    derive_seed(seed, &[SeedPart::Label(metric), SeedPart::Int(index)])
}

// ---------------------------------------------------------------------------
// Perturbation policies

/// Per-feature training mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    /// Mean and population standard deviation over `rows`.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty);
        }
        let n = rows[0].as_ref().len();
        let count = rows.len() as f64;
        let mut mean = vec![0.0; n];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.as_ref()) {
                *m += v / count;
            }
        }
        let mut var = vec![0.0; n];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                *s += (v - m) * (v - m) / count;
            }
        }
        Ok(Self {
            mean,
            std: var.into_iter().map(f64::sqrt).collect(),
        })
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.mean.len() != n || self.std.len() != n {
            return Err(Error::Dimension(format!(
                "training statistics cover {} features, input has {n}",
                self.mean.len()
            )));
        }
        if let Some(i) = self.std.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "feature {i} has non-positive training standard deviation"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub enum PerturbationPolicy<'a> {
    /// Set feature `i` to `μ_i + k σ_i`.
    MeanPlusKSigma { k: f64, stats: &'a FeatureStats },
    /// Add `N(0, (scale σ_i)²)` noise to every feature.
    GaussianNeighbourhood {
        noise_scale: f64,
        stats: &'a FeatureStats,
    },
    /// Replace flipped features with those of a random k-nearest training
    /// neighbour, matching on the unflipped features.
    ConditionalResample {
        neighbours: usize,
        pool: &'a [Vec<f64>],
    },
}

impl PerturbationPolicy<'_> {
    fn missing(&self, what: &str) -> Error {
        Error::InvalidArgument(format!("{what} needs a {} policy", self.name()))
    }

    fn name(&self) -> &'static str {
        match self {
            PerturbationPolicy::MeanPlusKSigma { .. } => "mean_plus_k_sigma",
            PerturbationPolicy::GaussianNeighbourhood { .. } => "gaussian_neighbourhood",
            PerturbationPolicy::ConditionalResample { .. } => "conditional_resample",
        }
    }
}

/// Replace `flipped` features of `x` with values from one of the
/// `neighbours` nearest pool rows (Euclidean over the remaining features,
/// ties to the lower row index). With nothing left to match on, any pool
/// row may be drawn.
pub fn conditional_resample<R: Rng>(
    x: &[f64],
    flipped: &[usize],
    pool: &[Vec<f64>],
    neighbours: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if pool.is_empty() {
        return Err(Error::InvalidArgument("resampling pool is empty".into()));
    }
    if neighbours == 0 {
        return Err(Error::InvalidArgument("neighbour count must be positive".into()));
    }
    let n = x.len();
    let mut is_flipped = vec![false; n];
    for &i in flipped {
        is_flipped[i] = true;
    }
    let matched: Vec<usize> = (0..n).filter(|&i| !is_flipped[i]).collect();
    let donor = if matched.is_empty() {
        &pool[rng.random_range(0..pool.len())]
    } else {
        let mut dist: Vec<(f64, usize)> = pool
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let d = matched.iter().map(|&i| (row[i] - x[i]).powi(2)).sum::<f64>();
                (d, r)
            })
            .collect();
        let k = neighbours.min(dist.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        };
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
        }
        let mut nearest = dist[..k].to_vec();
        nearest.sort_by(cmp);
        &pool[nearest[rng.random_range(0..k)].1]
    };
    let mut out = x.to_vec();
    for &i in flipped {
        out[i] = donor[i];
    }
    Ok(out)
}

/// Features in flipping order: descending attribution, ties by index.
pub fn flip_order(u: &[f64]) -> Result<Vec<usize>> {
    let ranks = numstat::descending_ranks(u)?;
    let mut order = vec![0; u.len()];
    for (i, &r) in ranks.as_slice().iter().enumerate() {
        order[r - 1] = i;
    }
    Ok(order)
}

// ---------------------------------------------------------------------------
// Metrics

/// Deletion-style correctness: flip the most-attributed features first and
/// track `s²_t / s²_0`; the score is the normalised area under that curve.
pub fn feature_flipping_auc<M: UncertaintyModel>(
    model: &M,
    x: &[f64],
    u: &[f64],
    policy: PerturbationPolicy<'_>,
    seed: u64,
) -> Result<MetricScore> {
    let PerturbationPolicy::ConditionalResample { neighbours, pool } = policy else {
        return Err(policy.missing("feature flipping"));
    };
    if u.len() != x.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: u.len(),
        });
    }
    let n = x.len();
    let order = flip_order(u)?;
    let s0 = model.variance(x, sub_seed(seed, "flip", 0))?;
    if s0 <= 0.0 {
        return Ok(MetricScore::undefined(
            MetricKind::FeatureFlipping,
            UndefinedReason::ZeroBaselineVariance,
        ));
    }
    let mut fractions = vec![0.0];
    let mut ratios = vec![1.0];
    for t in 1..=n {
        let mut rng = rng_from_seed(derive_seed(
            seed,
            &[SeedPart::Label("flip-draw"), SeedPart::Int(t as u64)],
        ));
        let xt = conditional_resample(x, &order[..t], pool, neighbours, &mut rng)?;
        let st = model.variance(&xt, sub_seed(seed, "flip", t as u64))?;
        fractions.push(t as f64 / n as f64);
        ratios.push(st / s0);
    }
    let auc = numstat::trapezoid_auc(&fractions, &ratios)?;
    Ok(MetricScore::scalar(MetricKind::FeatureFlipping, auc)
        .with_aux(Aux::Curve { fractions, ratios }))
}

/// Mean similarity between a reference attribution and `m` recomputations
/// with distinct seeds. The reference uses `seed` itself.
pub fn repeatability<M: UncertaintyModel>(
    model: &M,
    x: &[f64],
    m: usize,
    seed: u64,
) -> Result<MetricScore> {
    if m == 0 {
        return Err(Error::InvalidArgument("repetition count must be at least 1".into()));
    }
    let reference = model.attribute(x, seed)?;
    repeatability_against(model, x, &reference.attribution, m, seed)
}

/// [`repeatability`] with the reference attribution already computed.
pub fn repeatability_against<M: UncertaintyModel>(
    model: &M,
    x: &[f64],
    reference: &[f64],
    m: usize,
    seed: u64,
) -> Result<MetricScore> {
    if m == 0 {
        return Err(Error::InvalidArgument("repetition count must be at least 1".into()));
    }
    let (mut cos, mut rho) = (0.0, 0.0);
    for rep in 1..=m {
        let again = model.attribute(x, sub_seed(seed, "repeat", rep as u64))?;
        let sim = SimilarityPair::between(reference, &again.attribution)?;
        cos += sim.cosine;
        rho += sim.spearman;
    }
    let pair = SimilarityPair {
        cosine: cos / m as f64,
        spearman: rho / m as f64,
    };
    Ok(MetricScore {
        metric: MetricKind::Repeatability,
        value: pair.into(),
        aux: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RisParams {
    pub perturbations: usize,
    pub tau: f64,
    pub norm_order: f64,
    pub eps_min: f64,
}

impl Default for RisParams {
    fn default() -> Self {
        Self {
            perturbations: 50,
            tau: 0.05,
            norm_order: 2.0,
            eps_min: 1e-6,
        }
    }
}

/// Lower bound on element-wise denominators in the relative differences.
const RIS_DENOMINATOR_FLOOR: f64 = 1e-6;

fn clamp_denominator(v: f64) -> f64 {
    if v.abs() >= RIS_DENOMINATOR_FLOOR {
        v
    } else if v < 0.0 {
        -RIS_DENOMINATOR_FLOOR
    } else {
        RIS_DENOMINATOR_FLOOR
    }
}

pub fn p_norm(v: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    } else {
        v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// One term of the relative input stability maximum.
pub fn ris_ratio(x: &[f64], x_pert: &[f64], u: &[f64], u_pert: &[f64], params: &RisParams) -> f64 {
    let rel_u: Vec<f64> = u_pert
        .iter()
        .zip(u)
        .map(|(up, u0)| (up - u0) / clamp_denominator(*u0))
        .collect();
    let rel_x: Vec<f64> = x
        .iter()
        .zip(x_pert)
        .map(|(a, b)| (a - b) / clamp_denominator(*a))
        .collect();
    p_norm(&rel_u, params.norm_order) / p_norm(&rel_x, params.norm_order).max(params.eps_min)
}

/// Relative input stability: the largest relative attribution change over
/// Gaussian neighbours whose predictive variance stays within `tau`.
pub fn relative_input_stability<M: UncertaintyModel>(
    model: &M,
    x: &[f64],
    reference: &AttributedSample,
    policy: PerturbationPolicy<'_>,
    params: &RisParams,
    seed: u64,
) -> Result<MetricScore> {
    let PerturbationPolicy::GaussianNeighbourhood { noise_scale, stats } = policy else {
        return Err(policy.missing("relative input stability"));
    };
    if params.perturbations == 0 {
        return Err(Error::InvalidArgument("RIS needs at least one perturbation".into()));
    }
    if !(params.norm_order >= 1.0) {
        return Err(Error::InvalidArgument("norm order must be at least 1".into()));
    }
    stats.validate(x.len())?;
    let mut rng = rng_from_seed(sub_seed(seed, "ris-noise", 0));
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut best: Option<f64> = None;
    let mut kept = 0;
    for j in 0..params.perturbations {
        let x_pert: Vec<f64> = x
            .iter()
            .zip(&stats.std)
            .map(|(xi, s)| xi + noise_scale * s * normal.sample(&mut rng))
            .collect();
        let ens_seed = sub_seed(seed, "ris", j as u64);
        let s2 = model.variance(&x_pert, ens_seed)?;
        if (reference.variance - s2).abs() >= params.tau {
            continue;
        }
        kept += 1;
        let pert = model.attribute(&x_pert, ens_seed)?;
        let r = ris_ratio(x, &x_pert, &reference.attribution, &pert.attribution, params);
        best = Some(best.map_or(r, |b: f64| b.max(r)));
    }
    let survivors = Aux::Survivors {
        kept,
        total: params.perturbations,
    };
    Ok(match best {
        Some(v) => MetricScore::scalar(MetricKind::Ris, v).with_aux(survivors),
        None => MetricScore::undefined(MetricKind::Ris, UndefinedReason::NoSurvivingPerturbations)
            .with_aux(survivors),
    })
}

/// Entropy of the normalised attribution magnitudes.
pub fn complexity(u: &[f64]) -> Result<MetricScore> {
    Ok(match numstat::normalized_entropy_complexity(u)? {
        Some(h) => MetricScore::scalar(MetricKind::Complexity, h),
        None => MetricScore::undefined(MetricKind::Complexity, UndefinedReason::AllZeroAttribution),
    })
}

/// `(rank before - rank after) / rank before` for one feature.
pub fn rank_improvement(rank_before: usize, rank_after: usize) -> f64 {
    (rank_before as f64 - rank_after as f64) / rank_before as f64
}

/// Shift each feature in turn to `μ_i + k σ_i` and average how far its
/// attribution rank moves up.
pub fn relative_rank_improvement<M: UncertaintyModel>(
    model: &M,
    x: &[f64],
    u: &[f64],
    policy: PerturbationPolicy<'_>,
    seed: u64,
) -> Result<MetricScore> {
    let PerturbationPolicy::MeanPlusKSigma { k, stats } = policy else {
        return Err(policy.missing("relative rank improvement"));
    };
    stats.validate(x.len())?;
    if u.len() != x.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: u.len(),
        });
    }
    let before = numstat::descending_ranks(u)?;
    let mut per_feature = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let mut shifted = x.to_vec();
        shifted[i] = stats.mean[i] + k * stats.std[i];
        let after = model.attribute(&shifted, sub_seed(seed, "rri", i as u64))?;
        let ranks = numstat::descending_ranks(&after.attribution)?;
        per_feature.push(rank_improvement(before.rank_of(i), ranks.rank_of(i)));
    }
    let mean = numstat::mean(&per_feature).ok_or(Error::Empty)?;
    Ok(MetricScore::scalar(MetricKind::Rri, mean).with_aux(Aux::PerFeature {
        values: per_feature,
    }))
}

/// Similarity between the empirical attribution and its first-order
/// approximation.
pub fn uncertainty_conveyance_similarity(u: &[f64], u_lin: &[f64]) -> Result<SimilarityPair> {
    SimilarityPair::between(u, u_lin)
}

pub fn ucs_score(u: &UncertaintyAttribution, u_lin: &[f64]) -> Result<MetricScore> {
    Ok(MetricScore {
        metric: MetricKind::Ucs,
        value: uncertainty_conveyance_similarity(u.values(), u_lin)?.into(),
        aux: None,
    })
}

pub fn ucs_undefined(reason: UndefinedReason) -> MetricScore {
    MetricScore::undefined(MetricKind::Ucs, reason)
}
