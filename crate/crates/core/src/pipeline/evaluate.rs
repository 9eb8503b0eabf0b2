//! Cross-validated evaluation runs.
//!
//! Every random stream is derived from the master seed and the path of the
//! work item (fold, sample row, method, metric), so results are identical
//! under any thread count or scheduling order.

use std::path::{Path, PathBuf};

use log::{debug, info};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attrib::{
    analytic_uncertainty_attribution_with, uncertainty_attribution, AttributionRecord,
    StochasticPolicy,
};
use crate::error::{Error, Result};
use crate::metrics::{
    self, all_components, complexity, feature_flipping_auc, relative_input_stability,
    relative_rank_improvement, repeatability_against, ucs_undefined, Aux, EnsembleAttributor,
    FeatureStats, MetricKind, MetricScore, PerturbationPolicy, ScoreValue,
    UncertaintyModel, UndefinedReason,
};
use crate::net::{train, Activation, DenseNetwork, Loss, TrainingSet, UqKind};
use crate::numstat;
use crate::pipeline::checkpoint::{load_network, save_network};
use crate::pipeline::config::{EvaluationConfig, MethodSpec, StochasticUcs, UqConfig};
use crate::pipeline::dataset::{kfold_split, load_csv_dataset, Fold, TabularDataset, Task};
use crate::sanity::{sanity_report, MetricScoreTable, SampleKey, SanityReport};
use crate::seed;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Metric pairs compared by internal consistency reliability.
pub fn consistency_pairs() -> Vec<(String, String)> {
    vec![
        ("rri".into(), "ucs.cosine".into()),
        ("rri".into(), "ucs.spearman".into()),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub fold: usize,
    /// Row index in the dataset file (0-based, header excluded).
    pub sample_id: usize,
    pub method: String,
    pub metric: MetricKind,
    pub value: ScoreValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux: Option<Aux>,
}

impl ScoreRecord {
    /// `(component name, value)` rows, `None` for undefined.
    pub fn components(&self) -> Vec<(String, Option<f64>)> {
        let names = self.metric.components();
        match self.value {
            ScoreValue::Undefined { .. } => names.into_iter().map(|n| (n, None)).collect(),
            v => names
                .into_iter()
                .map(|n| {
                    let suffix = n.split_once('.').map(|(_, s)| s);
                    let value = v.component(suffix);
                    (n, value)
                })
                .collect(),
        }
    }

    pub fn reason(&self) -> Option<UndefinedReason> {
        match self.value {
            ScoreValue::Undefined { reason } => Some(reason),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub metric: String,
    pub defined: usize,
    pub undefined: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub max: Option<f64>,
    /// `mean ± 1.96 · SE`; absent with fewer than two defined values.
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

impl Aggregate {
    pub fn from_values(method: &str, metric: &str, values: &[Option<f64>]) -> Self {
        let v: Vec<f64> = values.iter().flatten().copied().collect();
        let mean = numstat::mean(&v);
        let half = numstat::sample_std(&v).map(|sd| 1.96 * sd / (v.len() as f64).sqrt());
        Self {
            method: method.to_string(),
            metric: metric.to_string(),
            defined: v.len(),
            undefined: values.len() - v.len(),
            mean,
            median: numstat::median(&v),
            max: v.iter().copied().reduce(f64::max),
            ci_low: mean.zip(half).map(|(m, h)| m - h),
            ci_high: mean.zip(half).map(|(m, h)| m + h),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub index: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub samples: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub config: EvaluationConfig,
    pub folds: Vec<FoldRecord>,
    pub methods: Vec<String>,
    pub records: Vec<ScoreRecord>,
    pub aggregates: Vec<Aggregate>,
    pub sanity: SanityReport,
}

impl EvaluationReport {
    /// Assemble aggregates and the sanity section from score records.
    pub fn assemble(
        config: EvaluationConfig,
        folds: Vec<FoldRecord>,
        methods: Vec<String>,
        records: Vec<ScoreRecord>,
    ) -> Result<Self> {
        let mut report = Self {
            schema_version: REPORT_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            folds,
            methods,
            records,
            aggregates: Vec::new(),
            sanity: SanityReport::default(),
        };
        report.aggregates = report.compute_aggregates();
        report.sanity = report.compute_sanity(report.config.sanity.pooled)?;
        Ok(report)
    }

    pub fn component_values(&self, method: &str, component: &str) -> Vec<Option<f64>> {
        self.records
            .iter()
            .filter(|r| r.method == method)
            .flat_map(|r| r.components())
            .filter(|(n, _)| n == component)
            .map(|(_, v)| v)
            .collect()
    }

    fn compute_aggregates(&self) -> Vec<Aggregate> {
        let mut out = Vec::new();
        for method in &self.methods {
            for component in all_components() {
                let values = self.component_values(method, &component);
                if !values.is_empty() {
                    out.push(Aggregate::from_values(method, &component, &values));
                }
            }
        }
        out
    }

    pub fn aggregate(&self, method: &str, component: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.metric == component)
    }

    pub fn sample_keys(&self) -> Vec<SampleKey> {
        self.folds
            .iter()
            .flat_map(|f| {
                f.samples.iter().map(move |&s| SampleKey {
                    fold: f.index,
                    sample_id: s,
                })
            })
            .collect()
    }

    /// One methods × samples table per scalar metric component, spanning
    /// every fold; [`MetricScoreTable::fold_slice`] gives the per-fold view.
    pub fn tables(&self) -> Result<Vec<MetricScoreTable>> {
        let samples = self.sample_keys();
        let mut tables: Vec<MetricScoreTable> = all_components()
            .into_iter()
            .map(|c| MetricScoreTable::new(c, self.methods.clone(), samples.clone()))
            .collect();
        for r in &self.records {
            let m = self
                .methods
                .iter()
                .position(|x| *x == r.method)
                .ok_or_else(|| Error::Report(format!("record for unknown method {}", r.method)))?;
            let key = SampleKey {
                fold: r.fold,
                sample_id: r.sample_id,
            };
            let s = samples
                .iter()
                .position(|k| *k == key)
                .ok_or_else(|| Error::Report(format!("record for unknown sample {key:?}")))?;
            for (name, value) in r.components() {
                let t = tables
                    .iter_mut()
                    .find(|t| t.metric == name)
                    .expect("component tables cover every metric");
                t.set(m, s, value)?;
            }
        }
        Ok(tables)
    }

    pub fn compute_sanity(&self, pooled: bool) -> Result<SanityReport> {
        if self.methods.len() < 2 {
            return Ok(SanityReport::default());
        }
        sanity_report(&self.tables()?, &consistency_pairs(), pooled)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(s)?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Report(format!(
                "report schema {} is not supported (expected {REPORT_SCHEMA_VERSION})",
                r.schema_version
            )));
        }
        Ok(r)
    }
}

// ---------------------------------------------------------------------------
// Preparation

/// A fold ready for scoring: standardised training rows, sampled test rows
/// and one trained network per UQ method.
#[derive(Debug, Clone)]
pub struct PreparedFold {
    pub fold: Fold,
    /// Training rows in model (standardised) space.
    pub train_x: Vec<Vec<f64>>,
    /// Statistics of `train_x`, used by RIS and RRI.
    pub model_stats: FeatureStats,
    pub samples: Vec<usize>,
    pub networks: Vec<(UqConfig, DenseNetwork)>,
}

impl PreparedFold {
    pub fn network(&self, kind: UqKind) -> Option<&DenseNetwork> {
        self.networks
            .iter()
            .find(|(u, _)| u.kind == kind)
            .map(|(_, n)| n)
    }
}

#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub data: TabularDataset,
    pub folds: Vec<PreparedFold>,
}

pub fn checkpoint_path(dir: &Path, fold: usize, kind: UqKind) -> PathBuf {
    dir.join(format!("fold{fold}-{}.uanet", kind.label()))
}

fn untrained_network(
    cfg: &EvaluationConfig,
    data: &TabularDataset,
    fold: usize,
    uq: &UqConfig,
) -> Result<DenseNetwork> {
    let (out, act) = match data.task {
        Task::Regression => (1, Activation::Identity),
        Task::Classification => (data.n_classes(), Activation::Softmax),
    };
    let init = seed!(cfg.seed, "init", fold, uq.kind.label());
    let net = DenseNetwork::mlp(data.n_features(), &cfg.network.hidden, out, act, init)?
        .with_scaling(cfg.network.scaling);
    match uq.kind {
        UqKind::Mcd => net.with_dropout(uq.p),
        UqKind::Mcdc => net.with_dropconnect(uq.p),
    }
}

fn train_network(
    cfg: &EvaluationConfig,
    data: &TabularDataset,
    fold: usize,
    train_x: &[Vec<f64>],
    train_y: &[f64],
    uq: &UqConfig,
) -> Result<DenseNetwork> {
    let base = untrained_network(cfg, data, fold, uq)?;
    let mut tc = cfg.training.clone();
    tc.seed = seed!(cfg.seed, "train", fold, uq.kind.label(), cfg.training.seed);
    if data.task == Task::Classification {
        tc.loss = Loss::CrossEntropy;
    }
    let (net, summary) = train(
        &base,
        TrainingSet {
            inputs: train_x,
            targets: train_y,
        },
        &tc,
    )?;
    info!(
        "fold {fold} {}: trained {} epochs, final loss {:.5}",
        uq.kind.label(),
        summary.epochs,
        summary.final_loss
    );
    Ok(net)
}

fn check_compatible(net: &DenseNetwork, expected: &DenseNetwork, path: &Path) -> Result<()> {
    let dims = |n: &DenseNetwork| -> Vec<(usize, usize, Activation)> {
        n.layers()
            .iter()
            .map(|l| (l.in_dim, l.out_dim, l.activation))
            .collect()
    };
    if dims(net) != dims(expected)
        || net.dropout() != expected.dropout()
        || net.dropconnect() != expected.dropconnect()
        || net.scaling() != expected.scaling()
    {
        return Err(Error::Checkpoint(format!(
            "{} does not match the configured network; delete it to retrain",
            path.display()
        )));
    }
    Ok(())
}

/// Load the dataset, split folds, sample test rows and obtain one network
/// per (fold, UQ method). With `checkpoints`, existing checkpoints are
/// loaded and freshly trained networks are saved there.
pub fn prepare(cfg: &EvaluationConfig, checkpoints: Option<&Path>) -> Result<PreparedRun> {
    cfg.validate()?;
    let data = load_csv_dataset(&cfg.dataset)?;
    let folds = kfold_split(&data, cfg.folds, seed!(cfg.seed, "folds"))?;
    let active = cfg.active_folds();
    let jobs: Vec<(usize, UqConfig)> = active
        .iter()
        .flat_map(|&f| cfg.uq.iter().map(move |u| (f, *u)))
        .collect();
    let standardized: Vec<Vec<Vec<f64>>> = active
        .iter()
        .map(|&f| folds[f].standardized_rows(&data, &folds[f].train))
        .collect();
    let nets = jobs
        .par_iter()
        .map(|(f, uq)| {
            let fold = &folds[*f];
            let pos = active.iter().position(|a| a == f).expect("active fold");
            let train_x = &standardized[pos];
            let train_y: Vec<f64> = fold.train.iter().map(|&r| data.targets[r]).collect();
            if let Some(dir) = checkpoints {
                let path = checkpoint_path(dir, *f, uq.kind);
                if path.exists() {
                    let net = load_network(&path)?;
                    check_compatible(&net, &untrained_network(cfg, &data, *f, uq)?, &path)?;
                    debug!("loaded {}", path.display());
                    return Ok(net);
                }
                let net = train_network(cfg, &data, *f, train_x, &train_y, uq)?;
                save_network(&net, &path)?;
                return Ok(net);
            }
            train_network(cfg, &data, *f, train_x, &train_y, uq)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut nets = nets.into_iter();
    let mut prepared = Vec::with_capacity(active.len());
    for (pos, &f) in active.iter().enumerate() {
        let fold = folds[f].clone();
        let mut test = fold.test.clone();
        test.shuffle(&mut crate::seed::rng_from_seed(seed!(cfg.seed, "samples", f)));
        test.truncate(cfg.samples_per_fold);
        test.sort_unstable();
        let train_x = standardized[pos].clone();
        let model_stats = FeatureStats::from_rows(&train_x)?;
        let networks = cfg
            .uq
            .iter()
            .map(|u| (*u, nets.next().expect("one network per job")))
            .collect();
        prepared.push(PreparedFold {
            fold,
            train_x,
            model_stats,
            samples: test,
            networks,
        });
    }
    Ok(PreparedRun { data, folds: prepared })
}

// ---------------------------------------------------------------------------
// Scoring

fn sample_seed(cfg: &EvaluationConfig, fold: usize, sample: usize, method: &str) -> u64 {
    seed!(cfg.seed, fold, sample, method)
}

/// All six metrics for one (fold, sample, method), in [`MetricKind::ALL`]
/// order.
pub fn score_sample(
    cfg: &EvaluationConfig,
    fold: &PreparedFold,
    method: &MethodSpec,
    x: &[f64],
    base_seed: u64,
) -> Result<Vec<MetricScore>> {
    let net = fold
        .network(method.uq.kind)
        .ok_or_else(|| Error::Config(format!("no network for {}", method.uq.kind.label())))?;
    let spec = method.explainer.spec(cfg.seed);
    let model = EnsembleAttributor {
        net,
        spec: &spec,
        kind: method.uq.kind,
        ensemble_size: cfg.ensemble_size,
    };
    let m = &cfg.metrics;
    let reference = model.attribute(x, seed!(base_seed, "ua"))?;
    let u = reference.attribution.as_slice();

    let mut out = Vec::with_capacity(MetricKind::ALL.len());
    for metric in MetricKind::ALL {
        let s = seed!(base_seed, metric.label());
        let score = match metric {
            MetricKind::Complexity => complexity(u)?,
            MetricKind::Repeatability => repeatability_against(&model, x, u, cfg.repetitions, s)?,
            MetricKind::FeatureFlipping => feature_flipping_auc(
                &model,
                x,
                u,
                PerturbationPolicy::ConditionalResample {
                    neighbours: m.neighbours,
                    pool: &fold.train_x,
                },
                s,
            )?,
            MetricKind::Ris => relative_input_stability(
                &model,
                x,
                &reference,
                PerturbationPolicy::GaussianNeighbourhood {
                    noise_scale: m.noise_scale,
                    stats: &fold.model_stats,
                },
                &m.ris_params(),
                s,
            )?,
            MetricKind::Rri => relative_rank_improvement(
                &model,
                x,
                u,
                PerturbationPolicy::MeanPlusKSigma {
                    k: m.rri_k,
                    stats: &fold.model_stats,
                },
                s,
            )?,
            MetricKind::Ucs => {
                let stochastic = spec.method.is_stochastic();
                if stochastic && m.stochastic_ucs == StochasticUcs::Undefined {
                    ucs_undefined(UndefinedReason::StochasticExplainer)
                } else {
                    let u_lin = analytic_uncertainty_attribution_with(
                        net,
                        x,
                        &spec,
                        method.uq.kind,
                        method.uq.p,
                        cfg.jacobian_layer(),
                        Some(reference.target),
                        StochasticPolicy::FreezeSeed,
                    )?;
                    MetricScore {
                        metric: MetricKind::Ucs,
                        value: metrics::uncertainty_conveyance_similarity(u, &u_lin)?.into(),
                        aux: None,
                    }
                }
            }
        };
        out.push(score);
    }
    Ok(out)
}

struct WorkItem<'a> {
    fold: &'a PreparedFold,
    method: &'a MethodSpec,
    label: String,
    sample: usize,
}

fn work_items<'a>(run: &'a PreparedRun, methods: &'a [MethodSpec]) -> Vec<WorkItem<'a>> {
    let mut items = Vec::new();
    for fold in &run.folds {
        for method in methods {
            for &sample in &fold.samples {
                items.push(WorkItem {
                    fold,
                    method,
                    label: method.label(),
                    sample,
                });
            }
        }
    }
    items
}

/// Score every sampled point of a prepared run and assemble the report.
pub fn evaluate_prepared(cfg: &EvaluationConfig, run: &PreparedRun) -> Result<EvaluationReport> {
    let methods = cfg.methods();
    let items = work_items(run, &methods);
    info!("scoring {} (fold, method, sample) items", items.len());
    let scored = items
        .par_iter()
        .map(|it| {
            let x = it.fold.fold.standardize(&run.data.features[it.sample]);
            let base = sample_seed(cfg, it.fold.fold.index, it.sample, &it.label);
            let scores = score_sample(cfg, it.fold, it.method, &x, base)?;
            debug!("fold {} {} sample {} done", it.fold.fold.index, it.label, it.sample);
            Ok(scores
                .into_iter()
                .map(|s| ScoreRecord {
                    fold: it.fold.fold.index,
                    sample_id: it.sample,
                    method: it.label.clone(),
                    metric: s.metric,
                    value: s.value,
                    aux: s.aux,
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let folds = run
        .folds
        .iter()
        .map(|f| FoldRecord {
            index: f.fold.index,
            train_rows: f.fold.train.len(),
            test_rows: f.fold.test.len(),
            samples: f.samples.clone(),
        })
        .collect();
    EvaluationReport::assemble(
        cfg.clone(),
        folds,
        methods.iter().map(MethodSpec::label).collect(),
        scored.into_iter().flatten().collect(),
    )
}

/// Train, score and assemble in one go.
pub fn run_evaluation(cfg: &EvaluationConfig) -> Result<EvaluationReport> {
    let run = prepare(cfg, None)?;
    evaluate_prepared(cfg, &run)
}

/// The member explanations behind every reference attribution of a run.
pub fn collect_attributions(
    cfg: &EvaluationConfig,
    run: &PreparedRun,
) -> Result<Vec<AttributionRecord>> {
    let methods = cfg.methods();
    let items = work_items(run, &methods);
    let records = items
        .par_iter()
        .map(|it| {
            let net = it
                .fold
                .network(it.method.uq.kind)
                .ok_or_else(|| Error::Config("missing network".into()))?;
            let x = it.fold.fold.standardize(&run.data.features[it.sample]);
            let base = sample_seed(cfg, it.fold.fold.index, it.sample, &it.label);
            let spec = it.method.explainer.spec(cfg.seed);
            let (_, members, ens) = uncertainty_attribution(
                net,
                &x,
                &spec,
                it.method.uq.kind,
                cfg.ensemble_size,
                seed!(base, "ua"),
            )?;
            Ok(AttributionRecord::from_ensemble(
                it.fold.fold.index,
                it.sample,
                &it.label,
                &ens,
                &members,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(records.into_iter().flatten().collect())
}
