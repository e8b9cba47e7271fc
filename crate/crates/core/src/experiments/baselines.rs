//! Full-pipeline runners: the meta-policy model, fixed-depth and
//! skip-connection baselines, the random policy, and repeated-seed
//! summaries.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::metrics::{format_mean_std, mean_std};
use crate::experiments::split::{split, Splits};
use crate::gnn::GnnKind;
use crate::mdp::{
    prepare, run_mdp, train_final_model, DepthPolicy, EvalReport, MdpConfig, MdpOutcome,
    Prepared, RunLogWriter, TrainOutcome,
};
use crate::netbuild::WeightedGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    GcnFixed,
    GatFixed,
    GcnSkip,
    GatSkip,
    RandomPolicy,
}

impl BaselineKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gcn-fixed" => Ok(Self::GcnFixed),
            "gat-fixed" => Ok(Self::GatFixed),
            "gcn-skip" => Ok(Self::GcnSkip),
            "gat-skip" => Ok(Self::GatSkip),
            "random-policy" => Ok(Self::RandomPolicy),
            other => Err(Error::Config(format!(
                "unknown baseline {other:?} (expected gcn-fixed, gat-fixed, gcn-skip, gat-skip, random-policy)"
            ))),
        }
    }

    fn gnn_kind(&self, default: GnnKind) -> GnnKind {
        match self {
            Self::GcnFixed | Self::GcnSkip => GnnKind::Gcn,
            Self::GatFixed | Self::GatSkip => GnnKind::Gat,
            Self::RandomPolicy => default,
        }
    }

    pub fn label(&self, cfg: &MdpConfig, depth: Option<usize>) -> String {
        match self {
            Self::GcnFixed => format!("gcn-fixed-{}", depth.unwrap_or(0)),
            Self::GatFixed => format!("gat-fixed-{}", depth.unwrap_or(0)),
            Self::GcnSkip => "gcn-skip".to_string(),
            Self::GatSkip => "gat-skip".to_string(),
            Self::RandomPolicy => format!("{}-random-policy", cfg.kind),
        }
    }
}

/// Trains and evaluates one baseline under the shared protocol.
pub fn run_baseline(
    kind: BaselineKind,
    depth: Option<usize>,
    cfg: &MdpConfig,
    dataset: &[WeightedGraph],
    prepared: &Prepared,
    splits: &Splits,
    log: &mut RunLogWriter,
) -> Result<TrainOutcome> {
    let mut cfg = cfg.clone();
    cfg.kind = kind.gnn_kind(cfg.kind);
    match kind {
        BaselineKind::GcnFixed | BaselineKind::GatFixed => {
            let depth = depth.ok_or_else(|| {
                Error::Config("fixed-depth baselines need an explicit depth".into())
            })?;
            if depth < 1 || depth > cfg.actions {
                return Err(Error::Config(format!(
                    "baseline depth {depth} outside 1..={}",
                    cfg.actions
                )));
            }
            train_final_model(
                &cfg,
                dataset,
                prepared,
                splits,
                DepthPolicy::Fixed(depth),
                false,
                log,
            )
        }
        BaselineKind::GcnSkip | BaselineKind::GatSkip => train_final_model(
            &cfg,
            dataset,
            prepared,
            splits,
            DepthPolicy::Fixed(cfg.actions),
            true,
            log,
        ),
        BaselineKind::RandomPolicy => {
            let policy = if cfg.random_fixed_per_instance {
                DepthPolicy::RandomPerInstanceFixed
            } else {
                DepthPolicy::RandomPerEpoch
            };
            train_final_model(&cfg, dataset, prepared, splits, policy, false, log)
        }
    }
}

pub struct PipelineOutcome {
    pub mdp: MdpOutcome,
    pub train: TrainOutcome,
}

/// The full pipeline: run the MDP to train the meta-policy, then train the
/// final model under the frozen policy's greedy depths.
pub fn run_bngnn(
    cfg: &MdpConfig,
    dataset: &[WeightedGraph],
    prepared: &Prepared,
    splits: &Splits,
    log: &mut RunLogWriter,
) -> Result<PipelineOutcome> {
    let mdp = run_mdp(cfg, dataset, prepared, splits, log, false)?;
    let train = train_final_model(
        cfg,
        dataset,
        prepared,
        splits,
        DepthPolicy::Greedy(&mdp.nets),
        false,
        log,
    )?;
    Ok(PipelineOutcome { mdp, train })
}

/// What a repeated-seed summary runs per seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    BnGnn,
    Baseline(BaselineKind, Option<usize>),
}

impl RunKind {
    pub fn label(&self, cfg: &MdpConfig) -> String {
        match self {
            RunKind::BnGnn => format!("bn-{}", cfg.kind),
            RunKind::Baseline(kind, depth) => kind.label(cfg, *depth),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub accuracy: f64,
    pub auc: f64,
    pub best_epoch: usize,
    pub depth_histogram: BTreeMap<usize, usize>,
    /// Fraction of test instances whose chosen depth matches the known
    /// optimum (synthetic data only).
    pub depth_agreement: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunsSummary {
    pub label: String,
    pub config: MdpConfig,
    pub reps: usize,
    pub runs: Vec<RunRecord>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub accuracy_formatted: String,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub auc_formatted: String,
}

pub fn depth_agreement(report: &EvalReport, truth: &BTreeMap<String, usize>) -> Option<f64> {
    let mut hits = 0usize;
    for p in &report.predictions {
        match truth.get(&p.id) {
            Some(&d) => {
                if d == p.depth {
                    hits += 1;
                }
            }
            None => return None,
        }
    }
    Some(hits as f64 / report.predictions.len() as f64)
}

/// Runs `reps` independent seeded repetitions (seed, seed+1, ...) of the
/// given pipeline, fanning out across workers, and aggregates mean/std.
pub fn run_repeated(
    kind: RunKind,
    cfg: &MdpConfig,
    dataset: &[WeightedGraph],
    reps: usize,
    truth: Option<&BTreeMap<String, usize>>,
) -> Result<RunsSummary> {
    if reps < 1 {
        return Err(Error::Config("need at least one repetition".into()));
    }
    let runs: Vec<RunRecord> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<RunRecord> {
            let mut rep_cfg = cfg.clone();
            rep_cfg.seed = cfg.seed.wrapping_add(rep as u64);
            let splits = split(dataset, rep_cfg.seed)?;
            let prepared = prepare(dataset, &splits, rep_cfg.k)?;
            let outcome = match kind {
                RunKind::BnGnn => {
                    run_bngnn(
                        &rep_cfg,
                        dataset,
                        &prepared,
                        &splits,
                        &mut RunLogWriter::disabled(),
                    )?
                    .train
                }
                RunKind::Baseline(bk, depth) => run_baseline(
                    bk,
                    depth,
                    &rep_cfg,
                    dataset,
                    &prepared,
                    &splits,
                    &mut RunLogWriter::disabled(),
                )?,
            };
            Ok(RunRecord {
                seed: rep_cfg.seed,
                accuracy: outcome.report.accuracy,
                auc: outcome.report.auc,
                best_epoch: outcome.best_epoch,
                depth_agreement: truth.and_then(|t| depth_agreement(&outcome.report, t)),
                depth_histogram: outcome.report.depth_histogram,
            })
        })
        .collect::<Result<_>>()?;

    let accs: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
    let aucs: Vec<f64> = runs.iter().map(|r| r.auc).collect();
    let (mean_accuracy, std_accuracy) = mean_std(&accs);
    let (mean_auc, std_auc) = mean_std(&aucs);
    Ok(RunsSummary {
        label: kind.label(cfg),
        config: cfg.clone(),
        reps,
        runs,
        mean_accuracy,
        std_accuracy,
        accuracy_formatted: format_mean_std(mean_accuracy, std_accuracy),
        mean_auc,
        std_auc,
        auc_formatted: format_mean_std(mean_auc, std_auc),
    })
}
