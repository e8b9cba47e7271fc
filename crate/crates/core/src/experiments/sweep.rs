//! Hyperparameter sweeps over the full pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::baselines::{run_repeated, RunKind, RunsSummary};
use crate::mdp::MdpConfig;
use crate::netbuild::WeightedGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    KNeighbors,
    BActions,
    Dimension,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "k" | "k_neighbors" => Ok(Self::KNeighbors),
            "b" | "b_actions" => Ok(Self::BActions),
            "dim" | "dimension" => Ok(Self::Dimension),
            other => Err(Error::Config(format!(
                "unknown sweep parameter {other:?} (expected k, b, or dim)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<usize>,
    pub reps: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.values.iter().any(|&v| v == 0) {
            return Err(Error::Config("sweep values must be positive".into()));
        }
        if self.reps < 1 {
            return Err(Error::Config("sweep needs at least one repetition".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub accuracy_formatted: String,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub auc_formatted: String,
    pub summary: RunsSummary,
}

/// Runs the full pipeline for every value x repetition; rows come back
/// keyed by parameter value in ascending order.
pub fn run_sweep(
    spec: &SweepSpec,
    cfg: &MdpConfig,
    dataset: &[WeightedGraph],
) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut values = spec.values.clone();
    values.sort_unstable();
    values.dedup();
    let mut rows = Vec::with_capacity(values.len());
    for value in values {
        let mut run_cfg = cfg.clone();
        match spec.param {
            SweepParam::KNeighbors => run_cfg.k = value,
            SweepParam::BActions => run_cfg.actions = value,
            SweepParam::Dimension => run_cfg.dim = value,
        }
        let summary = run_repeated(RunKind::BnGnn, &run_cfg, dataset, spec.reps, None)?;
        rows.push(SweepRow {
            value,
            mean_accuracy: summary.mean_accuracy,
            std_accuracy: summary.std_accuracy,
            accuracy_formatted: summary.accuracy_formatted.clone(),
            mean_auc: summary.mean_auc,
            std_auc: summary.std_auc,
            auc_formatted: summary.auc_formatted.clone(),
            summary,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(SweepSpec {
            param: SweepParam::BActions,
            values: vec![],
            reps: 1,
        }
        .validate()
        .is_err());
        assert!(SweepSpec {
            param: SweepParam::BActions,
            values: vec![0],
            reps: 1,
        }
        .validate()
        .is_err());
        assert!(SweepSpec {
            param: SweepParam::BActions,
            values: vec![1, 2],
            reps: 0,
        }
        .validate()
        .is_err());
        assert!(SweepParam::parse("k").is_ok());
        assert!(SweepParam::parse("banana").is_err());
    }
}
