//! Dual-graph versus node-only comparison under one split and budget.

use std::io::Write;

use serde::Serialize;

use super::{evaluate, train, TrainConfig};
use crate::case_store::{CaseTrajectory, SplitAssignment};
use crate::error::{Error, Result};
use crate::surrogate::ModelKind;

/// Element-resolution test errors of one trained model.
#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub kind: ModelKind,
    pub seed: u64,
    pub parameter_count: usize,
    pub best_epoch: usize,
    pub stress_rmse: f64,
    pub peeq_rmse: f64,
    pub stress_rmse_normalized: f64,
    pub peeq_rmse_normalized: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    /// `[reference, candidate]`; reductions are relative to the reference.
    pub kinds: [ModelKind; 2],
    pub rows: Vec<AblationRow>,
    /// Median physical RMSE over seeds, `[reference, candidate]`.
    pub stress_median: [f64; 2],
    pub peeq_median: [f64; 2],
    /// `(1 - candidate / reference) · 100`.
    pub stress_reduction_percent: f64,
    pub peeq_reduction_percent: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn label(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Dual => "Dual-Graph",
        ModelKind::Baseline => "Single-Graph",
    }
}

impl AblationReport {
    /// Table with one row per model (medians over seeds) and a final row
    /// with the relative reduction.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "Model,Stress RMSE,PEEQ RMSE")?;
        for k in 0..2 {
            writeln!(
                out,
                "{},{:.6e},{:.6e}",
                label(self.kinds[k]),
                self.stress_median[k],
                self.peeq_median[k]
            )?;
        }
        writeln!(
            out,
            "Relative reduction (%),{:.2},{:.2}",
            self.stress_reduction_percent, self.peeq_reduction_percent
        )
    }

    /// Every seed's result as CSV.
    pub fn write_runs_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(
            out,
            "model,seed,parameters,best_epoch,stress_rmse,peeq_rmse,stress_rmse_normalized,peeq_rmse_normalized"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{:e},{:e},{:e},{:e}",
                r.kind,
                r.seed,
                r.parameter_count,
                r.best_epoch,
                r.stress_rmse,
                r.peeq_rmse,
                r.stress_rmse_normalized,
                r.peeq_rmse_normalized
            )?;
        }
        Ok(())
    }
}

/// Trains `kinds[0]` and `kinds[1]` for every seed with otherwise identical
/// settings and compares their test-set errors at element resolution.
pub fn ablate(
    cases: &[&CaseTrajectory],
    split: &SplitAssignment,
    config: &TrainConfig,
    seeds: &[u64],
    kinds: [ModelKind; 2],
    mut progress: impl FnMut(&AblationRow),
) -> Result<AblationReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidInput("ablation needs at least one seed".into()));
    }
    let pick = |idx: &[usize]| -> Result<Vec<&CaseTrajectory>> {
        idx.iter()
            .map(|&i| {
                cases
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::InvalidInput(format!("split refers to missing case {i}")))
            })
            .collect()
    };
    let train_set = pick(&split.train)?;
    let val_set = pick(&split.validation)?;
    let test_set = pick(&split.test)?;
    if test_set.is_empty() {
        return Err(Error::InvalidInput("ablation needs a nonempty test split".into()));
    }
    let mut rows = Vec::with_capacity(2 * seeds.len());
    for &seed in seeds {
        for kind in kinds {
            let cfg = TrainConfig {
                seed,
                model: config.model.with_kind(kind),
                ..config.clone()
            };
            let outcome = train(&train_set, &val_set, &cfg, |_| {})?;
            let ckpt = &outcome.best;
            let m = evaluate(ckpt, &test_set, &ckpt.stats)?;
            let row = AblationRow {
                kind,
                seed,
                parameter_count: ckpt.params.count(),
                best_epoch: ckpt.epoch,
                stress_rmse: m.s.rmse_physical,
                peeq_rmse: m.peeq.rmse_physical,
                stress_rmse_normalized: m.s.rmse_normalized,
                peeq_rmse_normalized: m.peeq.rmse_normalized,
            };
            progress(&row);
            rows.push(row);
        }
    }
    let med = |k: usize, f: fn(&AblationRow) -> f64| median(rows.iter().skip(k).step_by(2).map(f).collect());
    let stress_median = [med(0, |r| r.stress_rmse), med(1, |r| r.stress_rmse)];
    let peeq_median = [med(0, |r| r.peeq_rmse), med(1, |r| r.peeq_rmse)];
    let reduction = |m: [f64; 2]| if m[0] > 0.0 { (1.0 - m[1] / m[0]) * 100.0 } else { 0.0 };
    Ok(AblationReport {
        kinds,
        stress_reduction_percent: reduction(stress_median),
        peeq_reduction_percent: reduction(peeq_median),
        stress_median,
        peeq_median,
        rows,
    })
}
