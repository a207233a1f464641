//! RMSE and coefficient of determination per output channel.

use serde::{Deserialize, Serialize};

use crate::case_store::{apply_norm, ChannelStats, CaseTrajectory, NormStats};
use crate::error::{Error, Result};
use crate::surrogate::RolloutResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    pub rmse_normalized: f64,
    /// Normalized RMSE times the channel standard deviation.
    pub rmse_physical: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_cases: usize,
    pub u: ChannelMetrics,
    pub s: ChannelMetrics,
    pub peeq: ChannelMetrics,
    pub rf2: ChannelMetrics,
}

/// Running sums for one channel, pooled over frames, points and components.
#[derive(Debug, Clone, Default)]
struct Accum {
    count: usize,
    ss_res: f64,
    sum: f64,
}

impl Accum {
    fn add(&mut self, pred: &[f64], target: &[f64]) {
        for (p, t) in pred.iter().zip(target) {
            self.ss_res += (p - t) * (p - t);
            self.sum += t;
        }
        self.count += target.len();
    }

    fn finish(&self, stats: &ChannelStats, targets: &[&[f64]]) -> ChannelMetrics {
        let n = self.count as f64;
        let rmse = (self.ss_res / n).sqrt();
        // two-pass total sum of squares for accuracy
        let mean = self.sum / n;
        let ss_tot: f64 = targets.iter().flat_map(|t| t.iter()).map(|t| (t - mean) * (t - mean)).sum();
        let r2 = if ss_tot > 0.0 {
            1.0 - self.ss_res / ss_tot
        } else if self.ss_res == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        };
        ChannelMetrics {
            rmse_normalized: rmse,
            rmse_physical: rmse * stats.std[0],
            r2,
        }
    }
}

/// Aggregates metrics over several predicted cases in normalized space.
pub fn compute_metrics(preds: &[RolloutResult], cases: &[&CaseTrajectory], stats: &NormStats) -> Result<Metrics> {
    if preds.len() != cases.len() || preds.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} predictions for {} cases",
            preds.len(),
            cases.len()
        )));
    }
    let mut targets: [Vec<Vec<f64>>; 4] = Default::default();
    let mut acc: [Accum; 4] = Default::default();
    for (p, c) in preds.iter().zip(cases) {
        if p.n_frames != c.n_frames() || p.n_nodes != c.n_nodes() || p.n_elems != c.n_elems() {
            return Err(Error::shape("metrics", "prediction does not match the case"));
        }
        let t = [
            apply_norm(&c.u, 1, &stats.u)?,
            apply_norm(&c.s, 1, &stats.s)?,
            apply_norm(&c.peeq, 1, &stats.peeq)?,
            apply_norm(&c.rf2, 1, &stats.rf2)?,
        ];
        let pr = [&p.u, &p.s, &p.peeq, &p.rf2];
        for k in 0..4 {
            acc[k].add(pr[k], &t[k]);
        }
        for (k, v) in t.into_iter().enumerate() {
            targets[k].push(v);
        }
    }
    let view = |k: usize| -> Vec<&[f64]> { targets[k].iter().map(|v| v.as_slice()).collect() };
    Ok(Metrics {
        n_cases: preds.len(),
        u: acc[0].finish(&stats.u, &view(0)),
        s: acc[1].finish(&stats.s, &view(1)),
        peeq: acc[2].finish(&stats.peeq, &view(2)),
        rf2: acc[3].finish(&stats.rf2, &view(3)),
    })
}
