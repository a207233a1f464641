//! Global z-score statistics fitted on training cases.

use serde::{Deserialize, Serialize};

use super::CaseTrajectory;
use crate::error::{Error, Result};

/// Standard deviations below this are treated as a constant channel.
const STD_FLOOR: f64 = 1e-12;

/// Mean and standard deviation per component of one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub fn width(&self) -> usize {
        self.mean.len()
    }

    /// Population statistics of row-major data with `width` components per row.
    fn fit<'a>(width: usize, chunks: impl Iterator<Item = &'a [f64]> + Clone) -> Self {
        let mut count = 0usize;
        let mut sum = vec![0.0; width];
        for chunk in chunks.clone() {
            for row in chunk.chunks_exact(width) {
                sum.iter_mut().zip(row).for_each(|(s, v)| *s += v);
                count += 1;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0; width];
        for chunk in chunks {
            for row in chunk.chunks_exact(width) {
                for c in 0..width {
                    let d = row[c] - mean[c];
                    sq[c] += d * d;
                }
            }
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = (s / count as f64).sqrt();
                if sd < STD_FLOOR {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Self { mean, std }
    }

    /// Scalar mean/std of a single-component channel.
    pub fn scalar(&self) -> (f64, f64) {
        (self.mean[0], self.std[0])
    }
}

/// Statistics for every continuous channel. Coordinates are standardized
/// per axis; each target field gets a single mean/std over all of its
/// components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub coords: ChannelStats,
    pub u: ChannelStats,
    pub s: ChannelStats,
    pub peeq: ChannelStats,
    pub rf2: ChannelStats,
}

pub fn compute_norm_stats(train: &[&CaseTrajectory]) -> Result<NormStats> {
    if train.is_empty() {
        return Err(Error::InvalidInput("normalization needs at least one training case".into()));
    }
    let coords: Vec<Vec<f64>> = train
        .iter()
        .map(|c| c.coords.iter().flatten().copied().collect())
        .collect();
    Ok(NormStats {
        coords: ChannelStats::fit(3, coords.iter().map(|v| v.as_slice())),
        u: ChannelStats::fit(1, train.iter().map(|c| c.u.as_slice())),
        s: ChannelStats::fit(1, train.iter().map(|c| c.s.as_slice())),
        peeq: ChannelStats::fit(1, train.iter().map(|c| c.peeq.as_slice())),
        rf2: ChannelStats::fit(1, train.iter().map(|c| c.rf2.as_slice())),
    })
}

fn check(x: &[f64], width: usize, stats: &ChannelStats) -> Result<()> {
    if width != stats.width() || x.len() % width != 0 {
        return Err(Error::ChannelMismatch {
            expected: stats.width(),
            found: width,
        });
    }
    Ok(())
}

/// `(x - mean) / std` on rows of `width` components.
pub fn apply_norm(x: &[f64], width: usize, stats: &ChannelStats) -> Result<Vec<f64>> {
    check(x, width, stats)?;
    Ok(x.iter()
        .enumerate()
        .map(|(i, v)| (v - stats.mean[i % width]) / stats.std[i % width])
        .collect())
}

pub fn invert_norm(x: &[f64], width: usize, stats: &ChannelStats) -> Result<Vec<f64>> {
    check(x, width, stats)?;
    Ok(x.iter()
        .enumerate()
        .map(|(i, v)| v * stats.std[i % width] + stats.mean[i % width])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stats_of(data: &[f64]) -> ChannelStats {
        ChannelStats::fit(1, std::iter::once(data))
    }

    #[test]
    fn population_convention() {
        let st = stats_of(&[1.0, 2.0, 3.0]);
        assert_eq!(st.mean[0], 2.0);
        assert!((st.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_channel_is_clamped() {
        let st = stats_of(&[0.0; 5]);
        assert_eq!(st.std[0], 1.0);
        assert_eq!(apply_norm(&[0.0; 5], 1, &st).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn self_normalized_has_unit_moments() {
        let data: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 * 0.3 - 4.0).collect();
        let st = stats_of(&data);
        let z = apply_norm(&data, 1, &st).unwrap();
        let m = z.iter().sum::<f64>() / z.len() as f64;
        let v = z.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / z.len() as f64;
        assert!(m.abs() < 1e-10 && (v.sqrt() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mean_and_one_std() {
        let st = ChannelStats { mean: vec![5.0], std: vec![2.0] };
        assert_eq!(apply_norm(&[5.0, 7.0], 1, &st).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn width_mismatch() {
        let st = ChannelStats { mean: vec![0.0; 3], std: vec![1.0; 3] };
        assert!(matches!(apply_norm(&[1.0; 6], 1, &st), Err(Error::ChannelMismatch { .. })));
        assert!(apply_norm(&[1.0; 6], 3, &st).is_ok());
    }

    #[test]
    fn empty_training_set() {
        assert!(compute_norm_stats(&[]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(data in prop::collection::vec(-1e6f64..1e6, 1..60), mean in -1e3f64..1e3, std in 1e-3f64..1e3) {
            let st = ChannelStats { mean: vec![mean], std: vec![std] };
            let back = invert_norm(&apply_norm(&data, 1, &st).unwrap(), 1, &st).unwrap();
            for (a, b) in data.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
