use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SPLIT: [f64; 3] = [0.7, 0.15, 0.15];

/// Whole-case train/validation/test partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Shuffles `0..n_cases` with a seeded generator and cuts it into three
/// parts. Validation and test sizes are `ratio * n` rounded half-to-even;
/// training receives the remainder.
pub fn split_cases(n_cases: usize, ratios: [f64; 3], seed: u64) -> Result<SplitAssignment> {
    if ratios.iter().any(|&r| !(r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("split ratios {ratios:?} must be positive and sum to 1")));
    }
    if n_cases < 3 {
        return Err(Error::InvalidInput(format!("{n_cases} cases cannot fill three partitions")));
    }
    let size = |r: f64| ((r * n_cases as f64).round_ties_even() as usize).max(1);
    let (n_val, n_test) = (size(ratios[1]), size(ratios[2]));
    if n_val + n_test >= n_cases {
        return Err(Error::InvalidInput(format!("{n_cases} cases leave no training data")));
    }
    let mut order: Vec<usize> = (0..n_cases).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n_cases - n_val - n_test;
    let mut train = order[..n_train].to_vec();
    let mut validation = order[n_train..n_train + n_val].to_vec();
    let mut test = order[n_train + n_val..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();
    Ok(SplitAssignment {
        train,
        validation,
        test,
        seed,
    })
}
