//! Random train/validation/test node splits.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Benchmark protocol constants.
pub const DEFAULT_RATIOS: [f64; 3] = [0.6, 0.2, 0.2];
pub const DEFAULT_SPLIT_COUNT: usize = 10;
pub const DEFAULT_SPLIT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }

    /// Checks that the three lists partition `0..n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n {
                return Err(Error::contract(format!("split index {i} >= n = {n}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::contract(format!("node {i} appears twice in split")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::contract("split does not cover every node"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSet {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub splits: Vec<Split>,
}

impl SplitSet {
    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::dataset::write(path.as_ref(), &self.to_json()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, Some(e.line()), e.to_string()))
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        self.splits.iter().try_for_each(|s| s.validate(n))
    }
}

pub fn check_ratios(ratios: [f64; 3]) -> Result<()> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::contract(format!(
            "ratios {ratios:?} must be in [0, 1] and sum to 1"
        )));
    }
    Ok(())
}

/// `k` independent permutations of `0..n`, each cut into
/// `floor(r₀·n)` train, `floor(r₁·n)` validation and the remainder as test.
pub fn generate_splits(n: usize, ratios: [f64; 3], k: usize, seed: u64) -> Result<SplitSet> {
    if n < 3 {
        return Err(Error::contract(format!("need at least 3 nodes to split, got {n}")));
    }
    check_ratios(ratios)?;
    let n_train = (ratios[0] * n as f64 + 1e-9).floor() as usize;
    let n_val = (ratios[1] * n as f64 + 1e-9).floor() as usize;
    let splits = (0..k)
        .map(|s| {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng::substream(seed, &format!("split/{s}")));
            let test = perm.split_off(n_train + n_val);
            let val = perm.split_off(n_train);
            Split {
                train: perm,
                val,
                test,
            }
        })
        .collect();
    Ok(SplitSet {
        seed,
        ratios,
        splits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_follow_floor_floor_remainder() {
        let s = generate_splits(10, DEFAULT_RATIOS, 3, 42).unwrap();
        assert!(s.splits.iter().all(|sp| sp.sizes() == (6, 2, 2)));
        // 0.6·183 = 109.8, 0.2·183 = 36.6, remainder 38.
        let s = generate_splits(183, DEFAULT_RATIOS, 1, 42).unwrap();
        assert_eq!(s.splits[0].sizes(), (109, 36, 38));
    }

    #[test]
    fn deterministic_and_partitioning() {
        let a = generate_splits(57, DEFAULT_RATIOS, 10, 42).unwrap();
        assert_eq!(a, generate_splits(57, DEFAULT_RATIOS, 10, 42).unwrap());
        assert_ne!(a, generate_splits(57, DEFAULT_RATIOS, 10, 43).unwrap());
        a.validate(57).unwrap();
        assert_ne!(a.splits[0], a.splits[1]);
    }

    #[test]
    fn contract_errors() {
        assert!(generate_splits(2, DEFAULT_RATIOS, 1, 0).is_err());
        assert!(generate_splits(10, [0.5, 0.2, 0.2], 1, 0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let a = generate_splits(20, DEFAULT_RATIOS, 2, 42).unwrap();
        let back: SplitSet = serde_json::from_str(&a.to_json().unwrap()).unwrap();
        assert_eq!(a, back);
    }
}
