//! Bagged ensemble of CART trees with per-node random column subsets.
//!
//! Tree `t` draws from `SeededRng::new(mix_seed([seed, t]))`: first the
//! bootstrap sample (when enabled), then the column subsets as it grows. The
//! forest predicts 1 when strictly more than half the trees vote 1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{check_training, Grower, TreeModel};
use crate::error::{Error, Result};
use crate::tensor::{mix_seed, Matrix, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub bootstrap: bool,
    /// `None` uses `round(sqrt(d))`.
    pub features_per_split: Option<usize>,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            bootstrap: true,
            features_per_split: None,
            max_depth: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeModel>,
    pub features_per_split: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

pub fn default_features_per_split(d: usize) -> usize {
    ((d as f64).sqrt().round() as usize).max(1)
}

pub fn fit_forest(x: &Matrix, y: &[u8], cfg: &ForestConfig) -> Result<ForestModel> {
    check_training(x, y)?;
    if cfg.n_trees == 0 {
        return Err(Error::InvalidInput("a forest needs at least one tree".into()));
    }
    let k = cfg
        .features_per_split
        .unwrap_or_else(|| default_features_per_split(x.cols()))
        .max(1);
    let n = x.rows();
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = SeededRng::new(mix_seed(&[cfg.seed, t as u64]));
            let rows: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.below(n)).collect()
            } else {
                (0..n).collect()
            };
            Grower::new(x, y, cfg.max_depth, Some(k), Some(&mut rng)).grow(rows)
        })
        .collect();
    Ok(ForestModel {
        trees,
        features_per_split: k,
        bootstrap: cfg.bootstrap,
        seed: cfg.seed,
    })
}

impl ForestModel {
    /// Number of trees voting 1 for each row.
    pub fn vote_counts(&self, x: &Matrix) -> Result<Vec<usize>> {
        let mut votes = vec![0usize; x.rows()];
        for t in &self.trees {
            for (v, p) in votes.iter_mut().zip(t.predict(x)?) {
                *v += p as usize;
            }
        }
        Ok(votes)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>> {
        let n = self.trees.len();
        Ok(self
            .vote_counts(x)?
            .into_iter()
            .map(|v| u8::from(2 * v > n))
            .collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::InvalidInput("forest has no trees".into()));
        }
        self.trees.iter().try_for_each(TreeModel::validate)
    }
}
