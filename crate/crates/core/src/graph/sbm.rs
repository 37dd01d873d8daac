use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Graph, Splits};
use crate::error::{Error, Result};

/// Planted-partition graph parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SbmParams {
    pub block_sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Euclidean distance between any two block feature means.
    pub feature_separation: f64,
}

impl SbmParams {
    pub fn validate(&self) -> Result<()> {
        if self.block_sizes.is_empty() || self.block_sizes.contains(&0) {
            return Err(Error::Param("block sizes must be non-empty and all >= 1".into()));
        }
        for (name, p) in [("p_in", self.p_in), ("p_out", self.p_out)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Param(format!("{name} = {p} not in [0, 1]")));
            }
        }
        if self.feature_dim < self.block_sizes.len() {
            return Err(Error::Param(format!(
                "feature_dim {} must be at least the number of blocks {}",
                self.feature_dim,
                self.block_sizes.len()
            )));
        }
        if !(self.feature_separation >= 0.0 && self.feature_separation.is_finite()) {
            return Err(Error::Param("feature_separation must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Samples a stochastic block model. Labels are block ids; block `b`'s
/// features are unit-variance Gaussians centred on `c * e_b` with `c` chosen so
/// that block means sit `feature_separation` apart. Nodes are split 80/10/10
/// into train/val/test by a seeded shuffle.
pub fn generate_sbm(params: &SbmParams, seed: u64) -> Result<Graph> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = params
        .block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
        .collect();
    let n = labels.len();

    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] {
                params.p_in
            } else {
                params.p_out
            };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }

    let offset = params.feature_separation / std::f64::consts::SQRT_2;
    let mut features = Array2::<f64>::zeros((n, params.feature_dim));
    for (i, &b) in labels.iter().enumerate() {
        for j in 0..params.feature_dim {
            let noise: f64 = rng.sample(StandardNormal);
            features[[i, j]] = noise + if j == b { offset } else { 0.0 };
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = (n * 8).div_ceil(10);
    let n_val = (n - n_train).div_ceil(2);
    let mut splits = Splits {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    };
    splits.train.sort_unstable();
    splits.val.sort_unstable();
    splits.test.sort_unstable();

    Graph::new(n, edges, features, labels, splits)
}
