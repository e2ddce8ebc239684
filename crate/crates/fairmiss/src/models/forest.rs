//! Random forest: bagged CART trees over bootstrap samples with per-node
//! feature subsampling. Member seeds derive deterministically from the
//! master seed, so trees can be fitted in parallel without losing
//! reproducibility.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cart::{self, CartParams, MissingPolicy, TreeNode};
use super::{Binding, ModelError};
use crate::dataset::Dataset;
use crate::seeding::derive_seed;

/// Per-node feature subsampling policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mtry {
    /// floor(sqrt(p)), at least 1.
    Sqrt,
    /// Consider every feature at every node.
    All,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub mtry: Mtry,
    pub bootstrap: bool,
    pub cart: CartParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            mtry: Mtry::Sqrt,
            bootstrap: true,
            // Forest members grow deep: no complexity pruning, small nodes.
            cart: CartParams {
                min_split: 5,
                complexity: 0.0,
                use_surrogates: false,
                ..CartParams::default()
            },
        }
    }
}

pub(crate) fn fit(train: &Dataset, params: &ForestParams, seed: u64) -> (Vec<TreeNode>, Vec<u64>) {
    let p = train.feature_indices().len();
    let mtry = match params.mtry {
        Mtry::All => None,
        Mtry::Sqrt => Some(((p as f64).sqrt().floor() as usize).max(1)),
        Mtry::Fixed(k) => Some(k.clamp(1, p)),
    };
    let tree_seeds: Vec<u64> = (0..params.n_trees as u64)
        .map(|t| derive_seed(seed, t))
        .collect();
    let trees: Vec<TreeNode> = tree_seeds
        .par_iter()
        .map(|&tree_seed| {
            let rows: Vec<u32> = if params.bootstrap {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(tree_seed, u64::MAX));
                (0..train.n_rows())
                    .map(|_| rng.gen_range(0..train.n_rows()) as u32)
                    .collect()
            } else {
                (0..train.n_rows() as u32).collect()
            };
            cart::fit_tree_on_rows(train, &params.cart, mtry, tree_seed, rows)
        })
        .collect();
    (trees, tree_seeds)
}

pub(crate) fn predict(
    trees: &[TreeNode],
    cart_params: &CartParams,
    tree_seeds: &[u64],
    binding: &Binding,
    rows: &Dataset,
    n_classes: usize,
) -> Result<Vec<u32>, ModelError> {
    if rows.n_missing_cells() > 0 && cart_params.missing_policy == MissingPolicy::Surrogate
        && !cart_params.use_surrogates
    {
        // Members were grown without surrogates; refuse masked input rather
        // than silently routing everything to defaults.
        return Err(ModelError::MissingValuesUnsupported("forest"));
    }
    let out = (0..rows.n_rows())
        .map(|r| {
            let mut votes = vec![0u32; n_classes];
            for (tree, &tree_seed) in trees.iter().zip(tree_seeds) {
                let label =
                    cart::predict_row(tree, cart_params, binding, rows, r, tree_seed, n_classes);
                votes[label as usize] += 1;
            }
            // Ties go to the class listed first in C.
            let mut best = 0;
            for (c, &v) in votes.iter().enumerate() {
                if v > votes[best] {
                    best = c;
                }
            }
            best as u32
        })
        .collect();
    Ok(out)
}
