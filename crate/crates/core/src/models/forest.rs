//! CART random forests for regression and binary classification.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_inputs, FittedModel, ModelBody, ModelError, ModelKind, ModelSpec, Result, Standardizer};

const MAX_SUPPORTED_DEPTH: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub max_depth: usize,
    pub n_trees: usize,
    pub bootstrap: bool,
    pub seed: u64,
    /// Candidate features per split; `None` means ⌈√p⌉.
    pub max_features: Option<usize>,
}

impl ForestParams {
    pub fn from_spec(spec: &ModelSpec) -> ForestParams {
        ForestParams {
            max_depth: spec.param.max(0.0) as usize,
            n_trees: spec.n_trees,
            bootstrap: spec.bootstrap,
            seed: spec.seed,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
}

/// Every node keeps its training mean so a tree can be cut at any depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    fn leaf_value(&self, z: &DMatrix<f64>, row: usize, max_depth: usize) -> f64 {
        let mut node = &self.nodes[0];
        let mut depth = 0;
        while let Some(s) = &node.split {
            if depth >= max_depth {
                break;
            }
            node = if z[(row, s.feature)] <= s.threshold {
                &self.nodes[s.left]
            } else {
                &self.nodes[s.right]
            };
            depth += 1;
        }
        node.value
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i].split {
                None => 0,
                Some(s) => 1 + walk(nodes, s.left).max(walk(nodes, s.right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Mean leaf value (regression) or the share of trees voting high
    /// (classification; a tree with a 50/50 leaf votes low).
    pub fn predict(&self, z: &DMatrix<f64>, max_depth: usize, classify: bool) -> Vec<f64> {
        let nt = self.trees.len() as f64;
        (0..z.nrows())
            .map(|row| {
                let total: f64 = self
                    .trees
                    .iter()
                    .map(|t| {
                        let v = t.leaf_value(z, row, max_depth);
                        if classify {
                            f64::from(u8::from(v > 0.5))
                        } else {
                            v
                        }
                    })
                    .sum();
                total / nt
            })
            .collect()
    }
}

fn mix(seed: u64, path: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = seed ^ path.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Builder<'a> {
    z: &'a [f64],
    n: usize,
    p: usize,
    y: &'a [f64],
    seed: u64,
    max_depth: usize,
    max_features: usize,
    classify: bool,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn value(&self, rows: &[usize]) -> f64 {
        rows.iter().map(|&r| self.y[r]).sum::<f64>() / rows.len() as f64
    }

    /// Weighted child impurity from running sums; lower is better.
    fn impurity(&self, sum_l: f64, sq_l: f64, n_l: f64, sum_r: f64, sq_r: f64, n_r: f64) -> f64 {
        if self.classify {
            2.0 * sum_l * (n_l - sum_l) / n_l + 2.0 * sum_r * (n_r - sum_r) / n_r
        } else {
            (sq_l - sum_l * sum_l / n_l) + (sq_r - sum_r * sum_r / n_r)
        }
    }

    fn best_split(&self, rows: &[usize], path: u64) -> Option<(usize, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed, path));
        // lazy Fisher-Yates over feature indices
        let mut swaps: HashMap<usize, usize> = HashMap::new();
        let mut evaluated = 0;
        let mut best: Option<(f64, usize, f64)> = None;
        let m = rows.len();
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(m);
        for k in 0..self.p {
            if evaluated >= self.max_features {
                break;
            }
            let pick = rng.random_range(k..self.p);
            let f = *swaps.get(&pick).unwrap_or(&pick);
            let displaced = *swaps.get(&k).unwrap_or(&k);
            swaps.insert(pick, displaced);

            let col = &self.z[f * self.n..(f + 1) * self.n];
            pairs.clear();
            pairs.extend(rows.iter().map(|&r| (col[r], self.y[r])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[m - 1].0 {
                continue;
            }
            evaluated += 1;
            let total: f64 = pairs.iter().map(|q| q.1).sum();
            let total_sq: f64 = pairs.iter().map(|q| q.1 * q.1).sum();
            let (mut sum_l, mut sq_l) = (0.0, 0.0);
            for i in 1..m {
                let yv = pairs[i - 1].1;
                sum_l += yv;
                sq_l += yv * yv;
                if pairs[i - 1].0 == pairs[i].0 {
                    continue;
                }
                let (nl, nr) = (i as f64, (m - i) as f64);
                let imp = self.impurity(sum_l, sq_l, nl, total - sum_l, total_sq - sq_l, nr);
                if best.is_none_or(|(b, _, _)| imp < b) {
                    let (lo, hi) = (pairs[i - 1].0, pairs[i].0);
                    let mut thr = 0.5 * (lo + hi);
                    if thr >= hi {
                        thr = lo;
                    }
                    best = Some((imp, f, thr));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize, path: u64) -> usize {
        let id = self.nodes.len();
        let value = self.value(&rows);
        self.nodes.push(TreeNode { value, split: None });
        let first = self.y[rows[0]];
        let pure = rows.iter().all(|&r| self.y[r] == first);
        if depth >= self.max_depth || rows.len() < 2 || pure {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&rows, path) else {
            return id;
        };
        let col = &self.z[feature * self.n..(feature + 1) * self.n];
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| col[r] <= threshold);
        let left = self.grow(left_rows, depth + 1, 2 * path);
        let right = self.grow(right_rows, depth + 1, 2 * path + 1);
        self.nodes[id].split = Some(Split {
            feature,
            threshold,
            left,
            right,
        });
        id
    }
}

/// Fits `n_trees` CART trees on bootstrap samples of standardized rows.
/// The split RNG at each node depends only on the tree seed and the node's
/// path, so a deep forest cut at depth d equals a forest grown to depth d.
pub fn forest_fit(x: &DMatrix<f64>, y: &[f64], params: &ForestParams, classify: bool) -> Result<FittedModel> {
    check_inputs(x, y.len(), 2)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    if params.n_trees == 0 || params.max_depth > MAX_SUPPORTED_DEPTH {
        return Err(ModelError::InvalidHyperparameter(format!(
            "forest needs n_trees >= 1 and max_depth <= {MAX_SUPPORTED_DEPTH}"
        )));
    }
    let st = Standardizer::fit(x);
    let z = st.apply(x);
    let (n, p) = z.shape();
    let max_features = params
        .max_features
        .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize)
        .clamp(1, p.max(1));
    let mut master = ChaCha8Rng::seed_from_u64(params.seed);
    let seeds: Vec<u64> = (0..params.n_trees).map(|_| master.next_u64()).collect();
    let trees: Vec<Tree> = seeds
        .par_iter()
        .map(|&seed| {
            let rows: Vec<usize> = if params.bootstrap {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut b = Builder {
                z: z.as_slice(),
                n,
                p,
                y,
                seed,
                max_depth: params.max_depth,
                max_features,
                classify,
                nodes: Vec::new(),
            };
            b.grow(rows, 0, 1);
            Tree { nodes: b.nodes }
        })
        .collect();
    let kind = if classify {
        ModelKind::RandomForestClf
    } else {
        ModelKind::RandomForestReg
    };
    let mut spec = ModelSpec::new(kind, params.max_depth as f64);
    spec.n_trees = params.n_trees;
    spec.bootstrap = params.bootstrap;
    spec.seed = params.seed;
    Ok(FittedModel {
        spec,
        standardizer: st,
        columns: None,
        body: ModelBody::Forest(Forest { trees }),
    })
}
