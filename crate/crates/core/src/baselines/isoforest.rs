//! Isolation Forest with contamination thresholding and random search.

use rand::seq::index::sample;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::BaselineError;
use crate::eval::{confusion, percentile_sorted, rank_auc};
use crate::nn::rng::{stream_rng, streams};
use crate::nn::Matrix;

pub const MAX_SUBSAMPLE: usize = 256;
pub const MIN_ESTIMATORS: usize = 50;
pub const MAX_ESTIMATORS: usize = 400;
pub const MAX_CONTAMINATION: f64 = 0.8;

/// `c(n) = 2H(n−1) − 2(n−1)/n`, the mean unsuccessful-search path length in a
/// binary search tree of `n` points; `c(n) = 0` for `n ≤ 1`.
pub fn c_factor(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let h: f64 = (1..n).map(|i| 1.0 / i as f64).sum();
    2.0 * h - 2.0 * (n - 1) as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf {
        size: usize,
    },
    Split {
        feature: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    nodes: Vec<Node>,
}

impl IsolationTree {
    fn build<R: Rng + ?Sized>(x: &Matrix, rows: Vec<usize>, limit: usize, rng: &mut R) -> Self {
        let mut t = Self { nodes: Vec::new() };
        t.grow(x, rows, 0, limit, rng);
        t
    }

    fn grow<R: Rng + ?Sized>(
        &mut self,
        x: &Matrix,
        rows: Vec<usize>,
        depth: usize,
        limit: usize,
        rng: &mut R,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { size: rows.len() });
        if depth >= limit || rows.len() <= 1 {
            return id;
        }
        let ranges: Vec<(usize, f64, f64)> = (0..x.cols())
            .filter_map(|c| {
                let (lo, hi) =
                    rows.iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                            let v = x.get(r, c);
                            (lo.min(v), hi.max(v))
                        });
                (hi > lo).then_some((c, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            return id;
        }
        let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
        let value = rng.random_range(lo..hi);
        let (l, r): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| x.get(i, feature) < value);
        let left = self.grow(x, l, depth + 1, limit, rng);
        let right = self.grow(x, r, depth + 1, limit, rng);
        self.nodes[id] = Node::Split {
            feature,
            value,
            left,
            right,
        };
        id
    }

    /// Depth of the leaf reached by `row`, plus `c(size)` for unresolved
    /// leaves.
    pub fn path_length(&self, row: &[f64]) -> f64 {
        let mut id = 0;
        let mut depth = 0.0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { size } => return depth + c_factor(*size),
                Node::Split {
                    feature,
                    value,
                    left,
                    right,
                } => {
                    id = if row[*feature] < *value {
                        *left
                    } else {
                        *right
                    };
                    depth += 1.0;
                }
            }
        }
    }

    pub fn height(&self) -> usize {
        fn h(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + h(nodes, *left).max(h(nodes, *right)),
            }
        }
        h(&self.nodes, 0)
    }

    pub fn is_leaf(&self) -> bool {
        self.nodes.len() == 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoForestModel {
    pub n_estimators: usize,
    pub contamination: f64,
    pub subsample: usize,
    pub trees: Vec<IsolationTree>,
    /// Scores above this are anomalous.
    pub threshold: f64,
}

impl IsoForestModel {
    pub fn predict(&self, x: &Matrix) -> Vec<bool> {
        isoforest_score(self, x)
            .into_iter()
            .map(|s| s > self.threshold)
            .collect()
    }
}

fn check_params(n_estimators: usize, contamination: f64) -> Result<(), BaselineError> {
    let mut errs = Vec::new();
    if !(MIN_ESTIMATORS..=MAX_ESTIMATORS).contains(&n_estimators) {
        errs.push(format!(
            "n_estimators must lie in [{MIN_ESTIMATORS}, {MAX_ESTIMATORS}], got {n_estimators}"
        ));
    }
    if !(contamination > 0.0 && contamination <= MAX_CONTAMINATION) {
        errs.push(format!(
            "contamination must lie in (0, {MAX_CONTAMINATION}], got {contamination}"
        ));
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(BaselineError::Config(errs.join("; ")))
    }
}

/// Tree `i` depends only on `seed` and `i`, so a forest of `n` trees is the
/// prefix of any larger forest with the same seed.
fn build_trees(x: &Matrix, n_estimators: usize, seed: u64) -> (Vec<IsolationTree>, usize) {
    let n = x.rows();
    let psi = n.min(MAX_SUBSAMPLE);
    let limit = (psi as f64).log2().ceil().max(0.0) as usize;
    let mut master = stream_rng(seed, streams::ISOFOREST);
    let seeds: Vec<u64> = (0..n_estimators).map(|_| master.next_u64()).collect();
    let trees = seeds
        .par_iter()
        .map(|&s| {
            let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(s);
            let rows = sample(&mut rng, n, psi).into_vec();
            IsolationTree::build(x, rows, limit, &mut rng)
        })
        .collect();
    (trees, psi)
}

fn score_from_mean_path(mean_path: f64, psi: usize) -> f64 {
    let c = c_factor(psi);
    if c == 0.0 {
        0.5
    } else {
        2f64.powf(-mean_path / c)
    }
}

/// Per-tree path lengths, `trees × rows`.
fn path_matrix(trees: &[IsolationTree], x: &Matrix) -> Vec<Vec<f64>> {
    trees
        .par_iter()
        .map(|t| (0..x.rows()).map(|r| t.path_length(x.row(r))).collect())
        .collect()
}

fn contamination_threshold(train_scores: &[f64], contamination: f64) -> f64 {
    let mut s = train_scores.to_vec();
    s.sort_by(f64::total_cmp);
    percentile_sorted(&s, 100.0 * (1.0 - contamination))
}

pub fn isoforest_fit(
    x: &Matrix,
    n_estimators: usize,
    contamination: f64,
    seed: u64,
) -> Result<IsoForestModel, BaselineError> {
    check_params(n_estimators, contamination)?;
    if x.rows() == 0 || !x.is_finite() {
        return Err(BaselineError::Data("need finite training rows".into()));
    }
    let (trees, psi) = build_trees(x, n_estimators, seed);
    let mut model = IsoForestModel {
        n_estimators,
        contamination,
        subsample: psi,
        trees,
        threshold: 0.0,
    };
    model.threshold = contamination_threshold(&isoforest_score(&model, x), contamination);
    Ok(model)
}

/// `2^(−E[h(x)] / c(ψ))` per row, with `ψ` the subsample size.
pub fn isoforest_score(model: &IsoForestModel, x: &Matrix) -> Vec<f64> {
    (0..x.rows())
        .into_par_iter()
        .map(|r| {
            let row = x.row(r);
            let mean = model.trees.iter().map(|t| t.path_length(row)).sum::<f64>()
                / model.trees.len() as f64;
            score_from_mean_path(mean, model.subsample)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchTry {
    pub n_estimators: usize,
    pub contamination: f64,
    pub f1: f64,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub model: IsoForestModel,
    pub tries: Vec<SearchTry>,
    pub best: usize,
}

/// Samples `(n_estimators, contamination)` uniformly from `[50, 400] × (0, 0.8]`
/// `tries` times and keeps the configuration with the highest f1 on the
/// evaluation rows, breaking ties by AUC and then by the earlier try.
pub fn isoforest_random_search(
    x_train: &Matrix,
    x_eval: &Matrix,
    truth_eval: &[u8],
    tries: usize,
    seed: u64,
) -> Result<SearchOutcome, BaselineError> {
    if tries == 0 {
        return Err(BaselineError::Config("tries must be at least 1".into()));
    }
    if x_eval.rows() != truth_eval.len() {
        return Err(BaselineError::Data(
            "evaluation rows and labels differ in length".into(),
        ));
    }
    if x_train.rows() == 0 || !x_train.is_finite() || !x_eval.is_finite() {
        return Err(BaselineError::Data("need finite training rows".into()));
    }
    let mut rng = stream_rng(seed, streams::SEARCH);
    let configs: Vec<(usize, f64)> = (0..tries)
        .map(|_| {
            let n = rng.random_range(MIN_ESTIMATORS..=MAX_ESTIMATORS);
            let u: f64 = rng.random();
            (n, MAX_CONTAMINATION * (1.0 - u))
        })
        .collect();
    let max_n = configs.iter().map(|c| c.0).max().expect("tries >= 1");
    let (trees, psi) = build_trees(x_train, max_n, seed);
    let prefix = |paths: Vec<Vec<f64>>, rows: usize| -> Vec<Vec<f64>> {
        // cumulative[n][r]: sum of the first n trees' path lengths
        let mut cum = vec![vec![0.0; rows]];
        for p in paths {
            let next: Vec<f64> = cum
                .last()
                .unwrap()
                .iter()
                .zip(&p)
                .map(|(a, b)| a + b)
                .collect();
            cum.push(next);
        }
        cum
    };
    let train_cum = prefix(path_matrix(&trees, x_train), x_train.rows());
    let eval_cum = prefix(path_matrix(&trees, x_eval), x_eval.rows());
    let scores_for = |cum: &[Vec<f64>], n: usize| -> Vec<f64> {
        cum[n]
            .iter()
            .map(|s| score_from_mean_path(s / n as f64, psi))
            .collect()
    };

    let mut results = Vec::with_capacity(tries);
    let mut best = 0;
    for (i, &(n, c)) in configs.iter().enumerate() {
        let thr = contamination_threshold(&scores_for(&train_cum, n), c);
        let eval_scores = scores_for(&eval_cum, n);
        let decisions: Vec<bool> = eval_scores.iter().map(|&s| s > thr).collect();
        let f1 = confusion(&decisions, truth_eval).metrics().f1;
        let auc = rank_auc(&eval_scores, truth_eval);
        results.push(SearchTry {
            n_estimators: n,
            contamination: c,
            f1,
            auc,
        });
        let b: &SearchTry = &results[best];
        if f1 > b.f1 || (f1 == b.f1 && auc.unwrap_or(0.0) > b.auc.unwrap_or(0.0)) {
            best = i;
        }
    }
    let (n, c) = configs[best];
    let threshold = contamination_threshold(&scores_for(&train_cum, n), c);
    Ok(SearchOutcome {
        model: IsoForestModel {
            n_estimators: n,
            contamination: c,
            subsample: psi,
            trees: trees[..n].to_vec(),
            threshold,
        },
        tries: results,
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::rng::normal_vec;

    fn cloud(n: usize, seed: u64) -> Matrix {
        let mut rng = stream_rng(seed, 0);
        Matrix::from_vec(n, 2, normal_vec(&mut rng, 2 * n)).unwrap()
    }

    #[test]
    fn c_of_two_is_one() {
        assert!((c_factor(2) - 1.0).abs() < 1e-15);
        assert_eq!(score_from_mean_path(c_factor(256), 256), 0.5);
    }

    #[test]
    fn deterministic_per_seed() {
        let x = cloud(300, 1);
        let a = isoforest_fit(&x, 60, 0.1, 4).unwrap();
        let b = isoforest_fit(&x, 60, 0.1, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_point_forest_is_all_leaves() {
        let x = Matrix::from_vec(1, 2, vec![0.5, 0.5]).unwrap();
        let m = isoforest_fit(&x, 50, 0.1, 0).unwrap();
        assert!(m.trees.iter().all(IsolationTree::is_leaf));
        let s = isoforest_score(&m, &cloud(5, 2));
        assert!(s.iter().all(|&v| v == s[0]));
    }

    #[test]
    fn heights_bounded() {
        let x = cloud(2000, 3);
        let m = isoforest_fit(&x, 50, 0.1, 1).unwrap();
        assert!(m.trees.iter().all(|t| t.height() <= 8));
    }

    #[test]
    fn out_of_range_params() {
        let x = cloud(10, 3);
        assert!(isoforest_fit(&x, 49, 0.1, 0).is_err());
        assert!(isoforest_fit(&x, 401, 0.1, 0).is_err());
        assert!(isoforest_fit(&x, 100, 0.0, 0).is_err());
        assert!(isoforest_fit(&x, 100, 0.81, 0).is_err());
    }

    #[test]
    fn search_prefix_matches_fit() {
        let x = cloud(400, 5);
        let e = cloud(50, 6);
        let truth: Vec<u8> = (0..50).map(|i| u8::from(i % 7 == 0)).collect();
        let out = isoforest_random_search(&x, &e, &truth, 5, 9).unwrap();
        let m = &out.model;
        let fit = isoforest_fit(&x, m.n_estimators, m.contamination, 9).unwrap();
        assert_eq!(fit.trees, m.trees);
        assert!((fit.threshold - m.threshold).abs() < 1e-12);
    }
}
