//! Random-forest regression and impurity-based feature importance.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::FeatureWeights;
use crate::nn::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// `None` means `ceil(C / 3)`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: Some(8),
            min_samples_leaf: 2,
            features_per_split: None,
            bootstrap: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    /// Root is `nodes[0]`.
    pub nodes: Vec<Node>,
    /// Total squared-error reduction credited to each feature.
    pub impurity_decrease: Vec<f64>,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

struct Builder<'a, R> {
    x: &'a Matrix,
    y: &'a [f64],
    max_depth: usize,
    min_leaf: usize,
    mtry: usize,
    rng: &'a mut R,
    tree: DecisionTree,
}

const TIE_TOL: f64 = 1e-9;

struct BestSplit {
    feature: usize,
    threshold: f64,
    pos: usize,
    gain: f64,
    /// Features whose best split reaches the same gain.
    tied: Vec<usize>,
}

impl<R: Rng> Builder<'_, R> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let value = idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64;
        self.tree.nodes.push(Node::Leaf { value });
        self.tree.nodes.len() - 1
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let n = idx.len();
        let mean = idx.iter().map(|&i| self.y[i]).sum::<f64>() / n as f64;
        let sse: f64 = idx.iter().map(|&i| (self.y[i] - mean) * (self.y[i] - mean)).sum();
        if depth >= self.max_depth || n < 2 * self.min_leaf || sse <= 0.0 {
            return self.leaf(idx);
        }
        let Some(best) = self.best_split(idx, sse) else {
            return self.leaf(idx);
        };
        // equal credit keeps importances independent of column order
        let share = best.gain / best.tied.len() as f64;
        for &t in &best.tied {
            self.tree.impurity_decrease[t] += share;
        }
        let f = best.feature;
        idx.sort_by(|&a, &b| self.x.get(a, f).total_cmp(&self.x.get(b, f)).then(a.cmp(&b)));
        let node = self.tree.nodes.len();
        self.tree.nodes.push(Node::Leaf { value: mean });
        let (l, r) = idx.split_at_mut(best.pos);
        l.sort_unstable();
        r.sort_unstable();
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.tree.nodes[node] = Node::Split {
            feature: f,
            threshold: best.threshold,
            left,
            right,
        };
        node
    }

    fn best_split(&mut self, idx: &[usize], sse: f64) -> Option<BestSplit> {
        let n_features = self.x.cols();
        let mut features = index::sample(self.rng, n_features, self.mtry).into_vec();
        features.sort_unstable();
        let n = idx.len();
        let mut order = idx.to_vec();
        let mut best: Option<BestSplit> = None;
        for &f in &features {
            order.sort_by(|&a, &b| self.x.get(a, f).total_cmp(&self.x.get(b, f)).then(a.cmp(&b)));
            let total: f64 = order.iter().map(|&i| self.y[i]).sum();
            let total_sq: f64 = order.iter().map(|&i| self.y[i] * self.y[i]).sum();
            let (mut s, mut sq) = (0.0, 0.0);
            for pos in 1..n {
                let yi = self.y[order[pos - 1]];
                s += yi;
                sq += yi * yi;
                if pos < self.min_leaf || n - pos < self.min_leaf {
                    continue;
                }
                let (lo, hi) = (self.x.get(order[pos - 1], f), self.x.get(order[pos], f));
                if lo >= hi {
                    continue;
                }
                let (nl, nr) = (pos as f64, (n - pos) as f64);
                let sse_l = sq - s * s / nl;
                let sse_r = (total_sq - sq) - (total - s) * (total - s) / nr;
                let gain = sse - (sse_l.max(0.0) + sse_r.max(0.0));
                if gain <= sse * 1e-12 {
                    continue;
                }
                let tol = sse * TIE_TOL;
                match best.as_mut() {
                    Some(b) if gain <= b.gain + tol => {
                        if gain >= b.gain - tol && b.tied.last() != Some(&f) {
                            b.tied.push(f);
                        }
                    }
                    _ => {
                        let mid = lo + (hi - lo) / 2.0;
                        let threshold = if mid < hi { mid } else { lo };
                        best = Some(BestSplit {
                            feature: f,
                            threshold,
                            pos,
                            gain,
                            tied: vec![f],
                        });
                    }
                }
            }
        }
        best
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub n_features: usize,
    pub config: ForestConfig,
    pub seed: u64,
}

fn check_xy(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() < 2 || x.cols() == 0 {
        return Err(Error::InvalidArgument(format!(
            "random forest needs >= 2 samples and >= 1 feature, got {}x{}",
            x.rows(),
            x.cols()
        )));
    }
    if y.len() != x.rows() {
        return Err(Error::InvalidArgument(format!(
            "{} targets for {} samples",
            y.len(),
            x.rows()
        )));
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("random forest training data".to_string()));
    }
    Ok(())
}

/// Fits tree `t` of a forest; tree `t` draws from stream `t` of the seeded
/// generator, so trees can be fitted in any order.
pub fn fit_tree(x: &Matrix, y: &[f64], cfg: &ForestConfig, seed: u64, t: usize) -> Result<DecisionTree> {
    check_xy(x, y)?;
    let c = x.cols();
    let mtry = cfg.features_per_split.unwrap_or(c.div_ceil(3));
    if mtry == 0 || mtry > c || cfg.min_samples_leaf == 0 {
        return Err(Error::InvalidArgument(format!(
            "features_per_split {mtry} must be in 1..={c} and min_samples_leaf >= 1"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    let n = x.rows();
    let mut idx: Vec<usize> = if cfg.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mut b = Builder {
        x,
        y,
        max_depth: cfg.max_depth.unwrap_or(usize::MAX),
        min_leaf: cfg.min_samples_leaf,
        mtry,
        rng: &mut rng,
        tree: DecisionTree {
            nodes: Vec::new(),
            impurity_decrease: vec![0.0; c],
        },
    };
    b.grow(&mut idx, 0);
    Ok(b.tree)
}

/// `x` is `samples x C`.
pub fn fit_random_forest(x: &Matrix, y: &[f64], cfg: &ForestConfig, seed: u64) -> Result<RandomForest> {
    check_xy(x, y)?;
    if cfg.n_trees == 0 {
        return Err(Error::InvalidArgument("forest needs at least one tree".to_string()));
    }
    let trees = (0..cfg.n_trees)
        .map(|t| fit_tree(x, y, cfg, seed, t))
        .collect::<Result<_>>()?;
    Ok(RandomForest {
        trees,
        n_features: x.cols(),
        config: cfg.clone(),
        seed,
    })
}

pub fn forest_predict(f: &RandomForest, x: &[f64]) -> Result<f64> {
    if x.len() != f.n_features {
        return Err(crate::error::shape_err(
            "forest_predict",
            format!("{} features", f.n_features),
            format!("{}", x.len()),
        ));
    }
    Ok(f.trees.iter().map(|t| t.predict(x)).sum::<f64>() / f.trees.len() as f64)
}

impl RandomForest {
    /// Mean decrease in impurity, normalised per tree, averaged, and
    /// normalised again. Uniform when no tree ever split.
    pub fn importances(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_features];
        for t in &self.trees {
            let total: f64 = t.impurity_decrease.iter().sum();
            if total > 0.0 {
                for (a, d) in acc.iter_mut().zip(&t.impurity_decrease) {
                    *a += d / total;
                }
            }
        }
        let total: f64 = acc.iter().sum();
        if total > 0.0 {
            acc.iter().map(|a| a / total).collect()
        } else {
            vec![1.0 / self.n_features as f64; self.n_features]
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// Selected feature indices in ascending order.
    pub indices: Vec<usize>,
    /// Importances of the selected features, renormalised, aligned with
    /// `indices`.
    pub alpha: FeatureWeights,
    /// Importances of every feature.
    pub importances: Vec<f64>,
}

/// Top-`k` features by importance (ties go to the lower index).
pub fn importance_and_selection(f: &RandomForest, k: usize) -> Result<Selection> {
    select_top_k(&f.importances(), k)
}

pub fn select_top_k(importances: &[f64], k: usize) -> Result<Selection> {
    if k == 0 || k > importances.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} principal features requested from {}",
            importances.len()
        )));
    }
    let mut order: Vec<usize> = (0..importances.len()).collect();
    order.sort_by(|&a, &b| importances[b].total_cmp(&importances[a]).then(a.cmp(&b)));
    let mut indices = order[..k].to_vec();
    indices.sort_unstable();
    selection_of(importances, indices)
}

/// α over an explicit feature subset.
pub fn selection_of(importances: &[f64], mut indices: Vec<usize>) -> Result<Selection> {
    indices.sort_unstable();
    indices.dedup();
    if indices.is_empty() || indices.iter().any(|&i| i >= importances.len()) {
        return Err(Error::InvalidArgument(format!("bad feature subset {indices:?}")));
    }
    let raw: Vec<f64> = indices.iter().map(|&i| importances[i]).collect();
    let all_equal = raw.iter().all(|&v| v == raw[0]);
    let alpha = if all_equal || raw.iter().sum::<f64>() <= 0.0 {
        FeatureWeights::uniform(indices.len())
    } else {
        FeatureWeights::new(raw)?
    };
    Ok(Selection {
        indices,
        alpha,
        importances: importances.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// `y = x[:, 0]`, other columns uniform noise.
    fn fixture(n: usize, c: usize, seed: u64) -> (Matrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::uniform(n, c, 1.0, &mut rng);
        let y = x.col(0);
        (x, y)
    }

    #[test]
    fn constant_target_gives_single_leaves() {
        let (x, _) = fixture(30, 3, 0);
        let y = vec![1.25; 30];
        let f = fit_random_forest(&x, &y, &ForestConfig::default(), 4).unwrap();
        for t in &f.trees {
            assert_eq!(t.nodes, vec![Node::Leaf { value: 1.25 }]);
        }
        assert_eq!(f.importances(), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn informative_feature_dominates() {
        let (x, y) = fixture(200, 5, 1);
        let cfg = ForestConfig {
            n_trees: 50,
            ..ForestConfig::default()
        };
        let f = fit_random_forest(&x, &y, &cfg, 11).unwrap();
        let imp = f.importances();
        assert!(imp[0] > 0.5, "{imp:?}");
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(imp.iter().all(|&v| v >= 0.0));
        let sel = importance_and_selection(&f, 1).unwrap();
        assert_eq!(sel.indices, vec![0]);
        assert_eq!(sel.alpha.as_slice(), &[1.0]);
    }

    #[test]
    fn same_seed_same_forest() {
        let (x, y) = fixture(60, 4, 2);
        let cfg = ForestConfig {
            n_trees: 10,
            ..ForestConfig::default()
        };
        let a = fit_random_forest(&x, &y, &cfg, 5).unwrap();
        let b = fit_random_forest(&x, &y, &cfg, 5).unwrap();
        assert_eq!(a, b);
        for r in 0..x.rows() {
            let p = forest_predict(&a, x.row(r)).unwrap();
            assert_eq!(p.to_bits(), forest_predict(&b, x.row(r)).unwrap().to_bits());
        }
    }

    #[test]
    fn trees_are_independent_of_fit_order() {
        let (x, y) = fixture(60, 4, 2);
        let cfg = ForestConfig {
            n_trees: 6,
            ..ForestConfig::default()
        };
        let f = fit_random_forest(&x, &y, &cfg, 5).unwrap();
        for t in (0..6).rev() {
            assert_eq!(fit_tree(&x, &y, &cfg, 5, t).unwrap(), f.trees[t]);
        }
    }

    #[test]
    fn depth_zero_predicts_training_mean() {
        let (x, y) = fixture(25, 2, 3);
        let cfg = ForestConfig {
            n_trees: 1,
            max_depth: Some(0),
            bootstrap: false,
            ..ForestConfig::default()
        };
        let f = fit_random_forest(&x, &y, &cfg, 0).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert_eq!(forest_predict(&f, &[9.0, -9.0]).unwrap(), mean);
    }

    #[test]
    fn unlimited_single_tree_interpolates() {
        let (x, y) = fixture(40, 3, 4);
        let y: Vec<f64> = y.iter().zip(x.col(2)).map(|(a, b)| a * a + b).collect();
        let cfg = ForestConfig {
            n_trees: 1,
            max_depth: None,
            min_samples_leaf: 1,
            features_per_split: Some(3),
            bootstrap: false,
        };
        let f = fit_random_forest(&x, &y, &cfg, 0).unwrap();
        for r in 0..x.rows() {
            assert_eq!(forest_predict(&f, x.row(r)).unwrap(), y[r]);
        }
    }

    #[test]
    fn leaves_hold_means_and_respect_min_size() {
        let (x, y) = fixture(80, 3, 6);
        let cfg = ForestConfig {
            n_trees: 1,
            max_depth: Some(4),
            min_samples_leaf: 5,
            bootstrap: false,
            features_per_split: Some(3),
        };
        let f = fit_random_forest(&x, &y, &cfg, 0).unwrap();
        let tree = &f.trees[0];
        assert!(tree.depth() <= 4);
        // route every training sample and recompute leaf means
        let mut members: Vec<Vec<f64>> = vec![Vec::new(); tree.nodes.len()];
        for r in 0..x.rows() {
            let mut i = 0;
            while let Node::Split { feature, threshold, left, right } = tree.nodes[i] {
                i = if x.get(r, feature) <= threshold { left } else { right };
            }
            members[i].push(y[r]);
        }
        for (i, node) in tree.nodes.iter().enumerate() {
            if let Node::Leaf { value } = node {
                assert!(members[i].len() >= 5);
                let mean = members[i].iter().sum::<f64>() / members[i].len() as f64;
                assert!((value - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn predictions_stay_within_target_range() {
        let (x, y) = fixture(100, 4, 7);
        let f = fit_random_forest(&x, &y, &ForestConfig { n_trees: 20, ..ForestConfig::default() }, 1).unwrap();
        let (lo, hi) = y.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let q = Matrix::uniform(1, 4, 3.0, &mut rng);
            let p = forest_predict(&f, q.row(0)).unwrap();
            assert!(lo <= p && p <= hi);
        }
    }

    #[test]
    fn cumulative_ensemble_training_error_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Matrix::uniform(150, 4, 1.0, &mut rng);
        let y: Vec<f64> = (0..150).map(|r| x.get(r, 0) + 0.5 * x.get(r, 1) * x.get(r, 2)).collect();
        let cfg = ForestConfig { n_trees: 64, ..ForestConfig::default() };
        let checkpoints = [1, 2, 4, 8, 64];
        let mut mean_mse = [0.0; 5];
        for seed in 0..10 {
            let f = fit_random_forest(&x, &y, &cfg, seed).unwrap();
            let tree_mse: Vec<f64> = f
                .trees
                .iter()
                .map(|t| (0..150).map(|r| (t.predict(x.row(r)) - y[r]).powi(2)).sum::<f64>() / 150.0)
                .collect();
            let mut sums = vec![0.0; 150];
            for t in 1..=64 {
                for (r, s) in sums.iter_mut().enumerate() {
                    *s += f.trees[t - 1].predict(x.row(r));
                }
                let ens = (0..150).map(|r| (sums[r] / t as f64 - y[r]).powi(2)).sum::<f64>() / 150.0;
                // averaging never does worse than the average member
                let members = tree_mse[..t].iter().sum::<f64>() / t as f64;
                assert!(ens <= members + 1e-15, "seed {seed} t {t}: {ens} > {members}");
                if let Some(i) = checkpoints.iter().position(|&c| c == t) {
                    mean_mse[i] += ens / 10.0;
                }
            }
        }
        for w in mean_mse.windows(2) {
            assert!(w[1] <= w[0], "{mean_mse:?}");
        }
    }

    #[test]
    fn permuting_columns_permutes_importances() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = Matrix::uniform(120, 4, 1.0, &mut rng);
        let y: Vec<f64> = (0..120).map(|r| 2.0 * x.get(r, 0) + x.get(r, 2)).collect();
        let perm = [2, 0, 3, 1];
        let xp = Matrix::from_fn(120, 4, |r, c| x.get(r, perm[c]));
        let cfg = ForestConfig {
            n_trees: 20,
            features_per_split: Some(4),
            ..ForestConfig::default()
        };
        let a = fit_random_forest(&x, &y, &cfg, 2).unwrap().importances();
        let b = fit_random_forest(&xp, &y, &cfg, 2).unwrap().importances();
        for c in 0..4 {
            assert!((b[c] - a[perm[c]]).abs() < 1e-12, "{a:?} {b:?}");
        }
    }

    #[test]
    fn selection_rules() {
        let imp = [0.1, 0.3, 0.3, 0.2, 0.1];
        let all = select_top_k(&imp, 5).unwrap();
        assert_eq!(all.indices, vec![0, 1, 2, 3, 4]);
        for (a, b) in all.alpha.as_slice().iter().zip(&imp) {
            assert!((a - b).abs() < 1e-15);
        }
        // tie between 1 and 2 and between 0 and 4
        assert_eq!(select_top_k(&imp, 1).unwrap().indices, vec![1]);
        assert_eq!(select_top_k(&imp, 4).unwrap().indices, vec![0, 1, 2, 3]);
        assert!(select_top_k(&imp, 0).is_err());
        assert!(select_top_k(&imp, 6).is_err());
        let eq = select_top_k(&[1.0 / 11.0; 11], 3).unwrap();
        assert_eq!(eq.alpha, FeatureWeights::uniform(3));
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = Matrix::zeros(1, 2);
        assert!(fit_random_forest(&x, &[1.0], &ForestConfig::default(), 0).is_err());
        let (x, y) = fixture(10, 2, 0);
        let f = fit_random_forest(&x, &y, &ForestConfig { n_trees: 2, ..ForestConfig::default() }, 0).unwrap();
        assert!(forest_predict(&f, &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn alpha_always_sums_to_one(imp in proptest::collection::vec(0.0f64..1.0, 1..12), k_frac in 0.0f64..1.0) {
            let k = 1 + ((imp.len() - 1) as f64 * k_frac) as usize;
            let s = select_top_k(&imp, k).unwrap();
            prop_assert_eq!(s.indices.len(), k);
            prop_assert!((s.alpha.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
