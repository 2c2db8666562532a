//! Squared-error gradient boosting over axis-aligned regression trees.
//!
//! Each round fits a tree to the current residuals. Splits are chosen by an
//! exhaustive scan over every feature and every midpoint between consecutive
//! distinct sorted values, minimizing the summed squared error of the two
//! children. Ties go to the lowest feature index, then the lowest threshold.
//! A node becomes a leaf (mean residual) when it is at `max_depth`, has fewer
//! than `2 * min_samples_leaf` rows, or no split lowers its squared error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_trees: 60,
            max_depth: 3,
            learning_rate: 0.1,
            min_samples_leaf: 10,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples_leaf == 0 {
            return Err(Error::Validation("min_samples_leaf must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Validation("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// A regression tree; rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// The root split, if any.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self {
            TreeNode::Split { feature, threshold, .. } => Some((*feature, *threshold)),
            TreeNode::Leaf { .. } => None,
        }
    }
}

/// Fitted ensemble: `predict(x) = base_prediction + learning_rate · Σ tree(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Booster {
    pub base_prediction: f64,
    pub learning_rate: f64,
    pub params: GbtParams,
    pub trees: Vec<TreeNode>,
}

impl Booster {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.base_prediction + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

/// Relative slack used when comparing squared errors, so mathematically equal
/// candidates resolve by the ordering rule rather than by rounding noise.
pub const SSE_TIE_EPS: f64 = 1e-12;

pub(crate) fn improves(candidate: f64, best: f64) -> bool {
    candidate < best - SSE_TIE_EPS * (1.0 + best.abs())
}

struct Trainer<'a> {
    x: &'a [Vec<f64>],
    n_features: usize,
    /// Row indices sorted by each feature (ties by row index).
    sorted: Vec<Vec<u32>>,
    params: GbtParams,
    mark: Vec<u32>,
    stamp: u32,
}

impl<'a> Trainer<'a> {
    fn new(x: &'a [Vec<f64>], params: GbtParams) -> Self {
        let n_features = x.first().map_or(0, Vec::len);
        let sorted = (0..n_features)
            .map(|f| {
                let mut idx: Vec<u32> = (0..x.len() as u32).collect();
                idx.sort_by(|&a, &b| x[a as usize][f].total_cmp(&x[b as usize][f]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Trainer {
            x,
            n_features,
            sorted,
            params,
            mark: vec![0; x.len()],
            stamp: 0,
        }
    }

    fn build(&mut self, members: &[u32], residuals: &[f64], depth: usize) -> TreeNode {
        let n = members.len();
        let sum: f64 = members.iter().map(|&i| residuals[i as usize]).sum();
        let mean = sum / n as f64;
        let leaf = TreeNode::Leaf { value: mean };
        if depth >= self.params.max_depth || n < 2 * self.params.min_samples_leaf {
            return leaf;
        }
        let node_sse: f64 = members.iter().map(|&i| (residuals[i as usize] - mean).powi(2)).sum();
        let Some((feature, threshold, sse)) = self.best_split(members, residuals) else {
            return leaf;
        };
        if !improves(sse, node_sse) {
            return leaf;
        }
        let (left, right): (Vec<u32>, Vec<u32>) = members
            .iter()
            .partition(|&&i| self.x[i as usize][feature] <= threshold);
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(self.build(&left, residuals, depth + 1)),
            right: Box::new(self.build(&right, residuals, depth + 1)),
        }
    }

    /// Best `(feature, threshold, sse)` over all admissible splits.
    fn best_split(&mut self, members: &[u32], residuals: &[f64]) -> Option<(usize, f64, f64)> {
        self.stamp += 1;
        let stamp = self.stamp;
        for &i in members {
            self.mark[i as usize] = stamp;
        }
        let n = members.len();
        let min_leaf = self.params.min_samples_leaf;
        let total_sum: f64 = members.iter().map(|&i| residuals[i as usize]).sum();
        let total_sq: f64 = members.iter().map(|&i| residuals[i as usize].powi(2)).sum();
        let mut best: Option<(usize, f64, f64)> = None;
        let mut ordered: Vec<u32> = Vec::with_capacity(n);
        for f in 0..self.n_features {
            ordered.clear();
            ordered.extend(self.sorted[f].iter().copied().filter(|&i| self.mark[i as usize] == stamp));
            let mut left_n = 0usize;
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                let i = ordered[k] as usize;
                left_n += 1;
                left_sum += residuals[i];
                let v = self.x[i][f];
                let next = self.x[ordered[k + 1] as usize][f];
                if next <= v {
                    continue;
                }
                let right_n = n - left_n;
                if left_n < min_leaf || right_n < min_leaf {
                    continue;
                }
                let right_sum = total_sum - left_sum;
                let sse = total_sq - left_sum * left_sum / left_n as f64 - right_sum * right_sum / right_n as f64;
                let threshold = 0.5 * (v + next);
                if best.is_none_or(|b| improves(sse, b.2)) {
                    best = Some((f, threshold, sse));
                }
            }
        }
        best
    }
}

/// Fits a booster on a dense row-major matrix.
pub fn fit_matrix(x: &[Vec<f64>], y: &[f64], params: GbtParams) -> Result<Booster> {
    params.validate()?;
    if x.len() != y.len() {
        return Err(Error::Data(format!("{} rows but {} targets", x.len(), y.len())));
    }
    if x.len() < 2 * params.min_samples_leaf || x.is_empty() {
        return Err(Error::Data(format!(
            "need at least {} rows (2 · min_samples_leaf), got {}",
            2 * params.min_samples_leaf.max(1),
            x.len()
        )));
    }
    let width = x[0].len();
    if x.iter().any(|r| r.len() != width) {
        return Err(Error::Data("ragged feature matrix".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite target".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite feature value; impute before fitting".into()));
    }
    let base = y.iter().sum::<f64>() / y.len() as f64;
    let mut booster = Booster {
        base_prediction: base,
        learning_rate: params.learning_rate,
        params,
        trees: Vec::new(),
    };
    if y.iter().all(|&v| v == y[0]) {
        booster.base_prediction = y[0];
        return Ok(booster);
    }
    let mut trainer = Trainer::new(x, params);
    let mut fitted = vec![base; y.len()];
    let all: Vec<u32> = (0..x.len() as u32).collect();
    for _ in 0..params.n_trees {
        let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        let tree = trainer.build(&all, &residuals, 0);
        for (i, row) in x.iter().enumerate() {
            fitted[i] += params.learning_rate * tree.predict(row);
        }
        booster.trees.push(tree);
    }
    Ok(booster)
}

/// Training mean squared error after each boosting round (index 0 = base only).
pub fn training_curve(booster: &Booster, x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let mut fitted = vec![booster.base_prediction; y.len()];
    let mse = |f: &[f64]| y.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64;
    let mut out = vec![mse(&fitted)];
    for tree in &booster.trees {
        for (i, row) in x.iter().enumerate() {
            fitted[i] += booster.learning_rate * tree.predict(row);
        }
        out.push(mse(&fitted));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n_trees: usize, max_depth: usize, lr: f64, min_leaf: usize) -> GbtParams {
        GbtParams { n_trees, max_depth, learning_rate: lr, min_samples_leaf: min_leaf }
    }

    #[test]
    fn constant_target_has_no_trees() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        let b = fit_matrix(&x, &[7.0, 7.0, 7.0], params(10, 2, 0.1, 1)).unwrap();
        assert!(b.trees.is_empty());
        assert_eq!(b.base_prediction, 7.0);
        assert_eq!(b.predict(&[100.0]), 7.0);
    }

    #[test]
    fn stump_fits_two_points_exactly() {
        let x = vec![vec![0.0], vec![1.0]];
        let b = fit_matrix(&x, &[0.0, 2.0], params(1, 1, 1.0, 1)).unwrap();
        assert_eq!(b.base_prediction, 1.0);
        assert_eq!(b.trees[0].root_split(), Some((0, 0.5)));
        assert_eq!(b.predict(&[0.0]), 0.0);
        assert_eq!(b.predict(&[1.0]), 2.0);
    }

    #[test]
    fn respects_min_samples_leaf_and_depth() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| (i * i) as f64).collect();
        let b = fit_matrix(&x, &y, params(5, 2, 0.5, 4)).unwrap();
        fn leaf_sizes(t: &TreeNode, x: &[Vec<f64>], rows: Vec<usize>, out: &mut Vec<usize>) {
            match t {
                TreeNode::Leaf { .. } => out.push(rows.len()),
                TreeNode::Split { feature, threshold, left, right } => {
                    let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| x[i][*feature] <= *threshold);
                    leaf_sizes(left, x, l, out);
                    leaf_sizes(right, x, r, out);
                }
            }
        }
        for t in &b.trees {
            assert!(t.depth() <= 2);
            let mut sizes = Vec::new();
            leaf_sizes(t, &x, (0..20).collect(), &mut sizes);
            assert!(sizes.iter().all(|&s| s >= 4), "{sizes:?}");
        }
    }

    #[test]
    fn too_few_rows_rejected() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(matches!(fit_matrix(&x, &[1.0, 2.0, 3.0], params(1, 1, 1.0, 2)), Err(Error::Data(_))));
        assert!(fit_matrix(&x, &[1.0, f64::NAN, 3.0], params(1, 1, 1.0, 1)).is_err());
    }

    #[test]
    fn learning_rate_scales_single_tree() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 7) as f64, (i % 5) as f64]).collect();
        let y: Vec<f64> = (0..30).map(|i| ((i * 37) % 11) as f64).collect();
        let full = fit_matrix(&x, &y, params(1, 2, 1.0, 2)).unwrap();
        let eta = 0.3;
        let scaled = fit_matrix(&x, &y, params(1, 2, eta, 2)).unwrap();
        for row in &x {
            let expect = full.base_prediction + eta * (full.predict(row) - full.base_prediction);
            assert!((scaled.predict(row) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 3) as f64, ((i * 7) % 13) as f64]).collect();
        let y: Vec<f64> = (0..40).map(|i| ((i * 17) % 23) as f64).collect();
        assert_eq!(fit_matrix(&x, &y, params(8, 3, 0.2, 2)).unwrap(), fit_matrix(&x, &y, params(8, 3, 0.2, 2)).unwrap());
    }
}
