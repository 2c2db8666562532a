//! Independent reference implementations and fixtures shared by the
//! integration tests. Nothing here calls into the code under test except to
//! build inputs.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;

use chrono::NaiveDate;
use ledgercast::calendar::{FiscalCalendar, Week};
use ledgercast::closure::gbt::TreeNode;
use ledgercast::dataset::Dataset;
use ledgercast::synthgen::{self, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ---- metrics ----

/// Weighted mean and population standard deviation with weights normalized
/// to their sum; two-pass.
pub fn weighted_mean_std(e: &[f64], w: &[f64]) -> (f64, f64) {
    let total: f64 = w.iter().sum();
    let mut mean = 0.0;
    for i in 0..e.len() {
        mean += w[i] / total * e[i];
    }
    let mut var = 0.0;
    for i in 0..e.len() {
        let d = e[i] - mean;
        var += w[i] / total * d * d;
    }
    (mean, var.sqrt())
}

// ---- least squares ----

/// Solves `(XᵀX + diag(p))β = Xᵀy` by Gaussian elimination with partial
/// pivoting on the normal equations.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64], penalties: &[f64]) -> Vec<f64> {
    let p = penalties.len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for (row, &yi) in x.iter().zip(y) {
        for j in 0..p {
            for k in 0..p {
                a[j][k] += row[j] * row[k];
            }
            a[j][p] += row[j] * yi;
        }
    }
    for j in 0..p {
        a[j][j] += penalties[j];
    }
    for col in 0..p {
        let piv = (col..p).max_by(|&i, &k| a[i][col].abs().total_cmp(&a[k][col].abs())).unwrap();
        a.swap(col, piv);
        for r in 0..p {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=p {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..p).map(|j| a[j][p] / a[j][j]).collect()
}

// ---- regression trees ----

#[derive(Debug, Clone, PartialEq)]
pub enum RefTree {
    Split { feature: usize, threshold: f64, left: Box<RefTree>, right: Box<RefTree> },
    Leaf(f64),
}

fn sse(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum()
}

fn better(candidate: f64, best: f64) -> bool {
    candidate < best - 1e-12 * (1.0 + best.abs())
}

/// Exhaustive tree builder: every feature, every midpoint between distinct
/// values, children SSE recomputed from scratch for each candidate.
pub fn brute_force_tree(x: &[Vec<f64>], r: &[f64], rows: &[usize], depth: usize, max_depth: usize, min_leaf: usize) -> RefTree {
    let vals: Vec<f64> = rows.iter().map(|&i| r[i]).collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    if depth >= max_depth || rows.len() < 2 * min_leaf {
        return RefTree::Leaf(mean);
    }
    let parent = sse(&vals);
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..x[0].len() {
        let mut distinct: Vec<f64> = rows.iter().map(|&i| x[i][f]).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        for pair in distinct.windows(2) {
            let t = 0.5 * (pair[0] + pair[1]);
            let left: Vec<f64> = rows.iter().filter(|&&i| x[i][f] <= t).map(|&i| r[i]).collect();
            let right: Vec<f64> = rows.iter().filter(|&&i| x[i][f] > t).map(|&i| r[i]).collect();
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let s = sse(&left) + sse(&right);
            if best.is_none_or(|b| better(s, b.2)) {
                best = Some((f, t, s));
            }
        }
    }
    match best {
        Some((feature, threshold, s)) if better(s, parent) => {
            let (l, rr): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][feature] <= threshold);
            RefTree::Split {
                feature,
                threshold,
                left: Box::new(brute_force_tree(x, r, &l, depth + 1, max_depth, min_leaf)),
                right: Box::new(brute_force_tree(x, r, &rr, depth + 1, max_depth, min_leaf)),
            }
        }
        _ => RefTree::Leaf(mean),
    }
}

/// Structural equality: identical splits, leaf values within `tol`.
pub fn same_tree(a: &TreeNode, b: &RefTree, tol: f64) -> bool {
    match (a, b) {
        (TreeNode::Leaf { value }, RefTree::Leaf(v)) => close(*value, *v, tol),
        (
            TreeNode::Split { feature, threshold, left, right },
            RefTree::Split { feature: f, threshold: t, left: l, right: r },
        ) => feature == f && threshold == t && same_tree(left, l, tol) && same_tree(right, r, tol),
        _ => false,
    }
}

/// A random regression problem; features drawn from a few levels so that
/// ties between values and between features occur.
pub fn random_problem(rng: &mut ChaCha8Rng, max_n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = rng.random_range(4..=max_n);
    let p = rng.random_range(1..=4);
    let levels: Vec<u32> = (0..p).map(|_| rng.random_range(2..=12)).collect();
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| levels.iter().map(|&l| rng.random_range(0..l) as f64 * 0.5).collect())
        .collect();
    let y: Vec<f64> = x
        .iter()
        .map(|row| 3.0 * row[0] - row.iter().sum::<f64>() + rng.random_range(-2.0..2.0))
        .collect();
    (x, y)
}

// ---- windows ----

/// Weekly totals, indexed by week, of every invoice issued on or before
/// `cutoff` at its true payment week, for weeks up to `end`.
pub fn visible_book_truth(ds: &Dataset, cutoff: NaiveDate, end: Week, cal: &FiscalCalendar) -> BTreeMap<Week, i64> {
    let truth = ds.truth.as_ref().expect("synthetic dataset");
    let mut out = BTreeMap::new();
    for inv in ds.invoices.iter().filter(|i| i.issue_date <= cutoff) {
        let w = cal.week_index(truth.payment_dates[&inv.invoice_id]).unwrap();
        if w <= end {
            *out.entry(w).or_insert(0) += inv.amount.cents();
        }
    }
    out
}

// ---- fixtures ----

/// The pinned synthetic configuration with holidays removed and observation
/// noise set to `rel` times the standard deviation of the noise-free
/// collections.
pub fn relative_noise_config(seed: u64, weeks: u32, rel: f64) -> SynthConfig {
    let mut sc = SynthConfig::default().with_seed(seed);
    sc.weeks = weeks;
    sc.holidays.clear();
    sc.noise_std = 0.0;
    let clean = synthgen::generate(&sc).unwrap();
    let c = &clean.truth.unwrap().collections;
    let v = c.values();
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
    sc.noise_std = rel * sd;
    sc
}

pub fn grid_argmin(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .min_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap()
}
