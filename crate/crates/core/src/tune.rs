//! Sequential model-based hyperparameter search.
//!
//! Proposals come from a Gaussian-process surrogate (ARD Matérn 5/2 kernel on
//! the unit cube, integers rounded, categoricals one-hot) and expected
//! improvement. The first `max(5, budget / 5)` trials are a randomly shifted
//! Halton sequence. A plain random-search strategy shares the interface.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DimKind {
    Continuous { lo: f64, hi: f64 },
    Integer { lo: i64, hi: i64 },
    Categorical { choices: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    #[serde(flatten)]
    pub kind: DimKind,
}

impl Dimension {
    pub fn continuous(name: &str, lo: f64, hi: f64) -> Self {
        Dimension { name: name.into(), kind: DimKind::Continuous { lo, hi } }
    }

    pub fn integer(name: &str, lo: i64, hi: i64) -> Self {
        Dimension { name: name.into(), kind: DimKind::Integer { lo, hi } }
    }

    pub fn categorical(name: &str, choices: &[&str]) -> Self {
        Dimension { name: name.into(), kind: DimKind::Categorical { choices: choices.iter().map(|c| c.to_string()).collect() } }
    }

    /// Width in surrogate space.
    fn width(&self) -> usize {
        match &self.kind {
            DimKind::Categorical { choices } => choices.len(),
            _ => 1,
        }
    }

    /// Maps `u ∈ [0, 1]` onto the dimension.
    fn decode(&self, u: f64) -> ParamValue {
        let u = u.clamp(0.0, 1.0);
        match &self.kind {
            DimKind::Continuous { lo, hi } => ParamValue::Float(lo + u * (hi - lo)),
            DimKind::Integer { lo, hi } => ParamValue::Int((*lo as f64 + u * (hi - lo) as f64).round() as i64),
            DimKind::Categorical { choices } => {
                let k = ((u * choices.len() as f64).floor() as usize).min(choices.len() - 1);
                ParamValue::Choice(choices[k].clone())
            }
        }
    }

    fn encode(&self, v: &ParamValue, out: &mut Vec<f64>) {
        let unit = |x: f64, lo: f64, hi: f64| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 };
        match (&self.kind, v) {
            (DimKind::Continuous { lo, hi }, ParamValue::Float(x)) => out.push(unit(*x, *lo, *hi)),
            (DimKind::Integer { lo, hi }, ParamValue::Int(x)) => out.push(unit(*x as f64, *lo as f64, *hi as f64)),
            (DimKind::Categorical { choices }, ParamValue::Choice(c)) => {
                out.extend(choices.iter().map(|x| if x == c { 1.0 } else { 0.0 }))
            }
            _ => out.extend(std::iter::repeat_n(0.0, self.width())),
        }
    }

    fn contains(&self, v: &ParamValue) -> bool {
        match (&self.kind, v) {
            (DimKind::Continuous { lo, hi }, ParamValue::Float(x)) => *x >= *lo && *x <= *hi,
            (DimKind::Integer { lo, hi }, ParamValue::Int(x)) => *x >= *lo && *x <= *hi,
            (DimKind::Categorical { choices }, ParamValue::Choice(c)) => choices.contains(c),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Choice(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Float(v) => Some(*v),
            ParamValue::Int(v) => Some(*v as f64),
            ParamValue::Choice(_) => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            ParamValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Choice(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Float(v) => write!(f, "{v}"),
            ParamValue::Choice(s) => f.write_str(s),
        }
    }
}

pub type Params = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub dimensions: Vec<Dimension>,
}

impl ParamSpace {
    pub fn new(dimensions: Vec<Dimension>) -> Result<Self> {
        let space = ParamSpace { dimensions };
        space.validate()?;
        Ok(space)
    }

    /// Point intervals (`lo == hi`) are allowed and pin the dimension.
    pub fn validate(&self) -> Result<()> {
        if self.dimensions.is_empty() {
            return Err(Error::Validation("parameter space has no dimensions".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for d in &self.dimensions {
            if !names.insert(&d.name) {
                return Err(Error::Validation(format!("duplicate dimension {}", d.name)));
            }
            let ok = match &d.kind {
                DimKind::Continuous { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
                DimKind::Integer { lo, hi } => lo <= hi,
                DimKind::Categorical { choices } => !choices.is_empty(),
            };
            if !ok {
                return Err(Error::Validation(format!("dimension {} has an empty or invalid range", d.name)));
            }
        }
        Ok(())
    }

    pub fn decode(&self, u: &[f64]) -> Params {
        self.dimensions.iter().zip(u).map(|(d, &x)| (d.name.clone(), d.decode(x))).collect()
    }

    pub fn encode(&self, p: &Params) -> Vec<f64> {
        let mut out = Vec::new();
        for d in &self.dimensions {
            match p.get(&d.name) {
                Some(v) => d.encode(v, &mut out),
                None => out.extend(std::iter::repeat_n(0.0, d.width())),
            }
        }
        out
    }

    pub fn contains(&self, p: &Params) -> bool {
        self.dimensions.iter().all(|d| p.get(&d.name).is_some_and(|v| d.contains(v)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Bayesian,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    pub budget: usize,
    pub seed: u64,
    pub strategy: Strategy,
    /// Evaluated first, in order; they count toward the budget.
    pub initial_points: Vec<Params>,
}

impl TuneOptions {
    pub fn new(budget: usize, seed: u64) -> Self {
        TuneOptions { budget, seed, strategy: Strategy::Bayesian, initial_points: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub params: Params,
    /// `+∞` when the objective failed.
    #[serde(with = "loss_serde")]
    pub loss: f64,
}

mod loss_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() { s.serialize_f64(*v) } else { s.serialize_none() }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best_params: Params,
    #[serde(with = "loss_serde")]
    pub best_loss: f64,
    pub history: Vec<Trial>,
    pub seed: u64,
    pub budget: usize,
    pub strategy: Strategy,
}

impl TuneResult {
    /// Trial history as CSV: `trial_index, <dimension names...>, loss`.
    pub fn write_csv_to(&self, out: impl Write, space: &ParamSpace) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["trial_index".to_string()];
        header.extend(space.dimensions.iter().map(|d| d.name.clone()));
        header.push("loss".into());
        w.write_record(&header)?;
        for t in &self.history {
            let mut row = vec![t.index.to_string()];
            row.extend(space.dimensions.iter().map(|d| t.params.get(&d.name).map(|v| v.to_string()).unwrap_or_default()));
            row.push(if t.loss.is_finite() { t.loss.to_string() } else { "inf".into() });
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path, space: &ParamSpace) -> Result<()> {
        self.write_csv_to(std::fs::File::create(path)?, space)
    }
}

/// Positive increments → nondecreasing weights summing to one.
pub fn weights_from_increments(increments: &[f64]) -> Result<Vec<f64>> {
    if increments.is_empty() || increments.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Validation("weight increments must be positive".into()));
    }
    let mut acc = 0.0;
    let cum: Vec<f64> = increments
        .iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect();
    let total: f64 = cum.iter().sum();
    Ok(cum.iter().map(|c| c / total).collect())
}

const PRIMES: [u32; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109,
    113, 127, 131,
];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as f64;
    let mut f = 1.0 / b;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base as u64) as f64;
        i /= base as u64;
        f /= b;
    }
    r
}

/// Halton point `index` (1-based) with a per-dimension random shift mod 1.
fn halton(index: u64, shift: &[f64]) -> Vec<f64> {
    shift
        .iter()
        .enumerate()
        .map(|(d, s)| (radical_inverse(index, PRIMES[d % PRIMES.len()]) + s).fract())
        .collect()
}

/// Minimizes `objective` over `space`.
pub fn optimize(
    objective: &mut dyn FnMut(&Params) -> Result<f64>,
    space: &ParamSpace,
    options: &TuneOptions,
) -> Result<TuneResult> {
    space.validate()?;
    if options.budget == 0 {
        return Err(Error::Validation("tuning budget must be >= 1".into()));
    }
    for p in &options.initial_points {
        if !space.contains(p) {
            return Err(Error::Validation(format!("initial point {p:?} lies outside the space")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let dims = space.dimensions.len();
    let shift: Vec<f64> = (0..dims).map(|_| rng.random::<f64>()).collect();
    let n_init = (options.budget / 5).max(5).min(options.budget);
    let mut history: Vec<Trial> = Vec::with_capacity(options.budget);
    let mut halton_index = 0u64;

    while history.len() < options.budget {
        let k = history.len();
        let params = if k < options.initial_points.len() {
            options.initial_points[k].clone()
        } else if options.strategy == Strategy::Random {
            space.decode(&(0..dims).map(|_| rng.random::<f64>()).collect::<Vec<_>>())
        } else if k < n_init.max(options.initial_points.len()) {
            halton_index += 1;
            space.decode(&halton(halton_index, &shift))
        } else {
            propose(space, &history, &mut rng)?
        };
        debug_assert!(space.contains(&params));
        let loss = match objective(&params) {
            Ok(v) if v.is_finite() => v,
            Ok(_) => f64::INFINITY,
            Err(e) => {
                log::warn!("trial {k} failed: {e}");
                f64::INFINITY
            }
        };
        log::debug!("trial {k}: loss {loss}");
        history.push(Trial { index: k, params, loss });
    }

    let best = history
        .iter()
        .fold(&history[0], |b, t| if t.loss < b.loss { t } else { b });
    Ok(TuneResult {
        best_params: best.params.clone(),
        best_loss: best.loss,
        history,
        seed: options.seed,
        budget: options.budget,
        strategy: options.strategy,
    })
}

const N_RANDOM_CANDIDATES: usize = 1024;
const N_REFINE_STARTS: usize = 5;

fn propose(space: &ParamSpace, history: &[Trial], rng: &mut ChaCha8Rng) -> Result<Params> {
    let xs: Vec<Vec<f64>> = history.iter().map(|t| space.encode(&t.params)).collect();
    let finite: Vec<f64> = history.iter().map(|t| t.loss).filter(|l| l.is_finite()).collect();
    let dims = space.dimensions.len();
    let random_point = |rng: &mut ChaCha8Rng| space.decode(&(0..dims).map(|_| rng.random::<f64>()).collect::<Vec<_>>());
    if finite.len() < 2 {
        return Ok(random_point(rng));
    }
    // Failed trials enter the surrogate at the worst observed loss.
    let worst = finite.iter().copied().fold(f64::MIN, f64::max);
    let ys: Vec<f64> = history.iter().map(|t| if t.loss.is_finite() { t.loss } else { worst }).collect();
    let gp = Gp::fit(&xs, &ys)?;
    let best_y = finite.iter().copied().fold(f64::MAX, f64::min);
    let ei = |u: &[f64]| {
        let p = space.decode(u);
        let (mu, sd) = gp.predict(&space.encode(&p));
        expected_improvement(mu, sd, best_y)
    };

    let mut candidates: Vec<(Vec<f64>, f64)> = (0..N_RANDOM_CANDIDATES)
        .map(|_| {
            let u: Vec<f64> = (0..dims).map(|_| rng.random::<f64>()).collect();
            let v = ei(&u);
            (u, v)
        })
        .collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (start, start_val) in candidates.iter().take(N_REFINE_STARTS) {
        let (u, v) = refine(start.clone(), *start_val, &ei);
        if best.as_ref().is_none_or(|b| v > b.1) {
            best = Some((u, v));
        }
    }
    let seen = |p: &Params| history.iter().any(|t| &t.params == p);
    if let Some((u, v)) = best {
        let p = space.decode(&u);
        if v > 0.0 && !seen(&p) {
            return Ok(p);
        }
    }
    // Acquisition is flat or points at a known trial: explore instead.
    for (u, _) in &candidates {
        let p = space.decode(u);
        if !seen(&p) {
            return Ok(p);
        }
    }
    Ok(random_point(rng))
}

/// Coordinate search with a shrinking step, maximizing `f` inside the cube.
fn refine(mut u: Vec<f64>, mut val: f64, f: &dyn Fn(&[f64]) -> f64) -> (Vec<f64>, f64) {
    let mut step = 0.1;
    for _ in 0..8 {
        let mut improved = true;
        while improved {
            improved = false;
            for d in 0..u.len() {
                for dir in [-1.0, 1.0] {
                    let mut cand = u.clone();
                    cand[d] = (cand[d] + dir * step).clamp(0.0, 1.0);
                    let v = f(&cand);
                    if v > val {
                        u = cand;
                        val = v;
                        improved = true;
                    }
                }
            }
        }
        step *= 0.5;
    }
    (u, val)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

/// EI for minimization.
pub fn expected_improvement(mu: f64, sd: f64, best: f64) -> f64 {
    if sd <= 1e-12 {
        return (best - mu).max(0.0);
    }
    let imp = best - mu;
    let z = imp / sd;
    imp * normal_cdf(z) + sd * normal_pdf(z)
}

/// Zero-mean GP on standardized targets with an ARD Matérn 5/2 kernel.
#[derive(Debug, Clone)]
pub struct Gp {
    xs: Vec<Vec<f64>>,
    lengthscales: Vec<f64>,
    noise: f64,
    alpha: DVector<f64>,
    chol_l: DMatrix<f64>,
    y_mean: f64,
    y_scale: f64,
}

fn matern52(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    let r2: f64 = a.iter().zip(b).zip(ls).map(|((x, y), l)| ((x - y) / l).powi(2)).sum();
    let r = (5.0 * r2).sqrt();
    (1.0 + r + 5.0 * r2 / 3.0) * (-r).exp()
}

struct GpFit {
    lml: f64,
    alpha: DVector<f64>,
    chol_l: DMatrix<f64>,
}

fn gp_solve(xs: &[Vec<f64>], y: &DVector<f64>, ls: &[f64], noise: f64) -> Option<GpFit> {
    let n = xs.len();
    let k = DMatrix::from_fn(n, n, |i, j| matern52(&xs[i], &xs[j], ls) + if i == j { noise + 1e-9 } else { 0.0 });
    let chol = k.cholesky()?;
    let alpha = chol.solve(y);
    let l = chol.l();
    let log_det: f64 = (0..n).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
    let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    Some(GpFit { lml, alpha, chol_l: l })
}

const LENGTHSCALE_GRID: [f64; 5] = [0.1, 0.2, 0.4, 0.8, 1.6];
const NOISE_GRID: [f64; 4] = [1e-6, 1e-4, 1e-2, 1e-1];

impl Gp {
    /// Hyperparameters maximize the log marginal likelihood: a grid over a
    /// shared lengthscale and the noise level, then per-dimension
    /// lengthscale refinement from the best few grid points.
    pub fn fit(xs: &[Vec<f64>], ys: &[f64]) -> Result<Gp> {
        let n = ys.len();
        let y_mean = ys.iter().sum::<f64>() / n as f64;
        let sd = (ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let y_scale = if sd > 0.0 { sd } else { 1.0 };
        let y = DVector::from_iterator(n, ys.iter().map(|v| (v - y_mean) / y_scale));
        let d = xs.first().map_or(0, Vec::len);

        let mut grid: Vec<(f64, Vec<f64>, f64)> = Vec::new();
        for &l in &LENGTHSCALE_GRID {
            for &noise in &NOISE_GRID {
                let ls = vec![l; d];
                if let Some(f) = gp_solve(xs, &y, &ls, noise) {
                    grid.push((f.lml, ls, noise));
                }
            }
        }
        grid.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut best: Option<(f64, Vec<f64>, f64)> = None;
        for (lml, ls, noise) in grid.into_iter().take(3) {
            let (lml, ls) = refine_lengthscales(xs, &y, ls, noise, lml);
            if best.as_ref().is_none_or(|b| lml > b.0) {
                best = Some((lml, ls, noise));
            }
        }
        let (_, lengthscales, noise) =
            best.ok_or_else(|| Error::Numerical("gaussian process kernel matrix is not positive definite".into()))?;
        let fit = gp_solve(xs, &y, &lengthscales, noise)
            .ok_or_else(|| Error::Numerical("gaussian process kernel matrix is not positive definite".into()))?;
        Ok(Gp { xs: xs.to_vec(), lengthscales, noise, alpha: fit.alpha, chol_l: fit.chol_l, y_mean, y_scale })
    }

    /// Posterior mean and standard deviation in the original loss units.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let k: DVector<f64> = DVector::from_iterator(self.xs.len(), self.xs.iter().map(|xi| matern52(xi, x, &self.lengthscales)));
        let mu = k.dot(&self.alpha);
        let v = self.chol_l.solve_lower_triangular(&k).unwrap_or_else(|| DVector::zeros(k.len()));
        let var = (1.0 - v.dot(&v)).max(1e-12);
        (self.y_mean + self.y_scale * mu, self.y_scale * var.sqrt())
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }
}

fn refine_lengthscales(xs: &[Vec<f64>], y: &DVector<f64>, mut ls: Vec<f64>, noise: f64, mut lml: f64) -> (f64, Vec<f64>) {
    for _ in 0..3 {
        let mut changed = false;
        for d in 0..ls.len() {
            for factor in [0.5, 2.0] {
                let mut cand = ls.clone();
                cand[d] = (cand[d] * factor).clamp(0.02, 20.0);
                if let Some(f) = gp_solve(xs, y, &cand, noise) {
                    if f.lml > lml + 1e-9 {
                        ls = cand;
                        lml = f.lml;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    (lml, ls)
}
