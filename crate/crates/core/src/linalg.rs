//! Penalized least squares via Householder QR on the augmented system
//! `[X; diag(sqrt(p))] β ≈ [y; 0]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use nalgebra::{DMatrix as Matrix, DVector as Vector};

/// Relative size below which an R diagonal entry marks a dependent column.
const RANK_TOL: f64 = 1e-10;

/// Builds a matrix from row-major rows.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Validation("design rows have differing lengths".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Solves `(XᵀX + ridge·I)β = Xᵀy`.
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> Result<DVector<f64>> {
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::Validation(format!("ridge must be finite and >= 0, got {ridge}")));
    }
    penalized_lstsq(x, y, &vec![ridge; x.ncols()], None)
}

/// Minimizes `‖y − Xβ‖² + Σ_j p_j β_j²`. Column names, when given, are used in
/// the singular-system error.
pub fn penalized_lstsq(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    penalties: &[f64],
    names: Option<&[String]>,
) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::Validation(format!("X has {n} rows but y has {}", y.len())));
    }
    if penalties.len() != p {
        return Err(Error::Validation(format!("{} penalties for {p} columns", penalties.len())));
    }
    if p == 0 {
        return Ok(DVector::zeros(0));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entry in least-squares system".into()));
    }
    if let Some(&bad) = penalties.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Validation(format!("penalty must be finite and >= 0, got {bad}")));
    }
    let penalized: Vec<usize> = (0..p).filter(|&j| penalties[j] > 0.0).collect();
    let m = n + penalized.len();
    let col_name = |j: usize| match names.and_then(|ns| ns.get(j)) {
        Some(name) => format!("column {j} ({name})"),
        None => format!("column {j}"),
    };
    if m < p {
        let j = (0..p).find(|&j| j >= n && penalties[j] == 0.0).unwrap_or(p - 1);
        return Err(Error::Numerical(format!(
            "singular least-squares system: {} rows for {p} columns, {} is undetermined",
            n,
            col_name(j)
        )));
    }
    let mut a = DMatrix::zeros(m, p);
    a.view_mut((0, 0), (n, p)).copy_from(x);
    let mut b = DVector::zeros(m);
    b.rows_mut(0, n).copy_from(y);
    for (k, &j) in penalized.iter().enumerate() {
        a[(n + k, j)] = penalties[j].sqrt();
    }
    let col_norms: Vec<f64> = (0..p).map(|j| a.column(j).norm()).collect();
    let qr = a.qr();
    let r = qr.r();
    for j in 0..p {
        let scale = col_norms[j];
        if scale == 0.0 || r[(j, j)].abs() <= RANK_TOL * scale {
            return Err(Error::Numerical(format!(
                "singular least-squares system: {} is zero or linearly dependent on earlier columns",
                col_name(j)
            )));
        }
    }
    qr.q_tr_mul(&mut b);
    let mut beta = DVector::zeros(p);
    for j in (0..p).rev() {
        let mut acc = b[j];
        for k in j + 1..p {
            acc -= r[(j, k)] * beta[k];
        }
        beta[j] = acc / r[(j, j)];
    }
    Ok(beta)
}

pub fn residual_sum_squares(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    (y - x * beta).norm_squared()
}
