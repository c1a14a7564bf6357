//! Least squares with collinear-column detection and sandwich covariances.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative residual norm below which a column counts as collinear with the
/// columns preceding it.
pub const COLLINEAR_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct OlsFit {
    /// One entry per supplied column; dropped columns carry 0.
    pub coef: Vec<f64>,
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub sse: f64,
    pub n: usize,
    /// (X'X)^{-1} over the kept columns, in `kept` order.
    pub xtx_inv: DMatrix<f64>,
}

impl OlsFit {
    pub fn k(&self) -> usize {
        self.kept.len()
    }

    pub fn rmse(&self) -> f64 {
        (self.sse / self.n as f64).sqrt()
    }

    /// Position of column `j` in the kept set.
    pub fn kept_position(&self, j: usize) -> Option<usize> {
        self.kept.iter().position(|&k| k == j)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(v: &mut [f64], a: f64, q: &[f64]) {
    for (vi, qi) in v.iter_mut().zip(q) {
        *vi -= a * qi;
    }
}

/// Ordinary least squares of `y` on `columns` via re-orthogonalized modified
/// Gram–Schmidt. Columns that are (numerically) linear combinations of
/// earlier columns are dropped and reported in `dropped`.
pub fn ols(columns: &[&[f64]], y: &[f64]) -> Result<OlsFit> {
    let n = y.len();
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::Input(
            "regressor lengths differ from the response".into(),
        ));
    }
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (j, col) in columns.iter().enumerate() {
        let orig = dot(col, col).sqrt();
        let mut v = col.to_vec();
        let mut r = vec![0.0; q.len()];
        for _ in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let c = dot(qi, &v);
                axpy(&mut v, c, qi);
                r[i] += c;
            }
        }
        let norm = dot(&v, &v).sqrt();
        if orig == 0.0 || !(norm > COLLINEAR_TOL * orig) {
            dropped.push(j);
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        r.push(norm);
        q.push(v);
        r_cols.push(r);
        kept.push(j);
    }
    if kept.len() > n {
        return Err(Error::Input("more regressors than observations".into()));
    }

    let k = kept.len();
    let mut resid = y.to_vec();
    let mut qty = vec![0.0; k];
    for _ in 0..2 {
        for (i, qi) in q.iter().enumerate() {
            let c = dot(qi, &resid);
            axpy(&mut resid, c, qi);
            qty[i] += c;
        }
    }
    let mut r = DMatrix::<f64>::zeros(k, k);
    for (j, col) in r_cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            r[(i, j)] = *v;
        }
    }
    let beta = back_substitute(&r, &qty);
    let r_inv = upper_inverse(&r);
    let xtx_inv = &r_inv * r_inv.transpose();

    let mut coef = vec![0.0; columns.len()];
    for (pos, &j) in kept.iter().enumerate() {
        coef[j] = beta[pos];
    }
    let fitted: Vec<f64> = y.iter().zip(&resid).map(|(a, b)| a - b).collect();
    let sse = dot(&resid, &resid);
    Ok(OlsFit {
        coef,
        kept,
        dropped,
        fitted,
        residuals: resid,
        sse,
        n,
        xtx_inv,
    })
}

fn back_substitute(r: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    let k = b.len();
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = b[i];
        for j in i + 1..k {
            s -= r[(i, j)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    x
}

fn upper_inverse(r: &DMatrix<f64>) -> DMatrix<f64> {
    let k = r.nrows();
    let mut inv = DMatrix::<f64>::zeros(k, k);
    for j in 0..k {
        let mut e = vec![0.0; k];
        e[j] = 1.0;
        let col = back_substitute(r, &e);
        for i in 0..k {
            inv[(i, j)] = col[i];
        }
    }
    inv
}

/// Classical covariance s²(X'X)^{-1} with s² = SSE / (n − k).
pub fn classical_cov(fit: &OlsFit) -> DMatrix<f64> {
    let dof = (fit.n - fit.k()).max(1) as f64;
    &fit.xtx_inv * (fit.sse / dof)
}

fn meat<'a>(
    fit: &OlsFit,
    columns: &[&[f64]],
    groups: impl Iterator<Item = &'a [usize]>,
) -> DMatrix<f64> {
    let k = fit.k();
    let mut m = DMatrix::<f64>::zeros(k, k);
    let mut score = vec![0.0; k];
    for rows in groups {
        score.iter_mut().for_each(|s| *s = 0.0);
        for &t in rows {
            let u = fit.residuals[t];
            for (p, &j) in fit.kept.iter().enumerate() {
                score[p] += columns[j][t] * u;
            }
        }
        for a in 0..k {
            for b in 0..k {
                m[(a, b)] += score[a] * score[b];
            }
        }
    }
    m
}

/// HC1 heteroskedasticity-robust covariance, n/(n−k) small-sample factor.
pub fn hc1_cov(fit: &OlsFit, columns: &[&[f64]]) -> DMatrix<f64> {
    let singletons: Vec<[usize; 1]> = (0..fit.n).map(|t| [t]).collect();
    let m = meat(fit, columns, singletons.iter().map(|s| &s[..]));
    let factor = fit.n as f64 / (fit.n - fit.k()).max(1) as f64;
    (&fit.xtx_inv * m * &fit.xtx_inv) * factor
}

/// Cluster-robust covariance. With `cr1`, applies G/(G−1)·(n−1)/(n−k).
pub fn cluster_cov(
    fit: &OlsFit,
    columns: &[&[f64]],
    clusters: &[Vec<usize>],
    cr1: bool,
) -> DMatrix<f64> {
    let m = meat(fit, columns, clusters.iter().map(|c| &c[..]));
    let mut v = &fit.xtx_inv * m * &fit.xtx_inv;
    if cr1 {
        let g = clusters.len() as f64;
        let n = fit.n as f64;
        let k = fit.k() as f64;
        v *= g / (g - 1.0) * (n - 1.0) / (n - k);
    }
    v
}

/// Solve a symmetric positive definite system; `None` if not SPD.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().cholesky().map(|c| c.solve(b))
}
