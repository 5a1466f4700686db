//! Least squares with heteroskedasticity-robust errors, and logistic
//! regression by Newton–Raphson.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative residual norm below which a column counts as collinear.
const COLLINEAR_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LinearFit {
    pub names: Vec<String>,
    pub coef: DVector<f64>,
    /// HC1 sandwich standard errors.
    pub se: DVector<f64>,
    pub residuals: DVector<f64>,
    pub n: usize,
}

impl LinearFit {
    pub fn coefficient(&self, name: &str) -> Option<(f64, f64)> {
        let i = self.names.iter().position(|n| n == name)?;
        Some((self.coef[i], self.se[i]))
    }
}

/// Names of columns that are (numerically) linear combinations of the
/// columns before them. Modified Gram–Schmidt on the weighted design.
pub fn collinear_columns(x: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut bad = Vec::new();
    #[allow(clippy::needless_range_loop)]
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm0 = col.norm();
        let mut v = col;
        for q in &basis {
            let proj = q.dot(&v);
            v -= q * proj;
        }
        let norm = v.norm();
        if norm0 == 0.0 || norm <= COLLINEAR_TOL * norm0.max(1.0) {
            bad.push(names[j].clone());
        } else {
            basis.push(v / norm);
        }
    }
    bad
}

/// (Weighted) least squares of `y` on the columns of `x`, with HC1
/// standard errors. `weights`, when given, are non-negative observation
/// weights.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, weights: Option<&[f64]>, names: &[String]) -> Result<LinearFit> {
    let (n, p) = x.shape();
    assert_eq!(names.len(), p, "one name per column");
    if n <= p {
        return Err(Error::Degenerate(format!("{n} observations for {p} coefficients")));
    }
    let w: Vec<f64> = weights.map_or_else(|| vec![1.0; n], <[f64]>::to_vec);
    let mut xw = x.clone();
    for i in 0..n {
        let s = w[i].sqrt();
        for j in 0..p {
            xw[(i, j)] *= s;
        }
    }
    let bad = collinear_columns(&xw, names);
    if !bad.is_empty() {
        return Err(Error::RankDeficient(bad));
    }
    let yw = DVector::from_iterator(n, (0..n).map(|i| y[i] * w[i].sqrt()));
    let xtx = xw.transpose() * &xw;
    let chol = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::RankDeficient(names.to_vec()))?;
    let coef = chol.solve(&(xw.transpose() * &yw));
    let residuals = y - x * &coef;
    let bread = chol.inverse();
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for i in 0..n {
        let s = w[i] * residuals[i];
        let row = x.row(i);
        for a in 0..p {
            let ra = row[a] * s;
            for b in 0..p {
                meat[(a, b)] += ra * row[b] * s;
            }
        }
    }
    let scale = n as f64 / (n - p) as f64;
    let cov = &bread * meat * &bread * scale;
    let se = DVector::from_iterator(p, (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()));
    Ok(LinearFit {
        names: names.to_vec(),
        coef,
        se,
        residuals,
        n,
    })
}

/// Logistic regression coefficients by Newton–Raphson. `x` should carry
/// its own intercept column. A tiny ridge keeps the Hessian invertible
/// under separation.
pub fn logistic_regression(x: &DMatrix<f64>, y: &[bool]) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    let mut beta = DVector::<f64>::zeros(p);
    let loglik = |b: &DVector<f64>| -> f64 {
        let eta = x * b;
        (0..n)
            .map(|i| {
                let e = eta[i];
                let log1p = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
                if y[i] {
                    e - log1p
                } else {
                    -log1p
                }
            })
            .sum()
    };
    let mut ll = loglik(&beta);
    for _ in 0..100 {
        let eta = x * &beta;
        let mut grad = DVector::<f64>::zeros(p);
        let mut hess = DMatrix::<f64>::identity(p, p) * 1e-9;
        for i in 0..n {
            let pi = 1.0 / (1.0 + (-eta[i]).exp());
            let r = f64::from(u8::from(y[i])) - pi;
            let wi = pi * (1.0 - pi);
            let row = x.row(i);
            for a in 0..p {
                grad[a] += row[a] * r;
                for b in 0..p {
                    hess[(a, b)] += wi * row[a] * row[b];
                }
            }
        }
        let step = hess
            .cholesky()
            .ok_or_else(|| Error::Degenerate("logistic Hessian not positive definite".into()))?
            .solve(&grad);
        let mut t = 1.0;
        let mut next = &beta + &step * t;
        let mut next_ll = loglik(&next);
        while next_ll < ll && t > 1e-6 {
            t /= 2.0;
            next = &beta + &step * t;
            next_ll = loglik(&next);
        }
        let change = (next_ll - ll).abs();
        beta = next;
        ll = next_ll;
        if step.amax() * t < 1e-10 || change < 1e-12 {
            break;
        }
    }
    Ok(beta)
}
