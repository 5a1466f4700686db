//! Linear quantile regression and a piecewise-linear prediction band.
//!
//! Coefficients minimize the pinball loss `Σ ρ_τ(yᵢ − xᵢ'β)`. The solver
//! works on the dual linear program
//!
//! ```text
//! max  y'a   s.t.  X'a = (1 − τ)·X'1,   0 ≤ a ≤ 1
//! ```
//!
//! with a primal-dual interior point method (Mehrotra predictor-corrector
//! steps); β is read off the equality-constraint multipliers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::stats;

const STEP_FRACTION: f64 = 0.99995;
const MAX_ITERATIONS: usize = 100;
const GAP_TOLERANCE: f64 = 1e-11;

/// `ρ_τ(u) = u·(τ − 1[u < 0])`.
pub fn pinball(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

pub fn pinball_loss(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, tau: f64) -> f64 {
    (y - x * beta).iter().map(|&u| pinball(u, tau)).sum()
}

/// Largest step in `[0, ∞)` keeping `v + t·dv ≥ 0`.
fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&a, &d)| -a / d)
        .fold(f64::INFINITY, f64::min)
}

fn solve_normal(x: &DMatrix<f64>, q: &DVector<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    let mut m = DMatrix::<f64>::zeros(p, p);
    for i in 0..n {
        let row = x.row(i);
        for a in 0..p {
            let ra = row[a] * q[i];
            for b in a..p {
                m[(a, b)] += ra * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            m[(a, b)] = m[(b, a)];
        }
    }
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Degenerate("quantile regression normal matrix is singular".into()))?;
    Ok(chol.solve(&(x.transpose() * rhs)))
}

/// Quantile regression coefficients of `y` on the columns of `x` at
/// quantile `tau ∈ (0, 1)`.
pub fn quantile_regression(x: &DMatrix<f64>, y: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidInput(format!("quantile {tau} outside (0, 1)")));
    }
    if n < p || y.len() != n {
        return Err(Error::InvalidInput(format!("{n} observations for {p} coefficients")));
    }

    // Work with the equivalent minimization  min c'a,  c = −y.
    let c = -y;
    let b = x.transpose() * DVector::from_element(n, 1.0 - tau);
    let mut a = DVector::from_element(n, 1.0 - tau);
    let mut s = DVector::from_element(n, 1.0) - &a;

    // Dual start from least squares: c − X·d = z − w with z, w ≥ 0.
    let mut d = solve_normal(x, &DVector::from_element(n, 1.0), &c)?;
    let r0 = &c - x * &d;
    let mut z = r0.map(|v| v.max(0.0));
    let mut w = &z - &r0;
    // shift off the boundary to stay strictly interior
    let shift = (r0.amax() * 1e-3).max(1e-6);
    z.add_scalar_mut(shift);
    w.add_scalar_mut(shift);

    let gap = |a: &DVector<f64>, d: &DVector<f64>, w: &DVector<f64>| c.dot(a) - d.dot(&b) + w.sum();
    let scale = 1.0 + y.amax();

    for _ in 0..MAX_ITERATIONS {
        let g = gap(&a, &d, &w);
        let tol = GAP_TOLERANCE * scale * n as f64;
        // the gap itself bottoms out at rounding level, complementarity does not
        if g.abs() <= tol || z.dot(&a) + w.dot(&s) <= tol {
            break;
        }
        let q = DVector::from_iterator(n, (0..n).map(|i| 1.0 / (z[i] / a[i] + w[i] / s[i])));
        let r = &z - &w;
        // residual of dual feasibility (nonzero only after the shift above)
        let rd = &c - x * &d - &r;
        let r_eff = &r + &rd;

        // affine predictor
        let rhs = q.component_mul(&r_eff);
        let dd = solve_normal(x, &q, &rhs)?;
        let da = q.component_mul(&(x * &dd - &r_eff));
        let ds = -&da;
        let dz = -z.component_mul(&(da.component_div(&a).add_scalar(1.0)));
        let dw = -w.component_mul(&(ds.component_div(&s).add_scalar(1.0)));
        let fp = (STEP_FRACTION * max_step(&a, &da).min(max_step(&s, &ds))).min(1.0);
        let fd = (STEP_FRACTION * max_step(&z, &dz).min(max_step(&w, &dw))).min(1.0);

        let (da, ds, dd, dz, dw, fp, fd) = if fp.min(fd) < 1.0 {
            // centering corrector
            let mu = z.dot(&a) + w.dot(&s);
            let g_aff = (&z + &dz * fd).dot(&(&a + &da * fp)) + (&w + &dw * fd).dot(&(&s + &ds * fp));
            let mu = mu * (g_aff / mu).powi(3) / (2.0 * n as f64);
            let dadz = da.component_mul(&dz);
            let dsdw = ds.component_mul(&dw);
            let ainv = a.map(|v| 1.0 / v);
            let sinv = s.map(|v| 1.0 / v);
            let xi = (&ainv - &sinv) * mu;
            let rhs2 = &rhs + q.component_mul(&(&dadz - &dsdw - &xi));
            let dd = solve_normal(x, &q, &rhs2)?;
            let da = q.component_mul(&(x * &dd + &xi - &r_eff - &dadz + &dsdw));
            let ds = -&da;
            let dz = &ainv * mu - &z - ainv.component_mul(&z).component_mul(&da) - &dadz;
            let dw = &sinv * mu - &w - sinv.component_mul(&w).component_mul(&ds) - &dsdw;
            let fp = (STEP_FRACTION * max_step(&a, &da).min(max_step(&s, &ds))).min(1.0);
            let fd = (STEP_FRACTION * max_step(&z, &dz).min(max_step(&w, &dw))).min(1.0);
            (da, ds, dd, dz, dw, fp, fd)
        } else {
            (da, ds, dd, dz, dw, fp, fd)
        };

        a += &da * fp;
        s += &ds * fp;
        d += &dd * fd;
        z += &dz * fd;
        w += &dw * fd;
    }
    Ok(-d)
}

/// Degree-one B-spline ("hat") basis on strictly increasing knots. Values
/// outside the knot range are clamped to it, so fitted curves extend flat.
pub fn hat_basis(knots: &[f64], xs: &[f64]) -> DMatrix<f64> {
    let k = knots.len();
    let mut m = DMatrix::zeros(xs.len(), k);
    for (i, &x) in xs.iter().enumerate() {
        let x = x.clamp(knots[0], knots[k - 1]);
        let j = knots.partition_point(|&t| t <= x).clamp(1, k - 1);
        let (lo, hi) = (knots[j - 1], knots[j]);
        let t = (x - lo) / (hi - lo);
        m[(i, j - 1)] = 1.0 - t;
        m[(i, j)] += t;
    }
    m
}

fn interpolate(knots: &[f64], values: &[f64], x: f64) -> f64 {
    let k = knots.len();
    let x = x.clamp(knots[0], knots[k - 1]);
    let j = knots.partition_point(|&t| t <= x).clamp(1, k - 1);
    let t = (x - knots[j - 1]) / (knots[j] - knots[j - 1]);
    values[j - 1] + t * (values[j] - values[j - 1])
}

/// A nondecreasing piecewise-linear prediction band.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuantileBand {
    pub knots: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl QuantileBand {
    /// Fits the `lower_q` quantile of `lower_y` and the `upper_q` quantile
    /// of `upper_y`, both against `x`, on a hat basis with knots at
    /// `n_knots` evenly spaced sample quantiles of `x`. Each curve is made
    /// nondecreasing by pooling adjacent violators over its knot values.
    pub fn fit(x: &[f64], lower_y: &[f64], upper_y: &[f64], lower_q: f64, upper_q: f64, n_knots: usize) -> Result<Self> {
        if n_knots < 2 {
            return Err(Error::InvalidInput("need at least two knots".into()));
        }
        let mut knots: Vec<f64> = (0..n_knots)
            .map(|j| stats::quantile(x, j as f64 / (n_knots - 1) as f64))
            .collect();
        knots.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + b.abs()));
        if knots.len() < 2 {
            return Err(Error::Degenerate("predictor has no spread".into()));
        }
        let basis = hat_basis(&knots, x);
        let fit_curve = |ys: &[f64], q: f64| -> Result<Vec<f64>> {
            let coef = quantile_regression(&basis, &DVector::from_column_slice(ys), q)?;
            Ok(stats::isotonic_increasing(coef.as_slice()))
        };
        let lower = fit_curve(lower_y, lower_q)?;
        let mut upper = fit_curve(upper_y, upper_q)?;
        let spread = upper_y.iter().chain(lower_y).fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-6 * (1.0 + spread);
        for (lo, hi) in lower.iter().zip(upper.iter_mut()) {
            if *lo > *hi + tol {
                return Err(Error::Degenerate(format!(
                    "quantile curves cross ({lo:.4} > {hi:.4}) after monotone repair"
                )));
            }
            // absorb solver round-off
            *hi = hi.max(*lo);
        }
        Ok(QuantileBand { knots, lower, upper })
    }

    pub fn evaluate(&self, x: f64) -> (f64, f64) {
        (interpolate(&self.knots, &self.lower, x), interpolate(&self.knots, &self.upper, x))
    }

    pub fn width(&self, x: f64) -> f64 {
        let (lo, hi) = self.evaluate(x);
        hi - lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn median_of_constant_model() {
        let x = DMatrix::from_element(5, 1, 1.0);
        let y = DVector::from_vec(vec![1.0, 7.0, 3.0, 10.0, 4.0]);
        let b = quantile_regression(&x, &y, 0.5).unwrap();
        assert_abs_diff_eq!(b[0], 4.0, epsilon = 1e-6);
    }

    #[test]
    fn exact_fit_through_line() {
        let xs: Vec<f64> = (0..20).map(f64::from).collect();
        let x = DMatrix::from_fn(20, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        let y = DVector::from_iterator(20, xs.iter().map(|v| 2.0 + 0.5 * v));
        let b = quantile_regression(&x, &y, 0.9).unwrap();
        assert_abs_diff_eq!(b[0], 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(b[1], 0.5, epsilon = 1e-7);
    }

    #[test]
    fn hat_basis_partitions_unity() {
        let m = hat_basis(&[0.0, 1.0, 3.0], &[-1.0, 0.0, 0.5, 1.0, 2.0, 3.0, 4.0]);
        for r in 0..m.nrows() {
            assert_abs_diff_eq!(m.row(r).sum(), 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(m[(4, 1)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn constant_ranges_give_zero_width() {
        let x: Vec<f64> = (1..=100).map(f64::from).collect();
        let band = QuantileBand::fit(&x, &x, &x, 0.025, 0.975, 10).unwrap();
        for p in [1.0, 37.5, 75.0, 100.0] {
            assert_abs_diff_eq!(band.width(p), 0.0, epsilon = 1e-5);
        }
    }
}
