//! Sharp regression-discontinuity estimates of the funding effect of
//! designation.
//!
//! The outcome model is
//! `log(funding) = α + τ·D + β·f(X − c) + γ·f(X − c)·D + Z·δ + ε`
//! fitted by least squares on tracts with `|X − c| ≤ h`, where `X` is the
//! score percentile, `D = 1[X ≥ c]`, and `f` is linear or quadratic. The
//! default kernel is uniform, which makes the covariate-free local linear
//! estimate exactly the difference of the two one-sided intercepts.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TractId;
use crate::error::{Error, Result};
use crate::linalg;
use crate::stats::{self, Z_975};

/// Minimum observations required on each side inside the bandwidth.
pub const MIN_PER_SIDE: usize = 10;

/// Edge (triangular) kernel constant of the Imbens–Kalyanaraman rule.
pub const IK_EDGE_CONSTANT: f64 = 3.4375;
/// Uniform kernel constant of the Imbens–Kalyanaraman rule.
pub const IK_UNIFORM_CONSTANT: f64 = 5.40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RddRow {
    pub tract_id: TractId,
    pub running: f64,
    /// Log funding.
    pub outcome: f64,
    pub treated: bool,
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RddDataset {
    pub cutoff: f64,
    pub covariate_names: Vec<String>,
    pub rows: Vec<RddRow>,
    /// Tracts dropped because their total funding was not positive.
    pub excluded_nonpositive: usize,
}

/// Raw per-tract input before the log transform.
#[derive(Debug, Clone)]
pub struct RddInput {
    pub tract_id: TractId,
    pub running: f64,
    pub funding: f64,
    pub treated: bool,
    pub covariates: Vec<f64>,
}

impl RddDataset {
    /// Builds a dataset, taking logs of funding. Tracts with zero (or
    /// negative) funding are excluded and counted. Rejects the data unless
    /// every row satisfies `treated == (running >= cutoff)`.
    pub fn new(cutoff: f64, covariate_names: Vec<String>, inputs: Vec<RddInput>) -> Result<Self> {
        let mut rows = Vec::with_capacity(inputs.len());
        let mut excluded = 0;
        for inp in inputs {
            if inp.treated != (inp.running >= cutoff) {
                return Err(Error::InvalidInput(format!(
                    "tract {} breaks the sharp design: running {} vs cutoff {cutoff}, treated = {}",
                    inp.tract_id, inp.running, inp.treated
                )));
            }
            if inp.covariates.len() != covariate_names.len() {
                return Err(Error::InvalidInput(format!(
                    "tract {} has {} covariates, expected {}",
                    inp.tract_id,
                    inp.covariates.len(),
                    covariate_names.len()
                )));
            }
            if !(inp.funding > 0.0) {
                excluded += 1;
                continue;
            }
            rows.push(RddRow {
                tract_id: inp.tract_id,
                running: inp.running,
                outcome: inp.funding.ln(),
                treated: inp.treated,
                covariates: inp.covariates,
            });
        }
        if excluded > 0 {
            log::info!("excluded {excluded} tracts without positive funding");
        }
        Ok(RddDataset {
            cutoff,
            covariate_names,
            rows,
            excluded_nonpositive: excluded,
        })
    }

    pub fn running(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.running).collect()
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.outcome).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalForm {
    LocalLinear,
    Quadratic,
}

impl fmt::Display for FunctionalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FunctionalForm::LocalLinear => "local_linear",
            FunctionalForm::Quadratic => "quadratic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    #[default]
    Uniform,
    Triangular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RddEstimate {
    /// Jump in log funding at the cutoff.
    pub tau: f64,
    pub se: f64,
    pub percent: f64,
    pub percent_ci: (f64, f64),
    pub bandwidth: f64,
    pub n_used: usize,
    pub n_left: usize,
    pub n_right: usize,
    pub form: FunctionalForm,
    pub kernel: Kernel,
    pub covariates_used: Vec<String>,
}

/// Percent change in funding implied by a log-scale jump, with a 95%
/// interval from the delta method: `100·(e^τ − 1) ± z·100·e^τ·se`.
pub fn effect_to_percent(tau: f64, se: f64) -> (f64, (f64, f64)) {
    let percent = 100.0 * (tau.exp() - 1.0);
    let half = Z_975 * 100.0 * tau.exp() * se;
    (percent, (percent - half, percent + half))
}

fn split_sides(x: &[f64], cutoff: f64) -> (Vec<usize>, Vec<usize>) {
    (0..x.len()).partition(|&i| x[i] < cutoff)
}

fn median(v: &[f64]) -> f64 {
    stats::quantile(v, 0.5)
}

fn poly_fit(x: &[f64], y: &[f64], idx: &[usize], cutoff: f64, degree: usize, with_jump: bool) -> Result<DVector<f64>> {
    let p = degree + 1 + usize::from(with_jump);
    let mut names = vec!["intercept".to_string()];
    if with_jump {
        names.push("treated".into());
    }
    names.extend((1..=degree).map(|d| format!("running^{d}")));
    let m = DMatrix::from_fn(idx.len(), p, |r, c| {
        let xc = x[idx[r]] - cutoff;
        match (with_jump, c) {
            (_, 0) => 1.0,
            (true, 1) => f64::from(u8::from(xc >= 0.0)),
            (true, k) => xc.powi(k as i32 - 1),
            (false, k) => xc.powi(k as i32),
        }
    });
    let yy = DVector::from_iterator(idx.len(), idx.iter().map(|&i| y[i]));
    Ok(linalg::least_squares(&m, &yy, None, &names)?.coef)
}

/// Imbens–Kalyanaraman bandwidth with the edge-kernel constant.
pub fn ik_bandwidth(x: &[f64], y: &[f64], cutoff: f64) -> Result<f64> {
    ik_bandwidth_with_constant(x, y, cutoff, IK_EDGE_CONSTANT)
}

/// Imbens–Kalyanaraman plug-in bandwidth with kernel constant `ck`.
///
/// 1. Pilot window `1.84·sd(X)·N^(-1/5)`: density at the cutoff and
///    one-sided outcome variances.
/// 2. Third derivative from a global cubic with a jump, fitted between the
///    two one-sided medians of `X`; its value sets one-sided pilot windows
///    in which quadratics give the second derivatives.
/// 3. Regularization `720·σ²/(N₂·h₂⁴)` per side, then the closed-form
///    optimum `ck·((σ²₋ + σ²₊)/(f·((m₂₊ − m₂₋)² + r₊ + r₋)))^(1/5)·N^(-1/5)`.
pub fn ik_bandwidth_with_constant(x: &[f64], y: &[f64], cutoff: f64, ck: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput("running and outcome lengths differ".into()));
    }
    let (left, right) = split_sides(x, cutoff);
    if left.len() < 4 || right.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "need observations on both sides of the cutoff ({} left, {} right)",
            left.len(),
            right.len()
        )));
    }
    let n = x.len() as f64;

    // step 1
    let h1 = 1.84 * stats::sample_sd(x) * n.powf(-0.2);
    let in_left: Vec<usize> = left.iter().copied().filter(|&i| x[i] >= cutoff - h1).collect();
    let in_right: Vec<usize> = right.iter().copied().filter(|&i| x[i] <= cutoff + h1).collect();
    if in_left.len() < 2 || in_right.len() < 2 {
        return Err(Error::Degenerate("pilot window holds fewer than two points on a side".into()));
    }
    let f_c = (in_left.len() + in_right.len()) as f64 / (2.0 * n * h1);
    let side_var = |idx: &[usize]| stats::sample_variance(&idx.iter().map(|&i| y[i]).collect::<Vec<_>>());
    let var_l = side_var(&in_left);
    let var_r = side_var(&in_right);

    // step 2
    let med_l = median(&left.iter().map(|&i| x[i]).collect::<Vec<_>>());
    let med_r = median(&right.iter().map(|&i| x[i]).collect::<Vec<_>>());
    let mid: Vec<usize> = (0..x.len()).filter(|&i| x[i] >= med_l && x[i] <= med_r).collect();
    let cubic = poly_fit(x, y, &mid, cutoff, 3, true)?;
    let m3 = 6.0 * cubic[4];
    let pilot = |var: f64, count: usize| 3.56 * (var / (f_c * m3 * m3)).powf(1.0 / 7.0) * (count as f64).powf(-1.0 / 7.0);
    let h2_l = pilot(var_l, left.len());
    let h2_r = pilot(var_r, right.len());
    let w2_l: Vec<usize> = left.iter().copied().filter(|&i| x[i] >= cutoff - h2_l).collect();
    let w2_r: Vec<usize> = right.iter().copied().filter(|&i| x[i] <= cutoff + h2_r).collect();
    if w2_l.len() < 4 || w2_r.len() < 4 {
        return Err(Error::Degenerate("second-derivative window too small".into()));
    }
    let m2_l = 2.0 * poly_fit(x, y, &w2_l, cutoff, 2, false)?[2];
    let m2_r = 2.0 * poly_fit(x, y, &w2_r, cutoff, 2, false)?[2];

    // step 3; an infinite pilot window (m3 = 0) means the whole side was used
    let span = |idx: &[usize], h: f64| {
        let extent = idx.iter().map(|&i| (x[i] - cutoff).abs()).fold(0.0, f64::max);
        if h.is_finite() {
            h.min(extent.max(f64::MIN_POSITIVE))
        } else {
            extent
        }
    };
    let r_l = 720.0 * var_l / (w2_l.len() as f64 * span(&w2_l, h2_l).powi(4));
    let r_r = 720.0 * var_r / (w2_r.len() as f64 * span(&w2_r, h2_r).powi(4));
    let denom = f_c * ((m2_r - m2_l).powi(2) + r_l + r_r);
    let h = ck * ((var_l + var_r) / denom).powf(0.2) * n.powf(-0.2);
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::Degenerate(format!("bandwidth evaluated to {h}")));
    }
    Ok(h)
}

/// Fits the discontinuity model on the window `|X − c| ≤ bandwidth`.
pub fn rdd_estimate(
    data: &RddDataset,
    bandwidth: f64,
    form: FunctionalForm,
    kernel: Kernel,
    covariates: &[String],
) -> Result<RddEstimate> {
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidInput(format!("bandwidth {bandwidth} must be positive")));
    }
    let cov_idx: Vec<usize> = covariates
        .iter()
        .map(|c| {
            data.covariate_names
                .iter()
                .position(|n| n == c)
                .ok_or_else(|| Error::InvalidInput(format!("unknown covariate `{c}`")))
        })
        .collect::<Result<_>>()?;
    let c = data.cutoff;
    let rows: Vec<&RddRow> = data
        .rows
        .iter()
        .filter(|r| (r.running - c).abs() <= bandwidth)
        .collect();
    let n_right = rows.iter().filter(|r| r.treated).count();
    let n_left = rows.len() - n_right;
    if n_left < MIN_PER_SIDE || n_right < MIN_PER_SIDE {
        return Err(Error::InvalidInput(format!(
            "bandwidth {bandwidth:.3} leaves {n_left} left / {n_right} right observations; need {MIN_PER_SIDE} each"
        )));
    }

    let mut names: Vec<String> = ["intercept", "treated", "running", "running_x_treated"]
        .map(String::from)
        .to_vec();
    if form == FunctionalForm::Quadratic {
        names.extend(["running_sq", "running_sq_x_treated"].map(String::from));
    }
    names.extend(covariates.iter().cloned());
    let x = DMatrix::from_fn(rows.len(), names.len(), |i, j| {
        let r = rows[i];
        let xc = r.running - c;
        let d = f64::from(u8::from(r.treated));
        match (form, j) {
            (_, 0) => 1.0,
            (_, 1) => d,
            (_, 2) => xc,
            (_, 3) => xc * d,
            (FunctionalForm::Quadratic, 4) => xc * xc,
            (FunctionalForm::Quadratic, 5) => xc * xc * d,
            (FunctionalForm::Quadratic, k) => r.covariates[cov_idx[k - 6]],
            (FunctionalForm::LocalLinear, k) => r.covariates[cov_idx[k - 4]],
        }
    });
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.outcome));
    let weights: Option<Vec<f64>> = match kernel {
        Kernel::Uniform => None,
        Kernel::Triangular => Some(rows.iter().map(|r| 1.0 - (r.running - c).abs() / bandwidth).collect()),
    };
    let fit = linalg::least_squares(&x, &y, weights.as_deref(), &names)?;
    let (tau, se) = fit.coefficient("treated").expect("treated column present");
    let (percent, percent_ci) = effect_to_percent(tau, se);
    Ok(RddEstimate {
        tau,
        se,
        percent,
        percent_ci,
        bandwidth,
        n_used: rows.len(),
        n_left,
        n_right,
        form,
        kernel,
        covariates_used: covariates.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthChoice {
    Ik,
    Fixed(f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct GridCell {
    pub dataset: String,
    pub bandwidth_choice: BandwidthChoice,
    pub form: FunctionalForm,
    pub covariate_set: String,
    pub estimate: std::result::Result<RddEstimate, String>,
}

/// Every combination of dataset × bandwidth × form × covariate set.
/// Failures are recorded in their cell; the grid is always returned.
pub fn robustness_grid(
    datasets: &[(String, RddDataset)],
    bandwidths: &[BandwidthChoice],
    forms: &[FunctionalForm],
    covariate_sets: &[(String, Vec<String>)],
    kernel: Kernel,
) -> Vec<GridCell> {
    let ik: Vec<std::result::Result<f64, String>> = datasets
        .par_iter()
        .map(|(_, d)| ik_bandwidth(&d.running(), &d.outcomes(), d.cutoff).map_err(|e| e.to_string()))
        .collect();
    let mut jobs = Vec::new();
    for (di, _) in datasets.iter().enumerate() {
        for &b in bandwidths {
            for &f in forms {
                for ci in 0..covariate_sets.len() {
                    jobs.push((di, b, f, ci));
                }
            }
        }
    }
    jobs.par_iter()
        .map(|&(di, b, f, ci)| {
            let (name, data) = &datasets[di];
            let (cov_label, covs) = &covariate_sets[ci];
            let estimate = match b {
                BandwidthChoice::Ik => ik[di].clone(),
                BandwidthChoice::Fixed(h) => Ok(h),
            }
            .and_then(|h| rdd_estimate(data, h, f, kernel, covs).map_err(|e| e.to_string()));
            GridCell {
                dataset: name.clone(),
                bandwidth_choice: b,
                form: f,
                covariate_set: cov_label.clone(),
                estimate,
            }
        })
        .collect()
}

pub fn write_grid(path: &Path, cells: &[GridCell]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "dataset",
        "form",
        "bandwidth_choice",
        "bandwidth",
        "covariates",
        "tau",
        "se",
        "percent",
        "ci_low",
        "ci_high",
        "n_used",
        "error",
    ])?;
    for c in cells {
        let choice = match c.bandwidth_choice {
            BandwidthChoice::Ik => "ik".to_string(),
            BandwidthChoice::Fixed(h) => h.to_string(),
        };
        let mut row = vec![c.dataset.clone(), c.form.to_string(), choice];
        match &c.estimate {
            Ok(e) => row.extend([
                e.bandwidth.to_string(),
                c.covariate_set.clone(),
                e.tau.to_string(),
                e.se.to_string(),
                e.percent.to_string(),
                e.percent_ci.0.to_string(),
                e.percent_ci.1.to_string(),
                e.n_used.to_string(),
                String::new(),
            ]),
            Err(msg) => {
                row.extend(["".into(), c.covariate_set.clone()]);
                row.extend(std::iter::repeat_n(String::new(), 6));
                row.push(msg.clone());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DollarMode {
    /// Funding already received by designated tracts that designation
    /// accounts for: `observed · (1 − 1/(1 + p))`.
    RealizedGain,
    /// Extra funding undesignated tracts would receive if designated:
    /// `observed · p`.
    CounterfactualGain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DollarEffect {
    pub dollars: f64,
    pub low: f64,
    pub high: f64,
}

/// Aggregate dollars attributable to designation, with the interval
/// obtained by plugging in the percent-effect interval endpoints.
pub fn aggregate_dollar_effect(
    percent: f64,
    percent_ci: (f64, f64),
    observed_funding: &[f64],
    mode: DollarMode,
) -> Result<DollarEffect> {
    if observed_funding.is_empty() {
        return Err(Error::InvalidInput("no tracts to aggregate over".into()));
    }
    let total: f64 = observed_funding.iter().sum();
    let share = |p: f64| match mode {
        DollarMode::RealizedGain => 1.0 - 1.0 / (1.0 + p / 100.0),
        DollarMode::CounterfactualGain => p / 100.0,
    };
    let (a, b) = (total * share(percent_ci.0), total * share(percent_ci.1));
    Ok(DollarEffect {
        dollars: total * share(percent),
        low: a.min(b),
        high: a.max(b),
    })
}
