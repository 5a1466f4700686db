//! Propensity-score matching over multiply imputed data.
//!
//! Missing cells are filled by predictive mean matching in a chained
//! equations loop, each imputed dataset is matched 1:1 on the logit of a
//! logistic propensity score, the funding effect is estimated on every
//! matched sample, and the estimates are pooled with Rubin's rules.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TractRecord;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rdd::effect_to_percent;
use crate::stats::{self, Z_975};

/// Covariates with an absolute standardized mean difference above this are
/// adjusted for in the outcome model.
pub const SMD_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmmConfig {
    pub m: usize,
    pub max_iterations: usize,
    /// Donor pool size.
    pub donors: usize,
    pub seed: u64,
}

impl Default for PmmConfig {
    fn default() -> Self {
        PmmConfig {
            m: 10,
            max_iterations: 50,
            donors: 5,
            seed: 20_240_001,
        }
    }
}

/// A numeric table with possibly missing cells, stored by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn missing_cells(&self) -> usize {
        self.rows.iter().flatten().filter(|v| v.is_none()).count()
    }

    /// Share of rows with at least one missing cell, and the largest
    /// per-column missing share.
    pub fn missingness(&self) -> (f64, f64) {
        let n = self.rows.len().max(1) as f64;
        let any = self.rows.iter().filter(|r| r.iter().any(Option::is_none)).count() as f64 / n;
        let worst = (0..self.columns.len())
            .map(|j| self.rows.iter().filter(|r| r[j].is_none()).count() as f64 / n)
            .fold(0.0, f64::max);
        (any, worst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationSet {
    pub config: PmmConfig,
    pub columns: Vec<String>,
    /// `m` complete tables, rows aligned with the input.
    pub datasets: Vec<Vec<Vec<f64>>>,
}

/// Ridge-stabilized least squares; a tiny penalty keeps sparse dummy
/// columns from breaking bootstrap refits.
fn ridge_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let mut xtx = x.transpose() * x;
    let scale = (0..xtx.nrows()).map(|i| xtx[(i, i)]).sum::<f64>() / xtx.nrows() as f64;
    for i in 0..xtx.nrows() {
        xtx[(i, i)] += 1e-8 * scale.max(1.0);
    }
    xtx.cholesky().map(|c| c.solve(&(x.transpose() * y)))
}

fn design(current: &[Vec<f64>], rows: &[usize], target: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), p, |r, c| {
        if c == 0 {
            1.0
        } else {
            let j = if c - 1 < target { c - 1 } else { c };
            current[rows[r]][j]
        }
    })
}

/// Indices of the `k` entries of sorted `keys` closest to `v`.
fn nearest(keys: &[(f64, usize)], v: f64, k: usize) -> Vec<usize> {
    let pos = keys.partition_point(|&(x, _)| x < v);
    let (mut lo, mut hi) = (pos, pos);
    let mut out = Vec::with_capacity(k);
    while out.len() < k && (lo > 0 || hi < keys.len()) {
        let take_low = match (lo > 0, hi < keys.len()) {
            (true, true) => v - keys[lo - 1].0 <= keys[hi].0 - v,
            (l, _) => l,
        };
        if take_low {
            lo -= 1;
            out.push(keys[lo].1);
        } else {
            out.push(keys[hi].1);
            hi += 1;
        }
    }
    out
}

fn impute_chain(table: &Table, config: &PmmConfig, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = table.rows.len();
    let p_cols = table.columns.len();
    let observed: Vec<Vec<usize>> = (0..p_cols)
        .map(|j| (0..n).filter(|&i| table.rows[i][j].is_some()).collect())
        .collect();
    let missing: Vec<Vec<usize>> = (0..p_cols)
        .map(|j| (0..n).filter(|&i| table.rows[i][j].is_none()).collect())
        .collect();
    let mut current: Vec<Vec<f64>> = table
        .rows
        .iter()
        .map(|r| r.iter().map(|v| v.unwrap_or(f64::NAN)).collect())
        .collect();
    for j in 0..p_cols {
        for &i in &missing[j] {
            let donor = *observed[j].choose(&mut rng).expect("observed values exist");
            current[i][j] = current[donor][j];
        }
    }
    let p = p_cols; // intercept + the other columns
    for _ in 0..config.max_iterations {
        for j in 0..p_cols {
            if missing[j].is_empty() {
                continue;
            }
            let obs = &observed[j];
            let x_obs = design(&current, obs, j, p);
            let y_obs = DVector::from_iterator(obs.len(), obs.iter().map(|&i| current[i][j]));
            let Some(beta) = ridge_fit(&x_obs, &y_obs) else { continue };
            let boot: Vec<usize> = (0..obs.len()).map(|_| rng.random_range(0..obs.len())).collect();
            let xb = DMatrix::from_fn(boot.len(), p, |r, c| x_obs[(boot[r], c)]);
            let yb = DVector::from_iterator(boot.len(), boot.iter().map(|&r| y_obs[r]));
            let beta_star = ridge_fit(&xb, &yb).unwrap_or_else(|| beta.clone());
            let fitted = &x_obs * &beta;
            let mut keys: Vec<(f64, usize)> = fitted.iter().copied().zip(obs.iter().copied()).collect();
            keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let x_mis = design(&current, &missing[j], j, p);
            let pred = &x_mis * &beta_star;
            for (r, &i) in missing[j].iter().enumerate() {
                let pool = nearest(&keys, pred[r], config.donors);
                let donor = *pool.choose(&mut rng).expect("non-empty donor pool");
                current[i][j] = current[donor][j];
            }
        }
    }
    current
}

/// Multiple imputation by predictive mean matching. Chain `c` is seeded
/// with `seed + c`; chains run in parallel.
pub fn pmm_impute(table: &Table, config: PmmConfig) -> Result<ImputationSet> {
    if config.m == 0 || config.donors == 0 {
        return Err(Error::InvalidInput("imputation needs m ≥ 1 and at least one donor".into()));
    }
    if table.rows.iter().any(|r| r.len() != table.columns.len()) {
        return Err(Error::InvalidInput("ragged imputation table".into()));
    }
    for (j, name) in table.columns.iter().enumerate() {
        let observed = table.rows.iter().filter(|r| r[j].is_some()).count();
        if observed == 0 && !table.rows.is_empty() {
            return Err(Error::InvalidInput(format!("column `{name}` has no observed values")));
        }
    }
    let datasets = if table.missing_cells() == 0 {
        let complete: Vec<Vec<f64>> = table
            .rows
            .iter()
            .map(|r| r.iter().map(|v| v.expect("complete")).collect())
            .collect();
        vec![complete; config.m]
    } else {
        (0..config.m)
            .into_par_iter()
            .map(|c| impute_chain(table, &config, config.seed.wrapping_add(c as u64)))
            .collect()
    };
    Ok(ImputationSet {
        config,
        columns: table.columns.clone(),
        datasets,
    })
}

/// Builds the imputation table for `records`: the listed variables, then
/// every race share and the poverty share, then county indicators taken
/// from characters 2..5 of the tract id (one county omitted).
pub fn records_table(records: &[TractRecord], variables: &[String], with_location: bool) -> Table {
    let races: Vec<String> = records
        .iter()
        .flat_map(|r| r.demographics.race_shares.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let counties: Vec<String> = if with_location {
        let all: std::collections::BTreeSet<String> = records.iter().filter_map(|r| county(r.tract_id.as_str())).collect();
        all.into_iter().skip(1).collect()
    } else {
        Vec::new()
    };
    let has_poverty = records.iter().any(|r| r.demographics.poverty_share.is_some());
    let mut columns: Vec<String> = variables.to_vec();
    columns.extend(races.iter().map(|r| format!("race_{r}")));
    if has_poverty {
        columns.push("poverty_share".into());
    }
    columns.extend(counties.iter().map(|c| format!("county_{c}")));
    let rows = records
        .iter()
        .map(|r| {
            let mut row: Vec<Option<f64>> = variables.iter().map(|v| r.value(v)).collect();
            row.extend(races.iter().map(|k| r.demographics.race_shares.get(k).copied()));
            if has_poverty {
                row.push(r.demographics.poverty_share);
            }
            let c = county(r.tract_id.as_str());
            row.extend(counties.iter().map(|k| Some(f64::from(u8::from(c.as_deref() == Some(k))))));
            row
        })
        .collect();
    Table { columns, rows }
}

fn county(tract_id: &str) -> Option<String> {
    let digits: String = tract_id.chars().filter(char::is_ascii_digit).collect();
    (digits.len() >= 5).then(|| digits[2..5].to_string())
}

/// Writes imputed values back into copies of `records` (variable columns
/// only; auxiliary predictors are not written).
pub fn apply_imputation(records: &[TractRecord], set: &ImputationSet, variables: &[String]) -> Vec<Vec<TractRecord>> {
    set.datasets
        .iter()
        .map(|data| {
            records
                .iter()
                .zip(data)
                .map(|(r, row)| {
                    let mut r = r.clone();
                    for (j, v) in variables.iter().enumerate() {
                        r.values.insert(v.clone(), Some(row[j]));
                    }
                    r
                })
                .collect()
        })
        .collect()
}

/// One complete dataset ready for matching.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingData {
    pub treated: Vec<bool>,
    /// Log funding.
    pub outcome: Vec<f64>,
    pub covariate_names: Vec<String>,
    /// Rows are units, columns follow `covariate_names`.
    pub covariates: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub treated: usize,
    pub control: usize,
    /// Absolute difference in logit propensity.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<MatchedPair>,
    pub logit_propensity: Vec<f64>,
    /// Caliper on the logit scale.
    pub caliper: f64,
}

/// Logit of a logistic-regression propensity score on all covariates.
pub fn logit_propensity(data: &MatchingData) -> Result<Vec<f64>> {
    let n = data.treated.len();
    let k = data.covariates.ncols();
    let x = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { data.covariates[(i, j - 1)] });
    let beta = linalg::logistic_regression(&x, &data.treated)?;
    Ok((&x * beta).iter().copied().collect())
}

/// Greedy 1:1 nearest-neighbour matching without replacement on the logit
/// propensity. Treated units are taken in descending propensity; each
/// takes the closest unused control if it lies
/// within `caliper_sd` standard deviations of the logit propensity.
pub fn propensity_match(data: &MatchingData, caliper_sd: f64) -> Result<Matching> {
    let logit = logit_propensity(data)?;
    match_on_score(&logit, &data.treated, caliper_sd)
}

/// The matching step of [`propensity_match`] for a given score.
pub fn match_on_score(score: &[f64], treated: &[bool], caliper_sd: f64) -> Result<Matching> {
    let t: Vec<usize> = (0..treated.len()).filter(|&i| treated[i]).collect();
    let c: Vec<usize> = (0..treated.len()).filter(|&i| !treated[i]).collect();
    if t.is_empty() || c.is_empty() {
        return Err(Error::InvalidInput("matching needs treated and control units".into()));
    }
    if !(caliper_sd >= 0.0) {
        return Err(Error::InvalidInput(format!("caliper {caliper_sd} must be non-negative")));
    }
    let sd = if score.len() > 1 { stats::sample_sd(score) } else { 0.0 };
    let caliper = caliper_sd * sd;
    let mut order = t.clone();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    // controls sorted by score; `used` marks matched ones
    let mut controls: Vec<usize> = c;
    controls.sort_by(|&a, &b| score[a].total_cmp(&score[b]).then(a.cmp(&b)));
    let keys: Vec<f64> = controls.iter().map(|&i| score[i]).collect();
    let mut used = vec![false; controls.len()];
    let mut pairs = Vec::new();
    for ti in order {
        let s = score[ti];
        let pos = keys.partition_point(|&k| k < s);
        let left = (0..pos).rev().find(|&j| !used[j]);
        let right = (pos..keys.len()).find(|&j| !used[j]);
        let best = [right, left]
            .into_iter()
            .flatten()
            .map(|j| ((keys[j] - s).abs(), controls[j], j))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some((d, ci, j)) = best {
            if d <= caliper {
                used[j] = true;
                pairs.push(MatchedPair {
                    treated: ti,
                    control: ci,
                    distance: d,
                });
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::Degenerate("no treated unit has a control within the caliper".into()));
    }
    Ok(Matching {
        pairs,
        logit_propensity: score.to_vec(),
        caliper,
    })
}

/// `(mean_treated − mean_control) / sd`, with the standard deviation of
/// the pooled matched sample (n denominator).
pub fn standardized_mean_difference(treated: &[f64], control: &[f64]) -> Result<f64> {
    if treated.is_empty() || control.is_empty() {
        return Err(Error::InvalidInput("empty matched group".into()));
    }
    let pooled: Vec<f64> = treated.iter().chain(control).copied().collect();
    let m = stats::mean(&pooled);
    let sd = (pooled.iter().map(|v| (v - m).powi(2)).sum::<f64>() / pooled.len() as f64).sqrt();
    if sd <= 0.0 {
        return Err(Error::ZeroVariance("matched sample".into()));
    }
    Ok((stats::mean(treated) - stats::mean(control)) / sd)
}

/// Strictly above the threshold.
pub fn needs_adjustment(smd: f64) -> bool {
    smd.abs() > SMD_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedEstimate {
    pub beta: f64,
    pub se: f64,
    pub n_matched: usize,
    pub adjusted_for: Vec<String>,
}

/// Names of covariates whose matched-sample SMD exceeds the threshold.
/// Constant covariates are skipped.
pub fn imbalanced_covariates(data: &MatchingData, matching: &Matching) -> Vec<String> {
    (0..data.covariate_names.len())
        .filter(|&j| {
            let t: Vec<f64> = matching.pairs.iter().map(|p| data.covariates[(p.treated, j)]).collect();
            let c: Vec<f64> = matching.pairs.iter().map(|p| data.covariates[(p.control, j)]).collect();
            standardized_mean_difference(&t, &c).is_ok_and(needs_adjustment)
        })
        .map(|j| data.covariate_names[j].clone())
        .collect()
}

/// Least squares of the outcome on treatment plus `adjust_for` over the
/// matched units.
pub fn matched_effect(data: &MatchingData, matching: &Matching, adjust_for: &[String]) -> Result<MatchedEstimate> {
    let cols: Vec<usize> = adjust_for
        .iter()
        .map(|a| {
            data.covariate_names
                .iter()
                .position(|n| n == a)
                .ok_or_else(|| Error::InvalidInput(format!("unknown covariate `{a}`")))
        })
        .collect::<Result<_>>()?;
    let units: Vec<usize> = matching.pairs.iter().flat_map(|p| [p.treated, p.control]).collect();
    let mut names = vec!["intercept".to_string(), "treated".to_string()];
    names.extend(adjust_for.iter().cloned());
    let x = DMatrix::from_fn(units.len(), names.len(), |r, c| {
        let i = units[r];
        match c {
            0 => 1.0,
            1 => f64::from(u8::from(data.treated[i])),
            k => data.covariates[(i, cols[k - 2])],
        }
    });
    let y = DVector::from_iterator(units.len(), units.iter().map(|&i| data.outcome[i]));
    let fit = linalg::least_squares(&x, &y, None, &names)?;
    let (beta, se) = fit.coefficient("treated").expect("treated column");
    Ok(MatchedEstimate {
        beta,
        se,
        n_matched: units.len(),
        adjusted_for: adjust_for.to_vec(),
    })
}

/// Match, flag imbalanced covariates, and estimate on one dataset.
pub fn matched_analysis(data: &MatchingData, caliper_sd: f64) -> Result<MatchedEstimate> {
    let m = propensity_match(data, caliper_sd)?;
    let flagged = imbalanced_covariates(data, &m);
    matched_effect(data, &m, &flagged)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledEstimate {
    pub m: usize,
    pub beta_bar: f64,
    pub var_within: f64,
    pub var_between: f64,
    pub var_pooled: f64,
    pub se_pooled: f64,
}

/// Rubin's rules: `V = W + B + B/m` with `W` the mean squared standard
/// error and `B` the sample variance of the estimates.
pub fn rubin_pool(estimates: &[(f64, f64)]) -> Result<PooledEstimate> {
    let m = estimates.len();
    if m < 2 {
        return Err(Error::InvalidInput(format!("pooling needs at least two estimates, got {m}")));
    }
    let betas: Vec<f64> = estimates.iter().map(|e| e.0).collect();
    let beta_bar = stats::mean(&betas);
    let var_within = estimates.iter().map(|e| e.1 * e.1).sum::<f64>() / m as f64;
    let var_between = stats::sample_variance(&betas);
    let var_pooled = var_within + var_between + var_between / m as f64;
    Ok(PooledEstimate {
        m,
        beta_bar,
        var_within,
        var_between,
        var_pooled,
        se_pooled: var_pooled.sqrt(),
    })
}

/// Percent effect with the interval transformed from the log scale:
/// `100·(exp(β ± z·se) − 1)`.
pub fn pooled_percent(pooled: &PooledEstimate) -> (f64, (f64, f64)) {
    let pct = |b: f64| 100.0 * (b.exp() - 1.0);
    let half = Z_975 * pooled.se_pooled;
    (pct(pooled.beta_bar), (pct(pooled.beta_bar - half), pct(pooled.beta_bar + half)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingRow {
    pub caliper: f64,
    pub pooled: PooledEstimate,
    pub percent: f64,
    pub ci: (f64, f64),
    pub mean_n: f64,
    pub sd_n: f64,
}

/// Pooled estimates per caliper across imputed datasets.
pub fn matching_table(datasets: &[MatchingData], calipers: &[f64]) -> Result<Vec<MatchingRow>> {
    calipers
        .iter()
        .map(|&cal| {
            let ests = datasets
                .par_iter()
                .map(|d| matched_analysis(d, cal))
                .collect::<Result<Vec<_>>>()?;
            let pooled = rubin_pool(&ests.iter().map(|e| (e.beta, e.se)).collect::<Vec<_>>())?;
            let (percent, ci) = pooled_percent(&pooled);
            let ns: Vec<f64> = ests.iter().map(|e| e.n_matched as f64).collect();
            Ok(MatchingRow {
                caliper: cal,
                pooled,
                percent,
                ci,
                mean_n: stats::mean(&ns),
                sd_n: stats::sample_sd(&ns),
            })
        })
        .collect()
}

pub fn write_matching_table(path: &Path, rows: &[MatchingRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "caliper", "percent", "ci_low", "ci_high", "beta", "se_pooled", "mean_n", "sd_n"])?;
    for r in rows {
        w.serialize((
            "glm",
            r.caliper,
            r.percent,
            r.ci.0,
            r.ci.1,
            r.pooled.beta_bar,
            r.pooled.se_pooled,
            r.mean_n,
            r.sd_n,
        ))?;
    }
    w.flush()?;
    Ok(())
}

/// Log-scale [`effect_to_percent`] for a single matched estimate.
pub fn estimate_percent(e: &MatchedEstimate) -> (f64, (f64, f64)) {
    effect_to_percent(e.beta, e.se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rubin_example() {
        let p = rubin_pool(&[(1.0, 1.0), (3.0, 1.0)]).unwrap();
        assert_eq!((p.beta_bar, p.var_within, p.var_between, p.var_pooled, p.se_pooled), (2.0, 1.0, 2.0, 4.0, 2.0));
        let same = rubin_pool(&[(0.5, 0.2); 4]).unwrap();
        assert_eq!(same.var_between, 0.0);
        assert_abs_diff_eq!(same.var_pooled, 0.04, epsilon = 1e-15);
        assert!(rubin_pool(&[(1.0, 1.0)]).is_err());
    }

    #[test]
    fn smd_example() {
        let s = standardized_mean_difference(&[2.0, 4.0], &[1.0, 3.0]).unwrap();
        assert_abs_diff_eq!(s, 1.0 / 1.25f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(s, 0.894, epsilon = 5e-4);
        assert!(!needs_adjustment(0.2));
        assert!(needs_adjustment(0.2000001));
        assert!(standardized_mean_difference(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn identical_units_match_at_zero_distance() {
        let m = match_on_score(&[0.3, 0.3, 5.0], &[true, false, false], 0.0).unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_eq!((m.pairs[0].control, m.pairs[0].distance), (1, 0.0));
        assert!(match_on_score(&[0.1, 0.2, 0.3], &[true, false, false], 0.0).is_err());
    }

    #[test]
    fn greedy_without_replacement() {
        // treated 0.9 goes first and takes control 0.85; treated 0.8 then takes 0.7
        let score = [0.9, 0.8, 0.85, 0.7, 0.0];
        let treated = [true, true, false, false, false];
        let m = match_on_score(&score, &treated, 10.0).unwrap();
        assert_eq!(m.pairs.iter().map(|p| (p.treated, p.control)).collect::<Vec<_>>(), vec![(0, 2), (1, 3)]);
    }

    #[test]
    fn complete_table_is_copied() {
        let t = Table {
            columns: vec!["a".into(), "b".into()],
            rows: vec![vec![Some(1.0), Some(2.0)], vec![Some(3.0), Some(4.0)]],
        };
        let set = pmm_impute(&t, PmmConfig { m: 3, ..PmmConfig::default() }).unwrap();
        assert_eq!(set.datasets.len(), 3);
        assert!(set.datasets.iter().all(|d| *d == vec![vec![1.0, 2.0], vec![3.0, 4.0]]));
    }

    #[test]
    fn imputation_keeps_observed_cells() {
        let t = Table {
            columns: vec!["x".into(), "y".into()],
            rows: (0..20)
                .map(|i| {
                    let x = f64::from(i);
                    vec![Some(x), if i % 5 == 0 { None } else { Some(2.0 * x) }]
                })
                .collect(),
        };
        let set = pmm_impute(&t, PmmConfig { m: 2, max_iterations: 5, donors: 3, seed: 1 }).unwrap();
        for d in &set.datasets {
            for (row, orig) in d.iter().zip(&t.rows) {
                for (v, o) in row.iter().zip(orig) {
                    if let Some(o) = o {
                        assert_eq!(v, o);
                    }
                }
            }
        }
        let empty = Table {
            columns: vec!["x".into()],
            rows: vec![vec![None]],
        };
        assert!(pmm_impute(&empty, PmmConfig::default()).is_err());
    }

    #[test]
    fn doubling_gives_hundred_percent() {
        let treated = vec![true, true, false, false];
        let outcome: Vec<f64> = [2.0f64, 2.0, 1.0, 1.0].iter().map(|v| v.ln()).collect();
        let data = MatchingData {
            treated,
            outcome,
            covariate_names: vec![],
            covariates: DMatrix::zeros(4, 0),
        };
        let m = match_on_score(&[0.0, 1.0, 0.0, 1.0], &data.treated, 1.0).unwrap();
        let e = matched_effect(&data, &m, &[]).unwrap();
        assert_abs_diff_eq!(estimate_percent(&e).0, 100.0, epsilon = 1e-9);
    }
}
