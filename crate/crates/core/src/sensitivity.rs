//! How much designation depends on modelling choices.
//!
//! The lattice is the 2×2×2 grid of pre-processing, aggregation and health
//! set. Churn between two models is the share of tracts whose designation
//! differs; overall sensitivity counts every tract flipped by at least one
//! lattice member relative to the reference model.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{TractId, TractRecord};
use crate::engine::{PreparedData, ScoreResult};
use crate::error::{Error, Result};
use crate::linalg;
use crate::quantreg::QuantileBand;
use crate::schema::{Aggregation, HealthSet, IndicatorSchema, ModelSpec, Preprocessing};
use crate::stats;

/// Default seed for bootstrap bands.
pub const DEFAULT_SEED: u64 = 20_240_001;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
/// Lower and upper quantiles of the prediction band.
pub const BAND_QUANTILES: (f64, f64) = (0.025, 0.975);
pub const BAND_KNOTS: usize = 10;
pub const MIN_RANGES_FOR_BAND: usize = 50;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeResult {
    pub specs: Vec<ModelSpec>,
    pub results: Vec<Vec<ScoreResult>>,
    pub base_index: usize,
}

impl LatticeResult {
    pub fn base(&self) -> &[ScoreResult] {
        &self.results[self.base_index]
    }
}

/// The eight lattice specs. Order: z-score before percentile rank,
/// additive before multiplicative, extended before baseline health; the
/// reference model (percentile rank, multiplicative, baseline) is last.
pub fn lattice_specs() -> Vec<ModelSpec> {
    let mut specs = Vec::with_capacity(8);
    for p in [Preprocessing::ZScore, Preprocessing::PercentileRank] {
        for a in [Aggregation::Additive, Aggregation::Multiplicative] {
            for h in [HealthSet::Extended, HealthSet::Baseline] {
                specs.push(ModelSpec::new(p, a, h));
            }
        }
    }
    specs
}

/// Scores every lattice spec. Variables are pre-processed once per
/// pre-processing choice.
pub fn enumerate_lattice(records: &[TractRecord], schema: &IndicatorSchema) -> Result<LatticeResult> {
    let specs = lattice_specs();
    let (z, pr) = rayon::join(
        || PreparedData::new(records, schema, Preprocessing::ZScore),
        || PreparedData::new(records, schema, Preprocessing::PercentileRank),
    );
    let (z, pr) = (z?, pr?);
    let results = specs
        .par_iter()
        .map(|s| match s.preprocessing {
            Preprocessing::ZScore => z.score(s),
            Preprocessing::PercentileRank => pr.score(s),
        })
        .collect::<Result<Vec<_>>>()?;
    let base_index = specs.iter().position(|s| *s == ModelSpec::baseline()).expect("baseline in lattice");
    Ok(LatticeResult {
        specs,
        results,
        base_index,
    })
}

/// Designations of `b` aligned to the tract order of `a`.
fn aligned(a: &[ScoreResult], b: &[ScoreResult]) -> Result<Vec<bool>> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!("tract sets differ in size ({} vs {})", a.len(), b.len())));
    }
    if a.iter().zip(b).all(|(x, y)| x.tract_id == y.tract_id) {
        return Ok(b.iter().map(|r| r.designated).collect());
    }
    let lookup: BTreeMap<&TractId, bool> = b.iter().map(|r| (&r.tract_id, r.designated)).collect();
    a.iter()
        .map(|r| {
            lookup
                .get(&r.tract_id)
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("tract {} missing from second result set", r.tract_id)))
        })
        .collect()
}

/// Percentage of tracts whose designation differs between `a` and `b`.
pub fn designation_churn(a: &[ScoreResult], b: &[ScoreResult]) -> Result<f64> {
    let bd = aligned(a, b)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let flips = a.iter().zip(&bd).filter(|(r, &d)| r.designated != d).count();
    Ok(100.0 * flips as f64 / a.len() as f64)
}

fn flipped_tracts(lattice: &LatticeResult) -> Vec<bool> {
    let base = lattice.base();
    let mut flipped = vec![false; base.len()];
    for (k, res) in lattice.results.iter().enumerate() {
        if k == lattice.base_index {
            continue;
        }
        let d = aligned(base, res).expect("lattice results share tracts");
        for (i, r) in base.iter().enumerate() {
            flipped[i] |= r.designated != d[i];
        }
    }
    flipped
}

/// Percentage of tracts flipped, relative to the reference model, by at
/// least one lattice member.
pub fn overall_sensitivity(lattice: &LatticeResult) -> f64 {
    let n = lattice.base().len();
    if n == 0 {
        return 0.0;
    }
    let flipped = flipped_tracts(lattice).into_iter().filter(|&f| f).count();
    100.0 * flipped as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChurnRow {
    pub spec: ModelSpec,
    pub churn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChurnTable {
    /// One row per non-reference lattice spec, in lattice order.
    pub rows: Vec<ChurnRow>,
    pub overall: f64,
}

pub fn churn_table(lattice: &LatticeResult) -> ChurnTable {
    let rows = lattice
        .specs
        .iter()
        .zip(&lattice.results)
        .enumerate()
        .filter(|(k, _)| *k != lattice.base_index)
        .map(|(_, (spec, res))| ChurnRow {
            spec: spec.clone(),
            churn: designation_churn(lattice.base(), res).expect("lattice results share tracts"),
        })
        .collect();
    ChurnTable {
        rows,
        overall: overall_sensitivity(lattice),
    }
}

pub fn write_churn_table(path: &Path, table: &ChurnTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["preprocessing", "aggregation", "health_set", "churn_percent"])?;
    for r in &table.rows {
        w.serialize((r.spec.preprocessing, r.spec.aggregation, r.spec.health_set, r.churn))?;
    }
    w.write_record(["overall", "", "", &table.overall.to_string()])?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TractRange {
    pub tract_id: TractId,
    pub base_percentile: f64,
    pub min_percentile: f64,
    pub max_percentile: f64,
}

/// Per-tract extremes of the percentile across lattice members. Tracts
/// without a reference percentile are skipped.
pub fn tract_score_ranges(lattice: &LatticeResult) -> Vec<TractRange> {
    let base = lattice.base();
    let lookups: Vec<BTreeMap<&TractId, Option<f64>>> = lattice
        .results
        .iter()
        .map(|res| res.iter().map(|r| (&r.tract_id, r.percentile)).collect())
        .collect();
    base.iter()
        .filter_map(|r| {
            let p = r.percentile?;
            let (lo, hi) = lookups
                .iter()
                .filter_map(|m| m.get(&r.tract_id).copied().flatten())
                .fold((p, p), |(lo, hi), v| (lo.min(v), hi.max(v)));
            Some(TractRange {
                tract_id: r.tract_id.clone(),
                base_percentile: p,
                min_percentile: lo,
                max_percentile: hi,
            })
        })
        .collect()
}

pub fn write_ranges(path: &Path, ranges: &[TractRange]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in ranges {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Prediction band for the lattice range as a function of the reference
/// percentile: the 2.5% quantile of the minima and the 97.5% quantile of
/// the maxima.
pub fn fit_interval_model(ranges: &[TractRange]) -> Result<QuantileBand> {
    if ranges.len() < MIN_RANGES_FOR_BAND {
        return Err(Error::InvalidInput(format!(
            "{} ranges; the band needs at least {MIN_RANGES_FOR_BAND}",
            ranges.len()
        )));
    }
    let x: Vec<f64> = ranges.iter().map(|r| r.base_percentile).collect();
    let lo: Vec<f64> = ranges.iter().map(|r| r.min_percentile).collect();
    let hi: Vec<f64> = ranges.iter().map(|r| r.max_percentile).collect();
    QuantileBand::fit(&x, &lo, &hi, BAND_QUANTILES.0, BAND_QUANTILES.1, BAND_KNOTS)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSample {
    pub percentile: f64,
    pub low: f64,
    pub high: f64,
    pub width: f64,
}

/// The band evaluated at every integer percentile from 0 to 100.
pub fn band_samples(band: &QuantileBand) -> Vec<BandSample> {
    (0..=100)
        .map(|p| {
            let p = f64::from(p);
            let (low, high) = band.evaluate(p);
            BandSample {
                percentile: p,
                low,
                high,
                width: high - low,
            }
        })
        .collect()
}

/// Designated in any model; all other fields come from the first model.
pub fn union_designation(models: &[&[ScoreResult]]) -> Result<Vec<ScoreResult>> {
    let (first, rest) = models
        .split_first()
        .ok_or_else(|| Error::InvalidInput("union of zero models".into()))?;
    let mut out = first.to_vec();
    for m in rest {
        let d = aligned(first, m)?;
        for (r, flag) in out.iter_mut().zip(d) {
            r.designated |= flag;
        }
    }
    Ok(out)
}

/// Reduction in overall sensitivity when the reference designation is
/// widened by the union with `additional` models.
///
/// Each lattice member's designation is unioned with the same additional
/// models, so a lattice flip only counts when it changes the union: tracts
/// designated by any additional model can no longer flip. Returns
/// `100·(1 − new/old)`, or 0 when `base_sensitivity` is 0. An empty
/// `additional` set leaves the definition unchanged.
pub fn sensitivity_reduction(base_sensitivity: f64, additional: &[&[ScoreResult]], lattice: &LatticeResult) -> Result<f64> {
    if base_sensitivity <= 0.0 {
        return Ok(0.0);
    }
    let base = lattice.base();
    let mut covered = vec![false; base.len()];
    for m in additional {
        for (c, d) in covered.iter_mut().zip(aligned(base, m)?) {
            *c |= d;
        }
    }
    let n = base.len() as f64;
    let remaining = flipped_tracts(lattice)
        .into_iter()
        .zip(&covered)
        .filter(|(f, c)| *f && !**c)
        .count();
    let new = 100.0 * remaining as f64 / n;
    Ok((100.0 * (1.0 - new / base_sensitivity)).clamp(0.0, 100.0))
}

/// Area under the ROC curve of `values` as a predictor of `designated`,
/// over tracts with an observed value.
pub fn predictor_auc(values: &[Option<f64>], designated: &[bool]) -> Result<f64> {
    if values.len() != designated.len() {
        return Err(Error::InvalidInput("values and designations differ in length".into()));
    }
    let (v, l): (Vec<f64>, Vec<bool>) = values
        .iter()
        .zip(designated)
        .filter_map(|(v, &d)| v.map(|x| (x, d)))
        .unzip();
    stats::mann_whitney_auc(&v, &l)
        .ok_or_else(|| Error::InvalidInput("designations contain a single class".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucCorrelation {
    pub variables: Vec<String>,
    /// Pairwise-complete Pearson correlations, row-major.
    pub correlation: Vec<Vec<f64>>,
    pub mean_abs_correlation: Vec<f64>,
    pub auc: Vec<f64>,
    /// R² of the simple regression of AUC on mean absolute correlation.
    pub r_squared: f64,
    /// Variables left out for lack of variance.
    pub excluded: Vec<String>,
}

/// For each active baseline variable: its AUC for predicting designation
/// and its mean absolute correlation with the other variables, plus the
/// R² relating the two.
pub fn auc_correlation_r2(
    records: &[TractRecord],
    schema: &IndicatorSchema,
    designated: &BTreeMap<TractId, bool>,
) -> Result<AucCorrelation> {
    let labels: Vec<bool> = records
        .iter()
        .map(|r| {
            designated
                .get(&r.tract_id)
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("no designation for tract {}", r.tract_id)))
        })
        .collect::<Result<_>>()?;
    let mut variables = Vec::new();
    let mut columns = Vec::new();
    let mut excluded = Vec::new();
    for (v, _) in schema.active_variables(HealthSet::Baseline) {
        let col: Vec<Option<f64>> = records.iter().map(|r| r.value(&v.id)).collect();
        let present: Vec<f64> = col.iter().flatten().copied().collect();
        if present.len() < 2 || stats::sample_variance(&present) <= 0.0 {
            log::warn!("variable {} has no variance; excluded from AUC diagnostics", v.id);
            excluded.push(v.id.clone());
            continue;
        }
        variables.push(v.id.clone());
        columns.push(col);
    }
    let k = variables.len();
    if k < 3 {
        return Err(Error::InvalidInput(format!("{k} usable variables; need at least 3")));
    }
    let correlation: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|i| {
            (0..k)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        stats::pearson_pairwise(&columns[i], &columns[j]).unwrap_or(0.0)
                    }
                })
                .collect()
        })
        .collect();
    let mean_abs_correlation: Vec<f64> = (0..k)
        .map(|i| (0..k).filter(|&j| j != i).map(|j| correlation[i][j].abs()).sum::<f64>() / (k - 1) as f64)
        .collect();
    let auc = columns
        .iter()
        .map(|c| predictor_auc(c, &labels))
        .collect::<Result<Vec<_>>>()?;
    let r_squared = simple_r_squared(&mean_abs_correlation, &auc)?;
    Ok(AucCorrelation {
        variables,
        correlation,
        mean_abs_correlation,
        auc,
        r_squared,
        excluded,
    })
}

fn simple_r_squared(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len();
    let design = nalgebra::DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    let names = ["intercept".to_string(), "mean_abs_correlation".to_string()];
    let fit = linalg::least_squares(&design, &nalgebra::DVector::from_column_slice(y), None, &names)?;
    let my = stats::mean(y);
    let tss: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if tss <= 0.0 {
        return Err(Error::Degenerate("AUC does not vary across variables".into()));
    }
    Ok(1.0 - fit.residuals.norm_squared() / tss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscordancePoint {
    pub bin_low: f64,
    pub bin_high: f64,
    pub n: usize,
    /// Mean of `designated_b − designated_a` over the bin's tracts.
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Signed rate at which model `b` designates tracts that model `a` does
/// not, per bin of a demographic share, with percentile-bootstrap 95%
/// bands. `edges` are increasing bin boundaries; the last bin is closed.
/// Empty bins are omitted.
pub fn subgroup_discordance(
    a: &[ScoreResult],
    b: &[ScoreResult],
    share: &BTreeMap<TractId, f64>,
    edges: &[f64],
    seed: u64,
) -> Result<Vec<DiscordancePoint>> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("bin edges must be increasing with at least two entries".into()));
    }
    let bd = aligned(a, b)?;
    let nb = edges.len() - 1;
    let mut bins: Vec<Vec<f64>> = vec![Vec::new(); nb];
    for (r, &d_b) in a.iter().zip(&bd) {
        let Some(&s) = share.get(&r.tract_id) else { continue };
        let last = edges[nb];
        if s < edges[0] || s > last {
            continue;
        }
        let k = if s == last { nb - 1 } else { edges.partition_point(|&e| e <= s) - 1 };
        bins[k].push(f64::from(i8::from(d_b) - i8::from(r.designated)));
    }
    Ok(bins
        .par_iter()
        .enumerate()
        .filter(|(_, v)| !v.is_empty())
        .map(|(k, v)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let m = v.len();
            let boots: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
                .map(|_| (0..m).map(|_| v[rng.random_range(0..m)]).sum::<f64>() / m as f64)
                .collect();
            DiscordancePoint {
                bin_low: edges[k],
                bin_high: edges[k + 1],
                n: m,
                rate: stats::mean(v),
                ci_low: stats::quantile(&boots, 0.025),
                ci_high: stats::quantile(&boots, 0.975),
            }
        })
        .collect())
}

/// Tracts designated by `b` but not `a`, and by `a` but not `b`.
pub fn designation_changes(a: &[ScoreResult], b: &[ScoreResult]) -> Result<(BTreeSet<TractId>, BTreeSet<TractId>)> {
    let bd = aligned(a, b)?;
    let mut gained = BTreeSet::new();
    let mut lost = BTreeSet::new();
    for (r, d) in a.iter().zip(bd) {
        match (r.designated, d) {
            (false, true) => {
                gained.insert(r.tract_id.clone());
            }
            (true, false) => {
                lost.insert(r.tract_id.clone());
            }
            _ => {}
        }
    }
    Ok((gained, lost))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn results(flags: &[bool]) -> Vec<ScoreResult> {
        flags
            .iter()
            .enumerate()
            .map(|(i, &d)| ScoreResult {
                tract_id: TractId::new(format!("t{i}")),
                subcategory_scores: BTreeMap::new(),
                category_scores: BTreeMap::new(),
                raw_score: Some(i as f64),
                percentile: Some(i as f64),
                designated: d,
            })
            .collect()
    }

    fn lattice(models: Vec<Vec<bool>>) -> LatticeResult {
        let base_index = models.len() - 1;
        LatticeResult {
            specs: vec![ModelSpec::baseline(); models.len()],
            results: models.iter().map(|m| results(m)).collect(),
            base_index,
        }
    }

    #[test]
    fn lattice_order_and_base() {
        let specs = lattice_specs();
        assert_eq!(specs.len(), 8);
        assert_eq!(specs[7], ModelSpec::baseline());
        assert_eq!(specs[0], ModelSpec::alternative());
    }

    #[test]
    fn churn_counts() {
        let a = results(&[true, false, false, false]);
        let b = results(&[true, true, false, false]);
        assert_eq!(designation_churn(&a, &a).unwrap(), 0.0);
        assert_eq!(designation_churn(&a, &b).unwrap(), 25.0);
        assert!(designation_churn(&a, &results(&[true])).is_err());
    }

    #[test]
    fn churn_aligns_by_id() {
        let a = results(&[true, false]);
        let mut b = a.clone();
        b.reverse();
        assert_eq!(designation_churn(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn overall_is_union_of_flips() {
        let mut m1 = vec![false; 100];
        let mut m2 = vec![false; 100];
        for i in 0..5 {
            m1[i] = true;
            m2[50 + i] = true;
        }
        let l = lattice(vec![m1, m2, vec![false; 100]]);
        assert!((overall_sensitivity(&l) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn union_of_sets() {
        let a = results(&[true, false, false]);
        let b = results(&[false, true, false]);
        let u = union_designation(&[&a, &b]).unwrap();
        assert_eq!(u.iter().map(|r| r.designated).collect::<Vec<_>>(), vec![true, true, false]);
        assert_eq!(union_designation(&[&a]).unwrap(), a);
    }

    #[test]
    fn reduction_from_covering_model() {
        let l = lattice(vec![vec![true, true, false, false], vec![false, false, false, false]]);
        let s = overall_sensitivity(&l);
        assert_eq!(s, 50.0);
        assert_eq!(sensitivity_reduction(s, &[], &l).unwrap(), 0.0);
        let extra = results(&[true, false, false, false]);
        assert_eq!(sensitivity_reduction(s, &[&extra], &l).unwrap(), 50.0);
    }

    #[test]
    fn auc_of_values() {
        let v = [Some(1.0), Some(2.0), Some(3.0), Some(4.0), None];
        let d = [false, false, true, true, true];
        assert_eq!(predictor_auc(&v, &d).unwrap(), 1.0);
        assert!(predictor_auc(&v, &[true; 5]).is_err());
    }

    #[test]
    fn discordance_counts() {
        let a = results(&[true, false, false, true, false, false, false, false, true, false]);
        let b = results(&[true, true, false, false, false, true, true, false, true, false]);
        let share: BTreeMap<TractId, f64> = (0..10).map(|i| (TractId::new(format!("t{i}")), i as f64 / 10.0)).collect();
        let pts = subgroup_discordance(&a, &b, &share, &[0.0, 0.5, 1.0], DEFAULT_SEED).unwrap();
        assert_eq!(pts.len(), 2);
        // tracts 0..=4: +1 (t1), -1 (t3) → 0/5
        assert_eq!(pts[0].rate, 0.0);
        // tracts 5..=9: +1 (t5), +1 (t6) → 2/5
        assert!((pts[1].rate - 0.4).abs() < 1e-12);
        assert!(pts[1].ci_low <= pts[1].rate && pts[1].rate <= pts[1].ci_high);
        let same = subgroup_discordance(&a, &a, &share, &[0.0, 0.5, 1.0], 1).unwrap();
        assert!(same.iter().all(|p| p.rate == 0.0 && p.ci_low == 0.0 && p.ci_high == 0.0));
    }
}
