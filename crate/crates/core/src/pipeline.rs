//! Assembly of analysis samples from scored tracts, demographics and
//! funding totals.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;

use crate::data::{TractId, TractRecord};
use crate::engine::ScoreResult;
use crate::error::{Error, Result};
use crate::matching::MatchingData;
use crate::rdd::{RddDataset, RddInput};
use crate::schema::Category;

/// Covariate names used by [`rdd_dataset`]: the two category scores, the
/// race shares (one group left out as reference) and the poverty share.
pub fn rdd_covariate_names(records: &[TractRecord]) -> Vec<String> {
    let mut names = vec![
        Category::PollutionBurden.as_str().to_string(),
        Category::PopulationCharacteristics.as_str().to_string(),
    ];
    names.extend(race_groups(records).into_iter().skip(1).map(|g| format!("race_{g}")));
    names.push("poverty_share".into());
    names
}

fn race_groups(records: &[TractRecord]) -> Vec<String> {
    records
        .iter()
        .flat_map(|r| r.demographics.race_shares.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Discontinuity sample: running variable = score percentile, outcome =
/// log total funding, treatment = percentile at or above `cutoff`.
///
/// Tracts without a percentile, a funding total or any covariate are left
/// out and counted in the returned number; tracts with zero funding are
/// counted by the dataset itself.
pub fn rdd_dataset(
    scores: &[ScoreResult],
    records: &[TractRecord],
    funding: &BTreeMap<TractId, f64>,
    cutoff: f64,
) -> Result<(RddDataset, usize)> {
    let names = rdd_covariate_names(records);
    let races: Vec<String> = race_groups(records).into_iter().skip(1).collect();
    let by_id: BTreeMap<&TractId, &TractRecord> = records.iter().map(|r| (&r.tract_id, r)).collect();
    let mut dropped = 0;
    let mut inputs = Vec::new();
    for s in scores {
        let row = (|| {
            let running = s.percentile?;
            let funding = *funding.get(&s.tract_id)?;
            let rec = by_id.get(&s.tract_id)?;
            let mut covariates = vec![
                s.category_scores.get(&Category::PollutionBurden).copied().flatten()?,
                s.category_scores.get(&Category::PopulationCharacteristics).copied().flatten()?,
            ];
            for g in &races {
                covariates.push(*rec.demographics.race_shares.get(g)?);
            }
            covariates.push(rec.demographics.poverty_share?);
            Some(RddInput {
                tract_id: s.tract_id.clone(),
                running,
                funding,
                treated: running >= cutoff,
                covariates,
            })
        })();
        match row {
            Some(r) => inputs.push(r),
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("{dropped} tracts lack a percentile, funding total or covariate; left out of the discontinuity sample");
    }
    Ok((RddDataset::new(cutoff, names, inputs)?, dropped))
}

/// Matching sample from one complete (imputed) dataset: propensity
/// covariates are the raw `variables`, treatment is the designation and
/// the outcome is log funding. Tracts without positive funding or a
/// designation are left out.
pub fn matching_data(
    records: &[TractRecord],
    variables: &[String],
    designated: &BTreeMap<TractId, bool>,
    funding: &BTreeMap<TractId, f64>,
) -> Result<MatchingData> {
    let mut treated = Vec::new();
    let mut outcome = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    for r in records {
        let (Some(&d), Some(&f)) = (designated.get(&r.tract_id), funding.get(&r.tract_id)) else {
            continue;
        };
        if !(f > 0.0) {
            continue;
        }
        for v in variables {
            let x = r.value(v).ok_or_else(|| {
                Error::InvalidInput(format!("tract {} has no value for `{v}`; impute first", r.tract_id))
            })?;
            rows.push(x);
        }
        treated.push(d);
        outcome.push(f.ln());
    }
    if !treated.iter().any(|&t| t) || treated.iter().all(|&t| t) {
        return Err(Error::Degenerate("matching needs treated and control tracts with funding".into()));
    }
    Ok(MatchingData {
        covariates: DMatrix::from_row_slice(treated.len(), variables.len(), &rows),
        treated,
        outcome,
        covariate_names: variables.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(id: &str, pct: Option<f64>) -> ScoreResult {
        ScoreResult {
            tract_id: TractId::new(id),
            subcategory_scores: BTreeMap::new(),
            category_scores: BTreeMap::from([
                (Category::PollutionBurden, Some(1.0)),
                (Category::PopulationCharacteristics, Some(2.0)),
            ]),
            raw_score: pct,
            percentile: pct,
            designated: pct.is_some_and(|p| p >= 75.0),
        }
    }

    #[test]
    fn rdd_sample_drops_incomplete_tracts() {
        let mut a = TractRecord::new("a", 1.0);
        a.demographics.race_shares = BTreeMap::from([("x".into(), 0.4), ("y".into(), 0.6)]);
        a.demographics.poverty_share = Some(0.2);
        let mut b = a.clone();
        b.tract_id = TractId::new("b");
        b.demographics.poverty_share = None;
        let records = vec![a, b];
        let scores = vec![score("a", Some(80.0)), score("b", Some(10.0)), score("c", None)];
        let funding = BTreeMap::from([(TractId::new("a"), 5.0), (TractId::new("b"), 1.0)]);
        let (d, dropped) = rdd_dataset(&scores, &records, &funding, 75.0).unwrap();
        assert_eq!(dropped, 2);
        assert_eq!(d.rows.len(), 1);
        assert!(d.rows[0].treated);
        assert_eq!(d.covariate_names, ["pollution_burden", "population_characteristics", "race_y", "poverty_share"]);
        assert_eq!(d.rows[0].covariates, [1.0, 2.0, 0.6, 0.2]);
    }
}
