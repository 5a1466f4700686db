//! The scoring pipeline and its parameterized variants.
//!
//! Pipeline: pre-process each variable over the statewide distribution,
//! average variables into subcategory scores, average subcategories into
//! the two category scores, rescale each category to a 0–10 scale, combine
//! the pair, then percentile-rank the combined score and designate the top
//! of the distribution.
//!
//! Conventions:
//!
//! * percentiles are `100 · average_rank / n` over non-missing values, so
//!   the maximum maps to 100;
//! * averages at every level are taken over non-missing inputs with their
//!   weights renormalized;
//! * percentile-ranked categories are rescaled by dividing by the statewide
//!   maximum; standardized categories, which can be negative, are min–max
//!   rescaled instead;
//! * a tract is designated when its tie group reaches the threshold
//!   quantile, so tied tracts always share a designation.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{TractId, TractRecord};
use crate::error::{Error, Result};
use crate::schema::{Aggregation, Category, IndicatorSchema, ModelSpec, Preprocessing};
use crate::stats;

/// Scores for one tract under one model specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub tract_id: TractId,
    pub subcategory_scores: BTreeMap<String, Option<f64>>,
    /// Category averages before 0–10 rescaling.
    pub category_scores: BTreeMap<Category, Option<f64>>,
    pub raw_score: Option<f64>,
    pub percentile: Option<f64>,
    pub designated: bool,
}

/// Maps non-missing values to `100 · rank / n` with average ranks for ties.
pub fn percentile_rank(values: &[Option<f64>]) -> Result<Vec<Option<f64>>> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::InvalidInput("percentile rank of an all-missing column".into()));
    }
    let n = present.len() as f64;
    let mut ranks = stats::average_ranks(&present).into_iter();
    Ok(values
        .iter()
        .map(|v| v.map(|_| 100.0 * ranks.next().expect("one rank per value") / n))
        .collect())
}

/// Standardizes non-missing values to mean 0 and sample standard
/// deviation 1. `name` labels the zero-variance error.
pub fn zscore_standardize(values: &[Option<f64>], name: &str) -> Result<Vec<Option<f64>>> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.len() < 2 {
        return Err(Error::ZeroVariance(name.to_string()));
    }
    let m = stats::mean(&present);
    let sd = stats::sample_sd(&present);
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::ZeroVariance(name.to_string()));
    }
    Ok(values.iter().map(|v| v.map(|x| (x - m) / sd)).collect())
}

/// Weighted mean of the non-missing entries, weights renormalized over
/// them. `None` when nothing is present.
pub fn weighted_mean(entries: &[(Option<f64>, f64)]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for &(v, w) in entries {
        if let Some(x) = v {
            num += w * x;
            den += w;
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Combines each category's subcategory scores using the schema's
/// subcategory weights.
pub fn category_scores(
    subcategory_scores: &BTreeMap<String, Option<f64>>,
    schema: &IndicatorSchema,
) -> BTreeMap<Category, Option<f64>> {
    Category::ALL
        .iter()
        .map(|&c| {
            let entries: Vec<(Option<f64>, f64)> = schema
                .subcategories
                .iter()
                .filter(|s| s.category == c)
                .map(|s| (subcategory_scores.get(&s.id).copied().flatten(), s.weight))
                .collect();
            (c, weighted_mean(&entries))
        })
        .collect()
}

/// Combines two 0–10 category scores.
pub fn aggregate(pollution: f64, population: f64, aggregation: Aggregation) -> f64 {
    match aggregation {
        Aggregation::Multiplicative => pollution * population,
        Aggregation::Additive => (pollution + population) / 2.0,
    }
}

/// Rescales one category over all tracts to the 0–10 scale.
pub fn rescale_category(values: &[Option<f64>], preprocessing: Preprocessing, name: &str) -> Result<Vec<Option<f64>>> {
    let present = values.iter().flatten();
    let max = present.clone().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = present.copied().fold(f64::INFINITY, f64::min);
    if !max.is_finite() {
        return Err(Error::Degenerate(format!("category `{name}` has no scored tracts")));
    }
    match preprocessing {
        Preprocessing::PercentileRank => {
            if max == 0.0 {
                return Err(Error::Degenerate(format!("category `{name}` maximum is zero")));
            }
            Ok(values.iter().map(|v| v.map(|x| 10.0 * x / max)).collect())
        }
        Preprocessing::ZScore => {
            if max == min {
                return Err(Error::Degenerate(format!("category `{name}` has zero range")));
            }
            Ok(values.iter().map(|v| v.map(|x| 10.0 * (x - min) / (max - min))).collect())
        }
    }
}

/// Final scores from per-tract category averages `[pollution, population]`.
/// A tract missing either category is left unscored.
pub fn final_scores(categories: &[[Option<f64>; 2]], spec: &ModelSpec) -> Result<Vec<Option<f64>>> {
    let pb: Vec<Option<f64>> = categories.iter().map(|c| c[0]).collect();
    let pc: Vec<Option<f64>> = categories.iter().map(|c| c[1]).collect();
    let pb = rescale_category(&pb, spec.preprocessing, Category::PollutionBurden.as_str())?;
    let pc = rescale_category(&pc, spec.preprocessing, Category::PopulationCharacteristics.as_str())?;
    Ok(pb
        .iter()
        .zip(&pc)
        .map(|(a, b)| Some(aggregate((*a)?, (*b)?, spec.aggregation)))
        .collect())
}

/// Designation flags for final-score percentiles: a tract is designated
/// when the highest rank in its tie group reaches `threshold · n`.
pub fn designate(scores: &[Option<f64>], threshold_quantile: f64) -> Vec<bool> {
    let present: Vec<f64> = scores.iter().flatten().copied().collect();
    let n = present.len() as f64;
    let mut ranks = stats::max_ranks(&present).into_iter();
    scores
        .iter()
        .map(|s| match s {
            Some(_) => {
                let r = ranks.next().expect("one rank per score");
                r / n >= threshold_quantile - 1e-12
            }
            None => false,
        })
        .collect()
}

struct PreparedColumn {
    variable: String,
    subcategory: usize,
    values: std::result::Result<Vec<Option<f64>>, String>,
}

/// Pre-processed variable columns for one pre-processing choice, reusable
/// across aggregation, health-set and weight changes.
pub struct PreparedData<'a> {
    schema: &'a IndicatorSchema,
    preprocessing: Preprocessing,
    tract_ids: Vec<TractId>,
    columns: Vec<PreparedColumn>,
}

impl<'a> PreparedData<'a> {
    pub fn new(records: &[TractRecord], schema: &'a IndicatorSchema, preprocessing: Preprocessing) -> Result<Self> {
        schema.validate()?;
        let columns = schema
            .variables
            .par_iter()
            .map(|v| {
                let raw: Vec<Option<f64>> = records.iter().map(|r| r.value(&v.id)).collect();
                let values = if raw.iter().all(Option::is_none) {
                    Ok(raw)
                } else {
                    match preprocessing {
                        Preprocessing::PercentileRank => percentile_rank(&raw),
                        Preprocessing::ZScore => zscore_standardize(&raw, &v.id),
                    }
                    .map_err(|e| e.to_string())
                };
                PreparedColumn {
                    variable: v.id.clone(),
                    subcategory: schema
                        .subcategories
                        .iter()
                        .position(|s| s.id == v.subcategory)
                        .expect("validated schema"),
                    values,
                }
            })
            .collect();
        Ok(PreparedData {
            schema,
            preprocessing,
            tract_ids: records.iter().map(|r| r.tract_id.clone()).collect(),
            columns,
        })
    }

    pub fn preprocessing(&self) -> Preprocessing {
        self.preprocessing
    }

    pub fn len(&self) -> usize {
        self.tract_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tract_ids.is_empty()
    }

    /// Runs the rest of the pipeline under `spec`. The spec's
    /// pre-processing must match the prepared data.
    pub fn score(&self, spec: &ModelSpec) -> Result<Vec<ScoreResult>> {
        if spec.preprocessing != self.preprocessing {
            return Err(Error::InvalidInput(format!(
                "spec uses {:?} but data was prepared with {:?}",
                spec.preprocessing, self.preprocessing
            )));
        }
        spec.validate(self.schema)?;
        let n = self.len();
        let n_sub = self.schema.subcategories.len();
        let weights: BTreeMap<&str, f64> = self
            .schema
            .effective_weights(spec)
            .into_iter()
            .map(|(v, w)| (v.id.as_str(), w))
            .collect();

        let mut num = vec![vec![0.0; n_sub]; n];
        let mut den = vec![vec![0.0; n_sub]; n];
        for col in &self.columns {
            let Some(&w) = weights.get(col.variable.as_str()) else {
                continue;
            };
            let values = col
                .values
                .as_ref()
                .map_err(|_| Error::ZeroVariance(col.variable.clone()))?;
            for (t, v) in values.iter().enumerate() {
                if let Some(x) = v {
                    num[t][col.subcategory] += w * x;
                    den[t][col.subcategory] += w;
                }
            }
        }

        let sub_scores: Vec<Vec<Option<f64>>> = (0..n)
            .map(|t| {
                (0..n_sub)
                    .map(|s| (den[t][s] > 0.0).then(|| num[t][s] / den[t][s]))
                    .collect()
            })
            .collect();
        let cats: Vec<[Option<f64>; 2]> = sub_scores
            .iter()
            .map(|subs| {
                let mut out = [None; 2];
                for (k, c) in Category::ALL.iter().enumerate() {
                    let entries: Vec<(Option<f64>, f64)> = self
                        .schema
                        .subcategories
                        .iter()
                        .zip(subs)
                        .filter(|(def, _)| def.category == *c)
                        .map(|(def, v)| (*v, def.weight))
                        .collect();
                    out[k] = weighted_mean(&entries);
                }
                out
            })
            .collect();
        let raw = final_scores(&cats, spec)?;
        let percentiles = if raw.iter().any(Option::is_some) {
            percentile_rank(&raw)?
        } else {
            vec![None; n]
        };
        let designated = designate(&raw, spec.threshold_quantile);

        Ok((0..n)
            .map(|t| ScoreResult {
                tract_id: self.tract_ids[t].clone(),
                subcategory_scores: self
                    .schema
                    .subcategories
                    .iter()
                    .zip(&sub_scores[t])
                    .map(|(def, v)| (def.id.clone(), *v))
                    .collect(),
                category_scores: Category::ALL.iter().copied().zip(cats[t]).collect(),
                raw_score: raw[t],
                percentile: percentiles[t],
                designated: designated[t],
            })
            .collect())
    }
}

/// Scores every tract under `spec`.
pub fn run_model(records: &[TractRecord], schema: &IndicatorSchema, spec: &ModelSpec) -> Result<Vec<ScoreResult>> {
    PreparedData::new(records, schema, spec.preprocessing)?.score(spec)
}

/// Scores with one subcategory removed; its category is averaged over the
/// remaining subcategory.
pub fn omit_category_model(
    records: &[TractRecord],
    schema: &IndicatorSchema,
    spec: &ModelSpec,
    omitted: &str,
) -> Result<Vec<ScoreResult>> {
    let reduced = schema.without_subcategory(omitted)?;
    let mut spec = spec.clone();
    spec.weights.retain(|v, _| reduced.variable(v).is_some());
    run_model(records, &reduced, &spec)
}

/// Writes results with the fixed column order: `tract_id`, one column per
/// subcategory in schema order, `pollution_burden`,
/// `population_characteristics`, `raw_score`, `percentile`, `designated`.
pub fn write_scores(path: &Path, results: &[ScoreResult], schema: &IndicatorSchema) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["tract_id".to_string()];
    header.extend(schema.subcategories.iter().map(|s| s.id.clone()));
    header.extend(Category::ALL.iter().map(|c| c.as_str().to_string()));
    header.extend(["raw_score", "percentile", "designated"].map(String::from));
    w.write_record(&header)?;
    let f = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    for r in results {
        let mut row = vec![r.tract_id.0.clone()];
        row.extend(
            schema
                .subcategories
                .iter()
                .map(|s| f(r.subcategory_scores.get(&s.id).copied().flatten())),
        );
        row.extend(Category::ALL.iter().map(|c| f(r.category_scores.get(c).copied().flatten())));
        row.push(f(r.raw_score));
        row.push(f(r.percentile));
        row.push(r.designated.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `tract_id, designated` table, for instance designations from a
/// prior tool version. Extra columns are ignored.
pub fn read_designations(path: &Path) -> Result<BTreeMap<TractId, bool>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.into(),
        })
    };
    let (id, d) = (find("tract_id")?, find("designated")?);
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let flag = match row[d].trim().to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" => true,
            "false" | "0" | "no" | "" | "na" => false,
            other => {
                return Err(Error::Ingest {
                    path: path.to_path_buf(),
                    row: row.position().map_or(0, |p| p.line() as usize),
                    message: format!("cannot read `{other}` as a designation flag"),
                })
            }
        };
        out.insert(TractId::new(row[id].trim()), flag);
    }
    Ok(out)
}

/// Builds a result list from external designations, aligned to `template`'s
/// tract order. Tracts absent from `designations` are undesignated.
pub fn results_from_designations(template: &[ScoreResult], designations: &BTreeMap<TractId, bool>) -> Vec<ScoreResult> {
    template
        .iter()
        .map(|r| ScoreResult {
            designated: designations.get(&r.tract_id).copied().unwrap_or(false),
            ..r.clone()
        })
        .collect()
}
