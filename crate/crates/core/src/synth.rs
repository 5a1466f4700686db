//! Seeded synthetic data with known structure.
//!
//! Variables come from a one-factor Gaussian copula: with shared factor
//! `g` and idiosyncratic `eⱼ`, `zⱼ = √ρ·g + √(1 − ρ)·eⱼ`. Even-numbered
//! variables are lognormal (`exp zⱼ`), odd-numbered ones uniform on
//! `[0, 100]` (`100·Φ(zⱼ)`), so rank-based and moment-based pre-processing
//! disagree. Demographics load on the same factor `g`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{FundingProject, TractId, TractRecord};
use crate::error::{Error, Result};
use crate::rdd::{RddDataset, RddInput};
use crate::schema::IndicatorSchema;
use crate::stats;

/// Percentile at which the planted discontinuity sits.
pub const RDD_CUTOFF: f64 = 75.0;
/// Number of synthetic legislative districts.
pub const DISTRICTS: usize = 10;
/// Label of the synthetic race group whose share rises with the factor.
pub const RACE_GROUP: &str = "group_a";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_tracts: usize,
    pub n_variables: usize,
    pub correlation: f64,
    pub tau_star: f64,
    pub missing_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_tracts: 1000,
            n_variables: 8,
            correlation: 0.3,
            tau_star: 0.7,
            missing_rate: 0.0,
            seed: 20_240_001,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.correlation) {
            return Err(Error::InvalidInput(format!("correlation {} outside [0, 1)", self.correlation)));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::InvalidInput(format!("missing rate {} outside [0, 1)", self.missing_rate)));
        }
        Ok(())
    }

    /// The schema matching the generated variable ids.
    pub fn schema(&self) -> IndicatorSchema {
        IndicatorSchema::synthetic(self.n_variables)
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Tract id shaped like a state-county-tract code; the county cycles
/// through five values.
fn tract_id(i: usize) -> TractId {
    TractId::new(format!("06{:03}{:06}", 1 + 2 * (i % 5), i))
}

/// Generates `n_tracts` tracts with `n_variables` variables named like
/// [`IndicatorSchema::synthetic`], demographics, and a district per tract.
/// Cells are masked with [`mask_missing`] when `missing_rate > 0`.
pub fn generate_tracts(config: &SynthConfig) -> Result<Vec<TractRecord>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::standard();
    let population = LogNormal::<f64>::new(8.3, 0.35).expect("valid lognormal");
    let (a, b) = (config.correlation.sqrt(), (1.0 - config.correlation).sqrt());
    let records: Vec<TractRecord> = (0..config.n_tracts)
        .map(|i| {
            let g: f64 = rng.sample(StandardNormal);
            let mut r = TractRecord::new(tract_id(i).0, population.sample(&mut rng).round());
            for j in 0..config.n_variables {
                let e: f64 = rng.sample(StandardNormal);
                let z = a * g + b * e;
                let v = if j % 2 == 0 { z.exp() } else { 100.0 * normal.cdf(z) };
                r.values.insert(format!("v{j:02}"), Some(v));
            }
            let noise = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
            let share = logistic(1.2 * g - 0.5 + 0.5 * noise(&mut rng));
            r.demographics.race_shares = BTreeMap::from([
                (RACE_GROUP.to_string(), share),
                ("group_b".to_string(), 1.0 - share),
            ]);
            r.demographics.poverty_share = Some(logistic(0.8 * g - 1.0 + 0.5 * noise(&mut rng)));
            r.demographics.foreign_born_share = Some(logistic(0.6 * g - 1.2 + 0.5 * noise(&mut rng)));
            let district = i * DISTRICTS / config.n_tracts.max(1);
            r.district_id = Some(format!("D{district:02}"));
            // district lean is fixed per district, with the factor tilting it
            let lean = if district.is_multiple_of(2) { 0.4 } else { -0.4 };
            let party = if lean + 0.5 * g + 0.3 * noise(&mut rng) > 0.0 { "A" } else { "B" };
            r.demographics.party = Some(party.to_string());
            r
        })
        .collect();
    if config.missing_rate > 0.0 {
        let vars: Vec<String> = (0..config.n_variables).map(|j| format!("v{j:02}")).collect();
        mask_missing(records, &vars, config.missing_rate, config.seed.wrapping_add(1))
    } else {
        Ok(records)
    }
}

/// Masks cells of `variables` missing at random given tract population:
/// the tract at population rank `r` (1-based, of `n`) loses each cell with
/// probability `rate·(0.5 + (r − 0.5)/n)`, which averages to `rate`.
/// Already-missing cells stay missing; observed cells are otherwise kept.
pub fn mask_missing(mut records: Vec<TractRecord>, variables: &[String], rate: f64, seed: u64) -> Result<Vec<TractRecord>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidInput(format!("missing rate {rate} outside [0, 1)")));
    }
    if rate == 0.0 || records.is_empty() {
        return Ok(records);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pops: Vec<f64> = records.iter().map(|r| r.population).collect();
    let n = records.len() as f64;
    let ranks = stats::average_ranks(&pops);
    for (r, rank) in records.iter_mut().zip(ranks) {
        let p = (rate * (0.5 + (rank - 0.5) / n)).min(1.0);
        for v in variables {
            let u: f64 = rng.random();
            if u < p {
                r.values.insert(v.clone(), None);
            }
        }
    }
    Ok(records)
}

/// Smooth part of the synthetic log-funding curve: a cubic in the
/// percentile with little curvature near the cutoff.
pub fn funding_trend(percentile: f64) -> f64 {
    let d = percentile - 50.0;
    11.0 + 0.015 * d + 1e-7 * d.powi(3)
}

/// Log funding `funding_trend(p) + τ*·1[p ≥ 75] + N(0, noise_sd²)`.
pub fn generate_funding_rdd(percentiles: &[f64], tau_star: f64, noise_sd: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    percentiles
        .iter()
        .map(|&p| {
            let e: f64 = rng.sample(StandardNormal);
            funding_trend(p) + if p >= RDD_CUTOFF { tau_star } else { 0.0 } + noise_sd * e
        })
        .collect()
}

/// A ready-made discontinuity sample: `n` tracts on an even percentile
/// grid with outcomes from [`generate_funding_rdd`].
pub fn synthetic_rdd(n: usize, tau_star: f64, noise_sd: f64, seed: u64) -> Result<RddDataset> {
    let percentiles: Vec<f64> = (1..=n).map(|i| 100.0 * i as f64 / n as f64).collect();
    let log_funding = generate_funding_rdd(&percentiles, tau_star, noise_sd, seed);
    let inputs = percentiles
        .iter()
        .zip(&log_funding)
        .enumerate()
        .map(|(i, (&p, &y))| RddInput {
            tract_id: tract_id(i),
            running: p,
            funding: y.exp(),
            treated: p >= RDD_CUTOFF,
            covariates: vec![],
        })
        .collect();
    RddDataset::new(RDD_CUTOFF, vec![], inputs)
}

/// Funding projects over `records`' districts, including the defects the
/// repair step handles: a few negative totals and earmarks exceeding the
/// total. About half the projects name a tract; the rest only a district.
pub fn generate_projects(records: &[TractRecord], n_projects: usize, seed: u64) -> Vec<FundingProject> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amount = LogNormal::<f64>::new(12.0, 1.0).expect("valid lognormal");
    let categories = ["transit", "housing", "energy", "water", "forestry", "waste"];
    if records.is_empty() {
        return Vec::new();
    }
    (0..n_projects)
        .map(|k| {
            let tract = &records[rng.random_range(0..records.len())];
            let total: f64 = amount.sample(&mut rng).round();
            let mut dac = if rng.random_bool(0.5) { (total * rng.random_range(0.0..0.8)).round() } else { 0.0 };
            let mut low = if rng.random_bool(0.3) { (total * rng.random_range(0.0..0.3)).round() } else { 0.0 };
            let defect = rng.random_range(0..20);
            let total = match defect {
                0 => -total,
                1 => {
                    dac = total;
                    low = total;
                    total
                }
                2 => {
                    dac = (total * 1.4).round();
                    total
                }
                _ => total,
            };
            let with_tract = rng.random_bool(0.5);
            FundingProject {
                project_id: format!("P{k:05}"),
                year: 2017 + rng.random_range(0..5),
                total,
                earmark_dac: dac,
                earmark_low_income: low,
                earmark_buffer: 0.0,
                district_id: tract.district_id.clone(),
                tract_id: with_tract.then(|| tract.tract_id.clone()),
                category_label: Some(categories[rng.random_range(0..categories.len())].to_string()),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_empty() {
        let c = SynthConfig {
            n_tracts: 50,
            ..SynthConfig::default()
        };
        assert_eq!(generate_tracts(&c).unwrap(), generate_tracts(&c).unwrap());
        let empty = SynthConfig { n_tracts: 0, ..c };
        assert!(generate_tracts(&empty).unwrap().is_empty());
    }

    #[test]
    fn noiseless_jump() {
        let p = [74.999, 75.0];
        let y0 = generate_funding_rdd(&p, 0.0, 0.0, 1);
        assert!((y0[1] - y0[0]).abs() < 1e-4);
        let y = generate_funding_rdd(&p, 0.7, 0.0, 1);
        assert!((y[1] - funding_trend(75.0) - 0.7).abs() < 1e-12);
        assert!((y[0] - funding_trend(74.999)).abs() < 1e-12);
    }

    #[test]
    fn mask_rate_zero_is_identity() {
        let c = SynthConfig {
            n_tracts: 30,
            ..SynthConfig::default()
        };
        let r = generate_tracts(&c).unwrap();
        let vars: Vec<String> = vec!["v00".into()];
        assert_eq!(mask_missing(r.clone(), &vars, 0.0, 3).unwrap(), r);
    }
}
