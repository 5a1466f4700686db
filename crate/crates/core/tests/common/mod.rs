//! Independent oracles and random instance generators shared by the
//! property tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use ces_audit::data::{FundingProject, TractId, TractRecord};
use ces_audit::funding::{repair_projects, PriorityTracts};
use ces_audit::schema::{
    Aggregation, Category, HealthSet, IndicatorSchema, Membership, ModelSpec, Preprocessing,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Raw score, percentile and designation for one tract.
pub type OracleRow = (Option<f64>, Option<f64>, bool);

/// Straight-line scoring: `(raw score, percentile, designated)` per tract,
/// or `None` where the pipeline must refuse the instance.
pub fn brute_force_scores(
    records: &[TractRecord],
    schema: &IndicatorSchema,
    spec: &ModelSpec,
) -> Option<Vec<OracleRow>> {
    let n = records.len();
    let mut num = vec![vec![0.0; schema.subcategories.len()]; n];
    let mut den = vec![vec![0.0; schema.subcategories.len()]; n];
    for v in &schema.variables {
        let weight = match (spec.health_set, v.membership) {
            (HealthSet::Baseline, Membership::ExtendedOnly) => continue,
            (HealthSet::Baseline, Membership::Baseline) => v.weight,
            (HealthSet::Extended, _) => v.extended_weight.unwrap_or(v.weight),
        };
        let weight = spec.weights.get(&v.id).copied().unwrap_or(weight);
        let raw: Vec<Option<f64>> = records
            .iter()
            .map(|r| r.values.get(&v.id).copied().flatten())
            .collect();
        let present: Vec<f64> = raw.iter().flatten().copied().collect();
        if present.is_empty() {
            continue;
        }
        let m = present.len() as f64;
        let processed: Vec<Option<f64>> = match spec.preprocessing {
            Preprocessing::PercentileRank => raw
                .iter()
                .map(|x| {
                    x.map(|x| {
                        let below = present.iter().filter(|&&y| y < x).count() as f64;
                        let equal = present.iter().filter(|&&y| y == x).count() as f64;
                        100.0 * (below + (equal + 1.0) / 2.0) / m
                    })
                })
                .collect(),
            Preprocessing::ZScore => {
                if present.len() < 2 {
                    return None;
                }
                let mean = present.iter().sum::<f64>() / m;
                let var = present.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (m - 1.0);
                if var <= 0.0 {
                    return None;
                }
                raw.iter().map(|x| x.map(|x| (x - mean) / var.sqrt())).collect()
            }
        };
        let s = schema
            .subcategories
            .iter()
            .position(|s| s.id == v.subcategory)
            .unwrap();
        for t in 0..n {
            if let Some(x) = processed[t] {
                num[t][s] += weight * x;
                den[t][s] += weight;
            }
        }
    }

    let mut cats = vec![[None, None]; n];
    for t in 0..n {
        for (k, c) in [Category::PollutionBurden, Category::PopulationCharacteristics]
            .into_iter()
            .enumerate()
        {
            let (mut a, mut b) = (0.0, 0.0);
            for (s, def) in schema.subcategories.iter().enumerate() {
                if def.category == c && den[t][s] > 0.0 {
                    a += def.weight * (num[t][s] / den[t][s]);
                    b += def.weight;
                }
            }
            if b > 0.0 {
                cats[t][k] = Some(a / b);
            }
        }
    }

    let mut scaled = vec![[None, None]; n];
    for k in 0..2 {
        let present: Vec<f64> = cats.iter().filter_map(|c| c[k]).collect();
        if present.is_empty() {
            return None;
        }
        let hi = present.iter().cloned().fold(f64::MIN, f64::max);
        let lo = present.iter().cloned().fold(f64::MAX, f64::min);
        for t in 0..n {
            scaled[t][k] = match (cats[t][k], spec.preprocessing) {
                (None, _) => None,
                (Some(x), Preprocessing::PercentileRank) => {
                    if hi == 0.0 {
                        return None;
                    }
                    Some(10.0 * x / hi)
                }
                (Some(x), Preprocessing::ZScore) => {
                    if hi == lo {
                        return None;
                    }
                    Some(10.0 * (x - lo) / (hi - lo))
                }
            };
        }
    }

    let raw: Vec<Option<f64>> = scaled
        .iter()
        .map(|c| match (c[0], c[1]) {
            (Some(a), Some(b)) => Some(match spec.aggregation {
                Aggregation::Multiplicative => a * b,
                Aggregation::Additive => (a + b) / 2.0,
            }),
            _ => None,
        })
        .collect();
    let scored: Vec<f64> = raw.iter().flatten().copied().collect();
    let m = scored.len() as f64;
    Some(
        raw.iter()
            .map(|r| match r {
                None => (None, None, false),
                Some(x) => {
                    let below = scored.iter().filter(|&&y| y < *x).count() as f64;
                    let equal = scored.iter().filter(|&&y| y == *x).count() as f64;
                    let pct = 100.0 * (below + (equal + 1.0) / 2.0) / m;
                    let designated = (below + equal) / m >= spec.threshold_quantile - 1e-12;
                    (Some(*x), Some(pct), designated)
                }
            })
            .collect(),
    )
}

/// A random scoring instance: up to 50 tracts, up to 8 variables, some
/// cells missing, some variables only in the extended set, random weights
/// and a random spec.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<TractRecord>, IndicatorSchema, ModelSpec) {
    let n = rng.random_range(4..=50);
    let k = rng.random_range(4..=8);
    let mut schema = IndicatorSchema::synthetic(k);
    for v in schema.variables.iter_mut().skip(4) {
        if rng.random_bool(0.3) {
            v.membership = Membership::ExtendedOnly;
            v.extended_weight = Some(rng.random_range(0.2..1.0));
        }
    }
    let integer = rng.random_bool(0.3);
    let missing = if rng.random_bool(0.5) { 0.0 } else { 0.15 };
    let records = (0..n)
        .map(|i| {
            let mut r = TractRecord::new(format!("t{i:03}"), 1000.0);
            for v in &schema.variables {
                let x: f64 = if integer {
                    rng.random_range(0..6) as f64
                } else {
                    rng.random_range(0.0..50.0)
                };
                let cell = (!rng.random_bool(missing)).then_some(x);
                r.values.insert(v.id.clone(), cell);
            }
            r
        })
        .collect();
    let preprocessing = if rng.random_bool(0.5) {
        Preprocessing::PercentileRank
    } else {
        Preprocessing::ZScore
    };
    let aggregation = if rng.random_bool(0.5) {
        Aggregation::Multiplicative
    } else {
        Aggregation::Additive
    };
    let health = if rng.random_bool(0.5) {
        HealthSet::Baseline
    } else {
        HealthSet::Extended
    };
    let mut weights = BTreeMap::new();
    for v in &schema.variables {
        if rng.random_bool(0.5) {
            weights.insert(v.id.clone(), rng.random_range(0.1..=0.9));
        }
    }
    let mut spec = ModelSpec::new(preprocessing, aggregation, health).with_weights(weights);
    spec.threshold_quantile = [0.5, 0.75, 0.9][rng.random_range(0..3)];
    (records, schema, spec)
}

/// AUC by counting every (positive, negative) pair, ties worth one half.
pub fn pair_count_auc(values: &[f64], labels: &[bool]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &a) in values.iter().enumerate() {
        for (j, &b) in values.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                wins += if a > b {
                    1.0
                } else if a == b {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

/// Intercept at `at` of the simple least-squares line through `(x, y)`.
pub fn ols_intercept_at(x: &[f64], y: &[f64], at: f64) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    my + slope * (at - mx)
}

/// A random district with priority sets and one repaired district-level
/// project.
pub fn random_district(rng: &mut ChaCha8Rng) -> (FundingProject, Vec<TractId>, PriorityTracts) {
    let n = rng.random_range(1..=12);
    let tracts: Vec<TractId> = (0..n).map(|i| TractId::new(format!("t{i:02}"))).collect();
    let pick = |rng: &mut ChaCha8Rng, p: f64| -> BTreeSet<TractId> {
        tracts.iter().filter(|_| rng.random_bool(p)).cloned().collect()
    };
    let priority = PriorityTracts {
        dac: pick(rng, 0.3),
        low_income: pick(rng, 0.3),
        buffer: pick(rng, 0.2),
    };
    let total: f64 = rng.random_range(0.0..1e7);
    let earmark = |rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.5) {
            rng.random_range(0.0..total / 2.0)
        } else {
            0.0
        }
    };
    let project = FundingProject {
        project_id: "p".into(),
        year: 2020,
        total,
        earmark_dac: earmark(rng),
        earmark_low_income: earmark(rng),
        earmark_buffer: earmark(rng),
        district_id: Some("d".into()),
        tract_id: None,
        category_label: None,
    };
    let (mut repaired, _) = repair_projects(vec![project]);
    (repaired.remove(0), tracts, priority)
}

/// Every point of a `points`-per-coordinate grid over `[lo, hi]^k`.
pub fn grid(k: usize, points: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect();
    let mut out = vec![vec![]];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    out
}
