//! Cleaning project-level funding records and attributing them to tracts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DistrictOverlap, FundingProject, TractId, TractRecord};
use crate::error::{Error, Result};

const MONEY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Earmark {
    Dac,
    LowIncome,
    Buffer,
    Other,
}

impl Earmark {
    pub const ALL: [Earmark; 4] = [Earmark::Dac, Earmark::LowIncome, Earmark::Buffer, Earmark::Other];
    pub const PRIORITY: [Earmark; 3] = [Earmark::Dac, Earmark::LowIncome, Earmark::Buffer];

    pub fn as_str(self) -> &'static str {
        match self {
            Earmark::Dac => "dac",
            Earmark::LowIncome => "low_income",
            Earmark::Buffer => "buffer",
            Earmark::Other => "other",
        }
    }
}

impl fmt::Display for Earmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn earmark_amount(p: &FundingProject, e: Earmark) -> f64 {
    match e {
        Earmark::Dac => p.earmark_dac,
        Earmark::LowIncome => p.earmark_low_income,
        Earmark::Buffer => p.earmark_buffer,
        Earmark::Other => (p.total - p.earmark_sum()).max(0.0),
    }
}

fn earmark_mut(p: &mut FundingProject, e: Earmark) -> &mut f64 {
    match e {
        Earmark::Dac => &mut p.earmark_dac,
        Earmark::LowIncome => &mut p.earmark_low_income,
        Earmark::Buffer => &mut p.earmark_buffer,
        Earmark::Other => unreachable!("other is derived"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairEntry {
    pub project_id: String,
    pub defect: String,
    pub action: String,
}

/// Removes projects with negative totals and reconciles earmarks that add
/// up to more than the total. The total is trusted: a single non-zero
/// earmark is set to the total, equal earmarks split it evenly, and
/// unequal earmarks are rescaled in proportion. Negative earmarks are set
/// to zero first.
pub fn repair_projects(projects: Vec<FundingProject>) -> (Vec<FundingProject>, Vec<RepairEntry>) {
    let mut log = Vec::new();
    let mut out = Vec::with_capacity(projects.len());
    let mut entry = |p: &FundingProject, defect: &str, action: &str| {
        log.push(RepairEntry {
            project_id: p.project_id.clone(),
            defect: defect.into(),
            action: action.into(),
        })
    };
    for mut p in projects {
        if p.total < 0.0 {
            entry(&p, "negative_total", "removed");
            continue;
        }
        for e in Earmark::PRIORITY {
            let v = earmark_mut(&mut p, e);
            if *v < 0.0 {
                *v = 0.0;
                entry(&p, &format!("negative_{e}_earmark"), "set_to_zero");
            }
        }
        let sum = p.earmark_sum();
        if sum > p.total + MONEY_TOL * (1.0 + p.total.abs()) {
            let nonzero: Vec<Earmark> = Earmark::PRIORITY.into_iter().filter(|&e| earmark_amount(&p, e) > 0.0).collect();
            let amounts: Vec<f64> = nonzero.iter().map(|&e| earmark_amount(&p, e)).collect();
            let total = p.total;
            let action = if nonzero.len() == 1 {
                *earmark_mut(&mut p, nonzero[0]) = total;
                "set_to_total"
            } else if amounts.windows(2).all(|w| w[0] == w[1]) {
                for &e in &nonzero {
                    *earmark_mut(&mut p, e) = total / nonzero.len() as f64;
                }
                "split_evenly"
            } else {
                for (&e, a) in nonzero.iter().zip(&amounts) {
                    *earmark_mut(&mut p, e) = total * a / sum;
                }
                "rescaled_proportionally"
            };
            entry(&p, "earmarks_exceed_total", action);
        }
        out.push(p);
    }
    (out, log)
}

pub fn write_repair_log(path: &Path, log: &[RepairEntry]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in log {
        serde_json::to_writer(&mut f, e)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// Picks the district for a tract spanning several: largest population,
/// then most blocks, then largest area, then the smallest district id.
/// A criterion is skipped when no remaining candidate reports it.
pub fn assign_tract_district(overlaps: &BTreeMap<String, DistrictOverlap>) -> Result<String> {
    if overlaps.is_empty() {
        return Err(Error::InvalidInput("tract has no candidate districts".into()));
    }
    let mut candidates: Vec<(&String, &DistrictOverlap)> = overlaps.iter().collect();
    let criteria: [fn(&DistrictOverlap) -> Option<f64>; 3] = [|o| o.population, |o| o.blocks.map(f64::from), |o| o.area];
    for crit in criteria {
        if candidates.len() == 1 {
            break;
        }
        let best = candidates.iter().filter_map(|(_, o)| crit(o)).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
        if let Some(best) = best {
            candidates.retain(|(_, o)| crit(o) == Some(best));
        }
    }
    Ok(candidates[0].0.clone())
}

/// District of every tract: its `district_id` when given, otherwise the
/// one chosen from its overlaps. Tracts with neither are skipped.
pub fn district_membership(records: &[TractRecord]) -> Result<BTreeMap<String, Vec<TractId>>> {
    let mut out: BTreeMap<String, Vec<TractId>> = BTreeMap::new();
    for r in records {
        let d = match (&r.district_id, r.district_overlaps.is_empty()) {
            (Some(d), _) => d.clone(),
            (None, false) => assign_tract_district(&r.district_overlaps)?,
            (None, true) => continue,
        };
        out.entry(d).or_default().push(r.tract_id.clone());
    }
    Ok(out)
}

/// Tracts eligible for each priority earmark.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PriorityTracts {
    pub dac: BTreeSet<TractId>,
    pub low_income: BTreeSet<TractId>,
    pub buffer: BTreeSet<TractId>,
}

impl PriorityTracts {
    fn set(&self, e: Earmark) -> &BTreeSet<TractId> {
        match e {
            Earmark::Dac => &self.dac,
            Earmark::LowIncome => &self.low_income,
            Earmark::Buffer => &self.buffer,
            Earmark::Other => unreachable!("no priority set for other"),
        }
    }
}

pub type Attribution = BTreeMap<TractId, BTreeMap<Earmark, f64>>;

/// Splits a district-level project among the district's tracts.
///
/// 1. Each earmark is shared equally by the district's tracts in its
///    priority set; an earmark with no such tract joins the remainder.
/// 2. The remainder goes equally to tracts that received nothing in
///    step 1, up to the aggregate step-1 amount.
/// 3. Whatever is left is shared equally by every tract in the district.
///
/// Money from steps 2 and 3 is labelled [`Earmark::Other`].
pub fn attribute_district_funds(project: &FundingProject, district: &[TractId], priority: &PriorityTracts) -> Result<Attribution> {
    let tracts: BTreeSet<&TractId> = district.iter().collect();
    if tracts.is_empty() {
        return Err(Error::InvalidInput(format!(
            "project {} targets a district with no tracts",
            project.project_id
        )));
    }
    let mut out: Attribution = tracts.iter().map(|&t| (t.clone(), BTreeMap::new())).collect();
    let mut add = |t: &TractId, e: Earmark, v: f64| {
        if v > 0.0 {
            *out.get_mut(t).expect("district tract").entry(e).or_insert(0.0) += v;
        }
    };

    let mut stage1 = 0.0;
    let mut funded: BTreeSet<&TractId> = BTreeSet::new();
    for e in Earmark::PRIORITY {
        let amount = earmark_amount(project, e);
        if amount <= 0.0 {
            continue;
        }
        let eligible: Vec<&TractId> = tracts.iter().copied().filter(|t| priority.set(e).contains(*t)).collect();
        if eligible.is_empty() {
            continue;
        }
        let share = amount / eligible.len() as f64;
        for t in eligible {
            add(t, e, share);
            funded.insert(t);
        }
        stage1 += amount;
    }

    let remaining = (project.total - stage1).max(0.0);
    let others: Vec<&TractId> = tracts.iter().copied().filter(|t| !funded.contains(*t)).collect();
    let stage2 = if others.is_empty() { 0.0 } else { remaining.min(stage1) };
    for &t in &others {
        add(t, Earmark::Other, stage2 / others.len() as f64);
    }

    let residue = remaining - stage2;
    for &t in &tracts {
        add(t, Earmark::Other, residue / tracts.len() as f64);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TractFunding {
    pub tract_id: TractId,
    pub total: f64,
    pub by_earmark: BTreeMap<Earmark, f64>,
    pub by_category: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundingTotals {
    pub tracts: Vec<TractFunding>,
    /// Projects with neither a tract nor a known district.
    pub unattributed: Vec<String>,
}

pub const UNCATEGORIZED: &str = "uncategorized";

/// Per-tract totals. Tract-level projects go to their tract (earmarks as
/// recorded, the rest as `other`); district-level projects are split with
/// [`attribute_district_funds`]. Every tract in `districts` appears, even
/// with zero funding.
pub fn tract_funding_totals(
    projects: &[FundingProject],
    districts: &BTreeMap<String, Vec<TractId>>,
    priority: &PriorityTracts,
) -> Result<FundingTotals> {
    let pieces = projects
        .par_iter()
        .map(|p| -> Result<Option<(Attribution, String)>> {
            let cat = p.category_label.clone().unwrap_or_else(|| UNCATEGORIZED.to_string());
            if let Some(t) = &p.tract_id {
                let split: BTreeMap<Earmark, f64> = Earmark::ALL
                    .into_iter()
                    .map(|e| (e, earmark_amount(p, e)))
                    .filter(|(_, v)| *v > 0.0)
                    .collect();
                return Ok(Some((BTreeMap::from([(t.clone(), split)]), cat)));
            }
            match p.district_id.as_ref().and_then(|d| districts.get(d)) {
                Some(tracts) => Ok(Some((attribute_district_funds(p, tracts, priority)?, cat))),
                None => Ok(None),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut totals: BTreeMap<TractId, TractFunding> = districts
        .values()
        .flatten()
        .map(|t| {
            (
                t.clone(),
                TractFunding {
                    tract_id: t.clone(),
                    total: 0.0,
                    by_earmark: Earmark::ALL.into_iter().map(|e| (e, 0.0)).collect(),
                    by_category: BTreeMap::new(),
                },
            )
        })
        .collect();
    let mut unattributed = Vec::new();
    for (p, piece) in projects.iter().zip(pieces) {
        let Some((attr, cat)) = piece else {
            log::warn!("project {} has no tract or known district; excluded", p.project_id);
            unattributed.push(p.project_id.clone());
            continue;
        };
        for (t, split) in attr {
            let entry = totals.entry(t.clone()).or_insert_with(|| TractFunding {
                tract_id: t.clone(),
                total: 0.0,
                by_earmark: Earmark::ALL.into_iter().map(|e| (e, 0.0)).collect(),
                by_category: BTreeMap::new(),
            });
            let amount: f64 = split.values().sum();
            entry.total += amount;
            for (e, v) in split {
                *entry.by_earmark.entry(e).or_insert(0.0) += v;
            }
            *entry.by_category.entry(cat.clone()).or_insert(0.0) += amount;
        }
    }
    Ok(FundingTotals {
        tracts: totals.into_values().collect(),
        unattributed,
    })
}

pub fn write_tract_funding(path: &Path, tracts: &[TractFunding]) -> Result<()> {
    let categories: BTreeSet<&String> = tracts.iter().flat_map(|t| t.by_category.keys()).collect();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["tract_id".to_string(), "total".to_string()];
    header.extend(Earmark::ALL.iter().map(|e| e.to_string()));
    header.extend(categories.iter().map(|c| format!("category_{c}")));
    w.write_record(&header)?;
    for t in tracts {
        let mut row = vec![t.tract_id.to_string(), t.total.to_string()];
        row.extend(Earmark::ALL.iter().map(|e| t.by_earmark.get(e).copied().unwrap_or(0.0).to_string()));
        row.extend(categories.iter().map(|c| t.by_category.get(*c).copied().unwrap_or(0.0).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub n: usize,
    pub mean: f64,
}

/// Mean of `value` per bin of `position`, for `(position, value)` points.
/// Bins are `[k·w, (k+1)·w)`; empty bins are omitted.
pub fn binned_means(points: &[(f64, f64)], binwidth: f64) -> Result<Vec<ProfileBin>> {
    if !(binwidth > 0.0) {
        return Err(Error::InvalidInput(format!("bin width {binwidth} must be positive")));
    }
    let mut bins: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for &(x, y) in points {
        // nudge so that positions on a bin edge are not lost to rounding
        let k = (x / binwidth + 1e-9).floor() as i64;
        let b = bins.entry(k).or_insert((0.0, 0));
        b.0 += y;
        b.1 += 1;
    }
    Ok(bins
        .into_iter()
        .map(|(k, (s, n))| ProfileBin {
            bin_low: k as f64 * binwidth,
            bin_high: (k + 1) as f64 * binwidth,
            n,
            mean: s / n as f64,
        })
        .collect())
}

/// Mean log funding per percentile bin for `(percentile, dollars)` pairs.
/// Tracts without positive funding are left out.
pub fn binned_funding_profile(totals: &[(f64, f64)], binwidth: f64) -> Result<Vec<ProfileBin>> {
    let logged: Vec<(f64, f64)> = totals.iter().filter(|(_, d)| *d > 0.0).map(|&(p, d)| (p, d.ln())).collect();
    binned_means(&logged, binwidth)
}

pub fn write_profile(path: &Path, bins: &[ProfileBin]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for b in bins {
        w.serialize(b)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn project(total: f64, dac: f64, low: f64) -> FundingProject {
        FundingProject {
            project_id: "p".into(),
            year: 2020,
            total,
            earmark_dac: dac,
            earmark_low_income: low,
            earmark_buffer: 0.0,
            district_id: Some("d".into()),
            tract_id: None,
            category_label: None,
        }
    }

    #[test]
    fn repair_rules() {
        let (out, log) = repair_projects(vec![project(100.0, 100.0, 0.0)]);
        assert_eq!(out[0], project(100.0, 100.0, 0.0));
        assert!(log.is_empty());
        let (out, log) = repair_projects(vec![project(100.0, 80.0, 80.0)]);
        assert_eq!((out[0].earmark_dac, out[0].earmark_low_income), (50.0, 50.0));
        assert_eq!(log[0].action, "split_evenly");
        let (out, _) = repair_projects(vec![project(90.0, 60.0, 30.0)]);
        assert_eq!((out[0].earmark_dac, out[0].earmark_low_income), (60.0, 30.0));
        let (out, _) = repair_projects(vec![project(90.0, 60.0, 60.0)]);
        assert_eq!((out[0].earmark_dac, out[0].earmark_low_income), (45.0, 45.0));
        let (out, log) = repair_projects(vec![project(90.0, 120.0, 60.0)]);
        assert_abs_diff_eq!(out[0].earmark_dac, 60.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[0].earmark_low_income, 30.0, epsilon = 1e-12);
        assert_eq!(log[0].action, "rescaled_proportionally");
        let (out, log) = repair_projects(vec![project(50.0, 70.0, 0.0)]);
        assert_eq!(out[0].earmark_dac, 50.0);
        assert_eq!(log[0].action, "set_to_total");
        let (out, log) = repair_projects(vec![project(-1.0, 0.0, 0.0)]);
        assert!(out.is_empty());
        assert_eq!(log[0].defect, "negative_total");
    }

    fn overlap(pop: Option<f64>, blocks: Option<u32>, area: Option<f64>) -> DistrictOverlap {
        DistrictOverlap {
            population: pop,
            blocks,
            area,
        }
    }

    #[test]
    fn district_assignment_fallbacks() {
        let one = BTreeMap::from([("A".to_string(), overlap(None, None, None))]);
        assert_eq!(assign_tract_district(&one).unwrap(), "A");
        let pop = BTreeMap::from([
            ("A".to_string(), overlap(Some(900.0), Some(1), None)),
            ("B".to_string(), overlap(Some(100.0), Some(9), None)),
        ]);
        assert_eq!(assign_tract_district(&pop).unwrap(), "A");
        let area = BTreeMap::from([
            ("A".to_string(), overlap(None, Some(4), Some(2.0))),
            ("B".to_string(), overlap(None, Some(4), Some(1.0))),
        ]);
        assert_eq!(assign_tract_district(&area).unwrap(), "A");
        assert!(assign_tract_district(&BTreeMap::new()).is_err());
    }

    fn ids(names: &[&str]) -> Vec<TractId> {
        names.iter().map(|n| TractId::new(*n)).collect()
    }

    fn total_of(a: &Attribution, t: &str) -> f64 {
        a[&TractId::new(t)].values().sum()
    }

    #[test]
    fn staged_attribution_examples() {
        let district = ids(&["d1", "d2", "n1", "n2"]);
        let pri = PriorityTracts {
            dac: ids(&["d1", "d2"]).into_iter().collect(),
            ..PriorityTracts::default()
        };
        let a = attribute_district_funds(&project(100.0, 60.0, 0.0), &district, &pri).unwrap();
        assert_abs_diff_eq!(total_of(&a, "d1"), 30.0, epsilon = 1e-12);
        assert_abs_diff_eq!(total_of(&a, "n2"), 20.0, epsilon = 1e-12);
        let a = attribute_district_funds(&project(200.0, 60.0, 0.0), &district, &pri).unwrap();
        for t in ["d1", "d2", "n1", "n2"] {
            assert_abs_diff_eq!(total_of(&a, t), 50.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(a[&TractId::new("d1")][&Earmark::Dac], 30.0, epsilon = 1e-12);
        let single = attribute_district_funds(&project(75.0, 10.0, 0.0), &ids(&["x"]), &pri).unwrap();
        assert_abs_diff_eq!(total_of(&single, "x"), 75.0, epsilon = 1e-12);
        assert!(attribute_district_funds(&project(1.0, 0.0, 0.0), &[], &pri).is_err());
    }

    #[test]
    fn profile_bins() {
        let bins = binned_means(&[(0.05, 2.0), (0.07, 4.0), (0.3, 1.0)], 0.1).unwrap();
        assert_eq!(bins.len(), 2);
        assert_eq!((bins[0].n, bins[0].mean), (2, 3.0));
        assert_abs_diff_eq!(bins[1].bin_low, 0.3, epsilon = 1e-12);
        assert!(binned_means(&[], 0.0).is_err());
    }
}
