mod common;

use std::collections::BTreeMap;

use ces_audit::data::{FundingProject, TractId};
use ces_audit::funding::{
    attribute_district_funds, binned_means, repair_projects, tract_funding_totals,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn project(total: f64, dac: f64, low: f64, buffer: f64) -> FundingProject {
    FundingProject {
        project_id: "p".into(),
        year: 2020,
        total,
        earmark_dac: dac,
        earmark_low_income: low,
        earmark_buffer: buffer,
        district_id: Some("d".into()),
        tract_id: None,
        category_label: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn attribution_conserves_and_ignores_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, mut tracts, priority) = common::random_district(&mut rng);
        let a = attribute_district_funds(&p, &tracts, &priority).unwrap();
        let sum: f64 = a.values().flat_map(|m| m.values()).sum();
        prop_assert!((sum - p.total).abs() < 1e-6);
        prop_assert!(a.values().flat_map(|m| m.values()).all(|&v| v >= 0.0));
        tracts.shuffle(&mut rng);
        let b = attribute_district_funds(&p, &tracts, &priority).unwrap();
        for (t, m) in &a {
            for (e, v) in m {
                prop_assert!((v - b[t][e]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn repair_bounds_earmarks_and_keeps_consistent_rows(
        total in -1e6f64..1e6, dac in 0.0f64..1e6, low in 0.0f64..1e6, buffer in 0.0f64..1e6,
    ) {
        let raw = project(total, dac, low, buffer);
        let (fixed, log) = repair_projects(vec![raw.clone()]);
        if total < 0.0 {
            prop_assert!(fixed.is_empty());
            prop_assert_eq!(log.len(), 1);
        } else {
            let f = &fixed[0];
            prop_assert!(f.earmark_sum() <= f.total * (1.0 + 1e-12) + 1e-9);
            for v in [f.earmark_dac, f.earmark_low_income, f.earmark_buffer] {
                prop_assert!(v >= 0.0 && v <= f.total + 1e-9);
            }
            if raw.earmark_sum() <= total {
                prop_assert_eq!(f, &raw);
                prop_assert!(log.is_empty());
            }
        }
    }

    #[test]
    fn binned_means_match_a_group_by(points in proptest::collection::vec((0.0f64..100.0, -5.0f64..5.0), 1..80), w in 0.5f64..20.0) {
        let bins = binned_means(&points, w).unwrap();
        let mut groups: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
        for &(x, y) in &points {
            groups.entry((x / w).floor() as i64).or_default().push(y);
        }
        prop_assert_eq!(bins.len(), groups.len());
        for (b, (k, ys)) in bins.iter().zip(&groups) {
            prop_assert!((b.bin_low - *k as f64 * w).abs() < 1e-9);
            prop_assert_eq!(b.n, ys.len());
            prop_assert!((b.mean - ys.iter().sum::<f64>() / ys.len() as f64).abs() < 1e-9);
        }
    }
}

#[test]
fn totals_conserve_the_repaired_grand_total() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut districts = BTreeMap::new();
    let mut projects = Vec::new();
    let mut priority = ces_audit::funding::PriorityTracts::default();
    for d in 0..20 {
        let (mut p, tracts, pr) = common::random_district(&mut rng);
        let name = format!("d{d}");
        let tracts: Vec<TractId> = tracts.into_iter().map(|t| TractId::new(format!("{name}-{t}"))).collect();
        let relabel = |s: std::collections::BTreeSet<TractId>| s.into_iter().map(|t| TractId::new(format!("{name}-{t}")));
        priority.dac.extend(relabel(pr.dac));
        priority.low_income.extend(relabel(pr.low_income));
        priority.buffer.extend(relabel(pr.buffer));
        p.project_id = format!("p{d}");
        p.district_id = Some(name.clone());
        if d % 3 == 0 {
            p.tract_id = Some(tracts[0].clone());
        }
        districts.insert(name, tracts);
        projects.push(p);
    }
    let (repaired, _) = repair_projects(projects);
    let totals = tract_funding_totals(&repaired, &districts, &priority).unwrap();
    let grand: f64 = totals.tracts.iter().map(|t| t.total).sum();
    let want: f64 = repaired.iter().map(|p| p.total).sum();
    assert!((grand - want).abs() < 1e-6 * want.max(1.0));
    for t in &totals.tracts {
        let by_earmark: f64 = t.by_earmark.values().sum();
        assert!((t.total - by_earmark).abs() < 1e-6);
        assert!(t.by_earmark.values().all(|&v| v >= 0.0));
    }
}
