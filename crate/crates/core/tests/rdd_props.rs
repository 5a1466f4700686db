mod common;

use ces_audit::data::TractId;
use ces_audit::rdd::{
    effect_to_percent, ik_bandwidth, rdd_estimate, FunctionalForm, Kernel, RddDataset, RddInput,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dataset(seed: u64, n: usize) -> RddDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cutoff = 75.0;
    let inputs = (0..n)
        .map(|i| {
            let x: f64 = rng.random_range(0.0..100.0);
            let y: f64 = 10.0 + 0.02 * x + if x >= cutoff { 0.5 } else { 0.0 } + rng.random_range(-1.0..1.0);
            RddInput {
                tract_id: TractId::new(format!("t{i:05}")),
                running: x,
                funding: y.exp(),
                treated: x >= cutoff,
                covariates: vec![rng.random_range(0.0..1.0)],
            }
        })
        .collect();
    RddDataset::new(cutoff, vec!["z".into()], inputs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn local_linear_is_an_intercept_difference(seed in any::<u64>(), h in 8.0f64..60.0) {
        let data = random_dataset(seed, 300);
        let est = rdd_estimate(&data, h, FunctionalForm::LocalLinear, Kernel::Uniform, &[]);
        let window: Vec<_> = data.rows.iter().filter(|r| (r.running - data.cutoff).abs() <= h).collect();
        let side = |t: bool| -> (Vec<f64>, Vec<f64>) {
            window.iter().filter(|r| r.treated == t).map(|r| (r.running, r.outcome)).unzip()
        };
        let (xl, yl) = side(false);
        let (xr, yr) = side(true);
        if xl.len() < 10 || xr.len() < 10 {
            prop_assert!(est.is_err());
        } else {
            let want = common::ols_intercept_at(&xr, &yr, data.cutoff) - common::ols_intercept_at(&xl, &yl, data.cutoff);
            prop_assert!((est.unwrap().tau - want).abs() < 1e-10);
        }
    }

    #[test]
    fn percent_is_monotone(t1 in -2.0f64..2.0, t2 in -2.0f64..2.0, s1 in 0.0f64..1.0, s2 in 0.0f64..1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(effect_to_percent(lo, 0.1).0 <= effect_to_percent(hi, 0.1).0);
        let width = |s: f64| { let (_, (a, b)) = effect_to_percent(0.4, s); b - a };
        let (a, b) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        prop_assert!(width(a) <= width(b) + 1e-12);
    }

    #[test]
    fn estimates_ignore_row_order(seed in any::<u64>()) {
        let data = random_dataset(seed, 200);
        let mut shuffled = data.clone();
        shuffled.rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
        for form in [FunctionalForm::LocalLinear, FunctionalForm::Quadratic] {
            let a = rdd_estimate(&data, 40.0, form, Kernel::Triangular, &["z".to_string()]).unwrap();
            let b = rdd_estimate(&shuffled, 40.0, form, Kernel::Triangular, &["z".to_string()]).unwrap();
            prop_assert!((a.tau - b.tau).abs() < 1e-9);
            prop_assert!((a.se - b.se).abs() < 1e-9);
        }
        let ha = ik_bandwidth(&data.running(), &data.outcomes(), data.cutoff).unwrap();
        let hb = ik_bandwidth(&shuffled.running(), &shuffled.outcomes(), shuffled.cutoff).unwrap();
        prop_assert!((ha - hb).abs() < 1e-9 * ha);
    }
}

/// The rate only shows when curvature dominates the regularization term,
/// so the two sides get different second derivatives.
#[test]
fn bandwidth_shrinks_at_the_fifth_root_rate() {
    let h = |n: usize| -> f64 {
        (0..20)
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(900 + s);
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
                let y: Vec<f64> = x
                    .iter()
                    .map(|&x| {
                        let d = x - 75.0;
                        let curve = if d >= 0.0 { 0.004 * d * d } else { -0.002 * d * d };
                        curve + rng.random_range(-0.5..0.5)
                    })
                    .collect();
                ik_bandwidth(&x, &y, 75.0).unwrap()
            })
            .sum::<f64>()
            / 20.0
    };
    let ratio = h(8000) / h(4000);
    let expected = 2f64.powf(-0.2);
    assert!((ratio - expected).abs() < 0.04, "ratio {ratio}, expected about {expected}");
}

#[test]
fn sharp_design_is_enforced() {
    let bad = RddInput {
        tract_id: TractId::new("a"),
        running: 80.0,
        funding: 1.0,
        treated: false,
        covariates: vec![],
    };
    assert!(RddDataset::new(75.0, vec![], vec![bad]).is_err());
}
