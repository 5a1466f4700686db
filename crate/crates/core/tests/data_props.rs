use std::fmt::Write as _;

use ces_audit::data::{
    ingest_demographics, ingest_projects, ingest_tracts, join_demographics, write_demographics,
    write_projects, write_tracts,
};
use ces_audit::synth::{generate_projects, generate_tracts, SynthConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tracts_round_trip(seed in any::<u64>(), n in 0usize..40, rate in 0.0f64..0.3) {
        let config = SynthConfig { n_tracts: n, missing_rate: rate, seed, ..SynthConfig::default() };
        let records = generate_tracts(&config).unwrap();
        let schema = config.schema();
        let dir = tempfile::tempdir().unwrap();
        let (t, d) = (dir.path().join("t.csv"), dir.path().join("d.csv"));
        write_tracts(&t, &records, &schema).unwrap();
        write_demographics(&d, &records).unwrap();
        let mut back = ingest_tracts(&t, &schema).unwrap().records;
        let demo = ingest_demographics(&d).unwrap();
        prop_assert_eq!(join_demographics(&mut back, &demo), 0);
        prop_assert_eq!(back, records);
    }

    #[test]
    fn projects_round_trip(seed in any::<u64>(), n in 0usize..30) {
        let config = SynthConfig { n_tracts: 20, seed, ..SynthConfig::default() };
        let projects = generate_projects(&generate_tracts(&config).unwrap(), n, seed);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        write_projects(&p, &projects).unwrap();
        let back = ingest_projects(&p).unwrap();
        prop_assert_eq!(back.report.rows, n);
        prop_assert_eq!(back.records, projects);
    }

    #[test]
    fn missing_counts_match_a_cell_count(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schema = ces_audit::schema::IndicatorSchema::synthetic(3);
        let markers = ["", "NA", "na", "NaN", " nan ", "N/A"];
        let mut text = String::from("tract_id,population,v00,v01,v02\n");
        let mut expected = [0usize; 3];
        for i in 0..n {
            write!(text, "t{i},100").unwrap();
            for e in expected.iter_mut() {
                if rng.random_bool(0.3) {
                    let m = markers[rng.random_range(0..markers.len())];
                    if m == "N/A" {
                        // not an accepted spelling; stands for a value instead
                        write!(text, ",1.5").unwrap();
                    } else {
                        *e += 1;
                        write!(text, ",{m}").unwrap();
                    }
                } else {
                    write!(text, ",{}", rng.random_range(0.0..9.0)).unwrap();
                }
            }
            text.push('\n');
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, text).unwrap();
        let report = ingest_tracts(&path, &schema).unwrap().report;
        for (j, e) in expected.iter().enumerate() {
            prop_assert_eq!(report.missing[&format!("v{j:02}")], *e);
        }
    }
}
