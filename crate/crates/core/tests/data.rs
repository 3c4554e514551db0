use proptest::prelude::*;

use survfair::data::*;
use survfair::metrics::harrell_c;
use survfair::rsf::RiskPrediction;

fn sorted_rows(ds: &SurvivalDataset) -> Vec<Vec<u64>> {
    let mut rows: Vec<Vec<u64>> = (0..ds.n())
        .map(|i| {
            let mut r: Vec<u64> = ds.feature_row(i).iter().map(|v| v.to_bits()).collect();
            r.push(ds.time()[i].to_bits());
            r.push(ds.status()[i] as u64);
            r
        })
        .collect();
    rows.sort();
    rows
}

#[test]
fn realized_censoring_hits_target() {
    for s in 0..5 {
        let cfg = SynthConfig { target_censoring: 0.4, ..SynthConfig::strong_signal(1000, 4) };
        let ds = generate_synthetic(&cfg, s).unwrap();
        let frac = 1.0 - ds.event_count() as f64 / ds.n() as f64;
        assert!((frac - 0.4).abs() <= 0.05, "{frac}");
    }
}

#[test]
fn synthetic_data_is_reproducible() {
    let cfg = SynthConfig::strong_signal(300, 3);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    write_csv(&generate_synthetic(&cfg, 9).unwrap(), &mut a, &CsvSchema::default()).unwrap();
    write_csv(&generate_synthetic(&cfg, 9).unwrap(), &mut b, &CsvSchema::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn no_signal_gives_chance_concordance() {
    let cfg = SynthConfig { effect_weights: vec![0.0; 4], ..SynthConfig::strong_signal(4000, 4) };
    let ds = generate_synthetic(&cfg, 3).unwrap();
    let (_, test) = split_random(&ds, 0.5, 4).unwrap();
    let risk = RiskPrediction::new(cfg.true_risk(test.features())).unwrap();
    let c = harrell_c(&risk, test.time(), test.status()).unwrap().value;
    assert!((c - 0.5).abs() <= 0.05, "{c}");
}

#[test]
fn true_risk_is_concordant_under_strong_signal() {
    let cfg = SynthConfig::strong_signal(1000, 5);
    let ds = generate_synthetic(&cfg, 5).unwrap();
    let risk = RiskPrediction::new(cfg.true_risk(ds.features())).unwrap();
    assert!(harrell_c(&risk, ds.time(), ds.status()).unwrap().value > 0.75);
}

#[test]
fn split_sizes_and_seed_sensitivity() {
    let ds = generate_synthetic(&SynthConfig::strong_signal(100, 2), 1).unwrap();
    let (a1, _) = split_random(&ds, 0.5, 1).unwrap();
    let (a2, _) = split_random(&ds, 0.5, 2).unwrap();
    assert_eq!(a1.n(), 50);
    assert_ne!(a1.ids(), a2.ids());
}

#[test]
fn synth_config_file_overrides_defaults() {
    let cfg = SynthConfig::from_kv_str("n = 50\np = 2\ntarget_censoring = 0.1\n").unwrap();
    assert_eq!((cfg.n, cfg.p, cfg.target_censoring), (50, 2, 0.1));
    assert_eq!(cfg.effect_weights.len(), 2);
    assert!(SynthConfig::from_kv_str("target_censoring = 1.0").is_err());
    assert!(SynthConfig::from_kv_str("bogus = 3").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn csv_round_trip(n in 1usize..40, p in 0usize..4, groups in 1usize..3, seed in any::<u64>()) {
        let cfg = SynthConfig { group_count: groups, ..SynthConfig::strong_signal(n, p) };
        let ds = generate_synthetic(&cfg, seed).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf, &CsvSchema::default()).unwrap();
        let back = read_csv(buf.as_slice(), &CsvSchema::default()).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn partitions_preserve_the_multiset(n in 2usize..80, k in 2usize..5, frac in 0.05f64..0.95, seed in any::<u64>()) {
        let ds = generate_synthetic(&SynthConfig::strong_signal(n, 2), seed).unwrap();
        if let Ok((a, b)) = split_random(&ds, frac, seed) {
            prop_assert_eq!(a.n(), (frac * n as f64).round() as usize);
            prop_assert_eq!(sorted_rows(&a.concat(&b).unwrap()), sorted_rows(&ds));
        }
        if n >= k {
            for folds in [kfold_partition(&ds, k, seed).unwrap(), kfold_partition_dedup(&ds, k, seed).unwrap()] {
                let mut rows = Vec::new();
                for f in 0..k {
                    prop_assert!(!folds.test_rows(f).is_empty());
                    rows.extend(folds.test_rows(f));
                }
                rows.sort_unstable();
                prop_assert_eq!(rows, (0..n).collect::<Vec<_>>());
                let sizes = folds.sizes();
                prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            }
        }
    }
}
