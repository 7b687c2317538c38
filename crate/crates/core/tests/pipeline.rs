use tapestry_core::dataio::{parse_subset_code, standardize_and_anomalize, SeasonalSeries, Season, SeasonStamp};
use tapestry_core::inference::learning_tests;
use tapestry_core::synth::{generate, SynthConfig};
use tapestry_core::tapestry::{
    build_tapestry, evaluate, predictive_density, read_tables_csv, write_tables_csv, EvaluationPlan, Tapestry,
    TapestryConfig,
};

fn series() -> SeasonalSeries {
    let run = generate(&SynthConfig { seed: 9, ..Default::default() }, 200).unwrap();
    standardize_and_anomalize(&run.observed_series().unwrap(), 1000..=1039).unwrap()
}

fn small() -> TapestryConfig {
    TapestryConfig { n_views: 6, n_draws: 5, ..Default::default() }
}

#[test]
fn series_and_tapestry_survive_json() {
    let s = series();
    assert_eq!(SeasonalSeries::from_json(&s.to_json().unwrap()).unwrap(), s);
    let coding = parse_subset_code("13", 3).unwrap();
    let t = build_tapestry(&s, SeasonStamp::new(1045, Season::Fall), &coding, 0, small()).unwrap();
    assert_eq!(t.threads.len(), 30);
    let back = Tapestry::from_json(&t.to_json().unwrap()).unwrap();
    assert_eq!(back, t);
    let d = predictive_density(&t, 2, 0.0, 0.25, None).unwrap();
    assert_eq!(predictive_density(&back, 2, 0.0, 0.25, None).unwrap().to_bits(), d.to_bits());
}

#[test]
fn reweighting_sequence_keeps_the_simplex() {
    let s = series();
    let coding = parse_subset_code("123", 3).unwrap();
    let mut t = build_tapestry(&s, SeasonStamp::new(1041, Season::Spring), &coding, 0, small()).unwrap();
    for h in 1..=4 {
        t = t.reweight(h, 0.3 * h as f64 - 0.5).unwrap();
        let total: f64 = t.threads.iter().map(|th| th.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
    assert!(t.reweight(2, 0.0).is_err());
}

#[test]
fn evaluation_tables_round_trip_and_feed_learning_tests() {
    let s = series();
    let coding = parse_subset_code("12", 3).unwrap();
    let plan = EvaluationPlan { test_years: 1040..=1046, origins: vec![Season::Winter, Season::Summer] };
    let tables = evaluate(&s, &coding, 0, small(), &plan).unwrap();
    assert_eq!(tables.len(), 2);
    let mut csv = Vec::new();
    write_tables_csv(&tables, &mut csv).unwrap();
    let back = read_tables_csv(csv.as_slice(), "t").unwrap();
    assert_eq!(back.len(), 2);
    for (a, b) in tables.iter().zip(&back) {
        for stage in 0..4 {
            for h in 1..=4 {
                match (a.cell(stage, h), b.cell(stage, h)) {
                    (Some(x), Some(y)) => assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0)),
                    (None, None) => {}
                    other => panic!("stage {stage} h{h}: {other:?}"),
                }
            }
        }
        assert_eq!(learning_tests(b).unwrap().len(), 6);
    }
}
