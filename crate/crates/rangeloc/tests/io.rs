use proptest::prelude::*;
use rangeloc::core::model::{simulate, NoiseModel, Scenario};
use rangeloc::io::{read_measurements, read_scenario, write_measurements, write_scenario, ScenarioFile};

#[test]
fn scenario_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.json");
    let s = Scenario::benchmark(NoiseModel::heterogeneous((1..=10).map(|i| i as f64 * 0.1).collect()), 7).unwrap();
    write_scenario(&p, &s).unwrap();
    assert_eq!(read_scenario(&p).unwrap(), s);
}

#[test]
fn scenario_file_rejects_unknown_keys() {
    let text = r#"{"sensors": [[0,0],[1,0],[0,1]], "target": [2,2], "noise": {"kind": "homogeneous", "sigma2": 1},
                   "repeats": 1, "extra": true}"#;
    assert!(serde_json::from_str::<ScenarioFile>(text).is_err());
}

#[test]
fn negative_ranges_survive_the_csv() {
    let s =
        Scenario::from_coords(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]], &[0.01, 0.0], NoiseModel::homogeneous(4.0), 50)
            .unwrap();
    let m = simulate(&s, 9).unwrap();
    assert!(m.values().iter().any(|d| *d < 0.0));
    let mut buf = Vec::new();
    write_measurements(&mut buf, &m).unwrap();
    assert_eq!(read_measurements(buf.as_slice(), 3).unwrap(), m);
}

proptest! {
    #[test]
    fn measurement_csv_round_trips_exactly(seed in any::<u64>(), repeats in 1usize..20, sigma2 in 0.0f64..100.0) {
        let s = Scenario::benchmark(NoiseModel::homogeneous(sigma2), repeats).unwrap();
        let m = simulate(&s, seed).unwrap();
        let mut buf = Vec::new();
        write_measurements(&mut buf, &m).unwrap();
        prop_assert_eq!(read_measurements(buf.as_slice(), 10).unwrap(), m);
    }
}
