use rangeloc::config::{builtin, ScenarioRef, TrialConfig};
use rangeloc::harness::{read_report, run_trial, write_csv, write_report, RunOptions, CSV_FILE};
use rangeloc::svg::{render_svg, PlotKind};

fn csv_of(report: &rangeloc::harness::TrialReport) -> String {
    let mut buf = Vec::new();
    write_csv(report, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

fn serial() -> RunOptions {
    RunOptions { workers: Some(1), timings: false }
}

#[test]
fn trial1_tiny_matches_golden_csv() {
    let report = run_trial(&builtin("trial1-tiny", false).unwrap(), &serial()).unwrap();
    assert_eq!(csv_of(&report), include_str!("fixtures/trial1_tiny.csv"));
}

#[test]
fn worker_count_does_not_change_the_report() {
    let cfg = builtin("trial1-tiny", false).unwrap();
    let one = run_trial(&cfg, &serial()).unwrap();
    let many = run_trial(&cfg, &RunOptions { workers: Some(6), timings: false }).unwrap();
    assert_eq!(one, many);
    assert_eq!(serde_json::to_string(&one).unwrap(), serde_json::to_string(&many).unwrap());
}

#[test]
fn single_run_config() {
    let mut cfg = builtin("trial1-tiny", false).unwrap();
    cfg.runs = 1;
    let report = run_trial(&cfg, &serial()).unwrap();
    for cell in &report.cells {
        assert_eq!((cell.runs, cell.failures), (1, 0));
        let s = cell.stats.as_ref().unwrap();
        assert!(s.bias_stderr.iter().all(|v| *v == 0.0));
        assert_eq!(cell.progress.len(), 1);
    }
}

#[test]
fn three_cells_give_three_rows() {
    let mut cfg = builtin("trial5", false).unwrap();
    cfg.sigma2 = vec![0.1, 1.0, 10.0];
    cfg.runs = 5;
    let report = run_trial(&cfg, &serial()).unwrap();
    let text = csv_of(&report);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("estimator,T,sigma2,m,N,bias_x1,bias_x2,bias_x3,bias_sigma2,mse,crlb,theory_mse"));
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 14));
}

#[test]
fn adding_an_estimator_keeps_the_others_fixed() {
    let cfg = builtin("trial1-tiny", false).unwrap();
    let mut more = cfg.clone();
    more.estimators.insert(0, "s-ls".into());
    let a = run_trial(&cfg, &serial()).unwrap();
    let b = run_trial(&more, &serial()).unwrap();
    for cell in &a.cells {
        assert_eq!(Some(cell), b.cell(&cell.estimator, cell.repeats, cell.sigma2));
    }
}

#[test]
fn report_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/report");
    let report = run_trial(&builtin("trial1-tiny", false).unwrap(), &serial()).unwrap();
    write_report(&report, &out).unwrap();
    assert_eq!(read_report(&out).unwrap(), report);
    assert_eq!(std::fs::read_to_string(out.join(CSV_FILE)).unwrap(), csv_of(&report));
}

#[test]
fn timings_fill_the_seconds_column() {
    let mut cfg = builtin("trial1-tiny", false).unwrap();
    cfg.runs = 3;
    let report = run_trial(&cfg, &RunOptions { workers: Some(2), timings: true }).unwrap();
    assert!(report.cells.iter().all(|c| c.seconds.is_some_and(|s| s >= 0.0)));
    let text = csv_of(&report);
    assert!(text.lines().skip(1).all(|l| !l.ends_with(',')));
}

#[test]
fn failing_estimator_runs_are_counted() {
    let mut cfg = builtin("trial6", false).unwrap();
    cfg.estimators = vec!["bias-eli-lin".into(), "w-bias-eli-lin".into()];
    cfg.repeats = vec![5];
    cfg.runs = 4;
    let report = run_trial(&cfg, &serial()).unwrap();
    let bel = report.cell("bias-eli-lin", 5, 1.0).unwrap();
    assert_eq!((bel.runs, bel.failures), (0, 4));
    assert!(bel.stats.is_none());
    let w = report.cell("w-bias-eli-lin", 5, 1.0).unwrap();
    assert_eq!((w.runs, w.failures), (4, 0));
    assert!(csv_of(&report).lines().nth(1).unwrap().starts_with("bias-eli-lin,5,1,50,0,,,,,,"));
}

#[test]
fn config_hash_is_recorded() {
    let cfg = builtin("trial1-tiny", false).unwrap();
    let report = run_trial(&cfg, &serial()).unwrap();
    assert_eq!(report.config_hash, cfg.hash());
    assert_eq!(report.config_hash.len(), 64);
    assert_eq!(report.seed, cfg.seed);
}

fn small_sweep() -> rangeloc::harness::TrialReport {
    let mut cfg = builtin("trial3-small", false).unwrap();
    cfg.runs = 20;
    run_trial(&cfg, &serial()).unwrap()
}

#[test]
fn mse_vs_t_plot_structure() {
    let svg = render_svg(&small_sweep(), PlotKind::MseVsT).unwrap();
    assert!(svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\""));
    assert!(svg.trim_end().ends_with("</svg>"));
    assert!(svg.matches("<polyline").count() >= 2);
    assert!(svg.contains("class=\"x-label\"") && svg.contains("class=\"y-label\""));
    assert!(svg.contains("CRLB"));
}

#[test]
fn identical_reports_give_identical_svg() {
    let a = small_sweep();
    let b = small_sweep();
    for kind in [PlotKind::MseVsT, PlotKind::BiasVsRuns] {
        assert_eq!(render_svg(&a, kind).unwrap(), render_svg(&b, kind).unwrap());
    }
}

#[test]
fn missing_sweep_is_a_configuration_error() {
    let err = render_svg(&small_sweep(), PlotKind::MseVsNoise).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

/// Points of the dashed CRLB polyline in SVG coordinates.
fn crlb_points(svg: &str) -> Vec<(f64, f64)> {
    let line = svg.lines().find(|l| l.starts_with("<polyline") && l.contains("stroke-dasharray")).unwrap();
    let pts = line.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
    pts.split(' ')
        .map(|p| {
            let (x, y) = p.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect()
}

#[test]
fn crlb_line_has_unit_negative_slope() {
    let svg = render_svg(&small_sweep(), PlotKind::MseVsT).unwrap();
    let pts = crlb_points(&svg);
    assert_eq!(pts.len(), 4);
    // The x and y axes span 3 and 4 decades over 450 and 380 pixels; a
    // slope of −1 in log units rises 380/4 px for every 450/3 px across.
    let per_decade_x = 450.0 / 3.0;
    let per_decade_y = 380.0 / 4.0;
    for w in pts.windows(2) {
        let slope = -((w[1].1 - w[0].1) / per_decade_y) / ((w[1].0 - w[0].0) / per_decade_x);
        assert!((slope + 1.0).abs() < 0.02, "slope {slope}");
    }
}

#[test]
fn bias_plot_needs_enough_runs() {
    let mut cfg = builtin("trial1-tiny", false).unwrap();
    cfg.runs = 1;
    let report = run_trial(&cfg, &serial()).unwrap();
    assert!(render_svg(&report, PlotKind::BiasVsRuns).is_err());
    cfg.runs = 20;
    let report = run_trial(&cfg, &serial()).unwrap();
    let svg = render_svg(&report, PlotKind::BiasVsRuns).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 5);
}

#[test]
fn inline_geometry_trial() {
    let cfg = TrialConfig {
        name: "square".into(),
        scenario: ScenarioRef::Inline(rangeloc::config::Geometry {
            sensors: vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, 10.0], vec![10.0, 10.0]],
            target: vec![3.0, 4.0],
        }),
        noise_profile: None,
        estimators: vec!["two-step:noise-est".into(), "ls-gn".into()],
        repeats: vec![50],
        sigma2: vec![0.01],
        runs: 30,
        seed: 5,
        output: None,
    };
    let report = run_trial(&cfg, &serial()).unwrap();
    assert_eq!(report.dim, 2);
    for c in &report.cells {
        assert_eq!(c.failures, 0);
        let ratio = c.stats.as_ref().unwrap().mse / c.crlb.unwrap();
        assert!(ratio > 0.5 && ratio < 2.0, "{}: {ratio}", c.estimator);
    }
}
