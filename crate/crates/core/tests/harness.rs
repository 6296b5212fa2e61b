use expfun_lab::charstats::ks_critical_value;
use expfun_lab::harness::{continuity_suite, run_experiment, ContinuityFamily, ExperimentConfig};
use expfun_lab::{LevyTriplet, RngStream};

fn run(json: &str) -> serde_json::Value {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_json(json).unwrap();
    run_experiment(&cfg, dir.path()).unwrap().report
}

#[test]
fn counterexample_family_violates_the_log_moment_condition() {
    let family = ContinuityFamily::discont(&[2, 4, 8, 16]).unwrap();
    for delta in [0.5, 1.0, 2.0] {
        let r = continuity_suite(&family, &LevyTriplet::deterministic(1.0), delta, 10_000, RngStream::new(3)).unwrap();
        assert_eq!(r.verdict, "condition-violated: contcond6");
        assert!(r.rows.windows(2).all(|w| w[0].n < w[1].n));
        // At δ = 1 the condition is n (log n)².
        if delta == 1.0 {
            for row in &r.rows {
                let n = row.n as f64;
                assert!((row.cond_contcond6 - n * n.ln().powi(2)).abs() < 1e-12 * n * n.ln().powi(2));
            }
        }
        // The laws do not approach the limit.
        assert!(r.rows.last().unwrap().ks_to_limit > 0.3);
    }
}

#[test]
fn drift_family_is_consistent_with_continuity() {
    let family = ContinuityFamily::drift_brownian(&[2, 4, 8, 16, 32, 64], 1.0).unwrap();
    let r = continuity_suite(&family, &LevyTriplet::deterministic(1.0), 1.0, 10_000, RngStream::new(4)).unwrap();
    assert_eq!(r.verdict, "consistent-with-continuity");
    assert!(r.rows.iter().all(|row| row.cond_contcond6 == 0.0 && row.cond_contcond1 == 1.0 && row.e_xi == 1.0));
    assert!(r.rows.windows(2).all(|w| w[1].ks_to_limit < w[0].ks_to_limit));
    assert!(r.rows.last().unwrap().ks_to_limit < 0.02);
}

#[test]
fn single_member_equal_to_the_limit() {
    let b = LevyTriplet::brownian(1.0);
    let family = ContinuityFamily { label: "limit".into(), members: vec![(1, b.clone())], limit: b };
    let r = continuity_suite(&family, &LevyTriplet::deterministic(1.0), 1.0, 10_000, RngStream::new(5)).unwrap();
    assert!(r.rows[0].ks_to_limit < ks_critical_value(10_000, 10_000, 0.01));
    assert_eq!(r.verdict, "consistent-with-continuity");
}

#[test]
fn negative_mean_is_reported_as_a_violation() {
    let family = ContinuityFamily::drift_brownian(&[1, 2], 1.0).unwrap();
    let xi = LevyTriplet::from_drift(-0.5, 1.0, expfun_lab::LevyMeasure::Empty).unwrap();
    let r = continuity_suite(&family, &xi, 1.0, 200, RngStream::new(6)).unwrap();
    assert_eq!(r.verdict, "condition-violated: contcond3");
    assert!(r.rows.iter().all(|row| row.ks_to_limit.is_nan() && row.e_log_abs_a == 0.5));
}

#[test]
fn every_command_runs() {
    let r = run(r#"{"command":"simulate","spec":{"xi":{"drift":1},"eta":{"sigma2":2}},"n":2000,"seed":1}"#);
    assert_eq!(r["schema_version"], "v1");
    assert_eq!(r["seed"], 1);
    assert_eq!(r["config_sha256"].as_str().unwrap().len(), 64);
    let r = run(r#"{"command":"cf","spec":"ou-normal","estimator":"exact","n":2000,"grid":{"lo":-2,"hi":2,"points":9}}"#);
    assert!(r["results"]["cf"]["points"] == 9);
    let r = run(
        r#"{"command":"check-identity","spec":"ou-normal","estimator":"exact","n":20000,"grid":{"lo":-5,"hi":5,"points":41}}"#,
    );
    assert!(r["results"]["residual"]["fraction_within_4se"].as_f64().unwrap() >= 0.9);
    let r = run(r#"{"command":"invert-eta","spec":"ou-normal","estimator":"exact","n":20000,"grid":[-1,0,1]}"#);
    assert!(r["results"]["exponent"]["fraction_within_4se_of_truth"].as_f64().unwrap() >= 0.6);
    let r = run(
        r#"{"command":"invert-xi","xi":{"drift":0,"nu":{"type":"atoms","atoms":[[1,2]]}},"eta":{"drift":1},"estimator":"series","n":20000,"grid":{"lo":-2,"hi":2,"points":11}}"#,
    );
    assert!(r["results"]["exponent"]["valid_points"].as_u64().unwrap() >= 5);
    let r = run(r#"{"command":"laplace","xi":{"drift":1},"eta":{"drift":0,"nu":{"type":"atoms","atoms":[[1,1]]}},"n":5000}"#);
    assert!(r["results"]["residual"]["points"] == 21);
    let r = run(r#"{"command":"oracle","spec":"dufresne","estimator":"exact","n":5000,"seed":2}"#);
    assert!(r["results"]["ks_to_law"].as_f64().unwrap() < 0.05);
    let r = run(r#"{"command":"continuity","n":1000,"continuity":{"family":"discont","delta":1}}"#);
    assert_eq!(r["results"]["verdict"], "condition-violated: contcond6");
    let r = run(r#"{"command":"generator-probe","spec":"ou-normal","estimator":"exact","n":20000,"grid":[-1,0.5,2]}"#);
    assert!(r["results"]["max_form_gap"].as_f64().unwrap() < 1e-8);
    assert_eq!(r["results"]["stationarity"].as_array().unwrap().len(), 5);
}

#[test]
fn sample_file_feeds_the_inversion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_json(r#"{"command":"simulate","spec":"ou-normal","estimator":"exact","n":20000,"seed":3}"#)
        .unwrap();
    let s = run_experiment(&cfg, dir.path()).unwrap();
    let sample = s.data_files[0].display().to_string();
    let json = format!(r#"{{"command":"invert-eta","xi":{{"drift":1}},"sample":{sample:?},"grid":{{"lo":-2,"hi":2,"points":9}}}}"#);
    let out = tempfile::tempdir().unwrap();
    let r = run_experiment(&ExperimentConfig::from_json(&json).unwrap(), out.path()).unwrap();
    assert_eq!(r.report["results"]["sample"]["n"], 20000);
    assert!(std::fs::read_to_string(out.path().join("exponent.csv")).unwrap().contains("u,psi_re,psi_im,stderr,valid"));
}
