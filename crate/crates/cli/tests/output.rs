use expecto_cli::output::{fairness_discrepancy, json_sibling, COLUMNS};
use expecto_cli::{
    emit_results, exit_code, read_csv, read_json, write_csv, write_json, Experiment, Method,
    ResultRow,
};

fn sample_rows() -> Vec<ResultRow> {
    let mut a = ResultRow::empty(Experiment::Sir, Method::Taanis, 3, 20_000);
    a.estimate = Some(1.234_567_890_123_456_7e8);
    a.z1_plus = Some(0.1);
    a.z1_minus = Some(0.0);
    a.z2 = Some(f64::MIN_POSITIVE);
    a.ess = Some(199.99999999999997);
    a.ess_retargeted = Some(1.0);
    a.ess_min = Some(1.0);
    a.rse = Some(3.3e-300);
    a.seconds = 12.5;
    let mut b = ResultRow::empty(Experiment::Radon, Method::Mcmc, 0, 7);
    b.estimate = Some(-2.5e-17);
    b.seconds = 0.125;
    vec![a, b]
}

#[test]
fn csv_round_trip_is_exact() {
    let rows = sample_rows();
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).unwrap();
    assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
}

#[test]
fn json_round_trip_is_exact() {
    let rows = sample_rows();
    let mut buf = Vec::new();
    write_json(&rows, &mut buf).unwrap();
    assert_eq!(read_json(buf.as_slice()).unwrap(), rows);
}

#[test]
fn empty_result_is_header_only() {
    let mut buf = Vec::new();
    write_csv(&[], &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), COLUMNS.join(",") + "\n");
}

#[test]
fn missing_values_are_empty_in_csv_and_null_in_json() {
    let mut row = ResultRow::empty(Experiment::Radon, Method::Anis, 1, 100);
    row.rse = Some(f64::NAN);
    row.estimate = Some(0.5);
    let mut csv = Vec::new();
    write_csv(std::slice::from_ref(&row), &mut csv).unwrap();
    let line = String::from_utf8(csv)
        .unwrap()
        .lines()
        .nth(1)
        .unwrap()
        .to_owned();
    let fields: Vec<&str> = line.split(',').collect();
    assert_eq!(fields.len(), COLUMNS.len());
    assert_eq!(fields[11], "");
    assert_eq!(fields[4], "5.0000000000000000e-1");
    let mut json = Vec::new();
    write_json(&[row], &mut json).unwrap();
    let value: serde_json::Value = serde_json::from_slice(&json).unwrap();
    assert!(value[0]["rse"].is_null());
    assert_eq!(value[0]["estimate"], 0.5);
    assert_eq!(value[0].as_object().unwrap().len(), COLUMNS.len());
}

#[test]
fn emit_writes_csv_and_json_siblings() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/run.csv");
    emit_results(&sample_rows(), &path).unwrap();
    assert_eq!(
        read_csv(std::fs::File::open(&path).unwrap()).unwrap(),
        sample_rows()
    );
    assert_eq!(
        read_json(std::fs::File::open(json_sibling(&path)).unwrap()).unwrap(),
        sample_rows()
    );
}

#[test]
fn unwritable_path_maps_to_exit_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let err = emit_results(&sample_rows(), &blocker.join("out.csv")).unwrap_err();
    assert_eq!(exit_code(&err), 3);
}

#[test]
fn fairness_audit_on_matched_rows() {
    let rows: Vec<ResultRow> = [Method::Taanis, Method::Anis, Method::Mcmc]
        .into_iter()
        .flat_map(|m| [3125, 100_000].map(|e| ResultRow::empty(Experiment::Gaussian, m, 0, e)))
        .collect();
    assert_eq!(fairness_discrepancy(&rows), 0);
}
