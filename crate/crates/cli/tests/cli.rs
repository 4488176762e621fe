use std::path::Path;
use std::process::{Command, Output};

use expecto_cli::output::fairness_discrepancy;
use expecto_cli::{read_csv, Experiment, ExperimentConfig, Method, ResultRow};
use expecto_core::diagnostics::rse;

fn expecto(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_expecto"))
        .args(args)
        .output()
        .unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = expecto(args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn rows(path: &Path) -> Vec<ResultRow> {
    read_csv(std::fs::File::open(path).unwrap()).unwrap()
}

#[test]
fn conjugate_taanis_over_ten_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.csv");
    run_ok(&[
        "run",
        "--experiment",
        "conjugate1d",
        "--method",
        "taanis",
        "--seeds",
        "0..9",
        "--particles",
        "96",
        "--rungs",
        "20",
        "--out",
        out.to_str().unwrap(),
    ]);
    let rows = rows(&out);
    let checkpoints: Vec<u64> = rows
        .iter()
        .filter(|r| r.seed == 0)
        .map(|r| r.evaluations)
        .collect();
    assert_eq!(checkpoints, vec![60, 120, 240, 480, 960, 1920]);
    for &e in &checkpoints {
        assert_eq!(rows.iter().filter(|r| r.evaluations == e).count(), 10);
    }
    for r in &rows {
        let (estimate, rse_value) = (r.estimate.unwrap(), r.rse.unwrap());
        assert_eq!(rse_value, rse(estimate, 2.5).unwrap());
        assert_eq!(
            estimate,
            (r.z1_plus.unwrap() - r.z1_minus.unwrap()) / r.z2.unwrap()
        );
    }
}

#[test]
fn gaussian_mcmc_rse_uses_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.csv");
    run_ok(&[
        "run",
        "--experiment",
        "gaussian",
        "--method",
        "mcmc,oracle",
        "--seeds",
        "4",
        "--particles",
        "100",
        "--rungs",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    let rows = rows(&out);
    let truth = expecto_core::models::GaussianPredictive::new(10).ground_truth();
    let oracle = rows.iter().find(|r| r.method == Method::Oracle).unwrap();
    assert_eq!(oracle.estimate, Some(truth));
    let mcmc: Vec<&ResultRow> = rows.iter().filter(|r| r.method == Method::Mcmc).collect();
    assert_eq!(mcmc.last().unwrap().evaluations, 1000);
    for r in mcmc {
        assert_eq!(r.rse.unwrap(), rse(r.estimate.unwrap(), truth).unwrap());
        assert!(r.z2.is_none() && r.ess.is_none());
    }
}

#[test]
fn validate_passes() {
    let out = run_ok(&["validate"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 10);
    assert!(!text.contains("FAIL"));
}

#[test]
fn missing_fixture_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_expecto"))
        .args(["run", "--experiment", "sir", "--out"])
        .arg(dir.path().join("s.csv"))
        .env("EXPECTO_DATA_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sir_data.json"));
}

#[test]
fn unwritable_output_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let target = blocker.join("out.csv");
    let out = expecto(&[
        "run",
        "--experiment",
        "conjugate1d",
        "--particles",
        "30",
        "--rungs",
        "5",
        "--seeds",
        "0",
        "--out",
        target.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_flags_are_usage_errors() {
    assert!(
        !expecto(&["run", "--experiment", "gaussian", "--kernel", "nuts"])
            .status
            .success()
    );
    assert!(!expecto(&["run", "--experiment", "mars"]).status.success());
}

fn without_seconds(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_owned())
        .collect()
}

#[test]
fn same_config_file_gives_identical_results_on_any_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("gaussian.toml");
    std::fs::write(
        &config,
        "experiment = \"gaussian\"\nmethods = [\"taanis\", \"anis\", \"mcmc\", \"is\"]\nparticles = 64\nrungs = 8\n\
         seeds = \"0..2\"\n[mcmc]\nchains = 8\nburn_in = 50\n",
    )
    .unwrap();
    let paths: Vec<_> = ["1", "1", "3"]
        .iter()
        .enumerate()
        .map(|(i, threads)| {
            let out = dir.path().join(format!("run{i}.csv"));
            run_ok(&[
                "run",
                "--config",
                config.to_str().unwrap(),
                "--threads",
                threads,
                "--out",
                out.to_str().unwrap(),
            ]);
            out
        })
        .collect();
    let first = without_seconds(&paths[0]);
    assert!(first.len() > 1);
    for p in &paths[1..] {
        assert_eq!(without_seconds(p), first);
    }
    let rows = rows(&paths[0]);
    assert_eq!(fairness_discrepancy(&rows), 0);
    for seed in 0..3 {
        let finals: Vec<u64> = [Method::Taanis, Method::Anis, Method::Mcmc]
            .iter()
            .map(|m| {
                rows.iter()
                    .filter(|r| r.seed == seed && r.method == *m)
                    .map(|r| r.evaluations)
                    .max()
                    .unwrap()
            })
            .collect();
        assert_eq!(finals, vec![512; 3]);
    }
    let sorted = rows.windows(2).all(|w| w[0].sort_key() <= w[1].sort_key());
    assert!(sorted);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(&config, "experiment = \"conjugate1d\"\nparticles = 300\nrungs = 4\nseeds = [5]\nmethods = [\"is\"]\n").unwrap();
    let out = dir.path().join("c.csv");
    run_ok(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--particles",
        "600",
        "--out",
        out.to_str().unwrap(),
    ]);
    let rows = rows(&out);
    assert!(rows
        .iter()
        .all(|r| r.seed == 5 && r.method == Method::Is && r.experiment == Experiment::Conjugate1d));
    assert_eq!(rows.last().unwrap().evaluations, 600);
    assert_eq!(
        ExperimentConfig::defaults(Experiment::Conjugate1d).particles,
        3000
    );
}

#[test]
fn ground_truth_and_gen_data() {
    let out = run_ok(&["ground-truth", "--experiment", "conjugate1d"]);
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .starts_with("conjugate1d: 2.5000000000000000e0"));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sir.json");
    run_ok(&["gen-data", "--out", path.to_str().unwrap()]);
    let stored = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sir_data.json");
    assert_eq!(std::fs::read(path).unwrap(), std::fs::read(stored).unwrap());
}
