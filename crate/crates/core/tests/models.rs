use std::collections::BTreeMap;
use std::path::PathBuf;

use expecto_core::inference::prior_importance_expectation;
use expecto_core::models::{generate_sir_data, load_radon_csv, sir_ground_truth, Sir, SirData};
use expecto_core::{Context, Distribution, Model, ProgramDensity, Real, Result, Value};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

#[test]
fn negative_binomial_moments() {
    let (mu, phi) = (20.0, 10.0);
    let nb = Distribution::<f64>::negative_binomial(mu, phi).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 1_000_000;
    let ys: Vec<f64> = (0..n)
        .map(|_| match nb.sample(&mut rng) {
            Value::Scalar(v) => v,
            Value::Vector(_) => unreachable!(),
        })
        .collect();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    assert!((mean / mu - 1.0).abs() < 0.01, "mean {mean}");
    assert!(
        (var / (mu + mu * mu / phi) - 1.0).abs() < 0.02,
        "variance {var}"
    );
}

#[test]
fn stored_sir_data_regenerates_bit_identically() {
    let path = data("sir_data.json");
    let stored = SirData::load(&path).unwrap();
    let regenerated = generate_sir_data(stored.seed).unwrap();
    assert_eq!(regenerated, stored);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(
        serde_json::to_string_pretty(&regenerated).unwrap() + "\n",
        text
    );
}

/// The SIR model with its return value replaced by 1.
#[derive(Clone)]
struct UnitReturn(Sir);

impl Model for UnitReturn {
    fn name(&self) -> &str {
        "sir-unit"
    }

    fn return_arity(&self) -> usize {
        1
    }

    fn run<R: Real, C: Context<R>>(&self, ctx: &mut C) -> Result<Vec<R>> {
        self.0.run(ctx)?;
        Ok(vec![R::constant(1.0)])
    }
}

fn sir() -> Sir {
    Sir::new(&SirData::load(&data("sir_data.json")).unwrap())
}

#[test]
fn sir_reference_of_a_unit_target_is_one() {
    let density = ProgramDensity::new(UnitReturn(sir())).unwrap();
    assert_eq!(
        prior_importance_expectation(&density, 0, 20_000, 3)
            .unwrap()
            .estimate,
        1.0
    );
}

#[test]
fn sir_reference_is_self_consistent_across_seeds() {
    let model = sir();
    let a = sir_ground_truth(&model, 200_000, 1).unwrap();
    let b = sir_ground_truth(&model, 200_000, 2).unwrap();
    assert!(a.ess > 100.0 && b.ess > 100.0, "ESS {} {}", a.ess, b.ess);
    let combined = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
    assert!(
        (a.estimate - b.estimate).abs() < 3.0 * combined,
        "{} vs {} (se {combined})",
        a.estimate,
        b.estimate
    );
}

#[test]
fn radon_fixture_keeps_twenty_counties() {
    let path = data("radon.csv");
    let mut reader = csv::Reader::from_path(&path).unwrap();
    let county = reader
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == "county")
        .unwrap();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for record in reader.records() {
        *counts
            .entry(record.unwrap()[county].trim().to_owned())
            .or_default() += 1;
    }
    let expected: Vec<usize> = counts.values().take(20).copied().collect();
    let d = load_radon_csv(&path, 20).unwrap();
    assert_eq!(d.counties.len(), 20);
    assert_eq!(d.counts, expected);
    assert_eq!(d.len(), expected.iter().sum::<usize>());
    assert!(d.county.windows(2).all(|w| w[0] <= w[1]));
}
