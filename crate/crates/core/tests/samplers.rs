use expecto_core::inference::{leapfrog, mcmc_baseline, McmcConfig, Target, TransitionKernel};
use expecto_core::models::Conjugate;
use expecto_core::{Context, Distribution, Model, ProgramDensity, Real, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};

struct StdNormal;

impl Target for StdNormal {
    fn log_density(&self, x: &[f64]) -> Result<f64> {
        Ok(-0.5 * x.iter().map(|v| v * v).sum::<f64>())
    }

    fn log_density_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.log_density(x)?, x.iter().map(|v| -v).collect()))
    }
}

fn mean_energy_error(step: f64, rng: &mut ChaCha8Rng) -> f64 {
    let steps = (1.0 / step).round() as usize;
    let trials = 2000;
    (0..trials)
        .map(|_| {
            let x: f64 = StandardNormal.sample(rng);
            let p: f64 = StandardNormal.sample(rng);
            let end = leapfrog(&StdNormal, &[x], &[p], &[-x], step, steps).unwrap();
            let h0 = 0.5 * (x * x + p * p);
            let h1 = -end.log_density + 0.5 * end.momentum[0] * end.momentum[0];
            (h1 - h0).abs()
        })
        .sum::<f64>()
        / trials as f64
}

#[test]
fn halving_the_step_quarters_the_energy_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let ratio = mean_energy_error(0.2, &mut rng) / mean_energy_error(0.1, &mut rng);
    assert!((ratio / 4.0 - 1.0).abs() < 0.3, "ratio {ratio}");
}

#[derive(Clone)]
struct ConstantReturn;

impl Model for ConstantReturn {
    fn name(&self) -> &str {
        "constant"
    }

    fn return_arity(&self) -> usize {
        1
    }

    fn run<R: Real, C: Context<R>>(&self, ctx: &mut C) -> Result<Vec<R>> {
        let x = ctx.sample(
            "x",
            &Distribution::normal(R::constant(0.0), R::constant(1.0))?,
        )?;
        ctx.observe(&Distribution::normal(x, R::constant(1.0))?, 0.3)?;
        Ok(vec![R::constant(3.25)])
    }
}

fn config(kernel: TransitionKernel, chains: usize, kept: usize) -> McmcConfig {
    McmcConfig {
        kernel,
        chains,
        samples_per_chain: kept + 1000,
        burn_in: 1000,
    }
}

#[test]
fn constant_return_is_recovered_exactly() {
    let density = ProgramDensity::new(ConstantReturn).unwrap();
    let r = mcmc_baseline(
        &density,
        &config(TransitionKernel::mh(1.0, 1).unwrap(), 4, 500),
        0,
    )
    .unwrap();
    assert_eq!(r.estimate(0), 3.25);
}

#[test]
fn posterior_mean_within_three_standard_errors() {
    let model = Conjugate::mean();
    let density = ProgramDensity::new(model.clone()).unwrap();
    let chains = 40;
    let r = mcmc_baseline(
        &density,
        &config(TransitionKernel::hmc(0.1, 10, 1).unwrap(), chains, 2000),
        4,
    )
    .unwrap();
    let chain_means: Vec<f64> = (0..chains)
        .map(|c| {
            let xs: Vec<f64> = r
                .returns
                .iter()
                .skip(c)
                .step_by(chains)
                .map(|v| v[0])
                .collect();
            xs.iter().sum::<f64>() / xs.len() as f64
        })
        .collect();
    let n = chains as f64;
    let mean = chain_means.iter().sum::<f64>() / n;
    let se = (chain_means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    assert!((r.estimate(0) - mean).abs() < 1e-12);
    assert!(
        (mean - model.posterior_mean()).abs() < 3.0 * se,
        "mean {mean}, se {se}"
    );
}

#[test]
fn posterior_third_moment_at_a_million_samples() {
    let density = ProgramDensity::new(Conjugate::cube()).unwrap();
    let r = mcmc_baseline(
        &density,
        &config(TransitionKernel::mh(1.0, 1).unwrap(), 100, 10_000),
        8,
    )
    .unwrap();
    assert_eq!(r.returns.len(), 1_000_000);
    assert!(
        (r.estimate(0) / 2.5 - 1.0).abs() < 0.05,
        "{}",
        r.estimate(0)
    );
    assert!(r.acceptance_rate > 0.2 && r.acceptance_rate < 0.9);
}
