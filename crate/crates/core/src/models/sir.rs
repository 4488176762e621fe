//! SIR epidemic model with negative-binomial case counts and a cost target.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::ProgramDensity;
use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::inference::{prior_importance_expectation, ImportanceExpectation};
use crate::model::{Context, Model};
use crate::real::Real;
use crate::trace::Value;

pub const POPULATION: f64 = 10_000.0;
pub const RECOVERY_RATE: f64 = 0.25;
pub const DAYS: usize = 15;
pub const STEP: f64 = 0.1;
pub const OBSERVATION_DISPERSION: f64 = 0.5;
/// Smallest daily incidence passed to the observation model.
pub const INCIDENCE_FLOOR: f64 = 1e-6;

/// Compartment sizes `(S, I, R)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SirState<R> {
    pub s: R,
    pub i: R,
    pub r: R,
}

/// Solution at whole days.
#[derive(Clone, Debug, PartialEq)]
pub struct SirSolution<R> {
    /// States at days `0..=days`.
    pub states: Vec<SirState<R>>,
    /// `max(S(t−1) − S(t), 1e−6)` for days `1..=days`.
    pub new_infections: Vec<R>,
}

fn derivative<R: Real>(beta: &R, gamma: f64, n: f64, s: &R, i: &R) -> [R; 3] {
    let infection = beta.clone() * s.clone() * i.clone() / n;
    let recovery = i.clone() * gamma;
    [-infection.clone(), infection - recovery.clone(), recovery]
}

/// Classical fourth-order Runge–Kutta on the SIR equations with fixed step `h`.
///
/// Fails if a compartment becomes non-finite or negative beyond `1e−6·N`.
pub fn solve_sir_ode<R: Real>(
    beta: &R,
    gamma: f64,
    initial: SirState<R>,
    days: usize,
    h: f64,
) -> Result<SirSolution<R>> {
    if beta.value() < 0.0 || gamma < 0.0 {
        return Err(Error::InvalidParameter(
            "SIR rates must be non-negative".into(),
        ));
    }
    let n = initial.s.value() + initial.i.value() + initial.r.value();
    let substeps = (1.0 / h).round() as usize;
    if substeps == 0 || ((substeps as f64) * h - 1.0).abs() > 1e-9 {
        return Err(Error::Configuration(format!(
            "step {h} must divide one day"
        )));
    }
    let tolerance = -1e-6 * n;
    let mut state = [initial.s, initial.i, initial.r];
    let mut states = vec![SirState {
        s: state[0].clone(),
        i: state[1].clone(),
        r: state[2].clone(),
    }];
    let mut new_infections = Vec::with_capacity(days);
    for day in 1..=days {
        let s_before = state[0].clone();
        for _ in 0..substeps {
            let k1 = derivative(beta, gamma, n, &state[0], &state[1]);
            let mid = |k: &[R; 3], c: f64| -> [R; 3] {
                [
                    state[0].clone() + k[0].clone() * c,
                    state[1].clone() + k[1].clone() * c,
                    state[2].clone() + k[2].clone() * c,
                ]
            };
            let y2 = mid(&k1, 0.5 * h);
            let k2 = derivative(beta, gamma, n, &y2[0], &y2[1]);
            let y3 = mid(&k2, 0.5 * h);
            let k3 = derivative(beta, gamma, n, &y3[0], &y3[1]);
            let y4 = mid(&k3, h);
            let k4 = derivative(beta, gamma, n, &y4[0], &y4[1]);
            for c in 0..3 {
                let incr = (k1[c].clone() + (k2[c].clone() + k3[c].clone()) * 2.0 + k4[c].clone())
                    * (h / 6.0);
                state[c] = state[c].clone() + incr;
            }
        }
        if state
            .iter()
            .any(|x| !x.value().is_finite() || x.value() < tolerance)
        {
            return Err(Error::SolverFailure(format!(
                "compartment left its valid range on day {day}"
            )));
        }
        new_infections.push((s_before - state[0].clone()).floor_at(INCIDENCE_FLOOR));
        states.push(SirState {
            s: state[0].clone(),
            i: state[1].clone(),
            r: state[2].clone(),
        });
    }
    Ok(SirSolution {
        states,
        new_infections,
    })
}

/// `10¹²·logistic(10·R₀ − 30)`.
pub fn cost<R: Real>(r0: &R) -> R {
    (r0.clone() * 10.0 - 30.0).logistic() * 1e12
}

/// Synthetic case counts and the parameters that generated them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SirData {
    pub seed: u64,
    pub phi_gen: f64,
    pub beta: f64,
    pub i0: f64,
    pub y: Vec<u64>,
}

impl SirData {
    pub fn load(path: &Path) -> Result<Self> {
        let data: SirData =
            serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        if data.y.len() != DAYS {
            return Err(Error::Data(format!(
                "expected {DAYS} daily counts, found {}",
                data.y.len()
            )));
        }
        Ok(data)
    }
}

/// Draws counts from the model at `β = 0.25`, `I₀ = 100`, dispersion 10.
pub fn generate_sir_data(seed: u64) -> Result<SirData> {
    let (beta, i0, phi_gen) = (0.25, 100.0, 10.0);
    let initial = SirState {
        s: POPULATION - i0,
        i: i0,
        r: 0.0,
    };
    let solution = solve_sir_ode(&beta, RECOVERY_RATE, initial, DAYS, STEP)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = solution
        .new_infections
        .iter()
        .map(
            |&mu| match Distribution::negative_binomial(mu, phi_gen)?.sample(&mut rng) {
                Value::Scalar(v) => Ok(v as u64),
                Value::Vector(_) => unreachable!("negative binomial is scalar"),
            },
        )
        .collect::<Result<Vec<_>>>()?;
    Ok(SirData {
        seed,
        phi_gen,
        beta,
        i0,
        y,
    })
}

/// Bayesian SIR model; returns the cost of the basic reproduction number.
#[derive(Clone, Debug, PartialEq)]
pub struct Sir {
    pub y: Vec<f64>,
}

impl Sir {
    pub fn new(data: &SirData) -> Self {
        Sir {
            y: data.y.iter().map(|&v| v as f64).collect(),
        }
    }
}

impl Model for Sir {
    fn name(&self) -> &str {
        "sir"
    }

    fn return_arity(&self) -> usize {
        1
    }

    fn run<R: Real, C: Context<R>>(&self, ctx: &mut C) -> Result<Vec<R>> {
        let beta = ctx.sample(
            "beta",
            &Distribution::truncated_normal(2.0, 1.5, 0.0, f64::INFINITY)?,
        )?;
        let i0 = ctx.sample(
            "i0",
            &Distribution::truncated_normal(100.0, 100.0, 0.0, POPULATION)?,
        )?;
        let returns = vec![cost(&(beta.clone() / RECOVERY_RATE))];
        if ctx.is_prior_only() {
            return Ok(returns);
        }
        let initial = SirState {
            s: -i0.clone() + POPULATION,
            i: i0,
            r: R::constant(0.0),
        };
        match solve_sir_ode(&beta, RECOVERY_RATE, initial, self.y.len(), STEP) {
            Ok(solution) => {
                for (mu, &y) in solution.new_infections.into_iter().zip(&self.y) {
                    ctx.observe(
                        &Distribution::negative_binomial(mu, OBSERVATION_DISPERSION)?,
                        y,
                    )?;
                }
            }
            Err(Error::SolverFailure(_)) => ctx.factor(R::constant(f64::NEG_INFINITY))?,
            Err(e) => return Err(e),
        }
        Ok(returns)
    }
}

/// Reference value of the expected cost by prior importance sampling with `k` draws.
pub fn sir_ground_truth(model: &Sir, k: usize, seed: u64) -> Result<ImportanceExpectation> {
    prior_importance_expectation(&ProgramDensity::new(model.clone())?, 0, k, seed)
}
