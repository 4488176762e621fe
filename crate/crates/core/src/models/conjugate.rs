//! One-dimensional conjugate Gaussian model with polynomial targets.

use std::f64::consts::PI;

use crate::distribution::Distribution;
use crate::error::Result;
use crate::model::{Context, Model};
use crate::real::Real;

/// `x ~ N(0, 1)`, optional constant factor, `y ~ N(x, 1)` observed; returns `x^p` for each power p.
#[derive(Clone, Debug, PartialEq)]
pub struct Conjugate {
    pub observation: f64,
    pub log_factor: f64,
    pub powers: Vec<i32>,
}

impl Conjugate {
    pub fn new(observation: f64, log_factor: f64, powers: Vec<i32>) -> Self {
        Conjugate {
            observation,
            log_factor,
            powers,
        }
    }

    /// Posterior mean target `f(x) = x` with `y = 2`.
    pub fn mean() -> Self {
        Conjugate::new(2.0, 0.0, vec![1])
    }

    /// The running example with a constant factor of 0.1.
    pub fn with_factor() -> Self {
        Conjugate::new(2.0, 0.1, vec![1])
    }

    /// Third moment target `f(x) = x³` with `y = 2`.
    pub fn cube() -> Self {
        Conjugate::new(2.0, 0.0, vec![3])
    }

    /// Three expectations at once: `x`, `x²`, `x³`.
    pub fn moments() -> Self {
        Conjugate::new(2.0, 0.0, vec![1, 2, 3])
    }

    pub fn posterior_mean(&self) -> f64 {
        self.observation / 2.0
    }

    pub fn posterior_variance(&self) -> f64 {
        0.5
    }

    /// `E[x^p | y]` for `p ≤ 4`.
    pub fn posterior_moment(&self, p: i32) -> f64 {
        let (m, v) = (self.posterior_mean(), self.posterior_variance());
        match p {
            0 => 1.0,
            1 => m,
            2 => m * m + v,
            3 => m.powi(3) + 3.0 * m * v,
            4 => m.powi(4) + 6.0 * m * m * v + 3.0 * v * v,
            _ => panic!("moments above 4 are not tabulated"),
        }
    }

    /// Normalizer of the unnormalized posterior: `exp(factor)·N(y; 0, 2)`.
    pub fn evidence(&self) -> f64 {
        let y = self.observation;
        self.log_factor.exp() * (-0.25 * y * y).exp() / (4.0 * PI).sqrt()
    }
}

impl Model for Conjugate {
    fn name(&self) -> &str {
        "conjugate1d"
    }

    fn return_arity(&self) -> usize {
        self.powers.len()
    }

    fn run<R: Real, C: Context<R>>(&self, ctx: &mut C) -> Result<Vec<R>> {
        let x = ctx.sample(
            "x",
            &Distribution::normal(R::constant(0.0), R::constant(1.0))?,
        )?;
        if self.log_factor != 0.0 {
            ctx.factor(R::constant(self.log_factor))?;
        }
        ctx.observe(
            &Distribution::normal(x.clone(), R::constant(1.0))?,
            self.observation,
        )?;
        Ok(self.powers.iter().map(|&p| x.powi(p)).collect())
    }
}
