//! Banana-shaped posterior with a signed target concentrated in its tail.

use crate::distribution::Distribution;
use crate::error::Result;
use crate::model::{Context, Model};
use crate::real::Real;

/// Log of the banana-shaped factor.
pub fn banana_log_density<R: Real>(x1: &R, x2: &R) -> R {
    let x1_sq = x1.square();
    let bend = x2.clone() / 2.0 + (x1_sq.clone() - 100.0) * 0.03;
    (x1_sq * 0.03 + bend.square()) * -0.5
}

/// `x₁, x₂ ~ N(0, 4²)` times the banana factor; target `logistic(−50(x₂+5))·(x₁−2)³`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Banana;

impl Model for Banana {
    fn name(&self) -> &str {
        "banana"
    }

    fn return_arity(&self) -> usize {
        1
    }

    fn run<R: Real, C: Context<R>>(&self, ctx: &mut C) -> Result<Vec<R>> {
        let prior = Distribution::normal(R::constant(0.0), R::constant(4.0))?;
        let x1 = ctx.sample("x1", &prior)?;
        let x2 = ctx.sample("x2", &prior)?;
        ctx.factor(banana_log_density(&x1, &x2))?;
        let gate = ((x2 + 5.0) * -50.0).logistic();
        Ok(vec![gate * (x1 - 2.0).powi(3)])
    }
}
