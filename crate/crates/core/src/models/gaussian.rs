//! Posterior predictive density of a Gaussian model far from the data.

use std::f64::consts::PI;

use crate::distribution::Distribution;
use crate::error::Result;
use crate::model::{Context, Model};
use crate::real::Real;

/// `x ~ N(0, I)`, `y ~ N(x, I)` observed, target `f(x) = N(−y; x, ½I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPredictive {
    pub y: Vec<f64>,
}

impl GaussianPredictive {
    /// `y = (3.5/√D)·1`, so that `|y| = 3.5`.
    pub fn new(dim: usize) -> Self {
        GaussianPredictive {
            y: vec![3.5 / (dim as f64).sqrt(); dim],
        }
    }

    pub fn ground_truth(&self) -> f64 {
        gaussian_predictive_ground_truth(&self.y)
    }
}

/// `Π_d N(−y_d; y_d/2, 1)`: the posterior is `N(y/2, ½I)` and the target
/// kernel adds another `½I` of variance.
pub fn gaussian_predictive_ground_truth(y: &[f64]) -> f64 {
    y.iter()
        .map(|&yd| {
            let z = -yd - 0.5 * yd;
            -0.5 * z * z - 0.5 * (2.0 * PI).ln()
        })
        .sum::<f64>()
        .exp()
}

impl Model for GaussianPredictive {
    fn name(&self) -> &str {
        "gaussian"
    }

    fn return_arity(&self) -> usize {
        1
    }

    fn run<R: Real, C: Context<R>>(&self, ctx: &mut C) -> Result<Vec<R>> {
        let zeros = vec![R::constant(0.0); self.y.len()];
        let x = ctx.sample_vector(
            "x",
            &Distribution::mv_normal_isotropic(zeros, R::constant(1.0))?,
        )?;
        ctx.observe_vector(
            &Distribution::mv_normal_isotropic(x.clone(), R::constant(1.0))?,
            &self.y,
        )?;
        let target_point: Vec<R> = self.y.iter().map(|&yd| R::constant(-yd)).collect();
        let f = Distribution::mv_normal_isotropic(x, R::constant(0.5))?
            .log_density_vector(&target_point)
            .exp();
        Ok(vec![f])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::integrate;

    #[test]
    fn symmetric_case() {
        assert!((gaussian_predictive_ground_truth(&[0.0]) - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn one_dimensional_against_quadrature() {
        let y = 2.0;
        let expected = (-4.5f64).exp() / (2.0 * PI).sqrt();
        assert!((gaussian_predictive_ground_truth(&[y]) - expected).abs() < 1e-15);
        let normal =
            |x: f64, m: f64, v: f64| (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt();
        let gamma = |x: f64| normal(x, 0.0, 1.0) * normal(y, x, 1.0);
        let num = integrate(
            |x| gamma(x) * normal(-y, x, 0.5),
            f64::NEG_INFINITY,
            f64::INFINITY,
            1e-14,
        );
        let den = integrate(gamma, f64::NEG_INFINITY, f64::INFINITY, 1e-14);
        assert!((num / den / expected - 1.0).abs() < 1e-8);
    }
}
