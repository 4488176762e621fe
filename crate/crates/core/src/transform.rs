//! Bijections between constrained supports and the real line.
//!
//! `forward` maps a constrained value to unconstrained space, `inverse` maps
//! back. Kernels work in unconstrained space, so a density evaluated there is
//! the constrained density at `inverse(u)` plus `log_jacobian(u)`.

use crate::real::{softplus, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConstraintTransform {
    Identity,
    /// Support `(lower, ∞)`: `x = lower + exp(u)`.
    Log {
        lower: f64,
    },
    /// Support `(lower, upper)`: `x = lower + (upper - lower)·logistic(u)`.
    LogitAffine {
        lower: f64,
        upper: f64,
    },
}

impl ConstraintTransform {
    pub fn forward(&self, x: f64) -> f64 {
        match *self {
            ConstraintTransform::Identity => x,
            ConstraintTransform::Log { lower } => (x - lower).ln(),
            ConstraintTransform::LogitAffine { lower, upper } => {
                let p = (x - lower) / (upper - lower);
                p.ln() - (-p).ln_1p()
            }
        }
    }

    pub fn inverse<R: Real>(&self, u: &R) -> R {
        match *self {
            ConstraintTransform::Identity => u.clone(),
            ConstraintTransform::Log { lower } => u.exp() + lower,
            ConstraintTransform::LogitAffine { lower, upper } => {
                u.logistic() * (upper - lower) + lower
            }
        }
    }

    /// `ln |d inverse(u) / du|`.
    pub fn log_jacobian<R: Real>(&self, u: &R) -> R {
        match *self {
            ConstraintTransform::Identity => R::constant(0.0),
            ConstraintTransform::Log { .. } => u.clone(),
            ConstraintTransform::LogitAffine { lower, upper } => {
                let v = u.value();
                let lj = (upper - lower).ln() - softplus(v) - softplus(-v);
                u.lift(lj, 1.0 - 2.0 * crate::real::logistic(v))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::Dual;

    const TRANSFORMS: [ConstraintTransform; 3] = [
        ConstraintTransform::Identity,
        ConstraintTransform::Log { lower: 0.0 },
        ConstraintTransform::LogitAffine {
            lower: 0.0,
            upper: 10_000.0,
        },
    ];

    #[test]
    fn forward_inverse_round_trip() {
        for t in TRANSFORMS {
            for &x in &[1e-3, 0.5, 3.0, 250.0, 9_999.0] {
                let back: f64 = t.inverse(&t.forward(x));
                assert!(
                    (back - x).abs() <= 1e-10 * x.abs().max(1.0),
                    "{t:?} at {x}: {back}"
                );
            }
        }
    }

    #[test]
    fn log_jacobian_derivative_matches_finite_difference() {
        for t in TRANSFORMS {
            for &u in &[-3.0, -0.2, 0.0, 1.7] {
                let d = t.log_jacobian(&Dual::variable(0, u)).gradient(1)[0];
                let h = 1e-6;
                let fd = (t.log_jacobian(&(u + h)) - t.log_jacobian(&(u - h))) / (2.0 * h);
                assert!((d - fd).abs() < 1e-6, "{t:?} at {u}: {d} vs {fd}");
            }
        }
    }
}
