//! Distributions used at sample and observe sites.
//!
//! Parameters that may depend on latent variables (normal means and scales,
//! the negative-binomial mean) are generic over [`Real`]; the rest are plain
//! constants. Scales are standard deviations except for
//! [`Distribution::MvNormalIsotropic`], which carries a variance.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_distr::{Distribution as _, Gamma, Poisson, StandardNormal};
use statrs::function::{erf, gamma::ln_gamma};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::trace::Value;
use crate::transform::ConstraintTransform;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Support {
    RealLine,
    HalfLine { lower: f64 },
    Interval { lower: f64, upper: f64 },
    NonNegativeIntegers,
}

impl Support {
    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Support::RealLine => x.is_finite(),
            Support::HalfLine { lower } => x >= lower && x < f64::INFINITY,
            Support::Interval { lower, upper } => x >= lower && x <= upper,
            Support::NonNegativeIntegers => x >= 0.0 && x.fract() == 0.0 && x.is_finite(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Distribution<R = f64> {
    Normal {
        mean: R,
        sd: R,
    },
    MvNormalIsotropic {
        mean: Vec<R>,
        variance: R,
    },
    TruncatedNormal {
        mean: f64,
        sd: f64,
        lower: f64,
        upper: f64,
        log_mass: f64,
    },
    NegativeBinomial {
        mean: R,
        dispersion: f64,
    },
    HalfCauchy {
        scale: f64,
    },
    Uniform {
        lower: f64,
        upper: f64,
    },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be finite and > 0, got {v}"
        )))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be finite, got {v}"
        )))
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// `ln(Φ(b) - Φ(a))` for `a < b`, evaluated on the side of the mode that avoids cancellation.
fn ln_normal_mass(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        let upper = |z: f64| 0.5 * erf::erfc(z / std::f64::consts::SQRT_2);
        (upper(a) - upper(b)).ln()
    } else {
        (normal_cdf(b) - normal_cdf(a)).ln()
    }
}

impl<R: Real> Distribution<R> {
    pub fn normal(mean: R, sd: R) -> Result<Self> {
        finite("normal mean", mean.value())?;
        positive("normal sd", sd.value())?;
        Ok(Distribution::Normal { mean, sd })
    }

    pub fn mv_normal_isotropic(mean: Vec<R>, variance: R) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::InvalidParameter(
                "multivariate normal needs dimension ≥ 1".into(),
            ));
        }
        for m in &mean {
            finite("multivariate normal mean", m.value())?;
        }
        positive("multivariate normal variance", variance.value())?;
        Ok(Distribution::MvNormalIsotropic { mean, variance })
    }

    pub fn truncated_normal(mean: f64, sd: f64, lower: f64, upper: f64) -> Result<Self> {
        finite("truncated normal mean", mean)?;
        positive("truncated normal sd", sd)?;
        if !(lower < upper) || lower.is_nan() || upper.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "truncation bounds [{lower}, {upper}] are empty"
            )));
        }
        let log_mass = ln_normal_mass((lower - mean) / sd, (upper - mean) / sd);
        if !log_mass.is_finite() {
            return Err(Error::InvalidParameter(
                "truncation interval has no normal mass".into(),
            ));
        }
        Ok(Distribution::TruncatedNormal {
            mean,
            sd,
            lower,
            upper,
            log_mass,
        })
    }

    pub fn negative_binomial(mean: R, dispersion: f64) -> Result<Self> {
        positive("negative binomial mean", mean.value())?;
        positive("negative binomial dispersion", dispersion)?;
        Ok(Distribution::NegativeBinomial { mean, dispersion })
    }

    pub fn half_cauchy(scale: f64) -> Result<Self> {
        positive("half-Cauchy scale", scale)?;
        Ok(Distribution::HalfCauchy { scale })
    }

    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        finite("uniform lower", lower)?;
        finite("uniform upper", upper)?;
        if lower >= upper {
            return Err(Error::InvalidParameter(format!(
                "uniform bounds [{lower}, {upper}] are empty"
            )));
        }
        Ok(Distribution::Uniform { lower, upper })
    }

    pub fn support(&self) -> Support {
        match *self {
            Distribution::Normal { .. } | Distribution::MvNormalIsotropic { .. } => {
                Support::RealLine
            }
            Distribution::TruncatedNormal { lower, upper, .. } if upper == f64::INFINITY => {
                if lower == f64::NEG_INFINITY {
                    Support::RealLine
                } else {
                    Support::HalfLine { lower }
                }
            }
            Distribution::TruncatedNormal { lower, upper, .. } => {
                Support::Interval { lower, upper }
            }
            Distribution::NegativeBinomial { .. } => Support::NonNegativeIntegers,
            Distribution::HalfCauchy { .. } => Support::HalfLine { lower: 0.0 },
            Distribution::Uniform { lower, upper } => Support::Interval { lower, upper },
        }
    }

    /// Number of scalar coordinates in one draw.
    pub fn dimension(&self) -> usize {
        match self {
            Distribution::MvNormalIsotropic { mean, .. } => mean.len(),
            _ => 1,
        }
    }

    pub fn is_multivariate(&self) -> bool {
        matches!(self, Distribution::MvNormalIsotropic { .. })
    }

    /// Map from this distribution's support to the real line, for latent sites.
    pub fn transform(&self) -> Result<ConstraintTransform> {
        match self.support() {
            Support::RealLine => Ok(ConstraintTransform::Identity),
            Support::HalfLine { lower } => Ok(ConstraintTransform::Log { lower }),
            Support::Interval { lower, upper } => {
                Ok(ConstraintTransform::LogitAffine { lower, upper })
            }
            Support::NonNegativeIntegers => Err(Error::Unsupported(
                "discrete latent variables cannot be sampled".into(),
            )),
        }
    }

    /// Log-density of a scalar; `-∞` outside the support.
    pub fn log_density(&self, x: &R) -> R {
        let xv = x.value();
        if !self.support().contains(xv) {
            return R::constant(f64::NEG_INFINITY);
        }
        match self {
            Distribution::Normal { mean, sd } => {
                let s = sd.value();
                let z = (xv - mean.value()) / s;
                let lp = -0.5 * z * z - s.ln() - LN_SQRT_2PI;
                R::combine(lp, &[(x, -z / s), (mean, z / s), (sd, (z * z - 1.0) / s)])
            }
            Distribution::MvNormalIsotropic { .. } => R::constant(f64::NAN),
            Distribution::TruncatedNormal {
                mean, sd, log_mass, ..
            } => {
                let z = (xv - mean) / sd;
                x.lift(-0.5 * z * z - sd.ln() - LN_SQRT_2PI - log_mass, -z / sd)
            }
            Distribution::NegativeBinomial { mean, dispersion } => {
                let (mu, phi) = (mean.value(), *dispersion);
                let lp = ln_gamma(xv + phi) - ln_gamma(phi) - ln_gamma(xv + 1.0)
                    + phi * (phi / (phi + mu)).ln()
                    + if xv > 0.0 {
                        xv * (mu / (phi + mu)).ln()
                    } else {
                        0.0
                    };
                mean.lift(lp, xv / mu - (phi + xv) / (phi + mu))
            }
            Distribution::HalfCauchy { scale } => {
                let r = xv / scale;
                x.lift(
                    LN_2 - (PI * scale).ln() - r.mul_add(r, 1.0).ln(),
                    -2.0 * xv / (scale * scale + xv * xv),
                )
            }
            Distribution::Uniform { lower, upper } => R::constant(-(upper - lower).ln()),
        }
    }

    /// Log-density of a vector draw; scalar distributions accept length-1 slices.
    pub fn log_density_vector(&self, x: &[R]) -> R {
        match self {
            Distribution::MvNormalIsotropic { mean, variance } => {
                if x.len() != mean.len() {
                    return R::constant(f64::NAN);
                }
                let v = variance.value();
                let mut sq = 0.0;
                let mut terms: Vec<(&R, f64)> = Vec::with_capacity(2 * x.len() + 1);
                for (xi, mi) in x.iter().zip(mean) {
                    let d = xi.value() - mi.value();
                    sq += d * d;
                    terms.push((xi, -d / v));
                    terms.push((mi, d / v));
                }
                let n = x.len() as f64;
                let lp = -0.5 * n * (2.0 * PI * v).ln() - 0.5 * sq / v;
                terms.push((variance, -0.5 * n / v + 0.5 * sq / (v * v)));
                if !lp.is_finite() {
                    return R::constant(f64::NEG_INFINITY);
                }
                R::combine(lp, &terms)
            }
            _ if x.len() == 1 => self.log_density(&x[0]),
            _ => R::constant(f64::NAN),
        }
    }
}

impl Distribution<f64> {
    pub fn sample<G: Rng + ?Sized>(&self, rng: &mut G) -> Value {
        match self {
            Distribution::Normal { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                Value::Scalar(mean + sd * z)
            }
            Distribution::MvNormalIsotropic { mean, variance } => {
                let s = variance.sqrt();
                Value::Vector(
                    mean.iter()
                        .map(|m| {
                            let z: f64 = rng.sample(StandardNormal);
                            m + s * z
                        })
                        .collect(),
                )
            }
            Distribution::TruncatedNormal {
                mean,
                sd,
                lower,
                upper,
                log_mass,
            } => Value::Scalar(sample_truncated_normal(
                rng, *mean, *sd, *lower, *upper, *log_mass,
            )),
            Distribution::NegativeBinomial { mean, dispersion } => {
                // Gamma–Poisson mixture: λ ~ Gamma(φ, μ/φ), y ~ Poisson(λ).
                let rate = Gamma::new(*dispersion, mean / dispersion)
                    .expect("validated parameters")
                    .sample(rng);
                let y = if rate > 0.0 {
                    Poisson::new(rate).map(|p| p.sample(rng)).unwrap_or(0.0)
                } else {
                    0.0
                };
                Value::Scalar(y)
            }
            Distribution::HalfCauchy { scale } => {
                let u: f64 = rng.random();
                Value::Scalar(scale * (0.5 * PI * u).tan())
            }
            Distribution::Uniform { lower, upper } => {
                let u: f64 = rng.random();
                Value::Scalar(lower + (upper - lower) * u)
            }
        }
    }

    /// Log-density of a trace value of matching shape.
    pub fn log_density_value(&self, value: &Value) -> f64 {
        match value {
            Value::Scalar(x) if !self.is_multivariate() => self.log_density(x),
            Value::Vector(v) if self.is_multivariate() => self.log_density_vector(v),
            _ => f64::NAN,
        }
    }
}

fn sample_truncated_normal<G: Rng + ?Sized>(
    rng: &mut G,
    mean: f64,
    sd: f64,
    lower: f64,
    upper: f64,
    log_mass: f64,
) -> f64 {
    if log_mass > (0.25f64).ln() {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let x = mean + sd * z;
            if x >= lower && x <= upper {
                return x;
            }
        }
    }
    let (a, b) = (
        normal_cdf((lower - mean) / sd),
        normal_cdf((upper - mean) / sd),
    );
    let u: f64 = rng.random();
    let p = (a + u * (b - a)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
    let z = -std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * p);
    (mean + sd * z).clamp(lower, upper)
}
