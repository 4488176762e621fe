//! Model programs and the interpreter contexts that execute them.
//!
//! A [`Model`] is a procedure over a [`Context`]. The same procedure is run
//! by different contexts: drawing fresh values, replaying a recorded trace,
//! scoring only the prior, or evaluating in unconstrained coordinates (see
//! [`crate::density`]).

use rand::RngCore;

use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::trace::{Trace, TraceEntry, Value};
use crate::transform::ConstraintTransform;

/// Interface a model uses to declare random draws, observations and factors.
pub trait Context<R: Real> {
    /// Scalar random variable at `address`.
    fn sample(&mut self, address: &str, dist: &Distribution<R>) -> Result<R>;

    /// Vector-valued random variable at `address`.
    fn sample_vector(&mut self, address: &str, dist: &Distribution<R>) -> Result<Vec<R>>;

    fn observe(&mut self, dist: &Distribution<R>, datum: f64) -> Result<()>;

    fn observe_vector(&mut self, dist: &Distribution<R>, data: &[f64]) -> Result<()>;

    /// Adds `log_p` to the log-density. Accepts finite values and `-∞`.
    fn factor(&mut self, log_p: R) -> Result<()>;

    /// True when only the prior is being scored; observations and factors are ignored.
    fn is_prior_only(&self) -> bool;
}

/// A probabilistic program whose return values define target functions.
///
/// `run` must be pure: the same sampled values always give the same
/// log-density and returns.
pub trait Model: Send + Sync {
    fn name(&self) -> &str;

    fn return_arity(&self) -> usize;

    fn run<R: Real, C: Context<R>>(&self, ctx: &mut C) -> Result<Vec<R>>;
}

impl<M: Model> Model for &M {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn return_arity(&self) -> usize {
        (**self).return_arity()
    }

    fn run<R: Real, C: Context<R>>(&self, ctx: &mut C) -> Result<Vec<R>> {
        (**self).run(ctx)
    }
}

pub(crate) fn check_factor(log_p: f64) -> Result<()> {
    if log_p.is_nan() || log_p == f64::INFINITY {
        Err(Error::InvalidFactor(format!(
            "factor must be finite or -inf, got {log_p}"
        )))
    } else {
        Ok(())
    }
}

pub(crate) fn check_returns(model_name: &str, arity: usize, returns: &[f64]) -> Result<()> {
    if returns.len() != arity {
        return Err(Error::InvalidReturn(format!(
            "{model_name} declared {arity} return values but produced {}",
            returns.len()
        )));
    }
    if let Some(bad) = returns.iter().find(|r| !r.is_finite()) {
        return Err(Error::InvalidReturn(format!(
            "{model_name} returned non-finite value {bad}"
        )));
    }
    Ok(())
}

/// Execution mode for [`run_model`].
pub enum Mode<'a> {
    /// Draw each variable from its prior.
    Sample(&'a mut dyn RngCore),
    /// Score the values of an existing trace.
    Replay(&'a Trace),
    /// Score only the prior terms of an existing trace.
    PriorOnly(&'a Trace),
}

/// Layout information for one sample site, discovered while recording.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct SiteRecord {
    pub address: String,
    pub dim: usize,
    pub vector: bool,
    pub transform: Option<ConstraintTransform>,
}

enum Source<'a> {
    Sample(&'a mut dyn RngCore),
    Replay(&'a Trace),
}

/// Context that records a [`Trace`] in constrained space.
pub(crate) struct Recorder<'a> {
    source: Source<'a>,
    prior_only: bool,
    trace: Trace,
    sites: Vec<SiteRecord>,
}

impl<'a> Recorder<'a> {
    pub fn sampling(rng: &'a mut dyn RngCore, prior_only: bool) -> Self {
        Recorder {
            source: Source::Sample(rng),
            prior_only,
            trace: Trace::default(),
            sites: Vec::new(),
        }
    }

    pub fn replaying(trace: &'a Trace, prior_only: bool) -> Self {
        Recorder {
            source: Source::Replay(trace),
            prior_only,
            trace: Trace::default(),
            sites: Vec::new(),
        }
    }

    fn record(&mut self, address: &str, dist: &Distribution<f64>) -> Result<Value> {
        if self.trace.entries.iter().any(|e| e.address == address) {
            return Err(Error::Configuration(format!(
                "address {address:?} sampled twice"
            )));
        }
        let value = match &mut self.source {
            Source::Sample(rng) => dist.sample(&mut **rng),
            Source::Replay(trace) => {
                let v = trace.get(address).ok_or_else(|| {
                    Error::TraceMismatch(format!("no value for address {address:?}"))
                })?;
                if v.len() != dist.dimension()
                    || matches!(v, Value::Vector(_)) != dist.is_multivariate()
                {
                    return Err(Error::TraceMismatch(format!(
                        "value at {address:?} has the wrong shape for its distribution"
                    )));
                }
                v.clone()
            }
        };
        let log_prior = dist.log_density_value(&value);
        self.sites.push(SiteRecord {
            address: address.to_owned(),
            dim: dist.dimension(),
            vector: dist.is_multivariate(),
            transform: dist.transform().ok(),
        });
        self.trace.entries.push(TraceEntry {
            address: address.to_owned(),
            value: value.clone(),
            log_prior,
        });
        Ok(value)
    }

    /// Finishes the run, checking returns and (in replay) that every supplied value was used.
    pub fn finish(
        mut self,
        model_name: &str,
        arity: usize,
        returns: Vec<f64>,
    ) -> Result<(Trace, Vec<SiteRecord>)> {
        check_returns(model_name, arity, &returns)?;
        if let Source::Replay(given) = &self.source {
            if let Some(extra) = given
                .entries
                .iter()
                .find(|g| self.trace.get(&g.address).is_none())
            {
                return Err(Error::TraceMismatch(format!(
                    "trace has address {:?} that the model never samples",
                    extra.address
                )));
            }
        }
        self.trace.returns = returns;
        Ok((self.trace, self.sites))
    }
}

impl Context<f64> for Recorder<'_> {
    fn sample(&mut self, address: &str, dist: &Distribution<f64>) -> Result<f64> {
        if dist.is_multivariate() {
            return Err(Error::Configuration(format!(
                "{address:?}: use sample_vector for a vector distribution"
            )));
        }
        match self.record(address, dist)? {
            Value::Scalar(x) => Ok(x),
            Value::Vector(v) => Ok(v[0]),
        }
    }

    fn sample_vector(&mut self, address: &str, dist: &Distribution<f64>) -> Result<Vec<f64>> {
        Ok(self.record(address, dist)?.as_slice().to_vec())
    }

    fn observe(&mut self, dist: &Distribution<f64>, datum: f64) -> Result<()> {
        if !self.prior_only {
            self.trace.log_likelihood += dist.log_density(&datum);
        }
        Ok(())
    }

    fn observe_vector(&mut self, dist: &Distribution<f64>, data: &[f64]) -> Result<()> {
        if !self.prior_only {
            self.trace.log_likelihood += dist.log_density_vector(data);
        }
        Ok(())
    }

    fn factor(&mut self, log_p: f64) -> Result<()> {
        check_factor(log_p)?;
        if !self.prior_only {
            self.trace.log_factors += log_p;
        }
        Ok(())
    }

    fn is_prior_only(&self) -> bool {
        self.prior_only
    }
}

/// Executes `model` and returns its trace.
///
/// In [`Mode::PriorOnly`] the likelihood and factor components are zero.
pub fn run_model<M: Model>(model: &M, mode: Mode<'_>) -> Result<Trace> {
    run_recording(model, mode).map(|(trace, _)| trace)
}

pub(crate) fn run_recording<M: Model>(
    model: &M,
    mode: Mode<'_>,
) -> Result<(Trace, Vec<SiteRecord>)> {
    let mut recorder = match mode {
        Mode::Sample(rng) => Recorder::sampling(rng, false),
        Mode::Replay(trace) => Recorder::replaying(trace, false),
        Mode::PriorOnly(trace) => Recorder::replaying(trace, true),
    };
    let returns = model.run(&mut recorder)?;
    recorder.finish(model.name(), model.return_arity(), returns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// x ~ N(0, 1); factor 0.1; y = 2 ~ N(x, 1); returns x.
    struct Figure1;

    impl Model for Figure1 {
        fn name(&self) -> &str {
            "figure1"
        }

        fn return_arity(&self) -> usize {
            1
        }

        fn run<R: Real, C: Context<R>>(&self, ctx: &mut C) -> Result<Vec<R>> {
            let x = ctx.sample(
                "x",
                &Distribution::normal(R::constant(0.0), R::constant(1.0))?,
            )?;
            ctx.factor(R::constant(0.1))?;
            ctx.observe(&Distribution::normal(x.clone(), R::constant(1.0))?, 2.0)?;
            Ok(vec![x])
        }
    }

    struct BadFactor(f64);

    impl Model for BadFactor {
        fn name(&self) -> &str {
            "bad-factor"
        }

        fn return_arity(&self) -> usize {
            0
        }

        fn run<R: Real, C: Context<R>>(&self, ctx: &mut C) -> Result<Vec<R>> {
            ctx.factor(R::constant(self.0))?;
            Ok(vec![])
        }
    }

    fn x_trace(x: f64) -> Trace {
        Trace::from_values([("x", Value::Scalar(x))])
    }

    #[test]
    fn replay_scores_every_component() {
        let t = run_model(&Figure1, Mode::Replay(&x_trace(0.0))).unwrap();
        assert!(
            (t.log_density() - (0.1 - 0.918_938_533_204_672_7 - 2.918_938_533_204_672_7)).abs()
                < 1e-12
        );
        assert!((t.log_density() - -3.7379).abs() < 1e-4);
        assert_eq!(t.returns, vec![0.0]);
    }

    #[test]
    fn prior_only_drops_likelihood_and_factors() {
        let t = run_model(&Figure1, Mode::PriorOnly(&x_trace(0.0))).unwrap();
        assert!((t.log_density() - -0.918_938_533_204_672_7).abs() < 1e-12);
        assert_eq!(t.log_likelihood, 0.0);
        assert_eq!(t.log_factors, 0.0);
    }

    #[test]
    fn replay_with_wrong_address_is_a_mismatch() {
        let t = Trace::from_values([("z", Value::Scalar(0.0))]);
        assert!(matches!(
            run_model(&Figure1, Mode::Replay(&t)),
            Err(Error::TraceMismatch(_))
        ));
    }

    #[test]
    fn sample_then_replay_is_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = run_model(&Figure1, Mode::Sample(&mut rng)).unwrap();
        let r = run_model(&Figure1, Mode::Replay(&t)).unwrap();
        assert_eq!(t, r);
    }

    #[test]
    fn infinite_factor_rules() {
        assert!(matches!(
            run_model(&BadFactor(f64::INFINITY), Mode::Replay(&Trace::default())),
            Err(Error::InvalidFactor(_))
        ));
        assert!(matches!(
            run_model(&BadFactor(f64::NAN), Mode::Replay(&Trace::default())),
            Err(Error::InvalidFactor(_))
        ));
        let t = run_model(
            &BadFactor(f64::NEG_INFINITY),
            Mode::Replay(&Trace::default()),
        )
        .unwrap();
        assert_eq!(t.log_density(), f64::NEG_INFINITY);
    }
}
