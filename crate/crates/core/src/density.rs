//! A model viewed as an unnormalized density over unconstrained coordinates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::model::{check_factor, check_returns, Context, Model, Recorder, SiteRecord};
use crate::real::{Accumulator, DenseDual, Dual, Real};
use crate::trace::{Trace, TraceEntry, Value};
use crate::transform::ConstraintTransform;

/// Position of one sample site inside the unconstrained vector θ.
#[derive(Clone, Debug, PartialEq)]
pub struct Site {
    pub address: String,
    pub offset: usize,
    pub dim: usize,
    pub vector: bool,
    pub transform: ConstraintTransform,
}

/// Log-density components at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// Prior terms plus the log-Jacobian of the constraint transforms.
    pub log_prior: f64,
    pub log_likelihood: f64,
    pub log_factors: f64,
    pub returns: Vec<f64>,
}

impl Evaluation {
    /// Likelihood plus factors: the part that annealing tempers.
    pub fn rest(&self) -> f64 {
        self.log_likelihood + self.log_factors
    }

    pub fn total(&self) -> f64 {
        self.log_prior + self.rest()
    }

    /// `log_prior + β·rest`, with `β = 0` giving exactly the prior.
    pub fn tempered(&self, beta: f64) -> f64 {
        if beta == 0.0 {
            self.log_prior
        } else {
            self.log_prior + beta * self.rest()
        }
    }
}

/// [`Evaluation`] plus the gradients of the prior and of the rest.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientEvaluation {
    pub evaluation: Evaluation,
    pub grad_prior: Vec<f64>,
    pub grad_rest: Vec<f64>,
}

impl GradientEvaluation {
    pub fn tempered_gradient(&self, beta: f64) -> Vec<f64> {
        if beta == 0.0 {
            return self.grad_prior.clone();
        }
        self.grad_prior
            .iter()
            .zip(&self.grad_rest)
            .map(|(p, r)| p + beta * r)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GradientMethod {
    /// Chain rule over per-primitive closed-form partials.
    Analytic,
    /// Central differences with step `1e-5 · max(1, |θ_i|)`.
    CentralDifference,
}

/// Number of independent sample runs used to confirm a fixed trace layout.
const REGISTRATION_RUNS: u64 = 4;

/// A model registered for inference.
#[derive(Clone, Debug)]
pub struct ProgramDensity<M> {
    model: M,
    sites: Vec<Site>,
    dim: usize,
}

impl<M: Model> ProgramDensity<M> {
    /// Runs the model a few times to discover its sample sites.
    ///
    /// Fails if the layout differs between runs or a latent variable is discrete.
    pub fn new(model: M) -> Result<Self> {
        let mut layout: Option<Vec<SiteRecord>> = None;
        for seed in 0..REGISTRATION_RUNS {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut recorder = Recorder::sampling(&mut rng, true);
            let returns = model.run(&mut recorder)?;
            let (_, sites) = recorder.finish(model.name(), model.return_arity(), returns)?;
            match &layout {
                None => layout = Some(sites),
                Some(first) if *first != sites => {
                    return Err(Error::Unsupported(format!(
                        "{}: trace layout varies between executions",
                        model.name()
                    )))
                }
                Some(_) => {}
            }
        }
        let mut offset = 0;
        let mut sites = Vec::new();
        for record in layout.unwrap_or_default() {
            let transform = record.transform.ok_or_else(|| {
                Error::Unsupported(format!(
                    "{}: discrete latent variable at {:?}",
                    model.name(),
                    record.address
                ))
            })?;
            sites.push(Site {
                address: record.address,
                offset,
                dim: record.dim,
                vector: record.vector,
                transform,
            });
            offset += record.dim;
        }
        Ok(ProgramDensity {
            model,
            sites,
            dim: offset,
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    /// Length of the unconstrained vector θ.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Draws constrained values from the prior and returns them as θ.
    pub fn draw_prior<G: Rng>(&self, rng: &mut G) -> Result<Vec<f64>> {
        loop {
            let mut recorder = Recorder::sampling(rng, true);
            let returns = self.model.run(&mut recorder)?;
            let (trace, _) =
                recorder.finish(self.model.name(), self.model.return_arity(), returns)?;
            let theta = self.to_unconstrained(&trace)?;
            // A draw landing exactly on a support boundary has no finite preimage.
            if theta.iter().all(|u| u.is_finite()) {
                return Ok(theta);
            }
        }
    }

    /// Maps the sampled values of a trace to θ.
    pub fn to_unconstrained(&self, trace: &Trace) -> Result<Vec<f64>> {
        let mut theta = Vec::with_capacity(self.dim);
        for site in &self.sites {
            let value = trace.get(&site.address).ok_or_else(|| {
                Error::TraceMismatch(format!("no value for address {:?}", site.address))
            })?;
            if value.len() != site.dim {
                return Err(Error::TraceMismatch(format!(
                    "value at {:?} has the wrong length",
                    site.address
                )));
            }
            theta.extend(value.as_slice().iter().map(|&x| site.transform.forward(x)));
        }
        Ok(theta)
    }

    /// Maps θ back to a trace of constrained values (log terms left at zero).
    pub fn to_constrained(&self, theta: &[f64]) -> Result<Trace> {
        self.check_dim(theta)?;
        let entries = self
            .sites
            .iter()
            .map(|site| {
                let xs: Vec<f64> = theta[site.offset..site.offset + site.dim]
                    .iter()
                    .map(|u| site.transform.inverse(u))
                    .collect();
                let value = if site.vector {
                    Value::Vector(xs)
                } else {
                    Value::Scalar(xs[0])
                };
                TraceEntry {
                    address: site.address.clone(),
                    value,
                    log_prior: 0.0,
                }
            })
            .collect();
        Ok(Trace {
            entries,
            ..Trace::default()
        })
    }

    fn check_dim(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim {
            return Err(Error::TraceMismatch(format!(
                "θ has length {}, model needs {}",
                theta.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Log-density components at θ, including the transform log-Jacobian in the prior.
    pub fn evaluate(&self, theta: &[f64]) -> Result<Evaluation> {
        self.check_dim(theta)?;
        let mut ctx = Unconstrained::new(theta, &self.sites, 0);
        let returns = self.model.run(&mut ctx)?;
        ctx.finish()?;
        check_returns(self.model.name(), self.model.return_arity(), &returns)?;
        Ok(Evaluation {
            log_prior: ctx.prior.value,
            log_likelihood: ctx.likelihood.value,
            log_factors: ctx.factors.value,
            returns,
        })
    }

    /// As [`Self::evaluate`], with analytic gradients of the prior and of the rest.
    pub fn evaluate_with_gradient(&self, theta: &[f64]) -> Result<GradientEvaluation> {
        self.check_dim(theta)?;
        match self.dim {
            0..=2 => self.gradient_with::<DenseDual<2>>(theta),
            3..=4 => self.gradient_with::<DenseDual<4>>(theta),
            _ => self.gradient_with::<Dual>(theta),
        }
    }

    fn gradient_with<R: Real>(&self, theta: &[f64]) -> Result<GradientEvaluation> {
        let duals: Vec<R> = theta
            .iter()
            .enumerate()
            .map(|(i, &u)| R::variable(i, u))
            .collect();
        let mut ctx = Unconstrained::new(&duals, &self.sites, self.dim);
        let returns = self.model.run(&mut ctx)?;
        ctx.finish()?;
        let returns: Vec<f64> = returns.iter().map(Real::value).collect();
        check_returns(self.model.name(), self.model.return_arity(), &returns)?;
        let mut grad_rest = ctx.likelihood.gradient;
        for (g, f) in grad_rest.iter_mut().zip(&ctx.factors.gradient) {
            *g += f;
        }
        Ok(GradientEvaluation {
            evaluation: Evaluation {
                log_prior: ctx.prior.value,
                log_likelihood: ctx.likelihood.value,
                log_factors: ctx.factors.value,
                returns,
            },
            grad_prior: ctx.prior.gradient,
            grad_rest,
        })
    }

    /// Gradient of the total log-density at θ.
    pub fn log_density_gradient(&self, theta: &[f64], method: GradientMethod) -> Result<Vec<f64>> {
        let total = self.evaluate(theta)?.total();
        if !total.is_finite() {
            return Err(Error::GradientUndefined(total));
        }
        match method {
            GradientMethod::Analytic => {
                let g = self.evaluate_with_gradient(theta)?;
                Ok(g.tempered_gradient(1.0))
            }
            GradientMethod::CentralDifference => {
                let mut point = theta.to_vec();
                let mut grad = Vec::with_capacity(theta.len());
                for i in 0..theta.len() {
                    let h = 1e-5 * theta[i].abs().max(1.0);
                    point[i] = theta[i] + h;
                    let up = self.evaluate(&point)?.total();
                    point[i] = theta[i] - h;
                    let down = self.evaluate(&point)?.total();
                    point[i] = theta[i];
                    grad.push((up - down) / (2.0 * h));
                }
                Ok(grad)
            }
        }
    }
}

/// Context that reads sample values from θ in site order.
struct Unconstrained<'a, R> {
    theta: &'a [R],
    sites: &'a [Site],
    next: usize,
    prior: Accumulator,
    likelihood: Accumulator,
    factors: Accumulator,
}

impl<'a, R: Real> Unconstrained<'a, R> {
    fn new(theta: &'a [R], sites: &'a [Site], grad_dim: usize) -> Self {
        Unconstrained {
            theta,
            sites,
            next: 0,
            prior: Accumulator::new(grad_dim),
            likelihood: Accumulator::new(grad_dim),
            factors: Accumulator::new(grad_dim),
        }
    }

    fn site(&mut self, address: &str, dist: &Distribution<R>) -> Result<&'a Site> {
        let site = self.sites.get(self.next).ok_or_else(|| {
            Error::TraceMismatch(format!("unexpected extra sample site {address:?}"))
        })?;
        if site.address != address || site.dim != dist.dimension() {
            return Err(Error::TraceMismatch(format!(
                "sample site {address:?} does not match registered site {:?}",
                site.address
            )));
        }
        self.next += 1;
        Ok(site)
    }

    fn finish(&self) -> Result<()> {
        if self.next != self.sites.len() {
            return Err(Error::TraceMismatch(format!(
                "model visited {} of {} registered sites",
                self.next,
                self.sites.len()
            )));
        }
        Ok(())
    }
}

impl<R: Real> Context<R> for Unconstrained<'_, R> {
    fn sample(&mut self, address: &str, dist: &Distribution<R>) -> Result<R> {
        Ok(self.sample_vector(address, dist)?.swap_remove(0))
    }

    fn sample_vector(&mut self, address: &str, dist: &Distribution<R>) -> Result<Vec<R>> {
        let site = self.site(address, dist)?;
        let u = &self.theta[site.offset..site.offset + site.dim];
        let x: Vec<R> = u.iter().map(|ui| site.transform.inverse(ui)).collect();
        self.prior.add(&dist.log_density_vector(&x));
        if site.transform != ConstraintTransform::Identity {
            for ui in u {
                self.prior.add(&site.transform.log_jacobian(ui));
            }
        }
        Ok(x)
    }

    fn observe(&mut self, dist: &Distribution<R>, datum: f64) -> Result<()> {
        self.likelihood.add(&dist.log_density(&R::constant(datum)));
        Ok(())
    }

    fn observe_vector(&mut self, dist: &Distribution<R>, data: &[f64]) -> Result<()> {
        let data: Vec<R> = data.iter().map(|&d| R::constant(d)).collect();
        self.likelihood.add(&dist.log_density_vector(&data));
        Ok(())
    }

    fn factor(&mut self, log_p: R) -> Result<()> {
        check_factor(log_p.value())?;
        self.factors.add(&log_p);
        Ok(())
    }

    fn is_prior_only(&self) -> bool {
        false
    }
}
