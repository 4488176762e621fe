//! Target-aware estimation of posterior expectations.
//!
//! `E[f] = (Z₁⁺ − Z₁⁻) / Z₂`, where Z₂ normalizes the model density γ and
//! Z₁± normalize `γ·max(±f, 0)`. Each normalizer is estimated independently.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::ProgramDensity;
use crate::error::{Error, Result};
use crate::inference::{
    annealed_importance_sample, importance_sample_prior, AnnealingSchedule, TransitionKernel,
    WeightedSampleSet,
};
use crate::model::{run_model, Context, Mode, Model};
use crate::numerics::log_mean_exp;
use crate::real::Real;
use crate::rng::derive_seed;
use crate::trace::{Trace, Value};

/// `(max(f, 0), −min(f, 0))`.
pub fn split_target(f: f64) -> Result<(f64, f64)> {
    if !f.is_finite() {
        return Err(Error::InvalidReturn(format!(
            "target value {f} is not finite"
        )));
    }
    Ok((f.max(0.0), (-f).max(0.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    /// Z₁⁺, the normalizer of `γ·max(f, 0)`.
    Plus,
    /// Z₁⁻, the normalizer of `γ·max(−f, 0)`.
    Minus,
    /// Z₂, the normalizer of γ.
    Base,
}

impl Term {
    pub const ALL: [Term; 3] = [Term::Plus, Term::Minus, Term::Base];

    fn stream(self) -> u64 {
        match self {
            Term::Plus => 1,
            Term::Minus => 2,
            Term::Base => 3,
        }
    }

    /// Seed for this term's estimator under the run seed.
    pub fn seed(self, seed: u64) -> u64 {
        derive_seed(seed, self.stream())
    }
}

/// Wraps a model so that its density is multiplied by `max(±f_k, 0)`.
///
/// The extra factor is skipped when only the prior is scored.
#[derive(Clone, Debug)]
pub struct TargetFactor<M> {
    inner: M,
    index: usize,
    sign: Term,
}

impl<M: Model> TargetFactor<M> {
    pub fn new(inner: M, index: usize, sign: Term) -> Result<Self> {
        if index >= inner.return_arity() {
            return Err(Error::Configuration(format!(
                "return index {index} out of range for {} with {} return values",
                inner.name(),
                inner.return_arity()
            )));
        }
        if sign == Term::Base {
            return Err(Error::Configuration(
                "the base term has no target factor".into(),
            ));
        }
        Ok(TargetFactor { inner, index, sign })
    }
}

impl<M: Model> Model for TargetFactor<M> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn return_arity(&self) -> usize {
        self.inner.return_arity()
    }

    fn run<R: Real, C: Context<R>>(&self, ctx: &mut C) -> Result<Vec<R>> {
        let returns = self.inner.run(ctx)?;
        if ctx.is_prior_only() {
            return Ok(returns);
        }
        let f = returns
            .get(self.index)
            .ok_or_else(|| Error::InvalidReturn(format!("missing return value {}", self.index)))?;
        split_target(f.value())?;
        let signed = if self.sign == Term::Plus {
            f.clone()
        } else {
            -f.clone()
        };
        let log_factor = if signed.value() > 0.0 {
            signed.ln()
        } else {
            R::constant(f64::NEG_INFINITY)
        };
        ctx.factor(log_factor)?;
        Ok(returns)
    }
}

/// Particle counts for each of the three estimators.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    pub plus: usize,
    pub minus: usize,
    pub base: usize,
}

impl Budgets {
    pub fn new(plus: usize, minus: usize, base: usize) -> Self {
        Budgets { plus, minus, base }
    }

    pub fn get(&self, term: Term) -> usize {
        match term {
            Term::Plus => self.plus,
            Term::Minus => self.minus,
            Term::Base => self.base,
        }
    }
}

/// The three densities of one expectation, sharing a base model.
pub struct TabiDecomposition<M> {
    pub base: ProgramDensity<M>,
    pub plus: ProgramDensity<TargetFactor<M>>,
    pub minus: ProgramDensity<TargetFactor<M>>,
    pub return_index: usize,
    pub budgets: Budgets,
}

pub fn decompose<M: Model + Clone>(
    model: M,
    return_index: usize,
    budgets: Budgets,
) -> Result<TabiDecomposition<M>> {
    let plus = ProgramDensity::new(TargetFactor::new(model.clone(), return_index, Term::Plus)?)?;
    let minus = ProgramDensity::new(TargetFactor::new(model.clone(), return_index, Term::Minus)?)?;
    let base = ProgramDensity::new(model)?;
    Ok(TabiDecomposition {
        base,
        plus,
        minus,
        return_index,
        budgets,
    })
}

/// Marginal-likelihood estimator applied to each term.
#[derive(Clone, Debug, PartialEq)]
pub enum Estimator {
    PriorImportance,
    Annealed {
        schedule: AnnealingSchedule,
        kernel: TransitionKernel,
    },
}

impl Estimator {
    pub fn run<M: Model>(
        &self,
        density: &ProgramDensity<M>,
        k: usize,
        seed: u64,
    ) -> Result<WeightedSampleSet> {
        match self {
            Estimator::PriorImportance => importance_sample_prior(density, k, seed),
            Estimator::Annealed { schedule, kernel } => {
                annealed_importance_sample(density, schedule, kernel, k, seed)
            }
        }
    }
}

/// The three weighted sample sets and their combination.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpectationEstimate {
    pub plus: WeightedSampleSet,
    pub minus: WeightedSampleSet,
    pub base: WeightedSampleSet,
}

/// `(Ẑ₁⁺ − Ẑ₁⁻) / Ẑ₂`, or a degenerate-evidence error when `Ẑ₂ = 0`.
pub fn combine(z1_plus: f64, z1_minus: f64, z2: f64, base_count: usize) -> Result<f64> {
    if z2 <= 0.0 || !z2.is_finite() {
        return Err(Error::DegenerateEvidence(base_count));
    }
    Ok((z1_plus - z1_minus) / z2)
}

impl ExpectationEstimate {
    pub fn set(&self, term: Term) -> &WeightedSampleSet {
        match term {
            Term::Plus => &self.plus,
            Term::Minus => &self.minus,
            Term::Base => &self.base,
        }
    }

    pub fn z1_plus(&self) -> f64 {
        self.plus.evidence()
    }

    pub fn z1_minus(&self) -> f64 {
        self.minus.evidence()
    }

    pub fn z2(&self) -> f64 {
        self.base.evidence()
    }

    pub fn value(&self) -> Result<f64> {
        combine(self.z1_plus(), self.z1_minus(), self.z2(), self.base.len())
    }

    /// Components `(Ẑ₁⁺, Ẑ₁⁻, Ẑ₂)` using the first `counts` particles of each set.
    pub fn components_prefix(&self, counts: Budgets) -> (f64, f64, f64) {
        (
            self.plus.evidence_prefix(counts.plus),
            self.minus.evidence_prefix(counts.minus),
            self.base.evidence_prefix(counts.base),
        )
    }

    pub fn value_prefix(&self, counts: Budgets) -> Result<f64> {
        let (p, m, z) = self.components_prefix(counts);
        combine(p, m, z, counts.base.min(self.base.len()))
    }

    pub fn evaluations(&self) -> u64 {
        self.plus.evaluations + self.minus.evaluations + self.base.evaluations
    }
}

impl<M: Model> TabiDecomposition<M> {
    /// Runs the estimator on each term with its own budget and derived seed.
    /// A term with budget zero yields an empty set (Ẑ = 0) and costs nothing.
    pub fn run_terms(&self, estimator: &Estimator, seed: u64) -> Result<ExpectationEstimate> {
        Ok(ExpectationEstimate {
            plus: estimator.run(&self.plus, self.budgets.plus, Term::Plus.seed(seed))?,
            minus: estimator.run(&self.minus, self.budgets.minus, Term::Minus.seed(seed))?,
            base: estimator.run(&self.base, self.budgets.base, Term::Base.seed(seed))?,
        })
    }
}

/// Runs all three estimators and fails if the evidence estimate is zero.
pub fn estimate_expectation<M: Model>(
    decomp: &TabiDecomposition<M>,
    estimator: &Estimator,
    seed: u64,
) -> Result<ExpectationEstimate> {
    let estimate = decomp.run_terms(estimator, seed)?;
    estimate.value()?;
    Ok(estimate)
}

/// Term estimates implied by one weighted set targeting the posterior:
/// `Ẑ₁± = mean(w·max(±f, 0))`, `Ẑ₂ = mean(w)`, over the first `count` particles.
pub fn self_normalized(
    set: &WeightedSampleSet,
    index: usize,
    count: usize,
) -> Result<(f64, f64, f64)> {
    let count = count.min(set.len());
    let mut plus = Vec::with_capacity(count);
    let mut minus = Vec::with_capacity(count);
    for (lw, r) in set.log_weights[..count].iter().zip(&set.returns) {
        let (fp, fm) = split_target(r[index])?;
        plus.push(lw + fp.ln());
        minus.push(lw + fm.ln());
    }
    Ok((
        log_mean_exp(&plus).exp(),
        log_mean_exp(&minus).exp(),
        log_mean_exp(&set.log_weights[..count]).exp(),
    ))
}

/// Regular lattice over the constrained values of a model with one or two scalar latents.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    /// `(lower, upper)` per latent, in sample-site order.
    pub bounds: Vec<(f64, f64)>,
    /// Intervals per axis.
    pub intervals: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureResult {
    pub z1_plus: f64,
    pub z1_minus: f64,
    pub z2: f64,
    pub expectation: f64,
}

/// Trapezoid-rule values of Z₁⁺, Z₁⁻, Z₂ and E[f], by replaying the base model on a lattice.
pub fn quadrature_oracle<M: Model>(
    decomp: &TabiDecomposition<M>,
    lattice: &Lattice,
) -> Result<QuadratureResult> {
    let sites = decomp.base.sites();
    if sites.len() > 2 || sites.iter().any(|s| s.dim != 1 || s.vector) {
        return Err(Error::Unsupported(
            "quadrature oracle needs at most two scalar latents".into(),
        ));
    }
    if lattice.bounds.len() != sites.len() || lattice.intervals == 0 {
        return Err(Error::Configuration(
            "lattice must give bounds for every latent".into(),
        ));
    }
    let model = decomp.base.model();
    let index = decomp.return_index;
    let n = lattice.intervals;
    let axis = |d: usize, i: usize| {
        let (lo, hi) = lattice.bounds[d];
        (lo + (hi - lo) * i as f64 / n as f64, (hi - lo) / n as f64)
    };
    let trapezoid_weight = |i: usize| if i == 0 || i == n { 0.5 } else { 1.0 };
    let point = |coords: &[f64]| -> Result<[f64; 3]> {
        let trace = Trace::from_values(
            sites
                .iter()
                .zip(coords)
                .map(|(s, &x)| (s.address.clone(), Value::Scalar(x))),
        );
        let t = run_model(model, Mode::Replay(&trace))?;
        let g = t.log_density().exp();
        let (fp, fm) = split_target(t.returns[index])?;
        Ok([g * fp, g * fm, g])
    };
    let sums = if sites.is_empty() {
        point(&[])?
    } else if sites.len() == 1 {
        let mut acc = [0.0; 3];
        for i in 0..=n {
            let (x, h) = axis(0, i);
            let v = point(&[x])?;
            for k in 0..3 {
                acc[k] += trapezoid_weight(i) * h * v[k];
            }
        }
        acc
    } else {
        let rows = (0..=n)
            .into_par_iter()
            .map(|i| {
                let (x, hx) = axis(0, i);
                let mut acc = [0.0; 3];
                for j in 0..=n {
                    let (y, hy) = axis(1, j);
                    let v = point(&[x, y])?;
                    for k in 0..3 {
                        acc[k] += trapezoid_weight(i) * trapezoid_weight(j) * hx * hy * v[k];
                    }
                }
                Ok(acc)
            })
            .collect::<Result<Vec<_>>>()?;
        rows.iter()
            .fold([0.0; 3], |a, r| [a[0] + r[0], a[1] + r[1], a[2] + r[2]])
    };
    let [z1_plus, z1_minus, z2] = sums;
    Ok(QuadratureResult {
        z1_plus,
        z1_minus,
        z2,
        expectation: combine(z1_plus, z1_minus, z2, 0)?,
    })
}
