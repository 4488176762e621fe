//! Effective sample sizes, relative errors, run summaries and fair budgets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::WeightedSampleSet;
use crate::tabi::{Budgets, ExpectationEstimate, Term};

/// Effective sample size; `degenerate` marks an all-zero weight vector (value 0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ess {
    pub value: f64,
    pub degenerate: bool,
}

/// `(Σw)² / Σw²`, computed from log-weights after shifting by their maximum.
pub fn ess(log_weights: &[f64]) -> Ess {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Ess {
            value: 0.0,
            degenerate: true,
        };
    }
    let (mut s1, mut s2) = (0.0, 0.0);
    for &lw in log_weights {
        let w = (lw - max).exp();
        s1 += w;
        s2 += w * w;
    }
    Ess {
        value: s1 * s1 / s2,
        degenerate: false,
    }
}

/// ESS of `|w_i·f_i|`.
pub fn ess_retargeted(log_weights: &[f64], f_values: &[f64]) -> Ess {
    assert_eq!(
        log_weights.len(),
        f_values.len(),
        "weights and target values must align"
    );
    let retargeted: Vec<f64> = log_weights
        .iter()
        .zip(f_values)
        .map(|(lw, f)| lw + f.abs().ln())
        .collect();
    ess(&retargeted)
}

/// `(μ̂ − μ)² / μ²`.
pub fn rse(estimate: f64, ground_truth: f64) -> Result<f64> {
    if ground_truth == 0.0 || !ground_truth.is_finite() {
        return Err(Error::Undefined(format!(
            "relative error against ground truth {ground_truth}"
        )));
    }
    Ok(((estimate - ground_truth) / ground_truth).powi(2))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Quantile `p` of sorted data, interpolating linearly between order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize_runs(values: &[f64]) -> Result<RunSummary> {
    if values.is_empty() {
        return Err(Error::Configuration("cannot summarize zero runs".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(RunSummary {
        median: quantile_sorted(&sorted, 0.5),
        q25: quantile_sorted(&sorted, 0.25),
        q75: quantile_sorted(&sorted, 0.75),
    })
}

/// Sample budget for one method in a comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "method")]
pub enum BudgetPlan {
    Taanis { budgets: Budgets, rungs: usize },
    Anis { particles: usize, rungs: usize },
    Mcmc { samples: usize },
}

impl BudgetPlan {
    /// Budget in likelihood-evaluation units: particles times rungs, or retained MCMC samples.
    pub fn budget_units(&self) -> u64 {
        match *self {
            BudgetPlan::Taanis { budgets, rungs } => {
                ((budgets.plus + budgets.minus + budgets.base) * rungs) as u64
            }
            BudgetPlan::Anis { particles, rungs } => (particles * rungs) as u64,
            BudgetPlan::Mcmc { samples } => samples as u64,
        }
    }
}

/// Matched budgets for TAAnIS, AnIS and MCMC at n rungs and K particles.
///
/// A non-negative target splits K evenly between Z₁⁺ and Z₂; a signed one
/// splits it in thirds.
pub fn plan_fair_budgets(
    n: usize,
    k: usize,
    positive_target: bool,
) -> Result<(BudgetPlan, BudgetPlan, BudgetPlan)> {
    if n == 0 || k == 0 {
        return Err(Error::Configuration(
            "rungs and particles must be positive".into(),
        ));
    }
    let budgets = if positive_target {
        if !k.is_multiple_of(2) {
            return Err(Error::Configuration(format!(
                "K = {k} must be even for a non-negative target"
            )));
        }
        Budgets::new(k / 2, 0, k / 2)
    } else {
        if !k.is_multiple_of(3) {
            return Err(Error::Configuration(format!(
                "K = {k} must be divisible by 3 for a signed target"
            )));
        }
        Budgets::new(k / 3, k / 3, k / 3)
    };
    Ok((
        BudgetPlan::Taanis { budgets, rungs: n },
        BudgetPlan::Anis {
            particles: k,
            rungs: n,
        },
        BudgetPlan::Mcmc { samples: n * k },
    ))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsBundle {
    pub ess: Option<f64>,
    pub ess_retargeted: Option<f64>,
    pub ess_min: Option<f64>,
    pub rse: Option<f64>,
    pub evaluations: u64,
}

fn ess_prefix(set: &WeightedSampleSet, count: usize) -> f64 {
    ess(&set.log_weights[..count.min(set.len())]).value
}

/// TAAnIS diagnostics: `ess` is ESS of Z₂, `ess_retargeted` the smallest ESS of the
/// active Z₁ terms, `ess_min` the smallest over all active terms.
pub fn taanis_diagnostics(
    estimate: &ExpectationEstimate,
    counts: Budgets,
    value: Option<f64>,
    truth: Option<f64>,
) -> DiagnosticsBundle {
    let per_term =
        |t: Term| (counts.get(t) > 0).then(|| ess_prefix(estimate.set(t), counts.get(t)));
    let z1 = [per_term(Term::Plus), per_term(Term::Minus)]
        .into_iter()
        .flatten()
        .reduce(f64::min);
    let z2 = per_term(Term::Base);
    let min = [z1, z2].into_iter().flatten().reduce(f64::min);
    DiagnosticsBundle {
        ess: z2,
        ess_retargeted: z1,
        ess_min: min,
        rse: value.zip(truth).and_then(|(v, t)| rse(v, t).ok()),
        evaluations: 0,
    }
}

/// AnIS diagnostics on the first `count` particles: ESS, retargeted ESS, their minimum.
pub fn anis_diagnostics(
    set: &WeightedSampleSet,
    index: usize,
    count: usize,
    value: Option<f64>,
    truth: Option<f64>,
) -> DiagnosticsBundle {
    let count = count.min(set.len());
    let f: Vec<f64> = set.returns[..count].iter().map(|r| r[index]).collect();
    let plain = ess(&set.log_weights[..count]).value;
    let retargeted = ess_retargeted(&set.log_weights[..count], &f).value;
    DiagnosticsBundle {
        ess: Some(plain),
        ess_retargeted: Some(retargeted),
        ess_min: Some(plain.min(retargeted)),
        rse: value.zip(truth).and_then(|(v, t)| rse(v, t).ok()),
        evaluations: 0,
    }
}
