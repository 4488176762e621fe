//! Prior importance sampling and annealed importance sampling.

use rand::Rng;
use rayon::prelude::*;

use crate::density::ProgramDensity;
use crate::error::Result;
use crate::model::Model;
use crate::numerics::log_mean_exp;
use crate::rng::unit_rng;

use super::kernel::{ChainState, Tempered, TransitionKernel};
use super::schedule::AnnealingSchedule;

/// Weighted particles from an importance-sampling run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightedSampleSet {
    /// Final particle positions in unconstrained space.
    pub particles: Vec<Vec<f64>>,
    pub log_weights: Vec<f64>,
    /// Model return values at each final particle.
    pub returns: Vec<Vec<f64>>,
    /// Density evaluations spent, including kernel moves.
    pub evaluations: u64,
}

impl WeightedSampleSet {
    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    /// `ln Ẑ = logsumexp(ln w) - ln K`; `-∞` when empty.
    pub fn log_evidence(&self) -> f64 {
        log_mean_exp(&self.log_weights)
    }

    /// Ẑ, the mean weight; zero for an empty set.
    pub fn evidence(&self) -> f64 {
        self.log_evidence().exp()
    }

    /// Ẑ using only the first `count` particles.
    pub fn evidence_prefix(&self, count: usize) -> f64 {
        log_mean_exp(&self.log_weights[..count.min(self.len())]).exp()
    }

    /// True when every particle has zero weight.
    pub fn is_degenerate(&self) -> bool {
        self.log_weights.iter().all(|w| *w == f64::NEG_INFINITY)
    }

    /// Values of return `index` at each particle.
    pub fn return_values(&self, index: usize) -> Vec<f64> {
        self.returns.iter().map(|r| r[index]).collect()
    }
}

struct Particle {
    position: Vec<f64>,
    log_weight: f64,
    returns: Vec<f64>,
}

fn collect(particles: Vec<Particle>, evaluations: u64) -> WeightedSampleSet {
    let mut set = WeightedSampleSet {
        evaluations,
        ..WeightedSampleSet::default()
    };
    for p in particles {
        set.particles.push(p.position);
        set.log_weights.push(p.log_weight);
        set.returns.push(p.returns);
    }
    set
}

/// K particles from the prior, weighted by likelihood times factors.
pub fn importance_sample_prior<M: Model>(
    density: &ProgramDensity<M>,
    k: usize,
    seed: u64,
) -> Result<WeightedSampleSet> {
    let particles = (0..k)
        .into_par_iter()
        .map(|j| {
            let mut rng = unit_rng(seed, j as u64);
            let position = density.draw_prior(&mut rng)?;
            let e = density.evaluate(&position)?;
            Ok(Particle {
                log_weight: e.rest(),
                returns: e.returns,
                position,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(collect(particles, k as u64))
}

/// Density evaluations charged to one AnIS particle: the prior draw, one
/// evaluation per rung, and the kernel moves between rungs.
pub fn anis_evaluations_per_particle(rungs: usize, kernel: &TransitionKernel) -> u64 {
    let n = rungs as u64;
    1 + n + (n - 1) * kernel.steps as u64 * kernel.evaluations_per_transition()
}

/// Annealed importance sampling from the prior to the full density.
///
/// Each particle starts at a prior draw. At rung i it is scored at its current
/// point and gains `(β_i − β_{i−1})·(log likelihood + log factors)`, then, for
/// i < n, moves under a kernel that leaves `prior + β_i·rest` invariant. The
/// sum of these increments is the log of the usual ratio of successive
/// annealed densities.
pub fn annealed_importance_sample<M: Model>(
    density: &ProgramDensity<M>,
    schedule: &AnnealingSchedule,
    kernel: &TransitionKernel,
    k: usize,
    seed: u64,
) -> Result<WeightedSampleSet> {
    let particles = (0..k)
        .into_par_iter()
        .map(|j| {
            let mut rng = unit_rng(seed, j as u64);
            anneal_particle(density, schedule, kernel, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(collect(
        particles,
        k as u64 * anis_evaluations_per_particle(schedule.rungs(), kernel),
    ))
}

fn anneal_particle<M: Model, G: Rng>(
    density: &ProgramDensity<M>,
    schedule: &AnnealingSchedule,
    kernel: &TransitionKernel,
    rng: &mut G,
) -> Result<Particle> {
    let betas = schedule.betas();
    let n = schedule.rungs();
    let mut position = density.draw_prior(rng)?;
    let mut log_weight = 0.0;
    for i in 1..=n {
        let beta = betas[i];
        let (evaluation, gradient) = if kernel.needs_gradient() && i < n {
            let g = density.evaluate_with_gradient(&position)?;
            let grad = g.tempered_gradient(beta);
            (g.evaluation, grad)
        } else {
            (density.evaluate(&position)?, Vec::new())
        };
        log_weight += (beta - betas[i - 1]) * evaluation.rest();
        // A zero-weight particle stays zero; moving it is wasted work.
        if i == n || log_weight == f64::NEG_INFINITY {
            return Ok(Particle {
                position,
                log_weight,
                returns: evaluation.returns,
            });
        }
        let mut state = ChainState {
            log_density: evaluation.tempered(beta),
            position,
            gradient,
        };
        kernel.apply(&mut state, &Tempered { density, beta }, rng)?;
        position = state.position;
    }
    unreachable!("schedules have at least one rung")
}

/// Self-normalized prior importance estimate of `E[f]`, accumulated without storing particles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImportanceExpectation {
    pub estimate: f64,
    /// Delta-method standard error of the ratio estimate.
    pub std_error: f64,
    pub ess: f64,
    /// ESS of `|w·f|`.
    pub ess_retargeted: f64,
    pub log_evidence: f64,
    pub samples: usize,
}

/// Weighted sums relative to the running maximum log-weight.
#[derive(Clone, Copy, Debug)]
struct Moments {
    shift: f64,
    w: f64,
    w2: f64,
    wf: f64,
    w_abs_f: f64,
    w2f: f64,
    w2f2: f64,
}

impl Moments {
    const EMPTY: Moments = Moments {
        shift: f64::NEG_INFINITY,
        w: 0.0,
        w2: 0.0,
        wf: 0.0,
        w_abs_f: 0.0,
        w2f: 0.0,
        w2f2: 0.0,
    };

    fn rescaled(self, shift: f64) -> Moments {
        if self.shift == shift {
            return self;
        }
        let a = if self.shift == f64::NEG_INFINITY {
            0.0
        } else {
            (self.shift - shift).exp()
        };
        let a2 = a * a;
        Moments {
            shift,
            w: self.w * a,
            w2: self.w2 * a2,
            wf: self.wf * a,
            w_abs_f: self.w_abs_f * a,
            w2f: self.w2f * a2,
            w2f2: self.w2f2 * a2,
        }
    }

    fn push(&mut self, log_weight: f64, f: f64) {
        if log_weight == f64::NEG_INFINITY {
            return;
        }
        if log_weight > self.shift {
            *self = self.rescaled(log_weight);
        }
        let w = (log_weight - self.shift).exp();
        self.w += w;
        self.w2 += w * w;
        self.wf += w * f;
        self.w_abs_f += w * f.abs();
        self.w2f += w * w * f;
        self.w2f2 += w * w * f * f;
    }

    fn merge(self, other: Moments) -> Moments {
        let shift = self.shift.max(other.shift);
        let (a, b) = (self.rescaled(shift), other.rescaled(shift));
        Moments {
            shift,
            w: a.w + b.w,
            w2: a.w2 + b.w2,
            wf: a.wf + b.wf,
            w_abs_f: a.w_abs_f + b.w_abs_f,
            w2f: a.w2f + b.w2f,
            w2f2: a.w2f2 + b.w2f2,
        }
    }
}

const STREAM_CHUNK: usize = 4096;

/// Prior importance sampling of return `index`, streamed in fixed chunks so the
/// result does not depend on the thread count.
pub fn prior_importance_expectation<M: Model>(
    density: &ProgramDensity<M>,
    index: usize,
    k: usize,
    seed: u64,
) -> Result<ImportanceExpectation> {
    let chunks = k.div_ceil(STREAM_CHUNK);
    let partial = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut m = Moments::EMPTY;
            for j in c * STREAM_CHUNK..((c + 1) * STREAM_CHUNK).min(k) {
                let mut rng = unit_rng(seed, j as u64);
                let position = density.draw_prior(&mut rng)?;
                let e = density.evaluate(&position)?;
                m.push(e.rest(), e.returns[index]);
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    let m = partial.into_iter().fold(Moments::EMPTY, Moments::merge);
    if m.w == 0.0 {
        return Err(crate::error::Error::DegenerateEvidence(k));
    }
    let estimate = m.wf / m.w;
    let variance =
        (m.w2f2 - 2.0 * estimate * m.w2f + estimate * estimate * m.w2).max(0.0) / (m.w * m.w);
    Ok(ImportanceExpectation {
        estimate,
        std_error: variance.sqrt(),
        ess: m.w * m.w / m.w2,
        ess_retargeted: if m.w2f2 > 0.0 {
            m.w_abs_f * m.w_abs_f / m.w2f2
        } else {
            0.0
        },
        log_evidence: m.shift + (m.w / k as f64).ln(),
        samples: k,
    })
}
