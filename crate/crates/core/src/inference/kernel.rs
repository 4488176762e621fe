//! Markov transition kernels on unconstrained space.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::density::ProgramDensity;
use crate::error::{Error, Result};
use crate::model::Model;

/// Log-density, optionally with gradient, that a kernel leaves invariant.
pub trait Target {
    fn log_density(&self, x: &[f64]) -> Result<f64>;

    fn log_density_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// `prior + β·(likelihood + factors)` of a program density.
pub struct Tempered<'a, M> {
    pub density: &'a ProgramDensity<M>,
    pub beta: f64,
}

/// Numerical breakdowns at a proposed point make it a zero-density point.
fn is_numerical(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidFactor(_) | Error::InvalidReturn(_) | Error::InvalidParameter(_)
    )
}

impl<M: Model> Target for Tempered<'_, M> {
    fn log_density(&self, x: &[f64]) -> Result<f64> {
        match self.density.evaluate(x) {
            Ok(e) => Ok(e.tempered(self.beta)),
            Err(e) if is_numerical(&e) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    }

    fn log_density_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self.density.evaluate_with_gradient(x) {
            Ok(g) => Ok((
                g.evaluation.tempered(self.beta),
                g.tempered_gradient(self.beta),
            )),
            Err(e) if is_numerical(&e) => Ok((f64::NEG_INFINITY, vec![f64::NAN; x.len()])),
            Err(e) => Err(e),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub position: Vec<f64>,
    pub log_density: f64,
    /// Empty for gradient-free kernels.
    pub gradient: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum KernelKind {
    /// Random-walk Metropolis–Hastings with proposal covariance `variance·I`.
    Mh { variance: f64 },
    /// Hamiltonian Monte Carlo with a fixed number of leapfrog steps.
    Hmc {
        step_size: f64,
        leapfrog_steps: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionKernel {
    pub kind: KernelKind,
    /// Transitions applied per annealing rung.
    pub steps: usize,
}

impl TransitionKernel {
    pub fn mh(variance: f64, steps: usize) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::Configuration(format!(
                "MH proposal variance must be > 0, got {variance}"
            )));
        }
        Ok(TransitionKernel {
            kind: KernelKind::Mh { variance },
            steps,
        })
    }

    pub fn hmc(step_size: f64, leapfrog_steps: usize, steps: usize) -> Result<Self> {
        if !(step_size > 0.0 && step_size.is_finite()) {
            return Err(Error::Configuration(format!(
                "HMC step size must be > 0, got {step_size}"
            )));
        }
        Ok(TransitionKernel {
            kind: KernelKind::Hmc {
                step_size,
                leapfrog_steps,
            },
            steps,
        })
    }

    pub fn needs_gradient(&self) -> bool {
        matches!(self.kind, KernelKind::Hmc { .. })
    }

    /// Density evaluations charged per transition: 1 for MH, L for HMC.
    pub fn evaluations_per_transition(&self) -> u64 {
        match self.kind {
            KernelKind::Mh { .. } => 1,
            KernelKind::Hmc { leapfrog_steps, .. } => leapfrog_steps as u64,
        }
    }

    pub fn init_state<T: Target>(&self, target: &T, position: Vec<f64>) -> Result<ChainState> {
        if self.needs_gradient() {
            let (log_density, gradient) = target.log_density_and_gradient(&position)?;
            Ok(ChainState {
                position,
                log_density,
                gradient,
            })
        } else {
            let log_density = target.log_density(&position)?;
            Ok(ChainState {
                position,
                log_density,
                gradient: Vec::new(),
            })
        }
    }

    /// One transition; returns whether the proposal was accepted.
    pub fn transition<T: Target, G: Rng>(
        &self,
        state: &mut ChainState,
        target: &T,
        rng: &mut G,
    ) -> Result<bool> {
        match self.kind {
            KernelKind::Mh { variance } => mh_step(state, target, variance, rng),
            KernelKind::Hmc {
                step_size,
                leapfrog_steps,
            } => hmc_step(state, target, step_size, leapfrog_steps, rng),
        }
    }

    /// `steps` transitions; returns the number accepted.
    pub fn apply<T: Target, G: Rng>(
        &self,
        state: &mut ChainState,
        target: &T,
        rng: &mut G,
    ) -> Result<usize> {
        let mut accepted = 0;
        for _ in 0..self.steps {
            accepted += usize::from(self.transition(state, target, rng)?);
        }
        Ok(accepted)
    }
}

fn accept<G: Rng>(log_ratio: f64, rng: &mut G) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if log_ratio.is_nan() {
        return false;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

/// Random-walk Metropolis step with an isotropic Gaussian proposal.
pub fn mh_step<T: Target, G: Rng>(
    state: &mut ChainState,
    target: &T,
    variance: f64,
    rng: &mut G,
) -> Result<bool> {
    let sd = variance.sqrt();
    let proposal: Vec<f64> = state
        .position
        .iter()
        .map(|x| {
            let z: f64 = rng.sample(StandardNormal);
            x + sd * z
        })
        .collect();
    let log_density = target.log_density(&proposal)?;
    let log_ratio = if log_density == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        log_density - state.log_density
    };
    if accept(log_ratio, rng) {
        state.position = proposal;
        state.log_density = log_density;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// End point of a leapfrog trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub log_density: f64,
    pub gradient: Vec<f64>,
}

/// `steps` leapfrog steps of size `step_size` from `(position, momentum)`.
///
/// Stops early, returning a non-finite `log_density`, if the trajectory leaves
/// the region where the target is finite.
pub fn leapfrog<T: Target>(
    target: &T,
    position: &[f64],
    momentum: &[f64],
    gradient: &[f64],
    step_size: f64,
    steps: usize,
) -> Result<Trajectory> {
    let mut x = position.to_vec();
    let mut p = momentum.to_vec();
    let mut grad = gradient.to_vec();
    let mut log_density = f64::NAN;
    for _ in 0..steps {
        for (pi, gi) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * step_size * gi;
        }
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += step_size * pi;
        }
        let (lp, g) = target.log_density_and_gradient(&x)?;
        log_density = lp;
        grad = g;
        if !lp.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            log_density = f64::NAN;
            break;
        }
        for (pi, gi) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * step_size * gi;
        }
    }
    Ok(Trajectory {
        position: x,
        momentum: p,
        log_density,
        gradient: grad,
    })
}

fn kinetic(p: &[f64]) -> f64 {
    0.5 * p.iter().map(|v| v * v).sum::<f64>()
}

/// Static HMC step: fresh standard-normal momentum, `leapfrog_steps` leapfrog
/// steps, Metropolis correction on the total energy.
pub fn hmc_step<T: Target, G: Rng>(
    state: &mut ChainState,
    target: &T,
    step_size: f64,
    leapfrog_steps: usize,
    rng: &mut G,
) -> Result<bool> {
    let momentum: Vec<f64> = (0..state.position.len())
        .map(|_| rng.sample(StandardNormal))
        .collect();
    if leapfrog_steps == 0 {
        return Ok(true);
    }
    if !state.log_density.is_finite() || state.gradient.len() != state.position.len() {
        return Ok(false);
    }
    let end = leapfrog(
        target,
        &state.position,
        &momentum,
        &state.gradient,
        step_size,
        leapfrog_steps,
    )?;
    if !end.log_density.is_finite() {
        return Ok(false);
    }
    let h0 = -state.log_density + kinetic(&momentum);
    let h1 = -end.log_density + kinetic(&end.momentum);
    if accept(h0 - h1, rng) {
        state.position = end.position;
        state.log_density = end.log_density;
        state.gradient = end.gradient;
        Ok(true)
    } else {
        Ok(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct StdNormal;

    impl Target for StdNormal {
        fn log_density(&self, x: &[f64]) -> Result<f64> {
            Ok(-0.5 * x.iter().map(|v| v * v).sum::<f64>())
        }

        fn log_density_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            Ok((self.log_density(x)?, x.iter().map(|v| -v).collect()))
        }
    }

    /// Flat on (0, 1), zero elsewhere.
    struct UnitBox;

    impl Target for UnitBox {
        fn log_density(&self, x: &[f64]) -> Result<f64> {
            Ok(if x.iter().all(|v| (0.0..1.0).contains(v)) {
                0.0
            } else {
                f64::NEG_INFINITY
            })
        }

        fn log_density_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            Ok((self.log_density(x)?, vec![0.0; x.len()]))
        }
    }

    struct Flat;

    impl Target for Flat {
        fn log_density(&self, _x: &[f64]) -> Result<f64> {
            Ok(0.0)
        }

        fn log_density_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            Ok((0.0, vec![0.0; x.len()]))
        }
    }

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn equal_density_proposals_are_always_accepted() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut state = ChainState {
            position: vec![0.0],
            log_density: 0.0,
            gradient: vec![],
        };
        for _ in 0..1000 {
            assert!(mh_step(&mut state, &Flat, 1.0, &mut rng).unwrap());
        }
    }

    #[test]
    fn proposals_into_zero_density_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut state = ChainState {
            position: vec![0.5],
            log_density: 0.0,
            gradient: vec![],
        };
        for _ in 0..10_000 {
            mh_step(&mut state, &UnitBox, 4.0, &mut rng).unwrap();
            assert!((0.0..1.0).contains(&state.position[0]));
        }
    }

    #[test]
    fn mh_standard_normal_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut state = ChainState {
            position: vec![0.0],
            log_density: 0.0,
            gradient: vec![],
        };
        let xs: Vec<f64> = (0..1_000_000)
            .map(|_| {
                mh_step(&mut state, &StdNormal, 0.25, &mut rng).unwrap();
                state.position[0]
            })
            .collect();
        let (m, v) = moments(&xs);
        assert!(m.abs() < 0.01, "mean {m}");
        assert!((v - 1.0).abs() < 0.02, "variance {v}");
    }

    #[test]
    fn zero_leapfrog_steps_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut state = TransitionKernel::hmc(0.1, 0, 1)
            .unwrap()
            .init_state(&StdNormal, vec![1.3, -0.2])
            .unwrap();
        let before = state.clone();
        assert!(hmc_step(&mut state, &StdNormal, 0.1, 0, &mut rng).unwrap());
        assert_eq!(state, before);
    }

    #[test]
    fn leapfrog_is_reversible() {
        let x0 = vec![0.7, -1.1, 2.0];
        let p0 = vec![0.3, 0.9, -0.4];
        let (_, g0) = StdNormal.log_density_and_gradient(&x0).unwrap();
        let fwd = leapfrog(&StdNormal, &x0, &p0, &g0, 0.1, 25).unwrap();
        let back_p: Vec<f64> = fwd.momentum.iter().map(|p| -p).collect();
        let back = leapfrog(&StdNormal, &fwd.position, &back_p, &fwd.gradient, 0.1, 25).unwrap();
        for (a, b) in back.position.iter().zip(&x0) {
            assert!((a - b).abs() < 1e-8);
        }
        for (a, b) in back.momentum.iter().zip(&p0) {
            assert!((-a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn hmc_standard_normal_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let kernel = TransitionKernel::hmc(0.1, 10, 1).unwrap();
        let mut state = kernel.init_state(&StdNormal, vec![0.0]).unwrap();
        let xs: Vec<f64> = (0..100_000)
            .map(|_| {
                kernel.transition(&mut state, &StdNormal, &mut rng).unwrap();
                state.position[0]
            })
            .collect();
        let (_, v) = moments(&xs);
        assert!((v - 1.0).abs() < 0.03, "variance {v}");
    }
}
