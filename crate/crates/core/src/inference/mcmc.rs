//! Posterior MCMC followed by an empirical mean of the return values.

use rayon::prelude::*;

use crate::density::ProgramDensity;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::rng::unit_rng;

use super::kernel::{Tempered, TransitionKernel};

#[derive(Clone, Debug, PartialEq)]
pub struct McmcConfig {
    pub kernel: TransitionKernel,
    pub chains: usize,
    /// Transitions per chain, including burn-in.
    pub samples_per_chain: usize,
    pub burn_in: usize,
}

impl McmcConfig {
    pub fn retained(&self) -> usize {
        self.chains * self.samples_per_chain.saturating_sub(self.burn_in)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McmcResult {
    /// Return values of retained samples, interleaved across chains:
    /// sample t of chain c is at `t·chains + c`.
    pub returns: Vec<Vec<f64>>,
    pub chains: usize,
    pub acceptance_rate: f64,
    /// Density evaluations, burn-in included.
    pub evaluations: u64,
}

impl McmcResult {
    /// Empirical mean of return `index` over retained samples.
    pub fn estimate(&self, index: usize) -> f64 {
        self.estimate_prefix(index, self.returns.len())
    }

    /// Mean of return `index` over the first `count` retained samples.
    pub fn estimate_prefix(&self, index: usize, count: usize) -> f64 {
        let used = &self.returns[..count.min(self.returns.len())];
        used.iter().map(|r| r[index]).sum::<f64>() / used.len() as f64
    }
}

/// Runs `chains` independent chains targeting the full density, each started
/// at a prior draw and advanced one kernel transition per sample.
pub fn mcmc_baseline<M: Model>(
    density: &ProgramDensity<M>,
    config: &McmcConfig,
    seed: u64,
) -> Result<McmcResult> {
    if config.chains == 0 || config.samples_per_chain <= config.burn_in {
        return Err(Error::Configuration(
            "MCMC needs at least one chain and one retained sample".into(),
        ));
    }
    let kernel = &config.kernel;
    let target = Tempered { density, beta: 1.0 };
    let per_chain = (0..config.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = unit_rng(seed, c as u64);
            let start = density.draw_prior(&mut rng)?;
            let mut state = kernel.init_state(&target, start)?;
            let mut current: Option<Vec<f64>> = None;
            let mut accepted = 0usize;
            let mut kept = Vec::with_capacity(config.samples_per_chain - config.burn_in);
            for t in 0..config.samples_per_chain {
                if kernel.transition(&mut state, &target, &mut rng)? {
                    accepted += 1;
                    current = None;
                }
                if t >= config.burn_in {
                    let returns = match current.take() {
                        Some(r) => r,
                        None => density.evaluate(&state.position)?.returns,
                    };
                    kept.push(returns.clone());
                    current = Some(returns);
                }
            }
            Ok((kept, accepted))
        })
        .collect::<Result<Vec<_>>>()?;

    let retained = config.samples_per_chain - config.burn_in;
    let mut returns = Vec::with_capacity(config.retained());
    for t in 0..retained {
        for (chain, _) in &per_chain {
            returns.push(chain[t].clone());
        }
    }
    let accepted: usize = per_chain.iter().map(|(_, a)| a).sum();
    let transitions = (config.chains * config.samples_per_chain) as u64;
    Ok(McmcResult {
        returns,
        chains: config.chains,
        acceptance_rate: accepted as f64 / transitions as f64,
        evaluations: config.chains as u64 + transitions * kernel.evaluations_per_transition(),
    })
}
