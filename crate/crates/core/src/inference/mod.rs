pub mod importance;
pub mod kernel;
pub mod mcmc;
pub mod schedule;

pub use importance::{
    anis_evaluations_per_particle, annealed_importance_sample, importance_sample_prior,
    prior_importance_expectation, ImportanceExpectation, WeightedSampleSet,
};
pub use kernel::{
    hmc_step, leapfrog, mh_step, ChainState, KernelKind, Target, Tempered, TransitionKernel,
};
pub use mcmc::{mcmc_baseline, McmcConfig, McmcResult};
pub use schedule::{build_schedule, AnnealingSchedule, ScheduleKind, DEFAULT_BETA_MIN};
