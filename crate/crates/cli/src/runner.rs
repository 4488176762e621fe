//! Executes configured experiments at matched budgets and collects result rows.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context as _};
use rayon::prelude::*;

use expecto_core::diagnostics::{
    anis_diagnostics, plan_fair_budgets, rse, taanis_diagnostics, BudgetPlan,
};
use expecto_core::inference::{
    build_schedule, mcmc_baseline, AnnealingSchedule, McmcConfig, TransitionKernel,
};
use expecto_core::models::{
    sir_ground_truth, Banana, Conjugate, GaussianPredictive, Radon, Sir, SirData,
};
use expecto_core::tabi::{
    combine, decompose, quadrature_oracle, self_normalized, Budgets, Estimator, Lattice,
};
use expecto_core::{Model, ProgramDensity};

use crate::config::{Experiment, ExperimentConfig, Method};
use crate::output::{fairness_discrepancy, finite, ResultRow};

pub const DATA_DIR_ENV: &str = "EXPECTO_DATA_DIR";
pub const SIR_DATA_FILE: &str = "sir_data.json";
pub const RADON_DATA_FILE: &str = "radon.csv";
pub const GAUSSIAN_DIM: usize = 10;
/// Checkpoints at K/32, K/16, …, K.
pub const CHECKPOINT_HALVINGS: u32 = 5;

/// Fixture directory: `EXPECTO_DATA_DIR`, else the repository's `data/`.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

/// A data file the experiment needs is absent.
#[derive(Debug)]
pub struct MissingFixture(pub PathBuf);

impl fmt::Display for MissingFixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "missing data fixture {}", self.0.display())
    }
}

impl std::error::Error for MissingFixture {}

fn fixture(dir: &Path, name: &str) -> anyhow::Result<PathBuf> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(MissingFixture(path).into());
    }
    Ok(path)
}

pub fn load_sir(dir: &Path) -> anyhow::Result<Sir> {
    let path = fixture(dir, SIR_DATA_FILE)?;
    let data = SirData::load(&path).with_context(|| format!("loading {}", path.display()))?;
    Ok(Sir::new(&data))
}

pub fn load_radon(dir: &Path, counties: usize) -> anyhow::Result<Radon> {
    let path = fixture(dir, RADON_DATA_FILE)?;
    let data = expecto_core::models::load_radon_csv(&path, counties)
        .with_context(|| format!("loading {}", path.display()))?;
    Ok(Radon::new(data))
}

/// Lattice for the banana reference value.
pub fn banana_lattice() -> Lattice {
    Lattice {
        bounds: vec![(-40.0, 40.0), (-60.0, 20.0)],
        intervals: 2000,
    }
}

/// Reference value of an experiment's expectation.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub value: f64,
    /// Model evaluations spent computing it (0 when analytic).
    pub evaluations: u64,
    pub description: String,
}

pub fn ground_truth(config: &ExperimentConfig, dir: &Path) -> anyhow::Result<Option<GroundTruth>> {
    Ok(Some(match config.experiment {
        Experiment::Conjugate1d => GroundTruth {
            value: Conjugate::cube().posterior_moment(3),
            evaluations: 0,
            description: "closed-form conjugate posterior moment".into(),
        },
        Experiment::Gaussian => GroundTruth {
            value: GaussianPredictive::new(GAUSSIAN_DIM).ground_truth(),
            evaluations: 0,
            description: "closed-form posterior predictive density".into(),
        },
        Experiment::Banana => {
            let lattice = banana_lattice();
            let q = quadrature_oracle(&decompose(Banana, 0, Budgets::new(0, 0, 0))?, &lattice)?;
            GroundTruth {
                value: q.expectation,
                evaluations: ((lattice.intervals + 1) as u64).pow(2),
                description: format!(
                    "trapezoid quadrature on a {0}×{0} lattice",
                    lattice.intervals
                ),
            }
        }
        Experiment::Sir => {
            let settings = &config.ground_truth;
            let g = sir_ground_truth(&load_sir(dir)?, settings.samples, settings.seed)?;
            if !(g.ess > settings.min_ess) {
                bail!(
                    "SIR ground truth ESS {:.1} is below the required {}",
                    g.ess,
                    settings.min_ess
                );
            }
            GroundTruth {
                value: g.estimate,
                evaluations: g.samples as u64,
                description: format!(
                    "prior importance sampling, {} draws, ESS {:.1}, std error {:.3e}",
                    g.samples, g.ess, g.std_error
                ),
            }
        }
        Experiment::Radon => return Ok(None),
    }))
}

/// Runs every configured method on every seed; rows sorted by (seed, method, evaluations).
pub fn run_experiment(config: &ExperimentConfig, dir: &Path) -> anyhow::Result<Vec<ResultRow>> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(threads) = config.threads {
        builder = builder.num_threads(threads);
    }
    let pool = builder.build()?;
    pool.install(|| match config.experiment {
        Experiment::Conjugate1d => Runner::new(config, Conjugate::cube(), dir)?.run(),
        Experiment::Gaussian => {
            Runner::new(config, GaussianPredictive::new(GAUSSIAN_DIM), dir)?.run()
        }
        Experiment::Banana => Runner::new(config, Banana, dir)?.run(),
        Experiment::Sir => Runner::new(config, load_sir(dir)?, dir)?.run(),
        Experiment::Radon => Runner::new(config, load_radon(dir, config.counties)?, dir)?.run(),
    })
}

/// Right shifts of K, coarsest checkpoint first.
fn halvings() -> impl Iterator<Item = u32> {
    (0..=CHECKPOINT_HALVINGS).rev()
}

struct Runner<'a, M> {
    config: &'a ExperimentConfig,
    model: M,
    truth: Option<GroundTruth>,
    schedule: AnnealingSchedule,
    kernel: TransitionKernel,
}

impl<'a, M: Model + Clone> Runner<'a, M> {
    fn new(config: &'a ExperimentConfig, model: M, dir: &Path) -> anyhow::Result<Self> {
        Ok(Runner {
            config,
            model,
            truth: ground_truth(config, dir)?,
            schedule: build_schedule(config.schedule.0, config.rungs)?,
            kernel: config.transition_kernel()?,
        })
    }

    fn truth(&self) -> Option<f64> {
        self.truth.as_ref().map(|t| t.value)
    }

    fn run(&self) -> anyhow::Result<Vec<ResultRow>> {
        let per_seed: Vec<Vec<ResultRow>> = self
            .config
            .seeds
            .0
            .par_iter()
            .map(|&seed| {
                let mut rows = Vec::new();
                for &method in &self.config.methods {
                    let start = Instant::now();
                    let mut method_rows = self
                        .run_method(method, seed)
                        .with_context(|| format!("{method} with seed {seed}"))?;
                    let seconds = start.elapsed().as_secs_f64();
                    method_rows.iter_mut().for_each(|r| r.seconds = seconds);
                    rows.extend(method_rows);
                }
                Ok(rows)
            })
            .collect::<anyhow::Result<_>>()?;
        let mut rows: Vec<ResultRow> = per_seed.into_iter().flatten().collect();
        rows.sort_by_key(ResultRow::sort_key);
        let discrepancy = fairness_discrepancy(&rows);
        if discrepancy != 0 {
            bail!("budget-matched methods differ by {discrepancy} evaluations at the final checkpoint");
        }
        Ok(rows)
    }

    fn row(&self, method: Method, seed: u64, evaluations: u64) -> ResultRow {
        ResultRow::empty(self.config.experiment, method, seed, evaluations)
    }

    fn with_value(
        &self,
        mut row: ResultRow,
        components: (f64, f64, f64),
        base_count: usize,
    ) -> ResultRow {
        let (p, m, z) = components;
        row.z1_plus = finite(p);
        row.z1_minus = finite(m);
        row.z2 = finite(z);
        row.estimate = combine(p, m, z, base_count).ok().and_then(finite);
        row.rse = row
            .estimate
            .zip(self.truth())
            .and_then(|(v, t)| rse(v, t).ok());
        row
    }

    fn run_method(&self, method: Method, seed: u64) -> anyhow::Result<Vec<ResultRow>> {
        let c = self.config;
        let (n, k) = (c.rungs, c.particles);
        let annealed = Estimator::Annealed {
            schedule: self.schedule.clone(),
            kernel: self.kernel,
        };
        match method {
            Method::Taanis => {
                let (BudgetPlan::Taanis { budgets, .. }, _, _) =
                    plan_fair_budgets(n, k, c.experiment.positive_target())?
                else {
                    unreachable!("the first plan is the TAAnIS one")
                };
                let estimate =
                    decompose(self.model.clone(), 0, budgets)?.run_terms(&annealed, seed)?;
                Ok(
                    self.checkpoints_tabi(method, seed, budgets, n as u64, |counts, row| {
                        let mut row =
                            self.with_value(row, estimate.components_prefix(counts), counts.base);
                        let diag =
                            taanis_diagnostics(&estimate, counts, row.estimate, self.truth());
                        (row.ess, row.ess_retargeted, row.ess_min) =
                            (diag.ess, diag.ess_retargeted, diag.ess_min);
                        row
                    }),
                )
            }
            Method::Is => {
                let budgets = lenient_budgets(k, c.experiment.positive_target());
                let estimate = decompose(self.model.clone(), 0, budgets)?
                    .run_terms(&Estimator::PriorImportance, seed)?;
                Ok(
                    self.checkpoints_tabi(method, seed, budgets, 1, |counts, row| {
                        let mut row =
                            self.with_value(row, estimate.components_prefix(counts), counts.base);
                        let diag =
                            taanis_diagnostics(&estimate, counts, row.estimate, self.truth());
                        (row.ess, row.ess_retargeted, row.ess_min) =
                            (diag.ess, diag.ess_retargeted, diag.ess_min);
                        row
                    }),
                )
            }
            Method::Anis => {
                let set = annealed.run(&ProgramDensity::new(self.model.clone())?, k, seed)?;
                let mut rows = Vec::new();
                for j in halvings() {
                    let count = k >> j;
                    if count == 0
                        || rows
                            .last()
                            .is_some_and(|r: &ResultRow| r.evaluations == (count * n) as u64)
                    {
                        continue;
                    }
                    let row = self.row(method, seed, (count * n) as u64);
                    let mut row = self.with_value(row, self_normalized(&set, 0, count)?, count);
                    let diag = anis_diagnostics(&set, 0, count, row.estimate, self.truth());
                    (row.ess, row.ess_retargeted, row.ess_min) =
                        (diag.ess, diag.ess_retargeted, diag.ess_min);
                    rows.push(row);
                }
                Ok(rows)
            }
            Method::Mcmc => {
                let retained = n * k;
                let chains = c.mcmc.chains;
                let mcmc = McmcConfig {
                    kernel: c.mcmc.kernel.with_steps(1)?,
                    chains,
                    samples_per_chain: retained / chains + c.mcmc.burn_in,
                    burn_in: c.mcmc.burn_in,
                };
                let result = mcmc_baseline(&ProgramDensity::new(self.model.clone())?, &mcmc, seed)?;
                let mut rows = Vec::new();
                for j in halvings() {
                    let count = retained >> j;
                    if count == 0
                        || rows
                            .last()
                            .is_some_and(|r: &ResultRow| r.evaluations == count as u64)
                    {
                        continue;
                    }
                    let mut row = self.row(method, seed, count as u64);
                    row.estimate = finite(result.estimate_prefix(0, count));
                    row.rse = row
                        .estimate
                        .zip(self.truth())
                        .and_then(|(v, t)| rse(v, t).ok());
                    rows.push(row);
                }
                Ok(rows)
            }
            Method::Oracle => {
                let Some(truth) = &self.truth else {
                    bail!("no ground truth is available for {}", c.experiment);
                };
                let mut row = self.row(method, seed, truth.evaluations);
                row.estimate = Some(truth.value);
                row.rse = Some(0.0);
                Ok(vec![row])
            }
        }
    }

    /// Rows for prefixes of the three TABI terms; `rungs` converts particles into budget units.
    fn checkpoints_tabi(
        &self,
        method: Method,
        seed: u64,
        budgets: Budgets,
        rungs: u64,
        fill: impl Fn(Budgets, ResultRow) -> ResultRow,
    ) -> Vec<ResultRow> {
        let mut rows: Vec<ResultRow> = Vec::new();
        for j in halvings() {
            let counts = Budgets::new(budgets.plus >> j, budgets.minus >> j, budgets.base >> j);
            let evaluations = (counts.plus + counts.minus + counts.base) as u64 * rungs;
            if counts.base == 0 || rows.last().is_some_and(|r| r.evaluations == evaluations) {
                continue;
            }
            rows.push(fill(counts, self.row(method, seed, evaluations)));
        }
        rows
    }
}

/// Prior-IS split of K draws: halves or thirds, any remainder to Z₂.
pub fn lenient_budgets(k: usize, positive_target: bool) -> Budgets {
    if positive_target {
        Budgets::new(k / 2, 0, k - k / 2)
    } else {
        Budgets::new(k / 3, k / 3, k - 2 * (k / 3))
    }
}
