//! Experiment configuration: per-experiment defaults, a TOML file, then flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context as _};
use serde::{Deserialize, Serialize};

use expecto_core::inference::{KernelKind, ScheduleKind, TransitionKernel, DEFAULT_BETA_MIN};

#[derive(
    Clone,
    Copy,
    Debug,
    PartialEq,
    Eq,
    PartialOrd,
    Ord,
    Hash,
    Serialize,
    Deserialize,
    clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Gaussian,
    Sir,
    Radon,
    Banana,
    Conjugate1d,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Gaussian => "gaussian",
            Experiment::Sir => "sir",
            Experiment::Radon => "radon",
            Experiment::Banana => "banana",
            Experiment::Conjugate1d => "conjugate1d",
        }
    }

    /// Whether the target function is non-negative, so Z₁⁻ needs no samples.
    pub fn positive_target(self) -> bool {
        matches!(
            self,
            Experiment::Gaussian | Experiment::Sir | Experiment::Radon
        )
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(
    Clone,
    Copy,
    Debug,
    PartialEq,
    Eq,
    PartialOrd,
    Ord,
    Hash,
    Serialize,
    Deserialize,
    clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Taanis,
    Anis,
    Mcmc,
    Is,
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Taanis => "taanis",
            Method::Anis => "anis",
            Method::Mcmc => "mcmc",
            Method::Is => "is",
            Method::Oracle => "oracle",
        }
    }

    /// Methods compared at a matched evaluation budget.
    pub fn budget_matched(self) -> bool {
        matches!(self, Method::Taanis | Method::Anis | Method::Mcmc)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Kernel without the steps-per-rung count: `mh:<variance>` or `hmc:<step size>:<leapfrog steps>`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct KernelSpec(pub KernelKind);

impl KernelSpec {
    pub fn with_steps(self, steps: usize) -> anyhow::Result<TransitionKernel> {
        Ok(match self.0 {
            KernelKind::Mh { variance } => TransitionKernel::mh(variance, steps)?,
            KernelKind::Hmc {
                step_size,
                leapfrog_steps,
            } => TransitionKernel::hmc(step_size, leapfrog_steps, steps)?,
        })
    }
}

impl FromStr for KernelSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let kind = match parts.as_slice() {
            ["mh", variance] => KernelKind::Mh {
                variance: variance.parse().context("MH variance")?,
            },
            ["hmc", eps, l] => KernelKind::Hmc {
                step_size: eps.parse().context("HMC step size")?,
                leapfrog_steps: l.parse().context("HMC leapfrog steps")?,
            },
            _ => {
                bail!("kernel must be mh:<variance> or hmc:<step size>:<leapfrog steps>, got {s:?}")
            }
        };
        KernelSpec(kind).with_steps(1)?;
        Ok(KernelSpec(kind))
    }
}

impl TryFrom<String> for KernelSpec {
    type Error = anyhow::Error;
    fn try_from(s: String) -> anyhow::Result<Self> {
        s.parse()
    }
}

impl From<KernelSpec> for String {
    fn from(k: KernelSpec) -> String {
        k.to_string()
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            KernelKind::Mh { variance } => write!(f, "mh:{variance}"),
            KernelKind::Hmc {
                step_size,
                leapfrog_steps,
            } => write!(f, "hmc:{step_size}:{leapfrog_steps}"),
        }
    }
}

/// `uniform`, `geometric` or `geometric:<beta_min>`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ScheduleSpec(pub ScheduleKind);

impl FromStr for ScheduleSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        let kind = match s.trim().split(':').collect::<Vec<_>>().as_slice() {
            ["uniform"] => ScheduleKind::Uniform,
            ["geometric"] => ScheduleKind::Geometric {
                beta_min: DEFAULT_BETA_MIN,
            },
            ["geometric", b] => ScheduleKind::Geometric {
                beta_min: b.parse().context("beta_min")?,
            },
            _ => bail!("schedule must be uniform, geometric or geometric:<beta_min>, got {s:?}"),
        };
        Ok(ScheduleSpec(kind))
    }
}

impl TryFrom<String> for ScheduleSpec {
    type Error = anyhow::Error;
    fn try_from(s: String) -> anyhow::Result<Self> {
        s.parse()
    }
}

impl From<ScheduleSpec> for String {
    fn from(s: ScheduleSpec) -> String {
        s.to_string()
    }
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            ScheduleKind::Uniform => f.write_str("uniform"),
            ScheduleKind::Geometric { beta_min } => write!(f, "geometric:{beta_min}"),
        }
    }
}

/// Seeds as an inclusive range `a..b` or a comma-separated list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SeedsRepr")]
pub struct Seeds(pub Vec<u64>);

#[derive(Deserialize)]
#[serde(untagged)]
enum SeedsRepr {
    List(Vec<u64>),
    Text(String),
}

impl TryFrom<SeedsRepr> for Seeds {
    type Error = anyhow::Error;
    fn try_from(r: SeedsRepr) -> anyhow::Result<Self> {
        match r {
            SeedsRepr::List(v) if !v.is_empty() => Ok(Seeds(v)),
            SeedsRepr::List(_) => bail!("seed list is empty"),
            SeedsRepr::Text(s) => s.parse(),
        }
    }
}

impl FromStr for Seeds {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        let s = s.trim();
        let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
            let (a, b): (u64, u64) = (
                a.parse().context("seed range start")?,
                b.parse().context("seed range end")?,
            );
            if b < a {
                bail!("empty seed range {s:?}");
            }
            (a..=b).collect()
        } else {
            s.split(',')
                .map(|x| x.trim().parse().context("seed"))
                .collect::<anyhow::Result<_>>()?
        };
        if seeds.is_empty() {
            bail!("no seeds given");
        }
        Ok(Seeds(seeds))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcSettings {
    pub chains: usize,
    pub burn_in: usize,
    pub kernel: KernelSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSettings {
    /// Prior draws for the SIR reference value.
    pub samples: usize,
    pub seed: u64,
    /// Smallest acceptable ESS of the reference estimate.
    pub min_ess: f64,
}

impl Default for GroundTruthSettings {
    fn default() -> Self {
        GroundTruthSettings {
            samples: 10_000_000,
            seed: 1,
            min_ess: 100.0,
        }
    }
}

/// A fully resolved experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub methods: Vec<Method>,
    pub rungs: usize,
    /// Total particles K per method; MCMC retains `rungs·particles` samples.
    pub particles: usize,
    pub kernel: KernelSpec,
    /// Kernel transitions per rung.
    pub steps: usize,
    pub schedule: ScheduleSpec,
    pub seeds: Seeds,
    pub mcmc: McmcSettings,
    pub ground_truth: GroundTruthSettings,
    /// Radon counties kept.
    pub counties: usize,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let mh = |variance| KernelSpec(KernelKind::Mh { variance });
        let hmc = |step_size, leapfrog_steps| {
            KernelSpec(KernelKind::Hmc {
                step_size,
                leapfrog_steps,
            })
        };
        let geometric = |beta_min| ScheduleSpec(ScheduleKind::Geometric { beta_min });
        let uniform = ScheduleSpec(ScheduleKind::Uniform);
        let mcmc = |chains, kernel| McmcSettings {
            chains,
            burn_in: 1000,
            kernel,
        };
        let (rungs, particles, kernel, steps, schedule, seeds, mcmc) = match experiment {
            Experiment::Gaussian => (100, 1000, mh(0.5), 5, uniform, 10, mcmc(500, mh(1.0))),
            Experiment::Sir => (
                100,
                400,
                hmc(0.05, 10),
                10,
                geometric(DEFAULT_BETA_MIN),
                5,
                mcmc(100, hmc(0.05, 10)),
            ),
            Experiment::Radon => (
                200,
                100,
                hmc(0.044, 10),
                1,
                geometric(DEFAULT_BETA_MIN),
                10,
                mcmc(100, hmc(0.044, 10)),
            ),
            Experiment::Banana => (
                200,
                3000,
                mh(4.0),
                10,
                geometric(1e-3),
                10,
                mcmc(100, mh(4.0)),
            ),
            Experiment::Conjugate1d => (100, 3000, mh(0.5), 5, uniform, 10, mcmc(10, mh(1.0))),
        };
        ExperimentConfig {
            experiment,
            methods: vec![Method::Taanis, Method::Anis, Method::Mcmc],
            rungs,
            particles,
            kernel,
            steps,
            schedule,
            seeds: Seeds((0..seeds).collect()),
            mcmc,
            ground_truth: GroundTruthSettings::default(),
            counties: expecto_core::models::radon::DEFAULT_COUNTIES,
            out: None,
            threads: None,
        }
    }

    pub fn transition_kernel(&self) -> anyhow::Result<TransitionKernel> {
        self.kernel.with_steps(self.steps)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.rungs == 0 || self.particles == 0 {
            bail!("rungs and particles must be positive");
        }
        if self.methods.is_empty() {
            bail!("no methods selected");
        }
        if self.methods.contains(&Method::Mcmc) {
            let samples = self.rungs * self.particles;
            if self.mcmc.chains == 0 || !samples.is_multiple_of(self.mcmc.chains) {
                bail!(
                    "{samples} MCMC samples do not split evenly over {} chains",
                    self.mcmc.chains
                );
            }
        }
        self.transition_kernel()?;
        Ok(())
    }
}

/// Every field optional; present fields replace the experiment defaults.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<Experiment>,
    pub methods: Option<Vec<Method>>,
    pub rungs: Option<usize>,
    pub particles: Option<usize>,
    pub kernel: Option<KernelSpec>,
    pub steps: Option<usize>,
    pub schedule: Option<ScheduleSpec>,
    pub seeds: Option<Seeds>,
    pub mcmc: Option<McmcFile>,
    pub ground_truth: Option<GroundTruthFile>,
    pub counties: Option<usize>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcFile {
    pub chains: Option<usize>,
    pub burn_in: Option<usize>,
    pub kernel: Option<KernelSpec>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthFile {
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub min_ess: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Fields that override the defaults of the chosen experiment.
    pub fn apply(self, config: &mut ExperimentConfig) {
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = self.$field { config.$field = v; })* };
        }
        set!(methods, rungs, particles, kernel, steps, schedule, seeds, counties);
        if self.out.is_some() {
            config.out = self.out;
        }
        if self.threads.is_some() {
            config.threads = self.threads;
        }
        if let Some(m) = self.mcmc {
            config.mcmc.chains = m.chains.unwrap_or(config.mcmc.chains);
            config.mcmc.burn_in = m.burn_in.unwrap_or(config.mcmc.burn_in);
            config.mcmc.kernel = m.kernel.unwrap_or(config.mcmc.kernel);
        }
        if let Some(g) = self.ground_truth {
            config.ground_truth.samples = g.samples.unwrap_or(config.ground_truth.samples);
            config.ground_truth.seed = g.seed.unwrap_or(config.ground_truth.seed);
            config.ground_truth.min_ess = g.min_ess.unwrap_or(config.ground_truth.min_ess);
        }
    }
}

/// Overrides from the command line; these win over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub experiment: Option<Experiment>,
    pub methods: Option<Vec<Method>>,
    pub seeds: Option<Seeds>,
    pub particles: Option<usize>,
    pub rungs: Option<usize>,
    pub kernel: Option<KernelSpec>,
    pub steps: Option<usize>,
    pub schedule: Option<ScheduleSpec>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

/// Defaults of the experiment, then the file, then the flags.
pub fn resolve(file: Option<ConfigFile>, flags: Overrides) -> anyhow::Result<ExperimentConfig> {
    let file = file.unwrap_or_default();
    let Some(experiment) = flags.experiment.or(file.experiment) else {
        bail!("no experiment given (use --experiment or set it in the config file)");
    };
    let mut config = ExperimentConfig::defaults(experiment);
    file.apply(&mut config);
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = flags.$field { config.$field = v; })* };
    }
    set!(methods, seeds, particles, rungs, kernel, steps, schedule);
    if flags.out.is_some() {
        config.out = flags.out;
    }
    if flags.threads.is_some() {
        config.threads = flags.threads;
    }
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_and_schedule_syntax() {
        assert_eq!(
            "mh:0.5".parse::<KernelSpec>().unwrap().0,
            KernelKind::Mh { variance: 0.5 }
        );
        assert_eq!(
            "hmc:0.05:10".parse::<KernelSpec>().unwrap().0,
            KernelKind::Hmc {
                step_size: 0.05,
                leapfrog_steps: 10
            }
        );
        assert!("mh:-1".parse::<KernelSpec>().is_err());
        assert!("nuts".parse::<KernelSpec>().is_err());
        assert_eq!(
            "geometric:0.01".parse::<ScheduleSpec>().unwrap().0,
            ScheduleKind::Geometric { beta_min: 0.01 }
        );
        for text in ["mh:0.5", "hmc:0.044:10"] {
            assert_eq!(text.parse::<KernelSpec>().unwrap().to_string(), text);
        }
    }

    #[test]
    fn seed_syntax() {
        assert_eq!(
            "0..9".parse::<Seeds>().unwrap().0,
            (0..10).collect::<Vec<_>>()
        );
        assert_eq!("3, 1,4".parse::<Seeds>().unwrap().0, vec![3, 1, 4]);
        assert!("5..2".parse::<Seeds>().is_err());
    }

    #[test]
    fn defaults_follow_the_published_settings() {
        let g = ExperimentConfig::defaults(Experiment::Gaussian);
        assert_eq!(
            (g.rungs, g.steps, g.kernel.to_string(), g.schedule.0),
            (100, 5, "mh:0.5".into(), ScheduleKind::Uniform)
        );
        let s = ExperimentConfig::defaults(Experiment::Sir);
        assert_eq!(
            (s.rungs, s.steps, s.kernel.to_string()),
            (100, 10, "hmc:0.05:10".into())
        );
        assert!(matches!(s.schedule.0, ScheduleKind::Geometric { .. }));
        let r = ExperimentConfig::defaults(Experiment::Radon);
        assert_eq!(
            (r.rungs, r.kernel.to_string()),
            (200, "hmc:0.044:10".into())
        );
        let b = ExperimentConfig::defaults(Experiment::Banana);
        assert_eq!(b.rungs, 200);
        assert!(matches!(b.kernel.0, KernelKind::Mh { .. }));
    }

    #[test]
    fn flags_win_over_file() {
        let file: ConfigFile = toml::from_str(
            "experiment = \"gaussian\"\nparticles = 200\nrungs = 10\nseeds = \"0..2\"\n[mcmc]\nchains = 20\n",
        )
        .unwrap();
        let flags = Overrides {
            particles: Some(400),
            ..Overrides::default()
        };
        let c = resolve(Some(file), flags).unwrap();
        assert_eq!(
            (c.particles, c.rungs, c.mcmc.chains, c.seeds.0.len()),
            (400, 10, 20, 3)
        );
        assert_eq!(c.mcmc.burn_in, 1000);
    }

    #[test]
    fn unknown_keys_and_uneven_chains_are_rejected() {
        assert!(toml::from_str::<ConfigFile>("particle = 3").is_err());
        let flags = Overrides {
            experiment: Some(Experiment::Gaussian),
            particles: Some(7),
            rungs: Some(3),
            ..Overrides::default()
        };
        assert!(resolve(None, flags).is_err());
    }
}
