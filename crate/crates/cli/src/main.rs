use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use expecto_cli::config::{KernelSpec, ScheduleSpec, Seeds};
use expecto_cli::{
    data_dir, emit_results, exit_code, ground_truth, resolve, run_experiment, ConfigFile,
    Experiment, Method, Overrides,
};
use expecto_core::models::generate_sir_data;
use expecto_core::validate::run_invariant_suite;

#[derive(Parser)]
#[command(
    name = "expecto",
    version,
    about = "Target-aware expectation estimation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSV and JSON results.
    Run(RunArgs),
    /// Run the invariant suite.
    Validate {
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the reference value of an experiment.
    GroundTruth {
        #[arg(long, value_enum)]
        experiment: Experiment,
        /// Prior draws for the SIR reference.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Regenerate the synthetic SIR case counts.
    GenData {
        #[arg(long, default_value_t = 20211)]
        seed: u64,
        /// Defaults to sir_data.json in the data directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    experiment: Option<Experiment>,
    #[arg(long = "method", value_enum, value_delimiter = ',')]
    methods: Vec<Method>,
    /// `a..b` (inclusive) or a comma-separated list.
    #[arg(long)]
    seeds: Option<Seeds>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    rungs: Option<usize>,
    /// `mh:<variance>` or `hmc:<step size>:<leapfrog steps>`.
    #[arg(long)]
    kernel: Option<KernelSpec>,
    /// Kernel transitions per rung.
    #[arg(long)]
    steps: Option<usize>,
    /// `uniform`, `geometric` or `geometric:<beta_min>`.
    #[arg(long)]
    schedule: Option<ScheduleSpec>,
    /// CSV path; a JSON file is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let file = args.config.as_deref().map(ConfigFile::load).transpose()?;
    let flags = Overrides {
        experiment: args.experiment,
        methods: (!args.methods.is_empty()).then_some(args.methods),
        seeds: args.seeds,
        particles: args.particles,
        rungs: args.rungs,
        kernel: args.kernel,
        steps: args.steps,
        schedule: args.schedule,
        out: args.out,
        threads: args.threads,
    };
    let config = resolve(file, flags)?;
    let out = config
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("results/{}.csv", config.experiment)));
    let rows = run_experiment(&config, &data_dir())?;
    emit_results(&rows, &out)?;
    eprintln!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::FAILURE;
        }
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Validate { threads } => (|| {
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(t) = threads {
                builder = builder.num_threads(t);
            }
            let checks = builder
                .build()?
                .install(|| run_invariant_suite(&data_dir()));
            for c in &checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            println!(
                "{} of {} checks passed",
                checks.len() - failed,
                checks.len()
            );
            anyhow::ensure!(failed == 0, "{failed} invariant checks failed");
            Ok(())
        })(),
        Command::GroundTruth {
            experiment,
            samples,
            seed,
        } => (|| {
            let mut config = expecto_cli::ExperimentConfig::defaults(experiment);
            config.ground_truth.samples = samples.unwrap_or(config.ground_truth.samples);
            config.ground_truth.seed = seed.unwrap_or(config.ground_truth.seed);
            match ground_truth(&config, &data_dir())? {
                Some(t) => println!("{experiment}: {:.16e} ({})", t.value, t.description),
                None => println!("{experiment}: no reference value"),
            }
            Ok(())
        })(),
        Command::GenData { seed, out } => (|| {
            let out = out.unwrap_or_else(|| data_dir().join(expecto_cli::runner::SIR_DATA_FILE));
            let data = generate_sir_data(seed)?;
            std::fs::write(&out, serde_json::to_string_pretty(&data)? + "\n")
                .map_err(|e| anyhow::Error::new(e).context(expecto_cli::Unwritable(out.clone())))?;
            println!("wrote {}", out.display());
            Ok(())
        })(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
