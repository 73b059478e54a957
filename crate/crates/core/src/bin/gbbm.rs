use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use gbbm::runner::{self, ConfigOverrides, ExperimentConfig, ExperimentKind};

/// Numerical experiments for the generalized BBM flow and its Gaussian measures.
#[derive(Parser)]
#[command(name = "gbbm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one initial state and write its trajectory.
    Simulate(Flags),
    /// Track the conserved quantity over a long run.
    Conservation(Flags),
    /// Jacobian determinant and diagonal partials of the truncated flow.
    Liouville(Flags),
    /// Transported probability, direct versus Radon-Nikodym weighted.
    Transport(Flags),
    /// Fit and verify the energy-derivative bound on samples.
    Energy(Flags),
    /// Growth of L^p norms of a sample in p.
    LargeDeviation(Flags),
    /// Divergent partial sums for the singular forcing.
    SingularDemo(Flags),
    /// Hilbert-Schmidt partial sums of the nonlinear Duhamel term.
    DkDiagnostic(Flags),
    /// Run the experiment named in the config file.
    Run(Flags),
    /// Check a configuration without running it.
    Validate(Flags),
}

#[derive(Args)]
struct Flags {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    #[arg(long)]
    s: Option<u32>,
    #[arg(long)]
    n_modes: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    dt: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    t: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; experiments write to <out-dir>/<experiment>/.
    #[arg(long, env = "GBBM_OUT_DIR")]
    out_dir: Option<PathBuf>,
}

impl Flags {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            gamma: self.gamma,
            s: self.s,
            n_modes: self.n_modes,
            dt: self.dt,
            t: self.t,
            samples: self.samples,
            master_seed: self.seed,
            out_dir: self.out_dir.clone(),
            ..Default::default()
        }
    }
}

enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

fn resolve(kind: Option<ExperimentKind>, flags: &Flags) -> Result<ExperimentConfig, Failure> {
    let file = flags
        .config
        .as_deref()
        .map(ConfigOverrides::from_file)
        .transpose()
        .context("reading config")
        .map_err(Failure::Config)?;
    let cfg = ExperimentConfig::resolve(kind, file.as_ref(), &flags.overrides())
        .context("resolving config")
        .map_err(Failure::Config)?;
    let diagnostics = runner::validate(&cfg);
    if !diagnostics.is_empty() {
        for d in &diagnostics {
            eprintln!("invalid {d}");
        }
        return Err(Failure::Config(anyhow::anyhow!("{} invalid field(s)", diagnostics.len())));
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<bool, Failure> {
    let (kind, flags, dry) = match cli.command {
        Command::Simulate(f) => (Some(ExperimentKind::Simulate), f, false),
        Command::Conservation(f) => (Some(ExperimentKind::Conservation), f, false),
        Command::Liouville(f) => (Some(ExperimentKind::Liouville), f, false),
        Command::Transport(f) => (Some(ExperimentKind::Transport), f, false),
        Command::Energy(f) => (Some(ExperimentKind::Energy), f, false),
        Command::LargeDeviation(f) => (Some(ExperimentKind::LargeDeviation), f, false),
        Command::SingularDemo(f) => (Some(ExperimentKind::SingularDemo), f, false),
        Command::DkDiagnostic(f) => (Some(ExperimentKind::DkDiagnostic), f, false),
        Command::Run(f) => (None, f, false),
        Command::Validate(f) => (None, f, true),
    };
    let cfg = resolve(kind, &flags)?;
    if dry {
        println!("{}: ok (config {})", cfg.experiment, cfg.hash().map_err(|e| Failure::Config(e.into()))?);
        return Ok(true);
    }
    let report = runner::run(&cfg).context("running experiment").map_err(Failure::Run)?;
    for c in &report.checks {
        println!(
            "{:<4} {} = {:.6e} ({} {:.6e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.comparison,
            c.threshold
        );
    }
    println!(
        "{}: {} in {:.2}s, output in {}",
        report.experiment,
        if report.passed { "passed" } else { "failed" },
        report.elapsed_seconds,
        cfg.output_dir().display()
    );
    Ok(report.passed)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
