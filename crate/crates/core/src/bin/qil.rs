use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qil::commands::{self, CertifyArgs, CertifyInput, FringeArgs, Invocation, ReproduceArgs, SimulateArgs, Target, TomographyArgs, TomographySource};
use qil::io;
use qil::mdi::TwoPhotonVariant;
use qil::sim::CircuitConfig;
use qil::tomography::ProjectionMode;

/// Interferometer tomography, protocol simulation and randomness certification.
///
/// Set QIL_LOG (error, warn, info, debug, trace) to control logging.
#[derive(Parser)]
#[command(name = "qil", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Circuit config (JSON); defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "qil-out")]
    out: PathBuf,
    /// Simulated seconds.
    #[arg(long, global = true)]
    duration: Option<f64>,
    /// Mean photon number, overriding the config.
    #[arg(long, global = true)]
    mu: Option<f64>,
    /// Confidence parameter, overriding the config.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Input whose outcomes are certified.
    #[arg(long, global = true, default_value_t = 4)]
    target_input: usize,
    /// Built-in tomography fixture (paper-4x4, paper-7x7).
    #[arg(long, global = true)]
    fixture: Option<String>,
    /// Two-photon component of the randomness input.
    #[arg(long, global = true, default_value = "paper", value_parser = parse_variant)]
    two_photon_variant: TwoPhotonVariant,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct a unitary from a fixture or from intensity and phase-scan CSVs.
    Tomography {
        #[arg(long, requires = "scans", conflicts_with = "fixture")]
        intensity: Option<PathBuf>,
        #[arg(long, requires = "intensity")]
        scans: Option<PathBuf>,
        /// Monte Carlo draws (0 disables error bars).
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value = "constrained", value_parser = parse_mode)]
        mode: ProjectionMode,
    },
    /// Run the protocol and write the run log and per-zone tables.
    Simulate,
    /// Certify min-entropy from a counts CSV or every zone of a run log.
    Certify {
        #[arg(long, conflicts_with = "runlog", required_unless_present = "runlog")]
        frequencies: Option<PathBuf>,
        #[arg(long)]
        runlog: Option<PathBuf>,
        /// Treat frequencies as exact probabilities.
        #[arg(long)]
        exact: bool,
    },
    /// Fringe scan at the operating point, after realigning from a random drift.
    Fringe {
        #[arg(long, default_value_t = 33)]
        points: usize,
        /// Pulses per point; expected rates if omitted.
        #[arg(long)]
        pulses: Option<u64>,
        /// Skip the random misalignment and realignment.
        #[arg(long)]
        aligned: bool,
    },
    /// Check a reported result: fidelity-4x4, fidelity-7x7, ideal-entropy, entropy-band.
    Reproduce {
        target: String,
        /// Monte Carlo draws for fidelity-4x4.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Rerun the command recorded in a manifest.
    Rerun { manifest: PathBuf },
}

fn parse_variant(s: &str) -> Result<TwoPhotonVariant, String> {
    s.parse().map_err(|e: qil::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<ProjectionMode, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("unknown mode `{s}`; expected constrained or polar-then-gauge"))
}

fn config(g: &Global) -> qil::Result<CircuitConfig> {
    let mut c = match &g.config {
        Some(p) => io::load_config(p)?,
        None => CircuitConfig::default(),
    };
    if let Some(s) = g.seed {
        c.seed = s;
    }
    if let Some(mu) = g.mu {
        c.mu = mu;
    }
    if let Some(e) = g.epsilon {
        c.epsilon = e;
    }
    c.validate()?;
    Ok(c)
}

fn invocation(cli: Cli) -> qil::Result<Option<Invocation>> {
    let g = cli.global;
    let inv = match cli.command {
        Command::Rerun { manifest } => {
            let out = g.out;
            let outcome = commands::rerun(&manifest, Some(out))?;
            print!("{}", outcome.report);
            return Ok(None);
        }
        Command::Tomography {
            intensity,
            scans,
            samples,
            mode,
        } => {
            let source = match (intensity, scans, g.fixture.clone()) {
                (Some(intensity), Some(scans), _) => TomographySource::Files { intensity, scans },
                (_, _, Some(name)) => TomographySource::Fixture(name),
                _ => return Err(qil::Error::InvalidInput("tomography needs --fixture or --intensity with --scans".into())),
            };
            Invocation::Tomography(TomographyArgs {
                source,
                samples,
                seed: g.seed.unwrap_or(0x6d63),
                mode,
                out: g.out,
            })
        }
        Command::Simulate => Invocation::Simulate(SimulateArgs {
            config: config(&g)?,
            duration: g.duration.unwrap_or(600.0),
            out: g.out,
        }),
        Command::Certify {
            frequencies,
            runlog,
            exact,
        } => {
            let c = config(&g)?;
            let input = match (frequencies, runlog) {
                (Some(p), _) => CertifyInput::Frequencies(p),
                (_, Some(p)) => CertifyInput::RunLog(p),
                _ => unreachable!("clap requires one input"),
            };
            Invocation::Certify(CertifyArgs {
                input,
                mu: c.mu,
                epsilon: c.epsilon,
                target: g.target_input,
                variant: g.two_photon_variant,
                exact,
                out: g.out,
            })
        }
        Command::Fringe { points, pulses, aligned } => Invocation::Fringe(FringeArgs {
            config: config(&g)?,
            points,
            pulses,
            realign: !aligned,
            out: g.out,
        }),
        Command::Reproduce { target, samples } => {
            let mut args = ReproduceArgs::new(target.parse::<Target>()?);
            args.samples = samples;
            args.config = config(&g)?;
            args.variant = g.two_photon_variant;
            if let Some(d) = g.duration {
                args.duration = d;
            }
            args.out = Some(g.out);
            Invocation::Reproduce(args)
        }
    };
    Ok(Some(inv))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QIL_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = invocation(cli).and_then(|inv| inv.map(|i| commands::run(&i)).transpose());
    match result {
        Ok(Some(outcome)) => {
            print!("{}", outcome.report);
            if outcome.success {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
