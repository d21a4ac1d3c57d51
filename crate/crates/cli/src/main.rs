use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use psnat_cli::{CliError, RunOptions, Scenario, Session, TaskSpec};

#[derive(Parser)]
#[command(name = "psnat", version, about = "Orbit measures, barycenters and natural maps of hyperbolic groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    #[arg(long = "R-max", global = true)]
    r_max: Option<f64>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task of the scenario in order.
    Run,
    /// Enumerate the group ball and write orbit points and counts.
    Orbit,
    /// Fit the critical exponent from orbit counts.
    Exponent,
    /// Write the orbit measure at a point.
    Psmeasure,
    /// Barycenter of a measure given as CSV (`kind, b1..bd, weight`).
    Barycenter {
        #[arg(long)]
        atoms: PathBuf,
    },
    /// Evaluate the natural map on a grid of points.
    Natmap,
    /// p-Jacobians of the natural map at sample points.
    Jacobian,
    /// Monte Carlo volume of the natural map over a fundamental domain.
    Volume,
    /// Boundary map values along rays, with per-point traces.
    Ctmap,
    /// Boundary-map errors over a family of representations.
    Converge,
    /// Tabulate the visual kernel profile.
    Profile {
        /// Target dimension; the scenario's when absent.
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
    },
}

impl Command {
    fn kind(&self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Orbit => "orbit",
            Command::Exponent => "exponent",
            Command::Psmeasure => "psmeasure",
            Command::Barycenter { .. } => "barycenter",
            Command::Natmap => "natmap",
            Command::Jacobian => "jacobian",
            Command::Volume => "volume",
            Command::Ctmap => "ctmap",
            Command::Converge => "converge",
            Command::Profile { .. } => "profile",
        }
    }
}

fn load(cli: &Cli) -> Result<Scenario, CliError> {
    let mut sc = match &cli.scenario {
        Some(path) => Scenario::from_file(path)?,
        None => match &cli.command {
            // Commands that need no group fall back to a placeholder scenario.
            Command::Barycenter { .. } | Command::Profile { .. } => Scenario::from_toml("[group]\npreset = \"sanov\"\n")?,
            _ => return Err(CliError::Validation("--scenario is required for this command".into())),
        },
    };
    if let Some(r) = cli.r_max {
        sc.params.r_max = r;
    }
    if let Some(e) = cli.epsilon {
        sc.params.epsilon = e;
    }
    if let Some(s) = cli.seed {
        sc.seed = s;
    }
    match &cli.command {
        Command::Barycenter { atoms } => {
            sc.task.retain(|_, t| t.kind() != "barycenter");
            sc.task.insert(
                "barycenter".into(),
                TaskSpec::Barycenter { out: None, atoms: atoms.to_string_lossy().into_owned() },
            );
        }
        Command::Profile { dim, samples } => {
            if let Some(s) = samples {
                sc.params.profile_samples = *s;
            }
            if dim.is_some() || !sc.task.values().any(|t| t.kind() == "profile") {
                sc.task.retain(|_, t| t.kind() != "profile");
                sc.task.insert("profile".into(), TaskSpec::Profile { out: None, dim: *dim });
            }
        }
        _ => {}
    }
    Ok(sc)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = load(&cli).and_then(|sc| {
        let session = Session::new(&sc, RunOptions::new(&cli.out))?;
        match cli.command {
            Command::Run => session.run_all(),
            ref c => session.run_kind(c.kind()),
        }
    });
    match result {
        Ok(report) => {
            for a in report.artifacts {
                println!("{}", cli.out.join(a).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
