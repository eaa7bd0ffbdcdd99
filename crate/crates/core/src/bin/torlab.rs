use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use torlab::harness::{parse_scenario, run, HarnessError, Overrides, RunKind};

#[derive(Parser)]
#[command(name = "torlab", version, about = "Intersections X ∩ [n]Y on complex tori: scans, densities, segments, equidistribution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve X ∩ [n]Y over a range of n, classify components, measure coverage.
    IntersectScan(Common),
    /// Empirical bad-n fractions for a point pair, with the exact torsion density.
    Density(Common),
    /// Enumerate and summarize the graph segments of [n].
    Segments(Common),
    /// Weyl sums, discrepancy and approximating translates of an orbit.
    Equidist(Common),
    /// Exact density of the torsion congruence conditions.
    TorsionDelta(Common),
    /// Bad-n census for a point pair or a pair of divisors.
    Census(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Root tolerance, overriding the file.
    #[arg(long)]
    tol: Option<f64>,
}

fn execute(kind: RunKind, c: &Common) -> Result<(), HarnessError> {
    let scenario = parse_scenario(&c.config, Some(kind), Overrides { seed: c.seed, tol: c.tol })?;
    let manifest = run(&scenario, &c.out, c.threads)?;
    println!("{}: wrote {} files to {} (scenario {})", kind.name(), manifest.outputs.len() + 1, c.out.display(), &manifest.scenario_hash[..12]);
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = match &cli.command {
        Command::IntersectScan(c) => (RunKind::IntersectScan, c),
        Command::Density(c) => (RunKind::Density, c),
        Command::Segments(c) => (RunKind::Segments, c),
        Command::Equidist(c) => (RunKind::Equidist, c),
        Command::TorsionDelta(c) => (RunKind::TorsionDelta, c),
        Command::Census(c) => (RunKind::Census, c),
    };
    match execute(kind, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
