use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use resobs::pipeline::{exit_code_for_error, run_pipeline, Command, EXIT_OK, EXIT_USAGE};
use resobs::scenario::load_scenario;

#[derive(Parser)]
#[command(
    name = "resobs",
    version,
    about = "Design, simulate and verify resilient observer networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Solve the LMIs and Riccati equations; write design_report.json and gains.csv.
    Design(Common),
    /// Design, then simulate the closed loop; also write trace.csv.
    Simulate(Common),
    /// Design, simulate and check every bound; also write verification.json.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (defaults to the scenario's output.dir, then ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long = "gamma-bar")]
    gamma_bar: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let (cmd, args) = match cli.command {
        Sub::Design(a) => (Command::Design, a),
        Sub::Simulate(a) => (Command::Simulate, a),
        Sub::Verify(a) => (Command::Verify, a),
    };
    let result = load_scenario(&args.scenario)
        .and_then(|sc| sc.with_overrides(args.gamma, args.gamma_bar, args.seed))
        .and_then(|sc| {
            let out = args
                .out
                .clone()
                .or_else(|| sc.spec.output.dir.clone())
                .unwrap_or_else(|| PathBuf::from("out"));
            run_pipeline(&sc, cmd, Some(&out))
        });
    match result {
        Ok(out) => {
            let r = &out.design_report;
            println!(
                "design: gamma = {}, gamma_bar = {}, r = {:.6}, r_bar = {:.6}",
                r.gamma, r.gamma_bar, r.detector_lmi.r, r.observer_lmi.r_bar
            );
            if let (Some(g), Some(gb)) = (r.gamma_min, r.gamma_bar_min) {
                println!("smallest feasible: gamma = {g:.6}, gamma_bar = {gb:.6}");
            }
            if let Some(v) = &out.verification {
                let b = &v.resilience_bound;
                println!(
                    "resilience bound: lhs = {:.6e}, rhs = {:.6e}, satisfied = {}",
                    b.lhs, b.rhs, b.satisfied
                );
                println!("oracle deviation: {:.3e}", v.oracle_deviation);
                println!("verification {}", if v.passed { "passed" } else { "FAILED" });
            }
            for p in &out.written {
                println!("wrote {}", p.display());
            }
            ExitCode::from(out.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for_error(&e) as u8)
        }
    }
}
