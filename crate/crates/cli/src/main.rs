use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use netpolya::experiment::{summary_rows, write_artifacts, GeneratorSpec, Suite};
use netpolya::verify::{run_verify, VerifyConfig};
use netpolya::Execution;

const EXIT_PROPERTY: u8 = 1;
const EXIT_CONFIG: u8 = 2;

/// Network Polya contagion experiments.
#[derive(Parser)]
#[command(name = "netpolya", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every case of a suite config and write CSV artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        workers: Option<usize>,
        /// Overrides `run.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a Barabási–Albert graph as an edge list.
    GenGraph {
        /// `ba:N:M` or `ba:N:M:seed=S`.
        spec: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the process and optimizer properties on built-in fixtures.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            workers,
            seed,
        } => cmd_run(&config, &out, workers, seed),
        Command::GenGraph { spec, out } => cmd_gen_graph(&spec, &out),
        Command::Verify { config, seed } => cmd_verify(config.as_deref(), seed),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn execution(workers: Option<usize>) -> Execution {
    match workers {
        None => Execution::Parallel,
        Some(0 | 1) => Execution::Sequential,
        Some(n) => Execution::Workers(n),
    }
}

fn cmd_run(config: &Path, out: &Path, workers: Option<usize>, seed: Option<u64>) -> Result<ExitCode, String> {
    let mut cfg = netpolya::experiment::SuiteConfig::load(config).map_err(|e| e.to_string())?;
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    let base = config.parent().unwrap_or_else(|| Path::new("."));
    let suite = Suite::prepare(cfg, base).map_err(|e| e.to_string())?;
    let result = suite.run(execution(workers)).map_err(|e| e.to_string())?;
    write_artifacts(&suite, &result, out).map_err(|e| e.to_string())?;

    let stdout = io::stdout();
    let mut w = stdout.lock();
    let _ = writeln!(w, "{:<16} {:>8} {:>14} {:>14} {:>14}", "case", "strategy", "final_I", "total_waste", "mean_usage");
    for row in summary_rows(&result) {
        let _ = writeln!(
            w,
            "{:<16} {:>8} {:>14.6} {:>14.3} {:>14.3}",
            row.case, row.strategy, row.final_infection_rate, row.total_waste, row.mean_usage
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen_graph(spec: &str, out: &Path) -> Result<ExitCode, String> {
    let spec: GeneratorSpec = spec.parse().map_err(|e| format!("invalid graph spec: {e}"))?;
    let graph = spec.build().map_err(|e| e.to_string())?;
    let file = fs::File::create(out).map_err(|e| format!("cannot write {}: {e}", out.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# {spec}").map_err(|e| format!("cannot write {}: {e}", out.display()))?;
    graph
        .write_edge_list(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| format!("cannot write {}: {e}", out.display()))?;
    println!("{}: {} nodes, {} edges", out.display(), graph.node_count(), graph.edge_count());
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(config: Option<&Path>, seed: Option<u64>) -> Result<ExitCode, String> {
    let mut cfg = match config {
        Some(p) => VerifyConfig::load(p).map_err(|e| e.to_string())?,
        None => VerifyConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = run_verify(&cfg);
    for p in &report.properties {
        println!("{p}");
    }
    if report.passed() {
        println!("all gating properties hold");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("property check failed");
        Ok(ExitCode::from(EXIT_PROPERTY))
    }
}
