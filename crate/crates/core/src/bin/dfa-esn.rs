use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dfa_esn::harness::{cmd_align, cmd_eval, cmd_sweep, cmd_train};

/// Deep echo state networks trained with direct feedback alignment.
#[derive(Parser)]
#[command(name = "dfa-esn", version)]
struct Cli {
    /// Print errors as a JSON object on stderr.
    #[arg(long, global = true)]
    json_errors: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the spec's seed(s).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write run.json, metrics.csv and model.json.
    Train(Common),
    /// Score a saved model on the spec's test split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// model.json written by `train`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Train once per seed and aggregate.
    Sweep(Common),
    /// Track update/gradient alignment on a small model.
    Align(Common),
}

fn fail(json: bool, kind: &str, message: &str) -> ExitCode {
    if json {
        let v = serde_json::json!({ "error": { "kind": kind, "message": message } });
        eprintln!("{v}");
    } else {
        eprintln!("error: {message}");
    }
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let json_requested = std::env::args().any(|a| a == "--json-errors");
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) if json_requested => return fail(true, "usage", e.to_string().trim()),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Train(c) => cmd_train(&c.spec, &c.out, c.seed).map(|r| {
            println!(
                "{} ({}, seed {}): train {:.1}% test {:.1}%",
                r.name,
                r.variant.name(),
                r.seed,
                r.final_train_acc,
                r.final_test_acc
            );
        }),
        Command::Eval { common: c, model } => cmd_eval(&c.spec, model, &c.out).map(|r| {
            println!("{} ({}): test {:.1}%", r.name, r.variant.name(), r.test_acc);
        }),
        Command::Sweep(c) => cmd_sweep(&c.spec, &c.out, c.seed).map(|a| {
            for r in &a.runs {
                match (&r.error, r.train_acc, r.test_acc) {
                    (Some(e), _, _) => println!("seed {}: failed: {e}", r.seed),
                    (None, Some(tr), Some(te)) => {
                        println!("seed {}: train {tr:.1}% test {te:.1}%", r.seed)
                    }
                    (None, Some(tr), None) => println!("seed {}: train {tr:.1}%", r.seed),
                    _ => {}
                }
            }
            if let Some(t) = &a.test {
                println!(
                    "{} ({}): median test {:.1}% (min {:.1}, max {:.1}) over {} seeds, {} failed",
                    a.name,
                    a.variant.name(),
                    t.median,
                    t.min,
                    t.max,
                    a.runs.len(),
                    a.failed
                );
            }
        }),
        Command::Align(c) => cmd_align(&c.spec, &c.out, c.seed).map(|r| {
            let fmt = |a: &Option<f64>| a.map_or("undefined".to_string(), |v| format!("{v:.1}"));
            if let Some(last) = r.epochs.last() {
                println!("readout angle {} deg", fmt(&last.readout));
                for (i, a) in last.layers.iter().enumerate() {
                    println!(
                        "layer {i}: angle {} deg, series median {} deg",
                        fmt(a),
                        fmt(&r.final_series_median[i])
                    );
                }
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(cli.json_errors, e.kind(), &e.to_string()),
    }
}
