//! Library half of the `psp` binary: argument types, manifests, the shared
//! pipeline and one function per subcommand.

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod report;

pub use error::{CliError, CliResult};

use args::{Cli, Command};

/// Runs a parsed command line and returns what should go to stdout.
pub fn run(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Extract(a) => commands::extract(a),
        Command::Refine(a) => commands::refine_cmd(a),
        Command::Baseline(a) => commands::baseline(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Bench(a) => commands::bench_cmd(a),
        Command::Explain(a) => commands::explain(a),
    }
}
