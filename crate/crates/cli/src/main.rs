//! erasure-lab: train small neural text classifiers and explain their
//! decisions by representation erasure.

mod commands;
mod config;

use commands::{analysis, data_model, rl_cmds};
use config::{CliError, CliResult, RunConfig};

const USAGE: &str = "\
erasure-lab <command> [--flag value]...

commands:
  synth             generate a synthetic task (embeddings + dataset)
  train             train a model and save it
  eval              metrics on a dataset split
  importance        erasure importance of input dimensions or hidden units
  layer-importance  per-layer importance scans
  word-ranking      word types ranked by importance
  histogram         histogram of word-type importances
  freq-corr         correlation of a dimension with log word frequency
  rl-train          train the minimal-erasure policy
  rl-apply          run the policy, writing erased-word records
  oracle            exact minimal flipping sets (short inputs)
  render            re-render a matrix CSV as an SVG heatmap

common flags: --config FILE (key value lines; flags override),
--seed N, --split train|dev|test|all, --split-seed N.
Set ERASURE_LAB_THREADS to parallelize analyses (unset or 0 = one
deterministic worker).";

fn dispatch(argv: &[String]) -> CliResult<()> {
    let Some(command) = argv.first() else {
        return Err(config::UsageError(format!("missing command\n\n{USAGE}")).into());
    };
    if command == "--help" || command == "-h" || command == "help" {
        println!("{USAGE}");
        return Ok(());
    }
    let cfg = RunConfig::from_args(&argv[1..])?;
    let threads = erasure_lab_core::parallel::threads_from_env();
    match command.as_str() {
        "synth" => data_model::synth(&cfg),
        "train" => data_model::train_cmd(&cfg),
        "eval" => data_model::eval_cmd(&cfg),
        "importance" => analysis::importance_cmd(&cfg, threads),
        "layer-importance" => analysis::layer_importance_cmd(&cfg, threads),
        "word-ranking" => analysis::word_ranking_cmd(&cfg, threads),
        "histogram" => analysis::histogram_cmd(&cfg, threads),
        "freq-corr" => analysis::freq_corr_cmd(&cfg),
        "rl-train" => rl_cmds::rl_train_cmd(&cfg),
        "rl-apply" => rl_cmds::rl_apply_cmd(&cfg),
        "oracle" => rl_cmds::oracle_cmd(&cfg),
        "render" => analysis::render_cmd(&cfg),
        other => Err(config::UsageError(format!("unknown command {other:?}\n\n{USAGE}")).into()),
    }
}

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match dispatch(&argv) {
        Ok(()) => {}
        Err(CliError::Usage(e)) => {
            eprintln!("error: usage: {e}");
            std::process::exit(2);
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
