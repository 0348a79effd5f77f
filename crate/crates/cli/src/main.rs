use clap::{Parser, Subcommand};

use ntm_cli::commands::{
    cmd_cooc, cmd_correlate, cmd_eval, cmd_topics, cmd_train, CoocArgs, CorrelateArgs, EvalArgs,
    TopicsArgs, TrainArgs,
};

/// Neural variational topic models with coherence-aware training.
#[derive(Parser)]
#[command(name = "ntm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and emit checkpoint, trace, and manifest.
    Train(TrainArgs),
    /// List each topic's top words with coherence scores.
    Topics(TopicsArgs),
    /// Score a checkpoint on a corpus: perplexity and coherence.
    Eval(EvalArgs),
    /// Count sliding-window co-occurrences into a reusable cache.
    Cooc(CoocArgs),
    /// Correlate coherence metrics against human topic ratings.
    Correlate(CorrelateArgs),
}

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a, &argv),
        Command::Topics(a) => cmd_topics(a, &argv),
        Command::Eval(a) => cmd_eval(a, &argv),
        Command::Cooc(a) => cmd_cooc(a, &argv),
        Command::Correlate(a) => cmd_correlate(a, &argv),
    };
    if let Err(e) = result {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
