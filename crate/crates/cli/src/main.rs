use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use corridor_core::harness::{
    evaluate, read_trace, render_timeline, train, write_trace, EvaluationConfig, TableBundle, TrainingConfig,
};
use corridor_core::metrics::{text_report, write_csv};
use corridor_core::topology::{load_scenario, ArterialStrategy, DemandLevel, IncidentMode};

/// Log verbosity is read from this variable (`error` .. `trace`).
const LOG_ENV: &str = "CORRIDOR_LOG";

#[derive(Parser)]
#[command(name = "corridor", version, about = "Freeway/arterial corridor control: train, evaluate, replay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the shared signal and speed/offset tables.
    Train(TrainArgs),
    /// Score control strategies over seeded replications.
    Evaluate(EvaluateArgs),
    /// Print the per-cycle timeline of a trace written by `evaluate --trace`.
    Replay {
        /// Trace file (JSON lines)
        trace: PathBuf,
    },
    /// Check a scenario file and print a summary.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 500)]
    episodes: usize,
    /// Episode length, hours
    #[arg(long, default_value_t = 12)]
    episode_hours: u64,
    /// Continue from an existing table bundle
    #[arg(long)]
    qtable_in: Option<PathBuf>,
    #[arg(long)]
    qtable_out: PathBuf,
    /// Per-episode convergence log (CSV)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    /// Strategies to run; repeat or separate with commas
    #[arg(long = "arterial-control", value_delimiter = ',', default_values_t = ArterialStrategy::ALL.to_vec())]
    arterial_control: Vec<ArterialStrategy>,
    #[arg(long, default_value = "off")]
    incident: IncidentMode,
    #[arg(long)]
    demand: Option<DemandLevel>,
    #[arg(long, default_value_t = 10)]
    replications: usize,
    #[arg(long)]
    qtable_in: Option<PathBuf>,
    /// One CSV row per run
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-cycle trace (JSON lines) for `replay`
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn create(path: &PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn run_train(args: TrainArgs) -> Result<ExitCode> {
    let config = load_scenario(&args.common.scenario)?;
    let training = TrainingConfig {
        episode_length: args.episode_hours * 3600,
        max_episodes: args.episodes,
        seed: args.common.seed.unwrap_or(config.seed),
        ..Default::default()
    };
    let tables = args.qtable_in.as_ref().map(TableBundle::restore).transpose()?;
    let mut log_out = args.out.as_ref().map(create).transpose()?.map(csv::Writer::from_writer);
    let mut write_err = None;
    let outcome = train(&config, &training, tables, |e| {
        if let Some(w) = log_out.as_mut() {
            if let Err(err) = w.serialize(e).and_then(|_| w.flush().map_err(Into::into)) {
                write_err.get_or_insert(err);
            }
        }
    })?;
    if let Some(err) = write_err {
        bail!("writing the training log: {err}");
    }
    outcome.tables.persist(&args.qtable_out)?;
    info!(
        "{} episodes, converged: {}; tables written to {}",
        outcome.log.len(),
        outcome.converged,
        args.qtable_out.display()
    );
    println!(
        "episodes {} converged {} tsc_pairs {} dso_pairs {}",
        outcome.log.len(),
        outcome.converged,
        outcome.tables.tsc.len(),
        outcome.tables.dso.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn run_evaluate(args: EvaluateArgs) -> Result<ExitCode> {
    let config = load_scenario(&args.common.scenario)?;
    let eval = EvaluationConfig {
        incident: args.incident,
        replications: args.replications,
        demand_level: args.demand.unwrap_or(config.demand_level),
        strategies: args.arterial_control,
        seed: args.common.seed.unwrap_or(config.seed),
        ..Default::default()
    };
    let tables = args.qtable_in.as_ref().map(TableBundle::restore).transpose()?;
    let result = evaluate(&config, &eval, tables.as_ref(), args.trace.is_some())?;
    if let Some(path) = &args.out {
        write_csv(&result.reports, create(path)?)?;
    }
    if let Some(path) = &args.trace {
        let mut w = create(path)?;
        write_trace(&result.trace, &mut w)?;
        w.flush()?;
    }
    let title = format!(
        "{} | demand {:?} | incident {:?} | {} replications",
        config.name, eval.demand_level, eval.incident, eval.replications
    );
    print!("{}", text_report(&title, &result.summaries));
    let flagged: Vec<String> = result
        .reports
        .iter()
        .flat_map(|r| r.flagged().into_iter().map(move |k| format!("{} seed {}: {}", r.strategy, r.seed, k.column())))
        .collect();
    if flagged.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for f in &flagged {
            eprintln!("no samples for {f}");
        }
        Ok(ExitCode::from(2))
    }
}

fn run() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Train(args) => run_train(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Replay { trace } => {
            let file = File::open(&trace).with_context(|| format!("opening {}", trace.display()))?;
            print!("{}", render_timeline(&read_trace(BufReader::new(file))?));
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { scenario } => {
            let c = load_scenario(&scenario)?;
            println!(
                "{}: {} intersections, {} links, {} cells, {} ramps, {} demand entrances",
                c.name,
                c.num_intersections(),
                c.links.len(),
                c.cells.len(),
                c.ramps.len(),
                c.demands.len()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
