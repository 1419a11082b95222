use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use relgen_cli::config::{ConfigError, LoadedConfig};
use relgen_cli::fixture::Fixture;
use relgen_cli::manifest::Stage;
use relgen_cli::pipeline::{Pipeline, PipelineError, StageStatus};
use relgen_cli::report::{comparison_table, Report};
use relgen_core::blending::BlendMode;

#[derive(Parser)]
#[command(
    name = "relgen",
    version,
    about = "Build a relation-classification dataset from relation tuples"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "relgen.toml")]
    config: PathBuf,
    /// Directory holding every stage output and the manifest.
    #[arg(long, global = true, default_value = "run")]
    run_dir: PathBuf,
    /// Fuse candidates in generator order instead of ranked order.
    #[arg(long, global = true, conflicts_with = "no_gold_ecb")]
    no_ranker: bool,
    /// Fuse without the gold and context-grounded sentences.
    #[arg(long, global = true)]
    no_gold_ecb: bool,
    /// Offer the classifier only the classes present in the test split.
    #[arg(long, global = true)]
    class_subset: bool,
    /// Ranking weight override, e.g. `--weights bleu=2`. Repeatable.
    #[arg(long = "weights", global = true, value_name = "METRIC=W")]
    weights: Vec<String>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Args)]
struct Force {
    /// Re-run even if the stage is complete.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Admit tuples and draw a balanced sample per relation key.
    Sample(Force),
    /// Query every generator and build silver references.
    Generate(Force),
    /// Map raw model output back to tuples.
    Map(Force),
    /// Score every candidate.
    Score(Force),
    /// Rank candidates per tuple.
    Rank(Force),
    /// Assign splits and fuse one sentence per tuple.
    Blend(Force),
    /// Validate and write the train/dev/test files.
    Split(Force),
    /// Evaluate classifiers on the test split.
    EvalRc(Force),
    /// Score the final dataset and write the run report.
    Report(Force),
    /// Every stage in order, skipping complete ones.
    RunAll(Force),
    /// Show which stages are complete.
    Status,
    /// Write a synthetic offline corpus and config.
    Fixture {
        #[arg(long)]
        out: PathBuf,
    },
    /// Side-by-side final-dataset scores from several report.json files (`[LABEL=]PATH`).
    Compare {
        #[arg(required = true)]
        reports: Vec<String>,
    },
}

fn load_config(g: &Global) -> Result<LoadedConfig, ConfigError> {
    let mut cfg = LoadedConfig::load(&g.config)?;
    let c = &mut cfg.config;
    if g.no_ranker {
        c.blend.mode = BlendMode::NoRanker;
    }
    if g.no_gold_ecb {
        c.blend.mode = BlendMode::NoGoldEcb;
    }
    if g.class_subset {
        c.rc.class_subset = true;
    }
    for w in &g.weights {
        let (name, value) = w
            .split_once('=')
            .ok_or_else(|| ConfigError::Invalid(format!("--weights {w}: expected METRIC=W")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| ConfigError::Invalid(format!("--weights {w}: not a number")))?;
        c.ranking.weights.insert(name.trim().to_string(), value);
    }
    c.validate()?;
    Ok(cfg)
}

fn open(g: &Global) -> Result<Pipeline, PipelineError> {
    Pipeline::open(load_config(g)?, &g.run_dir)
}

fn print_statuses(results: &[(Stage, StageStatus)]) {
    for (stage, status) in results {
        let word = match status {
            StageStatus::Ran => "done",
            StageStatus::Skipped => "already complete",
        };
        println!("{stage}: {word}");
    }
}

fn compare(specs: &[String]) -> anyhow::Result<()> {
    let mut runs = Vec::new();
    for spec in specs {
        let (label, path) = match spec.split_once('=') {
            Some((l, p)) => (Some(l.to_string()), p),
            None => (None, spec.as_str()),
        };
        let text =
            std::fs::read_to_string(Path::new(path)).with_context(|| format!("reading {path}"))?;
        let report: Report =
            serde_json::from_str(&text).with_context(|| format!("parsing {path}"))?;
        let mut q = report.quality;
        q.label = label.unwrap_or(report.run.mode);
        runs.push(q);
    }
    print!("{}", comparison_table(&runs));
    Ok(())
}

fn exit_code(e: &PipelineError) -> u8 {
    match e {
        PipelineError::ConfigInvalid(_) | PipelineError::ConfigChanged { .. } => 2,
        PipelineError::UpstreamMissing { .. } => 3,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let g = &cli.global;
    let single = |stage: Stage, force: &Force| -> Result<(), PipelineError> {
        let status = open(g)?.run(stage, force.force)?;
        print_statuses(&[(stage, status)]);
        Ok(())
    };
    match &cli.command {
        Command::Sample(f) => single(Stage::Sample, f),
        Command::Generate(f) => single(Stage::Generate, f),
        Command::Map(f) => single(Stage::Map, f),
        Command::Score(f) => single(Stage::Score, f),
        Command::Rank(f) => single(Stage::Rank, f),
        Command::Blend(f) => single(Stage::Blend, f),
        Command::Split(f) => single(Stage::Split, f),
        Command::EvalRc(f) => single(Stage::EvalRc, f),
        Command::Report(f) => single(Stage::Report, f),
        Command::RunAll(f) => {
            let mut p = open(g)?;
            let results = p.run_all(f.force)?;
            print_statuses(&results);
            println!(
                "report: {}",
                p.run_dir().join("report/report.txt").display()
            );
            Ok(())
        }
        Command::Status => {
            let p = open(g)?;
            println!(
                "run {} (config {})",
                p.manifest().run_id,
                &p.manifest().config_digest[..12]
            );
            for stage in Stage::ALL {
                let state = if p.is_complete(stage) {
                    "complete"
                } else {
                    "pending"
                };
                println!("{stage:<9} {state}");
            }
            Ok(())
        }
        Command::Fixture { out } => {
            std::fs::create_dir_all(out).map_err(|source| PipelineError::Io {
                path: out.clone(),
                source,
            })?;
            let files = Fixture::default().write(out)?;
            println!(
                "wrote {} tuples over {} relation keys; config at {}",
                files.tuples,
                files.keys,
                files.config.display()
            );
            Ok(())
        }
        Command::Compare { .. } => unreachable!("handled before the pipeline"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Command::Compare { reports } = &cli.command {
        return match compare(reports) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            }
        };
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
