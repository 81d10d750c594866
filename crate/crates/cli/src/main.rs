//! Command-line front end: `pretrain`, `run`, `selfcheck`, `gradcheck`.
//!
//! Exit codes: 0 success, 1 validation or data error, 2 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use graphprompt::experiment::{
    load_dataset, pretrain_collection, run, ExperimentConfig, FaultySquare, SelfCheck, SelfCheckReport,
    DEFAULT_STEP, DEFAULT_TOLERANCE, KEYS,
};
use graphprompt::Error;

#[derive(Parser)]
#[command(
    name = "graphprompt",
    version,
    about = "Graph pre-training and prompt tuning for few-shot classification",
    after_help = "Every config key is also accepted as a flag on `run` and `pretrain`, \
                  e.g. `--epochs 50` or `--pretrain-kind dgi,graphcl`."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train encoders and write checkpoints and training curves.
    Pretrain(RunArgs),
    /// Pre-train, then tune and evaluate prompts on sampled few-shot tasks.
    Run(RunArgs),
    /// Run the gradient, identity and oracle self-check suites.
    Selfcheck {
        /// Register a primitive with a deliberately wrong gradient.
        #[arg(long, hide = true)]
        inject_fault: bool,
        /// Run with an empty registry.
        #[arg(long, hide = true)]
        empty: bool,
    },
    /// Run only the finite-difference gradient checks.
    Gradcheck {
        #[arg(long, default_value_t = DEFAULT_STEP)]
        step: f64,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file (key = value lines).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset directory; overrides `data_dir`.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Any config key, as `key=value`; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = ExperimentConfig::from_file(&self.config)?;
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got {o:?}")))?;
            cfg.set(k, v)?;
        }
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(dir) = &self.data_dir {
            cfg.data_dir = dir.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn report_checks(report: &SelfCheckReport) -> ExitCode {
    for name in &report.passed {
        println!("ok    {name}");
    }
    for (name, reason) in &report.failures {
        println!("FAIL  {name}: {reason}");
    }
    println!("{} passed, {} failed", report.passed.len(), report.failures.len());
    ExitCode::from(report.exit_code() as u8)
}

fn execute(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Pretrain(args) => {
            let cfg = args.config()?;
            let c = load_dataset(&cfg)?;
            for r in pretrain_collection(&c, &cfg)? {
                println!(
                    "{} {} seed {}: loss {} -> {}",
                    c.name,
                    r.kind,
                    r.seed,
                    r.outcome.initial_loss(),
                    r.outcome.final_loss()
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run(args) => {
            let cfg = args.config()?;
            let report = run(&cfg)?;
            for s in &report.settings {
                let t = s.setting;
                println!(
                    "{} {} seed {} {} {}-shot {}: accuracy {:.4} ± {:.4}",
                    report.dataset, t.kind, t.seed, t.level, t.k, t.mode, s.mean, s.std
                );
            }
            println!("reports written to {}", report.out_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Selfcheck { inject_fault, empty } => {
            let mut suite = if empty { SelfCheck::empty() } else { SelfCheck::standard() };
            if inject_fault {
                suite.register_custom_op(Arc::new(FaultySquare), 3, 4);
            }
            Ok(report_checks(&suite.run()))
        }
        Command::Gradcheck { step, tolerance } => {
            if !(step > 0.0 && tolerance > 0.0) {
                return Err(Error::Config("step and tolerance must be positive".into()));
            }
            Ok(report_checks(&SelfCheck::gradient_suite(step, tolerance).run()))
        }
    }
}

/// Rewrites `--<config key> value` (or `--<config key>=value`) into
/// `--set key=value`; dashes in the key may stand for underscores.
fn expand_key_flags(args: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut out = Vec::new();
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            out.push(arg);
            continue;
        };
        let (name, inline) = match flag.split_once('=') {
            Some((n, v)) => (n.replace('-', "_"), Some(v.to_string())),
            None => (flag.replace('-', "_"), None),
        };
        // these already have dedicated flags
        if !KEYS.contains(&name.as_str()) || name == "seed" || name == "data_dir" {
            out.push(arg);
            continue;
        }
        match inline.or_else(|| iter.next()) {
            Some(value) => {
                out.push("--set".into());
                out.push(format!("{name}={value}"));
            }
            None => out.push(arg),
        }
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse_from(expand_key_flags(std::env::args())) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
