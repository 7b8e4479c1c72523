use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pace_core::harness::config::{AblationMode, ExperimentConfig};
use pace_core::harness::corpus::{intentions_for, load_corpus, load_scenes, synthesize, write_intentions, write_scenes, INTENTIONS_FILE};
use pace_core::harness::report::{
    calibrate_kb, export_for_neural_metrics, run_ablation, run_comparison, run_methods, run_sweep, write_run, write_sweep, RunReport,
};
use pace_core::harness::{Context, HarnessError, Method};
use pace_core::intent::SynonymLexicon;

#[derive(Parser)]
#[command(name = "pace", version, about = "Intention-aware image transmission experiments")]
struct Cli {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AblateArg {
    NoVoting,
    NoKb,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Pace,
    PaceNoVoting,
    PaceNoKb,
    IntentionAgnostic,
    UniformRegions,
    LexicalSim,
}

impl MethodArg {
    fn method(self) -> Method {
        match self {
            MethodArg::Pace => Method::Pace(AblationMode::Normal),
            MethodArg::PaceNoVoting => Method::Pace(AblationMode::NoVoting),
            MethodArg::PaceNoKb => Method::Pace(AblationMode::NoKb),
            MethodArg::IntentionAgnostic => Method::IntentionAgnostic,
            MethodArg::UniformRegions => Method::UniformRegions,
            MethodArg::LexicalSim => Method::LexicalSim,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the desk corpus: scenes, images and intentions.
    GenCorpus {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate intentions for an annotation directory (holding `scenes/`).
    GenIntents {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the rate-distortion knowledge base from corpus object crops.
    Calibrate {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// PACE against all baselines at the configured wire budget.
    Run {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The comparison repeated over several wire budgets.
    Sweep {
        /// Comma-separated, ascending; defaults to the config's list.
        #[arg(long, value_delimiter = ',')]
        budgets: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Normal mode against one or both ablations.
    Ablate {
        #[arg(long, value_enum, default_value = "all")]
        mode: AblateArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Received images and level masks for external metric tools.
    Export {
        #[arg(long, value_enum, default_value = "pace")]
        method: MethodArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print_checks(report: &RunReport) {
    println!("budget {} bytes", report.channel.wire_budget_bytes);
    for r in &report.results {
        let v = |x: Option<f64>| x.map_or("n/a".to_string(), |x| format!("{x:.2}"));
        let l = |k: u8| v(r.summary.levels.get(&k).and_then(|m| m.psnr));
        println!(
            "  {:<22} global {:>7} dB  level3 {:>7}  level2 {:>7}  level1 {:>7}",
            r.method.name(),
            v(r.global_psnr()),
            l(3),
            l(2),
            l(1)
        );
    }
    for c in &report.checks {
        println!("  {c}");
    }
}

fn load_lexicon(cfg: &ExperimentConfig) -> Result<SynonymLexicon, HarnessError> {
    if cfg.paths.lexicon.as_os_str().is_empty() {
        Ok(SynonymLexicon::bundled())
    } else {
        SynonymLexicon::load(&cfg.paths.lexicon).map_err(|e| HarnessError::Config(e.to_string()))
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let out_or = |o: Option<PathBuf>, d: &Path| o.unwrap_or_else(|| d.to_path_buf());
    match cli.command {
        Command::GenCorpus { out } => {
            let dir = out_or(out, &cfg.paths.corpus);
            let lexicon = load_lexicon(&cfg)?;
            let pairs = synthesize(&cfg);
            let scenes: Vec<_> = pairs.iter().map(|(s, _)| s.clone()).collect();
            let intents = intentions_for(&scenes, &lexicon, &cfg)?;
            write_scenes(&dir, &pairs)?;
            write_intentions(&dir.join(INTENTIONS_FILE), &scenes, &intents)?;
            println!("wrote {} scenes to {}", scenes.len(), dir.display());
        }
        Command::GenIntents { annotations, seed, out } => {
            if let Some(s) = seed {
                cfg.seeds.intent = s;
            }
            let lexicon = load_lexicon(&cfg)?;
            let scenes = load_scenes(&annotations)?;
            let intents = intentions_for(&scenes, &lexicon, &cfg)?;
            for g in &intents {
                for w in &g.warnings {
                    eprintln!("warning: {w}");
                }
            }
            write_intentions(&out, &scenes, &intents)?;
            println!("wrote {} intentions to {}", intents.len(), out.display());
        }
        Command::Calibrate { out } => {
            let path = out_or(out, &cfg.paths.kb);
            let corpus = load_corpus(&cfg.paths.corpus)?;
            let ctx = Context::new(cfg, None)?;
            let kb = calibrate_kb(&ctx, &corpus)?;
            kb.save(&path).map_err(|e| HarnessError::Config(e.to_string()))?;
            println!("wrote {} curves to {}", kb.len(), path.display());
        }
        Command::Run { out } => {
            let dir = out_or(out, &cfg.paths.output);
            let corpus = load_corpus(&cfg.paths.corpus)?;
            let ctx = Context::with_kb_file(cfg)?;
            let report = run_comparison(&ctx, &corpus)?;
            write_run(&dir, &ctx.config, &report, "run")?;
            print_checks(&report);
        }
        Command::Sweep { budgets, out } => {
            let dir = out_or(out, &cfg.paths.output);
            if !budgets.is_empty() {
                cfg.sweep_budgets = budgets;
            }
            let corpus = load_corpus(&cfg.paths.corpus)?;
            let ctx = Context::with_kb_file(cfg)?;
            let reports = run_sweep(&ctx, &corpus, &ctx.config.sweep_budgets)?;
            write_sweep(&dir, &ctx.config, &reports)?;
            reports.iter().for_each(print_checks);
        }
        Command::Ablate { mode, out } => {
            let dir = out_or(out, &cfg.paths.output);
            let modes = match mode {
                AblateArg::NoVoting => vec![AblationMode::NoVoting],
                AblateArg::NoKb => vec![AblationMode::NoKb],
                AblateArg::All => vec![AblationMode::NoVoting, AblationMode::NoKb],
            };
            let corpus = load_corpus(&cfg.paths.corpus)?;
            let ctx = Context::with_kb_file(cfg)?;
            let report = run_ablation(&ctx, &corpus, &modes)?;
            write_run(&dir, &ctx.config, &report, "ablate")?;
            print_checks(&report);
        }
        Command::Export { method, out } => {
            let dir = out_or(out, &cfg.paths.output.join("export"));
            let corpus = load_corpus(&cfg.paths.corpus)?;
            let ctx = Context::with_kb_file(cfg)?;
            let results = run_methods(&ctx, &corpus, &[method.method()], &ctx.channel())?;
            let rows = export_for_neural_metrics(&corpus, &results[0], &dir)?;
            println!("exported {rows} images to {}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
