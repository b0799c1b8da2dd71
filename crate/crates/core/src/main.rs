use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use micrec::app;
use micrec::config::RunConfig;
use micrec::eval::Slice;
use micrec::graph::DomainTag;
use micrec::synth::SynthConfig;
use micrec::{Error, Result};

#[derive(Parser)]
#[command(name = "micrec", version, about = "Inductive multimodal cross-domain recommendation")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Configuration override, repeatable; applied after the file and before
    /// dedicated flags.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Variant {
    /// Disable modality-based aggregation.
    #[arg(long)]
    no_mm: bool,
    /// Disable the cross-domain contrastive loss.
    #[arg(long)]
    no_cd: bool,
    /// Aggregate with visual similarity only.
    #[arg(long)]
    no_txt: bool,
    /// Aggregate with text similarity only.
    #[arg(long)]
    no_vis: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Filter, split and index two raw domains.
    Prepare {
        #[arg(long)]
        raw_a: Option<PathBuf>,
        #[arg(long)]
        raw_b: Option<PathBuf>,
        /// Overlapping user keys, one per line or `keyA<TAB>keyB`.
        #[arg(long)]
        overlap: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on a prepared directory.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        variant: Variant,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        precision: Option<String>,
    },
    /// Evaluate a checkpoint on the test interactions.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated cut-offs.
        #[arg(long, value_delimiter = ',', default_value = "20")]
        n: Vec<usize>,
        /// Comma-separated slices: `all`, `low:<q>`.
        #[arg(long, value_delimiter = ',', default_value = "all")]
        slices: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Top-N items for one user.
    Recommend {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "A")]
        domain: String,
        #[arg(long)]
        user: String,
        #[arg(long, default_value_t = 10)]
        top_n: usize,
    },
    /// Run the built-in invariant checks.
    Selftest,
    /// Generate and prepare a planted synthetic two-domain dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        users: usize,
    },
}

fn set_path(cfg: &mut RunConfig, key: &str, p: &Option<PathBuf>) -> Result<()> {
    if let Some(p) = p {
        cfg.set(key, &p.display().to_string())?;
    }
    Ok(())
}

fn base_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&cli.set)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MICREC_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("MICREC_THREADS={v:?} must be a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let mut cfg = base_config(&cli)?;
    match &cli.command {
        Command::Prepare {
            raw_a,
            raw_b,
            overlap,
            out,
        } => {
            set_path(&mut cfg, "raw_a", raw_a)?;
            set_path(&mut cfg, "raw_b", raw_b)?;
            set_path(&mut cfg, "overlap", overlap)?;
            set_path(&mut cfg, "data_dir", out)?;
            let stats = app::prepare(&cfg)?;
            println!("{}", micrec::dataset::DomainStats::HEADER);
            for s in stats {
                println!("{}", s.to_line());
            }
        }
        Command::Train {
            data,
            out,
            variant,
            epochs,
            precision,
        } => {
            set_path(&mut cfg, "data_dir", data)?;
            set_path(&mut cfg, "out_dir", out)?;
            for (flag, key) in [
                (variant.no_mm, "no_mm"),
                (variant.no_cd, "no_cd"),
                (variant.no_txt, "no_txt"),
                (variant.no_vis, "no_vis"),
            ] {
                if flag {
                    cfg.set(key, "true")?;
                }
            }
            if let Some(e) = epochs {
                cfg.set("epochs", &e.to_string())?;
            }
            if let Some(p) = precision {
                cfg.set("precision", p)?;
            }
            let s = app::train(&cfg)?;
            println!(
                "trained {} epochs, best epoch {}, validation Recall@{} {:.4}; checkpoint {}",
                s.epochs,
                s.best_epoch.map_or("-".into(), |e| e.to_string()),
                cfg.model.train.eval_n,
                s.best_val,
                s.checkpoint.display()
            );
        }
        Command::Eval {
            data,
            checkpoint,
            n,
            slices,
            out,
        } => {
            set_path(&mut cfg, "data_dir", data)?;
            set_path(&mut cfg, "out_dir", out)?;
            let slices = slices.iter().map(|s| s.parse()).collect::<Result<Vec<Slice>>>()?;
            let report = app::eval(&cfg, checkpoint, n, &slices)?;
            print!("{}", report.to_table());
        }
        Command::Recommend {
            data,
            checkpoint,
            domain,
            user,
            top_n,
        } => {
            set_path(&mut cfg, "data_dir", data)?;
            let domain: DomainTag = domain.parse()?;
            for (item, score) in app::recommend(&cfg, checkpoint, domain, user, *top_n)? {
                println!("{item}\t{score}");
            }
        }
        Command::Selftest => {
            let results = micrec::selftest::run();
            let failed = results.iter().filter(|r| !r.passed).count();
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            if failed > 0 {
                return Err(Error::NonFinite(format!("{failed} self-test check(s) failed")));
            }
        }
        Command::Synth { out, users } => {
            let synth = SynthConfig {
                users: *users,
                seed: cfg.seed,
                ..SynthConfig::default()
            };
            if cli.config.is_none() && !cli.set.iter().any(|s| s.starts_with("min_degree")) {
                cfg.filter.min_degree = 0;
            }
            let cfg = app::write_synthetic(out, &synth, &cfg)?;
            println!(
                "synthetic data prepared in {}",
                cfg.data_dir.as_ref().map(|d| d.display().to_string()).unwrap_or_default()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
