use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use constrained_mlm::summary::{summaries_tsv, ParameterSummary};
use constrained_mlm::workflow::{
    cmd_describe, cmd_fit, cmd_select, cmd_summarize, OutputSection, Overrides, RunConfig,
    WorkflowError,
};

/// Bayesian two-level linear models with inequality-constrained
/// hypothesis selection.
#[derive(Parser)]
#[command(name = "cmlm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Summarize the data and design a config describes.
    Describe { config: PathBuf },
    /// Estimate posterior model probabilities of the config's hypotheses.
    Select {
        config: PathBuf,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Fit one hypothesis and summarize its posterior.
    Fit {
        config: PathBuf,
        /// Hypothesis to fit; defaults to `fit.hypothesis` in the config.
        #[arg(long)]
        hypothesis: Option<String>,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Re-summarize an existing chain dump.
    Summarize {
        dump: PathBuf,
        /// Config supplying expressions, back-transformations and formats.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; defaults to the config's, else `out`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunFlags {
    #[arg(long)]
    seed: Option<u64>,
    /// Stored draws per chain.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunFlags {
    fn load(&self, path: &Path) -> Result<RunConfig, WorkflowError> {
        let mut cfg = RunConfig::load(path)?;
        cfg.apply(&Overrides {
            seed: self.seed,
            iterations: self.iters,
            burnin: self.burnin,
            chains: self.chains,
            out: self.out.clone(),
        });
        Ok(cfg)
    }
}

fn report_files(files: &[String], dir: &std::path::Path) {
    for f in files {
        eprintln!("wrote {}", dir.join(f).display());
    }
}

fn run(cli: Cli) -> Result<(), WorkflowError> {
    match cli.command {
        Command::Describe { config } => {
            let cfg = RunConfig::load(&config)?;
            print!("{}", cmd_describe(&cfg)?);
        }
        Command::Select { config, run } => {
            let cfg = run.load(&config)?;
            let (out, files) = cmd_select(&cfg)?;
            print!("{}", out.report.to_tsv());
            report_files(&files, &cfg.output.dir);
        }
        Command::Fit {
            config,
            hypothesis,
            run,
        } => {
            let cfg = run.load(&config)?;
            let (out, files) = cmd_fit(&cfg, hypothesis.as_deref())?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            print_tables(&out.summaries, &out.derived, &out.original_units);
            report_files(&files, &cfg.output.dir);
        }
        Command::Summarize { dump, config, out } => {
            let cfg = config.as_deref().map(RunConfig::load).transpose()?;
            let dir = out
                .or_else(|| cfg.as_ref().map(|c| c.output.dir.clone()))
                .unwrap_or_else(|| OutputSection::default().dir);
            let (s, files) = cmd_summarize(&dump, cfg.as_ref(), &dir)?;
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            print_tables(&s.summaries, &s.derived, &s.original_units);
            report_files(&files, &dir);
        }
    }
    Ok(())
}

fn print_tables(
    summaries: &[ParameterSummary],
    derived: &[ParameterSummary],
    original: &[ParameterSummary],
) {
    print!("{}", summaries_tsv(summaries));
    if !derived.is_empty() {
        print!("\n{}", summaries_tsv(derived));
    }
    if !original.is_empty() {
        println!("\n# original units");
        print!("{}", summaries_tsv(original));
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
