use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use egoreid::pipeline::{
    cmd_eval, cmd_extract, cmd_train, cmd_transfer, run_gradcheck, with_jobs, JobConfig, Manifest, DEFAULT_GRADCHECK_SEED,
};
use egoreid::retrieval::table_row;
use egoreid::{Error, ErrorCategory, Result};

/// Style-transfer data augmentation and re-identification evaluation.
#[derive(Parser)]
#[command(name = "egoreid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Style-transfer every content record onto its paired style image.
    Transfer {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fine-tune the network on the train records.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write descriptors for the query and gallery records.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Rank a gallery for each query and report CMC and mAP. One file is
    /// evaluated against itself; two files are query then gallery.
    Eval {
        #[arg(required = true, num_args = 1..=2)]
        descriptors: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare every analytic gradient with finite differences.
    Gradcheck {
        /// Finite-difference step.
        #[arg(long)]
        eps: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
}

/// Flags that override the config file.
#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Channel-width scale: 1, 1/4 or 1/8.
    #[arg(long)]
    scale: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<JobConfig> {
        let mut cfg = match &self.config {
            Some(path) => JobConfig::load(path)?,
            None => JobConfig::default(),
        };
        if let Some(w) = &self.weights {
            cfg.weights = Some(w.clone());
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        if let Some(s) = &self.scale {
            cfg.set("scale", s)?;
        }
        if let Some(n) = self.iterations {
            cfg.nst.iterations = n;
        }
        if let Some(j) = self.jobs {
            cfg.jobs = Some(j);
        }
        Ok(cfg)
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Transfer { manifest, common } => {
            let cfg = common.config()?;
            let manifest = Manifest::load(&manifest)?;
            let items = with_jobs(cfg.jobs, || cmd_transfer(&manifest, &cfg))??;
            for it in &items {
                println!("{} -> {} (loss {:e})", it.content, it.image.display(), it.final_loss.total);
            }
        }
        Command::Train { manifest, common } => {
            let cfg = common.config()?;
            let manifest = Manifest::load(&manifest)?;
            let s = with_jobs(cfg.jobs, || cmd_train(&manifest, &cfg))??;
            println!(
                "trained {} classes: loss {:.4} -> {:.4}, accuracy {:.2}%",
                s.classes.len(),
                s.report.initial_loss,
                s.report.final_loss,
                s.report.final_accuracy * 100.0
            );
            println!("weights written to {}", s.weights.display());
        }
        Command::Extract { manifest, common } => {
            let cfg = common.config()?;
            let manifest = Manifest::load(&manifest)?;
            for path in with_jobs(cfg.jobs, || cmd_extract(&manifest, &cfg))?? {
                println!("{}", path.display());
            }
        }
        Command::Eval { descriptors, common } => {
            let cfg = common.config()?;
            let report = with_jobs(cfg.jobs, || cmd_eval(&descriptors, &cfg))??;
            println!("{}", egoreid::retrieval::TABLE_HEADER);
            println!("{}", table_row(&report));
            if !report.excluded.is_empty() {
                println!("{} queries without ground truth were excluded", report.excluded.len());
            }
        }
        Command::Gradcheck { eps, common } => {
            let cfg = common.config()?;
            let eps = eps.unwrap_or(cfg.gradcheck_eps);
            let seed = cfg.seed.unwrap_or(DEFAULT_GRADCHECK_SEED);
            let report = with_jobs(cfg.jobs, || run_gradcheck(eps, seed))??;
            print!("{}", report.render());
            if !report.passed() {
                return Err(Error::Numerical("gradient check failed".into()));
            }
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Validation => 1,
        ErrorCategory::Numerical => 2,
        ErrorCategory::Io => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
