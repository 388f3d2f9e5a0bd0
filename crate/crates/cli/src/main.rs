//! Command-line front end for the poisoning and scanning pipeline.
//!
//! Every setting resolves as flag > `--paper-scale` preset > config file >
//! built-in default. Exit codes: 0 on success (including help and version),
//! 1 for usage problems, 2 for data or model failures. Diagnostics and
//! progress go to stderr; `eval` summaries go to stdout.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use config::FileConfig;

/// Usage exits 1 (bad flags, bad config, out-of-range values); Data exits 2
/// (missing or malformed inputs, training or scanning failures).
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl From<autodetect::Error> for CliError {
    fn from(e: autodetect::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Settings shared by every runner, resolved once from flags and the config
/// file. `paper` switches the scale knobs to their paper values.
pub struct Globals {
    pub cfg: FileConfig,
    pub seed: u64,
    pub paper: bool,
}

impl Globals {
    pub fn paper_side(&self) -> Option<usize> {
        self.paper.then_some(320)
    }

    pub fn paper_epochs(&self) -> Option<u32> {
        self.paper.then_some(200)
    }

    pub fn paper_slice(&self) -> Option<usize> {
        self.paper.then_some(25)
    }

    pub fn paper_patch(&self) -> Option<usize> {
        self.paper.then_some(25)
    }
}

#[derive(Parser)]
#[command(
    name = "autodetect",
    version,
    about = "Patch-poisoning attack and reconstruction-error defense pipeline"
)]
struct Cli {
    /// JSON config file supplying defaults; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed; all randomness derives from it. [default: 0]
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads. [default: all logical cores]
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Use paper-scale settings: 320x320 images, 200 epochs, slice 25, patch 25.
    #[arg(long, global = true)]
    paper_scale: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic detection corpora.
    #[command(subcommand)]
    Synth(SynthCmd),
    /// Generate adversarial patches.
    #[command(subcommand)]
    Patch(PatchCmd),
    /// Blend a patch into a split and rewrite its labels.
    Poison(commands::PoisonArgs),
    /// Train the convolutional autoencoder.
    #[command(subcommand)]
    Ae(AeCmd),
    /// Fit the score reference and scan splits.
    #[command(subcommand)]
    Detect(DetectCmd),
    /// Evaluate scan reports and run parameter sweeps.
    #[command(subcommand)]
    Eval(EvalCmd),
}

#[derive(Subcommand)]
enum SynthCmd {
    /// Render a corpus of synthetic images with a manifest.
    Gen(commands::SynthGenArgs),
}

#[derive(Subcommand)]
enum PatchCmd {
    /// Render a patch PNG.
    Gen(commands::PatchGenArgs),
}

#[derive(Subcommand)]
enum AeCmd {
    /// Train on a clean split and save the model plus a loss log.
    Train(commands::AeTrainArgs),
}

#[derive(Subcommand)]
enum DetectCmd {
    /// Fit the Gaussian reference to clean validation slice errors.
    Fit(commands::DetectFitArgs),
    /// Score a split against a fitted reference.
    Scan(commands::DetectScanArgs),
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Compute AUROC and accuracy from a scan report.
    Auroc(commands::EvalAurocArgs),
    /// Run the patch-side x slice-side detectability grid.
    Sweep(commands::EvalSweepArgs),
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    if let Some(n) = cli.threads.or(cfg.threads) {
        if n == 0 {
            return Err(CliError::Usage(
                "--threads (config key threads): must be at least 1".into(),
            ));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let g = Globals {
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        paper: cli.paper_scale || cfg.paper_scale.unwrap_or(false),
        cfg,
    };
    match cli.cmd {
        Cmd::Synth(SynthCmd::Gen(a)) => commands::synth_gen(&g, a),
        Cmd::Patch(PatchCmd::Gen(a)) => commands::patch_gen(&g, a),
        Cmd::Poison(a) => commands::poison(&g, a),
        Cmd::Ae(AeCmd::Train(a)) => commands::ae_train(&g, a),
        Cmd::Detect(DetectCmd::Fit(a)) => commands::detect_fit(&g, a),
        Cmd::Detect(DetectCmd::Scan(a)) => commands::detect_scan(&g, a),
        Cmd::Eval(EvalCmd::Auroc(a)) => commands::eval_auroc(&g, a),
        Cmd::Eval(EvalCmd::Sweep(a)) => commands::eval_sweep(&g, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            eprintln!("error: a subcommand is required; see --help");
            return ExitCode::from(1);
        }
        Err(e) => {
            // First rendered line names the offending flag or value.
            let rendered = e.render().to_string();
            let line = rendered
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("error: invalid usage");
            eprintln!("{line}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
