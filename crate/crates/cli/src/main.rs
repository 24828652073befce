use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use partcut::commands::{self, CommonArgs};

#[derive(Parser)]
#[command(
    name = "partcut",
    version,
    about = "Keypoint-driven superpixel graph-cut part segmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Dataset manifest JSON
    #[arg(long)]
    manifest: PathBuf,
    /// Pipeline configuration JSON (defaults used when omitted)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing)
    #[arg(long)]
    out_dir: PathBuf,
    /// Seed for stochastic steps; current commands are deterministic
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for per-image stages
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl From<Common> for CommonArgs {
    fn from(c: Common) -> Self {
        CommonArgs {
            manifest: c.manifest,
            config: c.config,
            out_dir: c.out_dir,
            seed: c.seed,
            jobs: c.jobs,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Segment each image into superpixels; write region maps and visualizations
    Superpixels {
        #[command(flatten)]
        common: Common,
    },
    /// Generate keypoint-only pseudo masks (add --use-scores to include record score maps)
    PseudoMask {
        #[command(flatten)]
        common: Common,
        /// Add the score unary term from each record's score map
        #[arg(long)]
        use_scores: bool,
    },
    /// Run the iterative refinement loop (built-in scorer, or --external-scores)
    Refine {
        #[command(flatten)]
        common: Common,
        /// Use the manifest's score maps instead of the built-in scorer
        #[arg(long)]
        external_scores: bool,
    },
    /// Cut with test-time keypoints plus the record score maps
    TestRefine {
        #[command(flatten)]
        common: Common,
    },
    /// Compare predicted masks in --pred-dir against manifest ground truth
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pred_dir: PathBuf,
    },
    /// Render palette overlays for predicted masks in --pred-dir
    Overlay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pred_dir: PathBuf,
    },
    /// Generate the synthetic stick-figure dataset with exact ground truth
    SynthFixture {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 128)]
        size: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Superpixels { common } => commands::run_superpixels(&common.into()),
        Command::PseudoMask { common, use_scores } => {
            commands::run_pseudo_mask(&common.into(), use_scores)
        }
        Command::Refine {
            common,
            external_scores,
        } => commands::run_refine(&common.into(), external_scores),
        Command::TestRefine { common } => commands::run_test_refine(&common.into()),
        Command::Evaluate { common, pred_dir } => commands::run_evaluate(&common.into(), &pred_dir),
        Command::Overlay { common, pred_dir } => commands::run_overlay(&common.into(), &pred_dir),
        Command::SynthFixture {
            out_dir,
            seed,
            count,
            size,
        } => commands::run_synth_fixture(&out_dir, seed, count, size),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
