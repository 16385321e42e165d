use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;
use tamperscope::commands::{
    cmd_aen_loss, cmd_detect, cmd_score, cmd_synth, parse_algos, parse_weights, DetectConfig, ScoreConfig,
};
use tamperscope::{CliError, EXIT_PARTIAL};
use tamperscope_core::aen::DEFAULT_PATCH_SIDE;
use tamperscope_core::scoring::DEFAULT_KERNEL;

#[derive(Parser)]
#[command(name = "tamperscope", version, about = "Image forgery localization harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run detectors over every image in an index and write heatmap PNGs.
    Detect {
        /// `all` or a comma-separated list of blk,dct,ela,cfa1,cfa2,noi1,noi2,noi4.
        #[arg(long, default_value = "all")]
        algo: String,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Score heatmaps against ground-truth masks and write a JSON report.
    Score {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Score every row against the pristine region.
        #[arg(long)]
        pristine: bool,
        #[arg(long, default_value_t = DEFAULT_KERNEL)]
        kernel: usize,
        /// Restrict to these detectors; defaults to the directories found under --pred.
        #[arg(long)]
        algo: Option<String>,
    },
    /// Generate a synthetic corpus with masks and an index.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the triplet reconstruction loss on patches mined from one image.
    AenLoss {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// w0,w1,w2
        #[arg(long)]
        weights: String,
        #[arg(long, default_value_t = DEFAULT_PATCH_SIDE)]
        patch: usize,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.cmd {
        Cmd::Detect { algo, index, out, jobs } => {
            let cfg = DetectConfig { detectors: parse_algos(&algo)?, index, out, jobs };
            let s = cmd_detect(&cfg)?;
            println!("wrote {} heatmaps, skipped {}", s.written, s.skipped.len());
            Ok(if s.is_partial() { EXIT_PARTIAL } else { 0 })
        }
        Cmd::Score { pred, index, out, pristine, kernel, algo } => {
            let detectors = algo.as_deref().map(parse_algos).transpose()?;
            let cfg = ScoreConfig { pred, index, out: out.clone(), pristine, kernel, detectors };
            let r = cmd_score(&cfg)?;
            for a in &r.aggregate {
                println!(
                    "{:5} gwl1 {:6.2} ± {:5.2}  auc {:6.2} ± {:5.2}  (n={})",
                    a.detector, a.gwl1_mean, a.gwl1_std, a.auc_mean, a.auc_std, a.count
                );
            }
            println!("report: {} ({} errors)", out.display(), r.errors.len());
            Ok(if r.errors.is_empty() { 0 } else { EXIT_PARTIAL })
        }
        Cmd::Synth { spec, n, seed, out } => {
            let s = cmd_synth(&spec, n, seed, &out)?;
            println!("wrote {} items, digest {}", s.items, s.digest);
            Ok(0)
        }
        Cmd::AenLoss { image, mask, weights, patch, count, seed } => {
            let w = parse_weights(&weights)?;
            let s = cmd_aen_loss(&image, &mask, w, patch, count, seed)?;
            println!("{}", serde_json::to_string_pretty(&s).expect("summary serializes"));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TAMPERSCOPE_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
