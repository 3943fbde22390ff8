use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gazeaug_core::augment::{AugmentationParams, HeadPoseDistribution};
use gazeaug_core::canonical::procedural_face_model;
use gazeaug_core::pipeline::{
    augment_dataset, evaluate_files, ingest_manifest, preview_sample, stats, AugmentOptions, Channels, Ingest,
};
use gazeaug_core::synthetic::write_dataset;
use gazeaug_core::FaceModel;

#[derive(Parser)]
#[command(name = "gazeaug", version, about = "Semi-synthetic gaze dataset augmentation")]
struct Cli {
    /// Log progress (-v) or everything (-vv).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Re-pose every manifest sample and render eye patches.
    Augment {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        face_model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
        copies: u32,
    },
    /// Gaze and head-pose angle histograms as CSV.
    Stats {
        /// Input manifest or augmented records.jsonl.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Solve head pose of manifest samples against this model.
        #[arg(long)]
        face_model: Option<PathBuf>,
    },
    /// Mean angular error of predictions against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Render copy 0 of one sample: face view, both patches and a manifest line.
    Preview {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        face_model: PathBuf,
        #[arg(long)]
        sample: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Write a rendered synthetic dataset with exact labels, plus the face model used.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    mean_yaw: f64,
    #[arg(long, default_value_t = 30.0, allow_hyphen_values = true)]
    mean_pitch: f64,
    /// deg²
    #[arg(long, default_value_t = 10.0)]
    var_yaw: f64,
    /// deg²
    #[arg(long, default_value_t = 10.0)]
    var_pitch: f64,
    /// Normalized camera distance, mm.
    #[arg(long, default_value_t = 600.0)]
    dn: f64,
    /// Normalized focal length, px.
    #[arg(long = "fn", default_value_t = 650.0)]
    f_n: f64,
    /// Patch size as HEIGHTxWIDTH.
    #[arg(long, default_value = "64x96", value_parser = parse_patch)]
    patch: (u32, u32),
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ChannelArg::Gray)]
    channels: ChannelArg,
    /// Gray level where nothing is rendered.
    #[arg(long, default_value_t = 0)]
    background: u8,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelArg {
    Gray,
    Rgb,
}

fn parse_patch(s: &str) -> Result<(u32, u32), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or("expected HEIGHTxWIDTH, e.g. 64x96")?;
    let parse = |v: &str| v.trim().parse::<u32>().ok().filter(|&n| n > 0);
    match (parse(h), parse(w)) {
        (Some(h), Some(w)) => Ok((h, w)),
        _ => Err("patch dimensions must be positive integers".into()),
    }
}

/// Bad flag values detected after parsing; exit code 2 like clap's own.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

impl RunArgs {
    fn options(&self, copies: u32) -> Result<AugmentOptions> {
        let params = AugmentationParams {
            d_n: self.dn,
            f_n: self.f_n,
            patch_height: self.patch.0,
            patch_width: self.patch.1,
            seed: self.seed,
            distribution: HeadPoseDistribution {
                mean_yaw: self.mean_yaw,
                mean_pitch: self.mean_pitch,
                var_yaw: self.var_yaw,
                var_pitch: self.var_pitch,
            },
        };
        params.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(AugmentOptions {
            params,
            copies,
            channels: match self.channels {
                ChannelArg::Gray => Channels::Gray,
                ChannelArg::Rgb => Channels::Rgb,
            },
            background: self.background,
        })
    }
}

fn load_inputs(manifest: &Path, face_model: &Path) -> Result<(FaceModel, Ingest)> {
    let model = FaceModel::load(face_model).with_context(|| format!("loading {}", face_model.display()))?;
    let ingest = ingest_manifest(manifest, Some(model.vertices.len()))?;
    for e in &ingest.errors {
        log::warn!("{}: {e}", manifest.display());
    }
    if !ingest.errors.is_empty() {
        eprintln!("{}: {} invalid lines skipped", manifest.display(), ingest.errors.len());
    }
    Ok((model, ingest))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Augment {
            manifest,
            face_model,
            out,
            run,
            copies,
        } => {
            let options = run.options(copies)?;
            let (model, ingest) = load_inputs(&manifest, &face_model)?;
            let summary = augment_dataset(&ingest.records, &model, &options, &out)?;
            println!(
                "samples: {}, skipped (already done): {}, failed: {}, records written: {}",
                summary.samples,
                summary.skipped_samples,
                summary.failed.len(),
                summary.records_written
            );
            for (id, reason) in &summary.failed {
                println!("failed {id}: {reason}");
            }
        }
        Command::Stats { input, out, face_model } => {
            let model = face_model.map(|p| FaceModel::load(&p)).transpose()?;
            let hist = stats(&input, model.as_ref())?;
            std::fs::write(&out, hist.to_csv()).with_context(|| format!("writing {}", out.display()))?;
            if hist.out_of_range > 0 {
                eprintln!("{} angles outside [-91, 91) not counted", hist.out_of_range);
            }
        }
        Command::Eval { pred, truth } => {
            print!("{}", evaluate_files(&pred, &truth)?);
        }
        Command::Preview {
            manifest,
            face_model,
            sample,
            out,
            run,
        } => {
            let options = run.options(1)?;
            let (model, ingest) = load_inputs(&manifest, &face_model)?;
            let preview = preview_sample(&ingest.records, &sample, &model, &options)?;
            preview.save(&sample, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Synth { out, count, seed } => {
            let model = procedural_face_model();
            let manifest = write_dataset(&out, &model, count, seed)?;
            let model_path = out.join("face_model.json");
            model.save(&model_path)?;
            println!("wrote {} and {}", manifest.display(), model_path.display());
        }
    }
    Ok(())
}

/// The error chain joined with `: `. Core errors already print their
/// source, so a cause already present in the previous message is dropped.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !last.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
        last = msg;
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_parsing() {
        assert_eq!(parse_patch("64x96"), Ok((64, 96)));
        assert_eq!(parse_patch("36X60"), Ok((36, 60)));
        assert!(parse_patch("64").is_err());
        assert!(parse_patch("0x96").is_err());
    }

    #[test]
    fn repeated_causes_are_printed_once() {
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        let e = anyhow::Error::new(gazeaug_core::pipeline::PipelineError::Io {
            path: "m.jsonl".into(),
            source: io,
        })
            .context("loading inputs");
        assert_eq!(describe(&e), "loading inputs: m.jsonl: gone");
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
