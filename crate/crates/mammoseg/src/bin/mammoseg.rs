use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use mammoseg::pipeline::{self, FEATURES_FILE};
use mammoseg::{synthetic, DatasetManifest, PipelineConfig};

#[derive(Parser)]
#[command(name = "mammoseg", version, about = "Mammography CAD pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key = value configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Extract the breast region of one image.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Extract, then detect bright regions and the ROI of one image.
    Detect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Compute ROI features for one image or every manifest entry.
    Features {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
        input: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Compute features for a manifest and train the classifiers.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Evaluate saved features and model on the test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Every stage over a manifest.
    RunAll {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Write a synthetic labelled phantom dataset with its manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        train: usize,
        #[arg(long, default_value_t = 10)]
        test: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn setup(common: &Common) -> anyhow::Result<(PipelineConfig, PathBuf)> {
    let cfg = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let out = common.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok((cfg, out))
}

fn single(input: &Path) -> anyhow::Result<(String, mammoseg_core::GrayImage)> {
    Ok((pipeline::image_id(input), pipeline::read_image(input)?))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Extract { common, input } => {
            let (cfg, out) = setup(&common)?;
            let (id, img) = single(&input)?;
            let ex = pipeline::run_extract(&cfg, &img, &id)?;
            pipeline::write_extract_artifacts(&out, &id, &img, &ex)?;
            println!("{id}: threshold {} orientation {:?} breast area {}", ex.threshold, ex.orientation, ex.region.mask.count());
            if ex.separation.warning {
                println!("{id}: warning: no background found in a separation strip, mask left uncut");
            }
        }
        Command::Detect { common, input } => {
            let (cfg, out) = setup(&common)?;
            let (id, img) = single(&input)?;
            let ex = pipeline::run_extract(&cfg, &img, &id)?;
            let det = pipeline::run_detect(&cfg, &ex.region, &id)?;
            pipeline::write_extract_artifacts(&out, &id, &img, &ex)?;
            pipeline::write_detect_artifacts(&out, &id, &ex.region, &det)?;
            let r = det.roi.rect();
            println!(
                "{id}: {} regions, roi ({}, {})-({}, {}), {} iterations{}",
                det.regions.regions.label_count(),
                r.x_min,
                r.y_min,
                r.x_max,
                r.y_max,
                det.regions.iterations,
                if det.regions.converged { "" } else { " (not converged)" }
            );
        }
        Command::Features { common, input, manifest } => {
            let (cfg, out) = setup(&common)?;
            let rows = match (input, manifest) {
                (Some(input), _) => {
                    let (id, img) = single(&input)?;
                    let row = pipeline::process_image(&cfg, &img, &id, None, Some(&out))?;
                    pipeline::write_features_csv(&out.join(FEATURES_FILE), std::slice::from_ref(&row))?;
                    vec![row]
                }
                (None, Some(m)) => pipeline::manifest_features(&cfg, &DatasetManifest::load(m)?, &out)?,
                (None, None) => bail!("either --input or --manifest is required"),
            };
            println!("wrote {} feature rows to {}", rows.len(), out.join(FEATURES_FILE).display());
        }
        Command::Train { common, manifest } => {
            let (cfg, out) = setup(&common)?;
            let manifest = DatasetManifest::load(manifest)?;
            let rows = pipeline::manifest_features(&cfg, &manifest, &out)?;
            let models = pipeline::run_train(&cfg, &rows, &manifest)?;
            if let Some((m, _)) = &models.mlp {
                m.save(out.join(pipeline::MODEL_FILE))?;
            }
            for n in &models.notes {
                println!("note: {n}");
            }
            println!("trained on {} samples", models.training.len());
        }
        Command::Evaluate { common, manifest } => {
            let (cfg, out) = setup(&common)?;
            let manifest = DatasetManifest::load(manifest)?;
            let rows = pipeline::read_features_csv(&out.join(FEATURES_FILE))?;
            let models = pipeline::load_models(&cfg, &rows, &manifest, &out)?;
            let report = pipeline::run_evaluate(&cfg, &models, &rows, &manifest)?;
            pipeline::write_outputs(&out, &models, &report)?;
            print!("{}", report.to_text());
        }
        Command::RunAll { common, manifest } => {
            let (cfg, out) = setup(&common)?;
            let manifest = DatasetManifest::load(manifest)?;
            let report = pipeline::run_all(&cfg, &manifest, &out)?;
            print!("{}", report.to_text());
        }
        Command::Synth { out, train, test, size, seed } => {
            let path = synthetic::write_benchmark(&out, train, test, size, seed)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
