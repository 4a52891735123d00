use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use dynscene::io::{self, PipelineConfig};
use dynscene::pipeline::{self, SequenceState};

#[derive(Parser)]
#[command(
    name = "dynscene",
    version,
    about = "Dynamic scene segmentation and reconstruction from multi-view video"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset with ground truth from a scene description.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Segment and reconstruct the moving objects of a dataset.
    Reconstruct {
        #[arg(long)]
        dataset: PathBuf,
        /// Config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Process only this frame (still starts from a fresh temporal state).
        #[arg(long)]
        frame: Option<usize>,
        /// Comma-separated camera ids to reconstruct.
        #[arg(long, value_delimiter = ',')]
        views: Option<Vec<usize>>,
        /// Also triangulate the fused model.
        #[arg(long)]
        mesh: bool,
    },
    /// Compare written masks and depth maps with ground truth.
    Evaluate {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Outcome {
    Success,
    Degraded,
}

fn reconstruct(
    dataset: PathBuf,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    frame: Option<usize>,
    views: Option<Vec<usize>>,
    mesh: bool,
) -> dynscene::Result<Outcome> {
    let manifest = io::load_dataset(&dataset)?;
    let config = match &config {
        Some(p) => io::load_config(p)?,
        None => PipelineConfig::default(),
    };
    let out = out
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| dynscene::Error::Config {
            field: "output_dir".into(),
            reason: "pass --out or set output_dir".into(),
        })?;
    let cameras = manifest.cameras()?;
    let views = views.as_deref();

    let result = match frame {
        Some(t) => {
            let mut state = SequenceState::default();
            let r = pipeline::reconstruct_frame(&manifest, t, &config, &mut state, views)?;
            let evaluation = pipeline::evaluate_frame(&manifest, &r, views)?;
            pipeline::SequenceResult {
                frames: vec![pipeline::FrameOutcome {
                    frame: t,
                    result: Ok(r),
                    evaluation,
                }],
            }
        }
        None => pipeline::run_sequence(&manifest, &config, views)?,
    };
    for f in &result.frames {
        match &f.result {
            Ok(r) => {
                info!("frame {}: {} ({} objects)", f.frame, r.status.as_str(), r.objects.len());
                for d in &r.diagnostics {
                    info!("frame {}: {d}", f.frame);
                }
                pipeline::write_frame_outputs(r, &cameras, &out.join(f.frame.to_string()), mesh)?;
            }
            Err(e) => error!("frame {}: {e}", f.frame),
        }
    }
    let report = result.report();
    io::write_metrics(&report, &out.join("report.txt"))?;
    print!("{}", io::format_metrics(&report));
    Ok(if result.any_degraded() {
        Outcome::Degraded
    } else {
        Outcome::Success
    })
}

fn run(cli: Cli) -> dynscene::Result<Outcome> {
    match cli.command {
        Command::Synth { spec, out } => {
            let spec = pipeline::load_scene_spec(&spec)?;
            let data = pipeline::generate_synthetic(&spec, &out)?;
            info!(
                "wrote {} frames × {} cameras to {}",
                data.frames.len(),
                data.cameras.len(),
                out.display()
            );
            Ok(Outcome::Success)
        }
        Command::Reconstruct {
            dataset,
            config,
            out,
            frame,
            views,
            mesh,
        } => reconstruct(dataset, config, out, frame, views, mesh),
        Command::Evaluate { result, gt, out } => {
            let rows = pipeline::evaluate_outputs(&result, &gt)?;
            io::write_metrics(&rows, &out)?;
            print!("{}", io::format_metrics(&rows));
            Ok(Outcome::Success)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Degraded) => ExitCode::from(2),
        Err(e) => {
            error!("{e}");
            ExitCode::from(1)
        }
    }
}
