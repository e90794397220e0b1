use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use s2m_core::config::PipelineConfig;
use s2m_core::dataset::Dataset;
use s2m_core::error::CoreError;
use s2m_core::geometry::{load_obj, PointCloud};
use s2m_core::pipeline;
use s2m_core::render::SketchImage;
use thiserror::Error;

#[derive(Parser, Debug)]
#[command(name = "s2m", version, about = "Sketch to 2.5D maps to implicit field to mesh")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Pipeline configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 gives reproducible single-threaded runs.
    #[arg(long, global = true, env = "S2M_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic shape dataset.
    GenSynth {
        /// Output directory [default: data.root].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated shape names [default: data.shapes].
        #[arg(long, value_delimiter = ',')]
        shapes: Option<Vec<String>>,
    },
    /// Train the sketch to 2.5D network.
    #[command(name = "train-25d")]
    Train25d {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Continue from an existing checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Pretrain the implicit autoencoder, then the single-view encoder.
    TrainImplicit {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        resume: bool,
        /// Decoder depth, 5 or 6.
        #[arg(long)]
        decoder_layers: Option<usize>,
    },
    /// Reconstruct a mesh from one sketch.
    Infer {
        #[arg(long)]
        sketch: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ckpt_25d: Option<PathBuf>,
        #[arg(long)]
        ckpt_3d: Option<PathBuf>,
        #[arg(long)]
        view_index: Option<usize>,
        #[arg(long)]
        resolution: Option<usize>,
        /// Laplacian smoothing passes on the output mesh.
        #[arg(long)]
        smooth: Option<usize>,
    },
    /// Compare a predicted mesh with ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Metric name [default: eval.metric].
        #[arg(long)]
        metric: Option<String>,
        #[arg(long)]
        samples: Option<usize>,
        /// Ground-truth point cloud (.xyz) for `chamfer_pc`.
        #[arg(long)]
        gt_points: Option<PathBuf>,
        /// Also write the report as JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("extracted surface is empty; wrote an empty mesh to {0}")]
    EmptySurface(PathBuf),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(CoreError::Unknown { .. } | CoreError::Config(_)) => 2,
            CliError::Core(_) => 1,
            CliError::EmptySurface(_) => 3,
        }
    }
}

fn load_config(global: &Global) -> Result<PipelineConfig, CoreError> {
    let mut cfg = match &global.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.data.seed = seed;
        cfg.stage1.seed = seed;
        cfg.stage2.seed = seed;
        cfg.eval.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = load_config(&cli.global)?;
    let or = |p: Option<PathBuf>, d: &Path| p.unwrap_or_else(|| d.to_path_buf());
    match cli.command {
        Command::GenSynth { out, shapes } => {
            if let Some(shapes) = shapes {
                cfg.data.shapes = shapes;
            }
            cfg.validate()?;
            let out = or(out, &cfg.data.root);
            let ids = pipeline::gen_synth(&cfg, &out)?;
            log::info!("wrote {} shapes to {}", ids.len(), out.display());
        }
        Command::Train25d { data, ckpt, resume } => {
            let data = Dataset::open(or(data, &cfg.data.root))?;
            let ckpt = or(ckpt, &cfg.paths.ckpt_25d);
            pipeline::train_stage1(&cfg, &data, &ckpt, resume)?;
        }
        Command::TrainImplicit {
            data,
            ckpt,
            resume,
            decoder_layers,
        } => {
            if let Some(l) = decoder_layers {
                cfg.stage2.decoder_layers = l;
            }
            cfg.validate()?;
            let data = Dataset::open(or(data, &cfg.data.root))?;
            let ckpt = or(ckpt, &cfg.paths.ckpt_3d);
            pipeline::train_stage2(&cfg, &data, &ckpt, resume)?;
        }
        Command::Infer {
            sketch,
            out,
            ckpt_25d,
            ckpt_3d,
            view_index,
            resolution,
            smooth,
        } => {
            if let Some(k) = smooth {
                cfg.infer.smooth_iterations = k;
            }
            if view_index.is_some() {
                cfg.infer.view_index = view_index;
            }
            if resolution.is_some() {
                cfg.infer.resolution = resolution;
            }
            cfg.validate()?;
            let image = SketchImage::load(&sketch)?;
            let ck1 = or(ckpt_25d, &cfg.paths.ckpt_25d);
            let ck2 = or(ckpt_3d, &cfg.paths.ckpt_3d);
            let result = pipeline::infer(&cfg, &image, &ck1, &ck2, &out)?;
            if result.mesh.is_empty() {
                return Err(CliError::EmptySurface(out));
            }
            log::info!(
                "wrote {} ({} vertices, {} faces)",
                out.display(),
                result.mesh.vertices.len(),
                result.mesh.faces.len()
            );
        }
        Command::Eval {
            pred,
            gt,
            metric,
            samples,
            gt_points,
            json,
        } => {
            if let Some(n) = samples {
                cfg.eval.samples = n;
            }
            let metric = metric.unwrap_or_else(|| cfg.eval.metric.clone());
            let points = gt_points.map(PointCloud::load_xyz).transpose()?;
            let report = pipeline::eval(&cfg, &metric, &load_obj(&pred)?, &load_obj(&gt)?, points.as_ref())?;
            println!("{}", report.line());
            if let Some(path) = json {
                report.save_json(path)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not configure {n} threads: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::EmptySurface(_) => log::warn!("{e}"),
                _ => log::error!("{e}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
