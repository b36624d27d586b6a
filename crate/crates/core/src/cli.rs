//! `planar-recon` command line.
//!
//! Exit codes: 0 success, 1 computation error, 2 usage or I/O error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::bench::{bench_clustering, write_csv, BenchConfig};
use crate::clustering::MeanShiftConfig;
use crate::error::Error;
use crate::geometry::{backproject, depth_from_segmentation, fit_plane_lsq, Plane};
use crate::gradcheck::{run_gradcheck, GradcheckConfig};
use crate::metrics::{
    depth_metrics, depth_thresholds, normal_thresholds, plane_count_histogram, rand_index,
    recall_depth, recall_normal, segmentation_covering, variation_of_information, PartitionOptions,
};
use crate::pipeline::{reconstruct, DEFAULT_MASK_THRESHOLD};
use crate::synth::{
    corrupt_probability, generate_embeddings, generate_pixel_params, generate_scene,
    EmbeddingNoiseSpec, SceneManifest, SceneSpec,
};
use crate::tensor::{read_tensor, write_tensor, Tensor};
use crate::types::{
    CameraIntrinsics, DepthMap, EmbeddingMap, ImageGrid, InstanceSegmentation, PixelPlaneParams,
    PlanarProbabilityMap, PlaneInstanceParams,
};

#[derive(Debug, Parser)]
#[command(
    name = "planar-recon",
    version,
    about = "Piecewise-planar reconstruction tools"
)]
pub struct Cli {
    /// Worker threads for clustering kernels (0 = all cores).
    #[arg(long, global = true, env = "PLANAR_WORKERS", default_value_t = 0)]
    pub workers: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster planar embeddings into plane instances.
    Cluster(ClusterArgs),
    /// Score a predicted segmentation and planes against ground truth.
    Eval(EvalArgs),
    /// Write a synthetic scene and matching network-style outputs.
    Synth(SynthArgs),
    /// Check analytic loss gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Time anchor and vanilla mean shift across sizes.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct IntrinsicsArgs {
    /// JSON file with fx, fy, cx, cy.
    #[arg(long, conflicts_with_all = ["fx", "fy", "cx", "cy"])]
    pub intrinsics: Option<PathBuf>,
    #[arg(long, requires_all = ["fy", "cx", "cy"])]
    pub fx: Option<f64>,
    #[arg(long)]
    pub fy: Option<f64>,
    #[arg(long)]
    pub cx: Option<f64>,
    #[arg(long)]
    pub cy: Option<f64>,
}

impl IntrinsicsArgs {
    fn given(&self) -> bool {
        self.intrinsics.is_some() || self.fx.is_some()
    }

    fn load(&self) -> Result<CameraIntrinsics, CliError> {
        let intr = if let Some(path) = &self.intrinsics {
            let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            serde_json::from_str::<CameraIntrinsics>(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        } else {
            match (self.fx, self.fy, self.cx, self.cy) {
                (Some(fx), Some(fy), Some(cx), Some(cy)) => CameraIntrinsics { fx, fy, cx, cy },
                _ => {
                    return Err(CliError::Usage(
                        "intrinsics required: --intrinsics or --fx --fy --cx --cy".into(),
                    ))
                }
            }
        };
        intr.validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(intr)
    }
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Embedding tensor, H x W x d.
    pub embeddings: PathBuf,
    /// Planar probability tensor, H x W.
    pub probs: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 0.5)]
    pub bandwidth: f64,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    /// Merge radius; defaults to the bandwidth.
    #[arg(long)]
    pub merge_radius: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_MASK_THRESHOLD)]
    pub mask_threshold: f64,
    /// Per-pixel plane parameters (H x W x 3); with intrinsics, also writes
    /// pooled planes and rendered depth.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[command(flatten)]
    pub intrinsics: IntrinsicsArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred_labels: PathBuf,
    /// Predicted plane parameters, C x 3.
    #[arg(long)]
    pub pred_planes: PathBuf,
    #[arg(long)]
    pub gt_labels: PathBuf,
    #[arg(long)]
    pub gt_depth: PathBuf,
    /// Ground-truth plane parameters, C x 3; fitted to the depth if absent.
    #[arg(long)]
    pub gt_planes: Option<PathBuf>,
    #[command(flatten)]
    pub intrinsics: IntrinsicsArgs,
    /// Restrict RI/VI/SC to ground-truth planar pixels.
    #[arg(long)]
    pub exclude_nonplanar: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 192)]
    pub height: usize,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 6)]
    pub planes: usize,
    #[arg(long, default_value_t = 0.1)]
    pub nonplanar_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    pub near: f64,
    #[arg(long, default_value_t = 8.0)]
    pub far: f64,
    /// Focal length in pixels; defaults to the image width.
    #[arg(long)]
    pub focal: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.5 / 3.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1.5)]
    pub center_gap: f64,
    #[arg(long, default_value_t = 0.0)]
    pub param_sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    pub flip_rate: f64,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Perturb the analytic gradients (the check must fail).
    #[arg(long, hide = true)]
    pub corrupt: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [4096, 8192, 16384, 32768, 49152])]
    pub sizes: Vec<usize>,
    /// Anchor settings as k:T pairs.
    #[arg(long, value_delimiter = ',', default_values_t = ["10:10".to_string()])]
    pub grid: Vec<String>,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Vanilla iterations timed per run; 0 skips vanilla.
    #[arg(long, default_value_t = 1)]
    pub vanilla_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV destination; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or malformed files: exit 2.
    Usage(String),
    /// Valid inputs the computation could not handle: exit 1.
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Compute(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Compute(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_io() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Compute(e.to_string())
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

fn usage(e: Error) -> CliError {
    CliError::Usage(e.to_string())
}

/// Reads a tensor file and converts it; shape problems count as format errors.
fn load<T>(path: &Path) -> Result<T, CliError>
where
    T: for<'a> TryFrom<&'a Tensor, Error = Error>,
{
    let tensor = read_tensor(path).map_err(usage)?;
    T::try_from(&tensor).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn save(dir: &Path, name: &str, tensor: &Tensor) -> Result<(), CliError> {
    write_tensor(dir.join(name), tensor).map_err(usage)
}

fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| io_error(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn cmd_cluster(args: &ClusterArgs, workers: usize) -> Result<(), CliError> {
    let config = MeanShiftConfig {
        anchors_per_dim: args.k,
        bandwidth: args.bandwidth,
        iterations: args.iters,
        density_fraction: args.tau,
        merge_radius: args.merge_radius.unwrap_or(args.bandwidth),
        workers,
        ..MeanShiftConfig::default()
    };
    if !(0.0..=1.0).contains(&args.mask_threshold) {
        return Err(CliError::Usage(
            "--mask-threshold must lie in [0, 1]".into(),
        ));
    }
    let intr = if args.intrinsics.given() {
        Some(args.intrinsics.load()?)
    } else {
        None
    };
    let embeddings: EmbeddingMap = load(&args.embeddings)?;
    let probs: PlanarProbabilityMap = load(&args.probs)?;
    let config = MeanShiftConfig {
        dim: embeddings.dim(),
        ..config
    };
    config.validate().map_err(usage)?;
    let params: Option<PixelPlaneParams> = args.params.as_deref().map(load).transpose()?;
    embeddings
        .grid()
        .ensure_same(&probs.grid(), "embeddings vs probabilities")
        .map_err(usage)?;

    let start = Instant::now();
    ensure_dir(&args.out)?;
    let mask = probs.threshold(args.mask_threshold);
    let (segmentation, assignment, stats, planes) = match (&params, &intr) {
        (Some(params), Some(intr)) => {
            let rec = reconstruct(
                &embeddings,
                &probs,
                params,
                intr,
                &config,
                args.mask_threshold,
            )?;
            save(&args.out, "depth.pten", &Tensor::from(&rec.depth))?;
            let planes: Vec<[f64; 3]> = rec.planes.iter().map(Plane::params).collect();
            (rec.segmentation, rec.assignment, rec.stats, Some(planes))
        }
        _ => {
            let run = crate::clustering::cluster_with_stats(&embeddings, &mask, &config)?;
            let seg = crate::clustering::hard_labels(&run.assignment);
            (seg, run.assignment, run.stats, None)
        }
    };
    save(&args.out, "labels.pten", &Tensor::from(&segmentation))?;
    save(&args.out, "assignment.pten", &Tensor::from(&assignment))?;
    if let Some(planes) = planes {
        let planes = PlaneInstanceParams::new(planes)?;
        save(&args.out, "planes.pten", &Tensor::from(&planes))?;
    }
    let summary = json!({
        "cluster_count": assignment.clusters(),
        "instance_count": segmentation.count(),
        "planar_pixels": mask.planar_count(),
        "iterations": stats.iterations,
        "wall_ms": start.elapsed().as_secs_f64() * 1e3,
    });
    save_json(&args.out.join("summary.json"), &summary)?;
    println!("{summary}");
    Ok(())
}

/// Least-squares plane per ground-truth instance from its valid depth.
fn fit_gt_planes(
    seg: &InstanceSegmentation,
    depth: &DepthMap,
    intr: &CameraIntrinsics,
) -> Result<Vec<Plane>, CliError> {
    let points = backproject(depth, intr);
    let mut members = vec![Vec::new(); seg.count()];
    for (i, &l) in seg.labels().iter().enumerate() {
        if l > 0 && depth.valid()[i] {
            members[l as usize - 1].push(i);
        }
    }
    members
        .iter()
        .map(|m| {
            fit_plane_lsq(&points, m)
                .map(|fit| fit.plane)
                .map_err(CliError::from)
        })
        .collect()
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let intr = args.intrinsics.load()?;
    let pred_seg: InstanceSegmentation = load(&args.pred_labels)?;
    let pred_planes: PlaneInstanceParams = load(&args.pred_planes)?;
    let gt_seg: InstanceSegmentation = load(&args.gt_labels)?;
    let gt_depth: DepthMap = load(&args.gt_depth)?;
    let gt_planes: Option<PlaneInstanceParams> = args.gt_planes.as_deref().map(load).transpose()?;
    pred_seg
        .grid()
        .ensure_same(&gt_seg.grid(), "predicted vs ground-truth labels")
        .map_err(usage)?;
    gt_seg
        .grid()
        .ensure_same(&gt_depth.grid(), "labels vs depth")
        .map_err(usage)?;
    ensure_dir(&args.out)?;

    let pred_planes = pred_planes.planes();
    let gt_planes = match gt_planes {
        Some(p) => p.planes(),
        None => fit_gt_planes(&gt_seg, &gt_depth, &intr)?,
    };
    let by_depth = recall_depth(
        &pred_seg,
        &pred_planes,
        &gt_seg,
        &gt_depth,
        &intr,
        &depth_thresholds(),
    )?;
    let by_normal = recall_normal(
        &pred_seg,
        &pred_planes,
        &gt_seg,
        &gt_planes,
        &normal_thresholds(),
    )?;
    let opts = PartitionOptions {
        exclude_nonplanar: args.exclude_nonplanar,
    };
    let pred_depth = depth_from_segmentation(&pred_seg, &pred_planes, &intr)?;
    let report = json!({
        "rand_index": rand_index(&gt_seg, &pred_seg, opts)?,
        "variation_of_information": variation_of_information(&gt_seg, &pred_seg, opts)?,
        "segmentation_covering": segmentation_covering(&gt_seg, &pred_seg, opts)?,
        "depth": depth_metrics(&pred_depth, &gt_depth)?,
        "recall_depth": by_depth,
        "recall_normal": by_normal,
        "plane_count_histogram": {
            "predicted": plane_count_histogram(std::slice::from_ref(&pred_seg)),
            "ground_truth": plane_count_histogram(std::slice::from_ref(&gt_seg)),
        },
    });
    save_json(&args.out.join("metrics.json"), &report)?;
    for (name, curve) in [
        ("recall_depth.csv", &by_depth),
        ("recall_normal.csv", &by_normal),
    ] {
        let path = args.out.join(name);
        let file = fs::File::create(&path).map_err(|e| io_error(&path, e))?;
        curve.write_csv(file)?;
    }
    println!("{report}");
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let grid = ImageGrid::new(args.height, args.width).map_err(usage)?;
    let intr =
        CameraIntrinsics::centered(grid, args.focal.unwrap_or(args.width as f64)).map_err(usage)?;
    let spec = SceneSpec {
        grid,
        intr,
        plane_count: args.planes,
        nonplanar_fraction: args.nonplanar_fraction,
        depth_range: [args.near, args.far],
        seed: args.seed,
    };
    spec.validate().map_err(usage)?;
    let noise = EmbeddingNoiseSpec {
        center_min_gap: args.center_gap,
        sigma: args.sigma,
        seed: args.seed,
    };
    noise.validate().map_err(usage)?;
    if args.dim == 0 {
        return Err(CliError::Usage("--dim must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&args.flip_rate) {
        return Err(CliError::Usage("--flip-rate must lie in [0, 1)".into()));
    }

    let scene = generate_scene(&spec)?;
    let embeddings = generate_embeddings(&scene, &noise, args.dim)?;
    let params = generate_pixel_params(&scene, args.param_sigma, args.seed)?;
    let probs = corrupt_probability(&scene, args.flip_rate, args.seed)?;
    let planes: Vec<[f64; 3]> = scene.planes.iter().map(Plane::params).collect();

    ensure_dir(&args.out)?;
    save(
        &args.out,
        "segmentation.pten",
        &Tensor::from(&scene.segmentation),
    )?;
    save(&args.out, "depth.pten", &Tensor::from(&scene.depth))?;
    save(&args.out, "embeddings.pten", &Tensor::from(&embeddings))?;
    save(&args.out, "params.pten", &Tensor::from(&params))?;
    save(&args.out, "probs.pten", &Tensor::from(&probs))?;
    save(
        &args.out,
        "planes.pten",
        &Tensor::from(&PlaneInstanceParams::new(planes.clone())?),
    )?;
    save_json(&args.out.join("intrinsics.json"), &intr)?;
    let manifest = SceneManifest {
        spec,
        embedding: noise,
        embedding_dim: args.dim,
        param_sigma: args.param_sigma,
        flip_rate: args.flip_rate,
        planes,
    };
    save_json(&args.out.join("manifest.json"), &manifest)?;
    println!(
        "{}",
        json!({ "out": args.out, "plane_count": scene.segmentation.count() })
    );
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<(), CliError> {
    if args.samples == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    let results = run_gradcheck(&GradcheckConfig {
        samples: args.samples,
        seed: args.seed,
        corrupt: args.corrupt,
    });
    for r in &results {
        println!(
            "{:<16} {} max_rel_err={:.3e} samples={}",
            r.loss,
            if r.passed { "PASS" } else { "FAIL" },
            r.max_rel_err,
            r.samples
        );
    }
    match results.iter().filter(|r| !r.passed).count() {
        0 => Ok(()),
        n => Err(CliError::Compute(format!("{n} gradient checks failed"))),
    }
}

fn parse_grid(items: &[String]) -> Result<Vec<(usize, usize)>, CliError> {
    items
        .iter()
        .map(|s| {
            let (k, t) = s
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("--grid entry {s:?} is not k:T")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|e| CliError::Usage(format!("--grid entry {s:?}: {e}")))
            };
            Ok((parse(k)?, parse(t)?))
        })
        .collect()
}

fn cmd_bench(args: &BenchArgs, workers: usize) -> Result<(), CliError> {
    let config = BenchConfig {
        sizes: args.sizes.clone(),
        grid: parse_grid(&args.grid)?,
        repeats: args.repeats,
        workers,
        vanilla_iters: args.vanilla_iters,
        seed: args.seed,
        ..BenchConfig::default()
    };
    config.validate().map_err(usage)?;
    let results = bench_clustering(&config)?;
    match &args.out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
            write_csv(&results, file)?;
        }
        None => {
            let stdout = std::io::stdout();
            write_csv(&results, stdout.lock())?;
        }
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Cluster(args) => cmd_cluster(args, cli.workers),
        Command::Eval(args) => cmd_eval(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Bench(args) => cmd_bench(args, cli.workers),
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "planar-recon: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
