use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use udfrecon::evaluation::DEFAULT_CHAMFER_POINTS;
use udfrecon::extraction::TriangleMesh;
use udfrecon::neural::Checkpoint;
use udfrecon::pipeline::reconstruct::{ray_dump, reconstruct, render_views, RenderOptions};
use udfrecon::pipeline::{evaluate_mesh, generate_dataset, load_cameras, train, Dataset, SceneConfig, TrainConfig};
use udfrecon::Vec3;

#[derive(Parser)]
#[command(name = "udfrecon", version, about = "Open-surface reconstruction with unsigned distance fields")]
struct Cli {
    /// Seed for every random choice (overrides `seed` in training configs).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset from a scene file.
    GenData {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a field on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract a mesh from a checkpoint.
    Extract {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 128)]
        res: usize,
        #[arg(long)]
        out: PathBuf,
        /// Half-size of the cubic extraction box centered at the origin.
        #[arg(long, default_value_t = 1.0)]
        extent: f64,
    },
    /// Render views of a checkpoint; with --data, report PSNR against it.
    Render {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Chamfer distance between a mesh and a scene's analytic surfaces.
    Eval {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CHAMFER_POINTS)]
        points: usize,
    },
    /// Write per-sample diagnostics of one ray as CSV.
    RayDump {
        #[arg(long)]
        ckpt: PathBuf,
        /// `ox,oy,oz,dx,dy,dz`
        #[arg(long)]
        ray: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read(path: &PathBuf) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::GenData { scene, out } => {
            let scene = SceneConfig::parse(&read(&scene)?)?;
            let ds = generate_dataset(&scene, &out)?;
            log::info!("wrote {} views to {}", ds.view_count(), out.display());
        }
        Command::Train { data, config, out } => {
            let ds = Dataset::load(&data)?;
            let mut cfg = TrainConfig::parse(&read(&config)?)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let ck = train(&ds, &cfg, &out)?;
            log::info!("trained {} iterations; kappa {:.3} beta {:.3}", ck.iteration, ck.params.kappa(), ck.params.beta());
        }
        Command::Extract { ckpt, res, out, extent } => {
            if !(extent > 0.0) {
                bail!("--extent must be positive");
            }
            let ck = Checkpoint::load(&ckpt)?;
            let e = Vec3::new(extent, extent, extent);
            let (_, report) = reconstruct(&ck, res, -1.0 * e, e, &out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Render { ckpt, cameras, out, data } => {
            let ck = Checkpoint::load(&ckpt)?;
            let cams = load_cameras(&cameras)?;
            let reference = data.map(|d| Dataset::load(&d)).transpose()?;
            let opts = RenderOptions::beside(&ckpt)?;
            let (_, report) = render_views(&ck.params, &cams, &opts, reference.as_ref(), &out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Eval { mesh, scene, points } => {
            let mesh = TriangleMesh::load(&mesh)?;
            let scene = SceneConfig::parse(&read(&scene)?)?;
            let report = evaluate_mesh(&mesh, &scene, points, cli.seed.unwrap_or(0))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::RayDump { ckpt, ray, out } => {
            let v: Vec<f64> = ray
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .context("--ray expects six comma-separated numbers")?;
            if v.len() != 6 {
                bail!("--ray expects six comma-separated numbers, got {}", v.len());
            }
            let ck = Checkpoint::load(&ckpt)?;
            let opts = RenderOptions::beside(&ckpt)?;
            let set = ray_dump(&ck.params, Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5]), &opts, &out)?;
            log::info!("{} samples, weight sum {:.4}", set.len(), set.weight_sum());
        }
    }
    Ok(())
}
