//! End-to-end pipeline behavior on small scenes.

mod common;

use std::fs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use udfrecon::evaluation::DEFAULT_CHAMFER_POINTS;
use udfrecon::geometry::Vec3;
use udfrecon::neural::{adam_step, AdamState, Architecture, Checkpoint, NetworkParams, ParamGroup, UdfAdjoint};
use udfrecon::pipeline::reconstruct::{reconstruct, render_image};
use udfrecon::pipeline::train::{CHECKPOINT_FILE, LOSS_FILE};
use udfrecon::pipeline::{evaluate_mesh, render_dataset, train, RenderOptions, SceneConfig, TrainConfig};

fn small_config(iterations: u64) -> TrainConfig {
    let mut c = TrainConfig::desk();
    c.iterations = iterations;
    c.arch = Architecture::tiny(2, 16);
    c.rays_per_batch = 32;
    c.checkpoint_every = 0;
    c
}

fn plane_dataset() -> udfrecon::pipeline::Dataset {
    let scene = SceneConfig::parse("shape = plane 0.3 0.2 0.93 0.1\ntexture = checker 3\ncameras = 8\nwidth = 32\nheight = 32\n").unwrap();
    render_dataset(&scene).unwrap()
}

#[test]
fn zero_iterations_keep_the_initialization() {
    let ds = plane_dataset();
    let c = small_config(0);
    let dir = tempfile::tempdir().unwrap();
    let ck = train(&ds, &c, dir.path()).unwrap();
    assert_eq!(ck.iteration, 0);
    assert_eq!(ck.params, NetworkParams::<f32>::init(c.arch, c.seed));
    let saved = Checkpoint::load(&dir.path().join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(saved.params, ck.params);
    assert_eq!(fs::read_to_string(dir.path().join(LOSS_FILE)).unwrap().lines().count(), 1);
}

#[test]
fn same_seed_gives_identical_logs_and_checkpoints() {
    let ds = plane_dataset();
    let c = small_config(15);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    train(&ds, &c, a.path()).unwrap();
    train(&ds, &c, b.path()).unwrap();
    for f in [LOSS_FILE, CHECKPOINT_FILE] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let mut other = c.clone();
    other.seed = 43;
    let d = tempfile::tempdir().unwrap();
    train(&ds, &other, d.path()).unwrap();
    assert_ne!(fs::read(a.path().join(LOSS_FILE)).unwrap(), fs::read(d.path().join(LOSS_FILE)).unwrap());
}

#[test]
fn toy_plane_run_reduces_color_loss() {
    let ds = plane_dataset();
    let mut c = TrainConfig::desk();
    c.iterations = 2000;
    c.arch.udf_width = 64;
    c.arch.color_width = 64;
    c.rays_per_batch = 64;
    c.checkpoint_every = 0;
    let dir = tempfile::tempdir().unwrap();
    train(&ds, &c, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join(LOSS_FILE)).unwrap();
    let color: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(color.len(), 2000);
    let first: f64 = color[..10].iter().sum::<f64>() / 10.0;
    let last: f64 = color[color.len() - 10..].iter().sum::<f64>() / 10.0;
    assert!(last < 0.5 * first, "color loss {first} -> {last}");
}

/// Fits the UDF network to a sphere by direct regression on distances.
fn fit_sphere(center: Vec3, radius: f64) -> NetworkParams<f32> {
    let arch = Architecture { pos_frequencies: 2, ..Architecture::tiny(3, 64) };
    let mut params = NetworkParams::<f32>::init(arch, 1);
    let mut adam = AdamState::new(params.values.len());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let group = [ParamGroup { range: params.layout.udf_range(), lr: 2e-3 }];
    for _ in 0..600 {
        let pts: Vec<[f32; 3]> = (0..512).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let tape = params.udf_forward_batch(&pts).unwrap();
        let bar: Vec<f32> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let d = ((Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64) - center).norm() - radius).abs();
                2.0 * (tape.udf(i) - d as f32) / pts.len() as f32
            })
            .collect();
        let mut grads = params.zero_grads();
        params.udf_backward(&tape, &UdfAdjoint { udf: &bar, feature: None, gradient: None }, &mut grads).unwrap();
        adam_step(&mut params.values, &grads, &mut adam, &group).unwrap();
    }
    params
}

#[test]
fn regression_fit_sphere_reconstructs_within_four_spacings() {
    let (center, radius) = (Vec3::new(0.1, -0.05, 0.0), 0.35);
    let params = fit_sphere(center, radius);
    let res = 32;
    let spacing = 2.0 / (res - 1) as f64;
    let ck = Checkpoint::fresh(params, [0; 32]);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mesh.txt");
    let (mesh, _) = reconstruct(&ck, res, Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0), &out).unwrap();
    assert!(out.with_extension("json").exists());
    let scene = SceneConfig::parse("shape = sphere 0.1 -0.05 0 0.35\n").unwrap();
    let chamfer = evaluate_mesh(&mesh, &scene, DEFAULT_CHAMFER_POINTS / 10, 3).unwrap().chamfer.unwrap();
    assert!(chamfer < 4.0 * spacing, "Chamfer {chamfer} vs limit {}", 4.0 * spacing);
}

#[test]
fn empty_field_renders_background_deterministically() {
    let mut params = NetworkParams::<f32>::init(Architecture::tiny(2, 8), 5);
    let last = params.layout.udf.last().unwrap().clone();
    for v in &mut params.values[last.weight..last.bias] {
        *v = 0.0;
    }
    params.values[last.bias] = 100.0;
    let ds = plane_dataset();
    let opts = RenderOptions { background: [0.2, 0.4, 0.6], ..RenderOptions::default() };
    let img = render_image(&params, &ds.cameras[0], &opts).unwrap();
    assert!(img.pixels.iter().all(|p| *p == [0.2, 0.4, 0.6]));

    let trained = NetworkParams::<f32>::init(Architecture::tiny(2, 8), 6);
    let a = render_image(&trained, &ds.cameras[1], &opts).unwrap();
    let b = render_image(&trained, &ds.cameras[1], &opts).unwrap();
    assert_eq!(a, b);
}

#[test]
fn a6_scene_components_are_identified() {
    let scene = common::a6_scene();
    let (r, lo, hi) = ([48; 3], Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0));
    let g = udfrecon::extraction::sample_grid(&scene.field(), r, lo, hi).unwrap();
    let (mesh, _) = udfrecon::extraction::udf_marching_cubes(&g, udfrecon::extraction::default_surface_eps(&g)).unwrap();
    assert_eq!(common::disc_components_open(&mesh, &scene), Some(true));
}
