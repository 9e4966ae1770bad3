//! Acceptance checks shared by the `acceptance` target and the regular
//! integration tests. Each check returns a [`Verdict`].

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use udfrecon::evaluation::DEFAULT_CHAMFER_POINTS;
use udfrecon::extraction::{default_surface_eps, sample_grid, udf_marching_cubes, TriangleMesh};
use udfrecon::fields::{AnalyticShape, DistanceField};
use udfrecon::geometry::{Direction3, Point3, Vec3};
use udfrecon::losses::LossWeights;
use udfrecon::neural::{Architecture, Checkpoint, NetworkParams};
use udfrecon::pipeline::reconstruct::cos_sign_changes;
use udfrecon::pipeline::{
    evaluate_mesh, extract_mesh, loss_and_grad, render_dataset, render_views, sphere_trace, train, Dataset, RenderOptions,
    SceneConfig, TrainBatch, TrainConfig,
};
use udfrecon::rendering::{
    hierarchical_sample, render_ray, sdf_induced_density, udf_density, DensityParams, IndicatorMode, Ray, SamplingConfig,
};

#[derive(Debug, Clone)]
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict { pass, detail: detail.into() }
    }
}

pub fn random_direction(rng: &mut ChaCha8Rng) -> Direction3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return Direction3::normalize(v).unwrap();
        }
    }
}

/// A ray from distance 3 aimed at a random point near the origin.
pub fn random_ray(rng: &mut ChaCha8Rng) -> Ray {
    let o = 3.0 * random_direction(rng).vec();
    let target = Vec3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
    Ray::through_unit_sphere(o, Direction3::normalize(target - o).unwrap()).unwrap()
}

/// A3: finite differences of the total loss against `loss_and_grad`.
pub fn a3_gradient_check() -> Verdict {
    let mut params = NetworkParams::<f64>::init(Architecture::tiny(2, 8), 42);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rays: Vec<Ray> = (0..3).map(|_| random_ray(&mut rng)).collect();
    let samples: Vec<Vec<f64>> = rays
        .iter()
        .map(|r| {
            let mut ts: Vec<f64> = (0..16).map(|_| rng.gen_range(r.t_near..r.t_far)).collect();
            ts.sort_by(f64::total_cmp);
            ts
        })
        .collect();
    let truth = (0..3).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    let batch = TrainBatch {
        rays,
        samples,
        truth,
        mask: Some(vec![1.0, 0.0, 1.0]),
        patch_len: 3,
        background: [0.1, 0.2, 0.3],
    };
    let weights = LossWeights { lambda0: 0.1, lambda1: 0.1, lambda2: 0.01, gamma: 0.1, tau: 50.0 };
    let mode = IndicatorMode::GradientAware;
    let mut grads = params.zero_grads();
    if let Err(e) = loss_and_grad(&params, &batch, &weights, mode, 2, &mut grads) {
        return Verdict::new(false, format!("loss_and_grad failed: {e}"));
    }
    let loss = |p: &NetworkParams<f64>| {
        let mut g = p.zero_grads();
        loss_and_grad(p, &batch, &weights, mode, 2, &mut g).unwrap().total
    };
    // Entries far below the largest gradient are dominated by round-off.
    let floor = 1e-3 * grads.iter().fold(0.0f64, |a, g| a.max(g.abs()));
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut worst_at = 0;
    for i in 0..grads.len() {
        let x = params.values[i];
        params.values[i] = x + h;
        let up = loss(&params);
        params.values[i] = x - h;
        let down = loss(&params);
        params.values[i] = x;
        let fd = (up - down) / (2.0 * h);
        let rel = (fd - grads[i]).abs() / fd.abs().max(grads[i].abs()).max(floor);
        if rel > worst {
            worst = rel;
            worst_at = i;
        }
    }
    Verdict::new(
        worst < 1e-4,
        format!("{} parameters, max relative error {worst:.2e} at index {worst_at}", grads.len()),
    )
}

fn white(_: Point3, _: Vec3) -> [f64; 3] {
    [1.0; 3]
}

/// Plane `z = 1` seen along +z from the origin over `[0, 2]`: `t* = 1`.
fn plane_ray() -> (AnalyticShape, Ray) {
    let plane = AnalyticShape::plane(Vec3::Z, 1.0).unwrap();
    (plane, Ray::new(Vec3::ZERO, Direction3::from_unit(Vec3::Z).unwrap(), 0.0, 2.0).unwrap())
}

/// A1: weight maximum at the intersection with the gradient-aware
/// indicator, earlier with the naive one.
pub fn a1_unbiasedness() -> Verdict {
    let (plane, ray) = plane_ray();
    let ts = ray.uniform_ts(512);
    let dt = ts[1] - ts[0];
    let p = DensityParams::new(400.0, 400.0);
    let argmax = |mode| {
        let (_, s) = render_ray(&plane, white, &ray, &ts, &p.with_mode(mode), [0.0; 3]).unwrap();
        s.argmax_weight()
    };
    let aware = argmax(IndicatorMode::GradientAware);
    let naive = argmax(IndicatorMode::Naive);
    // The naive offset is counted in samples from the gradient-aware maximum.
    let lead = aware as i64 - naive as i64;
    Verdict::new(
        (ts[aware] - 1.0).abs() <= dt && lead >= 2,
        format!(
            "t* = 1, spacing {dt:.5}: aware argmax {:.5}, naive argmax {:.5} ({lead} samples earlier, {:.2} spacings before t*)",
            ts[aware],
            ts[naive],
            (1.0 - ts[naive]) / dt
        ),
    )
}

/// A2: with oracle visibility on a sphere, the UDF density equals the
/// SDF-induced density of the signed distance.
pub fn a2_sdf_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (center, radius) = (Vec3::new(0.1, -0.05, 0.0), 0.5);
    let sphere = AnalyticShape::sphere(center, radius).unwrap();
    let mut worst = 0.0f64;
    let mut count = 0;
    for _ in 0..100 {
        let ray = random_ray(&mut rng);
        let kappa = rng.gen_range(5.0..500.0);
        let params = DensityParams::new(kappa, 50.0);
        let d = ray.direction.vec();
        for t in ray.uniform_ts(64) {
            let p = ray.at(t);
            let fs = sphere.sample(p);
            if fs.degenerate {
                continue;
            }
            let sdf = (p - center).norm() - radius;
            let sdf_grad = Direction3::normalize(p - center).unwrap().vec();
            let psi = if sdf >= 0.0 { 1.0 } else { 0.0 };
            let su = udf_density(fs.distance, fs.gradient.dot(d), psi, &params);
            let ss = sdf_induced_density(sdf, sdf_grad.dot(d), kappa, params.cos_floor);
            worst = worst.max((su - ss).abs());
            count += 1;
        }
    }
    Verdict::new(worst <= 1e-9, format!("{count} samples on 100 rays, max |σ_u − Ω(f_s)| = {worst:.2e}"))
}

pub fn random_shape(rng: &mut ChaCha8Rng) -> AnalyticShape {
    let point = |rng: &mut ChaCha8Rng, s: f64| Vec3::new(rng.gen_range(-s..s), rng.gen_range(-s..s), rng.gen_range(-s..s));
    match rng.gen_range(0..4) {
        0 => AnalyticShape::sphere(point(rng, 0.3), rng.gen_range(0.05..0.6)).unwrap(),
        1 => AnalyticShape::open_disc(point(rng, 0.3), random_direction(rng).vec(), rng.gen_range(0.05..0.6)).unwrap(),
        2 => AnalyticShape::plane(random_direction(rng).vec(), rng.gen_range(-0.8..0.8)).unwrap(),
        _ => AnalyticShape::union(vec![
            AnalyticShape::sphere(point(rng, 0.4), rng.gen_range(0.05..0.4)).unwrap(),
            AnalyticShape::open_disc(point(rng, 0.4), random_direction(rng).vec(), rng.gen_range(0.05..0.4)).unwrap(),
        ])
        .unwrap(),
    }
}

/// A4: range and monotonicity invariants of one randomly drawn case.
pub fn a4_case(rng: &mut ChaCha8Rng) -> std::result::Result<(), String> {
    let shape = random_shape(rng);
    let ray = random_ray(rng);
    let n = rng.gen_range(2..200);
    let mut ts: Vec<f64> = (0..n).map(|_| rng.gen_range(ray.t_near..ray.t_far)).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    if ts.len() < 2 {
        ts = ray.uniform_ts(2);
    }
    let mode = if rng.gen() { IndicatorMode::GradientAware } else { IndicatorMode::Naive };
    let params = DensityParams::new(rng.gen_range(1.0..2000.0), rng.gen_range(1.0..2000.0)).with_mode(mode);
    let (rgb, set) = render_ray(&shape, white, &ray, &ts, &params, [0.0; 3]).map_err(|e| e.to_string())?;
    set.check_invariants().map_err(|e| format!("{e} ({shape:?}, {params:?})"))?;
    if rgb.iter().any(|c| !(0.0..=1.0 + 1e-9).contains(c)) {
        return Err(format!("color {rgb:?} out of range"));
    }
    Ok(())
}

pub fn a4_invariants() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..1000 {
        if let Err(e) = a4_case(&mut rng) {
            return Verdict::new(false, format!("case {i}: {e}"));
        }
    }
    Verdict::new(true, "1000 random rays and shapes: Ψ and T non-increasing, Σw ≤ 1, values in range")
}

fn cube(res: usize) -> ([usize; 3], Point3, Point3) {
    ([res; 3], Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0))
}

/// A5: an open disc stays open with its boundary on the rim; a sphere is
/// closed and close to the analytic surface.
pub fn a5_extraction() -> Verdict {
    let (r, a, b) = cube(64);
    let (c, n, rad) = (Vec3::new(0.05, 0.0, -0.1), Vec3::new(0.8, 0.0, 0.6), 0.5);
    let disc = AnalyticShape::open_disc(c, n, rad).unwrap();
    let g = sample_grid(&disc, r, a, b).unwrap();
    let sp = g.min_spacing();
    let (m, rep) = udf_marching_cubes(&g, default_surface_eps(&g)).unwrap();
    let mut rim_worst = 0.0f64;
    for (p, q) in m.boundary_edges() {
        let mid = 0.5 * (m.vertices[p as usize] + m.vertices[q as usize]) - c;
        let h = mid.dot(n);
        let radial = (mid - h * n).norm();
        rim_worst = rim_worst.max((radial - rad).hypot(h));
    }
    let disc_ok = !rep.watertight && rep.boundary_edge_count > 0 && rim_worst <= 2.0 * sp;

    let sphere_scene = SceneConfig::parse("shape = sphere 0 0 0 0.5\n").unwrap();
    let g = sample_grid(&sphere_scene.field(), r, a, b).unwrap();
    let (sm, srep) = udf_marching_cubes(&g, default_surface_eps(&g)).unwrap();
    let chamfer = evaluate_mesh(&sm, &sphere_scene, DEFAULT_CHAMFER_POINTS, 5).unwrap().chamfer.unwrap();
    let sphere_ok = srep.watertight && chamfer < 0.0625;
    Verdict::new(
        disc_ok && sphere_ok,
        format!(
            "disc: watertight {}, {} boundary edges, worst rim distance {rim_worst:.4} (limit {:.4}); sphere: watertight {}, Chamfer {chamfer:.5}",
            rep.watertight,
            rep.boundary_edge_count,
            2.0 * sp,
            srep.watertight
        ),
    )
}

/// A8 (analytic half): `‖∇f‖ = 1` away from degenerate loci.
pub fn a8_analytic_eikonal() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    let mut count = 0;
    for _ in 0..200 {
        let shape = random_shape(&mut rng);
        for _ in 0..50 {
            let p = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let s = shape.sample(p);
            if s.degenerate {
                continue;
            }
            worst = worst.max((s.gradient.norm() - 1.0).abs());
            count += 1;
        }
    }
    Verdict::new(worst < 1e-6, format!("{count} points, max |‖∇f‖ − 1| = {worst:.2e}"))
}

/// A9: the paper preset gives 144 samples, and importance samples gather
/// at a plane.
pub fn a9_sampling() -> Verdict {
    let cfg = SamplingConfig::paper();
    let plane = |p: Point3| {
        let s = udfrecon::fields::plane_udf(p, Vec3::Z, 1.0);
        (s.distance, if s.degenerate { Vec3::ZERO } else { s.gradient })
    };
    let (_, ray) = plane_ray();
    let learned = DensityParams::new(400.0, 400.0);
    let h = hierarchical_sample(plane, &ray, &cfg, &learned).unwrap();
    let last = h.rounds.last().unwrap();
    let near = last.iter().filter(|&&t| (t - 1.0).abs() <= 5.0 / learned.beta).count();
    let sphere = AnalyticShape::sphere(Vec3::ZERO, 0.5).unwrap();
    let sray = Ray::through_unit_sphere(Vec3::new(0.05, 0.02, -3.0), Direction3::from_unit(Vec3::Z).unwrap()).unwrap();
    let hs = hierarchical_sample(|p| {
        let s = sphere.sample(p);
        (s.distance, s.gradient)
    }, &sray, &cfg, &DensityParams::new(20.0, 20.0))
    .unwrap();
    Verdict::new(
        cfg.max_samples() == 144 && hs.t.len() == 144 && 2 * near >= last.len(),
        format!(
            "preset total {}, sphere ray drew {}; {near} of {} final-round samples within 5/β of t*",
            cfg.max_samples(),
            hs.t.len(),
            last.len()
        ),
    )
}

/// Open disc plus sphere with stripes, 24 views at 64×64.
pub const A6_SCENE: &str = "\
shape = sphere 0.35 0 0 0.3
shape = disc -0.35 0 0 0.8 0 0.6 0.35
texture = stripes 2 1 1 0
cameras = 24
width = 64
height = 64
";

pub fn a6_scene() -> SceneConfig {
    SceneConfig::parse(A6_SCENE).unwrap()
}

/// Acceptance runs use the desk preset; `UDFRECON_ACCEPTANCE_ITERATIONS`
/// shortens them for smoke runs.
pub fn a6_config() -> TrainConfig {
    let mut c = TrainConfig::desk();
    if let Some(n) = std::env::var("UDFRECON_ACCEPTANCE_ITERATIONS").ok().and_then(|s| s.parse().ok()) {
        c.iterations = n;
    }
    c
}

pub fn work_dir(name: &str) -> PathBuf {
    let root = std::env::var_os("UDFRECON_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance"));
    let d = root.join(name);
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

pub struct TrainedRun {
    pub checkpoint: Checkpoint,
    pub config: TrainConfig,
    pub dir: PathBuf,
    pub seconds: f64,
}

pub fn train_run(ds: &Dataset, config: &TrainConfig, name: &str) -> udfrecon::Result<TrainedRun> {
    let dir = work_dir(name);
    let start = std::time::Instant::now();
    let checkpoint = train(ds, config, &dir)?;
    Ok(TrainedRun { checkpoint, config: config.clone(), dir, seconds: start.elapsed().as_secs_f64() })
}

/// Boundary edges of the mesh components lying on the disc (closer to the
/// disc than to the sphere); `None` when no component does.
pub fn disc_components_open(mesh: &TriangleMesh, scene: &SceneConfig) -> Option<bool> {
    let (sphere, disc) = (&scene.shapes[0], &scene.shapes[1]);
    let (ids, count) = mesh.components();
    let mut disc_votes = vec![0i64; count];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let c = (mesh.vertices[tri[0] as usize] + mesh.vertices[tri[1] as usize] + mesh.vertices[tri[2] as usize]) / 3.0;
        disc_votes[ids[t]] += if disc.distance(c) < sphere.distance(c) { 1 } else { -1 };
    }
    let mut vertex_comp = vec![usize::MAX; mesh.vertices.len()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for &v in tri {
            vertex_comp[v as usize] = ids[t];
        }
    }
    let mut open = vec![false; count];
    for (p, _) in mesh.boundary_edges() {
        open[vertex_comp[p as usize]] = true;
    }
    let disc_comps: Vec<usize> = (0..count).filter(|&c| disc_votes[c] > 0).collect();
    if disc_comps.is_empty() {
        None
    } else {
        Some(disc_comps.iter().all(|&c| open[c]))
    }
}

pub struct A6Report {
    pub verdict: Verdict,
    pub eikonal: Verdict,
}

/// Mean of a CSV column over the last `n` rows.
pub fn csv_tail_mean(path: &Path, column: &str, n: usize) -> Option<f64> {
    let text = fs::read_to_string(path).ok()?;
    let mut lines = text.lines();
    let col = lines.next()?.split(',').position(|h| h == column)?;
    let vals: Vec<f64> = lines.filter_map(|l| l.split(',').nth(col)?.parse().ok()).collect();
    let tail = &vals[vals.len().saturating_sub(n)..];
    (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
}

/// A6 and the learned half of A8 on a finished run.
pub fn a6_evaluate(run: &TrainedRun, ds: &Dataset, scene: &SceneConfig) -> A6Report {
    let params = &run.checkpoint.params;
    let (lo, hi) = (Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0));
    let (mesh, rep) = extract_mesh(params, 128, lo, hi).unwrap();
    let _ = mesh.save(&run.dir.join("mesh.txt"));
    let chamfer = if mesh.is_empty() {
        f64::INFINITY
    } else {
        evaluate_mesh(&mesh, scene, DEFAULT_CHAMFER_POINTS, 42).unwrap().chamfer.unwrap()
    };
    let disc_open = disc_components_open(&mesh, scene);
    let mut opts = RenderOptions::from_config(&run.config);
    opts.background = ds.background;
    let (_, metrics) = render_views(params, &ds.cameras, &opts, Some(ds), &run.dir.join("views")).unwrap();
    let psnr = metrics.mean_psnr().unwrap_or(f64::NEG_INFINITY);
    let pass = chamfer < 0.05 && disc_open == Some(true) && psnr > 25.0;
    let verdict = Verdict::new(
        pass,
        format!(
            "{} iterations in {:.0} s (budget 7200 s): Chamfer {chamfer:.4} (< 0.05), disc component open {:?}, mean PSNR {psnr:.2} (> 25); {} triangles, {} boundary edges; κ {:.2}, β {:.2}",
            run.config.iterations,
            run.seconds,
            disc_open,
            rep.triangle_count,
            rep.boundary_edge_count,
            params.kappa(),
            params.beta()
        ),
    );
    let eik = csv_tail_mean(&run.dir.join(udfrecon::pipeline::train::LOSS_FILE), "eikonal", 100).unwrap_or(f64::NAN);
    let eikonal = Verdict::new(eik < 0.1, format!("learned mean eikonal over the last 100 iterations {eik:.4} (< 0.1)"));
    A6Report { verdict, eikonal }
}

/// First-crossing test rays: 100 hit pixels of the training views.
pub fn a7_test_rays(ds: &Dataset, scene: &SceneConfig) -> Vec<(Ray, f64)> {
    let field = scene.field();
    let masks = ds.masks.as_ref().expect("A7 needs masks");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut out = Vec::new();
    while out.len() < 100 {
        let v = rng.gen_range(0..ds.view_count());
        let cam = &ds.cameras[v];
        let (x, y) = (rng.gen_range(0..cam.width), rng.gen_range(0..cam.height));
        if !masks[v][y * cam.width + x] {
            continue;
        }
        let (o, d) = cam.pixel_ray(x, y);
        if let (Some(t), Ok(ray)) = (sphere_trace(&field, o, d), Ray::through_unit_sphere(o, d)) {
            out.push((ray, t));
        }
    }
    out
}

/// Median count of `cos θ` sign changes within `3/β` of the analytic first
/// crossing, using each run's own learned β.
pub fn median_sign_changes(params: &NetworkParams<f32>, rays: &[(Ray, f64)]) -> f64 {
    let half = 3.0 / params.beta();
    let mut counts: Vec<usize> = rays.iter().map(|(r, t)| cos_sign_changes(params, r, *t, half, 64).unwrap()).collect();
    counts.sort_unstable();
    let n = counts.len();
    if n % 2 == 1 {
        counts[n / 2] as f64
    } else {
        0.5 * (counts[n / 2 - 1] + counts[n / 2]) as f64
    }
}

pub fn a7_compare(with_iso: &NetworkParams<f32>, without_iso: &NetworkParams<f32>, rays: &[(Ray, f64)]) -> Verdict {
    let a = median_sign_changes(with_iso, rays);
    let b = median_sign_changes(without_iso, rays);
    Verdict::new(a < b, format!("median cos θ sign changes over {} rays: λ2 = 0.01 → {a}, λ2 = 0 → {b}", rays.len()))
}

/// A10: two equal-seed runs give identical bytes.
pub fn a10_determinism(ds: &Dataset, config: &TrainConfig) -> Verdict {
    let a = train_run(ds, config, "a10_first").unwrap();
    let b = train_run(ds, config, "a10_second").unwrap();
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    use udfrecon::pipeline::train::{CHECKPOINT_FILE, LOSS_FILE};
    let same_ckpt = read(&a.dir, CHECKPOINT_FILE) == read(&b.dir, CHECKPOINT_FILE);
    let same_csv = read(&a.dir, LOSS_FILE) == read(&b.dir, LOSS_FILE);
    Verdict::new(
        same_ckpt && same_csv,
        format!("{} iterations twice: checkpoints identical {same_ckpt}, loss CSVs identical {same_csv}", config.iterations),
    )
}

pub fn a6_dataset() -> Dataset {
    render_dataset(&a6_scene()).unwrap()
}
