//! Acceptance report: one PASS/FAIL line per criterion A1–A10.
//!
//! The training criteria (A6, A7, the learned half of A8, A10) run the desk
//! preset on the open-disc-plus-sphere scene and take hours on one core.
//! Environment:
//!
//! - `UDFRECON_ACCEPTANCE_ITERATIONS`: override the A6/A7 iteration count,
//! - `UDFRECON_ACCEPTANCE_DIR`: where runs are written (default under the
//!   cargo target directory),
//! - `UDFRECON_ACCEPTANCE_STRICT=1`: exit non-zero when a criterion fails.

mod common;

use std::io::Write;
use std::time::Instant;

use common::Verdict;

struct Report {
    failed: Vec<&'static str>,
}

impl Report {
    fn line(&mut self, id: &'static str, title: &str, start: Instant, v: Verdict) {
        let status = if v.pass { "PASS" } else { "FAIL" };
        if !v.pass {
            self.failed.push(id);
        }
        println!("{id} {status} {title} [{:.1} s]: {}", start.elapsed().as_secs_f64(), v.detail);
        std::io::stdout().flush().unwrap();
    }
}

fn main() {
    let mut r = Report { failed: Vec::new() };

    let t = Instant::now();
    r.line("A1", "unbiasedness", t, common::a1_unbiasedness());
    let t = Instant::now();
    r.line("A2", "SDF equivalence", t, common::a2_sdf_equivalence());
    let t = Instant::now();
    r.line("A3", "gradient correctness", t, common::a3_gradient_check());
    let t = Instant::now();
    r.line("A4", "indicator and transmittance invariants", t, common::a4_invariants());
    let t = Instant::now();
    r.line("A5", "open-surface extraction", t, common::a5_extraction());

    let scene = common::a6_scene();
    let ds = common::a6_dataset();
    let config = common::a6_config();
    let t = Instant::now();
    let with_iso = common::train_run(&ds, &config, "a6").expect("A6 training");
    let a6 = common::a6_evaluate(&with_iso, &ds, &scene);
    r.line("A6", "end-to-end toy reconstruction", t, a6.verdict);

    let t = Instant::now();
    let mut no_iso_cfg = config.clone();
    no_iso_cfg.weights.lambda2 = 0.0;
    let without_iso = common::train_run(&ds, &no_iso_cfg, "a7_no_iso").expect("A7 training");
    let rays = common::a7_test_rays(&ds, &scene);
    r.line("A7", "iso-regularizer effect", t, common::a7_compare(&with_iso.checkpoint.params, &without_iso.checkpoint.params, &rays));

    let t = Instant::now();
    let analytic = common::a8_analytic_eikonal();
    let a8 = Verdict::new(analytic.pass && a6.eikonal.pass, format!("{}; {}", analytic.detail, a6.eikonal.detail));
    r.line("A8", "eikonal and field sanity", t, a8);

    let t = Instant::now();
    r.line("A9", "hierarchical sampling", t, common::a9_sampling());

    let t = Instant::now();
    let mut short = udfrecon::pipeline::TrainConfig::desk();
    short.iterations = 500;
    r.line("A10", "determinism", t, common::a10_determinism(&ds, &short));

    println!("{} of 10 criteria passed{}", 10 - r.failed.len(), if r.failed.is_empty() { String::new() } else { format!("; failed: {}", r.failed.join(", ")) });
    if !r.failed.is_empty() && std::env::var("UDFRECON_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
