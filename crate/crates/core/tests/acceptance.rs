//! Acceptance suite. Run with `cargo test -p ksdt --test acceptance -- --nocapture`
//! to see one PASS/FAIL line per criterion.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ksdt::cli::{gradcheck_problem, soft_ksdt_fwd_bwd};
use ksdt::exact::{brute_force_dt, exact_contour, exact_kstep_dt, ideal_ksdt, ContourSet};
use ksdt::loss::{loss_by_kind, loss_grad_check, mask_to_logits, LossConfig, LossKind};
use ksdt::refine::{median, run_scenarios, standard_scenarios, synth_shape, RefineConfig};
use ksdt::rng::SplitMix64;
use ksdt::{ksdt_grid, BinaryMask, KsdtConfig};

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {id} {name}: {detail}");
}

fn random_masks(count: usize) -> Vec<BinaryMask> {
    let mut rng = SplitMix64::new(0x5eed_0001);
    (0..count)
        .map(|i| {
            let density = [0.005, 0.02, 0.05, 0.1, 0.3][i % 5];
            BinaryMask::from_fn(16, 16, |_, _| rng.next_f64() < density).unwrap()
        })
        .collect()
}

fn square(n: usize, top: usize, left: usize, side: usize) -> BinaryMask {
    BinaryMask::from_fn(n, n, |r, c| {
        (top..top + side).contains(&r) && (left..left + side).contains(&c)
    })
    .unwrap()
}

#[test]
fn c1_oracle_equivalence() {
    let masks = random_masks(200);
    let start = Instant::now();
    let mut mismatches = 0;
    for m in &masks {
        let set = ContourSet::from_mask(m);
        for k in 1..=6 {
            if exact_kstep_dt(m, k).unwrap() != brute_force_dt(&set, (16, 16), k).unwrap() {
                mismatches += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = mismatches == 0 && elapsed < Duration::from_secs(5);
    report(
        1,
        "oracle equivalence",
        pass,
        &format!("{mismatches} mismatches of 1200, {elapsed:?}"),
    );
    assert!(pass);
}

#[test]
fn c2_ideal_ksdt_equivalence() {
    let masks = random_masks(200);
    let mut mismatches = 0;
    for m in &masks {
        for k in 1..=6 {
            if ideal_ksdt(m, k).unwrap() != exact_kstep_dt(m, k).unwrap() {
                mismatches += 1;
            }
        }
    }
    report(
        2,
        "ideal kSDT equivalence",
        mismatches == 0,
        &format!("{mismatches} mismatches of 1200"),
    );
    assert_eq!(mismatches, 0);
}

/// Mean soft output over the pixels at each exact distance `0..=k+1`.
fn ring_means(contour: &BinaryMask, cfg: &KsdtConfig) -> Vec<f64> {
    let k = cfg.k;
    let exact = exact_kstep_dt(contour, k).unwrap();
    let soft = ksdt_grid(contour.grid(), cfg).unwrap();
    let mut sum = vec![0.0; k + 2];
    let mut count = vec![0usize; k + 2];
    for (d, s) in exact.values().iter().zip(soft.values()) {
        sum[*d as usize] += s;
        count[*d as usize] += 1;
    }
    sum.iter().zip(&count).map(|(s, &n)| s / n as f64).collect()
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1]) && v.iter().all(|x| x.is_finite())
}

#[test]
fn c3_soft_dt_fidelity() {
    let contours: Vec<BinaryMask> = standard_scenarios(24, 31)
        .iter()
        .map(|sc| exact_contour(&synth_shape(&sc.shape).unwrap()))
        .collect();
    let failing = |k: usize, stabilized: bool| {
        let cfg = KsdtConfig::default().with_k(k).stabilized(stabilized);
        contours
            .iter()
            .filter(|c| !strictly_increasing(&ring_means(c, &cfg)))
            .count()
    };
    let literal: Vec<usize> = (1..=6).map(|k| failing(k, false)).collect();
    let stable: Vec<usize> = (1..=6).map(|k| failing(k, true)).collect();
    let pass = literal[..5].iter().all(|&f| f == 0) && stable.iter().all(|&f| f == 0);
    report(
        3,
        "soft DT fidelity",
        pass,
        &format!(
            "non-monotone shapes of {} for k=1..6: literal {literal:?}, stabilized {stable:?}",
            contours.len()
        ),
    );
    assert!(pass);
}

#[test]
fn c4_differentiability() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut lines = vec![];
    for kind in [LossKind::Contour, LossKind::MseEdge, LossKind::MseDt] {
        let mut kind_worst: f64 = 0.0;
        for seed in 0..5 {
            let (x, gt) = gradcheck_problem(16, seed).unwrap();
            let err = loss_grad_check(kind, &x, &gt, &LossConfig::default(), 1e-5).unwrap();
            kind_worst = kind_worst.max(err);
        }
        worst = worst.max(kind_worst);
        lines.push(format!("{} {kind_worst:.2e}", kind.name()));
    }
    let elapsed = start.elapsed();
    let pass = worst < 1e-4 && elapsed < Duration::from_secs(60);
    report(
        4,
        "differentiability",
        pass,
        &format!("max rel error {}, {elapsed:?}", lines.join(", ")),
    );
    assert!(pass);
}

#[test]
fn c5_identity_behavior() {
    let gt = square(28, 9, 9, 10);
    let pred = mask_to_logits(&gt, 10.0);
    let cfg = LossConfig {
        logit_input: true,
        ..LossConfig::default()
    };
    let value = |kind| loss_by_kind(kind, &pred, &gt, &cfg).unwrap().value;
    let (c, e, d) = (
        value(LossKind::Contour),
        value(LossKind::MseEdge),
        value(LossKind::MseDt),
    );
    let pass = (0.0..=0.05).contains(&c) && e <= 1e-6 && d <= 1e-6;
    report(
        5,
        "identity behavior",
        pass,
        &format!("contour {c:.3e}, mse-edge {e:.3e}, mse-dt {d:.3e}"),
    );
    assert!(pass);
}

#[test]
fn c6_translation_monotonicity() {
    let gt = square(28, 9, 9, 10);
    let cfg = LossConfig {
        logit_input: true,
        ..LossConfig::default()
    };
    let vals: Vec<f64> = (0..3)
        .map(|s| {
            let pred = mask_to_logits(&square(28, 9, 9 + s, 10), 10.0);
            loss_by_kind(LossKind::Contour, &pred, &gt, &cfg)
                .unwrap()
                .value
        })
        .collect();
    let pass = strictly_increasing(&vals);
    report(
        6,
        "translation monotonicity",
        pass,
        &format!("shifts 0,1,2 -> {vals:.4?}"),
    );
    assert!(pass);
}

#[test]
fn c7_refinement_efficacy() {
    let start = Instant::now();
    let scenarios = standard_scenarios(20, 7);
    let arm = |w_contour: f64, kind: LossKind| {
        let cfg = RefineConfig {
            w_contour,
            contour_kind: kind,
            ..RefineConfig::default()
        };
        let m = run_scenarios(&scenarios, &cfg).unwrap();
        median(&m.iter().map(|m| m.bf1).collect::<Vec<_>>())
    };
    let contour = arm(1.0, LossKind::Contour);
    let mse_dt = arm(1.0, LossKind::MseDt);
    let mse_edge = arm(1.0, LossKind::MseEdge);
    let bce = arm(0.0, LossKind::Contour);
    let elapsed = start.elapsed();
    let pass = contour > bce
        && contour >= mse_dt
        && mse_dt >= mse_edge
        && mse_edge >= bce
        && elapsed < Duration::from_secs(600);
    report(
        7,
        "refinement efficacy",
        pass,
        &format!(
            "median bf1 contour {contour:.4}, mse-dt {mse_dt:.4}, mse-edge {mse_edge:.4}, bce-only {bce:.4}, {elapsed:?}"
        ),
    );
    assert!(pass);
}

fn run_cli(args: &[&str], dir: &Path) -> (i32, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_ksdt"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run ksdt");
    (out.status.code().unwrap_or(-1), out.stdout)
}

/// Every file under `dir`, sorted by name, with its bytes.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn cli_session(dir: &Path) -> Vec<(String, Vec<u8>)> {
    std::fs::write(
        dir.join("shape.json"),
        r#"{"kind":"convex-polygon","sides":6,"radius":7,"canvas_height":28,"canvas_width":28,"seed":11}"#,
    )
    .unwrap();
    std::fs::write(
        dir.join("job.json"),
        r#"{"scenario":{"shape":{"kind":"disk","radius":6,"canvas_height":28,"canvas_width":28,"seed":5},
            "shift":[2,-2],"noise_sigma":0.5,"noise_seed":99},
            "config":{"steps":40,"snapshot_every":10}}"#,
    )
    .unwrap();
    let mut stdout = vec![];
    let mut ok = true;
    let mut step = |args: &[&str]| {
        let (code, out) = run_cli(args, dir);
        ok &= code == 0;
        stdout.extend_from_slice(&out);
    };
    step(&["synth", "--spec-json", "shape.json", "--out", "shape.pgm"]);
    step(&[
        "dt",
        "shape.pgm",
        "--k",
        "3",
        "--out",
        "exact.clf",
        "--png-preview",
        "exact.pgm",
    ]);
    step(&[
        "dt",
        "shape.pgm",
        "--k",
        "3",
        "--mode",
        "soft",
        "--out",
        "soft.clf",
    ]);
    step(&[
        "dt",
        "shape.pgm",
        "--mode",
        "soft-stabilized",
        "--out",
        "stab.clf",
    ]);
    step(&[
        "loss",
        "soft.clf",
        "shape.pgm",
        "--loss",
        "mse-dt",
        "--grad",
        "grad.clf",
    ]);
    step(&["loss", "stab.clf", "shape.pgm", "--stabilized"]);
    step(&["gradcheck", "--seed", "3", "--loss", "mse-edge"]);
    step(&["refine", "--spec-json", "job.json", "--out-dir", "run"]);
    assert!(ok, "a CLI invocation failed in {}", dir.display());
    let mut files = snapshot(dir);
    files.extend(
        snapshot(&dir.join("run"))
            .into_iter()
            .map(|(n, b)| (format!("run/{n}"), b)),
    );
    files.push(("stdout".into(), stdout));
    files
}

#[test]
fn c8_cli_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = cli_session(a.path());
    let second = cli_session(b.path());
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let pass = first.len() == second.len() && differing.is_empty();
    report(
        8,
        "CLI determinism",
        pass,
        &format!("{} outputs compared, differing: {differing:?}", first.len()),
    );
    assert!(pass);
}

/// Fastest of `reps` runs; a smoke test should not fail on one scheduler hiccup.
fn best_of(reps: usize, mut f: impl FnMut()) -> Duration {
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed()
        })
        .min()
        .unwrap()
}

#[test]
fn c9_performance_smoke() {
    let mut rng = SplitMix64::new(9);
    let small = BinaryMask::from_fn(256, 256, |_, _| rng.next_f64() < 0.02).unwrap();
    let contour = exact_contour(&small);
    let cfg = KsdtConfig::default();
    let soft = best_of(5, || {
        soft_ksdt_fwd_bwd(contour.grid(), &cfg).unwrap();
    });
    let big = BinaryMask::from_fn(1024, 1024, |_, _| rng.next_f64() < 0.001).unwrap();
    let exact = best_of(5, || {
        exact_kstep_dt(&big, 2).unwrap();
    });
    let pass = soft < Duration::from_millis(100) && exact < Duration::from_millis(50);
    report(
        9,
        "performance smoke",
        pass,
        &format!("soft kSDT 256x256 fwd+bwd {soft:?}, exact DT 1024x1024 {exact:?}"),
    );
    assert!(pass);
}
