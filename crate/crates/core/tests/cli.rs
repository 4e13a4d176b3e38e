use std::path::Path;
use std::process::{Command, Output};

use ksdt::io::{read_pgm, read_tensor, write_pgm, write_tensor};
use ksdt::{brute_force_dt, ContourSet, Grid};

fn ksdt(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ksdt"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run ksdt")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_str(stdout(o).trim()).unwrap()
}

fn square(n: usize, top: usize, left: usize, side: usize) -> Grid {
    Grid::from_fn(n, n, |r, c| {
        let inside = (top..top + side).contains(&r) && (left..left + side).contains(&c);
        if inside {
            1.0
        } else {
            0.0
        }
    })
    .unwrap()
}

#[test]
fn dt_single_pixel_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let mask = Grid::from_fn(9, 9, |r, c| if (r, c) == (4, 4) { 1.0 } else { 0.0 }).unwrap();
    write_pgm(&mask, dir.path().join("dot.pgm")).unwrap();
    let o = ksdt(
        &["dt", "dot.pgm", "--k", "2", "--out", "dt.clf"],
        dir.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    // the contour of a single pixel is its 8-neighbour ring
    let ring: Vec<(usize, usize)> = (3..=5)
        .flat_map(|r| (3..=5).map(move |c| (r, c)))
        .filter(|&p| p != (4, 4))
        .collect();
    let oracle = brute_force_dt(&ContourSet::new(9, 9, ring).unwrap(), (9, 9), 2).unwrap();
    assert_eq!(
        read_tensor(dir.path().join("dt.clf")).unwrap(),
        oracle.to_grid()
    );
    let line = json(&o);
    assert_eq!(line["command"], "dt");
    assert_eq!(line["max"].as_f64(), Some(3.0));
}

#[test]
fn dt_empty_mask_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    write_pgm(&Grid::zeros(6, 7).unwrap(), dir.path().join("z.pgm")).unwrap();
    let o = ksdt(
        &[
            "dt",
            "z.pgm",
            "--k",
            "4",
            "--out",
            "z.clf",
            "--png-preview",
            "z_preview.pgm",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let dt = read_tensor(dir.path().join("z.clf")).unwrap();
    assert_eq!(dt.shape(), (6, 7));
    assert!(dt.values().iter().all(|&v| v == 5.0));
    let preview = read_pgm(dir.path().join("z_preview.pgm")).unwrap();
    assert!(preview.values().iter().all(|&v| v == 1.0));

    let o = ksdt(
        &["dt", "z.pgm", "--mode", "soft-stabilized", "--out", "s.clf"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let soft = read_tensor(dir.path().join("s.clf")).unwrap();
    assert!(soft.values().iter().all(|&v| v == 3.0));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = ksdt(&["dt", "missing.pgm", "--out", "x.clf"], p);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());

    std::fs::write(p.join("bad.pgm"), b"P5\n2 2\n65535\n\0\0\0\0\0\0\0\0").unwrap();
    assert_eq!(
        ksdt(&["dt", "bad.pgm", "--out", "x.clf"], p).status.code(),
        Some(2)
    );

    write_pgm(&Grid::zeros(4, 4).unwrap(), p.join("a.pgm")).unwrap();
    write_pgm(&Grid::zeros(4, 5).unwrap(), p.join("b.pgm")).unwrap();
    let o = ksdt(&["loss", "a.pgm", "b.pgm"], p);
    assert_eq!(o.status.code(), Some(3));
    assert!(o.stdout.is_empty());

    assert_eq!(
        ksdt(&["dt", "a.pgm", "--k", "0", "--out", "x.clf"], p)
            .status
            .code(),
        Some(3)
    );
    assert_eq!(ksdt(&["gradcheck", "--h", "0.1"], p).status.code(), Some(3));
    assert_eq!(
        ksdt(&["dt", "a.pgm", "--mode", "fuzzy", "--out", "x.clf"], p)
            .status
            .code(),
        Some(2)
    );
    assert_eq!(ksdt(&["frobnicate"], p).status.code(), Some(2));
    assert_eq!(ksdt(&["--help"], p).status.code(), Some(0));
}

#[test]
fn loss_json_and_gradient() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let gt = square(28, 9, 9, 10);
    write_pgm(&gt, p.join("gt.pgm")).unwrap();
    write_pgm(&square(28, 9, 10, 10), p.join("s1.pgm")).unwrap();
    write_pgm(&square(28, 9, 11, 10), p.join("s2.pgm")).unwrap();
    write_tensor(&gt, p.join("gt.clf")).unwrap();

    let o = ksdt(&["loss", "gt.clf", "gt.pgm", "--grad", "g.clf"], p);
    assert_eq!(o.status.code(), Some(0));
    let line = json(&o);
    assert_eq!(line["loss"], "contour");
    let v = line["value"].as_f64().unwrap();
    assert!((0.0..=0.05).contains(&v), "{v}");
    assert!(line["terms"]["pred_on_gt"].is_number() && line["terms"]["gt_on_pred"].is_number());
    assert_eq!(line["degenerate_gt"], false);
    assert_eq!(read_tensor(p.join("g.clf")).unwrap().shape(), (28, 28));

    let o = ksdt(&["loss", "gt.pgm", "gt.pgm", "--loss", "mse-edge"], p);
    assert!(json(&o)["value"].as_f64().unwrap() <= 1e-6);

    let value = |pred: &str| {
        json(&ksdt(&["loss", pred, "gt.pgm"], p))["value"]
            .as_f64()
            .unwrap()
    };
    assert!(value("s2.pgm") > value("s1.pgm"));

    // numbers carry 17 significant digits
    let text = stdout(&o);
    let digits = text
        .split("\"value\":")
        .nth(1)
        .unwrap()
        .split('e')
        .next()
        .unwrap();
    assert_eq!(digits.replace('.', "").len(), 17, "{text}");
}

#[test]
fn synth_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("disk.json"),
        r#"{"kind":"disk","radius":5,"canvas_height":32,"canvas_width":32,"seed":0}"#,
    )
    .unwrap();
    let o = ksdt(
        &["synth", "--spec-json", "disk.json", "--out", "disk.pgm"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["foreground"].as_u64(), Some(81));
    let golden =
        std::fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/disk_r5_32.pgm"))
            .unwrap();
    assert_eq!(std::fs::read(dir.path().join("disk.pgm")).unwrap(), golden);

    std::fs::write(
        dir.path().join("huge.json"),
        r#"{"kind":"disk","radius":20,"canvas_height":32,"canvas_width":32}"#,
    )
    .unwrap();
    let o = ksdt(
        &["synth", "--spec-json", "huge.json", "--out", "h.pgm"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    std::fs::write(dir.path().join("broken.json"), "{\"kind\":").unwrap();
    let o = ksdt(
        &["synth", "--spec-json", "broken.json", "--out", "h.pgm"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_default_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = ksdt(&["gradcheck"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let line = json(&o);
    assert!(line["max_rel_error"].as_f64().unwrap() < 1e-4);
    assert_eq!(line["pass"], true);
}

#[test]
fn bench_reports_positive_throughput() {
    let dir = tempfile::tempdir().unwrap();
    let o = ksdt(
        &["bench", "--size", "256", "--k", "2", "--iters", "2"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let line = json(&o);
    assert!(line["soft_ksdt_fwd_bwd_pixels_per_sec"].as_f64().unwrap() > 0.0);
    assert!(line["exact_dt_pixels_per_sec"].as_f64().unwrap() > 0.0);
}

#[test]
fn refine_writes_trajectory_and_masks() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("job.json"),
        r#"{"scenario":{"shape":{"kind":"rectangle","height":10,"width":10,"canvas_height":28,"canvas_width":28,"seed":1},
            "shift":[0,2],"noise_sigma":0.5,"noise_seed":4},
            "config":{"steps":12,"snapshot_every":5}}"#,
    )
    .unwrap();
    let o = ksdt(
        &["refine", "--spec-json", "job.json", "--out-dir", "out"],
        dir.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let out = dir.path().join("out");
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("step,loss,bce,contour,iou,bf1,meandist"));
    assert_eq!(lines.count(), 13);
    for name in [
        "gt.pgm",
        "initial.pgm",
        "final.pgm",
        "snapshot_00000.pgm",
        "snapshot_00005.pgm",
        "snapshot_00010.pgm",
    ] {
        assert!(out.join(name).is_file(), "{name}");
    }
    let gt = read_pgm(out.join("gt.pgm")).unwrap();
    assert_eq!(gt.values().iter().filter(|&&v| v == 1.0).count(), 100);
    let line = json(&o);
    assert_eq!(line["steps"].as_u64(), Some(12));
}
