//! `ksdt` command-line interface.
//!
//! Exit codes: 0 success, 1 internal error, 2 input-format error (including
//! unreadable files and bad flags), 3 contract violation.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::contour::{contour_dt_grid, contour_response_grid, ksdt, KsdtConfig};
use crate::error::{Error, Result};
use crate::exact::{exact_contour, exact_kstep_dt};
use crate::fmt_num;
use crate::graph::Tape;
use crate::grid::{hard_binarize, BinaryMask, Grid};
use crate::io::{read_any, write_pgm, write_tensor};
use crate::loss::{loss_by_kind, loss_grad_check, LossConfig, LossKind};
use crate::refine::{refine, synth_shape, RefineConfig, Scenario, ShapeSpec};
use crate::rng::SplitMix64;

#[derive(Parser, Debug)]
#[command(
    name = "ksdt",
    version,
    about = "k-step soft distance transforms and contour loss"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DtMode {
    Exact,
    Soft,
    SoftStabilized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Contour,
    MseEdge,
    MseDt,
}

impl From<LossArg> for LossKind {
    fn from(a: LossArg) -> Self {
        match a {
            LossArg::Contour => LossKind::Contour,
            LossArg::MseEdge => LossKind::MseEdge,
            LossArg::MseDt => LossKind::MseDt,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Distance transform of a mask's contour.
    Dt {
        /// Mask image (PGM or CLF1). Exact mode binarizes it at 0.5.
        mask: PathBuf,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, value_enum, default_value_t = DtMode::Exact)]
        mode: DtMode,
        /// Output grid in CLF1 format.
        #[arg(long)]
        out: PathBuf,
        /// Optional PGM rendering, values divided by k + 1.
        #[arg(long)]
        png_preview: Option<PathBuf>,
    },
    /// Loss value (one JSON line on stdout) and optional gradient grid.
    Loss {
        /// Predicted mask response (CLF1 or PGM).
        pred: PathBuf,
        /// Ground-truth mask (PGM or CLF1), binarized at 0.5.
        gt: PathBuf,
        #[arg(long, value_enum, default_value_t = LossArg::Contour)]
        loss: LossArg,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
        /// Zero-anchored soft dilation.
        #[arg(long)]
        stabilized: bool,
        /// Interpret the prediction as logits.
        #[arg(long)]
        logits: bool,
        /// Write the gradient with respect to the prediction (CLF1).
        #[arg(long)]
        grad: Option<PathBuf>,
    },
    /// Compare analytic and central-difference gradients on a random input.
    Gradcheck {
        #[arg(long, default_value_t = 16)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = LossArg::Contour)]
        loss: LossArg,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
    },
    /// Run one refinement scenario described by a JSON file.
    Refine {
        #[arg(long)]
        spec_json: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Rasterize a shape described by a JSON file to PGM.
    Synth {
        #[arg(long)]
        spec_json: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Throughput of soft kSDT (forward + backward) and the exact transform.
    Bench {
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        iters: usize,
    },
}

/// Input file for `refine`.
#[derive(Debug, Deserialize)]
pub struct RefineJob {
    pub scenario: Scenario,
    #[serde(default)]
    pub config: RefineConfig,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Format { .. } | Error::Io { .. } => 2,
        Error::Contract(_) => 3,
        Error::NonFinite { .. } => 1,
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            if code == 0 {
                let _ = write!(stdout, "{e}");
            } else {
                let _ = write!(stderr, "{e}");
            }
            return code;
        }
    };
    match run(cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn ksdt_config(k: usize, stabilized: bool) -> Result<KsdtConfig> {
    let cfg = KsdtConfig::default().with_k(k).stabilized(stabilized);
    cfg.validate()?;
    Ok(cfg)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        let offset = text
            .lines()
            .take(e.line().saturating_sub(1))
            .map(|l| l.len() + 1)
            .sum::<usize>()
            + e.column().saturating_sub(1);
        Error::format(offset, format!("{}: {e}", path.display()))
    })
}

fn out_line(stdout: &mut dyn Write, line: &str) -> Result<()> {
    writeln!(stdout, "{line}").map_err(|e| Error::io("<stdout>", e))
}

/// Runs a parsed command. Returns the exit code for non-error outcomes.
pub fn run(command: Command, stdout: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Dt {
            mask,
            k,
            mode,
            out,
            png_preview,
        } => {
            let cfg = ksdt_config(k, mode == DtMode::SoftStabilized)?;
            let grid = read_any(&mask)?;
            let dt = match mode {
                DtMode::Exact => {
                    let m = hard_binarize(&grid, 0.5)?;
                    exact_kstep_dt(&exact_contour(&m), k)?.to_grid()
                }
                DtMode::Soft | DtMode::SoftStabilized => {
                    contour_dt_grid(&contour_response_grid(&grid), &cfg)?
                }
            };
            write_tensor(&dt, &out)?;
            if let Some(p) = png_preview {
                let scale = (k + 1) as f64;
                write_pgm(&dt.map(|v| v / scale), p)?;
            }
            let (lo, hi) = dt
                .values()
                .iter()
                .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
            out_line(
                stdout,
                &format!(
                    r#"{{"command":"dt","mode":"{}","k":{k},"height":{},"width":{},"min":{},"max":{}}}"#,
                    mode.to_possible_value().unwrap().get_name(),
                    dt.height(),
                    dt.width(),
                    fmt_num(lo),
                    fmt_num(hi)
                ),
            )?;
            Ok(0)
        }
        Command::Loss {
            pred,
            gt,
            loss,
            k,
            epsilon,
            stabilized,
            logits,
            grad,
        } => {
            let cfg = LossConfig {
                epsilon,
                ksdt: ksdt_config(k, stabilized)?,
                detach_pred_dt: false,
                logit_input: logits,
            };
            cfg.validate()?;
            let pred = read_any(&pred)?;
            let gt = hard_binarize(&read_any(&gt)?, 0.5)?;
            let kind = LossKind::from(loss);
            let report = loss_by_kind(kind, &pred, &gt, &cfg)?;
            if let Some(p) = grad {
                write_tensor(&report.grad, p)?;
            }
            let mut terms = String::new();
            for (i, (name, v)) in report.terms.iter().enumerate() {
                let sep = if i == 0 { "" } else { "," };
                let _ = write!(terms, r#"{sep}"{name}":{}"#, fmt_num(*v));
            }
            out_line(
                stdout,
                &format!(
                    r#"{{"loss":"{}","value":{},"terms":{{{terms}}},"degenerate_gt":{},"k":{k},"epsilon":{}}}"#,
                    kind.name(),
                    fmt_num(report.value),
                    report.degenerate_gt,
                    fmt_num(epsilon)
                ),
            )?;
            Ok(0)
        }
        Command::Gradcheck {
            size,
            seed,
            loss,
            k,
            h,
        } => {
            let cfg = LossConfig {
                ksdt: ksdt_config(k, false)?,
                ..LossConfig::default()
            };
            if size < 1 {
                return Err(Error::contract("size must be at least 1"));
            }
            if !(1e-7..=1e-3).contains(&h) {
                return Err(Error::contract(format!(
                    "h must lie in [1e-7, 1e-3], got {h}"
                )));
            }
            let (x, gt) = gradcheck_problem(size, seed)?;
            let kind = LossKind::from(loss);
            let err = loss_grad_check(kind, &x, &gt, &cfg, h)?;
            let pass = err < 1e-4;
            out_line(
                stdout,
                &format!(
                    r#"{{"command":"gradcheck","loss":"{}","size":{size},"seed":{seed},"k":{k},"h":{},"max_rel_error":{},"pass":{pass}}}"#,
                    kind.name(),
                    fmt_num(h),
                    fmt_num(err)
                ),
            )?;
            Ok(if pass { 0 } else { 1 })
        }
        Command::Refine { spec_json, out_dir } => {
            let job: RefineJob = read_json(&spec_json)?;
            job.config.validate()?;
            let (gt, logits) = job.scenario.build()?;
            let traj = refine(&logits, &gt, &job.config)?;
            fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            let csv = out_dir.join("trajectory.csv");
            fs::write(&csv, traj.to_csv()).map_err(|e| Error::io(&csv, e))?;
            write_pgm(gt.grid(), out_dir.join("gt.pgm"))?;
            write_pgm(
                crate::refine::logits_to_mask(&logits).grid(),
                out_dir.join("initial.pgm"),
            )?;
            write_pgm(
                crate::refine::logits_to_mask(&traj.final_logits).grid(),
                out_dir.join("final.pgm"),
            )?;
            for r in &traj.records {
                if let Some(s) = &r.snapshot {
                    write_pgm(
                        s.grid(),
                        out_dir.join(format!("snapshot_{:05}.pgm", r.step)),
                    )?;
                }
            }
            let first = &traj.records[0].metrics;
            let last = traj.last();
            out_line(
                stdout,
                &format!(
                    r#"{{"command":"refine","steps":{},"initial":{{"iou":{},"bf1":{},"meandist":{}}},"final":{{"loss":{},"iou":{},"bf1":{},"meandist":{}}}}}"#,
                    job.config.steps,
                    fmt_num(first.iou),
                    fmt_num(first.bf1),
                    fmt_num(first.mean_dist),
                    fmt_num(last.loss),
                    fmt_num(last.metrics.iou),
                    fmt_num(last.metrics.bf1),
                    fmt_num(last.metrics.mean_dist)
                ),
            )?;
            Ok(0)
        }
        Command::Synth { spec_json, out } => {
            let spec: ShapeSpec = read_json(&spec_json)?;
            let mask = synth_shape(&spec)?;
            write_pgm(mask.grid(), &out)?;
            out_line(
                stdout,
                &format!(
                    r#"{{"command":"synth","height":{},"width":{},"foreground":{}}}"#,
                    mask.height(),
                    mask.width(),
                    mask.count()
                ),
            )?;
            Ok(0)
        }
        Command::Bench { size, k, iters } => {
            let cfg = ksdt_config(k, false)?;
            if size < 1 || iters < 1 {
                return Err(Error::contract("size and iters must be at least 1"));
            }
            let (soft, exact) = bench(size, &cfg, iters)?;
            out_line(
                stdout,
                &format!(
                    r#"{{"command":"bench","size":{size},"k":{k},"iters":{iters},"soft_ksdt_fwd_bwd_pixels_per_sec":{},"exact_dt_pixels_per_sec":{}}}"#,
                    fmt_num(soft),
                    fmt_num(exact)
                ),
            )?;
            Ok(0)
        }
    }
}

/// Random prediction in `[0, 1)` and a centred square ground truth.
pub fn gradcheck_problem(size: usize, seed: u64) -> Result<(Grid, BinaryMask)> {
    let mut rng = SplitMix64::new(seed);
    let x = Grid::from_fn(size, size, |_, _| rng.next_f64())?;
    let lo = size / 4;
    let hi = size - size / 4;
    let gt = BinaryMask::from_fn(size, size, |r, c| {
        (lo..hi).contains(&r) && (lo..hi).contains(&c)
    })?;
    Ok((x, gt))
}

/// Pixels per second for soft kSDT forward + backward and for the exact transform.
pub fn bench(size: usize, cfg: &KsdtConfig, iters: usize) -> Result<(f64, f64)> {
    let mut rng = SplitMix64::new(1);
    let mask = BinaryMask::from_fn(size, size, |_, _| rng.next_f64() < 0.02)?;
    let px = (size * size * iters) as f64;

    let start = Instant::now();
    for _ in 0..iters {
        soft_ksdt_fwd_bwd(mask.grid(), cfg)?;
    }
    let soft = px / start.elapsed().as_secs_f64().max(1e-12);

    let start = Instant::now();
    for _ in 0..iters {
        exact_kstep_dt(&mask, cfg.k)?;
    }
    let exact = px / start.elapsed().as_secs_f64().max(1e-12);
    Ok((soft, exact))
}

/// One forward and backward pass of `GAP(kSDT(x))`, returning the gradient.
pub fn soft_ksdt_fwd_bwd(x: &Grid, cfg: &KsdtConfig) -> Result<Grid> {
    let mut tape = Tape::new();
    let v = tape.input(x.clone())?;
    let d = ksdt(&mut tape, v, cfg)?;
    let m = tape.gap(d);
    tape.backward(m, &Grid::filled(1, 1, 1.0)?)
}
