//! Synthetic mask refinement: rasterized shapes, perturbed logit maps and
//! plain gradient descent on the logits under a mixed BCE + contour objective.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{exact_contour, exact_kstep_dt};
use crate::fmt_num;
use crate::graph::sigmoid_binarize;
use crate::grid::{ensure_same_shape, hard_binarize, BinaryMask, Grid};
use crate::loss::{bce_mask_loss, loss_by_kind, LossConfig, LossKind};
use crate::rng::SplitMix64;

/// Logit magnitude used for synthetic predictions.
pub const LOGIT_MAGNITUDE: f64 = 6.0;
const MARGIN: i64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShapeKind {
    /// Pixels with `dr^2 + dc^2 <= radius^2` around an integer centre.
    Disk {
        radius: u32,
    },
    Rectangle {
        height: u32,
        width: u32,
    },
    /// Convex hull of `sides` integer vertices on a circle of `radius`.
    ConvexPolygon {
        sides: u32,
        radius: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    #[serde(flatten)]
    pub kind: ShapeKind,
    pub canvas_height: usize,
    pub canvas_width: usize,
    /// Selects the placement (and polygon vertex angles).
    #[serde(default)]
    pub seed: u64,
}

/// Half-extents of the shape's bounding box around its centre: (up, down, left, right).
fn extents(kind: &ShapeKind) -> (i64, i64, i64, i64) {
    match *kind {
        ShapeKind::Disk { radius } => {
            let r = radius as i64;
            (r, r, r, r)
        }
        ShapeKind::Rectangle { height, width } => {
            let (h, w) = (height as i64, width as i64);
            (h / 2, h - 1 - h / 2, w / 2, w - 1 - w / 2)
        }
        ShapeKind::ConvexPolygon { radius, .. } => {
            let r = radius as i64;
            (r, r, r, r)
        }
    }
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew's monotone chain; returns the hull counter-clockwise without repeats.
fn convex_hull(mut pts: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(i64, i64)>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Rasterizes a shape. Deterministic in `spec`, integer arithmetic only
/// except for rounding polygon vertices onto the pixel lattice.
pub fn synth_shape(spec: &ShapeSpec) -> Result<BinaryMask> {
    let (h, w) = (spec.canvas_height as i64, spec.canvas_width as i64);
    if h < 1 || w < 1 {
        return Err(Error::contract("canvas must be at least 1x1"));
    }
    if let ShapeKind::Rectangle { height, width } = spec.kind {
        if height == 0 || width == 0 {
            return Err(Error::contract("rectangle sides must be positive"));
        }
    }
    if let ShapeKind::ConvexPolygon { sides, .. } = spec.kind {
        if sides < 3 {
            return Err(Error::contract("polygon needs at least 3 sides"));
        }
    }
    let (up, down, left, right) = extents(&spec.kind);
    let (rmin, rmax) = (MARGIN + up, h - 1 - MARGIN - down);
    let (cmin, cmax) = (MARGIN + left, w - 1 - MARGIN - right);
    if rmin > rmax || cmin > cmax {
        return Err(Error::contract(format!(
            "shape does not fit a {h}x{w} canvas with a {MARGIN}-pixel margin"
        )));
    }
    let mut rng = SplitMix64::new(spec.seed);
    let cr = rmin + rng.below((rmax - rmin + 1) as u64) as i64;
    let cc = cmin + rng.below((cmax - cmin + 1) as u64) as i64;

    let inside: Box<dyn Fn(i64, i64) -> bool> = match spec.kind {
        ShapeKind::Disk { radius } => {
            let r2 = (radius as i64).pow(2);
            Box::new(move |r, c| (r - cr).pow(2) + (c - cc).pow(2) <= r2)
        }
        ShapeKind::Rectangle { .. } => Box::new(move |r, c| {
            (cr - up..=cr + down).contains(&r) && (cc - left..=cc + right).contains(&c)
        }),
        ShapeKind::ConvexPolygon { sides, radius } => {
            let step = std::f64::consts::TAU / sides as f64;
            let verts: Vec<(i64, i64)> = (0..sides)
                .map(|i| {
                    // jitter each vertex angle within its sector
                    let a = (i as f64 + 0.8 * rng.next_f64()) * step;
                    (
                        cr + (radius as f64 * a.sin()).round() as i64,
                        cc + (radius as f64 * a.cos()).round() as i64,
                    )
                })
                .collect();
            let hull = convex_hull(verts);
            Box::new(move |r, c| {
                if hull.len() < 3 {
                    return hull.contains(&(r, c));
                }
                (0..hull.len()).all(|i| cross(hull[i], hull[(i + 1) % hull.len()], (r, c)) >= 0)
            })
        }
    };
    BinaryMask::from_fn(h as usize, w as usize, |r, c| inside(r as i64, c as i64))
}

/// Translates a mask by `(dr, dc)`. Fails if any foreground pixel would leave the canvas.
pub fn shift_mask(mask: &BinaryMask, shift: (i64, i64)) -> Result<BinaryMask> {
    let (h, w) = mask.shape();
    let (dr, dc) = shift;
    for (r, c) in mask.foreground() {
        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
        if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
            return Err(Error::contract(format!(
                "shift ({dr}, {dc}) moves pixel ({r}, {c}) off the canvas"
            )));
        }
    }
    BinaryMask::from_fn(h, w, |r, c| {
        let (sr, sc) = (r as i64 - dr, c as i64 - dc);
        sr >= 0
            && sc >= 0
            && (sr as usize) < h
            && (sc as usize) < w
            && mask.is_set(sr as usize, sc as usize)
    })
}

/// Shifted mask as `+6 / -6` logits plus seeded Gaussian noise.
pub fn perturb(mask: &BinaryMask, shift: (i64, i64), sigma: f64, seed: u64) -> Result<Grid> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::contract(format!(
            "noise sigma must be >= 0, got {sigma}"
        )));
    }
    let moved = shift_mask(mask, shift)?;
    let mut rng = SplitMix64::new(seed);
    let (h, w) = mask.shape();
    Grid::from_fn(h, w, |r, c| {
        let base = if moved.is_set(r, c) {
            LOGIT_MAGNITUDE
        } else {
            -LOGIT_MAGNITUDE
        };
        if sigma > 0.0 {
            base + sigma * rng.next_gaussian()
        } else {
            base
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMetrics {
    pub iou: f64,
    /// Boundary F-score with a 1-pixel Chebyshev tolerance.
    pub bf1: f64,
    /// Mean truncated contour distance, both directions averaged.
    pub mean_dist: f64,
}

fn mean_dt_over(contour: &BinaryMask, other_dt: &crate::grid::IntGrid, cap: f64) -> f64 {
    let n = contour.count();
    if n == 0 {
        return cap;
    }
    contour
        .foreground()
        .map(|(r, c)| f64::from(other_dt.get(r, c)))
        .sum::<f64>()
        / n as f64
}

/// IoU, boundary-F at 1 px and the truncated mean contour distance with cap `k + 1`.
///
/// Contours are the Sobel-support contours of the masks. When exactly one
/// contour is empty its distance term is the cap; when both masks are empty
/// the metrics are `(1, 1, 0)`.
pub fn boundary_metrics(pred: &BinaryMask, gt: &BinaryMask, k: usize) -> Result<BoundaryMetrics> {
    ensure_same_shape(pred.shape(), gt.shape())?;
    if k < 1 {
        return Err(Error::contract("k must be at least 1"));
    }
    let inter = pred
        .grid()
        .values()
        .iter()
        .zip(gt.grid().values())
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .count();
    let union = pred.count() + gt.count() - inter;
    if union == 0 {
        return Ok(BoundaryMetrics {
            iou: 1.0,
            bf1: 1.0,
            mean_dist: 0.0,
        });
    }
    let iou = inter as f64 / union as f64;

    let (cp, cg) = (exact_contour(pred), exact_contour(gt));
    let dt_p = exact_kstep_dt(&cp, k)?;
    let dt_g = exact_kstep_dt(&cg, k)?;
    let (np, ng) = (cp.count(), cg.count());
    let bf1 = match (np, ng) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ => {
            let precision = cp
                .foreground()
                .filter(|&(r, c)| dt_g.get(r, c) <= 1)
                .count() as f64
                / np as f64;
            let recall = cg
                .foreground()
                .filter(|&(r, c)| dt_p.get(r, c) <= 1)
                .count() as f64
                / ng as f64;
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        }
    };
    let cap = (k + 1) as f64;
    let mean_dist = if np == 0 && ng == 0 {
        0.0
    } else {
        0.5 * (mean_dt_over(&cp, &dt_g, cap) + mean_dt_over(&cg, &dt_p, cap))
    };
    Ok(BoundaryMetrics {
        iou,
        bf1,
        mean_dist,
    })
}

/// Hard mask of a logit map: `sigmoid(logit) > 0.5`.
pub fn logits_to_mask(logits: &Grid) -> BinaryMask {
    hard_binarize(&sigmoid_binarize(logits, 1.0, 0.0), 0.5).expect("0.5 is a valid threshold")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub w_bce: f64,
    pub w_contour: f64,
    /// Which contour-family loss the second weight applies to.
    pub contour_kind: LossKind,
    pub loss: LossConfig,
    /// Keep a mask snapshot every this many steps; 0 keeps none.
    pub snapshot_every: usize,
    /// Initial steps run with the BCE term only.
    pub warmup_steps: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            steps: 300,
            learning_rate: 20.0,
            w_bce: 1.0,
            w_contour: 1.0,
            contour_kind: LossKind::Contour,
            loss: LossConfig::default(),
            snapshot_every: 0,
            warmup_steps: 0,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::contract("steps must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::contract("learning_rate must be positive"));
        }
        let ok = |w: f64| w >= 0.0 && w.is_finite();
        if !ok(self.w_bce) || !ok(self.w_contour) || self.w_bce + self.w_contour == 0.0 {
            return Err(Error::contract(
                "loss weights must be >= 0 and not both zero",
            ));
        }
        self.loss.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// Weighted objective at this step.
    pub loss: f64,
    pub bce: f64,
    /// Unweighted contour-family term.
    pub contour: f64,
    pub metrics: BoundaryMetrics,
    pub snapshot: Option<BinaryMask>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineTrajectory {
    /// Records for steps `0..=steps`; the last one describes the final logits.
    pub records: Vec<StepRecord>,
    pub final_logits: Grid,
}

impl RefineTrajectory {
    pub fn last(&self) -> &StepRecord {
        self.records.last().expect("trajectory is never empty")
    }

    pub const CSV_HEADER: &'static str = "step,loss,bce,contour,iou,bf1,meandist";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.step,
                fmt_num(r.loss),
                fmt_num(r.bce),
                fmt_num(r.contour),
                fmt_num(r.metrics.iou),
                fmt_num(r.metrics.bf1),
                fmt_num(r.metrics.mean_dist)
            );
        }
        out
    }
}

/// Gradient descent on the logits of `pred_logits` towards `gt`.
///
/// The contour-family term sees `sigmoid(logits)` as its mask response.
pub fn refine(pred_logits: &Grid, gt: &BinaryMask, cfg: &RefineConfig) -> Result<RefineTrajectory> {
    cfg.validate()?;
    ensure_same_shape(pred_logits.shape(), gt.shape())?;
    let mut loss_cfg = cfg.loss;
    loss_cfg.logit_input = true;
    let k = loss_cfg.ksdt.k;

    let mut logits = pred_logits.clone();
    let mut records = Vec::with_capacity(cfg.steps + 1);
    for step in 0..=cfg.steps {
        let bce = bce_mask_loss(&logits, gt)?;
        let w_contour = if step < cfg.warmup_steps {
            0.0
        } else {
            cfg.w_contour
        };
        let contour = if cfg.w_contour > 0.0 {
            Some(
                loss_by_kind(cfg.contour_kind, &logits, gt, &loss_cfg).map_err(|e| match e {
                    Error::Contract(_) => Error::NonFinite { step },
                    other => other,
                })?,
            )
        } else {
            None
        };
        let contour_value = contour.as_ref().map_or(0.0, |r| r.value);
        let loss = cfg.w_bce * bce.value + w_contour * contour_value;
        if !loss.is_finite() {
            return Err(Error::NonFinite { step });
        }
        let mask = logits_to_mask(&logits);
        let metrics = boundary_metrics(&mask, gt, k)?;
        let snapshot =
            (cfg.snapshot_every > 0 && step % cfg.snapshot_every == 0).then(|| mask.clone());
        records.push(StepRecord {
            step,
            loss,
            bce: bce.value,
            contour: contour_value,
            metrics,
            snapshot,
        });
        if step == cfg.steps {
            break;
        }

        let lr = cfg.learning_rate;
        let mut next = logits.clone();
        let cg = contour
            .as_ref()
            .filter(|_| w_contour > 0.0)
            .map(|r| &r.grad);
        for (i, x) in next.values_mut().iter_mut().enumerate() {
            let mut g = cfg.w_bce * bce.grad.values()[i];
            if let Some(cg) = cg {
                g += w_contour * cg.values()[i];
            }
            if !g.is_finite() {
                return Err(Error::NonFinite { step });
            }
            *x -= lr * g;
        }
        if next.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step });
        }
        logits = next;
    }
    Ok(RefineTrajectory {
        records,
        final_logits: logits,
    })
}

/// One shifted-shape refinement problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub shape: ShapeSpec,
    pub shift: (i64, i64),
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub noise_seed: u64,
}

impl Scenario {
    pub fn build(&self) -> Result<(BinaryMask, Grid)> {
        let gt = synth_shape(&self.shape)?;
        let logits = perturb(&gt, self.shift, self.noise_sigma, self.noise_seed)?;
        Ok((gt, logits))
    }
}

/// A reproducible family of shifted shapes on a 28x28 canvas, cycling
/// through disks, rectangles and polygons shifted by 2 pixels along one of
/// the 8 grid directions.
pub fn standard_scenarios(count: usize, base_seed: u64) -> Vec<Scenario> {
    let mut rng = SplitMix64::new(base_seed);
    (0..count)
        .map(|i| {
            let kind = match i % 3 {
                0 => ShapeKind::Disk {
                    radius: 5 + rng.below(3) as u32,
                },
                1 => ShapeKind::Rectangle {
                    height: 8 + rng.below(5) as u32,
                    width: 8 + rng.below(5) as u32,
                },
                _ => ShapeKind::ConvexPolygon {
                    sides: 5 + rng.below(3) as u32,
                    radius: 6 + rng.below(2) as u32,
                },
            };
            // one pixel would already sit inside the boundary tolerance
            const DIRS: [(i64, i64); 8] = [
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ];
            let (dr, dc) = DIRS[rng.below(8) as usize];
            let shift = (2 * dr, 2 * dc);
            Scenario {
                shape: ShapeSpec {
                    kind,
                    canvas_height: 28,
                    canvas_width: 28,
                    seed: rng.next_u64(),
                },
                shift,
                noise_sigma: 0.5,
                noise_seed: rng.next_u64(),
            }
        })
        .collect()
}

/// Refines every scenario under `cfg`, in parallel, returning the final
/// boundary metrics in scenario order.
pub fn run_scenarios(scenarios: &[Scenario], cfg: &RefineConfig) -> Result<Vec<BoundaryMetrics>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = scenarios
            .iter()
            .map(|sc| {
                s.spawn(move || -> Result<BoundaryMetrics> {
                    let (gt, logits) = sc.build()?;
                    Ok(refine(&logits, &gt, cfg)?.last().metrics)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("refinement thread panicked"))
            .collect()
    })
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
