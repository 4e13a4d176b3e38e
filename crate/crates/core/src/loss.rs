//! Contour loss and the two MSE ablations, each returning a value and the
//! gradient with respect to the predicted mask response.

use serde::{Deserialize, Serialize};

use crate::contour::{
    contour_dt, contour_dt_grid, contour_response, contour_response_grid, soft_mask, KsdtConfig,
};
use crate::error::{Error, Result};
use crate::graph::{sigmoid, Tape, Var};
use crate::grid::{ensure_same_shape, BinaryMask, Grid};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Smoothing term in both ratios of the contour distance.
    pub epsilon: f64,
    pub ksdt: KsdtConfig,
    /// Treat the predicted DTI as a constant weight map (no gradient through it).
    pub detach_pred_dt: bool,
    /// The prediction is a logit map: apply a unit logistic before the soft mask.
    pub logit_input: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            epsilon: 1e-6,
            ksdt: KsdtConfig::default(),
            detach_pred_dt: false,
            logit_input: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::contract(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        self.ksdt.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Contour,
    MseEdge,
    MseDt,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Contour => "contour",
            LossKind::MseEdge => "mse-edge",
            LossKind::MseDt => "mse-dt",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub value: f64,
    /// Gradient with respect to the predicted response, same shape.
    pub grad: Grid,
    /// Named per-term values, in a fixed order.
    pub terms: Vec<(&'static str, f64)>,
    /// The ground truth has no contour at all; the value is held finite by epsilon only.
    pub degenerate_gt: bool,
}

impl LossReport {
    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(n, _)| *n == name).map(|&(_, v)| v)
    }
}

/// Predicted side of the pipeline up to the soft mask.
fn predicted_mask(tape: &mut Tape, pred: Var, cfg: &LossConfig) -> Result<Var> {
    let response = if cfg.logit_input {
        tape.sigmoid_binarize(pred, 1.0, 0.0)?
    } else {
        pred
    };
    soft_mask(tape, response, &cfg.ksdt)
}

struct Prepared {
    tape: Tape,
    pred_contour: Var,
    gt_contour: Var,
    gt_contour_sum: f64,
}

fn prepare(pred: &Grid, gt: &BinaryMask, cfg: &LossConfig) -> Result<Prepared> {
    ensure_same_shape(pred.shape(), gt.shape())?;
    cfg.validate()?;
    let mut tape = Tape::new();
    let x = tape.input(pred.clone())?;
    let mp = predicted_mask(&mut tape, x, cfg)?;
    let pred_contour = contour_response(&mut tape, mp)?;
    let gt_resp = contour_response_grid(gt.grid());
    let gt_contour_sum = gt_resp.sum();
    let gt_contour = tape.constant(gt_resp);
    Ok(Prepared {
        tape,
        pred_contour,
        gt_contour,
        gt_contour_sum,
    })
}

fn finish(tape: &Tape, out: Var) -> Result<(f64, Grid)> {
    let grad = tape.backward(out, &Grid::from_parts(1, 1, vec![1.0]))?;
    let value = tape.scalar(out);
    if !value.is_finite() || grad.values().iter().any(|g| !g.is_finite()) {
        return Err(Error::contract(
            "loss evaluation produced non-finite values",
        ));
    }
    Ok((value, grad))
}

/// `(GAP(weights * contour) + eps) / (GAP(contour) + eps)`.
fn coverage_ratio(tape: &mut Tape, contour: Var, weights: Var, eps: f64) -> Result<Var> {
    let covered = tape.hadamard(contour, weights)?;
    let num = tape.gap(covered);
    let num = tape.offset(num, eps);
    let den = tape.gap(contour);
    let den = tape.offset(den, eps);
    tape.div(num, den)
}

/// Symmetric normalized coverage of each contour response on the other's k-step DTI.
pub fn contour_distance(pred: &Grid, gt: &BinaryMask, cfg: &LossConfig) -> Result<LossReport> {
    let Prepared {
        mut tape,
        pred_contour,
        gt_contour,
        gt_contour_sum,
    } = prepare(pred, gt, cfg)?;
    let gt_dt = contour_dt_grid(tape.value(gt_contour), &cfg.ksdt)?;
    let gt_dt = tape.constant(gt_dt);
    let mut pred_dt = contour_dt(&mut tape, pred_contour, &cfg.ksdt)?;
    if cfg.detach_pred_dt {
        pred_dt = tape.detach(pred_dt);
    }
    let pred_on_gt = coverage_ratio(&mut tape, pred_contour, gt_dt, cfg.epsilon)?;
    let gt_on_pred = coverage_ratio(&mut tape, gt_contour, pred_dt, cfg.epsilon)?;
    let both = tape.add(pred_on_gt, gt_on_pred)?;
    let d = tape.scale(both, 0.5);
    let (value, grad) = finish(&tape, d)?;
    Ok(LossReport {
        value,
        grad,
        terms: vec![
            ("pred_on_gt", tape.scalar(pred_on_gt)),
            ("gt_on_pred", tape.scalar(gt_on_pred)),
        ],
        degenerate_gt: gt_contour_sum == 0.0,
    })
}

/// Mean squared difference of the contour responses.
pub fn mse_edge_loss(pred: &Grid, gt: &BinaryMask, cfg: &LossConfig) -> Result<LossReport> {
    let Prepared {
        mut tape,
        pred_contour,
        gt_contour,
        gt_contour_sum,
    } = prepare(pred, gt, cfg)?;
    let out = mse(&mut tape, pred_contour, gt_contour)?;
    let (value, grad) = finish(&tape, out)?;
    Ok(LossReport {
        value,
        grad,
        terms: vec![("mse", value)],
        degenerate_gt: gt_contour_sum == 0.0,
    })
}

/// Mean squared difference of the k-step DTIs.
pub fn mse_contour_loss(pred: &Grid, gt: &BinaryMask, cfg: &LossConfig) -> Result<LossReport> {
    let Prepared {
        mut tape,
        pred_contour,
        gt_contour,
        gt_contour_sum,
    } = prepare(pred, gt, cfg)?;
    let gt_dt = contour_dt_grid(tape.value(gt_contour), &cfg.ksdt)?;
    let gt_dt = tape.constant(gt_dt);
    let pred_dt = contour_dt(&mut tape, pred_contour, &cfg.ksdt)?;
    let out = mse(&mut tape, pred_dt, gt_dt)?;
    let (value, grad) = finish(&tape, out)?;
    Ok(LossReport {
        value,
        grad,
        terms: vec![("mse", value)],
        degenerate_gt: gt_contour_sum == 0.0,
    })
}

pub(crate) fn mse(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let diff = tape.sub(a, b)?;
    let sq = tape.square(diff);
    Ok(tape.gap(sq))
}

pub fn loss_by_kind(
    kind: LossKind,
    pred: &Grid,
    gt: &BinaryMask,
    cfg: &LossConfig,
) -> Result<LossReport> {
    match kind {
        LossKind::Contour => contour_distance(pred, gt, cfg),
        LossKind::MseEdge => mse_edge_loss(pred, gt, cfg),
        LossKind::MseDt => mse_contour_loss(pred, gt, cfg),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchReport {
    /// Mean of the per-pair values.
    pub value: f64,
    /// Per-pair gradients of the mean, i.e. already scaled by `1 / N`.
    pub grads: Vec<Grid>,
    pub items: Vec<LossReport>,
}

/// Mean contour distance over a batch of `(prediction, ground truth)` pairs.
pub fn contour_loss_batch(pairs: &[(Grid, BinaryMask)], cfg: &LossConfig) -> Result<BatchReport> {
    if pairs.is_empty() {
        return Err(Error::contract("empty batch"));
    }
    let items = pairs
        .iter()
        .map(|(p, g)| contour_distance(p, g, cfg))
        .collect::<Result<Vec<_>>>()?;
    let n = items.len() as f64;
    let value = items.iter().map(|r| r.value).sum::<f64>() / n;
    let grads = items.iter().map(|r| r.grad.map(|g| g / n)).collect();
    Ok(BatchReport {
        value,
        grads,
        items,
    })
}

/// Mean binary cross-entropy of `sigmoid(pred)` against the mask.
pub fn bce_mask_loss(pred: &Grid, gt: &BinaryMask) -> Result<LossReport> {
    ensure_same_shape(pred.shape(), gt.shape())?;
    let n = pred.len() as f64;
    let (h, w) = pred.shape();
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&x, &y) in pred.values().iter().zip(gt.grid().values()) {
        // max(x, 0) - x y + ln(1 + exp(-|x|))
        total += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
        grad.push((sigmoid(x) - y) / n);
    }
    let value = total / n;
    Ok(LossReport {
        value,
        grad: Grid::from_parts(h, w, grad),
        terms: vec![("bce", value)],
        degenerate_gt: false,
    })
}

/// Central-difference check of a loss gradient, same error measure as [`crate::graph::grad_check`].
pub fn loss_grad_check(
    kind: LossKind,
    x: &Grid,
    gt: &BinaryMask,
    cfg: &LossConfig,
    h: f64,
) -> Result<f64> {
    let analytic = loss_by_kind(kind, x, gt, cfg)?.grad;
    let (rows, cols) = x.shape();
    let mut p = x.values().to_vec();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.values().iter().enumerate() {
        let orig = p[i];
        p[i] = orig + h;
        let fp = loss_by_kind(kind, &Grid::new(rows, cols, p.clone())?, gt, cfg)?.value;
        p[i] = orig - h;
        let fm = loss_by_kind(kind, &Grid::new(rows, cols, p.clone())?, gt, cfg)?.value;
        p[i] = orig;
        let num = (fp - fm) / (2.0 * h);
        worst = worst.max((a - num).abs() / 1f64.max(a.abs()).max(num.abs()));
    }
    Ok(worst)
}

/// Encodes a binary mask as `+mag` / `-mag` logits.
pub fn mask_to_logits(mask: &BinaryMask, mag: f64) -> Grid {
    mask.grid().map(|v| if v > 0.0 { mag } else { -mag })
}
