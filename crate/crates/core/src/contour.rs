//! Differentiable contour pipeline: soft binarization, Sobel contour
//! response, one-step soft dilation and the iterative k-step soft distance
//! transform (kSDT).
//!
//! Each operation comes in two forms: a tape form taking and returning [`Var`]
//! so gradients can flow, and a plain `*_grid` form for forward-only use.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{sigmoid, Kernel3x3, Tape, Var};
use crate::grid::Grid;

/// Parameters of the soft mask binarization and of the kSDT recurrence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KsdtConfig {
    /// Number of dilation steps; output values are capped at `k + 1`.
    pub k: usize,
    pub gamma_dilate: f64,
    pub t_dilate: f64,
    pub gamma_mask: f64,
    pub t_mask: f64,
    /// Use the zero-anchored sigmoid `(B(x) - B(0)) / (1 - B(0))` in
    /// dilation, so an all-zero background stays exactly zero.
    pub stabilized: bool,
}

impl Default for KsdtConfig {
    fn default() -> Self {
        KsdtConfig {
            k: 2,
            gamma_dilate: 20.0,
            t_dilate: 0.1,
            gamma_mask: 20.0,
            t_mask: 0.5,
            stabilized: false,
        }
    }
}

impl KsdtConfig {
    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn stabilized(mut self, on: bool) -> Self {
        self.stabilized = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::contract("k must be at least 1"));
        }
        for (name, g) in [
            ("gamma_dilate", self.gamma_dilate),
            ("gamma_mask", self.gamma_mask),
        ] {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::contract(format!("{name} must be positive, got {g}")));
            }
        }
        for (name, t) in [("t_dilate", self.t_dilate), ("t_mask", self.t_mask)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::contract(format!(
                    "{name} must lie in (0, 1), got {t}"
                )));
            }
        }
        Ok(())
    }

    /// Dilation sigmoid evaluated at zero input, `B(0)`.
    pub fn background_level(&self) -> f64 {
        sigmoid(-self.gamma_dilate * self.t_dilate)
    }
}

/// Runs a tape-building closure on a constant input and returns the forward value.
fn forward(input: &Grid, f: impl FnOnce(&mut Tape, Var) -> Result<Var>) -> Result<Grid> {
    let mut tape = Tape::new();
    let x = tape.constant(input.clone());
    let out = f(&mut tape, x)?;
    Ok(tape.value(out).clone())
}

/// Soft binarization of a mask response with `(gamma_mask, t_mask)`.
pub fn soft_mask(tape: &mut Tape, response: Var, cfg: &KsdtConfig) -> Result<Var> {
    tape.sigmoid_binarize(response, cfg.gamma_mask, cfg.t_mask)
}

pub fn soft_mask_grid(response: &Grid, cfg: &KsdtConfig) -> Result<Grid> {
    forward(response, |t, x| soft_mask(t, x, cfg))
}

/// Half-sum of absolute Sobel-x and Sobel-y responses.
pub fn contour_response(tape: &mut Tape, mask: Var) -> Result<Var> {
    let gx = tape.conv3x3(mask, Kernel3x3::SOBEL_X);
    let gy = tape.conv3x3(mask, Kernel3x3::SOBEL_Y);
    let ax = tape.abs(gx);
    let ay = tape.abs(gy);
    let s = tape.add(ax, ay)?;
    Ok(tape.scale(s, 0.5))
}

pub fn contour_response_grid(mask: &Grid) -> Grid {
    forward(mask, contour_response).expect("contour response of a valid grid")
}

/// One differentiable dilation step: 3x3 box smoothing followed by the dilation sigmoid.
pub fn soft_dilate(tape: &mut Tape, x: Var, cfg: &KsdtConfig) -> Result<Var> {
    let smooth = tape.conv3x3(x, Kernel3x3::SMOOTH);
    let b = tape.sigmoid_binarize(smooth, cfg.gamma_dilate, cfg.t_dilate)?;
    if cfg.stabilized {
        let b0 = cfg.background_level();
        let shifted = tape.offset(b, -b0);
        Ok(tape.scale(shifted, 1.0 / (1.0 - b0)))
    } else {
        Ok(b)
    }
}

pub fn soft_dilate_grid(grid: &Grid, cfg: &KsdtConfig) -> Result<Grid> {
    forward(grid, |t, x| soft_dilate(t, x, cfg))
}

/// k-step soft distance transform of a contour response.
///
/// Starting from `mask = opdt = contour`, repeats `mask <- soft_dilate(mask)`,
/// `opdt <- opdt + mask` for `k` steps and returns `(k + 1) - opdt`.
pub fn ksdt(tape: &mut Tape, contour: Var, cfg: &KsdtConfig) -> Result<Var> {
    cfg.validate()?;
    let mut mask = contour;
    let mut opdt = contour;
    for _ in 0..cfg.k {
        mask = soft_dilate(tape, mask, cfg)?;
        opdt = tape.add(opdt, mask)?;
    }
    let neg = tape.scale(opdt, -1.0);
    Ok(tape.offset(neg, (cfg.k + 1) as f64))
}

pub fn ksdt_grid(contour: &Grid, cfg: &KsdtConfig) -> Result<Grid> {
    forward(contour, |t, x| ksdt(t, x, cfg))
}

/// kSDT of a contour response saturated at 1.
///
/// Sobel responses of binary masks reach 2 on straight edges; unsaturated they
/// would push the transform below zero on the contour itself.
pub fn contour_dt(tape: &mut Tape, contour: Var, cfg: &KsdtConfig) -> Result<Var> {
    let sat = tape.clamp_max(contour, 1.0);
    ksdt(tape, sat, cfg)
}

pub fn contour_dt_grid(contour: &Grid, cfg: &KsdtConfig) -> Result<Grid> {
    forward(contour, |t, x| contour_dt(t, x, cfg))
}
