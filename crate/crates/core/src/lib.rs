//! Differentiable k-step distance transforms and the contour loss built on them.
//!
//! The crate is organized bottom-up:
//!
//! - [`grid`] and [`io`]: dense grids and the PGM / `CLF1` file formats.
//! - [`graph`]: a small reverse-mode tape with the primitives the loss needs.
//! - [`contour`]: soft mask, Sobel contour response, soft dilation and kSDT.
//! - [`exact`]: exact truncated Chebyshev distance transforms used as oracles.
//! - [`loss`]: contour distance, MSE ablations and a BCE stand-in mask loss.
//! - [`refine`]: synthetic shapes and gradient-descent mask refinement.
//! - [`cli`]: the `ksdt` command-line front end.

pub mod cli;
pub mod contour;
pub mod error;
pub mod exact;
pub mod graph;
pub mod grid;
pub mod io;
pub mod loss;
pub mod refine;
pub mod rng;

pub use contour::{contour_dt, contour_dt_grid, ksdt, ksdt_grid, KsdtConfig};
pub use error::{Error, Result};
pub use exact::{brute_force_dt, exact_contour, exact_kstep_dt, ContourSet};
pub use graph::{grad_check, Kernel3x3, Tape, Var};
pub use grid::{hard_binarize, BinaryMask, Grid, IntGrid};
pub use loss::{contour_distance, LossConfig, LossKind, LossReport};

/// Formats a number with 17 significant digits, the textual form used in all
/// machine-readable output.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}
