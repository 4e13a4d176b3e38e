//! Browser demo bindings.
//!
//! Grids cross the boundary as flat row-major `Float64Array`s of a square
//! `size x size` canvas. The logic lives in [`demo`] so it can be tested
//! natively; the exported functions only convert errors.

use wasm_bindgen::prelude::*;

pub mod demo {
    use ksdt::contour::{contour_dt_grid, contour_response_grid};
    use ksdt::exact::{exact_contour, exact_kstep_dt};
    use ksdt::loss::{loss_by_kind, mask_to_logits, LossConfig, LossKind};
    use ksdt::refine::{perturb, refine, synth_shape, RefineConfig, ShapeKind, ShapeSpec};
    use ksdt::{hard_binarize, BinaryMask, Error, Grid, KsdtConfig, Result};

    pub fn shape_kind(name: &str, size: usize) -> Result<ShapeKind> {
        let r = (size / 4).max(1) as u32;
        match name {
            "disk" => Ok(ShapeKind::Disk { radius: r }),
            "rectangle" => Ok(ShapeKind::Rectangle {
                height: r * 2,
                width: r * 3 / 2 + 1,
            }),
            "convex-polygon" => Ok(ShapeKind::ConvexPolygon {
                sides: 6,
                radius: r,
            }),
            other => Err(Error::Contract(format!("unknown shape {other:?}"))),
        }
    }

    pub fn shape(name: &str, size: usize, seed: u64) -> Result<BinaryMask> {
        synth_shape(&ShapeSpec {
            kind: shape_kind(name, size)?,
            canvas_height: size,
            canvas_width: size,
            seed,
        })
    }

    fn square_grid(values: &[f64], size: usize) -> Result<Grid> {
        Grid::new(size, size, values.to_vec())
    }

    /// Exact and soft transforms of a mask's contour, concatenated.
    pub fn distance_transforms(
        mask: &[f64],
        size: usize,
        k: usize,
        gamma: f64,
        threshold: f64,
        stabilized: bool,
    ) -> Result<Vec<f64>> {
        let grid = square_grid(mask, size)?;
        let cfg = KsdtConfig {
            gamma_dilate: gamma,
            t_dilate: threshold,
            ..KsdtConfig::default().with_k(k).stabilized(stabilized)
        };
        cfg.validate()?;
        let contour = exact_contour(&hard_binarize(&grid, 0.5)?);
        let exact = exact_kstep_dt(&contour, k)?.to_grid();
        let soft = contour_dt_grid(&contour_response_grid(&grid), &cfg)?;
        Ok(exact
            .values()
            .iter()
            .chain(soft.values())
            .copied()
            .collect())
    }

    /// Contour, MSE-edge and MSE-DT losses of a square against itself shifted
    /// right by `0..=max_shift` pixels, grouped per shift.
    pub fn loss_vs_shift(
        size: usize,
        side: usize,
        max_shift: usize,
        k: usize,
        stabilized: bool,
    ) -> Result<Vec<f64>> {
        if side + max_shift + 4 > size {
            return Err(Error::Contract(
                "square and shifts do not fit the canvas".into(),
            ));
        }
        let top = (size - side) / 2;
        let left = (size - side - max_shift) / 2;
        let square = |dc: usize| {
            BinaryMask::from_fn(size, size, |r, c| {
                (top..top + side).contains(&r) && (left + dc..left + dc + side).contains(&c)
            })
        };
        let gt = square(0)?;
        let cfg = LossConfig {
            ksdt: KsdtConfig::default().with_k(k).stabilized(stabilized),
            logit_input: true,
            ..LossConfig::default()
        };
        let mut out = Vec::with_capacity(3 * (max_shift + 1));
        for s in 0..=max_shift {
            let pred = mask_to_logits(&square(s)?, 10.0);
            for kind in [LossKind::Contour, LossKind::MseEdge, LossKind::MseDt] {
                out.push(loss_by_kind(kind, &pred, &gt, &cfg)?.value);
            }
        }
        Ok(out)
    }

    /// Gradient-descent refinement that can be advanced a few steps at a time.
    pub struct Session {
        gt: BinaryMask,
        logits: Grid,
        cfg: RefineConfig,
        step: usize,
    }

    impl Session {
        pub fn new(
            shape_name: &str,
            size: usize,
            seed: u64,
            shift: (i64, i64),
            noise: f64,
            w_contour: f64,
            learning_rate: f64,
        ) -> Result<Self> {
            let gt = shape(shape_name, size, seed)?;
            let logits = perturb(&gt, shift, noise, seed ^ 0x9e37_79b9)?;
            let cfg = RefineConfig {
                w_contour,
                learning_rate,
                ..RefineConfig::default()
            };
            cfg.validate()?;
            Ok(Session {
                gt,
                logits,
                cfg,
                step: 0,
            })
        }

        /// Runs `n` more steps; returns `[step, loss, iou, bf1, meandist]`.
        pub fn advance(&mut self, n: usize) -> Result<Vec<f64>> {
            let cfg = RefineConfig {
                steps: n.max(1),
                ..self.cfg.clone()
            };
            let traj = refine(&self.logits, &self.gt, &cfg)?;
            self.step += cfg.steps;
            self.logits = traj.final_logits.clone();
            let last = traj.last();
            let m = last.metrics;
            Ok(vec![self.step as f64, last.loss, m.iou, m.bf1, m.mean_dist])
        }

        /// Current foreground probabilities.
        pub fn probabilities(&self) -> Vec<f64> {
            self.logits
                .values()
                .iter()
                .map(|&l| 1.0 / (1.0 + (-l).exp()))
                .collect()
        }

        pub fn ground_truth(&self) -> Vec<f64> {
            self.gt.grid().values().to_vec()
        }

        pub fn step(&self) -> usize {
            self.step
        }
    }
}

fn js(e: ksdt::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Rasterized shape (`disk`, `rectangle` or `convex-polygon`) as 0/1 values.
#[wasm_bindgen]
pub fn shape(kind: &str, size: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    Ok(demo::shape(kind, size, u64::from(seed))
        .map_err(js)?
        .grid()
        .values()
        .to_vec())
}

/// `size * size` exact values followed by `size * size` soft values.
#[wasm_bindgen]
pub fn distance_transforms(
    mask: &[f64],
    size: usize,
    k: usize,
    gamma: f64,
    threshold: f64,
    stabilized: bool,
) -> Result<Vec<f64>, JsError> {
    demo::distance_transforms(mask, size, k, gamma, threshold, stabilized).map_err(js)
}

/// `[contour, mse_edge, mse_dt]` for each shift `0..=max_shift`.
#[wasm_bindgen]
pub fn loss_vs_shift(
    size: usize,
    side: usize,
    max_shift: usize,
    k: usize,
    stabilized: bool,
) -> Result<Vec<f64>, JsError> {
    demo::loss_vs_shift(size, side, max_shift, k, stabilized).map_err(js)
}

#[wasm_bindgen]
pub struct Refinement(demo::Session);

#[wasm_bindgen]
impl Refinement {
    #[wasm_bindgen(constructor)]
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: &str,
        size: usize,
        seed: u32,
        shift_row: i32,
        shift_col: i32,
        noise: f64,
        w_contour: f64,
        learning_rate: f64,
    ) -> Result<Refinement, JsError> {
        demo::Session::new(
            kind,
            size,
            u64::from(seed),
            (i64::from(shift_row), i64::from(shift_col)),
            noise,
            w_contour,
            learning_rate,
        )
        .map(Refinement)
        .map_err(js)
    }

    /// Runs `n` steps and returns `[step, loss, iou, bf1, meandist]`.
    pub fn advance(&mut self, n: usize) -> Result<Vec<f64>, JsError> {
        self.0.advance(n).map_err(js)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.0.probabilities()
    }

    #[wasm_bindgen(js_name = groundTruth)]
    pub fn ground_truth(&self) -> Vec<f64> {
        self.0.ground_truth()
    }
}
