//! Exact truncated Chebyshev distance transforms.
//!
//! These are the non-differentiable references for kSDT: `exact_kstep_dt`
//! expands the contour breadth-first with 8-connectivity, `brute_force_dt`
//! evaluates the defining minimum directly, and `ideal_ksdt` runs the kSDT
//! recurrence with hard binary dilation.

use std::collections::VecDeque;

use crate::contour::contour_response_grid;
use crate::error::{Error, Result};
use crate::grid::{BinaryMask, IntGrid};

/// Contour pixel coordinates `(row, col)`, in range and without duplicates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContourSet {
    height: usize,
    width: usize,
    points: Vec<(usize, usize)>,
}

impl ContourSet {
    pub fn new(height: usize, width: usize, mut points: Vec<(usize, usize)>) -> Result<Self> {
        if let Some(p) = points.iter().find(|&&(r, c)| r >= height || c >= width) {
            return Err(Error::contract(format!(
                "contour point {p:?} outside {height}x{width}"
            )));
        }
        points.sort_unstable();
        let before = points.len();
        points.dedup();
        if points.len() != before {
            return Err(Error::contract("duplicate contour points"));
        }
        Ok(ContourSet {
            height,
            width,
            points,
        })
    }

    pub fn from_mask(mask: &BinaryMask) -> Self {
        ContourSet {
            height: mask.height(),
            width: mask.width(),
            points: mask.foreground().collect(),
        }
    }

    pub fn points(&self) -> &[(usize, usize)] {
        &self.points
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn check_k(k: usize) -> Result<u32> {
    if k < 1 {
        return Err(Error::contract("k must be at least 1"));
    }
    u32::try_from(k)
        .ok()
        .filter(|k| *k < u32::MAX)
        .ok_or_else(|| Error::contract("k too large"))
}

/// `min(Chebyshev distance to the nearest contour pixel, k + 1)` per pixel.
///
/// Multi-source breadth-first expansion over the 8-neighbourhood, stopped
/// after `k` rounds. Runs in time linear in the number of pixels.
pub fn exact_kstep_dt(contour: &BinaryMask, k: usize) -> Result<IntGrid> {
    let cap = check_k(k)? + 1;
    let (h, w) = contour.shape();
    let mut out = IntGrid::filled(h, w, cap)?;
    let dist = out.values_mut();
    let mut queue = VecDeque::new();
    for (r, c) in contour.foreground() {
        dist[r * w + c] = 0;
        queue.push_back(r * w + c);
    }
    while let Some(idx) = queue.pop_front() {
        let d = dist[idx];
        if d + 1 >= cap {
            continue;
        }
        let (r, c) = (idx / w, idx % w);
        for nr in r.saturating_sub(1)..=(r + 1).min(h - 1) {
            for nc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
                let n = nr * w + nc;
                if dist[n] > d + 1 {
                    dist[n] = d + 1;
                    queue.push_back(n);
                }
            }
        }
    }
    Ok(out)
}

/// Literal minimum over all contour points. O(pixels x points); reference use only.
pub fn brute_force_dt(contour: &ContourSet, shape: (usize, usize), k: usize) -> Result<IntGrid> {
    let cap = check_k(k)? + 1;
    if shape != contour.shape() {
        return Err(Error::contract("contour set and output shape differ"));
    }
    let (h, w) = shape;
    let mut data = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let d = contour
                .points()
                .iter()
                .map(|&(pr, pc)| r.abs_diff(pr).max(c.abs_diff(pc)))
                .min()
                .map_or(cap, |d| (d.min(cap as usize)) as u32);
            data.push(d);
        }
    }
    IntGrid::new(h, w, data)
}

/// Pixels where the Sobel contour response of `mask` is nonzero.
pub fn exact_contour(mask: &BinaryMask) -> BinaryMask {
    let resp = contour_response_grid(mask.grid());
    BinaryMask::new(resp.map(|v| if v > 0.0 { 1.0 } else { 0.0 })).expect("0/1 values")
}

/// 3x3 binary dilation with zero padding.
pub fn binary_dilate(mask: &BinaryMask) -> BinaryMask {
    let (h, w) = mask.shape();
    BinaryMask::from_fn(h, w, |r, c| {
        (r.saturating_sub(1)..=(r + 1).min(h - 1))
            .any(|nr| (c.saturating_sub(1)..=(c + 1).min(w - 1)).any(|nc| mask.is_set(nr, nc)))
    })
    .expect("valid shape")
}

/// The kSDT recurrence with exact binary dilation in place of the soft step.
///
/// For a binary contour this equals [`exact_kstep_dt`]; it exists as the
/// idealized reference for the soft algorithm.
pub fn ideal_ksdt(contour: &BinaryMask, k: usize) -> Result<IntGrid> {
    let cap = check_k(k)? + 1;
    let (h, w) = contour.shape();
    let mut mask = contour.clone();
    let mut opdt: Vec<u32> = mask.grid().values().iter().map(|&v| v as u32).collect();
    for _ in 0..k {
        mask = binary_dilate(&mask);
        for (acc, &v) in opdt.iter_mut().zip(mask.grid().values()) {
            *acc += v as u32;
        }
    }
    IntGrid::new(h, w, opdt.into_iter().map(|o| cap - o).collect())
}
