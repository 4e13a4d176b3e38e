//! Dense row-major grids: real-valued [`Grid`], 0/1 [`BinaryMask`] and
//! non-negative [`IntGrid`].

use std::fmt;

use crate::error::{Error, Result};

/// Dense 2-D array of finite `f64` values, row-major.
#[derive(Clone, PartialEq)]
pub struct Grid {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

fn check_shape(height: usize, width: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::contract(format!(
            "grid dimensions must be at least 1x1, got {height}x{width}"
        )));
    }
    match height.checked_mul(width) {
        Some(n) if n == len => Ok(()),
        Some(n) => Err(Error::contract(format!(
            "expected {n} values for a {height}x{width} grid, got {len}"
        ))),
        None => Err(Error::contract("grid dimensions overflow")),
    }
}

impl Grid {
    /// Builds a grid from row-major values, rejecting empty shapes and NaN/Inf.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_shape(height, width, data.len())?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!(
                "non-finite value {} at row {}, col {}",
                data[i],
                i / width,
                i % width
            )));
        }
        Ok(Grid {
            height,
            width,
            data,
        })
    }

    /// Builds a grid from nested rows. All rows must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != width) {
            return Err(Error::contract("ragged rows"));
        }
        let data = rows
            .iter()
            .flat_map(|r| r.as_ref().iter().copied())
            .collect();
        Grid::new(height, width, data)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Grid::new(height, width, vec![value; height.saturating_mul(width)])
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Grid::filled(height, width, 0.0)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height.saturating_mul(width));
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Grid::new(height, width, data)
    }

    /// Internal constructor for results of library operations on valid grids.
    pub(crate) fn from_parts(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        debug_assert!(data.iter().all(|v| v.is_finite()), "non-finite grid value");
        Grid {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Always false; grids hold at least one value.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Value at a signed position, or 0 outside the grid (zero padding).
    pub(crate) fn get_padded(&self, row: isize, col: isize) -> f64 {
        if row < 0 || col < 0 || row as usize >= self.height || col as usize >= self.width {
            0.0
        } else {
            self.data[row as usize * self.width + col as usize]
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid::from_parts(
            self.height,
            self.width,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub(crate) fn zip_map(&self, other: &Grid, f: impl Fn(f64, f64) -> f64) -> Grid {
        debug_assert_eq!(self.shape(), other.shape());
        Grid::from_parts(
            self.height,
            self.width,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    /// Largest absolute elementwise difference. Shapes must match.
    pub fn max_abs_diff(&self, other: &Grid) -> Result<f64> {
        ensure_same_shape(self.shape(), other.shape())?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Grid {}x{} [", self.height, self.width)?;
        for row in self.data.chunks(self.width) {
            writeln!(f, "  {row:?}")?;
        }
        write!(f, "]")
    }
}

pub(crate) fn ensure_same_shape(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::contract(format!(
            "shape mismatch: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )))
    }
}

/// A grid whose values are exactly 0.0 or 1.0.
#[derive(Clone, PartialEq, Debug)]
pub struct BinaryMask(Grid);

impl BinaryMask {
    pub fn new(grid: Grid) -> Result<Self> {
        if let Some(v) = grid.values().iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::contract(format!("mask value {v} is not 0 or 1")));
        }
        Ok(BinaryMask(grid))
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        Grid::from_fn(height, width, |r, c| if f(r, c) { 1.0 } else { 0.0 }).map(BinaryMask)
    }

    pub fn empty(height: usize, width: usize) -> Result<Self> {
        Grid::zeros(height, width).map(BinaryMask)
    }

    pub fn grid(&self) -> &Grid {
        &self.0
    }

    pub fn into_grid(self) -> Grid {
        self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn is_set(&self, row: usize, col: usize) -> bool {
        self.0.get(row, col) != 0.0
    }

    pub fn count(&self) -> usize {
        self.0.values().iter().filter(|&&v| v != 0.0).count()
    }

    /// Iterator over `(row, col)` of foreground pixels in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width();
        self.0
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(move |(i, _)| (i / w, i % w))
    }
}

impl AsRef<Grid> for BinaryMask {
    fn as_ref(&self) -> &Grid {
        &self.0
    }
}

/// 1.0 where `value > threshold`, else 0.0. Ties go to background.
pub fn hard_binarize(grid: &Grid, threshold: f64) -> Result<BinaryMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::contract(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    Ok(BinaryMask(
        grid.map(|v| if v > threshold { 1.0 } else { 0.0 }),
    ))
}

/// Dense 2-D array of non-negative integers, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct IntGrid {
    height: usize,
    width: usize,
    data: Vec<u32>,
}

impl IntGrid {
    pub fn new(height: usize, width: usize, data: Vec<u32>) -> Result<Self> {
        check_shape(height, width, data.len())?;
        Ok(IntGrid {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: u32) -> Result<Self> {
        IntGrid::new(height, width, vec![value; height.saturating_mul(width)])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[u32] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.data[row * self.width + col]
    }

    pub(crate) fn values_mut(&mut self) -> &mut [u32] {
        &mut self.data
    }

    pub fn max(&self) -> u32 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    /// Converts to a real grid (exact for all `u32`).
    pub fn to_grid(&self) -> Grid {
        Grid::from_parts(
            self.height,
            self.width,
            self.data.iter().map(|&v| f64::from(v)).collect(),
        )
    }
}

impl fmt::Debug for IntGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "IntGrid {}x{} [", self.height, self.width)?;
        for row in self.data.chunks(self.width) {
            writeln!(f, "  {row:?}")?;
        }
        write!(f, "]")
    }
}
