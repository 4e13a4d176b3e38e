//! A minimal reverse-mode tape over whole grids.
//!
//! Every primitive call appends one record holding its forward value. The
//! single differentiable source is the grid registered with [`Tape::input`];
//! grids added with [`Tape::constant`] receive no gradient. Scalars are 1x1
//! grids.

use crate::error::{Error, Result};
use crate::grid::{ensure_same_shape, Grid};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// 3x3 kernel, row-major, indexed by offsets `-1..=1` from the centre.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kernel3x3([f64; 9]);

impl Kernel3x3 {
    pub const SOBEL_X: Kernel3x3 = Kernel3x3([-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0]);
    pub const SOBEL_Y: Kernel3x3 = Kernel3x3([1.0, 2.0, 1.0, 0.0, 0.0, 0.0, -1.0, -2.0, -1.0]);
    pub const SMOOTH: Kernel3x3 = Kernel3x3([1.0 / 9.0; 9]);

    pub fn new(coeffs: [f64; 9]) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::contract("kernel coefficients must be finite"));
        }
        Ok(Kernel3x3(coeffs))
    }

    pub fn coeffs(&self) -> &[f64; 9] {
        &self.0
    }

    fn at(&self, du: isize, dv: isize) -> f64 {
        self.0[((du + 1) * 3 + (dv + 1)) as usize]
    }
}

/// Zero-padded, same-size 2-D convolution (kernel flipped):
/// `out(i, j) = sum K(u, v) * in(i - u, j - v)` over `u, v` in `-1..=1`.
pub fn conv3x3(grid: &Grid, kernel: &Kernel3x3) -> Grid {
    let (h, w) = grid.shape();
    let mut out = vec![0.0; h * w];
    for i in 0..h as isize {
        for j in 0..w as isize {
            let mut acc = 0.0;
            for u in -1..=1 {
                for v in -1..=1 {
                    let k = kernel.at(u, v);
                    if k != 0.0 {
                        acc += k * grid.get_padded(i - u, j - v);
                    }
                }
            }
            out[i as usize * w + j as usize] = acc;
        }
    }
    Grid::from_parts(h, w, out)
}

/// Adjoint of [`conv3x3`]: cross-correlation of the upstream gradient with the kernel.
fn conv3x3_adjoint(grad: &Grid, kernel: &Kernel3x3) -> Grid {
    let (h, w) = grad.shape();
    let mut out = vec![0.0; h * w];
    for p in 0..h as isize {
        for q in 0..w as isize {
            let mut acc = 0.0;
            for u in -1..=1 {
                for v in -1..=1 {
                    let k = kernel.at(u, v);
                    if k != 0.0 {
                        acc += k * grad.get_padded(p + u, q + v);
                    }
                }
            }
            out[p as usize * w + q as usize] = acc;
        }
    }
    Grid::from_parts(h, w, out)
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Elementwise `1 / (1 + exp(-gamma (x - threshold)))`.
pub fn sigmoid_binarize(grid: &Grid, gamma: f64, threshold: f64) -> Grid {
    grid.map(|x| sigmoid(gamma * (x - threshold)))
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Const,
    Conv { src: usize, kernel: Kernel3x3 },
    Sigmoid { src: usize, gamma: f64 },
    Abs { src: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Scale { src: usize, c: f64 },
    Offset { src: usize },
    Hadamard { a: usize, b: usize },
    Div { a: usize, b: usize },
    Square { src: usize },
    ClampMax { src: usize, c: f64 },
    Gap { src: usize },
}

#[derive(Debug)]
struct Node {
    value: Grid,
    op: Op,
    // depends on the root input
    live: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    root: Option<usize>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Registers the differentiable root. A tape has exactly one.
    pub fn input(&mut self, grid: Grid) -> Result<Var> {
        if self.root.is_some() {
            return Err(Error::contract("tape already has a root input"));
        }
        let v = self.push(grid, Op::Input, true);
        self.root = Some(v.0);
        Ok(v)
    }

    pub fn constant(&mut self, grid: Grid) -> Var {
        self.push(grid, Op::Const, false)
    }

    /// Copies a value into a constant, cutting gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Grid {
        &self.nodes[v.0].value
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.values()[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Grid, op: Op, live: bool) -> Var {
        self.nodes.push(Node { value, op, live });
        Var(self.nodes.len() - 1)
    }

    fn live(&self, v: Var) -> bool {
        self.nodes[v.0].live
    }

    fn binary_shapes(&self, a: Var, b: Var) -> Result<()> {
        ensure_same_shape(self.value(a).shape(), self.value(b).shape())
    }

    pub fn conv3x3(&mut self, x: Var, kernel: Kernel3x3) -> Var {
        let value = conv3x3(self.value(x), &kernel);
        let live = self.live(x);
        self.push(value, Op::Conv { src: x.0, kernel }, live)
    }

    pub fn sigmoid_binarize(&mut self, x: Var, gamma: f64, threshold: f64) -> Result<Var> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::contract(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        if !threshold.is_finite() {
            return Err(Error::contract("threshold must be finite"));
        }
        let value = sigmoid_binarize(self.value(x), gamma, threshold);
        let live = self.live(x);
        Ok(self.push(value, Op::Sigmoid { src: x.0, gamma }, live))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::abs);
        let live = self.live(x);
        self.push(value, Op::Abs { src: x.0 }, live)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_shapes(a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let live = self.live(a) || self.live(b);
        Ok(self.push(value, Op::Add { a: a.0, b: b.0 }, live))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_shapes(a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let live = self.live(a) || self.live(b);
        Ok(self.push(value, Op::Sub { a: a.0, b: b.0 }, live))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| c * v);
        let live = self.live(x);
        self.push(value, Op::Scale { src: x.0, c }, live)
    }

    /// Adds a constant to every element.
    pub fn offset(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v + c);
        let live = self.live(x);
        self.push(value, Op::Offset { src: x.0 }, live)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_shapes(a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let live = self.live(a) || self.live(b);
        Ok(self.push(value, Op::Hadamard { a: a.0, b: b.0 }, live))
    }

    /// Elementwise quotient. Every divisor element must be nonzero.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_shapes(a, b)?;
        if self.value(b).values().contains(&0.0) {
            return Err(Error::contract("division by zero"));
        }
        let value = self.value(a).zip_map(self.value(b), |x, y| x / y);
        let live = self.live(a) || self.live(b);
        Ok(self.push(value, Op::Div { a: a.0, b: b.0 }, live))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v * v);
        let live = self.live(x);
        self.push(value, Op::Square { src: x.0 }, live)
    }

    /// Elementwise `min(x, c)`. The derivative is taken as 1 below `c` and 0 from `c` up.
    pub fn clamp_max(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v.min(c));
        let live = self.live(x);
        self.push(value, Op::ClampMax { src: x.0, c }, live)
    }

    /// Global average pooling to a 1x1 grid.
    pub fn gap(&mut self, x: Var) -> Var {
        let value = Grid::from_parts(1, 1, vec![self.value(x).mean()]);
        let live = self.live(x);
        self.push(value, Op::Gap { src: x.0 }, live)
    }

    /// Vector-Jacobian product from `output` back to the root input.
    ///
    /// `seed` is the upstream gradient of `output` (a 1x1 grid holding 1.0
    /// for scalar losses). Records are visited once each in reverse order.
    pub fn backward(&self, output: Var, seed: &Grid) -> Result<Grid> {
        let root = self
            .root
            .ok_or_else(|| Error::contract("backward on a tape without a root input"))?;
        if output.0 >= self.nodes.len() {
            return Err(Error::contract("output does not belong to this tape"));
        }
        ensure_same_shape(self.value(output).shape(), seed.shape())?;

        let mut adj: Vec<Option<Grid>> = vec![None; output.0 + 1];
        adj[output.0] = Some(seed.clone());

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.live || idx == root {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            match node.op {
                Op::Input | Op::Const => {}
                Op::Conv { src, ref kernel } => {
                    self.accumulate(&mut adj, src, conv3x3_adjoint(&g, kernel));
                }
                Op::Sigmoid { src, gamma } => {
                    let d = g.zip_map(&node.value, |g, y| g * gamma * y * (1.0 - y));
                    self.accumulate(&mut adj, src, d);
                }
                Op::Abs { src } => {
                    let x = &self.nodes[src].value;
                    // subgradient 0 at x == 0
                    let d = g.zip_map(x, |g, x| {
                        if x > 0.0 {
                            g
                        } else if x < 0.0 {
                            -g
                        } else {
                            0.0
                        }
                    });
                    self.accumulate(&mut adj, src, d);
                }
                Op::Add { a, b } => {
                    self.accumulate(&mut adj, a, g.clone());
                    self.accumulate(&mut adj, b, g);
                }
                Op::Sub { a, b } => {
                    self.accumulate(&mut adj, a, g.clone());
                    self.accumulate(&mut adj, b, g.map(|v| -v));
                }
                Op::Scale { src, c } => self.accumulate(&mut adj, src, g.map(|v| c * v)),
                Op::Offset { src } => self.accumulate(&mut adj, src, g),
                Op::Hadamard { a, b } => {
                    let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
                    let da = g.zip_map(vb, |g, y| g * y);
                    let db = g.zip_map(va, |g, x| g * x);
                    self.accumulate(&mut adj, a, da);
                    self.accumulate(&mut adj, b, db);
                }
                Op::Div { a, b } => {
                    let vb = &self.nodes[b].value;
                    let da = g.zip_map(vb, |g, y| g / y);
                    // d(a/b)/db = -(a/b)/b
                    let q = node.value.zip_map(vb, |q, y| -q / y);
                    let db = g.zip_map(&q, |g, q| g * q);
                    self.accumulate(&mut adj, a, da);
                    self.accumulate(&mut adj, b, db);
                }
                Op::Square { src } => {
                    let x = &self.nodes[src].value;
                    self.accumulate(&mut adj, src, g.zip_map(x, |g, x| 2.0 * x * g));
                }
                Op::ClampMax { src, c } => {
                    let x = &self.nodes[src].value;
                    self.accumulate(
                        &mut adj,
                        src,
                        g.zip_map(x, |g, x| if x < c { g } else { 0.0 }),
                    );
                }
                Op::Gap { src } => {
                    let x = &self.nodes[src].value;
                    let share = g.values()[0] / x.len() as f64;
                    let (h, w) = x.shape();
                    self.accumulate(&mut adj, src, Grid::from_parts(h, w, vec![share; h * w]));
                }
            }
        }

        let (h, w) = self.nodes[root].value.shape();
        Ok(adj
            .get_mut(root)
            .and_then(Option::take)
            .unwrap_or_else(|| Grid::from_parts(h, w, vec![0.0; h * w])))
    }

    fn accumulate(&self, adj: &mut [Option<Grid>], target: usize, grad: Grid) {
        if !self.nodes[target].live {
            return;
        }
        match &mut adj[target] {
            Some(acc) => {
                for (a, g) in acc.values_mut().iter_mut().zip(grad.values()) {
                    *a += g;
                }
            }
            slot @ None => *slot = Some(grad),
        }
    }
}

/// Evaluates `f` on a fresh tape rooted at `input` and returns the scalar
/// value together with its gradient.
pub fn value_and_grad<F>(f: &F, input: &Grid) -> Result<(f64, Grid)>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let x = tape.input(input.clone())?;
    let out = f(&mut tape, x)?;
    if tape.value(out).shape() != (1, 1) {
        return Err(Error::contract("function must produce a 1x1 scalar"));
    }
    let grad = tape.backward(out, &Grid::from_parts(1, 1, vec![1.0]))?;
    Ok((tape.scalar(out), grad))
}

/// Compares the tape gradient of a scalar function with central differences.
///
/// Returns `max_p |analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(f: F, input: &Grid, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::contract(format!(
            "step h must lie in [1e-7, 1e-3], got {h}"
        )));
    }
    let (_, analytic) = value_and_grad(&f, input)?;
    let eval = |x: Grid| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.input(x)?;
        let out = f(&mut tape, v)?;
        Ok(tape.scalar(out))
    };
    let (rows, cols) = input.shape();
    let mut worst = 0.0f64;
    let mut data = input.values().to_vec();
    for (i, &a) in analytic.values().iter().enumerate() {
        let orig = data[i];
        data[i] = orig + h;
        let plus = eval(Grid::from_parts(rows, cols, data.clone()))?;
        data[i] = orig - h;
        let minus = eval(Grid::from_parts(rows, cols, data.clone()))?;
        data[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}
