//! Fundamental solutions of the matrix initial-value problem
//! `dY/ds = Z(s) Y`, `Y(s0) = I`.
//!
//! Classical fixed-step fourth-order Runge-Kutta, marched in both
//! directions from `s0` so an interior base point works. Fixed steps keep
//! the convergence-order checks crisp; there is no adaptivity and no
//! interpolation between nodes (queries snap to the nearest node).

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{fabs, Matrix};

/// Strictly uniform ascending parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    nodes: Vec<f64>,
    step: f64,
}

impl ParamGrid {
    /// `steps` uniform intervals between `s_start` and `s_end`.
    pub fn uniform(s_start: f64, s_end: f64, steps: usize) -> Result<Self> {
        if !(s_start < s_end) || !s_start.is_finite() || !s_end.is_finite() {
            return Err(Error::invalid("grid requires finite s_start < s_end"));
        }
        if steps == 0 {
            return Err(Error::invalid("grid needs at least one step"));
        }
        let step = (s_end - s_start) / steps as f64;
        // Nodes by multiplication, not accumulation, so they are exactly
        // reproducible and the last node is exactly s_end.
        let mut nodes: Vec<f64> = (0..=steps)
            .map(|k| s_start + step * k as f64)
            .collect();
        nodes[steps] = s_end;
        Ok(ParamGrid { nodes, step })
    }

    /// Grid sized by a steps-per-unit-parameter density (at least one step).
    pub fn with_density(s_start: f64, s_end: f64, steps_per_unit: usize) -> Result<Self> {
        if steps_per_unit == 0 {
            return Err(Error::invalid("steps_per_unit must be positive"));
        }
        let raw = (s_end - s_start) * steps_per_unit as f64;
        let steps = if raw <= 1.0 { 1 } else { raw as usize + 1 };
        ParamGrid::uniform(s_start, s_end, steps)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn s_start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn s_end(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Index of the node equal to `s` up to a grid-relative tolerance.
    pub fn index_of(&self, s: f64) -> Option<usize> {
        let k = self.nearest_index(s);
        if fabs(self.nodes[k] - s) <= 1e-9 * self.step.max(1e-300) {
            Some(k)
        } else {
            None
        }
    }

    pub fn nearest_index(&self, s: f64) -> usize {
        if s <= self.s_start() {
            return 0;
        }
        if s >= self.s_end() {
            return self.nodes.len() - 1;
        }
        let raw = (s - self.s_start()) / self.step;
        let k = raw as usize;
        let lo = k.min(self.nodes.len() - 1);
        let hi = (k + 1).min(self.nodes.len() - 1);
        if fabs(self.nodes[lo] - s) <= fabs(self.nodes[hi] - s) {
            lo
        } else {
            hi
        }
    }

    pub fn same_as(&self, other: &ParamGrid) -> bool {
        self.nodes.len() == other.nodes.len() && {
            let tol = 1e-9 * self.step.max(other.step);
            self.nodes
                .iter()
                .zip(other.nodes.iter())
                .all(|(a, b)| fabs(a - b) <= tol)
        }
    }
}

/// One classical RK4 step for `Y' = Z(s) Y` from `s` with step `h`
/// (negative `h` marches backward).
pub fn rk4_step(z: &dyn Fn(f64) -> Matrix, s: f64, h: f64, y: &Matrix) -> Matrix {
    let half = 0.5 * h;
    let k1 = z(s).matmul(y);
    let k2 = z(s + half).matmul(&y.add(&k1.scale(half)));
    let k3 = z(s + half).matmul(&y.add(&k2.scale(half)));
    let k4 = z(s + h).matmul(&y.add(&k3.scale(h)));
    let incr = k1
        .add(&k2.scale(2.0))
        .add(&k3.scale(2.0))
        .add(&k4)
        .scale(h / 6.0);
    y.add(&incr)
}

/// Grid of fundamental-solution matrices `Y(s_k, s0)`.
#[derive(Debug, Clone)]
pub struct FundamentalSolution {
    s0: f64,
    s0_index: usize,
    grid: ParamGrid,
    mats: Vec<Matrix>,
}

impl FundamentalSolution {
    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn grid(&self) -> &ParamGrid {
        &self.grid
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.mats
    }

    pub fn at_index(&self, k: usize) -> &Matrix {
        &self.mats[k]
    }

    /// Value at `s`, snapped to the nearest grid node.
    pub fn at(&self, s: f64) -> &Matrix {
        &self.mats[self.grid.nearest_index(s)]
    }

    pub fn s0_index(&self) -> usize {
        self.s0_index
    }
}

/// Solves `dY/ds = Z(s) Y`, `Y(s0) = I` on the grid. `s0` must be a grid
/// node; the identity there is exact by construction.
pub fn solve_matrix_ivp(
    z: &dyn Fn(f64) -> Matrix,
    s0: f64,
    grid: &ParamGrid,
) -> Result<FundamentalSolution> {
    let i0 = grid
        .index_of(s0)
        .ok_or_else(|| Error::invalid("grid must contain s0 as a node"))?;
    let probe = z(s0);
    if !probe.is_finite() {
        return Err(Error::NonFinite);
    }
    let n = probe.dim();
    let nodes = grid.nodes();
    let mut mats: Vec<Matrix> = alloc::vec![Matrix::identity(n); nodes.len()];

    let checked = |s: f64| -> Matrix { z(s) };
    // Forward march.
    for k in i0..nodes.len() - 1 {
        let h = nodes[k + 1] - nodes[k];
        let next = rk4_step(&checked, nodes[k], h, &mats[k]);
        if !next.is_finite() {
            return Err(Error::NonFinite);
        }
        mats[k + 1] = next;
    }
    // Backward march.
    for k in (1..=i0).rev() {
        let h = nodes[k - 1] - nodes[k];
        let prev = rk4_step(&checked, nodes[k], h, &mats[k]);
        if !prev.is_finite() {
            return Err(Error::NonFinite);
        }
        mats[k - 1] = prev;
    }
    for m in &mats {
        let det = m.det();
        if fabs(det) < crate::defaults::MIN_DET || !det.is_finite() {
            return Err(Error::DegenerateFrame { det });
        }
    }
    Ok(FundamentalSolution { s0, s0_index: i0, grid: grid.clone(), mats })
}

/// Matrix-valued table with clamped linear interpolation between nodes.
///
/// Wraps gridded data as a function of `s` for callers that only have
/// samples; accuracy is capped at `O(h^2)` by the interpolation, so prefer
/// a genuine function of `s` where one exists.
#[derive(Debug, Clone)]
pub struct MatrixTable {
    grid: ParamGrid,
    values: Arc<Vec<Matrix>>,
}

impl MatrixTable {
    pub fn new(grid: ParamGrid, values: Vec<Matrix>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(MatrixTable { grid, values: Arc::new(values) })
    }

    pub fn at(&self, s: f64) -> Matrix {
        let nodes = self.grid.nodes();
        if s <= nodes[0] {
            return self.values[0].clone();
        }
        let last = nodes.len() - 1;
        if s >= nodes[last] {
            return self.values[last].clone();
        }
        let k = ((s - nodes[0]) / self.grid.step()) as usize;
        let k = k.min(last - 1);
        let w = (s - nodes[k]) / (nodes[k + 1] - nodes[k]);
        self.values[k]
            .scale(1.0 - w)
            .add(&self.values[k + 1].scale(w))
    }

    /// The table as a boxed function of `s`.
    pub fn as_fn(&self) -> impl Fn(f64) -> Matrix + Send + Sync + 'static {
        let table = self.clone();
        move |s| table.at(s)
    }
}
