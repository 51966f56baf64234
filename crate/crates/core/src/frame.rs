//! Frame fields and vector fields over the chart.
//!
//! A frame field assigns to each point an invertible matrix whose column
//! `j` holds the chart components of the frame vector `E_j`. Vector fields
//! are supplied in chart components; frame components are obtained by
//! multiplying with the inverse frame matrix where needed.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::chart::Point;
use crate::error::{Error, Result};
use crate::linalg::{fabs, Matrix};

type MatrixPointFn = Arc<dyn Fn(&Point) -> Matrix + Send + Sync>;
type VectorPointFn = Arc<dyn Fn(&Point) -> Vec<f64> + Send + Sync>;

/// Point-dependent invertible matrix of frame-vector components.
#[derive(Clone)]
pub struct FrameField {
    n: usize,
    f: MatrixPointFn,
    /// Set for the chart coordinate frame; lets hot paths skip transforms
    /// that are exact no-ops.
    identity: bool,
}

impl FrameField {
    pub fn new(n: usize, f: impl Fn(&Point) -> Matrix + Send + Sync + 'static) -> Self {
        FrameField { n, f: Arc::new(f), identity: false }
    }

    /// The chart coordinate frame `E_j = d/dx^j`.
    pub fn coordinate(n: usize) -> Self {
        FrameField {
            n,
            f: Arc::new(move |_| Matrix::identity(n)),
            identity: true,
        }
    }

    pub fn constant(m: Matrix) -> Self {
        let n = m.dim();
        FrameField { n, f: Arc::new(move |_| m.clone()), identity: false }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_coordinate(&self) -> bool {
        self.identity
    }

    /// Unchecked evaluation, for finite-difference sampling.
    pub fn matrix_raw(&self, x: &Point) -> Matrix {
        (self.f)(x)
    }

    /// Checked evaluation: finite entries and a determinant bounded away
    /// from zero.
    pub fn matrix_at(&self, x: &Point) -> Result<Matrix> {
        let m = (self.f)(x);
        if m.dim() != self.n || !m.is_finite() {
            return Err(Error::NonFinite);
        }
        let det = m.det();
        if fabs(det) < crate::defaults::MIN_DET {
            return Err(Error::DegenerateFrame { det });
        }
        Ok(m)
    }

    /// Frame components of a chart-component vector at `x`.
    pub fn to_frame_components(&self, x: &Point, chart_components: &[f64]) -> Result<Vec<f64>> {
        if self.identity {
            return Ok(chart_components.to_vec());
        }
        let a = self.matrix_at(x)?;
        Ok(a.try_inverse()?.mul_vec(chart_components))
    }
}

impl core::fmt::Debug for FrameField {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("FrameField").field("n", &self.n).finish()
    }
}

/// Point-dependent vector in chart components.
#[derive(Clone)]
pub struct VectorField {
    n: usize,
    f: VectorPointFn,
}

impl VectorField {
    pub fn new(n: usize, f: impl Fn(&Point) -> Vec<f64> + Send + Sync + 'static) -> Self {
        VectorField { n, f: Arc::new(f) }
    }

    pub fn constant(v: Vec<f64>) -> Self {
        let n = v.len();
        VectorField { n, f: Arc::new(move |_| v.clone()) }
    }

    /// The chart coordinate field `d/dx^j`.
    pub fn coordinate_unit(n: usize, j: usize) -> Self {
        let mut v = vec![0.0; n];
        v[j] = 1.0;
        VectorField::constant(v)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn components_raw(&self, x: &Point) -> Vec<f64> {
        (self.f)(x)
    }

    pub fn components_at(&self, x: &Point) -> Result<Vec<f64>> {
        let v = (self.f)(x);
        if v.len() != self.n || v.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(v)
    }
}

impl core::fmt::Debug for VectorField {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("VectorField").field("n", &self.n).finish()
    }
}
