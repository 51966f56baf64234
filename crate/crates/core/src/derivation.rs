//! Components of derivations and linear connections in arbitrary frames,
//! the change-of-frame law, and torsion.
//!
//! Index conventions, fixed once for the whole workspace:
//! * connection coefficients `G^i_{jk}` carry the differentiated-vector
//!   index `j` and the direction index `k`; the direction matrices are
//!   `(G_k)^i_j = G^i_{jk}`;
//! * commutation coefficients satisfy `[E_j, E_k] = C^i_{jk} E_i`;
//! * the component matrix of a derivation along `X` in a frame is
//!   `W_X = S_X - [E_j(X^i)] + [C^i_{kj} X^k]` (contraction on the first
//!   lower slot of `C`);
//! * torsion components are `T^i_{kl} = -(G^i_{kl} - G^i_{lk}) - C^i_{kl}`.
//!   Note the leading minus: many textbooks use the opposite sign. All
//!   fixtures and oracles in this workspace follow the convention above.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::chart::{ChartDomain, Point};
use crate::diff::{commutation_coefficients, finite_difference_jacobian};
use crate::error::{Error, Result};
use crate::frame::{FrameField, VectorField};
use crate::linalg::{Matrix, Tensor3};

type CoeffFn = Arc<dyn Fn(&Point) -> Tensor3 + Send + Sync>;
type SOfFn = Arc<dyn Fn(&VectorField, &Point) -> Matrix + Send + Sync>;

/// Linear connection given by chart-coordinate coefficients `G^i_{jk}`.
#[derive(Clone)]
pub struct ConnectionField {
    n: usize,
    coeffs: CoeffFn,
}

impl ConnectionField {
    pub fn new(n: usize, coeffs: impl Fn(&Point) -> Tensor3 + Send + Sync + 'static) -> Self {
        ConnectionField { n, coeffs: Arc::new(coeffs) }
    }

    /// All coefficients identically zero.
    pub fn flat(n: usize) -> Self {
        ConnectionField::new(n, move |_| Tensor3::zeros(n))
    }

    pub fn constant(coeffs: Tensor3) -> Self {
        let n = coeffs.dim();
        ConnectionField { n, coeffs: Arc::new(move |_| coeffs.clone()) }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn coeffs_at(&self, x: &Point) -> Result<Tensor3> {
        let t = (self.coeffs)(x);
        if t.dim() != self.n || !t.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(t)
    }

    /// Direction matrix `(G_k)^i_j` in chart coordinates.
    pub fn direction_matrix(&self, x: &Point, k: usize) -> Result<Matrix> {
        Ok(self.coeffs_at(x)?.direction_matrix(k))
    }

    /// Coordinate-frame component matrix `W = sum_k G_k X^k` for chart
    /// components `X`.
    pub fn w_coordinate(&self, x: &Point, chart_components: &[f64]) -> Result<Matrix> {
        let t = self.coeffs_at(x)?;
        Ok(contract_direction(&t, chart_components))
    }

    /// Unchecked variant for integrator closures; non-finite values are
    /// caught by the solver.
    pub fn w_coordinate_raw(&self, x: &Point, chart_components: &[f64]) -> Matrix {
        contract_direction(&(self.coeffs)(x), chart_components)
    }
}

impl core::fmt::Debug for ConnectionField {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ConnectionField").field("n", &self.n).finish()
    }
}

fn contract_direction(t: &Tensor3, x: &[f64]) -> Matrix {
    let n = t.dim();
    Matrix::from_fn(n, |i, j| {
        let mut s = 0.0;
        for k in 0..n {
            s += t.get(i, j, k) * x[k];
        }
        s
    })
}

/// General S-derivation data: a rule `(X, x) -> S_X(x)` in chart
/// components, plus a declared-linearity flag.
#[derive(Clone)]
pub struct SDerivationField {
    n: usize,
    s_of: SOfFn,
    linear_declared: bool,
}

impl SDerivationField {
    pub fn new(
        n: usize,
        linear_declared: bool,
        s_of: impl Fn(&VectorField, &Point) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        SDerivationField { n, s_of: Arc::new(s_of), linear_declared }
    }

    /// The S-derivation whose action reproduces `conn`:
    /// `S_X = [G^i_{jk} X^k] + [d_j X^i]` in chart components. The Jacobian
    /// of `X` is sampled by raw central differences with step `h`.
    pub fn from_connection(conn: &ConnectionField, h: f64) -> Self {
        let conn = conn.clone();
        let n = conn.dim();
        SDerivationField::new(n, true, move |x_field, p| {
            let x = x_field.components_raw(p);
            let mut m = conn.w_coordinate_raw(p, &x);
            for j in 0..n {
                let plus = x_field.components_raw(&p.shifted(j, h));
                let minus = x_field.components_raw(&p.shifted(j, -h));
                for i in 0..n {
                    let d = (plus[i] - minus[i]) / (2.0 * h);
                    m.set(i, j, m.get(i, j) + d);
                }
            }
            m
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn linearity_declared(&self) -> bool {
        self.linear_declared
    }

    /// `S_X(x)` in chart components.
    pub fn s_matrix_at(&self, x_field: &VectorField, x: &Point) -> Result<Matrix> {
        let m = (self.s_of)(x_field, x);
        if m.dim() != self.n || !m.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(m)
    }

    /// Max violation of `S_{aX + bY} = a S_X + b S_Y` over seeded random
    /// constant fields and points; a spot check for the declared flag.
    pub fn spot_check_linearity(
        &self,
        chart: &ChartDomain,
        seed: u64,
        samples: usize,
    ) -> Result<f64> {
        let mut rng = crate::rng::SplitMix64::new(seed);
        let n = self.n;
        let mut worst = 0.0;
        for _ in 0..samples {
            let p = chart.sample_point(&mut rng);
            let xv: Vec<f64> = (0..n).map(|_| rng.next_range(-1.0, 1.0)).collect();
            let yv: Vec<f64> = (0..n).map(|_| rng.next_range(-1.0, 1.0)).collect();
            let a = rng.next_range(-2.0, 2.0);
            let b = rng.next_range(-2.0, 2.0);
            let comb: Vec<f64> = (0..n).map(|i| a * xv[i] + b * yv[i]).collect();
            let sx = self.s_matrix_at(&VectorField::constant(xv), &p)?;
            let sy = self.s_matrix_at(&VectorField::constant(yv), &p)?;
            let sc = self.s_matrix_at(&VectorField::constant(comb), &p)?;
            let lin = sx.scale(a).add(&sy.scale(b));
            let dev = sc.max_abs_diff(&lin);
            if dev > worst {
                worst = dev;
            }
        }
        Ok(worst)
    }
}

impl core::fmt::Debug for SDerivationField {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("SDerivationField")
            .field("n", &self.n)
            .field("linear_declared", &self.linear_declared)
            .finish()
    }
}

/// Torsion components `T^i_{kl}` at a point, antisymmetric in `(k, l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorsionComponents {
    t: Tensor3,
}

impl TorsionComponents {
    pub fn new(t: Tensor3) -> Self {
        TorsionComponents { t }
    }

    pub fn dim(&self) -> usize {
        self.t.dim()
    }

    pub fn get(&self, i: usize, k: usize, l: usize) -> f64 {
        self.t.get(i, k, l)
    }

    pub fn as_tensor(&self) -> &Tensor3 {
        &self.t
    }

    pub fn norm(&self) -> f64 {
        self.t.norm()
    }

    /// Contraction `T^i_{kl} X^k Y^l` in frame components.
    pub fn contract(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let n = self.t.dim();
        (0..n)
            .map(|i| {
                let mut s = 0.0;
                for k in 0..n {
                    for l in 0..n {
                        s += self.t.get(i, k, l) * x[k] * y[l];
                    }
                }
                s
            })
            .collect()
    }
}

/// A source of component matrices `W_X`: either a connection or a general
/// S-derivation.
pub trait Derivation {
    fn dim(&self) -> usize;

    /// The component matrix of the derivation along the field `X` in the
    /// given frame at `at`.
    fn components(
        &self,
        x_field: &VectorField,
        frame: &FrameField,
        chart: &ChartDomain,
        at: &Point,
        h: f64,
    ) -> Result<Matrix>;
}

impl Derivation for ConnectionField {
    fn dim(&self) -> usize {
        self.n
    }

    fn components(
        &self,
        x_field: &VectorField,
        frame: &FrameField,
        chart: &ChartDomain,
        at: &Point,
        h: f64,
    ) -> Result<Matrix> {
        let x_chart = x_field.components_at(at)?;
        let x_frame = frame.to_frame_components(at, &x_chart)?;
        connection_components(self, &x_frame, frame, chart, at, h)
    }
}

impl Derivation for SDerivationField {
    fn dim(&self) -> usize {
        self.n
    }

    fn components(
        &self,
        x_field: &VectorField,
        frame: &FrameField,
        chart: &ChartDomain,
        at: &Point,
        h: f64,
    ) -> Result<Matrix> {
        derivation_components(self, x_field, frame, chart, at, h)
    }
}

/// Change-of-frame law for component matrices:
/// `W' = A^{-1} (W A + X(A))` with `X(A)` the directional derivative of the
/// frame matrix along `X`.
pub fn transform_components(w: &Matrix, a: &Matrix, xa: &Matrix) -> Result<Matrix> {
    let a_inv = a.try_inverse()?;
    Ok(a_inv.matmul(&w.matmul(a).add(xa)))
}

/// Connection direction matrices expressed in an arbitrary frame: for each
/// frame direction `k'`, the transform law applied to `X = E_{k'}` yields
/// `G'_{k'} = A^{-1} (W_{E_{k'}} A + E_{k'}(A))`.
pub fn connection_in_frame(
    conn: &ConnectionField,
    frame: &FrameField,
    chart: &ChartDomain,
    at: &Point,
    h: f64,
) -> Result<Vec<Matrix>> {
    let n = conn.dim();
    if frame.is_coordinate() {
        let t = conn.coeffs_at(at)?;
        return Ok((0..n).map(|k| t.direction_matrix(k)).collect());
    }
    let a = frame.matrix_at(at)?;
    let a_inv = a.try_inverse()?;
    let partials = finite_difference_jacobian(&|p| Ok(frame.matrix_raw(p)), chart, at, h)?;
    let coeffs = conn.coeffs_at(at)?;
    let mut out = Vec::with_capacity(n);
    for kp in 0..n {
        let dir = a.col(kp);
        let w_chart = contract_direction(&coeffs, &dir);
        // E_{k'}(A) = sum_m A^m_{k'} d_m A.
        let mut xa = Matrix::zeros(n);
        for m in 0..n {
            if dir[m] != 0.0 {
                xa = xa.add(&partials[m].scale(dir[m]));
            }
        }
        out.push(a_inv.matmul(&w_chart.matmul(&a).add(&xa)));
    }
    Ok(out)
}

/// Component matrix of a connection along a vector given by frame
/// components: `W = sum_k G'_k X^k`.
pub fn connection_components(
    conn: &ConnectionField,
    x_frame: &[f64],
    frame: &FrameField,
    chart: &ChartDomain,
    at: &Point,
    h: f64,
) -> Result<Matrix> {
    if x_frame.len() != conn.dim() {
        return Err(Error::invalid("vector length does not match connection"));
    }
    let gammas = connection_in_frame(conn, frame, chart, at, h)?;
    let n = conn.dim();
    let mut w = Matrix::zeros(n);
    for k in 0..n {
        if x_frame[k] != 0.0 {
            w = w.add(&gammas[k].scale(x_frame[k]));
        }
    }
    Ok(w)
}

/// Component matrix of a general S-derivation along the field `X`:
/// `W^i_j = S'^i_j - E_j(X'^i) + C^i_{kj} X'^k`, everything in frame
/// components (`S' = A^{-1} S A`, `X' = A^{-1} X`).
pub fn derivation_components(
    s: &SDerivationField,
    x_field: &VectorField,
    frame: &FrameField,
    chart: &ChartDomain,
    at: &Point,
    h: f64,
) -> Result<Matrix> {
    let n = s.dim();
    let s_chart = s.s_matrix_at(x_field, at)?;
    let (s_frame, frame_dir, x_frame_at): (Matrix, Matrix, Vec<f64>) = if frame.is_coordinate() {
        (
            s_chart,
            Matrix::identity(n),
            x_field.components_at(at)?,
        )
    } else {
        let a = frame.matrix_at(at)?;
        let a_inv = a.try_inverse()?;
        (
            a_inv.matmul(&s_chart.matmul(&a)),
            a.clone(),
            a_inv.mul_vec(&x_field.components_at(at)?),
        )
    };

    // Partials of the frame components of X as a composite field.
    let frame_for_partials = frame.clone();
    let x_for_partials = x_field.clone();
    let x_frame_fn = move |p: &Point| -> Result<Vec<f64>> {
        let raw = x_for_partials.components_raw(p);
        if frame_for_partials.is_coordinate() {
            Ok(raw)
        } else {
            let a = frame_for_partials.matrix_raw(p);
            Ok(a.try_inverse()?.mul_vec(&raw))
        }
    };
    let partials = finite_difference_jacobian(&x_frame_fn, chart, at, h)?;

    // E_j(X'^i) = sum_m A^m_j d_m X'^i.
    let e_of_x = Matrix::from_fn(n, |i, j| {
        let mut acc = 0.0;
        for m in 0..n {
            acc += frame_dir.get(m, j) * partials[m][i];
        }
        acc
    });

    let c = commutation_coefficients(frame, chart, at, h)?;
    let c_term = Matrix::from_fn(n, |i, j| {
        let mut acc = 0.0;
        for k in 0..n {
            acc += c.get(i, k, j) * x_frame_at[k];
        }
        acc
    });

    Ok(s_frame.sub(&e_of_x).add(&c_term))
}

/// Torsion operator of a derivation on a pair of fields, in frame
/// components: `T^i = W_X^i_l Y^l - W_Y^i_l X^l - C^i_{kl} X^k Y^l`.
pub fn torsion_of_derivation(
    d: &dyn Derivation,
    x_field: &VectorField,
    y_field: &VectorField,
    frame: &FrameField,
    chart: &ChartDomain,
    at: &Point,
    h: f64,
) -> Result<Vec<f64>> {
    let n = d.dim();
    let wx = d.components(x_field, frame, chart, at, h)?;
    let wy = d.components(y_field, frame, chart, at, h)?;
    let xf = frame.to_frame_components(at, &x_field.components_at(at)?)?;
    let yf = frame.to_frame_components(at, &y_field.components_at(at)?)?;
    let c = commutation_coefficients(frame, chart, at, h)?;
    let mut t = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = 0.0;
        for l in 0..n {
            acc += wx.get(i, l) * yf[l] - wy.get(i, l) * xf[l];
        }
        for k in 0..n {
            for l in 0..n {
                acc -= c.get(i, k, l) * xf[k] * yf[l];
            }
        }
        t.push(acc);
    }
    Ok(t)
}

/// Torsion tensor of a connection in the given frame:
/// `T^i_{kl} = -(G'^i_{kl} - G'^i_{lk}) - C^i_{kl}`.
pub fn torsion_tensor(
    conn: &ConnectionField,
    frame: &FrameField,
    chart: &ChartDomain,
    at: &Point,
    h: f64,
) -> Result<TorsionComponents> {
    let n = conn.dim();
    let gammas = connection_in_frame(conn, frame, chart, at, h)?;
    let c = commutation_coefficients(frame, chart, at, h)?;
    let t = Tensor3::from_fn(n, |i, k, l| {
        -(gammas[l].get(i, k) - gammas[k].get(i, l)) - c.get(i, k, l)
    });
    Ok(TorsionComponents::new(t))
}
