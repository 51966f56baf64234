//! Extension of a path frame to local coordinates, and the holonomicity
//! verdicts that go with it.
//!
//! Given frame matrices `A(s)` on the path (relative to the adapted basis
//! of a tube), the coordinate functions
//! `x'(s, t) = x0 + int_{s0}^{s} A^{-1}(u) e_1 du + A^{-1}(s) (0, t - t0)`
//! have Jacobian `A^{-1}(s)` on the path, so their coordinate basis
//! restricts to the given frame there. The quadratic freedom in the
//! general solution is set to zero: it changes nothing on the path.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::chart::{ChartDomain, Point};
use crate::derivation::{torsion_tensor, ConnectionField};
use crate::diff::commutation_coefficients;
use crate::error::{Error, Result};
use crate::frame::FrameField;
use crate::ivp::ParamGrid;
use crate::linalg::{fabs, Matrix};
use crate::path::{PathCurve, TubeMap};
use crate::special::MatrixFn;

type IntegrandFn = Arc<dyn Fn(f64) -> Result<Vec<f64>> + Send + Sync>;

/// Local coordinates adapted to a path frame.
#[derive(Clone)]
pub struct CoordinateExtension {
    tube: TubeMap,
    grid: ParamGrid,
    s0: f64,
    x0: Vec<f64>,
    a_on_path: MatrixFn,
    integrand: IntegrandFn,
    /// Cumulative Simpson integral of `A^{-1} e_1` from the grid start.
    cumulative: Vec<Vec<f64>>,
    /// Cumulative value at `s0`, subtracted so the integral is based there.
    base_integral: Vec<f64>,
    jac_step: f64,
}

/// Builds the coordinate extension of a path frame. `a_on_path` maps the
/// parameter to the frame matrix relative to the tube's adapted basis and
/// must be smooth (gridded transport solutions provide refined evaluation).
pub fn extend_to_coordinates(
    a_on_path: MatrixFn,
    tube: &TubeMap,
    s0: f64,
    x0: &[f64],
    grid: &ParamGrid,
) -> Result<CoordinateExtension> {
    let n = tube.dim();
    if x0.len() != n {
        return Err(Error::invalid("base coordinate value has wrong length"));
    }
    if s0 < grid.s_start() || s0 > grid.s_end() {
        return Err(Error::invalid("s0 must lie inside the grid range"));
    }
    // The path must be injective for adapted coordinates to exist at all;
    // the tube construction enforces this, re-check cheaply here.
    tube.path().check_injective(2.0 * tube.radius())?;

    let a_fn = a_on_path.clone();
    let integrand: IntegrandFn = Arc::new(move |u: f64| -> Result<Vec<f64>> {
        let a = a_fn(u);
        if !a.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(a.try_inverse()?.col(0))
    });

    let nodes = grid.nodes();
    let mut cumulative = Vec::with_capacity(nodes.len());
    let mut acc = vec![0.0; n];
    cumulative.push(acc.clone());
    for k in 0..nodes.len() - 1 {
        let piece = simpson(&integrand, nodes[k], nodes[k + 1])?;
        for i in 0..n {
            acc[i] += piece[i];
        }
        cumulative.push(acc.clone());
    }

    let mut ext = CoordinateExtension {
        tube: tube.clone(),
        grid: grid.clone(),
        s0,
        x0: x0.to_vec(),
        a_on_path,
        integrand,
        cumulative,
        base_integral: vec![0.0; n],
        jac_step: crate::defaults::FD_STEP,
    };
    ext.base_integral = ext.integral_from_start(s0)?;
    Ok(ext)
}

/// Re-expresses a chart-basis path frame relative to the adapted basis of
/// a tube: `A_adapted(s) = J(s)^{-1} A_chart(s)` with `J` the adapted
/// frame. Failures surface as non-finite matrices, which checked
/// consumers reject.
pub fn chart_to_adapted(tube: &TubeMap, chart_frame: MatrixFn) -> MatrixFn {
    let tube = tube.clone();
    let n = tube.dim();
    Arc::new(move |s: f64| {
        let j = tube.adapted_frame(s);
        match j.try_inverse() {
            Ok(inv) => inv.matmul(&chart_frame(s)),
            Err(_) => Matrix::identity(n).scale(f64::NAN),
        }
    })
}

/// Simpson's rule on one interval with the midpoint sample.
fn simpson(f: &IntegrandFn, a: f64, b: f64) -> Result<Vec<f64>> {
    let fa = f(a)?;
    let fm = f(0.5 * (a + b))?;
    let fb = f(b)?;
    let w = (b - a) / 6.0;
    Ok((0..fa.len())
        .map(|i| w * (fa[i] + 4.0 * fm[i] + fb[i]))
        .collect())
}

impl CoordinateExtension {
    pub fn tube(&self) -> &TubeMap {
        &self.tube
    }

    pub fn grid(&self) -> &ParamGrid {
        &self.grid
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    /// Frame matrix on the path (adapted basis).
    pub fn frame_on_path(&self, s: f64) -> Matrix {
        (self.a_on_path)(s)
    }

    fn integral_from_start(&self, s: f64) -> Result<Vec<f64>> {
        let nodes = self.grid.nodes();
        let n = self.tube.dim();
        let (base, node_s) = if s <= nodes[0] {
            (vec![0.0; n], nodes[0])
        } else {
            let mut k = self.grid.nearest_index(s);
            if nodes[k] > s {
                k -= 1;
            }
            (self.cumulative[k].clone(), nodes[k])
        };
        if node_s == s {
            return Ok(base);
        }
        let tail = simpson(&self.integrand, node_s, s)?;
        Ok((0..n).map(|i| base[i] + tail[i]).collect())
    }

    /// The coordinate functions at adapted parameters `(s, t)`.
    pub fn x_prime(&self, s: f64, t: &[f64]) -> Result<Vec<f64>> {
        let n = self.tube.dim();
        if t.len() + 1 != n {
            return Err(Error::invalid("transverse coordinate length mismatch"));
        }
        if !self.tube.t_within(t, 0.5) {
            return Err(Error::OutsideChart);
        }
        let slack = 0.05 * self.tube.path().span();
        if s < self.grid.s_start() - slack || s > self.grid.s_end() + slack {
            return Err(Error::OutsideChart);
        }
        let integral = self.integral_from_start(s)?;
        let a = (self.a_on_path)(s);
        if !a.is_finite() {
            return Err(Error::NonFinite);
        }
        let a_inv = a.try_inverse()?;
        let t0 = self.tube.t0();
        let mut delta = vec![0.0; n];
        for k in 1..n {
            delta[k] = t[k - 1] - t0[k - 1];
        }
        let moved = a_inv.mul_vec(&delta);
        Ok((0..n)
            .map(|i| self.x0[i] + (integral[i] - self.base_integral[i]) + moved[i])
            .collect())
    }

    /// Finite-difference Jacobian of the coordinate functions with respect
    /// to the adapted coordinates, columns ordered `(s, t_1, ..)`.
    pub fn jacobian_fd(&self, s: f64, t: &[f64], h: f64) -> Result<Matrix> {
        let n = self.tube.dim();
        let mut jac = Matrix::zeros(n);
        for dir in 0..n {
            let (plus, minus) = if dir == 0 {
                (self.x_prime(s + h, t)?, self.x_prime(s - h, t)?)
            } else {
                let mut tp = t.to_vec();
                tp[dir - 1] += h;
                let mut tm = t.to_vec();
                tm[dir - 1] -= h;
                (self.x_prime(s, &tp)?, self.x_prime(s, &tm)?)
            };
            for i in 0..n {
                jac.set(i, dir, (plus[i] - minus[i]) / (2.0 * h));
            }
        }
        Ok(jac)
    }

    /// Max mismatch over the grid between the finite-difference Jacobian on
    /// the path and the inverse frame matrix it must equal.
    pub fn jacobian_mismatch_on_path(&self, h: f64) -> Result<f64> {
        let t0 = self.tube.t0().to_vec();
        let mut worst = 0.0;
        for &s in self.grid.nodes() {
            let jac = self.jacobian_fd(s, &t0, h)?;
            let expect = (self.a_on_path)(s).try_inverse()?;
            let d = jac.max_abs_diff(&expect);
            if d > worst {
                worst = d;
            }
        }
        Ok(worst)
    }

    /// Max mismatch between the coordinate basis vectors of the new
    /// coordinates (inverse finite-difference Jacobian) and the frame they
    /// extend, on the path, in adapted components.
    pub fn basis_mismatch_on_path(&self, h: f64) -> Result<f64> {
        let t0 = self.tube.t0().to_vec();
        let mut worst = 0.0;
        for &s in self.grid.nodes() {
            let jac = self.jacobian_fd(s, &t0, h)?;
            let basis = jac.try_inverse()?;
            let d = basis.max_abs_diff(&(self.a_on_path)(s));
            if d > worst {
                worst = d;
            }
        }
        Ok(worst)
    }

    /// Min and max of `det J(s, t) / det J(s, t0)` over a sampled tube
    /// cross-section; staying near one quantifies that the coordinate
    /// change is a diffeomorphism on the whole tube.
    pub fn jacobian_det_range(&self, s_samples: usize, t_samples: usize) -> Result<(f64, f64)> {
        let n = self.tube.dim();
        let grid = ParamGrid::uniform(self.grid.s_start(), self.grid.s_end(), s_samples)?;
        let t0 = self.tube.t0().to_vec();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &s in grid.nodes() {
            let det0 = self.jacobian_fd(s, &t0, self.jac_step)?.det();
            if fabs(det0) < crate::defaults::MIN_DET {
                return Err(Error::DegenerateFrame { det: det0 });
            }
            for dir in 0..n - 1 {
                for step in 1..=t_samples {
                    let frac = step as f64 / t_samples as f64;
                    for sign in [-1.0, 1.0] {
                        let mut t = t0.clone();
                        t[dir] += sign * frac * self.tube.radius();
                        let det = self.jacobian_fd(s, &t, self.jac_step)?.det();
                        let ratio = det / det0;
                        if !ratio.is_finite() || ratio <= 0.0 {
                            return Err(Error::DegenerateFrame { det });
                        }
                        if ratio < lo {
                            lo = ratio;
                        }
                        if ratio > hi {
                            hi = ratio;
                        }
                    }
                }
            }
        }
        Ok((lo, hi))
    }

    /// Chart frame field of the new coordinate basis `d/dx'^j`, for
    /// holonomicity checks. Evaluation inverts the tube, so it is only
    /// valid near the path.
    pub fn coordinate_frame_field(&self) -> FrameField {
        let me = self.clone();
        let n = self.tube.dim();
        FrameField::new(n, move |p: &Point| {
            let eval = || -> Result<Matrix> {
                let (s, t) = me.tube.invert(p)?;
                let jac = me.jacobian_fd(s, &t, me.jac_step)?;
                Ok(me.tube.adapted_frame(s).matmul(&jac.try_inverse()?))
            };
            eval().unwrap_or_else(|_| Matrix::identity(n).scale(f64::NAN))
        })
    }
}

impl core::fmt::Debug for CoordinateExtension {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("CoordinateExtension")
            .field("s0", &self.s0)
            .field("x0", &self.x0)
            .field("nodes", &self.grid.len())
            .finish()
    }
}

/// Verdict of the commutator scan along a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Holonomicity {
    Holonomic,
    Anholonomic,
    /// Between the tolerance and ten times the tolerance; no verdict.
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct HolonomicityReport {
    pub max_commutator_norm: f64,
    pub verdict: Holonomicity,
}

/// Scans the pairwise frame commutators on the path. Holonomic below
/// `tol`, anholonomic above `10 * tol`, inconclusive in the gap.
pub fn holonomicity_on_path(
    frame: &FrameField,
    chart: &ChartDomain,
    path: &PathCurve,
    samples: usize,
    h: f64,
    tol: f64,
) -> Result<HolonomicityReport> {
    if samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let grid = ParamGrid::uniform(path.s_start(), path.s_end(), samples)?;
    let mut worst = 0.0;
    for &s in grid.nodes() {
        let x = path.point_at(s);
        let c = commutation_coefficients(frame, chart, &x, h)?;
        let norm = c.norm();
        if norm > worst {
            worst = norm;
        }
    }
    let verdict = if worst < tol {
        Holonomicity::Holonomic
    } else if worst > 10.0 * tol {
        Holonomicity::Anholonomic
    } else {
        Holonomicity::Inconclusive
    };
    Ok(HolonomicityReport { max_commutator_norm: worst, verdict })
}

/// True when the torsion tensor of the connection stays below `tol` on the
/// sampled path; also returns the max norm found.
pub fn torsion_free_on_path(
    conn: &ConnectionField,
    frame: &FrameField,
    chart: &ChartDomain,
    path: &PathCurve,
    samples: usize,
    h: f64,
    tol: f64,
) -> Result<(bool, f64)> {
    if samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let grid = ParamGrid::uniform(path.s_start(), path.s_end(), samples)?;
    let mut worst = 0.0;
    for &s in grid.nodes() {
        let x = path.point_at(s);
        let t = torsion_tensor(conn, frame, chart, &x, h)?;
        let norm = t.norm();
        if norm > worst {
            worst = norm;
        }
    }
    Ok((worst < tol, worst))
}
