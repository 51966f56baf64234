//! Frames in which the components of a derivation vanish along a path.
//!
//! Two constructions live here. The transport build zeroes the components
//! along the tangent of one path: it solves `dA/ds = -W(s) A` with the
//! fundamental-solution engine, so `A(s) = Y(s, s0; -W) B` for any
//! invertible start matrix `B`. The tube build zeroes the components along
//! *every* vector field on the path, which is possible exactly when the
//! derivation is linear in the field there; it assembles
//! `A(s, t) = [I - sum_k G'_k(s) (t_k - t0_k)] Y(s, s0; -G'_1) B`
//! in the adapted coordinates of a [`TubeMap`], with the direction matrices
//! `G'_k` expressed in those coordinates.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::chart::{ChartDomain, Point};
use crate::derivation::{transform_components, Derivation};
use crate::error::{Error, Result};
use crate::frame::{FrameField, VectorField};
use crate::ivp::{rk4_step, solve_matrix_ivp, MatrixTable, ParamGrid};
use crate::linalg::{fabs, Matrix};
use crate::path::{PathCurve, TubeMap};
use crate::rng::SplitMix64;

/// Matrix-valued function of the path parameter.
pub type MatrixFn = Arc<dyn Fn(f64) -> Matrix + Send + Sync>;

type GammaFn = Arc<dyn Fn(f64) -> Result<Vec<Matrix>> + Send + Sync>;

/// Transport frame on a path grid with its defining residual diagnostics.
#[derive(Clone)]
pub struct TransportSolution {
    grid: ParamGrid,
    s0: f64,
    b: Matrix,
    a_grid: Vec<Matrix>,
    w: MatrixFn,
    w_prime_grid: Vec<Matrix>,
    residual: Vec<f64>,
}

impl TransportSolution {
    pub fn grid(&self) -> &ParamGrid {
        &self.grid
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn a_grid(&self) -> &[Matrix] {
        &self.a_grid
    }

    pub fn a_at_index(&self, k: usize) -> &Matrix {
        &self.a_grid[k]
    }

    /// Transformed component matrices `W'` on the grid (the residual data).
    pub fn w_prime_grid(&self) -> &[Matrix] {
        &self.w_prime_grid
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residual
    }

    pub fn residual_max(&self) -> f64 {
        self.residual.iter().copied().fold(0.0, f64::max)
    }

    /// The coefficient function the frame was built from.
    pub fn w_fn(&self) -> MatrixFn {
        self.w.clone()
    }

    /// `W'` as a clamped-linear table over the grid.
    pub fn w_prime_table(&self) -> MatrixTable {
        MatrixTable::new(self.grid.clone(), self.w_prime_grid.clone())
            .expect("grid and values built together")
    }

    /// Frame matrix at an arbitrary parameter: nearest node plus one
    /// integrator step, so evaluation is smooth between nodes.
    pub fn frame_at(&self, s: f64) -> Matrix {
        let k = self.grid.nearest_index(s);
        let node = self.grid.nodes()[k];
        if s == node {
            return self.a_grid[k].clone();
        }
        let w = self.w.clone();
        let z = move |u: f64| w(u).scale(-1.0);
        rk4_step(&z, node, s - node, &self.a_grid[k])
    }
}

impl core::fmt::Debug for TransportSolution {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("TransportSolution")
            .field("s0", &self.s0)
            .field("nodes", &self.grid.len())
            .field("residual_max", &self.residual_max())
            .finish()
    }
}

/// Fourth-order parameter derivative of a matrix grid (five-point
/// stencils, one-sided at the ends). Needs at least five nodes.
fn grid_derivative(grid: &ParamGrid, vals: &[Matrix]) -> Result<Vec<Matrix>> {
    let m = vals.len();
    if m < 5 {
        return Err(Error::invalid("grids need at least five nodes here"));
    }
    let h = grid.step();
    let lin = |coeffs: &[(usize, f64)]| -> Matrix {
        let mut acc = Matrix::zeros(vals[0].dim());
        for &(idx, c) in coeffs {
            acc = acc.add(&vals[idx].scale(c / (12.0 * h)));
        }
        acc
    };
    let mut out = Vec::with_capacity(m);
    for k in 0..m {
        let d = if k == 0 {
            lin(&[(0, -25.0), (1, 48.0), (2, -36.0), (3, 16.0), (4, -3.0)])
        } else if k == 1 {
            lin(&[(0, -3.0), (1, -10.0), (2, 18.0), (3, -6.0), (4, 1.0)])
        } else if k == m - 2 {
            lin(&[(m - 5, -1.0), (m - 4, 6.0), (m - 3, -18.0), (m - 2, 10.0), (m - 1, 3.0)])
        } else if k == m - 1 {
            lin(&[(m - 5, 3.0), (m - 4, -16.0), (m - 3, 36.0), (m - 2, -48.0), (m - 1, 25.0)])
        } else {
            lin(&[(k - 2, 1.0), (k - 1, -8.0), (k + 1, 8.0), (k + 2, -1.0)])
        };
        out.push(d);
    }
    Ok(out)
}

/// Builds the frame that zeroes the components along the path tangent:
/// `A(s) = Y(s, s0; -W) B`. The stored residual is the transformed
/// component matrix recomputed with a finite-difference `dA/ds`, so a
/// misconfigured integrator shows up instead of cancelling out.
pub fn special_frame_along_path(
    w_on_path: MatrixFn,
    s0: f64,
    b: &Matrix,
    grid: &ParamGrid,
    tol: f64,
) -> Result<TransportSolution> {
    let b_det = b.det();
    if fabs(b_det) < crate::defaults::MIN_DET || !b_det.is_finite() {
        return Err(Error::invalid("start matrix B must be invertible"));
    }
    if grid.len() < 5 {
        return Err(Error::invalid("transport grids need at least five nodes"));
    }
    let w = w_on_path.clone();
    let z = move |s: f64| w(s).scale(-1.0);
    let y = solve_matrix_ivp(&z, s0, grid)?;
    let a_grid: Vec<Matrix> = y.matrices().iter().map(|m| m.matmul(b)).collect();
    let da = grid_derivative(grid, &a_grid)?;
    let mut w_prime_grid = Vec::with_capacity(a_grid.len());
    let mut residual = Vec::with_capacity(a_grid.len());
    for (k, &s) in grid.nodes().iter().enumerate() {
        let wp = transform_components(&w_on_path(s), &a_grid[k], &da[k])?;
        residual.push(wp.inf_norm());
        w_prime_grid.push(wp);
    }
    let sol = TransportSolution {
        grid: grid.clone(),
        s0,
        b: b.clone(),
        a_grid,
        w: w_on_path,
        w_prime_grid,
        residual,
    };
    let worst = sol.residual_max();
    if worst > tol {
        return Err(Error::ConstructionFailure { residual: worst, tolerance: tol });
    }
    Ok(sol)
}

/// Max parameter derivative of the transition matrix `A_1^{-1} A_2` over
/// the shared grid. Near zero exactly when both frames zero the same
/// components, which is the transition-constancy claim.
pub fn verify_transition_constancy(
    sol1: &TransportSolution,
    sol2: &TransportSolution,
) -> Result<f64> {
    if !sol1.grid.same_as(&sol2.grid) {
        return Err(Error::GridMismatch);
    }
    let trans: Vec<Matrix> = (0..sol1.a_grid.len())
        .map(|k| Ok(sol1.a_grid[k].try_inverse()?.matmul(&sol2.a_grid[k])))
        .collect::<Result<_>>()?;
    let h = sol1.grid.step();
    let m = trans.len();
    let mut worst = 0.0;
    for k in 0..m {
        let d = if k == 0 {
            trans[0]
                .scale(-3.0)
                .add(&trans[1].scale(4.0))
                .add(&trans[2].scale(-1.0))
                .scale(1.0 / (2.0 * h))
        } else if k == m - 1 {
            trans[m - 1]
                .scale(3.0)
                .add(&trans[m - 2].scale(-4.0))
                .add(&trans[m - 3].scale(1.0))
                .scale(1.0 / (2.0 * h))
        } else {
            trans[k + 1].sub(&trans[k - 1]).scale(1.0 / (2.0 * h))
        };
        let norm = d.inf_norm();
        if norm > worst {
            worst = norm;
        }
    }
    Ok(worst)
}

/// The derivative operator along the path applied to a vector given in the
/// working frame: `(D V)(s) = dV/ds + W(s) V(s)` at every grid node. For a
/// connection this is the classical covariant derivative along the curve.
pub fn derivative_along_path(
    w_on_path: &dyn Fn(f64) -> Matrix,
    v: &dyn Fn(f64) -> Vec<f64>,
    grid: &ParamGrid,
) -> Result<Vec<Vec<f64>>> {
    let nodes = grid.nodes();
    let mut out = Vec::with_capacity(nodes.len());
    for (k, &s) in nodes.iter().enumerate() {
        let delta = 1e-6 * fabs(s).max(1.0);
        let dv: Vec<f64> = if k == 0 {
            let f0 = v(s);
            let f1 = v(s + delta);
            let f2 = v(s + 2.0 * delta);
            (0..f0.len())
                .map(|i| (-3.0 * f0[i] + 4.0 * f1[i] - f2[i]) / (2.0 * delta))
                .collect()
        } else if k == nodes.len() - 1 {
            let f0 = v(s);
            let f1 = v(s - delta);
            let f2 = v(s - 2.0 * delta);
            (0..f0.len())
                .map(|i| (3.0 * f0[i] - 4.0 * f1[i] + f2[i]) / (2.0 * delta))
                .collect()
        } else {
            let fp = v(s + delta);
            let fm = v(s - delta);
            (0..fp.len()).map(|i| (fp[i] - fm[i]) / (2.0 * delta)).collect()
        };
        let vv = v(s);
        if vv.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        let wv = w_on_path(s).mul_vec(&vv);
        if dv.len() != wv.len() {
            return Err(Error::GridMismatch);
        }
        out.push((0..dv.len()).map(|i| dv[i] + wv[i]).collect());
    }
    Ok(out)
}

/// Outcome of the linearity fit along a path.
#[derive(Debug, Clone)]
pub struct LinearityCheck {
    pub linear: bool,
    pub max_residual: f64,
    /// Fitted chart-frame direction matrices `G_k` at every grid node.
    pub gamma_on_path: Vec<Vec<Matrix>>,
}

/// Fits `W_X = G_k X^k` on the path from the chart-constant unit fields,
/// then cross-validates on extra random constant fields. Constant probes
/// make the derivative term vanish, so the fit isolates the S and
/// commutation terms.
pub fn is_linear_along_path<D: Derivation + ?Sized>(
    deriv: &D,
    chart: &ChartDomain,
    path: &PathCurve,
    probe_count: usize,
    seed: u64,
    h: f64,
    tol: f64,
) -> Result<LinearityCheck> {
    let n = deriv.dim();
    if probe_count < n {
        return Err(Error::invalid("need at least dim(M) probe fields"));
    }
    let frame = FrameField::coordinate(n);
    let units: Vec<VectorField> = (0..n).map(|j| VectorField::coordinate_unit(n, j)).collect();
    let mut rng = SplitMix64::new(seed);
    let mut extras: Vec<Vec<f64>> = Vec::new();
    for _ in n..probe_count {
        // Components bounded away from zero so a nonlinear rule cannot
        // hide behind a tiny probe.
        let c: Vec<f64> = (0..n)
            .map(|_| {
                let mag = rng.next_range(0.25, 2.0);
                if rng.next_f64() < 0.5 {
                    -mag
                } else {
                    mag
                }
            })
            .collect();
        extras.push(c);
    }
    let mut worst = 0.0;
    let mut gamma_on_path = Vec::with_capacity(path.grid().len());
    for &s in path.grid().nodes() {
        let at = path.point_at(s);
        let mut gammas = Vec::with_capacity(n);
        for unit in &units {
            gammas.push(deriv.components(unit, &frame, chart, &at, h)?);
        }
        for c in &extras {
            let actual =
                deriv.components(&VectorField::constant(c.clone()), &frame, chart, &at, h)?;
            let mut predicted = Matrix::zeros(n);
            for k in 0..n {
                predicted = predicted.add(&gammas[k].scale(c[k]));
            }
            let dev = actual.max_abs_diff(&predicted);
            if dev > worst {
                worst = dev;
            }
        }
        gamma_on_path.push(gammas);
    }
    Ok(LinearityCheck { linear: worst <= tol, max_residual: worst, gamma_on_path })
}

/// Options for the tube-frame build.
#[derive(Debug, Clone)]
pub struct AllFieldsOptions {
    /// Transverse finite-difference step for the residual check.
    pub transverse_step: f64,
    /// Total probe fields for the linearity precheck.
    pub probe_count: usize,
    /// Seed for the random probes.
    pub seed: u64,
    /// Gate on the vanishing-components residual along the path.
    pub residual_tol: f64,
    /// Gate on the linearity cross-validation residual.
    pub linearity_tol: f64,
    /// Chart finite-difference step.
    pub fd_step: f64,
}

impl Default for AllFieldsOptions {
    fn default() -> Self {
        AllFieldsOptions {
            transverse_step: crate::defaults::TRANSVERSE_STEP,
            probe_count: 6,
            seed: 0x5EED,
            residual_tol: crate::defaults::TUBE_RESIDUAL_TOL,
            linearity_tol: crate::defaults::LINEARITY_TOL,
            fd_step: crate::defaults::FD_STEP,
        }
    }
}

/// Frame field over a tube in which the derivation components vanish on
/// the path for every vector field.
#[derive(Clone)]
pub struct TubeFrameSolution {
    tube: TubeMap,
    grid: ParamGrid,
    s0: f64,
    b: Matrix,
    /// Direction matrices in adapted coordinates as a function of `s`.
    gamma_adapted: GammaFn,
    /// The same matrices sampled at the grid nodes.
    gamma_on_path: Vec<Vec<Matrix>>,
    /// Path restriction `A(s_k, t0) = Y(s_k) B`.
    a_path: Vec<Matrix>,
    /// Vanishing-components residual per node, max over directions.
    residual: Vec<f64>,
    transverse_step: f64,
}

impl TubeFrameSolution {
    pub fn tube(&self) -> &TubeMap {
        &self.tube
    }

    pub fn grid(&self) -> &ParamGrid {
        &self.grid
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn path_frames(&self) -> &[Matrix] {
        &self.a_path
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residual
    }

    pub fn residual_max(&self) -> f64 {
        self.residual.iter().copied().fold(0.0, f64::max)
    }

    /// Adapted-coordinate direction matrices at the grid nodes.
    pub fn gamma_on_path(&self) -> &[Vec<Matrix>] {
        &self.gamma_on_path
    }

    /// Adapted-coordinate direction matrices at an arbitrary parameter.
    pub fn gamma_at(&self, s: f64) -> Result<Vec<Matrix>> {
        (self.gamma_adapted)(s)
    }

    /// Path frame `A(s, t0)`, refined off the nodes by one integrator step.
    pub fn path_frame_at(&self, s: f64) -> Result<Matrix> {
        let k = self.grid.nearest_index(s);
        let node = self.grid.nodes()[k];
        if s == node {
            return Ok(self.a_path[k].clone());
        }
        let ga = self.gamma_adapted.clone();
        let n = self.b.dim();
        let z = move |u: f64| match ga(u) {
            Ok(g) => g[0].scale(-1.0),
            Err(_) => Matrix::identity(n).scale(f64::NAN),
        };
        let stepped = rk4_step(&z, node, s - node, &self.a_path[k]);
        if stepped.is_finite() {
            Ok(stepped)
        } else {
            Err(Error::NonFinite)
        }
    }

    /// Full tube frame `A(s, t)` relative to the adapted coordinate basis.
    pub fn frame_at(&self, s: f64, t: &[f64]) -> Result<Matrix> {
        let n = self.b.dim();
        if t.len() + 1 != n {
            return Err(Error::invalid("transverse coordinate length mismatch"));
        }
        let gammas = (self.gamma_adapted)(s)?;
        let base = self.path_frame_at(s)?;
        let t0 = self.tube.t0();
        let mut bracket = Matrix::identity(n);
        for k in 1..n {
            let dt = t[k - 1] - t0[k - 1];
            if dt != 0.0 {
                bracket = bracket.sub(&gammas[k].scale(dt));
            }
        }
        Ok(bracket.matmul(&base))
    }

    /// The tube frame as a chart frame field: columns are chart components
    /// of the special frame vectors. Points outside the tube evaluate to
    /// non-finite matrices, which checked consumers reject.
    pub fn chart_frame_field(&self) -> FrameField {
        let me = self.clone();
        let n = self.b.dim();
        FrameField::new(n, move |p: &Point| {
            let eval = || -> Result<Matrix> {
                let (s, t) = me.tube.invert(p)?;
                let a_tube = me.frame_at(s, &t)?;
                Ok(me.tube.adapted_frame(s).matmul(&a_tube))
            };
            eval().unwrap_or_else(|_| Matrix::identity(n).scale(f64::NAN))
        })
    }

    /// Recovers the direction matrices from the built frame alone:
    /// `G_k = -E_k(A) A^{-1}` with every derivative taken by finite
    /// differences of the frame data. The round trip back to the inputs is
    /// the converse direction of the existence proposition.
    pub fn extract_gamma_at_node(&self, k: usize) -> Result<Vec<Matrix>> {
        let n = self.b.dim();
        let nodes = self.grid.nodes();
        let h = self.grid.step();
        let m = nodes.len();
        let d_s = if k == 0 {
            self.a_path[0]
                .scale(-3.0)
                .add(&self.a_path[1].scale(4.0))
                .add(&self.a_path[2].scale(-1.0))
                .scale(1.0 / (2.0 * h))
        } else if k == m - 1 {
            self.a_path[m - 1]
                .scale(3.0)
                .add(&self.a_path[m - 2].scale(-4.0))
                .add(&self.a_path[m - 3].scale(1.0))
                .scale(1.0 / (2.0 * h))
        } else {
            self.a_path[k + 1]
                .sub(&self.a_path[k - 1])
                .scale(1.0 / (2.0 * h))
        };
        let a_inv = self.a_path[k].try_inverse()?;
        let mut out = vec![d_s.matmul(&a_inv).scale(-1.0)];
        let s = nodes[k];
        let t0 = self.tube.t0();
        for dir in 1..n {
            let delta = self.transverse_step;
            let mut tp = t0.to_vec();
            tp[dir - 1] += delta;
            let mut tm = t0.to_vec();
            tm[dir - 1] -= delta;
            let fd = self
                .frame_at(s, &tp)?
                .sub(&self.frame_at(s, &tm)?)
                .scale(1.0 / (2.0 * delta));
            out.push(fd.matmul(&a_inv).scale(-1.0));
        }
        Ok(out)
    }
}

impl core::fmt::Debug for TubeFrameSolution {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("TubeFrameSolution")
            .field("s0", &self.s0)
            .field("nodes", &self.grid.len())
            .field("residual_max", &self.residual_max())
            .finish()
    }
}

/// Chart vector field of the `k`-th adapted coordinate direction of a tube.
fn adapted_direction_field(tube: &TubeMap, k: usize) -> VectorField {
    let n = tube.dim();
    if k >= 1 {
        // Transverse directions are constant by construction.
        return VectorField::constant(tube.adapted_frame(tube.path().s_start()).col(k));
    }
    let tube = tube.clone();
    VectorField::new(n, move |p: &Point| match tube.invert(p) {
        Ok((s, _)) => tube.path().tangent_at(s),
        Err(_) => vec![f64::NAN; n],
    })
}

/// Direction matrices of the derivation in the adapted coordinates of the
/// tube at parameter `s`, via the change-of-frame law applied to each
/// adapted coordinate field.
fn adapted_gammas<D: Derivation + ?Sized>(
    deriv: &D,
    chart: &ChartDomain,
    tube: &TubeMap,
    s: f64,
    h: f64,
) -> Result<Vec<Matrix>> {
    let n = tube.dim();
    let at = tube.path().point_at(s);
    let j = tube.adapted_frame(s);
    let j_inv = j.try_inverse()?;
    let dj = tube.adapted_frame_s_derivative(s, h);
    let coord = FrameField::coordinate(n);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let field = adapted_direction_field(tube, k);
        let w_chart = deriv.components(&field, &coord, chart, &at, h)?;
        // The adapted frame matrix depends on position only through s, so
        // its derivative along direction k is d/ds for k = 1 and zero for
        // the transverse directions.
        let with_xa = if k == 0 {
            w_chart.matmul(&j).add(&dj)
        } else {
            w_chart.matmul(&j)
        };
        out.push(j_inv.matmul(&with_xa));
    }
    Ok(out)
}

/// Builds the tube frame that zeroes the components of a linear-on-the-path
/// derivation for every vector field. Fails with [`Error::NotLinear`] when
/// the linearity fit rejects the derivation, and with
/// [`Error::ConstructionFailure`] when the vanishing-components residual
/// exceeds its gate.
pub fn special_frame_all_fields<D>(
    deriv: &D,
    chart: &ChartDomain,
    tube: &TubeMap,
    b: &Matrix,
    grid: &ParamGrid,
    opts: &AllFieldsOptions,
) -> Result<TubeFrameSolution>
where
    D: Derivation + Clone + Send + Sync + 'static,
{
    let n = deriv.dim();
    if n != tube.dim() || b.dim() != n {
        return Err(Error::invalid("derivation, tube, and B dimensions must agree"));
    }
    let b_det = b.det();
    if fabs(b_det) < crate::defaults::MIN_DET || !b_det.is_finite() {
        return Err(Error::invalid("start matrix B must be invertible"));
    }
    if grid.len() < 5 {
        return Err(Error::invalid("tube builds need at least five grid nodes"));
    }

    // Linearity on the path is the hypothesis of the construction; a
    // decimated grid keeps the precheck cheap.
    let check_path = tube.path().with_grid_size(tube.path().grid_size().min(64))?;
    let lin = is_linear_along_path(
        deriv,
        chart,
        &check_path,
        opts.probe_count,
        opts.seed,
        opts.fd_step,
        opts.linearity_tol,
    )?;
    if !lin.linear {
        return Err(Error::NotLinear { residual: lin.max_residual });
    }

    let deriv_c = deriv.clone();
    let chart_c = chart.clone();
    let tube_c = tube.clone();
    let h = opts.fd_step;
    let gamma_adapted: GammaFn =
        Arc::new(move |s: f64| adapted_gammas(&deriv_c, &chart_c, &tube_c, s, h));

    let ga = gamma_adapted.clone();
    let z = move |s: f64| match ga(s) {
        Ok(g) => g[0].scale(-1.0),
        Err(_) => Matrix::identity(n).scale(f64::NAN),
    };
    let s0 = grid.s_start();
    let y = solve_matrix_ivp(&z, s0, grid)?;
    let a_path: Vec<Matrix> = y.matrices().iter().map(|m| m.matmul(b)).collect();

    let mut gamma_on_path = Vec::with_capacity(grid.len());
    for &s in grid.nodes() {
        gamma_on_path.push(gamma_adapted(s)?);
    }

    let sol = TubeFrameSolution {
        tube: tube.clone(),
        grid: grid.clone(),
        s0,
        b: b.clone(),
        gamma_adapted,
        gamma_on_path,
        a_path,
        residual: Vec::new(),
        transverse_step: opts.transverse_step,
    };
    let residual = eq_vanishing_residual(&sol)?;
    let worst = residual.iter().copied().fold(0.0, f64::max);
    let sol = TubeFrameSolution { residual, ..sol };
    if worst > opts.residual_tol {
        return Err(Error::ConstructionFailure { residual: worst, tolerance: opts.residual_tol });
    }
    Ok(sol)
}

/// Residual of the vanishing-components condition
/// `G'_k A + E_k(A) = 0` on the path grid, max over directions per node.
/// Every derivative is a finite difference of the built frame data.
fn eq_vanishing_residual(sol: &TubeFrameSolution) -> Result<Vec<f64>> {
    let n = sol.b.dim();
    let nodes = sol.grid.nodes();
    let h = sol.grid.step();
    let m = nodes.len();
    let t0 = sol.tube.t0();
    let mut out = Vec::with_capacity(m);
    for k in 0..m {
        let gammas = &sol.gamma_on_path[k];
        let a = &sol.a_path[k];
        // Path direction by grid differences.
        let d_s = if k == 0 {
            sol.a_path[0]
                .scale(-3.0)
                .add(&sol.a_path[1].scale(4.0))
                .add(&sol.a_path[2].scale(-1.0))
                .scale(1.0 / (2.0 * h))
        } else if k == m - 1 {
            sol.a_path[m - 1]
                .scale(3.0)
                .add(&sol.a_path[m - 2].scale(-4.0))
                .add(&sol.a_path[m - 3].scale(1.0))
                .scale(1.0 / (2.0 * h))
        } else {
            sol.a_path[k + 1]
                .sub(&sol.a_path[k - 1])
                .scale(1.0 / (2.0 * h))
        };
        let mut worst = gammas[0].matmul(a).add(&d_s).inf_norm();
        // Transverse directions by central differences of the tube frame.
        for dir in 1..n {
            let delta = sol.transverse_step;
            let mut tp = t0.to_vec();
            tp[dir - 1] += delta;
            let mut tm = t0.to_vec();
            tm[dir - 1] -= delta;
            let fd = sol
                .frame_at(nodes[k], &tp)?
                .sub(&sol.frame_at(nodes[k], &tm)?)
                .scale(1.0 / (2.0 * delta));
            let r = gammas[dir].matmul(a).add(&fd).inf_norm();
            if r > worst {
                worst = r;
            }
        }
        out.push(worst);
    }
    Ok(out)
}

/// Max frame-direction derivative of the transition matrix between two
/// tube builds on the path. Both builds must share the tube grid; the
/// transition-freedom claim is that every direction derivative vanishes
/// on the path.
pub fn verify_tube_transition(
    sol1: &TubeFrameSolution,
    sol2: &TubeFrameSolution,
) -> Result<f64> {
    if !sol1.grid.same_as(&sol2.grid) {
        return Err(Error::GridMismatch);
    }
    let n = sol1.b.dim();
    let nodes = sol1.grid.nodes();
    let h = sol1.grid.step();
    let m = nodes.len();
    let t0 = sol1.tube.t0();
    let trans_at = |k: usize| -> Result<Matrix> {
        Ok(sol1.a_path[k].try_inverse()?.matmul(&sol2.a_path[k]))
    };
    let mut worst = 0.0;
    for k in 0..m {
        // Path direction.
        let d_s = if k == 0 {
            trans_at(0)?
                .scale(-3.0)
                .add(&trans_at(1)?.scale(4.0))
                .add(&trans_at(2)?.scale(-1.0))
                .scale(1.0 / (2.0 * h))
        } else if k == m - 1 {
            trans_at(m - 1)?
                .scale(3.0)
                .add(&trans_at(m - 2)?.scale(-4.0))
                .add(&trans_at(m - 3)?.scale(1.0))
                .scale(1.0 / (2.0 * h))
        } else {
            trans_at(k + 1)?.sub(&trans_at(k - 1)?).scale(1.0 / (2.0 * h))
        };
        let mut local = d_s.inf_norm();
        // Transverse directions.
        for dir in 1..n {
            let delta = sol1.transverse_step;
            let mut tp = t0.to_vec();
            tp[dir - 1] += delta;
            let mut tm = t0.to_vec();
            tm[dir - 1] -= delta;
            let lp = sol1
                .frame_at(nodes[k], &tp)?
                .try_inverse()?
                .matmul(&sol2.frame_at(nodes[k], &tp)?);
            let lm = sol1
                .frame_at(nodes[k], &tm)?
                .try_inverse()?
                .matmul(&sol2.frame_at(nodes[k], &tm)?);
            let d = lp.sub(&lm).scale(1.0 / (2.0 * delta)).inf_norm();
            if d > local {
                local = d;
            }
        }
        if local > worst {
            worst = local;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid01() -> ParamGrid {
        ParamGrid::uniform(0.0, 1.0, 400).unwrap()
    }

    #[test]
    fn zero_coefficients_keep_the_start_matrix() {
        let b = Matrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let w: MatrixFn = Arc::new(|_| Matrix::zeros(2));
        let sol = special_frame_along_path(w, 0.0, &b, &grid01(), 1e-8).unwrap();
        for a in sol.a_grid() {
            assert_eq!(a.max_abs_diff(&b), 0.0);
        }
        // Residual is pure stencil roundoff on a constant grid.
        assert!(sol.residual_max() < 1e-12);
    }

    #[test]
    fn singular_b_is_rejected() {
        let b = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let w: MatrixFn = Arc::new(|_| Matrix::zeros(2));
        assert!(special_frame_along_path(w, 0.0, &b, &grid01(), 1e-8).is_err());
    }

    #[test]
    fn build_is_linear_in_b() {
        let w: MatrixFn =
            Arc::new(|s| Matrix::from_rows(&[vec![0.0, -s], vec![s, 0.1]]).unwrap());
        let b2 = Matrix::from_rows(&[vec![1.5, 0.25], vec![-0.5, 2.0]]).unwrap();
        let with_identity =
            special_frame_along_path(w.clone(), 0.0, &Matrix::identity(2), &grid01(), 1e-8)
                .unwrap();
        let with_b2 = special_frame_along_path(w, 0.0, &b2, &grid01(), 1e-8).unwrap();
        for k in 0..with_identity.a_grid().len() {
            let composed = with_identity.a_at_index(k).matmul(&b2);
            assert_eq!(composed.max_abs_diff(with_b2.a_at_index(k)), 0.0);
        }
    }

    #[test]
    fn transition_between_scaled_starts_is_constant() {
        let w: MatrixFn =
            Arc::new(|s| Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.2 * s]]).unwrap());
        let b1 = Matrix::identity(2);
        let b2 = Matrix::identity(2).scale(2.0);
        let s1 = special_frame_along_path(w.clone(), 0.0, &b1, &grid01(), 1e-8).unwrap();
        let s2 = special_frame_along_path(w, 0.0, &b2, &grid01(), 1e-8).unwrap();
        let drift = verify_transition_constancy(&s1, &s2).unwrap();
        assert!(drift < 1e-10, "drift {drift}");
    }

    #[test]
    fn mismatched_coefficients_show_up_in_transition() {
        let w1: MatrixFn = Arc::new(|_| Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap());
        let w2: MatrixFn = Arc::new(|_| Matrix::from_rows(&[vec![0.0, -0.5], vec![0.5, 0.0]]).unwrap());
        let s1 = special_frame_along_path(w1, 0.0, &Matrix::identity(2), &grid01(), 1e-8).unwrap();
        let s2 = special_frame_along_path(w2, 0.0, &Matrix::identity(2), &grid01(), 1e-8).unwrap();
        let drift = verify_transition_constancy(&s1, &s2).unwrap();
        assert!(drift > 1e-2, "deliberate mismatch must be flagged, drift {drift}");
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let w: MatrixFn = Arc::new(|_| Matrix::zeros(2));
        let s1 = special_frame_along_path(w.clone(), 0.0, &Matrix::identity(2), &grid01(), 1e-8)
            .unwrap();
        let other = ParamGrid::uniform(0.0, 1.0, 500).unwrap();
        let s2 = special_frame_along_path(w, 0.0, &Matrix::identity(2), &other, 1e-8).unwrap();
        assert_eq!(verify_transition_constancy(&s1, &s2).unwrap_err(), Error::GridMismatch);
    }

    #[test]
    fn frame_at_refines_smoothly_between_nodes() {
        let w: MatrixFn =
            Arc::new(|_| Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap());
        let sol =
            special_frame_along_path(w, 0.0, &Matrix::identity(2), &grid01(), 1e-8).unwrap();
        // Constant skew coefficient integrates to a rotation by s.
        let s: f64 = 0.5012345;
        let expect = Matrix::from_rows(&[
            vec![s.cos(), s.sin()],
            vec![-s.sin(), s.cos()],
        ])
        .unwrap();
        assert!(sol.frame_at(s).max_abs_diff(&expect) < 1e-9);
    }

    #[test]
    fn derivative_along_path_flat_constant_vector() {
        let w = |_s: f64| Matrix::zeros(2);
        let v = |_s: f64| vec![0.7, -0.2];
        let out = derivative_along_path(&w, &v, &grid01()).unwrap();
        for row in out {
            assert!(crate::linalg::vec_inf_norm(&row) < 1e-9);
        }
    }

    #[test]
    fn transported_frame_columns_are_parallel() {
        let w: MatrixFn =
            Arc::new(|s| Matrix::from_rows(&[vec![0.1 * s, -1.0], vec![1.0, 0.0]]).unwrap());
        let sol =
            special_frame_along_path(w.clone(), 0.0, &Matrix::identity(2), &grid01(), 1e-8)
                .unwrap();
        let sol_for_v = sol.clone();
        let v = move |s: f64| sol_for_v.frame_at(s).col(0);
        let w_plain = move |s: f64| w(s);
        let rows = derivative_along_path(&w_plain, &v, &grid01()).unwrap();
        let worst = rows
            .iter()
            .map(|r| crate::linalg::vec_inf_norm(r))
            .fold(0.0, f64::max);
        assert!(worst < 1e-8, "transported column defect {worst}");
    }

    #[test]
    fn linearity_fit_recovers_connection_matrices() {
        use crate::derivation::ConnectionField;
        let mut coeffs = crate::linalg::Tensor3::zeros(2);
        coeffs.set(0, 0, 1, 0.3);
        coeffs.set(1, 1, 0, -0.4);
        let conn = ConnectionField::constant(coeffs.clone());
        let chart = ChartDomain::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap();
        let path = PathCurve::new(
            0.0,
            1.0,
            16,
            |s| Point(vec![-1.0 + 2.0 * s, 0.5 * s]),
            |_| vec![2.0, 0.5],
        )
        .unwrap();
        let check = is_linear_along_path(&conn, &chart, &path, 6, 9, 1e-5, 1e-8).unwrap();
        assert!(check.linear);
        for gammas in &check.gamma_on_path {
            for k in 0..2 {
                assert!(gammas[k].max_abs_diff(&coeffs.direction_matrix(k)) < 1e-8);
            }
        }
    }

    #[test]
    fn linearity_fit_rejects_quadratic_rule() {
        use crate::derivation::SDerivationField;
        let sigma = Matrix::from_rows(&[vec![0.3, 0.0], vec![0.0, 0.1]]).unwrap();
        let quad = SDerivationField::new(2, false, move |x_field, p| {
            let c = x_field.components_raw(p)[0];
            sigma.scale(c * c)
        });
        let chart = ChartDomain::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap();
        let path =
            PathCurve::new(0.0, 1.0, 8, |s| Point(vec![s, 0.0]), |_| vec![1.0, 0.0]).unwrap();
        let check = is_linear_along_path(&quad, &chart, &path, 6, 9, 1e-5, 1e-6).unwrap();
        assert!(!check.linear);
        assert!(check.max_residual > 1e-2);
    }

    #[test]
    fn norm_rule_residual_matches_hand_value() {
        use crate::derivation::SDerivationField;
        // S_X = |X| sigma probed with the fixed field (1, 1): the unit
        // fields fit G_1 = G_2 = sigma, so the prediction is 2 sigma while
        // the actual value is sqrt(2) sigma. Residual: (2 - sqrt 2)|sigma|.
        let sigma = Matrix::from_rows(&[vec![0.3, 0.0], vec![0.0, 0.1]]).unwrap();
        let sig = sigma.clone();
        let norm_rule = SDerivationField::new(2, false, move |x_field, p| {
            let c = x_field.components_raw(p);
            sig.scale((c[0] * c[0] + c[1] * c[1]).sqrt())
        });
        let chart = ChartDomain::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap();
        let at = Point(vec![0.0, 0.0]);
        let frame = FrameField::coordinate(2);
        let g1 = norm_rule
            .components(&VectorField::coordinate_unit(2, 0), &frame, &chart, &at, 1e-5)
            .unwrap();
        let g2 = norm_rule
            .components(&VectorField::coordinate_unit(2, 1), &frame, &chart, &at, 1e-5)
            .unwrap();
        let actual = norm_rule
            .components(&VectorField::constant(vec![1.0, 1.0]), &frame, &chart, &at, 1e-5)
            .unwrap();
        let predicted = g1.add(&g2);
        let residual = actual.max_abs_diff(&predicted);
        let expect = (2.0 - 2.0f64.sqrt()) * 0.3;
        assert!((residual - expect).abs() < 1e-12, "residual {residual} vs {expect}");
    }
}
