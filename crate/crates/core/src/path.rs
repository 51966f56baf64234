//! Parameterized paths and tube maps around them.
//!
//! A [`TubeMap`] realizes adapted coordinates `(s, t)` in a neighborhood of
//! an injective path: `eta(s, t) = gamma(s) + sum_k (t_k - t0_k) * v_k` with
//! a constant transverse basis `v_k` spanning the orthogonal complement of
//! the initial tangent. The path is the first coordinate line, which is what
//! the tube-frame construction and the coordinate extension need.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::chart::{ChartDomain, Point};
use crate::error::{Error, Result};
use crate::ivp::ParamGrid;
use crate::linalg::{dot, fabs, vec_inf_norm, Matrix};

type PointFn = Arc<dyn Fn(f64) -> Point + Send + Sync>;
type TangentFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// A `C^1` path `s -> gamma(s)` with its tangent and a sampling grid size.
#[derive(Clone)]
pub struct PathCurve {
    s_start: f64,
    s_end: f64,
    grid_size: usize,
    gamma: PointFn,
    gamma_dot: TangentFn,
}

impl PathCurve {
    pub fn new(
        s_start: f64,
        s_end: f64,
        grid_size: usize,
        gamma: impl Fn(f64) -> Point + Send + Sync + 'static,
        gamma_dot: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(s_start < s_end) || !s_start.is_finite() || !s_end.is_finite() {
            return Err(Error::invalid("path requires finite s_start < s_end"));
        }
        if grid_size == 0 {
            return Err(Error::invalid("path grid_size must be positive"));
        }
        Ok(PathCurve {
            s_start,
            s_end,
            grid_size,
            gamma: Arc::new(gamma),
            gamma_dot: Arc::new(gamma_dot),
        })
    }

    pub fn s_start(&self) -> f64 {
        self.s_start
    }

    pub fn s_end(&self) -> f64 {
        self.s_end
    }

    pub fn span(&self) -> f64 {
        self.s_end - self.s_start
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn point_at(&self, s: f64) -> Point {
        (self.gamma)(s)
    }

    pub fn tangent_at(&self, s: f64) -> Vec<f64> {
        (self.gamma_dot)(s)
    }

    /// Second parameter derivative by central differences of the tangent.
    pub fn second_derivative_at(&self, s: f64, h: f64) -> Vec<f64> {
        let p = (self.gamma_dot)(s + h);
        let m = (self.gamma_dot)(s - h);
        (0..p.len()).map(|i| (p[i] - m[i]) / (2.0 * h)).collect()
    }

    /// Uniform sampling grid with `grid_size` steps.
    pub fn grid(&self) -> ParamGrid {
        ParamGrid::uniform(self.s_start, self.s_end, self.grid_size)
            .expect("path bounds already validated")
    }

    /// Same path with a different sampling resolution.
    pub fn with_grid_size(&self, grid_size: usize) -> Result<Self> {
        if grid_size == 0 {
            return Err(Error::invalid("path grid_size must be positive"));
        }
        let mut p = self.clone();
        p.grid_size = grid_size;
        Ok(p)
    }

    /// Checks that every grid image lies inside the chart.
    pub fn validate_in(&self, chart: &ChartDomain) -> Result<()> {
        for &s in self.grid().nodes() {
            let p = self.point_at(s);
            if p.dim() != chart.dim() {
                return Err(Error::invalid("path dimension does not match chart"));
            }
            chart.check_contains(&p)?;
        }
        Ok(())
    }

    /// Max deviation between `gamma_dot` and the central difference of
    /// `gamma` over the grid; `O(h^2)` for consistent inputs.
    pub fn tangent_consistency(&self, h: f64) -> f64 {
        let mut worst = 0.0;
        for &s in self.grid().nodes() {
            let plus = self.point_at(s + h);
            let minus = self.point_at(s - h);
            let dot_claimed = self.tangent_at(s);
            for i in 0..dot_claimed.len() {
                let fd = (plus[i] - minus[i]) / (2.0 * h);
                let d = fabs(fd - dot_claimed[i]);
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    /// Sampled injectivity: two grid images may come closer than
    /// `collision_tol` only when the arc between them is comparably short
    /// (local closeness). A path that travels far and returns near itself
    /// is flagged. At most ~1k samples are used.
    pub fn check_injective(&self, collision_tol: f64) -> Result<()> {
        let samples = self.grid_size.min(1024);
        let grid = ParamGrid::uniform(self.s_start, self.s_end, samples)
            .expect("path bounds already validated");
        let pts: Vec<Point> = grid.nodes().iter().map(|&s| self.point_at(s)).collect();
        let dist = |a: &Point, b: &Point| {
            let mut m = 0.0;
            for d in 0..a.dim() {
                let delta = fabs(a[d] - b[d]);
                if delta > m {
                    m = delta;
                }
            }
            m
        };
        // Prefix arc lengths (linf chords).
        let mut arc = Vec::with_capacity(pts.len());
        arc.push(0.0);
        for i in 1..pts.len() {
            arc.push(arc[i - 1] + dist(&pts[i - 1], &pts[i]));
        }
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                if dist(&pts[i], &pts[j]) < collision_tol && arc[j] - arc[i] > 4.0 * collision_tol
                {
                    return Err(Error::NonInjective);
                }
            }
        }
        Ok(())
    }

    /// Chord length estimate (linf) between the path endpoints.
    pub fn chord(&self) -> f64 {
        let a = self.point_at(self.s_start);
        let b = self.point_at(self.s_end);
        let diff: Vec<f64> = (0..a.dim()).map(|i| a[i] - b[i]).collect();
        vec_inf_norm(&diff)
    }
}

impl core::fmt::Debug for PathCurve {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("PathCurve")
            .field("s_start", &self.s_start)
            .field("s_end", &self.s_end)
            .field("grid_size", &self.grid_size)
            .finish()
    }
}

/// Adapted-coordinate tube around an injective path.
#[derive(Clone)]
pub struct TubeMap {
    path: PathCurve,
    /// Distinguished transverse value, length `n - 1`.
    t0: Vec<f64>,
    /// Constant transverse basis vectors, each orthogonal to the initial
    /// tangent; together with the tangent they span the chart.
    normals: Vec<Vec<f64>>,
    /// Non-normalized tangent at `s_start`, used for inversion.
    u: Vec<f64>,
    /// Gram inverse of the transverse basis for the least-squares pullback.
    gram_inv: Matrix,
    radius: f64,
}

impl TubeMap {
    /// Builds the tube with a transverse basis completed from the initial
    /// tangent. Fails when the path self-intersects at the `2 * radius`
    /// scale or the tube leaves the chart.
    pub fn around(path: &PathCurve, chart: &ChartDomain, radius: f64) -> Result<Self> {
        let n = chart.dim();
        if n < 2 {
            return Err(Error::invalid("tube maps need chart dimension >= 2"));
        }
        if !(radius > 0.0) {
            return Err(Error::invalid("tube radius must be positive"));
        }
        path.validate_in(chart)?;
        let u = path.tangent_at(path.s_start());
        let uu = dot(&u, &u);
        if !(uu > 0.0) || !uu.is_finite() {
            return Err(Error::invalid("path tangent vanishes at s_start"));
        }
        let mut jmax = 0;
        for (i, &v) in u.iter().enumerate() {
            if fabs(v) > fabs(u[jmax]) {
                jmax = i;
            }
        }
        let mut normals = Vec::with_capacity(n - 1);
        for j in 0..n {
            if j == jmax {
                continue;
            }
            let mut v = vec![0.0; n];
            v[j] = 1.0;
            let c = u[j] / uu;
            for i in 0..n {
                v[i] -= c * u[i];
            }
            normals.push(v);
        }
        let gram = Matrix::from_fn(n - 1, |a, b| dot(&normals[a], &normals[b]));
        let gram_inv = gram.try_inverse()?;
        let tube = TubeMap {
            path: path.clone(),
            t0: vec![0.0; n - 1],
            normals,
            u,
            gram_inv,
            radius,
        };
        // The tube slices live on the level sets of u . x, so the map is
        // injective exactly when the tangent stays aligned with u.
        let probe = ParamGrid::uniform(path.s_start(), path.s_end(), 256)
            .expect("path bounds already validated");
        for &s in probe.nodes() {
            if !(dot(&tube.u, &path.tangent_at(s)) > 0.0) {
                return Err(Error::NonInjective);
            }
        }
        // Self-overlap at the tube scale would break the inversion.
        path.check_injective(2.0 * radius)?;
        tube.validate_in(chart)?;
        Ok(tube)
    }

    pub fn path(&self) -> &PathCurve {
        &self.path
    }

    pub fn t0(&self) -> &[f64] {
        &self.t0
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn transverse_dim(&self) -> usize {
        self.t0.len()
    }

    pub fn dim(&self) -> usize {
        self.t0.len() + 1
    }

    /// The tube image `eta(s, t)`.
    pub fn eta(&self, s: f64, t: &[f64]) -> Point {
        let mut x = self.path.point_at(s).0;
        for (k, v) in self.normals.iter().enumerate() {
            let c = t[k] - self.t0[k];
            if c != 0.0 {
                for i in 0..x.len() {
                    x[i] += c * v[i];
                }
            }
        }
        Point(x)
    }

    /// Columns = chart components of the adapted coordinate fields: the
    /// tangent followed by the constant transverse basis.
    pub fn adapted_frame(&self, s: f64) -> Matrix {
        let n = self.dim();
        let mut m = Matrix::zeros(n);
        m.set_col(0, &self.path.tangent_at(s));
        for (k, v) in self.normals.iter().enumerate() {
            m.set_col(k + 1, v);
        }
        m
    }

    /// Parameter derivative of [`Self::adapted_frame`]; only the tangent
    /// column varies.
    pub fn adapted_frame_s_derivative(&self, s: f64, h: f64) -> Matrix {
        let n = self.dim();
        let mut m = Matrix::zeros(n);
        m.set_col(0, &self.path.second_derivative_at(s, h));
        m
    }

    /// True when `t` is within the tube radius of `t0` componentwise.
    pub fn t_within(&self, t: &[f64], slack: f64) -> bool {
        t.len() == self.t0.len()
            && (0..t.len()).all(|k| fabs(t[k] - self.t0[k]) <= self.radius * (1.0 + slack))
    }

    /// Recovers `(s, t)` from a chart point near the tube. Newton on the
    /// tangent alignment, then an exact transverse pullback.
    pub fn invert(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = self.dim();
        if x.len() != n {
            return Err(Error::invalid("point dimension does not match tube"));
        }
        let target = dot(&self.u, x);
        // Coarse bracket, then Newton.
        let coarse = ParamGrid::uniform(self.path.s_start(), self.path.s_end(), 32)
            .expect("path bounds already validated");
        let mut s = self.path.s_start();
        let mut best = f64::INFINITY;
        for &sk in coarse.nodes() {
            let g = self.path.point_at(sk);
            let miss = fabs(dot(&self.u, &g) - target);
            if miss < best {
                best = miss;
                s = sk;
            }
        }
        let scale = 1.0 + vec_inf_norm(x);
        for _ in 0..64 {
            let g = self.path.point_at(s);
            let f = target - dot(&self.u, &g);
            if fabs(f) <= 1e-14 * scale {
                break;
            }
            let slope = dot(&self.u, &self.path.tangent_at(s));
            if !(slope > 0.0) {
                return Err(Error::NonInjective);
            }
            s += f / slope;
        }
        let g = self.path.point_at(s);
        if fabs(target - dot(&self.u, &g)) > 1e-10 * scale {
            return Err(Error::NonInjective);
        }
        // Small parameter overshoot is allowed so finite differences work
        // at the path endpoints.
        let slack = 0.05 * self.path.span();
        if s < self.path.s_start() - slack || s > self.path.s_end() + slack {
            return Err(Error::OutsideChart);
        }
        let resid: Vec<f64> = (0..n).map(|i| x[i] - g[i]).collect();
        let rhs: Vec<f64> = self.normals.iter().map(|v| dot(v, &resid)).collect();
        let coeffs = self.gram_inv.mul_vec(&rhs);
        let t: Vec<f64> = (0..n - 1).map(|k| self.t0[k] + coeffs[k]).collect();
        // The transverse basis spans the orthogonal complement of `u`
        // exactly, so the reconstruction must land back on `x`.
        let back = self.eta(s, &t);
        for i in 0..n {
            if fabs(back[i] - x[i]) > 1e-9 * scale {
                return Err(Error::NonInjective);
            }
        }
        Ok((s, t))
    }

    /// Checks that sampled tube corners stay inside the chart.
    fn validate_in(&self, chart: &ChartDomain) -> Result<()> {
        let grid = ParamGrid::uniform(self.path.s_start(), self.path.s_end(), 64)
            .expect("path bounds already validated");
        for &s in grid.nodes() {
            for k in 0..self.transverse_dim() {
                for sign in [-1.0, 1.0] {
                    let mut t = self.t0.clone();
                    t[k] += sign * self.radius;
                    chart.check_contains(&self.eta(s, &t))?;
                }
            }
        }
        Ok(())
    }
}

impl core::fmt::Debug for TubeMap {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("TubeMap")
            .field("path", &self.path)
            .field("t0", &self.t0)
            .field("radius", &self.radius)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn unit_chart() -> ChartDomain {
        ChartDomain::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap()
    }

    fn line_path() -> PathCurve {
        PathCurve::new(
            0.0,
            1.0,
            64,
            |s| Point(vec![-1.0 + 2.0 * s, -1.0 + 2.0 * s]),
            |_| vec![2.0, 2.0],
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_parameter_bounds() {
        assert!(PathCurve::new(1.0, 0.0, 8, |_| Point(vec![0.0]), |_| vec![0.0]).is_err());
        assert!(PathCurve::new(0.0, 1.0, 0, |_| Point(vec![0.0]), |_| vec![0.0]).is_err());
    }

    #[test]
    fn tangent_consistency_flags_wrong_tangent() {
        let good = line_path();
        assert!(good.tangent_consistency(1e-5) < 1e-10);
        let bad = PathCurve::new(
            0.0,
            1.0,
            16,
            |s| Point(vec![s, s * s]),
            |_| vec![1.0, 0.0],
        )
        .unwrap();
        assert!(bad.tangent_consistency(1e-5) > 0.1);
    }

    #[test]
    fn figure_eight_fails_injectivity() {
        let fig8 = PathCurve::new(
            0.0,
            core::f64::consts::TAU,
            256,
            |s| Point(vec![libm_sin(s), libm_sin(2.0 * s)]),
            |s| vec![libm_cos(s), 2.0 * libm_cos(2.0 * s)],
        )
        .unwrap();
        assert_eq!(fig8.check_injective(1e-3).unwrap_err(), Error::NonInjective);
    }

    // Tests run with std, but keep call sites uniform.
    fn libm_sin(x: f64) -> f64 {
        x.sin()
    }
    fn libm_cos(x: f64) -> f64 {
        x.cos()
    }

    #[test]
    fn tube_round_trip() {
        let path = line_path();
        let tube = TubeMap::around(&path, &unit_chart(), 0.1).unwrap();
        let t = vec![0.07];
        let x = tube.eta(0.3, &t);
        let (s_rec, t_rec) = tube.invert(&x).unwrap();
        assert!(fabs(s_rec - 0.3) < 1e-12);
        assert!(fabs(t_rec[0] - 0.07) < 1e-12);
        // On-path points recover t0.
        let (s_rec, t_rec) = tube.invert(&path.point_at(0.9)).unwrap();
        assert!(fabs(s_rec - 0.9) < 1e-12);
        assert!(fabs(t_rec[0]) < 1e-12);
    }

    #[test]
    fn tube_adapted_frame_is_tangent_plus_normals() {
        let path = line_path();
        let tube = TubeMap::around(&path, &unit_chart(), 0.1).unwrap();
        let m = tube.adapted_frame(0.5);
        assert_eq!(m.col(0), vec![2.0, 2.0]);
        // The transverse vector is orthogonal to the tangent.
        assert!(fabs(dot(&m.col(1), &[2.0, 2.0])) < 1e-14);
        assert!(fabs(m.det()) > 0.1);
    }

    #[test]
    fn tube_rejects_overlapping_radius() {
        // Two nearly parallel passes 0.05 apart: a fat tube must be refused.
        let path = PathCurve::new(
            0.0,
            2.0,
            256,
            |s| {
                if s <= 1.0 {
                    Point(vec![-1.0 + 2.0 * s, 0.0])
                } else {
                    Point(vec![1.0 - 2.0 * (s - 1.0), 0.05])
                }
            },
            |s| {
                if s <= 1.0 {
                    vec![2.0, 0.0]
                } else {
                    vec![-2.0, 0.0]
                }
            },
        )
        .unwrap();
        assert!(TubeMap::around(&path, &unit_chart(), 0.1).is_err());
    }
}
