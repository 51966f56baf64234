//! Central finite differences over the chart and the commutation
//! coefficients they produce.
//!
//! All differentiation in this crate is numerical. Steps that would leave
//! the chart box raise [`Error::OutsideChart`] instead of extrapolating.

use alloc::vec::Vec;

use crate::chart::{ChartDomain, Point};
use crate::error::{Error, Result};
use crate::frame::FrameField;
use crate::linalg::{Matrix, Tensor3};

/// Values a central difference can combine: `(plus - minus) / (2h)`.
pub trait FdValue: Clone {
    fn central(plus: &Self, minus: &Self, inv_two_h: f64) -> Self;
}

impl FdValue for f64 {
    fn central(plus: &Self, minus: &Self, inv_two_h: f64) -> Self {
        (plus - minus) * inv_two_h
    }
}

impl FdValue for Vec<f64> {
    fn central(plus: &Self, minus: &Self, inv_two_h: f64) -> Self {
        (0..plus.len()).map(|i| (plus[i] - minus[i]) * inv_two_h).collect()
    }
}

impl FdValue for Matrix {
    fn central(plus: &Self, minus: &Self, inv_two_h: f64) -> Self {
        plus.sub(minus).scale(inv_two_h)
    }
}

/// Central-difference partials of `f` along every coordinate axis:
/// `E_k(f) = (f(x + h e_k) - f(x - h e_k)) / (2h)`, error `O(h^2)`.
pub fn finite_difference_jacobian<T: FdValue>(
    f: &dyn Fn(&Point) -> Result<T>,
    chart: &ChartDomain,
    x: &Point,
    h: f64,
) -> Result<Vec<T>> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    if !chart.contains_ball(x, h) {
        return Err(Error::OutsideChart);
    }
    let inv_two_h = 1.0 / (2.0 * h);
    let mut out = Vec::with_capacity(chart.dim());
    for k in 0..chart.dim() {
        let plus = f(&x.shifted(k, h))?;
        let minus = f(&x.shifted(k, -h))?;
        out.push(T::central(&plus, &minus, inv_two_h));
    }
    Ok(out)
}

/// Central derivative of `f` along an arbitrary direction vector.
pub fn directional_derivative<T: FdValue>(
    f: &dyn Fn(&Point) -> Result<T>,
    chart: &ChartDomain,
    x: &Point,
    dir: &[f64],
    h: f64,
) -> Result<T> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let plus = x.offset(dir, h);
    let minus = x.offset(dir, -h);
    chart.check_contains(&plus)?;
    chart.check_contains(&minus)?;
    Ok(T::central(&f(&plus)?, &f(&minus)?, 1.0 / (2.0 * h)))
}

/// Commutation coefficients `C^i_{jk}` of a frame, `[E_j, E_k] = C^i_{jk} E_i`.
///
/// The bracket is evaluated in chart components,
/// `[E_j, E_k]^i = A^m_j d_m A^i_k - A^m_k d_m A^i_j`,
/// with the partials from [`finite_difference_jacobian`], then contracted
/// with the inverse frame matrix. Antisymmetry in `(j, k)` is exact because
/// every term flips sign bitwise under the swap.
pub fn commutation_coefficients(
    frame: &FrameField,
    chart: &ChartDomain,
    x: &Point,
    h: f64,
) -> Result<Tensor3> {
    let n = frame.dim();
    let a = frame.matrix_at(x)?;
    if frame.is_coordinate() {
        // Coordinate frames commute; skip the differentiation.
        return Ok(Tensor3::zeros(n));
    }
    let partials = finite_difference_jacobian(&|p| Ok(frame.matrix_raw(p)), chart, x, h)?;
    let a_inv = a.try_inverse()?;
    let mut c = Tensor3::zeros(n);
    for j in 0..n {
        for k in 0..n {
            if j == k {
                continue;
            }
            // Chart components of [E_j, E_k] at x.
            let mut bracket = Vec::with_capacity(n);
            for i in 0..n {
                let mut s = 0.0;
                for m in 0..n {
                    s += a.get(m, j) * partials[m].get(i, k) - a.get(m, k) * partials[m].get(i, j);
                }
                bracket.push(s);
            }
            let in_frame = a_inv.mul_vec(&bracket);
            for i in 0..n {
                c.set(i, j, k, in_frame[i]);
            }
        }
    }
    if !c.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use alloc::vec;

    fn chart2() -> ChartDomain {
        ChartDomain::new(vec![-2.0, -2.0], vec![3.0, 3.0]).unwrap()
    }

    #[test]
    fn constant_function_has_zero_partials() {
        let c = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let parts = finite_difference_jacobian(
            &|_: &Point| Ok(c.clone()),
            &chart2(),
            &Point(vec![0.3, 0.7]),
            1e-5,
        )
        .unwrap();
        for p in parts {
            assert_eq!(p.max_abs(), 0.0);
        }
    }

    #[test]
    fn linear_function_is_exact() {
        // f(x) = x^1 * I: central differences are exact for linear maps.
        let f = |p: &Point| Ok(Matrix::identity(2).scale(p[0]));
        let parts =
            finite_difference_jacobian(&f, &chart2(), &Point(vec![0.3, 0.7]), 1e-5).unwrap();
        assert!(parts[0].max_abs_diff(&Matrix::identity(2)) < 1e-9);
        assert!(parts[1].max_abs() < 1e-9);
    }

    #[test]
    fn quadratic_matches_hand_derivative() {
        // f(x) = (x^1)^2 * I at x^1 = 0.5; hand oracle: d_1 f = 2 x^1 = 1.
        let f = |p: &Point| Ok(Matrix::identity(2).scale(p[0] * p[0]));
        let h = 1e-5;
        let parts = finite_difference_jacobian(&f, &chart2(), &Point(vec![0.5, 0.0]), h).unwrap();
        let err = parts[0].max_abs_diff(&Matrix::identity(2));
        assert!(err <= 10.0 * h * h, "error {err} not O(h^2)");
    }

    #[test]
    fn halving_step_improves_by_order_two() {
        // f(x) = sin(x^1), hand derivative cos(x^1).
        let f = |p: &Point| Ok(p[0].sin());
        let x = Point(vec![0.4, 0.0]);
        let exact = 0.4f64.cos();
        let err_at = |h: f64| {
            let parts = finite_difference_jacobian(&f, &chart2(), &x, h).unwrap();
            (parts[0] - exact).abs()
        };
        let e1 = err_at(1e-3);
        let e2 = err_at(5e-4);
        assert!(e1 / e2 >= 3.5, "convergence factor {}", e1 / e2);
    }

    #[test]
    fn step_leaving_chart_is_rejected() {
        let f = |_: &Point| Ok(0.0f64);
        let err = finite_difference_jacobian(&f, &chart2(), &Point(vec![2.9999999, 0.0]), 1e-5);
        assert_eq!(err.unwrap_err(), Error::OutsideChart);
        let err = finite_difference_jacobian(&f, &chart2(), &Point(vec![0.0, 0.0]), -1.0);
        assert!(matches!(err.unwrap_err(), Error::InvalidArgument(_)));
    }

    #[test]
    fn coordinate_frame_commutes_at_random_points() {
        let frame = FrameField::coordinate(2);
        let chart = chart2();
        let mut rng = SplitMix64::new(42);
        for _ in 0..100 {
            let x = chart.sample_point(&mut rng);
            let c = commutation_coefficients(&frame, &chart, &x, 1e-5).unwrap();
            assert!(c.max_abs() < 1e-12);
        }
    }

    #[test]
    fn commutation_antisymmetry_is_exact() {
        let frame = FrameField::new(2, |p| {
            Matrix::from_rows(&[vec![1.0, p[1] * 0.3], vec![0.2 * p[0], 1.0 + 0.1 * p[0]]])
                .unwrap()
        });
        let chart = chart2();
        let mut rng = SplitMix64::new(7);
        for _ in 0..20 {
            let x = Point(vec![rng.next_range(-1.0, 1.0), rng.next_range(-1.0, 1.0)]);
            let c = commutation_coefficients(&frame, &chart, &x, 1e-5).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        assert_eq!(c.get(i, j, k) + c.get(i, k, j), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn anholonomic_frame_matches_direct_bracket_oracle() {
        // E_1 = d_1, E_2 = x^1 d_2 at x = (2, 0): [E_1, E_2] = d_2, so
        // C^2_{12} = 1 / x^1 = 0.5.
        let frame = FrameField::new(2, |p| {
            Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, p[0]]]).unwrap()
        });
        let chart = chart2();
        let x = Point(vec![2.0, 0.0]);
        let c = commutation_coefficients(&frame, &chart, &x, 1e-5).unwrap();
        assert!((c.get(1, 0, 1) - 0.5).abs() < 1e-9);
        assert!(c.get(0, 0, 1).abs() < 1e-9);

        // Independent oracle: finite differences of the commutator of the
        // two column fields, evaluated in chart components.
        let e1 = |_p: &Point| vec![1.0, 0.0];
        let e2 = |p: &Point| vec![0.0, p[0]];
        let h = 1e-5;
        let mut bracket = vec![0.0; 2];
        for i in 0..2 {
            let mut s = 0.0;
            for m in 0..2 {
                let dp = x.shifted(m, h);
                let dm = x.shifted(m, -h);
                let d_e2 = (e2(&dp)[i] - e2(&dm)[i]) / (2.0 * h);
                let d_e1 = (e1(&dp)[i] - e1(&dm)[i]) / (2.0 * h);
                s += e1(&x)[m] * d_e2 - e2(&x)[m] * d_e1;
            }
            bracket[i] = s;
        }
        // bracket = C^i_{12} E_i in chart components; E_2 = (0, x^1).
        let a = frame.matrix_at(&x).unwrap();
        let in_frame = a.try_inverse().unwrap().mul_vec(&bracket);
        assert!((in_frame[1] - c.get(1, 0, 1)).abs() < 1e-9);
    }
}
