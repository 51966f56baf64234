//! A single rectangular coordinate chart and points inside it.
//!
//! All fields in this crate live on one chart; evaluations outside the box
//! are errors rather than extrapolations, so finite-difference contracts
//! stay honest. Multi-chart atlases are out of scope.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::fabs;

/// Dimension `n` plus the coordinate box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ChartDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::invalid("chart bounds must be non-empty and equal length"));
        }
        for i in 0..lower.len() {
            if !(lower[i] < upper[i]) || !lower[i].is_finite() || !upper[i].is_finite() {
                return Err(Error::invalid("chart requires finite lower[i] < upper[i]"));
            }
        }
        Ok(ChartDomain { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && (0..x.len()).all(|i| x[i].is_finite() && self.lower[i] <= x[i] && x[i] <= self.upper[i])
    }

    pub fn check_contains(&self, x: &[f64]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutsideChart)
        }
    }

    /// True when the closed `linf` ball of radius `h` around `x` stays inside.
    pub fn contains_ball(&self, x: &[f64], h: f64) -> bool {
        x.len() == self.dim()
            && (0..x.len()).all(|i| {
                x[i].is_finite() && self.lower[i] <= x[i] - h && x[i] + h <= self.upper[i]
            })
    }

    /// Uniform point inside the box.
    pub fn sample_point(&self, rng: &mut crate::rng::SplitMix64) -> Point {
        Point(
            (0..self.dim())
                .map(|i| rng.next_range(self.lower[i], self.upper[i]))
                .collect(),
        )
    }
}

/// Coordinate vector of a chart point.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Point shifted by `step` along coordinate axis `k`.
    pub fn shifted(&self, k: usize, step: f64) -> Point {
        let mut c = self.0.clone();
        c[k] += step;
        Point(c)
    }

    /// Point shifted by `step * dir`.
    pub fn offset(&self, dir: &[f64], step: f64) -> Point {
        debug_assert_eq!(dir.len(), self.0.len());
        Point((0..self.0.len()).map(|i| self.0[i] + step * dir[i]).collect())
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0;
        for &v in &self.0 {
            let a = fabs(v);
            if a > m {
                m = a;
            }
        }
        m
    }
}

impl core::ops::Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_bad_bounds() {
        assert!(ChartDomain::new(vec![0.0], vec![0.0]).is_err());
        assert!(ChartDomain::new(vec![], vec![]).is_err());
        assert!(ChartDomain::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn containment_and_balls() {
        let chart = ChartDomain::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert!(chart.contains(&[0.0, 1.0]));
        assert!(!chart.contains(&[0.0, 2.5]));
        assert!(chart.contains_ball(&[0.0, 1.0], 0.5));
        assert!(!chart.contains_ball(&[0.9, 1.0], 0.5));
        assert!(chart.check_contains(&[5.0, 0.0]).is_err());
    }
}
