//! End-to-end checks of the transport construction against closed-form
//! oracles. Geometry coefficients here are coded locally and independently
//! of any registry so the tests stand on their own.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use pathframe_core::rng::SplitMix64;
use pathframe_core::{
    special_frame_along_path, verify_transition_constancy, Matrix, MatrixFn, ParamGrid,
};

/// Along-latitude coefficient matrix of the unit sphere at colatitude
/// `theta0`, contracted with the tangent of `gamma(s) = (theta0, s)`.
fn sphere_latitude_w(theta0: f64) -> Matrix {
    Matrix::from_rows(&[
        vec![0.0, -theta0.sin() * theta0.cos()],
        vec![theta0.cos() / theta0.sin(), 0.0],
    ])
    .unwrap()
}

/// Closed-form fundamental solution of `dY/ds = -W Y` for the constant
/// along-latitude `W`, computed by hand before the build:
/// `Y(s) = [[cos(ws), sin(theta0) sin(ws)], [-sin(ws)/sin(theta0), cos(ws)]]`
/// with `w = cos(theta0)`. Differentiating reproduces `-W Y` exactly.
fn sphere_latitude_exact(theta0: f64, s: f64) -> Matrix {
    let w = theta0.cos();
    Matrix::from_rows(&[
        vec![(w * s).cos(), theta0.sin() * (w * s).sin()],
        vec![-(w * s).sin() / theta0.sin(), (w * s).cos()],
    ])
    .unwrap()
}

fn rotation_angle(r: &Matrix) -> f64 {
    (r.get(1, 0) - r.get(0, 1)).atan2(r.get(0, 0) + r.get(1, 1))
}

/// Net deficit after a closed loop: `2 pi` minus the magnitude of the
/// unwrapped rotation of the orthonormalized transported vector.
fn holonomy_deficit(ortho: &Matrix, a_grid: &[Matrix], b: &Matrix) -> f64 {
    let o_inv = ortho.try_inverse().unwrap();
    let b_inv = b.try_inverse().unwrap();
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    for a in a_grid {
        let r = ortho.matmul(&a.matmul(&b_inv)).matmul(&o_inv);
        let mut beta = rotation_angle(&r);
        if let Some(p) = prev {
            while beta - p > PI {
                beta -= TAU;
            }
            while beta - p < -PI {
                beta += TAU;
            }
            total += beta - p;
        }
        prev = Some(beta);
    }
    TAU - total.abs()
}

#[test]
fn sphere_latitude_matches_closed_form_exponential() {
    let theta0 = PI / 3.0;
    let w_mat = sphere_latitude_w(theta0);
    let w: MatrixFn = Arc::new(move |_| w_mat.clone());
    let grid = ParamGrid::with_density(0.0, TAU, 2000).unwrap();
    let sol = special_frame_along_path(w, 0.0, &Matrix::identity(2), &grid, 1e-8).unwrap();
    let mut worst = 0.0f64;
    for (k, &s) in grid.nodes().iter().enumerate() {
        let err = sol.a_at_index(k).max_abs_diff(&sphere_latitude_exact(theta0, s));
        worst = worst.max(err);
    }
    assert!(worst < 1e-8, "closed-form mismatch {worst}");
    // Full loop at theta0 = pi/3: the frozen oracle value is -I.
    let full = sol.a_at_index(grid.len() - 1);
    assert!(full.max_abs_diff(&Matrix::identity(2).scale(-1.0)) < 1e-8);
}

#[test]
fn sphere_latitude_holonomy_deficit_is_pi() {
    let theta0 = PI / 3.0;
    let w_mat = sphere_latitude_w(theta0);
    let w: MatrixFn = Arc::new(move |_| w_mat.clone());
    let grid = ParamGrid::with_density(0.0, TAU, 2000).unwrap();
    let b = Matrix::identity(2);
    let sol = special_frame_along_path(w, 0.0, &b, &grid, 1e-8).unwrap();
    let ortho = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, theta0.sin()]]).unwrap();
    let deficit = holonomy_deficit(&ortho, sol.a_grid(), &b);
    let expected = TAU * (1.0 - theta0.cos()); // = pi at pi/3
    assert!(
        (deficit - expected).abs() < 1e-6,
        "deficit {deficit} vs expected {expected}"
    );
}

#[test]
fn polar_circle_transport_is_trivial_in_cartesian_components() {
    // Flat plane in polar coordinates, circle r = 1 traversed once.
    // W = G_phi at r = 1; the oracle converts the transported vector to
    // Cartesian components, where it must stay constant.
    let w: MatrixFn = Arc::new(|_| {
        Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap()
    });
    let grid = ParamGrid::with_density(0.0, TAU, 2000).unwrap();
    let sol =
        special_frame_along_path(w, 0.0, &Matrix::identity(2), &grid, 1e-8).unwrap();
    assert!(
        sol.a_at_index(grid.len() - 1).max_abs_diff(&Matrix::identity(2)) < 1e-7,
        "flat holonomy must be trivial"
    );
    let v0 = [0.8, 0.6];
    let cart = |s: f64, v: &[f64]| -> [f64; 2] {
        // x = r cos phi, y = r sin phi at r = 1.
        [
            s.cos() * v[0] - s.sin() * v[1],
            s.sin() * v[0] + s.cos() * v[1],
        ]
    };
    let reference = cart(0.0, &v0);
    let mut worst = 0.0f64;
    for (k, &s) in grid.nodes().iter().enumerate() {
        let v = sol.a_at_index(k).mul_vec(&v0);
        let c = cart(s, &v);
        worst = worst.max((c[0] - reference[0]).abs().max((c[1] - reference[1]).abs()));
    }
    assert!(worst < 1e-7, "cartesian drift {worst}");
    // And the deficit is zero for the flat plane.
    let deficit = holonomy_deficit(&Matrix::identity(2), sol.a_grid(), &Matrix::identity(2));
    assert!(deficit.abs() < 1e-7, "flat deficit {deficit}");
}

#[test]
fn transition_constancy_for_random_start_matrices() {
    let theta0 = PI / 3.0;
    let w_mat = sphere_latitude_w(theta0);
    let grid = ParamGrid::with_density(0.0, TAU, 2000).unwrap();
    let mut rng = SplitMix64::new(2024);
    let mut random_b = |rng: &mut SplitMix64| loop {
        let cand = Matrix::from_fn(2, |_, _| rng.next_range(-1.0, 1.0))
            .add(&Matrix::identity(2).scale(1.5));
        if cand.det().abs() > 0.3 {
            return cand;
        }
    };
    for _ in 0..10 {
        let w1: MatrixFn = Arc::new({
            let m = w_mat.clone();
            move |_| m.clone()
        });
        let w2 = w1.clone();
        let b1 = random_b(&mut rng);
        let b2 = random_b(&mut rng);
        let s1 = special_frame_along_path(w1, 0.0, &b1, &grid, 1e-8).unwrap();
        let s2 = special_frame_along_path(w2, 0.0, &b2, &grid, 1e-8).unwrap();
        let drift = verify_transition_constancy(&s1, &s2).unwrap();
        assert!(drift < 1e-7, "transition drift {drift}");
    }
}

#[test]
fn transition_drift_bound_tightens_with_resolution() {
    // At a coarse step the drift is truncation-dominated; refining the
    // grid must tighten it.
    let w_fn = |s: f64| {
        Matrix::from_rows(&[vec![0.1 * (s).sin(), -1.0], vec![1.0, 0.2 * s.cos()]]).unwrap()
    };
    let b2 = Matrix::from_rows(&[vec![1.0, 0.7], vec![-0.3, 2.0]]).unwrap();
    let drift_at = |steps: usize| {
        let grid = ParamGrid::uniform(0.0, TAU, steps).unwrap();
        let w1: MatrixFn = Arc::new(w_fn);
        let w2: MatrixFn = Arc::new(w_fn);
        let s1 =
            special_frame_along_path(w1, 0.0, &Matrix::identity(2), &grid, 1e-4).unwrap();
        let s2 = special_frame_along_path(w2, 0.0, &b2, &grid, 1e-4).unwrap();
        verify_transition_constancy(&s1, &s2).unwrap()
    };
    let coarse = drift_at(120);
    let fine = drift_at(12000);
    assert!(fine < 1e-7, "fine drift {fine}");
    assert!(coarse > fine, "coarse {coarse} should exceed fine {fine}");
}
