//! Numerical machinery for frames along paths in a single coordinate chart.
//!
//! The crate builds frames in which the components of a derivation of the
//! tensor algebra (in particular a linear connection) vanish along a given
//! path, and provides the verification operations that go with them:
//! commutation coefficients, torsion, fundamental matrix solutions,
//! transition-constancy checks, and local coordinate extensions.
//!
//! Everything works over one rectangular chart with dense `f64` matrices;
//! the crate is `no_std` (alloc only) so the algorithms can be embedded
//! anywhere. IO, built-in geometries, and the scenario runner live in the
//! companion `pathframe-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod chart;
pub mod derivation;
pub mod diff;
pub mod error;
pub mod extension;
pub mod frame;
pub mod ivp;
pub mod linalg;
pub mod path;
pub mod rng;
pub mod special;

pub use chart::{ChartDomain, Point};
pub use derivation::{
    connection_components, connection_in_frame, derivation_components, torsion_of_derivation,
    torsion_tensor, transform_components, ConnectionField, Derivation, SDerivationField,
    TorsionComponents,
};
pub use diff::{commutation_coefficients, directional_derivative, finite_difference_jacobian};
pub use error::{Error, Result};
pub use extension::{
    chart_to_adapted, extend_to_coordinates, holonomicity_on_path, torsion_free_on_path,
    CoordinateExtension, Holonomicity, HolonomicityReport,
};
pub use frame::{FrameField, VectorField};
pub use ivp::{solve_matrix_ivp, FundamentalSolution, MatrixTable, ParamGrid};
pub use linalg::{Matrix, Tensor3};
pub use path::{PathCurve, TubeMap};
pub use special::{
    derivative_along_path, is_linear_along_path, special_frame_all_fields,
    special_frame_along_path, verify_transition_constancy, verify_tube_transition,
    AllFieldsOptions, LinearityCheck, MatrixFn, TransportSolution, TubeFrameSolution,
};

/// Default numerical parameters shared by the operations in this crate.
pub mod defaults {
    /// Finite-difference step for a point with coordinates of order one.
    /// Scale with [`step_for`] in general.
    pub const FD_STEP: f64 = 1e-5;
    /// Integrator resolution: grid steps per unit of path parameter.
    pub const STEPS_PER_UNIT: usize = 2000;
    /// Max `inf`-norm of the transformed components on the path after a
    /// transport build.
    pub const FRAME_RESIDUAL_TOL: f64 = 1e-8;
    /// Max parameter derivative of the transition matrix between two builds.
    pub const TRANSITION_TOL: f64 = 1e-7;
    /// Max residual of the vanishing-components condition for the tube frame.
    pub const TUBE_RESIDUAL_TOL: f64 = 5e-6;
    /// Transverse finite-difference step on tube frames.
    pub const TRANSVERSE_STEP: f64 = 1e-4;
    /// Commutator norm below which a frame counts as holonomic on the path.
    pub const HOLONOMIC_TOL: f64 = 1e-5;
    /// Torsion norm below which a connection counts as torsion free on the path.
    pub const TORSION_TOL: f64 = 1e-9;
    /// Cross-validation residual bound for the linearity fit.
    pub const LINEARITY_TOL: f64 = 1e-6;
    /// Tube half-width as a fraction of the path chord length.
    pub const TUBE_RADIUS_FRACTION: f64 = 0.05;
    /// Determinants below this count as degenerate.
    pub const MIN_DET: f64 = 1e-12;

    /// Finite-difference step scaled to the magnitude of `x`.
    pub fn step_for(x: &[f64]) -> f64 {
        let mut m = 1.0;
        for &v in x {
            let a = crate::linalg::fabs(v);
            if a > m {
                m = a;
            }
        }
        FD_STEP * m
    }
}
