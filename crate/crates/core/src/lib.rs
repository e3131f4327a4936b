//! Numerical toolkit for the distance function to the boundary of a planar
//! (or, locally, three-dimensional) domain under a Finsler metric.
//!
//! The crate is organised bottom-up:
//!
//! * [`metric`] – Finsler metrics `φ(ξ; v)` with analytic derivative jets.
//! * [`boundary`] – boundary curves, adapted graph charts and normals.
//! * [`normal`] – the Finsler-normal initial velocity `V(y)` and its sensitivity.
//! * [`geodesic`] – arclength geodesics of `ψ = φ²`, forward and backward shooting.
//! * [`jacobi`] – boundary Jacobi fields, the boundary-exponential Jacobian and
//!   conjugate distances.
//! * [`second_variation`] – the second variation of boundary-to-point length.
//! * [`field`] – foot-point inversion, distance fields, singular-set
//!   classification and regularity checks.
//! * [`oracle`] – an independent wide-stencil Dijkstra distance oracle.

pub mod boundary;
pub mod error;
pub mod field;
pub mod geodesic;
pub mod jacobi;
pub mod linalg;
pub mod metric;
pub mod normal;
pub mod oracle;
pub mod poly;
pub mod regularity;
pub mod second_variation;

pub use error::{Error, Result};

/// Point or vector in `R^N`.
pub type Vector<const N: usize> = nalgebra::SVector<f64, N>;
/// Square `N × N` matrix.
pub type Matrix<const N: usize> = nalgebra::SMatrix<f64, N, N>;

/// Formats with 12 significant digits so that output is byte-identical across
/// runs; magnitudes outside `[1e-4, 1e15)` use exponent notation.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    // round to 12 significant digits, then print the shortest representation
    let rounded: f64 = format!("{x:.11e}").parse().expect("valid float");
    if (1e-4..1e15).contains(&rounded.abs()) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}
