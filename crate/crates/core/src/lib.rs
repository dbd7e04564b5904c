//! Exact WKB analysis of second-order q-difference equations in involutive
//! form psi(qx) + psi(q^-1 x) = 2 T(x, q) psi(x).
//!
//! The crate computes the all-order q-Riccati/WKB series in exact arithmetic,
//! traces Stokes graphs (exponential networks), provides the symbolic 2x2
//! Stokes/transport matrix calculus with regularized traces, and evaluates
//! leading-order quantum periods numerically.

pub mod curve;
pub mod exact;
pub mod models;
pub mod network;
pub mod periods;
pub mod series;
pub mod stokesalg;

pub use curve::{branch_points, classify_punctures, qpochhammer, sheets_at, QdeModel};
