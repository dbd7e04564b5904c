//! Exact arithmetic: Gaussian rationals, sparse Laurent polynomials, and the
//! function field Q(i)(x)[r] / (r^2 - rho(x)) that carries the q-Riccati data.

mod qi;
mod poly;
mod ratexpr;

pub use poly::LaurentPoly;
pub use qi::Qi;
pub use ratexpr::{RatExprField, RationalExpr};
