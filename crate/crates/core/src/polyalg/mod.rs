//! Exact polynomial and polynomial-matrix arithmetic over `Q[d]`, where `d`
//! stands for time differentiation, plus the Smith normal form used to find
//! the operator whose image is the solution set of a linear ODE system.

mod matrix;
mod poly;
mod smith;

pub use matrix::PolyMatrix;
pub use poly::{decimal_rational, Poly, Rational};
pub use smith::{right_nullspace_columns, smith_normal_form, SmithDecomposition};
