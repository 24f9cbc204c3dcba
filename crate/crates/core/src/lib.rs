//! Numerical checks of cone compression/expansion hypotheses and solvers for
//! the systems they apply to.

pub mod boxopt;
pub mod certificate;
pub mod cones;
pub mod expr;
pub mod grid;
pub mod hammerstein;
pub mod miranda;
pub mod newton;
pub mod nonlinearity;
pub mod plaplacian;
pub mod quad;
pub mod solution;
