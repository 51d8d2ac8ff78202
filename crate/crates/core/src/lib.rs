//! Numerical toolkit for weighted Sobolev spaces on `R^d` (`d = 1, 2`) with weights of the
//! form `w = exp(-beta |x|^q - W - V)`.
//!
//! Functions live on symmetric tensor grids over `[-R, R]^d`. The modules cover weight
//! diagnostics ([`weights`]), grid calculus ([`grid`]), weighted norms and smooth
//! approximation ([`sobolev`]), explicit Poincaré-type constants ([`inequalities`]) and the
//! weighted p-Laplacian ([`pde`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
pub mod corpus;
pub mod grid;
pub mod inequalities;
pub mod pde;
pub mod quad;
pub mod sobolev;
pub mod weights;

pub use error::{Error, Result};
pub use grid::{build_grid, Grid, GridFunction, Point, VectorField};
pub use weights::{PotentialExpr, Term, WeightSpec};
