//! Numerical toolkit for the dispersive decay of 3D magnetic Schrodinger
//! operators `H = -Delta + i(A.grad + grad.A) + V`.

pub mod algebra;
pub mod ellipsoid;
pub mod evolve;
pub mod error;
pub mod grid;
pub mod krylov;
pub mod norms;
pub mod potential;
pub mod quad;
pub mod resolvent;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{Grid3D, ScalarField, VectorField};
pub use potential::{Bump, BumpKind, PotentialSpec};
