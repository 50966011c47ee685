//! Numerical twistor-line toolkit for deformations of the nilpotent cone of
//! `sl(n, C)`: twistor sections and their invariants, pseudo-hyperkähler
//! metrics at regular twistor lines, continuation off the cone, the explicit
//! four-dimensional ALE family and the SU(2)-equivariant invariant map.

pub mod ale;
pub mod continuation;
pub mod error;
pub mod hitchin;
pub mod json;
pub mod lie;
pub mod linalg;
pub mod metric;
pub mod par;
pub mod sections;
pub mod witness;

pub use error::{Error, Result};
