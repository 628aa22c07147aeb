//! Real orbits of the genus-three reduction of the focusing modified KdV equation.
//!
//! * [`curve`]: the curve in angle form and its scalar functions.
//! * [`abelmat`]: the matrices between `dphi` and the flat Jacobian coordinates.
//! * [`orbit`]: Euler integration through branch points and collisions.
//! * [`observe`]: `psi_r`, its derivative, the gauge diagnostic and the Abel probe.
//! * [`io_cli`]: configuration files, CSV/event output and the verification suite.

pub mod abelmat;
pub mod curve;
pub mod error;
pub mod io_cli;
pub mod observe;
pub mod orbit;

pub use error::{Error, Result};
