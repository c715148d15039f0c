//! Fully discrete convex-splitting finite element solver for the
//! diffuse-interface two-phase magnetohydrodynamics system on the unit square.
//!
//! The unknowns are the phase field `phi`, chemical potential `omega`,
//! velocity `u`, pressure `p` and magnetic field `B`. Each time step solves
//! one monolithic nonlinear system (Newton on the cubic double-well term).

pub mod mesh;
pub mod fespace;
pub mod sparse;
pub mod forms;
pub mod manufactured;
pub mod projections;
pub mod diagnostics;
pub mod scheme;
#[cfg(feature = "umfpack")]
mod umfpack;

#[cfg(not(any(feature = "umfpack", feature = "faer")))]
compile_error!("enable the `umfpack` or the `faer` feature to select a sparse LU backend");
