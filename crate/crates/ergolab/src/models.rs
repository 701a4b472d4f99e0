//! Model catalog: named finite fixtures with known analytic facts, plus the
//! four desk-scale dynamical models (stochastic heat, truncated
//! Navier–Stokes vorticity, a spin ring, and a delay SDE).

pub mod delay;
pub mod fixtures;
pub mod heat;
pub mod ns;
pub mod spin;
