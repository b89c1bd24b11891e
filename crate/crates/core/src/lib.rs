//! Differential-game convoy control for point-mass vehicles.
//!
//! The crate is layered bottom-up:
//!
//! * [`numerics`] is the dense matrix kernel (Kronecker algebra, matrix
//!   exponential, eigen-decomposition, linear solves, adaptive Runge–Kutta).
//! * [`convoy_graph`] turns a communication graph into incidence, Laplacian
//!   and per-vehicle cost matrices.
//! * [`coupled_game`] is the open-loop Nash game over individual vehicle
//!   states with its coupled Riccati equations.
//! * [`relative_game`] is the equivalent edge-indexed optimal control problem
//!   together with its closed-form solvability certificate.
//! * [`rh_controller`] builds the receding-horizon feedback and checks
//!   closed-loop stability.
//! * [`fleet_sim`] runs whole convoy scenarios and records trajectories.

pub mod convoy_graph;
pub mod coupled_game;
pub mod error;
pub mod fleet_sim;
pub mod numerics;
pub mod relative_game;
pub mod rh_controller;

pub use error::{Error, Result};
