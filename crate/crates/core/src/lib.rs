//! Finite-step control Lyapunov function (fs-CLF) based model predictive control.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds the domain types: discrete-time systems, constraint sets,
//!   comparison and measurement functions, fs-CLF candidates and rollouts.
//! * [`solver`] is a small augmented-Lagrangian NLP solver with a projected
//!   BFGS inner loop, used for every optimal control problem.
//! * [`ocp`] transcribes the contractive, shrinking-horizon and classic
//!   optimal control problems by single shooting.
//! * [`mpc`] runs closed loops. Each MPC scheme implements [`mpc::MpcScheme`]
//!   and is registered by name in a [`mpc::SchemeRegistry`].
//! * [`analysis`] certifies fs-CLF candidates and computes horizon bounds and
//!   trajectory metrics.
//! * [`benchmark`] builds the third-order benchmark system used throughout the
//!   tests and the CLI.

pub mod analysis;
pub mod model;
pub mod mpc;
pub mod ocp;
pub mod benchmark;
pub mod solver;

pub use nalgebra::{DMatrix, DVector};
