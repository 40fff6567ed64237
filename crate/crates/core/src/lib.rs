//! Control design and closed-loop simulation for precision motion stages
//! with position-dependent flexible dynamics.
//!
//! The library builds a modal plant model from physical mass, damping,
//! and stiffness data, decouples its rigid-body channels, synthesizes a
//! grid of local Riccati predictors, fits polynomial position weights
//! that blend them into one scheduled modal observer, and closes an
//! active stiffness/damping loop over the estimated flexible states. A
//! fixed-rate simulator and frequency/time-domain analysis tooling allow
//! the extended loop to be compared against the conventional rigid-body
//! baseline.

pub mod analysis;
pub mod config;
pub mod dare;
pub mod decouple;
pub mod design;
pub mod discretize;
pub mod error;
pub mod flexctl;
pub mod linalg;
pub mod modal;
pub mod observer;
pub mod poly;
pub mod rbctl;
pub mod sim;
pub mod traj;
pub mod weights;

pub use error::{Error, Result};
pub use poly::{PositionPolynomial, SchedulingPoint, Workspace};
