//! One-class anomaly detection by minimum-volume bounding regions.
//!
//! An invertible flow `f` is trained so that the preimage of a latent ball,
//! `U = f⁻¹(B(0, R))`, holds a fixed `1 − α` share of the training data while
//! having the smallest possible volume. Scoring a point is a single forward
//! pass: its latent norm `‖f(x)‖`, compared against the frozen radius `R`.

pub mod ad;
pub mod bench;
pub mod boundary;
pub mod data;
pub mod error;
pub mod eval;
pub mod flow;
pub mod objective;
pub mod quantile;
pub mod training;

pub use error::{Error, Result};
