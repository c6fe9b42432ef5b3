//! Linear-quadratic control of linear systems driven by rough noise.
pub mod config;
pub mod control;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod noise;
pub mod observer;
pub mod pendulum;
pub mod riccati;
pub mod rough;
pub mod simulate;

pub use error::{Error, Result};
