//! Time-domain electromagnetic coefficient reconstruction.
//!
//! Reconstructs the relative permittivity and permeability of a bounded
//! 3D medium from electric-field observations on one boundary face. The
//! forward model is a divergence-stabilized second-order Maxwell system
//! integrated with an explicit leapfrog scheme on a structured grid; the
//! inverse problem minimizes a Tikhonov functional with an adjoint-state
//! Fletcher-Reeves conjugate gradient loop.

pub mod adjoint;
pub mod cases;
pub mod config;
pub mod domain;
pub mod error;
pub mod fields;
pub mod forward;
pub mod io;
pub mod objective;
pub mod optimizer;
pub mod postprocess;
pub mod problem;
pub mod stencil;
pub mod verify;

pub use error::{Error, Result};
