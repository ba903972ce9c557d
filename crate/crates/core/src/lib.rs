//! Lie-splitting simulation of a viscous incompressible fluid in a deforming
//! cylinder whose wall is an elastic Koiter shell reinforced by a net of
//! curved rods.

pub mod composite;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod expr;
pub mod fluid;
pub mod geometry;
pub mod linalg;
pub mod net;
pub mod pressure;
pub mod shell;
pub mod splitting;
pub mod spline;
pub mod verify;
pub mod vtk;
pub mod weak;

pub use error::{Error, Result};
