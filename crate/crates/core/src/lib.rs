//! Solver and verification suite for the dimensionless non-isothermal
//! FENE configurational probability diffusion equation.
//!
//! The library discretizes the product domain `Omega x B(0,1)` with
//! multilinear elements on tensor grids, assembles the regularized
//! variational form term by term, integrates in time with implicit Euler
//! wrapped in a fixed-point (Picard) iteration of the linearized map, and
//! ships the a-priori checks the analysis provides: data-condition
//! audits, discrete coercivity, L1 and energy inequalities, nonnegativity
//! monitoring, manufactured-solution convergence studies, and a
//! Brownian-dynamics cross-check of the equilibrium.

pub mod assembly;
pub mod bd;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod mms;
pub mod params;
pub mod regularization;
pub mod solver;
pub mod state;
pub mod wellposedness;

pub use error::{Error, Result};
pub use fields::{FlowField, TemperatureField};
pub use mesh::{build_mesh, Mesh};
pub use params::Params;
pub use state::{initial_condition, DensityState, InitialFamily};
