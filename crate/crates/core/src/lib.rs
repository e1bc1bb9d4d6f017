//! Stabilised continuous finite elements on adaptive quadtree meshes for scalar
//! transport and the compressible Euler equations.
//!
//! The scheme adds a graph-Laplacian artificial diffusion, switched by a nodal
//! shock detector, to a group finite element discretisation on Q1 elements with
//! hanging-node constraints. The resulting nonlinear system is solved with a
//! Picard/Newton hybrid, and meshes are adapted with Kelly or graph-based
//! indicators.
//!
//! ```
//! use monoamr::amr::uniform_sweep;
//! use monoamr::cases::{CaseDefinition, Scheme};
//!
//! let mut case = CaseDefinition::by_name("linear_discontinuity")?.with_scheme(Scheme::Low);
//! case.root = (8, 8);
//! let run = uniform_sweep(&case, 1, |_| Ok(()))?;
//! let (coarse, fine) = (run.steps[0].l1_error.unwrap(), run.steps[1].l1_error.unwrap());
//! assert!(fine < coarse);
//! # Ok::<(), monoamr::Error>(())
//! ```

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod amr;
pub mod assembly;
pub mod boundary;
pub mod cases;
pub mod error;
pub mod fespace;
pub mod io;
pub mod linsolve;
pub mod mesh;
pub mod physics;
pub mod solver;
pub mod sparse;
pub mod stabilization;

pub use error::{Error, Result};
