//! Compiles and runs the code blocks of the guide in `book/` as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[doc = include_str!("../../../book/src/mesh.md")]
mod mesh {}

#[doc = include_str!("../../../book/src/discretisation.md")]
mod discretisation {}

#[doc = include_str!("../../../book/src/stabilisation.md")]
mod stabilisation {}

#[doc = include_str!("../../../book/src/solver.md")]
mod solver {}

#[doc = include_str!("../../../book/src/amr.md")]
mod amr {}

#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}
