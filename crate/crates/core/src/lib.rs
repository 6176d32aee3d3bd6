//! Obstacle-constrained heat problems with Robin or Dirichlet data on part of
//! the boundary, their distributed optimal control, and refinement studies in
//! the mesh size and the Robin coefficient.

pub mod assembly;
pub mod benchmark;
pub mod control;
pub mod convergence;
pub mod error;
pub mod field;
pub mod mesh;
pub mod sparse;
pub mod vi;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/meshes.md")]
    mod meshes {}
    #[doc = include_str!("../../../book/src/state.md")]
    mod state {}
    #[doc = include_str!("../../../book/src/control.md")]
    mod control {}
    #[doc = include_str!("../../../book/src/convergence.md")]
    mod convergence {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
