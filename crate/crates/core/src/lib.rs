//! Higher-order mixed finite elements for the 2D Stokes equations solved by
//! FGMRES with a monolithic geometric multigrid preconditioner built on
//! Chebyshev-accelerated additive Vanka relaxation.

pub mod error;
pub mod assembly;
pub mod bench;
pub mod elements;
pub mod meshtopo;
pub mod mg;
pub mod spaces;
pub mod sparsela;
pub mod vanka;

pub use error::{Error, Result};
