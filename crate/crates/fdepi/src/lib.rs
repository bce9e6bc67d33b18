//! Functional data analysis for regional epidemic curves.

pub mod basis;
pub mod depth;
pub mod error;
pub mod fpca;
pub mod funreg;
pub mod grid;
pub mod multivar;
pub mod quad;
pub mod ingest;
pub mod io;
pub mod iwt;
pub mod motif;
pub mod select;
pub mod smoothing;
pub mod svg;

pub use error::{FdaError, Result};
pub use grid::{FunctionalDataset, TimeGrid};
