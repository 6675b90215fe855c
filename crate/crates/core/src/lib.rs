//! Atomization of Riesz measures in the unit disk.
//!
//! A measure is cut into cells of integer mass, each cell is replaced by
//! points matching its first moments, and the resulting zero set defines
//! `log|f|`; the crate then measures how far `log|f|` is from the potential.

pub mod atomize;
pub mod characteristics;
pub mod config;
pub mod diskgrid;
pub mod error;
pub mod io;
pub mod measure;
pub mod partition;
pub mod pipeline;
pub mod potential;
pub mod quad;
pub mod roots;
pub mod run;
pub mod slowvar;
pub mod verify;

pub use atomize::{AtomSet, AtomizedCell, MomentData, Source, Zero};
pub use diskgrid::{build_scheme, validate_q, AnnularScheme, CellId, LogRectangle};
pub use error::{Error, Result};
pub use measure::{Atom, CurveProfile, DiskMeasure, GridRing, MassLaw, Piece, PolarCell, PolarGrid, RectCell, Region, C64};
pub use partition::{balanced_partition, Frame, FrameRect, MassRectangle, PartitionLeaf};
pub use slowvar::ProximateOrder;
