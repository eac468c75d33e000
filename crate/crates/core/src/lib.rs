//! Loop-erased random walk and SLE_2 simulation toolkit.
pub mod error;
pub mod grid;
pub mod harmonic;
pub mod harness;
pub mod conformal;
pub mod content;
pub mod lerw;
pub mod loewner;
pub mod metrics;
pub mod sle;
pub mod stats;

pub use error::{LabError, Result};
pub use grid::{AnalyticShape, BoundaryEdge, DomainTriple, ShapeKind, Site, SiteSet, UnionOfSquares};
pub use lerw::{LatticePath, Saw};
pub use metrics::{Curve, TimeTag};
