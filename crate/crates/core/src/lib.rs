//! Joint segmentation and dense reconstruction of moving objects from
//! calibrated, synchronised multi-view video.
//!
//! The crate is organised bottom-up:
//!
//! * [`raster`] and [`geometry`]: images, pinhole cameras, triangulation.
//! * [`sparse`]: cleaning, clustering and motion labelling of the sparse cloud.
//! * [`coarse`]: per-object coarse depth and the two-tier depth label sets.
//! * [`energy`]: photo-consistency, contrast and smoothness terms.
//! * [`solver`]: max-flow and α-expansion over a generic pairwise MRF.
//! * [`pipeline`]: per-frame and per-sequence orchestration, fusion, metrics
//!   and a synthetic scene generator.
//! * [`io`]: dataset ingestion and output writers.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coarse;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod raster;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
