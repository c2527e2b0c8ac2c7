//! Fuel-type mapping from fused optical, SAR and terrain rasters.
//!
//! The crate covers feature construction ([`indices`]), spectral-similarity
//! label propagation ([`labelprop`]), tabular augmentation and fidelity
//! scoring ([`synth`]), a bagged multi-layer stacked classifier
//! ([`ensemble`]), permutation importance ([`importance`]), raster
//! classification with non-burnable masking ([`postprocess`]), a synthetic
//! landscape generator ([`fixtures`]) and the end-to-end driver
//! ([`pipeline`]).

pub mod datamodel;
pub mod ensemble;
pub mod error;
pub mod fixtures;
pub mod importance;
pub mod indices;
pub mod labelprop;
pub mod pipeline;
pub mod postprocess;
pub mod registry;
pub mod stats;
pub mod synth;
pub mod rng;

pub use error::{Error, Result};
