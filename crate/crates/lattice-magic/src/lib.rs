//! Light shifts, magic bias fields and storage lifetimes of the ground hyperfine
//! coherences of an alkali atom (87Rb by default) held in a circularly polarized
//! 1-D optical lattice with the bias field along the lattice axis.
//!
//! Module map:
//!
//! - [`atomic_data`]: species constants, lattice and sample configs.
//! - [`polarizability`]: Stark operator and its scalar/vector/tensor parts.
//! - [`ground_manifold`]: H_hf + H^Z + U, dressed levels, differential shifts.
//! - [`magic_field`]: fields that cancel the intensity-linear differential shift.
//! - [`storage_sim`]: dephasing of a stored spin wave in a thermal ensemble.
//! - [`analysis_fit`]: the three fit models and CSV ingestion.
//! - [`report`]: the end-to-end pipeline behind the `report` subcommand.

pub mod analysis_fit;
pub mod angular;
pub mod atomic_data;
pub mod constants;
pub mod error;
pub mod ground_manifold;
pub mod magic_field;
pub mod polarizability;
pub mod report;
pub mod storage_sim;

pub use error::{Error, Result};
