//! Core library for turning heterogeneous robot-trajectory corpora into
//! deduplicated, canonicalized, annotation-ready datasets.
//!
//! The pipeline stages map onto modules:
//!
//! - [`model`] — dataset manifest schema, episode types, and file I/O
//! - [`canon`] — temporal-reference and rotation-encoding canonicalization
//! - [`dtw`] — frame costs, dynamic time warping, pairwise distance matrices
//! - [`filtergate`] — metadata filtering and the action-state consistency gate
//! - [`cluster`] — average-linkage clustering, auto-k, medoids, representatives
//! - [`mixsample`] — seeded instruction-mixture sampling and corpus statistics
//! - [`benchscore`] — deterministic VQA scoring, caption metrics, correlations

pub mod benchscore;
pub mod canon;
pub mod cluster;
pub mod dtw;
pub mod filtergate;
pub mod mixsample;
pub mod model;
