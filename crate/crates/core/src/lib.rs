//! Sparse random mode decomposition with chirplet random features.
//!
//! The 3D pipeline detects per-mode instantaneous-frequency and chirp-rate
//! ridges in a chirplet transform, samples random chirplet atoms in a narrow
//! band around each ridge, solves a basis-pursuit-denoising problem over the
//! resulting dictionary and reads every mode off its own column block. The
//! 2D baseline samples atoms uniformly and groups them with DBSCAN instead.

pub mod baseline;
pub mod benchmark;
pub mod error;
pub mod features;
pub mod io;
pub mod noise;
pub mod pipeline;
pub mod ridge;
pub mod signal;
pub mod solver;
pub mod tfa;

pub use error::{Error, Result, Stage};
