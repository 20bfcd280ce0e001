//! Files, parallel sweeps and the command-line front end for `qldpc-core`.
//!
//! Formats: binary matrices as text, code bundles and model checkpoints as
//! JSON, datasets as JSON Lines, training logs and curves as CSV plus a
//! plain `x y` table.

pub mod bundle;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod curve;
pub mod dataset;
pub mod error;
pub mod matrix_text;
pub mod sweep;

pub use error::FormatError;
