//! Joint apparent-personality and emotion estimation with a shared
//! convolutional backbone.
//!
//! The crate contains a small reverse-mode differentiation engine
//! ([`engine`]), a generator for two heterogeneous synthetic datasets with a
//! planted emotion-to-personality map ([`data`]), the network itself
//! ([`model`]), its objectives ([`losses`]), the optimizer loop
//! ([`train`]), evaluation ([`eval`]) and the ablation harness
//! ([`ablation`]).

pub mod ablation;
pub mod binio;
pub mod config;
pub mod data;
pub mod engine;
pub mod model;
pub mod error;
pub mod eval;
pub mod losses;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
