//! Heterogeneous networks of diagnostic data and their node embeddings.
//!
//! Triplets `<disease, symptom name, symptom value>` become a typed network
//! ([`diagnet`]); random walks over it ([`walker`]) feed a skip-gram trainer
//! ([`embed`]); the embeddings initialize two small task networks
//! ([`taskheads`]) evaluated by missing-data sweeps ([`evalkit`]).

pub mod cli;
pub mod diagnet;
pub mod embed;
pub mod error;
pub mod evalkit;
pub mod matrix;
pub mod seed;
pub mod taskheads;
pub mod walker;

pub use error::{Error, Result};
