//! Ranking clarification questions by expected value of perfect information.
//!
//! The crate covers the whole pipeline: triple extraction from a forum dump
//! ([`corpus`]), TF-IDF candidate generation ([`retrieval`]), word-vector
//! features ([`embeddings`]), hand-differentiated neural building blocks
//! ([`neural`]), the EVPI ranker ([`evpi`]), reference rankers
//! ([`baselines`]) and annotation-based evaluation ([`eval`]).

// Index loops read better than iterator chains in the matrix and gate code.
#![allow(clippy::needless_range_loop)]

pub mod baselines;
pub mod config;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod evpi;
pub mod gradsuite;
pub mod hash;
pub mod model;
pub mod neural;
pub mod registry;
pub mod retrieval;
pub mod rng;
pub mod synth;
pub mod text;
pub mod training;

pub use error::{Error, Result};
