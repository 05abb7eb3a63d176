//! Joint text–image embeddings for cross-modal retrieval.
//!
//! Text is stemmed, encoded to fixed-length index sequences and run through
//! an LSTM; images arrive as precomputed feature vectors and pass through two
//! affine layers. Both land in a non-negative space scored by the negated
//! order-violation penalty and are trained with an in-batch triplet loss.

// `!(x > 0.0)` style checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dataio;
pub mod encoders;
pub mod error;
pub mod evaluator;
pub mod numcore;
pub mod objective;
pub mod synthetic;
pub mod textpipe;
pub mod trainer;

pub use error::{Error, Result};
