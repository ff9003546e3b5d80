//! Unsupervised embeddings of code changes.
//!
//! A change is turned into an edit sequence by token-level Levenshtein
//! alignment, optionally compressed to its changed columns, and encoded
//! into a fixed-size vector. The vector is learned by training a decoder to
//! apply the edit to the code before the change; the encoders can then be
//! frozen and reused by downstream decoders such as commit message
//! generation.

pub mod align;
pub mod corpus;
pub mod decode;
pub mod eval;
pub mod error;
pub mod io;
pub mod model;
pub mod synthetic;
pub mod nn;
pub mod tokenize;
pub mod train;

pub use error::{Error, Result};
