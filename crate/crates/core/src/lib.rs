//! Neural morphological tagging with soft disambiguation over the candidate
//! analyses of a rule-based morphological analyser.

pub mod augment;
pub mod checkpoint;
pub mod corpus;
pub mod decoders;
pub mod encoder;
pub mod error;
pub mod model;
pub mod morph;
pub mod numcore;
pub mod pipeline;

pub use error::{Error, Result};
