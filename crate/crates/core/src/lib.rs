// Index loops read closer to the math; `!(x > 0.0)` also rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod embeddings;
pub mod error;
pub mod hpo;
pub mod model;
pub mod numerics;
pub mod ontology;
pub mod pipeline;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
