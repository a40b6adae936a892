//! Causal knowledge graphs with mediator qualifiers.
//!
//! The crate turns annotated causal event graphs into hyper-relational
//! knowledge graphs, trains mediator-aware and mediator-blind embedding
//! models over them, and scores causal prediction/explanation queries with
//! filtered ranking metrics.
//!
//! Pipeline: [`ingest`] → [`kg`] → [`train`] (over [`models`]) → [`eval`].

pub mod error;
pub mod eval;
pub mod ingest;
pub mod kg;
pub mod models;
pub mod numeric;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
