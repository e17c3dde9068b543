//! Multitask dimensional-emotion regression with a weighted concordance
//! correlation loss, plus multistage SVR late fusion.
//!
//! The crate is organised bottom-up:
//!
//! - [`metrics`]: Pearson, CCC, CCC loss, masked variants and the weighted
//!   multitask loss.
//! - [`seqmodel`]: a stacked-LSTM regressor with three scalar heads, trained
//!   with RMSprop through exact backpropagation through time.
//! - [`svr`]: epsilon-SVR solved by sequential minimal optimization.
//! - [`dataio`]: CSV ingestion, padding/masking, label shift, manifests and
//!   a synthetic corpus generator.
//! - [`fusion`]: early fusion (concatenation), late fusion (SVR stacking) and
//!   the multistage repetition of late fusion.
//! - [`cli`]: experiment runner, weight search and the full pipeline.
//!
//! All statistics use the population (divide-by-N) convention.

pub mod cli;
pub mod dataio;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod rng;
pub mod seqmodel;
pub mod svr;

pub use error::{Error, Result};
pub use metrics::{Attribute, AttributeTriple, CccStats, MtlWeights};
