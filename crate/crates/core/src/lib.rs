//! Building blocks for margin-based bitext mining.
//!
//! - [`embstore`]: dense `f32` embedding matrices and the `EMB1` file format
//! - [`preprocess`]: rule-based cleaning of monolingual corpora
//! - [`knn`]: exact, blocked top-k cosine retrieval
//! - [`margin`]: margin scoring and the xsim error rate
//! - [`mine`]: forward, backward and union mining with threshold filtering
//!
//! All scoring accumulates inner products in `f64` in a fixed order, so
//! results do not depend on block sizes or the number of worker threads.

pub mod embstore;
pub mod error;
mod kernel;
pub mod knn;
pub mod margin;
pub mod mine;
pub mod preprocess;

pub use embstore::{EmbeddingMatrix, SentenceIndexMap};
pub use error::{Error, Result};
pub use knn::{cosine, topk, NeighborList, SearchOptions};
pub use margin::{apply_margin, neighbor_penalty, xsim_error_rate, MarginConfig, MarginFn, MarginScorer, XsimReport};
pub use mine::{mine, mine_direction, mine_union, Direction, MineConfig, MinedPair};
pub use preprocess::{run_pipeline, FilterReport, PreprocessConfig};
