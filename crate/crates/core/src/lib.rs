//! Theory-based argument-quality (AQ) toolkit.
//!
//! The crate covers the whole pipeline: multi-domain argument corpora with
//! multi-annotator ratings ([`corpus`]), annotation aggregation and
//! reliability statistics ([`aggregation`]), document representations
//! ([`features`]), an epsilon-SVR baseline solved with SMO ([`svr`]), the
//! single-task / flat / hierarchical multi-task regressors ([`neural`]) and
//! the correlation-based evaluation harness ([`eval`]).
//!
//! [`synth`] generates planted-signal corpora used by the acceptance suite,
//! the benchmarks and the CLI's `demo` data.

pub mod aggregation;
pub mod corpus;
pub mod eval;
pub mod features;
pub mod neural;
pub mod svr;
pub mod synth;

mod util;

pub use aggregation::{AggregatedScores, AnnotationRecord, Group, Rating, Scale, Source};
pub use corpus::{ArgumentDoc, Dimension, Domain, Split, SplitAssignment};
pub use eval::{EvalResult, EvalRow, ExperimentSpec, Reference};
pub use features::{EmbeddingTable, FeatureVector, Vocabulary};
pub use neural::{MtModel, TrainConfig, Variant};
pub use svr::{Kernel, SvrModel, SvrParams};
