//! Heterogeneous graph embeddings assembled from meta-path units (MPUs).
//!
//! The pipeline splits a typed graph into MPUs (one per connected pair of
//! node types), trains one embedding per node inside each MPU, and freezes
//! the result. Embeddings for arbitrary user meta-paths are then rebuilt from
//! the frozen store by attention-weighted integration, without touching any
//! trainable parameter.
//!
//! Module layout follows the data flow:
//!
//! - [`hetgraph`]: typed graph, loaders, meta-path parsing, MPU decomposition
//! - [`sampler`]: random walk with restart, neighbor tables, skip-gram triples
//! - [`autodiff`]: dense tensors with a reverse-mode tape
//! - [`encoder`]: content projection, BiLSTM aggregation, intra-MPU attention
//! - [`semantics`]: inter-MPU attention, cascaded and cumulative integration
//! - [`trainer`]: negative-sampling loss, Adam, early stopping, checkpoints
//! - [`query`]: frozen store, top-K retrieval, metrics, evaluation, timing
//! - [`synthetic`]: planted-community graph generator

pub mod autodiff;
pub mod encoder;
pub mod error;
pub mod hetgraph;
pub mod query;
pub mod sampler;
pub mod semantics;
pub mod synthetic;
pub mod trainer;
pub(crate) mod util;

pub use error::{Error, Result};
pub use hetgraph::{GraphFormat, HetGraph, IntegrationMode, MetaPath, Mpu, NodeId, QueryPlan, TypeId};

pub use sampler::{NeighborTable, TripleSet, WalkConfig, WalkCorpus};

pub use hetgraph::TypeSchema;
pub use query::{EmbeddingStore, MetricReport, RankedResult};
pub use trainer::{Checkpoint, TrainConfig};
