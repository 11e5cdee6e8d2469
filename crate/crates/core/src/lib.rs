//! Distance-aware retrieval-augmented generation over a geodesic city graph.
//!
//! The crate is organised along the pipeline:
//!
//! - [`geo`]: gazetteer loading, geocoding and great-circle distances
//! - [`graph`]: the distance knowledge store, its sparsification and Turtle form
//! - [`embed`]: lexical embeddings and exact top-k triple retrieval
//! - [`sparql`]: the query subset used to read the store
//! - [`gateway`]: prompt templates and chat model clients (live and scripted)
//! - [`questions`]: benchmark questions with brute-force gold answers
//! - [`eval`]: pipelines, scoring, MSE, ablation and report files
//! - [`cli`]: the `distrag` command line

pub mod cli;
pub mod embed;
pub mod eval;
pub mod gateway;
pub mod geo;
pub mod graph;
pub mod questions;
pub mod rdf;
pub mod sparql;

pub(crate) mod http;
pub(crate) mod util;

pub use embed::{Embedder, RetrievalConfig, VectorIndex};
pub use eval::{Answer, Pipeline, Residual, RunReport};
pub use gateway::{ModelClient, PromptTemplate, QueryTemplateHint};
pub use geo::{City, CityKey, GeoPoint, Gazetteer};
pub use graph::{EdgePolicy, SpatialGraph, TripleText};
pub use questions::{Difficulty, GoldAnswer, Question};
pub use sparql::{Query, ResultTable};
