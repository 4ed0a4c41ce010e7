//! A deterministic compiler and query engine for causal databases.
//!
//! The crate turns collections of local causal models (LCM JSON artifacts)
//! or pre-extracted causal-claim corpora into a normalized relational
//! database — nodes, edges, edge_support and an optional SCC table — and
//! executes an algebra of causal queries over it: backbone ranking, hub
//! detection, mechanism drill-down, provenance, path composition, cycle
//! detection, and do-style interventions evaluated as view rewrites.
//!
//! Pipeline:
//!
//! ```text
//! LCM dirs / claims CSV → ingest → canon → builder → Atlas
//!                                                     ├─ analytics (hubs, quantiles, SCC)
//!                                                     ├─ query (backbone, interventions, SQL)
//!                                                     ├─ merge (corpus union)
//!                                                     └─ io (Parquet/CSV tables, stats)
//! ```

pub mod analytics;
pub mod builder;
pub mod canon;
pub mod cli;
pub mod error;
pub mod ingest;
pub mod io;
pub mod merge;
pub mod query;

pub use builder::{build_atlas, build_from_claims, Atlas, BuildConfig};
pub use canon::{canon_label, hash64, rel_type, EdgeId, NodeId, Polarity, RelLexicon, RelType};
pub use error::{AtlasError, Result};
