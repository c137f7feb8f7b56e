//! Out-of-core shared-near-neighbor (SNN) clustering over a simulated
//! external-memory layer with exact I/O accounting.
//!
//! The toolkit has two algorithmic phases — blocked k-NN matrix
//! construction ([`knn_phase`]) and blocked SNN merge with label closure
//! ([`snn_cluster`]) — running against a block store ([`em_model`]) that
//! enforces a pin budget and counts every block transfer. In-core oracles
//! provide the correctness reference, and [`bench`] reproduces the
//! I/O-reduction trends (quadratic in N, inverse in M) at desk scale.

pub mod bench;
pub mod dataset_io;
pub mod em_model;
pub mod error;
pub mod knn_phase;
pub mod pipeline;
pub mod snn_cluster;
pub mod units;

pub use em_model::{Backing, BlockStore, EmArray, IoCounters, StoreMode};
pub use error::{EmError, Result};
pub use pipeline::{run_blocked, run_oracle, run_traditional_lru, ExecParams, PipelineOutput};
