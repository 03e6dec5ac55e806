//! Multi-instance multi-label learning.

pub mod bagdist;
pub mod data;
pub mod dataio;
pub mod dmimlsvm;
pub mod error;
pub mod harness;
pub mod insdif;
pub mod kernels;
pub mod metrics;
pub mod mimlboost;
pub mod mimlsvm;
pub mod model;
pub mod solvers;
pub mod subcod;

pub use data::{psi, validate_dataset, Bag, Example, Instance, LabelSet, MimlDataset};
pub use error::{MimlError, Result};
pub use kernels::KernelSpec;
pub use metrics::{LabelScores, MetricReport};
pub use model::{train, Algorithm, Model, TrainedModel};
