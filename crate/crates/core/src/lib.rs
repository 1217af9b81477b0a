//! Error diffusion learning for sign-partitioned networks, a backpropagation
//! baseline, dataset loaders and training diagnostics.

pub mod activation;
pub mod datasets;
pub mod diagnostics;
pub mod error;
pub mod mlp;
pub mod multiclass;
pub mod network;
pub mod snapshot;
pub mod tensor;
pub mod training;

pub use activation::ActivationKind;
pub use datasets::{ColumnMap, Dataset, Part, Targets};
pub use diagnostics::{ParamCount, RunRecord};
pub use error::{EdlaError, Result};
pub use mlp::{AdamWState, LossKind, MlpNetwork};
pub use multiclass::{LabeledSamples, ParallelEdla};
pub use network::{
    rms_normalize, BatchStats, BlockKind, EdlaLayer, EdlaNetwork, EdlaSpec, ForwardTrace,
    GlobalError, LayerTrace, RmsOutput,
};
pub use tensor::{Matrix, RngState};
pub use training::{fit, FitOptions, Metric, Samples};
