//! Kernelized support tensor train machines.
//!
//! Samples are d-way tensors. Each is compressed into a tensor train, a
//! kernel is evaluated directly between trains, and a soft-margin SVM is
//! trained on the resulting Gram matrix.

pub mod bench;
pub mod error;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod pipeline;
pub mod solver;
pub mod synth;
pub mod tensor;
pub mod tt;

pub use error::{Error, Result};
pub use io::{load_model, save_model, ModelMeta, RunConfig};
pub use kernel::{BaseKernel, Combine, GramMatrix, KernelSpec};
pub use pipeline::{
    evaluate, rank_sweep, train_binary, train_multiclass_ovo, Classifier, Dataset, GridConfig, Metrics, OvoModel,
    RankSetting, Split, SvmModel,
};
pub use solver::{DualProblem, DualSolution, SolverParams};
pub use tensor::DenseTensor;
pub use tt::{StackedBasis, TensorTrain, TtSvdConfig};
