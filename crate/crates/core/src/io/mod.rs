//! File formats: MNIST IDX, the `.ttn` tensor container, model files,
//! TOML run configuration and fixed-precision JSON/CSV output.

pub mod config;
pub mod fmt;
pub mod idx;
pub mod model;
pub mod ttn;

pub use config::RunConfig;
pub use model::{load_model, save_model, ModelMeta};
