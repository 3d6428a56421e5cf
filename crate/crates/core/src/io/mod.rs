//! Dataset records, CUBE files, the synthetic generator and run configuration.

pub mod config;
pub mod cube;
pub mod dataset;
pub mod synthetic;

pub use config::RunConfig;
pub use cube::{export_cube, read_cube, CubeFile};
pub use dataset::{list_records, load_record, save_record, Record, RecordMeta};
pub use synthetic::{generate, SyntheticSpec};
