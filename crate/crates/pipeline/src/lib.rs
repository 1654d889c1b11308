//! Run orchestration, file formats and the command-line front end for
//! `pulsepair-core`.

pub mod channelize;
pub mod cli;
pub mod formats;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod settings;

pub use pipeline::{FirstLevelOutput, StageContext};
pub use settings::{RunConfig, ScenarioFile};
