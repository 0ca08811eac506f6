//! End-to-end mammography CAD pipeline built on `mammoseg-core`: breast
//! extraction, level-set detection of bright regions, GLCM features of the
//! region of interest, and KNN / MLP classification into ACR categories.
//!
//! Configuration lives in [`config`], dataset manifests in [`manifest`], the
//! stage runners in [`pipeline`] and the accuracy tables in [`report`].
//! [`synthetic`] generates phantoms for demos and tests.

pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod synthetic;

pub use config::PipelineConfig;
pub use error::{PipelineError, Result, Stage};
pub use manifest::{DatasetManifest, Split};
