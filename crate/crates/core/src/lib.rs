//! Computer-aided detection of calcifications in mammograms.
//!
//! The crate is organised as a chain of stages, each usable on its own:
//!
//! * [`raster`]: gray images, masks, label maps and netpbm I/O.
//! * [`breast`]: log enhancement, binarization, orientation, tape-artefact
//!   separation and largest-component selection.
//! * [`levelset`]: fast marching, narrow-band level-set evolution with an
//!   edge + region speed, and automatic bright-pixel seeding.
//! * [`roi`]: ROI bounding box and four-orientation GLCM texture features.
//! * [`classify`]: KNN and MLP classifiers over the five ACR categories.

pub mod breast;
pub mod classify;
pub mod levelset;
pub mod raster;
pub mod roi;

pub use raster::{BinaryMask, GrayImage, Grid, LabelMap, OverlayImage, Point, RasterError, Rect, RealField};
