//! Support code of the `rnar` binary: run manifests and report emitters.

pub mod manifest;
pub mod report;

pub use manifest::Manifest;
pub use report::{csv, markdown, timing_svg, TimingCurve};
