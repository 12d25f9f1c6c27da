//! Static analysis of layer graphs: receptive field, stride, output size,
//! padding influence, parameter and multiply-add counts, and the tracking
//! design guidelines.

mod cost;
mod geometry;
mod guidelines;
mod report;

pub use cost::{
    calibrate, count_macs, count_params, Calibration, ConventionFit, MacConvention, PublishedCost, EXEMPLAR_SIZE,
    PUBLISHED_COSTS, SEARCH_SIZE,
};
pub use geometry::{compute_geometry, Geometry, GraphGeometry};
pub use guidelines::{
    check_guidelines, Guideline, GuidelineReport, Verdict, MIN_OUTPUT_SIZE, RF_RATIO_RANGE, STRIDE_CHOICES,
};
pub use report::{render_human, render_tsv, TSV_HEADER};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalyzerError {
    #[error("input size must be positive, got {h}x{w}")]
    InputSize { h: usize, w: usize },
    #[error("node `{node}`: {detail}")]
    Empty { node: String, detail: String },
    #[error("node `{node}` merges branches with strides {left} and {right}")]
    StrideMismatch { node: String, left: usize, right: usize },
    #[error("node `{node}` merges branches of size {}x{} and {}x{}", left.0, left.1, right.0, right.1)]
    SizeMismatch {
        node: String,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("unknown multiply-add convention `{0}` (expected exemplar, search or both)")]
    Convention(String),
}

pub type Result<T, E = AnalyzerError> = std::result::Result<T, E>;
