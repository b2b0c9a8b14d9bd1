//! Deterministic SVG output: top-down trajectory frames, animations, sweep
//! curves and dataset figures. Equal inputs always give equal bytes.

use std::path::Path;

use socnav_core::features::FeatureError;
use socnav_core::metric::MetricError;

pub mod plot;
pub mod render;
pub mod stats;
pub mod svg;
pub mod sweep;

pub use plot::{control_order, plot_consistency_matrix, plot_control_questions, plot_histogram, plot_training_log, Axes};
pub use render::{export_animation, render_frame, AnimationManifest, FrameEntry, RenderOptions, Viewport, MANIFEST_FILE};
pub use stats::{dataset_stats, DatasetStats, HISTOGRAM_BINS};
pub use sweep::{plot_sweep_scores, score_sweep, SweepScores};

#[derive(Debug, thiserror::Error)]
pub enum VizError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("frame {index} out of range for {len} frames")]
    FrameOutOfRange { index: usize, len: usize },
    #[error("trajectory has no frames")]
    EmptyTrajectory,
    #[error("{0}")]
    InvalidInput(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

impl VizError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        VizError::Io { path: path.display().to_string(), source }
    }
}
