//! Frozen input-vector layout. Changing the order, adding a feature or
//! changing a scale requires bumping [`FEATURE_LAYOUT_VERSION`] and
//! regenerating FEATURES.md.

use std::io::Write;

use super::{step_features, trajectory_metrics, FeatureError, FeatureParams};
use crate::context::{ContextVector, CONTEXT_DIM, CONTEXT_NAMES};
use crate::dataset::Trajectory;

pub const FEATURE_LAYOUT_VERSION: &str = "socnav-features/1";

pub const STEP_DIM: usize = 14;
pub const METRIC_DIM: usize = 18;
pub const INPUT_DIM: usize = STEP_DIM + METRIC_DIM + CONTEXT_DIM;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureSpec {
    pub name: &'static str,
    pub unit: &'static str,
    /// Model input = raw value / scale.
    pub scale: f64,
}

const fn spec(name: &'static str, unit: &'static str, scale: f64) -> FeatureSpec {
    FeatureSpec { name, unit, scale }
}

const PI: f64 = std::f64::consts::PI;

pub const FEATURE_LAYOUT: [FeatureSpec; INPUT_DIM] = [
    // f_t
    spec("goal_rel_x", "m", 10.0),
    spec("goal_rel_y", "m", 10.0),
    spec("goal_rel_theta", "rad", PI),
    spec("speed_linear", "m/s", 2.0),
    spec("speed_lateral", "m/s", 2.0),
    spec("speed_angular", "rad/s", PI),
    spec("accel_linear", "m/s^2", 2.0),
    spec("accel_angular", "rad/s^2", PI),
    spec("goal_position_threshold", "m", 1.0),
    spec("goal_orientation_threshold", "rad", PI),
    spec("humans_present", "flag", 1.0),
    spec("walls_exist", "flag", 1.0),
    spec("step_ratio", "ratio", 1.0),
    spec("last_step", "flag", 1.0),
    // m_t
    spec("goal_reached", "flag", 1.0),
    spec("dist_nearest_human", "m", 5.0),
    spec("dist_nearest_object", "m", 5.0),
    spec("dist_nearest_wall", "m", 5.0),
    spec("collided_human", "flag", 1.0),
    spec("collided_object", "flag", 1.0),
    spec("collided_wall", "flag", 1.0),
    spec("humans_within_0.4", "count", 1.0),
    spec("humans_within_0.6", "count", 1.0),
    spec("humans_within_0.8", "count", 1.0),
    spec("intrusion_0.4", "flag", 1.0),
    spec("intrusion_0.6", "flag", 1.0),
    spec("intrusion_0.8", "flag", 1.0),
    spec("min_time_to_collision", "s", 10.0),
    spec("max_cost_of_fear", "unitless", 1.0),
    spec("max_cost_of_panic", "unitless", 1.0),
    spec("min_human_dist_so_far", "m", 5.0),
    spec("path_efficiency", "ratio", 1.0),
    // c_t
    spec(CONTEXT_NAMES[0], "percentile/100", 1.0),
    spec(CONTEXT_NAMES[1], "percentile/100", 1.0),
    spec(CONTEXT_NAMES[2], "percentile/100", 1.0),
    spec(CONTEXT_NAMES[3], "percentile/100", 1.0),
    spec(CONTEXT_NAMES[4], "percentile/100", 1.0),
    spec(CONTEXT_NAMES[5], "percentile/100", 1.0),
    spec(CONTEXT_NAMES[6], "percentile/100", 1.0),
    spec(CONTEXT_NAMES[7], "percentile/100", 1.0),
    spec(CONTEXT_NAMES[8], "percentile/100", 1.0),
    spec(CONTEXT_NAMES[9], "percentile/100", 1.0),
];

/// One normalized model input `x_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputVector(pub Vec<f64>);

impl std::ops::Deref for InputVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for InputVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Raw (unscaled) `f_t || m_t || c_t` rows, one per frame.
pub fn raw_feature_rows(t: &Trajectory, context: &ContextVector, params: &FeatureParams) -> Result<Vec<Vec<f64>>, FeatureError> {
    let metrics = trajectory_metrics(t, params);
    (0..t.frames.len())
        .map(|i| {
            let mut row = step_features(t, i)?.to_vec();
            row.extend(metrics[i].to_vec());
            row.extend_from_slice(context.as_slice());
            debug_assert_eq!(row.len(), INPUT_DIM);
            Ok(row)
        })
        .collect()
}

/// The model input sequence for one trajectory under one context: one
/// normalized vector per frame, with the same context slice in every vector.
pub fn assemble_sequence(t: &Trajectory, context: &ContextVector, params: &FeatureParams) -> Result<Vec<InputVector>, FeatureError> {
    Ok(raw_feature_rows(t, context, params)?
        .into_iter()
        .map(|row| InputVector(row.iter().zip(FEATURE_LAYOUT.iter()).map(|(v, s)| v / s.scale).collect()))
        .collect())
}

/// Writes raw feature rows as CSV with a `step` column and the layout names as header.
pub fn write_feature_csv<W: Write>(out: W, rows: &[Vec<f64>]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(std::iter::once("step").chain(FEATURE_LAYOUT.iter().map(|s| s.name)))?;
    for (i, row) in rows.iter().enumerate() {
        w.write_record(std::iter::once(i.to_string()).chain(row.iter().map(|v| v.to_string())))?;
    }
    w.flush()?;
    Ok(())
}

/// Markdown table of the layout: index, name, block, unit, scale.
pub fn feature_layout_markdown() -> String {
    let mut s = format!("Layout version: `{FEATURE_LAYOUT_VERSION}` ({INPUT_DIM} values)\n\n");
    s.push_str("| index | name | block | unit | model input |\n|---|---|---|---|---|\n");
    for (i, f) in FEATURE_LAYOUT.iter().enumerate() {
        let block = if i < STEP_DIM {
            "f_t"
        } else if i < STEP_DIM + METRIC_DIM {
            "m_t"
        } else {
            "c_t"
        };
        let norm = if f.scale == 1.0 {
            "raw".to_string()
        } else if f.scale == PI {
            "value / π".to_string()
        } else {
            format!("value / {}", f.scale)
        };
        s.push_str(&format!("| {i} | `{}` | {block} | {} | {norm} |\n", f.name, f.unit));
    }
    s
}
