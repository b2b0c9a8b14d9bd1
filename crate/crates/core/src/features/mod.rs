//! Per-step model inputs: trajectory features, analytic metric features and
//! the assembled input vector `x_t = f_t || m_t || c_t`.
//!
//! Everything here is a pure function of the trajectory. Geometry is computed
//! in whatever frame the trajectory is expressed in; goal-relative quantities
//! are derived from the task target, so callers do not need to run
//! [`crate::transforms::to_goal_frame`] first.

mod layout;
mod metrics;

pub use layout::{
    assemble_sequence, feature_layout_markdown, raw_feature_rows, write_feature_csv, FeatureSpec, InputVector, FEATURE_LAYOUT,
    FEATURE_LAYOUT_VERSION, INPUT_DIM, METRIC_DIM, STEP_DIM,
};
pub use metrics::{
    collision_flags, distance_to_nearest, fear_panic_costs, goal_reached, path_efficiency, proximity_counts,
    time_to_collision, EntityKind, PROXIMITY_RADII,
};

use serde::{Deserialize, Serialize};

use crate::dataset::{Pose2D, Trajectory};
use crate::geometry::Point2;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FeatureError {
    #[error("frame index {index} out of range for a trajectory of {len} frames")]
    IndexOutOfRange { index: usize, len: usize },
}

/// Constants used by the analytic metrics. None of them are stated by the
/// dataset itself; all are configurable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    /// Body radius used for human contact (collision and time to collision).
    pub human_radius: f64,
    /// Distance reported when no entity of a kind exists.
    pub d_max: f64,
    /// Upper clamp for the time to collision.
    pub ttc_max: f64,
    /// Length scale of the fear cost proxy.
    pub fear_sigma: f64,
    /// Length scale of the panic cost proxy.
    pub panic_sigma: f64,
    /// Closing speed normalizer for both proxies.
    pub v_cap: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self { human_radius: 0.3, d_max: 20.0, ttc_max: 10.0, fear_sigma: 1.0, panic_sigma: 0.5, v_cap: 2.0 }
    }
}

/// `f_t`: robot state relative to the goal and scenario/time descriptors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepFeatures {
    pub rel_x: f64,
    pub rel_y: f64,
    pub rel_theta: f64,
    /// Norm of the planar velocity.
    pub speed_linear: f64,
    /// Velocity component along the robot's left axis.
    pub speed_lateral: f64,
    pub speed_angular: f64,
    pub accel_linear: f64,
    pub accel_angular: f64,
    pub position_threshold: f64,
    pub orientation_threshold: f64,
    pub humans_present: bool,
    pub walls_exist: bool,
    pub step_ratio: f64,
    pub last_step: bool,
}

impl StepFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.rel_x,
            self.rel_y,
            self.rel_theta,
            self.speed_linear,
            self.speed_lateral,
            self.speed_angular,
            self.accel_linear,
            self.accel_angular,
            self.position_threshold,
            self.orientation_threshold,
            flag(self.humans_present),
            flag(self.walls_exist),
            self.step_ratio,
            flag(self.last_step),
        ]
    }
}

/// `m_t`: analytic navigation metrics at one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricFeatures {
    pub goal_reached: bool,
    pub dist_nearest_human: f64,
    pub dist_nearest_object: f64,
    pub dist_nearest_wall: f64,
    pub collided_human: bool,
    pub collided_object: bool,
    pub collided_wall: bool,
    /// Humans within 0.4, 0.6 and 0.8 m of the robot centre.
    pub humans_within: [u32; 3],
    pub intrusion: [bool; 3],
    pub min_time_to_collision: f64,
    pub max_cost_of_fear: f64,
    pub max_cost_of_panic: f64,
    pub min_human_dist_so_far: f64,
    pub path_efficiency: f64,
}

impl MetricFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            flag(self.goal_reached),
            self.dist_nearest_human,
            self.dist_nearest_object,
            self.dist_nearest_wall,
            flag(self.collided_human),
            flag(self.collided_object),
            flag(self.collided_wall),
            self.humans_within[0] as f64,
            self.humans_within[1] as f64,
            self.humans_within[2] as f64,
            flag(self.intrusion[0]),
            flag(self.intrusion[1]),
            flag(self.intrusion[2]),
            self.min_time_to_collision,
            self.max_cost_of_fear,
            self.max_cost_of_panic,
            self.min_human_dist_so_far,
            self.path_efficiency,
        ]
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub(crate) fn check_index(t: &Trajectory, i: usize) -> Result<(), FeatureError> {
    if i < t.frames.len() {
        Ok(())
    } else {
        Err(FeatureError::IndexOutOfRange { index: i, len: t.frames.len() })
    }
}

/// Reference pose the robot is evaluated against at step `i`: the task target
/// for go-to/guide-to, the tracked human for follow/interact-with.
pub fn goal_reference(t: &Trajectory, i: usize) -> Pose2D {
    if let Some(p) = t.task.target_position {
        return Pose2D::new(p.x, p.y, t.task.target_orientation.unwrap_or(0.0));
    }
    if let Some(hid) = t.task.human_id {
        if let Some(h) = t.frames[..=i.min(t.frames.len() - 1)]
            .iter()
            .rev()
            .find_map(|f| f.humans.iter().find(|h| h.id == hid))
        {
            return h.pose;
        }
    }
    Pose2D::ORIGIN
}

/// Body-frame (forward, lateral) velocity of the robot at frame `i`.
pub(crate) fn body_velocity(t: &Trajectory, i: usize) -> Point2 {
    let f = &t.frames[i];
    f.robot_speed.linear().rotate(-f.robot_pose.theta)
}

fn derivative(t: &Trajectory, i: usize, value: impl Fn(usize) -> f64) -> f64 {
    let n = t.frames.len();
    if i == 0 || n < 2 {
        return 0.0;
    }
    let (a, b) = if i + 1 < n { (i - 1, i + 1) } else { (i - 1, i) };
    let dt = t.frames[b].timestamp - t.frames[a].timestamp;
    (value(b) - value(a)) / dt
}

/// `f_t` at frame `i`. Acceleration is zero at the first step, a central
/// difference in the interior and a backward difference at the last step.
pub fn step_features(t: &Trajectory, i: usize) -> Result<StepFeatures, FeatureError> {
    check_index(t, i)?;
    let n = t.frames.len();
    let f = &t.frames[i];
    let rel = goal_reference(t, i).inverse().compose(&f.robot_pose);
    let v = body_velocity(t, i);
    let speed = |j: usize| t.frames[j].robot_speed.linear().norm();
    let angular = |j: usize| t.frames[j].robot_speed.angular;
    Ok(StepFeatures {
        rel_x: rel.x,
        rel_y: rel.y,
        rel_theta: rel.theta,
        speed_linear: v.norm(),
        speed_lateral: v.y,
        speed_angular: f.robot_speed.angular,
        accel_linear: derivative(t, i, speed),
        accel_angular: derivative(t, i, angular),
        position_threshold: t.task.position_threshold.unwrap_or(0.0),
        orientation_threshold: t.task.orientation_threshold.unwrap_or(std::f64::consts::PI),
        humans_present: !f.humans.is_empty(),
        walls_exist: !t.environment.walls.is_empty(),
        step_ratio: if n > 1 { i as f64 / (n - 1) as f64 } else { 1.0 },
        last_step: i + 1 == n,
    })
}

/// `m_t` for every frame, computed in one pass so the running quantities
/// (minimum human distance so far, path length) are incremental.
pub fn trajectory_metrics(t: &Trajectory, params: &FeatureParams) -> Vec<MetricFeatures> {
    let mut out = Vec::with_capacity(t.frames.len());
    let mut min_so_far = f64::INFINITY;
    let start = t.frames[0].robot_pose.position();
    let d0 = start.distance(goal_reference(t, 0).position());
    let mut arc = 0.0;
    for i in 0..t.frames.len() {
        if i > 0 {
            arc += t.frames[i].robot_pose.position().distance(t.frames[i - 1].robot_pose.position());
        }
        let dh = distance_to_nearest(t, i, EntityKind::Human, params);
        min_so_far = min_so_far.min(dh);
        let (ch, co, cw) = collision_flags(t, i, params);
        let (counts, intrusion) = proximity_counts(t, i);
        let (fear, panic) = fear_panic_costs(t, i, params);
        out.push(MetricFeatures {
            goal_reached: goal_reached(t, i),
            dist_nearest_human: dh,
            dist_nearest_object: distance_to_nearest(t, i, EntityKind::Object, params),
            dist_nearest_wall: distance_to_nearest(t, i, EntityKind::Wall, params),
            collided_human: ch,
            collided_object: co,
            collided_wall: cw,
            humans_within: counts,
            intrusion,
            min_time_to_collision: time_to_collision(t, i, params),
            max_cost_of_fear: fear,
            max_cost_of_panic: panic,
            min_human_dist_so_far: min_so_far,
            path_efficiency: metrics::efficiency_ratio(d0, arc),
        });
    }
    out
}

/// Minimum nearest-human distance over frames `0..=i`.
pub fn min_human_dist_so_far(t: &Trajectory, i: usize, params: &FeatureParams) -> Result<f64, FeatureError> {
    check_index(t, i)?;
    Ok((0..=i)
        .map(|j| distance_to_nearest(t, j, EntityKind::Human, params))
        .fold(f64::INFINITY, f64::min))
}
