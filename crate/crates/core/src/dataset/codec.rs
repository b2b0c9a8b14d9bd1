//! Parsing, validation and canonical serialization.
//!
//! Parsing runs in three stages, each mapped to one error kind: JSON syntax,
//! schema (shape and types of members, with the JSON path of the offending
//! member), and semantic invariants. Nothing partially built escapes.

use std::collections::HashSet;
use std::f64::consts::PI;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::types::*;
use crate::geometry::{is_simple_polygon, normalize_angle};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("malformed JSON: {0}")]
    Syntax(#[source] serde_json::Error),
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invariant violated at `{path}`: {message}")]
    Invariant { path: String, message: String },
}

impl FormatError {
    fn invariant(path: impl Into<String>, message: impl Into<String>) -> Self {
        FormatError::Invariant { path: path.into(), message: message.into() }
    }

    /// JSON path of the offending member, if any.
    pub fn path(&self) -> Option<&str> {
        match self {
            FormatError::Syntax(_) => None,
            FormatError::Schema { path, .. } | FormatError::Invariant { path, .. } => Some(path),
        }
    }
}

type Result<T> = std::result::Result<T, FormatError>;

fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(FormatError::Syntax)?;
    serde_path_to_error::deserialize(value).map_err(|e| FormatError::Schema {
        path: e.path().to_string(),
        message: e.into_inner().to_string(),
    })
}

fn encode<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec(value).expect("in-memory values always serialize");
    out.push(b'\n');
    out
}

/// Parses and validates one trajectory file. The returned trajectory has an
/// empty `id`; the dataset loader assigns it from the file path.
pub fn parse_trajectory(bytes: &[u8]) -> Result<Trajectory> {
    let mut t: Trajectory = decode(bytes)?;
    normalize_trajectory_angles(&mut t);
    validate_trajectory(&t)?;
    Ok(t)
}

/// Compact JSON, declaration-ordered keys, shortest round-trip floats.
pub fn serialize_trajectory(t: &Trajectory) -> Vec<u8> {
    encode(t)
}

pub fn parse_rater_record(bytes: &[u8]) -> Result<RaterRecord> {
    let r: RaterRecord = decode(bytes)?;
    validate_rater_record(&r)?;
    Ok(r)
}

pub fn serialize_rater_record(r: &RaterRecord) -> Vec<u8> {
    encode(r)
}

fn normalize_pose(p: &mut Pose2D) {
    p.theta = normalize_angle(p.theta);
}

fn normalize_trajectory_angles(t: &mut Trajectory) {
    if let Some(o) = t.task.target_orientation.as_mut() {
        *o = normalize_angle(*o);
    }
    if let Some(g) = t.environment.grid.as_mut() {
        normalize_pose(&mut g.origin);
    }
    for f in &mut t.frames {
        normalize_pose(&mut f.robot_pose);
        for h in &mut f.humans {
            normalize_pose(&mut h.pose);
        }
        for o in &mut f.objects {
            normalize_pose(&mut o.pose);
        }
    }
}

fn check_finite(path: impl FnOnce() -> String, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(FormatError::invariant(path(), "non-finite value"))
    }
}

fn check_pose(path: &str, p: &Pose2D) -> Result<()> {
    check_finite(|| path.to_string(), &[p.x, p.y, p.theta])?;
    if !(p.theta > -PI && p.theta <= PI) {
        return Err(FormatError::invariant(format!("{path}.theta"), "angle outside (-pi, pi]"));
    }
    Ok(())
}

fn check_shape(path: &str, s: &Shape2D) -> Result<()> {
    match &s.geometry {
        Geometry::Circle { radius } => {
            if !(radius.is_finite() && *radius > 0.0) {
                return Err(FormatError::invariant(format!("{path}.radius"), "radius must be > 0"));
            }
        }
        Geometry::Rectangle { width, height } => {
            if !(width.is_finite() && *width > 0.0) {
                return Err(FormatError::invariant(format!("{path}.width"), "width must be > 0"));
            }
            if !(height.is_finite() && *height > 0.0) {
                return Err(FormatError::invariant(format!("{path}.height"), "height must be > 0"));
            }
        }
        Geometry::Polygon { vertices } => {
            if vertices.len() < 3 {
                return Err(FormatError::invariant(format!("{path}.vertices"), "polygon needs at least 3 vertices"));
            }
            if !vertices.iter().all(|v| v.is_finite()) {
                return Err(FormatError::invariant(format!("{path}.vertices"), "non-finite vertex"));
            }
            if !is_simple_polygon(vertices) {
                return Err(FormatError::invariant(format!("{path}.vertices"), "polygon is self-intersecting"));
            }
        }
    }
    Ok(())
}

fn check_threshold(path: &str, v: Option<f64>, required: bool) -> Result<()> {
    match v {
        None if required => Err(FormatError::invariant(path, "required for this task type")),
        Some(x) if !(x.is_finite() && x >= 0.0) => Err(FormatError::invariant(path, "threshold must be finite and >= 0")),
        _ => Ok(()),
    }
}

fn validate_task(task: &Task) -> Result<()> {
    let ty = task.task_type;
    if ty.needs_target() {
        match task.target_position {
            None => return Err(FormatError::invariant("task.target_position", "required for go-to/guide-to")),
            Some(p) if !p.is_finite() => return Err(FormatError::invariant("task.target_position", "non-finite value")),
            _ => {}
        }
        match task.target_orientation {
            None => return Err(FormatError::invariant("task.target_orientation", "required for go-to/guide-to")),
            Some(o) if !o.is_finite() => return Err(FormatError::invariant("task.target_orientation", "non-finite value")),
            _ => {}
        }
        check_threshold("task.orientation_threshold", task.orientation_threshold, true)?;
    } else {
        check_threshold("task.orientation_threshold", task.orientation_threshold, false)?;
    }
    check_threshold("task.position_threshold", task.position_threshold, true)?;
    if ty.needs_human() && task.human_id.is_none() {
        return Err(FormatError::invariant("task.human_id", "required for guide-to/follow/interact-with"));
    }
    Ok(())
}

fn validate_environment(env: &Environment) -> Result<()> {
    for (i, line) in env.walls.iter().enumerate() {
        if line.len() < 2 {
            return Err(FormatError::invariant(format!("environment.walls[{i}]"), "polyline needs at least 2 points"));
        }
        if !line.iter().all(|p| p.is_finite()) {
            return Err(FormatError::invariant(format!("environment.walls[{i}]"), "non-finite point"));
        }
    }
    if let Some(g) = &env.grid {
        if !(g.resolution.is_finite() && g.resolution > 0.0) {
            return Err(FormatError::invariant("environment.grid.resolution", "resolution must be > 0"));
        }
        check_pose("environment.grid.origin", &g.origin)?;
        let expected = g.width as usize * g.height as usize;
        if g.data.len() != expected {
            return Err(FormatError::invariant(
                "environment.grid.data",
                format!("expected width*height = {expected} cells, found {}", g.data.len()),
            ));
        }
        if let Some(i) = g.data.iter().position(|&v| !(v == -1 || (0..=100).contains(&v))) {
            return Err(FormatError::invariant(format!("environment.grid.data[{i}]"), "occupancy must be -1 or 0..=100"));
        }
    }
    Ok(())
}

fn validate_frame(i: usize, f: &Frame) -> Result<()> {
    let at = |s: &str| format!("frames[{i}].{s}");
    check_finite(|| at("timestamp"), &[f.timestamp])?;
    check_pose(&at("robot_pose"), &f.robot_pose)?;
    let s = &f.robot_speed;
    check_finite(|| at("robot_speed"), &[s.linear_x, s.linear_y, s.angular])?;

    let mut seen = HashSet::new();
    for (j, h) in f.humans.iter().enumerate() {
        if !seen.insert(h.id) {
            return Err(FormatError::invariant(at(&format!("humans[{j}].id")), format!("duplicate human id {}", h.id)));
        }
        check_pose(&at(&format!("humans[{j}].pose")), &h.pose)?;
        if let Some(kp) = &h.keypoints {
            if kp.len() != COCO18_KEYPOINTS {
                return Err(FormatError::invariant(
                    at(&format!("humans[{j}].keypoints")),
                    format!("expected {COCO18_KEYPOINTS} COCO-18 keypoints, found {}", kp.len()),
                ));
            }
            if !kp.iter().flatten().all(|v| v.is_finite()) {
                return Err(FormatError::invariant(at(&format!("humans[{j}].keypoints")), "non-finite value"));
            }
        }
    }
    let mut seen = HashSet::new();
    for (j, o) in f.objects.iter().enumerate() {
        if !seen.insert(o.id) {
            return Err(FormatError::invariant(at(&format!("objects[{j}].id")), format!("duplicate object id {}", o.id)));
        }
        if o.type_text.trim().is_empty() {
            return Err(FormatError::invariant(at(&format!("objects[{j}].type")), "object type must be non-empty"));
        }
        check_pose(&at(&format!("objects[{j}].pose")), &o.pose)?;
        check_shape(&at(&format!("objects[{j}].shape")), &o.shape)?;
    }
    Ok(())
}

pub fn validate_trajectory(t: &Trajectory) -> Result<()> {
    check_shape("robot.shape", &t.robot.shape)?;
    validate_task(&t.task)?;
    validate_environment(&t.environment)?;
    if t.frames.len() < 2 {
        return Err(FormatError::invariant("frames", format!("need at least 2 frames, found {}", t.frames.len())));
    }
    for (i, f) in t.frames.iter().enumerate() {
        validate_frame(i, f)?;
        if i > 0 && f.timestamp <= t.frames[i - 1].timestamp {
            return Err(FormatError::invariant(
                format!("frames[{i}].timestamp"),
                "timestamp must be strictly increasing",
            ));
        }
    }
    if let Some(hid) = t.task.human_id {
        if !t.frames[0].humans.iter().any(|h| h.id == hid) {
            return Err(FormatError::invariant("task.human_id", format!("human {hid} not present in frames[0]")));
        }
    }
    Ok(())
}

pub fn validate_rater_record(r: &RaterRecord) -> Result<()> {
    if !(1..=130).contains(&r.age) {
        return Err(FormatError::invariant("age", "age must be within [1, 130]"));
    }
    if r.ratings.is_empty() {
        return Err(FormatError::invariant("ratings", "a completed questionnaire has at least one rating"));
    }
    for (i, rating) in r.ratings.iter().enumerate() {
        if rating.trajectory_id.is_empty() {
            return Err(FormatError::invariant(format!("ratings[{i}][0]"), "empty trajectory identifier"));
        }
        if !(0.0..=1.0).contains(&rating.score) {
            return Err(FormatError::invariant(format!("ratings[{i}].score"), "score must be within [0, 1]"));
        }
    }
    Ok(())
}
