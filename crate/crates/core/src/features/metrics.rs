//! Analytic per-step navigation metrics.
//!
//! The robot footprint is approximated by the disk of its circumradius
//! centred on the robot pose. Distances are measured from that disk's
//! boundary and are negative on overlap.

use super::{goal_reference, FeatureParams};
use crate::dataset::{Geometry, ObjectState, Trajectory};
use crate::geometry::{angle_distance, point_segment_distance, signed_polygon_distance, Point2};

/// Radii for the proximity counts and intrusion flags, in metres.
pub const PROXIMITY_RADII: [f64; 3] = [0.4, 0.6, 0.8];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityKind {
    Human,
    Object,
    Wall,
}

fn robot_radius(t: &Trajectory) -> f64 {
    t.robot.shape.circumradius()
}

/// Signed distance from a point to an object's outline (negative inside).
fn object_distance(p: Point2, o: &ObjectState) -> f64 {
    match &o.shape.geometry {
        Geometry::Circle { radius } => p.distance(o.pose.position()) - radius,
        _ => {
            let outline: Vec<Point2> = o
                .shape
                .outline()
                .expect("non-circle shapes have an outline")
                .into_iter()
                .map(|v| o.pose.transform_point(v))
                .collect();
            signed_polygon_distance(p, &outline)
        }
    }
}

/// Footprint-boundary distance to the nearest entity of `kind` at frame `i`,
/// capped at `params.d_max`, which is also returned when there is none.
pub fn distance_to_nearest(t: &Trajectory, i: usize, kind: EntityKind, params: &FeatureParams) -> f64 {
    let f = &t.frames[i];
    let c = f.robot_pose.position();
    let centre_distance = match kind {
        EntityKind::Human => f.humans.iter().map(|h| c.distance(h.pose.position())).fold(f64::INFINITY, f64::min),
        EntityKind::Object => f.objects.iter().map(|o| object_distance(c, o)).fold(f64::INFINITY, f64::min),
        EntityKind::Wall => t
            .environment
            .wall_segments()
            .map(|(a, b)| point_segment_distance(c, a, b))
            .fold(f64::INFINITY, f64::min),
    };
    (centre_distance - robot_radius(t)).min(params.d_max)
}

/// `(human, object, wall)` contact flags. Humans are disks of radius
/// `params.human_radius`; a flag is set when the gap is `<= 0`.
pub fn collision_flags(t: &Trajectory, i: usize, params: &FeatureParams) -> (bool, bool, bool) {
    let has = |kind| match kind {
        EntityKind::Human => !t.frames[i].humans.is_empty(),
        EntityKind::Object => !t.frames[i].objects.is_empty(),
        EntityKind::Wall => !t.environment.walls.is_empty(),
    };
    let gap = |kind| distance_to_nearest(t, i, kind, params);
    (
        has(EntityKind::Human) && gap(EntityKind::Human) - params.human_radius <= 0.0,
        has(EntityKind::Object) && gap(EntityKind::Object) <= 0.0,
        has(EntityKind::Wall) && gap(EntityKind::Wall) <= 0.0,
    )
}

/// Humans whose centre lies within each of [`PROXIMITY_RADII`] of the robot
/// centre, and the corresponding intrusion flags (`count > 0`).
pub fn proximity_counts(t: &Trajectory, i: usize) -> ([u32; 3], [bool; 3]) {
    let f = &t.frames[i];
    let c = f.robot_pose.position();
    let mut counts = [0u32; 3];
    for h in &f.humans {
        let d = c.distance(h.pose.position());
        for (k, r) in PROXIMITY_RADII.iter().enumerate() {
            if d <= *r {
                counts[k] += 1;
            }
        }
    }
    (counts, counts.map(|n| n > 0))
}

/// World-frame velocity of human `id` at frame `i`, estimated from its poses
/// in neighbouring frames (zero if it is not tracked there).
pub(crate) fn human_velocity(t: &Trajectory, i: usize, id: i64) -> Point2 {
    let at = |j: usize| t.frames[j].humans.iter().find(|h| h.id == id).map(|h| (t.frames[j].timestamp, h.pose.position()));
    let n = t.frames.len();
    let prev = if i > 0 { at(i - 1) } else { None };
    let next = if i + 1 < n { at(i + 1) } else { None };
    let cur = at(i);
    let (a, b) = match (prev, cur, next) {
        (Some(p), _, Some(q)) => (p, q),
        (None, Some(c), Some(q)) => (c, q),
        (Some(p), Some(c), None) => (p, c),
        _ => return Point2::default(),
    };
    (b.1 - a.1).scale(1.0 / (b.0 - a.0))
}

/// Smallest `τ >= 0` at which `|p + w τ| <= s`, if any.
pub(crate) fn first_contact_time(p: Point2, w: Point2, s: f64) -> Option<f64> {
    let c = p.dot(p) - s * s;
    if c <= 0.0 {
        return Some(0.0);
    }
    let a = w.dot(w);
    let b = p.dot(w);
    if a == 0.0 || b >= 0.0 {
        return None;
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    // Numerically stable form of (-b - sqrt(disc)) / a.
    Some(c / (-b + disc.sqrt()))
}

/// Minimum over humans of the constant-velocity time to contact between the
/// robot disk and a human disk, clamped to `[0, ttc_max]`.
pub fn time_to_collision(t: &Trajectory, i: usize, params: &FeatureParams) -> f64 {
    let f = &t.frames[i];
    let c = f.robot_pose.position();
    let v_robot = f.robot_speed.linear();
    let s = robot_radius(t) + params.human_radius;
    f.humans
        .iter()
        .filter_map(|h| {
            let p = h.pose.position() - c;
            let w = human_velocity(t, i, h.id) - v_robot;
            first_contact_time(p, w, s)
        })
        .fold(params.ttc_max, f64::min)
        .clamp(0.0, params.ttc_max)
}

/// Proxy for the fear and panic costs: for each human,
/// `fear = exp(-d/σ_f)·max(0, v_c)/v_cap` and
/// `panic = exp(-d/σ_p)·(max(0, v_c)/v_cap)²`, where `d` is the (non-negative)
/// footprint-boundary distance and `v_c` the rate at which the centre
/// distance shrinks. Returns the maxima over humans; `(0, 0)` without humans.
pub fn fear_panic_costs(t: &Trajectory, i: usize, params: &FeatureParams) -> (f64, f64) {
    let f = &t.frames[i];
    let c = f.robot_pose.position();
    let v_robot = f.robot_speed.linear();
    let r = robot_radius(t);
    f.humans.iter().fold((0.0, 0.0), |(fear, panic), h| {
        let p = h.pose.position() - c;
        let w = human_velocity(t, i, h.id) - v_robot;
        let dist = p.norm();
        let closing = if dist > 0.0 { -p.dot(w) / dist } else { w.norm() };
        let k = closing.max(0.0) / params.v_cap;
        let d = (dist - r).max(0.0);
        let fe = (-d / params.fear_sigma).exp() * k;
        let pa = (-d / params.panic_sigma).exp() * k * k;
        (f64::max(fear, fe), f64::max(panic, pa))
    })
}

/// True when the robot satisfies the task's goal condition at frame `i`. Both
/// the position and the orientation threshold must hold when both are given.
pub fn goal_reached(t: &Trajectory, i: usize) -> bool {
    let f = &t.frames[i];
    let goal = goal_reference(t, i);
    let task = &t.task;
    let pos_ok = task
        .position_threshold
        .is_none_or(|th| f.robot_pose.position().distance(goal.position()) <= th);
    let ori_ok = match (task.target_orientation, task.orientation_threshold) {
        (Some(o), Some(th)) => angle_distance(f.robot_pose.theta, o) <= th,
        _ => true,
    };
    pos_ok && ori_ok
}

pub(crate) fn efficiency_ratio(d0: f64, arc: f64) -> f64 {
    if d0 <= 0.0 || arc < d0 {
        1.0
    } else {
        d0 / arc
    }
}

/// Initial goal distance over path length travelled up to frame `i`, in
/// `(0, 1]`. It is 1 while the path is shorter than the initial distance and
/// when the robot starts at the goal.
pub fn path_efficiency(t: &Trajectory, i: usize) -> f64 {
    let d0 = t.frames[0].robot_pose.position().distance(goal_reference(t, 0).position());
    let arc: f64 = t.frames[..=i]
        .windows(2)
        .map(|w| w[1].robot_pose.position().distance(w[0].robot_pose.position()))
        .sum();
    efficiency_ratio(d0, arc)
}
