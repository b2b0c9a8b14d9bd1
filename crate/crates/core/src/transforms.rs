//! Normalization and augmentation of whole trajectories.
//!
//! All transforms take a trajectory by reference and return a new one; frame
//! count, timestamps and every identifier are preserved.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Geometry, GridMap, Point2, Pose2D, Shape2D, Trajectory, Twist2D};
use crate::geometry::normalize_angle;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TransformError {
    #[error("task has no target pose to use as the reference frame")]
    MissingGoal,
    #[error("invalid transform configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformConfig {
    pub noise_sigma_position: f64,
    pub noise_sigma_angle: f64,
    /// Goal orientation thresholds at or above this value get a random target orientation.
    pub orientation_threshold_randomize: f64,
    pub mirror_probability: f64,
    pub rng_seed: u64,
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self {
            noise_sigma_position: 0.01,
            noise_sigma_angle: 0.01,
            orientation_threshold_randomize: PI,
            mirror_probability: 0.5,
            rng_seed: 0,
        }
    }
}

impl TransformConfig {
    pub fn validate(&self) -> Result<(), TransformError> {
        if !(self.noise_sigma_position >= 0.0 && self.noise_sigma_angle >= 0.0) {
            return Err(TransformError::InvalidConfig("noise sigmas must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.mirror_probability) {
            return Err(TransformError::InvalidConfig("mirror_probability must be within [0, 1]"));
        }
        Ok(())
    }
}

/// A map applied uniformly to every geometric quantity of a trajectory.
trait PlanarMap {
    fn point(&self, p: Point2) -> Point2;
    fn pose(&self, p: Pose2D) -> Pose2D;
    /// World-frame velocity vectors (no translation).
    fn vector(&self, v: Point2) -> Point2;
    fn angular(&self, w: f64) -> f64;
    fn shape(&self, s: &Shape2D) -> Shape2D;
    fn grid(&self, g: &GridMap) -> GridMap;
    fn keypoints(&self, kp: &[[f64; 3]]) -> Vec<[f64; 3]>;
}

fn apply<M: PlanarMap>(t: &Trajectory, m: &M) -> Trajectory {
    let mut out = t.clone();
    out.robot.shape = m.shape(&t.robot.shape);
    if let Some(p) = t.task.target_position {
        let theta = t.task.target_orientation.unwrap_or(0.0);
        let g = m.pose(Pose2D::new(p.x, p.y, theta));
        out.task.target_position = Some(g.position());
        if t.task.target_orientation.is_some() {
            out.task.target_orientation = Some(g.theta);
        }
    }
    for line in &mut out.environment.walls {
        for p in line.iter_mut() {
            *p = m.point(*p);
        }
    }
    if let Some(g) = &t.environment.grid {
        out.environment.grid = Some(m.grid(g));
    }
    for f in &mut out.frames {
        f.robot_pose = m.pose(f.robot_pose);
        let v = m.vector(f.robot_speed.linear());
        f.robot_speed = Twist2D { linear_x: v.x, linear_y: v.y, angular: m.angular(f.robot_speed.angular) };
        for h in &mut f.humans {
            h.pose = m.pose(h.pose);
            if let Some(kp) = &h.keypoints {
                h.keypoints = Some(m.keypoints(kp));
            }
        }
        for o in &mut f.objects {
            o.pose = m.pose(o.pose);
            o.shape = m.shape(&o.shape);
        }
    }
    out
}

/// Rigid map `p ↦ R(-θg)(p - g)` into the frame of a reference pose.
struct IntoFrame {
    inverse: Pose2D,
}

impl PlanarMap for IntoFrame {
    fn point(&self, p: Point2) -> Point2 {
        self.inverse.transform_point(p)
    }
    fn pose(&self, p: Pose2D) -> Pose2D {
        self.inverse.compose(&p)
    }
    fn vector(&self, v: Point2) -> Point2 {
        v.rotate(self.inverse.theta)
    }
    fn angular(&self, w: f64) -> f64 {
        w
    }
    fn shape(&self, s: &Shape2D) -> Shape2D {
        s.clone()
    }
    fn grid(&self, g: &GridMap) -> GridMap {
        GridMap { origin: self.pose(g.origin), ..g.clone() }
    }
    fn keypoints(&self, kp: &[[f64; 3]]) -> Vec<[f64; 3]> {
        kp.iter()
            .map(|k| {
                let p = self.point(Point2::new(k[0], k[1]));
                [p.x, p.y, k[2]]
            })
            .collect()
    }
}

/// COCO-18 index pairs that swap under a left-right reflection.
const COCO18_LR_PAIRS: [(usize, usize); 6] = [(2, 5), (3, 6), (4, 7), (8, 11), (9, 12), (10, 13)];
const COCO18_LR_PAIRS_HEAD: [(usize, usize); 2] = [(14, 15), (16, 17)];

/// Reflection across the x axis.
struct MirrorY;

impl PlanarMap for MirrorY {
    fn point(&self, p: Point2) -> Point2 {
        Point2::new(p.x, -p.y)
    }
    fn pose(&self, p: Pose2D) -> Pose2D {
        Pose2D::new(p.x, -p.y, -p.theta)
    }
    fn vector(&self, v: Point2) -> Point2 {
        Point2::new(v.x, -v.y)
    }
    fn angular(&self, w: f64) -> f64 {
        -w
    }
    fn shape(&self, s: &Shape2D) -> Shape2D {
        let geometry = match &s.geometry {
            Geometry::Polygon { vertices } => Geometry::Polygon {
                // Reversing keeps the winding direction after the reflection.
                vertices: vertices.iter().rev().map(|v| Point2::new(v.x, -v.y)).collect(),
            },
            g => g.clone(),
        };
        Shape2D { geometry, extra: s.extra.clone() }
    }
    fn grid(&self, g: &GridMap) -> GridMap {
        // Row r lands on row H-1-r of a grid whose origin is the reflected
        // origin shifted by -H·res along the reflected y axis.
        let reflected = self.pose(g.origin);
        let shift = Point2::new(0.0, -(g.height as f64) * g.resolution).rotate(reflected.theta);
        let origin = Pose2D::new(reflected.x + shift.x, reflected.y + shift.y, reflected.theta);
        let w = g.width as usize;
        let data = g.data.chunks(w.max(1)).rev().flatten().copied().collect();
        GridMap { origin, data, ..g.clone() }
    }
    fn keypoints(&self, kp: &[[f64; 3]]) -> Vec<[f64; 3]> {
        let mut out: Vec<[f64; 3]> = kp.iter().map(|k| [k[0], -k[1], k[2]]).collect();
        if out.len() == crate::dataset::COCO18_KEYPOINTS {
            for (a, b) in COCO18_LR_PAIRS.iter().chain(&COCO18_LR_PAIRS_HEAD) {
                out.swap(*a, *b);
            }
        }
        out
    }
}

/// Re-expresses every pose, wall, grid origin and velocity in the task's
/// goal frame. The task target becomes the origin with zero orientation.
pub fn to_goal_frame(t: &Trajectory) -> Result<Trajectory, TransformError> {
    let goal = t.task.goal_pose().ok_or(TransformError::MissingGoal)?;
    let mut out = apply(t, &IntoFrame { inverse: goal.inverse() });
    out.task.target_position = Some(Point2::new(0.0, 0.0));
    out.task.target_orientation = Some(0.0);
    Ok(out)
}

/// Left-right reflection (negate y). An involution.
pub fn mirror_lr(t: &Trajectory) -> Trajectory {
    apply(t, &MirrorY)
}

/// Adds i.i.d. zero-mean Gaussian noise to the x, y and θ of every robot,
/// human and object pose. Task, walls and timestamps are untouched.
pub fn jitter_gaussian<R: Rng + ?Sized>(
    t: &Trajectory,
    cfg: &TransformConfig,
    rng: &mut R,
) -> Result<Trajectory, TransformError> {
    cfg.validate()?;
    let mut out = t.clone();
    if cfg.noise_sigma_position == 0.0 && cfg.noise_sigma_angle == 0.0 {
        return Ok(out);
    }
    let pos = Normal::new(0.0, cfg.noise_sigma_position).expect("sigma validated");
    let ang = Normal::new(0.0, cfg.noise_sigma_angle).expect("sigma validated");
    let mut jitter = |p: &mut Pose2D| {
        p.x += pos.sample(rng);
        p.y += pos.sample(rng);
        p.theta = normalize_angle(p.theta + ang.sample(rng));
    };
    for f in &mut out.frames {
        jitter(&mut f.robot_pose);
        for h in &mut f.humans {
            jitter(&mut h.pose);
        }
        for o in &mut f.objects {
            jitter(&mut o.pose);
        }
    }
    Ok(out)
}

/// Uniform sample on `(-π, π]`.
pub fn uniform_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    PI - rng.random_range(0.0..2.0 * PI)
}

/// Replaces the target orientation by a uniform random angle when the task's
/// orientation threshold is at least `threshold` (π by default): such goals
/// do not constrain orientation, so the stored value carries no information.
pub fn randomize_goal_orientation<R: Rng + ?Sized>(t: &Trajectory, threshold: f64, rng: &mut R) -> Trajectory {
    let mut out = t.clone();
    if t.task.orientation_threshold.is_some_and(|th| th >= threshold) {
        out.task.target_orientation = Some(uniform_angle(rng));
    }
    out
}

/// The full augmentation chain driven by a [`TransformConfig`]: orientation
/// randomization, optional mirroring, then pose jitter.
pub fn augment<R: Rng + ?Sized>(t: &Trajectory, cfg: &TransformConfig, rng: &mut R) -> Result<Trajectory, TransformError> {
    cfg.validate()?;
    let mut out = randomize_goal_orientation(t, cfg.orientation_threshold_randomize, rng);
    if rng.random_bool(cfg.mirror_probability) {
        out = mirror_lr(&out);
    }
    jitter_gaussian(&out, cfg, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scene(goal: Pose2D, robot: Pose2D) -> Trajectory {
        let frame = |ts: f64, robot: Pose2D| Frame {
            timestamp: ts,
            robot_pose: robot,
            robot_speed: Twist2D { linear_x: 1.0, linear_y: 0.0, angular: 0.2 },
            humans: vec![HumanState { id: 3, pose: Pose2D::new(1.0, 2.0, PI / 4.0), keypoints: None, extra: Extra::new() }],
            objects: vec![ObjectState {
                id: 9,
                type_text: "table".into(),
                pose: Pose2D::new(-1.0, 1.0, 0.3),
                shape: Shape2D::polygon(vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)]),
                extra: Extra::new(),
            }],
            extra: Extra::new(),
        };
        Trajectory {
            id: "test/scene.json".into(),
            robot: RobotSpec { drive: Drive::Differential, shape: Shape2D::circle(0.3), extra: Extra::new() },
            task: Task {
                task_type: TaskType::GoTo,
                target_position: Some(goal.position()),
                position_threshold: Some(0.1),
                target_orientation: Some(goal.theta),
                orientation_threshold: Some(0.2),
                human_id: None,
                context: "ctx".into(),
                extra: Extra::new(),
            },
            environment: Environment {
                walls: vec![vec![Point2::new(-3.0, -3.0), Point2::new(3.0, -3.0), Point2::new(3.0, 3.0)]],
                grid: Some(GridMap {
                    resolution: 0.5,
                    origin: Pose2D::new(-2.0, -1.0, 0.1),
                    width: 3,
                    height: 2,
                    data: vec![0, 100, -1, 50, 0, 0],
                    extra: Extra::new(),
                }),
                area_semantics: String::new(),
                extra: Extra::new(),
            },
            frames: vec![frame(0.0, robot), frame(0.1, Pose2D::new(robot.x + 0.1, robot.y, robot.theta))],
            extra: Extra::new(),
        }
    }

    fn assert_pose(p: Pose2D, x: f64, y: f64, theta: f64) {
        assert_relative_eq!(p.x, x, epsilon = 1e-12);
        assert_relative_eq!(p.y, y, epsilon = 1e-12);
        assert_relative_eq!(p.theta, theta, epsilon = 1e-12);
    }

    #[test]
    fn robot_at_goal_maps_to_origin() {
        let g = Pose2D::new(2.0, -1.0, 0.8);
        let out = to_goal_frame(&scene(g, g)).unwrap();
        assert_pose(out.frames[0].robot_pose, 0.0, 0.0, 0.0);
        assert_eq!(out.task.target_position, Some(Point2::new(0.0, 0.0)));
        assert_eq!(out.task.target_orientation, Some(0.0));
    }

    #[test]
    fn pure_translation() {
        let out = to_goal_frame(&scene(Pose2D::new(1.0, 0.0, 0.0), Pose2D::ORIGIN)).unwrap();
        assert_pose(out.frames[0].robot_pose, -1.0, 0.0, 0.0);
    }

    #[test]
    fn rotation_matches_hand_composition() {
        // Oracle: p_goal = R(-θg)(p - g) written out component-wise.
        let g = Pose2D::new(0.0, 0.0, PI / 2.0);
        let out = to_goal_frame(&scene(g, Pose2D::new(1.0, 0.0, 0.0))).unwrap();
        assert_pose(out.frames[0].robot_pose, 0.0, -1.0, -PI / 2.0);
        // Speeds are rotated, angular rate is left alone.
        let s = out.frames[0].robot_speed;
        assert_relative_eq!(s.linear_x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(s.linear_y, -1.0, epsilon = 1e-12);
        assert_relative_eq!(s.angular, 0.2);
    }

    #[test]
    fn goal_frame_requires_goal() {
        let mut t = scene(Pose2D::ORIGIN, Pose2D::ORIGIN);
        t.task.target_orientation = None;
        assert_eq!(to_goal_frame(&t), Err(TransformError::MissingGoal));
    }

    #[test]
    fn goal_frame_is_idempotent() {
        let t = scene(Pose2D::new(1.3, -0.4, 2.2), Pose2D::new(-0.5, 0.7, -1.0));
        let once = to_goal_frame(&t).unwrap();
        let twice = to_goal_frame(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn grid_cells_move_rigidly_under_goal_frame() {
        let t = scene(Pose2D::new(1.3, -0.4, 2.2), Pose2D::ORIGIN);
        let g = t.environment.grid.as_ref().unwrap();
        let out = to_goal_frame(&t).unwrap();
        let g2 = out.environment.grid.as_ref().unwrap();
        let inv = t.task.goal_pose().unwrap().inverse();
        for (c, r) in [(0, 0), (2, 1), (1, 0)] {
            let expected = inv.transform_point(g.cell_center(c, r));
            let got = g2.cell_center(c, r);
            assert_relative_eq!(got.x, expected.x, epsilon = 1e-12);
            assert_relative_eq!(got.y, expected.y, epsilon = 1e-12);
            assert_eq!(g.cell(c, r), g2.cell(c, r));
        }
    }

    #[test]
    fn mirror_definition_and_involution() {
        let t = scene(Pose2D::new(1.3, -0.4, 2.2), Pose2D::new(-0.5, 0.7, -1.0));
        let m = mirror_lr(&t);
        assert_pose(m.frames[0].humans[0].pose, 1.0, -2.0, -PI / 4.0);
        assert_relative_eq!(m.frames[0].robot_speed.angular, -0.2);
        let back = mirror_lr(&m);
        // Exact negation twice is bit-identical except for grid origin arithmetic.
        assert_eq!(back.frames, t.frames);
        let (g0, g1) = (t.environment.grid.unwrap(), back.environment.grid.unwrap());
        assert_eq!(g0.data, g1.data);
        assert_relative_eq!(g0.origin.x, g1.origin.x, epsilon = 1e-12);
        assert_relative_eq!(g0.origin.y, g1.origin.y, epsilon = 1e-12);
    }

    #[test]
    fn mirrored_grid_cells_are_reflections() {
        let t = scene(Pose2D::ORIGIN, Pose2D::ORIGIN);
        let g = t.environment.grid.as_ref().unwrap();
        let m = mirror_lr(&t);
        let gm = m.environment.grid.as_ref().unwrap();
        for c in 0..g.width {
            for r in 0..g.height {
                let p = g.cell_center(c, r);
                let q = gm.cell_center(c, g.height - 1 - r);
                assert_relative_eq!(q.x, p.x, epsilon = 1e-12);
                assert_relative_eq!(q.y, -p.y, epsilon = 1e-12);
                assert_eq!(g.cell(c, r), gm.cell(c, g.height - 1 - r));
            }
        }
    }

    #[test]
    fn mirrored_polygon_keeps_winding_and_world_vertices() {
        let t = scene(Pose2D::ORIGIN, Pose2D::ORIGIN);
        let m = mirror_lr(&t);
        let (o, om) = (&t.frames[0].objects[0], &m.frames[0].objects[0]);
        let (Geometry::Polygon { vertices: a }, Geometry::Polygon { vertices: b }) = (&o.shape.geometry, &om.shape.geometry)
        else {
            panic!("polygon expected")
        };
        assert_eq!(crate::geometry::signed_area2(a).signum(), crate::geometry::signed_area2(b).signum());
        let world_a: Vec<Point2> = a.iter().map(|v| o.pose.transform_point(*v)).collect();
        let world_b: Vec<Point2> = b.iter().map(|v| om.pose.transform_point(*v)).collect();
        for (p, q) in world_a.iter().zip(world_b.iter().rev()) {
            assert_relative_eq!(q.x, p.x, epsilon = 1e-12);
            assert_relative_eq!(q.y, -p.y, epsilon = 1e-12);
        }
    }

    #[test]
    fn keypoints_swap_sides_under_mirror() {
        let mut t = scene(Pose2D::ORIGIN, Pose2D::ORIGIN);
        let kp: Vec<[f64; 3]> = (0..18).map(|i| [i as f64, i as f64 + 0.5, 1.0]).collect();
        t.frames[0].humans[0].keypoints = Some(kp.clone());
        let m = mirror_lr(&t);
        let mk = m.frames[0].humans[0].keypoints.as_ref().unwrap();
        assert_eq!(mk[2], [5.0, -5.5, 1.0]);
        assert_eq!(mk[0], [0.0, -0.5, 1.0]);
        assert_eq!(mirror_lr(&m).frames[0].humans[0].keypoints.as_ref().unwrap(), &kp);
    }

    #[test]
    fn zero_sigma_jitter_is_identity_and_seeded_jitter_is_deterministic() {
        let t = scene(Pose2D::new(1.0, 1.0, 0.0), Pose2D::ORIGIN);
        let zero = TransformConfig { noise_sigma_position: 0.0, noise_sigma_angle: 0.0, ..Default::default() };
        assert_eq!(jitter_gaussian(&t, &zero, &mut ChaCha8Rng::seed_from_u64(1)).unwrap(), t);
        let cfg = TransformConfig::default();
        let a = jitter_gaussian(&t, &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = jitter_gaussian(&t, &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, t);
        assert_eq!(a.task, t.task);
        assert_eq!(a.environment, t.environment);
        let ts: Vec<f64> = a.frames.iter().map(|f| f.timestamp).collect();
        assert_eq!(ts, vec![0.0, 0.1]);
    }

    #[test]
    fn jitter_std_matches_sigma() {
        let t = scene(Pose2D::new(1.0, 1.0, 0.0), Pose2D::ORIGIN);
        let cfg = TransformConfig { noise_sigma_position: 0.05, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| jitter_gaussian(&t, &cfg, &mut rng).unwrap().frames[0].robot_pose.x - t.frames[0].robot_pose.x)
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var.sqrt() - 0.05).abs() < 0.05 * 0.05, "std {}", var.sqrt());
    }

    #[test]
    fn negative_sigma_is_rejected() {
        let t = scene(Pose2D::ORIGIN, Pose2D::ORIGIN);
        let cfg = TransformConfig { noise_sigma_angle: -1.0, ..Default::default() };
        assert!(jitter_gaussian(&t, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn goal_orientation_randomization_rule() {
        let mut t = scene(Pose2D::new(1.0, 1.0, 0.4), Pose2D::ORIGIN);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        t.task.orientation_threshold = Some(0.1);
        assert_eq!(randomize_goal_orientation(&t, PI, &mut rng), t);

        t.task.orientation_threshold = Some(PI);
        let out = randomize_goal_orientation(&t, PI, &mut rng);
        assert_ne!(out.task.target_orientation, t.task.target_orientation);
        let mut expect = t.clone();
        expect.task.target_orientation = out.task.target_orientation;
        assert_eq!(out, expect);
    }

    #[test]
    fn randomized_orientation_is_uniform() {
        // 20-bin chi-square with 19 dof: p > 0.01 ⇔ statistic < 36.19.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000;
        let mut bins = [0usize; 20];
        for _ in 0..n {
            let a = uniform_angle(&mut rng);
            assert!(a > -PI && a <= PI);
            let k = (((a + PI) / (2.0 * PI)) * 20.0).ceil() as usize;
            bins[k.clamp(1, 20) - 1] += 1;
        }
        let e = n as f64 / 20.0;
        let chi2: f64 = bins.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
        assert!(chi2 < 36.19, "chi2 {chi2}");
    }
}
