#![allow(dead_code)]

use std::f64::consts::PI;

use proptest::prelude::*;
use serde_json::json;
use socnav_core::dataset::*;

pub fn angle() -> impl Strategy<Value = f64> {
    (-PI + 1e-9)..=PI
}

pub fn pose(extent: f64) -> impl Strategy<Value = Pose2D> {
    (-extent..extent, -extent..extent, angle()).prop_map(|(x, y, theta)| Pose2D { x, y, theta })
}

pub fn point(extent: f64) -> impl Strategy<Value = Point2> {
    (-extent..extent, -extent..extent).prop_map(|(x, y)| Point2::new(x, y))
}

pub fn extra() -> impl Strategy<Value = Extra> {
    prop::option::of(("x_[a-z]{1,6}", prop_oneof![any::<i32>().prop_map(|v| json!(v)), "[a-z ]{0,8}".prop_map(|s| json!(s))]))
        .prop_map(|kv| kv.into_iter().collect())
}

pub fn shape() -> impl Strategy<Value = Shape2D> {
    prop_oneof![
        (0.05f64..1.0).prop_map(Shape2D::circle),
        (0.05f64..1.5, 0.05f64..1.5).prop_map(|(w, h)| Shape2D::rectangle(w, h)),
    ]
}

fn keypoints() -> impl Strategy<Value = Option<Vec<[f64; 3]>>> {
    prop::option::weighted(0.3, prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, 0.0f64..1.0).prop_map(|(a, b, c)| [a, b, c]), 18))
}

fn humans(extent: f64) -> impl Strategy<Value = Vec<HumanState>> {
    prop::collection::btree_set(0i64..8, 0..5).prop_flat_map(move |ids| {
        let n = ids.len();
        (Just(ids), prop::collection::vec((pose(extent), keypoints(), extra()), n)).prop_map(|(ids, rest)| {
            ids.into_iter()
                .zip(rest)
                .map(|(id, (pose, keypoints, extra))| HumanState { id, pose, keypoints, extra })
                .collect()
        })
    })
}

fn objects(extent: f64) -> impl Strategy<Value = Vec<ObjectState>> {
    prop::collection::btree_set(0i64..6, 0..3).prop_flat_map(move |ids| {
        let n = ids.len();
        (Just(ids), prop::collection::vec((pose(extent), shape(), "[a-z]{1,8}"), n)).prop_map(|(ids, rest)| {
            ids.into_iter()
                .zip(rest)
                .map(|(id, (pose, shape, type_text))| ObjectState { id, type_text, pose, shape, extra: Extra::new() })
                .collect()
        })
    })
}

fn frame(extent: f64) -> impl Strategy<Value = (f64, Frame)> {
    (0.01f64..1.0, pose(extent), (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), humans(extent), objects(extent), extra()).prop_map(
        |(dt, robot_pose, (vx, vy, w), humans, objects, extra)| {
            let f = Frame {
                timestamp: 0.0,
                robot_pose,
                robot_speed: Twist2D { linear_x: vx, linear_y: vy, angular: w },
                humans,
                objects,
                extra,
            };
            (dt, f)
        },
    )
}

fn grid() -> impl Strategy<Value = GridMap> {
    (1u32..5, 1u32..5, 0.05f64..1.0, pose(5.0)).prop_flat_map(|(w, h, resolution, origin)| {
        prop::collection::vec(prop_oneof![Just(-1i8), 0i8..=100], (w * h) as usize).prop_map(move |data| GridMap {
            resolution,
            origin,
            width: w,
            height: h,
            data,
            extra: Extra::new(),
        })
    })
}

fn environment(extent: f64) -> impl Strategy<Value = Environment> {
    (
        prop::collection::vec(prop::collection::vec(point(extent), 2..4), 0..3),
        prop::option::weighted(0.3, grid()),
        "[a-z]{0,10}",
        extra(),
    )
        .prop_map(|(walls, grid, area_semantics, extra)| Environment { walls, grid, area_semantics, extra })
}

/// Valid go-to trajectories with 2..`max_frames` frames.
pub fn trajectory(max_frames: usize) -> impl Strategy<Value = Trajectory> {
    let extent = 8.0;
    (
        shape(),
        prop_oneof![Just(Drive::Differential), Just(Drive::Omnidirectional), Just(Drive::Ackerman), Just(Drive::Biomimetic)],
        point(extent),
        angle(),
        0.0f64..1.0,
        0.0f64..=PI,
        environment(extent),
        prop::collection::vec(frame(extent), 2..max_frames),
        extra(),
    )
        .prop_map(|(shape, drive, target, orientation, pos_th, ori_th, environment, frames, extra)| {
            let mut ts = 0.0;
            let frames = frames
                .into_iter()
                .map(|(dt, mut f)| {
                    ts += dt;
                    f.timestamp = ts;
                    f
                })
                .collect();
            Trajectory {
                id: String::new(),
                robot: RobotSpec { drive, shape, extra: Extra::new() },
                task: Task {
                    task_type: TaskType::GoTo,
                    target_position: Some(target),
                    position_threshold: Some(pos_th),
                    target_orientation: Some(orientation),
                    orientation_threshold: Some(ori_th),
                    human_id: None,
                    context: "carry a parcel".into(),
                    extra: Extra::new(),
                },
                environment,
                frames,
                extra,
            }
        })
}

pub fn rater() -> impl Strategy<Value = RaterRecord> {
    (
        1u32..=130,
        prop::sample::select(Gender::ALL.to_vec()),
        "[A-Z]{2}",
        prop::collection::vec(("[a-z]{1,6}/[0-9]{1,4}\\.json", "[A-Za-z ,.]{0,30}", 0.0f64..=1.0), 1..20),
        extra(),
    )
        .prop_map(|(age, gender, country, ratings, extra)| RaterRecord {
            id: String::new(),
            age,
            gender,
            country,
            ratings: ratings.into_iter().map(|(a, b, c)| Rating { trajectory_id: a, context: b, score: c }).collect(),
            extra,
        })
}

/// Arbitrary JSON trees.
pub fn json_value() -> impl Strategy<Value = serde_json::Value> {
    let leaf = prop_oneof![
        Just(serde_json::Value::Null),
        any::<bool>().prop_map(serde_json::Value::from),
        any::<i64>().prop_map(serde_json::Value::from),
        (-1e6f64..1e6).prop_map(serde_json::Value::from),
        "[a-z_-]{0,12}".prop_map(serde_json::Value::from),
    ];
    leaf.prop_recursive(4, 64, 8, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..6).prop_map(serde_json::Value::from),
            prop::collection::btree_map(
                prop_oneof![
                    Just("robot".to_string()),
                    Just("task".to_string()),
                    Just("frames".to_string()),
                    Just("type".to_string()),
                    Just("timestamp".to_string()),
                    Just("robot_pose".to_string()),
                    "[a-z_]{1,8}"
                ],
                inner,
                0..6
            )
            .prop_map(|m| serde_json::Value::Object(m.into_iter().collect())),
        ]
    })
}

pub fn frame_at(ts: f64, x: f64, y: f64, theta: f64, vx: f64, vy: f64) -> Frame {
    Frame {
        timestamp: ts,
        robot_pose: Pose2D { x, y, theta },
        robot_speed: Twist2D { linear_x: vx, linear_y: vy, angular: 0.0 },
        humans: vec![],
        objects: vec![],
        extra: Extra::new(),
    }
}

pub fn human_at(id: i64, x: f64, y: f64) -> HumanState {
    HumanState { id, pose: Pose2D { x, y, theta: 0.0 }, keypoints: None, extra: Extra::new() }
}

/// Go-to task with a 0.3 m circular robot.
pub fn go_to(goal: Pose2D, frames: Vec<Frame>) -> Trajectory {
    Trajectory {
        id: "test/t.json".into(),
        robot: RobotSpec { drive: Drive::Differential, shape: Shape2D::circle(0.3), extra: Extra::new() },
        task: Task {
            task_type: TaskType::GoTo,
            target_position: Some(goal.position()),
            position_threshold: Some(0.2),
            target_orientation: Some(goal.theta),
            orientation_threshold: Some(0.5),
            human_id: None,
            context: String::new(),
            extra: Extra::new(),
        },
        environment: Environment::default(),
        frames,
        extra: Extra::new(),
    }
}
