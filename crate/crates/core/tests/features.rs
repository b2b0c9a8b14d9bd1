mod common;

use std::f64::consts::PI;

use common::{frame_at, go_to, human_at};
use proptest::prelude::*;
use socnav_core::context::ContextVector;
use socnav_core::dataset::{Pose2D, Trajectory};
use socnav_core::features::*;
use socnav_core::geometry::normalize_angle;
use socnav_core::transforms::{mirror_lr, to_goal_frame};

const NEGATED_UNDER_MIRROR: [&str; 5] = ["goal_rel_y", "goal_rel_theta", "speed_lateral", "speed_angular", "accel_angular"];

fn ctx() -> ContextVector {
    ContextVector([0.5; 10])
}

fn tol(a: f64) -> f64 {
    1e-9 * (1.0 + a.abs())
}

fn half_circle(r: f64, segments: usize) -> Trajectory {
    let frames = (0..=segments)
        .map(|k| {
            let phi = PI - PI * k as f64 / segments as f64;
            frame_at(k as f64 * 0.01, r * phi.cos(), r * phi.sin(), 0.0, 0.0, 0.0)
        })
        .collect();
    go_to(Pose2D::new(r, 0.0, 0.0), frames)
}

#[test]
fn half_circle_efficiency_is_two_over_pi() {
    for r in [0.5, 1.0, 3.0] {
        let t = half_circle(r, 4000);
        let pe = path_efficiency(&t, t.frames.len() - 1);
        assert!((pe - 2.0 / PI).abs() < 1e-6, "r = {r}: {pe}");
        // Polyline oracle: chord length of each of N equal arcs.
        let n = 4000.0;
        let polyline = 2.0 * n * r * (PI / (2.0 * n)).sin();
        assert!((pe - 2.0 * r / polyline).abs() < 1e-12);
    }
}

fn head_on() -> Trajectory {
    let mut frames = vec![frame_at(0.0, 0.0, 0.0, 0.0, 1.0, 0.0), frame_at(0.1, 0.1, 0.0, 0.0, 1.0, 0.0)];
    for f in &mut frames {
        f.humans = vec![human_at(1, 5.0, 0.0)];
    }
    go_to(Pose2D::new(8.0, 0.0, 0.0), frames)
}

#[test]
fn ttc_head_on_matches_closed_form_and_simulation() {
    let p = FeatureParams::default();
    let ttc = time_to_collision(&head_on(), 0, &p);
    // |5 - τ| = 0.3 + 0.3
    assert!((ttc - 4.4).abs() < 1e-6, "{ttc}");
    let mut tau = 0.0;
    while 5.0 - tau > 0.6 {
        tau += 1e-3;
    }
    assert!((ttc - tau).abs() < 1e-3, "{ttc} vs {tau}");
}

fn scene() -> impl Strategy<Value = Trajectory> {
    (
        prop::collection::vec(prop::collection::vec((-1.5f64..1.5, -1.5f64..1.5), 0..7), 2..6),
        (-0.5f64..0.5, -0.5f64..0.5),
        (-1.0f64..1.0, -1.0f64..1.0),
    )
        .prop_map(|(frames, (x0, y0), (vx, vy))| {
            let frames = frames
                .into_iter()
                .enumerate()
                .map(|(k, hs)| {
                    let t = k as f64 * 0.2;
                    let mut f = frame_at(t, x0 + vx * t, y0 + vy * t, 0.3, vx, vy);
                    f.humans = hs.into_iter().enumerate().map(|(id, (x, y))| human_at(id as i64, x, y)).collect();
                    f
                })
                .collect();
            go_to(Pose2D::new(3.0, 1.0, 0.2), frames)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn proximity_counts_match_brute_force(t in scene()) {
        for i in 0..t.frames.len() {
            let (counts, intrusion) = proximity_counts(&t, i);
            let f = &t.frames[i];
            for (k, r) in PROXIMITY_RADII.iter().enumerate() {
                let mut n = 0;
                for h in &f.humans {
                    let (dx, dy) = (h.pose.x - f.robot_pose.x, h.pose.y - f.robot_pose.y);
                    if (dx * dx + dy * dy).sqrt() <= *r {
                        n += 1;
                    }
                }
                prop_assert_eq!(counts[k], n);
                prop_assert_eq!(intrusion[k], n > 0);
            }
            prop_assert!(counts[0] <= counts[1] && counts[1] <= counts[2]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn min_distance_so_far_is_the_prefix_minimum(t in scene()) {
        let p = FeatureParams::default();
        let metrics = trajectory_metrics(&t, &p);
        let mut running = f64::INFINITY;
        for i in 0..t.frames.len() {
            running = running.min(distance_to_nearest(&t, i, EntityKind::Human, &p));
            prop_assert_eq!(min_human_dist_so_far(&t, i, &p).unwrap(), running);
            prop_assert_eq!(metrics[i].min_human_dist_so_far, running);
        }
    }

    #[test]
    fn ttc_is_zero_exactly_on_human_contact(t in scene()) {
        let p = FeatureParams::default();
        for i in 0..t.frames.len() {
            let (human, _, _) = collision_flags(&t, i, &p);
            prop_assert_eq!(time_to_collision(&t, i, &p) == 0.0, human);
        }
    }

    #[test]
    fn features_under_mirror(t in common::trajectory(6)) {
        let p = FeatureParams::default();
        let a = raw_feature_rows(&t, &ctx(), &p).unwrap();
        let b = raw_feature_rows(&mirror_lr(&t), &ctx(), &p).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            for (k, spec) in FEATURE_LAYOUT.iter().enumerate() {
                let (x, y) = (ra[k], rb[k]);
                if spec.name == "goal_rel_theta" {
                    prop_assert!(normalize_angle(x + y).abs() <= 1e-9, "{}: {} vs {}", spec.name, x, y);
                } else if NEGATED_UNDER_MIRROR.contains(&spec.name) {
                    prop_assert!((x + y).abs() <= tol(x), "{}: {} vs {}", spec.name, x, y);
                } else {
                    prop_assert!((x - y).abs() <= tol(x), "{}: {} vs {}", spec.name, x, y);
                }
            }
        }
    }

    #[test]
    fn features_are_goal_frame_invariant(t in common::trajectory(6)) {
        let p = FeatureParams::default();
        let a = raw_feature_rows(&t, &ctx(), &p).unwrap();
        let b = raw_feature_rows(&to_goal_frame(&t).unwrap(), &ctx(), &p).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            for (k, spec) in FEATURE_LAYOUT.iter().enumerate() {
                let (x, y) = (ra[k], rb[k]);
                let d = if spec.unit == "rad" { normalize_angle(x - y).abs() } else { (x - y).abs() };
                prop_assert!(d <= 1e-8 * (1.0 + x.abs()), "{}: {} vs {}", spec.name, x, y);
            }
        }
    }
}

#[test]
fn robot_at_goal_has_zero_relative_pose() {
    let goal = Pose2D::new(2.0, -1.0, 0.7);
    let t = go_to(goal, vec![frame_at(0.0, 0.0, 0.0, 0.0, 0.0, 0.0), frame_at(1.0, 2.0, -1.0, 0.7, 0.0, 0.0)]);
    let f = step_features(&t, 1).unwrap();
    assert!(f.rel_x.abs() < 1e-12 && f.rel_y.abs() < 1e-12 && f.rel_theta.abs() < 1e-12);
    let g = to_goal_frame(&t).unwrap();
    let p = g.frames[1].robot_pose;
    assert!(p.x.abs() < 1e-12 && p.y.abs() < 1e-12 && p.theta.abs() < 1e-12);
}
