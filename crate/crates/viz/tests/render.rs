use socnav_core::dataset::{parse_trajectory, Trajectory};
use socnav_core::geometry::Point2;
use socnav_viz::{export_animation, render_frame, AnimationManifest, RenderOptions, Viewport, VizError, MANIFEST_FILE};

const SCENE: &str = r#"{
    "robot": {"drive": "differential", "shape": {"type": "rectangle", "width": 0.6, "height": 0.4}},
    "task": {"type": "go-to", "target_position": [4.0, 1.0], "position_threshold": 0.3,
             "target_orientation": 0.0, "orientation_threshold": 0.5, "context": "deliver a parcel"},
    "environment": {
        "walls": [[[-1.0, -2.0], [5.0, -2.0], [5.0, 3.0]]],
        "grid": {"resolution": 0.5, "origin": {"x": -1.0, "y": -2.0, "theta": 0.0},
                 "width": 4, "height": 2, "data": [0, 100, 100, -1, 0, 0, 60, 0]},
        "area_semantics": "corridor"
    },
    "frames": [
        {"timestamp": 10.0, "robot_pose": {"x": 0.0, "y": 0.0, "theta": 0.0},
         "robot_speed": {"linear_x": 0.5, "linear_y": 0.0, "angular": 0.0},
         "humans": [{"id": 7, "pose": {"x": 1.0, "y": 0.0, "theta": 3.14159}}],
         "objects": [{"id": 3, "type": "chair", "pose": {"x": 2.0, "y": 1.5, "theta": 0.5},
                      "shape": {"type": "rectangle", "width": 0.5, "height": 0.5}}]},
        {"timestamp": 10.5, "robot_pose": {"x": 0.25, "y": 0.1, "theta": 0.2},
         "robot_speed": {"linear_x": 0.5, "linear_y": 0.0, "angular": 0.4},
         "humans": [{"id": 7, "pose": {"x": 0.9, "y": 0.0, "theta": 3.14159}}],
         "objects": [{"id": 3, "type": "chair", "pose": {"x": 2.0, "y": 1.5, "theta": 0.5},
                      "shape": {"type": "rectangle", "width": 0.5, "height": 0.5}}]},
        {"timestamp": 11.25, "robot_pose": {"x": 0.6, "y": 0.2, "theta": 0.3},
         "robot_speed": {"linear_x": 0.5, "linear_y": 0.0, "angular": 0.1},
         "humans": [{"id": 7, "pose": {"x": 0.8, "y": -0.1, "theta": 3.0}}],
         "objects": []}
    ]
}"#;

fn scene() -> Trajectory {
    let mut t = parse_trajectory(SCENE.as_bytes()).unwrap();
    t.id = "test/scene.json".into();
    t
}

fn attr(svg: &str, id: &str, name: &str) -> f64 {
    let start = svg.find(&format!("id=\"{id}\"")).unwrap_or_else(|| panic!("no element {id}"));
    let rest = &svg[start..];
    let key = format!(" {name}=\"");
    let a = rest.find(&key).unwrap() + key.len();
    let b = a + rest[a..].find('"').unwrap();
    rest[a..b].parse().unwrap()
}

#[test]
fn golden_frame() {
    let svg = render_frame(&scene(), 1, &RenderOptions::default()).unwrap();
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/scene_frame1.svg");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(path, &svg).unwrap();
    }
    let golden = std::fs::read_to_string(path).expect("golden file missing; run with UPDATE_GOLDEN=1");
    assert_eq!(svg, golden);
}

#[test]
fn identical_input_gives_identical_bytes() {
    let opts = RenderOptions::default();
    assert_eq!(render_frame(&scene(), 2, &opts).unwrap(), render_frame(&scene(), 2, &opts).unwrap());
}

#[test]
fn human_pixel_position_inverts_to_world() {
    let t = scene();
    let opts = RenderOptions::default();
    let svg = render_frame(&t, 0, &opts).unwrap();
    let (cx, cy) = (attr(&svg, "human-7", "cx"), attr(&svg, "human-7", "cy"));
    let vp = Viewport::fit(&t, &opts);
    let back = vp.image_to_world(cx, cy);
    // Two-decimal pixel output bounds the error by 0.005 px.
    let tol = 0.005 / opts.scale + 1e-12;
    assert!((back.x - 1.0).abs() <= tol && back.y.abs() <= tol, "{back:?}");
    let (px, py) = vp.world_to_image(Point2::new(1.0, 0.0));
    assert!((px - cx).abs() <= 0.005 && (py - cy).abs() <= 0.005);
}

#[test]
fn y_axis_points_up() {
    let vp = Viewport::fit(&scene(), &RenderOptions::default());
    let (_, low) = vp.world_to_image(Point2::new(0.0, 0.0));
    let (_, high) = vp.world_to_image(Point2::new(0.0, 1.0));
    assert!(high < low);
}

#[test]
fn scene_elements_are_present() {
    let svg = render_frame(&scene(), 0, &RenderOptions::default()).unwrap();
    for id in ["robot", "robot-heading", "goal", "goal-threshold", "human-7", "object-3", "wall-0", "grid", "timestamp"] {
        assert!(svg.contains(&format!("id=\"{id}\"")), "missing {id}");
    }
}

#[test]
fn empty_scene_renders_goal_and_robot_only() {
    let mut t = scene();
    t.environment.walls.clear();
    t.environment.grid = None;
    for f in &mut t.frames {
        f.humans.clear();
        f.objects.clear();
    }
    let svg = render_frame(&t, 0, &RenderOptions::default()).unwrap();
    assert!(svg.contains("id=\"robot\"") && svg.contains("id=\"goal\""));
    assert!(!svg.contains("id=\"human-") && !svg.contains("id=\"object-") && !svg.contains("id=\"wall-") && !svg.contains("id=\"grid\""));
}

#[test]
fn missing_frame_is_an_error() {
    assert!(matches!(render_frame(&scene(), 3, &RenderOptions::default()), Err(VizError::FrameOutOfRange { index: 3, len: 3 })));
}

#[test]
fn animation_writes_one_image_per_frame_and_manifest() {
    let t = scene();
    let dir = tempfile::tempdir().unwrap();
    let m = export_animation(&t, dir.path(), &RenderOptions::default()).unwrap();
    assert_eq!(m.frames.len(), 3);
    for (entry, frame) in m.frames.iter().zip(&t.frames) {
        assert_eq!(entry.timestamp, frame.timestamp);
        assert_eq!(entry.time, frame.timestamp - 10.0);
        assert!(dir.path().join(&entry.file).is_file());
    }
    let on_disk: AnimationManifest = serde_json::from_slice(&std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(on_disk, m);
    let svgs = std::fs::read_dir(dir.path()).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg")).count();
    assert_eq!(svgs, 3);
    let frame1 = std::fs::read_to_string(dir.path().join(&m.frames[1].file)).unwrap();
    assert_eq!(frame1, render_frame(&t, 1, &RenderOptions::default()).unwrap());
}

#[test]
fn empty_trajectory_cannot_be_animated() {
    let mut t = scene();
    t.frames.clear();
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(export_animation(&t, dir.path(), &RenderOptions::default()), Err(VizError::EmptyTrajectory)));
}
