//! In-memory representation of trajectory and ratings files.
//!
//! Every struct carries an `extra` map that captures JSON keys this crate does
//! not know about, so a parse/serialize cycle never drops data. Keys are
//! written in declaration order followed by the unknown keys in sorted order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use crate::geometry::{Point2, Pose2D};

/// Unknown JSON members, preserved verbatim.
pub type Extra = BTreeMap<String, Value>;

/// Number of COCO-18 keypoints per human.
pub const COCO18_KEYPOINTS: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist2D {
    pub linear_x: f64,
    pub linear_y: f64,
    pub angular: f64,
}

impl Twist2D {
    pub fn linear(&self) -> Point2 {
        Point2::new(self.linear_x, self.linear_y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Circle { radius: f64 },
    /// Axis-aligned in the owner's local frame: `width` along x, `height` along y.
    Rectangle { width: f64, height: f64 },
    /// Vertices in the owner's local frame.
    Polygon { vertices: Vec<Point2> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ShapeRepr", into = "ShapeRepr")]
pub struct Shape2D {
    pub geometry: Geometry,
    pub extra: Extra,
}

impl Shape2D {
    pub fn circle(radius: f64) -> Self {
        Self { geometry: Geometry::Circle { radius }, extra: Extra::new() }
    }

    pub fn rectangle(width: f64, height: f64) -> Self {
        Self { geometry: Geometry::Rectangle { width, height }, extra: Extra::new() }
    }

    pub fn polygon(vertices: Vec<Point2>) -> Self {
        Self { geometry: Geometry::Polygon { vertices }, extra: Extra::new() }
    }

    /// Radius of the smallest origin-centred circle containing the shape.
    pub fn circumradius(&self) -> f64 {
        match &self.geometry {
            Geometry::Circle { radius } => *radius,
            Geometry::Rectangle { width, height } => 0.5 * width.hypot(*height),
            Geometry::Polygon { vertices } => vertices.iter().map(|v| v.norm()).fold(0.0, f64::max),
        }
    }

    /// Outline in the local frame, or `None` for circles.
    pub fn outline(&self) -> Option<Vec<Point2>> {
        match &self.geometry {
            Geometry::Circle { .. } => None,
            Geometry::Rectangle { width, height } => {
                let (hw, hh) = (0.5 * width, 0.5 * height);
                Some(vec![
                    Point2::new(-hw, -hh),
                    Point2::new(hw, -hh),
                    Point2::new(hw, hh),
                    Point2::new(-hw, hh),
                ])
            }
            Geometry::Polygon { vertices } => Some(vertices.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ShapeKind {
    Circle,
    Rectangle,
    Polygon,
}

#[derive(Serialize, Deserialize)]
struct ShapeRepr {
    #[serde(rename = "type")]
    kind: ShapeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vertices: Option<Vec<Point2>>,
    #[serde(flatten)]
    extra: Extra,
}

impl TryFrom<ShapeRepr> for Shape2D {
    type Error = String;

    fn try_from(r: ShapeRepr) -> Result<Self, String> {
        let geometry = match r.kind {
            ShapeKind::Circle => Geometry::Circle { radius: r.radius.ok_or("circle requires `radius`")? },
            ShapeKind::Rectangle => Geometry::Rectangle {
                width: r.width.ok_or("rectangle requires `width`")?,
                height: r.height.ok_or("rectangle requires `height`")?,
            },
            ShapeKind::Polygon => Geometry::Polygon { vertices: r.vertices.ok_or("polygon requires `vertices`")? },
        };
        Ok(Shape2D { geometry, extra: r.extra })
    }
}

impl From<Shape2D> for ShapeRepr {
    fn from(s: Shape2D) -> Self {
        let mut r = ShapeRepr {
            kind: ShapeKind::Circle,
            radius: None,
            width: None,
            height: None,
            vertices: None,
            extra: s.extra,
        };
        match s.geometry {
            Geometry::Circle { radius } => r.radius = Some(radius),
            Geometry::Rectangle { width, height } => {
                r.kind = ShapeKind::Rectangle;
                r.width = Some(width);
                r.height = Some(height);
            }
            Geometry::Polygon { vertices } => {
                r.kind = ShapeKind::Polygon;
                r.vertices = Some(vertices);
            }
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Drive {
    #[serde(rename = "differential")]
    Differential,
    #[serde(rename = "omnidirectional", alias = "omni")]
    Omnidirectional,
    #[serde(rename = "ackerman", alias = "ackermann")]
    Ackerman,
    #[serde(rename = "biomimetic")]
    Biomimetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub drive: Drive,
    pub shape: Shape2D,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskType {
    #[serde(rename = "go-to", alias = "go_to")]
    GoTo,
    #[serde(rename = "guide-to", alias = "guide_to")]
    GuideTo,
    #[serde(rename = "follow")]
    Follow,
    #[serde(rename = "interact-with", alias = "interact_with")]
    InteractWith,
}

impl TaskType {
    pub fn needs_target(self) -> bool {
        matches!(self, TaskType::GoTo | TaskType::GuideTo)
    }

    pub fn needs_human(self) -> bool {
        !matches!(self, TaskType::GoTo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    #[serde(rename = "type")]
    pub task_type: TaskType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_position: Option<Point2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_orientation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_id: Option<i64>,
    #[serde(default)]
    pub context: String,
    #[serde(flatten)]
    pub extra: Extra,
}

impl Task {
    /// Target pose when both position and orientation are given.
    pub fn goal_pose(&self) -> Option<Pose2D> {
        let p = self.target_position?;
        let theta = self.target_orientation?;
        Some(Pose2D::new(p.x, p.y, theta))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanState {
    pub id: i64,
    pub pose: Pose2D,
    /// COCO-18 keypoints `(x, y, z)` in metres, world frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keypoints: Option<Vec<[f64; 3]>>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub id: i64,
    #[serde(rename = "type")]
    pub type_text: String,
    pub pose: Pose2D,
    pub shape: Shape2D,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub timestamp: f64,
    pub robot_pose: Pose2D,
    #[serde(default)]
    pub robot_speed: Twist2D,
    #[serde(default)]
    pub humans: Vec<HumanState>,
    #[serde(default)]
    pub objects: Vec<ObjectState>,
    #[serde(flatten)]
    pub extra: Extra,
}

/// Occupancy grid with ROS `nav_msgs/OccupancyGrid` semantics: row-major,
/// cell `(col, row)` sits at `origin ⊕ (col·res, row·res)`, values 0–100
/// occupancy probability and -1 unknown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    pub resolution: f64,
    pub origin: Pose2D,
    pub width: u32,
    pub height: u32,
    pub data: Vec<i8>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl GridMap {
    pub fn cell(&self, col: u32, row: u32) -> i8 {
        self.data[(row * self.width + col) as usize]
    }

    /// World-frame centre of a cell.
    pub fn cell_center(&self, col: u32, row: u32) -> Point2 {
        let local = Point2::new((col as f64 + 0.5) * self.resolution, (row as f64 + 0.5) * self.resolution);
        self.origin.transform_point(local)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Environment {
    #[serde(default)]
    pub walls: Vec<Vec<Point2>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridMap>,
    #[serde(default)]
    pub area_semantics: String,
    #[serde(flatten)]
    pub extra: Extra,
}

impl Environment {
    /// All wall segments as point pairs.
    pub fn wall_segments(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        self.walls.iter().flat_map(|line| line.windows(2).map(|w| (w[0], w[1])))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Path relative to the dataset's `trajectories/` directory. Not stored in the file.
    #[serde(skip)]
    pub id: String,
    pub robot: RobotSpec,
    pub task: Task,
    #[serde(default)]
    pub environment: Environment,
    pub frames: Vec<Frame>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl Trajectory {
    /// Duration between first and last frame, in seconds.
    pub fn duration(&self) -> f64 {
        match (self.frames.first(), self.frames.last()) {
            (Some(a), Some(b)) => b.timestamp - a.timestamp,
            _ => 0.0,
        }
    }

    /// Source directory: the first component of the identifier.
    pub fn source(&self) -> &str {
        self.id.split('/').next().unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    #[serde(rename = "female")]
    Female,
    #[serde(rename = "male")]
    Male,
    #[serde(rename = "non-binary", alias = "non_binary")]
    NonBinary,
    #[serde(rename = "transgender")]
    Transgender,
    #[serde(rename = "other")]
    Other,
    #[serde(rename = "no-answer", alias = "no_answer")]
    NoAnswer,
}

impl Gender {
    pub const ALL: [Gender; 6] = [
        Gender::Female,
        Gender::Male,
        Gender::NonBinary,
        Gender::Transgender,
        Gender::Other,
        Gender::NoAnswer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::NonBinary => "non-binary",
            Gender::Transgender => "transgender",
            Gender::Other => "other",
            Gender::NoAnswer => "no-answer",
        }
    }
}

/// One `(trajectory, context, score)` tuple, stored as a JSON array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "(String, String, f64)", into = "(String, String, f64)")]
pub struct Rating {
    pub trajectory_id: String,
    pub context: String,
    pub score: f64,
}

impl From<(String, String, f64)> for Rating {
    fn from((trajectory_id, context, score): (String, String, f64)) -> Self {
        Rating { trajectory_id, context, score }
    }
}

impl From<Rating> for (String, String, f64) {
    fn from(r: Rating) -> Self {
        (r.trajectory_id, r.context, r.score)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterRecord {
    /// File stem relative to the dataset's `ratings/` directory. Not stored in the file.
    #[serde(skip)]
    pub id: String,
    pub age: u32,
    pub gender: Gender,
    pub country: String,
    pub ratings: Vec<Rating>,
    #[serde(flatten)]
    pub extra: Extra,
}
