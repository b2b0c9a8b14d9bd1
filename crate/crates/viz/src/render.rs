//! Top-down trajectory rendering.
//!
//! World-to-image transform, for a [`Viewport`] with bounds `min_x`, `max_y`,
//! scale `s` (pixels per metre) and margin `m`:
//!
//! ```text
//! px = m + (x - min_x) · s
//! py = m + (max_y - y) · s
//! ```
//!
//! so world +y points up in the image. The viewport is fitted once per
//! trajectory (all frames, walls, grid and goal) so every frame of an
//! animation shares it.
//!
//! Element ids: `robot`, `robot-heading`, `goal`, `goal-threshold`,
//! `human-<id>`, `object-<id>`, `wall-<k>`, `grid`, `timestamp`.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use socnav_core::dataset::{Geometry, Pose2D, Shape2D, Trajectory};
use socnav_core::features::goal_reference;
use socnav_core::geometry::Point2;

use crate::svg::{num, Svg};
use crate::VizError;

const HUMAN_RADIUS: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    /// Pixels per metre.
    pub scale: f64,
    pub margin: f64,
    pub draw_grid: bool,
    pub draw_path: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { scale: 50.0, margin: 20.0, draw_grid: true, draw_path: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewport {
    pub min_x: f64,
    pub max_x: f64,
    pub min_y: f64,
    pub max_y: f64,
    pub scale: f64,
    pub margin: f64,
}

impl Viewport {
    pub fn fit(t: &Trajectory, opts: &RenderOptions) -> Self {
        let mut pts: Vec<Point2> = Vec::new();
        for f in &t.frames {
            let r = t.robot.shape.circumradius();
            let p = f.robot_pose.position();
            pts.push(p + Point2::new(r, r));
            pts.push(p - Point2::new(r, r));
            for h in &f.humans {
                pts.push(h.pose.position() + Point2::new(HUMAN_RADIUS, HUMAN_RADIUS));
                pts.push(h.pose.position() - Point2::new(HUMAN_RADIUS, HUMAN_RADIUS));
            }
            for o in &f.objects {
                let r = o.shape.circumradius();
                pts.push(o.pose.position() + Point2::new(r, r));
                pts.push(o.pose.position() - Point2::new(r, r));
            }
        }
        pts.extend(t.environment.walls.iter().flatten().copied());
        if let Some(g) = &t.environment.grid {
            let (w, h) = (g.width as f64 * g.resolution, g.height as f64 * g.resolution);
            for c in [Point2::new(0.0, 0.0), Point2::new(w, 0.0), Point2::new(0.0, h), Point2::new(w, h)] {
                pts.push(g.origin.transform_point(c));
            }
        }
        if !t.frames.is_empty() {
            let g = goal_reference(t, 0).position();
            let r = t.task.position_threshold.unwrap_or(0.0).max(0.2);
            pts.push(g + Point2::new(r, r));
            pts.push(g - Point2::new(r, r));
        }
        if pts.is_empty() {
            pts.push(Point2::new(0.0, 0.0));
        }
        let min_x = pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let max_x = pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let min_y = pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let max_y = pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        Self { min_x, max_x, min_y, max_y, scale: opts.scale, margin: opts.margin }
    }

    pub fn width(&self) -> f64 {
        2.0 * self.margin + (self.max_x - self.min_x) * self.scale
    }

    pub fn height(&self) -> f64 {
        2.0 * self.margin + (self.max_y - self.min_y) * self.scale
    }

    pub fn world_to_image(&self, p: Point2) -> (f64, f64) {
        (self.margin + (p.x - self.min_x) * self.scale, self.margin + (self.max_y - p.y) * self.scale)
    }

    pub fn image_to_world(&self, px: f64, py: f64) -> Point2 {
        Point2::new(self.min_x + (px - self.margin) / self.scale, self.max_y - (py - self.margin) / self.scale)
    }
}

fn draw_shape(svg: &mut Svg, vp: &Viewport, id: &str, pose: &Pose2D, shape: &Shape2D, style: &str) {
    match &shape.geometry {
        Geometry::Circle { radius } => {
            let (x, y) = vp.world_to_image(pose.position());
            svg.circle(Some(id), x, y, radius * vp.scale, style);
        }
        Geometry::Rectangle { .. } | Geometry::Polygon { .. } => {
            let pts: Vec<(f64, f64)> =
                shape.outline().unwrap_or_default().into_iter().map(|p| vp.world_to_image(pose.transform_point(p))).collect();
            svg.polygon(Some(id), &pts, style);
        }
    }
}

fn heading(svg: &mut Svg, vp: &Viewport, id: Option<&str>, pose: &Pose2D, length: f64, style: &str) {
    let a = vp.world_to_image(pose.position());
    let b = vp.world_to_image(pose.transform_point(Point2::new(length, 0.0)));
    svg.line(id, a, b, style);
}

fn draw_grid(svg: &mut Svg, vp: &Viewport, t: &Trajectory) {
    let Some(g) = &t.environment.grid else { return };
    svg.raw("<g id=\"grid\">");
    for row in 0..g.height {
        let mut col = 0;
        while col < g.width {
            let v = g.cell(col, row);
            let colour = match v {
                -1 => "#d9d9d9",
                v if v >= 50 => "#404040",
                _ => {
                    col += 1;
                    continue;
                }
            };
            let start = col;
            while col < g.width && (g.cell(col, row) == -1) == (v == -1) && (g.cell(col, row) >= 50) == (v >= 50) {
                col += 1;
            }
            let (x0, y0, x1, y1) = (start as f64 * g.resolution, row as f64 * g.resolution, col as f64 * g.resolution, (row + 1) as f64 * g.resolution);
            let pts: Vec<(f64, f64)> = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
                .into_iter()
                .map(|(x, y)| vp.world_to_image(g.origin.transform_point(Point2::new(x, y))))
                .collect();
            svg.polygon(None, &pts, &format!("fill=\"{colour}\" stroke=\"none\""));
        }
    }
    svg.raw("</g>");
}

fn render_with(t: &Trajectory, i: usize, vp: &Viewport, opts: &RenderOptions) -> Result<String, VizError> {
    let f = t.frames.get(i).ok_or(VizError::FrameOutOfRange { index: i, len: t.frames.len() })?;
    let mut svg = Svg::new(vp.width(), vp.height());
    if opts.draw_grid {
        draw_grid(&mut svg, vp, t);
    }
    for (k, wall) in t.environment.walls.iter().enumerate() {
        let pts: Vec<(f64, f64)> = wall.iter().map(|p| vp.world_to_image(*p)).collect();
        svg.polyline(Some(&format!("wall-{k}")), &pts, "stroke=\"#000000\" stroke-width=\"3.00\"");
    }
    let goal = goal_reference(t, i);
    let (gx, gy) = vp.world_to_image(goal.position());
    if let Some(th) = t.task.position_threshold {
        svg.circle(Some("goal-threshold"), gx, gy, th * vp.scale, "fill=\"#2ca02c\" fill-opacity=\"0.15\" stroke=\"#2ca02c\" stroke-dasharray=\"4 3\"");
    }
    svg.circle(Some("goal"), gx, gy, 4.0, "fill=\"#2ca02c\" stroke=\"none\"");
    if t.task.target_orientation.is_some() {
        heading(&mut svg, vp, Some("goal-heading"), &goal, 0.4, "stroke=\"#2ca02c\" stroke-width=\"2.00\"");
    }
    if opts.draw_path {
        let pts: Vec<(f64, f64)> = t.frames[..=i].iter().map(|f| vp.world_to_image(f.robot_pose.position())).collect();
        if pts.len() > 1 {
            svg.polyline(Some("robot-path"), &pts, "stroke=\"#1f77b4\" stroke-opacity=\"0.5\" stroke-width=\"1.50\"");
        }
    }
    for o in &f.objects {
        draw_shape(&mut svg, vp, &format!("object-{}", o.id), &o.pose, &o.shape, "fill=\"#bcbd22\" fill-opacity=\"0.6\" stroke=\"#6b6b00\"");
    }
    for h in &f.humans {
        let (x, y) = vp.world_to_image(h.pose.position());
        svg.circle(Some(&format!("human-{}", h.id)), x, y, HUMAN_RADIUS * vp.scale, "fill=\"#ff7f0e\" fill-opacity=\"0.7\" stroke=\"#7f3f00\"");
        heading(&mut svg, vp, None, &h.pose, HUMAN_RADIUS * 1.6, "stroke=\"#7f3f00\" stroke-width=\"2.00\"");
    }
    draw_shape(&mut svg, vp, "robot", &f.robot_pose, &t.robot.shape, "fill=\"#1f77b4\" fill-opacity=\"0.7\" stroke=\"#0b3c5d\"");
    heading(&mut svg, vp, Some("robot-heading"), &f.robot_pose, t.robot.shape.circumradius() * 1.5, "stroke=\"#0b3c5d\" stroke-width=\"2.00\"");
    let label = format!("t = {} s", num(f.timestamp - t.frames[0].timestamp));
    svg.raw(&format!(
        "<text id=\"timestamp\" x=\"{}\" y=\"{}\" font-family=\"{}\" font-size=\"12.00\">{}</text>",
        num(vp.margin),
        num(vp.margin * 0.75),
        crate::svg::FONT,
        label
    ));
    Ok(svg.finish())
}

/// SVG of frame `i`.
pub fn render_frame(t: &Trajectory, i: usize, opts: &RenderOptions) -> Result<String, VizError> {
    render_with(t, i, &Viewport::fit(t, opts), opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub file: String,
    /// Seconds since the first frame.
    pub time: f64,
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnimationManifest {
    pub trajectory: String,
    pub viewport: Viewport,
    pub frames: Vec<FrameEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `frame_00000.svg`, ... and `manifest.json` into `dir`.
pub fn export_animation(t: &Trajectory, dir: impl AsRef<Path>, opts: &RenderOptions) -> Result<AnimationManifest, VizError> {
    if t.frames.is_empty() {
        return Err(VizError::EmptyTrajectory);
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| VizError::io(dir, e))?;
    let vp = Viewport::fit(t, opts);
    let t0 = t.frames[0].timestamp;
    let frames = (0..t.frames.len())
        .into_par_iter()
        .map(|i| {
            let file = format!("frame_{i:05}.svg");
            let path: PathBuf = dir.join(&file);
            std::fs::write(&path, render_with(t, i, &vp, opts)?).map_err(|e| VizError::io(&path, e))?;
            Ok(FrameEntry { file, time: t.frames[i].timestamp - t0, timestamp: t.frames[i].timestamp })
        })
        .collect::<Result<Vec<_>, VizError>>()?;
    let manifest = AnimationManifest { trajectory: t.id.clone(), viewport: vp, frames };
    let path = dir.join(MANIFEST_FILE);
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    std::fs::write(&path, bytes).map_err(|e| VizError::io(&path, e))?;
    Ok(manifest)
}
