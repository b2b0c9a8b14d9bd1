//! Statistical figures: control questions, consistency heatmap, score
//! histogram and training curves.

use socnav_core::metric::EpochLog;
use socnav_core::qa::ControlStat;

use crate::svg::{diverging, Svg, PALETTE};

/// Rectangular plotting area mapping data coordinates to pixels.
#[derive(Debug, Clone, Copy)]
pub struct Axes {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

impl Axes {
    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let (x0, x1) = self.x_range;
        let (y0, y1) = self.y_range;
        (self.left + (x - x0) / (x1 - x0) * self.width, self.top + (y1 - y) / (y1 - y0) * self.height)
    }

    /// Frame, ticks, tick labels and titles.
    pub fn draw(&self, svg: &mut Svg, title: &str, x_label: &str, y_label: &str, x_ticks: usize, y_ticks: usize) {
        svg.rect(None, self.left, self.top, self.width, self.height, "fill=\"none\" stroke=\"#000000\"");
        for k in (0..=x_ticks).filter(|_| x_ticks > 0) {
            let v = self.x_range.0 + (self.x_range.1 - self.x_range.0) * k as f64 / x_ticks as f64;
            let (px, py) = self.map(v, self.y_range.0);
            svg.line(None, (px, py), (px, py + 4.0), "stroke=\"#000000\"");
            svg.text(px, py + 16.0, 10.0, "middle", &tick_label(v));
        }
        for k in (0..=y_ticks).filter(|_| y_ticks > 0) {
            let v = self.y_range.0 + (self.y_range.1 - self.y_range.0) * k as f64 / y_ticks as f64;
            let (px, py) = self.map(self.x_range.0, v);
            svg.line(None, (px - 4.0, py), (px, py), "stroke=\"#000000\"");
            svg.line(None, (px, py), (px + self.width, py), "stroke=\"#e0e0e0\"");
            svg.text(px - 6.0, py + 3.5, 10.0, "end", &tick_label(v));
        }
        svg.text(self.left + self.width / 2.0, self.top - 8.0, 12.0, "middle", title);
        svg.text(self.left + self.width / 2.0, self.top + self.height + 32.0, 11.0, "middle", x_label);
        svg.text_rotated(self.left - 38.0, self.top + self.height / 2.0, 11.0, y_label);
    }
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Indices of `stats` sorted by ascending mean; ties keep id order.
pub fn control_order(stats: &[ControlStat]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..stats.len()).collect();
    idx.sort_by(|&a, &b| stats[a].mean.total_cmp(&stats[b].mean).then_with(|| stats[a].trajectory_id.cmp(&stats[b].trajectory_id)));
    idx
}

/// Mean ± std per control question, sorted by mean, with optional model
/// estimates aligned with `stats`.
pub fn plot_control_questions(stats: &[ControlStat], estimates: Option<&[f64]>) -> String {
    let order = control_order(stats);
    let n = stats.len().max(1);
    let ax = Axes {
        left: 60.0,
        top: 30.0,
        width: 40.0 * n as f64,
        height: 260.0,
        x_range: (0.0, n as f64),
        y_range: (0.0, 1.0),
    };
    let mut svg = Svg::new(ax.left + ax.width + 140.0, ax.top + ax.height + 50.0);
    ax.draw(&mut svg, "Control questions", "question (sorted by mean score)", "score", 0, 4);
    for (rank, &k) in order.iter().enumerate() {
        let s = &stats[k];
        let x = rank as f64 + 0.5;
        let (px, lo) = ax.map(x, (s.mean - s.std).max(0.0));
        let (_, hi) = ax.map(x, (s.mean + s.std).min(1.0));
        let (_, py) = ax.map(x, s.mean);
        svg.line(None, (px, lo), (px, hi), "stroke=\"#1f77b4\" stroke-width=\"1.50\"");
        svg.line(None, (px - 5.0, lo), (px + 5.0, lo), "stroke=\"#1f77b4\"");
        svg.line(None, (px - 5.0, hi), (px + 5.0, hi), "stroke=\"#1f77b4\"");
        svg.circle(Some(&format!("control-{rank}")), px, py, 4.0, "fill=\"#1f77b4\"");
        svg.text(px, ax.top + ax.height + 14.0, 9.0, "middle", &(rank + 1).to_string());
        if let Some(est) = estimates.and_then(|e| e.get(k)) {
            let (ex, ey) = ax.map(x, *est);
            svg.line(Some(&format!("estimate-{rank}")), (ex - 5.0, ey - 5.0), (ex + 5.0, ey + 5.0), "stroke=\"#d62728\" stroke-width=\"2.00\"");
            svg.line(None, (ex - 5.0, ey + 5.0), (ex + 5.0, ey - 5.0), "stroke=\"#d62728\" stroke-width=\"2.00\"");
        }
    }
    let lx = ax.left + ax.width + 16.0;
    svg.circle(None, lx + 6.0, ax.top + 10.0, 4.0, "fill=\"#1f77b4\"");
    svg.text(lx + 16.0, ax.top + 14.0, 10.0, "start", "mean ± std");
    if estimates.is_some() {
        svg.line(None, (lx + 1.0, ax.top + 25.0), (lx + 11.0, ax.top + 35.0), "stroke=\"#d62728\" stroke-width=\"2.00\"");
        svg.line(None, (lx + 1.0, ax.top + 35.0), (lx + 11.0, ax.top + 25.0), "stroke=\"#d62728\" stroke-width=\"2.00\"");
        svg.text(lx + 16.0, ax.top + 34.0, 10.0, "start", "model");
    }
    svg.finish()
}

/// Pairwise kappa heatmap; cells coloured on the diverging scale.
pub fn plot_consistency_matrix(ids: &[String], matrix: &[Vec<f64>]) -> String {
    let n = ids.len();
    let cell = 14.0;
    let label_w = 9.0 * ids.iter().map(|s| s.chars().count()).max().unwrap_or(1) as f64 * 0.62 + 10.0;
    let (left, top) = (label_w, 40.0);
    let mut svg = Svg::new(left + cell * n as f64 + 20.0, top + cell * n as f64 + 20.0);
    svg.text(left + cell * n as f64 / 2.0, 20.0, 12.0, "middle", "Inter-rater kappa");
    for (i, row) in matrix.iter().enumerate().take(n) {
        svg.text(left - 4.0, top + cell * (i as f64 + 0.75), 9.0, "end", &ids[i]);
        for (j, v) in row.iter().enumerate().take(n) {
            svg.rect(None, left + cell * j as f64, top + cell * i as f64, cell, cell, &format!("fill=\"{}\" stroke=\"#ffffff\"", diverging(*v)));
        }
    }
    svg.finish()
}

/// Bar chart of bin counts over `[0, 1]`.
pub fn plot_histogram(title: &str, counts: &[usize]) -> String {
    let n = counts.len().max(1);
    let top_count = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let ax = Axes { left: 60.0, top: 30.0, width: 400.0, height: 220.0, x_range: (0.0, 1.0), y_range: (0.0, top_count) };
    let mut svg = Svg::new(ax.left + ax.width + 20.0, ax.top + ax.height + 50.0);
    ax.draw(&mut svg, title, "score", "count", 5, 4);
    for (k, c) in counts.iter().enumerate() {
        let (x0, y0) = ax.map(k as f64 / n as f64, *c as f64);
        let (x1, y1) = ax.map((k + 1) as f64 / n as f64, 0.0);
        svg.rect(Some(&format!("bin-{k}")), x0 + 1.0, y0, x1 - x0 - 2.0, y1 - y0, "fill=\"#1f77b4\"");
    }
    svg.finish()
}

/// Training and validation loss per epoch.
pub fn plot_training_log(log: &[EpochLog]) -> String {
    let last = log.last().map(|e| e.epoch).unwrap_or(1).max(1) as f64;
    let top = log.iter().flat_map(|e| [e.train_loss, e.val_loss]).filter(|v| v.is_finite()).fold(0.0, f64::max).max(1e-6);
    let ax = Axes { left: 70.0, top: 30.0, width: 420.0, height: 240.0, x_range: (0.0, last), y_range: (0.0, top) };
    let mut svg = Svg::new(ax.left + ax.width + 120.0, ax.top + ax.height + 50.0);
    ax.draw(&mut svg, "Training", "epoch", "MSE", 5, 4);
    for (k, (name, f)) in [("train", (|e: &EpochLog| e.train_loss) as fn(&EpochLog) -> f64), ("validation", |e: &EpochLog| e.val_loss)]
        .into_iter()
        .enumerate()
    {
        let pts: Vec<(f64, f64)> = log.iter().map(|e| ax.map(e.epoch as f64, f(e))).collect();
        svg.polyline(Some(&format!("loss-{name}")), &pts, &format!("stroke=\"{}\" stroke-width=\"1.50\"", PALETTE[k]));
        let ly = ax.top + 14.0 + 16.0 * k as f64;
        svg.line(None, (ax.left + ax.width + 12.0, ly - 4.0), (ax.left + ax.width + 30.0, ly - 4.0), &format!("stroke=\"{}\" stroke-width=\"2.00\"", PALETTE[k]));
        svg.text(ax.left + ax.width + 36.0, ly, 10.0, "start", name);
    }
    if let Some(best) = log.iter().filter(|e| e.improved).last() {
        let (px, py) = ax.map(best.epoch as f64, best.val_loss);
        svg.circle(Some("best"), px, py, 4.0, "fill=\"none\" stroke=\"#000000\"");
    }
    svg.finish()
}
