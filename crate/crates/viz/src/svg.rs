//! Minimal SVG writer with fixed number formatting, so equal inputs give equal bytes.

use std::fmt::Write;

pub const FONT: &str = "DejaVu Sans Mono, monospace";

/// Pixel coordinates are written with two decimals.
pub fn num(v: f64) -> String {
    let s = format!("{:.2}", v);
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

pub struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Self { body: String::new(), width, height }
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn raw(&mut self, s: &str) {
        self.body.push_str(s);
        self.body.push('\n');
    }

    fn id_attr(id: Option<&str>) -> String {
        id.map(|i| format!(" id=\"{}\"", escape(i))).unwrap_or_default()
    }

    pub fn rect(&mut self, id: Option<&str>, x: f64, y: f64, w: f64, h: f64, style: &str) {
        let _ = writeln!(
            self.body,
            "<rect{} x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" {style}/>",
            Self::id_attr(id),
            num(x),
            num(y),
            num(w),
            num(h)
        );
    }

    pub fn circle(&mut self, id: Option<&str>, cx: f64, cy: f64, r: f64, style: &str) {
        let _ = writeln!(self.body, "<circle{} cx=\"{}\" cy=\"{}\" r=\"{}\" {style}/>", Self::id_attr(id), num(cx), num(cy), num(r));
    }

    pub fn line(&mut self, id: Option<&str>, a: (f64, f64), b: (f64, f64), style: &str) {
        let _ = writeln!(
            self.body,
            "<line{} x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" {style}/>",
            Self::id_attr(id),
            num(a.0),
            num(a.1),
            num(b.0),
            num(b.1)
        );
    }

    fn points(pts: &[(f64, f64)]) -> String {
        pts.iter().map(|(x, y)| format!("{},{}", num(*x), num(*y))).collect::<Vec<_>>().join(" ")
    }

    pub fn polyline(&mut self, id: Option<&str>, pts: &[(f64, f64)], style: &str) {
        let _ = writeln!(self.body, "<polyline{} points=\"{}\" fill=\"none\" {style}/>", Self::id_attr(id), Self::points(pts));
    }

    pub fn polygon(&mut self, id: Option<&str>, pts: &[(f64, f64)], style: &str) {
        let _ = writeln!(self.body, "<polygon{} points=\"{}\" {style}/>", Self::id_attr(id), Self::points(pts));
    }

    /// `anchor` is `start`, `middle` or `end`.
    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, text: &str) {
        let _ = writeln!(
            self.body,
            "<text x=\"{}\" y=\"{}\" font-family=\"{FONT}\" font-size=\"{}\" text-anchor=\"{anchor}\">{}</text>",
            num(x),
            num(y),
            num(size),
            escape(text)
        );
    }

    pub fn text_rotated(&mut self, x: f64, y: f64, size: f64, text: &str) {
        let _ = writeln!(
            self.body,
            "<text x=\"{0}\" y=\"{1}\" font-family=\"{FONT}\" font-size=\"{2}\" text-anchor=\"middle\" transform=\"rotate(-90 {0} {1})\">{3}</text>",
            num(x),
            num(y),
            num(size),
            escape(text)
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>\n{}</svg>\n",
            self.body,
            w = num(self.width),
            h = num(self.height)
        )
    }
}

/// Fixed categorical palette.
pub const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Sequential colour for `v ∈ [-1, 1]`: blue below zero, white at zero, red above.
pub fn diverging(v: f64) -> String {
    let v = if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 };
    let (r, g, b) = if v >= 0.0 {
        (255.0, 255.0 * (1.0 - v), 255.0 * (1.0 - v))
    } else {
        (255.0 * (1.0 + v), 255.0 * (1.0 + v), 255.0)
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}
