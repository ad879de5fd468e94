//! Self-contained SVG renderings of runs and fields.
//!
//! Overhead trajectory views with lane lines and obstacle rectangles,
//! constraint time series with bound lines, potential-field heatmaps on a
//! sampled grid, and multi-run overlays. No external assets; every style is
//! inline.

use crate::field::{total_potential, Obstacle, ObstacleFieldParams, RoadFieldParams, RoadGeometry};
use crate::sim::SimLog;
use crate::tracker::TrackerBounds;
use std::fmt::Write as _;

/// Road and obstacle geometry drawn under trajectories.
#[derive(Debug, Clone)]
pub struct SceneGeometry {
    pub road: RoadGeometry,
    pub obstacles: Vec<Obstacle>,
}

/// Regular grid of field samples, row-major with iy * nx + ix indexing.
#[derive(Debug, Clone)]
pub struct FieldGrid {
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl FieldGrid {
    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx + ix]
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (self.x0 + (ix as f64 + 0.5) * self.dx, self.y0 + (iy as f64 + 0.5) * self.dy)
    }

    /// Indices of the maximum-valued cell (first on ties).
    pub fn max_cell(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_v = f64::NEG_INFINITY;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let v = self.value(ix, iy);
                if v > best_v {
                    best_v = v;
                    best = (ix, iy);
                }
            }
        }
        best
    }
}

/// Sample the combined obstacle + road field at cell centers.
pub fn sample_field_grid(
    obstacles: &[Obstacle],
    road: &RoadGeometry,
    oparams: &ObstacleFieldParams,
    rparams: &RoadFieldParams,
    ego_speed: f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
    nx: usize,
    ny: usize,
) -> FieldGrid {
    let dx = (x_range.1 - x_range.0) / nx as f64;
    let dy = (y_range.1 - y_range.0) / ny as f64;
    let mut values = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let px = x_range.0 + (ix as f64 + 0.5) * dx;
            let py = y_range.0 + (iy as f64 + 0.5) * dy;
            values.push(total_potential(px, py, ego_speed, obstacles, road, oparams, rparams));
        }
    }
    FieldGrid { x0: x_range.0, y0: y_range.0, dx, dy, nx, ny, values }
}

/// Grid samples as `x,y,value` CSV.
pub fn field_grid_csv(grid: &FieldGrid) -> String {
    let mut out = String::from("x,y,value\n");
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let (x, y) = grid.cell_center(ix, iy);
            let _ = writeln!(out, "{x},{y},{}", grid.value(ix, iy));
        }
    }
    out
}

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 46.0;

const PALETTE: [&str; 8] =
    ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"];

/// World-to-screen mapping for one panel.
struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    left: f64,
    top: f64,
    width: f64,
    height: f64,
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64), left: f64, top: f64, width: f64, height: f64) -> Self {
        let pad = |lo: f64, hi: f64| {
            let span = (hi - lo).abs().max(1e-9);
            (lo - 0.05 * span, hi + 0.05 * span)
        };
        let (x_min, x_max) = pad(x.0, x.1);
        let (y_min, y_max) = pad(y.0, y.1);
        Self { x_min, x_max, y_min, y_max, left, top, width, height }
    }

    fn sx(&self, x: f64) -> f64 {
        self.left + (x - self.x_min) / (self.x_max - self.x_min) * self.width
    }

    fn sy(&self, y: f64) -> f64 {
        self.top + (self.y_max - y) / (self.y_max - self.y_min) * self.height
    }

    fn axes(&self, out: &mut String, x_label: &str, y_label: &str) {
        let _ = write!(
            out,
            "<rect x='{:.1}' y='{:.1}' width='{:.1}' height='{:.1}' fill='none' stroke='#444' stroke-width='1'/>",
            self.left, self.top, self.width, self.height
        );
        for k in 0..=4 {
            let xv = self.x_min + (self.x_max - self.x_min) * k as f64 / 4.0;
            let yv = self.y_min + (self.y_max - self.y_min) * k as f64 / 4.0;
            let sx = self.sx(xv);
            let sy = self.sy(yv);
            let _ = write!(
                out,
                "<line x1='{sx:.1}' y1='{:.1}' x2='{sx:.1}' y2='{:.1}' stroke='#444' stroke-width='1'/>\
                 <text x='{sx:.1}' y='{:.1}' font-size='11' text-anchor='middle' fill='#222' font-family='sans-serif'>{xv:.1}</text>",
                self.top + self.height,
                self.top + self.height + 4.0,
                self.top + self.height + 16.0,
            );
            let _ = write!(
                out,
                "<line x1='{:.1}' y1='{sy:.1}' x2='{:.1}' y2='{sy:.1}' stroke='#444' stroke-width='1'/>\
                 <text x='{:.1}' y='{:.1}' font-size='11' text-anchor='end' fill='#222' font-family='sans-serif'>{yv:.2}</text>",
                self.left - 4.0,
                self.left,
                self.left - 6.0,
                sy + 4.0,
            );
        }
        let _ = write!(
            out,
            "<text x='{:.1}' y='{:.1}' font-size='12' text-anchor='middle' fill='#222' font-family='sans-serif'>{x_label}</text>",
            self.left + self.width / 2.0,
            self.top + self.height + 34.0,
        );
        let _ = write!(
            out,
            "<text x='{:.1}' y='{:.1}' font-size='12' text-anchor='middle' fill='#222' font-family='sans-serif' transform='rotate(-90 {:.1} {:.1})'>{y_label}</text>",
            self.left - 44.0,
            self.top + self.height / 2.0,
            self.left - 44.0,
            self.top + self.height / 2.0,
        );
    }

    fn polyline(&self, out: &mut String, pts: &[(f64, f64)], color: &str, class: &str) {
        let mut coords = String::new();
        for (x, y) in pts {
            let _ = write!(coords, "{:.2},{:.2} ", self.sx(*x), self.sy(*y));
        }
        let _ = write!(
            out,
            "<polyline class='{class}' points='{}' fill='none' stroke='{color}' stroke-width='1.6'/>",
            coords.trim_end()
        );
    }

    fn hline(&self, out: &mut String, y: f64, color: &str, class: &str) {
        if y < self.y_min || y > self.y_max {
            return;
        }
        let sy = self.sy(y);
        let _ = write!(
            out,
            "<line class='{class}' x1='{:.1}' y1='{sy:.1}' x2='{:.1}' y2='{sy:.1}' stroke='{color}' stroke-width='1' stroke-dasharray='6 3'/>",
            self.left,
            self.left + self.width,
        );
    }
}

fn svg_open(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns='http://www.w3.org/2000/svg' width='{width:.0}' height='{height:.0}' viewBox='0 0 {width:.0} {height:.0}'>\
         <rect width='{width:.0}' height='{height:.0}' fill='white'/>\
         <text x='{:.1}' y='20' font-size='14' text-anchor='middle' fill='#111' font-family='sans-serif'>{title}</text>",
        width / 2.0,
    );
}

fn draw_scene(frame: &Frame, out: &mut String, scene: &SceneGeometry) {
    for yb in &scene.road.y_boundaries {
        frame.hline(out, *yb, "#999", "lane-line");
    }
    for o in &scene.obstacles {
        let x = frame.sx(o.xo - o.half_length);
        let y = frame.sy(o.yo + o.half_width);
        let w = frame.sx(o.xo + o.half_length) - x;
        let h = frame.sy(o.yo - o.half_width) - y;
        let _ = write!(
            out,
            "<rect class='obstacle' x='{x:.1}' y='{y:.1}' width='{w:.1}' height='{h:.1}' fill='#c0392b' fill-opacity='0.7' stroke='#7b241c'/>",
        );
    }
}

fn xy_extent(logs: &[&SimLog], scene: Option<&SceneGeometry>) -> ((f64, f64), (f64, f64)) {
    let mut x = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y = (f64::INFINITY, f64::NEG_INFINITY);
    for log in logs {
        for r in &log.rows {
            x = (x.0.min(r.x), x.1.max(r.x));
            y = (y.0.min(r.y), y.1.max(r.y));
        }
    }
    if let Some(s) = scene {
        y = (y.0.min(s.road.y_min()), y.1.max(s.road.y_max()));
        for o in &s.obstacles {
            x = (x.0.min(o.xo - o.half_length), x.1.max(o.xo + o.half_length));
            y = (y.0.min(o.yo - o.half_width), y.1.max(o.yo + o.half_width));
        }
    }
    (x, y)
}

/// Overhead view: trajectory polyline over lane lines and obstacles.
pub fn trajectory_svg(log: &SimLog, scene: Option<&SceneGeometry>) -> String {
    overlay_svg(&[("trajectory".to_string(), log)], scene)
}

/// Overhead view of several runs.
pub fn overlay_svg(runs: &[(String, &SimLog)], scene: Option<&SceneGeometry>) -> String {
    let logs: Vec<&SimLog> = runs.iter().map(|(_, l)| *l).collect();
    let (x_ext, y_ext) = xy_extent(&logs, scene);
    let mut out = String::new();
    svg_open(&mut out, WIDTH, HEIGHT, "trajectories");
    let frame = Frame::new(
        x_ext,
        y_ext,
        MARGIN_L,
        MARGIN_T,
        WIDTH - MARGIN_L - MARGIN_R,
        HEIGHT - MARGIN_T - MARGIN_B,
    );
    if let Some(s) = scene {
        draw_scene(&frame, &mut out, s);
    }
    for (i, (label, log)) in runs.iter().enumerate() {
        let pts: Vec<(f64, f64)> = log.rows.iter().map(|r| (r.x, r.y)).collect();
        let color = PALETTE[i % PALETTE.len()];
        frame.polyline(&mut out, &pts, color, "run");
        let _ = write!(
            out,
            "<text x='{:.1}' y='{:.1}' font-size='11' fill='{color}' font-family='sans-serif'>{label}</text>",
            MARGIN_L + 8.0,
            MARGIN_T + 16.0 + 14.0 * i as f64,
        );
    }
    frame.axes(&mut out, "x [m]", "y [m]");
    out.push_str("</svg>");
    out
}

/// Four stacked panels: steering, lateral acceleration, sideslip, yaw rate,
/// each with its bound drawn as dashed lines.
pub fn timeseries_svg(log: &SimLog, bounds: &TrackerBounds) -> String {
    let height = 760.0;
    let mut out = String::new();
    svg_open(&mut out, WIDTH, height, "vehicle dynamics");
    let t_ext = (
        log.rows.first().map(|r| r.t).unwrap_or(0.0),
        log.rows.last().map(|r| r.t).unwrap_or(1.0),
    );
    let panels: [(&str, Box<dyn Fn(&crate::sim::LogRow) -> f64>, f64); 4] = [
        ("delta_f [rad]", Box::new(|r| r.delta_f), bounds.delta),
        ("a_lat [m/s^2]", Box::new(|r| r.a_lat), bounds.a_lat),
        ("beta [rad]", Box::new(|r| r.beta), bounds.beta),
        ("r [rad/s]", Box::new(|r| r.r), bounds.yaw_rate),
    ];
    let panel_h = (height - MARGIN_T - MARGIN_B - 3.0 * 26.0) / 4.0;
    for (i, (label, getter, bound)) in panels.iter().enumerate() {
        let top = MARGIN_T + i as f64 * (panel_h + 26.0);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in &log.rows {
            let v = getter(r);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        lo = lo.min(-bound);
        hi = hi.max(*bound);
        let frame =
            Frame::new(t_ext, (lo, hi), MARGIN_L, top, WIDTH - MARGIN_L - MARGIN_R, panel_h);
        let pts: Vec<(f64, f64)> = log.rows.iter().map(|r| (r.t, getter(r))).collect();
        frame.polyline(&mut out, &pts, PALETTE[i % PALETTE.len()], "series");
        frame.hline(&mut out, *bound, "#c0392b", "bound");
        frame.hline(&mut out, -bound, "#c0392b", "bound");
        frame.axes(&mut out, if i == 3 { "t [s]" } else { "" }, label);
    }
    out.push_str("</svg>");
    out
}

fn heat_color(t: f64) -> String {
    // Dark blue through teal to yellow.
    let stops = [(0.10, 0.19, 0.43), (0.12, 0.63, 0.53), (1.0, 0.83, 0.0)];
    let t = t.clamp(0.0, 1.0);
    let (a, b, frac) =
        if t < 0.5 { (stops[0], stops[1], t * 2.0) } else { (stops[1], stops[2], (t - 0.5) * 2.0) };
    let lerp = |x: f64, y: f64| x + (y - x) * frac;
    format!(
        "#{:02x}{:02x}{:02x}",
        (lerp(a.0, b.0) * 255.0) as u8,
        (lerp(a.1, b.1) * 255.0) as u8,
        (lerp(a.2, b.2) * 255.0) as u8
    )
}

/// Field heatmap: one rect per grid cell, brightness by field value.
pub fn heatmap_svg(grid: &FieldGrid, scene: Option<&SceneGeometry>) -> String {
    let mut out = String::new();
    svg_open(&mut out, WIDTH, HEIGHT, "potential field");
    let frame = Frame::new(
        (grid.x0, grid.x0 + grid.dx * grid.nx as f64),
        (grid.y0, grid.y0 + grid.dy * grid.ny as f64),
        MARGIN_L,
        MARGIN_T,
        WIDTH - MARGIN_L - MARGIN_R,
        HEIGHT - MARGIN_T - MARGIN_B,
    );
    let max = grid.values.iter().fold(0.0f64, |m, v| m.max(*v)).max(1e-12);
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let x_lo = grid.x0 + ix as f64 * grid.dx;
            let y_hi = grid.y0 + (iy as f64 + 1.0) * grid.dy;
            let sx = frame.sx(x_lo);
            let sy = frame.sy(y_hi);
            let w = frame.sx(x_lo + grid.dx) - sx;
            let h = frame.sy(y_hi - grid.dy) - sy;
            let _ = write!(
                out,
                "<rect class='cell' x='{sx:.2}' y='{sy:.2}' width='{w:.2}' height='{h:.2}' fill='{}'/>",
                heat_color(grid.value(ix, iy) / max)
            );
        }
    }
    if let Some(s) = scene {
        for o in &s.obstacles {
            let x = frame.sx(o.xo - o.half_length);
            let y = frame.sy(o.yo + o.half_width);
            let w = frame.sx(o.xo + o.half_length) - x;
            let h = frame.sy(o.yo - o.half_width) - y;
            let _ = write!(
                out,
                "<rect class='obstacle' x='{x:.1}' y='{y:.1}' width='{w:.1}' height='{h:.1}' fill='none' stroke='white' stroke-width='1.5'/>",
            );
        }
    }
    frame.axes(&mut out, "x [m]", "y [m]");
    out.push_str("</svg>");
    out
}
