//! Pixel mapping, cubic Bezier bundle paths and SVG output.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Bundle, BundleLayout, ClusterConfig, Column, ColumnData};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("left axis must lie strictly left of the right axis")]
    DegenerateSpan,
    #[error("curve tension must lie in (0, 1]")]
    InvalidTension,
}

impl GeometryError {
    pub fn name(&self) -> &'static str {
        match self {
            Self::DegenerateSpan => "DegenerateSpan",
            Self::InvalidTension => "InvalidTension",
        }
    }
}

/// Plot canvas size and margins in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotFrame<T> {
    pub width: T,
    pub height: T,
    pub margin_top: T,
    pub margin_right: T,
    pub margin_bottom: T,
    pub margin_left: T,
}

impl<T: Scalar> Default for PlotFrame<T> {
    fn default() -> Self {
        Self {
            width: T::lit(960.0),
            height: T::lit(500.0),
            margin_top: T::lit(40.0),
            margin_right: T::lit(60.0),
            margin_bottom: T::lit(30.0),
            margin_left: T::lit(60.0),
        }
    }
}

impl<T: Scalar> PlotFrame<T> {
    pub fn inner_width(&self) -> T {
        self.width - self.margin_left - self.margin_right
    }

    pub fn inner_height(&self) -> T {
        self.height - self.margin_top - self.margin_bottom
    }

    pub fn is_valid(&self) -> bool {
        let parts = [
            self.width,
            self.height,
            self.margin_top,
            self.margin_right,
            self.margin_bottom,
            self.margin_left,
        ];
        parts.iter().all(|v| v.is_finite() && *v >= T::zero())
            && self.inner_width() > T::zero()
            && self.inner_height() > T::zero()
    }

    pub fn top(&self) -> T {
        self.margin_top
    }

    pub fn bottom(&self) -> T {
        self.height - self.margin_bottom
    }

    /// X position of axis `index` out of `count`, evenly spaced; a lone axis is centered.
    pub fn axis_x(&self, index: usize, count: usize) -> T {
        if count <= 1 {
            return self.margin_left + self.inner_width() / T::lit(2.0);
        }
        let t = T::from_usize(index).unwrap_or_else(T::zero)
            / T::from_usize(count - 1).unwrap_or_else(T::one);
        self.margin_left + self.inner_width() * t
    }
}

/// Value-to-pixel mapping for one axis. Screen y grows downward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisScale<T> {
    Linear {
        d_min: T,
        d_max: T,
        top: T,
        bottom: T,
    },
    /// Zero-range or empty numeric axis: everything maps to mid-height.
    Constant {
        value: T,
        y: T,
    },
    Bands {
        count: usize,
        top: T,
        bottom: T,
    },
}

impl<T: Scalar> AxisScale<T> {
    pub fn y(&self, v: T) -> T {
        match *self {
            Self::Linear {
                d_min,
                d_max,
                top,
                bottom,
            } => bottom - (v - d_min) / (d_max - d_min) * (bottom - top),
            Self::Constant { y, .. } => y,
            Self::Bands { .. } => {
                let i = v.floor().max(T::zero()).to_usize().unwrap_or(0);
                self.band_center(i)
            }
        }
    }

    /// Pixel to data value. Bands return the band index as a value.
    pub fn invert(&self, y: T) -> T {
        match *self {
            Self::Linear {
                d_min,
                d_max,
                top,
                bottom,
            } => d_min + (bottom - y) / (bottom - top) * (d_max - d_min),
            Self::Constant { value, .. } => value,
            Self::Bands { count, top, bottom } => {
                let band = (bottom - top) / T::from_usize(count.max(1)).unwrap_or_else(T::one);
                ((y - top) / band).floor()
            }
        }
    }

    /// Top and bottom pixel edges of band `i`; category 0 is the top band.
    pub fn band_edges(&self, i: usize) -> (T, T) {
        match *self {
            Self::Bands { count, top, bottom } => {
                let band = (bottom - top) / T::from_usize(count.max(1)).unwrap_or_else(T::one);
                let i = T::from_usize(i).unwrap_or_else(T::zero);
                (top + band * i, top + band * (i + T::one()))
            }
            _ => {
                let y = self.y(T::zero());
                (y, y)
            }
        }
    }

    pub fn band_center(&self, i: usize) -> T {
        let (a, b) = self.band_edges(i);
        (a + b) / T::lit(2.0)
    }
}

/// Builds the axis scale for a column under the given frame.
pub fn axis_scale<T: Scalar>(
    column: &Column<T>,
    config: &ClusterConfig<T>,
    frame: &PlotFrame<T>,
) -> AxisScale<T> {
    let (top, bottom) = (frame.top(), frame.bottom());
    match column.data() {
        ColumnData::Numeric { stats, .. } => match stats {
            Some(s) if !s.is_degenerate() => AxisScale::Linear {
                d_min: s.min,
                d_max: s.max,
                top,
                bottom,
            },
            _ => AxisScale::Constant {
                value: stats
                    .map(|s| s.min)
                    .or_else(|| config.boundaries().and_then(|b| b.first().copied()))
                    .unwrap_or_else(T::zero),
                y: (top + bottom) / T::lit(2.0),
            },
        },
        _ => AxisScale::Bands {
            count: config.k().max(1),
            top,
            bottom,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }
}

/// A cubic Bezier bundle with horizontal tangents at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BezierPath<T> {
    pub start: Point<T>,
    pub control1: Point<T>,
    pub control2: Point<T>,
    pub end: Point<T>,
    pub stroke_width: T,
    pub dashed: bool,
}

impl<T: Scalar> BezierPath<T> {
    /// Point on the curve at parameter `t` in `[0, 1]`.
    pub fn eval(&self, t: T) -> Point<T> {
        let u = T::one() - t;
        let three = T::lit(3.0);
        let (b0, b1, b2, b3) = (u * u * u, three * u * u * t, three * u * t * t, t * t * t);
        Point::new(
            b0 * self.start.x + b1 * self.control1.x + b2 * self.control2.x + b3 * self.end.x,
            b0 * self.start.y + b1 * self.control1.y + b2 * self.control2.y + b3 * self.end.y,
        )
    }

    /// First derivative at the start and end points.
    pub fn end_tangents(&self) -> (Point<T>, Point<T>) {
        let three = T::lit(3.0);
        (
            Point::new(
                three * (self.control1.x - self.start.x),
                three * (self.control1.y - self.start.y),
            ),
            Point::new(
                three * (self.end.x - self.control2.x),
                three * (self.end.y - self.control2.y),
            ),
        )
    }
}

/// Curve from `(x_left, y_left)` to `(x_right, y_right)`; controls sit
/// `tension * span / 2` inward at the endpoint heights.
pub fn bundle_path<T: Scalar>(
    bundle: &Bundle<T>,
    x_left: T,
    x_right: T,
    y_left: T,
    y_right: T,
    tension: T,
) -> Result<BezierPath<T>, GeometryError> {
    if x_left.partial_cmp(&x_right) != Some(std::cmp::Ordering::Less) {
        return Err(GeometryError::DegenerateSpan);
    }
    if !(tension > T::zero() && tension <= T::one()) {
        return Err(GeometryError::InvalidTension);
    }
    let reach = tension * (x_right - x_left) / T::lit(2.0);
    Ok(BezierPath {
        start: Point::new(x_left, y_left),
        control1: Point::new(x_left + reach, y_left),
        control2: Point::new(x_right - reach, y_right),
        end: Point::new(x_right, y_right),
        stroke_width: bundle.width,
        dashed: bundle.anomaly,
    })
}

/// Visual parameters for [`render_svg`].
#[derive(Debug, Clone, PartialEq)]
pub struct SvgStyle {
    pub background: String,
    pub bundle_stroke: String,
    pub bundle_opacity: f64,
    pub anomaly_stroke: String,
    pub dash_pattern: String,
    pub axis_stroke: String,
    pub cluster_fill: String,
    pub cluster_half_width: f64,
    pub handle_radius: f64,
    pub font_family: String,
    pub font_size: f64,
}

impl Default for SvgStyle {
    fn default() -> Self {
        Self {
            background: "#ffffff".into(),
            bundle_stroke: "#4a6fa5".into(),
            bundle_opacity: 0.55,
            anomaly_stroke: "#c0392b".into(),
            dash_pattern: "4 3".into(),
            axis_stroke: "#333333".into(),
            cluster_fill: "#d9d9d9".into(),
            cluster_half_width: 7.0,
            handle_radius: 4.0,
            font_family: "sans-serif".into(),
            font_size: 12.0,
        }
    }
}

fn px<T: Scalar>(v: T) -> String {
    format!("{:.3}", v.to_f64_lossy())
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
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

/// Renders the layout as an SVG 1.1 document.
///
/// Coordinates carry three decimals; stroke widths carry six so they stay
/// within 1e-6 px of the bundle width. Wider bundles are drawn first.
pub fn render_svg<T: Scalar>(layout: &BundleLayout<T>, style: &SvgStyle) -> String {
    let frame = &layout.frame;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = px(frame.width),
        h = px(frame.height)
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{}" height="{}" fill="{}"/>"#,
        px(frame.width),
        px(frame.height),
        style.background
    );

    let _ = writeln!(s, r#"<g class="clusters" fill="{}">"#, style.cluster_fill);
    for axis in &layout.axes {
        for c in &axis.clusters {
            let _ = writeln!(
                s,
                r#"<rect class="cluster" x="{}" y="{}" width="{}" height="{}"/>"#,
                px(axis.x.to_f64_lossy() - style.cluster_half_width),
                px(c.y_top),
                px(2.0 * style.cluster_half_width),
                px(c.y_bottom - c.y_top)
            );
        }
    }
    let _ = writeln!(s, "</g>");

    let mut order: Vec<(usize, usize)> = layout
        .pairs
        .iter()
        .enumerate()
        .flat_map(|(p, pair)| (0..pair.bundles.len()).map(move |b| (p, b)))
        .collect();
    // stable sort keeps pair/row-major order among equal widths
    order.sort_by(|a, b| {
        let wa = layout.pairs[a.0].bundles[a.1].bundle.width;
        let wb = layout.pairs[b.0].bundles[b.1].bundle.width;
        wb.partial_cmp(&wa).unwrap_or(std::cmp::Ordering::Equal)
    });
    let _ = writeln!(
        s,
        r#"<g class="bundles" fill="none" stroke-opacity="{:.3}" stroke-linecap="butt">"#,
        style.bundle_opacity
    );
    for (p, b) in order {
        let pair = &layout.pairs[p];
        let entry = &pair.bundles[b];
        let path = &entry.path;
        let stroke = if path.dashed {
            &style.anomaly_stroke
        } else {
            &style.bundle_stroke
        };
        let dash = if path.dashed {
            format!(r#" stroke-dasharray="{}""#, style.dash_pattern)
        } else {
            String::new()
        };
        let _ = writeln!(
            s,
            r#"<path class="bundle" data-pair="{}" data-left="{}" data-right="{}" data-count="{}" d="M{},{} C{},{} {},{} {},{}" stroke="{}" stroke-width="{:.6}"{}/>"#,
            p,
            entry.bundle.left_cluster,
            entry.bundle.right_cluster,
            entry.bundle.count,
            px(path.start.x),
            px(path.start.y),
            px(path.control1.x),
            px(path.control1.y),
            px(path.control2.x),
            px(path.control2.y),
            px(path.end.x),
            px(path.end.y),
            stroke,
            path.stroke_width.to_f64_lossy(),
            dash
        );
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="{}" font-family="{}" font-size="{:.1}">"#,
        style.axis_stroke, style.font_family, style.font_size
    );
    for axis in &layout.axes {
        let _ = writeln!(
            s,
            r#"<line class="axis" x1="{x}" y1="{}" x2="{x}" y2="{}" stroke-width="1.5"/>"#,
            px(frame.top()),
            px(frame.bottom()),
            x = px(axis.x)
        );
        let _ = writeln!(
            s,
            r#"<text class="axis-label" x="{}" y="{}" text-anchor="middle" stroke="none" fill="{}">{}</text>"#,
            px(axis.x),
            px(frame.top().to_f64_lossy() - 12.0),
            style.axis_stroke,
            escape(&axis.name)
        );
        if let Some([lo, hi]) = axis.domain {
            let _ = writeln!(
                s,
                r#"<text class="axis-tick" x="{x}" y="{}" text-anchor="end" stroke="none" fill="{}">{}</text>"#,
                px(frame.bottom().to_f64_lossy() + 4.0),
                style.axis_stroke,
                fmt_value(lo),
                x = px(axis.x.to_f64_lossy() - style.cluster_half_width - 3.0)
            );
            let _ = writeln!(
                s,
                r#"<text class="axis-tick" x="{x}" y="{}" text-anchor="end" stroke="none" fill="{}">{}</text>"#,
                px(frame.top().to_f64_lossy() + 4.0),
                style.axis_stroke,
                fmt_value(hi),
                x = px(axis.x.to_f64_lossy() - style.cluster_half_width - 3.0)
            );
        }
        for (i, name) in axis.categories.iter().enumerate() {
            if let Some(c) = axis.clusters.get(i) {
                let _ = writeln!(
                    s,
                    r#"<text class="category" x="{}" y="{}" text-anchor="start" stroke="none" fill="{}">{}</text>"#,
                    px(axis.x.to_f64_lossy() + style.cluster_half_width + 3.0),
                    px(c.y.to_f64_lossy() + 4.0),
                    style.axis_stroke,
                    escape(name)
                );
            }
        }
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g class="control-points">"#);
    for axis in &layout.axes {
        for c in &axis.clusters {
            let _ = writeln!(
                s,
                r#"<circle class="center" cx="{}" cy="{}" r="2.000" fill="{}"/>"#,
                px(axis.x),
                px(c.y),
                style.bundle_stroke
            );
        }
        for cp in &axis.control_points {
            let _ = writeln!(
                s,
                r#"<circle class="handle" data-axis="{}" data-index="{}" cx="{}" cy="{}" r="{:.3}" fill="white" stroke="{}"/>"#,
                escape(&axis.name),
                cp.index,
                px(axis.x),
                px(cp.y),
                style.handle_radius,
                style.axis_stroke
            );
        }
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

fn fmt_value<T: Scalar>(v: T) -> String {
    let x = v.to_f64_lossy();
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{x:.0}")
    } else {
        format!("{x:.3}")
    }
}
