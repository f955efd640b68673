//! Deterministic hand-emitted SVG: three vertically stacked Bland-Altman
//! panels (logit, identity, log), each with axes, tick labels, a zero
//! reference line and one marker per converged pair.

use std::fmt::Write as _;

use thiserror::Error;

use crate::explorer::{bland_altman, BAPoint, GridRecord};
use crate::link::Link;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PlotError {
    #[error("no points to plot for link {0}")]
    NoPoints(Link),
}

pub const PANEL_ORDER: [Link; 3] = [Link::Logit, Link::Identity, Link::Log];

const PANEL_W: f64 = 600.0;
const PANEL_H: f64 = 300.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 28.0;
const MARGIN_BOTTOM: f64 = 46.0;

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    /// Data range padded 5% beyond the extremes; degenerate ranges widen
    /// to a unit interval so every point stays drawable.
    fn from_values(values: impl Iterator<Item = f64>) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let span = hi - lo;
        if span < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        } else {
            lo -= 0.05 * span;
            hi += 0.05 * span;
        }
        Axis { lo, hi }
    }

    fn fraction(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }
}

fn c(v: f64) -> String {
    format!("{v:.2}")
}

fn panel(svg: &mut String, index: usize, link: Link, points: &[BAPoint]) {
    let x_axis = Axis::from_values(points.iter().map(|p| p.mean));
    // include zero so the reference line is always visible
    let y_axis = Axis::from_values(points.iter().map(|p| p.diff).chain([0.0]));

    let top = index as f64 * PANEL_H;
    let plot_w = PANEL_W - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = PANEL_H - MARGIN_TOP - MARGIN_BOTTOM;
    let to_x = |v: f64| MARGIN_LEFT + x_axis.fraction(v) * plot_w;
    let to_y = |v: f64| top + MARGIN_TOP + (1.0 - y_axis.fraction(v)) * plot_h;

    let _ = write!(svg, r#"<g font-family="sans-serif" font-size="12">"#);
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" font-size="14" font-weight="bold">{}</text>"#,
        c(MARGIN_LEFT),
        c(top + 18.0),
        link
    );

    // frame
    let _ = write!(
        svg,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#444" stroke-width="1"/>"##,
        c(MARGIN_LEFT),
        c(top + MARGIN_TOP),
        c(plot_w),
        c(plot_h)
    );

    // ticks and grid labels
    for i in 0..=4 {
        let fx = x_axis.lo + (x_axis.hi - x_axis.lo) * i as f64 / 4.0;
        let px = to_x(fx);
        let _ = write!(
            svg,
            r##"<line x1="{x}" y1="{y1}" x2="{x}" y2="{y2}" stroke="#444" stroke-width="1"/>"##,
            x = c(px),
            y1 = c(top + MARGIN_TOP + plot_h),
            y2 = c(top + MARGIN_TOP + plot_h + 4.0)
        );
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{:.3}</text>"#,
            c(px),
            c(top + MARGIN_TOP + plot_h + 17.0),
            fx
        );

        let fy = y_axis.lo + (y_axis.hi - y_axis.lo) * i as f64 / 4.0;
        let py = to_y(fy);
        let _ = write!(
            svg,
            r##"<line x1="{x1}" y1="{y}" x2="{x2}" y2="{y}" stroke="#444" stroke-width="1"/>"##,
            x1 = c(MARGIN_LEFT - 4.0),
            x2 = c(MARGIN_LEFT),
            y = c(py)
        );
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end" dominant-baseline="middle">{:.3}</text>"#,
            c(MARGIN_LEFT - 7.0),
            c(py),
            fy
        );
    }

    // zero reference line
    let zero_y = to_y(0.0);
    let _ = write!(
        svg,
        r##"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="#999" stroke-width="1" stroke-dasharray="4 3"/>"##,
        c(MARGIN_LEFT),
        c(MARGIN_LEFT + plot_w),
        y = c(zero_y)
    );

    // axis labels
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">mean of estimates</text>"#,
        c(MARGIN_LEFT + plot_w / 2.0),
        c(top + PANEL_H - 10.0)
    );
    let label_y = top + MARGIN_TOP + plot_h / 2.0;
    let _ = write!(
        svg,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">adjusted − unadjusted</text>"#,
        c(label_y)
    );

    for p in points {
        let _ = write!(
            svg,
            r##"<circle cx="{}" cy="{}" r="2" fill="#2f6f9f"/>"##,
            c(to_x(p.mean)),
            c(to_y(p.diff))
        );
    }
    svg.push_str("</g>");
}

/// Renders the three-panel Bland-Altman figure from grid records. Byte
/// output is a pure function of the records.
pub fn render_bland_altman_svg(records: &[GridRecord]) -> Result<String, PlotError> {
    let panels: Vec<(Link, Vec<BAPoint>)> = PANEL_ORDER
        .iter()
        .map(|&link| {
            let points = bland_altman(records, link);
            if points.is_empty() {
                Err(PlotError::NoPoints(link))
            } else {
                Ok((link, points))
            }
        })
        .collect::<Result<_, _>>()?;

    let height = PANEL_H * PANEL_ORDER.len() as f64;
    let mut svg = format!(
        concat!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" "#,
            r#"viewBox="0 0 {w} {h}">"#
        ),
        w = PANEL_W,
        h = height
    );
    let _ = write!(
        svg,
        r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#,
        PANEL_W, height
    );
    for (i, (link, points)) in panels.iter().enumerate() {
        panel(&mut svg, i, *link, points);
    }
    svg.push_str("</svg>");
    Ok(svg)
}
