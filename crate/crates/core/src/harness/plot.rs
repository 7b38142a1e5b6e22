//! SVG rendering of a trial: workspace frame, obstacle footprints, the last
//! perceived points, the final contract's ellipses, the path and the
//! start/goal markers.

use std::fmt::Write as _;
use std::path::Path;

use crate::contract::Point2;
use crate::error::{GmIpcError, Result};

use super::trial::TrialLog;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 20.0;

struct Frame {
    half: f64,
}

impl Frame {
    fn scale(&self) -> f64 {
        (SIZE - 2.0 * MARGIN) / (2.0 * self.half)
    }

    fn px(&self, p: Point2) -> (f64, f64) {
        let s = self.scale();
        (MARGIN + (p.x + self.half) * s, MARGIN + (self.half - p.y) * s)
    }
}

pub fn render_svg(log: &TrialLog) -> Result<String> {
    if log.steps.is_empty() {
        return Err(GmIpcError::Argument("cannot plot a trial without steps".into()));
    }
    let sc = &log.header.scenario;
    let f = Frame { half: sc.workspace_half };
    let s = f.scale();
    let mut out = String::new();
    let w = &mut out;
    // Writing into a String cannot fail.
    let _ = writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#);
    let (x0, y0) = f.px(Point2::new(-sc.workspace_half, sc.workspace_half));
    let side = 2.0 * sc.workspace_half * s;
    let _ = writeln!(w, r##"<g id="frame"><rect x="{x0:.2}" y="{y0:.2}" width="{side:.2}" height="{side:.2}" fill="#fafafa" stroke="#333"/></g>"##);

    let _ = writeln!(w, r#"<g id="obstacles">"#);
    for o in &sc.obstacles {
        let pts: Vec<String> = o.polygon.iter().map(|&p| f.px(p)).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(w, r##"<polygon points="{}" fill="#999" fill-opacity="0.6" stroke="#444"/>"##, pts.join(" "));
    }
    let _ = writeln!(w, "</g>");

    let _ = writeln!(w, r#"<g id="perceived">"#);
    for &p in &log.summary.final_perceived {
        let (x, y) = f.px(p);
        let _ = writeln!(w, r##"<circle cx="{x:.2}" cy="{y:.2}" r="1.5" fill="#d62728"/>"##);
    }
    let _ = writeln!(w, "</g>");

    let _ = writeln!(w, r#"<g id="contract">"#);
    if let Some(m) = &log.summary.final_contract {
        for e in m.ellipses() {
            let (cx, cy) = f.px(e.center);
            let deg = -e.theta.to_degrees();
            let _ = writeln!(
                w,
                r##"<ellipse cx="{cx:.2}" cy="{cy:.2}" rx="{:.2}" ry="{:.2}" transform="rotate({deg:.3} {cx:.2} {cy:.2})" fill="#1f77b4" fill-opacity="0.2" stroke="#1f77b4"/>"##,
                e.a * s,
                e.b * s
            );
        }
    }
    let _ = writeln!(w, "</g>");

    let mut path: Vec<Point2> = log.steps.iter().map(|r| r.pos).collect();
    path.extend(log.steps.last().map(|r| r.next_pos));
    let pts: Vec<String> = path.iter().map(|&p| f.px(p)).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = writeln!(w, r##"<g id="trajectory"><polyline points="{}" fill="none" stroke="#2ca02c" stroke-width="2"/></g>"##, pts.join(" "));

    let (sx, sy) = f.px(sc.start);
    let (gx, gy) = f.px(sc.goal);
    let _ = writeln!(w, r##"<g id="markers"><circle cx="{sx:.2}" cy="{sy:.2}" r="6" fill="#2ca02c"/><circle cx="{gx:.2}" cy="{gy:.2}" r="6" fill="none" stroke="#ff7f0e" stroke-width="2"/></g>"##);
    let _ = writeln!(w, "</svg>");
    Ok(out)
}

pub fn emit_plot(log: &TrialLog, path: &Path) -> Result<()> {
    std::fs::write(path, render_svg(log)?)?;
    Ok(())
}
