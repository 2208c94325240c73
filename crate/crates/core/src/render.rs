//! SVG figures of the band model.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write;

use crate::error::{LoomError, Result};
use crate::hyperbolic::{chart_to_band, BandPoint, ChartPoint};
use crate::surface::LoomSurfaceSpec;
use crate::tracer::Trajectory;

const WIDTH: f64 = 1000.0;
const Y_SCALE: f64 = 100.0;
const MARGIN: f64 = 20.0;
const SHEET_COLORS: [&str; 2] = ["#1f5fbf", "#c0392b"];

/// A piece of trajectory drawn on one sheet.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub sheet: u8,
    pub points: Vec<BandPoint>,
}

fn push_point(lines: &mut Vec<Polyline>, sheet: u8, z: BandPoint) {
    match lines.last_mut() {
        Some(l) if l.sheet == sheet => l.points.push(z),
        _ => lines.push(Polyline { sheet, points: vec![z] }),
    }
}

/// Samples a trajectory at `samples` evenly spaced times plus every crossing.
pub fn trajectory_polylines(traj: &Trajectory, samples: usize) -> Vec<Polyline> {
    let (t0, t1) = (traj.start_time(), traj.end_time());
    let mut times: Vec<f64> = (0..=samples.max(1)).map(|i| t0 + (t1 - t0) * i as f64 / samples.max(1) as f64).collect();
    for a in &traj.arcs {
        times.push(a.entry_time);
        times.push(a.exit_time);
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut lines = Vec::new();
    for &t in &times {
        // at a crossing the point belongs to both sheets
        let (z, sheet) = traj.band_at(t);
        if let Some(l) = lines.last_mut().filter(|l: &&mut Polyline| l.sheet != sheet) {
            l.points.push(z);
        }
        push_point(&mut lines, sheet, z);
    }
    lines
}

/// Reads trajectory CSV rows (`time,sheet,band_x,band_y,...,crossing_index`).
pub fn polylines_from_csv(text: &str, spec: &LoomSurfaceSpec) -> Result<Vec<Polyline>> {
    let mut lines = Vec::new();
    for (n, row) in text.lines().enumerate().skip(1) {
        if row.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() < 7 {
            return Err(LoomError::Parse(format!("line {}: expected 7 columns", n + 1)));
        }
        let num = |i: usize| cols[i].trim().parse::<f64>().map_err(|e| LoomError::Parse(format!("line {}: {e}", n + 1)));
        let sheet: u8 = cols[1].trim().parse().map_err(|e| LoomError::Parse(format!("line {}: {e}", n + 1)))?;
        if sheet > 1 {
            return Err(LoomError::Parse(format!("line {}: sheet {sheet}", n + 1)));
        }
        if let Ok(k) = cols[6].trim().parse::<usize>() {
            if k == 0 || k > spec.len() {
                return Err(LoomError::IndexOutOfRange(k, spec.len()));
            }
        }
        let z = BandPoint::new(num(2)?, num(3)?).map_err(|e| LoomError::Parse(format!("line {}: {e}", n + 1)))?;
        push_point(&mut lines, sheet, z);
    }
    Ok(lines)
}

/// Band curve of `∂D_h(s)`, from the top edge down to `(s, h)` and back up.
fn boundary_curve(spec: &LoomSurfaceSpec, k: usize, n: usize) -> Vec<BandPoint> {
    let b = spec.boundary(k);
    (0..=n)
        .map(|i| {
            let th = 1e-3 + (std::f64::consts::PI - 2e-3) * i as f64 / n as f64;
            chart_to_band(ChartPoint { u: b.center + b.radius * th.cos(), v: b.radius * th.sin() })
        })
        .collect()
}

struct View {
    x0: f64,
    sx: f64,
}

impl View {
    fn px(&self, z: BandPoint) -> (f64, f64) {
        (MARGIN + (z.x - self.x0) * self.sx, MARGIN + (FRAC_PI_2 - z.y) * Y_SCALE)
    }
}

fn path(view: &View, pts: &[BandPoint]) -> String {
    let mut d = String::new();
    for (i, &z) in pts.iter().enumerate() {
        let (x, y) = view.px(z);
        let _ = write!(d, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, x, y);
    }
    d
}

/// Band strip, shaded half-planes, core line and trajectories coloured by sheet.
pub fn render_svg(spec: &LoomSurfaceSpec, lines: &[Polyline]) -> String {
    let mut lo = spec.entries().iter().map(|e| e.s).fold(f64::INFINITY, f64::min) - 5.0;
    let mut hi = spec.entries().iter().map(|e| e.s).fold(f64::NEG_INFINITY, f64::max) + 5.0;
    for z in lines.iter().flat_map(|l| &l.points) {
        lo = lo.min(z.x);
        hi = hi.max(z.x);
    }
    let view = View { x0: lo, sx: WIDTH / (hi - lo) };
    let height = std::f64::consts::PI * Y_SCALE;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.0} {:.0}">"#,
        WIDTH + 2.0 * MARGIN,
        height + 2.0 * MARGIN,
        WIDTH + 2.0 * MARGIN,
        height + 2.0 * MARGIN
    );
    let _ = writeln!(out, r##"<rect x="{MARGIN}" y="{MARGIN}" width="{WIDTH:.0}" height="{height:.2}" fill="#fbfbf8" stroke="#444"/>"##);
    for k in 0..spec.len() {
        let mut pts = boundary_curve(spec, k, 96);
        // close along the top edge of the band
        let (first, last) = (pts[0], *pts.last().unwrap());
        pts.push(BandPoint { x: last.x, y: FRAC_PI_2 });
        pts.push(BandPoint { x: first.x, y: FRAC_PI_2 });
        let _ = writeln!(out, r##"<path d="{} Z" fill="#bbbbbb" fill-opacity="0.6" stroke="#777"/>"##, path(&view, &pts));
    }
    let (a, y) = view.px(BandPoint { x: lo, y: 0.0 });
    let (b, _) = view.px(BandPoint { x: hi, y: 0.0 });
    let _ = writeln!(out, r##"<line x1="{a:.2}" y1="{y:.2}" x2="{b:.2}" y2="{y:.2}" stroke="#000" stroke-dasharray="6 4"/>"##);
    for l in lines {
        let color = SHEET_COLORS[(l.sheet & 1) as usize];
        let _ = writeln!(out, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path(&view, &l.points));
    }
    out.push_str("</svg>\n");
    out
}
