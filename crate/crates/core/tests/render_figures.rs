use loomlab::hyperbolic::BandPoint;
use loomlab::render::{render_svg, trajectory_polylines, Polyline};
use loomlab::surface::{HalfPlaneSpec, LoomSurfaceSpec};
use loomlab::weaving::{build_crossing, Sign};

fn two_entry() -> LoomSurfaceSpec {
    LoomSurfaceSpec::new(vec![HalfPlaneSpec { s: 0.0, h: 0.6 }, HalfPlaneSpec { s: 6.0, h: 0.6 }]).unwrap()
}

fn segment_hit(a: BandPoint, b: BandPoint, c: BandPoint, d: BandPoint) -> Option<BandPoint> {
    let (r, s) = ((b.x - a.x, b.y - a.y), (d.x - c.x, d.y - c.y));
    let den = r.0 * s.1 - r.1 * s.0;
    if den.abs() < 1e-300 {
        return None;
    }
    let (qx, qy) = (c.x - a.x, c.y - a.y);
    let t = (qx * s.1 - qy * s.0) / den;
    let u = (qx * r.1 - qy * r.0) / den;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then(|| BandPoint { x: a.x + t * r.0, y: a.y + t * r.1 })
}

fn hits_on_sheet(p: &[Polyline], q: &[Polyline], sheet: u8) -> Vec<BandPoint> {
    let mut out = Vec::new();
    for l in p.iter().filter(|l| l.sheet == sheet) {
        for m in q.iter().filter(|m| m.sheet == sheet) {
            for a in l.points.windows(2) {
                for b in m.points.windows(2) {
                    out.extend(segment_hit(a[0], a[1], b[0], b[1]));
                }
            }
        }
    }
    out
}

#[test]
fn opposite_crossings_meet_near_the_core() {
    let spec = two_entry();
    let up = build_crossing(1, Sign::Plus, &spec).unwrap();
    let down = build_crossing(2, Sign::Minus, &spec).unwrap();
    let a = trajectory_polylines(&up.chain.trajectory, 4000);
    let b = trajectory_polylines(&down.chain.trajectory, 4000);
    let hits = hits_on_sheet(&a, &b, 1);
    assert!(!hits.is_empty());
    let best = hits.iter().map(|z| z.y.abs()).fold(f64::INFINITY, f64::min);
    assert!(best < 0.1, "closest meeting at |y| = {best}");
    let x = hits.iter().min_by(|p, q| p.y.abs().total_cmp(&q.y.abs())).unwrap().x;
    // the picture is symmetric about the midpoint of the two apexes
    assert!((x - 3.0).abs() < 1e-3, "meeting at x = {x}");

    let svg = render_svg(&spec, &[a, b].concat());
    assert!(svg.contains("#1f5fbf") && svg.contains("#c0392b"));
    assert_eq!(svg.matches("fill=\"#bbbbbb\"").count(), 2);
}
