use loomlab::hyperbolic::{band_to_chart, chart_to_band, dist, nau_compose, nau_decompose, BandPoint};
use loomlab::intervals::IntervalSet;
use loomlab::surface::{HalfPlaneSpec, LoomSurfaceSpec};
use loomlab::tracer::{slack, trace_geodesic, SurfaceTangent};
use loomlab::weaving::{crossing_slack, crossing_slack_hyperbolic, WeavingPattern};
use loomlab::Exec;
use proptest::prelude::*;

fn spaced_spec(hs: &[f64]) -> LoomSurfaceSpec {
    let entries = hs.iter().enumerate().map(|(k, &h)| HalfPlaneSpec { s: 8.0 * k as f64, h }).collect();
    LoomSurfaceSpec::new(entries).unwrap()
}

fn interval_set() -> impl Strategy<Value = IntervalSet> {
    prop::collection::vec((0.0..10.0f64, 0.0..0.5f64), 1..12)
        .prop_map(|v| IntervalSet::new(1e-12, v.into_iter().map(|(a, w)| [a, a + w]).collect()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chart_round_trip(x in -30.0..30.0f64, y in -1.5..1.5f64) {
        let z = chart_to_band(band_to_chart(BandPoint { x, y }));
        prop_assert!((z.x - x).abs() < 1e-9 && (z.y - y).abs() < 1e-9);
    }

    #[test]
    fn tau_never_outruns_distance(x in -10.0..10.0f64, y in -1.5..1.5f64, dx in -5.0..5.0f64, y2 in -1.5..1.5f64) {
        let (p, q) = (BandPoint { x, y }, BandPoint { x: x + dx, y: y2 });
        prop_assert!(dx.abs() <= dist(p, q) + 1e-9);
    }

    #[test]
    fn nau_coordinates_round_trip(s in -3.0..3.0f64, t in -3.0..3.0f64, r in -3.0..3.0f64) {
        let (s2, t2, r2) = nau_decompose(&nau_compose(s, t, r)).unwrap();
        prop_assert!((s - s2).abs() < 1e-8 && (t - t2).abs() < 1e-8 && (r - r2).abs() < 1e-8);
    }

    #[test]
    fn closed_forms_agree(h in 0.01..1.5f64) {
        prop_assert!((crossing_slack(h).unwrap() - crossing_slack_hyperbolic(h).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn slack_is_nonnegative(hs in prop::collection::vec(0.2..1.2f64, 1..4), x in -3.0..20.0f64, y in -0.15..0.15f64, angle in 0.0..6.28f64) {
        let spec = spaced_spec(&hs);
        let start = SurfaceTangent::new(BandPoint { x, y }, 0, angle, &spec).unwrap();
        let tr = trace_geodesic(&start, 6.0, &spec).unwrap();
        prop_assert!(slack(&tr).value >= -1e-9);
    }

    #[test]
    fn predicted_slack_adds_over_the_pattern(hs in prop::collection::vec(0.1..1.4f64, 2..6)) {
        let spec = spaced_spec(&hs);
        let all: Vec<usize> = (1..=hs.len()).collect();
        let p = WeavingPattern::new(all, loomlab::weaving::Sign::Plus, &spec).unwrap();
        let sum: f64 = hs.iter().map(|&h| crossing_slack(h).unwrap()).sum();
        prop_assert!((p.predicted_slack(&spec) - sum).abs() < 1e-9);
    }

    #[test]
    fn minkowski_sum_is_commutative_and_exec_independent(a in interval_set(), b in interval_set()) {
        let ab = a.minkowski_sum(&b, Exec::Parallel);
        prop_assert_eq!(&ab, &b.minkowski_sum(&a, Exec::Sequential));
        prop_assert!((ab.measure() + 1e-9) >= a.measure().max(b.measure()));
    }

    #[test]
    fn coarsening_only_grows(a in interval_set(), tol in 0.0..0.5f64) {
        let c = a.coarsen(tol);
        prop_assert!(c.len() <= a.len());
        for iv in &a.intervals {
            prop_assert!(c.contains(iv[0]) && c.contains(iv[1]));
        }
    }
}
