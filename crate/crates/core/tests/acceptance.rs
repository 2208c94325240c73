//! Acceptance run: one PASS/FAIL line per criterion.

use std::f64::consts::{FRAC_PI_4, LN_2};
use std::time::Instant;

use loomlab::dimension::{box_dimension, geometric_scales};
use loomlab::hyperbolic::{band_to_chart, dist_chart, BandPoint, Mat2};
use loomlab::intervals::{cantor_cover, delta_sets, sumset_coarse, IntervalSet, Parity};
use loomlab::measure::{
    check_flow_invariance, check_restriction, check_tightness, measure_from_orbit, select_section, BoxFunction, MeasureOptions,
    Orbit,
};
use loomlab::recurrence::recurrence_by_slack;
use loomlab::surface::{design_from_E, design_summable, sheet_distance, DecayRule, HalfPlaneSpec, LoomSurfaceSpec};
use loomlab::tracer::{busemann, slack, trace_geodesic, SurfaceTangent};
use loomlab::weaving::{
    backtracking_ray, build_crossing, crossing_slack, crossing_slack_hyperbolic, gap_sweep, verify_weaving_lemma, Sign,
};
use loomlab::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c1_crossing_slack() -> Check {
    let clock = Instant::now();
    let mut worst: f64 = 0.0;
    let mut forms: f64 = 0.0;
    for h in [0.1, 0.3, 0.5, 0.8, 1.0, 1.4] {
        let spec = LoomSurfaceSpec::new(vec![HalfPlaneSpec { s: 3.0, h }]).map_err(|e| e.to_string())?;
        let eta = build_crossing(1, Sign::Plus, &spec).map_err(|e| e.to_string())?;
        let closed = crossing_slack_hyperbolic(h).unwrap();
        worst = worst.max((slack(&eta.chain.trajectory).value - closed).abs());
        forms = forms.max((closed - crossing_slack(h).unwrap()).abs());
    }
    let secs = clock.elapsed().as_secs_f64();
    ensure(
        worst < 1e-6 && forms < 1e-12 && secs < 5.0,
        format!("max |traced - closed| = {worst:.2e}, forms differ by {forms:.2e}, {secs:.2} s"),
    )
}

fn designed() -> LoomSurfaceSpec {
    design_summable(DecayRule::Harmonic { scale: 0.8 }, 6).unwrap().spec
}

fn c2_zero_slack_on_core() -> Check {
    let spec = designed();
    let mut worst: f64 = 0.0;
    for sheet in [0, 1] {
        for t in [1.0, 10.0, 100.0] {
            let tr = trace_geodesic(&SurfaceTangent::x(sheet), t, &spec).map_err(|e| e.to_string())?;
            worst = worst.max(slack(&tr).value.abs());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut min_off: f64 = f64::INFINITY;
    let mut n = 0;
    while n < 100 {
        let z = BandPoint { x: rng.gen_range(-5.0..40.0), y: rng.gen_range(-1.2..1.2) };
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        if z.y.abs() < 0.05 && (angle.sin()).abs() < 0.05 {
            continue;
        }
        let Ok(start) = SurfaceTangent::new(z, rng.gen_range(0..2), angle, &spec) else { continue };
        let tr = trace_geodesic(&start, 5.0, &spec).map_err(|e| e.to_string())?;
        min_off = min_off.min(slack(&tr).value);
        n += 1;
    }
    ensure(
        worst <= 1e-9 && min_off > 0.0,
        format!("core slack <= {worst:.1e}, min off-core slack {min_off:.3e} over 100 segments"),
    )
}

fn c3_tau_lipschitz() -> Check {
    let spec = designed();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = f64::NEG_INFINITY;
    let mut n = 0;
    while n < 10_000 {
        let p = BandPoint { x: rng.gen_range(-5.0..40.0), y: rng.gen_range(-1.5..1.5) };
        let q = BandPoint { x: p.x + rng.gen_range(-4.0..4.0), y: rng.gen_range(-1.5..1.5) };
        if spec.contains_band(p) || spec.contains_band(q) {
            continue;
        }
        let d = dist_chart(band_to_chart(p), band_to_chart(q));
        worst = worst.max((p.x - q.x).abs() - d);
        n += 1;
    }
    ensure(worst <= 1e-9, format!("max |dtau| - dist = {worst:.3e} over 10^4 pairs"))
}

fn c4_busemann_cocycle() -> Check {
    let spec = designed();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let horizon = 15.0;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        // rays on stable horocycles of the core share its forward end
        let s = rng.gen_range(-3.0..40.0);
        let r = rng.gen_range(0.0..1.5);
        let sheet = rng.gen_range(0..2);
        let frame = Mat2::a(s) * Mat2::u(r);
        let y = SurfaceTangent::from_frame(&frame, sheet);
        let t = rng.gen_range(-2.0..2.0);
        let moved = SurfaceTangent::from_frame(&(frame * Mat2::a(t)), sheet);
        let b0 = busemann(&y, horizon, &spec).map_err(|e| e.to_string())?;
        let b1 = busemann(&moved, horizon, &spec).map_err(|e| e.to_string())?;
        if b0.minus_infinity || b1.minus_infinity {
            return Err("finite-slack start flagged as -inf".into());
        }
        worst = worst.max((b1.value - b0.value - t).abs());
    }
    ensure(worst < 1e-8, format!("max |beta(a_t y) - beta(y) - t| = {worst:.3e}"))
}

fn c5_weaving_additivity() -> Check {
    let clock = Instant::now();
    let sweep = gap_sweep(3, FRAC_PI_4, &[5.0, 10.0, 20.0, 40.0], Exec::default()).map_err(|e| e.to_string())?;
    let errs: Vec<String> = sweep.reports.iter().map(|r| format!("{:.2e}", r.abs_error)).collect();
    let last = sweep.reports.last().unwrap();
    let expected_ok = (last.predicted_slack - 3.0 * LN_2).abs() < 1e-9;
    let secs = clock.elapsed().as_secs_f64();
    ensure(
        sweep.monotone && last.abs_error < 1e-3 && expected_ok && secs < 30.0,
        format!("errors {} (non-increasing: {}), {secs:.2} s", errs.join(", "), sweep.monotone),
    )
}

fn c6_weaving_lemma() -> Check {
    let e = IntervalSet::new(1e-12, vec![[0.3, 0.9]]).unwrap();
    let spec = design_from_E(&e, 8, 1.0).map_err(|e| e.to_string())?.spec;
    // rho equal to the second gap makes the first two gaps too short, so k0 = 3
    let rho = spec.report().gaps[1];
    let report = verify_weaving_lemma(rho, &spec, 1500, 6).map_err(|e| e.to_string())?;
    let beyond: Vec<_> = report.rays.iter().filter(|r| r.start_tau > report.sufficient_s).take(200).collect();
    let weaving = beyond.iter().all(|r| r.weaving);
    let back = backtracking_ray(2, 1, &spec).map_err(|e| e.to_string())?;
    let back_slack = slack(&back.trajectory).value;
    ensure(
        report.k0 == 3 && beyond.len() == 200 && weaving && back_slack > spec.gap_floor(),
        format!(
            "k0 = {}, S = {:.3}: {} rays beyond S, all weaving: {weaving}; backtracking slack {back_slack:.3} vs min gap {:.3}",
            report.k0,
            report.sufficient_s,
            beyond.len(),
            spec.gap_floor()
        ),
    )
}

fn c7_proximality() -> Check {
    let spec = design_summable(DecayRule::Harmonic { scale: 1.0 }, 20).map_err(|e| e.to_string())?.spec;
    let vals: Vec<(usize, f64)> = [5usize, 10, 20]
        .iter()
        .map(|&k| (k, sheet_distance(BandPoint { x: spec.entries()[k - 1].s, y: 0.0 }, &spec)))
        .collect();
    let below = vals.iter().all(|&(k, d)| d < 3.0 / k as f64);
    let decreasing = vals.windows(2).all(|w| w[1].1 < w[0].1);
    ensure(
        below && decreasing,
        format!("sheet distances {:?}", vals.iter().map(|(k, d)| format!("k={k}: {d:.4}")).collect::<Vec<_>>()),
    )
}

fn c8_recurrence() -> Check {
    let e = IntervalSet::points(1e-12, &[LN_2]).unwrap();
    let spec = design_from_E(&e, 8, 6.0).map_err(|e| e.to_string())?.spec;
    let mut msgs = Vec::new();
    let mut ok = true;
    for t in [2.0 * LN_2, 4.0 * LN_2] {
        let r = recurrence_by_slack(t, &spec, 0.05, Exec::default()).map_err(|e| e.to_string())?;
        match r.witness {
            Some(w) if w.pattern.len() % 2 == 0 && (w.traced_slack - t).abs() <= 0.05 => {
                msgs.push(format!("t={t:.4}: {:?} slack {:.4}", w.pattern, w.traced_slack))
            }
            other => {
                ok = false;
                msgs.push(format!("t={t:.4}: no valid witness ({other:?})"));
            }
        }
    }
    let odd = recurrence_by_slack(LN_2, &spec, 0.1, Exec::default()).map_err(|e| e.to_string())?;
    ok &= odd.witness.is_none();
    msgs.push(format!("t=ln2 witness: {}", odd.witness.is_some()));
    let d = delta_sets(&e, 5.0, Parity::Even, Exec::default()).map_err(|e| e.to_string())?;
    let progression = IntervalSet::points(d.delta, &[2.0 * LN_2, 4.0 * LN_2, 6.0 * LN_2]).unwrap();
    let exact = d.intervals == progression.intervals;
    ok &= exact;
    msgs.push(format!("even delta set exact: {exact}"));
    ensure(ok, msgs.join("; "))
}

fn c9_dimension() -> Check {
    let clock = Instant::now();
    let scales = geometric_scales(3.0, 4, 10);
    let c = cantor_cover(12, 1.0 / 3.0, 0.0).map_err(|e| e.to_string())?;
    let est = box_dimension(&c, &scales, Exec::default()).map_err(|e| e.to_string())?;
    let shifted = cantor_cover(12, 1.0 / 3.0, 1.0).map_err(|e| e.to_string())?;
    let two = sumset_coarse(&shifted, 2, scales[scales.len() - 1], Exec::default()).map_err(|e| e.to_string())?;
    let est2 = box_dimension(&two, &scales, Exec::default()).map_err(|e| e.to_string())?;
    let target = 2f64.ln() / 3f64.ln();
    let secs = clock.elapsed().as_secs_f64();
    ensure(
        (est.value - target).abs() <= 0.03 && est.r2 >= 0.99 && est2.value >= 0.93 && secs < 60.0,
        format!("C: {:.4} (r2 {:.4}); C+C: {:.4}; {secs:.2} s", est.value, est.r2, est2.value),
    )
}

fn c10_measure_lab() -> Check {
    let spec = design_summable(DecayRule::Geometric { h1: 0.6, ratio: 0.5 }, 8).map_err(|e| e.to_string())?.spec;
    let sec = select_section(&spec, 0.5).map_err(|e| e.to_string())?;
    let r = 0.8 * sec.delta / 4.0;
    let orbit = Orbit::trace(&spec, 1e4).map_err(|e| e.to_string())?;
    let opts = MeasureOptions::default();
    let mut ok = true;
    let mut trend = Vec::new();
    let mut visits = 0;
    for t in [1e2, 1e3, 1e4] {
        let mu = measure_from_orbit(&orbit, &sec, r, t, opts, Exec::default()).map_err(|e| e.to_string())?;
        ok &= (mu.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12;
        ok &= mu.visits.iter().all(|v| v[1] - v[0] >= 2.0 * r - 2.0 * mu.sample_step);
        let f = BoxFunction { lo: [-r / 2.0, -1.0, -1.0], hi: [r / 2.0, 1.0, 1.0], value: 1.0 };
        ok &= check_flow_invariance(&mu, r / 4.0, &f).map_err(|e| e.to_string())?.passed;
        for (r1, r2) in [(r / 4.0, r / 2.0), (r / 2.0, r), (r / 4.0, r)] {
            ok &= check_restriction(&orbit, &sec, r1, r2, t, opts).map_err(|e| e.to_string())?.passed;
        }
        let tight = check_tightness(&mu, 0.2, 0.1 * r / 4.0).map_err(|e| e.to_string())?;
        trend.push(format!("T={t:.0}: inner mass {:.3}, occupation {:.3}", tight.inner_mass, mu.occupation_time));
        visits = mu.visits.len();
    }
    ensure(
        ok,
        format!("mass, visit lengths, restriction, invariance hold; {visits} visit(s), {} crossings; trend [{}]", orbit.crossings(), trend.join("; ")),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("1 closed-form crossing slack", c1_crossing_slack),
        ("2 zero slack on the core", c2_zero_slack_on_core),
        ("3 tau is 1-Lipschitz", c3_tau_lipschitz),
        ("4 Busemann cocycle", c4_busemann_cocycle),
        ("5 weaving additivity", c5_weaving_additivity),
        ("6 weaving lemma sampling", c6_weaving_lemma),
        ("7 proximality trend", c7_proximality),
        ("8 distal recurrence model", c8_recurrence),
        ("9 dimension estimates", c9_dimension),
        ("10 measure lab", c10_measure_lab),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(msg) => println!("PASS criterion {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
