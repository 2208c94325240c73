//! Crossings, weaving geodesics and their slack.
//!
//! A geodesic with a prescribed crossing order is developed exactly: segment
//! `j` of the folded path is the chart geodesic `(P_j, Q_j)` with
//! `P_j = R_{k_j}(P_{j-1})` computed forwards and `Q_{j-1} = R_{k_j}(Q_j)`
//! computed backwards, so every segment is obtained at its own scale.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LoomError, Result};
use crate::exec::Exec;
use crate::hyperbolic::{
    band_to_chart, dist_chart, distance_to_line, project_to_line, BandPoint, Boundary, ChartPoint,
    GeodesicLine, Isometry, Mat2,
};
use crate::surface::{height_slack, HalfPlaneSpec, LoomSurfaceSpec};
use crate::tracer::{
    crossing_sequence, slack, trace_geodesic, Arc, SurfaceTangent, TraceKind, TraceOptions, Trajectory,
};

/// Distance of the default start point from the core, in τ units.
pub const LEAD_IN: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    /// Sheet on which the crossing geodesic starts.
    pub fn start_sheet(self) -> u8 {
        match self {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }
    }
}

/// Slack of a single crossing, `-2 ln cos h`.
pub fn crossing_slack(h: f64) -> Result<f64> {
    if !(h > 0.0 && h < FRAC_PI_2) {
        return Err(LoomError::Domain(format!("height {h} outside (0, pi/2)")));
    }
    Ok(height_slack(h))
}

/// Same value written as `2 ln cosh(artanh(sin h))`. Loses accuracy as `h`
/// approaches `pi/2`, where `artanh` is ill-conditioned.
pub fn crossing_slack_hyperbolic(h: f64) -> Result<f64> {
    crossing_slack(h).map(|_| 2.0 * h.sin().atanh().cosh().ln())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeavingPattern {
    /// 1-based, strictly increasing.
    pub indices: Vec<usize>,
    pub initial_sign: Sign,
}

impl WeavingPattern {
    pub fn new(indices: Vec<usize>, initial_sign: Sign, spec: &LoomSurfaceSpec) -> Result<Self> {
        if indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LoomError::PatternNotIncreasing(indices));
        }
        for &k in &indices {
            if k == 0 || k > spec.len() {
                return Err(LoomError::IndexOutOfRange(k, spec.len()));
            }
        }
        Ok(Self { indices, initial_sign })
    }

    pub fn predicted_slack(&self, spec: &LoomSurfaceSpec) -> f64 {
        self.indices.iter().map(|&k| height_slack(spec.entries()[k - 1].h)).sum()
    }

    /// Smallest `|s_{k_{j+1}} - s_{k_j}|`; infinite for fewer than two indices.
    pub fn min_gap(&self, spec: &LoomSurfaceSpec) -> f64 {
        self.indices
            .windows(2)
            .map(|w| spec.entries()[w[1] - 1].s - spec.entries()[w[0] - 1].s)
            .fold(f64::INFINITY, f64::min)
    }
}

/// A geodesic developed through a prescribed sequence of crossings.
#[derive(Debug, Clone)]
pub struct Chain {
    /// Folded segments, one per sheet visit.
    pub segments: Vec<GeodesicLine>,
    pub trajectory: Trajectory,
    /// Global times of the crossings.
    pub crossing_times: Vec<f64>,
}

impl Chain {
    /// The developed geodesic in the chart of the first segment.
    pub fn developed(&self) -> GeodesicLine {
        self.segments[0]
    }
}

fn local_crossing(frame: &Mat2, b: &crate::surface::BoundaryGeometry) -> Option<f64> {
    let inv = frame.inverse();
    match (inv.apply_boundary(Boundary::Finite(b.left)), inv.apply_boundary(Boundary::Finite(b.right))) {
        (Boundary::Finite(p), Boundary::Finite(q)) if p * q < 0.0 => Some(0.5 * (-p * q).ln()),
        _ => None,
    }
}

/// Develops the geodesic that starts at the boundary point `p0`, crosses
/// the 0-based boundaries `indices` in order and ends at `q_end`. Time zero
/// is the point of the first segment nearest to `start`.
pub fn develop_chain(
    spec: &LoomSurfaceSpec,
    indices: &[usize],
    p0: Boundary,
    q_end: Boundary,
    start_sheet: u8,
    start: BandPoint,
    horizon: f64,
) -> Result<Chain> {
    let m = indices.len();
    let refl = |k: usize| spec.boundary(k).reflection;
    let mut ps = vec![p0];
    for &k in indices {
        let next = refl(k).apply_boundary(*ps.last().unwrap());
        ps.push(next);
    }
    let mut qs = vec![q_end; m + 1];
    for j in (1..=m).rev() {
        qs[j - 1] = refl(indices[j - 1]).apply_boundary(qs[j]);
    }
    let segments = ps
        .iter()
        .zip(&qs)
        .map(|(&p, &q)| GeodesicLine::new(p, q))
        .collect::<Result<Vec<_>>>()?;
    let frames: Vec<Mat2> = segments.iter().map(|g| g.frame()).collect();

    // local-time offsets: global = local - offset[j]
    let mut offset = vec![0.0; m + 1];
    offset[0] = project_to_line(band_to_chart(start), &segments[0]);
    let mut crossing_times = Vec::with_capacity(m);
    for j in 1..=m {
        let b = spec.boundary(indices[j - 1]);
        let out = local_crossing(&frames[j - 1], b)
            .ok_or_else(|| LoomError::Precondition(format!("segment {} misses boundary {}", j - 1, indices[j - 1] + 1)))?;
        let inn = local_crossing(&frames[j], b)
            .ok_or_else(|| LoomError::Precondition(format!("segment {j} misses boundary {}", indices[j - 1] + 1)))?;
        let g = out - offset[j - 1];
        let prev = crossing_times.last().copied().unwrap_or(0.0);
        if g <= prev {
            return Err(LoomError::Precondition(format!("crossing of boundary {} precedes the start", indices[j - 1] + 1)));
        }
        crossing_times.push(g);
        offset[j] = inn - g;
    }
    if let Some(&last) = crossing_times.last() {
        if horizon <= last {
            return Err(LoomError::Precondition(format!("horizon {horizon} ends before the last crossing at {last}")));
        }
    }

    let mut arcs = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let a = if j == 0 { 0.0 } else { crossing_times[j - 1] };
        let b = if j == m { horizon } else { crossing_times[j] };
        for bound in spec.boundaries() {
            let k = bound.index;
            if (j > 0 && k == indices[j - 1]) || (j < m && k == indices[j]) {
                continue;
            }
            if let Some(t) = local_crossing(&frames[j], bound) {
                let g = t - offset[j];
                if g > a + 1e-9 && g < b - 1e-9 {
                    return Err(LoomError::UnexpectedCrossing {
                        found: k + 1,
                        expected: indices.get(j).map(|i| i + 1),
                    });
                }
            }
        }
        arcs.push(Arc {
            frame: (frames[j] * Mat2::a(a + offset[j])).normalized(),
            sheet: start_sheet ^ (j % 2) as u8,
            entry_time: a,
            exit_time: b,
            crossing: if j < m { Some(indices[j] + 1) } else { None },
            fold: if j == 0 { Isometry::IDENTITY } else { refl(indices[j - 1]) },
            param_sign: 1.0,
        });
    }
    let trajectory = Trajectory::from_arcs(TraceKind::Geodesic, arcs, TraceOptions::default());
    Ok(Chain { segments, trajectory, crossing_times })
}

/// `η_k^±` together with a finite trace of it.
#[derive(Debug, Clone)]
pub struct CrossingGeodesic {
    pub index: usize,
    pub sign: Sign,
    pub line: GeodesicLine,
    pub slack_closed_form: f64,
    pub chain: Chain,
}

/// Default horizon for a trace ending beyond `s`.
pub fn default_horizon(s: f64) -> f64 {
    2.0 * s.max(0.0) + 2.0 * LEAD_IN
}

/// `η_k^±` (1-based `k`) traced from `τ = -20` over the default horizon.
pub fn build_crossing(k: usize, sign: Sign, spec: &LoomSurfaceSpec) -> Result<CrossingGeodesic> {
    if k == 0 || k > spec.len() {
        return Err(LoomError::IndexOutOfRange(k, spec.len()));
    }
    let e = spec.entries()[k - 1];
    build_crossing_with_horizon(k, sign, spec, default_horizon(e.s))
}

pub fn build_crossing_with_horizon(k: usize, sign: Sign, spec: &LoomSurfaceSpec, horizon: f64) -> Result<CrossingGeodesic> {
    if k == 0 || k > spec.len() {
        return Err(LoomError::IndexOutOfRange(k, spec.len()));
    }
    let chain = develop_chain(
        spec,
        &[k - 1],
        Boundary::Finite(0.0),
        Boundary::Infinity,
        sign.start_sheet(),
        BandPoint { x: -LEAD_IN, y: 0.0 },
        horizon,
    )?;
    Ok(CrossingGeodesic {
        index: k,
        sign,
        line: chain.developed(),
        slack_closed_form: height_slack(spec.entries()[k - 1].h),
        chain,
    })
}

/// `η_{W,±}` traced from `τ = -20` until well past the last crossing.
pub fn build_weaving(w: &WeavingPattern, spec: &LoomSurfaceSpec) -> Result<Chain> {
    let last_s = w.indices.last().map_or(0.0, |&k| spec.entries()[k - 1].s);
    build_weaving_with_horizon(w, spec, default_horizon(last_s))
}

pub fn build_weaving_with_horizon(w: &WeavingPattern, spec: &LoomSurfaceSpec, horizon: f64) -> Result<Chain> {
    let idx: Vec<usize> = w.indices.iter().map(|k| k - 1).collect();
    develop_chain(
        spec,
        &idx,
        Boundary::Finite(0.0),
        Boundary::Infinity,
        w.initial_sign.start_sheet(),
        BandPoint { x: -LEAD_IN, y: 0.0 },
        horizon,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditivityReport {
    pub pattern: Vec<usize>,
    pub traced_slack: f64,
    pub predicted_slack: f64,
    pub abs_error: f64,
    pub min_gap: f64,
    pub horizon: f64,
}

pub fn verify_weaving_additivity(w: &WeavingPattern, spec: &LoomSurfaceSpec) -> Result<AdditivityReport> {
    let chain = build_weaving(w, spec)?;
    let traced = slack(&chain.trajectory).value;
    let predicted = w.predicted_slack(spec);
    Ok(AdditivityReport {
        pattern: w.indices.clone(),
        traced_slack: traced,
        predicted_slack: predicted,
        abs_error: (traced - predicted).abs(),
        min_gap: w.min_gap(spec),
        horizon: chain.trajectory.total_time,
    })
}

/// Evenly spaced surface with `m` entries of height `h`.
pub fn uniform_spec(m: usize, h: f64, gap: f64) -> Result<LoomSurfaceSpec> {
    LoomSurfaceSpec::new((0..m).map(|i| HalfPlaneSpec { s: i as f64 * gap, h }).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSweep {
    pub reports: Vec<AdditivityReport>,
    /// Errors below this floor are at the integration tolerance and compare equal.
    pub error_floor: f64,
    pub monotone: bool,
}

pub const ERROR_FLOOR: f64 = 1e-9;

/// Additivity error of the full pattern `[1..=m]` over a range of spacings.
pub fn gap_sweep(m: usize, h: f64, gaps: &[f64], exec: Exec) -> Result<GapSweep> {
    gap_sweep_pattern(&(1..=m).collect::<Vec<_>>(), h, gaps, exec)
}

/// Additivity error of `pattern` on evenly spaced surfaces of height `h`.
pub fn gap_sweep_pattern(pattern: &[usize], h: f64, gaps: &[f64], exec: Exec) -> Result<GapSweep> {
    let m = pattern.iter().copied().max().unwrap_or(0);
    if m == 0 {
        return Err(LoomError::Domain("empty pattern".into()));
    }
    let reports = exec
        .map(gaps, |&g| {
            let spec = uniform_spec(m, h, g)?;
            let w = WeavingPattern::new(pattern.to_vec(), Sign::Plus, &spec)?;
            verify_weaving_additivity(&w, &spec)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let monotone = reports
        .windows(2)
        .all(|w| w[1].abs_error <= w[0].abs_error.max(ERROR_FLOOR));
    Ok(GapSweep { reports, error_floor: ERROR_FLOOR, monotone })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaySample {
    pub start_tau: f64,
    pub slack: f64,
    pub crossings: Vec<usize>,
    pub weaving: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeavingLemmaReport {
    pub rho: f64,
    pub sampled: usize,
    pub accepted: usize,
    /// Largest start τ of an accepted non-weaving ray; `None` when all are weaving.
    pub empirical_s: Option<f64>,
    /// `s_{k_0}` with `k_0` the least index whose later gaps all exceed `rho`.
    pub sufficient_s: f64,
    pub k0: usize,
    pub all_weaving_beyond_sufficient_s: bool,
    pub rays: Vec<RaySample>,
}

/// Least 1-based index beyond which every boundary gap exceeds `rho`.
pub fn lemma_k0(rho: f64, spec: &LoomSurfaceSpec) -> usize {
    let gaps = &spec.report().gaps;
    let mut k0 = 1;
    for (i, &g) in gaps.iter().enumerate() {
        if g <= rho {
            k0 = i + 2;
        }
    }
    k0.min(spec.len())
}

fn strictly_increasing(v: &[usize]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

/// Samples low-slack rays and checks that those starting late are weaving.
pub fn verify_weaving_lemma(rho: f64, spec: &LoomSurfaceSpec, samples: usize, seed: u64) -> Result<WeavingLemmaReport> {
    if rho < 0.0 || samples == 0 {
        return Err(LoomError::Domain("need rho >= 0 and at least one sample".into()));
    }
    let tol = 1e-9;
    let n = spec.len();
    let s_first = spec.entries()[0].s;
    let s_last = spec.entries()[n - 1].s;
    let rays = Exec::Parallel.map_range(samples, |i| -> Result<Option<RaySample>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let (start, horizon) = match i % 3 {
            // subrays of the core
            0 => {
                let t = rng.gen_range(s_first - 5.0..s_last + 5.0);
                (SurfaceTangent::along_core(t, rng.gen_range(0..2)), 10.0)
            }
            // perturbed weaving geodesics
            1 => {
                let a = rng.gen_range(1..=n);
                let b = rng.gen_range(a..=n.min(a + 2));
                let idx: Vec<usize> = if a == b { vec![a] } else { vec![a, b] };
                let w = WeavingPattern::new(idx, if rng.gen_bool(0.5) { Sign::Plus } else { Sign::Minus }, spec)?;
                let chain = match build_weaving(&w, spec) {
                    Ok(c) => c,
                    Err(_) => return Ok(None),
                };
                let t_end = chain.crossing_times.last().copied().unwrap_or(LEAD_IN);
                let t = rng.gen_range(0.0..t_end + 5.0);
                let base = chain.trajectory.frame_at(t);
                let tan = SurfaceTangent::from_frame(&base.0, base.1);
                let jitter = rng.gen_range(-1e-3..1e-3);
                let tan = SurfaceTangent { angle: (tan.angle + jitter).rem_euclid(std::f64::consts::TAU), ..tan };
                if !spec.contains_band(tan.base.z) {
                    return Ok(None);
                }
                (tan, (t_end - t).max(0.0) + 10.0)
            }
            // near-horizontal random rays
            _ => {
                let z = BandPoint { x: rng.gen_range(s_first - 5.0..s_last + 5.0), y: rng.gen_range(-1.3..1.3) };
                let angle = rng.gen_range(-0.2..0.2f64).rem_euclid(std::f64::consts::TAU);
                match SurfaceTangent::new(z, rng.gen_range(0..2), angle, spec) {
                    Ok(t) => (t, 15.0),
                    Err(_) => return Ok(None),
                }
            }
        };
        let tr = match trace_geodesic(&start, horizon, spec) {
            Ok(tr) => tr,
            Err(LoomError::DegenerateTrace(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let crossings = crossing_sequence(&tr);
        Ok(Some(RaySample {
            start_tau: start.base.z.x,
            slack: slack(&tr).value,
            weaving: strictly_increasing(&crossings),
            crossings,
        }))
    });
    let mut kept = Vec::new();
    for r in rays {
        if let Some(r) = r? {
            kept.push(r);
        }
    }
    let sampled = kept.len();
    let accepted: Vec<RaySample> = kept.into_iter().filter(|r| r.slack <= rho + tol).collect();
    let empirical_s = accepted.iter().filter(|r| !r.weaving).map(|r| r.start_tau).fold(None, |acc: Option<f64>, t| {
        Some(acc.map_or(t, |a| a.max(t)))
    });
    let k0 = lemma_k0(rho, spec);
    let sufficient_s = spec.entries()[k0 - 1].s;
    let all_weaving_beyond_sufficient_s = accepted.iter().filter(|r| r.start_tau > sufficient_s).all(|r| r.weaving);
    Ok(WeavingLemmaReport {
        rho,
        sampled,
        accepted: accepted.len(),
        empirical_s,
        sufficient_s,
        k0,
        all_weaving_beyond_sufficient_s,
        rays: accepted,
    })
}

/// Ray that comes in from the far end, crosses `∂D_hi` and then `∂D_lo`
/// (1-based, `hi > lo`) and leaves towards `τ = -inf`.
pub fn backtracking_ray(hi: usize, lo: usize, spec: &LoomSurfaceSpec) -> Result<Chain> {
    if hi == 0 || hi > spec.len() || lo == 0 || lo >= hi {
        return Err(LoomError::Domain(format!("need 1 <= lo < hi <= {}", spec.len())));
    }
    let s_hi = spec.entries()[hi - 1].s;
    let s_lo = spec.entries()[lo - 1].s;
    develop_chain(
        spec,
        &[hi - 1, lo - 1],
        Boundary::Infinity,
        Boundary::Finite(0.0),
        0,
        BandPoint { x: s_hi + 5.0, y: 0.0 },
        (s_hi - s_lo) + 15.0,
    )
}

/// One piece of an ε-chain: `length` units of geodesic from `start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainArc {
    pub start: SurfaceTangent,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSlackReport {
    pub eps: f64,
    pub junction_gap_sum: f64,
    pub tight_length: f64,
    pub tight_slack: f64,
    pub arc_slack_sum: f64,
    pub abs_error: f64,
    /// Largest distance from a junction point to the tight geodesic.
    pub max_junction_deviation: f64,
}

/// Pulls an ε-chain tight and compares its slack with the sum over arcs.
pub fn verify_chain_slack(chain: &[ChainArc], min_length: f64, eps: f64, spec: &LoomSurfaceSpec) -> Result<ChainSlackReport> {
    if chain.is_empty() {
        return Err(LoomError::Precondition("empty chain".into()));
    }
    if let Some(a) = chain.iter().find(|a| a.length < min_length) {
        return Err(LoomError::Precondition(format!("arc of length {} is shorter than {min_length}", a.length)));
    }
    let traces = chain.iter().map(|a| trace_geodesic(&a.start, a.length, spec)).collect::<Result<Vec<_>>>()?;

    // developing map of each arc's final chart into the first arc's chart
    let mut dev = Isometry::IDENTITY;
    let mut gap_sum = 0.0;
    let mut tau_jumps = 0.0;
    let mut junctions = Vec::new();
    let p = band_to_chart(chain[0].start.base.z);
    let mut q = p;
    for (i, tr) in traces.iter().enumerate() {
        if i > 0 {
            let prev = traces[i - 1].end_tangent();
            let next = chain[i].start;
            if prev.base.sheet != next.base.sheet {
                return Err(LoomError::Precondition(format!("junction {i} changes sheet")));
            }
            gap_sum += dist_chart(band_to_chart(prev.base.z), band_to_chart(next.base.z));
            tau_jumps += next.base.z.x - prev.base.z.x;
            junctions.push(dev.apply_chart(band_to_chart(prev.base.z)));
            junctions.push(dev.apply_chart(band_to_chart(next.base.z)));
        }
        for arc in tr.arcs.iter().skip(1) {
            dev = dev.compose(&arc.fold);
        }
        let (end, _) = tr.position_at(tr.end_time());
        q = dev.apply_chart(end);
    }
    if gap_sum > eps * (1.0 + 1e-9) + 1e-15 {
        return Err(LoomError::Precondition(format!("junction gaps sum to {gap_sum:e} > eps = {eps:e}")));
    }
    let lengths: f64 = chain.iter().map(|a| a.length).sum();
    let arc_slack_sum: f64 = traces.iter().map(|t| slack(t).value).sum();
    let tight_length = dist_chart(p, q);
    let tau_q = traces.last().unwrap().end_tangent().base.z.x;
    let tight_slack = tight_length - (tau_q - chain[0].start.base.z.x);
    let error = tight_length - lengths - tau_jumps;
    let max_junction_deviation = if tight_length == 0.0 {
        0.0
    } else {
        let tight = geodesic_through(p, q)?;
        junctions.iter().map(|&j| distance_to_line(j, &tight)).fold(0.0, f64::max)
    };
    Ok(ChainSlackReport {
        eps,
        junction_gap_sum: gap_sum,
        tight_length,
        tight_slack,
        arc_slack_sum,
        abs_error: error.abs(),
        max_junction_deviation,
    })
}

/// Complete geodesic through two distinct chart points.
pub fn geodesic_through(p: ChartPoint, q: ChartPoint) -> Result<GeodesicLine> {
    if (p.u - q.u).abs() <= 1e-15 * (1.0 + p.u.abs()) {
        return GeodesicLine::new(Boundary::Finite(p.u), Boundary::Infinity);
    }
    // centre on the real axis equidistant from p and q
    let c = (q.u * q.u + q.v * q.v - p.u * p.u - p.v * p.v) / (2.0 * (q.u - p.u));
    let r = (p.u - c).hypot(p.v);
    if q.u > p.u {
        GeodesicLine::new(Boundary::Finite(c - r), Boundary::Finite(c + r))
    } else {
        GeodesicLine::new(Boundary::Finite(c + r), Boundary::Finite(c - r))
    }
}

/// Two arcs of one geodesic separated by a gap of `eps` along it.
pub fn chain_with_gap(start: &SurfaceTangent, l1: f64, eps: f64, l2: f64, spec: &LoomSurfaceSpec) -> Result<Vec<ChainArc>> {
    let resume = trace_geodesic(start, l1 + eps, spec)?.end_tangent();
    Ok(vec![ChainArc { start: *start, length: l1 }, ChainArc { start: resume, length: l2 }])
}
