//! Geodesic and horocycle tracing on a loom surface.
//!
//! Tracing folds instead of unfolding: the frame lives in the band chart of
//! the current sheet and, at a crossing of `∂D_k`, is replaced by its mirror
//! image `R_k ∘ F ∘ J` on the other sheet. The developed picture is recovered
//! from the per-arc reflections. The boundary table of the surface is the
//! only cache and is immutable, so concurrent traces need no locking.

use std::f64::consts::PI;
use std::fmt::Write as _;

use log::debug;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LoomError, Result};
use crate::hyperbolic::{band_from_frame, chart_to_band, frame_from_band, BandPoint, Boundary, ChartPoint, Isometry, Mat2};
use crate::output::fmt_sig;
use crate::surface::{LoomSurfaceSpec, SurfacePoint};

/// Longest free flight between crossing searches.
pub const CHUNK: f64 = 4.0;
/// Discriminant guard for horocycle/boundary intersections.
pub const GRAZE_GUARD: f64 = 1e-12;
/// Smallest accepted time to the next crossing.
pub const MIN_STEP: f64 = 1e-12;
/// Slack growth rate above which a ray is flagged as having infinite slack.
pub const DIVERGENCE_RATE: f64 = 0.5;

const K: Mat2 = Mat2 { a: 0.0, b: 1.0, c: -1.0, d: 0.0 };
const K_INV: Mat2 = Mat2 { a: 0.0, b: -1.0, c: 1.0, d: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceTangent {
    pub base: SurfacePoint,
    pub angle: f64,
}

impl SurfaceTangent {
    pub fn new(z: BandPoint, sheet: u8, angle: f64, spec: &LoomSurfaceSpec) -> Result<Self> {
        if !angle.is_finite() {
            return Err(LoomError::Domain("angle must be finite".into()));
        }
        Ok(Self { base: SurfacePoint::new(z, sheet, spec)?, angle: angle.rem_euclid(2.0 * PI) })
    }

    /// `x_0` or `x_1`: the horizontal vector at the band origin.
    pub fn x(sheet: u8) -> Self {
        Self { base: SurfacePoint { z: BandPoint::ORIGIN, sheet }, angle: 0.0 }
    }

    /// `a_t x_j`.
    pub fn along_core(t: f64, sheet: u8) -> Self {
        Self { base: SurfacePoint { z: BandPoint { x: t, y: 0.0 }, sheet }, angle: 0.0 }
    }

    pub fn frame(&self) -> Mat2 {
        frame_from_band(self.base.z, self.angle)
    }

    pub fn from_frame(frame: &Mat2, sheet: u8) -> Self {
        let (z, angle) = band_from_frame(frame);
        Self { base: SurfacePoint { z, sheet }, angle }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HoroDirection {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceKind {
    Geodesic,
    Horocycle(HoroDirection),
}

impl TraceKind {
    fn is_horocycle(self) -> bool {
        matches!(self, TraceKind::Horocycle(_))
    }

    /// One-parameter subgroup driving the trace.
    fn step(self, r: f64) -> Mat2 {
        match self {
            TraceKind::Geodesic => Mat2::a(r),
            TraceKind::Horocycle(_) => Mat2::u(r),
        }
    }

    fn to_param(self, frame: &Mat2) -> Mat2 {
        match self {
            TraceKind::Horocycle(HoroDirection::Unstable) => *frame * K_INV,
            _ => *frame,
        }
    }

    fn from_param(self, frame: &Mat2) -> Mat2 {
        match self {
            TraceKind::Horocycle(HoroDirection::Unstable) => *frame * K,
            _ => *frame,
        }
    }
}

/// Flight between two crossings. `frame` is the driving frame at
/// `entry_time` in the chart of `sheet`; the trace at time `t` is
/// `frame · g(param_sign · (t - entry_time))`. `fold` is the reflection
/// taking the previous arc's chart to this one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub frame: Mat2,
    pub sheet: u8,
    pub entry_time: f64,
    pub exit_time: f64,
    /// 1-based index of the boundary crossed at `exit_time`.
    pub crossing: Option<usize>,
    pub fold: Isometry,
    pub param_sign: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Checkpoint {
    time: f64,
    frame: Mat2,
    arc: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: TraceKind,
    pub arcs: Vec<Arc>,
    pub total_time: f64,
    pub tau_samples: Vec<(f64, f64)>,
    checkpoints: Vec<Checkpoint>,
}

/// Resumable state of a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowState {
    /// Driving frame (for unstable horocycles the frame times `K^{-1}`).
    pub frame: Mat2,
    pub sheet: u8,
    pub param_sign: f64,
    pub last_crossed: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    pub sample_dt: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { sample_dt: 0.1 }
    }
}

impl Trajectory {
    /// Assembles a trajectory from arcs, adding chunked checkpoints and τ samples.
    pub fn from_arcs(kind: TraceKind, arcs: Vec<Arc>, opts: TraceOptions) -> Self {
        let mut checkpoints = Vec::new();
        for (i, arc) in arcs.iter().enumerate() {
            let mut t = arc.entry_time;
            let mut f = arc.frame;
            loop {
                checkpoints.push(Checkpoint { time: t, frame: f, arc: i });
                let dt = (arc.exit_time - t).min(CHUNK);
                if dt <= 0.0 {
                    break;
                }
                f = (f * kind.step(arc.param_sign * dt)).normalized();
                t += dt;
                if t >= arc.exit_time {
                    break;
                }
            }
        }
        let total_time = arcs.last().map_or(0.0, |a| a.exit_time) - arcs.first().map_or(0.0, |a| a.entry_time);
        let mut traj = Trajectory { kind, arcs, total_time, tau_samples: Vec::new(), checkpoints };
        traj.tau_samples = traj.sample_tau(opts.sample_dt);
        traj
    }

    fn sample_tau(&self, dt: f64) -> Vec<(f64, f64)> {
        let (t0, t1) = (self.start_time(), self.end_time());
        let mut times: Vec<f64> = Vec::new();
        if dt > 0.0 {
            let n = ((t1 - t0) / dt).floor() as usize;
            times.extend((0..=n).map(|i| t0 + i as f64 * dt));
        }
        times.extend(self.arcs.iter().map(|a| a.exit_time));
        times.push(t1);
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        times.into_iter().map(|t| (t, self.tau_at(t))).collect()
    }

    pub fn start_time(&self) -> f64 {
        self.arcs.first().map_or(0.0, |a| a.entry_time)
    }

    pub fn end_time(&self) -> f64 {
        self.arcs.last().map_or(0.0, |a| a.exit_time)
    }

    fn locate(&self, t: f64) -> (&Checkpoint, &Arc) {
        let i = self.checkpoints.partition_point(|c| c.time <= t).max(1) - 1;
        let c = &self.checkpoints[i];
        (c, &self.arcs[c.arc])
    }

    /// Driving frame and sheet at time `t`.
    fn param_frame_at(&self, t: f64) -> (Mat2, u8) {
        let (c, arc) = self.locate(t);
        ((c.frame * self.kind.step(arc.param_sign * (t - c.time))).normalized(), arc.sheet)
    }

    /// Frame of the traced tangent vector at time `t`.
    pub fn frame_at(&self, t: f64) -> (Mat2, u8) {
        let (f, sheet) = self.param_frame_at(t);
        (self.kind.from_param(&f), sheet)
    }

    pub fn position_at(&self, t: f64) -> (ChartPoint, u8) {
        let (f, sheet) = self.param_frame_at(t);
        (ChartPoint::from_complex(f.apply(Complex64::i())), sheet)
    }

    pub fn band_at(&self, t: f64) -> (BandPoint, u8) {
        let (w, sheet) = self.position_at(t);
        (chart_to_band(w), sheet)
    }

    pub fn tau_at(&self, t: f64) -> f64 {
        let (w, _) = self.position_at(t);
        w.u.hypot(w.v).ln()
    }

    pub fn start_tangent(&self) -> SurfaceTangent {
        let (f, sheet) = self.frame_at(self.start_time());
        SurfaceTangent::from_frame(&f, sheet)
    }

    pub fn end_tangent(&self) -> SurfaceTangent {
        let (f, sheet) = self.frame_at(self.end_time());
        SurfaceTangent::from_frame(&f, sheet)
    }

    pub fn end_state(&self) -> FlowState {
        let (frame, sheet) = self.param_frame_at(self.end_time());
        let last = self.arcs.last().expect("non-empty trajectory");
        // the last arc starts right after its entry crossing
        let last_crossed = if self.arcs.len() > 1 {
            self.arcs[self.arcs.len() - 2].crossing.map(|k| k - 1)
        } else {
            None
        };
        FlowState { frame, sheet, param_sign: last.param_sign, last_crossed }
    }

    /// Slack of the sub-path over `[t0, t1]`.
    pub fn slack_between(&self, t0: f64, t1: f64) -> f64 {
        (t1 - t0) - (self.tau_at(t1) - self.tau_at(t0))
    }
}

struct Flow<'a> {
    spec: &'a LoomSurfaceSpec,
    kind: TraceKind,
    state: FlowState,
}

impl Flow<'_> {
    /// Earliest crossing within `max` time units: `(elapsed, boundary)`.
    fn next_crossing(&self, max: f64) -> Result<Option<(f64, usize)>> {
        let f = &self.state.frame;
        let pos = f.apply(Complex64::i());
        let reach = if self.kind.is_horocycle() { 2.0 * (0.5 * max).asinh() } else { max };
        let half = pos.im * reach.sinh() * (1.0 + 1e-9);
        let inv = f.inverse();
        let sign = self.state.param_sign;
        let mut best: Option<(f64, usize)> = None;
        let mut consider = |elapsed: f64, k: usize, floor: f64| {
            if elapsed > floor && elapsed <= max && best.map_or(true, |(b, _)| elapsed < b) {
                best = Some((elapsed, k));
            }
        };
        for k in self.spec.footprints_meeting(pos.re - half, pos.re + half) {
            let b = self.spec.boundary(k);
            let p = inv.apply_boundary(Boundary::Finite(b.left));
            let q = inv.apply_boundary(Boundary::Finite(b.right));
            match self.kind {
                TraceKind::Geodesic => {
                    if self.state.last_crossed == Some(k) {
                        continue;
                    }
                    match (p, q) {
                        (Boundary::Finite(p), Boundary::Finite(q)) => {
                            let (small, large) = if p.abs() < q.abs() { (p.abs(), q.abs()) } else { (q.abs(), p.abs()) };
                            if small < 1e-10 && large > 1e10 {
                                return Err(LoomError::DegenerateTrace(k + 1));
                            }
                            if p * q < 0.0 {
                                consider(sign * 0.5 * (-p * q).ln(), k, MIN_STEP);
                            }
                        }
                        (Boundary::Finite(x), Boundary::Infinity) | (Boundary::Infinity, Boundary::Finite(x)) => {
                            if x.abs() < 1e-10 {
                                return Err(LoomError::DegenerateTrace(k + 1));
                            }
                        }
                        _ => unreachable!("distinct endpoints"),
                    }
                }
                TraceKind::Horocycle(_) => {
                    let floor = if self.state.last_crossed == Some(k) { 1e-9 } else { MIN_STEP };
                    match (p, q) {
                        (Boundary::Finite(p), Boundary::Finite(q)) => {
                            let c = 0.5 * (p + q);
                            let r = 0.5 * (q - p).abs();
                            let disc = r * r - 1.0;
                            if disc < GRAZE_GUARD {
                                if disc > -1e-6 {
                                    debug!("horocycle grazes boundary {} (discriminant {disc:e})", k + 1);
                                }
                                continue;
                            }
                            let root = disc.sqrt();
                            consider(sign * (c - root), k, floor);
                            consider(sign * (c + root), k, floor);
                        }
                        (Boundary::Finite(x), Boundary::Infinity) | (Boundary::Infinity, Boundary::Finite(x)) => {
                            consider(sign * x, k, floor);
                        }
                        _ => unreachable!("distinct endpoints"),
                    }
                }
            }
        }
        Ok(best)
    }

    fn advance(&mut self, dt: f64) {
        self.state.frame = (self.state.frame * self.kind.step(self.state.param_sign * dt)).normalized();
    }

    fn cross(&mut self, k: usize) {
        let r = self.spec.boundary(k).reflection;
        self.state.frame = r.act_on_frame(&self.state.frame).normalized();
        self.state.sheet ^= 1;
        self.state.last_crossed = Some(k);
        if self.kind.is_horocycle() {
            self.state.param_sign = -self.state.param_sign;
        }
    }
}

fn run(spec: &LoomSurfaceSpec, kind: TraceKind, state: FlowState, duration: f64, opts: TraceOptions) -> Result<Trajectory> {
    if !duration.is_finite() || duration < 0.0 {
        return Err(LoomError::Domain(format!("trace length {duration} must be finite")));
    }
    let pos = ChartPoint::from_complex(state.frame.apply(Complex64::i()));
    if let Some(k) = spec.containing_half_plane(pos) {
        return Err(LoomError::StartInsideHalfPlane(k + 1));
    }
    let mut flow = Flow { spec, kind, state };
    let mut arcs = Vec::new();
    let mut arc = Arc {
        frame: flow.state.frame,
        sheet: flow.state.sheet,
        entry_time: 0.0,
        exit_time: 0.0,
        crossing: None,
        fold: Isometry::IDENTITY,
        param_sign: flow.state.param_sign,
    };
    // chunks restart at every crossing, as `Trajectory::from_arcs` replays them
    let mut time = 0.0;
    while time < duration {
        let dt = (duration - time).min(CHUNK);
        match flow.next_crossing(dt)? {
            Some((e, k)) => {
                flow.advance(e);
                time += e;
                arc.exit_time = time;
                arc.crossing = Some(k + 1);
                arcs.push(arc.clone());
                flow.cross(k);
                arc = Arc {
                    frame: flow.state.frame,
                    sheet: flow.state.sheet,
                    entry_time: time,
                    exit_time: time,
                    crossing: None,
                    fold: spec.boundary(k).reflection,
                    param_sign: flow.state.param_sign,
                };
            }
            None => {
                flow.advance(dt);
                time += dt;
            }
        }
    }
    arc.exit_time = time.max(arc.entry_time);
    arcs.push(arc);
    Ok(Trajectory::from_arcs(kind, arcs, opts))
}

pub fn trace_geodesic(start: &SurfaceTangent, t: f64, spec: &LoomSurfaceSpec) -> Result<Trajectory> {
    trace_geodesic_with(start, t, spec, TraceOptions::default())
}

/// Traces `|t|` units of geodesic, backwards in time when `t < 0`.
pub fn trace_geodesic_with(start: &SurfaceTangent, t: f64, spec: &LoomSurfaceSpec, opts: TraceOptions) -> Result<Trajectory> {
    let state = FlowState {
        frame: start.frame(),
        sheet: start.base.sheet,
        param_sign: if t < 0.0 { -1.0 } else { 1.0 },
        last_crossed: None,
    };
    run(spec, TraceKind::Geodesic, state, t.abs(), opts)
}

pub fn trace_horocycle(start: &SurfaceTangent, l: f64, spec: &LoomSurfaceSpec, dir: HoroDirection) -> Result<Trajectory> {
    trace_horocycle_with(start, l, spec, dir, TraceOptions::default())
}

/// Traces `|l|` units of horocycle, in the negative direction when `l < 0`.
pub fn trace_horocycle_with(
    start: &SurfaceTangent,
    l: f64,
    spec: &LoomSurfaceSpec,
    dir: HoroDirection,
    opts: TraceOptions,
) -> Result<Trajectory> {
    let kind = TraceKind::Horocycle(dir);
    let time_sign = if l < 0.0 { -1.0 } else { 1.0 };
    let sheet_sign = if start.base.sheet == 0 { 1.0 } else { -1.0 };
    let dir_sign = match dir {
        HoroDirection::Stable => 1.0,
        HoroDirection::Unstable => -1.0,
    };
    let state = FlowState {
        frame: kind.to_param(&start.frame()),
        sheet: start.base.sheet,
        param_sign: time_sign * sheet_sign * dir_sign,
        last_crossed: None,
    };
    run(spec, kind, state, l.abs(), opts)
}

/// Continues a trace from a saved state.
pub fn continue_trace(state: &FlowState, kind: TraceKind, duration: f64, spec: &LoomSurfaceSpec) -> Result<Trajectory> {
    run(spec, kind, *state, duration, TraceOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlackValue {
    pub value: f64,
    pub horizon: f64,
    /// Slack grows at least linearly over the second half of the horizon.
    pub diverging: bool,
}

/// Running slack `t - (τ(t) - τ(0))` at every τ sample.
pub fn slack_profile(traj: &Trajectory) -> Vec<(f64, f64)> {
    let t0 = traj.start_time();
    let tau0 = traj.tau_at(t0);
    traj.tau_samples.iter().map(|&(t, tau)| (t - t0, (t - t0) - (tau - tau0))).collect()
}

fn diverging(profile: &[(f64, f64)], horizon: f64) -> bool {
    let late: Vec<&(f64, f64)> = profile.iter().filter(|(t, _)| *t >= 0.5 * horizon && *t > 0.0).collect();
    !late.is_empty() && late.iter().all(|(t, s)| s / t > DIVERGENCE_RATE)
}

pub fn slack(traj: &Trajectory) -> SlackValue {
    let raw = traj.slack_between(traj.start_time(), traj.end_time());
    let value = if raw < 0.0 && raw > -1e-9 { 0.0 } else { raw };
    let horizon = traj.total_time;
    SlackValue { value, horizon, diverging: diverging(&slack_profile(traj), horizon) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusemannValue {
    pub value: f64,
    pub horizon: f64,
    pub minus_infinity: bool,
}

/// `β = τ(start) - slack` of the forward ray over `horizon`.
pub fn busemann(start: &SurfaceTangent, horizon: f64, spec: &LoomSurfaceSpec) -> Result<BusemannValue> {
    if !(horizon > 0.0) {
        return Err(LoomError::Domain("horizon must be positive".into()));
    }
    let traj = trace_geodesic(start, horizon, spec)?;
    let s = slack(&traj);
    Ok(BusemannValue { value: start.base.z.x - s.value, horizon, minus_infinity: s.diverging })
}

/// 1-based indices of the boundaries crossed, in order.
pub fn crossing_sequence(traj: &Trajectory) -> Vec<usize> {
    traj.arcs.iter().filter_map(|a| a.crossing).collect()
}

/// CSV dump: one row per τ sample.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("time,sheet,band_x,band_y,tau,cum_length,crossing_index\n");
    let t0 = traj.start_time();
    for &(t, tau) in &traj.tau_samples {
        let (z, sheet) = traj.band_at(t);
        let crossing = traj
            .arcs
            .iter()
            .find(|a| a.crossing.is_some() && (a.exit_time - t).abs() < 1e-12)
            .and_then(|a| a.crossing)
            .map_or(String::new(), |k| k.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_sig(t),
            sheet,
            fmt_sig(z.x),
            fmt_sig(z.y),
            fmt_sig(tau),
            fmt_sig(t - t0),
            crossing
        );
    }
    out
}
