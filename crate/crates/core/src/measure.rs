//! Empirical invariant measures along the horocycle orbit of `x_0`.
//!
//! Frames near `x_0` on sheet 0 are written `g = n_r a_t u_s`. The traced
//! (stable) horocycle flow is right multiplication by `u`, so it moves the
//! `s` coordinate and leaves `(t, r)` fixed. The section is the set
//! `t ∈ (-δ/4, δ/4)`, `r ∈ (c, d)` at `s = 0`, and the window `B_R` adds
//! `s ∈ (-R, R)`.

use serde::{Deserialize, Serialize};

use crate::error::{LoomError, Result};
use crate::exec::Exec;
use crate::hyperbolic::{nau_decompose, BandPoint, Isometry, Mat2};
use crate::surface::{sheet_distance, LoomSurfaceSpec};
use crate::tracer::{slack, trace_geodesic, trace_horocycle, HoroDirection, SurfaceTangent, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionSpec {
    pub delta: f64,
    pub c: f64,
    pub d: f64,
    pub eta: f64,
}

impl SectionSpec {
    pub fn new(delta: f64, c: f64, d: f64, eta: f64) -> Result<Self> {
        if !(delta > 0.0 && eta > 0.0 && eta < delta / 4.0) {
            return Err(LoomError::Domain(format!("need 0 < eta < delta/4, got eta={eta}, delta={delta}")));
        }
        if !(c < d && c >= -eta / 2.0 && d <= eta / 2.0) {
            return Err(LoomError::Domain(format!("(c, d) = ({c}, {d}) must be a subinterval of (-eta/2, eta/2)")));
        }
        Ok(Self { delta, c, d, eta })
    }

    fn check_window(&self, r_win: f64) -> Result<()> {
        if !(r_win > 0.0 && r_win < self.delta / 4.0) {
            return Err(LoomError::Precondition(format!("window {r_win} must lie in (0, delta/4 = {})", self.delta / 4.0)));
        }
        Ok(())
    }
}

/// Coordinates `(s, t, r)` of the frame `n_r a_t u_s`.
pub fn window_frame(s: f64, t: f64, r: f64) -> Mat2 {
    (Mat2::n(r) * Mat2::a(t) * Mat2::u(s)).normalized()
}

/// Window coordinates of a sheet-0 frame; `None` outside the Bruhat cell.
pub fn window_coords(frame: &Mat2) -> Option<[f64; 3]> {
    let (r, t, s) = nau_decompose(&Isometry { m: *frame, reversing: false }).ok()?;
    Some([s, t, r])
}

/// Whether the frame lies in `B_R`, with its coordinates when it has them.
pub fn section_membership(frame: &Mat2, sec: &SectionSpec, r_win: f64) -> Result<(bool, Option<[f64; 3]>)> {
    sec.check_window(r_win)?;
    let coords = window_coords(frame);
    let inside = coords.is_some_and(|[s, t, r]| {
        s.abs() < r_win && t.abs() < sec.delta / 4.0 && r > sec.c && r < sec.d
    });
    Ok((inside, coords))
}

/// Half of the distance from `x_0` to its mirror image.
pub fn injectivity_budget(spec: &LoomSurfaceSpec) -> f64 {
    0.5 * sheet_distance(BandPoint::ORIGIN, spec)
}

/// Picks `delta`, then the outermost `r` on each side of zero in
/// `(-eta/2, eta/2)` whose geodesic ray from `n_r x_0` has diverging slack.
pub fn select_section(spec: &LoomSurfaceSpec, eta_fraction: f64) -> Result<SectionSpec> {
    let delta = injectivity_budget(spec);
    let eta = eta_fraction.clamp(1e-6, 0.999) * delta / 4.0;
    let diverges = |r: f64| -> Result<bool> {
        let start = SurfaceTangent::from_frame(&window_frame(0.0, 0.0, r), 0);
        Ok(slack(&trace_geodesic(&start, 40.0, spec)?).diverging)
    };
    let pick = |sign: f64| -> Result<f64> {
        for k in 1..=20 {
            let r = sign * eta / 2.0 * (1.0 - k as f64 / 21.0);
            if diverges(r)? {
                log::info!("section edge r = {r}");
                return Ok(r);
            }
        }
        log::warn!("no diverging ray found on the {} side; using the midpoint", if sign > 0.0 { "positive" } else { "negative" });
        Ok(sign * eta / 4.0)
    };
    SectionSpec::new(delta, pick(-1.0)?, pick(1.0)?, eta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub shape: [usize; 3],
    pub origin: [f64; 3],
    pub step: [f64; 3],
}

impl Grid {
    fn window(sec: &SectionSpec, r_win: f64, shape: [usize; 3]) -> Self {
        let origin = [-r_win, -sec.delta / 4.0, sec.c];
        let extent = [2.0 * r_win, sec.delta / 2.0, sec.d - sec.c];
        let step = [0, 1, 2].map(|i| extent[i] / shape[i] as f64);
        Grid { shape, origin, step }
    }

    fn bin(&self, p: [f64; 3]) -> usize {
        let idx = [0, 1, 2].map(|i| (((p[i] - self.origin[i]) / self.step[i]).floor().max(0.0) as usize).min(self.shape[i] - 1));
        (idx[0] * self.shape[1] + idx[1]) * self.shape[2] + idx[2]
    }

    fn len(&self) -> usize {
        self.shape.iter().product()
    }

    /// Smallest bin side.
    pub fn min_side(&self) -> f64 {
        self.step.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureOptions {
    pub bins: [usize; 3],
    /// Sampling step along the orbit; defaults to `min(eta, bin side) / 4`.
    pub step: Option<f64>,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self { bins: [16, 4, 4], step: None }
    }
}

/// Normalised occupation of `B_R` by the orbit segment over `[-T, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    #[serde(rename = "R")]
    pub r_win: f64,
    #[serde(rename = "T")]
    pub t_max: f64,
    pub grid: Grid,
    pub weights: Vec<f64>,
    pub occupation_time: f64,
    pub sample_step: f64,
    /// Window coordinates of every sample inside `B_R`.
    #[serde(skip)]
    pub samples: Vec<[f64; 3]>,
    /// Maximal visits `[first, last]` in orbit time, excluding those cut by `±T`.
    #[serde(skip)]
    pub visits: Vec<[f64; 2]>,
}

impl EmpiricalMeasure {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "R": self.r_win,
            "T": self.t_max,
            "grid": self.grid,
            "weights": self.weights,
            "occupation_time": self.occupation_time,
            "visits": self.visits.len(),
        })
    }

    /// `ν(f)` for a function of window coordinates.
    pub fn integrate(&self, f: impl Fn([f64; 3]) -> f64) -> f64 {
        self.samples.iter().map(|&p| f(p)).sum::<f64>() / self.samples.len() as f64
    }
}

/// The traced orbit of `x_0` over `[-T, T]`, shared by several measures.
#[derive(Debug, Clone)]
pub struct Orbit {
    pub t_max: f64,
    forward: Trajectory,
    backward: Trajectory,
}

impl Orbit {
    pub fn trace(spec: &LoomSurfaceSpec, t_max: f64) -> Result<Self> {
        if !(t_max > 0.0) {
            return Err(LoomError::Domain(format!("T = {t_max} must be positive")));
        }
        let x0 = SurfaceTangent::x(0);
        let (forward, backward) = rayon_join(
            || trace_horocycle(&x0, t_max, spec, HoroDirection::Stable),
            || trace_horocycle(&x0, -t_max, spec, HoroDirection::Stable),
        );
        Ok(Self { t_max, forward: forward?, backward: backward? })
    }

    /// Frame and sheet at orbit time `t ∈ [-T, T]`.
    pub fn frame_at(&self, t: f64) -> (Mat2, u8) {
        if t >= 0.0 {
            self.forward.frame_at(t)
        } else {
            self.backward.frame_at(-t)
        }
    }

    /// Number of crossings made over `[-T, T]`.
    pub fn crossings(&self) -> usize {
        self.forward.arcs.len() + self.backward.arcs.len() - 2
    }
}

#[cfg(feature = "parallel")]
fn rayon_join<A: Send, B: Send>(a: impl FnOnce() -> A + Send, b: impl FnOnce() -> B + Send) -> (A, B) {
    rayon::join(a, b)
}

#[cfg(not(feature = "parallel"))]
fn rayon_join<A, B>(a: impl FnOnce() -> A, b: impl FnOnce() -> B) -> (A, B) {
    (a(), b())
}

fn default_step(sec: &SectionSpec, grid: &Grid) -> f64 {
    sec.eta.min(grid.min_side()) / 4.0
}

/// Samples the orbit on the grid `k · step`, `|k · step| <= T`.
pub fn measure_from_orbit(
    orbit: &Orbit,
    sec: &SectionSpec,
    r_win: f64,
    t_max: f64,
    opts: MeasureOptions,
    exec: Exec,
) -> Result<EmpiricalMeasure> {
    sec.check_window(r_win)?;
    if t_max > orbit.t_max {
        return Err(LoomError::Precondition(format!("T = {t_max} exceeds the traced orbit ({})", orbit.t_max)));
    }
    let grid = Grid::window(sec, r_win, opts.bins);
    let step = opts.step.unwrap_or_else(|| default_step(sec, &grid));
    let k_max = (t_max / step).floor() as i64;
    let n = (2 * k_max + 1) as usize;
    let hits: Vec<Option<[f64; 3]>> = exec.map_range(n, |i| {
        let t = (i as i64 - k_max) as f64 * step;
        let (frame, sheet) = orbit.frame_at(t);
        if sheet != 0 {
            return None;
        }
        match section_membership(&frame, sec, r_win) {
            Ok((true, c)) => c,
            _ => None,
        }
    });

    let mut samples = Vec::new();
    let mut visits = Vec::new();
    let mut run: Option<i64> = None;
    for (i, h) in hits.iter().enumerate() {
        let k = i as i64 - k_max;
        match (h, run) {
            (Some(p), None) => {
                samples.push(*p);
                run = Some(k);
            }
            (Some(p), Some(_)) => samples.push(*p),
            (None, Some(first)) => {
                if first > -k_max {
                    visits.push([first as f64 * step, (k - 1) as f64 * step]);
                }
                run = None;
            }
            (None, None) => {}
        }
    }
    if samples.is_empty() {
        return Err(LoomError::ZeroOccupation);
    }
    let mut weights = vec![0.0; grid.len()];
    for p in &samples {
        weights[grid.bin(*p)] += 1.0;
    }
    let total = samples.len() as f64;
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(EmpiricalMeasure {
        r_win,
        t_max,
        grid,
        weights,
        occupation_time: total * step,
        sample_step: step,
        samples,
        visits,
    })
}

pub fn estimate_nu(spec: &LoomSurfaceSpec, sec: &SectionSpec, r_win: f64, t_max: f64, opts: MeasureOptions) -> Result<EmpiricalMeasure> {
    let orbit = Orbit::trace(spec, t_max)?;
    measure_from_orbit(&orbit, sec, r_win, t_max, opts, Exec::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessReport {
    pub eps: f64,
    pub eta: f64,
    pub inner_mass: f64,
    pub satisfied: bool,
}

/// Mass of the shrunken window `|s| < R - eta`.
pub fn check_tightness(mu: &EmpiricalMeasure, eps: f64, eta: f64) -> Result<TightnessReport> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(LoomError::Domain(format!("eps = {eps} outside (0, 1]")));
    }
    if !(eta >= 0.0 && eta < eps * mu.r_win / 4.0 || eps == 1.0) {
        return Err(LoomError::Precondition(format!("eta = {eta} must be below eps*R/4")));
    }
    let inner = mu.r_win - eta;
    let inner_mass = mu.integrate(|p| if p[0].abs() < inner { 1.0 } else { 0.0 });
    Ok(TightnessReport { eps, eta, inner_mass, satisfied: inner_mass >= 1.0 - eps })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessTrend {
    pub t_values: Vec<f64>,
    pub inner_mass: Vec<f64>,
    pub occupation_time: Vec<f64>,
    /// Reported, not asserted.
    pub non_decreasing: bool,
}

pub fn tightness_trend(orbit: &Orbit, sec: &SectionSpec, r_win: f64, t_values: &[f64], eps: f64, eta: f64) -> Result<TightnessTrend> {
    let mut inner_mass = Vec::new();
    let mut occupation_time = Vec::new();
    for &t in t_values {
        let mu = measure_from_orbit(orbit, sec, r_win, t, MeasureOptions::default(), Exec::default())?;
        inner_mass.push(check_tightness(&mu, eps, eta)?.inner_mass);
        occupation_time.push(mu.occupation_time);
    }
    let non_decreasing = inner_mass.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    Ok(TightnessTrend { t_values: t_values.to_vec(), inner_mass, occupation_time, non_decreasing })
}

/// Indicator of a box in window coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxFunction {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub value: f64,
}

impl BoxFunction {
    pub fn eval(&self, p: [f64; 3]) -> f64 {
        if (0..3).all(|i| p[i] >= self.lo[i] && p[i] < self.hi[i]) {
            self.value
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub shift: f64,
    pub difference: f64,
    pub bound: f64,
    pub binning_error: f64,
    pub passed: bool,
}

/// Compares `ν(f ∘ φ_shift)` with `ν(f)`.
pub fn check_flow_invariance(mu: &EmpiricalMeasure, shift: f64, f: &BoxFunction) -> Result<InvarianceReport> {
    let (lo, hi) = (f.lo[0].min(f.lo[0] + shift), f.hi[0].max(f.hi[0] + shift));
    if lo <= -mu.r_win || hi >= mu.r_win {
        return Err(LoomError::Precondition(format!("support [{lo}, {hi}] of f and its shift leaves the window")));
    }
    let base = mu.integrate(|p| f.eval(p));
    let shifted = mu.integrate(|p| f.eval([p[0] + shift, p[1], p[2]]));
    let difference = (shifted - base).abs();
    let bound = 2.0 * shift.abs() * f.value.abs() / mu.occupation_time;
    // each visit contributes up to one extra sample at either edge of both boxes
    let binning_error = if shift == 0.0 {
        0.0
    } else {
        4.0 * mu.visits.len().max(1) as f64 * mu.sample_step * f.value.abs() / mu.occupation_time
    };
    Ok(InvarianceReport { shift, difference, bound, binning_error, passed: difference <= bound + binning_error })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictionReport {
    pub r1: f64,
    pub r2: f64,
    /// `occupation(R1) / occupation(R2)`.
    pub ratio: f64,
    pub max_bin_discrepancy: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Restricts `ν^{R2}` to `B_{R1}`, renormalises, and compares with `ν^{R1}`
/// bin by bin on the `R1` grid.
pub fn check_restriction(orbit: &Orbit, sec: &SectionSpec, r1: f64, r2: f64, t_max: f64, opts: MeasureOptions) -> Result<RestrictionReport> {
    if r1 > r2 {
        return Err(LoomError::Precondition(format!("R1 = {r1} exceeds R2 = {r2}")));
    }
    let step = opts.step.unwrap_or_else(|| default_step(sec, &Grid::window(sec, r1, opts.bins)));
    let opts = MeasureOptions { step: Some(step), ..opts };
    let mu1 = measure_from_orbit(orbit, sec, r1, t_max, opts, Exec::default())?;
    let mu2 = measure_from_orbit(orbit, sec, r2, t_max, opts, Exec::default())?;
    let restricted: Vec<[f64; 3]> = mu2.samples.iter().copied().filter(|p| p[0].abs() < r1).collect();
    let mut w = vec![0.0; mu1.grid.len()];
    for p in &restricted {
        w[mu1.grid.bin(*p)] += 1.0;
    }
    let n = restricted.len().max(1) as f64;
    let max_bin_discrepancy = w.iter().zip(&mu1.weights).map(|(a, b)| (a / n - b).abs()).fold(0.0, f64::max);
    let tolerance = 2.0 * mu1.grid.step[0] / mu1.occupation_time;
    Ok(RestrictionReport {
        r1,
        r2,
        ratio: mu1.occupation_time / mu2.occupation_time,
        max_bin_discrepancy,
        tolerance,
        passed: max_bin_discrepancy <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::{design_summable, DecayRule};

    fn summable_spec() -> LoomSurfaceSpec {
        design_summable(DecayRule::Geometric { h1: 0.6, ratio: 0.5 }, 6).unwrap().spec
    }

    #[test]
    fn membership_examples() {
        let sec = SectionSpec::new(0.4, -0.02, 0.03, 0.08).unwrap();
        let r = 0.05;
        let (inside, c) = section_membership(&Mat2::IDENTITY, &sec, r).unwrap();
        assert!(inside);
        let c = c.unwrap();
        assert!(c.iter().all(|x| x.abs() < 1e-15));
        assert!(!section_membership(&Mat2::a(sec.delta / 3.0), &sec, r).unwrap().0);
        let mid = 0.5 * (sec.c + sec.d);
        let (inside, c) = section_membership(&window_frame(r / 2.0, 0.0, mid), &sec, r).unwrap();
        assert!(inside);
        let c = c.unwrap();
        assert!((c[0] - r / 2.0).abs() < 1e-12 && c[1].abs() < 1e-12 && (c[2] - mid).abs() < 1e-12);
        // outside the Bruhat cell
        assert_eq!(section_membership(&Mat2::rotation(std::f64::consts::FRAC_PI_2), &sec, r).unwrap(), (false, None));
        assert!(section_membership(&Mat2::IDENTITY, &sec, 0.2).is_err());
        assert!(SectionSpec::new(0.4, -0.1, 0.03, 0.08).is_err());
    }

    #[test]
    fn flow_moves_only_s() {
        let g = window_frame(0.01, -0.02, 0.005);
        let c = window_coords(&(g * Mat2::u(0.3))).unwrap();
        assert!((c[0] - 0.31).abs() < 1e-12 && (c[1] + 0.02).abs() < 1e-12 && (c[2] - 0.005).abs() < 1e-12);
    }

    fn setup() -> (LoomSurfaceSpec, SectionSpec, Orbit) {
        let spec = summable_spec();
        let sec = select_section(&spec, 0.5).unwrap();
        let orbit = Orbit::trace(&spec, 300.0).unwrap();
        (spec, sec, orbit)
    }

    #[test]
    fn measure_basics() {
        let (_, sec, orbit) = setup();
        let r = 0.8 * sec.delta / 4.0;
        let mut prev = 0.0;
        for t in [50.0, 100.0, 300.0] {
            let mu = measure_from_orbit(&orbit, &sec, r, t, MeasureOptions::default(), Exec::Parallel).unwrap();
            assert!((mu.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(mu.occupation_time >= prev);
            prev = mu.occupation_time;
            for v in &mu.visits {
                assert!(v[1] - v[0] >= 2.0 * r - 2.0 * mu.sample_step, "{v:?}");
            }
        }
        let a = measure_from_orbit(&orbit, &sec, r, 100.0, MeasureOptions::default(), Exec::Sequential).unwrap();
        let b = measure_from_orbit(&orbit, &sec, r, 100.0, MeasureOptions::default(), Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tightness_and_invariance() {
        let (_, sec, orbit) = setup();
        let r = 0.8 * sec.delta / 4.0;
        let mu = measure_from_orbit(&orbit, &sec, r, 300.0, MeasureOptions::default(), Exec::Parallel).unwrap();
        assert!(check_tightness(&mu, 1.0, 0.0).unwrap().satisfied);
        let tiny = check_tightness(&mu, 0.2, 1e-9).unwrap();
        assert!((tiny.inner_mass - 1.0).abs() < 1e-6);

        let f = BoxFunction { lo: [-r / 2.0, -1.0, -1.0], hi: [r / 2.0, 1.0, 1.0], value: 1.0 };
        let zero = check_flow_invariance(&mu, 0.0, &f).unwrap();
        assert_eq!(zero.difference, 0.0);
        let rep = check_flow_invariance(&mu, r / 4.0, &f).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(check_flow_invariance(&mu, r, &f).is_err());
    }

    #[test]
    fn restriction_examples() {
        let (_, sec, orbit) = setup();
        let r2 = 0.8 * sec.delta / 4.0;
        let same = check_restriction(&orbit, &sec, r2, r2, 300.0, MeasureOptions::default()).unwrap();
        assert_eq!(same.max_bin_discrepancy, 0.0);
        assert_eq!(same.ratio, 1.0);
        let nested = check_restriction(&orbit, &sec, r2 / 2.0, r2, 300.0, MeasureOptions::default()).unwrap();
        assert!(nested.ratio <= 1.0);
        assert!(nested.passed, "{nested:?}");
    }
}
