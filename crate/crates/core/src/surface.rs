//! Loom surfaces: the band with a sequence of half-planes cut away, doubled
//! along the cut boundaries.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{LoomError, Result};
use crate::hyperbolic::{
    band_to_chart, boundary_endpoints, dist_chart, dist_geodesics, perpendicular_boundary_geodesic, reflect,
    BandPoint, ChartPoint, GeodesicLine, Isometry,
};
use crate::intervals::IntervalSet;

/// Largest admissible `|s|`; chart coordinates scale like `e^s`.
pub const MAX_ABS_S: f64 = 600.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlaneSpec {
    pub s: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TailPolicy {
    #[default]
    Empty,
    Generator(String),
}

/// Chart data of one cut boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGeometry {
    pub index: usize,
    pub s: f64,
    pub h: f64,
    pub left: f64,
    pub right: f64,
    pub center: f64,
    pub radius: f64,
    pub line: GeodesicLine,
    pub reflection: Isometry,
}

impl BoundaryGeometry {
    fn new(index: usize, e: HalfPlaneSpec) -> Result<Self> {
        let line = perpendicular_boundary_geodesic(e.s, e.h)?;
        let (left, right) = boundary_endpoints(e.s, e.h);
        let scale = e.s.exp();
        Ok(Self {
            index,
            s: e.s,
            h: e.h,
            left,
            right,
            center: -scale / e.h.sin(),
            radius: scale / e.h.tan(),
            line,
            reflection: reflect(&line),
        })
    }

    /// Strictly inside the open half-disc, with a relative margin.
    pub fn contains_strictly(&self, w: ChartPoint, rel_tol: f64) -> bool {
        let du = w.u - self.center;
        du.hypot(w.v) < self.radius * (1.0 - rel_tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub count: usize,
    pub monotone: bool,
    pub min_boundary_distance: f64,
    pub sup_h: f64,
    /// `d(∂D_k, ∂D_{k+1})` for consecutive entries.
    pub gaps: Vec<f64>,
    pub gaps_increasing: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct LoomSurfaceSpec {
    entries: Vec<HalfPlaneSpec>,
    tail_policy: TailPolicy,
    meta: serde_json::Value,
    report: ValidationReport,
    boundaries: Vec<BoundaryGeometry>,
    /// Boundary indices ordered by left footprint endpoint.
    by_left: Vec<usize>,
}

impl PartialEq for LoomSurfaceSpec {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries && self.tail_policy == other.tail_policy && self.meta == other.meta
    }
}

fn check_entries(entries: &[HalfPlaneSpec]) -> Result<()> {
    if entries.is_empty() {
        return Err(LoomError::EmptySpec);
    }
    for (i, e) in entries.iter().enumerate() {
        if !e.s.is_finite() || !e.h.is_finite() {
            return Err(LoomError::Domain(format!("entry {} is not finite", i + 1)));
        }
        if !(e.h > 0.0 && e.h < FRAC_PI_2) {
            return Err(LoomError::Domain(format!("entry {}: h = {} outside (0, pi/2)", i + 1, e.h)));
        }
        if e.s.abs() >= MAX_ABS_S {
            return Err(LoomError::Domain(format!("entry {}: |s| = {} exceeds {MAX_ABS_S}", i + 1, e.s.abs())));
        }
    }
    for i in 1..entries.len() {
        if entries[i].s <= entries[i - 1].s {
            return Err(LoomError::NotIncreasing(i, i + 1));
        }
    }
    Ok(())
}

fn build(entries: &[HalfPlaneSpec]) -> Result<(Vec<BoundaryGeometry>, Vec<usize>, ValidationReport)> {
    check_entries(entries)?;
    let boundaries = entries
        .iter()
        .enumerate()
        .map(|(i, &e)| BoundaryGeometry::new(i, e))
        .collect::<Result<Vec<_>>>()?;
    let mut by_left: Vec<usize> = (0..boundaries.len()).collect();
    by_left.sort_by(|&a, &b| boundaries[a].left.total_cmp(&boundaries[b].left));

    // Half-planes all lie on one side of the core, so closures are disjoint
    // exactly when footprints are; a footprint between two others separates
    // them, so the minimum distance is attained by footprint neighbours.
    let mut min_dist = f64::INFINITY;
    for w in by_left.windows(2) {
        let (a, b) = (&boundaries[w[0]], &boundaries[w[1]]);
        if a.right >= b.left {
            let (i, j) = (w[0].min(w[1]), w[0].max(w[1]));
            return Err(LoomError::Overlap(i + 1, j + 1));
        }
        let d = dist_geodesics(&a.line, &b.line);
        if d <= 0.0 {
            let (i, j) = (w[0].min(w[1]), w[0].max(w[1]));
            return Err(LoomError::Overlap(i + 1, j + 1));
        }
        min_dist = min_dist.min(d);
    }
    let gaps: Vec<f64> = boundaries.windows(2).map(|w| dist_geodesics(&w[0].line, &w[1].line)).collect();
    let gaps_increasing = gaps.windows(2).all(|w| w[1] > w[0]);
    let mut warnings = Vec::new();
    if !gaps_increasing {
        warnings.push("boundary gaps are not increasing on the prefix".to_string());
    }
    let report = ValidationReport {
        count: entries.len(),
        monotone: true,
        min_boundary_distance: min_dist,
        sup_h: entries.iter().map(|e| e.h).fold(0.0, f64::max),
        gaps,
        gaps_increasing,
        warnings,
    };
    Ok((boundaries, by_left, report))
}

/// Checks a candidate entry list.
pub fn validate(entries: &[HalfPlaneSpec]) -> Result<ValidationReport> {
    build(entries).map(|(_, _, r)| r)
}

impl LoomSurfaceSpec {
    pub fn new(entries: Vec<HalfPlaneSpec>) -> Result<Self> {
        let (boundaries, by_left, report) = build(&entries)?;
        Ok(Self { entries, tail_policy: TailPolicy::Empty, meta: serde_json::json!({}), report, boundaries, by_left })
    }

    pub fn with_meta(mut self, meta: serde_json::Value) -> Self {
        self.meta = meta;
        self
    }

    pub fn entries(&self) -> &[HalfPlaneSpec] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn meta(&self) -> &serde_json::Value {
        &self.meta
    }

    pub fn tail_policy(&self) -> &TailPolicy {
        &self.tail_policy
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    /// Certified minimum distance between distinct boundaries.
    pub fn gap_floor(&self) -> f64 {
        self.report.min_boundary_distance
    }

    pub fn boundaries(&self) -> &[BoundaryGeometry] {
        &self.boundaries
    }

    pub fn boundary(&self, k: usize) -> &BoundaryGeometry {
        &self.boundaries[k]
    }

    /// Boundaries whose footprints meet `[lo, hi]`.
    pub fn footprints_meeting(&self, lo: f64, hi: f64) -> impl Iterator<Item = usize> + '_ {
        let start = self.by_left.partition_point(|&k| self.boundaries[k].right < lo);
        self.by_left[start..].iter().copied().take_while(move |&k| self.boundaries[k].left <= hi)
    }

    /// Index of the excised half-plane whose interior contains `w`.
    pub fn containing_half_plane(&self, w: ChartPoint) -> Option<usize> {
        self.footprints_meeting(w.u, w.u).find(|&k| self.boundaries[k].contains_strictly(w, 1e-12))
    }

    pub fn contains_band(&self, z: BandPoint) -> bool {
        self.containing_half_plane(band_to_chart(z)).is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub z: BandPoint,
    pub sheet: u8,
}

impl SurfacePoint {
    pub fn new(z: BandPoint, sheet: u8, spec: &LoomSurfaceSpec) -> Result<Self> {
        if sheet > 1 {
            return Err(LoomError::Domain(format!("sheet {sheet} is not 0 or 1")));
        }
        if let Some(k) = spec.containing_half_plane(band_to_chart(z)) {
            return Err(LoomError::StartInsideHalfPlane(k + 1));
        }
        Ok(Self { z, sheet })
    }
}

/// The tight map: band real part, independent of the sheet.
pub fn tau(p: &SurfacePoint) -> f64 {
    p.z.x
}

/// Distance from `z` to its mirror across boundary `k`, computed after
/// translating the boundary to `s = 0`.
pub fn mirror_distance(z: BandPoint, b: &BoundaryGeometry) -> f64 {
    let local = band_to_chart(BandPoint { x: z.x - b.s, y: z.y });
    let r = reflect(&perpendicular_boundary_geodesic(0.0, b.h).expect("validated height"));
    dist_chart(local, r.apply_chart(local))
}

/// Length of the shortest single-crossing path from `(z, 0)` to `(z, 1)`.
pub fn sheet_distance(z: BandPoint, spec: &LoomSurfaceSpec) -> f64 {
    spec.boundaries().iter().map(|b| mirror_distance(z, b)).fold(f64::INFINITY, f64::min)
}

/// `sheet_distance` at the feet `(s_k, 0)` of the boundaries.
pub fn proximality_profile(spec: &LoomSurfaceSpec) -> Vec<(f64, f64)> {
    spec.entries().iter().map(|e| (e.s, sheet_distance(BandPoint { x: e.s, y: 0.0 }, spec))).collect()
}

/// Slack acquired by crossing a boundary of height `h`: `2 ln cosh d(0, ih) = -2 ln cos h`.
pub fn height_slack(h: f64) -> f64 {
    -2.0 * h.cos().ln()
}

/// Inverse of [`height_slack`].
pub fn height_for_slack(e: f64) -> f64 {
    (-0.5 * e).exp().acos()
}

/// Height sequences for [`design_summable`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DecayRule {
    /// `h_k = scale / k`
    Harmonic { scale: f64 },
    /// `h_k = h`
    Constant { h: f64 },
    /// `h_k = h1 * ratio^(k-1)`
    Geometric { h1: f64, ratio: f64 },
    /// `h_k = scale * k^(-exponent)`
    PowerLaw { scale: f64, exponent: f64 },
}

impl DecayRule {
    pub fn height(&self, k: usize) -> f64 {
        let kf = k as f64;
        match *self {
            DecayRule::Harmonic { scale } => scale / kf,
            DecayRule::Constant { h } => h,
            DecayRule::Geometric { h1, ratio } => h1 * ratio.powi(k as i32 - 1),
            DecayRule::PowerLaw { scale, exponent } => scale * kf.powf(-exponent),
        }
    }

    /// Whether the crossing slacks (of order `h_k^2`) sum to a finite value.
    pub fn summable(&self) -> bool {
        match *self {
            DecayRule::Harmonic { .. } => true,
            DecayRule::Constant { .. } => false,
            DecayRule::Geometric { ratio, .. } => ratio.abs() < 1.0,
            DecayRule::PowerLaw { exponent, .. } => 2.0 * exponent > 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub spec: LoomSurfaceSpec,
    /// Closed-form crossing slack of each entry.
    pub slacks: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub summable: bool,
    pub warnings: Vec<String>,
}

/// Smallest shift `g` placing `∂D_{hb}(g)` at distance at least `target`
/// from `∂D_{ha}(0)` with disjoint closures.
pub fn minimal_shift(ha: f64, hb: f64, target: f64) -> f64 {
    let (la, _) = boundary_endpoints(0.0, ha);
    let (_, rb) = boundary_endpoints(0.0, hb);
    // footprints disjoint once e^g * rb < la
    let g_min = (la / rb).ln().max(0.0);
    let ok = |g: f64| {
        let a = perpendicular_boundary_geodesic(0.0, ha).expect("valid height");
        let b = perpendicular_boundary_geodesic(g, hb).expect("valid height");
        let d = dist_geodesics(&a, &b);
        d > 0.0 && d >= target
    };
    let mut lo = g_min;
    let mut hi = g_min + target.max(1.0) + 1.0;
    while !ok(hi) {
        hi = lo + 2.0 * (hi - lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    hi
}

/// Positions `s_k` for the given heights with `d(∂D_k, ∂D_{k+1}) >= growth * k`.
pub fn schedule_positions(heights: &[f64], growth: f64) -> Vec<f64> {
    let g0 = heights
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let target = growth * (i + 1) as f64;
            minimal_shift(w[0], w[1], target) - target
        })
        .fold(0.0, f64::max);
    let mut s = Vec::with_capacity(heights.len());
    let mut cur = 0.0;
    for k in 0..heights.len() {
        s.push(cur);
        cur += g0 + growth * (k + 1) as f64;
    }
    s
}

fn finish_design(heights: Vec<f64>, growth: f64, summable: bool, mut warnings: Vec<String>) -> Result<Design> {
    if !(growth.is_finite() && growth > 0.0) {
        return Err(LoomError::Domain(format!("gap growth {growth} must be positive")));
    }
    for (k, &h) in heights.iter().enumerate() {
        if !(h > 0.0 && h < FRAC_PI_2) {
            return Err(LoomError::Domain(format!("rule gives h_{} = {h} outside (0, pi/2)", k + 1)));
        }
    }
    let s = schedule_positions(&heights, growth);
    let entries: Vec<HalfPlaneSpec> = s.iter().zip(&heights).map(|(&s, &h)| HalfPlaneSpec { s, h }).collect();
    let spec = LoomSurfaceSpec::new(entries)?;
    let slacks: Vec<f64> = heights.iter().map(|&h| height_slack(h)).collect();
    let partial_sums = slacks
        .iter()
        .scan(0.0, |acc, &e| {
            *acc += e;
            Some(*acc)
        })
        .collect();
    warnings.extend(spec.report().warnings.iter().cloned());
    Ok(Design { spec, slacks, partial_sums, summable, warnings })
}

pub fn design_summable(rule: DecayRule, count: usize) -> Result<Design> {
    design_summable_with_growth(rule, count, 1.0)
}

pub fn design_summable_with_growth(rule: DecayRule, count: usize, growth: f64) -> Result<Design> {
    if count == 0 {
        return Err(LoomError::Domain("count must be at least 1".into()));
    }
    let heights: Vec<f64> = (1..=count).map(|k| rule.height(k)).collect();
    let summable = rule.summable();
    let mut warnings = Vec::new();
    if !summable {
        warnings.push("not summable: crossing slacks do not decay (partial sums grow linearly)".to_string());
    }
    finish_design(heights, growth, summable, warnings)
}

/// Dense finite subset of `E`: interval midpoints refined dyadically, level
/// by level, with duplicates removed.
pub fn dense_subset(e: &IntervalSet, count: usize) -> Vec<f64> {
    let n = e.len().max(1);
    let budget = n.max(count / 2);
    let mut level = 0u32;
    while n * ((1usize << (level + 2)) - 1) <= budget && level < 20 {
        level += 1;
    }
    let mut out: Vec<f64> = Vec::new();
    for l in 0..=level {
        let parts = 1usize << l;
        for iv in &e.intervals {
            for j in 0..parts {
                let x = iv[0] + (2 * j + 1) as f64 / (2 * parts) as f64 * (iv[1] - iv[0]);
                if !out.iter().any(|&y| (y - x).abs() <= 1e-15 * (1.0 + x.abs())) {
                    out.push(x);
                }
            }
        }
    }
    out
}

/// Surface whose crossing slacks run round-robin through a dense subset of `E`.
#[allow(non_snake_case)]
pub fn design_from_E(e: &IntervalSet, count: usize, gap_growth: f64) -> Result<Design> {
    if count == 0 {
        return Err(LoomError::Domain("count must be at least 1".into()));
    }
    match e.min() {
        None => return Err(LoomError::Domain("E is empty".into())),
        Some(m) if m <= 0.0 => return Err(LoomError::Domain(format!("E must lie in (0, inf), found {m}"))),
        _ => {}
    }
    let values = dense_subset(e, count);
    let heights: Vec<f64> = (0..count).map(|k| height_for_slack(values[k % values.len()])).collect();
    let mut warnings = Vec::new();
    if count < values.len() {
        warnings.push(format!("only {count} of {} scheduled values fit in the prefix", values.len()));
    }
    finish_design(heights, gap_growth, false, warnings)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpecFile {
    version: u32,
    entries: Vec<HalfPlaneSpec>,
    #[serde(default)]
    tail_policy: TailPolicy,
    #[serde(default = "empty_meta")]
    meta: serde_json::Value,
}

fn empty_meta() -> serde_json::Value {
    serde_json::json!({})
}

impl LoomSurfaceSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: SpecFile = serde_json::from_str(text).map_err(|e| LoomError::Parse(e.to_string()))?;
        if file.version != 1 {
            return Err(LoomError::Parse(format!("unsupported version {}", file.version)));
        }
        // out-of-range numbers are rejected as malformed input
        let spec = LoomSurfaceSpec::new(file.entries).map_err(|e| match e {
            LoomError::Domain(m) => LoomError::Parse(m),
            e => e,
        })?;
        let mut spec = spec.with_meta(file.meta);
        spec.tail_policy = file.tail_policy;
        Ok(spec)
    }

    pub fn to_json_string(&self) -> String {
        let file = SpecFile {
            version: 1,
            entries: self.entries.clone(),
            tail_policy: self.tail_policy.clone(),
            meta: self.meta.clone(),
        };
        serde_json::to_string_pretty(&file).expect("spec serializes")
    }
}
