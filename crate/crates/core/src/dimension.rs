//! Box-counting dimension estimates for interval covers.

use serde::{Deserialize, Serialize};

use crate::error::{LoomError, Result};
use crate::exec::Exec;
use crate::intervals::IntervalSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    /// Regression slope clamped to `[0, 1]`.
    pub value: f64,
    pub slope: f64,
    pub scales: Vec<f64>,
    pub counts: Vec<u64>,
    pub r2: f64,
}

/// Least-squares line through `(x, y)`; returns `(slope, intercept, r2)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

/// Number of grid boxes `[k r, (k+1) r)` meeting the set.
pub fn box_count(s: &IntervalSet, r: f64) -> u64 {
    let mut count = 0u64;
    let mut last: Option<i64> = None;
    for iv in &s.intervals {
        let lo = (iv[0] / r).floor() as i64;
        let hi = (iv[1] / r).floor() as i64;
        let start = match last {
            Some(l) if l >= lo => l + 1,
            _ => lo,
        };
        if hi >= start {
            count += (hi - start + 1) as u64;
        }
        last = Some(last.map_or(hi, |l| l.max(hi)));
    }
    count
}

pub fn box_dimension(s: &IntervalSet, scales: &[f64], exec: Exec) -> Result<DimensionEstimate> {
    if scales.len() < 3 {
        return Err(LoomError::Domain("box counting needs at least 3 scales".into()));
    }
    if s.is_empty() {
        return Err(LoomError::Domain("empty set".into()));
    }
    if let Some(&r) = scales.iter().find(|&&r| !(r >= s.delta) || !r.is_finite()) {
        return Err(LoomError::Domain(format!("scale {r:e} is below the cover resolution {:e}", s.delta)));
    }
    let counts = exec.map(scales, |&r| box_count(s, r));
    let xs: Vec<f64> = scales.iter().map(|r| (1.0 / r).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let (slope, _, r2) = linear_fit(&xs, &ys);
    Ok(DimensionEstimate { value: slope.clamp(0.0, 1.0), slope, scales: scales.to_vec(), counts, r2 })
}

/// Geometric scales `base^{-lo} .. base^{-hi}`.
pub fn geometric_scales(base: f64, lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| base.powi(-k)).collect()
}
