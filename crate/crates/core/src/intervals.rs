//! Finite unions of closed intervals, used as covers of compact subsets of R.

use serde::{Deserialize, Serialize};

use crate::error::{LoomError, Result};
use crate::exec::Exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSet {
    pub delta: f64,
    pub intervals: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn matches(self, m: usize) -> bool {
        match self {
            Parity::Even => m % 2 == 0,
            Parity::Odd => m % 2 == 1,
        }
    }
}

fn merge_sorted(mut v: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(v.len());
    for iv in v.drain(..) {
        match out.last_mut() {
            Some(last) if iv[0] <= last[1] => last[1] = last[1].max(iv[1]),
            _ => out.push(iv),
        }
    }
    out
}

/// Union of two sorted, merged lists.
fn merge_two(a: &[[f64; 2]], b: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i][0] <= b[j][0]) {
            v.push(a[i]);
            i += 1;
        } else {
            v.push(b[j]);
            j += 1;
        }
    }
    merge_sorted(v)
}

impl IntervalSet {
    /// Sorts and merges the given intervals.
    pub fn new(delta: f64, intervals: Vec<[f64; 2]>) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(LoomError::Domain(format!("resolution {delta} must be positive")));
        }
        for iv in &intervals {
            if !iv[0].is_finite() || !iv[1].is_finite() || iv[0] > iv[1] {
                return Err(LoomError::Domain(format!("bad interval [{}, {}]", iv[0], iv[1])));
            }
        }
        let mut v = intervals;
        v.sort_by(|a, b| a[0].total_cmp(&b[0]));
        Ok(Self { delta, intervals: merge_sorted(v) })
    }

    pub fn empty(delta: f64) -> Self {
        Self { delta, intervals: Vec::new() }
    }

    pub fn points(delta: f64, pts: &[f64]) -> Result<Self> {
        Self::new(delta, pts.iter().map(|&p| [p, p]).collect())
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn min(&self) -> Option<f64> {
        self.intervals.first().map(|iv| iv[0])
    }

    pub fn max(&self) -> Option<f64> {
        self.intervals.last().map(|iv| iv[1])
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|iv| iv[1] - iv[0]).sum()
    }

    pub fn contains(&self, x: f64) -> bool {
        let i = self.intervals.partition_point(|iv| iv[0] <= x);
        i > 0 && self.intervals[i - 1][1] >= x
    }

    /// Distance from `x` to the set.
    pub fn distance_to(&self, x: f64) -> f64 {
        let i = self.intervals.partition_point(|iv| iv[0] <= x);
        let mut best = f64::INFINITY;
        if i > 0 {
            best = (x - self.intervals[i - 1][1]).max(0.0);
        }
        if i < self.intervals.len() {
            best = best.min(self.intervals[i][0] - x);
        }
        best
    }

    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        let mut v = self.intervals.clone();
        v.extend_from_slice(&other.intervals);
        v.sort_by(|a, b| a[0].total_cmp(&b[0]));
        IntervalSet { delta: self.delta.max(other.delta), intervals: merge_sorted(v) }
    }

    pub fn clip(&self, lo: f64, hi: f64) -> IntervalSet {
        let intervals = self
            .intervals
            .iter()
            .filter(|iv| iv[1] >= lo && iv[0] <= hi)
            .map(|iv| [iv[0].max(lo), iv[1].min(hi)])
            .collect();
        IntervalSet { delta: self.delta, intervals }
    }

    /// Minkowski sum of two sets. Rows of the sum table are merged in blocks
    /// so memory follows the merged size rather than the full product.
    pub fn minkowski_sum(&self, other: &IntervalSet, exec: Exec) -> IntervalSet {
        let (a, b) = if self.len() >= other.len() { (self, other) } else { (other, self) };
        let delta = self.delta + other.delta;
        if b.is_empty() {
            return IntervalSet { delta, intervals: Vec::new() };
        }
        let chunk = ((1usize << 16) / b.len()).max(1);
        let blocks: Vec<&[[f64; 2]]> = a.intervals.chunks(chunk).collect();
        let mut parts: Vec<Vec<[f64; 2]>> = exec.map(&blocks, |block| {
            let mut v: Vec<[f64; 2]> =
                block.iter().flat_map(|x| b.intervals.iter().map(move |y| [x[0] + y[0], x[1] + y[1]])).collect();
            v.sort_by(|p, q| p[0].total_cmp(&q[0]));
            merge_sorted(v)
        });
        while parts.len() > 1 {
            let pairs: Vec<usize> = (0..parts.len().div_ceil(2)).collect();
            parts = exec.map(&pairs, |&i| match parts.get(2 * i + 1) {
                Some(right) => merge_two(&parts[2 * i], right),
                None => parts[2 * i].clone(),
            });
        }
        IntervalSet { delta, intervals: parts.pop().unwrap_or_default() }
    }

    /// Merges components separated by gaps of at most `tol`.
    pub fn coarsen(&self, tol: f64) -> IntervalSet {
        let mut out: Vec<[f64; 2]> = Vec::new();
        for iv in &self.intervals {
            match out.last_mut() {
                Some(last) if iv[0] - last[1] <= tol => last[1] = last[1].max(iv[1]),
                _ => out.push(*iv),
            }
        }
        IntervalSet { delta: self.delta.max(tol), intervals: out }
    }

    /// Equality after closing gaps below `tol`, endpoints compared to `tol`.
    pub fn approx_eq(&self, other: &IntervalSet, tol: f64) -> bool {
        let a = self.coarsen(tol);
        let b = other.coarsen(tol);
        a.intervals.len() == b.intervals.len()
            && a.intervals
                .iter()
                .zip(&b.intervals)
                .all(|(x, y)| (x[0] - y[0]).abs() <= tol && (x[1] - y[1]).abs() <= tol)
    }

    /// True when `[lo, hi]` is inside the set up to gaps no longer than `tol`.
    pub fn covers(&self, lo: f64, hi: f64, tol: f64) -> bool {
        let c = self.coarsen(tol);
        c.intervals.iter().any(|iv| iv[0] <= lo + tol && iv[1] >= hi - tol)
    }
}

/// `m`-fold Minkowski sum `E + ... + E`.
pub fn sumset(e: &IntervalSet, m: usize, exec: Exec) -> Result<IntervalSet> {
    if m < 1 {
        return Err(LoomError::Domain("sumset needs m >= 1".into()));
    }
    let mut acc = e.clone();
    for _ in 1..m {
        acc = acc.minkowski_sum(e, exec);
    }
    acc.delta = e.delta * m as f64;
    Ok(acc)
}

/// `m`-fold sum with gaps of at most `tol` closed after every step.
///
/// Closing a gap shorter than `tol` in one summand only fills gaps shorter
/// than `tol` in the sum, so the result equals `sumset(e, m).coarsen(tol)`.
/// Box counts at scales `>= tol` are unaffected, since no such box fits in
/// a closed gap.
pub fn sumset_coarse(e: &IntervalSet, m: usize, tol: f64, exec: Exec) -> Result<IntervalSet> {
    if m < 1 {
        return Err(LoomError::Domain("sumset needs m >= 1".into()));
    }
    let base = e.coarsen(tol);
    let mut acc = base.clone();
    for _ in 1..m {
        acc = acc.minkowski_sum(&base, exec).coarsen(tol);
    }
    acc.delta = (e.delta * m as f64).max(tol);
    Ok(acc)
}

/// Union of `mE ∩ [0, T]` over `m` of the given parity.
pub fn delta_sets(e: &IntervalSet, t: f64, parity: Parity, exec: Exec) -> Result<IntervalSet> {
    let lo = match e.min() {
        Some(lo) if lo > 0.0 => lo,
        Some(lo) => return Err(LoomError::Domain(format!("E reaches {lo}, must stay above 0"))),
        None => return Err(LoomError::Domain("E is empty".into())),
    };
    let m_max = (t / lo).ceil().max(0.0) as usize;
    let mut out = IntervalSet::empty(e.delta);
    let mut acc = e.clip(0.0, t);
    for m in 1..=m_max {
        if m > 1 {
            acc = acc.minkowski_sum(e, exec).clip(0.0, t);
        }
        if acc.is_empty() {
            break;
        }
        if parity.matches(m) {
            out = out.union(&acc);
        }
    }
    out.delta = e.delta * m_max.max(1) as f64;
    Ok(out)
}

/// Cover at depth `level` of the symmetric Cantor set on `[offset, offset + 1]`
/// keeping two pieces of relative length `ratio` at each step.
pub fn cantor_cover(level: u32, ratio: f64, offset: f64) -> Result<IntervalSet> {
    if !(ratio > 0.0 && ratio < 0.5) {
        return Err(LoomError::Domain(format!("Cantor ratio {ratio} outside (0, 1/2)")));
    }
    let mut v = vec![[0.0f64, 1.0f64]];
    for _ in 0..level {
        let mut next = Vec::with_capacity(v.len() * 2);
        for iv in &v {
            let len = (iv[1] - iv[0]) * ratio;
            next.push([iv[0], iv[0] + len]);
            next.push([iv[1] - len, iv[1]]);
        }
        v = next;
    }
    let v = v.into_iter().map(|iv| [iv[0] + offset, iv[1] + offset]).collect();
    IntervalSet::new(ratio.powi(level as i32), v)
}
