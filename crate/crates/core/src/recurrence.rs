//! Recurrence witnesses: even weaving patterns whose slack approximates a
//! target time.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::Exec;
use crate::hyperbolic::{band_to_chart, distance_to_line, BandPoint, Boundary, GeodesicLine};
use crate::surface::{height_slack, LoomSurfaceSpec};
use crate::tracer::slack;
use crate::weaving::{default_horizon, develop_chain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    /// 1-based indices.
    pub pattern: Vec<usize>,
    pub predicted_slack: f64,
    pub traced_slack: f64,
    /// Distance from the base point of `x_0` to the developed geodesic.
    pub base_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceReport {
    pub t: f64,
    pub tol: f64,
    pub patterns_examined: u64,
    pub witness: Option<Witness>,
}

impl RecurrenceReport {
    pub fn found(&self) -> bool {
        self.witness.is_some()
    }
}

/// Even-length increasing patterns with `|Σ slack - t| <= tol`, found by
/// depth-first search pruned on the partial sum.
fn candidates(first: usize, slacks: &[f64], t: f64, tol: f64) -> (Vec<Vec<usize>>, u64) {
    fn go(path: &mut Vec<usize>, sum: f64, slacks: &[f64], t: f64, tol: f64, out: &mut Vec<Vec<usize>>, seen: &mut u64) {
        *seen += 1;
        if path.len() % 2 == 0 && (sum - t).abs() <= tol {
            out.push(path.clone());
        }
        let last = *path.last().unwrap();
        for k in last + 1..slacks.len() {
            let next = sum + slacks[k];
            if next > t + tol {
                continue;
            }
            path.push(k);
            go(path, next, slacks, t, tol, out, seen);
            path.pop();
        }
    }
    let mut out = Vec::new();
    let mut seen = 0;
    if slacks[first] <= t + tol {
        go(&mut vec![first], slacks[first], slacks, t, tol, &mut out, &mut seen);
    }
    (out, seen)
}

fn developed_line(idx: &[usize], spec: &LoomSurfaceSpec) -> Result<GeodesicLine> {
    let mut q = Boundary::Infinity;
    for &k in idx.iter().rev() {
        q = spec.boundary(k).reflection.apply_boundary(q);
    }
    GeodesicLine::new(Boundary::Finite(0.0), q)
}

/// Searches for an even weaving pattern whose slack is within `tol` of `t`
/// and whose geodesic passes within `tol` of the base point of `x_0`; the
/// best one is traced from its point nearest to `x_0`.
pub fn recurrence_by_slack(t: f64, spec: &LoomSurfaceSpec, tol: f64, exec: Exec) -> Result<RecurrenceReport> {
    if t.abs() <= tol {
        return Ok(RecurrenceReport {
            t,
            tol,
            patterns_examined: 1,
            witness: Some(Witness { pattern: vec![], predicted_slack: 0.0, traced_slack: 0.0, base_distance: 0.0 }),
        });
    }
    let slacks: Vec<f64> = spec.entries().iter().map(|e| height_slack(e.h)).collect();
    let per_first = exec.map_range(slacks.len(), |k| candidates(k, &slacks, t, tol));
    let patterns_examined = per_first.iter().map(|(_, n)| n).sum();
    let mut found: Vec<(f64, f64, Vec<usize>)> = Vec::new();
    for (list, _) in per_first {
        for idx in list {
            let pred: f64 = idx.iter().map(|&k| slacks[k]).sum();
            let line = developed_line(&idx, spec)?;
            let d = distance_to_line(band_to_chart(BandPoint::ORIGIN), &line);
            if d <= tol {
                found.push(((pred - t).abs(), d, idx));
            }
        }
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let mut witness = None;
    for (_, d, idx) in found {
        let s_last = spec.entries()[*idx.last().unwrap()].s;
        let chain = match develop_chain(spec, &idx, Boundary::Finite(0.0), Boundary::Infinity, 0, BandPoint::ORIGIN, default_horizon(s_last)) {
            Ok(c) => c,
            Err(_) => continue,
        };
        let traced = slack(&chain.trajectory).value;
        if (traced - t).abs() <= tol {
            witness = Some(Witness {
                pattern: idx.iter().map(|k| k + 1).collect(),
                predicted_slack: idx.iter().map(|&k| slacks[k]).sum(),
                traced_slack: traced,
                base_distance: d,
            });
            break;
        }
    }
    Ok(RecurrenceReport { t, tol, patterns_examined, witness })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intervals::IntervalSet;
    use crate::surface::design_from_E;
    use std::f64::consts::LN_2;

    fn ln2_spec() -> LoomSurfaceSpec {
        let e = IntervalSet::points(1e-12, &[LN_2]).unwrap();
        design_from_E(&e, 8, 6.0).unwrap().spec
    }

    /// Oracle: every even increasing pattern, no pruning.
    fn brute_even_sums(slacks: &[f64]) -> Vec<f64> {
        let n = slacks.len();
        (1u32..1 << n)
            .filter(|m| m.count_ones() % 2 == 0)
            .map(|m| (0..n).filter(|k| m >> k & 1 == 1).map(|k| slacks[k]).sum())
            .collect()
    }

    #[test]
    fn trivial_witness_at_zero() {
        let r = recurrence_by_slack(0.0, &ln2_spec(), 0.05, Exec::Sequential).unwrap();
        assert_eq!(r.witness.unwrap().pattern, Vec::<usize>::new());
    }

    #[test]
    fn even_multiples_of_ln2() {
        let sp = ln2_spec();
        for (t, len) in [(2.0 * LN_2, 2), (4.0 * LN_2, 4)] {
            let r = recurrence_by_slack(t, &sp, 0.05, Exec::Parallel).unwrap();
            let w = r.witness.expect("witness");
            assert_eq!(w.pattern.len(), len);
            assert!((w.traced_slack - t).abs() < 0.05, "{w:?}");
        }
    }

    #[test]
    fn odd_multiple_has_no_even_witness() {
        let sp = ln2_spec();
        let r = recurrence_by_slack(LN_2, &sp, 0.1, Exec::Parallel).unwrap();
        assert!(r.witness.is_none());
        let slacks: Vec<f64> = sp.entries().iter().map(|e| height_slack(e.h)).collect();
        assert!(brute_even_sums(&slacks).iter().all(|s| (s - LN_2).abs() > 0.1));
    }

    #[test]
    fn pruned_search_matches_brute_force() {
        let slacks = [0.3, 0.5, 0.7, 1.1, 1.3, 0.2];
        let mut all = Vec::new();
        for k in 0..slacks.len() {
            for c in candidates(k, &slacks, 1.5, 0.15).0 {
                all.push(c.iter().map(|&i| slacks[i]).sum::<f64>());
            }
        }
        let mut brute: Vec<f64> = brute_even_sums(&slacks).into_iter().filter(|s| (s - 1.5).abs() <= 0.15).collect();
        all.sort_by(f64::total_cmp);
        brute.sort_by(f64::total_cmp);
        assert_eq!(all, brute);
    }

    #[test]
    fn parallel_matches_sequential() {
        let sp = ln2_spec();
        let a = recurrence_by_slack(2.0 * LN_2, &sp, 0.05, Exec::Parallel).unwrap();
        let b = recurrence_by_slack(2.0 * LN_2, &sp, 0.05, Exec::Sequential).unwrap();
        assert_eq!(a, b);
    }
}
