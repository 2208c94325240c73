//! Plane hyperbolic geometry in the band model and the upper half-plane.
//!
//! The band `{|Im z| < pi/2}` with metric `|dz| / cos(Im z)` is developed into
//! the upper half-plane through `w = i e^z`. All tracing happens in that chart:
//! geodesics are vertical lines or semicircles centred on the real axis and
//! horocycles based at infinity are horizontal lines.
//!
//! Frames (unit tangent vectors) are orientation-preserving matrices `F`
//! acting on the reference vector at `i` pointing towards `+inf`. The
//! geodesic flow is `F a_t`, the stable horocycle flow `F u_r` and the
//! unstable one `F n_r` (right multiplication).

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LoomError, Result};

/// Geometric coincidence tolerance.
pub const GEOM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub x: f64,
    pub y: f64,
}

impl BandPoint {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() || y.abs() >= FRAC_PI_2 {
            return Err(LoomError::Domain(format!("({x}, {y}) is not a band point")));
        }
        Ok(Self { x, y })
    }

    pub const ORIGIN: BandPoint = BandPoint { x: 0.0, y: 0.0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub u: f64,
    pub v: f64,
}

impl ChartPoint {
    pub fn new(u: f64, v: f64) -> Result<Self> {
        if !u.is_finite() || !v.is_finite() || v <= 0.0 {
            return Err(LoomError::Domain(format!("({u}, {v}) is not in the upper half-plane")));
        }
        Ok(Self { u, v })
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.u, self.v)
    }

    pub fn from_complex(w: Complex64) -> Self {
        Self { u: w.re, v: w.im }
    }
}

/// A point of the boundary circle: a real number or the point at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    Finite(f64),
    Infinity,
}

impl Boundary {
    pub fn is_infinite(self) -> bool {
        matches!(self, Boundary::Infinity)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Boundary::Finite(x) => Some(x),
            Boundary::Infinity => None,
        }
    }

    fn close_to(self, other: Boundary, tol: f64) -> bool {
        match (self, other) {
            (Boundary::Infinity, Boundary::Infinity) => true,
            (Boundary::Finite(a), Boundary::Finite(b)) => (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs())),
            _ => false,
        }
    }
}

/// Real 2x2 matrix, used projectively.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 { a: 1.0, b: 0.0, c: 0.0, d: 1.0 };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    /// Scales to determinant one, preferring a non-negative trace.
    pub fn normalized(self) -> Self {
        let det = self.det();
        debug_assert!(det > 0.0, "normalizing a matrix with det {det}");
        let k = 1.0 / det.abs().sqrt();
        let k = if self.trace() < 0.0 { -k } else { k };
        Self::new(self.a * k, self.b * k, self.c * k, self.d * k)
    }

    /// Inverse of a determinant-one matrix.
    pub fn inverse(&self) -> Self {
        Self::new(self.d, -self.b, -self.c, self.a)
    }

    /// Conjugation by `diag(1, -1)`.
    pub fn flip(&self) -> Self {
        Self::new(self.a, -self.b, -self.c, self.d)
    }

    pub fn apply(&self, w: Complex64) -> Complex64 {
        (w * self.a + self.b) / (w * self.c + self.d)
    }

    pub fn apply_boundary(&self, p: Boundary) -> Boundary {
        match p {
            Boundary::Infinity => {
                if self.c == 0.0 {
                    Boundary::Infinity
                } else {
                    Boundary::Finite(self.a / self.c)
                }
            }
            Boundary::Finite(x) => {
                let den = self.c * x + self.d;
                if den == 0.0 {
                    Boundary::Infinity
                } else {
                    Boundary::Finite((self.a * x + self.b) / den)
                }
            }
        }
    }

    /// `a_t = diag(e^{t/2}, e^{-t/2})`.
    pub fn a(t: f64) -> Self {
        let e = (0.5 * t).exp();
        Self::new(e, 0.0, 0.0, 1.0 / e)
    }

    /// Lower unipotent `n_s`.
    pub fn n(s: f64) -> Self {
        Self::new(1.0, 0.0, s, 1.0)
    }

    /// Upper unipotent `u_r`.
    pub fn u(r: f64) -> Self {
        Self::new(1.0, r, 0.0, 1.0)
    }

    /// Rotation about `i` turning tangent vectors there by `-2 phi`.
    pub fn rotation(phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Self::new(c, -s, s, c)
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        (self.a - other.a)
            .abs()
            .max((self.b - other.b).abs())
            .max((self.c - other.c).abs())
            .max((self.d - other.d).abs())
    }

    /// Distance between projective classes (up to sign).
    pub fn projective_diff(&self, other: &Mat2) -> f64 {
        let neg = Mat2::new(-other.a, -other.b, -other.c, -other.d);
        self.max_abs_diff(other).min(self.max_abs_diff(&neg))
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
}

impl fmt::Display for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]]", self.a, self.b, self.c, self.d)
    }
}

/// Isometry of the upper half-plane. Reversing isometries act as
/// `w -> m(-conj(w))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Isometry {
    pub m: Mat2,
    pub reversing: bool,
}

impl Isometry {
    pub const IDENTITY: Isometry = Isometry { m: Mat2::IDENTITY, reversing: false };

    /// Reflection across the imaginary axis.
    pub const MIRROR: Isometry = Isometry { m: Mat2::IDENTITY, reversing: true };

    pub fn preserving(m: Mat2) -> Self {
        Self { m: m.normalized(), reversing: false }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Isometry) -> Isometry {
        let rhs = if self.reversing { other.m.flip() } else { other.m };
        Isometry { m: (self.m * rhs).normalized(), reversing: self.reversing ^ other.reversing }
    }

    pub fn inverse(&self) -> Isometry {
        let inv = self.m.inverse();
        if self.reversing {
            Isometry { m: inv.flip(), reversing: true }
        } else {
            Isometry { m: inv, reversing: false }
        }
    }

    pub fn apply(&self, w: Complex64) -> Complex64 {
        if self.reversing {
            self.m.apply(Complex64::new(-w.re, w.im))
        } else {
            self.m.apply(w)
        }
    }

    pub fn apply_chart(&self, p: ChartPoint) -> ChartPoint {
        ChartPoint::from_complex(self.apply(p.to_complex()))
    }

    pub fn apply_boundary(&self, p: Boundary) -> Boundary {
        let p = match (self.reversing, p) {
            (true, Boundary::Finite(x)) => Boundary::Finite(-x),
            _ => p,
        };
        self.m.apply_boundary(p)
    }

    /// Equality of isometries up to the sign of the matrix.
    pub fn approx_eq(&self, other: &Isometry, tol: f64) -> bool {
        self.reversing == other.reversing && self.m.projective_diff(&other.m) <= tol
    }

    /// Image of a frame: `self ∘ F`, returned as an orientation-preserving
    /// frame (reversing isometries are followed by the mirror, which fixes
    /// the reference vector).
    pub fn act_on_frame(&self, frame: &Mat2) -> Mat2 {
        let g = self.compose(&Isometry { m: *frame, reversing: false });
        if g.reversing {
            g.compose(&Isometry::MIRROR).m
        } else {
            g.m
        }
    }
}

/// Orientation-preserving map sending `0 -> from` and `inf -> to`.
pub fn frame_through(from: Boundary, to: Boundary) -> Result<Mat2> {
    let m = match (from, to) {
        (Boundary::Finite(p), Boundary::Infinity) => Mat2::new(1.0, p, 0.0, 1.0),
        (Boundary::Infinity, Boundary::Finite(q)) => Mat2::new(q, -1.0, 1.0, 0.0),
        (Boundary::Finite(p), Boundary::Finite(q)) if q > p => Mat2::new(q, p, 1.0, 1.0),
        (Boundary::Finite(p), Boundary::Finite(q)) if q < p => Mat2::new(q, -p, 1.0, -1.0),
        _ => return Err(LoomError::Domain("geodesic endpoints coincide".into())),
    };
    Ok(m.normalized())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodesicLine {
    pub e_minus: Boundary,
    pub e_plus: Boundary,
}

impl GeodesicLine {
    pub fn new(e_minus: Boundary, e_plus: Boundary) -> Result<Self> {
        if e_minus.close_to(e_plus, 0.0) {
            return Err(LoomError::Domain("geodesic endpoints coincide".into()));
        }
        Ok(Self { e_minus, e_plus })
    }

    /// Unit-speed frame field along the line, oriented from `e_minus` to `e_plus`.
    pub fn frame(&self) -> Mat2 {
        frame_through(self.e_minus, self.e_plus).expect("validated endpoints")
    }

    pub fn contains(&self, p: ChartPoint, tol: f64) -> bool {
        distance_to_line(p, self) <= tol
    }

    /// Point of the line at signed arc-length `t` from the foot of `i`'s frame.
    pub fn point_at(&self, t: f64) -> ChartPoint {
        ChartPoint::from_complex((self.frame() * Mat2::a(t)).apply(Complex64::i()))
    }
}

/// Hyperbolic distance from a point to a geodesic line.
pub fn distance_to_line(p: ChartPoint, g: &GeodesicLine) -> f64 {
    let f = g.frame();
    let w = f.inverse().apply(p.to_complex());
    // distance to the imaginary axis: asinh(|Re w| / Im w)
    (w.re.abs() / w.im).asinh()
}

/// Orthogonal projection of `p` onto `g`, as a signed arc-length parameter
/// along `g.frame()`.
pub fn project_to_line(p: ChartPoint, g: &GeodesicLine) -> f64 {
    let w = g.frame().inverse().apply(p.to_complex());
    w.norm().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horocycle {
    pub base: Boundary,
    /// `ln(height)` for horocycles based at infinity and `-ln(diameter)`
    /// for those based at a real point.
    pub level: f64,
}

impl Horocycle {
    pub fn through(p: ChartPoint, base: Boundary) -> Self {
        match base {
            Boundary::Infinity => Self { base, level: p.v.ln() },
            Boundary::Finite(xi) => {
                let dx = p.u - xi;
                let diameter = (dx * dx + p.v * p.v) / p.v;
                Self { base, level: -diameter.ln() }
            }
        }
    }

    pub fn contains(&self, p: ChartPoint, tol: f64) -> bool {
        let other = Horocycle::through(p, self.base);
        (other.level - self.level).abs() <= tol
    }
}

/// `w = i e^z`.
pub fn band_to_chart(p: BandPoint) -> ChartPoint {
    let r = p.x.exp();
    let (s, c) = p.y.sin_cos();
    ChartPoint { u: -r * s, v: r * c }
}

pub fn chart_to_band(p: ChartPoint) -> BandPoint {
    let x = p.u.hypot(p.v).ln();
    let y = (-p.u).atan2(p.v);
    BandPoint { x, y }
}

pub fn dist_chart(p: ChartPoint, q: ChartPoint) -> f64 {
    let du = p.u - q.u;
    let dv = p.v - q.v;
    let chord = du.hypot(dv);
    2.0 * (chord / (2.0 * (p.v * q.v).sqrt())).asinh()
}

pub fn dist_complex(p: Complex64, q: Complex64) -> f64 {
    2.0 * ((p - q).norm() / (2.0 * (p.im * q.im).sqrt())).asinh()
}

/// Distance in the band metric `|dz| / cos(Im z)`.
pub fn dist(p: BandPoint, q: BandPoint) -> f64 {
    // Points far from the origin are rescaled first so that e^x stays tame.
    let shift = 0.5 * (p.x + q.x);
    let a = band_to_chart(BandPoint { x: p.x - shift, y: p.y });
    let b = band_to_chart(BandPoint { x: q.x - shift, y: q.y });
    dist_chart(a, b)
}

/// Infimum distance between two geodesic lines; zero when they meet,
/// cross, or share an endpoint.
pub fn dist_geodesics(g1: &GeodesicLine, g2: &GeodesicLine) -> f64 {
    let ends = [g1.e_minus, g1.e_plus, g2.e_minus, g2.e_plus];
    for &p in &ends[..2] {
        for &q in &ends[2..] {
            if p.close_to(q, 1e-15) {
                return 0.0;
            }
        }
    }
    // rotate about i until every endpoint is finite
    let mut finite = None;
    for phi in [0.0, 0.37, 0.81, 1.23] {
        let r = Mat2::rotation(phi);
        let img: Vec<Option<f64>> = ends.iter().map(|&e| r.apply_boundary(e).finite()).collect();
        if img.iter().all(|x| x.is_some()) {
            finite = Some([img[0].unwrap(), img[1].unwrap(), img[2].unwrap(), img[3].unwrap()]);
            break;
        }
    }
    let [a, b, mut c, mut d] = finite.expect("some rotation avoids infinity");
    let cross = |c: f64, d: f64| (a - c) * (b - d) / ((a - d) * (b - c));
    // 1 - cr computed without cancellation; its sign picks the pairing
    let one_minus = |c: f64, d: f64| (a - b) * (d - c) / ((a - d) * (b - c));
    if one_minus(c, d) < 0.0 {
        std::mem::swap(&mut c, &mut d);
    }
    let om = one_minus(c, d);
    let cr = cross(c, d);
    if cr <= 0.0 || om <= 0.0 {
        return 0.0;
    }
    let root = cr.max(0.0).sqrt();
    ((1.0 + root).powi(2) / om).ln()
}

/// Reflection across a geodesic line.
pub fn reflect(g: &GeodesicLine) -> Isometry {
    let f = g.frame();
    let m = f * f.inverse().flip();
    Isometry { m: m.normalized(), reversing: true }
}

/// Chart endpoints of the boundary of `D_h(s)`, the geodesic meeting the
/// band vertical `Re z = s` orthogonally at `s + ih`.
pub fn boundary_endpoints(s: f64, h: f64) -> (f64, f64) {
    let e = s.exp();
    let half = 0.5 * h;
    (-e / half.tan(), -e * half.tan())
}

pub fn perpendicular_boundary_geodesic(s: f64, h: f64) -> Result<GeodesicLine> {
    if !(h > 0.0 && h < FRAC_PI_2) || !s.is_finite() {
        return Err(LoomError::Domain(format!("height {h} outside (0, pi/2)")));
    }
    let (l, r) = boundary_endpoints(s, h);
    GeodesicLine::new(Boundary::Finite(l), Boundary::Finite(r))
}

/// Bruhat coordinates `g = n_s a_t u_r`.
pub fn nau_decompose(g: &Isometry) -> Result<(f64, f64, f64)> {
    if g.reversing {
        return Err(LoomError::Domain("orientation-reversing isometry".into()));
    }
    let mut m = g.m;
    if m.a.abs() < 1e-12 {
        return Err(LoomError::OutsideBruhatCell(m.a));
    }
    if m.a < 0.0 {
        m = Mat2::new(-m.a, -m.b, -m.c, -m.d);
    }
    Ok((m.c / m.a, 2.0 * m.a.ln(), m.b / m.a))
}

pub fn nau_compose(s: f64, t: f64, r: f64) -> Isometry {
    Isometry::preserving(Mat2::n(s) * Mat2::a(t) * Mat2::u(r))
}

/// Frame of the unit tangent vector at `p` making angle `angle` with the
/// positive band-real direction.
pub fn frame_from_band(p: BandPoint, angle: f64) -> Mat2 {
    let w = band_to_chart(p);
    let chart_angle = angle + FRAC_PI_2 + p.y;
    let phi = 0.5 * (FRAC_PI_2 - chart_angle);
    let sv = w.v.sqrt();
    let place = Mat2::new(sv, w.u / sv, 0.0, 1.0 / sv);
    (place * Mat2::rotation(phi)).normalized()
}

/// Inverse of [`frame_from_band`]: base point and band angle in `[0, 2pi)`.
pub fn band_from_frame(f: &Mat2) -> (BandPoint, f64) {
    let w = f.apply(Complex64::i());
    let p = chart_to_band(ChartPoint::from_complex(w));
    let den = Complex64::new(f.d, f.c);
    let angle = (-2.0 * den.arg() - p.y).rem_euclid(2.0 * PI);
    (p, angle)
}

pub fn frame_position(f: &Mat2) -> ChartPoint {
    ChartPoint::from_complex(f.apply(Complex64::i()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(rng: &mut ChaCha8Rng) -> BandPoint {
        BandPoint { x: rng.gen_range(-3.0..3.0), y: rng.gen_range(-1.5..1.5) }
    }

    /// Arc length of the straight band segment between p and q under the band
    /// metric, by composite Simpson quadrature. Only valid when the segment is
    /// vertical (then it is a geodesic).
    fn vertical_quadrature(h: f64) -> f64 {
        let n = 20_000;
        let step = h / n as f64;
        let f = |t: f64| 1.0 / t.cos();
        let mut acc = f(0.0) + f(h);
        for i in 1..n {
            let t = i as f64 * step;
            acc += if i % 2 == 1 { 4.0 * f(t) } else { 2.0 * f(t) };
        }
        acc * step / 3.0
    }

    #[test]
    fn chart_examples() {
        let p = band_to_chart(BandPoint { x: 0.0, y: 0.0 });
        assert_abs_diff_eq!(p.u, 0.0);
        assert_abs_diff_eq!(p.v, 1.0);
        let p = band_to_chart(BandPoint { x: 1.7, y: 0.0 });
        assert_abs_diff_eq!(p.u, 0.0);
        assert_abs_diff_eq!(p.v, 1.7f64.exp(), epsilon = 1e-12);
        let p = band_to_chart(BandPoint { x: 0.0, y: PI / 4.0 });
        assert_abs_diff_eq!(p.u, -0.70710678118654757, epsilon = 1e-12);
        assert_abs_diff_eq!(p.v, 0.70710678118654757, epsilon = 1e-12);
        let back = chart_to_band(p);
        assert_abs_diff_eq!(back.y, PI / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn chart_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let p = random_band(&mut rng);
            let q = chart_to_band(band_to_chart(p));
            assert!((p.x - q.x).abs() < 1e-12 && (p.y - q.y).abs() < 1e-12);
        }
    }

    #[test]
    fn vertical_distance_matches_quadrature() {
        for i in 1..=15 {
            let h = 0.1 * i as f64;
            let d = dist(BandPoint::ORIGIN, BandPoint { x: 0.0, y: h });
            assert_abs_diff_eq!(d, h.sin().atanh(), epsilon = 1e-9);
            assert_abs_diff_eq!(d, vertical_quadrature(h), epsilon = 1e-9);
        }
        assert_abs_diff_eq!(dist(BandPoint::ORIGIN, BandPoint { x: 0.0, y: PI / 4.0 }), 0.881373587, epsilon = 1e-9);
        assert_abs_diff_eq!(dist(BandPoint::ORIGIN, BandPoint { x: -4.5, y: 0.0 }), 4.5, epsilon = 1e-12);
        let p = BandPoint { x: 0.3, y: -0.2 };
        assert_eq!(dist(p, p), 0.0);
    }

    #[test]
    fn distance_invariant_under_isometries() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let p = band_to_chart(random_band(&mut rng));
            let q = band_to_chart(random_band(&mut rng));
            let g = match rng.gen_range(0..4) {
                0 => Isometry::preserving(Mat2::a(rng.gen_range(-2.0..2.0))),
                1 => Isometry::preserving(Mat2::n(rng.gen_range(-2.0..2.0))),
                2 => Isometry::preserving(Mat2::u(rng.gen_range(-2.0..2.0))),
                _ => {
                    let a = rng.gen_range(-3.0..-0.1);
                    let b = rng.gen_range(0.1..3.0);
                    reflect(&GeodesicLine::new(Boundary::Finite(a), Boundary::Finite(b)).unwrap())
                }
            };
            let d0 = dist_chart(p, q);
            let d1 = dist_chart(g.apply_chart(p), g.apply_chart(q));
            assert!((d0 - d1).abs() < 1e-9, "{d0} vs {d1}");
        }
    }

    #[test]
    fn reflection_examples() {
        let axis = GeodesicLine::new(Boundary::Finite(0.0), Boundary::Infinity).unwrap();
        let r = reflect(&axis);
        let w = r.apply_chart(ChartPoint { u: 0.7, v: 1.3 });
        assert_abs_diff_eq!(w.u, -0.7, epsilon = 1e-14);
        assert_abs_diff_eq!(w.v, 1.3, epsilon = 1e-14);

        let unit = GeodesicLine::new(Boundary::Finite(-1.0), Boundary::Finite(1.0)).unwrap();
        let r = reflect(&unit);
        let (u, v) = (0.4, 0.9);
        let w = r.apply_chart(ChartPoint { u, v });
        let n2 = u * u + v * v;
        assert_abs_diff_eq!(w.u, u / n2, epsilon = 1e-14);
        assert_abs_diff_eq!(w.v, v / n2, epsilon = 1e-14);
    }

    #[test]
    fn reflections_fix_their_line_and_are_involutions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a = rng.gen_range(-5.0..5.0);
            let b = if rng.gen_bool(0.2) { Boundary::Infinity } else { Boundary::Finite(a + rng.gen_range(0.1..5.0)) };
            let g = GeodesicLine::new(Boundary::Finite(a), b).unwrap();
            let r = reflect(&g);
            assert!(r.reversing);
            for i in 0..10 {
                let p = g.point_at(-2.0 + 0.4 * i as f64);
                let q = r.apply_chart(p);
                assert!(dist_chart(p, q) < 1e-10);
            }
            assert!(r.compose(&r).approx_eq(&Isometry::IDENTITY, 1e-9));
        }
    }

    #[test]
    fn composition_matches_pointwise_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let g1 = reflect(&GeodesicLine::new(Boundary::Finite(-2.0), Boundary::Finite(rng.gen_range(-1.0..1.0))).unwrap());
            let g2 = Isometry::preserving(Mat2::a(rng.gen_range(-1.0..1.0)) * Mat2::n(rng.gen_range(-1.0..1.0)));
            let w = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(0.2..2.0));
            let lhs = g1.compose(&g2).apply(w);
            let rhs = g1.apply(g2.apply(w));
            assert!((lhs - rhs).norm() < 1e-10);
            let back = g1.compose(&g2).inverse().apply(lhs);
            assert!((back - w).norm() < 1e-9);
        }
    }

    #[test]
    fn boundary_geodesic_passes_through_sh_orthogonally() {
        for &(s, h) in &[(0.0, 0.3), (2.5, 1.2), (-1.0, 0.05), (40.0, PI / 4.0)] {
            let g = perpendicular_boundary_geodesic(s, h).unwrap();
            let p = band_to_chart(BandPoint { x: s, y: h });
            assert!(distance_to_line(p, &g) < 1e-12);
            // tangent of g at p versus tangent of the band vertical (the circle |w| = e^s)
            let f = g.frame();
            let t0 = project_to_line(p, &g);
            let eps = 1e-6;
            let a = f.apply(Complex64::i() * (t0 - eps).exp());
            let b = f.apply(Complex64::i() * (t0 + eps).exp());
            let tangent = b - a;
            let radial = p.to_complex();
            let cos = (tangent.re * radial.re + tangent.im * radial.im) / (tangent.norm() * radial.norm());
            let angle = cos.abs().acos();
            // the geodesic leaves p radially, i.e. orthogonally to |w| = e^s
            assert!(angle.abs() < 1e-9, "angle {angle}");
        }
        assert!(perpendicular_boundary_geodesic(0.0, 1.6).is_err());
        assert!(perpendicular_boundary_geodesic(0.0, 0.0).is_err());
    }

    #[test]
    fn boundary_geodesics_translate_equivariantly() {
        let c = 1.75;
        let g0 = perpendicular_boundary_geodesic(0.4, 0.6).unwrap();
        let g1 = perpendicular_boundary_geodesic(0.4 + c, 0.6).unwrap();
        let a = Isometry::preserving(Mat2::a(c));
        let (p, q) = (a.apply_boundary(g0.e_minus), a.apply_boundary(g0.e_plus));
        assert!(p.close_to(g1.e_minus, 1e-13) && q.close_to(g1.e_plus, 1e-13));
    }

    /// Brute-force oracle: minimize the distance over sampled points on both
    /// lines, refining around the best pair.
    fn brute_geodesic_distance(g1: &GeodesicLine, g2: &GeodesicLine) -> f64 {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let mut lo = (-40.0f64, -40.0f64);
        let mut width = 80.0;
        for _ in 0..40 {
            let n = 60;
            for i in 0..=n {
                for j in 0..=n {
                    let t1 = lo.0 + width * i as f64 / n as f64;
                    let t2 = lo.1 + width * j as f64 / n as f64;
                    let d = dist_chart(g1.point_at(t1), g2.point_at(t2));
                    if d < best.0 {
                        best = (d, t1, t2);
                    }
                }
            }
            width *= 0.25;
            lo = (best.1 - width / 2.0, best.2 - width / 2.0);
        }
        best.0
    }

    #[test]
    fn geodesic_distance_examples() {
        let g = perpendicular_boundary_geodesic(0.0, 0.7).unwrap();
        assert_eq!(dist_geodesics(&g, &g), 0.0);
        let a = GeodesicLine::new(Boundary::Finite(-1.0), Boundary::Finite(1.0)).unwrap();
        let b = GeodesicLine::new(Boundary::Finite(0.0), Boundary::Infinity).unwrap();
        assert_eq!(dist_geodesics(&a, &b), 0.0);

        let g0 = perpendicular_boundary_geodesic(0.0, PI / 4.0).unwrap();
        let g10 = perpendicular_boundary_geodesic(10.0, PI / 4.0).unwrap();
        let v = dist_geodesics(&g0, &g10);
        assert!(v > 7.5 && v < 10.0);
        // pinned regression value (closed form, checked against the oracle below)
        assert_abs_diff_eq!(v, 9.99981838, epsilon = 1e-6);

        // nested semicircles: distance ln R along the imaginary axis
        let r = GeodesicLine::new(Boundary::Finite(-3.0), Boundary::Finite(3.0)).unwrap();
        assert_abs_diff_eq!(dist_geodesics(&a, &r), 3f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn geodesic_distance_matches_brute_force() {
        let cases = [
            (perpendicular_boundary_geodesic(0.0, PI / 4.0).unwrap(), perpendicular_boundary_geodesic(10.0, PI / 4.0).unwrap()),
            (perpendicular_boundary_geodesic(0.0, 0.3).unwrap(), perpendicular_boundary_geodesic(2.0, 0.5).unwrap()),
            (
                GeodesicLine::new(Boundary::Finite(-1.0), Boundary::Finite(1.0)).unwrap(),
                GeodesicLine::new(Boundary::Finite(2.0), Boundary::Infinity).unwrap(),
            ),
        ];
        for (g1, g2) in cases {
            let exact = dist_geodesics(&g1, &g2);
            let brute = brute_geodesic_distance(&g1, &g2);
            assert!((exact - brute).abs() < 1e-6, "{exact} vs {brute}");
        }
    }

    #[test]
    fn nau_examples() {
        let (s, t, r) = nau_decompose(&Isometry::IDENTITY).unwrap();
        assert!(s.abs() < 1e-15 && t.abs() < 1e-15 && r.abs() < 1e-15);
        let (s, t, r) = nau_decompose(&Isometry::preserving(Mat2::a(0.8))).unwrap();
        assert!(s.abs() < 1e-15 && (t - 0.8).abs() < 1e-12 && r.abs() < 1e-15);
        let (s, t, r) = nau_decompose(&nau_compose(0.3, 1.2, -0.5)).unwrap();
        assert_abs_diff_eq!(s, 0.3, epsilon = 1e-10);
        assert_abs_diff_eq!(t, 1.2, epsilon = 1e-10);
        assert_abs_diff_eq!(r, -0.5, epsilon = 1e-10);
        let w = Isometry::preserving(Mat2::new(0.0, -1.0, 1.0, 0.0));
        assert!(matches!(nau_decompose(&w), Err(LoomError::OutsideBruhatCell(_))));
    }

    #[test]
    fn frames_round_trip_through_band_coordinates() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let p = random_band(&mut rng);
            let angle = rng.gen_range(0.0..2.0 * PI);
            let f = frame_from_band(p, angle);
            let (q, a) = band_from_frame(&f);
            assert!((p.x - q.x).abs() < 1e-10 && (p.y - q.y).abs() < 1e-10);
            let diff = (a - angle).rem_euclid(2.0 * PI);
            assert!(diff.min(2.0 * PI - diff) < 1e-9);
        }
        // x_0 is the identity frame
        assert!(frame_from_band(BandPoint::ORIGIN, 0.0).projective_diff(&Mat2::IDENTITY) < 1e-15);
    }

    #[test]
    fn horocycles_at_infinity_are_horizontal() {
        let h = Horocycle::through(ChartPoint { u: 0.0, v: 1.0 }, Boundary::Infinity);
        assert!(h.contains(ChartPoint { u: 5.0, v: 1.0 }, 1e-14));
        let h = Horocycle::through(ChartPoint { u: 1.0, v: 1.0 }, Boundary::Finite(0.0));
        // circle tangent at 0 of diameter 2
        assert!(h.contains(ChartPoint { u: 0.0, v: 2.0 }, 1e-14));
    }
}
