//! The trapping chamber of the slap map on flat 3-simplices `Δ³_h`.
//!
//! With `f ≡ 0` every reflection leaves along the face normal, so after one
//! step the dynamics reduce to the multi-valued map `Φ₀` on faces. On the
//! base `A₁A₂A₃` of `Δ³_h`, `Φ₀²` sends the triangle `A_aA_bC₀` onto
//! `A_aA_bC_c`, where `C₀` is the foot of the apex and `C_k` is where the
//! slap from the apex along the normal of the face opposite `A_k` lands.
//!
//! For small `h` the hexagon `ℋ = M₁…M₆`, with `M(a, b)` the intersection of
//! line `A_aC_b` with the perpendicular to `A_aC₀` through `C_a`, has a thin
//! neighbourhood `𝒱` with `Φ₀²(𝒱̄) ⊂ 𝒱`. This module constructs ℋ, searches
//! for such a neighbourhood on a grid, and measures escaping times there.
//!
//! Points on the base are handled in a 2-D chart centred at `C₀` with first
//! axis towards `A₁`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use serde::Serialize;

use super::{advance, iterate, slap_step, PhaseState, ReflectionLaw, SKELETON_GUARD};
use crate::error::{Error, Result};
use crate::geomkit::{orthonormalize, Vector};
use crate::hyperbolicity::escaping_time_of;
use crate::polytope::{simplex_family, Polytope};
use crate::sampling;

pub type Point2 = Vector2<f64>;

/// Index of the base face `A₁A₂A₃` in [`simplex_family`]`(3, h)`.
pub const BASE: usize = 3;
/// Inflation radii tried, as fractions of the base inradius.
pub const INFLATION_FRACTIONS: [f64; 4] = [0.05, 0.02, 0.01, 0.005];
/// Minimum number of grid points of `𝒱̄` checked for invariance.
pub const MIN_GRID_POINTS: usize = 10_000;
/// Orbit length used for escaping times of slap orbits started in `𝒱`.
pub const ESCAPE_HORIZON: usize = 30;
/// How many `Φ₀²` iterates a base point gets to reach `𝒱`.
pub const COVERAGE_ITERATES: usize = 100;

/// Apex slap images `C₁, C₂, C₃` for `Δ³_h` in 3-D coordinates; `None` if
/// some slap ray never reaches the base plane.
fn apex_images(p: &Polytope) -> Option<[Vector; 3]> {
    let apex = &p.vertices()[BASE].point;
    let eta_b = p.normal(BASE);
    let height = p.slack(BASE, apex);
    let mut out: [Vector; 3] = Default::default();
    for (k, slot) in out.iter_mut().enumerate() {
        let eta = p.normal(k);
        let s = eta.dot(eta_b);
        if s >= 0.0 {
            return None;
        }
        *slot = apex + eta * (height / -s);
    }
    Some(out)
}

/// Whether `C₁, C₂, C₃` all lie on the closed base triangle.
pub fn centers_on_base(h: f64) -> Result<bool> {
    let p = simplex_family(3, h)?;
    let tol = 1e-12 * p.diameter();
    Ok(apex_images(&p).is_some_and(|cs| cs.iter().all(|c| (0..BASE).all(|i| p.slack(i, c) >= -tol))))
}

/// Bisection for the largest `h` with [`centers_on_base`], starting from a
/// bracket where it holds at `lo` and fails at `hi`.
pub fn locate_h0(mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    if !(lo > 0.0 && hi > lo && tol > 0.0) {
        return Err(Error::invalid("need 0 < lo < hi and tol > 0"));
    }
    if !centers_on_base(lo)? || centers_on_base(hi)? {
        return Err(Error::invalid("bracket does not straddle the threshold"));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if centers_on_base(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// An image of a base point under `Φ₀²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Image {
    Base(Point2),
    /// The second slap landed on a lateral face.
    Off(usize),
}

/// Geometry of the construction for one `h`.
#[derive(Clone, Debug)]
pub struct Chamber {
    pub h: f64,
    polytope: Polytope,
    origin: Vector,
    axes: [Vector; 2],
    /// `A₁, A₂, A₃`.
    pub a: [Point2; 3],
    pub c0: Point2,
    /// `C₁, C₂, C₃`; `C_k` lies on the median from `C₀` to `A_k`.
    pub c: [Point2; 3],
    /// `M₁ … M₆ = M(1,2), M(2,1), M(2,3), M(3,2), M(3,1), M(1,3)`.
    pub hexagon: [Point2; 6],
    pub inradius: f64,
}

impl Chamber {
    /// `Ok(None)` when the apex images leave the base (`h ≥ h₀`).
    pub fn new(h: f64) -> Result<Option<Self>> {
        if !(h > 0.0) {
            return Err(Error::invalid(format!("height parameter must be positive, got {h}")));
        }
        if !centers_on_base(h)? {
            return Ok(None);
        }
        let p = simplex_family(3, h)?;
        let apex = &p.vertices()[BASE].point;
        let origin = apex - p.normal(BASE) * p.slack(BASE, apex);
        let frame = orthonormalize(3, &[&p.vertices()[0].point - &origin, &p.vertices()[1].point - &origin]);
        let axes = [frame.basis()[0].clone(), frame.basis()[1].clone()];
        let chart = |x: &Vector| Point2::new((x - &origin).dot(&axes[0]), (x - &origin).dot(&axes[1]));
        let a = [0, 1, 2].map(|k| chart(&p.vertices()[k].point));
        let cs = apex_images(&p).expect("checked by centers_on_base");
        let c = [0, 1, 2].map(|k| chart(&cs[k]));
        let c0 = Point2::zeros();
        let m = |i: usize, j: usize| {
            let perp = Point2::new(-(c0 - a[i]).y, (c0 - a[i]).x);
            intersect(a[i], c[j] - a[i], c[i], perp)
        };
        let hexagon = [m(0, 1), m(1, 0), m(1, 2), m(2, 1), m(2, 0), m(0, 2)];
        let inradius = p.skeleton_distance(&origin, BASE)?;
        Ok(Some(Self {
            h,
            polytope: p,
            origin,
            axes,
            a,
            c0,
            c,
            hexagon,
            inradius,
        }))
    }

    pub fn polytope(&self) -> &Polytope {
        &self.polytope
    }

    pub fn lift(&self, x: Point2) -> Vector {
        &self.origin + &self.axes[0] * x.x + &self.axes[1] * x.y
    }

    pub fn chart(&self, x: &Vector) -> Point2 {
        let r = x - &self.origin;
        Point2::new(r.dot(&self.axes[0]), r.dot(&self.axes[1]))
    }

    /// Pentagon `C₀ C_b M(b,a) M(a,b) C_a` for the base edge `A_aA_b`.
    pub fn pentagon(&self, a: usize, b: usize) -> [Point2; 5] {
        let m = |i: usize, j: usize| {
            let k = [(0, 1), (1, 0), (1, 2), (2, 1), (2, 0), (0, 2)]
                .iter()
                .position(|&p| p == (i, j))
                .expect("distinct base indices");
            self.hexagon[k]
        };
        [self.c0, self.c[b], m(b, a), m(a, b), self.c[a]]
    }

    /// Whether `x` lies in the open base triangle, away from its edges.
    pub fn on_base(&self, x: Point2) -> bool {
        let q = self.lift(x);
        (0..BASE).all(|i| self.polytope.slack(i, &q) > SKELETON_GUARD * self.polytope.diameter())
    }

    /// Distance from `x` to the closed hexagon (zero inside).
    pub fn hexagon_distance(&self, x: Point2) -> f64 {
        polygon_distance(&self.hexagon, x)
    }

    /// All images of `x` under `Φ₀²`.
    pub fn phi0_squared(&self, x: Point2) -> Vec<Image> {
        let mut out = Vec::new();
        let Ok(first) = slap_step(&self.polytope, BASE, &self.lift(x)) else {
            return out;
        };
        for (j, y) in first {
            let Ok(second) = slap_step(&self.polytope, j, &y) else { continue };
            for (k, z) in second {
                out.push(if k == BASE {
                    Image::Base(self.chart(&z))
                } else {
                    Image::Off(k)
                });
            }
        }
        out
    }

    /// Whether every image of `x` lands on the base within distance `< r`
    /// of the hexagon; also returns the largest image distance.
    fn maps_into(&self, x: Point2, r: f64) -> (bool, f64) {
        let imgs = self.phi0_squared(x);
        let mut worst = 0.0_f64;
        let mut ok = !imgs.is_empty();
        for img in imgs {
            match img {
                Image::Base(y) => {
                    let d = self.hexagon_distance(y);
                    worst = worst.max(d);
                    ok &= d < r && self.on_base(y);
                }
                Image::Off(_) => {
                    worst = f64::INFINITY;
                    ok = false;
                }
            }
        }
        (ok, worst)
    }

    /// Lattice points of `𝒱̄ = {x ∈ base : dist(x, ℋ) ≤ r}`, refined until
    /// there are at least `min_points`.
    pub fn grid(&self, r: f64, min_points: usize) -> Vec<Point2> {
        let (lo, hi) = bbox(&self.hexagon);
        let (lo, hi) = (lo - Point2::repeat(r), hi + Point2::repeat(r));
        let mut n = ((min_points as f64).sqrt() as usize).max(8);
        loop {
            let mut pts = Vec::new();
            for i in 0..=n {
                for j in 0..=n {
                    let x = Point2::new(
                        lo.x + (hi.x - lo.x) * i as f64 / n as f64,
                        lo.y + (hi.y - lo.y) * j as f64 / n as f64,
                    );
                    if self.hexagon_distance(x) <= r && self.on_base(x) {
                        pts.push(x);
                    }
                }
            }
            if pts.len() >= min_points {
                return pts;
            }
            n = (n as f64 * 1.3).ceil() as usize;
        }
    }

    /// Largest distance outside ℋ reached by `Φ₀²` images of the three
    /// pentagons, sampled on a lattice plus their vertices.
    pub fn pentagon_excess(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (a, b) in [(0, 1), (1, 2), (2, 0)] {
            let pent = self.pentagon(a, b);
            let (lo, hi) = bbox(&pent);
            let n = 60;
            let mut pts: Vec<Point2> = pent.to_vec();
            for i in 0..=n {
                for j in 0..=n {
                    let x = Point2::new(
                        lo.x + (hi.x - lo.x) * i as f64 / n as f64,
                        lo.y + (hi.y - lo.y) * j as f64 / n as f64,
                    );
                    if polygon_distance(&pent, x) == 0.0 {
                        pts.push(x);
                    }
                }
            }
            for x in pts {
                worst = worst.max(self.maps_into(x, f64::INFINITY).1);
            }
        }
        worst
    }

    /// Escaping time of the slap orbit started at `x` with velocity `η_base`;
    /// `None` if the orbit hits the skeleton or never generates within the
    /// horizon.
    pub fn slap_escaping_time(&self, x: Point2, horizon: usize) -> Option<usize> {
        let p = &self.polytope;
        let x0 = PhaseState::new(p, BASE, self.lift(x), p.normal(BASE).clone()).ok()?;
        let rec = iterate(p, &ReflectionLaw::slap(), &x0, horizon, SKELETON_GUARD);
        if !rec.is_complete() {
            return None;
        }
        let normals: Vec<Vector> = rec.faces().iter().map(|&f| p.normal(f).clone()).collect();
        escaping_time_of(&normals, 3)
    }

    /// Runs the invariance search, escaping-time survey and coverage count.
    pub fn analyze(&self) -> ChamberReport {
        let pentagon_excess = self.pentagon_excess();
        let mut chosen = None;
        let mut last = None;
        for frac in INFLATION_FRACTIONS {
            let r = frac * self.inradius;
            let grid = self.grid(r, MIN_GRID_POINTS);
            let escapes = grid.iter().filter(|&&x| !self.maps_into(x, r).0).count();
            last = Some((r, grid.len(), escapes));
            if escapes == 0 {
                chosen = Some((r, grid));
                break;
            }
        }
        let (inflation, grid_points, escapes) = last.expect("at least one radius is tried");
        let (max_t, unresolved) = match &chosen {
            Some((_, grid)) => {
                let ts: Vec<Option<usize>> =
                    grid.iter().map(|&x| self.slap_escaping_time(x, ESCAPE_HORIZON)).collect();
                (ts.iter().flatten().copied().max(), ts.iter().filter(|t| t.is_none()).count())
            }
            None => (None, grid_points),
        };
        let coverage = self.coverage(inflation);
        ChamberReport {
            h: self.h,
            defined: true,
            base_vertices: self.a.map(to_pair).to_vec(),
            c0: Some(to_pair(self.c0)),
            centers: self.c.map(to_pair).to_vec(),
            hexagon: self.hexagon.map(to_pair).to_vec(),
            pentagon_excess: Some(pentagon_excess),
            pentagons_inside: pentagon_excess <= 1e-9 * self.inradius,
            inflation: Some(inflation),
            grid_points,
            escapes,
            invariant: chosen.is_some(),
            max_escaping_time: max_t,
            unresolved,
            coverage: Some(coverage),
        }
    }

    /// Fraction of a lattice on the base whose `Φ₀²` orbit (first branch at
    /// multi-valued points) enters `𝒱` within [`COVERAGE_ITERATES`] iterates.
    pub fn coverage(&self, r: f64) -> f64 {
        let n = 60;
        let mut total = 0usize;
        let mut hit = 0usize;
        for i in 1..n {
            for j in 1..n - i {
                let k = n - i - j;
                let x = (self.a[0] * i as f64 + self.a[1] * j as f64 + self.a[2] * k as f64) / n as f64;
                if !self.on_base(x) {
                    continue;
                }
                total += 1;
                let mut y = x;
                for _ in 0..=COVERAGE_ITERATES {
                    if self.hexagon_distance(y) < r {
                        hit += 1;
                        break;
                    }
                    match self.phi0_squared(y).first() {
                        Some(Image::Base(z)) => y = *z,
                        _ => break,
                    }
                }
            }
        }
        hit as f64 / total.max(1) as f64
    }

    /// Whether sampled states of `Λ_λ = 𝒱 × {v : ∠(v, η) < λπ/2}` return to
    /// `Λ_λ` after two steps of the linear law with slope `λ`. Returns the
    /// number of failures and of samples lost to skeleton hits.
    pub fn returns_to_lambda_set(&self, lambda: f64, r: f64, samples: usize, seed: u64) -> (usize, usize) {
        let p = &self.polytope;
        let law = ReflectionLaw::Linear(lambda);
        let eta = p.normal(BASE);
        let cap = lambda * FRAC_PI_2;
        let (lo, hi) = bbox(&self.hexagon);
        let (lo, hi) = (lo - Point2::repeat(r), hi + Point2::repeat(r));
        let mut failures = 0;
        let mut lost = 0;
        for i in 0..samples {
            let mut rng = sampling::stream(seed, i as u64);
            let x = loop {
                let x = Point2::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
                if self.hexagon_distance(x) < r && self.on_base(x) {
                    break x;
                }
            };
            let v = if cap > 0.0 {
                sampling::cap_direction(&mut rng, eta, cap * (1.0 - 1e-9))
            } else {
                eta.clone()
            };
            let x0 = PhaseState {
                face: BASE,
                point: self.lift(x),
                velocity: v,
            };
            let two = advance(p, &law, &x0, SKELETON_GUARD).and_then(|t| advance(p, &law, &t.state, SKELETON_GUARD));
            match two {
                Ok(t) => {
                    let y = self.chart(&t.state.point);
                    let angle = t.state.velocity.dot(eta).clamp(-1.0, 1.0).acos();
                    let back = t.state.face == BASE
                        && self.hexagon_distance(y) < r
                        && self.on_base(y)
                        && (lambda == 0.0 || angle < cap);
                    if !back {
                        failures += 1;
                    }
                }
                Err(_) => lost += 1,
            }
        }
        (failures, lost)
    }

    /// Bisection for the largest `λ ∈ [0, 1]` whose sampled `Λ_λ` returns to
    /// itself after two steps.
    pub fn trapping_lambda(&self, r: f64, samples: usize, seed: u64, iterations: usize) -> f64 {
        let holds = |l: f64| self.returns_to_lambda_set(l, r, samples, seed).0 == 0;
        if holds(1.0) {
            return 1.0;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..iterations {
            let mid = 0.5 * (lo + hi);
            if holds(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// Outcome of [`chamber_analysis`]. Points are in the base chart.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChamberReport {
    pub h: f64,
    /// False when some `C_k` is off the base; nothing else is computed then.
    pub defined: bool,
    pub base_vertices: Vec<[f64; 2]>,
    pub c0: Option<[f64; 2]>,
    pub centers: Vec<[f64; 2]>,
    pub hexagon: Vec<[f64; 2]>,
    /// Largest distance outside ℋ of a pentagon image.
    pub pentagon_excess: Option<f64>,
    pub pentagons_inside: bool,
    /// Radius `r` of the neighbourhood `𝒱` (the last one tried on failure).
    pub inflation: Option<f64>,
    pub grid_points: usize,
    /// Grid points of `𝒱̄` with an image outside `𝒱`.
    pub escapes: usize,
    pub invariant: bool,
    pub max_escaping_time: Option<usize>,
    /// Grid orbits with a skeleton hit or no finite escaping time.
    pub unresolved: usize,
    /// Fraction of sampled base points whose orbit enters `𝒱`.
    pub coverage: Option<f64>,
}

impl ChamberReport {
    fn undefined(h: f64) -> Self {
        Self {
            h,
            defined: false,
            base_vertices: Vec::new(),
            c0: None,
            centers: Vec::new(),
            hexagon: Vec::new(),
            pentagon_excess: None,
            pentagons_inside: false,
            inflation: None,
            grid_points: 0,
            escapes: 0,
            invariant: false,
            max_escaping_time: None,
            unresolved: 0,
            coverage: None,
        }
    }
}

/// Builds the chamber of `Δ³_h` and checks `Φ₀²(𝒱̄) ⊂ 𝒱` on a grid.
pub fn chamber_analysis(h: f64) -> Result<ChamberReport> {
    Ok(match Chamber::new(h)? {
        Some(c) => c.analyze(),
        None => ChamberReport::undefined(h),
    })
}

fn to_pair(p: Point2) -> [f64; 2] {
    [p.x, p.y]
}

fn intersect(p: Point2, dp: Point2, q: Point2, dq: Point2) -> Point2 {
    let m = Matrix2::from_columns(&[dp, -dq]);
    let st = m.lu().solve(&(q - p)).unwrap_or_else(|| Point2::repeat(f64::NAN));
    p + dp * st.x
}

fn bbox(pts: &[Point2]) -> (Point2, Point2) {
    let mut lo = Point2::repeat(f64::INFINITY);
    let mut hi = Point2::repeat(f64::NEG_INFINITY);
    for p in pts {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

fn segment_distance(a: Point2, b: Point2, x: Point2) -> f64 {
    let ab = b - a;
    let t = ((x - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (a + ab * t - x).norm()
}

/// Distance to a closed simple polygon, zero inside (even–odd rule).
fn polygon_distance(poly: &[Point2], x: Point2) -> f64 {
    let n = poly.len();
    let mut inside = false;
    let mut edge = f64::INFINITY;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        edge = edge.min(segment_distance(a, b, x));
        if (a.y > x.y) != (b.y > x.y) {
            let xc = a.x + (x.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if x.x < xc {
                inside = !inside;
            }
        }
    }
    if inside || edge == 0.0 {
        0.0
    } else {
        edge
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apex_images_follow_closed_form() {
        // C_k sits on the median towards A_k at distance H²/r from C₀, with
        // H = 2h/√3 the height and r = 1/√6 the base inradius
        for &h in &[0.1, 0.25, 0.4] {
            let c = Chamber::new(h).unwrap().unwrap();
            let big_h = 2.0 * h / 3f64.sqrt();
            let r_in = 1.0 / 6f64.sqrt();
            assert!((c.inradius - r_in).abs() < 1e-12);
            for k in 0..3 {
                let dir = (c.a[k] - c.c0).normalize();
                let expect = c.c0 + dir * (big_h * big_h / r_in);
                assert!((c.c[k] - expect).norm() < 1e-12, "h={h} k={k}");
            }
        }
    }

    #[test]
    fn h0_is_one_half() {
        assert!(centers_on_base(0.49).unwrap());
        assert!(!centers_on_base(0.51).unwrap());
        let h0 = locate_h0(1e-3, 1.0, 1e-6).unwrap();
        assert!((h0 - 0.5).abs() < 1e-5);
        assert_eq!(chamber_analysis(0.6).unwrap().defined, false);
    }

    #[test]
    fn phi0_squared_is_affine_on_a_sub_triangle() {
        // on A1A2C0, Φ₀² fixes A1, A2 and sends C0 to C3
        let c = Chamber::new(0.2).unwrap().unwrap();
        for &(x, y) in &[(0.2, 0.3), (0.5, 0.1), (0.1, 0.6), (0.33, 0.33)] {
            let z = 1.0 - x - y;
            let pt = c.a[0] * x + c.a[1] * y + c.c0 * z;
            let want = c.a[0] * x + c.a[1] * y + c.c[2] * z;
            let imgs = c.phi0_squared(pt);
            assert_eq!(imgs.len(), 1);
            match imgs[0] {
                Image::Base(got) => assert!((got - want).norm() < 1e-12),
                Image::Off(f) => panic!("landed on face {f}"),
            }
        }
    }

    #[test]
    fn hexagon_vertices_lie_on_construction_lines() {
        let c = Chamber::new(0.1).unwrap().unwrap();
        let m1 = c.hexagon[0];
        let along = (m1 - c.a[0]).perp(&(c.c[1] - c.a[0]));
        assert!(along.abs() < 1e-12);
        assert!((m1 - c.c[0]).dot(&(c.c0 - c.a[0])).abs() < 1e-12);
    }

    #[test]
    fn polygon_distance_basics() {
        let sq = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        assert_eq!(polygon_distance(&sq, Point2::new(0.5, 0.5)), 0.0);
        assert!((polygon_distance(&sq, Point2::new(2.0, 0.5)) - 1.0).abs() < 1e-15);
        assert_eq!(polygon_distance(&sq, Point2::new(1.0, 0.5)), 0.0);
    }
}
