//! The billiard map with a contracting reflection law.
//!
//! One step of `Φ_{f,P}` is: fly along `v` to the next face `F_j`, reflect
//! specularly, `u = R_{η_j}(v)`, then pull `u` towards the normal with the
//! law, `v' = C_{η_j}(u)`, so that `∠(v', η_j) = f(∠(u, η_j))`.
//!
//! The slap map (`f ≡ 0`) and the trapping chamber it has on flat
//! 3-simplices are in [`chamber`].

pub mod chamber;

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geomkit::{reflect_unchecked, Vector, UNIT_TOL};
use crate::io::{fmt_f64, vector_serde, Table};
use crate::polytope::{first_exit, ridge_distance, Polytope};
use crate::sampling;

/// Flights ending closer than this (times the diameter) to the skeleton are
/// skeleton hits.
pub const SKELETON_GUARD: f64 = 1e-9;
/// `|⟨v, η_j⟩|` below this at the hit face is a grazing hit.
pub const GRAZING_TOL: f64 = 1e-10;
/// Below this incidence angle the law returns the normal itself.
pub const SMALL_ANGLE: f64 = 1e-8;
/// Velocity rotation used by the jitter mode of [`iterate_with`].
pub const JITTER_ANGLE: f64 = 1e-8;

pub type AngleFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A law given by closures for `f` and `f′`, with the constants the
/// analysis needs supplied by the caller.
#[derive(Clone)]
pub struct CustomLaw {
    pub name: String,
    f: AngleFn,
    df: AngleFn,
    /// `sup |f′|`.
    lambda: f64,
    /// `sup max(|f′(θ)|, sin f(θ) / sin θ)`.
    contraction: f64,
}

impl CustomLaw {
    pub fn new(name: impl Into<String>, f: AngleFn, df: AngleFn, lambda: f64, contraction: f64) -> Result<Self> {
        if f(0.0).abs() > 1e-12 {
            return Err(Error::invalid("a reflection law must fix 0"));
        }
        if !(0.0..=1.0).contains(&lambda) || contraction < lambda {
            return Err(Error::invalid("need 0 <= sup|f'| <= 1 and contraction >= sup|f'|"));
        }
        Ok(Self {
            name: name.into(),
            f,
            df,
            lambda,
            contraction,
        })
    }
}

impl fmt::Debug for CustomLaw {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("CustomLaw")
            .field("name", &self.name)
            .field("lambda", &self.lambda)
            .finish_non_exhaustive()
    }
}

/// A reflection law `f : [0, π/2) → [0, π/2)`.
#[derive(Clone, Debug)]
pub enum ReflectionLaw {
    /// `f(θ) = λθ`; `λ = 0` is the slap law and `λ = 1` is specular.
    Linear(f64),
    /// `f(θ) = asin(λ sin θ)`, for which `sin f / sin θ = λ` exactly.
    AsinSin(f64),
    Custom(CustomLaw),
}

impl ReflectionLaw {
    pub fn linear(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid(format!("linear law needs lambda in [0, 1], got {lambda}")));
        }
        Ok(Self::Linear(lambda))
    }

    pub fn asin_sin(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid(format!("asin-sin law needs lambda in [0, 1], got {lambda}")));
        }
        Ok(Self::AsinSin(lambda))
    }

    pub fn slap() -> Self {
        Self::Linear(0.0)
    }

    pub fn specular() -> Self {
        Self::Linear(1.0)
    }

    pub fn f(&self, theta: f64) -> f64 {
        match self {
            Self::Linear(l) => l * theta,
            Self::AsinSin(l) => (l * theta.sin()).clamp(-1.0, 1.0).asin(),
            Self::Custom(c) => (c.f)(theta),
        }
    }

    pub fn df(&self, theta: f64) -> f64 {
        match self {
            Self::Linear(l) => *l,
            Self::AsinSin(l) => {
                let s = l * theta.sin();
                l * theta.cos() / (1.0 - s * s).max(0.0).sqrt()
            }
            Self::Custom(c) => (c.df)(theta),
        }
    }

    /// `λ(f) = sup |f′|`.
    pub fn lambda(&self) -> f64 {
        match self {
            Self::Linear(l) | Self::AsinSin(l) => *l,
            Self::Custom(c) => c.lambda,
        }
    }

    /// `f(π/2)`, the supremum of outgoing angles.
    pub fn f_half_pi(&self) -> f64 {
        match self {
            Self::Linear(l) => l * FRAC_PI_2,
            Self::AsinSin(l) => l.asin(),
            Self::Custom(c) => (c.f)(FRAC_PI_2),
        }
    }

    /// `sin f(θ) / sin θ`, continued by `f′(0)` at `θ = 0`.
    pub fn transverse_factor(&self, theta: f64) -> f64 {
        if theta < SMALL_ANGLE {
            return self.df(0.0);
        }
        match self {
            Self::AsinSin(l) => *l,
            _ => self.f(theta).sin() / theta.sin(),
        }
    }

    /// `sup_θ max(|f′(θ)|, sin f(θ)/sin θ)`, the operator norm bound of `DC_η`.
    ///
    /// For the linear law this is `sin(λπ/2)`, which exceeds `λ` when
    /// `0 < λ < 1`.
    pub fn contraction_bound(&self) -> f64 {
        match self {
            Self::Linear(l) => (l * FRAC_PI_2).sin().max(*l),
            Self::AsinSin(l) => *l,
            Self::Custom(c) => c.contraction,
        }
    }

    pub fn is_contracting(&self) -> bool {
        self.lambda() < 1.0
    }

    pub fn is_slap(&self) -> bool {
        matches!(self, Self::Linear(l) if *l == 0.0)
    }

    pub fn label(&self) -> String {
        match self {
            Self::Linear(l) => format!("linear:{l}"),
            Self::AsinSin(l) => format!("custom:asin-sin:{l}"),
            Self::Custom(c) => format!("custom:{}", c.name),
        }
    }
}

impl fmt::Display for ReflectionLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Parses `linear:LAMBDA` or `custom:asin-sin:LAMBDA`.
impl FromStr for ReflectionLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad law parameter {x:?}")))
        };
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["linear", l] => Self::linear(parse(l)?),
            ["custom", "asin-sin", l] => Self::asin_sin(parse(l)?),
            _ => Err(Error::invalid(format!(
                "unknown law {s:?}; expected linear:LAMBDA or custom:asin-sin:LAMBDA"
            ))),
        }
    }
}

/// `C_η(v)`: the unit vector in `span{v, η}` on the side of `v` making angle
/// `f(∠(v, η))` with `η`.
pub fn apply_law(law: &ReflectionLaw, eta: &Vector, v: &Vector) -> Result<Vector> {
    let c = v.dot(eta);
    if !(c > 0.0) {
        return Err(Error::invalid(format!("velocity must point into the face, <v,eta> = {c}")));
    }
    let perp = v - eta * c;
    let s = perp.norm();
    let theta = s.atan2(c);
    if theta < SMALL_ANGLE {
        return Ok(eta.clone());
    }
    let phi = law.f(theta);
    Ok(eta * phi.cos() + perp * (phi.sin() / s))
}

/// A point of the phase space: a face, a point on it and an inward velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub face: usize,
    #[serde(with = "vector_serde")]
    pub point: Vector,
    #[serde(with = "vector_serde")]
    pub velocity: Vector,
}

impl PhaseState {
    pub fn new(p: &Polytope, face: usize, point: Vector, velocity: Vector) -> Result<Self> {
        let x = Self {
            face,
            point,
            velocity,
        };
        x.validate(p)?;
        Ok(x)
    }

    /// Checks the point lies off the skeleton of its face and the velocity is
    /// a unit vector pointing into the polytope.
    pub fn validate(&self, p: &Polytope) -> Result<()> {
        if self.point.len() != p.dim() || self.velocity.len() != p.dim() {
            return Err(Error::DimensionMismatch {
                expected: p.dim(),
                got: self.point.len().min(self.velocity.len()),
            });
        }
        let dist = p.skeleton_distance(&self.point, self.face)?;
        if dist <= 0.0 {
            return Err(Error::HitSkeleton {
                face: self.face,
                distance: dist,
            });
        }
        if (self.velocity.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::invalid("velocity is not a unit vector"));
        }
        if !(self.velocity.dot(p.normal(self.face)) > 0.0) {
            return Err(Error::invalid("velocity does not point into the polytope"));
        }
        Ok(())
    }
}

/// Where a flight ends.
#[derive(Clone, Debug, PartialEq)]
pub struct Flight {
    pub face: usize,
    pub tau: f64,
    pub point: Vector,
}

/// Flies from `x` to the next face. `guard` is relative to the diameter.
pub fn flight(p: &Polytope, x: &PhaseState, guard: f64) -> Result<Flight> {
    let exit = first_exit(p.faces(), &x.point, &x.velocity, Some(x.face)).ok_or(Error::Escaped)?;
    let j = exit.face;
    let eta = p.normal(j);
    let s = x.velocity.dot(eta);
    if s.abs() < GRAZING_TOL {
        return Err(Error::Grazing(s.abs()));
    }
    let mut q = &x.point + &x.velocity * exit.tau;
    let off = p.slack(j, &q);
    q -= eta * off;
    let dist = ridge_distance(p.faces(), &q, j);
    if dist < guard * p.diameter() || exit.tau <= 0.0 {
        return Err(Error::HitSkeleton { face: j, distance: dist });
    }
    Ok(Flight {
        face: j,
        tau: exit.tau,
        point: q,
    })
}

/// Everything produced by one step, as needed by the cocycle.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: PhaseState,
    pub tau: f64,
    /// Incidence angle `arccos |⟨v, η_j⟩|`.
    pub theta: f64,
    /// The specular velocity `R_{η_j}(v)`.
    pub specular: Vector,
}

/// One step of `Φ_{f,P}` with all intermediate data.
pub fn advance(p: &Polytope, law: &ReflectionLaw, x: &PhaseState, guard: f64) -> Result<Transition> {
    let fl = flight(p, x, guard)?;
    let eta = p.normal(fl.face);
    let u = reflect_unchecked(&x.velocity, eta);
    let c = u.dot(eta);
    let theta = (&u - eta * c).norm().atan2(c);
    let v = apply_law(law, eta, &u)?;
    Ok(Transition {
        state: PhaseState {
            face: fl.face,
            point: fl.point,
            velocity: v,
        },
        tau: fl.tau,
        theta,
        specular: u,
    })
}

/// `Φ_{f,P}(x)` with the default skeleton guard.
pub fn step(p: &Polytope, law: &ReflectionLaw, x: &PhaseState) -> Result<PhaseState> {
    Ok(advance(p, law, x, SKELETON_GUARD)?.state)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    /// The flight producing state `step` hit the skeleton.
    HitSkeleton { step: usize },
    Grazing { step: usize },
}

/// A finite orbit `x_0, …, x_n`. `flight_times[j]` and `angles[j]` belong
/// to the step producing `states[j + 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub law: String,
    pub states: Vec<PhaseState>,
    pub flight_times: Vec<f64>,
    pub angles: Vec<f64>,
    pub termination: Termination,
    /// Number of velocity jitters applied to dodge the skeleton.
    #[serde(default)]
    pub jitters: usize,
}

impl OrbitRecord {
    /// Number of completed steps.
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn is_complete(&self) -> bool {
        self.termination == Termination::Completed
    }

    pub fn faces(&self) -> Vec<usize> {
        self.states.iter().map(|s| s.face).collect()
    }

    pub fn velocities(&self) -> Vec<Vector> {
        self.states.iter().map(|s| s.velocity.clone()).collect()
    }

    /// One row per state: step, face, point, velocity, τ, θ (the last two
    /// empty for the initial state).
    pub fn to_table(&self) -> Table {
        let d = self.states[0].point.len();
        let mut header = vec!["step".to_string(), "face".to_string()];
        header.extend((0..d).map(|i| format!("p{i}")));
        header.extend((0..d).map(|i| format!("v{i}")));
        header.push("tau".into());
        header.push("theta".into());
        let mut t = Table::new(header);
        for (k, s) in self.states.iter().enumerate() {
            let mut row = vec![k.to_string(), s.face.to_string()];
            row.extend(s.point.iter().map(|&x| fmt_f64(x)));
            row.extend(s.velocity.iter().map(|&x| fmt_f64(x)));
            if k == 0 {
                row.push(String::new());
                row.push(String::new());
            } else {
                row.push(fmt_f64(self.flight_times[k - 1]));
                row.push(fmt_f64(self.angles[k - 1]));
            }
            t.push(row);
        }
        t
    }

    pub fn to_csv(&self) -> String {
        self.to_table().to_csv()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterateOptions {
    /// Skeleton guard relative to the diameter.
    pub guard: f64,
    /// If set, a skeleton hit is retried with the velocity rotated by
    /// [`JITTER_ANGLE`] in a direction drawn from this seed.
    pub jitter_seed: Option<u64>,
    pub max_jitters_per_step: usize,
}

impl Default for IterateOptions {
    fn default() -> Self {
        Self {
            guard: SKELETON_GUARD,
            jitter_seed: None,
            max_jitters_per_step: 8,
        }
    }
}

/// Iterates up to `n_steps` steps, stopping at the first failure.
pub fn iterate(p: &Polytope, law: &ReflectionLaw, x0: &PhaseState, n_steps: usize, guard: f64) -> OrbitRecord {
    iterate_with(
        p,
        law,
        x0,
        n_steps,
        &IterateOptions {
            guard,
            ..IterateOptions::default()
        },
    )
}

pub fn iterate_with(
    p: &Polytope,
    law: &ReflectionLaw,
    x0: &PhaseState,
    n_steps: usize,
    opts: &IterateOptions,
) -> OrbitRecord {
    let mut rec = OrbitRecord {
        law: law.label(),
        states: Vec::with_capacity(n_steps + 1),
        flight_times: Vec::with_capacity(n_steps),
        angles: Vec::with_capacity(n_steps),
        termination: Termination::Completed,
        jitters: 0,
    };
    rec.states.push(x0.clone());
    let mut attempts = 0usize;
    while rec.states.len() <= n_steps {
        let k = rec.states.len();
        let cur = rec.states.last().expect("orbit is never empty");
        match advance(p, law, cur, opts.guard) {
            Ok(t) => {
                rec.flight_times.push(t.tau);
                rec.angles.push(t.theta);
                rec.states.push(t.state);
                attempts = 0;
            }
            Err(Error::HitSkeleton { .. }) => match opts.jitter_seed {
                Some(seed) if attempts < opts.max_jitters_per_step => {
                    let mut rng = sampling::stream(seed, (k * 64 + attempts) as u64);
                    let cur = rec.states.last_mut().expect("orbit is never empty");
                    cur.velocity = jitter(&cur.velocity, p.normal(cur.face), &mut rng);
                    rec.jitters += 1;
                    attempts += 1;
                }
                _ => {
                    rec.termination = Termination::HitSkeleton { step: k };
                    break;
                }
            },
            Err(_) => {
                rec.termination = Termination::Grazing { step: k };
                break;
            }
        }
    }
    rec
}

fn jitter<R: Rng + ?Sized>(v: &Vector, eta: &Vector, rng: &mut R) -> Vector {
    loop {
        let mut w = sampling::unit_vector(rng, v.len());
        w -= v * w.dot(v);
        if w.norm() < 1e-12 {
            continue;
        }
        let out = v * JITTER_ANGLE.cos() + w.normalize() * JITTER_ANGLE.sin();
        if out.dot(eta) > 0.0 {
            return out.normalize();
        }
    }
}

/// The slap map `Φ₀` from a point of face `face`: move along `η_face` to the
/// boundary. Hits on the skeleton return one image per face through the hit
/// point.
pub fn slap_step(p: &Polytope, face: usize, point: &Vector) -> Result<Vec<(usize, Vector)>> {
    if face >= p.n_faces() {
        return Err(Error::invalid(format!("no face {face}")));
    }
    if p.slack(face, point).abs() > p.tolerance() {
        return Err(Error::invalid("point is not on the face"));
    }
    let eta = p.normal(face);
    let exit = first_exit(p.faces(), point, eta, Some(face)).ok_or(Error::Escaped)?;
    let q = point + eta * exit.tau;
    let tol = SKELETON_GUARD * p.diameter();
    Ok((0..p.n_faces())
        .filter(|&j| j != face && p.slack(j, &q).abs() <= tol)
        .map(|j| {
            let snapped = &q - p.normal(j) * p.slack(j, &q);
            (j, snapped)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::simplex_family;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    #[test]
    fn law_parsing() {
        assert!(matches!("linear:0.5".parse::<ReflectionLaw>(), Ok(ReflectionLaw::Linear(l)) if l == 0.5));
        assert!(matches!(
            "custom:asin-sin:0.25".parse::<ReflectionLaw>(),
            Ok(ReflectionLaw::AsinSin(l)) if l == 0.25
        ));
        assert!("linear:1.5".parse::<ReflectionLaw>().is_err());
        assert!("quadratic:0.5".parse::<ReflectionLaw>().is_err());
        assert_eq!(ReflectionLaw::AsinSin(0.3).label(), "custom:asin-sin:0.3");
    }

    #[test]
    fn asin_sin_derivative_and_bounds() {
        let law = ReflectionLaw::AsinSin(0.7);
        for k in 1..100 {
            let t = k as f64 * 0.0157;
            let h = 1e-6;
            let fd = (law.f(t + h) - law.f(t - h)) / (2.0 * h);
            assert!((fd - law.df(t)).abs() < 1e-8);
            assert!(law.df(t) <= 0.7 + 1e-15);
            assert!((law.transverse_factor(t) - law.f(t).sin() / t.sin()).abs() < 1e-14);
        }
        let lin = ReflectionLaw::Linear(0.5);
        assert!((lin.contraction_bound() - (PI / 4.0).sin()).abs() < 1e-15);
    }

    #[test]
    fn law_examples() {
        let eta = v(&[0.0, 1.0]);
        assert_eq!(apply_law(&ReflectionLaw::Linear(0.5), &eta, &eta).unwrap(), eta);
        let w = v(&[0.6, 0.8]);
        let same = apply_law(&ReflectionLaw::specular(), &eta, &w).unwrap();
        assert!((same - &w).norm() < 1e-15);
        let t = PI / 3.0;
        let out = apply_law(&ReflectionLaw::Linear(0.5), &eta, &v(&[t.sin(), t.cos()])).unwrap();
        assert!((out - v(&[(PI / 6.0).sin(), (PI / 6.0).cos()])).norm() < 1e-15);
        assert!(apply_law(&ReflectionLaw::Linear(0.5), &eta, &v(&[1.0, 0.0])).is_err());
        assert!(apply_law(&ReflectionLaw::Linear(0.5), &eta, &v(&[0.0, -1.0])).is_err());
    }

    #[test]
    fn square_flights() {
        let sq = Polytope::hypercube(2, 1.0).unwrap();
        let x = PhaseState::new(&sq, 2, v(&[0.5, 0.0]), v(&[0.0, 1.0])).unwrap();
        let fl = flight(&sq, &x, SKELETON_GUARD).unwrap();
        assert_eq!(fl.face, 3);
        assert!((fl.tau - 1.0).abs() < 1e-15);
        assert!((fl.point - v(&[0.5, 1.0])).norm() < 1e-15);
        let corner = PhaseState::new(&sq, 2, v(&[0.5, 0.0]), v(&[0.5, 1.0]).normalize()).unwrap();
        assert!(matches!(flight(&sq, &corner, SKELETON_GUARD), Err(Error::HitSkeleton { .. })));
    }

    #[test]
    fn cube_face_to_face() {
        let cube = Polytope::hypercube(3, 2.0).unwrap();
        let x = PhaseState::new(&cube, 0, v(&[0.0, 1.0, 1.0]), v(&[1.0, 0.0, 0.0])).unwrap();
        let fl = flight(&cube, &x, SKELETON_GUARD).unwrap();
        assert_eq!(fl.face, 1);
        assert!((fl.tau - 2.0).abs() < 1e-15);
        assert!((fl.point - v(&[2.0, 1.0, 1.0])).norm() < 1e-15);
    }

    #[test]
    fn specular_square_diamond_is_four_periodic() {
        let sq = Polytope::hypercube(2, 1.0).unwrap();
        let x0 = PhaseState::new(&sq, 2, v(&[0.5, 0.0]), v(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2])).unwrap();
        // aimed at the midpoint of the right side, not a corner
        let rec = iterate(&sq, &ReflectionLaw::specular(), &x0, 12, SKELETON_GUARD);
        assert!(rec.is_complete());
        for k in 0..rec.steps() - 4 {
            let a = &rec.states[k];
            let b = &rec.states[k + 4];
            assert_eq!(a.face, b.face);
            assert!((&a.point - &b.point).norm() < 1e-12);
        }
    }

    #[test]
    fn slap_leaves_along_normal() {
        let p = simplex_family(3, 0.8).unwrap();
        let x = crate::sampling::sample_state(&p, 4, 3);
        let rec = iterate(&p, &ReflectionLaw::slap(), &x, 5, SKELETON_GUARD);
        for s in &rec.states[1..] {
            assert!((&s.velocity - p.normal(s.face)).norm() < 1e-15);
        }
    }

    #[test]
    fn outgoing_reflection_angle_bounded() {
        let p = simplex_family(3, 0.6).unwrap();
        let law = ReflectionLaw::Linear(0.5);
        let x = crate::sampling::sample_state(&p, 1, 0);
        let rec = iterate(&p, &law, &x, 200, SKELETON_GUARD);
        for s in &rec.states[1..] {
            let out = s.velocity.dot(p.normal(s.face)).clamp(-1.0, 1.0).acos();
            assert!(out <= law.f_half_pi() + 1e-12);
        }
    }

    #[test]
    fn zero_steps_keep_start() {
        let p = simplex_family(3, 0.6).unwrap();
        let x = crate::sampling::sample_state(&p, 1, 0);
        let rec = iterate(&p, &ReflectionLaw::Linear(0.3), &x, 0, SKELETON_GUARD);
        assert_eq!(rec.states, vec![x]);
        assert_eq!(rec.to_csv().lines().count(), 2);
    }

    #[test]
    fn cube_parallel_bounce() {
        let cube = Polytope::hypercube(3, 1.0).unwrap();
        let x0 = PhaseState::new(&cube, 0, v(&[0.0, 0.3, 0.6]), v(&[1.0, 0.0, 0.0])).unwrap();
        let rec = iterate(&cube, &ReflectionLaw::specular(), &x0, 6, SKELETON_GUARD);
        assert!(rec.is_complete());
        assert_eq!(rec.faces(), vec![0, 1, 0, 1, 0, 1, 0]);
        assert!(rec.flight_times.iter().all(|&t| (t - 1.0).abs() < 1e-15));
    }

    #[test]
    fn slap_images() {
        let sq = Polytope::hypercube(2, 1.0).unwrap();
        let img = slap_step(&sq, 0, &v(&[0.0, 0.5])).unwrap();
        assert_eq!(img.len(), 1);
        assert_eq!(img[0].0, 1);
        assert!((&img[0].1 - v(&[1.0, 0.5])).norm() < 1e-15);

        let p = simplex_family(3, 0.3).unwrap();
        let c0 = p.face_centroid(3);
        let img = slap_step(&p, 3, &c0).unwrap();
        assert_eq!(img.len(), 3);
        for (_, q) in &img {
            assert!((q - &p.vertices()[3].point).norm() < 1e-12);
        }
        let generic = &c0 * 0.9 + &p.vertices()[0].point * 0.06 + &p.vertices()[1].point * 0.04;
        assert_eq!(slap_step(&p, 3, &generic).unwrap().len(), 1);
    }

    #[test]
    fn jitter_mode_escapes_corner_hits() {
        let sq = Polytope::hypercube(2, 1.0).unwrap();
        let corner = PhaseState::new(&sq, 2, v(&[0.5, 0.0]), v(&[0.5, 1.0]).normalize()).unwrap();
        let plain = iterate(&sq, &ReflectionLaw::Linear(0.5), &corner, 10, SKELETON_GUARD);
        assert_eq!(plain.termination, Termination::HitSkeleton { step: 1 });
        let opts = IterateOptions {
            jitter_seed: Some(5),
            ..IterateOptions::default()
        };
        let rec = iterate_with(&sq, &ReflectionLaw::Linear(0.5), &corner, 10, &opts);
        assert!(rec.is_complete());
        assert!(rec.jitters >= 1);
    }
}
