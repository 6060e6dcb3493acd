//! Escaping times, cone escape certificates, the admissible region of the
//! simplex family, and sampled hyperbolicity verdicts.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::billiard::{apply_law, iterate, OrbitRecord, PhaseState, ReflectionLaw, SKELETON_GUARD};
use crate::cocycle::trace;
use crate::error::{Error, Result};
use crate::geomkit::{product_min_expansion, reflect, Vector, RANK_TOL};
use crate::io::{fmt_f64, Table};
use crate::polytope::{barycentric_angle, first_exit, simplex_family, ConeSpec, Polytope, Spanning};
use crate::sampling;

/// Cap on reflections simulated in a cone before giving up.
pub const MAX_CONE_REFLECTIONS: usize = 100_000;
/// `σ_empirical` must exceed `1` by this margin for a positive verdict.
pub const SIGMA_MARGIN: f64 = 1e-6;
/// Spanning angles at or below this count as zero.
pub const SPANNING_ZERO: f64 = 1e-12;

/// For each start `i`, the length of the shortest window `normals[i..i+m]`
/// of rank `dim`, or `None` if the suffix never reaches it.
pub fn generating_windows(normals: &[Vector], dim: usize) -> Vec<Option<usize>> {
    (0..normals.len())
        .map(|i| {
            let mut basis: Vec<Vector> = Vec::with_capacity(dim);
            for (m, n) in normals[i..].iter().enumerate() {
                let mut w = n.clone();
                // two passes of Gram–Schmidt
                for _ in 0..2 {
                    for b in &basis {
                        w -= b * b.dot(&w);
                    }
                }
                let r = w.norm();
                if r > RANK_TOL * n.norm() {
                    basis.push(w / r);
                    if basis.len() == dim {
                        return Some(m + 1);
                    }
                }
            }
            None
        })
        .collect()
}

/// Least `k ≤ normals.len()` such that every `k` consecutive normals span
/// `R^dim`; `None` if there is none.
pub fn escaping_time_of(normals: &[Vector], dim: usize) -> Option<usize> {
    let n = normals.len();
    let m = generating_windows(normals, dim);
    // prefix[t] = max over starts i ≤ t of the minimal window length
    let mut prefix = Vec::with_capacity(n);
    let mut worst = Some(0usize);
    for w in &m {
        worst = match (worst, w) {
            (Some(a), Some(b)) => Some(a.max(*b)),
            _ => None,
        };
        prefix.push(worst);
    }
    (1..=n).find(|&k| prefix[n - k].is_some_and(|w| w <= k))
}

/// Escaping time `T` observed on a finite horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EscapingTime {
    Finite(usize),
    /// No `k` up to the given horizon works.
    Exceeds(usize),
}

impl EscapingTime {
    pub fn finite(self) -> Option<usize> {
        match self {
            Self::Finite(t) => Some(t),
            Self::Exceeds(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EscapeReport {
    pub time: EscapingTime,
    /// The orbit stopped before the horizon; `time` refers to the prefix.
    pub truncated: bool,
    pub steps: usize,
}

pub fn orbit_normals(p: &Polytope, orbit: &OrbitRecord) -> Vec<Vector> {
    orbit.states.iter().map(|s| p.normal(s.face).clone()).collect()
}

/// Escaping time of a recorded orbit, with windows of length at most `horizon`.
pub fn escaping_time_of_orbit(p: &Polytope, orbit: &OrbitRecord, horizon: usize) -> EscapeReport {
    let normals = orbit_normals(p, orbit);
    let time = match escaping_time_of(&normals, p.dim()) {
        Some(t) if t <= horizon => EscapingTime::Finite(t),
        _ => EscapingTime::Exceeds(horizon),
    };
    EscapeReport {
        time,
        truncated: orbit.steps() < horizon,
        steps: orbit.steps(),
    }
}

/// `T(x)` over `horizon` steps of the orbit of `x`.
pub fn escaping_time(p: &Polytope, law: &ReflectionLaw, x: &PhaseState, horizon: usize) -> EscapeReport {
    let rec = iterate(p, law, x, horizon, SKELETON_GUARD);
    escaping_time_of_orbit(p, &rec, horizon)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Generating {
    pub generating: bool,
    /// Start of the first `k`-window that does not span.
    pub first_failure: Option<usize>,
}

/// Whether every `k` consecutive normals of the orbit span `R^d`.
pub fn is_k_generating(p: &Polytope, orbit: &OrbitRecord, k: usize) -> Result<Generating> {
    let n = orbit.states.len();
    if k == 0 || n < k {
        return Err(Error::InsufficientData(format!("orbit has {n} states, window {k}")));
    }
    let m = generating_windows(&orbit_normals(p, orbit), p.dim());
    let first_failure = (0..=n - k).find(|&i| m[i].is_none_or(|w| w > k));
    Ok(Generating {
        generating: first_failure.is_none(),
        first_failure,
    })
}

/// Quantities of the zigzag escape theorem for one cone and law.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EscapeCertificate {
    pub dim: usize,
    pub law: String,
    /// Barycentric angle of the cone.
    pub phi: f64,
    /// `φ + (f(π/2) − π/2)/2`.
    pub mu: f64,
    /// `2 / sin μ`, the bound on the zigzag length.
    pub zigzag_bound: f64,
    /// `2cos((f(π/2) + π/2)/2)`, the least velocity increment per reflection.
    pub step_lower_bound: f64,
    /// `⌈zigzag_bound / step_lower_bound⌉`.
    pub reflection_bound: Option<u64>,
    pub valid: bool,
}

pub fn cone_certificate(cone: &ConeSpec, law: &ReflectionLaw) -> Result<EscapeCertificate> {
    let phi = barycentric_angle(cone)?;
    let fh = law.f_half_pi();
    let mu = phi + (fh - FRAC_PI_2) / 2.0;
    let valid = mu > 0.0;
    let step_lower_bound = 2.0 * ((fh + FRAC_PI_2) / 2.0).cos();
    let zigzag_bound = if valid { 2.0 / mu.sin() } else { f64::INFINITY };
    let reflection_bound = (valid && step_lower_bound > 0.0)
        .then(|| (zigzag_bound / step_lower_bound).ceil())
        .filter(|b| b.is_finite() && *b < u64::MAX as f64)
        .map(|b| b as u64);
    Ok(EscapeCertificate {
        dim: cone.dim(),
        law: law.label(),
        phi,
        mu,
        zigzag_bound,
        step_lower_bound,
        reflection_bound,
        valid,
    })
}

/// A billiard trajectory inside a cone, followed until it stops reflecting.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConeOrbit {
    pub reflections: usize,
    /// `Σ ‖v_{k+1} − v_k‖`.
    pub zigzag: f64,
    /// Whether the trajectory left (no face ahead) within the cap.
    pub escaped: bool,
    /// Largest deviation from `‖v_{k+1} − v_k‖ = 2cos((f(θ_k) + θ_k)/2)`.
    pub identity_error: f64,
}

pub fn cone_orbit(cone: &ConeSpec, law: &ReflectionLaw, point: &Vector, velocity: &Vector) -> Result<ConeOrbit> {
    let faces = cone.faces();
    let mut p = point.clone();
    let mut v = velocity.normalize();
    let mut skip = None;
    let mut out = ConeOrbit {
        reflections: 0,
        zigzag: 0.0,
        escaped: false,
        identity_error: 0.0,
    };
    while out.reflections < MAX_CONE_REFLECTIONS {
        let Some(exit) = first_exit(&faces, &p, &v, skip) else {
            out.escaped = true;
            return Ok(out);
        };
        let eta = &faces[exit.face].normal;
        p += &v * exit.tau;
        let u = reflect(&v, eta)?;
        let c = u.dot(eta);
        let theta = (&u - eta * c).norm().atan2(c);
        let next = apply_law(law, eta, &u)?;
        let inc = (&next - &v).norm();
        let expect = 2.0 * ((law.f(theta) + theta) / 2.0).cos();
        out.identity_error = out.identity_error.max((inc - expect).abs());
        out.zigzag += inc;
        out.reflections += 1;
        v = next;
        skip = Some(exit.face);
    }
    Ok(out)
}

/// A random interior point of the cone (unit-scale slacks) and a uniform
/// direction.
pub fn random_cone_start<R: Rng + ?Sized>(cone: &ConeSpec, rng: &mut R) -> Result<(Vector, Vector)> {
    let d = cone.dim();
    let n = DMatrix::from_fn(d, d, |r, c| cone.normals()[r][c]);
    let s = Vector::from_iterator(d, (0..d).map(|_| rng.random::<f64>() + 1e-3));
    let x = n.lu().solve(&s).ok_or(Error::DegenerateCone)?;
    Ok((cone.apex() + x, sampling::unit_vector(rng, d)))
}

/// `Σ ‖v_{k+1} − v_k‖` over the recorded velocities.
pub fn zigzag_length(orbit: &OrbitRecord) -> f64 {
    orbit
        .states
        .windows(2)
        .map(|w| (&w[1].velocity - &w[0].velocity).norm())
        .sum()
}

/// Largest deviation of the recorded increments from `2cos((f(θ)+θ)/2)`.
pub fn zigzag_identity_error(law: &ReflectionLaw, orbit: &OrbitRecord) -> f64 {
    orbit
        .states
        .windows(2)
        .zip(&orbit.angles)
        .map(|(w, &th)| {
            let inc = (&w[1].velocity - &w[0].velocity).norm();
            (inc - 2.0 * ((law.f(th) + th) / 2.0).cos()).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lambda0Point {
    pub h: f64,
    pub lambda0: f64,
    /// Barycentric angle at the base vertices (their minimum).
    pub phi1: f64,
    /// Barycentric angle at the apex.
    pub phi2: f64,
    /// Spread of the base-vertex angles; zero up to rounding by symmetry.
    pub base_spread: f64,
}

/// `λ₀(h) = 1 − 4 min{φ1, φ2}/π` for `Δ^d_h`.
pub fn lambda0_point(d: usize, h: f64) -> Result<Lambda0Point> {
    let p = simplex_family(d, h)?;
    let base: Vec<f64> = (0..d)
        .map(|k| barycentric_angle(&p.vertex_cone(k)?))
        .collect::<Result<_>>()?;
    let phi2 = barycentric_angle(&p.vertex_cone(d)?)?;
    let phi1 = base.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = base.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Lambda0Point {
        h,
        lambda0: 1.0 - 4.0 * phi1.min(phi2) / PI,
        phi1,
        phi2,
        base_spread: hi - phi1,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lambda0Curve {
    pub d: usize,
    pub points: Vec<Lambda0Point>,
    /// The grid point minimising `λ₀`.
    pub tip: Option<Lambda0Point>,
}

impl Lambda0Curve {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["h", "lambda0", "phi1", "phi2"]);
        for p in &self.points {
            t.push(vec![fmt_f64(p.h), fmt_f64(p.lambda0), fmt_f64(p.phi1), fmt_f64(p.phi2)]);
        }
        t
    }
}

pub fn lambda0_curve(d: usize, h_grid: &[f64]) -> Result<Lambda0Curve> {
    let points: Vec<Lambda0Point> = h_grid.iter().map(|&h| lambda0_point(d, h)).collect::<Result<_>>()?;
    let tip = points.iter().min_by(|a, b| a.lambda0.total_cmp(&b.lambda0)).cloned();
    Ok(Lambda0Curve { d, points, tip })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingConfig {
    pub seed: u64,
    pub orbits: usize,
    pub steps: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            orbits: 1000,
            steps: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VertexCertificate {
    pub vertex: usize,
    /// `None` when the vertex is degenerate.
    pub certificate: Option<EscapeCertificate>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EscapeStats {
    pub max: Option<usize>,
    pub histogram: BTreeMap<usize, usize>,
    /// Orbits stopped early without a finite escaping time.
    pub unresolved: usize,
    /// Orbits that stopped early (hit the skeleton or grazed).
    pub truncated: usize,
    /// Full-length orbits whose escaping time exceeds the horizon.
    pub exceeded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// A `d`-subset of faces with dependent (e.g. parallel) normals.
    DependentNormals { faces: Vec<usize>, epsilon: f64 },
    /// A sampled orbit that never generated within the horizon.
    UnboundedEscape { sample: usize, start: PhaseState },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classification {
    UniformlyHyperbolicEvidence,
    Inconclusive { reason: String },
    ObstructionFound { witness: Witness },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub polytope: String,
    pub law: String,
    pub spanning: Spanning,
    pub certificates: Vec<VertexCertificate>,
    pub escape: EscapeStats,
    /// `min 𝔪(L_{[i, i+2T_max]})` over sampled windows.
    pub sigma_empirical: Option<f64>,
    pub windows: usize,
    pub classification: Classification,
}

struct Sample {
    report: EscapeReport,
    start: PhaseState,
    a_blocks: Vec<DMatrix<f64>>,
}

/// Smallest expansion of the velocity flow over all windows of `len` steps.
pub fn min_window_expansion(a_blocks: &[DMatrix<f64>], len: usize) -> Option<(f64, usize)> {
    if len == 0 || a_blocks.len() < len {
        return None;
    }
    let mut best = f64::INFINITY;
    let mut count = 0;
    for w in a_blocks.windows(len) {
        best = best.min(product_min_expansion(w));
        count += 1;
    }
    Some((best, count))
}

/// Samples orbits, escaping times and window expansions and classifies the
/// billiard. Results do not depend on the number of worker threads.
pub fn verdict(p: &Polytope, name: &str, law: &ReflectionLaw, cfg: &SamplingConfig) -> Verdict {
    let spanning = p.spanning_epsilon();
    let certificates = (0..p.vertices().len())
        .map(|k| VertexCertificate {
            vertex: k,
            certificate: p.vertex_cone(k).ok().and_then(|c| cone_certificate(&c, law).ok()),
        })
        .collect();

    let samples: Vec<Sample> = (0..cfg.orbits)
        .into_par_iter()
        .map(|i| {
            let start = sampling::sample_state(p, cfg.seed, i as u64);
            let tr = trace(p, law, &start, cfg.steps, SKELETON_GUARD);
            let report = escaping_time_of_orbit(p, &tr.orbit, cfg.steps);
            Sample {
                report,
                start,
                a_blocks: tr.steps.into_iter().map(|s| s.a).collect(),
            }
        })
        .collect();

    let mut escape = EscapeStats::default();
    let mut exceeded_witness = None;
    for (i, s) in samples.iter().enumerate() {
        if s.report.truncated {
            escape.truncated += 1;
        }
        match s.report.time {
            EscapingTime::Finite(t) => {
                *escape.histogram.entry(t).or_insert(0) += 1;
                escape.max = Some(escape.max.map_or(t, |m| m.max(t)));
            }
            EscapingTime::Exceeds(_) if s.report.truncated => escape.unresolved += 1,
            EscapingTime::Exceeds(_) => {
                escape.exceeded += 1;
                exceeded_witness.get_or_insert_with(|| Witness::UnboundedEscape {
                    sample: i,
                    start: s.start.clone(),
                });
            }
        }
    }

    let (sigma_empirical, windows) = match escape.max {
        Some(t) => {
            let per: Vec<Option<(f64, usize)>> = samples
                .par_iter()
                .filter(|s| s.report.time.finite().is_some())
                .map(|s| min_window_expansion(&s.a_blocks, 2 * t))
                .collect();
            let windows = per.iter().flatten().map(|x| x.1).sum::<usize>();
            let sigma = per.iter().flatten().map(|x| x.0).reduce(f64::min);
            (sigma, windows)
        }
        None => (None, 0),
    };

    let classification = if spanning.epsilon <= SPANNING_ZERO {
        Classification::ObstructionFound {
            witness: Witness::DependentNormals {
                faces: spanning.faces.clone(),
                epsilon: spanning.epsilon,
            },
        }
    } else if let Some(w) = exceeded_witness {
        Classification::ObstructionFound { witness: w }
    } else if escape.unresolved > 0 {
        Classification::Inconclusive {
            reason: format!("{} orbits stopped before generating", escape.unresolved),
        }
    } else {
        match sigma_empirical {
            Some(s) if s > 1.0 + SIGMA_MARGIN => Classification::UniformlyHyperbolicEvidence,
            Some(s) => Classification::Inconclusive {
                reason: format!("sigma_empirical = {s} does not exceed 1"),
            },
            None => Classification::Inconclusive {
                reason: "no window of length 2 T_max was sampled".into(),
            },
        }
    };

    Verdict {
        polytope: name.to_string(),
        law: law.label(),
        spanning,
        certificates,
        escape,
        sigma_empirical,
        windows,
        classification,
    }
}
