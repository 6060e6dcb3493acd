//! Oracles and generators shared by the integration tests and the
//! acceptance harness. Nothing here calls the derivative code under test.
#![allow(dead_code)]

use nalgebra::DMatrix;
use polybill::billiard::{advance, PhaseState, ReflectionLaw};
use polybill::cocycle::JacobiFrame;
use polybill::geomkit::Vector;
use polybill::polytope::{simplex_family, Polytope};
use polybill::sampling::{self, sample_state};
use rand::Rng;
use rand_distr::StandardNormal;

/// Central-difference step for the derivative oracle.
pub const FD_STEP: f64 = 1e-5;
/// States whose next impact lies closer than this (times the diameter) to
/// the skeleton are skipped: the step map is only smooth away from it.
pub const FD_MARGIN: f64 = 1e-3;

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vector {
    Vector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// A simplex with Gaussian vertices, redrawn until reasonably fat.
pub fn random_simplex<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Polytope {
    loop {
        let pts: Vec<Vector> = (0..=d).map(|_| gaussian(rng, d)).collect();
        let m = DMatrix::from_columns(&pts[1..].iter().map(|p| p - &pts[0]).collect::<Vec<_>>());
        let sv = m.singular_values();
        if sv.min() > 0.2 * sv.max() {
            if let Ok(p) = Polytope::simplex(&pts) {
                return p;
            }
        }
    }
}

/// A mix of simplices, the simplex family, polygons and prisms.
pub fn random_polytope<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Polytope {
    match rng.random_range(0..3) {
        0 => random_simplex(rng, d),
        1 => simplex_family(d, rng.random_range(0.3..2.0)).unwrap(),
        _ if d == 2 => Polytope::regular_polygon(rng.random_range(3..9), 1.0).unwrap(),
        _ => {
            let base = random_simplex(rng, d - 1);
            Polytope::prism(&base, rng.random_range(0.5..2.0)).unwrap()
        }
    }
}

/// A sampled state whose next impact is well inside a face.
pub fn smooth_state(p: &Polytope, law: &ReflectionLaw, seed: u64) -> PhaseState {
    for i in 0.. {
        let x = sample_state(p, seed, i);
        if let Ok(t) = advance(p, law, &x, FD_MARGIN) {
            if advance(p, law, &t.state, 0.0).is_ok() {
                return x;
            }
        }
    }
    unreachable!()
}

/// Image of the line through `x` displaced by `Q ξ` with direction
/// `normalize(v + Q ξ′)`, in Jacobi coordinates of the unperturbed image.
fn perturbed_image(
    p: &Polytope,
    law: &ReflectionLaw,
    frame: &JacobiFrame,
    target: &PhaseState,
    tframe: &DMatrix<f64>,
    xi: &Vector,
    dxi: &Vector,
) -> Option<Vector> {
    let x = &frame.state;
    let q = frame.matrix();
    let eta = p.normal(x.face);
    let v = (&x.velocity + &q * dxi).normalize();
    let base = &x.point + &q * xi;
    let s = (p.offset(x.face) - base.dot(eta)) / v.dot(eta);
    let start = PhaseState {
        face: x.face,
        point: base + &v * s,
        velocity: v,
    };
    let t = advance(p, law, &start, 0.0).ok()?;
    if t.state.face != target.face {
        return None;
    }
    let qt = tframe.transpose();
    let j = &qt * (&t.state.point - &target.point);
    let dj = &qt * (&t.state.velocity - &target.velocity);
    let m = j.len();
    Some(Vector::from_iterator(2 * m, j.iter().chain(dj.iter()).copied()))
}

/// Central finite-difference Jacobian of one step in the frames `frame` and
/// `target_frame`.
pub fn fd_jacobian(
    p: &Polytope,
    law: &ReflectionLaw,
    frame: &JacobiFrame,
    target: &PhaseState,
    target_frame: &DMatrix<f64>,
) -> Option<DMatrix<f64>> {
    let m = p.dim() - 1;
    let mut jac = DMatrix::zeros(2 * m, 2 * m);
    for k in 0..2 * m {
        let mut cols = Vec::with_capacity(2);
        for sign in [1.0, -1.0] {
            let mut xi = Vector::zeros(m);
            let mut dxi = Vector::zeros(m);
            if k < m {
                xi[k] = sign * FD_STEP;
            } else {
                dxi[k - m] = sign * FD_STEP;
            }
            cols.push(perturbed_image(p, law, frame, target, target_frame, &xi, &dxi)?);
        }
        jac.set_column(k, &((&cols[0] - &cols[1]) / (2.0 * FD_STEP)));
    }
    Some(jac)
}

/// Escaping time straight from the definition: the least `k` such that
/// every `k` consecutive normals have full rank (SVD rank).
pub fn brute_force_escaping_time(normals: &[Vector], dim: usize) -> Option<usize> {
    (1..=normals.len()).find(|&k| normals.windows(k).all(|w| polybill::geomkit::rank(w) == dim))
}

/// Regular-simplex height of `Δ^d_h`, found by bisection on the apex-to-base
/// vertex distance computed from the vertex coordinates.
pub fn regular_height(d: usize) -> f64 {
    let edge = |h: f64| {
        let pts = polybill::polytope::simplex_family_vertices(d, h).unwrap();
        (&pts[d] - &pts[0]).norm() - (&pts[1] - &pts[0]).norm()
    };
    let (mut lo, mut hi) = (1e-3, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if edge(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    sampling::stream(seed, 0)
}
