//! The derivative of the billiard map in Jacobi coordinates.
//!
//! A tangent vector at `(p, v)` is a pair `(J, J′)` in `v⊥ × v⊥`: the
//! transversal displacement of the line and the change of direction. In
//! these coordinates one step acts as the block upper triangular matrix
//! `[[A, τA], [0, C]]`, where `A = P_{v′⊥} ∘ P_{v,η⊥}` is the velocity tangent
//! flow and `C = DC_η ∘ R_η` is the derivative of the reflection law.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::billiard::{advance, OrbitRecord, PhaseState, ReflectionLaw, Termination, SMALL_ANGLE};
use crate::error::{Error, Result};
use crate::geomkit::{
    grassmann_angle, max_expansion, orthonormalize, product_min_expansion, singular_values, unit_vector, Frame, Vector,
};
use crate::io::{fmt_f64, Table};
use crate::polytope::Polytope;

/// Steps between QR re-orthonormalizations in [`lyapunov_spectrum`].
pub const REORTHO_INTERVAL: usize = 10;
/// Tolerance on `V = N` in exact collinearity mode (`δ = 0`).
pub const EXACT_ANGLE: f64 = 1e-9;
/// Coplanarity tolerance in [`alpha_beta`].
pub const COPLANAR_TOL: f64 = 1e-10;

/// An orthonormal basis of `v⊥` at a phase state.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobiFrame {
    pub state: PhaseState,
    basis: Vec<Vector>,
}

impl JacobiFrame {
    /// The canonical frame: `P_{v⊥} e_1, …, P_{v⊥} e_d` orthonormalized.
    pub fn initial(state: PhaseState) -> Self {
        let basis = complete(&state.velocity, &[]);
        Self { state, basis }
    }

    /// The frame at `next` obtained by projecting this basis onto the new
    /// `v⊥`, topping up with coordinate axes and re-orthonormalizing.
    pub fn transported(&self, next: PhaseState) -> Self {
        let basis = complete(&next.velocity, &self.basis);
        Self { state: next, basis }
    }

    pub fn basis(&self) -> &[Vector] {
        &self.basis
    }

    /// `d × (d−1)` matrix with the basis as columns.
    pub fn matrix(&self) -> DMatrix<f64> {
        let d = self.state.velocity.len();
        DMatrix::from_fn(d, self.basis.len(), |r, c| self.basis[c][r])
    }

    /// Coordinates of a vector of `v⊥`.
    pub fn coords(&self, w: &Vector) -> Vector {
        Vector::from_iterator(self.basis.len(), self.basis.iter().map(|b| b.dot(w)))
    }

    pub fn embed(&self, y: &Vector) -> Vector {
        let mut w = Vector::zeros(self.state.velocity.len());
        for (b, c) in self.basis.iter().zip(y.iter()) {
            w.axpy(*c, b, 1.0);
        }
        w
    }
}

fn complete(v: &Vector, seed: &[Vector]) -> Vec<Vector> {
    let d = v.len();
    // v goes through the two-pass Gram–Schmidt too: a seed vector nearly
    // parallel to v would otherwise keep an O(u / |rejection|) v-component
    let mut cand = vec![v.clone()];
    cand.extend(seed.iter().cloned());
    cand.extend((0..d).map(|i| unit_vector(d, i)));
    let f = orthonormalize(d, &cand);
    f.basis()[1..].to_vec()
}

/// The derivative of one step in Jacobi coordinates.
#[derive(Clone, Debug)]
pub struct CocycleStep {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub tau: f64,
    pub theta: f64,
    /// Face of the target state.
    pub face: usize,
    pub source: JacobiFrame,
    pub target: JacobiFrame,
}

impl CocycleStep {
    /// The full `2(d−1)` square matrix `[[A, B], [0, C]]`.
    pub fn block(&self) -> DMatrix<f64> {
        let m = self.a.nrows();
        let mut out = DMatrix::zeros(2 * m, 2 * m);
        out.view_mut((0, 0), (m, m)).copy_from(&self.a);
        out.view_mut((0, m), (m, m)).copy_from(&self.b);
        out.view_mut((m, m), (m, m)).copy_from(&self.c);
        out
    }
}

/// [`CocycleStep`] at `x` in its canonical frame.
pub fn dstep(p: &Polytope, law: &ReflectionLaw, x: &PhaseState) -> Result<CocycleStep> {
    dstep_in(p, law, &JacobiFrame::initial(x.clone()), crate::billiard::SKELETON_GUARD)
}

/// One step from `frame.state`, expressed in `frame` and its transport.
pub fn dstep_in(p: &Polytope, law: &ReflectionLaw, frame: &JacobiFrame, guard: f64) -> Result<CocycleStep> {
    let t = advance(p, law, &frame.state, guard)?;
    let eta = p.normal(t.state.face).clone();
    let target = frame.transported(t.state);
    Ok(derivative(law, frame, target, &eta, &t.specular, t.tau, t.theta))
}

fn derivative(
    law: &ReflectionLaw,
    source: &JacobiFrame,
    target: JacobiFrame,
    eta: &Vector,
    u: &Vector,
    tau: f64,
    theta: f64,
) -> CocycleStep {
    let v = &source.state.velocity;
    let vn = v.dot(eta);
    let q = source.basis();
    let qt = target.matrix().transpose();
    let m = q.len();

    // tangential direction of u in the plane span{u, η}
    let perp = u - eta * u.dot(eta);
    let small = theta < SMALL_ANGLE || perp.norm() == 0.0;
    let t_dir = if small { Vector::zeros(v.len()) } else { perp.normalize() };
    let (st, ct) = theta.sin_cos();
    let phi = law.f(theta);
    let (sf, cf) = phi.sin_cos();
    let e_theta = eta * -st + &t_dir * ct;
    let e_phi = eta * -sf + &t_dir * cf;
    let df = law.df(theta);
    let side = law.transverse_factor(theta);

    let mut pa = DMatrix::zeros(v.len(), m);
    let mut pc = DMatrix::zeros(v.len(), m);
    for (k, w) in q.iter().enumerate() {
        // projection onto η⊥ along v
        let a = w - v * (w.dot(eta) / vn);
        pa.set_column(k, &a);
        let r = w - eta * (2.0 * w.dot(eta));
        let c = if small {
            (&r - eta * r.dot(eta)) * law.df(0.0)
        } else {
            let s = r.dot(&e_theta);
            &e_phi * (df * s) + (&r - &e_theta * s) * side
        };
        pc.set_column(k, &c);
    }
    let a = &qt * pa;
    CocycleStep {
        b: &a * tau,
        a,
        c: &qt * pc,
        tau,
        theta,
        face: target.state.face,
        source: source.clone(),
        target,
    }
}

/// An orbit together with its derivative cocycle.
#[derive(Clone, Debug)]
pub struct Trace {
    pub orbit: OrbitRecord,
    pub steps: Vec<CocycleStep>,
}

/// Iterates `n_steps` from `x0`, recording the cocycle in transported frames.
pub fn trace(p: &Polytope, law: &ReflectionLaw, x0: &PhaseState, n_steps: usize, guard: f64) -> Trace {
    let mut orbit = OrbitRecord {
        law: law.label(),
        states: vec![x0.clone()],
        flight_times: Vec::with_capacity(n_steps),
        angles: Vec::with_capacity(n_steps),
        termination: Termination::Completed,
        jitters: 0,
    };
    let mut steps = Vec::with_capacity(n_steps);
    let mut frame = JacobiFrame::initial(x0.clone());
    for k in 1..=n_steps {
        match dstep_in(p, law, &frame, guard) {
            Ok(s) => {
                orbit.flight_times.push(s.tau);
                orbit.angles.push(s.theta);
                orbit.states.push(s.target.state.clone());
                frame = s.target.clone();
                steps.push(s);
            }
            Err(Error::HitSkeleton { .. }) => {
                orbit.termination = Termination::HitSkeleton { step: k };
                break;
            }
            Err(_) => {
                orbit.termination = Termination::Grazing { step: k };
                break;
            }
        }
    }
    Trace { orbit, steps }
}

/// Recomputes the cocycle along a recorded orbit. Fails if the record is
/// not reproduced by the map.
pub fn cocycle_along(p: &Polytope, law: &ReflectionLaw, orbit: &OrbitRecord) -> Result<Vec<CocycleStep>> {
    let mut frame = JacobiFrame::initial(orbit.states[0].clone());
    let mut out = Vec::with_capacity(orbit.steps());
    let tol = 1e-8 * p.diameter().max(1.0);
    for (k, next) in orbit.states.iter().enumerate().skip(1) {
        let t = advance(p, law, &frame.state, 0.0)?;
        if t.state.face != next.face
            || (&t.state.point - &next.point).norm() > tol
            || (&t.state.velocity - &next.velocity).norm() > 1e-8
        {
            return Err(Error::invalid(format!("orbit record diverges from the map at step {k}")));
        }
        let eta = p.normal(next.face).clone();
        let target = frame.transported(next.clone());
        let s = derivative(law, &frame, target, &eta, &t.specular, t.tau, t.theta);
        frame = s.target.clone();
        out.push(s);
    }
    Ok(out)
}

/// `L_{[i,j]} = A_{j−1} ⋯ A_i` in frame coordinates, mapping `v_i⊥ → v_j⊥`.
pub fn velocity_flow(steps: &[CocycleStep], i: usize, j: usize) -> Result<DMatrix<f64>> {
    let m = steps
        .first()
        .map(|s| s.a.nrows())
        .ok_or_else(|| Error::invalid("no cocycle steps"))?;
    if i > j || j > steps.len() {
        return Err(Error::invalid(format!("interval [{i}, {j}] outside 0..={}", steps.len())));
    }
    let mut l = DMatrix::identity(m, m);
    for s in &steps[i..j] {
        l = &s.a * l;
    }
    Ok(l)
}

/// `𝔪(L_{[i,j]})`, via [`product_min_expansion`].
pub fn velocity_flow_min_expansion(steps: &[CocycleStep], i: usize, j: usize) -> Result<f64> {
    velocity_flow(steps, i, j)?;
    let blocks: Vec<DMatrix<f64>> = steps[i..j].iter().map(|s| s.a.clone()).collect();
    Ok(product_min_expansion(&blocks))
}

/// [`velocity_flow`] as a `d × d` ambient matrix, zero on `v_i`.
pub fn velocity_flow_ambient(steps: &[CocycleStep], i: usize, j: usize) -> Result<DMatrix<f64>> {
    let l = velocity_flow(steps, i, j)?;
    let qi = frame_at(steps, i).matrix();
    let qj = frame_at(steps, j).matrix();
    Ok(qj * l * qi.transpose())
}

/// The frame at orbit index `k` (`0 ≤ k ≤ steps.len()`).
pub fn frame_at(steps: &[CocycleStep], k: usize) -> &JacobiFrame {
    if k == 0 {
        &steps[0].source
    } else {
        &steps[k - 1].target
    }
}

/// Per-step singular values of the `A` and `C` blocks.
pub fn singular_value_table(steps: &[CocycleStep]) -> Table {
    let m = steps.first().map_or(0, |s| s.a.nrows());
    let mut header = vec!["step".to_string(), "face".to_string(), "tau".to_string(), "theta".to_string()];
    header.extend((0..m).map(|k| format!("sigma_a{k}")));
    header.extend((0..m).map(|k| format!("sigma_c{k}")));
    let mut t = Table::new(header);
    for (k, s) in steps.iter().enumerate() {
        let mut row = vec![(k + 1).to_string(), s.face.to_string(), fmt_f64(s.tau), fmt_f64(s.theta)];
        row.extend(singular_values(&s.a).into_iter().map(fmt_f64));
        row.extend(singular_values(&s.c).into_iter().map(fmt_f64));
        t.push(row);
    }
    t
}

/// Operator-norm bound of the `C` blocks in dimension `dim`. In the plane
/// only the tangential factor `f′` survives.
pub fn block_contraction(law: &ReflectionLaw, dim: usize) -> f64 {
    if dim == 2 {
        law.lambda()
    } else {
        law.contraction_bound()
    }
}

/// The stable bundle `E^s = {(−H y, y)}` at the start of a cocycle.
#[derive(Clone, Debug)]
pub struct StableBundle {
    /// `H` from the truncated series.
    pub h: DMatrix<f64>,
    /// `H` from the backward graph transform over the same steps.
    pub graph_transform: DMatrix<f64>,
    pub truncation: usize,
    /// Bound on the norm of the discarded tail.
    pub tail_bound: f64,
    /// Operator norm of `A_0 H_0 − B_0 − H_1 C_0`, with `H_1` recomputed at
    /// the shifted start.
    pub invariance_residual: f64,
}

/// Partial sum `Σ_{j<n} A_0⁻¹⋯A_j⁻¹ B_j C_{j−1}⋯C_0`.
pub fn stable_series(steps: &[CocycleStep], n: usize) -> Result<DMatrix<f64>> {
    if steps.len() < n || n == 0 {
        return Err(Error::InsufficientData(format!("need {n} steps, have {}", steps.len())));
    }
    let m = steps[0].a.nrows();
    let mut h = DMatrix::zeros(m, m);
    let mut ainv = DMatrix::identity(m, m);
    let mut cprod = DMatrix::identity(m, m);
    for s in &steps[..n] {
        let inv = s.a.clone().try_inverse().ok_or_else(|| Error::NotApplicable("singular A block".into()))?;
        ainv *= inv;
        h += &ainv * &s.b * &cprod;
        cprod = &s.c * cprod;
    }
    Ok(h)
}

/// Backward recursion `H_n = 0`, `H_k = A_k⁻¹(B_k + H_{k+1} C_k)`.
pub fn stable_graph_transform(steps: &[CocycleStep], n: usize) -> Result<DMatrix<f64>> {
    if steps.len() < n || n == 0 {
        return Err(Error::InsufficientData(format!("need {n} steps, have {}", steps.len())));
    }
    let m = steps[0].a.nrows();
    let mut h = DMatrix::zeros(m, m);
    for s in steps[..n].iter().rev() {
        let inv = s.a.clone().try_inverse().ok_or_else(|| Error::NotApplicable("singular A block".into()))?;
        h = inv * (&s.b + h * &s.c);
    }
    Ok(h)
}

/// Needs `n + 1` steps: the extra one checks invariance at the shifted start.
pub fn stable_bundle(steps: &[CocycleStep], law: &ReflectionLaw, n: usize) -> Result<StableBundle> {
    if !law.is_contracting() {
        return Err(Error::NotApplicable(format!("law {law} is not contracting")));
    }
    if steps.len() < n + 1 || n == 0 {
        return Err(Error::InsufficientData(format!("need {} steps, have {}", n + 1, steps.len())));
    }
    let h = stable_series(steps, n)?;
    let graph_transform = stable_graph_transform(steps, n)?;
    let h1 = stable_series(&steps[1..], n)?;
    let s0 = &steps[0];
    let residual = max_expansion(&(&s0.a * &h - &s0.b - h1 * &s0.c));
    let dim = s0.source.state.velocity.len();
    let kappa = block_contraction(law, dim);
    let tau_max = steps.iter().map(|s| s.tau).fold(0.0, f64::max);
    let tail_bound = if kappa == 0.0 {
        0.0
    } else {
        tau_max * kappa.powi(n as i32) / (1.0 - kappa)
    };
    Ok(StableBundle {
        h,
        graph_transform,
        truncation: n,
        tail_bound,
        invariance_residual: residual,
    })
}

/// Lyapunov exponents per reflection, sorted in decreasing order.
#[derive(Clone, Debug, Serialize)]
pub struct LyapunovSpectrum {
    pub exponents: Vec<f64>,
    /// Half the discrepancy between first-half and second-half estimates.
    pub stderr: Vec<f64>,
    pub steps: usize,
    pub partial: bool,
    pub termination: Termination,
}

pub fn lyapunov_spectrum(p: &Polytope, law: &ReflectionLaw, x0: &PhaseState, n_steps: usize) -> LyapunovSpectrum {
    lyapunov_spectrum_with(p, law, x0, n_steps, REORTHO_INTERVAL)
}

pub fn lyapunov_spectrum_with(
    p: &Polytope,
    law: &ReflectionLaw,
    x0: &PhaseState,
    n_steps: usize,
    interval: usize,
) -> LyapunovSpectrum {
    let interval = interval.max(1);
    let m = 2 * (p.dim() - 1);
    let mut q = DMatrix::<f64>::identity(m, m);
    let mut frame = JacobiFrame::initial(x0.clone());
    // per-block log growth, stored so the run can be split in halves
    let mut blocks: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut pending = 0usize;
    let mut done = 0usize;
    let mut termination = Termination::Completed;
    let flush = |q: &mut DMatrix<f64>, len: usize, blocks: &mut Vec<(usize, Vec<f64>)>| {
        let qr = q.clone().qr();
        let r = qr.r();
        blocks.push((len, (0..m).map(|i| r[(i, i)].abs().ln()).collect()));
        *q = qr.q();
    };
    while done < n_steps {
        match dstep_in(p, law, &frame, crate::billiard::SKELETON_GUARD) {
            Ok(s) => {
                q = s.block() * q;
                frame = s.target;
                done += 1;
                pending += 1;
                if pending == interval {
                    flush(&mut q, pending, &mut blocks);
                    pending = 0;
                }
            }
            Err(Error::HitSkeleton { .. }) => {
                termination = Termination::HitSkeleton { step: done + 1 };
                break;
            }
            Err(_) => {
                termination = Termination::Grazing { step: done + 1 };
                break;
            }
        }
    }
    if pending > 0 {
        flush(&mut q, pending, &mut blocks);
    }
    let mean = |bl: &[(usize, Vec<f64>)]| -> Vec<f64> {
        let n: usize = bl.iter().map(|b| b.0).sum();
        (0..m)
            .map(|i| {
                if n == 0 {
                    return f64::NAN;
                }
                bl.iter().map(|b| b.1[i]).sum::<f64>() / n as f64
            })
            .collect()
    };
    let all = mean(&blocks);
    let half = blocks.len() / 2;
    let (first, second) = (mean(&blocks[..half]), mean(&blocks[half..]));
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let e = if first[i] == second[i] { 0.0 } else { (first[i] - second[i]).abs() / 2.0 };
            (all[i], if half == 0 { f64::NAN } else { e })
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    LyapunovSpectrum {
        exponents: pairs.iter().map(|p| p.0).collect(),
        stderr: pairs.iter().map(|p| p.1).collect(),
        steps: done,
        partial: done < n_steps,
        termination,
    }
}

/// Velocity and normal fronts over `[i, j]`.
#[derive(Clone, Debug)]
pub struct FrontPair {
    pub i: usize,
    pub j: usize,
    /// `V_{[i,j]} = span{v_i, …, v_j}`.
    pub velocity_front: Frame,
    /// `N_{[i,j]} = span{η_i, …, η_j}`.
    pub normal_front: Frame,
    /// `span{v_i} + N_{[i+1,j]}`.
    pub head_and_tail: Frame,
}

impl FrontPair {
    /// `V_{[i,j]} = span{v_i} + N_{[i+1,j]}`, compared by dimension and angle.
    pub fn decomposition_holds(&self) -> bool {
        self.velocity_front.dim() == self.head_and_tail.dim()
            && grassmann_angle(&self.velocity_front, &self.head_and_tail).is_ok_and(|a| a < 1e-8)
    }
}

pub fn fronts(p: &Polytope, orbit: &OrbitRecord, i: usize, j: usize) -> Result<FrontPair> {
    if i > j || j >= orbit.states.len() {
        return Err(Error::invalid(format!("interval [{i}, {j}] outside the record")));
    }
    let d = p.dim();
    let s = &orbit.states[i..=j];
    let vel: Vec<Vector> = s.iter().map(|x| x.velocity.clone()).collect();
    let nor: Vec<Vector> = s.iter().map(|x| p.normal(x.face).clone()).collect();
    let mut head = vec![vel[0].clone()];
    head.extend(nor[1..].iter().cloned());
    Ok(FrontPair {
        i,
        j,
        velocity_front: orthonormalize(d, &vel),
        normal_front: orthonormalize(d, &nor),
        head_and_tail: orthonormalize(d, &head),
    })
}

/// A reported δ-collinearity `[i, j]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Collinearity {
    pub i: usize,
    pub j: usize,
    /// Grassmann angle between the fronts.
    pub angle: f64,
    /// Common dimension of the fronts.
    pub dim: usize,
    /// Both fronts are the whole space.
    pub saturated: bool,
    /// No other reported interval lies strictly inside this one.
    pub minimal: bool,
}

/// All windows `[i, j]` with `j − i ≤ max_window` (default `4d`) whose fronts
/// have equal dimension and Grassmann angle `< δ`.
///
/// `δ = 0` selects exact mode: fronts must coincide to [`EXACT_ANGLE`], and
/// saturated windows (both fronts equal to `R^d`, which coincide for every
/// orbit) are not reported.
pub fn collinearity_scan(
    p: &Polytope,
    orbit: &OrbitRecord,
    delta: f64,
    max_window: Option<usize>,
) -> Result<Vec<Collinearity>> {
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&delta) {
        return Err(Error::invalid(format!("delta must lie in [0, pi/2), got {delta}")));
    }
    let d = p.dim();
    let w = max_window.unwrap_or(4 * d);
    let exact = delta == 0.0;
    let n = orbit.states.len();
    let mut found = Vec::new();
    for i in 0..n {
        let mut vel = Vec::new();
        let mut nor = Vec::new();
        for j in i..n.min(i + w + 1) {
            vel.push(orbit.states[j].velocity.clone());
            nor.push(p.normal(orbit.states[j].face).clone());
            let vf = orthonormalize(d, &vel);
            let nf = orthonormalize(d, &nor);
            if vf.dim() != nf.dim() {
                continue;
            }
            let saturated = vf.dim() == d;
            if exact && saturated {
                continue;
            }
            let angle = if saturated { 0.0 } else { grassmann_angle(&vf, &nf)? };
            let hit = if exact { angle <= EXACT_ANGLE } else { angle < delta };
            if hit {
                found.push(Collinearity {
                    i,
                    j,
                    angle,
                    dim: vf.dim(),
                    saturated,
                    minimal: true,
                });
            }
        }
    }
    let set: HashSet<(usize, usize)> = found.iter().map(|c| (c.i, c.j)).collect();
    for c in &mut found {
        c.minimal = !(c.i..=c.j).any(|a| (a..=c.j).any(|b| (a, b) != (c.i, c.j) && set.contains(&(a, b))));
    }
    Ok(found)
}

/// Solves `v_next = α η + β v_prev`. When `v_next = η` to machine precision
/// (the law returned the normal) or `v_prev ∥ η`, the decomposition is `(1, 0)`:
/// otherwise β would carry a rounding error of order `u / sin θ`.
pub fn alpha_beta(v_prev: &Vector, eta: &Vector, v_next: &Vector) -> Result<(f64, f64)> {
    for w in [v_prev, v_next] {
        if w.len() != eta.len() {
            return Err(Error::DimensionMismatch {
                expected: eta.len(),
                got: w.len(),
            });
        }
    }
    if (v_next - eta).amax() <= 4.0 * f64::EPSILON {
        return Ok((1.0, 0.0));
    }
    // orthonormal basis {η, e} of span{η, v_prev}
    let c = eta.dot(v_prev);
    let rest = v_prev - eta * c;
    let sn = rest.norm();
    if sn < 1e-14 {
        if (v_next - eta).norm() > COPLANAR_TOL.sqrt() {
            return Err(Error::invalid("v_prev is parallel to eta but v_next is not eta"));
        }
        return Ok((1.0, 0.0));
    }
    // second pass: `rest` loses orthogonality to η when v_prev is nearly normal
    let rest = &rest - eta * eta.dot(&rest);
    let e = &rest / rest.norm();
    let a1 = v_next.dot(eta);
    // a2 from the tangential part of v_next, which is small when v_next ≈ η
    let tangential = v_next - eta * a1;
    let a2 = tangential.dot(&e);
    let residual = (&tangential - &e * a2).norm();
    if residual > COPLANAR_TOL {
        return Err(Error::invalid(format!("vectors are not coplanar (residual {residual:e})")));
    }
    let beta = a2 / sn;
    let alpha = a1 - beta * c;
    Ok((alpha, beta))
}

/// `cos f(π/2) ≤ α < 2` and `0 ≤ β < 1`, with a `1e-12` allowance on the
/// closed ends.
pub fn alpha_beta_within_bounds(law: &ReflectionLaw, alpha: f64, beta: f64) -> bool {
    let lo = law.f_half_pi().cos();
    alpha >= lo - 1e-12 && alpha < 2.0 && beta >= -1e-12 && beta < 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::billiard::iterate;
    use crate::polytope::simplex_family;
    use crate::sampling::sample_state;

    fn state2(p: &Polytope, face: usize, point: [f64; 2], v: [f64; 2]) -> PhaseState {
        PhaseState::new(p, face, Vector::from_vec(point.to_vec()), Vector::from_vec(v.to_vec()).normalize()).unwrap()
    }

    #[test]
    fn frames_are_orthonormal_and_transversal() {
        let p = simplex_family(4, 0.8).unwrap();
        let x = sample_state(&p, 1, 3);
        let tr = trace(&p, &ReflectionLaw::linear(0.5).unwrap(), &x, 50, 1e-9);
        for s in &tr.steps {
            let q = s.target.matrix();
            let v = &s.target.state.velocity;
            assert!((q.transpose() * &q - DMatrix::identity(3, 3)).norm() < 1e-12);
            assert!((q.transpose() * v).norm() < 1e-12);
        }
    }

    #[test]
    fn a_block_spectrum() {
        let p = simplex_family(3, 0.6).unwrap();
        let law = ReflectionLaw::asin_sin(0.4).unwrap();
        let tr = trace(&p, &law, &sample_state(&p, 2, 0), 200, 1e-9);
        for s in &tr.steps {
            let sv = singular_values(&s.a);
            let big = law.f(s.theta).cos() / s.theta.cos();
            assert!((sv[0] - big).abs() < 1e-9, "{sv:?} vs {big}");
            assert!((sv[1] - 1.0).abs() < 1e-9);
            assert!((&s.b - &s.a * s.tau).norm() == 0.0);
            assert!(singular_values(&s.c)[0] <= law.lambda() + 1e-9);
        }
    }

    #[test]
    fn head_on_hit_gives_identity() {
        let p = Polytope::hypercube(2, 1.0).unwrap();
        let x = state2(&p, 2, [0.5, 0.0], [0.0, 1.0]);
        let s = dstep(&p, &ReflectionLaw::linear(0.5).unwrap(), &x).unwrap();
        // frames differ by the sign flip of v, so compare singular values
        assert!((singular_values(&s.a)[0] - 1.0).abs() < 1e-12);
        let amb = s.target.matrix() * &s.a * s.source.matrix().transpose();
        let w = Vector::from_vec(vec![1.0, 0.0]);
        assert!((amb * &w - &w).norm() < 1e-12);
    }

    #[test]
    fn fixed_subspace_of_a() {
        let p = simplex_family(4, 1.2).unwrap();
        let x = sample_state(&p, 5, 1);
        let s = dstep(&p, &ReflectionLaw::linear(0.3).unwrap(), &x).unwrap();
        let eta = p.normal(s.face);
        let amb = s.target.matrix() * &s.a * s.source.matrix().transpose();
        let v = &x.velocity;
        // a vector orthogonal to both v and η
        let f = orthonormalize(4, &[v.clone(), eta.clone()]).complement();
        for w in f.basis() {
            assert!((&amb * w - w).norm() < 1e-10);
        }
    }

    #[test]
    fn slap_bundle_is_tau_identity() {
        let p = simplex_family(3, 0.7).unwrap();
        let law = ReflectionLaw::slap();
        let tr = trace(&p, &law, &sample_state(&p, 3, 2), 6, 1e-9);
        let sb = stable_bundle(&tr.steps, &law, 4).unwrap();
        let expect = DMatrix::identity(2, 2) * tr.steps[0].tau;
        assert!((&sb.h - &expect).norm() < 1e-12);
        assert!(sb.invariance_residual < 1e-12);
    }

    #[test]
    fn series_matches_graph_transform() {
        let (p, _) = simplex_family(3, 0.9).unwrap().normalized();
        let law = ReflectionLaw::asin_sin(0.5).unwrap();
        let tr = trace(&p, &law, &sample_state(&p, 4, 7), 80, 1e-9);
        let a = stable_bundle(&tr.steps, &law, 30).unwrap();
        let b = stable_bundle(&tr.steps, &law, 60).unwrap();
        assert!((&a.h - &a.graph_transform).norm() < 1e-12);
        assert!(max_expansion(&(&a.h - &b.h)) <= a.tail_bound + 1e-14);
        assert!(a.invariance_residual <= 0.5f64.powi(30) + 1e-8);
        assert!(matches!(stable_bundle(&tr.steps, &ReflectionLaw::specular(), 10), Err(Error::NotApplicable(_))));
        assert!(matches!(stable_bundle(&tr.steps, &law, 80), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn velocity_flow_cocycle_and_expansion() {
        let p = simplex_family(3, 1.0).unwrap();
        let tr = trace(&p, &ReflectionLaw::linear(0.6).unwrap(), &sample_state(&p, 8, 0), 40, 1e-9);
        let s = &tr.steps;
        assert_eq!(velocity_flow(s, 3, 3).unwrap(), DMatrix::identity(2, 2));
        assert_eq!(velocity_flow(s, 3, 4).unwrap(), s[3].a);
        let l = velocity_flow(s, 0, 40).unwrap();
        let split = velocity_flow(s, 17, 40).unwrap() * velocity_flow(s, 0, 17).unwrap();
        assert!((&l - split).norm() <= 1e-9 * l.norm());
        for i in 0..40 {
            for j in i..=40 {
                assert!(velocity_flow_min_expansion(s, i, j).unwrap() >= 1.0 - 1e-9);
            }
        }
    }

    #[test]
    fn recomputed_cocycle_matches_trace() {
        let p = simplex_family(3, 0.5).unwrap();
        let law = ReflectionLaw::linear(0.5).unwrap();
        let x = sample_state(&p, 6, 4);
        let rec = iterate(&p, &law, &x, 30, 1e-9);
        let a = cocycle_along(&p, &law, &rec).unwrap();
        let b = trace(&p, &law, &x, 30, 1e-9).steps;
        for (s, t) in a.iter().zip(&b) {
            assert!((&s.a - &t.a).norm() < 1e-9 && (&s.c - &t.c).norm() < 1e-9);
        }
    }

    #[test]
    fn slap_spectrum_has_minus_infinity() {
        let p = simplex_family(3, 0.7).unwrap();
        let sp = lyapunov_spectrum(&p, &ReflectionLaw::slap(), &sample_state(&p, 1, 1), 40);
        assert_eq!(sp.exponents.len(), 4);
        assert_eq!(sp.exponents[3], f64::NEG_INFINITY);
        assert!(!sp.partial);
    }

    #[test]
    fn alpha_beta_cases() {
        let eta = Vector::from_vec(vec![0.0, 1.0]);
        assert_eq!(alpha_beta(&-&eta, &eta, &eta).unwrap(), (1.0, 0.0));
        // λ = 0.5, θ = π/3 on an incoming velocity
        let law = ReflectionLaw::linear(0.5).unwrap();
        let th = std::f64::consts::FRAC_PI_3;
        let v_prev = Vector::from_vec(vec![th.sin(), -th.cos()]);
        let u = crate::geomkit::reflect(&v_prev, &eta).unwrap();
        let v_next = crate::billiard::apply_law(&law, &eta, &u).unwrap();
        let (a, b) = alpha_beta(&v_prev, &eta, &v_next).unwrap();
        let f = law.f(th);
        assert!((a - (th + f).sin() / th.sin()).abs() < 1e-12);
        assert!((b - f.sin() / th.sin()).abs() < 1e-12);
        assert!(alpha_beta_within_bounds(&law, a, b));
        let v3 = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        let e3 = Vector::from_vec(vec![0.0, 1.0, 0.0]);
        let n3 = Vector::from_vec(vec![0.0, 0.0, 1.0]);
        assert!(alpha_beta(&v3, &e3, &n3).is_err());
    }

    #[test]
    fn single_window_fronts() {
        let p = simplex_family(3, 0.7).unwrap();
        let rec = iterate(&p, &ReflectionLaw::linear(0.5).unwrap(), &sample_state(&p, 2, 2), 20, 1e-9);
        let f = fronts(&p, &rec, 4, 4).unwrap();
        assert_eq!((f.velocity_front.dim(), f.normal_front.dim()), (1, 1));
        for i in 0..15 {
            assert!(fronts(&p, &rec, i, i + 5).unwrap().decomposition_holds());
        }
    }
}
