//! Subspace geometry in `R^d`: projections, reflections, principal angles,
//! and the `⊕` semigroup used by the composition expansion bound.
//!
//! Subspaces are always carried as orthonormal [`Frame`]s. Angles between
//! subspaces are read off the singular values of the restriction to one
//! subspace of the orthogonal projection onto the complement of the other,
//! with singular values clamped into `[0, 1]` before taking `asin`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;

/// Tolerance on `‖η‖ = 1` for vectors used as normals.
pub const UNIT_TOL: f64 = 1e-12;
/// Relative singular-value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-10;
/// Below this `|⟨v,η⟩|` a parallel projection is refused.
pub const GRAZING_TOL: f64 = 1e-12;

/// An ordered orthonormal basis of a linear subspace of `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    ambient_dim: usize,
    basis: Vec<Vector>,
}

impl Frame {
    pub fn empty(ambient_dim: usize) -> Self {
        Self {
            ambient_dim,
            basis: Vec::new(),
        }
    }

    /// Wraps an already orthonormal family, checking orthonormality to `1e-12`.
    pub fn from_orthonormal(ambient_dim: usize, basis: Vec<Vector>) -> Result<Self> {
        if basis.len() > ambient_dim {
            return Err(Error::invalid(format!(
                "{} basis vectors in R^{ambient_dim}",
                basis.len()
            )));
        }
        for (i, u) in basis.iter().enumerate() {
            if u.len() != ambient_dim {
                return Err(Error::DimensionMismatch {
                    expected: ambient_dim,
                    got: u.len(),
                });
            }
            for (j, w) in basis.iter().enumerate().take(i + 1) {
                let target = if i == j { 1.0 } else { 0.0 };
                if (u.dot(w) - target).abs() > UNIT_TOL {
                    return Err(Error::invalid("basis is not orthonormal"));
                }
            }
        }
        Ok(Self { ambient_dim, basis })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn basis(&self) -> &[Vector] {
        &self.basis
    }

    /// Basis vectors as the columns of a `d × k` matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        if self.basis.is_empty() {
            return DMatrix::zeros(self.ambient_dim, 0);
        }
        DMatrix::from_columns(&self.basis)
    }

    /// Orthogonal projection of `u` onto the span.
    pub fn project(&self, u: &Vector) -> Vector {
        let mut out = Vector::zeros(self.ambient_dim);
        for b in &self.basis {
            out.axpy(b.dot(u), b, 1.0);
        }
        out
    }

    /// Component of `u` orthogonal to the span.
    pub fn reject(&self, u: &Vector) -> Vector {
        u - self.project(u)
    }

    /// Orthonormal basis of the orthogonal complement.
    pub fn complement(&self) -> Frame {
        let mut vectors = self.basis.clone();
        for i in 0..self.ambient_dim {
            vectors.push(unit_vector(self.ambient_dim, i));
        }
        let full = orthonormalize(self.ambient_dim, &vectors);
        Frame {
            ambient_dim: self.ambient_dim,
            basis: full.basis[self.dim()..].to_vec(),
        }
    }

    /// Frame of `span(self) + span(extra)`, keeping this frame's basis as prefix.
    pub fn extended(&self, extra: &[Vector]) -> Frame {
        let mut vectors = self.basis.clone();
        vectors.extend_from_slice(extra);
        orthonormalize(self.ambient_dim, &vectors)
    }
}

/// `i`-th canonical basis vector of `R^d`.
pub fn unit_vector(dim: usize, i: usize) -> Vector {
    let mut e = Vector::zeros(dim);
    e[i] = 1.0;
    e
}

fn check_unit(eta: &Vector) -> Result<()> {
    let n = eta.norm();
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::invalid(format!("expected a unit vector, norm is {n}")));
    }
    Ok(())
}

fn check_same_len(a: &Vector, b: &Vector) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// `⟨u,η⟩ η`.
pub fn project_onto_normal(u: &Vector, eta: &Vector) -> Result<Vector> {
    check_same_len(u, eta)?;
    check_unit(eta)?;
    Ok(eta * u.dot(eta))
}

/// Reflection about the hyperplane `η⊥`: `u − 2⟨u,η⟩η`.
pub fn reflect(u: &Vector, eta: &Vector) -> Result<Vector> {
    check_same_len(u, eta)?;
    check_unit(eta)?;
    Ok(reflect_unchecked(u, eta))
}

#[inline]
pub(crate) fn reflect_unchecked(u: &Vector, eta: &Vector) -> Vector {
    u - eta * (2.0 * u.dot(eta))
}

/// Projection of `u` along `v` onto `η⊥`: `u − (⟨u,η⟩/⟨v,η⟩) v`.
pub fn parallel_project(u: &Vector, v: &Vector, eta: &Vector) -> Result<Vector> {
    check_same_len(u, eta)?;
    check_same_len(v, eta)?;
    check_unit(eta)?;
    let s = v.dot(eta);
    if s.abs() < GRAZING_TOL {
        return Err(Error::Grazing(s));
    }
    Ok(u - v * (u.dot(eta) / s))
}

/// Angle between two non-zero vectors.
pub fn angle_between(u: &Vector, v: &Vector) -> f64 {
    let nu = u.norm();
    let nv = v.norm();
    let c = u.dot(v) / (nu * nv);
    // atan2 form keeps accuracy near 0 and π
    let s = (u * nv - v * nu).norm() * (u * nv + v * nu).norm() / (2.0 * nu * nu * nv * nv);
    s.atan2(c)
}

/// `∠(w, E)`, the smallest angle between `w` and a non-zero vector of `E`.
pub fn angle_vec_subspace(w: &Vector, e: &Frame) -> Result<f64> {
    if w.len() != e.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: e.ambient_dim(),
            got: w.len(),
        });
    }
    if w.norm() == 0.0 {
        return Err(Error::invalid("zero vector has no angle"));
    }
    let along = e.project(w).norm();
    let across = (w - e.project(w)).norm();
    Ok(across.atan2(along))
}

/// Singular values in decreasing order; empty for a matrix with no rows or columns.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Operator norm `‖L‖`.
pub fn max_expansion(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Minimum expansion `𝔪(L)`, the smallest singular value of a square map.
pub fn min_expansion(m: &DMatrix<f64>) -> f64 {
    if m.nrows() != m.ncols() {
        // a non-square map from R^n to R^m with n > m has a kernel
        if m.ncols() > m.nrows() {
            return 0.0;
        }
    }
    singular_values(m).last().copied().unwrap_or(1.0)
}

/// `𝔪(L_n ⋯ L_1)` for square factors listed in order of application,
/// computed as `1 / ‖L_1⁻¹ ⋯ L_n⁻¹‖`. For expanding factors (`‖L_k⁻¹‖ ≤ 1`)
/// this is accurate to `O(n u)`, while the smallest singular value of the
/// explicit product is only good to `O(u ‖L_n ⋯ L_1‖)`. A singular factor
/// falls back to the explicit product.
pub fn product_min_expansion(factors: &[DMatrix<f64>]) -> f64 {
    let Some(first) = factors.first() else {
        return 1.0;
    };
    let m = first.nrows();
    let mut inv = DMatrix::identity(m, m);
    for f in factors {
        match f.clone().try_inverse() {
            Some(fi) => inv *= fi,
            None => {
                let l = factors.iter().fold(DMatrix::identity(m, m), |acc, a| a * acc);
                return min_expansion(&l);
            }
        }
    }
    1.0 / max_expansion(&inv)
}

/// Matrix of `π_{E,F⊥}` in the basis of `E` (columns are `P_{F⊥} e_i`).
fn projection_to_complement(e: &Frame, f: &Frame) -> DMatrix<f64> {
    let em = e.matrix();
    let fm = f.matrix();
    if f.is_empty() {
        return em;
    }
    &em - &fm * (fm.transpose() * &em)
}

fn check_frames(e: &Frame, f: &Frame) -> Result<()> {
    if e.ambient_dim() != f.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: e.ambient_dim(),
            got: f.ambient_dim(),
        });
    }
    Ok(())
}

#[inline]
fn clamped_asin(s: f64) -> f64 {
    s.clamp(0.0, 1.0).asin()
}

/// Grassmann distance `∠(E,F)` between subspaces of equal dimension.
pub fn grassmann_angle(e: &Frame, f: &Frame) -> Result<f64> {
    check_frames(e, f)?;
    if e.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: e.dim(),
            got: f.dim(),
        });
    }
    let s = singular_values(&projection_to_complement(e, f));
    Ok(s.first().map_or(0.0, |&x| clamped_asin(x)))
}

/// Minimum angle `∠_min(E,F)`; requires `dim E + dim F ≤ d`.
///
/// Returns `π/2` when `E = {0}`.
pub fn min_angle(e: &Frame, f: &Frame) -> Result<f64> {
    check_frames(e, f)?;
    if e.dim() + f.dim() > e.ambient_dim() {
        return Err(Error::invalid(format!(
            "min_angle needs dim E + dim F <= d, got {} + {} > {}",
            e.dim(),
            f.dim(),
            e.ambient_dim()
        )));
    }
    let s = singular_values(&projection_to_complement(e, f));
    Ok(s.last().map_or(std::f64::consts::FRAC_PI_2, |&x| clamped_asin(x)))
}

/// `‖u_1 ∧ … ∧ u_k‖` as the square root of the Gram determinant.
pub fn wedge_norm(vectors: &[Vector]) -> f64 {
    if vectors.is_empty() {
        return 1.0;
    }
    let m = DMatrix::from_columns(vectors);
    let gram = m.transpose() * &m;
    gram.determinant().max(0.0).sqrt()
}

/// Numerical rank of a family of vectors (relative threshold [`RANK_TOL`]).
pub fn rank(vectors: &[Vector]) -> usize {
    if vectors.is_empty() {
        return 0;
    }
    let s = singular_values(&DMatrix::from_columns(vectors));
    let top = s[0];
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > RANK_TOL * top.max(1.0)).count()
}

/// Gram–Schmidt with one re-orthogonalisation pass.
///
/// A vector is dropped when its residual has norm below `1e-10` times its
/// input norm.
pub fn orthonormalize(ambient_dim: usize, vectors: &[Vector]) -> Frame {
    let mut basis: Vec<Vector> = Vec::with_capacity(ambient_dim);
    for u in vectors {
        assert_eq!(u.len(), ambient_dim, "vector length differs from ambient dimension");
        if basis.len() == ambient_dim {
            break;
        }
        let norm_in = u.norm();
        if norm_in == 0.0 {
            continue;
        }
        let mut r = u.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&r);
                r.axpy(-c, b, 1.0);
            }
        }
        let nr = r.norm();
        if nr < RANK_TOL * norm_in {
            continue;
        }
        basis.push(r / nr);
    }
    Frame {
        ambient_dim,
        basis,
    }
}

/// An element of `[0, 1]` under `a ⊕ b = a + b − ab`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct ExpansionScalar(f64);

impl ExpansionScalar {
    pub const ZERO: Self = Self(0.0);
    pub const ONE: Self = Self(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::invalid(format!("{value} is outside [0, 1]")));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn oplus(self, other: Self) -> Self {
        oplus(self, other)
    }

    /// `⊕_n x = x ⊕ … ⊕ x` with `n` terms; `⊕_0 x = 0`.
    pub fn oplus_power(self, n: usize) -> Self {
        (0..n).fold(Self::ZERO, |acc, _| acc.oplus(self))
    }
}

pub fn oplus(a: ExpansionScalar, b: ExpansionScalar) -> ExpansionScalar {
    // this grouping is exact at both the neutral and the absorbing element
    let v = a.0 + b.0 * (1.0 - a.0);
    ExpansionScalar(v.clamp(0.0, 1.0))
}

/// Lower bound on the minimum expansion of a composition of `d`-dimensional
/// projection products with per-step expansion `λ` and new-direction angles
/// at least `eps` (taken as an angle, its sine is applied here):
///
/// `σ = 1 / sqrt( (⊕_{d−1} (1 − sin²ε)) ⊕ (⊕_d λ^{−2}) )`.
pub fn sigma_bound(eps: f64, lambda: f64, d: usize) -> Result<f64> {
    if !(eps > 0.0 && eps <= std::f64::consts::FRAC_PI_2) {
        return Err(Error::invalid(format!("angle {eps} is outside (0, pi/2]")));
    }
    if !(lambda > 1.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("expansion {lambda} must be finite and > 1")));
    }
    if d < 2 {
        return Err(Error::invalid("dimension must be at least 2"));
    }
    let s = eps.sin();
    // Through x ↦ 1 − x the ⊕ chain becomes a product, which keeps the
    // complement 1 − (…) accurate when it is tiny.
    let complement = (s * s).powi(d as i32 - 1) * (1.0 - lambda.powi(-2)).powi(d as i32);
    Ok((-0.5 * (-complement).ln_1p()).exp())
}
