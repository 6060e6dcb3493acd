//! Convex polytopes in H-representation.
//!
//! Faces are stored as inward half-spaces `⟨x, η_i⟩ ≥ c_i` with unit `η_i`.
//! The chart form `Q(p_1, …, p_N) = ∩ {⟨x, p_j⟩ ≤ ⟨p_j, p_j⟩}` is accepted by
//! [`Polytope::from_generators`] and converted to that convention.
//!
//! Vertices are found by brute force over all `d`-subsets of face
//! hyperplanes, which is fine for the face counts used here.

use std::f64::consts::PI;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geomkit::{self, orthonormalize, singular_values, Frame, Vector, RANK_TOL, UNIT_TOL};

/// Relative tolerance for "lies on a hyperplane" and "satisfies a constraint".
pub const FEASIBILITY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct Face {
    /// Unit inward normal.
    pub normal: Vector,
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vertex {
    pub point: Vector,
    /// Indices of the faces whose constraint is active at the vertex.
    pub faces: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Polytope {
    dim: usize,
    faces: Vec<Face>,
    vertices: Vec<Vertex>,
    diameter: f64,
    scale: f64,
}

/// Result of [`Polytope::is_general_position`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneralPosition {
    Yes,
    /// A `d`-subset of faces whose normals are linearly dependent.
    DependentNormals { faces: Vec<usize> },
    /// A vertex whose incident normals are not `d` independent vectors.
    DegenerateVertex { vertex: usize, faces: Vec<usize> },
}

impl GeneralPosition {
    pub fn holds(&self) -> bool {
        matches!(self, Self::Yes)
    }
}

/// Minimum of `∠(η_i, span{η_j : j ∈ S∖i})` over `d`-subsets `S`, with the
/// subset and distinguished face where it is attained.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Spanning {
    pub epsilon: f64,
    pub faces: Vec<usize>,
    pub distinguished: usize,
}

/// A similarity `x ↦ (x − shift) · scale`.
#[derive(Clone, Debug, PartialEq)]
pub struct Similarity {
    pub shift: Vector,
    pub scale: f64,
}

impl Similarity {
    pub fn apply(&self, x: &Vector) -> Vector {
        (x - &self.shift) * self.scale
    }

    pub fn invert(&self, y: &Vector) -> Vector {
        y / self.scale + &self.shift
    }
}

impl Polytope {
    /// Builds a polytope from inward half-spaces `⟨x, n_i⟩ ≥ c_i`; normals are
    /// normalised here, so they need not be unit.
    pub fn from_halfspaces(dim: usize, halfspaces: Vec<(Vector, f64)>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid("dimension must be at least 2"));
        }
        if halfspaces.len() < dim + 1 {
            return Err(Error::invalid(format!(
                "a bounded polytope in R^{dim} needs at least {} faces, got {}",
                dim + 1,
                halfspaces.len()
            )));
        }
        let mut faces = Vec::with_capacity(halfspaces.len());
        for (n, c) in halfspaces {
            if n.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: n.len(),
                });
            }
            let norm = n.norm();
            if !norm.is_finite() || norm == 0.0 || !c.is_finite() {
                return Err(Error::invalid("face normals must be finite and non-zero"));
            }
            faces.push(Face {
                normal: n / norm,
                offset: c / norm,
            });
        }
        Self::build(dim, faces)
    }

    /// `Q(p_1, …, p_N)`: the intersection of `⟨x, p_j⟩ ≤ ⟨p_j, p_j⟩`.
    ///
    /// The origin is interior by construction; face `j` has inward normal
    /// `−p_j/|p_j|` and offset `−|p_j|`.
    pub fn from_generators(generators: &[Vector]) -> Result<Self> {
        let dim = generators
            .first()
            .map(|p| p.len())
            .ok_or_else(|| Error::invalid("no generators"))?;
        let mut halfspaces = Vec::with_capacity(generators.len());
        for p in generators {
            let r = p.norm();
            if r == 0.0 {
                return Err(Error::invalid("generator at the origin"));
            }
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            halfspaces.push((-p / r, -r));
        }
        Self::from_halfspaces(dim, halfspaces)
    }

    fn build(dim: usize, faces: Vec<Face>) -> Result<Self> {
        let n = faces.len();
        let scale = faces
            .iter()
            .map(|f| f.offset.abs())
            .fold(0.0_f64, f64::max)
            .max(f64::MIN_POSITIVE);

        for (i, j) in (0..n).tuple_combinations() {
            if (&faces[i].normal - &faces[j].normal).norm() < RANK_TOL {
                // the looser constraint is redundant; ties blame the later one
                let redundant = if faces[i].offset < faces[j].offset { i } else { j };
                return Err(Error::RedundantFace { face: redundant });
            }
        }

        let normals: Vec<Vector> = faces.iter().map(|f| f.normal.clone()).collect();
        if geomkit::rank(&normals) < dim || has_recession_direction(dim, &normals) {
            return Err(Error::Unbounded);
        }

        let tol = FEASIBILITY_TOL * scale;
        let slack = |x: &Vector, f: &Face| x.dot(&f.normal) - f.offset;
        let mut vertices: Vec<Vertex> = Vec::new();
        for subset in (0..n).combinations(dim) {
            let m = DMatrix::from_fn(dim, dim, |r, c| faces[subset[r]].normal[c]);
            if singular_values(&m).last().copied().unwrap_or(0.0) <= RANK_TOL {
                continue;
            }
            let rhs = DVector::from_iterator(dim, subset.iter().map(|&i| faces[i].offset));
            let Some(x) = m.lu().solve(&rhs) else { continue };
            if faces.iter().any(|f| slack(&x, f) < -tol) {
                continue;
            }
            if vertices.iter().any(|v| (&v.point - &x).norm() < 10.0 * tol) {
                continue;
            }
            let active = (0..n).filter(|&i| slack(&x, &faces[i]).abs() <= tol).collect();
            vertices.push(Vertex {
                point: x,
                faces: active,
            });
        }
        if vertices.is_empty() {
            return Err(Error::EmptyInterior);
        }

        let diameter = vertices
            .iter()
            .tuple_combinations()
            .map(|(a, b)| (&a.point - &b.point).norm())
            .fold(0.0_f64, f64::max);
        let centroid = centroid(vertices.iter().map(|v| &v.point), dim);
        if diameter <= tol || faces.iter().any(|f| slack(&centroid, f) <= tol) {
            return Err(Error::EmptyInterior);
        }

        for i in 0..n {
            let on_face: Vec<&Vector> = vertices
                .iter()
                .filter(|v| v.faces.contains(&i))
                .map(|v| &v.point)
                .collect();
            if affine_rank(&on_face, diameter) + 1 < dim {
                return Err(Error::RedundantFace { face: i });
            }
        }

        Ok(Self {
            dim,
            faces,
            vertices,
            diameter,
            scale,
        })
    }

    /// The unit cube scaled by `side`, `[0, side]^d`. Faces come in pairs:
    /// `2i` is `x_i ≥ 0`, `2i + 1` is `x_i ≤ side`.
    pub fn hypercube(dim: usize, side: f64) -> Result<Self> {
        if !(side > 0.0) {
            return Err(Error::invalid("side must be positive"));
        }
        let mut hs = Vec::with_capacity(2 * dim);
        for i in 0..dim {
            let e = geomkit::unit_vector(dim, i);
            hs.push((e.clone(), 0.0));
            hs.push((-e, -side));
        }
        Self::from_halfspaces(dim, hs)
    }

    /// Regular `n`-gon centred at the origin. Face `k` has outward normal at
    /// angle `(2k + 1)π/n`.
    pub fn regular_polygon(n: usize, circumradius: f64) -> Result<Self> {
        if n < 3 || !(circumradius > 0.0) {
            return Err(Error::invalid("need n >= 3 and a positive radius"));
        }
        let apothem = circumradius * (PI / n as f64).cos();
        let hs = (0..n)
            .map(|k| {
                let a = (2 * k + 1) as f64 * PI / n as f64;
                (Vector::from_vec(vec![-a.cos(), -a.sin()]), -apothem)
            })
            .collect();
        Self::from_halfspaces(2, hs)
    }

    /// `base × [0, height]`; the last two faces are the bottom and the top.
    pub fn prism(base: &Polytope, height: f64) -> Result<Self> {
        if !(height > 0.0) {
            return Err(Error::invalid("height must be positive"));
        }
        let d = base.dim + 1;
        let mut hs: Vec<(Vector, f64)> = base
            .faces
            .iter()
            .map(|f| (f.normal.clone().insert_row(base.dim, 0.0), f.offset))
            .collect();
        let top = geomkit::unit_vector(d, base.dim);
        hs.push((top.clone(), 0.0));
        hs.push((-top, -height));
        Self::from_halfspaces(d, hs)
    }

    /// The simplex with the given `d + 1` vertices in `R^d`. Face `k` is the
    /// facet opposite vertex `k`, and vertex `k` is listed at index `k`.
    pub fn simplex(points: &[Vector]) -> Result<Self> {
        let d = points.len().checked_sub(1).ok_or_else(|| Error::invalid("no points"))?;
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::invalid("a simplex in R^d needs d + 1 points of length d"));
        }
        let mut hs = Vec::with_capacity(d + 1);
        for k in 0..=d {
            let others: Vec<&Vector> = (0..=d).filter(|&j| j != k).map(|j| &points[j]).collect();
            let diffs: Vec<Vector> = others[1..].iter().map(|p| *p - others[0]).collect();
            let normal_space = orthonormalize(d, &diffs).complement();
            if normal_space.dim() != 1 {
                return Err(Error::EmptyInterior);
            }
            let mut eta = normal_space.basis()[0].clone();
            if (&points[k] - others[0]).dot(&eta) < 0.0 {
                eta = -eta;
            }
            let c = others[0].dot(&eta);
            hs.push((eta, c));
        }
        let mut p = Self::from_halfspaces(d, hs)?;
        let mut ordered = Vec::with_capacity(d + 1);
        for k in 0..=d {
            let idx = p
                .vertices
                .iter()
                .position(|v| !v.faces.contains(&k))
                .ok_or(Error::EmptyInterior)?;
            ordered.push(p.vertices[idx].clone());
        }
        p.vertices = ordered;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn normal(&self, i: usize) -> &Vector {
        &self.faces[i].normal
    }

    pub fn offset(&self, i: usize) -> f64 {
        self.faces[i].offset
    }

    pub fn normals(&self) -> Vec<Vector> {
        self.faces.iter().map(|f| f.normal.clone()).collect()
    }

    pub fn offsets(&self) -> Vec<f64> {
        self.faces.iter().map(|f| f.offset).collect()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Absolute tolerance for hyperplane membership at this polytope's scale.
    pub fn tolerance(&self) -> f64 {
        FEASIBILITY_TOL * self.scale.max(self.diameter)
    }

    /// `⟨x, η_i⟩ − c_i`, non-negative inside.
    pub fn slack(&self, i: usize, x: &Vector) -> f64 {
        x.dot(&self.faces[i].normal) - self.faces[i].offset
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        (0..self.faces.len()).all(|i| self.slack(i, x) >= -tol)
    }

    pub fn centroid(&self) -> Vector {
        centroid(self.vertices.iter().map(|v| &v.point), self.dim)
    }

    pub fn face_vertices(&self, face: usize) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&k| self.vertices[k].faces.contains(&face))
            .collect()
    }

    /// Average of the vertices of a face; lies in the relative interior.
    pub fn face_centroid(&self, face: usize) -> Vector {
        let idx = self.face_vertices(face);
        centroid(idx.iter().map(|&k| &self.vertices[k].point), self.dim)
    }

    /// Copy translated to the vertex centroid and scaled to unit diameter,
    /// together with the map applied to points.
    pub fn normalized(&self) -> (Polytope, Similarity) {
        let sim = Similarity {
            shift: self.centroid(),
            scale: 1.0 / self.diameter,
        };
        let faces: Vec<Face> = self
            .faces
            .iter()
            .map(|f| Face {
                normal: f.normal.clone(),
                offset: (f.offset - f.normal.dot(&sim.shift)) * sim.scale,
            })
            .collect();
        let vertices = self
            .vertices
            .iter()
            .map(|v| Vertex {
                point: sim.apply(&v.point),
                faces: v.faces.clone(),
            })
            .collect();
        let scale = faces
            .iter()
            .map(|f| f.offset.abs())
            .fold(0.0_f64, f64::max)
            .max(f64::MIN_POSITIVE);
        (
            Polytope {
                dim: self.dim,
                faces,
                vertices,
                diameter: 1.0,
                scale,
            },
            sim,
        )
    }

    /// Checks that every `d`-subset of normals is independent and that every
    /// vertex lies on exactly `d` faces with independent normals.
    pub fn is_general_position(&self) -> GeneralPosition {
        let d = self.dim;
        for subset in (0..self.faces.len()).combinations(d) {
            if !independent(subset.iter().map(|&i| &self.faces[i].normal), d) {
                return GeneralPosition::DependentNormals { faces: subset };
            }
        }
        for (k, v) in self.vertices.iter().enumerate() {
            if v.faces.len() != d || !independent(v.faces.iter().map(|&i| &self.faces[i].normal), d) {
                return GeneralPosition::DegenerateVertex {
                    vertex: k,
                    faces: v.faces.clone(),
                };
            }
        }
        GeneralPosition::Yes
    }

    /// Largest `ε` for which the polytope is `ε`-spanning, with the witness.
    pub fn spanning_epsilon(&self) -> Spanning {
        let d = self.dim;
        let mut best = Spanning {
            epsilon: f64::INFINITY,
            faces: Vec::new(),
            distinguished: 0,
        };
        for subset in (0..self.faces.len()).combinations(d) {
            for &i in &subset {
                let others: Vec<Vector> = subset
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| self.faces[j].normal.clone())
                    .collect();
                let span = orthonormalize(d, &others);
                let angle = geomkit::angle_vec_subspace(&self.faces[i].normal, &span)
                    .expect("unit normals are non-zero");
                if angle < best.epsilon {
                    best = Spanning {
                        epsilon: angle,
                        faces: subset.clone(),
                        distinguished: i,
                    };
                }
            }
        }
        best
    }

    /// The cone at a vertex spanned by its incident faces.
    pub fn vertex_cone(&self, vertex: usize) -> Result<ConeSpec> {
        let v = self
            .vertices
            .get(vertex)
            .ok_or_else(|| Error::invalid(format!("no vertex {vertex}")))?;
        if v.faces.len() != self.dim {
            return Err(Error::DegenerateVertex { vertex });
        }
        let normals = v.faces.iter().map(|&i| self.faces[i].normal.clone()).collect();
        ConeSpec::new(normals, v.point.clone()).map_err(|_| Error::DegenerateVertex { vertex })
    }

    /// Distance within face `i` from `p` to the relative boundary of the face.
    pub fn skeleton_distance(&self, p: &Vector, face: usize) -> Result<f64> {
        if face >= self.faces.len() {
            return Err(Error::invalid(format!("no face {face}")));
        }
        if p.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: p.len(),
            });
        }
        if self.slack(face, p).abs() > self.tolerance() {
            return Err(Error::invalid(format!(
                "point is off the hyperplane of face {face} by {:e}",
                self.slack(face, p)
            )));
        }
        Ok(ridge_distance(&self.faces, p, face))
    }

    pub fn to_json(&self) -> PolytopeJson {
        let all_outside = self.faces.iter().all(|f| f.offset < 0.0);
        PolytopeJson {
            dim: Some(self.dim),
            halfspaces: Some(
                self.faces
                    .iter()
                    .map(|f| HalfspaceJson {
                        normal: f.normal.iter().copied().collect(),
                        offset: f.offset,
                    })
                    .collect(),
            ),
            // the chart form only exists when the origin is interior
            generators: all_outside.then(|| {
                self.faces
                    .iter()
                    .map(|f| (&f.normal * f.offset).iter().copied().collect())
                    .collect()
            }),
            vertices: Some(
                self.vertices
                    .iter()
                    .map(|v| VertexJson {
                        point: v.point.iter().copied().collect(),
                        faces: v.faces.clone(),
                    })
                    .collect(),
            ),
        }
    }

    /// Reads `{"dim", "halfspaces": [{"normal", "offset"}]}` or
    /// `{"generators": [[…], …]}`; half-spaces win if both are present.
    pub fn from_json(doc: &PolytopeJson) -> Result<Self> {
        if let Some(hs) = &doc.halfspaces {
            let dim = doc
                .dim
                .or_else(|| hs.first().map(|h| h.normal.len()))
                .ok_or_else(|| Error::invalid("empty halfspace list"))?;
            let faces = hs
                .iter()
                .map(|h| (Vector::from_vec(h.normal.clone()), h.offset))
                .collect();
            return Self::from_halfspaces(dim, faces);
        }
        if let Some(gens) = &doc.generators {
            let pts: Vec<Vector> = gens.iter().map(|g| Vector::from_vec(g.clone())).collect();
            if let (Some(d), Some(p)) = (doc.dim, pts.first()) {
                if p.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: p.len(),
                    });
                }
            }
            return Self::from_generators(&pts);
        }
        Err(Error::invalid("polytope needs \"halfspaces\" or \"generators\""))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: PolytopeJson =
            serde_json::from_str(s).map_err(|e| Error::invalid(format!("bad polytope JSON: {e}")))?;
        Self::from_json(&doc)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfspaceJson {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexJson {
    pub point: Vec<f64>,
    pub faces: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolytopeJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halfspaces: Option<Vec<HalfspaceJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<Vec<f64>>>,
    /// Written for reference, ignored on input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<VertexJson>>,
}

/// The simplex `Δ^d_h = conv{e_1, …, e_d, ((1−h)/d)Σe_j + h e_{d+1}}` in
/// orthonormal coordinates of its affine hull.
///
/// Vertex `k < d` is `e_{k+1}`, vertex `d` is the apex, and face `k` is the
/// facet opposite vertex `k`; face `d` is therefore the base.
pub fn simplex_family(d: usize, h: f64) -> Result<Polytope> {
    Ok(simplex_family_embedded(d, h)?.0)
}

/// Affine chart of a `d`-flat in `R^{d+1}`: `x = origin + basis · y`.
#[derive(Clone, Debug)]
pub struct HullChart {
    pub origin: Vector,
    pub basis: DMatrix<f64>,
}

impl HullChart {
    pub fn to_hull(&self, y: &Vector) -> Vector {
        &self.origin + &self.basis * y
    }

    pub fn from_hull(&self, x: &Vector) -> Vector {
        self.basis.transpose() * (x - &self.origin)
    }
}

/// Vertices of `Δ^d_h` in `R^{d+1}`, in the order used by [`simplex_family`].
pub fn simplex_family_vertices(d: usize, h: f64) -> Result<Vec<Vector>> {
    if d < 2 {
        return Err(Error::invalid("dimension must be at least 2"));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid(format!("height parameter must be positive, got {h}")));
    }
    let mut pts: Vec<Vector> = (0..d).map(|k| geomkit::unit_vector(d + 1, k)).collect();
    let mut apex = Vector::from_element(d + 1, (1.0 - h) / d as f64);
    apex[d] = h;
    pts.push(apex);
    Ok(pts)
}

/// [`simplex_family`] together with the chart back to `R^{d+1}`.
pub fn simplex_family_embedded(d: usize, h: f64) -> Result<(Polytope, HullChart)> {
    let pts = simplex_family_vertices(d, h)?;
    let origin = centroid(pts.iter(), d + 1);
    let diffs: Vec<Vector> = pts[1..].iter().map(|p| p - &pts[0]).collect();
    let frame = orthonormalize(d + 1, &diffs);
    debug_assert_eq!(frame.dim(), d);
    let chart = HullChart {
        origin,
        basis: frame.matrix(),
    };
    let local: Vec<Vector> = pts.iter().map(|p| chart.from_hull(p)).collect();
    Ok((Polytope::simplex(&local)?, chart))
}

/// A polyhedral cone `{x : ⟨x − apex, η_i⟩ ≥ 0}` with `d` independent normals.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeSpec {
    dim: usize,
    normals: Vec<Vector>,
    apex: Vector,
}

impl ConeSpec {
    /// Normalises the normals; fails if they are not `d` independent vectors.
    pub fn new(normals: Vec<Vector>, apex: Vector) -> Result<Self> {
        let dim = apex.len();
        if normals.len() != dim {
            return Err(Error::invalid(format!(
                "a cone in R^{dim} needs {dim} normals, got {}",
                normals.len()
            )));
        }
        let mut unit = Vec::with_capacity(dim);
        for n in normals {
            if n.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: n.len(),
                });
            }
            let r = n.norm();
            if r == 0.0 || !r.is_finite() {
                return Err(Error::DegenerateCone);
            }
            unit.push(n / r);
        }
        if !independent(unit.iter(), dim) {
            return Err(Error::DegenerateCone);
        }
        Ok(Self {
            dim,
            normals: unit,
            apex,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn normals(&self) -> &[Vector] {
        &self.normals
    }

    pub fn apex(&self) -> &Vector {
        &self.apex
    }

    pub fn faces(&self) -> Vec<Face> {
        self.normals
            .iter()
            .map(|n| Face {
                normal: n.clone(),
                offset: n.dot(&self.apex),
            })
            .collect()
    }

    /// The unit vector `e` with `⟨η_i, e⟩` equal for all `i`.
    pub fn barycentric_direction(&self) -> Result<Vector> {
        Ok(barycentric_solve(self)?.0)
    }
}

fn barycentric_solve(cone: &ConeSpec) -> Result<(Vector, f64)> {
    let d = cone.dim;
    let n = DMatrix::from_fn(d, d, |r, c| cone.normals[r][c]);
    if singular_values(&n).last().copied().unwrap_or(0.0) <= RANK_TOL {
        return Err(Error::DegenerateCone);
    }
    let x = n.lu().solve(&DVector::from_element(d, 1.0)).ok_or(Error::DegenerateCone)?;
    let len = x.norm();
    let ell = 1.0 / len;
    let e = x / len;
    for eta in &cone.normals {
        if (eta.dot(&e) - ell).abs() > 1e-10 {
            return Err(Error::DegenerateCone);
        }
    }
    Ok((e, ell))
}

/// The barycentric angle `φ = asin ℓ`, where `ℓ` is the distance from the
/// origin to the affine hyperplane through the unit normals.
pub fn barycentric_angle(cone: &ConeSpec) -> Result<f64> {
    let (_, ell) = barycentric_solve(cone)?;
    Ok(ell.clamp(0.0, 1.0).asin())
}

fn independent<'a>(vs: impl Iterator<Item = &'a Vector>, dim: usize) -> bool {
    let cols: Vec<Vector> = vs.cloned().collect();
    if cols.len() > dim {
        return false;
    }
    let m = DMatrix::from_columns(&cols);
    singular_values(&m).last().copied().unwrap_or(0.0) > RANK_TOL
}

/// Whether `{u : ⟨u, η_i⟩ ≥ 0 ∀i}` contains a non-zero direction, assuming
/// the normals span `R^d` (so the cone is pointed and generated by rays
/// cut out by `d − 1` independent constraints).
fn has_recession_direction(dim: usize, normals: &[Vector]) -> bool {
    let tol = RANK_TOL;
    (0..normals.len()).combinations(dim - 1).any(|subset| {
        let rows: Vec<Vector> = subset.iter().map(|&i| normals[i].clone()).collect();
        let span = orthonormalize(dim, &rows);
        if span.dim() != dim - 1 {
            return false;
        }
        let r = span.complement().basis()[0].clone();
        [r.clone(), -r]
            .iter()
            .any(|u| normals.iter().all(|n| n.dot(u) >= -tol))
    })
}

fn affine_rank(points: &[&Vector], diameter: f64) -> usize {
    let Some((first, rest)) = points.split_first() else {
        return 0;
    };
    if rest.is_empty() {
        return 0;
    }
    let m = DMatrix::from_columns(&rest.iter().map(|p| *p - *first).collect::<Vec<_>>());
    singular_values(&m)
        .iter()
        .filter(|&&s| s > 1e-9 * diameter)
        .count()
}

fn centroid<'a>(pts: impl Iterator<Item = &'a Vector>, dim: usize) -> Vector {
    let mut sum = Vector::zeros(dim);
    let mut n = 0usize;
    for p in pts {
        sum += p;
        n += 1;
    }
    sum / n.max(1) as f64
}

/// Where a ray leaves an intersection of inward half-spaces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Exit {
    pub face: usize,
    pub tau: f64,
}

/// First face hit by `p + t v`, `t > 0`, ignoring `skip`. `None` if the ray
/// never leaves.
pub(crate) fn first_exit(faces: &[Face], p: &Vector, v: &Vector, skip: Option<usize>) -> Option<Exit> {
    let mut best: Option<Exit> = None;
    for (j, f) in faces.iter().enumerate() {
        if Some(j) == skip {
            continue;
        }
        let s = v.dot(&f.normal);
        if s >= 0.0 {
            continue;
        }
        let t = ((p.dot(&f.normal) - f.offset) / -s).max(0.0);
        if best.is_none_or(|b| t < b.tau) {
            best = Some(Exit { face: j, tau: t });
        }
    }
    best
}

/// Distance inside the hyperplane of `face` from `q` to the nearest other
/// constraint hyperplane, clamped at zero. Parallel faces never bound it.
pub(crate) fn ridge_distance(faces: &[Face], q: &Vector, face: usize) -> f64 {
    let eta = &faces[face].normal;
    let mut best = f64::INFINITY;
    for (k, f) in faces.iter().enumerate() {
        if k == face {
            continue;
        }
        let tangential = (&f.normal - eta * f.normal.dot(eta)).norm();
        if tangential < UNIT_TOL {
            continue;
        }
        let slack = q.dot(&f.normal) - f.offset;
        best = best.min(slack / tangential);
    }
    best.max(0.0)
}

/// Frame spanned by the normals of the given faces.
pub fn normal_span(p: &Polytope, faces: &[usize]) -> Frame {
    let vs: Vec<Vector> = faces.iter().map(|&i| p.normal(i).clone()).collect();
    orthonormalize(p.dim(), &vs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    #[test]
    fn triangle_from_generators() {
        let gens: Vec<Vector> = (0..3)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / 3.0;
                v(&[a.cos(), a.sin()])
            })
            .collect();
        let p = Polytope::from_generators(&gens).unwrap();
        assert_eq!(p.n_faces(), 3);
        assert_eq!(p.vertices().len(), 3);
        for vert in p.vertices() {
            assert_eq!(vert.faces.len(), 2);
        }
    }

    #[test]
    fn cube_from_generators() {
        let mut gens = Vec::new();
        for i in 0..3 {
            let e = geomkit::unit_vector(3, i);
            gens.push(&e * 0.5);
            gens.push(&e * -0.5);
        }
        let p = Polytope::from_generators(&gens).unwrap();
        assert_eq!(p.n_faces(), 6);
        assert_eq!(p.vertices().len(), 8);
        assert!((p.diameter() - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn construction_errors() {
        // half-plane strip in R^2 is unbounded
        let strip = vec![
            (v(&[0.0, 1.0]), 0.0),
            (v(&[0.0, -1.0]), -1.0),
            (v(&[1.0, 0.0]), 0.0),
        ];
        assert!(matches!(Polytope::from_halfspaces(2, strip), Err(Error::Unbounded)));
        // an extra constraint that touches only at a vertex is redundant
        let mut sq: Vec<(Vector, f64)> = Polytope::hypercube(2, 1.0)
            .unwrap()
            .faces()
            .iter()
            .map(|f| (f.normal.clone(), f.offset))
            .collect();
        sq.push((v(&[-1.0, -1.0]), -2.0));
        assert!(matches!(
            Polytope::from_halfspaces(2, sq.clone()),
            Err(Error::RedundantFace { face: 4 })
        ));
        sq.pop();
        sq.push((v(&[-1.0, 0.0]), -1.0));
        assert!(matches!(Polytope::from_halfspaces(2, sq), Err(Error::RedundantFace { .. })));
        let empty = vec![
            (v(&[1.0, 0.0]), 1.0),
            (v(&[-1.0, 0.0]), 0.0),
            (v(&[0.0, 1.0]), 0.0),
            (v(&[0.0, -1.0]), -1.0),
        ];
        assert!(Polytope::from_halfspaces(2, empty).is_err());
        assert!(Polytope::from_generators(&[v(&[1.0, 0.0]), v(&[0.0, 0.0]), v(&[0.0, 1.0])]).is_err());
    }

    #[test]
    fn simplex_family_structure() {
        for d in 2..=5 {
            for &h in &[0.1, 0.5, 1.0, 2.5] {
                let p = simplex_family(d, h).unwrap();
                assert_eq!(p.dim(), d);
                assert_eq!(p.n_faces(), d + 1);
                assert_eq!(p.vertices().len(), d + 1);
                for (k, vert) in p.vertices().iter().enumerate() {
                    assert_eq!(vert.faces.len(), d);
                    assert!(!vert.faces.contains(&k));
                }
                assert!(p.is_general_position().holds());
            }
        }
        assert!(simplex_family(3, 0.0).is_err());
        assert!(simplex_family(3, -1.0).is_err());
    }

    #[test]
    fn simplex_family_matches_listed_vertices() {
        // independent check: embedded vertices are exactly the listed points
        let (p, chart) = simplex_family_embedded(3, 0.37).unwrap();
        let listed = simplex_family_vertices(3, 0.37).unwrap();
        for (k, vert) in p.vertices().iter().enumerate() {
            assert!((chart.to_hull(&vert.point) - &listed[k]).norm() < 1e-12);
        }
        // base is the face spanned by A1 A2 A3
        assert_eq!(p.face_vertices(3), vec![0, 1, 2]);
    }

    #[test]
    fn isoceles_triangle_from_family() {
        let p = simplex_family(2, 3f64.sqrt() / 2.0).unwrap();
        let a = &p.vertices()[0].point;
        let b = &p.vertices()[1].point;
        let c = &p.vertices()[2].point;
        assert!(((a - c).norm() - (b - c).norm()).abs() < 1e-12);
        for vert in p.vertices() {
            assert!(p.contains(&vert.point, 1e-10));
        }
    }

    #[test]
    fn general_position_witnesses() {
        let cube = Polytope::hypercube(3, 1.0).unwrap();
        assert_eq!(
            cube.is_general_position(),
            GeneralPosition::DependentNormals { faces: vec![0, 1, 2] }
        );
        let hex = Polytope::regular_polygon(6, 1.0).unwrap();
        assert!(!hex.is_general_position().holds());
        let tri = Polytope::regular_polygon(3, 1.0).unwrap();
        assert!(tri.is_general_position().holds());
    }

    #[test]
    fn spanning_epsilon_cases() {
        let cube = Polytope::hypercube(3, 1.0).unwrap();
        let s = cube.spanning_epsilon();
        assert_eq!(s.epsilon, 0.0);
        assert_eq!(s.faces, vec![0, 1, 2]);
        // brute force over 4-choose-3 subsets for the regular tetrahedron
        let p = simplex_family(3, 1.0).unwrap();
        let mut oracle = f64::INFINITY;
        for s in (0..4).combinations(3) {
            for &i in &s {
                let others: Vec<Vector> =
                    s.iter().filter(|&&j| j != i).map(|&j| p.normal(j).clone()).collect();
                let m = DMatrix::from_columns(&others);
                let proj = &m * (m.transpose() * &m).try_inverse().unwrap() * m.transpose();
                let resid = p.normal(i) - &proj * p.normal(i);
                oracle = oracle.min(resid.norm().asin());
            }
        }
        let got = p.spanning_epsilon().epsilon;
        assert!(got > 0.0);
        assert!((got - oracle).abs() < 1e-12);
    }

    #[test]
    fn cones_and_barycentric_angles() {
        let cube = Polytope::hypercube(3, 1.0).unwrap();
        let cone = cube.vertex_cone(0).unwrap();
        for (i, a) in cone.normals().iter().enumerate() {
            for (j, b) in cone.normals().iter().enumerate() {
                assert!((a.dot(b) - if i == j { 1.0 } else { 0.0 }).abs() < 1e-15);
            }
        }
        let phi = barycentric_angle(&cone).unwrap();
        assert!((phi - (1.0 / 3f64.sqrt()).asin()).abs() < 1e-14);
        assert!((phi - 0.61548).abs() < 1e-5);

        let sq = ConeSpec::new(vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])], v(&[0.0, 0.0])).unwrap();
        assert!((barycentric_angle(&sq).unwrap() - FRAC_PI_4).abs() < 1e-15);

        // a wedge whose faces meet at dihedral angle 1e-3
        let a: f64 = 1e-3;
        let thin = ConeSpec::new(vec![v(&[0.0, 1.0]), v(&[a.sin(), -a.cos()])], v(&[0.0, 0.0])).unwrap();
        let phi = barycentric_angle(&thin).unwrap();
        assert!(phi < 0.01 && phi > 0.0);
        assert!((phi - a / 2.0).abs() < 1e-9);

        assert_eq!(
            ConeSpec::new(vec![v(&[1.0, 0.0]), v(&[-1.0, 0.0])], v(&[0.0, 0.0])),
            Err(Error::DegenerateCone)
        );
    }

    #[test]
    fn simplex_vertex_cones_follow_incidence() {
        let p = simplex_family(3, 0.5).unwrap();
        let apex = p.vertex_cone(3).unwrap();
        for (n, &f) in apex.normals().iter().zip(&p.vertices()[3].faces) {
            assert!(f < 3);
            assert_eq!(n, p.normal(f));
        }
        assert!(p.vertices()[0].faces.contains(&3));
    }

    #[test]
    fn skeleton_distance_on_equilateral_face() {
        // regular tetrahedron with unit edges: face barycentre is at the inradius
        let p = simplex_family(3, 1.0).unwrap();
        let edge = (&p.vertices()[0].point - &p.vertices()[1].point).norm();
        let q = p.face_centroid(3);
        let d = p.skeleton_distance(&q, 3).unwrap() / edge;
        assert!((d - 1.0 / (2.0 * 3f64.sqrt())).abs() < 1e-12);
        let a = &p.vertices()[0].point;
        assert!(p.skeleton_distance(a, 3).unwrap() < 1e-12);
        let mid = (&p.vertices()[0].point + &p.vertices()[1].point) / 2.0;
        assert!(p.skeleton_distance(&mid, 3).unwrap() < 1e-12);
        assert!(p.skeleton_distance(&p.centroid(), 3).is_err());
    }

    #[test]
    fn json_round_trip() {
        let p = simplex_family(3, 0.5).unwrap();
        let s = serde_json::to_string(&p.to_json()).unwrap();
        let q = Polytope::from_json_str(&s).unwrap();
        for (a, b) in q.faces().iter().zip(p.faces()) {
            assert!((&a.normal - &b.normal).norm() < 1e-15);
            assert!((a.offset - b.offset).abs() < 1e-15);
        }
        let doc = r#"{"generators": [[1,0],[0,1],[-1,-1]]}"#;
        assert_eq!(Polytope::from_json_str(doc).unwrap().n_faces(), 3);
        assert!(Polytope::from_json_str("{").is_err());
        assert!(Polytope::from_json_str("{}").is_err());
    }

    #[test]
    fn normalization_scales_to_unit_diameter() {
        let p = Polytope::hypercube(3, 4.0).unwrap();
        let (q, sim) = p.normalized();
        assert_eq!(q.diameter(), 1.0);
        for (a, b) in p.vertices().iter().zip(q.vertices()) {
            assert!((sim.apply(&a.point) - &b.point).norm() < 1e-14);
            for &f in &b.faces {
                assert!(q.slack(f, &b.point).abs() < 1e-12);
            }
        }
    }
}
