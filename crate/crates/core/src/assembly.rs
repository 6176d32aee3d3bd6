//! Exact P1 assembly of the bilinear forms and load functionals.
//!
//! * `K`   — stiffness, `a(u, v) = ∫_Ω ∇u·∇v`
//! * `M_H` — consistent domain mass, `(u, v)_H = ∫_Ω u v`
//! * `M_R` — boundary mass on `Γ1`, `(u, v)_R = ∫_Γ1 u v`
//!
//! All integrands are polynomials of degree ≤ 2 on each element or edge, so
//! the closed-form element matrices below are exact.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::mesh::{signed_area, Mesh, Point, Side, AREA_TOLERANCE};
use crate::sparse::CsrMatrix;

/// Gradients of the three barycentric coordinates of a triangle.
pub fn barycentric_gradients(c: [Point; 3]) -> [[f64; 2]; 3] {
    let two_area = 2.0 * signed_area(c);
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        g[i] = [(c[j][1] - c[k][1]) / two_area, (c[k][0] - c[j][0]) / two_area];
    }
    g
}

pub fn local_stiffness(c: [Point; 3]) -> [[f64; 3]; 3] {
    let area = signed_area(c);
    let g = barycentric_gradients(c);
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
        }
    }
    k
}

pub fn local_mass(area: f64) -> [[f64; 3]; 3] {
    let off = area / 12.0;
    let diag = area / 6.0;
    [[diag, off, off], [off, diag, off], [off, off, diag]]
}

pub fn edge_mass(length: f64) -> [[f64; 2]; 2] {
    [[length / 3.0, length / 6.0], [length / 6.0, length / 3.0]]
}

fn edge_length(mesh: &Mesh, e: [usize; 2]) -> f64 {
    let (p, q) = (mesh.nodes()[e[0]], mesh.nodes()[e[1]]);
    (p[0] - q[0]).hypot(p[1] - q[1])
}

#[derive(Clone, Debug)]
pub struct AssembledSystem {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    pub boundary_mass: CsrMatrix,
    /// `(1, φ_i)_R`; scaled by `b` this is the `Γ1` load `(b, φ_i)_R`.
    pub gamma1_load: Vec<f64>,
    pub gamma1_nodes: Vec<usize>,
}

pub fn assemble(mesh: &Mesh) -> Result<AssembledSystem> {
    let n = mesh.node_count();
    let mut k_trip = Vec::with_capacity(9 * mesh.triangle_count());
    let mut m_trip = Vec::with_capacity(9 * mesh.triangle_count());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let c = mesh.corners(t);
        let area = signed_area(c);
        if area <= AREA_TOLERANCE {
            return Err(Error::DegenerateTriangle { index: t, area });
        }
        let k = local_stiffness(c);
        let m = local_mass(area);
        for a in 0..3 {
            for b in 0..3 {
                k_trip.push((tri[a], tri[b], k[a][b]));
                m_trip.push((tri[a], tri[b], m[a][b]));
            }
        }
    }
    let mut r_trip = Vec::new();
    let mut gamma1_load = vec![0.0; n];
    for &e in mesh.gamma1_edges() {
        let len = edge_length(mesh, e);
        let m = edge_mass(len);
        for a in 0..2 {
            gamma1_load[e[a]] += 0.5 * len;
            for b in 0..2 {
                r_trip.push((e[a], e[b], m[a][b]));
            }
        }
    }
    Ok(AssembledSystem {
        stiffness: CsrMatrix::from_triplets(n, n, &k_trip),
        mass: CsrMatrix::from_triplets(n, n, &m_trip),
        boundary_mass: CsrMatrix::from_triplets(n, n, &r_trip),
        gamma1_load,
        gamma1_nodes: mesh.gamma1_nodes(),
    })
}

/// Heat flux `q` on `Γ2`, constant on each edge.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryFlux {
    Constant(f64),
    /// One value per unit-square side (bottom, right, top, left).
    PerSide([f64; 4]),
}

impl BoundaryFlux {
    pub fn zero() -> Self {
        BoundaryFlux::Constant(0.0)
    }

    /// Value on the edge with midpoint `m`.
    pub fn at(&self, m: Point) -> Result<f64> {
        match self {
            BoundaryFlux::Constant(q) => Ok(*q),
            BoundaryFlux::PerSide(values) => {
                let side = Side::of_unit_square_point(m).ok_or_else(|| {
                    Error::InvalidParameter(format!("edge midpoint {m:?} is not on a unit-square side"))
                })?;
                Ok(values[Side::ALL.iter().position(|s| *s == side).unwrap()])
            }
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            BoundaryFlux::Constant(q) => q.is_finite(),
            BoundaryFlux::PerSide(v) => v.iter().all(|q| q.is_finite()),
        }
    }
}

/// `(q, φ_i)_Q` for every node.
pub fn flux_load(mesh: &Mesh, flux: &BoundaryFlux) -> Result<Vec<f64>> {
    let mut load = vec![0.0; mesh.node_count()];
    for &e in mesh.gamma2_edges() {
        let (p, q) = (mesh.nodes()[e[0]], mesh.nodes()[e[1]]);
        let value = flux.at([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])])?;
        let half = 0.5 * edge_length(mesh, e) * value;
        load[e[0]] += half;
        load[e[1]] += half;
    }
    Ok(load)
}

/// Physical data of one problem instance: Robin coefficient `alpha`,
/// ambient temperature `b` on `Γ1`, flux `q` on `Γ2`, cost weight `M`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemData {
    pub alpha: f64,
    pub b: f64,
    pub flux: BoundaryFlux,
    pub m_cost: f64,
}

impl ProblemData {
    pub fn new(alpha: f64, b: f64, flux: BoundaryFlux, m_cost: f64) -> Result<Self> {
        let data = ProblemData { alpha, b, flux, m_cost };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("alpha", self.alpha)?;
        positive("b", self.b)?;
        positive("m_cost", self.m_cost)?;
        if !self.flux.is_finite() {
            return Err(Error::InvalidParameter("flux must be finite".into()));
        }
        Ok(())
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        ProblemData::new(alpha, self.b, self.flux.clone(), self.m_cost)
    }
}

impl AssembledSystem {
    pub fn node_count(&self) -> usize {
        self.stiffness.nrows()
    }

    /// `A_α = K + α M_R`.
    pub fn robin_matrix(&self, alpha: f64) -> Result<CsrMatrix> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        Ok(self.stiffness.add_scaled(&self.boundary_mass, alpha))
    }

    /// Gram matrix of the `V` inner product, `K + M_H`.
    pub fn v_gram(&self) -> CsrMatrix {
        self.stiffness.add_scaled(&self.mass, 1.0)
    }

    pub fn h_norm(&self, v: &[f64]) -> f64 {
        self.mass.quad_form(v).max(0.0).sqrt()
    }

    pub fn h_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.mass.bilinear(u, v)
    }

    pub fn v_norm(&self, v: &[f64]) -> f64 {
        (self.stiffness.quad_form(v) + self.mass.quad_form(v)).max(0.0).sqrt()
    }

    pub fn r_norm(&self, v: &[f64]) -> f64 {
        self.boundary_mass.quad_form(v).max(0.0).sqrt()
    }

    pub fn norms(&self, v: &ScalarField) -> Result<Norms> {
        v.check_len(self.node_count())?;
        Ok(Norms {
            h: self.h_norm(v),
            v: self.v_norm(v),
            r: self.r_norm(v),
        })
    }

    /// Smallest eigenvalue of the pencil `(A_α, K + M_H)`: the discrete
    /// coercivity constant of `a_α` with respect to the `V` norm.
    ///
    /// Dense `O(N³)`; meant for small meshes.
    pub fn coercivity_estimate(&self, alpha: f64) -> Result<f64> {
        let a = self.robin_matrix(alpha)?.to_dense();
        let g = self.v_gram().to_dense();
        let chol = g.cholesky().ok_or(Error::NotPositiveDefinite { row: 0, pivot: f64::NAN })?;
        let l = chol.l();
        let l_inv = l
            .clone()
            .try_inverse()
            .ok_or(Error::NotPositiveDefinite { row: 0, pivot: f64::NAN })?;
        let mut c: DMatrix<f64> = &l_inv * a * l_inv.transpose();
        // symmetrize away rounding before the symmetric eigensolver
        let ct = c.transpose();
        c = (c + ct) * 0.5;
        let eig = c.symmetric_eigenvalues();
        Ok(eig.iter().cloned().fold(f64::INFINITY, f64::min))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub h: f64,
    pub v: f64,
    pub r: f64,
}

/// Right-hand side of the Robin state inequality:
/// `F = (g, ·)_H − (q, ·)_Q + α (b, ·)_R`.
pub fn load_vector(mesh: &Mesh, sys: &AssembledSystem, data: &ProblemData, g: &ScalarField) -> Result<Vec<f64>> {
    g.check_len(mesh.node_count())?;
    let mut f = sys.mass.mul_vec(g);
    let q = flux_load(mesh, &data.flux)?;
    for i in 0..f.len() {
        f[i] += data.alpha * data.b * sys.gamma1_load[i] - q[i];
    }
    Ok(f)
}
