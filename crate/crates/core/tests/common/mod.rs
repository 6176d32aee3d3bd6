// Independent dense oracles shared by the integration tests. Nothing here
// calls into the library's assembly or solvers: matrices come from
// quadrature on explicit shape functions, VIs are solved by enumeration or
// by a dense iteration whose answer is certified by its KKT conditions.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use obstacle_control::mesh::Mesh;
use obstacle_control::vi::StateFamily;

// degree-5 rule on the reference triangle (barycentric points, weights sum to 1)
const A1: f64 = 0.059_715_871_789_769_82;
const B1: f64 = 0.470_142_064_105_115_1;
const A2: f64 = 0.797_426_985_353_087_3;
const B2: f64 = 0.101_286_507_323_456_3;
const W0: f64 = 0.225;
const W1: f64 = 0.132_394_152_788_506_2;
const W2: f64 = 0.125_939_180_544_827_2;

pub fn triangle_rule() -> Vec<([f64; 3], f64)> {
    let mut r = vec![([1.0 / 3.0; 3], W0)];
    for (a, b, w) in [(A1, B1, W1), (A2, B2, W2)] {
        r.push(([a, b, b], w));
        r.push(([b, a, b], w));
        r.push(([b, b, a], w));
    }
    r
}

// 3-point Gauss-Legendre on [0, 1]
pub fn segment_rule() -> [(f64, f64); 3] {
    let s = (0.6f64).sqrt() / 2.0;
    [(0.5 - s, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + s, 5.0 / 18.0)]
}

/// Coefficients `(c0, cx, cy)` of the three affine shape functions.
fn shape_coefficients(p: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let v = DMatrix::from_fn(3, 3, |i, j| if j == 0 { 1.0 } else { p[i][j - 1] });
    let inv = v.try_inverse().expect("degenerate triangle");
    let mut c = [[0.0; 3]; 3];
    for (k, ck) in c.iter_mut().enumerate() {
        for (j, cj) in ck.iter_mut().enumerate() {
            *cj = inv[(j, k)];
        }
    }
    c
}

fn corners(mesh: &Mesh, t: [usize; 3]) -> [[f64; 2]; 3] {
    let n = mesh.nodes();
    [n[t[0]], n[t[1]], n[t[2]]]
}

fn area(p: [[f64; 2]; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])).abs()
}

pub struct DenseSystem {
    pub k: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// `(1, φ_i)_R`
    pub r_load: DVector<f64>,
    /// `(1, φ_i)_Q`
    pub q_load: DVector<f64>,
}

pub fn dense_assemble(mesh: &Mesh) -> DenseSystem {
    let n = mesh.node_count();
    let mut k = DMatrix::zeros(n, n);
    let mut m = DMatrix::zeros(n, n);
    for &t in mesh.triangles() {
        let p = corners(mesh, t);
        let c = shape_coefficients(p);
        let a = area(p);
        for (lam, w) in triangle_rule() {
            let x = lam[0] * p[0][0] + lam[1] * p[1][0] + lam[2] * p[2][0];
            let y = lam[0] * p[0][1] + lam[1] * p[1][1] + lam[2] * p[2][1];
            let phi: Vec<f64> = c.iter().map(|ck| ck[0] + ck[1] * x + ck[2] * y).collect();
            for i in 0..3 {
                for j in 0..3 {
                    m[(t[i], t[j])] += w * a * phi[i] * phi[j];
                    k[(t[i], t[j])] += w * a * (c[i][1] * c[j][1] + c[i][2] * c[j][2]);
                }
            }
        }
    }
    let edge_terms = |edges: &[[usize; 2]], mat: Option<&mut DMatrix<f64>>, load: &mut DVector<f64>| {
        let mut local = DMatrix::zeros(n, n);
        for e in edges {
            let (pa, pb) = (mesh.nodes()[e[0]], mesh.nodes()[e[1]]);
            let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
            for (s, w) in segment_rule() {
                let phi = [1.0 - s, s];
                for i in 0..2 {
                    load[e[i]] += w * len * phi[i];
                    for j in 0..2 {
                        local[(e[i], e[j])] += w * len * phi[i] * phi[j];
                    }
                }
            }
        }
        if let Some(mat) = mat {
            *mat += local;
        }
    };
    let mut r = DMatrix::zeros(n, n);
    let mut r_load = DVector::zeros(n);
    let mut q_load = DVector::zeros(n);
    edge_terms(mesh.gamma1_edges(), Some(&mut r), &mut r_load);
    edge_terms(mesh.gamma2_edges(), None, &mut q_load);
    DenseSystem { k, m, r, r_load, q_load }
}

/// Dense obstacle problem `u ≥ 0`, `Au ≥ f`, complementarity, on the free
/// nodes; pinned nodes carry their value.
#[derive(Clone, Debug)]
pub struct DenseVi {
    pub a: DMatrix<f64>,
    pub f: DVector<f64>,
    pub pinned: Vec<Option<f64>>,
}

impl DenseVi {
    /// Robin family with constant flux `q` on `Γ2`.
    pub fn robin(d: &DenseSystem, alpha: f64, b: f64, q: f64, g: &[f64]) -> Self {
        let a = &d.k + alpha * &d.r;
        let f = &d.m * DVector::from_column_slice(g) + alpha * b * &d.r_load - q * &d.q_load;
        DenseVi { a, f, pinned: vec![None; g.len()] }
    }

    pub fn dirichlet(d: &DenseSystem, mesh: &Mesh, b: f64, q: f64, g: &[f64]) -> Self {
        let f = &d.m * DVector::from_column_slice(g) - q * &d.q_load;
        let mut pinned = vec![None; g.len()];
        for e in mesh.gamma1_edges() {
            pinned[e[0]] = Some(b);
            pinned[e[1]] = Some(b);
        }
        DenseVi { a: d.k.clone(), f, pinned }
    }

    pub fn free(&self) -> Vec<usize> {
        (0..self.f.len()).filter(|&i| self.pinned[i].is_none()).collect()
    }

    /// Solves with the nodes of `active` at zero and the remaining free
    /// nodes satisfying the equation.
    pub fn solve_partition(&self, active: &[bool]) -> Option<DVector<f64>> {
        let n = self.f.len();
        let mut u = DVector::zeros(n);
        for i in 0..n {
            if let Some(v) = self.pinned[i] {
                u[i] = v;
            }
        }
        let idx: Vec<usize> = self.free().into_iter().filter(|&i| !active[i]).collect();
        if idx.is_empty() {
            return Some(u);
        }
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.a[(idx[r], idx[c])]);
        let fixed = &self.a * &u;
        let rhs = DVector::from_fn(idx.len(), |r, _| self.f[idx[r]] - fixed[idx[r]]);
        let x = sub.lu().solve(&rhs)?;
        for (r, &i) in idx.iter().enumerate() {
            u[i] = x[r];
        }
        Some(u)
    }

    /// Largest violation of the KKT conditions at `u`.
    pub fn kkt_defect(&self, u: &DVector<f64>) -> f64 {
        let res = &self.a * u - &self.f;
        self.free()
            .into_iter()
            .map(|i| (-u[i]).max(-res[i]).max(u[i].abs().min(res[i].abs())))
            .fold(0.0, f64::max)
    }

    /// Tries all `2^k` active sets on the `k` free nodes and returns the
    /// unique one that is primal and dual feasible.
    pub fn enumerate(&self) -> DVector<f64> {
        let free = self.free();
        assert!(free.len() <= 16, "enumeration oracle is for tiny problems");
        let n = self.f.len();
        let mut found: Vec<DVector<f64>> = Vec::new();
        for mask in 0u32..(1 << free.len()) {
            let mut active = vec![false; n];
            for (bit, &i) in free.iter().enumerate() {
                active[i] = mask & (1 << bit) != 0;
            }
            let Some(u) = self.solve_partition(&active) else { continue };
            let res = &self.a * &u - &self.f;
            let scale = 1.0 + self.f.amax();
            let ok = free.iter().all(|&i| {
                if active[i] {
                    res[i] >= -1e-12 * scale
                } else {
                    u[i] >= -1e-12 * scale
                }
            });
            if ok {
                found.push(u);
            }
        }
        assert!(!found.is_empty(), "no feasible active set");
        // degenerate nodes can make several masks valid; they must agree
        for u in &found[1..] {
            assert!((u - &found[0]).amax() < 1e-9, "enumeration found distinct solutions");
        }
        found.swap_remove(0)
    }

    /// Dense projected Gauss-Seidel, then the active set it identifies is
    /// re-solved exactly and certified.
    pub fn certified_solve(&self) -> DVector<f64> {
        let n = self.f.len();
        let mut u = DVector::from_fn(n, |i, _| self.pinned[i].unwrap_or(0.0));
        let free = self.free();
        for _ in 0..200_000 {
            let mut change: f64 = 0.0;
            for &i in &free {
                let s: f64 = (0..n).filter(|&j| j != i).map(|j| self.a[(i, j)] * u[j]).sum();
                let v = ((self.f[i] - s) / self.a[(i, i)]).max(0.0);
                change = change.max((v - u[i]).abs());
                u[i] = v;
            }
            if change < 1e-14 * (1.0 + u.amax()) {
                break;
            }
        }
        let active: Vec<bool> = (0..n).map(|i| self.pinned[i].is_none() && u[i] == 0.0).collect();
        let exact = self.solve_partition(&active).expect("singular reduced system");
        let defect = self.kkt_defect(&exact);
        assert!(defect < 1e-9 * (1.0 + self.f.amax()), "certificate failed: {defect:e}");
        exact
    }
}

pub fn dense_cost(d: &DenseSystem, u: &DVector<f64>, g: &[f64], m_cost: f64) -> f64 {
    let g = DVector::from_column_slice(g);
    0.5 * u.dot(&(&d.m * u)) + 0.5 * m_cost * g.dot(&(&d.m * &g))
}

pub fn is_z_matrix(a: &DMatrix<f64>) -> bool {
    (0..a.nrows()).all(|i| (0..a.ncols()).all(|j| i == j || a[(i, j)] <= 1e-15))
}

/// Optimal control of the Robin family when `A` is a Z-matrix. The state
/// is then the least element of `{v ≥ 0, Av ≥ f}` and `J` is monotone in
/// `v ≥ 0`, so the problem is the convex QP
/// `min ½vᵀMv + (m/2)gᵀMg  s.t.  v ≥ 0,  Av − Mg ≥ c`,
/// solved here through its nonnegatively constrained dual by projected
/// Gauss-Seidel. Returns `(g, J)`.
pub fn qp_optimal_control(vi_at_zero: &DenseVi, m_mat: &DMatrix<f64>, m_cost: f64) -> (DVector<f64>, f64) {
    assert!(is_z_matrix(&vi_at_zero.a), "QP oracle needs a Z-matrix");
    assert!(vi_at_zero.pinned.iter().all(|p| p.is_none()), "QP oracle is for the Robin family");
    let n = vi_at_zero.f.len();
    let c = &vi_at_zero.f;
    // primal x = (v, g), P = diag(M, mM), constraints Gx ≥ h
    let mut gm = DMatrix::zeros(2 * n, 2 * n);
    gm.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    gm.view_mut((n, 0), (n, n)).copy_from(&vi_at_zero.a);
    gm.view_mut((n, n), (n, n)).copy_from(&(-m_mat));
    let mut h = DVector::zeros(2 * n);
    h.rows_mut(n, n).copy_from(c);
    let m_inv = m_mat.clone().try_inverse().unwrap();
    let mut p_inv = DMatrix::zeros(2 * n, 2 * n);
    p_inv.view_mut((0, 0), (n, n)).copy_from(&m_inv);
    p_inv.view_mut((n, n), (n, n)).copy_from(&(&m_inv / m_cost));
    let q = &gm * &p_inv * gm.transpose();
    // maximize −½yᵀQy + hᵀy over y ≥ 0
    let mut y = DVector::zeros(2 * n);
    for _ in 0..2_000_000 {
        let mut change: f64 = 0.0;
        for i in 0..2 * n {
            let s = q.row(i).dot(&y.transpose()) - q[(i, i)] * y[i];
            let v = ((h[i] - s) / q[(i, i)]).max(0.0);
            change = change.max((v - y[i]).abs());
            y[i] = v;
        }
        if change < 1e-15 * (1.0 + y.amax()) {
            break;
        }
    }
    let x = &p_inv * gm.transpose() * &y;
    let v = x.rows(0, n).into_owned();
    let g = x.rows(n, n).into_owned();
    let slack = &gm * &x - &h;
    let scale = 1.0 + h.amax() + y.amax();
    let primal = slack.iter().cloned().fold(0.0, |a: f64, s| a.max(-s));
    let comp = slack.iter().zip(y.iter()).map(|(s, l)| (s * l).abs()).fold(0.0, f64::max);
    assert!(primal < 1e-9 * scale, "QP primal infeasibility {primal:e}");
    assert!(comp < 1e-9 * scale * scale, "QP complementarity {comp:e}");
    let j = 0.5 * v.dot(&(m_mat * &v)) + 0.5 * m_cost * g.dot(&(m_mat * &g));
    (g, j)
}

/// Deterministic pseudo-random values in `[lo, hi)` without touching the
/// library's generators.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_f64(&mut self, lo: f64, hi: f64) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        lo + (hi - lo) * ((self.0 >> 11) as f64 / (1u64 << 53) as f64)
    }

    pub fn vec(&mut self, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| self.next_f64(lo, hi)).collect()
    }
}

/// Every mesh in the suite with at most 12 free nodes.
pub fn tiny_configurations() -> Vec<(usize, &'static str, StateFamily)> {
    vec![
        (1, "bottom", StateFamily::Robin),
        (2, "bottom", StateFamily::Robin),
        (2, "all", StateFamily::Robin),
        (1, "bottom", StateFamily::DirichletLimit),
        (2, "bottom", StateFamily::DirichletLimit),
        (2, "bottom,left", StateFamily::DirichletLimit),
        (3, "bottom", StateFamily::DirichletLimit),
        (3, "bottom,top", StateFamily::DirichletLimit),
    ]
}
