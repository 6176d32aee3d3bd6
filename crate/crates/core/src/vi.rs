//! Discrete obstacle problems `find u ≥ ℓ with (Au − F)ᵢ ≥ 0 and
//! (uᵢ − ℓᵢ)(Au − F)ᵢ = 0` on the free nodes, with optional Dirichlet nodes.
//!
//! Two independent algorithms are provided: projected SOR and a
//! primal-dual active set method. [`StateSolver`] builds the problem for
//! either state family (Robin on `Γ1`, or its Dirichlet limit `u = b`).

use crate::assembly::{flux_load, AssembledSystem, ProblemData};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::mesh::Mesh;
use crate::sparse::{BandCholesky, CsrMatrix};

#[derive(Clone, Copy, Debug)]
pub struct ViProblem<'a> {
    pub matrix: &'a CsrMatrix,
    pub load: &'a [f64],
    pub lower: &'a [f64],
    /// `Some(value)` pins the node.
    pub dirichlet: &'a [Option<f64>],
}

impl<'a> ViProblem<'a> {
    pub fn new(
        matrix: &'a CsrMatrix,
        load: &'a [f64],
        lower: &'a [f64],
        dirichlet: &'a [Option<f64>],
    ) -> Result<Self> {
        let n = matrix.nrows();
        for len in [matrix.ncols(), load.len(), lower.len(), dirichlet.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, found: len });
            }
        }
        for (i, d) in dirichlet.iter().enumerate() {
            if let Some(v) = d {
                if *v < lower[i] {
                    return Err(Error::InvalidParameter(format!(
                        "Dirichlet value {v} at node {i} violates the obstacle {}",
                        lower[i]
                    )));
                }
            }
        }
        Ok(ViProblem { matrix, load, lower, dirichlet })
    }

    pub fn dim(&self) -> usize {
        self.load.len()
    }

    pub fn is_free(&self, i: usize) -> bool {
        self.dirichlet[i].is_none()
    }

    fn pinned(&self, mut u: Vec<f64>) -> Vec<f64> {
        for (i, d) in self.dirichlet.iter().enumerate() {
            if let Some(v) = d {
                u[i] = *v;
            }
        }
        u
    }

    fn check_diagonal(&self) -> Result<Vec<f64>> {
        let diag = self.matrix.diagonal();
        for i in (0..self.dim()).filter(|&i| self.is_free(i)) {
            if !(diag[i] > 0.0) {
                return Err(Error::NotPositiveDefinite { row: i, pivot: diag[i] });
            }
        }
        Ok(diag)
    }
}

/// `maxᵢ |min(uᵢ − ℓᵢ, (Au − F)ᵢ)|` over the free nodes.
pub fn complementarity_residual(p: &ViProblem, u: &[f64]) -> f64 {
    (0..p.dim())
        .filter(|&i| p.is_free(i))
        .map(|i| {
            let r = p.matrix.row_dot(i, u) - p.load[i];
            (u[i] - p.lower[i]).min(r).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViReport {
    pub solution: ScalarField,
    pub iterations: usize,
    pub residual: f64,
    /// Free nodes where the obstacle binds.
    pub active_set: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SolverKind {
    Psor,
    ActiveSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub kind: SolverKind,
    /// Bound on the complementarity residual.
    pub tol: f64,
    /// Defaults to 10⁵ sweeps for PSOR and 100 for the active set method.
    pub max_iter: Option<usize>,
    pub omega: f64,
    pub dual_tol: f64,
    /// Run the other algorithm as well and require agreement to `10·tol`.
    pub cross_check: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            kind: SolverKind::ActiveSet,
            tol: 1e-10,
            max_iter: None,
            omega: 1.5,
            dual_tol: 1e-12,
            cross_check: false,
        }
    }
}

impl SolverOptions {
    pub fn psor() -> Self {
        SolverOptions {
            kind: SolverKind::Psor,
            ..Default::default()
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn iteration_limit(&self, kind: SolverKind) -> usize {
        self.max_iter.unwrap_or(match kind {
            SolverKind::Psor => 100_000,
            SolverKind::ActiveSet => 100,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.omega > 0.0 && self.omega < 2.0) {
            return Err(Error::InvalidParameter(format!("omega must lie in (0, 2), got {}", self.omega)));
        }
        Ok(())
    }
}

fn active_nodes(p: &ViProblem, u: &[f64]) -> Vec<usize> {
    (0..p.dim()).filter(|&i| p.is_free(i) && u[i] <= p.lower[i]).collect()
}

/// Projected successive over-relaxation.
pub fn solve_psor(p: &ViProblem, opts: &SolverOptions, initial: Option<&[f64]>) -> Result<ViReport> {
    opts.validate()?;
    let diag = p.check_diagonal()?;
    let n = p.dim();
    let start = match initial {
        Some(u0) if u0.len() != n => return Err(Error::DimensionMismatch { expected: n, found: u0.len() }),
        Some(u0) => u0.iter().zip(p.lower).map(|(u, l)| u.max(*l)).collect(),
        None => p.lower.to_vec(),
    };
    let mut u = p.pinned(start);
    let max_iter = opts.iteration_limit(SolverKind::Psor);
    let mut residual = f64::INFINITY;
    for sweep in 1..=max_iter {
        for i in 0..n {
            if !p.is_free(i) {
                continue;
            }
            let r = p.load[i] - p.matrix.row_dot(i, &u);
            u[i] = (u[i] + opts.omega * r / diag[i]).max(p.lower[i]);
        }
        residual = complementarity_residual(p, &u);
        if !residual.is_finite() {
            return Err(Error::NotPositiveDefinite { row: 0, pivot: residual });
        }
        if residual <= opts.tol {
            return Ok(ViReport {
                active_set: active_nodes(p, &u),
                solution: ScalarField::new(u)?,
                iterations: sweep,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        solver: "projected SOR",
        iterations: max_iter,
        residual,
    })
}

/// Solves `A_II u_I = F_I − A_I,rest u_rest` for the free, non-active nodes.
fn solve_inactive(p: &ViProblem, u: &mut [f64], inactive: &[usize]) -> Result<()> {
    if inactive.is_empty() {
        return Ok(());
    }
    let mut is_inactive = vec![false; p.dim()];
    for &i in inactive {
        is_inactive[i] = true;
    }
    let rhs: Vec<f64> = inactive
        .iter()
        .map(|&i| {
            p.load[i]
                - p.matrix
                    .row(i)
                    .filter(|(j, _)| !is_inactive[*j])
                    .map(|(j, a)| a * u[j])
                    .sum::<f64>()
        })
        .collect();
    let chol = BandCholesky::factor_subset(p.matrix, inactive)?;
    for (&i, v) in inactive.iter().zip(chol.solve(&rhs)) {
        u[i] = v;
    }
    Ok(())
}

/// Primal-dual active set method (semismooth Newton on the complementarity
/// conditions). Terminates when the active set repeats; if the sets cycle
/// instead, the projected iterate is accepted when it meets the tolerance.
pub fn solve_active_set(p: &ViProblem, opts: &SolverOptions, initial: Option<&[f64]>) -> Result<ViReport> {
    opts.validate()?;
    let diag = p.check_diagonal()?;
    let n = p.dim();
    let mut u = p.pinned(match initial {
        Some(u0) if u0.len() != n => return Err(Error::DimensionMismatch { expected: n, found: u0.len() }),
        Some(u0) => u0.to_vec(),
        None => p.lower.to_vec(),
    });
    let select = |u: &[f64], multiplier: &dyn Fn(usize) -> f64| -> Vec<bool> {
        (0..n)
            .map(|i| p.is_free(i) && multiplier(i) + diag[i] * (p.lower[i] - u[i]) > opts.dual_tol)
            .collect()
    };
    let mut active = match initial {
        Some(_) => {
            let snapshot = u.clone();
            select(&u, &|i| p.matrix.row_dot(i, &snapshot) - p.load[i])
        }
        None => vec![false; n],
    };
    let max_iter = opts.iteration_limit(SolverKind::ActiveSet);
    let mut seen: Vec<Vec<bool>> = Vec::new();
    for it in 1..=max_iter {
        let inactive: Vec<usize> = (0..n).filter(|&i| p.is_free(i) && !active[i]).collect();
        for i in (0..n).filter(|&i| active[i]) {
            u[i] = p.lower[i];
        }
        solve_inactive(p, &mut u, &inactive)?;
        let multiplier: Vec<f64> = (0..n)
            .map(|i| if active[i] { p.matrix.row_dot(i, &u) - p.load[i] } else { 0.0 })
            .collect();
        let next = select(&u, &|i| multiplier[i]);
        // near-degenerate nodes can make the sets cycle; a cycle is accepted
        // once the projected iterate meets the tolerance
        let cycled = next != active && seen.contains(&next);
        let clamped: Vec<f64> = (0..n).map(|i| if p.is_free(i) { u[i].max(p.lower[i]) } else { u[i] }).collect();
        let residual = complementarity_residual(p, &clamped);
        if next == active || (cycled && residual <= opts.tol) {
            u = clamped;
            if residual > opts.tol {
                return Err(Error::NonConvergence {
                    solver: "primal-dual active set",
                    iterations: it,
                    residual,
                });
            }
            return Ok(ViReport {
                active_set: (0..n).filter(|&i| active[i] || (p.is_free(i) && u[i] <= p.lower[i])).collect(),
                solution: ScalarField::new(u)?,
                iterations: it,
                residual,
            });
        }
        seen.push(std::mem::replace(&mut active, next));
    }
    Err(Error::NonConvergence {
        solver: "primal-dual active set",
        iterations: max_iter,
        residual: complementarity_residual(p, &u),
    })
}

/// Dispatches to the configured algorithm; in cross-check mode the other
/// algorithm is run with a 10⁴ times tighter tolerance and the two
/// solutions must agree to `10·tol` in the max norm.
pub fn solve(p: &ViProblem, opts: &SolverOptions, initial: Option<&[f64]>) -> Result<ViReport> {
    let run = |kind: SolverKind, o: &SolverOptions| match kind {
        SolverKind::Psor => solve_psor(p, o, initial),
        SolverKind::ActiveSet => solve_active_set(p, o, initial),
    };
    let report = run(opts.kind, opts)?;
    if opts.cross_check {
        let other = match opts.kind {
            SolverKind::Psor => SolverKind::ActiveSet,
            SolverKind::ActiveSet => SolverKind::Psor,
        };
        let tight = opts.clone().with_tol(opts.tol * 1e-4);
        let check = run(other, &tight)?;
        let difference = report.solution.sub(&check.solution).max_abs();
        let allowed = 10.0 * opts.tol;
        if difference > allowed {
            return Err(Error::CrossCheck { difference, allowed });
        }
    }
    Ok(report)
}

/// Which discrete state system to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StateFamily {
    /// `A = K + αM_R`, `F = M_H g − q + α b` on `Γ1`; obstacle `u ≥ 0`.
    Robin,
    /// `A = K` with `u = b` pinned on `Γ1`, `F = M_H g − q`; obstacle `u ≥ 0`.
    DirichletLimit,
}

impl StateFamily {
    pub fn name(self) -> &'static str {
        match self {
            StateFamily::Robin => "robin",
            StateFamily::DirichletLimit => "dirichlet",
        }
    }
}

/// The state map `g ↦ u_g` for fixed mesh, data and family.
#[derive(Clone, Debug)]
pub struct StateSolver<'a> {
    mesh: &'a Mesh,
    sys: &'a AssembledSystem,
    data: ProblemData,
    family: StateFamily,
    options: SolverOptions,
    matrix: CsrMatrix,
    fixed_load: Vec<f64>,
    lower: Vec<f64>,
    dirichlet: Vec<Option<f64>>,
}

impl<'a> StateSolver<'a> {
    pub fn new(
        mesh: &'a Mesh,
        sys: &'a AssembledSystem,
        data: &ProblemData,
        family: StateFamily,
        options: SolverOptions,
    ) -> Result<Self> {
        data.validate()?;
        options.validate()?;
        let n = mesh.node_count();
        if sys.node_count() != n {
            return Err(Error::DimensionMismatch { expected: n, found: sys.node_count() });
        }
        let q = flux_load(mesh, &data.flux)?;
        let mut dirichlet = vec![None; n];
        let (matrix, fixed_load) = match family {
            StateFamily::Robin => {
                let load = (0..n)
                    .map(|i| data.alpha * data.b * sys.gamma1_load[i] - q[i])
                    .collect();
                (sys.robin_matrix(data.alpha)?, load)
            }
            StateFamily::DirichletLimit => {
                for &i in &sys.gamma1_nodes {
                    dirichlet[i] = Some(data.b);
                }
                (sys.stiffness.clone(), q.iter().map(|v| -v).collect())
            }
        };
        Ok(StateSolver {
            mesh,
            sys,
            data: data.clone(),
            family,
            options,
            matrix,
            fixed_load,
            lower: vec![0.0; n],
            dirichlet,
        })
    }

    pub fn mesh(&self) -> &'a Mesh {
        self.mesh
    }

    pub fn system(&self) -> &'a AssembledSystem {
        self.sys
    }

    pub fn data(&self) -> &ProblemData {
        &self.data
    }

    pub fn family(&self) -> StateFamily {
        self.family
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn dirichlet(&self) -> &[Option<f64>] {
        &self.dirichlet
    }

    pub fn node_count(&self) -> usize {
        self.mesh.node_count()
    }

    pub fn load(&self, g: &ScalarField) -> Result<Vec<f64>> {
        g.check_len(self.node_count())?;
        let mut f = self.sys.mass.mul_vec(g);
        for (fi, c) in f.iter_mut().zip(&self.fixed_load) {
            *fi += c;
        }
        Ok(f)
    }

    pub fn solve(&self, g: &ScalarField) -> Result<ViReport> {
        self.solve_with(g, &self.options, None)
    }

    /// Warm-started solve.
    pub fn solve_from(&self, g: &ScalarField, initial: &[f64]) -> Result<ViReport> {
        self.solve_with(g, &self.options, Some(initial))
    }

    pub fn solve_with(&self, g: &ScalarField, opts: &SolverOptions, initial: Option<&[f64]>) -> Result<ViReport> {
        let load = self.load(g)?;
        let p = ViProblem::new(&self.matrix, &load, &self.lower, &self.dirichlet)?;
        solve(&p, opts, initial)
    }

    /// Solves the linearization around `state`: `A_II x_I = rhs_I` on the
    /// free nodes outside the active set, `x = 0` elsewhere.
    pub fn solve_linearized(&self, state: &ViReport, rhs: &[f64]) -> Result<Vec<f64>> {
        self.solve_on_partition(&state.active_set, rhs)
    }

    /// As [`solve_linearized`](Self::solve_linearized) with an explicit
    /// active set.
    pub fn solve_on_partition(&self, active_set: &[usize], rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.node_count();
        if rhs.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: rhs.len() });
        }
        let mut active = vec![false; n];
        for &i in active_set {
            if i >= n {
                return Err(Error::DimensionMismatch { expected: n, found: i + 1 });
            }
            active[i] = true;
        }
        let inactive: Vec<usize> = (0..n).filter(|&i| self.dirichlet[i].is_none() && !active[i]).collect();
        let mut x = vec![0.0; n];
        if inactive.is_empty() {
            return Ok(x);
        }
        let chol = BandCholesky::factor_subset(&self.matrix, &inactive)?;
        let local_rhs: Vec<f64> = inactive.iter().map(|&i| rhs[i]).collect();
        for (&i, v) in inactive.iter().zip(chol.solve(&local_rhs)) {
            x[i] = v;
        }
        Ok(x)
    }
}

/// One-shot state solve.
pub fn solve_state(
    mesh: &Mesh,
    sys: &AssembledSystem,
    data: &ProblemData,
    g: &ScalarField,
    family: StateFamily,
    options: &SolverOptions,
) -> Result<ViReport> {
    StateSolver::new(mesh, sys, data, family, options.clone())?.solve(g)
}
