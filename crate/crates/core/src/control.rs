//! Discrete cost functional `J(g) = ½‖u_g‖²_H + (M/2)‖g‖²_H`, its
//! minimization over nodal controls, and the convex-combination machinery
//! used to probe strict convexity of `J`.
//!
//! Controls live in the same P1 space as the state, so `(g, v)_H` is exact.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::vi::{StateSolver, ViReport};

#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    pub value: f64,
    /// `½‖u‖²_H`
    pub state_term: f64,
    /// `(M/2)‖g‖²_H`
    pub control_term: f64,
    pub state: ViReport,
}

pub fn cost(solver: &StateSolver, g: &ScalarField) -> Result<CostReport> {
    cost_from(solver, g, None)
}

fn cost_from(solver: &StateSolver, g: &ScalarField, initial: Option<&[f64]>) -> Result<CostReport> {
    let state = match initial {
        Some(u0) => solver.solve_from(g, u0)?,
        None => solver.solve(g)?,
    };
    Ok(cost_of(solver, g, state))
}

fn cost_of(solver: &StateSolver, g: &ScalarField, state: ViReport) -> CostReport {
    let sys = solver.system();
    let state_term = 0.5 * sys.mass.quad_form(&state.solution);
    let control_term = 0.5 * solver.data().m_cost * sys.mass.quad_form(g);
    CostReport {
        value: state_term + control_term,
        state_term,
        control_term,
        state,
    }
}

/// Nodal representative of the `H`-gradient of `J` at `g`, using the
/// adjoint with the active set of `state` frozen:
/// `A_II p_I = (M_H u)_I`, `p = 0` elsewhere, gradient `= M·g + p`.
///
/// Exact wherever the active set is locally constant.
pub fn gradient(solver: &StateSolver, g: &ScalarField, state: &ViReport) -> Result<ScalarField> {
    let rhs = solver.system().mass.mul_vec(&state.solution);
    let p = solver.solve_linearized(state, &rhs)?;
    let m = solver.data().m_cost;
    ScalarField::new(g.iter().zip(&p).map(|(gi, pi)| m * gi + pi).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OptimizeMethod {
    /// Steepest descent in the `H` metric with the frozen-active-set
    /// adjoint gradient and Armijo backtracking.
    AdjointGradient,
    /// Derivative-free compass search along nodal basis directions.
    CoordSearch,
}

impl OptimizeMethod {
    pub fn name(self) -> &'static str {
        match self {
            OptimizeMethod::AdjointGradient => "proj-grad-adjoint",
            OptimizeMethod::CoordSearch => "coord-search",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeOptions {
    pub method: OptimizeMethod,
    /// Stationarity target: `H`-norm of the gradient, or the compass step.
    pub tol: f64,
    pub max_iter: usize,
    pub initial: Option<ScalarField>,
    pub armijo_c: f64,
    pub backtrack: f64,
    /// First poll step of the compass search. The gradient method starts
    /// each line search at the minimizer of its quadratic model instead.
    pub initial_step: f64,
}

impl OptimizeOptions {
    pub fn new(method: OptimizeMethod) -> Self {
        OptimizeOptions {
            method,
            tol: 1e-8,
            max_iter: match method {
                OptimizeMethod::AdjointGradient => 5_000,
                OptimizeMethod::CoordSearch => 200_000,
            },
            initial: None,
            armijo_c: 1e-4,
            backtrack: 0.5,
            initial_step: 1.0,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeReport {
    pub g_opt: ScalarField,
    pub j_opt: f64,
    pub iterations: usize,
    /// Final gradient `H`-norm (gradient method) or compass step.
    pub stationarity: f64,
    pub method: OptimizeMethod,
    /// `J` after every accepted step, starting with the initial control.
    pub history: Vec<f64>,
    pub state: ViReport,
}

pub fn optimize(solver: &StateSolver, opts: &OptimizeOptions) -> Result<OptimizeReport> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {}", opts.tol)));
    }
    let g0 = match &opts.initial {
        Some(g) => {
            g.check_len(solver.node_count())?;
            g.clone()
        }
        None => ScalarField::zeros(solver.node_count()),
    };
    match opts.method {
        OptimizeMethod::AdjointGradient => gradient_descent(solver, g0, opts),
        OptimizeMethod::CoordSearch => compass_search(solver, g0, opts),
    }
}

/// Backtracking depth before the line search is declared failed.
const MAX_BACKTRACKS: usize = 40;
/// Largest number of gradient pieces gathered around one kink.
const MAX_BUNDLE: usize = 64;
/// Relative amount by which a computed `J` may exceed its predecessor on
/// a step the quadratic model certifies as a decrease.
pub const ROUNDING_SLACK: f64 = 64.0 * f64::EPSILON;

/// Gradient of the quadratic piece of `J` whose active set is `active`,
/// evaluated with the current state.
fn piece_gradient(solver: &StateSolver, g: &ScalarField, state: &ViReport, active: &[usize]) -> Result<ScalarField> {
    let rhs = solver.system().mass.mul_vec(&state.solution);
    let p = solver.solve_on_partition(active, &rhs)?;
    let m = solver.data().m_cost;
    ScalarField::new(g.iter().zip(&p).map(|(gi, pi)| m * gi + pi).collect())
}

/// Steepest descent on the frozen-active-set gradient. `J` is only
/// piecewise smooth: where the optimum sits on a kink (nodes that are
/// active with zero multiplier) the frozen gradient never vanishes. When
/// Armijo fails, the active set found just across the kink joins a bundle
/// of pieces; the step follows the minimum-norm element of the convex hull
/// of their gradients, and that norm is the stationarity measure. The
/// bundle is dropped after a full step that stays on one piece.
fn gradient_descent(solver: &StateSolver, mut g: ScalarField, opts: &OptimizeOptions) -> Result<OptimizeReport> {
    let sys = solver.system();
    let mut current = cost(solver, &g)?;
    let mut history = vec![current.value];
    let report = |g: &ScalarField, c: &CostReport, it: usize, s: f64, h: &[f64]| OptimizeReport {
        g_opt: g.clone(),
        j_opt: c.value,
        iterations: it,
        stationarity: s,
        method: OptimizeMethod::AdjointGradient,
        history: h.to_vec(),
        state: c.state.clone(),
    };
    // first entry is always the current piece
    let mut pieces: Vec<Vec<usize>> = vec![current.state.active_set.clone()];
    let mut norm = f64::INFINITY;
    for it in 0..opts.max_iter {
        let bundle = pieces
            .iter()
            .map(|a| piece_gradient(solver, &g, &current.state, a))
            .collect::<Result<Vec<_>>>()?;
        let (direction, norm2) = min_norm_element(sys, &bundle);
        norm = norm2.max(0.0).sqrt();
        if norm <= opts.tol {
            return Ok(report(&g, &current, it, norm, &history));
        }
        // On the current piece J is exactly quadratic along the direction:
        // J(g − t z) − J(g) = −t⟨G, z⟩ + ½t²(‖δu‖² + M‖z‖²), with δu the
        // linearized state response. Near stationarity this model resolves
        // decreases that are lost to rounding in the computed values.
        let response = solver.solve_linearized(&current.state, &sys.mass.mul_vec(&direction))?;
        let slope = sys.h_inner(&bundle[0], &direction);
        let curvature = sys.mass.quad_form(&response) + solver.data().m_cost * norm2;
        // the exact minimizer along the direction on this piece; a fixed
        // first step oscillates once M is near the inverse step
        let first_step = slope / curvature;
        let mut step = first_step;
        let mut accepted = None;
        let mut nearest_crossing = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial_g = ScalarField::combine(1.0, &g, -step, &direction);
            let trial = cost_from(solver, &trial_g, Some(current.state.solution.values()))?;
            let same_piece = trial.state.active_set == current.state.active_set;
            let target = opts.armijo_c * step * norm2;
            let sufficient = if same_piece {
                step * slope - 0.5 * step * step * curvature >= target
                    && trial.value <= current.value + ROUNDING_SLACK * current.value.abs()
            } else {
                trial.value < current.value - target
            };
            if sufficient {
                accepted = Some((trial_g, trial, same_piece));
                break;
            }
            if !same_piece {
                nearest_crossing = Some(trial.state.active_set);
            }
            step *= opts.backtrack;
        }
        match (accepted, nearest_crossing) {
            (Some((trial_g, trial, same_piece)), _) => {
                let smooth = same_piece && step == first_step;
                g = trial_g;
                current = trial;
                history.push(current.value);
                if smooth {
                    pieces = vec![current.state.active_set.clone()];
                } else {
                    pieces.retain(|a| *a != current.state.active_set);
                    pieces.insert(0, current.state.active_set.clone());
                    pieces.truncate(MAX_BUNDLE);
                }
            }
            (None, Some(active)) if !pieces.contains(&active) && pieces.len() < MAX_BUNDLE => {
                pieces.push(active);
            }
            // nothing new across the nearest kink, or no kink at all:
            // rounding limits further progress
            _ => {
                return Err(Error::LineSearchStall {
                    best: Box::new(report(&g, &current, it, norm, &history)),
                })
            }
        }
    }
    Err(Error::OptimizerNonConvergence {
        best: Box::new(report(&g, &current, opts.max_iter, norm, &history)),
    })
}

/// Minimum `H`-norm point of the convex hull of `vectors`; returns the
/// point and its squared norm.
fn min_norm_element(sys: &crate::assembly::AssembledSystem, vectors: &[ScalarField]) -> (ScalarField, f64) {
    let k = vectors.len();
    let mv: Vec<Vec<f64>> = vectors.iter().map(|v| sys.mass.mul_vec(v)).collect();
    let gram = DMatrix::from_fn(k, k, |i, j| dot(&vectors[i], &mv[j]));
    let weights = min_norm_weights(&gram);
    let mut point = vec![0.0; vectors[0].len()];
    for (w, v) in weights.iter().zip(vectors) {
        if *w != 0.0 {
            for (p, x) in point.iter_mut().zip(v.iter()) {
                *p += w * x;
            }
        }
    }
    let norm2 = sys.mass.quad_form(&point);
    (ScalarField::new(point).expect("finite combination"), norm2)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Wolfe's minimum-norm-point algorithm on a Gram matrix: convex weights
/// `λ` minimizing `λᵀQλ`.
pub(crate) fn min_norm_weights(gram: &DMatrix<f64>) -> Vec<f64> {
    let k = gram.nrows();
    let scale = (0..k).map(|i| gram[(i, i)]).fold(0.0, f64::max);
    let first = (0..k).min_by(|&a, &b| gram[(a, a)].total_cmp(&gram[(b, b)])).unwrap();
    let mut weights = vec![0.0; k];
    weights[first] = 1.0;
    let mut corral = vec![first];
    for _ in 0..(100 * k + 100) {
        let qx: Vec<f64> = (0..k).map(|i| (0..k).map(|j| gram[(i, j)] * weights[j]).sum()).collect();
        let xx = dot(&weights, &qx);
        let j = (0..k).min_by(|&a, &b| qx[a].total_cmp(&qx[b])).unwrap();
        if xx - qx[j] <= 1e-14 * scale || corral.contains(&j) {
            break;
        }
        corral.push(j);
        loop {
            let m = corral.len();
            let mut kkt = DMatrix::zeros(m + 1, m + 1);
            for (a, &ia) in corral.iter().enumerate() {
                for (b, &ib) in corral.iter().enumerate() {
                    kkt[(a, b)] = gram[(ia, ib)];
                }
                kkt[(a, m)] = 1.0;
                kkt[(m, a)] = 1.0;
            }
            let mut rhs = DVector::zeros(m + 1);
            rhs[m] = 1.0;
            let Some(sol) = kkt.lu().solve(&rhs) else {
                return weights;
            };
            let affine: Vec<f64> = (0..m).map(|a| sol[a]).collect();
            if affine.iter().all(|&a| a > 0.0) {
                for (a, &i) in corral.iter().enumerate() {
                    weights[i] = affine[a];
                }
                break;
            }
            // move towards the affine minimizer until a weight hits zero
            let theta = corral
                .iter()
                .enumerate()
                .filter(|&(a, _)| affine[a] <= 0.0)
                .map(|(a, &i)| weights[i] / (weights[i] - affine[a]))
                .fold(1.0, f64::min);
            for (a, &i) in corral.iter().enumerate() {
                weights[i] += theta * (affine[a] - weights[i]);
            }
            corral.retain(|&i| weights[i] > 1e-15);
            for i in 0..k {
                if !corral.contains(&i) {
                    weights[i] = 0.0;
                }
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
        }
    }
    weights
}

/// Polls `g ± step·eᵢ` in node order and accepts the first strict
/// improvement; the step is halved after a full unsuccessful poll.
fn compass_search(solver: &StateSolver, mut g: ScalarField, opts: &OptimizeOptions) -> Result<OptimizeReport> {
    let n = solver.node_count();
    let mut current = cost(solver, &g)?;
    let mut history = vec![current.value];
    let mut step = opts.initial_step;
    let mut iterations = 0;
    while step > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::OptimizerNonConvergence {
                best: Box::new(OptimizeReport {
                    g_opt: g,
                    j_opt: current.value,
                    iterations,
                    stationarity: step,
                    method: OptimizeMethod::CoordSearch,
                    history,
                    state: current.state,
                }),
            });
        }
        iterations += 1;
        let mut improved = None;
        'poll: for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut values = g.values().to_vec();
                values[i] += sign * step;
                let trial_g = ScalarField::new(values)?;
                let trial = cost_from(solver, &trial_g, Some(current.state.solution.values()))?;
                if trial.value < current.value {
                    improved = Some((trial_g, trial));
                    break 'poll;
                }
            }
        }
        match improved {
            Some((trial_g, trial)) => {
                g = trial_g;
                current = trial;
                history.push(current.value);
            }
            None => step *= 0.5,
        }
    }
    Ok(OptimizeReport {
        g_opt: g,
        j_opt: current.value,
        iterations,
        stationarity: step,
        method: OptimizeMethod::CoordSearch,
        history,
        state: current.state,
    })
}

/// States along a convex combination of two controls.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexCombination {
    pub g3: ScalarField,
    pub u1: ScalarField,
    pub u2: ScalarField,
    /// `μ u1 + (1 − μ) u2`
    pub u3: ScalarField,
    /// state for `g3 = μ g1 + (1 − μ) g2`
    pub u4: ScalarField,
}

pub fn convex_combination_states(
    solver: &StateSolver,
    g1: &ScalarField,
    g2: &ScalarField,
    mu: f64,
) -> Result<ConvexCombination> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::InvalidParameter(format!("mu must lie in [0, 1], got {mu}")));
    }
    let u1 = solver.solve(g1)?.solution;
    let u2 = solver.solve(g2)?.solution;
    let g3 = ScalarField::combine(mu, g1, 1.0 - mu, g2);
    // endpoints reuse the endpoint states exactly
    let u4 = if mu == 1.0 {
        u1.clone()
    } else if mu == 0.0 {
        u2.clone()
    } else {
        solver.solve_from(&g3, &ScalarField::combine(mu, &u1, 1.0 - mu, &u2))?.solution
    };
    let u3 = if mu == 1.0 {
        u1.clone()
    } else if mu == 0.0 {
        u2.clone()
    } else {
        ScalarField::combine(mu, &u1, 1.0 - mu, &u2)
    };
    Ok(ConvexCombination { g3, u1, u2, u3, u4 })
}

/// Slack used when classifying a margin as a violation.
pub const CONJECTURE_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ConjectureTrial {
    pub trial: usize,
    pub mu: f64,
    /// `minᵢ (u3 − u4)ᵢ`; negative means pointwise ordering fails.
    pub min_margin_pointwise: f64,
    /// `‖u3‖_H − ‖u4‖_H`
    pub h_norm_margin: f64,
    /// `μJ(g1) + (1−μ)J(g2) − J(g3) − (M/2)μ(1−μ)‖g2 − g1‖²_H`
    pub convexity_gap: f64,
    /// Defect of the exact identity linking the convexity gap to
    /// `½(‖u3‖² − ‖u4‖²)`; rounding only.
    pub identity_residual: f64,
    pub min_u4: f64,
    pub g1: ScalarField,
    pub g2: ScalarField,
}

impl ConjectureTrial {
    pub fn is_witness(&self) -> bool {
        self.min_margin_pointwise < -CONJECTURE_SLACK || self.h_norm_margin < -CONJECTURE_SLACK
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConjectureReport {
    pub seed: u64,
    pub trials: Vec<ConjectureTrial>,
}

impl ConjectureReport {
    /// Trials where `u4 ≤ u3 + slack` fails somewhere.
    pub fn pointwise_violations(&self) -> usize {
        self.trials.iter().filter(|t| t.min_margin_pointwise < -CONJECTURE_SLACK).count()
    }

    pub fn norm_violations(&self) -> usize {
        self.trials.iter().filter(|t| t.h_norm_margin < -CONJECTURE_SLACK).count()
    }

    pub fn convexity_violations(&self) -> usize {
        self.trials.iter().filter(|t| t.convexity_gap < -CONJECTURE_SLACK).count()
    }

    pub fn max_identity_residual(&self) -> f64 {
        self.trials.iter().map(|t| t.identity_residual).fold(0.0, f64::max)
    }

    /// `trial,mu,min_margin_pointwise,h_norm_margin,convexity_gap`
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "trial,mu,min_margin_pointwise,h_norm_margin,convexity_gap")?;
        for t in &self.trials {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{:.16e}",
                t.trial, t.mu, t.min_margin_pointwise, t.h_norm_margin, t.convexity_gap
            )?;
        }
        Ok(())
    }

    /// Full inputs of every trial with a negative margin.
    pub fn write_witnesses<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for t in self.trials.iter().filter(|t| t.is_witness()) {
            writeln!(w, "trial {} mu {:.16e}", t.trial, t.mu)?;
            for (name, g) in [("g1", &t.g1), ("g2", &t.g2)] {
                let values: Vec<String> = g.iter().map(|v| format!("{v:.16e}")).collect();
                writeln!(w, "{name} {}", values.join(" "))?;
            }
        }
        Ok(())
    }
}

/// Range of the random nodal controls drawn by [`check_open_problems`].
pub const TRIAL_CONTROL_RANGE: (f64, f64) = (-40.0, 20.0);

/// Samples random `(g1, g2, μ)` and records how the convex combination of
/// states compares with the state of the combined control. Only `u4 ≥ 0`
/// is enforced; every other outcome is data.
pub fn check_open_problems(solver: &StateSolver, trials: usize, seed: u64) -> Result<ConjectureReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = solver.node_count();
    let (lo, hi) = TRIAL_CONTROL_RANGE;
    let mut rows = Vec::with_capacity(trials);
    for trial in 0..trials {
        let g1 = ScalarField::new((0..n).map(|_| rng.gen_range(lo..hi)).collect())?;
        let g2 = ScalarField::new((0..n).map(|_| rng.gen_range(lo..hi)).collect())?;
        let mu: f64 = rng.gen_range(0.0..1.0);
        rows.push(evaluate_trial(solver, trial, g1, g2, mu)?);
    }
    Ok(ConjectureReport { seed, trials: rows })
}

pub fn evaluate_trial(
    solver: &StateSolver,
    trial: usize,
    g1: ScalarField,
    g2: ScalarField,
    mu: f64,
) -> Result<ConjectureTrial> {
    let sys = solver.system();
    let m = solver.data().m_cost;
    let cc = convex_combination_states(solver, &g1, &g2, mu)?;
    let min_u4 = cc.u4.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_u4 < -1e-12 {
        return Err(Error::Invariant(format!("state u4 has negative value {min_u4:e}")));
    }
    let sq = |v: &ScalarField| sys.mass.quad_form(v);
    let j = |u: &ScalarField, g: &ScalarField| 0.5 * sq(u) + 0.5 * m * sq(g);
    let (j1, j2, j3) = (j(&cc.u1, &g1), j(&cc.u2, &g2), j(&cc.u4, &cc.g3));
    let weight = mu * (1.0 - mu);
    let dg = sq(&g2.sub(&g1));
    let du = sq(&cc.u2.sub(&cc.u1));
    let convexity_gap = mu * j1 + (1.0 - mu) * j2 - j3 - 0.5 * m * weight * dg;
    let identity_residual = (convexity_gap - 0.5 * weight * du - 0.5 * (sq(&cc.u3) - sq(&cc.u4))).abs();
    let min_margin_pointwise = cc
        .u3
        .iter()
        .zip(cc.u4.iter())
        .map(|(a, b)| a - b)
        .fold(f64::INFINITY, f64::min);
    Ok(ConjectureTrial {
        trial,
        mu,
        min_margin_pointwise,
        h_norm_margin: sys.h_norm(&cc.u3) - sys.h_norm(&cc.u4),
        convexity_gap,
        identity_residual,
        min_u4,
        g1,
        g2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble, AssembledSystem, BoundaryFlux, ProblemData};
    use crate::mesh::{Mesh, SideSet};
    use crate::vi::{SolverOptions, StateFamily};

    fn setup(n: usize) -> (Mesh, AssembledSystem) {
        let m = Mesh::unit_square(n, SideSet::BOTTOM).unwrap();
        let s = assemble(&m).unwrap();
        (m, s)
    }

    #[test]
    fn constant_state_cost_is_half_area() {
        let (m, s) = setup(4);
        let data = ProblemData::new(1.0, 1.0, BoundaryFlux::zero(), 1.0).unwrap();
        let solver = StateSolver::new(&m, &s, &data, StateFamily::Robin, SolverOptions::default()).unwrap();
        let c = cost(&solver, &ScalarField::zeros(m.node_count())).unwrap();
        assert!((c.value - 0.5).abs() < 1e-12);
        assert_eq!(c.control_term, 0.0);
        assert_eq!(c.value, c.state_term + c.control_term);
    }

    #[test]
    fn doubling_m_doubles_control_term() {
        let (m, s) = setup(4);
        let g = ScalarField::new((0..25).map(|i| (i as f64 * 0.7).sin() * 3.0).collect()).unwrap();
        let d1 = ProblemData::new(2.0, 1.0, BoundaryFlux::Constant(1.0), 1.5).unwrap();
        let d2 = ProblemData { m_cost: 3.0, ..d1.clone() };
        let s1 = StateSolver::new(&m, &s, &d1, StateFamily::Robin, SolverOptions::default()).unwrap();
        let s2 = StateSolver::new(&m, &s, &d2, StateFamily::Robin, SolverOptions::default()).unwrap();
        let (c1, c2) = (cost(&s1, &g).unwrap(), cost(&s2, &g).unwrap());
        assert_eq!(c2.control_term, 2.0 * c1.control_term);
        assert_eq!(c2.state_term, c1.state_term);
    }

    #[test]
    fn mu_outside_unit_interval_rejected() {
        let (m, s) = setup(2);
        let data = ProblemData::new(1.0, 1.0, BoundaryFlux::zero(), 1.0).unwrap();
        let solver = StateSolver::new(&m, &s, &data, StateFamily::Robin, SolverOptions::default()).unwrap();
        let g = ScalarField::zeros(9);
        assert!(convex_combination_states(&solver, &g, &g, 1.5).is_err());
        assert!(convex_combination_states(&solver, &g, &g, -0.1).is_err());
    }

    #[test]
    fn endpoints_and_degenerate_combinations() {
        let (m, s) = setup(4);
        let data = ProblemData::new(1.0, 1.0, BoundaryFlux::Constant(1.0), 1.0).unwrap();
        let solver = StateSolver::new(&m, &s, &data, StateFamily::Robin, SolverOptions::default()).unwrap();
        let g1 = ScalarField::new((0..25).map(|i| -10.0 + i as f64).collect()).unwrap();
        let g2 = ScalarField::constant(25, -3.0);
        let at0 = convex_combination_states(&solver, &g1, &g2, 0.0).unwrap();
        assert_eq!(at0.u3, at0.u2);
        assert_eq!(at0.u4, at0.u2);
        let at1 = convex_combination_states(&solver, &g1, &g2, 1.0).unwrap();
        assert_eq!(at1.u3, at1.u1);
        assert_eq!(at1.u4, at1.u1);
        for mu in [0.2, 0.5, 0.9] {
            let same = convex_combination_states(&solver, &g1, &g1, mu).unwrap();
            assert!(same.u3.sub(&same.u4).max_abs() < 1e-12);
            let t = evaluate_trial(&solver, 0, g1.clone(), g1.clone(), mu).unwrap();
            assert!(!t.is_witness());
            assert!(t.convexity_gap.abs() < 1e-9);
        }
    }

    #[test]
    fn zero_trials_rejected() {
        let (m, s) = setup(2);
        let data = ProblemData::new(1.0, 1.0, BoundaryFlux::zero(), 1.0).unwrap();
        let solver = StateSolver::new(&m, &s, &data, StateFamily::Robin, SolverOptions::default()).unwrap();
        assert!(check_open_problems(&solver, 0, 1).is_err());
    }
}
