//! Refinement studies in `h`, in `α`, and jointly.
//!
//! Continuous solutions are not available, so every "limit" object is a
//! discrete solve on a finer mesh (a *surrogate reference*). Coarse fields
//! are carried to the reference mesh by exact nested prolongation and
//! measured in reference-mesh norms.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use crate::assembly::{assemble, AssembledSystem};
use crate::benchmark::Benchmark;
use crate::control::{cost, optimize, OptimizeOptions, OptimizeReport};
use crate::error::{Error, Result};
use crate::field::{interpolation_error, ScalarField};
use crate::mesh::Mesh;
use crate::vi::{StateFamily, StateSolver};

/// Errors below `ERROR_FLOOR_FACTOR × solver tol` are excluded from fits.
pub const ERROR_FLOOR_FACTOR: f64 = 100.0;

/// Errors at or below this are rounding noise of two solves that agree
/// exactly in exact arithmetic, and are recorded as zero.
pub const ROUNDING_ZERO: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NormKind {
    H,
    V,
    R,
    /// Absolute difference of scalars (cost values).
    Abs,
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormKind::H => "H",
            NormKind::V => "V",
            NormKind::R => "R",
            NormKind::Abs => "abs",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateRow {
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateTable {
    /// `h`, `alpha`, or `alpha_minus_1`.
    pub parameter: String,
    pub norm: NormKind,
    pub rows: Vec<RateRow>,
    /// `None` when fewer than two rows clear the floor.
    pub fitted_order: Option<f64>,
    /// Row indices left out of the fit (zero or below the floor).
    pub excluded: Vec<usize>,
    pub floor: f64,
    pub reference: String,
}

impl RateTable {
    pub fn new(parameter: &str, norm: NormKind, mut rows: Vec<RateRow>, floor: f64, reference: String) -> Result<Self> {
        if rows.iter().any(|r| !(r.value > 0.0 && r.value.is_finite())) {
            return Err(Error::InvalidParameter("parameter values must be positive".into()));
        }
        if rows.iter().any(|r| !(r.error >= 0.0 && r.error.is_finite())) {
            return Err(Error::Invariant("errors must be finite and nonnegative".into()));
        }
        let up = rows.windows(2).all(|w| w[0].value < w[1].value);
        let down = rows.windows(2).all(|w| w[0].value > w[1].value);
        if !(up || down) {
            return Err(Error::InvalidParameter("parameter values must be strictly monotone".into()));
        }
        for r in rows.iter_mut().filter(|r| r.error <= ROUNDING_ZERO) {
            r.error = 0.0;
        }
        let excluded: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].error == 0.0 || rows[i].error < floor).collect();
        let kept: Vec<(f64, f64)> = (0..rows.len())
            .filter(|i| !excluded.contains(i))
            .map(|i| (rows[i].value, rows[i].error))
            .collect();
        let fitted_order = if kept.len() >= 2 { Some(fit_order(&kept)?) } else { None };
        Ok(RateTable {
            parameter: parameter.into(),
            norm,
            rows,
            fitted_order,
            excluded,
            floor,
            reference,
        })
    }

    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }

    pub fn all_zero(&self) -> bool {
        self.rows.iter().all(|r| r.error == 0.0)
    }

    /// In row order.
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].error < w[0].error)
    }

    /// Non-increasing up to `slack`, ignoring pairs already below the floor.
    pub fn non_increasing_to_floor(&self, slack: f64) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].error <= w[0].error + slack || (w[0].error < self.floor && w[1].error < self.floor))
    }

    /// `param,value,error,norm`
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "param,value,error,norm")?;
        for r in &self.rows {
            writeln!(w, "{},{:.16e},{:.16e},{}", self.parameter, r.value, r.error, self.norm)?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let order = match self.fitted_order {
            Some(p) => format!("{p:.6}"),
            None => "none".into(),
        };
        let mut s = format!("{} error vs {}: fitted order {order}", self.norm, self.parameter);
        if !self.excluded.is_empty() {
            let zero = self.excluded.iter().filter(|&&i| self.rows[i].error == 0.0).count();
            if zero > 0 {
                s.push_str(&format!("; {zero} zero errors excluded from fit"));
            }
            if zero < self.excluded.len() {
                s.push_str(&format!(
                    "; {} rows below floor {:e} excluded from fit",
                    self.excluded.len() - zero,
                    self.floor
                ));
            }
        }
        s
    }
}

/// Least-squares slope of `log e` against `log p` over `(p, e)` pairs.
/// Zero errors are dropped.
pub fn fit_order(points: &[(f64, f64)]) -> Result<f64> {
    if points.iter().any(|&(p, e)| !(p > 0.0) || !(e >= 0.0) || !p.is_finite() || !e.is_finite()) {
        return Err(Error::InvalidParameter(
            "fit needs positive parameters and nonnegative errors".into(),
        ));
    }
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(_, e)| e > 0.0)
        .map(|&(p, e)| (p.ln(), e.ln()))
        .collect();
    if logs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} nonzero errors; at least 2 are needed",
            logs.len()
        )));
    }
    let k = logs.len() as f64;
    let mx = logs.iter().map(|l| l.0).sum::<f64>() / k;
    let my = logs.iter().map(|l| l.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|l| (l.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|l| (l.0 - mx) * (l.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all parameters coincide".into()));
    }
    Ok(sxy / sxx)
}

fn check_levels(levels: &[usize], reference: usize, min_levels: usize) -> Result<()> {
    if levels.len() < min_levels {
        return Err(Error::InvalidParameter(format!(
            "need at least {min_levels} levels, got {}",
            levels.len()
        )));
    }
    if levels[0] == 0 || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("levels must be positive and strictly increasing".into()));
    }
    let finest = *levels.last().unwrap();
    if reference <= finest || levels.iter().any(|&n| reference % n != 0) {
        return Err(Error::InvalidParameter(format!(
            "reference n = {reference} must be finer than and nested with every level"
        )));
    }
    Ok(())
}

fn h_of(n: usize) -> f64 {
    std::f64::consts::SQRT_2 / n as f64
}

struct Level {
    mesh: Mesh,
    sys: AssembledSystem,
}

impl Level {
    fn new(bench: &Benchmark, n: usize) -> Result<Self> {
        let mesh = bench.mesh(n)?;
        let sys = assemble(&mesh)?;
        Ok(Level { mesh, sys })
    }

    fn solver<'a>(&'a self, bench: &'a Benchmark, family: StateFamily) -> Result<StateSolver<'a>> {
        StateSolver::new(&self.mesh, &self.sys, &bench.data, family, bench.solver.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HSweep {
    /// `V`-norm of `u_h − u_ref` on the reference mesh.
    pub state: RateTable,
    /// `|J_h(g_h) − J_ref(g_ref)|`
    pub cost: RateTable,
}

/// State and cost errors of the Robin system over `levels` against a
/// reference solve at `reference` subdivisions. The control is realized
/// once on the coarsest mesh and carried exactly to the finer nested
/// meshes, so every level sees the same `g`.
pub fn h_sweep(bench: &Benchmark, levels: &[usize], reference: usize) -> Result<HSweep> {
    check_levels(levels, reference, 4)?;
    if levels.iter().any(|&n| n % levels[0] != 0) {
        return Err(Error::InvalidParameter("levels must be nested with the coarsest one".into()));
    }
    let coarse = bench.mesh(levels[0])?;
    let g0 = bench.control.realize(&coarse)?;
    let fine = Level::new(bench, reference)?;
    let fine_solver = fine.solver(bench, StateFamily::Robin)?;
    let fine_cost = cost(&fine_solver, &g0.prolongate(&coarse, &fine.mesh)?)?;
    let mut state_rows = Vec::new();
    let mut cost_rows = Vec::new();
    for &n in levels {
        let level = Level::new(bench, n)?;
        let solver = level.solver(bench, StateFamily::Robin)?;
        let c = cost(&solver, &g0.prolongate(&coarse, &level.mesh)?)?;
        let lifted = c.state.solution.prolongate(&level.mesh, &fine.mesh)?;
        let diff = lifted.sub(&fine_cost.state.solution);
        state_rows.push(RateRow { value: h_of(n), error: fine.sys.v_norm(&diff) });
        cost_rows.push(RateRow { value: h_of(n), error: (c.value - fine_cost.value).abs() });
    }
    let floor = ERROR_FLOOR_FACTOR * bench.solver.tol;
    let reference = format!(
        "surrogate_reference: robin state on n={reference} (h={:.6e}), alpha={}",
        h_of(reference),
        bench.data.alpha
    );
    Ok(HSweep {
        state: RateTable::new("h", NormKind::V, state_rows, floor, reference.clone())?,
        cost: RateTable::new("h", NormKind::Abs, cost_rows, floor, reference)?,
    })
}

pub fn h_sweep_state(bench: &Benchmark, levels: &[usize], reference: usize) -> Result<RateTable> {
    Ok(h_sweep(bench, levels, reference)?.state)
}

pub fn h_sweep_cost(bench: &Benchmark, levels: &[usize], reference: usize) -> Result<RateTable> {
    Ok(h_sweep(bench, levels, reference)?.cost)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaSweep {
    /// `V`-norm of `u_α − u_∞` against `α`.
    pub v: RateTable,
    /// `R`-norm of the same difference against `α − 1`.
    pub r: RateTable,
}

/// Robin states on a fixed mesh for increasing `α`, compared with the
/// Dirichlet-limit state on the same mesh.
pub fn alpha_sweep_state(bench: &Benchmark, n: usize, alphas: &[f64]) -> Result<AlphaSweep> {
    if alphas.len() < 3 || alphas.windows(2).any(|w| !(w[0] < w[1])) || !(alphas[0] > 1.0) {
        return Err(Error::InvalidParameter(
            "need at least 3 strictly increasing alpha values, all above 1".into(),
        ));
    }
    let level = Level::new(bench, n)?;
    let g = bench.control.realize(&level.mesh)?;
    let limit = level.solver(bench, StateFamily::DirichletLimit)?.solve(&g)?.solution;
    let mut v_rows = Vec::new();
    let mut r_rows = Vec::new();
    for &alpha in alphas {
        let b = bench.with_alpha(alpha)?;
        let u = level.solver(&b, StateFamily::Robin)?.solve(&g)?.solution;
        let diff = u.sub(&limit);
        v_rows.push(RateRow { value: alpha, error: level.sys.v_norm(&diff) });
        r_rows.push(RateRow { value: alpha - 1.0, error: level.sys.r_norm(&diff) });
    }
    let floor = ERROR_FLOOR_FACTOR * bench.solver.tol;
    let reference = format!("dirichlet-limit state on n={n} (h={:.6e})", h_of(n));
    Ok(AlphaSweep {
        v: RateTable::new("alpha", NormKind::V, v_rows, floor, reference.clone())?,
        r: RateTable::new("alpha_minus_1", NormKind::R, r_rows, floor, reference)?,
    })
}

/// `H` and `V` errors of the nodal interpolant of `f` across `levels`.
pub fn interpolation_sweep<F, G>(bench: &Benchmark, levels: &[usize], f: F, grad: G) -> Result<(RateTable, RateTable)>
where
    F: Fn(f64, f64) -> f64,
    G: Fn(f64, f64) -> [f64; 2],
{
    if levels.len() < 2 || levels[0] == 0 || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("need at least 2 strictly increasing levels".into()));
    }
    let mut h_rows = Vec::new();
    let mut v_rows = Vec::new();
    for &n in levels {
        let e = interpolation_error(&bench.mesh(n)?, &f, &grad)?;
        h_rows.push(RateRow { value: h_of(n), error: e.h_norm });
        v_rows.push(RateRow { value: h_of(n), error: e.v_norm });
    }
    let reference = "exact integrand, degree-5 quadrature".to_string();
    Ok((
        RateTable::new("h", NormKind::H, h_rows, 0.0, reference.clone())?,
        RateTable::new("h", NormKind::V, v_rows, 0.0, reference)?,
    ))
}

/// Lattice of `(n, α)` optimal-control solves plus the two limit edges.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagramConfig {
    pub levels: Vec<usize>,
    pub alphas: Vec<f64>,
    /// Subdivisions of the surrogate mesh; at least two refinements past
    /// the finest level.
    pub reference: usize,
    pub optimize: OptimizeOptions,
}

impl DiagramConfig {
    /// `α_k = 1/h_k`, reference four times finer than the finest level.
    pub fn diagonal(levels: Vec<usize>, optimize: OptimizeOptions) -> Self {
        let alphas = levels.iter().map(|&n| 1.0 / h_of(n)).collect();
        let reference = 4 * levels.last().copied().unwrap_or(1);
        DiagramConfig { levels, alphas, reference, optimize }
    }
}

/// Distances at or below this are treated as converged when checking
/// monotonicity; it sits two orders above the optimizer's stationarity
/// tolerance.
pub const DIAGRAM_FLOOR_FACTOR: f64 = 100.0;

#[derive(Clone, Debug, PartialEq)]
pub struct CornerPoint {
    pub n: usize,
    pub h: f64,
    /// `None` for the Dirichlet-limit problem.
    pub alpha: Option<f64>,
    pub j_opt: f64,
    /// `H`-norm of the optimal control on its own mesh.
    pub g_norm: f64,
    /// Distance to the reference-mesh optimum with the same `α`.
    pub d1: Option<f64>,
    /// Distance to the Dirichlet-limit optimum on the same mesh.
    pub d2: Option<f64>,
    /// Distance to the reference Dirichlet-limit optimum, lattice diagonal only.
    pub d3: Option<f64>,
    pub surrogate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagram {
    pub config: DiagramConfig,
    pub points: Vec<CornerPoint>,
    /// One sequence per `α` column (Dirichlet limit last), ordered by `h` decreasing.
    pub d1: Vec<Vec<f64>>,
    /// One sequence per mesh row (reference last), ordered by `α` increasing.
    pub d2: Vec<Vec<f64>>,
    pub d3: Vec<f64>,
    pub floor: f64,
    /// Sequences that fail to decrease.
    pub flags: Vec<String>,
}

impl Diagram {
    pub fn is_monotone(&self) -> bool {
        self.flags.is_empty()
    }

    /// `h,alpha,J_opt,g_norm,d1,d2,d3`; `alpha = inf` marks the Dirichlet
    /// limit, empty cells are undefined distances.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "h,alpha,J_opt,g_norm,d1,d2,d3")?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        for p in &self.points {
            let alpha = p.alpha.map(|a| format!("{a:.16e}")).unwrap_or_else(|| "inf".into());
            writeln!(
                w,
                "{:.16e},{alpha},{:.16e},{:.16e},{},{},{}",
                p.h,
                p.j_opt,
                p.g_norm,
                opt(p.d1),
                opt(p.d2),
                opt(p.d3)
            )?;
        }
        Ok(())
    }

    pub fn point(&self, n: usize, alpha: Option<f64>) -> Option<&CornerPoint> {
        self.points.iter().find(|p| p.n == n && p.alpha == alpha)
    }
}

fn decreasing_to_floor(seq: &[f64], floor: f64) -> bool {
    seq.windows(2).all(|w| w[1] < w[0] || (w[0] <= floor && w[1] <= floor))
}

/// Solves every lattice point and measures the three families of
/// distances. Non-decreasing sequences are recorded in `flags`.
pub fn diagram(bench: &Benchmark, config: &DiagramConfig) -> Result<Diagram> {
    check_levels(&config.levels, config.reference, 2)?;
    if config.reference < 4 * config.levels.last().unwrap() {
        return Err(Error::InvalidParameter(
            "reference must be at least two refinements finer than the finest level".into(),
        ));
    }
    let alphas = &config.alphas;
    if alphas.len() != config.levels.len() || alphas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter(
            "need one strictly increasing alpha per level".into(),
        ));
    }
    let mut all_n = config.levels.clone();
    all_n.push(config.reference);
    let columns: Vec<Option<f64>> = alphas.iter().map(|&a| Some(a)).chain([None]).collect();

    let levels: Vec<Level> = all_n.iter().map(|&n| Level::new(bench, n)).collect::<Result<_>>()?;
    // keyed by (row, column) so the result is independent of solve order
    let mut optima: BTreeMap<(usize, usize), OptimizeReport> = BTreeMap::new();
    for (i, level) in levels.iter().enumerate() {
        for (j, &alpha) in columns.iter().enumerate() {
            let (b, family) = match alpha {
                Some(a) => (bench.with_alpha(a)?, StateFamily::Robin),
                None => (bench.clone(), StateFamily::DirichletLimit),
            };
            let solver = level.solver(&b, family)?;
            optima.insert((i, j), optimize(&solver, &config.optimize)?);
        }
    }

    let fine = levels.last().unwrap();
    let r = levels.len() - 1;
    let lift = |i: usize, g: &ScalarField| g.prolongate(&levels[i].mesh, &fine.mesh);
    let mut points = Vec::new();
    let mut d1 = vec![Vec::new(); columns.len()];
    let mut d2 = vec![Vec::new(); levels.len()];
    let mut d3 = Vec::new();
    for (i, level) in levels.iter().enumerate() {
        for (j, &alpha) in columns.iter().enumerate() {
            let g = &optima[&(i, j)].g_opt;
            let dist1 = if i < r {
                let d = fine.sys.h_norm(&lift(i, g)?.sub(&optima[&(r, j)].g_opt));
                d1[j].push(d);
                Some(d)
            } else {
                None
            };
            let dist2 = if j + 1 < columns.len() {
                let d = level.sys.h_norm(&g.sub(&optima[&(i, columns.len() - 1)].g_opt));
                d2[i].push(d);
                Some(d)
            } else {
                None
            };
            let dist3 = if i < r && i == j {
                let d = fine.sys.h_norm(&lift(i, g)?.sub(&optima[&(r, columns.len() - 1)].g_opt));
                d3.push(d);
                Some(d)
            } else {
                None
            };
            points.push(CornerPoint {
                n: all_n[i],
                h: h_of(all_n[i]),
                alpha,
                j_opt: optima[&(i, j)].j_opt,
                g_norm: level.sys.h_norm(g),
                d1: dist1,
                d2: dist2,
                d3: dist3,
                surrogate: i == r,
            });
        }
    }

    let floor = DIAGRAM_FLOOR_FACTOR * config.optimize.tol;
    let mut flags = Vec::new();
    let label = |a: Option<f64>| a.map(|a| format!("alpha={a}")).unwrap_or_else(|| "alpha=inf".into());
    for (j, seq) in d1.iter().enumerate() {
        if !decreasing_to_floor(seq, floor) {
            flags.push(format!("d1 not decreasing in h at {}", label(columns[j])));
        }
    }
    for (i, seq) in d2.iter().enumerate() {
        if !decreasing_to_floor(seq, floor) {
            flags.push(format!("d2 not decreasing in alpha at n={}", all_n[i]));
        }
    }
    if !decreasing_to_floor(&d3, floor) {
        flags.push("d3 not decreasing along the diagonal".into());
    }
    Ok(Diagram {
        config: config.clone(),
        points,
        d1,
        d2,
        d3,
        floor,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_arithmetic() {
        assert!((fit_order(&[(0.2, 0.4), (0.1, 0.2)]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(fit_order(&[(0.2, 0.3), (0.1, 0.3)]).unwrap(), 0.0);
        let p = fit_order(&[(0.4, 1e-2), (0.2, 2.5e-3), (0.1, 6.25e-4)]).unwrap();
        assert!((p - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_errors_are_excluded() {
        assert!(matches!(fit_order(&[(0.2, 0.0), (0.1, 0.3)]), Err(Error::InsufficientData(_))));
        let p = fit_order(&[(0.4, 0.0), (0.2, 0.4), (0.1, 0.2)]).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn table_rejects_non_monotone_parameters() {
        let rows = vec![RateRow { value: 0.2, error: 1.0 }, RateRow { value: 0.2, error: 0.5 }];
        assert!(RateTable::new("h", NormKind::V, rows, 0.0, String::new()).is_err());
    }

    #[test]
    fn table_floor_exclusion() {
        let rows = vec![
            RateRow { value: 0.4, error: 0.4 },
            RateRow { value: 0.2, error: 0.2 },
            RateRow { value: 0.1, error: 1e-10 },
            RateRow { value: 0.05, error: 0.0 },
        ];
        let t = RateTable::new("h", NormKind::V, rows, 1e-8, String::new()).unwrap();
        assert_eq!(t.excluded, vec![2, 3]);
        assert!((t.fitted_order.unwrap() - 1.0).abs() < 1e-12);
        assert!(t.summary().contains("1 zero errors excluded from fit"));
        assert!(t.non_increasing_to_floor(0.0));
    }

    #[test]
    fn level_validation() {
        assert!(check_levels(&[2, 4, 8, 16], 32, 4).is_ok());
        assert!(check_levels(&[2, 4, 8], 32, 4).is_err());
        assert!(check_levels(&[2, 4, 8, 16], 16, 4).is_err());
        assert!(check_levels(&[2, 4, 6, 16], 32, 4).is_err());
        assert!(check_levels(&[4, 2, 8, 16], 32, 4).is_err());
    }
}
