//! Acceptance criteria 1–11. Each test prints one `PASS`/`FAIL` line and
//! fails on `FAIL`; run with `--nocapture` to see the lines.

mod common;

use common::{dense_assemble, tiny_configurations, DenseVi, Lcg};
use obstacle_control::assembly::{assemble, AssembledSystem, BoundaryFlux, ProblemData};
use obstacle_control::benchmark::Benchmark;
use obstacle_control::control::{check_open_problems, cost, optimize, OptimizeMethod, OptimizeOptions};
use obstacle_control::convergence::{alpha_sweep_state, diagram, h_sweep, DiagramConfig};
use obstacle_control::field::ScalarField;
use obstacle_control::mesh::{Mesh, SideSet};
use obstacle_control::vi::{SolverOptions, StateFamily, StateSolver};

fn report(criterion: u32, name: &str, pass: bool, detail: String) {
    println!("criterion {criterion:>2} {name}: {} — {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn setup(n: usize, sides: &str) -> (Mesh, AssembledSystem) {
    let mesh = Mesh::unit_square(n, sides.parse().unwrap()).unwrap();
    let sys = assemble(&mesh).unwrap();
    (mesh, sys)
}

fn alphas() -> Vec<f64> {
    (1..=14).map(|k| 2f64.powi(k)).collect()
}

#[test]
fn criterion_01_oracle_equivalence() {
    let mut rng = Lcg(2024);
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    for (n, sides, family) in tiny_configurations() {
        let (mesh, sys) = setup(n, sides);
        let d = dense_assemble(&mesh);
        for _ in 0..20 {
            let (alpha, b, q) = (rng.next_f64(0.1, 10.0), rng.next_f64(0.1, 2.0), rng.next_f64(-2.0, 2.0));
            let g = rng.vec(mesh.node_count(), -40.0, 20.0);
            let data = ProblemData::new(alpha, b, BoundaryFlux::Constant(q), 1.0).unwrap();
            let vi = match family {
                StateFamily::Robin => DenseVi::robin(&d, alpha, b, q, &g),
                StateFamily::DirichletLimit => DenseVi::dirichlet(&d, &mesh, b, q, &g),
            };
            let oracle = vi.enumerate();
            for opts in [SolverOptions::psor(), SolverOptions::default()] {
                let s = StateSolver::new(&mesh, &sys, &data, family, opts.with_tol(1e-12)).unwrap();
                let u = s.solve(&ScalarField::new(g.clone()).unwrap()).unwrap().solution;
                let e = u.iter().zip(oracle.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                worst = worst.max(e);
            }
            instances += 1;
        }
    }
    report(1, "oracle equivalence", worst <= 1e-10, format!("{instances} instances, max deviation {worst:.3e}"));
}

#[test]
fn criterion_02_uniqueness() {
    let mut rng = Lcg(77);
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    for family in [StateFamily::Robin, StateFamily::DirichletLimit] {
        for n in [4, 8] {
            let (mesh, sys) = setup(n, "bottom");
            for _ in 0..5 {
                let data =
                    ProblemData::new(rng.next_f64(0.5, 20.0), rng.next_f64(0.2, 2.0), BoundaryFlux::Constant(rng.next_f64(0.0, 2.0)), 1.0)
                        .unwrap();
                let g = ScalarField::new(rng.vec(mesh.node_count(), -40.0, 20.0)).unwrap();
                for opts in [SolverOptions::psor(), SolverOptions::default()] {
                    let s = StateSolver::new(&mesh, &sys, &data, family, opts).unwrap();
                    let starts: Vec<Vec<f64>> = (0..5)
                        .map(|k| match k {
                            0 => vec![0.0; mesh.node_count()],
                            1 => vec![5.0; mesh.node_count()],
                            _ => rng.vec(mesh.node_count(), -3.0, 3.0),
                        })
                        .collect();
                    let sols: Vec<ScalarField> = starts.iter().map(|u0| s.solve_from(&g, u0).unwrap().solution).collect();
                    for u in &sols[1..] {
                        worst = worst.max(sys.v_norm(&u.sub(&sols[0])));
                    }
                }
                instances += 1;
            }
        }
    }
    report(2, "uniqueness", worst <= 1e-8, format!("{instances} instances × 5 starts × 2 solvers, max V spread {worst:.3e}"));
}

#[test]
fn criterion_03_lipschitz() {
    let (mesh, sys) = setup(8, "bottom");
    let mut rng = Lcg(31);
    let mut worst = f64::NEG_INFINITY;
    for alpha in [0.5, 1.0, 4.0] {
        let lam = sys.coercivity_estimate(alpha).unwrap();
        let data = ProblemData::new(alpha, 1.0, BoundaryFlux::Constant(1.0), 1.0).unwrap();
        let s = StateSolver::new(&mesh, &sys, &data, StateFamily::Robin, SolverOptions::default()).unwrap();
        for _ in 0..50 {
            let g1 = ScalarField::new(rng.vec(81, -40.0, 20.0)).unwrap();
            let g2 = ScalarField::new(rng.vec(81, -40.0, 20.0)).unwrap();
            let (u1, u2) = (s.solve(&g1).unwrap().solution, s.solve(&g2).unwrap().solution);
            let excess = sys.v_norm(&u2.sub(&u1)) - sys.h_norm(&g2.sub(&g1)) / lam;
            worst = worst.max(excess);
        }
    }
    report(3, "Lipschitz dependence", worst <= 1e-8, format!("150 pairs, max (lhs − bound) {worst:.3e}"));
}

#[test]
fn criterion_04_h_rate() {
    let s = h_sweep(&Benchmark::contact_v1(), &[4, 8, 16, 32], 64).unwrap();
    let t = &s.state;
    let order = t.fitted_order.unwrap_or(f64::NAN);
    report(
        4,
        "h-rate (V-norm state error)",
        t.strictly_decreasing() && order >= 0.45,
        format!("errors {:?}, fitted order {order:.3}", t.errors()),
    );
}

#[test]
fn criterion_05_cost_gap_rate() {
    let s = h_sweep(&Benchmark::contact_v1(), &[4, 8, 16, 32], 64).unwrap();
    let t = &s.cost;
    let order = t.fitted_order.unwrap_or(f64::NAN);
    report(
        5,
        "cost-gap rate",
        t.strictly_decreasing() && order >= 0.45,
        format!("errors {:?}, fitted order {order:.3}", t.errors()),
    );
}

#[test]
fn criterion_06_alpha_rate() {
    let a = alpha_sweep_state(&Benchmark::contact_v1(), 16, &alphas()).unwrap();
    let slope = a.r.fitted_order.unwrap_or(f64::NAN);
    let monotone = a.v.non_increasing_to_floor(1e-10);
    report(
        6,
        "alpha-rate",
        slope <= -0.45 && monotone,
        format!("R slope vs (α−1) {slope:.3}, V order {:.3}, V non-increasing {monotone}", a.v.fitted_order.unwrap_or(f64::NAN)),
    );
}

#[test]
fn criterion_07_cost_coercivity() {
    let bench = Benchmark::contact_v1();
    let (mesh, sys) = setup(8, "bottom");
    let s = StateSolver::new(&mesh, &sys, &bench.data, StateFamily::Robin, bench.solver.clone()).unwrap();
    let c_hat = 10.0 * sys.h_norm(&cost(&s, &ScalarField::zeros(81)).unwrap().state.solution);
    let m = bench.data.m_cost;
    let mut rng = Lcg(8);
    let mut directions = vec![ScalarField::constant(81, 1.0), ScalarField::constant(81, -1.0)];
    for _ in 0..8 {
        directions.push(ScalarField::new(rng.vec(81, -1.0, 1.0)).unwrap());
    }
    let mut ok = true;
    let mut min_margin = f64::INFINITY;
    for dir in &directions {
        let unit = ScalarField::combine(1.0 / sys.h_norm(dir), dir, 0.0, dir);
        let mut last = f64::NEG_INFINITY;
        for r in [1.0, 10.0, 100.0, 1000.0] {
            let j = cost(&s, &ScalarField::combine(r, &unit, 0.0, &unit)).unwrap().value;
            let margin = j - (0.5 * m * r * r - c_hat * r);
            min_margin = min_margin.min(margin);
            ok &= margin >= 0.0 && j > last;
            last = j;
        }
    }
    report(7, "cost coercivity", ok, format!("{} directions, min margin over bound {min_margin:.3e}", directions.len()));
}

#[test]
fn criterion_08_optimizer_bound_and_cross_check() {
    let mut worst = f64::NEG_INFINITY;
    let mut runs = 0;
    let opts = OptimizeOptions::new(OptimizeMethod::AdjointGradient);
    for name in Benchmark::PRESETS {
        let bench = Benchmark::preset(name).unwrap();
        for n in [2, 4, 8] {
            let (mesh, sys) = setup(n, "bottom");
            for (alpha, m_cost) in [(0.5, 1.0), (2.0, 0.5), (8.0, 2.0)] {
                let data = ProblemData { alpha, m_cost, ..bench.data.clone() };
                for family in [StateFamily::Robin, StateFamily::DirichletLimit] {
                    let s = StateSolver::new(&mesh, &sys, &data, family, bench.solver.clone()).unwrap();
                    let u0 = cost(&s, &ScalarField::zeros(mesh.node_count())).unwrap().state.solution;
                    let r = optimize(&s, &opts).unwrap();
                    worst = worst.max(sys.h_norm(&r.g_opt) - sys.h_norm(&u0) / m_cost.sqrt());
                    runs += 1;
                }
            }
        }
    }
    let (mesh, sys) = setup(2, "bottom");
    let data = ProblemData::new(1.0, 1.0, BoundaryFlux::Constant(1.0), 1.0).unwrap();
    let s = StateSolver::new(&mesh, &sys, &data, StateFamily::Robin, SolverOptions::default()).unwrap();
    let a = optimize(&s, &opts).unwrap();
    let b = optimize(&s, &OptimizeOptions::new(OptimizeMethod::CoordSearch)).unwrap();
    let gap = (a.j_opt - b.j_opt).abs();
    report(
        8,
        "optimizer bound and compass cross-check",
        worst <= 1e-8 && gap <= 1e-6,
        format!("{runs} runs, max (‖g‖ − bound) {worst:.3e}; |J_grad − J_compass| = {gap:.3e}"),
    );
}

fn lattice() -> DiagramConfig {
    DiagramConfig::diagonal(vec![2, 4, 8, 16], OptimizeOptions::new(OptimizeMethod::AdjointGradient))
}

#[test]
fn criterion_09_diagram() {
    let d = diagram(&Benchmark::constant_v1(), &lattice()).unwrap();
    let d2_tail = d.d2.iter().all(|row| row[row.len() - 1] <= row[row.len() - 2] + 1e-10);
    let d3_strict = d.d3.windows(2).all(|w| w[1] < w[0]);
    // the obstacle-active preset is reported alongside, not graded
    let contact = diagram(&Benchmark::contact_v1(), &lattice()).unwrap();
    println!("criterion  9 (info) contact-v1 diagram flags: {:?}", contact.flags);
    report(
        9,
        "diagram (constant-v1, 4×4 lattice, reference n=64)",
        d.is_monotone() && d2_tail && d3_strict,
        format!("flags {:?}; d3 {:?}", d.flags, d.d3),
    );
}

#[test]
fn criterion_10_convexity_identity() {
    let (mesh, sys) = setup(4, "bottom");
    let data = ProblemData::new(1.0, 1.0, BoundaryFlux::Constant(1.0), 1.0).unwrap();
    let s = StateSolver::new(&mesh, &sys, &data, StateFamily::Robin, SolverOptions::default()).unwrap();
    // an Invariant error here would mean u4 ≥ 0 failed
    let r = check_open_problems(&s, 200, 42);
    let ok = matches!(&r, Ok(rep) if rep.trials.len() == 200 && rep.max_identity_residual() <= 1e-9);
    let detail = match &r {
        Ok(rep) => format!(
            "identity residual {:.3e}; findings: {} pointwise, {} norm, {} convexity violations",
            rep.max_identity_residual(),
            rep.pointwise_violations(),
            rep.norm_violations(),
            rep.convexity_violations()
        ),
        Err(e) => e.to_string(),
    };
    report(10, "convexity-gap identity", ok, detail);
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>)) -> Vec<u8> {
    let mut out = Vec::new();
    f(&mut out);
    out
}

#[test]
fn criterion_11_determinism() {
    let mut identical = true;
    let mut files = 0;
    for name in Benchmark::PRESETS {
        let bench = Benchmark::preset(name).unwrap();
        let run = || {
            let mut out = Vec::new();
            let s = h_sweep(&bench, &[2, 4, 8, 16], 64).unwrap();
            out.push(csv_bytes(|w| s.state.write_csv(w).unwrap()));
            out.push(csv_bytes(|w| s.cost.write_csv(w).unwrap()));
            let a = alpha_sweep_state(&bench, 8, &alphas()).unwrap();
            out.push(csv_bytes(|w| a.r.write_csv(w).unwrap()));
            let config = DiagramConfig::diagonal(vec![2, 4], OptimizeOptions::new(OptimizeMethod::AdjointGradient));
            let d = diagram(&bench, &config).unwrap();
            out.push(csv_bytes(|w| d.write_csv(w).unwrap()));
            let mesh = bench.mesh(4).unwrap();
            let sys = assemble(&mesh).unwrap();
            let s = StateSolver::new(&mesh, &sys, &bench.data, StateFamily::Robin, bench.solver.clone()).unwrap();
            let c = check_open_problems(&s, 50, 42).unwrap();
            out.push(csv_bytes(|w| c.write_csv(w).unwrap()));
            out
        };
        let (first, second) = (run(), run());
        files += first.len();
        identical &= first == second;
    }
    report(11, "determinism", identical, format!("{files} CSV outputs compared byte for byte"));
}

#[test]
fn default_side_is_bottom() {
    assert_eq!(Benchmark::contact_v1().gamma1, SideSet::BOTTOM);
}
