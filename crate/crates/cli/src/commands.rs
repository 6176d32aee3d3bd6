use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use obstacle_control::assembly::assemble;
use obstacle_control::control::{check_open_problems, cost, optimize, CONJECTURE_SLACK};
use obstacle_control::convergence::{alpha_sweep_state, diagram, h_sweep, interpolation_sweep, DiagramConfig, RateTable};
use obstacle_control::mesh::Mesh;
use obstacle_control::vi::{StateFamily, StateSolver};
use obstacle_control::Error;

use crate::config::{ConfigError, RunConfig};
use crate::{Cli, Command};

pub const MIN_ORDER: f64 = 0.45;

pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure { code: 2, message: e.0 }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) | Error::InvalidMesh(_) | Error::Parse { .. } | Error::DimensionMismatch { .. } => 2,
            Error::NonConvergence { .. }
            | Error::OptimizerNonConvergence { .. }
            | Error::LineSearchStall { .. }
            | Error::CrossCheck { .. } => 3,
            Error::Invariant(_) => 4,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 1, message: e.to_string() }
    }
}

type Outcome = Result<(), Failure>;

fn acceptance_failure(what: &str) -> Failure {
    Failure { code: 4, message: format!("acceptance check failed: {what}") }
}

pub fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.preset {
        Some(p) => RunConfig::from_preset(p)?,
        None => RunConfig::default(),
    };
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config `{}`: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.apply_text(&text, base)?;
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim(), Path::new("."))?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.cross_check {
        cfg.solver.cross_check = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Output {
    dir: PathBuf,
    header: String,
}

impl Output {
    fn new(dir: &Path, command: Command, cfg: &RunConfig) -> Result<Self, Failure> {
        fs::create_dir_all(dir)?;
        let mut header = String::new();
        writeln!(header, "# obstacle-control {}", command.name()).unwrap();
        writeln!(header, "# config_sha256: {}", cfg.hash()).unwrap();
        writeln!(header, "# preset: {}", cfg.preset.as_deref().unwrap_or("none")).unwrap();
        Ok(Output { dir: dir.to_path_buf(), header })
    }

    /// Header, extra `# ` lines, then `body`.
    fn write(&self, name: &str, notes: &[String], body: &[u8]) -> Outcome {
        let mut bytes = self.header.clone().into_bytes();
        for n in notes {
            bytes.extend_from_slice(format!("# {n}\n").as_bytes());
        }
        bytes.extend_from_slice(body);
        fs::write(self.dir.join(name), bytes)?;
        Ok(())
    }
}

fn csv(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>, Failure> {
    let mut out = Vec::new();
    f(&mut out)?;
    Ok(out)
}

pub fn run(cli: &Cli) -> Outcome {
    let cfg = load_config(cli)?;
    let out = Output::new(&cli.out, cli.command, &cfg)?;
    let bench = cfg.benchmark()?;
    let mesh = bench.mesh(cfg.n)?;
    if cli.dump_mesh {
        out.write("mesh.txt", &[], &csv(|w| mesh.write_text(w))?)?;
    }
    match cli.command {
        Command::State => state(&cfg, &mesh, &out),
        Command::Optimize => optimize_cmd(&cfg, &mesh, &out),
        Command::SweepH => sweep_h(&cfg, &out),
        Command::SweepAlpha => sweep_alpha(&cfg, &out),
        Command::Diagram => diagram_cmd(&cfg, &out),
        Command::Conjecture => conjecture(&cfg, &mesh, &out),
        Command::InterpCheck => interp(&cfg, &out),
    }
}

fn family_name(f: StateFamily) -> &'static str {
    match f {
        StateFamily::Robin => "robin",
        StateFamily::DirichletLimit => "dirichlet",
    }
}

fn state(cfg: &RunConfig, mesh: &Mesh, out: &Output) -> Outcome {
    let sys = assemble(mesh)?;
    let data = cfg.data()?;
    let solver = StateSolver::new(mesh, &sys, &data, cfg.family, cfg.solver.clone())?;
    let g = cfg.g.realize(mesh)?;
    let r = solver.solve(&g)?;
    let mut body = String::from("x,y,u\n");
    for (p, u) in mesh.nodes().iter().zip(r.solution.iter()) {
        writeln!(body, "{:.16e},{:.16e},{:.16e}", p[0], p[1], u).unwrap();
    }
    out.write("state.csv", &[], body.as_bytes())?;
    let mut report = String::new();
    writeln!(report, "family: {}", family_name(cfg.family)).unwrap();
    writeln!(report, "solver: {:?}", cfg.solver.kind).unwrap();
    writeln!(report, "n: {}", cfg.n).unwrap();
    writeln!(report, "iterations: {}", r.iterations).unwrap();
    writeln!(report, "residual: {:.16e}", r.residual).unwrap();
    writeln!(report, "active_set_size: {}", r.active_set.len()).unwrap();
    writeln!(report, "v_norm: {:.16e}", sys.v_norm(&r.solution)).unwrap();
    out.write("report.txt", &[], report.as_bytes())
}

fn optimize_cmd(cfg: &RunConfig, mesh: &Mesh, out: &Output) -> Outcome {
    let sys = assemble(mesh)?;
    let data = cfg.data()?;
    let solver = StateSolver::new(mesh, &sys, &data, cfg.family, cfg.solver.clone())?;
    let u0 = cost(&solver, &obstacle_control::field::ScalarField::zeros(mesh.node_count()))?.state.solution;
    let bound = sys.h_norm(&u0) / data.m_cost.sqrt();
    let r = optimize(&solver, &cfg.optimize_options())?;
    let mut body = String::from("x,y,g,u\n");
    for ((p, g), u) in mesh.nodes().iter().zip(r.g_opt.iter()).zip(r.state.solution.iter()) {
        writeln!(body, "{:.16e},{:.16e},{:.16e},{:.16e}", p[0], p[1], g, u).unwrap();
    }
    out.write("control.csv", &[], body.as_bytes())?;
    let mut hist = String::from("iteration,J\n");
    for (i, j) in r.history.iter().enumerate() {
        writeln!(hist, "{i},{j:.16e}").unwrap();
    }
    out.write("history.csv", &[], hist.as_bytes())?;
    let g_norm = sys.h_norm(&r.g_opt);
    let mut report = String::new();
    writeln!(report, "family: {}", family_name(cfg.family)).unwrap();
    writeln!(report, "method: {}", r.method.name()).unwrap();
    writeln!(report, "n: {}", cfg.n).unwrap();
    writeln!(report, "J_opt: {:.16e}", r.j_opt).unwrap();
    writeln!(report, "iterations: {}", r.iterations).unwrap();
    writeln!(report, "stationarity: {:.16e}", r.stationarity).unwrap();
    writeln!(report, "g_opt_h_norm: {g_norm:.16e}").unwrap();
    writeln!(report, "g_opt_bound: {bound:.16e}").unwrap();
    writeln!(report, "active_set_size: {}", r.state.active_set.len()).unwrap();
    out.write("report.txt", &[], report.as_bytes())?;
    if g_norm > bound + 1e-8 {
        return Err(acceptance_failure("optimal control exceeds its a-priori bound"));
    }
    Ok(())
}

fn table_notes(t: &RateTable) -> Vec<String> {
    vec![t.reference.clone(), t.summary()]
}

fn decreasing_at_rate(t: &RateTable) -> bool {
    t.all_zero() || (t.strictly_decreasing() && t.fitted_order.is_some_and(|p| p >= MIN_ORDER))
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn sweep_h(cfg: &RunConfig, out: &Output) -> Outcome {
    let levels = cfg.levels.clone().unwrap_or_else(|| vec![4, 8, 16, 32]);
    let reference = cfg.reference.unwrap_or(2 * levels.last().copied().unwrap_or(1));
    let s = h_sweep(&cfg.benchmark()?, &levels, reference)?;
    out.write("sweep_h_state.csv", &table_notes(&s.state), &csv(|w| s.state.write_csv(w))?)?;
    out.write("sweep_h_cost.csv", &table_notes(&s.cost), &csv(|w| s.cost.write_csv(w))?)?;
    let (a, b) = (decreasing_at_rate(&s.state), decreasing_at_rate(&s.cost));
    let summary = format!(
        "{}\n{}\n{}\nstate decreasing with order >= {MIN_ORDER}: {}\ncost decreasing with order >= {MIN_ORDER}: {}\n",
        s.state.reference,
        s.state.summary(),
        s.cost.summary(),
        verdict(a),
        verdict(b)
    );
    out.write("summary.txt", &[], summary.as_bytes())?;
    print!("{summary}");
    if !(a && b) {
        return Err(acceptance_failure("h-sweep errors do not decrease at the required order"));
    }
    Ok(())
}

fn sweep_alpha(cfg: &RunConfig, out: &Output) -> Outcome {
    let alphas = cfg.alphas.clone().unwrap_or_else(|| (1..=14).map(|k| 2f64.powi(k)).collect());
    let a = alpha_sweep_state(&cfg.benchmark()?, cfg.n, &alphas)?;
    out.write("sweep_alpha_v.csv", &table_notes(&a.v), &csv(|w| a.v.write_csv(w))?)?;
    out.write("sweep_alpha_r.csv", &table_notes(&a.r), &csv(|w| a.r.write_csv(w))?)?;
    let zero = a.v.all_zero() && a.r.all_zero();
    let rate = zero || a.r.fitted_order.is_some_and(|p| p <= -MIN_ORDER);
    let monotone = a.v.non_increasing_to_floor(1e-10);
    let summary = format!(
        "reference: {}\n{}\n{}\nR error slope <= -{MIN_ORDER}: {}\nV error non-increasing: {}\n",
        a.v.reference,
        a.v.summary(),
        a.r.summary(),
        verdict(rate),
        verdict(monotone)
    );
    out.write("summary.txt", &[], summary.as_bytes())?;
    print!("{summary}");
    if !(rate && monotone) {
        return Err(acceptance_failure("alpha-sweep errors do not decay at the required rate"));
    }
    Ok(())
}

fn diagram_cmd(cfg: &RunConfig, out: &Output) -> Outcome {
    let levels = cfg.levels.clone().unwrap_or_else(|| vec![2, 4, 8, 16]);
    let mut config = DiagramConfig::diagonal(levels, cfg.optimize_options());
    if let Some(a) = &cfg.alphas {
        config.alphas = a.clone();
    }
    if let Some(r) = cfg.reference {
        config.reference = r;
    }
    let d = diagram(&cfg.benchmark()?, &config)?;
    let note = format!(
        "surrogate_reference: continuous corners realized on n={} (Robin per alpha, and Dirichlet limit)",
        config.reference
    );
    out.write("diagram.csv", &[note.clone()], &csv(|w| d.write_csv(w))?)?;
    let mut summary = format!("{note}\n");
    writeln!(summary, "monotonicity floor: {:.3e}", d.floor).unwrap();
    writeln!(summary, "d3: {}", d.d3.iter().map(|v| format!("{v:.6e}")).collect::<Vec<_>>().join(" ")).unwrap();
    for f in &d.flags {
        writeln!(summary, "flag: {f}").unwrap();
    }
    writeln!(summary, "distances decreasing: {}", verdict(d.is_monotone())).unwrap();
    out.write("summary.txt", &[], summary.as_bytes())?;
    print!("{summary}");
    if !d.is_monotone() {
        return Err(acceptance_failure("diagram distance sequences are not all decreasing"));
    }
    Ok(())
}

fn conjecture(cfg: &RunConfig, mesh: &Mesh, out: &Output) -> Outcome {
    let sys = assemble(mesh)?;
    let data = cfg.data()?;
    let solver = StateSolver::new(mesh, &sys, &data, cfg.family, cfg.solver.clone())?;
    let r = check_open_problems(&solver, cfg.trials, cfg.seed)?;
    let notes = vec![format!("seed: {}", cfg.seed)];
    out.write("conjecture.csv", &notes, &csv(|w| r.write_csv(w))?)?;
    out.write("witnesses.txt", &notes, &csv(|w| r.write_witnesses(w))?)?;
    let identity = r.max_identity_residual() <= CONJECTURE_SLACK;
    let mut summary = String::new();
    writeln!(summary, "trials: {}", r.trials.len()).unwrap();
    writeln!(summary, "pointwise ordering violations: {}", r.pointwise_violations()).unwrap();
    writeln!(summary, "H-norm ordering violations: {}", r.norm_violations()).unwrap();
    writeln!(summary, "strict convexity violations: {}", r.convexity_violations()).unwrap();
    writeln!(summary, "max identity residual: {:.3e}", r.max_identity_residual()).unwrap();
    writeln!(summary, "identity within {CONJECTURE_SLACK:e}: {}", verdict(identity)).unwrap();
    out.write("summary.txt", &notes, summary.as_bytes())?;
    print!("{summary}");
    if !identity {
        return Err(acceptance_failure("convexity-gap identity residual too large"));
    }
    Ok(())
}

/// `sin(πx) sin(πy)`
fn smooth(x: f64, y: f64) -> f64 {
    use std::f64::consts::PI;
    (PI * x).sin() * (PI * y).sin()
}

fn smooth_grad(x: f64, y: f64) -> [f64; 2] {
    use std::f64::consts::PI;
    [PI * (PI * x).cos() * (PI * y).sin(), PI * (PI * x).sin() * (PI * y).cos()]
}

fn interp(cfg: &RunConfig, out: &Output) -> Outcome {
    let levels = cfg.levels.clone().unwrap_or_else(|| vec![2, 4, 8, 16, 32]);
    let (h, v) = interpolation_sweep(&cfg.benchmark()?, &levels, smooth, smooth_grad)?;
    let note = "f(x, y) = sin(pi x) sin(pi y)".to_string();
    out.write("interp_h.csv", &[note.clone(), h.summary()], &csv(|w| h.write_csv(w))?)?;
    out.write("interp_v.csv", &[note.clone(), v.summary()], &csv(|w| v.write_csv(w))?)?;
    let h_ok = h.fitted_order.is_some_and(|p| p >= 1.9);
    let v_ok = v.fitted_order.is_some_and(|p| p >= 0.9);
    let summary = format!(
        "{note}\n{}\n{}\nH order >= 1.9: {}\nV order >= 0.9: {}\n",
        h.summary(),
        v.summary(),
        verdict(h_ok),
        verdict(v_ok)
    );
    out.write("summary.txt", &[], summary.as_bytes())?;
    print!("{summary}");
    if !(h_ok && v_ok) {
        return Err(acceptance_failure("interpolation orders below the expected values"));
    }
    Ok(())
}
