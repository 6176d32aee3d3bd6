//! Flat `key = value` run configuration.
//!
//! Sources are applied in order: preset, config file, `--set` overrides,
//! dedicated flags. Every key is validated before any solve.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use obstacle_control::assembly::{BoundaryFlux, ProblemData};
use obstacle_control::benchmark::{Benchmark, ControlSpec};
use obstacle_control::control::{OptimizeMethod, OptimizeOptions};
use obstacle_control::mesh::SideSet;
use obstacle_control::vi::{SolverKind, SolverOptions, StateFamily};
use sha2::{Digest, Sha256};

pub const KEYS: &[&str] = &[
    "n", "gamma1", "alpha", "b", "q", "m_cost", "g", "family", "solver", "tol", "max_iter", "omega",
    "cross_check", "method", "opt_tol", "opt_max_iter", "levels", "reference", "alphas", "trials", "seed",
];

#[derive(Debug)]
pub struct ConfigError(pub String);

type Result<T> = std::result::Result<T, ConfigError>;

fn bad(key: &str, value: &str) -> ConfigError {
    ConfigError(format!("invalid value `{value}` for key `{key}`"))
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub n: usize,
    pub gamma1: SideSet,
    pub alpha: f64,
    pub b: f64,
    pub q: BoundaryFlux,
    pub m_cost: Option<f64>,
    pub g: ControlSpec,
    /// Source text of `g`, kept for the header.
    pub g_source: String,
    pub family: StateFamily,
    pub solver: SolverOptions,
    pub method: OptimizeMethod,
    pub opt_tol: f64,
    pub opt_max_iter: Option<usize>,
    pub levels: Option<Vec<usize>>,
    pub reference: Option<usize>,
    pub alphas: Option<Vec<f64>>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: None,
            n: 8,
            gamma1: SideSet::BOTTOM,
            alpha: 1.0,
            b: 1.0,
            q: BoundaryFlux::zero(),
            m_cost: None,
            g: ControlSpec::Constant(0.0),
            g_source: "constant:0".into(),
            family: StateFamily::Robin,
            solver: SolverOptions::default(),
            method: OptimizeMethod::AdjointGradient,
            opt_tol: 1e-8,
            opt_max_iter: None,
            levels: None,
            reference: None,
            alphas: None,
            trials: 200,
            seed: 42,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse_num(key, v.trim())).collect()
}

fn flux_text(q: &BoundaryFlux) -> String {
    match q {
        BoundaryFlux::Constant(v) => format!("{v}"),
        BoundaryFlux::PerSide(v) => v.map(|x| x.to_string()).join(","),
    }
}

impl RunConfig {
    pub fn from_preset(name: &str) -> Result<Self> {
        let bench = Benchmark::preset(name).map_err(|e| ConfigError(e.to_string()))?;
        Ok(RunConfig {
            preset: Some(bench.name),
            gamma1: bench.gamma1,
            alpha: bench.data.alpha,
            b: bench.data.b,
            q: bench.data.flux,
            m_cost: Some(bench.data.m_cost),
            g_source: bench.control.to_string(),
            g: bench.control,
            solver: bench.solver,
            ..RunConfig::default()
        })
    }

    /// Lines of `key = value`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, base: &Path) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(k.trim(), v.trim(), base)?;
        }
        Ok(())
    }

    /// `base` resolves relative `file:` paths.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        match key {
            "n" => self.n = parse_num(key, value)?,
            "gamma1" => self.gamma1 = value.parse().map_err(|_| bad(key, value))?,
            "alpha" => self.alpha = parse_num(key, value)?,
            "b" => self.b = parse_num(key, value)?,
            "q" => {
                let v: Vec<f64> = parse_list(key, value)?;
                self.q = match v.as_slice() {
                    [c] => BoundaryFlux::Constant(*c),
                    [b, r, t, l] => BoundaryFlux::PerSide([*b, *r, *t, *l]),
                    _ => return Err(bad(key, value)),
                };
            }
            "m_cost" => self.m_cost = Some(parse_num(key, value)?),
            "g" => {
                self.g = match value.strip_prefix("file:") {
                    Some(path) => {
                        let text = fs::read_to_string(base.join(path))
                            .map_err(|e| ConfigError(format!("cannot read control file `{path}`: {e}")))?;
                        let values = text
                            .split(|c: char| c.is_whitespace() || c == ',')
                            .filter(|s| !s.is_empty())
                            .map(|s| parse_num::<f64>(key, s))
                            .collect::<Result<Vec<f64>>>()?;
                        ControlSpec::Nodal(values)
                    }
                    None => value.parse().map_err(|_| bad(key, value))?,
                };
                self.g_source = value.to_string();
            }
            "family" => {
                self.family = match value {
                    "robin" => StateFamily::Robin,
                    "dirichlet" => StateFamily::DirichletLimit,
                    _ => return Err(bad(key, value)),
                }
            }
            "solver" => {
                self.solver.kind = match value {
                    "psor" => SolverKind::Psor,
                    "active-set" => SolverKind::ActiveSet,
                    _ => return Err(bad(key, value)),
                }
            }
            "tol" => self.solver.tol = parse_num(key, value)?,
            "max_iter" => self.solver.max_iter = Some(parse_num(key, value)?),
            "omega" => self.solver.omega = parse_num(key, value)?,
            "cross_check" => self.solver.cross_check = parse_num(key, value)?,
            "method" => {
                self.method = match value {
                    "gradient" => OptimizeMethod::AdjointGradient,
                    "compass" => OptimizeMethod::CoordSearch,
                    _ => return Err(bad(key, value)),
                }
            }
            "opt_tol" => self.opt_tol = parse_num(key, value)?,
            "opt_max_iter" => self.opt_max_iter = Some(parse_num(key, value)?),
            "levels" => self.levels = Some(parse_list(key, value)?),
            "reference" => self.reference = Some(parse_num(key, value)?),
            "alphas" => self.alphas = Some(parse_list(key, value)?),
            "trials" => self.trials = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            _ => return Err(ConfigError(format!("unknown key `{key}` (known: {})", KEYS.join(", ")))),
        }
        Ok(())
    }

    pub fn data(&self) -> Result<ProblemData> {
        let m_cost = self
            .m_cost
            .ok_or_else(|| ConfigError("m_cost is required when no preset is given".into()))?;
        ProblemData::new(self.alpha, self.b, self.q.clone(), m_cost).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.data()?;
        if self.n == 0 {
            return Err(ConfigError("n must be at least 1".into()));
        }
        if self.gamma1.is_empty() {
            return Err(ConfigError("gamma1 must name at least one side".into()));
        }
        if !(self.solver.tol > 0.0) || !(self.opt_tol > 0.0) {
            return Err(ConfigError("tolerances must be positive".into()));
        }
        if !(self.solver.omega > 0.0 && self.solver.omega < 2.0) {
            return Err(ConfigError("omega must lie in (0, 2)".into()));
        }
        if self.trials == 0 {
            return Err(ConfigError("trials must be at least 1".into()));
        }
        Ok(())
    }

    pub fn benchmark(&self) -> Result<Benchmark> {
        Ok(Benchmark {
            name: self.preset.clone().unwrap_or_else(|| "custom".into()),
            gamma1: self.gamma1,
            data: self.data()?,
            control: self.g.clone(),
            solver: self.solver.clone(),
        })
    }

    pub fn optimize_options(&self) -> OptimizeOptions {
        let mut o = OptimizeOptions::new(self.method).with_tol(self.opt_tol);
        if let Some(m) = self.opt_max_iter {
            o.max_iter = m;
        }
        o
    }

    /// Resolved configuration, one `key = value` per line in key order.
    /// Nodal controls are spelled out so that the hash covers them.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let list = |v: &Option<Vec<usize>>| v.as_ref().map_or("default".into(), |v| {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        });
        let g = match &self.g {
            ControlSpec::Nodal(v) => v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(","),
            other => other.to_string(),
        };
        let fields: [(&str, String); 21] = [
            ("alpha", format!("{:e}", self.alpha)),
            (
                "alphas",
                self.alphas.as_ref().map_or("default".into(), |v| {
                    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",")
                }),
            ),
            ("b", format!("{:e}", self.b)),
            ("cross_check", self.solver.cross_check.to_string()),
            ("family", format!("{:?}", self.family)),
            ("g", g),
            ("gamma1", self.gamma1.to_string()),
            ("levels", list(&self.levels)),
            ("m_cost", self.m_cost.map_or("none".into(), |m| format!("{m:e}"))),
            ("max_iter", self.solver.max_iter.map_or("default".into(), |m| m.to_string())),
            ("method", self.method.name().into()),
            ("n", self.n.to_string()),
            ("omega", format!("{:e}", self.solver.omega)),
            ("opt_max_iter", self.opt_max_iter.map_or("default".into(), |m| m.to_string())),
            ("opt_tol", format!("{:e}", self.opt_tol)),
            ("q", flux_text(&self.q)),
            ("reference", self.reference.map_or("default".into(), |r| r.to_string())),
            ("seed", self.seed.to_string()),
            ("solver", format!("{:?}", self.solver.kind)),
            ("tol", format!("{:e}", self.solver.tol)),
            ("trials", self.trials.to_string()),
        ];
        for (k, v) in fields {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }

    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
