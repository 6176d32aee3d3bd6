//! Named benchmark configurations on the unit square.

use std::fmt;
use std::str::FromStr;

use crate::assembly::{BoundaryFlux, ProblemData};
use crate::error::{Error, Result};
use crate::field::{interpolate, ScalarField};
use crate::mesh::{Mesh, SideSet};
use crate::vi::SolverOptions;

/// How a control is laid onto a mesh.
#[derive(Clone, Debug, PartialEq)]
pub enum ControlSpec {
    Constant(f64),
    /// `value` on the closed box `[x0, x1] × [y0, y1]`, zero elsewhere;
    /// realized by nodal interpolation on each mesh.
    Box { value: f64, x0: f64, x1: f64, y0: f64, y1: f64 },
    /// Explicit nodal values; only valid on a mesh with matching node count.
    Nodal(Vec<f64>),
}

impl ControlSpec {
    pub fn realize(&self, mesh: &Mesh) -> Result<ScalarField> {
        match self {
            ControlSpec::Constant(c) => interpolate(mesh, |_, _| *c),
            &ControlSpec::Box { value, x0, x1, y0, y1 } => {
                interpolate(mesh, |x, y| if x >= x0 && x <= x1 && y >= y0 && y <= y1 { value } else { 0.0 })
            }
            ControlSpec::Nodal(v) => {
                let g = ScalarField::new(v.clone())?;
                g.check_len(mesh.node_count())?;
                Ok(g)
            }
        }
    }
}

impl fmt::Display for ControlSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlSpec::Constant(c) => write!(f, "constant:{c}"),
            ControlSpec::Box { value, x0, x1, y0, y1 } => write!(f, "box:{value}:{x0}:{x1}:{y0}:{y1}"),
            ControlSpec::Nodal(v) => write!(f, "nodal[{}]", v.len()),
        }
    }
}

/// `constant:C` or `box:V:X0:X1:Y0:Y1`.
impl FromStr for ControlSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unrecognized control spec `{s}`"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        let nums = |xs: &[&str]| -> Result<Vec<f64>> {
            xs.iter()
                .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<Vec<f64>>>()
                .and_then(|v| if v.iter().all(|x| x.is_finite()) { Ok(v) } else { Err(bad()) })
        };
        match parts.as_slice() {
            ["constant", c] => Ok(ControlSpec::Constant(nums(&[c])?[0])),
            ["box", rest @ ..] if rest.len() == 5 => {
                let v = nums(rest)?;
                if v[1] > v[2] || v[3] > v[4] {
                    return Err(bad());
                }
                Ok(ControlSpec::Box { value: v[0], x0: v[1], x1: v[2], y0: v[3], y1: v[4] })
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Benchmark {
    pub name: String,
    pub gamma1: SideSet,
    pub data: ProblemData,
    pub control: ControlSpec,
    pub solver: SolverOptions,
}

impl Benchmark {
    pub const PRESETS: [&'static str; 2] = ["constant-v1", "contact-v1"];

    /// `g ≡ 0`, `q ≡ 0`, `b = 1`: the state is identically `b` on every mesh.
    pub fn constant_v1() -> Self {
        Benchmark {
            name: "constant-v1".into(),
            gamma1: SideSet::BOTTOM,
            data: ProblemData { alpha: 1.0, b: 1.0, flux: BoundaryFlux::zero(), m_cost: 1.0 },
            control: ControlSpec::Constant(0.0),
            solver: SolverOptions::default(),
        }
    }

    /// Strong sink on the central box plus unit outflow on `Γ2`, so the
    /// obstacle is active on a sizable region.
    pub fn contact_v1() -> Self {
        Benchmark {
            name: "contact-v1".into(),
            gamma1: SideSet::BOTTOM,
            data: ProblemData { alpha: 2.0, b: 1.0, flux: BoundaryFlux::Constant(1.0), m_cost: 1.0 },
            control: ControlSpec::Box { value: -20.0, x0: 0.25, x1: 0.75, y0: 0.25, y1: 0.75 },
            solver: SolverOptions::default(),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "constant-v1" => Ok(Self::constant_v1()),
            "contact-v1" => Ok(Self::contact_v1()),
            _ => Err(Error::InvalidParameter(format!(
                "unknown preset `{name}` (known: {})",
                Self::PRESETS.join(", ")
            ))),
        }
    }

    pub fn mesh(&self, n: usize) -> Result<Mesh> {
        Mesh::unit_square(n, self.gamma1)
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Ok(Benchmark { data: self.data.with_alpha(alpha)?, ..self.clone() })
    }
}
