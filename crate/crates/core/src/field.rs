//! Nodal P1 fields and the nodal interpolation operator.

use std::ops::Deref;

use crate::error::{Error, Result};
use crate::mesh::{signed_area, Mesh, Point, PointLocator};

/// Coefficients of a continuous piecewise-linear function, one per node.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Evaluation { node, value });
        }
        Ok(ScalarField { values })
    }

    pub fn zeros(n: usize) -> Self {
        ScalarField { values: vec![0.0; n] }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        ScalarField { values: vec![c; n] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `a·x + b·y`, nodewise.
    pub fn combine(a: f64, x: &ScalarField, b: f64, y: &ScalarField) -> ScalarField {
        assert_eq!(x.len(), y.len());
        ScalarField {
            values: x.iter().zip(y.iter()).map(|(u, v)| a * u + b * v).collect(),
        }
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        ScalarField::combine(1.0, self, -1.0, other)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.values.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.values.len(),
            });
        }
        Ok(())
    }

    /// Evaluates this field (living on `mesh`) at the nodes of `target`.
    ///
    /// On nested meshes this is exact: every node of the finer mesh lies on
    /// an edge or vertex of the coarser one.
    pub fn prolongate(&self, mesh: &Mesh, target: &Mesh) -> Result<ScalarField> {
        self.check_len(mesh.node_count())?;
        let locator = PointLocator::new(mesh);
        let mut values = Vec::with_capacity(target.node_count());
        for &p in target.nodes() {
            let (t, l) = locator.locate(p).ok_or_else(|| {
                Error::InvalidMesh(format!("point {p:?} lies outside the source mesh"))
            })?;
            let tri = mesh.triangles()[t];
            values.push(l[0] * self.values[tri[0]] + l[1] * self.values[tri[1]] + l[2] * self.values[tri[2]]);
        }
        Ok(ScalarField { values })
    }
}

impl Deref for ScalarField {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// Nodal interpolant `Π_h f`.
pub fn interpolate<F: Fn(f64, f64) -> f64>(mesh: &Mesh, f: F) -> Result<ScalarField> {
    ScalarField::new(mesh.nodes().iter().map(|p| f(p[0], p[1])).collect())
}

/// Errors of the nodal interpolant in the `H = L²` norm and the full
/// `V = H¹` norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterpolationError {
    pub h_norm: f64,
    pub v_norm: f64,
}

// Strang-Fix / Dunavant 7-point rule, exact for degree 5.
fn degree5_rule() -> [([f64; 3], f64); 7] {
    let s = 15f64.sqrt();
    let (b1, b2) = ((6.0 + s) / 21.0, (6.0 - s) / 21.0);
    let (a1, a2) = (1.0 - 2.0 * b1, 1.0 - 2.0 * b2);
    let (w1, w2) = ((155.0 + s) / 1200.0, (155.0 - s) / 1200.0);
    let third = 1.0 / 3.0;
    [
        ([third, third, third], 0.225),
        ([a1, b1, b1], w1),
        ([b1, a1, b1], w1),
        ([b1, b1, a1], w1),
        ([a2, b2, b2], w2),
        ([b2, a2, b2], w2),
        ([b2, b2, a2], w2),
    ]
}

/// Measures `f − Π_h f` with a degree-5 triangle rule, exact whenever `f`
/// is a polynomial of degree at most 2.
pub fn interpolation_error<F, G>(mesh: &Mesh, f: F, grad: G) -> Result<InterpolationError>
where
    F: Fn(f64, f64) -> f64,
    G: Fn(f64, f64) -> [f64; 2],
{
    let pi = interpolate(mesh, &f)?;
    let rule = degree5_rule();
    let (mut l2, mut semi) = (0.0, 0.0);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let c: [Point; 3] = mesh.corners(t);
        let area = signed_area(c);
        let grads = crate::assembly::barycentric_gradients(c);
        let vals = tri.map(|v| pi[v]);
        let gpi = [
            vals[0] * grads[0][0] + vals[1] * grads[1][0] + vals[2] * grads[2][0],
            vals[0] * grads[0][1] + vals[1] * grads[1][1] + vals[2] * grads[2][1],
        ];
        for (l, w) in rule {
            let x = l[0] * c[0][0] + l[1] * c[1][0] + l[2] * c[2][0];
            let y = l[0] * c[0][1] + l[1] * c[1][1] + l[2] * c[2][1];
            let e = f(x, y) - (l[0] * vals[0] + l[1] * vals[1] + l[2] * vals[2]);
            let g = grad(x, y);
            l2 += w * area * e * e;
            semi += w * area * ((g[0] - gpi[0]).powi(2) + (g[1] - gpi[1]).powi(2));
        }
    }
    Ok(InterpolationError {
        h_norm: l2.sqrt(),
        v_norm: (l2 + semi).sqrt(),
    })
}
