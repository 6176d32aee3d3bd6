//! Conforming triangulations with a two-part boundary.
//!
//! The boundary of the domain is split into `Γ1` (where the Robin or
//! Dirichlet condition acts) and `Γ2` (prescribed flux). A [`Mesh`] always
//! satisfies:
//!
//! * every triangle is counterclockwise with positive area,
//! * every interior edge is shared by two triangles and every boundary edge
//!   by one,
//! * `Γ1` and `Γ2` partition the boundary edges and `Γ1` is nonempty,
//! * `h` is the longest triangle side.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Signed areas at or below this are treated as degenerate.
pub const AREA_TOLERANCE: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    fn bit(self) -> u8 {
        match self {
            Side::Bottom => 1,
            Side::Right => 2,
            Side::Top => 4,
            Side::Left => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Bottom => "bottom",
            Side::Right => "right",
            Side::Top => "top",
            Side::Left => "left",
        }
    }

    /// Side of the unit square containing the segment midpoint `m`.
    pub fn of_unit_square_point(m: Point) -> Option<Side> {
        const EPS: f64 = 1e-12;
        if m[1].abs() < EPS {
            Some(Side::Bottom)
        } else if (m[0] - 1.0).abs() < EPS {
            Some(Side::Right)
        } else if (m[1] - 1.0).abs() < EPS {
            Some(Side::Top)
        } else if m[0].abs() < EPS {
            Some(Side::Left)
        } else {
            None
        }
    }
}

/// A union of unit-square sides.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct SideSet(u8);

impl SideSet {
    pub const BOTTOM: SideSet = SideSet(1);

    pub fn empty() -> Self {
        SideSet(0)
    }

    pub fn all() -> Self {
        SideSet(15)
    }

    pub fn with(self, side: Side) -> Self {
        SideSet(self.0 | side.bit())
    }

    pub fn contains(self, side: Side) -> bool {
        self.0 & side.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn sides(self) -> impl Iterator<Item = Side> {
        Side::ALL.into_iter().filter(move |s| self.contains(*s))
    }
}

impl FromIterator<Side> for SideSet {
    fn from_iter<I: IntoIterator<Item = Side>>(iter: I) -> Self {
        iter.into_iter().fold(SideSet::empty(), SideSet::with)
    }
}

impl FromStr for SideSet {
    type Err = Error;

    /// Comma separated side names, or `all`.
    fn from_str(s: &str) -> Result<Self> {
        let mut set = SideSet::empty();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            set = match part {
                "all" => SideSet::all(),
                "bottom" => set.with(Side::Bottom),
                "right" => set.with(Side::Right),
                "top" => set.with(Side::Top),
                "left" => set.with(Side::Left),
                other => {
                    return Err(Error::InvalidParameter(format!("unknown side `{other}`")))
                }
            };
        }
        Ok(set)
    }
}

impl fmt::Display for SideSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.sides().map(Side::name).collect();
        write!(f, "{}", names.join(","))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    gamma1: Vec<[usize; 2]>,
    gamma2: Vec<[usize; 2]>,
    h: f64,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn dist(p: Point, q: Point) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

pub(crate) fn signed_area(p: [Point; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

impl Mesh {
    /// Builds a mesh and checks every structural invariant.
    pub fn new(
        nodes: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        gamma1: Vec<[usize; 2]>,
        gamma2: Vec<[usize; 2]>,
    ) -> Result<Self> {
        let mut mesh = Mesh {
            nodes,
            triangles,
            gamma1,
            gamma2,
            h: 0.0,
        };
        mesh.h = mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<f64> {
        let n = self.nodes.len();
        if self.nodes.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidMesh("non-finite node coordinate".into()));
        }
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        let mut h: f64 = 0.0;
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing node")));
            }
            let area = signed_area(self.corners(t));
            if area <= AREA_TOLERANCE {
                return Err(Error::DegenerateTriangle { index: t, area });
            }
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edges.entry(edge_key(a, b)).or_default() += 1;
                h = h.max(dist(self.nodes[a], self.nodes[b]));
            }
        }
        if let Some((e, c)) = edges.iter().find(|(_, &c)| c > 2) {
            return Err(Error::InvalidMesh(format!("edge {e:?} shared by {c} triangles")));
        }
        let mut tagged: HashMap<(usize, usize), u8> = HashMap::new();
        for (tag, list) in [(1u8, &self.gamma1), (2u8, &self.gamma2)] {
            for e in list {
                if let Some(prev) = tagged.insert(edge_key(e[0], e[1]), tag) {
                    return Err(Error::InvalidMesh(format!(
                        "edge {e:?} tagged twice (gamma{prev} and gamma{tag})"
                    )));
                }
            }
        }
        for (e, &c) in &edges {
            if (c == 1) != tagged.contains_key(e) {
                return Err(Error::InvalidMesh(format!(
                    "boundary tags do not match boundary edge {e:?}"
                )));
            }
        }
        if tagged.len() != edges.values().filter(|&&c| c == 1).count() {
            return Err(Error::InvalidMesh("tagged edge is not a boundary edge".into()));
        }
        if self.gamma1.is_empty() {
            return Err(Error::InvalidMesh("gamma1 must be nonempty".into()));
        }
        Ok(h)
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn gamma1_edges(&self) -> &[[usize; 2]] {
        &self.gamma1
    }

    pub fn gamma2_edges(&self) -> &[[usize; 2]] {
        &self.gamma2
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    /// Longest triangle side.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|v| self.nodes[v])
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| signed_area(self.corners(t))).sum()
    }

    /// Nodes touching a `Γ1` edge, sorted.
    pub fn gamma1_nodes(&self) -> Vec<usize> {
        let mut on = vec![false; self.nodes.len()];
        for e in &self.gamma1 {
            on[e[0]] = true;
            on[e[1]] = true;
        }
        (0..on.len()).filter(|&i| on[i]).collect()
    }

    pub fn gamma1_length(&self) -> f64 {
        self.gamma1
            .iter()
            .map(|e| dist(self.nodes[e[0]], self.nodes[e[1]]))
            .sum()
    }

    /// Structured triangulation of the unit square: `n × n` cells, each
    /// split along its lower-left to upper-right diagonal. Nodes are ordered
    /// lexicographically by `(y, x)`.
    pub fn unit_square(n: usize, gamma1: SideSet) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("n must be at least 1".into()));
        }
        if gamma1.is_empty() {
            return Err(Error::InvalidParameter("gamma1 must select at least one side".into()));
        }
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let step = 1.0 / n as f64;
        let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                nodes.push([i as f64 * step, j as f64 * step]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v11, v01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        let mut gamma1_edges = Vec::new();
        let mut gamma2_edges = Vec::new();
        // counterclockwise walk: bottom, right, top, left
        for side in Side::ALL {
            let list = if gamma1.contains(side) {
                &mut gamma1_edges
            } else {
                &mut gamma2_edges
            };
            for k in 0..n {
                list.push(match side {
                    Side::Bottom => [idx(k, 0), idx(k + 1, 0)],
                    Side::Right => [idx(n, k), idx(n, k + 1)],
                    Side::Top => [idx(n - k, n), idx(n - k - 1, n)],
                    Side::Left => [idx(0, n - k), idx(0, n - k - 1)],
                });
            }
        }
        Mesh::new(nodes, triangles, gamma1_edges, gamma2_edges)
    }

    /// Red refinement: every triangle is split into four similar children
    /// through its edge midpoints. Boundary tags are inherited and the nodes
    /// are renumbered lexicographically by `(y, x)`.
    pub fn refine_uniform(&self) -> Result<Self> {
        let mut nodes = self.nodes.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, nodes: &mut Vec<Point>| -> usize {
            *midpoint.entry(edge_key(a, b)).or_insert_with(|| {
                let (p, q) = (nodes[a], nodes[b]);
                nodes.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                nodes.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for &[a, b, c] in &self.triangles {
            let ab = mid(a, b, &mut nodes);
            let bc = mid(b, c, &mut nodes);
            let ca = mid(c, a, &mut nodes);
            triangles.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        let split = |edges: &[[usize; 2]], nodes: &mut Vec<Point>, mid: &mut dyn FnMut(usize, usize, &mut Vec<Point>) -> usize| {
            edges
                .iter()
                .flat_map(|&[a, b]| {
                    let m = mid(a, b, nodes);
                    [[a, m], [m, b]]
                })
                .collect::<Vec<_>>()
        };
        let gamma1 = split(&self.gamma1, &mut nodes, &mut mid);
        let gamma2 = split(&self.gamma2, &mut nodes, &mut mid);

        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_by(|&p, &q| {
            let (a, b) = (nodes[p], nodes[q]);
            a[1].total_cmp(&b[1]).then(a[0].total_cmp(&b[0]))
        });
        let mut new_index = vec![0; nodes.len()];
        for (k, &old) in order.iter().enumerate() {
            new_index[old] = k;
        }
        let sorted_nodes = order.iter().map(|&old| nodes[old]).collect();
        let remap3 = |t: [usize; 3]| t.map(|v| new_index[v]);
        let remap2 = |e: [usize; 2]| e.map(|v| new_index[v]);
        Mesh::new(
            sorted_nodes,
            triangles.into_iter().map(remap3).collect(),
            gamma1.into_iter().map(remap2).collect(),
            gamma2.into_iter().map(remap2).collect(),
        )
    }

    /// Text export: `nodes N triangles T`, node lines, triangle lines, then
    /// `gamma1 E1` and `gamma2 E2` each followed by their edges.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "nodes {} triangles {}", self.nodes.len(), self.triangles.len())?;
        for p in &self.nodes {
            writeln!(w, "{:.16e} {:.16e}", p[0], p[1])?;
        }
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        for (name, list) in [("gamma1", &self.gamma1), ("gamma2", &self.gamma2)] {
            writeln!(w, "{name} {}", list.len())?;
            for e in list {
                writeln!(w, "{} {}", e[0], e[1])?;
            }
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let lines: Vec<String> = r.lines().collect::<std::io::Result<_>>()?;
        // blank lines and `#` comments are skipped
        let mut cursor = lines
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let mut next = |what: &str| -> Result<(usize, Vec<&str>)> {
            cursor
                .next()
                .map(|(i, l)| (i + 1, l.split_whitespace().collect()))
                .ok_or_else(|| Error::Parse {
                    line: lines.len(),
                    message: format!("unexpected end of input, expected {what}"),
                })
        };
        fn num<T: FromStr>(line: usize, s: &str) -> Result<T> {
            s.parse().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse `{s}`"),
            })
        }
        let (line, head) = next("header")?;
        if head.len() != 4 || head[0] != "nodes" || head[2] != "triangles" {
            return Err(Error::Parse {
                line,
                message: "expected `nodes <N> triangles <T>`".into(),
            });
        }
        let (nn, nt): (usize, usize) = (num(line, head[1])?, num(line, head[3])?);
        let mut nodes = Vec::with_capacity(nn);
        for _ in 0..nn {
            let (line, f) = next("node")?;
            if f.len() != 2 {
                return Err(Error::Parse { line, message: "expected `x y`".into() });
            }
            nodes.push([num(line, f[0])?, num(line, f[1])?]);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (line, f) = next("triangle")?;
            if f.len() != 3 {
                return Err(Error::Parse { line, message: "expected `a b c`".into() });
            }
            triangles.push([num(line, f[0])?, num(line, f[1])?, num(line, f[2])?]);
        }
        let mut gammas = Vec::new();
        for name in ["gamma1", "gamma2"] {
            let (line, f) = next(name)?;
            if f.len() != 2 || f[0] != name {
                return Err(Error::Parse { line, message: format!("expected `{name} <E>`") });
            }
            let count: usize = num(line, f[1])?;
            let mut edges = Vec::with_capacity(count);
            for _ in 0..count {
                let (line, f) = next("edge")?;
                if f.len() != 2 {
                    return Err(Error::Parse { line, message: "expected `a b`".into() });
                }
                edges.push([num(line, f[0])?, num(line, f[1])?]);
            }
            gammas.push(edges);
        }
        let gamma2 = gammas.pop().unwrap();
        let gamma1 = gammas.pop().unwrap();
        Mesh::new(nodes, triangles, gamma1, gamma2)
    }

    /// Finds a triangle containing `p` and the barycentric coordinates of `p`
    /// in it. Linear scan; fine for the mesh sizes used in sweeps when paired
    /// with [`PointLocator`].
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        (0..self.triangles.len()).find_map(|t| self.barycentric_in(t, p).map(|l| (t, l)))
    }

    fn barycentric_in(&self, t: usize, p: Point) -> Option<[f64; 3]> {
        const EPS: f64 = 1e-12;
        let c = self.corners(t);
        let area = signed_area(c);
        let l0 = signed_area([p, c[1], c[2]]) / area;
        let l1 = signed_area([c[0], p, c[2]]) / area;
        let l2 = 1.0 - l0 - l1;
        (l0 >= -EPS && l1 >= -EPS && l2 >= -EPS).then_some([l0, l1, l2])
    }
}

/// Bucket grid over the mesh bounding box for repeated point location.
pub struct PointLocator<'a> {
    mesh: &'a Mesh,
    origin: Point,
    cell: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in mesh.nodes() {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let side = (mesh.triangle_count() as f64).sqrt().ceil().max(1.0) as usize;
        let dims = [side, side];
        let cell = [
            ((hi[0] - lo[0]) / side as f64).max(f64::MIN_POSITIVE),
            ((hi[1] - lo[1]) / side as f64).max(f64::MIN_POSITIVE),
        ];
        let mut loc = PointLocator {
            mesh,
            origin: lo,
            cell,
            dims,
            buckets: vec![Vec::new(); side * side],
        };
        for t in 0..mesh.triangle_count() {
            let c = mesh.corners(t);
            let (mut a, mut b) = ([usize::MAX; 2], [0; 2]);
            for p in c {
                let k = loc.cell_of(p);
                for d in 0..2 {
                    a[d] = a[d].min(k[d]);
                    b[d] = b[d].max(k[d]);
                }
            }
            for j in a[1]..=b[1] {
                for i in a[0]..=b[0] {
                    loc.buckets[j * dims[0] + i].push(t);
                }
            }
        }
        loc
    }

    fn cell_of(&self, p: Point) -> [usize; 2] {
        let mut k = [0; 2];
        for d in 0..2 {
            let slot = ((p[d] - self.origin[d]) / self.cell[d]).floor();
            k[d] = (slot.max(0.0) as usize).min(self.dims[d] - 1);
        }
        k
    }

    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        let k = self.cell_of(p);
        self.buckets[k[1] * self.dims[0] + k[0]]
            .iter()
            .find_map(|&t| self.mesh.barycentric_in(t, p).map(|l| (t, l)))
            .or_else(|| self.mesh.locate(p))
    }
}
