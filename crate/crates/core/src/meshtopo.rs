//! Structured meshes of the unit square with full topological adjacency.
//!
//! Vertices and cells are numbered lexicographically by (row, column).
//! Edges are numbered horizontal first, then vertical, then (triangles only)
//! the diagonals, each group lexicographic by (row, column). Triangular
//! meshes split every square along the diagonal running from its top-left
//! to its bottom-right corner.
//!
//! Every cell also carries a *reference ordering* of its vertices and edges,
//! which is the ordering used by the reference elements:
//!
//! * triangles: vertices `[v0, v1, v2]` counter-clockwise with the right
//!   angle at `v0`; local edges `e0 = (v1, v2)`, `e1 = (v0, v2)`,
//!   `e2 = (v0, v1)`.
//! * quadrilaterals: vertices `[bl, br, tr, tl]`; local edges
//!   `e0 = (bl, br)`, `e1 = (br, tr)`, `e2 = (tl, tr)`, `e3 = (bl, tl)`.
//!
//! Uniform refinement of `build(n)` produces exactly `build(2n)` (the
//! canonical renumbering is the identity), together with the parent/child
//! links needed by grid transfers.

use std::collections::BTreeSet;

/// Cell shape of a structured mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellShape {
    Triangle,
    Quadrilateral,
}

impl CellShape {
    pub fn name(self) -> &'static str {
        match self {
            CellShape::Triangle => "triangle",
            CellShape::Quadrilateral => "quadrilateral",
        }
    }

    pub fn num_vertices(self) -> usize {
        match self {
            CellShape::Triangle => 3,
            CellShape::Quadrilateral => 4,
        }
    }
}

/// A topological entity: `dim` 0 = vertex, 1 = edge, 2 = cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityRef {
    pub dim: u8,
    pub index: usize,
}

impl EntityRef {
    pub fn vertex(index: usize) -> Self {
        Self { dim: 0, index }
    }
    pub fn edge(index: usize) -> Self {
        Self { dim: 1, index }
    }
    pub fn cell(index: usize) -> Self {
        Self { dim: 2, index }
    }
}

impl std::fmt::Display for EntityRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.dim {
            0 => "vertex",
            1 => "edge",
            _ => "cell",
        };
        write!(f, "{kind} {}", self.index)
    }
}

/// Incidence structure of a mesh.
#[derive(Debug, Clone)]
pub struct MeshTopology {
    pub shape: CellShape,
    /// Cells per side of the unit square.
    pub n: usize,
    num_vertices: usize,
    num_edges: usize,
    num_cells: usize,
    cell_vertices: Vec<Vec<usize>>,
    cell_edges: Vec<Vec<usize>>,
    cell_ref_vertices: Vec<Vec<usize>>,
    cell_ref_edges: Vec<Vec<usize>>,
    edge_vertices: Vec<[usize; 2]>,
    edge_cells: Vec<Vec<usize>>,
    vertex_edges: Vec<Vec<usize>>,
    vertex_cells: Vec<Vec<usize>>,
    boundary_vertex: Vec<bool>,
    boundary_edge: Vec<bool>,
}

impl MeshTopology {
    pub fn count(&self, dim: u8) -> usize {
        match dim {
            0 => self.num_vertices,
            1 => self.num_edges,
            2 => self.num_cells,
            _ => panic!("invalid entity dimension {dim}"),
        }
    }
    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }
    pub fn num_edges(&self) -> usize {
        self.num_edges
    }
    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    /// Sorted vertices of a cell.
    pub fn cell_vertices(&self, c: usize) -> &[usize] {
        &self.cell_vertices[c]
    }
    /// Sorted edges of a cell.
    pub fn cell_edges(&self, c: usize) -> &[usize] {
        &self.cell_edges[c]
    }
    /// Vertices of a cell in reference order.
    pub fn cell_ref_vertices(&self, c: usize) -> &[usize] {
        &self.cell_ref_vertices[c]
    }
    /// Edges of a cell in reference order.
    pub fn cell_ref_edges(&self, c: usize) -> &[usize] {
        &self.cell_ref_edges[c]
    }
    /// Edge endpoints, lower index first (this is the global edge orientation).
    pub fn edge_vertices(&self, e: usize) -> [usize; 2] {
        self.edge_vertices[e]
    }
    /// Sorted cells adjacent to an edge (one on the boundary, two inside).
    pub fn edge_cells(&self, e: usize) -> &[usize] {
        &self.edge_cells[e]
    }
    pub fn vertex_edges(&self, v: usize) -> &[usize] {
        &self.vertex_edges[v]
    }
    pub fn vertex_cells(&self, v: usize) -> &[usize] {
        &self.vertex_cells[v]
    }
    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }
    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.boundary_edge[e]
    }
    /// A cell is on the boundary when one of its edges is.
    pub fn is_boundary_cell(&self, c: usize) -> bool {
        self.cell_edges[c].iter().any(|&e| self.boundary_edge[e])
    }
    pub fn is_boundary(&self, ent: EntityRef) -> bool {
        match ent.dim {
            0 => self.is_boundary_vertex(ent.index),
            1 => self.is_boundary_edge(ent.index),
            _ => self.is_boundary_cell(ent.index),
        }
    }

    /// Interior edges, i.e. edges shared by two cells.
    pub fn interior_edges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_edges).filter(move |&e| !self.boundary_edge[e])
    }

    /// Cells sharing an edge with `c`, sorted.
    pub fn edge_neighbors(&self, c: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.cell_edges[c]
            .iter()
            .flat_map(|&e| self.edge_cells[e].iter().copied())
            .filter(|&d| d != c)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Coordinates and per-edge geometric data.
#[derive(Debug, Clone)]
pub struct MeshGeometry {
    coords: Vec<[f64; 2]>,
    edge_length: Vec<f64>,
    edge_normal: Vec<[f64; 2]>,
    edge_tangent: Vec<[f64; 2]>,
}

impl MeshGeometry {
    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.coords[v]
    }
    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }
    /// Length `h_e` of an edge.
    pub fn edge_length(&self, e: usize) -> f64 {
        self.edge_length[e]
    }
    /// Unit normal pointing out of the lower-indexed adjacent cell (outward
    /// on the boundary).
    pub fn edge_normal(&self, e: usize) -> [f64; 2] {
        self.edge_normal[e]
    }
    /// Unit tangent, the normal rotated a quarter turn counter-clockwise.
    pub fn edge_tangent(&self, e: usize) -> [f64; 2] {
        self.edge_tangent[e]
    }
}

/// A structured mesh: topology plus geometry.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub topology: MeshTopology,
    pub geometry: MeshGeometry,
}

impl Mesh {
    pub fn shape(&self) -> CellShape {
        self.topology.shape
    }
    pub fn n(&self) -> usize {
        self.topology.n
    }
    /// Cell corner coordinates in reference order.
    pub fn cell_corners(&self, c: usize) -> Vec<[f64; 2]> {
        self.topology
            .cell_ref_vertices(c)
            .iter()
            .map(|&v| self.geometry.vertex(v))
            .collect()
    }
    /// Cell area.
    pub fn cell_area(&self, c: usize) -> f64 {
        let p = self.cell_corners(c);
        let m = p.len();
        let twice: f64 = (0..m)
            .map(|i| {
                let a = p[i];
                let b = p[(i + 1) % m];
                a[0] * b[1] - a[1] * b[0]
            })
            .sum();
        0.5 * twice
    }
    pub fn cell_centroid(&self, c: usize) -> [f64; 2] {
        let p = self.cell_corners(c);
        let m = p.len() as f64;
        let sx: f64 = p.iter().map(|q| q[0]).sum();
        let sy: f64 = p.iter().map(|q| q[1]).sum();
        [sx / m, sy / m]
    }
}

/// Parent/child relation produced by one uniform refinement.
#[derive(Debug, Clone)]
pub struct RefinementLink {
    /// Four children of each coarse cell.
    pub cell_children: Vec<[usize; 4]>,
    /// Parent of each fine cell.
    pub cell_parent: Vec<usize>,
    /// Fine vertex coinciding with each coarse vertex.
    pub vertex_to_fine: Vec<usize>,
    /// Two fine edges covering each coarse edge, ordered along the coarse
    /// edge's global orientation.
    pub edge_children: Vec<[usize; 2]>,
}

struct Numbering {
    n: usize,
}

impl Numbering {
    fn vertex(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }
    fn hedge(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }
    fn vedge(&self, i: usize, j: usize) -> usize {
        self.n * (self.n + 1) + j * (self.n + 1) + i
    }
    fn dedge(&self, i: usize, j: usize) -> usize {
        2 * self.n * (self.n + 1) + j * self.n + i
    }
}

/// Triangular mesh of the unit square with `n` squares per side, each cut
/// from top-left to bottom-right.
pub fn build_structured_tri(n: usize) -> Mesh {
    assert!(n >= 1, "need at least one cell per side");
    let num = Numbering { n };
    let mut ref_vertices = Vec::with_capacity(2 * n * n);
    let mut ref_edges = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let bl = num.vertex(i, j);
            let br = num.vertex(i + 1, j);
            let tr = num.vertex(i + 1, j + 1);
            let tl = num.vertex(i, j + 1);
            // lower-left triangle
            ref_vertices.push(vec![bl, br, tl]);
            ref_edges.push(vec![num.dedge(i, j), num.vedge(i, j), num.hedge(i, j)]);
            // upper-right triangle
            ref_vertices.push(vec![br, tr, tl]);
            ref_edges.push(vec![num.hedge(i, j + 1), num.dedge(i, j), num.vedge(i + 1, j)]);
        }
    }
    let num_edges = 2 * n * (n + 1) + n * n;
    assemble_mesh(CellShape::Triangle, n, ref_vertices, ref_edges, num_edges, &num)
}

/// Quadrilateral mesh of the unit square with `n` squares per side.
pub fn build_structured_quad(n: usize) -> Mesh {
    assert!(n >= 1, "need at least one cell per side");
    let num = Numbering { n };
    let mut ref_vertices = Vec::with_capacity(n * n);
    let mut ref_edges = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            ref_vertices.push(vec![
                num.vertex(i, j),
                num.vertex(i + 1, j),
                num.vertex(i + 1, j + 1),
                num.vertex(i, j + 1),
            ]);
            ref_edges.push(vec![
                num.hedge(i, j),
                num.vedge(i + 1, j),
                num.hedge(i, j + 1),
                num.vedge(i, j),
            ]);
        }
    }
    let num_edges = 2 * n * (n + 1);
    assemble_mesh(CellShape::Quadrilateral, n, ref_vertices, ref_edges, num_edges, &num)
}

/// Build a structured mesh of the given shape.
pub fn build_structured(shape: CellShape, n: usize) -> Mesh {
    match shape {
        CellShape::Triangle => build_structured_tri(n),
        CellShape::Quadrilateral => build_structured_quad(n),
    }
}

fn assemble_mesh(
    shape: CellShape,
    n: usize,
    cell_ref_vertices: Vec<Vec<usize>>,
    cell_ref_edges: Vec<Vec<usize>>,
    num_edges: usize,
    num: &Numbering,
) -> Mesh {
    let num_vertices = (n + 1) * (n + 1);
    let num_cells = cell_ref_vertices.len();
    let h = 1.0 / n as f64;

    let mut coords = vec![[0.0; 2]; num_vertices];
    for j in 0..=n {
        for i in 0..=n {
            coords[num.vertex(i, j)] = [i as f64 * h, j as f64 * h];
        }
    }

    // Edge endpoints from the reference ordering of any adjacent cell.
    let local_pairs: &[[usize; 2]] = match shape {
        CellShape::Triangle => &[[1, 2], [0, 2], [0, 1]],
        CellShape::Quadrilateral => &[[0, 1], [1, 2], [3, 2], [0, 3]],
    };
    let mut edge_vertices = vec![[usize::MAX; 2]; num_edges];
    let mut edge_cells = vec![Vec::new(); num_edges];
    for c in 0..num_cells {
        for (le, &e) in cell_ref_edges[c].iter().enumerate() {
            let [a, b] = local_pairs[le];
            let (va, vb) = (cell_ref_vertices[c][a], cell_ref_vertices[c][b]);
            edge_vertices[e] = [va.min(vb), va.max(vb)];
            edge_cells[e].push(c);
        }
    }
    for cells in edge_cells.iter_mut() {
        cells.sort_unstable();
    }

    let mut vertex_edges = vec![Vec::new(); num_vertices];
    for (e, ev) in edge_vertices.iter().enumerate() {
        vertex_edges[ev[0]].push(e);
        vertex_edges[ev[1]].push(e);
    }
    let mut vertex_cells = vec![Vec::new(); num_vertices];
    for (c, vs) in cell_ref_vertices.iter().enumerate() {
        for &v in vs {
            vertex_cells[v].push(c);
        }
    }
    for list in vertex_edges.iter_mut().chain(vertex_cells.iter_mut()) {
        list.sort_unstable();
    }

    let boundary_edge: Vec<bool> = edge_cells.iter().map(|c| c.len() == 1).collect();
    let mut boundary_vertex = vec![false; num_vertices];
    for (e, ev) in edge_vertices.iter().enumerate() {
        if boundary_edge[e] {
            boundary_vertex[ev[0]] = true;
            boundary_vertex[ev[1]] = true;
        }
    }

    let sorted = |lists: &[Vec<usize>]| -> Vec<Vec<usize>> {
        lists
            .iter()
            .map(|l| {
                let mut s = l.clone();
                s.sort_unstable();
                s
            })
            .collect()
    };
    let cell_vertices = sorted(&cell_ref_vertices);
    let cell_edges = sorted(&cell_ref_edges);

    let centroid = |c: usize| -> [f64; 2] {
        let vs = &cell_ref_vertices[c];
        let m = vs.len() as f64;
        let mut p = [0.0; 2];
        for &v in vs {
            p[0] += coords[v][0] / m;
            p[1] += coords[v][1] / m;
        }
        p
    };

    let mut edge_length = Vec::with_capacity(num_edges);
    let mut edge_normal = Vec::with_capacity(num_edges);
    let mut edge_tangent = Vec::with_capacity(num_edges);
    for e in 0..num_edges {
        let [a, b] = edge_vertices[e];
        let (pa, pb) = (coords[a], coords[b]);
        let d = [pb[0] - pa[0], pb[1] - pa[1]];
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
        let mut nrm = [d[1] / len, -d[0] / len];
        // Point away from the lower-indexed adjacent cell.
        let c0 = centroid(edge_cells[e][0]);
        let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
        if nrm[0] * (mid[0] - c0[0]) + nrm[1] * (mid[1] - c0[1]) < 0.0 {
            nrm = [-nrm[0], -nrm[1]];
        }
        edge_length.push(len);
        edge_normal.push(nrm);
        edge_tangent.push([-nrm[1], nrm[0]]);
    }

    Mesh {
        topology: MeshTopology {
            shape,
            n,
            num_vertices,
            num_edges,
            num_cells,
            cell_vertices,
            cell_edges,
            cell_ref_vertices,
            cell_ref_edges,
            edge_vertices,
            edge_cells,
            vertex_edges,
            vertex_cells,
            boundary_vertex,
            boundary_edge,
        },
        geometry: MeshGeometry { coords, edge_length, edge_normal, edge_tangent },
    }
}

/// Uniformly refine a structured mesh, returning the fine mesh and the
/// parent/child link.
pub fn refine_uniform(mesh: &Mesh) -> (Mesh, RefinementLink) {
    let n = mesh.n();
    let shape = mesh.shape();
    let fine = build_structured(shape, 2 * n);
    let cn = Numbering { n };
    let fnum = Numbering { n: 2 * n };

    let mut vertex_to_fine = vec![0; mesh.topology.num_vertices()];
    for j in 0..=n {
        for i in 0..=n {
            vertex_to_fine[cn.vertex(i, j)] = fnum.vertex(2 * i, 2 * j);
        }
    }

    let mut edge_children = vec![[0; 2]; mesh.topology.num_edges()];
    for j in 0..=n {
        for i in 0..n {
            edge_children[cn.hedge(i, j)] = [fnum.hedge(2 * i, 2 * j), fnum.hedge(2 * i + 1, 2 * j)];
        }
    }
    for j in 0..n {
        for i in 0..=n {
            edge_children[cn.vedge(i, j)] = [fnum.vedge(2 * i, 2 * j), fnum.vedge(2 * i, 2 * j + 1)];
        }
    }

    let mut cell_children = Vec::with_capacity(mesh.topology.num_cells());
    match shape {
        CellShape::Quadrilateral => {
            for j in 0..n {
                for i in 0..n {
                    let q = |a: usize, b: usize| (2 * j + b) * 2 * n + 2 * i + a;
                    cell_children.push([q(0, 0), q(1, 0), q(0, 1), q(1, 1)]);
                }
            }
        }
        CellShape::Triangle => {
            for j in 0..n {
                for i in 0..n {
                    // diagonal runs from tl (i, j+1) to br (i+1, j); global
                    // orientation goes from br (lower index) to tl.
                    edge_children[cn.dedge(i, j)] =
                        [fnum.dedge(2 * i + 1, 2 * j), fnum.dedge(2 * i, 2 * j + 1)];
                }
            }
            for j in 0..n {
                for i in 0..n {
                    let sq = |a: usize, b: usize| 2 * ((2 * j + b) * 2 * n + 2 * i + a);
                    cell_children.push([sq(0, 0), sq(0, 0) + 1, sq(1, 0), sq(0, 1)]);
                    cell_children.push([sq(1, 0) + 1, sq(0, 1) + 1, sq(1, 1), sq(1, 1) + 1]);
                }
            }
        }
    }

    let mut cell_parent = vec![0; fine.topology.num_cells()];
    for (p, ch) in cell_children.iter().enumerate() {
        for &c in ch {
            cell_parent[c] = p;
        }
    }
    (fine, RefinementLink { cell_children, cell_parent, vertex_to_fine, edge_children })
}

/// The entity itself plus every strictly higher-dimensional entity incident
/// on it, sorted.
pub fn star(topo: &MeshTopology, ent: EntityRef) -> Vec<EntityRef> {
    let mut out = vec![ent];
    match ent.dim {
        0 => {
            out.extend(topo.vertex_edges(ent.index).iter().map(|&e| EntityRef::edge(e)));
            out.extend(topo.vertex_cells(ent.index).iter().map(|&c| EntityRef::cell(c)));
        }
        1 => out.extend(topo.edge_cells(ent.index).iter().map(|&c| EntityRef::cell(c))),
        _ => {}
    }
    out.sort_unstable();
    out
}

/// The set plus every lower-dimensional entity incident to a member, sorted.
pub fn closure(topo: &MeshTopology, set: &[EntityRef]) -> Vec<EntityRef> {
    let mut out: BTreeSet<EntityRef> = set.iter().copied().collect();
    for ent in set {
        match ent.dim {
            2 => {
                out.extend(topo.cell_edges(ent.index).iter().map(|&e| EntityRef::edge(e)));
                out.extend(topo.cell_vertices(ent.index).iter().map(|&v| EntityRef::vertex(v)));
            }
            1 => out.extend(topo.edge_vertices(ent.index).iter().map(|&v| EntityRef::vertex(v))),
            _ => {}
        }
    }
    out.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(m: &Mesh) -> (usize, usize, usize) {
        (m.topology.num_vertices(), m.topology.num_edges(), m.topology.num_cells())
    }

    #[test]
    fn tri_counts() {
        assert_eq!(counts(&build_structured_tri(5)), (36, 85, 50));
        assert_eq!(counts(&build_structured_tri(1)), (4, 5, 2));
    }

    #[test]
    fn quad_counts() {
        assert_eq!(counts(&build_structured_quad(5)), (36, 60, 25));
        assert_eq!(counts(&build_structured_quad(1)), (4, 4, 1));
    }

    #[test]
    fn euler_and_boundary_edges() {
        for n in 1..8 {
            for m in [build_structured_tri(n), build_structured_quad(n)] {
                let (v, e, c) = counts(&m);
                assert_eq!(v as i64 - e as i64 + c as i64, 1);
                let nb = (0..e).filter(|&e| m.topology.is_boundary_edge(e)).count();
                assert_eq!(nb, 4 * n);
                for e in 0..e {
                    let k = m.topology.edge_cells(e).len();
                    assert_eq!(k, if m.topology.is_boundary_edge(e) { 1 } else { 2 });
                }
            }
        }
    }

    #[test]
    fn diagonals_run_top_left_to_bottom_right() {
        let m = build_structured_tri(3);
        let g = &m.geometry;
        for e in 2 * 3 * 4..m.topology.num_edges() {
            let [a, b] = m.topology.edge_vertices(e);
            let (pa, pb) = (g.vertex(a), g.vertex(b));
            // slope -1
            assert!(((pb[1] - pa[1]) + (pb[0] - pa[0])).abs() < 1e-14);
        }
    }

    #[test]
    fn interior_vertex_star_has_six_cells() {
        let m = build_structured_tri(5);
        for j in 1..5 {
            for i in 1..5 {
                let v = j * 6 + i;
                let s = star(&m.topology, EntityRef::vertex(v));
                assert_eq!(s.iter().filter(|e| e.dim == 2).count(), 6);
                assert_eq!(s.iter().filter(|e| e.dim == 1).count(), 6);
            }
        }
    }

    #[test]
    fn corner_stars() {
        let m = build_structured_tri(1);
        // (0,0) is a non-diagonal corner
        let s = star(&m.topology, EntityRef::vertex(0));
        assert_eq!(s.len(), 4);
        assert_eq!(s.iter().filter(|e| e.dim == 1).count(), 2);
        assert_eq!(s.iter().filter(|e| e.dim == 2).count(), 1);
        // (1,0) sits on the diagonal
        let s = star(&m.topology, EntityRef::vertex(1));
        assert_eq!(s.iter().filter(|e| e.dim == 2).count(), 2);
    }

    #[test]
    fn quad_center_star() {
        let m = build_structured_quad(2);
        let s = star(&m.topology, EntityRef::vertex(4));
        assert_eq!(s.iter().filter(|e| e.dim == 2).count(), 4);
        assert_eq!(s.iter().filter(|e| e.dim == 1).count(), 4);
    }

    #[test]
    fn star_of_cell_and_edge() {
        let m = build_structured_tri(3);
        assert_eq!(star(&m.topology, EntityRef::cell(4)), vec![EntityRef::cell(4)]);
        let e = m.topology.interior_edges().next().unwrap();
        let s = star(&m.topology, EntityRef::edge(e));
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn cell_closures() {
        let t = build_structured_tri(2);
        let c = closure(&t.topology, &[EntityRef::cell(3)]);
        assert_eq!(c.len(), 7);
        let q = build_structured_quad(2);
        let c = closure(&q.topology, &[EntityRef::cell(3)]);
        assert_eq!(c.len(), 9);
        assert_eq!(closure(&q.topology, &c), c);
    }

    #[test]
    fn geometry_invariants() {
        for n in [1, 3, 5] {
            let h = 1.0 / n as f64;
            let t = build_structured_tri(n);
            for e in 0..t.topology.num_edges() {
                let he = t.geometry.edge_length(e);
                assert!((he - h).abs() < 1e-14 || (he - h * 2f64.sqrt()).abs() < 1e-14);
                let nn = t.geometry.edge_normal(e);
                let tt = t.geometry.edge_tangent(e);
                assert!((nn[0].hypot(nn[1]) - 1.0).abs() < 1e-14);
                assert!((nn[0] * tt[0] + nn[1] * tt[1]).abs() < 1e-14);
            }
            let q = build_structured_quad(n);
            for e in 0..q.topology.num_edges() {
                assert!((q.geometry.edge_length(e) - h).abs() < 1e-14);
            }
            for c in 0..t.topology.num_cells() {
                assert!(t.cell_area(c) > 0.0);
            }
        }
    }

    #[test]
    fn normals_point_out_of_lower_cell() {
        let m = build_structured_tri(4);
        for e in m.topology.interior_edges() {
            let c0 = m.topology.edge_cells(e)[0];
            let c1 = m.topology.edge_cells(e)[1];
            let (a, b) = (m.cell_centroid(c0), m.cell_centroid(c1));
            let nrm = m.geometry.edge_normal(e);
            assert!(nrm[0] * (b[0] - a[0]) + nrm[1] * (b[1] - a[1]) > 0.0);
        }
    }

    #[test]
    fn refinement_counts_and_areas() {
        let (f, link) = refine_uniform(&build_structured_tri(5));
        assert_eq!(counts(&f), (121, 320, 200));
        let (fq, linkq) = refine_uniform(&build_structured_quad(5));
        assert_eq!(counts(&fq), (121, 220, 100));
        for (coarse, fine, link) in
            [(build_structured_tri(5), f, link), (build_structured_quad(5), fq, linkq)]
        {
            for (p, ch) in link.cell_children.iter().enumerate() {
                let area: f64 = ch.iter().map(|&c| fine.cell_area(c)).sum();
                assert!((area - coarse.cell_area(p)).abs() < 1e-14);
                let cp = coarse.cell_corners(p);
                // children lie inside the parent: their centroids are inside its bounding box
                for &c in ch {
                    let x = fine.cell_centroid(c);
                    let inside = point_in_polygon(&cp, x);
                    assert!(inside, "child {c} not inside parent {p}");
                }
            }
            for (v, &fv) in link.vertex_to_fine.iter().enumerate() {
                assert_eq!(coarse.geometry.vertex(v), fine.geometry.vertex(fv));
            }
            for (e, ch) in link.edge_children.iter().enumerate() {
                let [a, b] = coarse.topology.edge_vertices(e);
                let (pa, pb) = (coarse.geometry.vertex(a), coarse.geometry.vertex(b));
                let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
                let f0 = fine.topology.edge_vertices(ch[0]);
                let f1 = fine.topology.edge_vertices(ch[1]);
                let has = |fv: [usize; 2], p: [f64; 2]| fv.iter().any(|&v| fine.geometry.vertex(v) == p);
                assert!(has(f0, pa) && has(f0, mid), "first child starts at the coarse start vertex");
                assert!(has(f1, pb) && has(f1, mid));
            }
        }
    }

    fn point_in_polygon(p: &[[f64; 2]], x: [f64; 2]) -> bool {
        let m = p.len();
        (0..m).all(|i| {
            let a = p[i];
            let b = p[(i + 1) % m];
            (b[0] - a[0]) * (x[1] - a[1]) - (b[1] - a[1]) * (x[0] - a[0]) > 0.0
        })
    }

    #[test]
    fn incidence_lists_sorted() {
        let m = build_structured_tri(3);
        let t = &m.topology;
        for c in 0..t.num_cells() {
            assert!(t.cell_vertices(c).windows(2).all(|w| w[0] < w[1]));
            assert!(t.cell_edges(c).windows(2).all(|w| w[0] < w[1]));
        }
        for v in 0..t.num_vertices() {
            assert!(t.vertex_edges(v).windows(2).all(|w| w[0] < w[1]));
            assert!(t.vertex_cells(v).windows(2).all(|w| w[0] < w[1]));
        }
    }
}
