//! Global function spaces over structured meshes.
//!
//! Scalar DoFs ("nodes") are numbered entity by entity: all vertex DoFs,
//! then edge DoFs, then cell-interior DoFs. Vector Lagrange spaces store
//! two components per node, interleaved (`2 * node + component`).
//!
//! Edge DoFs follow the global edge orientation (lower vertex index to
//! higher). Point-value DoFs on an edge are reversed in cells whose local
//! edge runs the other way. Normal-moment DoFs are sign-flipped instead:
//! by the normal direction (the global normal points out of the
//! lower-indexed cell) and by the parity of the Legendre degree.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::elements::{make_element, push_forward, reference_edges, CellMap, ElementFamily, MapKind, MapPoint, ReferenceElement, Tabulation};
use crate::error::{Error, Result};
use crate::meshtopo::{CellShape, EntityRef, Mesh};

/// The four velocity/pressure pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Discretization {
    /// `P_k / P_{k-1}` on triangles.
    ThTri,
    /// `Q_k / Q_{k-1}` on quadrilaterals.
    ThQuad,
    /// `BDM_k / dP_{k-1}` with interior penalty.
    Bdm,
    /// `RT_k / dP_{k-1}` with interior penalty.
    Rt,
}

impl Discretization {
    pub const ALL: [Discretization; 4] = [Discretization::ThTri, Discretization::ThQuad, Discretization::Bdm, Discretization::Rt];

    pub fn name(self) -> &'static str {
        match self {
            Discretization::ThTri => "th-tri",
            Discretization::ThQuad => "th-quad",
            Discretization::Bdm => "bdm",
            Discretization::Rt => "rt",
        }
    }

    pub fn shape(self) -> CellShape {
        match self {
            Discretization::ThQuad => CellShape::Quadrilateral,
            _ => CellShape::Triangle,
        }
    }

    pub fn is_hdiv(self) -> bool {
        matches!(self, Discretization::Bdm | Discretization::Rt)
    }

    /// Supported velocity orders.
    pub fn orders(self) -> std::ops::RangeInclusive<usize> {
        match self {
            Discretization::ThTri | Discretization::ThQuad => 2..=8,
            Discretization::Bdm | Discretization::Rt => 1..=4,
        }
    }
}

impl fmt::Display for Discretization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Discretization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Discretization::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown case '{s}' (expected th-tri, th-quad, bdm or rt)")))
    }
}

/// Value and gradient of a finite element function at one point.
/// Scalar functions use component 0 only.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FieldSample {
    pub value: [f64; 2],
    /// `grad[c][d] = d value[c] / d x_d`
    pub grad: [[f64; 2]; 2],
}

/// A global finite element space.
#[derive(Debug, Clone)]
pub struct FunctionSpace {
    mesh: Arc<Mesh>,
    element: ReferenceElement,
    block: usize,
    num_nodes: usize,
    cell_nodes: Vec<Vec<usize>>,
    cell_signs: Vec<Vec<f64>>,
    entity_nodes: [Vec<Vec<usize>>; 3],
    owner: Vec<EntityRef>,
    boundary: Vec<bool>,
}

impl FunctionSpace {
    /// Build a space; `vector` requests two interleaved components
    /// (only meaningful for scalar element families).
    pub fn new(mesh: Arc<Mesh>, element: ReferenceElement, vector: bool) -> Result<Self> {
        if element.shape() != mesh.shape() {
            return Err(Error::InvalidConfig(format!(
                "{} element on {} mesh",
                element.family.name(),
                mesh.shape().name()
            )));
        }
        if vector && element.value_size() != 1 {
            return Err(Error::InvalidConfig("vector space of a vector-valued element".into()));
        }
        let topo = &mesh.topology;
        let per = [element.dofs_per_entity(0), element.dofs_per_entity(1), element.dofs_per_entity(2)];

        let mut entity_nodes: [Vec<Vec<usize>>; 3] = Default::default();
        let mut owner = Vec::new();
        for dim in 0..3u8 {
            let count = topo.count(dim);
            let mut lists = Vec::with_capacity(count);
            for i in 0..count {
                let start = owner.len();
                owner.extend(std::iter::repeat(EntityRef { dim, index: i }).take(per[dim as usize]));
                lists.push((start..owner.len()).collect());
            }
            entity_nodes[dim as usize] = lists;
        }
        let num_nodes = owner.len();
        let boundary = owner.iter().map(|&o| o.dim < 2 && topo.is_boundary(o)).collect();

        let moments = element.edge_dofs_are_moments();
        let ref_edges = reference_edges(element.shape());
        let mut cell_nodes = Vec::with_capacity(topo.num_cells());
        let mut cell_signs = Vec::with_capacity(topo.num_cells());
        for c in 0..topo.num_cells() {
            let rv = topo.cell_ref_vertices(c);
            let re = topo.cell_ref_edges(c);
            let mut nodes = Vec::with_capacity(element.ndofs());
            let mut signs = Vec::with_capacity(element.ndofs());
            for a in element.attachments() {
                let (node, sign) = match a.dim {
                    0 => (entity_nodes[0][rv[a.entity]][a.pos], 1.0),
                    1 => {
                        let ge = re[a.entity];
                        let [s, e] = ref_edges[a.entity];
                        let reversed = rv[s] > rv[e];
                        let list = &entity_nodes[1][ge];
                        if moments {
                            let normal = if topo.edge_cells(ge)[0] == c { 1.0 } else { -1.0 };
                            let parity = if reversed && a.pos % 2 == 1 { -1.0 } else { 1.0 };
                            (list[a.pos], normal * parity)
                        } else if reversed {
                            (list[list.len() - 1 - a.pos], 1.0)
                        } else {
                            (list[a.pos], 1.0)
                        }
                    }
                    _ => (entity_nodes[2][c][a.pos], 1.0),
                };
                nodes.push(node);
                signs.push(sign);
            }
            cell_nodes.push(nodes);
            cell_signs.push(signs);
        }

        Ok(Self {
            mesh,
            element,
            block: if vector { 2 } else { 1 },
            num_nodes,
            cell_nodes,
            cell_signs,
            entity_nodes,
            owner,
            boundary,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }
    pub fn element(&self) -> &ReferenceElement {
        &self.element
    }
    /// Components per node: 2 for vector Lagrange spaces, else 1.
    pub fn block_size(&self) -> usize {
        self.block
    }
    /// Number of components of a function in the space.
    pub fn num_components(&self) -> usize {
        self.block * self.element.value_size()
    }
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }
    /// Global dimension.
    pub fn dim(&self) -> usize {
        self.num_nodes * self.block
    }
    /// Scalar nodes of a cell in local DoF order.
    pub fn cell_nodes(&self, c: usize) -> &[usize] {
        &self.cell_nodes[c]
    }
    /// Local-to-global basis signs of a cell.
    pub fn cell_signs(&self, c: usize) -> &[f64] {
        &self.cell_signs[c]
    }
    /// Global indices of a cell's DoFs; for vector spaces local index
    /// `2 * j + component`.
    pub fn cell_dofs(&self, c: usize) -> Vec<usize> {
        self.expand(&self.cell_nodes[c])
    }
    /// Global indices of the DoFs owned by an entity, in global orientation.
    pub fn entity_dofs(&self, ent: EntityRef) -> Vec<usize> {
        self.expand(&self.entity_nodes[ent.dim as usize][ent.index])
    }
    /// Entity owning a global DoF.
    pub fn owner(&self, dof: usize) -> EntityRef {
        self.owner[dof / self.block]
    }
    /// Whether a global DoF is attached to a boundary vertex or edge.
    pub fn is_boundary_dof(&self, dof: usize) -> bool {
        self.boundary[dof / self.block]
    }

    fn expand(&self, nodes: &[usize]) -> Vec<usize> {
        if self.block == 1 {
            return nodes.to_vec();
        }
        nodes.iter().flat_map(|&n| [2 * n, 2 * n + 1]).collect()
    }

    /// Physical basis tabulation on cell `c` at reference points, with the
    /// global signs applied.
    pub fn tabulate_cell(&self, c: usize, ref_points: &[[f64; 2]]) -> Result<(Vec<MapPoint>, Tabulation)> {
        let map = CellMap::new(&self.mesh, c)?;
        let maps = map.eval_many(ref_points);
        let reference = self.element.tabulate(ref_points);
        let mut tab = push_forward(&self.element, &maps, &reference)?;
        self.apply_signs(c, &mut tab);
        Ok((maps, tab))
    }

    /// Same as [`tabulate_cell`](Self::tabulate_cell) for a precomputed
    /// reference tabulation.
    pub fn push_cell(&self, c: usize, maps: &[MapPoint], reference: &Tabulation) -> Result<Tabulation> {
        let mut tab = push_forward(&self.element, maps, reference)?;
        self.apply_signs(c, &mut tab);
        Ok(tab)
    }

    fn apply_signs(&self, c: usize, tab: &mut Tabulation) {
        let signs = &self.cell_signs[c];
        if signs.iter().all(|&s| s == 1.0) {
            return;
        }
        let (nd, vs) = (tab.ndofs, tab.value_size);
        for p in 0..tab.npts {
            for (j, &s) in signs.iter().enumerate() {
                for c in 0..vs {
                    tab.values[(p * nd + j) * vs + c] *= s;
                    for d in 0..2 {
                        tab.grads[((p * nd + j) * vs + c) * 2 + d] *= s;
                    }
                }
            }
        }
    }

    /// Evaluate a coefficient vector on cell `c` from a physical tabulation.
    pub fn eval_tabulated(&self, coeffs: &[f64], c: usize, tab: &Tabulation) -> Vec<FieldSample> {
        let nodes = &self.cell_nodes[c];
        let mut out = vec![FieldSample::default(); tab.npts];
        for (p, s) in out.iter_mut().enumerate() {
            for (j, &n) in nodes.iter().enumerate() {
                if self.block == 2 {
                    for comp in 0..2 {
                        let u = coeffs[2 * n + comp];
                        s.value[comp] += u * tab.value(p, j, 0);
                        for d in 0..2 {
                            s.grad[comp][d] += u * tab.grad(p, j, 0, d);
                        }
                    }
                } else {
                    let u = coeffs[n];
                    for comp in 0..tab.value_size {
                        s.value[comp] += u * tab.value(p, j, comp);
                        for d in 0..2 {
                            s.grad[comp][d] += u * tab.grad(p, j, comp, d);
                        }
                    }
                }
            }
        }
        out
    }

    /// Evaluate a coefficient vector on cell `c` at reference points.
    pub fn evaluate(&self, coeffs: &[f64], c: usize, ref_points: &[[f64; 2]]) -> Result<Vec<FieldSample>> {
        let (_, tab) = self.tabulate_cell(c, ref_points)?;
        Ok(self.eval_tabulated(coeffs, c, &tab))
    }

    /// Apply the space's dual functionals cell by cell. `field(c, points)`
    /// returns physical values at the mapped functional points of cell `c`.
    /// Shared DoFs take the value from the last cell visited; the
    /// functionals agree across cells for any function with the space's
    /// interelement continuity.
    pub fn interpolate_with<F>(&self, mut field: F) -> Result<Vec<f64>>
    where
        F: FnMut(usize, &[MapPoint]) -> Vec<[f64; 2]>,
    {
        let mut out = vec![0.0; self.dim()];
        let kind = self.element.map_kind();
        let vs = self.element.value_size();
        for c in 0..self.mesh.topology.num_cells() {
            let map = CellMap::new(&self.mesh, c)?;
            for (j, f) in self.element.functionals().iter().enumerate() {
                let maps = map.eval_many(&f.points);
                let vals = field(c, &maps);
                let n = self.cell_nodes[c][j];
                let sign = self.cell_signs[c][j];
                match kind {
                    MapKind::Identity => {
                        for comp in 0..self.block {
                            let v: Vec<f64> = vals.iter().map(|v| v[comp]).collect();
                            out[n * self.block + comp] = f.apply(&v);
                        }
                    }
                    MapKind::ContravariantPiola => {
                        let mut pulled = Vec::with_capacity(vals.len() * vs);
                        for (m, v) in maps.iter().zip(&vals) {
                            pulled.extend_from_slice(&crate::elements::pull_back(kind, m, v));
                        }
                        out[n] = sign * f.apply(&pulled);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Interpolate an analytic field (scalar spaces use component 0).
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Vec<f64>> {
        self.interpolate_with(|_, maps| maps.iter().map(|m| f(m.x)).collect())
    }

    /// Interpolate a scalar function.
    pub fn interpolate_scalar(&self, f: impl Fn([f64; 2]) -> f64) -> Result<Vec<f64>> {
        self.interpolate(|x| [f(x), 0.0])
    }
}

/// Velocity and pressure spaces, velocity DoFs first.
#[derive(Debug, Clone)]
pub struct MixedSpace {
    pub case: Discretization,
    pub order: usize,
    pub velocity: FunctionSpace,
    pub pressure: FunctionSpace,
}

impl MixedSpace {
    /// Offset of the pressure block, equal to the velocity dimension.
    pub fn pressure_offset(&self) -> usize {
        self.velocity.dim()
    }
    pub fn dim(&self) -> usize {
        self.velocity.dim() + self.pressure.dim()
    }
    pub fn mesh(&self) -> &Arc<Mesh> {
        self.velocity.mesh()
    }
}

/// Build the velocity/pressure pair of a discretization at velocity order `k`.
pub fn build_mixed(case: Discretization, mesh: Arc<Mesh>, k: usize) -> Result<MixedSpace> {
    if !case.orders().contains(&k) {
        return Err(Error::InvalidConfig(format!("order {k} not supported for {case}")));
    }
    if mesh.shape() != case.shape() {
        return Err(Error::InvalidConfig(format!("{case} needs a {} mesh", case.shape().name())));
    }
    let (velocity, pressure) = match case {
        Discretization::ThTri => (
            FunctionSpace::new(mesh.clone(), make_element(ElementFamily::LagrangeTri, k)?, true)?,
            FunctionSpace::new(mesh, make_element(ElementFamily::LagrangeTri, k - 1)?, false)?,
        ),
        Discretization::ThQuad => (
            FunctionSpace::new(mesh.clone(), make_element(ElementFamily::LagrangeQuad, k)?, true)?,
            FunctionSpace::new(mesh, make_element(ElementFamily::LagrangeQuad, k - 1)?, false)?,
        ),
        Discretization::Bdm | Discretization::Rt => {
            let fam = if case == Discretization::Bdm { ElementFamily::BdmTri } else { ElementFamily::RtTri };
            (
                FunctionSpace::new(mesh.clone(), make_element(fam, k)?, false)?,
                FunctionSpace::new(mesh, make_element(ElementFamily::DiscLagrangeTri, k - 1)?, false)?,
            )
        }
    };
    Ok(MixedSpace { case, order: k, velocity, pressure })
}

/// Which boundary DoFs are constrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcMode {
    /// Every DoF on a boundary vertex or edge, both components.
    Dirichlet,
    /// Normal-moment DoFs on boundary edges.
    NormalFlux,
}

/// Strongly imposed velocity DoFs and their values.
#[derive(Debug, Clone)]
pub struct StrongBc {
    pub mode: BcMode,
    /// Sorted global velocity DoF indices.
    pub dofs: Vec<usize>,
    pub values: Vec<f64>,
}

impl StrongBc {
    /// Constrained-DoF mask over a vector of length `n`.
    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &d in &self.dofs {
            m[d] = true;
        }
        m
    }
    pub fn len(&self) -> usize {
        self.dofs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }
}

/// Collect boundary DoFs of a velocity space and interpolate `data` onto them.
pub fn strong_bc(space: &FunctionSpace, data: impl Fn([f64; 2]) -> [f64; 2], mode: BcMode) -> Result<StrongBc> {
    let dofs: Vec<usize> = (0..space.dim())
        .filter(|&d| {
            space.is_boundary_dof(d)
                && match mode {
                    BcMode::Dirichlet => true,
                    BcMode::NormalFlux => space.owner(d).dim == 1,
                }
        })
        .collect();
    let full = space.interpolate(data)?;
    let values = dofs.iter().map(|&d| full[d]).collect();
    Ok(StrongBc { mode, dofs, values })
}

/// The boundary condition each discretization uses.
pub fn default_bc_mode(case: Discretization) -> BcMode {
    if case.is_hdiv() {
        BcMode::NormalFlux
    } else {
        BcMode::Dirichlet
    }
}
