//! Reference elements, quadrature and reference-to-physical mappings.
//!
//! Every element is described by a polynomial span (expanded in products of
//! shifted Legendre polynomials) and a set of dual functionals, each attached
//! to a topological entity of the reference cell. The nodal basis is
//! obtained by inverting the generalized Vandermonde matrix
//! `V[i][m] = functional_i(prime_m)`.
//!
//! Functionals are stored as weighted point sums
//! `l(v) = sum_q sum_c w[q][c] v_c(x_q)`, which covers point evaluation
//! (Lagrange families) as well as edge-normal and interior moments
//! (H(div) families).

pub mod cellmap;
pub mod quadrature;

pub use cellmap::{pull_back, push_forward, CellMap, MapKind, MapPoint};
pub use quadrature::{edge_quadrature, make_quadrature, QuadratureRule};

use crate::error::{Error, Result};
use crate::meshtopo::CellShape;
use crate::sparsela::{invert, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementFamily {
    /// Continuous `P_k` on triangles.
    LagrangeTri,
    /// Continuous `Q_k` on quadrilaterals.
    LagrangeQuad,
    /// Discontinuous `dP_k` on triangles (`k = 0` allowed).
    DiscLagrangeTri,
    /// Brezzi-Douglas-Marini: full vector `P_k`.
    BdmTri,
    /// Raviart-Thomas `P_{k-1}^2 + x P_{k-1}`.
    RtTri,
}

impl ElementFamily {
    pub fn name(self) -> &'static str {
        match self {
            ElementFamily::LagrangeTri => "P",
            ElementFamily::LagrangeQuad => "Q",
            ElementFamily::DiscLagrangeTri => "dP",
            ElementFamily::BdmTri => "BDM",
            ElementFamily::RtTri => "RT",
        }
    }

    pub fn shape(self) -> CellShape {
        match self {
            ElementFamily::LagrangeQuad => CellShape::Quadrilateral,
            _ => CellShape::Triangle,
        }
    }

    pub fn map_kind(self) -> MapKind {
        match self {
            ElementFamily::BdmTri | ElementFamily::RtTri => MapKind::ContravariantPiola,
            _ => MapKind::Identity,
        }
    }

    pub fn value_size(self) -> usize {
        match self.map_kind() {
            MapKind::ContravariantPiola => 2,
            MapKind::Identity => 1,
        }
    }

    /// Whether DoFs on shared entities are shared between cells.
    pub fn is_continuous(self) -> bool {
        !matches!(self, ElementFamily::DiscLagrangeTri)
    }
}

/// Where a DoF lives: entity dimension, local entity number, position
/// within that entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofAttachment {
    pub dim: u8,
    pub entity: usize,
    pub pos: usize,
}

/// A dual functional as a weighted point sum over reference points.
#[derive(Debug, Clone)]
pub struct DualFunctional {
    pub points: Vec<[f64; 2]>,
    /// `points.len() * value_size` weights.
    pub weights: Vec<f64>,
}

impl DualFunctional {
    /// Apply to a function given by its values at `points`
    /// (`points.len() * value_size` numbers).
    pub fn apply(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Values and gradients of all basis functions at a set of points.
///
/// Layout: `values[(p * ndofs + j) * vs + c]`,
/// `grads[((p * ndofs + j) * vs + c) * 2 + d]`.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub npts: usize,
    pub ndofs: usize,
    pub value_size: usize,
    pub values: Vec<f64>,
    pub grads: Vec<f64>,
}

impl Tabulation {
    pub fn zeros(npts: usize, ndofs: usize, value_size: usize) -> Self {
        Self {
            npts,
            ndofs,
            value_size,
            values: vec![0.0; npts * ndofs * value_size],
            grads: vec![0.0; npts * ndofs * value_size * 2],
        }
    }
    #[inline]
    pub fn value(&self, p: usize, j: usize, c: usize) -> f64 {
        self.values[(p * self.ndofs + j) * self.value_size + c]
    }
    #[inline]
    pub fn grad(&self, p: usize, j: usize, c: usize, d: usize) -> f64 {
        self.grads[((p * self.ndofs + j) * self.value_size + c) * 2 + d]
    }
    /// Divergence of a vector-valued basis function.
    #[inline]
    pub fn div(&self, p: usize, j: usize) -> f64 {
        self.grad(p, j, 0, 0) + self.grad(p, j, 1, 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PrimeBasis {
    /// Scalar `L_a(x) L_b(y)`, `a + b <= k`.
    ScalarTotal(usize),
    /// Scalar `L_a(x) L_b(y)`, `a, b <= k`.
    ScalarTensor(usize),
    /// `(p, 0)` then `(0, p)` for scalar `p` of total degree `<= k`.
    VectorTotal(usize),
    /// `P_{k-1}^2` followed by `x h` for homogeneous monomials `h` of degree `k-1`.
    RaviartThomas(usize),
}

/// Shifted Legendre polynomials `L_a(x) = P_a(2x - 1)`, `a = 0..=k`, and
/// their derivatives.
fn shifted_legendre(k: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    let t = 2.0 * x - 1.0;
    let mut p = vec![0.0; k + 1];
    let mut d = vec![0.0; k + 1];
    p[0] = 1.0;
    if k >= 1 {
        p[1] = t;
        d[1] = 1.0;
    }
    for a in 2..=k {
        let af = a as f64;
        p[a] = ((2.0 * af - 1.0) * t * p[a - 1] - (af - 1.0) * p[a - 2]) / af;
        d[a] = d[a - 2] + (2.0 * af - 1.0) * p[a - 1];
    }
    for v in d.iter_mut() {
        *v *= 2.0;
    }
    (p, d)
}

fn total_degree_pairs(k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for deg in 0..=k {
        for b in 0..=deg {
            out.push((deg - b, b));
        }
    }
    out
}

/// Evaluate scalar Legendre products `L_a(x) L_b(y)` for the given index
/// pairs: returns (values, d/dx, d/dy).
fn legendre_products(pairs: &[(usize, usize)], k: usize, x: [f64; 2]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (lx, dlx) = shifted_legendre(k, x[0]);
    let (ly, dly) = shifted_legendre(k, x[1]);
    let mut v = Vec::with_capacity(pairs.len());
    let mut gx = Vec::with_capacity(pairs.len());
    let mut gy = Vec::with_capacity(pairs.len());
    for &(a, b) in pairs {
        v.push(lx[a] * ly[b]);
        gx.push(dlx[a] * ly[b]);
        gy.push(lx[a] * dly[b]);
    }
    (v, gx, gy)
}

impl PrimeBasis {
    fn value_size(self) -> usize {
        match self {
            PrimeBasis::ScalarTotal(_) | PrimeBasis::ScalarTensor(_) => 1,
            _ => 2,
        }
    }

    fn dim(self) -> usize {
        match self {
            PrimeBasis::ScalarTotal(k) => (k + 1) * (k + 2) / 2,
            PrimeBasis::ScalarTensor(k) => (k + 1) * (k + 1),
            PrimeBasis::VectorTotal(k) => (k + 1) * (k + 2),
            PrimeBasis::RaviartThomas(k) => k * (k + 2),
        }
    }

    /// Values `[m * vs + c]` and gradients `[(m * vs + c) * 2 + d]`.
    fn eval(self, x: [f64; 2]) -> (Vec<f64>, Vec<f64>) {
        match self {
            PrimeBasis::ScalarTotal(k) => {
                let (v, gx, gy) = legendre_products(&total_degree_pairs(k), k, x);
                let g = gx.iter().zip(&gy).flat_map(|(a, b)| [*a, *b]).collect();
                (v, g)
            }
            PrimeBasis::ScalarTensor(k) => {
                let pairs: Vec<(usize, usize)> =
                    (0..=k).flat_map(|b| (0..=k).map(move |a| (a, b))).collect();
                let (v, gx, gy) = legendre_products(&pairs, k, x);
                let g = gx.iter().zip(&gy).flat_map(|(a, b)| [*a, *b]).collect();
                (v, g)
            }
            PrimeBasis::VectorTotal(k) => {
                let (v, gx, gy) = legendre_products(&total_degree_pairs(k), k, x);
                vector_from_scalar(&v, &gx, &gy)
            }
            PrimeBasis::RaviartThomas(k) => {
                let (v, gx, gy) = legendre_products(&total_degree_pairs(k - 1), k - 1, x);
                let (mut vals, mut grads) = vector_from_scalar(&v, &gx, &gy);
                // x * h with h = x^a y^(k-1-a)
                let d = (k - 1) as i32;
                for a in 0..=d {
                    let b = d - a;
                    let h = x[0].powi(a) * x[1].powi(b);
                    let hx = if a > 0 { a as f64 * x[0].powi(a - 1) * x[1].powi(b) } else { 0.0 };
                    let hy = if b > 0 { b as f64 * x[0].powi(a) * x[1].powi(b - 1) } else { 0.0 };
                    vals.push(x[0] * h);
                    vals.push(x[1] * h);
                    grads.extend_from_slice(&[h + x[0] * hx, x[0] * hy, x[1] * hx, h + x[1] * hy]);
                }
                (vals, grads)
            }
        }
    }
}

fn vector_from_scalar(v: &[f64], gx: &[f64], gy: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = v.len();
    let mut vals = vec![0.0; 2 * n * 2];
    let mut grads = vec![0.0; 2 * n * 4];
    for m in 0..n {
        // (p, 0)
        vals[m * 2] = v[m];
        grads[m * 4] = gx[m];
        grads[m * 4 + 1] = gy[m];
        // (0, p)
        let mm = n + m;
        vals[mm * 2 + 1] = v[m];
        grads[mm * 4 + 2] = gx[m];
        grads[mm * 4 + 3] = gy[m];
    }
    (vals, grads)
}

/// Reference vertices of a cell shape.
pub fn reference_vertices(shape: CellShape) -> &'static [[f64; 2]] {
    match shape {
        CellShape::Triangle => &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        CellShape::Quadrilateral => &[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
    }
}

/// Local edges as (start, end) reference vertex pairs; the local edge
/// direction runs from start to end.
pub fn reference_edges(shape: CellShape) -> &'static [[usize; 2]] {
    match shape {
        CellShape::Triangle => &[[1, 2], [0, 2], [0, 1]],
        CellShape::Quadrilateral => &[[0, 1], [1, 2], [3, 2], [0, 3]],
    }
}

/// Outward unit normal and length of a reference edge.
pub fn reference_edge_normal(shape: CellShape, edge: usize) -> ([f64; 2], f64) {
    let v = reference_vertices(shape);
    let [a, b] = reference_edges(shape)[edge];
    let d = [v[b][0] - v[a][0], v[b][1] - v[a][1]];
    let len = d[0].hypot(d[1]);
    let mut n = [d[1] / len, -d[0] / len];
    let c = match shape {
        CellShape::Triangle => [1.0 / 3.0, 1.0 / 3.0],
        CellShape::Quadrilateral => [0.5, 0.5],
    };
    let mid = [0.5 * (v[a][0] + v[b][0]), 0.5 * (v[a][1] + v[b][1])];
    if n[0] * (mid[0] - c[0]) + n[1] * (mid[1] - c[1]) < 0.0 {
        n = [-n[0], -n[1]];
    }
    (n, len)
}

/// A finite element on a reference cell.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    pub family: ElementFamily,
    pub order: usize,
    prime: PrimeBasis,
    attach: Vec<DofAttachment>,
    /// `entity_dofs[dim][local entity]` lists local DoFs by position.
    entity_dofs: [Vec<Vec<usize>>; 3],
    functionals: Vec<DualFunctional>,
    /// `prime_dim x ndofs`; basis j = sum_m prime_m * coeffs[(m, j)].
    coeffs: DenseMatrix,
}

impl ReferenceElement {
    pub fn shape(&self) -> CellShape {
        self.family.shape()
    }
    pub fn value_size(&self) -> usize {
        self.family.value_size()
    }
    pub fn map_kind(&self) -> MapKind {
        self.family.map_kind()
    }
    pub fn ndofs(&self) -> usize {
        self.attach.len()
    }
    pub fn attachment(&self, j: usize) -> DofAttachment {
        self.attach[j]
    }
    pub fn attachments(&self) -> &[DofAttachment] {
        &self.attach
    }
    /// Local DoFs on a local entity, ordered by position.
    pub fn entity_dofs(&self, dim: u8, entity: usize) -> &[usize] {
        &self.entity_dofs[dim as usize][entity]
    }
    /// Number of DoFs attached to each entity of a dimension.
    pub fn dofs_per_entity(&self, dim: u8) -> usize {
        self.entity_dofs[dim as usize].first().map_or(0, |v| v.len())
    }
    pub fn functionals(&self) -> &[DualFunctional] {
        &self.functionals
    }
    /// Whether edge DoFs are normal moments (sign flips under reorientation)
    /// rather than point values (reversed under reorientation).
    pub fn edge_dofs_are_moments(&self) -> bool {
        self.map_kind() == MapKind::ContravariantPiola
    }

    /// Tabulate basis values and reference gradients at reference points.
    pub fn tabulate(&self, points: &[[f64; 2]]) -> Tabulation {
        let vs = self.value_size();
        let nd = self.ndofs();
        let np = self.prime.dim();
        let mut tab = Tabulation::zeros(points.len(), nd, vs);
        for (p, &x) in points.iter().enumerate() {
            let (pv, pg) = self.prime.eval(x);
            for m in 0..np {
                for j in 0..nd {
                    let cm = self.coeffs[(m, j)];
                    if cm == 0.0 {
                        continue;
                    }
                    for c in 0..vs {
                        tab.values[(p * nd + j) * vs + c] += cm * pv[m * vs + c];
                        for d in 0..2 {
                            tab.grads[((p * nd + j) * vs + c) * 2 + d] += cm * pg[(m * vs + c) * 2 + d];
                        }
                    }
                }
            }
        }
        tab
    }

    /// Largest expansion coefficient; roundoff in tabulated values scales with it.
    pub fn coefficient_scale(&self) -> f64 {
        self.coeffs.max_abs()
    }

    /// `functional_i(basis_j)` for all i, j.
    pub fn dual_matrix(&self) -> DenseMatrix {
        let vs = self.value_size();
        let nd = self.ndofs();
        let mut m = DenseMatrix::zeros(nd, nd);
        for (i, f) in self.functionals.iter().enumerate() {
            let tab = self.tabulate(&f.points);
            for j in 0..nd {
                let mut s = 0.0;
                for q in 0..f.points.len() {
                    for c in 0..vs {
                        s += f.weights[q * vs + c] * tab.value(q, j, c);
                    }
                }
                m[(i, j)] = s;
            }
        }
        m
    }
}

/// Construct a reference element.
pub fn make_element(family: ElementFamily, k: usize) -> Result<ReferenceElement> {
    let unsupported = || Error::UnsupportedElement { family: family.name(), order: k };
    let (prime, layout) = match family {
        ElementFamily::LagrangeTri => {
            if !(1..=8).contains(&k) {
                return Err(unsupported());
            }
            (PrimeBasis::ScalarTotal(k), lagrange_layout(CellShape::Triangle, k))
        }
        ElementFamily::LagrangeQuad => {
            if !(1..=8).contains(&k) {
                return Err(unsupported());
            }
            (PrimeBasis::ScalarTensor(k), lagrange_layout(CellShape::Quadrilateral, k))
        }
        ElementFamily::DiscLagrangeTri => {
            if k > 8 {
                return Err(unsupported());
            }
            (PrimeBasis::ScalarTotal(k), discontinuous_layout(k))
        }
        ElementFamily::BdmTri => {
            if !(1..=4).contains(&k) {
                return Err(unsupported());
            }
            (PrimeBasis::VectorTotal(k), hdiv_layout(family, k))
        }
        ElementFamily::RtTri => {
            if !(1..=4).contains(&k) {
                return Err(unsupported());
            }
            (PrimeBasis::RaviartThomas(k), hdiv_layout(family, k))
        }
    };
    let (attach, functionals) = layout;
    assert_eq!(attach.len(), prime.dim(), "functional count must match the span dimension");
    let vs = prime.value_size();

    let nd = attach.len();
    let mut vander = DenseMatrix::zeros(nd, nd);
    for (i, f) in functionals.iter().enumerate() {
        for (q, &x) in f.points.iter().enumerate() {
            let (pv, _) = prime.eval(x);
            for m in 0..nd {
                for c in 0..vs {
                    vander[(i, m)] += f.weights[q * vs + c] * pv[m * vs + c];
                }
            }
        }
    }
    let mut coeffs = invert(&vander)?;
    // one refinement sweep; equispaced high-order nodes lose a few digits
    let resid = vander.matmul(&coeffs);
    let mut r = DenseMatrix::identity(nd);
    for i in 0..nd {
        for j in 0..nd {
            r[(i, j)] -= resid[(i, j)];
        }
    }
    let corr = coeffs.matmul(&r);
    for i in 0..nd {
        for j in 0..nd {
            coeffs[(i, j)] += corr[(i, j)];
        }
    }

    let shape = family.shape();
    let counts = [shape.num_vertices(), shape.num_vertices(), 1];
    let mut entity_dofs: [Vec<Vec<usize>>; 3] =
        [vec![Vec::new(); counts[0]], vec![Vec::new(); counts[1]], vec![Vec::new(); counts[2]]];
    for (j, a) in attach.iter().enumerate() {
        let list = &mut entity_dofs[a.dim as usize][a.entity];
        if list.len() <= a.pos {
            list.resize(a.pos + 1, usize::MAX);
        }
        list[a.pos] = j;
    }

    Ok(ReferenceElement { family, order: k, prime, attach, entity_dofs, functionals, coeffs })
}

fn point_eval(x: [f64; 2]) -> DualFunctional {
    DualFunctional { points: vec![x], weights: vec![1.0] }
}

fn lagrange_layout(shape: CellShape, k: usize) -> (Vec<DofAttachment>, Vec<DualFunctional>) {
    let mut attach = Vec::new();
    let mut funcs = Vec::new();
    let verts = reference_vertices(shape);
    for (i, &v) in verts.iter().enumerate() {
        attach.push(DofAttachment { dim: 0, entity: i, pos: 0 });
        funcs.push(point_eval(v));
    }
    for (le, &[a, b]) in reference_edges(shape).iter().enumerate() {
        for p in 1..k {
            let t = p as f64 / k as f64;
            let x = [verts[a][0] + t * (verts[b][0] - verts[a][0]), verts[a][1] + t * (verts[b][1] - verts[a][1])];
            attach.push(DofAttachment { dim: 1, entity: le, pos: p - 1 });
            funcs.push(point_eval(x));
        }
    }
    let kf = k as f64;
    let mut pos = 0;
    for j in 1..k {
        for i in 1..k {
            let inside = match shape {
                CellShape::Triangle => i + j < k,
                CellShape::Quadrilateral => true,
            };
            if inside {
                attach.push(DofAttachment { dim: 2, entity: 0, pos });
                funcs.push(point_eval([i as f64 / kf, j as f64 / kf]));
                pos += 1;
            }
        }
    }
    (attach, funcs)
}

fn discontinuous_layout(k: usize) -> (Vec<DofAttachment>, Vec<DualFunctional>) {
    if k == 0 {
        return (vec![DofAttachment { dim: 2, entity: 0, pos: 0 }], vec![point_eval([1.0 / 3.0, 1.0 / 3.0])]);
    }
    let mut attach = Vec::new();
    let mut funcs = Vec::new();
    let kf = k as f64;
    for j in 0..=k {
        for i in 0..=k - j {
            attach.push(DofAttachment { dim: 2, entity: 0, pos: attach.len() });
            funcs.push(point_eval([i as f64 / kf, j as f64 / kf]));
        }
    }
    (attach, funcs)
}

fn hdiv_layout(family: ElementFamily, k: usize) -> (Vec<DofAttachment>, Vec<DualFunctional>) {
    let shape = CellShape::Triangle;
    let mut attach = Vec::new();
    let mut funcs = Vec::new();
    let verts = reference_vertices(shape);
    let edge_moments = match family {
        ElementFamily::BdmTri => k + 1,
        _ => k,
    };
    let (s, w) = edge_quadrature(2 * k + 2);
    for (le, &[a, b]) in reference_edges(shape).iter().enumerate() {
        let (n, len) = reference_edge_normal(shape, le);
        for j in 0..edge_moments {
            let mut points = Vec::with_capacity(s.len());
            let mut weights = Vec::with_capacity(2 * s.len());
            for (sq, wq) in s.iter().zip(&w) {
                let (lj, _) = shifted_legendre(j, *sq);
                points.push([
                    verts[a][0] + sq * (verts[b][0] - verts[a][0]),
                    verts[a][1] + sq * (verts[b][1] - verts[a][1]),
                ]);
                let c = wq * len * lj[j];
                weights.push(c * n[0]);
                weights.push(c * n[1]);
            }
            attach.push(DofAttachment { dim: 1, entity: le, pos: j });
            funcs.push(DualFunctional { points, weights });
        }
    }

    // Interior moments against a test space W.
    let test_fields: Box<dyn Fn([f64; 2]) -> Vec<[f64; 2]>> = match family {
        ElementFamily::BdmTri if k >= 2 => Box::new(move |x: [f64; 2]| {
            let mut out = Vec::new();
            // gradients of non-constant P_{k-1}
            let pairs = total_degree_pairs(k - 1);
            let (_, gx, gy) = legendre_products(&pairs, k - 1, x);
            for m in 1..pairs.len() {
                out.push([gx[m], gy[m]]);
            }
            // curls of bubble * P_{k-2}
            let pairs = total_degree_pairs(k - 2);
            let (v, rx, ry) = legendre_products(&pairs, k - 2, x);
            let bub = x[0] * x[1] * (1.0 - x[0] - x[1]);
            let bx = x[1] * (1.0 - 2.0 * x[0] - x[1]);
            let by = x[0] * (1.0 - x[0] - 2.0 * x[1]);
            for m in 0..pairs.len() {
                let dx = bx * v[m] + bub * rx[m];
                let dy = by * v[m] + bub * ry[m];
                out.push([dy, -dx]);
            }
            out
        }),
        ElementFamily::RtTri if k >= 2 => Box::new(move |x: [f64; 2]| {
            let pairs = total_degree_pairs(k - 2);
            let (v, _, _) = legendre_products(&pairs, k - 2, x);
            let mut out: Vec<[f64; 2]> = v.iter().map(|&p| [p, 0.0]).collect();
            out.extend(v.iter().map(|&p| [0.0, p]));
            out
        }),
        _ => Box::new(|_| Vec::new()),
    };
    let rule = make_quadrature(shape, 2 * k + 1).expect("degree within range");
    let per_point: Vec<Vec<[f64; 2]>> = rule.points.iter().map(|&x| test_fields(x)).collect();
    let ninterior = per_point.first().map_or(0, |v| v.len());
    for m in 0..ninterior {
        let mut weights = Vec::with_capacity(2 * rule.len());
        for (q, wq) in rule.weights.iter().enumerate() {
            weights.push(wq * per_point[q][m][0]);
            weights.push(wq * per_point[q][m][1]);
        }
        attach.push(DofAttachment { dim: 2, entity: 0, pos: m });
        funcs.push(DualFunctional { points: rule.points.clone(), weights });
    }
    (attach, funcs)
}
