//! Saddle-point assembly for the four discretizations.
//!
//! The monolithic matrix is ordered velocity first, then pressure:
//!
//! ```text
//! [ A  B^T ]
//! [ B  0   ]
//! ```
//!
//! with `a(u, v) = 2 nu (eps(u), eps(v))` (plus interior-penalty facet terms
//! for H(div) velocities) and `b(v, q) = -(div v, q)`. Strong boundary
//! conditions are applied by lifting into the right-hand side followed by
//! symmetric elimination, so constrained rows and columns become identity.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::elements::{edge_quadrature, make_quadrature, CellMap, Tabulation};
use crate::error::{Error, Result};
use crate::spaces::{default_bc_mode, strong_bc, BcMode, Discretization, FieldSample, FunctionSpace, MixedSpace, StrongBc};
use crate::sparsela::{CsrMatrix, TripletBuilder};

/// Physical and discretization parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConfig {
    pub case: Discretization,
    pub k: usize,
    /// Viscosity.
    pub nu: f64,
    /// Interior penalty parameter (H(div) cases only).
    pub alpha: f64,
}

impl ProblemConfig {
    /// Unit viscosity and penalty `10 k^2`.
    pub fn new(case: Discretization, k: usize) -> Self {
        Self { case, k, nu: 1.0, alpha: 10.0 * (k * k) as f64 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidConfig(format!("viscosity must be positive, got {}", self.nu)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("penalty must be positive, got {}", self.alpha)));
        }
        if !self.case.orders().contains(&self.k) {
            return Err(Error::InvalidConfig(format!("order {} not supported for {}", self.k, self.case)));
        }
        Ok(())
    }
}

/// The smooth divergence-free test solution on the unit square:
/// `u = (sin(pi x) cos(pi y), -cos(pi x) sin(pi y))`, `p = 0`.
#[derive(Debug, Clone, Copy)]
pub struct Manufactured {
    pub nu: f64,
}

impl Manufactured {
    pub fn u(x: [f64; 2]) -> [f64; 2] {
        let (sx, cx) = (PI * x[0]).sin_cos();
        let (sy, cy) = (PI * x[1]).sin_cos();
        [sx * cy, -cx * sy]
    }

    /// `grad[c][d] = d u_c / d x_d`
    pub fn grad_u(x: [f64; 2]) -> [[f64; 2]; 2] {
        let (sx, cx) = (PI * x[0]).sin_cos();
        let (sy, cy) = (PI * x[1]).sin_cos();
        [[PI * cx * cy, -PI * sx * sy], [PI * sx * sy, -PI * cx * cy]]
    }

    pub fn p(_x: [f64; 2]) -> f64 {
        0.0
    }

    /// Body force `-div(2 nu eps(u)) + grad p = 2 pi^2 nu u`.
    pub fn f(&self, x: [f64; 2]) -> [f64; 2] {
        let u = Self::u(x);
        let s = 2.0 * PI * PI * self.nu;
        [s * u[0], s * u[1]]
    }
}

/// Assembled saddle-point system with boundary conditions applied.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub space: Arc<MixedSpace>,
    pub bc: StrongBc,
    pub config: ProblemConfig,
}

impl BlockSystem {
    pub fn dim(&self) -> usize {
        self.rhs.len()
    }
    /// Unit-norm constant-pressure vector spanning the kernel of the matrix.
    pub fn pressure_nullspace(&self) -> Vec<f64> {
        pressure_nullspace(&self.space)
    }
}

/// Normalized vector with zero velocity and constant pressure coefficients.
pub fn pressure_nullspace(space: &MixedSpace) -> Vec<f64> {
    let mut z = vec![0.0; space.dim()];
    let m = space.pressure.dim();
    let s = 1.0 / (m as f64).sqrt();
    for v in &mut z[space.pressure_offset()..] {
        *v = s;
    }
    z
}

fn check_case(space: &MixedSpace, config: &ProblemConfig) -> Result<()> {
    config.validate()?;
    if space.case != config.case || space.order != config.k {
        return Err(Error::InvalidConfig(format!(
            "space is {} k={} but config is {} k={}",
            space.case, space.order, config.case, config.k
        )));
    }
    Ok(())
}

fn cell_degree(space: &MixedSpace) -> usize {
    2 * space.order
}

/// Symmetric gradient of basis function `j` of a vector-valued tabulation.
#[inline]
fn epsilon(tab: &Tabulation, p: usize, j: usize) -> [[f64; 2]; 2] {
    let g01 = 0.5 * (tab.grad(p, j, 0, 1) + tab.grad(p, j, 1, 0));
    [[tab.grad(p, j, 0, 0), g01], [g01, tab.grad(p, j, 1, 1)]]
}

#[inline]
fn ddot(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

/// Cell integrals of `a` (without facet terms) and `b`, both off-diagonal
/// blocks mirrored from one computation. No boundary conditions.
fn assemble_cells(space: &MixedSpace, nu: f64, builder: &mut TripletBuilder) -> Result<()> {
    let mesh = space.mesh();
    let vel = &space.velocity;
    let pre = &space.pressure;
    let off = space.pressure_offset();
    let rule = make_quadrature(mesh.shape(), cell_degree(space))?;
    let vref = vel.element().tabulate(&rule.points);
    let pref = pre.element().tabulate(&rule.points);
    let two_nu = 2.0 * nu;

    for c in 0..mesh.topology.num_cells() {
        let maps = CellMap::new(mesh, c)?.eval_many(&rule.points);
        let vt = vel.push_cell(c, &maps, &vref)?;
        let pt = pre.push_cell(c, &maps, &pref)?;
        let vdofs = vel.cell_dofs(c);
        let pdofs = pre.cell_dofs(c);
        let nv = vdofs.len();
        let np = pdofs.len();
        let mut a = vec![0.0; nv * nv];
        let mut b = vec![0.0; np * nv];

        for (q, m) in maps.iter().enumerate() {
            let w = rule.weights[q] * m.det;
            if vel.block_size() == 2 {
                // scalar basis psi_j times unit vector e_a; local index 2j+a
                let ns = vt.ndofs;
                for i in 0..ns {
                    let gi = [vt.grad(q, i, 0, 0), vt.grad(q, i, 0, 1)];
                    for j in 0..ns {
                        let gj = [vt.grad(q, j, 0, 0), vt.grad(q, j, 0, 1)];
                        let dot = gi[0] * gj[0] + gi[1] * gj[1];
                        for ca in 0..2 {
                            for cb in 0..2 {
                                let delta = if ca == cb { dot } else { 0.0 };
                                a[(2 * i + ca) * nv + 2 * j + cb] += w * two_nu * 0.5 * (delta + gi[cb] * gj[ca]);
                            }
                        }
                    }
                }
                for r in 0..np {
                    let qv = pt.value(q, r, 0);
                    for j in 0..ns {
                        for ca in 0..2 {
                            b[r * nv + 2 * j + ca] -= w * qv * vt.grad(q, j, 0, ca);
                        }
                    }
                }
            } else {
                let eps: Vec<_> = (0..nv).map(|j| epsilon(&vt, q, j)).collect();
                for i in 0..nv {
                    for j in 0..nv {
                        a[i * nv + j] += w * two_nu * ddot(&eps[i], &eps[j]);
                    }
                }
                for r in 0..np {
                    let qv = pt.value(q, r, 0);
                    for j in 0..nv {
                        b[r * nv + j] -= w * qv * vt.div(q, j);
                    }
                }
            }
        }

        for i in 0..nv {
            for j in 0..nv {
                builder.push(vdofs[i], vdofs[j], a[i * nv + j]);
            }
        }
        for r in 0..np {
            for j in 0..nv {
                let v = b[r * nv + j];
                builder.push(off + pdofs[r], vdofs[j], v);
                builder.push(vdofs[j], off + pdofs[r], v);
            }
        }
    }
    Ok(())
}

/// Traces of the velocity basis from both cells adjacent to an interior edge.
#[derive(Debug, Clone)]
pub struct FacetTables {
    pub edge: usize,
    /// Adjacent cells, lower index first; `normal` points out of `cells[0]`.
    pub cells: [usize; 2],
    pub normal: [f64; 2],
    pub tangent: [f64; 2],
    /// Physical points, ordered from the lower-indexed edge vertex.
    pub points: Vec<[f64; 2]>,
    /// Physical weights (edge length included).
    pub weights: Vec<f64>,
    pub tabs: [Tabulation; 2],
}

impl FacetTables {
    /// Jump `v1 ⊙ n1 + v2 ⊙ n2` of a coefficient vector at point `p`.
    pub fn jump(&self, space: &FunctionSpace, coeffs: &[f64], p: usize) -> [[f64; 2]; 2] {
        let [s1, s2] = self.samples(space, coeffs, p);
        let d = [s1.value[0] - s2.value[0], s1.value[1] - s2.value[1]];
        sym_outer(d, self.normal)
    }

    /// Average of the symmetric gradient at point `p`.
    pub fn average_eps(&self, space: &FunctionSpace, coeffs: &[f64], p: usize) -> [[f64; 2]; 2] {
        let [s1, s2] = self.samples(space, coeffs, p);
        let e = |s: &FieldSample| {
            let o = 0.5 * (s.grad[0][1] + s.grad[1][0]);
            [[s.grad[0][0], o], [o, s.grad[1][1]]]
        };
        let (e1, e2) = (e(&s1), e(&s2));
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = 0.5 * (e1[i][j] + e2[i][j]);
            }
        }
        out
    }

    /// Values of a coefficient vector from both sides at point `p`.
    pub fn samples(&self, space: &FunctionSpace, coeffs: &[f64], p: usize) -> [FieldSample; 2] {
        let one = |side: usize| {
            let t = &self.tabs[side];
            let pick = Tabulation {
                npts: 1,
                ndofs: t.ndofs,
                value_size: t.value_size,
                values: t.values[p * t.ndofs * t.value_size..(p + 1) * t.ndofs * t.value_size].to_vec(),
                grads: t.grads[p * t.ndofs * t.value_size * 2..(p + 1) * t.ndofs * t.value_size * 2].to_vec(),
            };
            space.eval_tabulated(coeffs, self.cells[side], &pick)[0]
        };
        [one(0), one(1)]
    }
}

/// `(a n^T + n a^T) / 2`
pub fn sym_outer(a: [f64; 2], n: [f64; 2]) -> [[f64; 2]; 2] {
    let o = 0.5 * (a[0] * n[1] + n[0] * a[1]);
    [[a[0] * n[0], o], [o, a[1] * n[1]]]
}

/// Basis traces of both neighbours of interior edge `e` at matched points.
pub fn jump_average_tables(space: &FunctionSpace, e: usize, degree: usize) -> Result<FacetTables> {
    let mesh = space.mesh();
    let topo = &mesh.topology;
    if topo.is_boundary_edge(e) {
        return Err(Error::BoundaryEdge(e));
    }
    let cells = [topo.edge_cells(e)[0], topo.edge_cells(e)[1]];
    let [va, vb] = topo.edge_vertices(e);
    let (pa, pb) = (mesh.geometry.vertex(va), mesh.geometry.vertex(vb));
    let h = mesh.geometry.edge_length(e);
    let (ts, ws) = edge_quadrature(degree);
    let points: Vec<[f64; 2]> = ts.iter().map(|&t| [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]).collect();
    let weights = ws.iter().map(|w| w * h).collect();
    let tab = |c: usize| -> Result<Tabulation> {
        let map = CellMap::new(mesh, c)?;
        let refs: Vec<[f64; 2]> = points.iter().map(|&x| map.inverse(x)).collect();
        Ok(space.tabulate_cell(c, &refs)?.1)
    };
    let tabs = [tab(cells[0])?, tab(cells[1])?];
    Ok(FacetTables {
        edge: e,
        cells,
        normal: mesh.geometry.edge_normal(e),
        tangent: mesh.geometry.edge_tangent(e),
        points,
        weights,
        tabs,
    })
}

/// Interior-facet terms of the penalty form:
/// `-(avg eps(u), [v]_t) - ([u]_t, avg eps(v)) + alpha/h ([u]_t, [v]_t)`,
/// all times `2 nu`, with `[v]_t = ((v1 - v2).t) (t ⊙ n)`.
fn assemble_facets(space: &MixedSpace, config: &ProblemConfig, builder: &mut TripletBuilder) -> Result<()> {
    let vel = &space.velocity;
    let topo = &space.mesh().topology;
    let two_nu = 2.0 * config.nu;
    for e in topo.interior_edges() {
        let ft = jump_average_tables(vel, e, 2 * space.order)?;
        let h = space.mesh().geometry.edge_length(e);
        let (n, t) = (ft.normal, ft.tangent);
        let d0 = vel.cell_dofs(ft.cells[0]);
        let d1 = vel.cell_dofs(ft.cells[1]);
        let dofs: Vec<usize> = d0.iter().chain(&d1).copied().collect();
        let nl = dofs.len();
        let mut local = vec![0.0; nl * nl];
        let mut jt = vec![0.0; nl];
        let mut av = vec![0.0; nl];
        for (p, &w) in ft.weights.iter().enumerate() {
            for side in 0..2 {
                let tab = &ft.tabs[side];
                let sgn = if side == 0 { 1.0 } else { -1.0 };
                for j in 0..tab.ndofs {
                    let l = side * d0.len() + j;
                    jt[l] = sgn * (tab.value(p, j, 0) * t[0] + tab.value(p, j, 1) * t[1]);
                    let eps = epsilon(tab, p, j);
                    // eps : (t ⊙ n) = t^T eps n, averaged over the two sides
                    let ten = t[0] * (eps[0][0] * n[0] + eps[0][1] * n[1]) + t[1] * (eps[1][0] * n[0] + eps[1][1] * n[1]);
                    av[l] = 0.5 * ten;
                }
            }
            // (t ⊙ n) : (t ⊙ n) = 1/2
            let pen = config.alpha / h * 0.5;
            for i in 0..nl {
                for j in 0..nl {
                    local[i * nl + j] += w * two_nu * (-av[j] * jt[i] - jt[j] * av[i] + pen * jt[i] * jt[j]);
                }
            }
        }
        for i in 0..nl {
            for j in 0..nl {
                builder.push(dofs[i], dofs[j], local[i * nl + j]);
            }
        }
    }
    Ok(())
}

/// The monolithic operator before any boundary condition is applied.
pub fn assemble_operator(space: &MixedSpace, config: &ProblemConfig) -> Result<CsrMatrix> {
    check_case(space, config)?;
    let n = space.dim();
    let mut builder = TripletBuilder::new(n, n);
    assemble_cells(space, config.nu, &mut builder)?;
    if space.case.is_hdiv() {
        assemble_facets(space, config, &mut builder)?;
    }
    Ok(builder.build())
}

/// Load vector `(f, v)` for all velocity test functions, zero pressure part.
pub fn assemble_rhs(space: &MixedSpace, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Vec<f64>> {
    let mesh = space.mesh();
    let vel = &space.velocity;
    let rule = make_quadrature(mesh.shape(), 2 * space.order + 4)?;
    let vref = vel.element().tabulate(&rule.points);
    let mut rhs = vec![0.0; space.dim()];
    for c in 0..mesh.topology.num_cells() {
        let maps = CellMap::new(mesh, c)?.eval_many(&rule.points);
        let vt = vel.push_cell(c, &maps, &vref)?;
        let dofs = vel.cell_dofs(c);
        for (q, m) in maps.iter().enumerate() {
            let w = rule.weights[q] * m.det;
            let fx = f(m.x);
            if vel.block_size() == 2 {
                for j in 0..vt.ndofs {
                    let s = w * vt.value(q, j, 0);
                    rhs[dofs[2 * j]] += s * fx[0];
                    rhs[dofs[2 * j + 1]] += s * fx[1];
                }
            } else {
                for (j, &d) in dofs.iter().enumerate() {
                    rhs[d] += w * (fx[0] * vt.value(q, j, 0) + fx[1] * vt.value(q, j, 1));
                }
            }
        }
    }
    Ok(rhs)
}

/// Lift prescribed values into the right-hand side and replace constrained
/// rows and columns by identity.
pub fn apply_strong_bc(matrix: &CsrMatrix, rhs: &[f64], bc: &StrongBc) -> (CsrMatrix, Vec<f64>) {
    let n = matrix.nrows();
    let mask = bc.mask(n);
    let mut lift = vec![0.0; n];
    for (&d, &v) in bc.dofs.iter().zip(&bc.values) {
        lift[d] = v;
    }
    let al = matrix.mul_vec(&lift);
    let mut b: Vec<f64> = rhs.iter().zip(&al).map(|(r, a)| r - a).collect();
    let mut builder = TripletBuilder::with_capacity(n, n, matrix.nnz());
    for i in 0..n {
        if mask[i] {
            builder.push(i, i, 1.0);
            continue;
        }
        let (cols, vals) = matrix.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if !mask[j] {
                builder.push(i, j, v);
            }
        }
    }
    for (&d, &v) in bc.dofs.iter().zip(&bc.values) {
        b[d] = v;
    }
    (builder.build(), b)
}

/// Taylor-Hood system with Dirichlet data `g` on the whole boundary.
pub fn assemble_taylor_hood(
    space: &Arc<MixedSpace>,
    config: &ProblemConfig,
    f: impl Fn([f64; 2]) -> [f64; 2],
    g: impl Fn([f64; 2]) -> [f64; 2],
) -> Result<BlockSystem> {
    if space.case.is_hdiv() {
        return Err(Error::InvalidConfig(format!("{} is not a Taylor-Hood case", space.case)));
    }
    let raw = assemble_operator(space, config)?;
    let rhs = assemble_rhs(space, f)?;
    let bc = strong_bc(&space.velocity, g, BcMode::Dirichlet)?;
    let (matrix, rhs) = apply_strong_bc(&raw, &rhs, &bc);
    Ok(BlockSystem { matrix, rhs, space: space.clone(), bc, config: *config })
}

/// BDM/RT system with interior penalty and `u.n = 0` imposed strongly.
pub fn assemble_hdiv(space: &Arc<MixedSpace>, config: &ProblemConfig, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<BlockSystem> {
    if !space.case.is_hdiv() {
        return Err(Error::InvalidConfig(format!("{} is not an H(div) case", space.case)));
    }
    let raw = assemble_operator(space, config)?;
    let rhs = assemble_rhs(space, f)?;
    let bc = strong_bc(&space.velocity, |_| [0.0, 0.0], BcMode::NormalFlux)?;
    let (matrix, rhs) = apply_strong_bc(&raw, &rhs, &bc);
    Ok(BlockSystem { matrix, rhs, space: space.clone(), bc, config: *config })
}

/// Assemble the manufactured problem for any case.
pub fn assemble_manufactured(space: &Arc<MixedSpace>, config: &ProblemConfig) -> Result<BlockSystem> {
    let data = Manufactured { nu: config.nu };
    match default_bc_mode(space.case) {
        BcMode::Dirichlet => assemble_taylor_hood(space, config, |x| data.f(x), Manufactured::u),
        BcMode::NormalFlux => assemble_hdiv(space, config, |x| data.f(x)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshtopo::build_structured;
    use crate::spaces::build_mixed;
    use nalgebra::DMatrix;

    fn mixed(case: Discretization, k: usize, n: usize) -> Arc<MixedSpace> {
        Arc::new(build_mixed(case, Arc::new(build_structured(case.shape(), n)), k).unwrap())
    }

    fn system(case: Discretization, k: usize, n: usize) -> BlockSystem {
        let s = mixed(case, k, n);
        assemble_manufactured(&s, &ProblemConfig::new(case, k)).unwrap()
    }

    fn rel_asymmetry(a: &CsrMatrix) -> f64 {
        a.max_abs_diff(&a.transpose()) / a.max_abs()
    }

    fn min_eigenvalue(a: &CsrMatrix, rows: &[usize]) -> f64 {
        let d = a.extract_submatrix(rows, rows);
        let m = DMatrix::from_fn(rows.len(), rows.len(), |i, j| d[(i, j)]);
        m.symmetric_eigen().eigenvalues.min()
    }

    #[test]
    fn manufactured_identities() {
        for x in [[0.1, 0.7], [0.35, 0.2], [0.9, 0.55]] {
            let g = Manufactured::grad_u(x);
            assert!((g[0][0] + g[1][1]).abs() < 1e-14);
            assert!((g[0][1] + g[1][0]).abs() < 1e-14);
            let (h, u) = (1e-6, Manufactured::u);
            for d in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[d] += h;
                xm[d] -= h;
                for c in 0..2 {
                    let fd = (u(xp)[c] - u(xm)[c]) / (2.0 * h);
                    assert!((fd - g[c][d]).abs() < 1e-8);
                }
            }
            // f = -nu Laplacian(u), checked by central differences
            let data = Manufactured { nu: 0.7 };
            let h = 1e-4;
            for c in 0..2 {
                let lap = (u([x[0] + h, x[1]])[c] + u([x[0] - h, x[1]])[c] + u([x[0], x[1] + h])[c] + u([x[0], x[1] - h])[c]
                    - 4.0 * u(x)[c])
                    / (h * h);
                assert!((data.f(x)[c] + 0.7 * lap).abs() < 1e-5);
            }
        }
        let u = Manufactured::u([0.5, 0.0]);
        assert!((u[0] - 1.0).abs() < 1e-15 && u[1].abs() < 1e-15);
        for t in [0.0, 0.3, 0.77, 1.0] {
            assert!(Manufactured::u([0.0, t])[0].abs() < 1e-15);
            assert!(Manufactured::u([1.0, t])[0].abs() < 1e-15);
            assert!(Manufactured::u([t, 0.0])[1].abs() < 1e-15);
            assert!(Manufactured::u([t, 1.0])[1].abs() < 1e-15);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = ProblemConfig::new(Discretization::Bdm, 2);
        assert_eq!(c.alpha, 40.0);
        assert!(c.validate().is_ok());
        c.nu = 0.0;
        assert!(c.validate().is_err());
        c.nu = 1.0;
        c.alpha = -1.0;
        assert!(c.validate().is_err());
        let s = mixed(Discretization::Bdm, 1, 2);
        assert!(assemble_taylor_hood(&s, &ProblemConfig::new(Discretization::Bdm, 1), |_| [0.0; 2], |_| [0.0; 2]).is_err());
    }

    #[test]
    fn symmetric_with_zero_pressure_block() {
        for (case, k) in [(Discretization::ThTri, 2), (Discretization::ThQuad, 3), (Discretization::Bdm, 2), (Discretization::Rt, 2)] {
            let sys = system(case, k, 3);
            assert!(rel_asymmetry(&sys.matrix) < 1e-10, "{case}");
            let off = sys.space.pressure_offset();
            for i in off..sys.dim() {
                let (cols, vals) = sys.matrix.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    assert!(j < off || v == 0.0);
                }
            }
            for (&d, &v) in sys.bc.dofs.iter().zip(&sys.bc.values) {
                let (cols, vals) = sys.matrix.row(d);
                assert_eq!(cols, &[d]);
                assert_eq!(vals, &[1.0]);
                assert_eq!(sys.rhs[d], v);
            }
        }
    }

    #[test]
    fn off_diagonal_blocks_mirror() {
        let s = mixed(Discretization::ThTri, 2, 2);
        let raw = assemble_operator(&s, &ProblemConfig::new(Discretization::ThTri, 2)).unwrap();
        let off = s.pressure_offset();
        for i in off..s.dim() {
            let (cols, vals) = raw.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                assert_eq!(raw.get(j, i), v);
            }
        }
    }

    #[test]
    fn constant_pressure_in_kernel() {
        for case in Discretization::ALL {
            let k = if case.is_hdiv() { 1 } else { 2 };
            for k in [k, k + 1] {
                let sys = system(case, k, 3);
                let z = sys.pressure_nullspace();
                let az = sys.matrix.mul_vec(&z);
                let err = az.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(err < 1e-12 * sys.matrix.max_abs(), "{case} {k}: {err:e}");
            }
        }
    }

    #[test]
    fn rigid_translation_has_zero_energy() {
        for (case, k) in [(Discretization::ThTri, 2), (Discretization::ThQuad, 2), (Discretization::Bdm, 2), (Discretization::Rt, 1)] {
            let s = mixed(case, k, 3);
            let raw = assemble_operator(&s, &ProblemConfig::new(case, k)).unwrap();
            let mut c = s.velocity.interpolate(|_| [1.0, -2.0]).unwrap();
            c.resize(s.dim(), 0.0);
            let ac = raw.mul_vec(&c);
            let err = ac[..s.pressure_offset()].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(err < 1e-11 * raw.max_abs(), "{case}: {err:e}");
        }
    }

    #[test]
    fn linear_field_energy_is_exact() {
        // w = (x + 2y, 3x - y): eps(w) = [[1, 2.5], [2.5, -1]], 2 nu eps:eps = 29 on the unit square
        let w = |x: [f64; 2]| [x[0] + 2.0 * x[1], 3.0 * x[0] - x[1]];
        for (case, k) in [(Discretization::ThTri, 2), (Discretization::ThQuad, 2), (Discretization::Bdm, 1), (Discretization::Bdm, 2), (Discretization::Rt, 2)] {
            let s = mixed(case, k, 5);
            let raw = assemble_operator(&s, &ProblemConfig::new(case, k)).unwrap();
            let mut c = s.velocity.interpolate(w).unwrap();
            c.resize(s.dim(), 0.0);
            let e: f64 = c.iter().zip(raw.mul_vec(&c)).map(|(a, b)| a * b).sum();
            assert!((e - 29.0).abs() < 1e-10, "{case} {k}: {e}");
        }
    }

    #[test]
    fn dirichlet_velocity_block_positive_definite() {
        let sys = system(Discretization::ThTri, 2, 2);
        let rows: Vec<usize> = (0..sys.space.pressure_offset()).filter(|d| !sys.bc.dofs.contains(d)).collect();
        assert!(min_eigenvalue(&sys.matrix, &rows) > 0.0);
    }

    #[test]
    fn penalty_sweep() {
        let s = mixed(Discretization::Bdm, 1, 2);
        let eig = |alpha: f64| {
            let mut cfg = ProblemConfig::new(Discretization::Bdm, 1);
            cfg.alpha = alpha;
            let sys = assemble_hdiv(&s, &cfg, |_| [0.0; 2]).unwrap();
            let rows: Vec<usize> = (0..s.pressure_offset()).filter(|d| !sys.bc.dofs.contains(d)).collect();
            min_eigenvalue(&sys.matrix, &rows)
        };
        assert!(eig(0.01) < 0.0);
        assert!(eig(10.0) > 0.0);
    }

    #[test]
    fn rhs_matches_direct_quadrature() {
        let w = |x: [f64; 2]| [x[0] * x[1], 1.0 - x[0]];
        let data = Manufactured { nu: 1.0 };
        for (case, k) in [(Discretization::ThTri, 2), (Discretization::Bdm, 2)] {
            let s = mixed(case, k, 4);
            let rhs = assemble_rhs(&s, |x| data.f(x)).unwrap();
            let c = s.velocity.interpolate(w).unwrap();
            let lhs: f64 = rhs.iter().zip(&c).map(|(a, b)| a * b).sum();
            let rule = make_quadrature(s.mesh().shape(), 2 * k + 4).unwrap();
            let mut direct = 0.0;
            for cell in 0..s.mesh().topology.num_cells() {
                for m in CellMap::new(s.mesh(), cell).unwrap().eval_many(&rule.points).iter().zip(&rule.weights) {
                    let (fx, wx) = (data.f(m.0.x), w(m.0.x));
                    direct += m.1 * m.0.det * (fx[0] * wx[0] + fx[1] * wx[1]);
                }
            }
            assert!((lhs - direct).abs() < 1e-12, "{case}");
        }
    }

    #[test]
    fn facet_tables() {
        let s = mixed(Discretization::Bdm, 2, 3);
        let vel = &s.velocity;
        let boundary = (0..s.mesh().topology.num_edges()).find(|&e| s.mesh().topology.is_boundary_edge(e)).unwrap();
        assert!(matches!(jump_average_tables(vel, boundary, 4), Err(Error::BoundaryEdge(_))));
        let lin = vel.interpolate(|x| [x[0] + 2.0 * x[1], 3.0 * x[0] - x[1]]).unwrap();
        let rough: Vec<f64> = (0..vel.dim()).map(|i| ((i * 37) % 11) as f64 / 11.0 - 0.5).collect();
        for e in s.mesh().topology.interior_edges() {
            let ft = jump_average_tables(vel, e, 4).unwrap();
            for p in 0..ft.points.len() {
                let j = ft.jump(vel, &lin, p);
                assert!(j.iter().flatten().all(|v| v.abs() < 1e-12));
                let a = ft.average_eps(vel, &lin, p);
                assert!((a[0][0] - 1.0).abs() < 1e-12 && (a[0][1] - 2.5).abs() < 1e-12 && (a[1][1] + 1.0).abs() < 1e-12);
                let j = ft.jump(vel, &rough, p);
                assert_eq!(j[0][1], j[1][0]);
            }
        }
    }
}
