//! Monolithic geometric multigrid for the saddle-point systems.
//!
//! Levels come from uniform refinement of a 5x5 base mesh; every level is
//! rediscretized. Transfers are the matrices of the natural embedding of
//! the nested coarse space into the fine one, with restriction the
//! transpose. Relaxation is Chebyshev acceleration of additive Vanka on the
//! interval `[lambda / 4, 1.1 lambda]`, with `lambda` from a short Arnoldi
//! run on the Vanka-preconditioned operator. The coarsest level is solved
//! by dense LU.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::assembly::{assemble_manufactured, assemble_operator, pressure_nullspace, BlockSystem, ProblemConfig};
use crate::elements::{pull_back, CellMap};
use crate::error::{Error, Result};
use crate::meshtopo::{build_structured, refine_uniform, Mesh, RefinementLink};
use crate::spaces::{build_mixed, FunctionSpace, MixedSpace};
use crate::sparsela::{
    estimate_lambda_max, lu_factor, triple_product, CsrMatrix, DenseFactorization, DenseMatrix, Fgmres, KrylovReport,
    LinearOperator, NullspaceProjector, TripletBuilder,
};
use crate::vanka::{build_patches, PatchSet, Weighting};

/// Cells per side of the coarsest mesh.
pub const BASE_N: usize = 5;

/// How the `nu` relaxation sweeps are realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChebyMode {
    /// One Chebyshev polynomial of degree `nu`.
    #[default]
    Degree,
    /// `nu` repetitions of the degree-1 (damped) step.
    Repeat,
}

impl ChebyMode {
    pub fn name(self) -> &'static str {
        match self {
            ChebyMode::Degree => "degree",
            ChebyMode::Repeat => "repeat",
        }
    }
}

impl fmt::Display for ChebyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChebyMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "degree" => Ok(ChebyMode::Degree),
            "repeat" => Ok(ChebyMode::Repeat),
            _ => Err(Error::InvalidConfig(format!("unknown chebyshev mode '{s}' (expected degree or repeat)"))),
        }
    }
}

/// Multigrid parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgOptions {
    /// Relaxation sweeps (Chebyshev degree) per pre/post stage.
    pub nu: usize,
    pub weighting: Weighting,
    pub cheby: ChebyMode,
    /// Arnoldi steps for the eigenvalue estimate.
    pub arnoldi_steps: usize,
    pub seed: u64,
}

impl Default for MgOptions {
    fn default() -> Self {
        Self { nu: 2, weighting: Weighting::InverseMultiplicity, cheby: ChebyMode::Degree, arnoldi_steps: 10, seed: 0 }
    }
}

/// Chebyshev interval for one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChebyshevParams {
    pub lambda: f64,
    pub lower: f64,
    pub upper: f64,
    pub degree: usize,
    pub mode: ChebyMode,
}

impl ChebyshevParams {
    pub fn new(lambda: f64, degree: usize, mode: ChebyMode) -> Self {
        Self { lambda, lower: 0.25 * lambda, upper: 1.1 * lambda, degree, mode }
    }
}

/// Chebyshev iteration on `M^{-1} A x = M^{-1} b`, updating `x` in place.
///
/// Degree mode runs the three-term recurrence; repeat mode applies the
/// degree-1 step `x += M^{-1} r / theta` `degree` times, with
/// `theta = (lower + upper) / 2`.
pub fn chebyshev(op: &dyn LinearOperator, pc: &dyn LinearOperator, params: &ChebyshevParams, b: &[f64], x: &mut [f64]) {
    let n = b.len();
    let theta = 0.5 * (params.upper + params.lower);
    let delta = 0.5 * (params.upper - params.lower);
    let sigma = theta / delta;
    let mut rho = 1.0 / sigma;
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut d = vec![0.0; n];
    for step in 0..params.degree {
        op.apply(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        pc.apply(&r, &mut z);
        if step == 0 || params.mode == ChebyMode::Repeat {
            for (di, zi) in d.iter_mut().zip(&z) {
                *di = zi / theta;
            }
        } else {
            let rho1 = 1.0 / (2.0 * sigma - rho);
            let (c1, c2) = (rho1 * rho, 2.0 * rho1 / delta);
            for (di, zi) in d.iter_mut().zip(&z) {
                *di = c1 * *di + c2 * zi;
            }
            rho = rho1;
        }
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi += di;
        }
    }
}

/// Matrix of the embedding of `coarse` into `fine`: entry `(i, j)` is fine
/// dual functional `i` applied to coarse basis function `j`.
pub fn build_prolongation(coarse: &FunctionSpace, fine: &FunctionSpace, link: &RefinementLink) -> Result<CsrMatrix> {
    let elem = fine.element();
    let kind = elem.map_kind();
    let vs = elem.value_size();
    let block = fine.block_size();
    let mut done = vec![false; fine.num_nodes()];
    let mut builder = TripletBuilder::new(fine.dim(), coarse.dim());
    let mut vals = Vec::new();
    for fc in 0..fine.mesh().topology.num_cells() {
        let pc = link.cell_parent[fc];
        let fmap = CellMap::new(fine.mesh(), fc)?;
        let cmap = CellMap::new(coarse.mesh(), pc)?;
        let cnodes = coarse.cell_nodes(pc);
        for (l, f) in elem.functionals().iter().enumerate() {
            let node = fine.cell_nodes(fc)[l];
            if done[node] {
                continue;
            }
            done[node] = true;
            let sign = fine.cell_signs(fc)[l];
            let fm = fmap.eval_many(&f.points);
            let cref: Vec<[f64; 2]> = fm.iter().map(|m| cmap.inverse(m.x)).collect();
            let (_, ctab) = coarse.tabulate_cell(pc, &cref)?;
            for (j, &cn) in cnodes.iter().enumerate() {
                vals.clear();
                for (p, m) in fm.iter().enumerate() {
                    let v = [ctab.value(p, j, 0), if vs > 1 { ctab.value(p, j, 1) } else { 0.0 }];
                    vals.extend_from_slice(&pull_back(kind, m, &v)[..vs]);
                }
                let val = sign * f.apply(&vals);
                if val.abs() > 1e-14 {
                    for a in 0..block {
                        builder.push(block * node + a, block * cn + a, val);
                    }
                }
            }
        }
    }
    Ok(builder.build())
}

/// Block-diagonal velocity/pressure prolongation.
pub fn build_mixed_prolongation(coarse: &MixedSpace, fine: &MixedSpace, link: &RefinementLink) -> Result<CsrMatrix> {
    let pv = build_prolongation(&coarse.velocity, &fine.velocity, link)?;
    let pq = build_prolongation(&coarse.pressure, &fine.pressure, link)?;
    let (fo, co) = (fine.pressure_offset(), coarse.pressure_offset());
    let mut builder = TripletBuilder::with_capacity(fine.dim(), coarse.dim(), pv.nnz() + pq.nnz());
    for (m, ro, cofs) in [(&pv, 0, 0), (&pq, fo, co)] {
        for i in 0..m.nrows() {
            let (cols, v) = m.row(i);
            for (&j, &x) in cols.iter().zip(v) {
                builder.push(ro + i, cofs + j, x);
            }
        }
    }
    Ok(builder.build())
}

/// Drop rows of constrained fine DoFs and columns of constrained coarse DoFs.
fn restrict_to_free(p: &CsrMatrix, fine_mask: &[bool], coarse_mask: &[bool]) -> CsrMatrix {
    let mut builder = TripletBuilder::with_capacity(p.nrows(), p.ncols(), p.nnz());
    for i in 0..p.nrows() {
        if fine_mask[i] {
            continue;
        }
        let (cols, v) = p.row(i);
        for (&j, &x) in cols.iter().zip(v) {
            if !coarse_mask[j] {
                builder.push(i, j, x);
            }
        }
    }
    builder.build()
}

/// `max|P^T A_f P - A_c| / max|A_c|` for the unconstrained operators of
/// two consecutive levels.
pub fn galerkin_mismatch(coarse: &MixedSpace, fine: &MixedSpace, link: &RefinementLink, config: &ProblemConfig) -> Result<f64> {
    let p = build_mixed_prolongation(coarse, fine, link)?;
    let af = assemble_operator(fine, config)?;
    let ac = assemble_operator(coarse, config)?;
    let g = triple_product(&p, &af);
    Ok(g.max_abs_diff(&ac) / ac.max_abs())
}

/// One level of the hierarchy.
#[derive(Debug, Clone)]
pub struct Level {
    pub mesh: Arc<Mesh>,
    pub system: BlockSystem,
    pub patches: PatchSet,
    pub cheby: ChebyshevParams,
    /// Transfer from the next-coarser level (absent on the coarsest).
    pub prolongation: Option<CsrMatrix>,
    constrained: Vec<bool>,
}

impl Level {
    pub fn space(&self) -> &Arc<MixedSpace> {
        &self.system.space
    }
    pub fn dim(&self) -> usize {
        self.system.dim()
    }
}

/// Levels ordered coarse to fine plus the coarse direct solver.
#[derive(Debug, Clone)]
pub struct MgHierarchy {
    pub levels: Vec<Level>,
    pub options: MgOptions,
    pub config: ProblemConfig,
    coarse: DenseFactorization,
    coarse_null: Vec<f64>,
}

/// Build `refinements + 1` levels from the 5x5 base mesh.
pub fn build_hierarchy(config: &ProblemConfig, refinements: usize, options: &MgOptions) -> Result<MgHierarchy> {
    config.validate()?;
    if options.nu == 0 || options.arnoldi_steps == 0 {
        return Err(Error::InvalidConfig("relaxation degree and Arnoldi steps must be positive".into()));
    }
    let mut mesh = Arc::new(build_structured(config.case.shape(), BASE_N));
    let mut levels: Vec<Level> = Vec::with_capacity(refinements + 1);
    let mut link: Option<RefinementLink> = None;
    for l in 0..=refinements {
        if l > 0 {
            let (fine, lk) = refine_uniform(&mesh);
            mesh = Arc::new(fine);
            link = Some(lk);
        }
        let space = Arc::new(build_mixed(config.case, mesh.clone(), config.k)?);
        let system = assemble_manufactured(&space, config)?;
        let constrained = system.bc.mask(system.dim());
        let patches = build_patches(&system, options.weighting)?;
        let lambda = estimate_lambda_max(&system.matrix, &patches, options.arnoldi_steps, options.seed);
        let cheby = ChebyshevParams::new(lambda, options.nu, options.cheby);
        let prolongation = match (levels.last(), &link) {
            (Some(prev), Some(lk)) => {
                let p = build_mixed_prolongation(prev.space(), &space, lk)?;
                Some(restrict_to_free(&p, &constrained, &prev.constrained))
            }
            _ => None,
        };
        levels.push(Level { mesh: mesh.clone(), system, patches, cheby, prolongation, constrained });
    }

    let base = &levels[0].system;
    let z = pressure_nullspace(&base.space);
    let scale = base.matrix.max_abs();
    // the rank-one term removes the constant-pressure kernel
    let a0 = base.matrix.to_dense();
    let n = base.dim();
    let coarse = lu_factor(&DenseMatrix::from_fn(n, n, |i, j| a0[(i, j)] + scale * z[i] * z[j]))?;
    Ok(MgHierarchy { levels, options: *options, config: *config, coarse, coarse_null: z })
}

impl MgHierarchy {
    pub fn finest(&self) -> &Level {
        self.levels.last().expect("hierarchy has at least one level")
    }

    /// Number of refinements above the base mesh.
    pub fn refinements(&self) -> usize {
        self.levels.len() - 1
    }

    fn coarse_solve(&self, b: &[f64]) -> Vec<f64> {
        let proj = NullspaceProjector::new(std::slice::from_ref(&self.coarse_null));
        let mut rhs = b.to_vec();
        proj.project(&mut rhs);
        let mut x = self.coarse.solve(&rhs);
        proj.project(&mut x);
        x
    }

    fn cycle(&self, l: usize, b: &[f64]) -> Vec<f64> {
        if l == 0 {
            return self.coarse_solve(b);
        }
        let level = &self.levels[l];
        let a = &level.system.matrix;
        let p = level.prolongation.as_ref().expect("fine levels carry a prolongation");
        let mut x = vec![0.0; b.len()];
        chebyshev(a, &level.patches, &level.cheby, b, &mut x);
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let mut rc = vec![0.0; p.ncols()];
        p.spmv_transpose(&r, &mut rc);
        let xc = self.cycle(l - 1, &rc);
        let corr = p.mul_vec(&xc);
        for (xi, ci) in x.iter_mut().zip(&corr) {
            *xi += ci;
        }
        chebyshev(a, &level.patches, &level.cheby, b, &mut x);
        // constrained rows are identity and decoupled
        for (i, &c) in level.constrained.iter().enumerate() {
            if c {
                x[i] = b[i];
            }
        }
        x
    }

    /// One V(nu, nu) cycle from a zero initial guess on the finest level.
    pub fn v_cycle(&self, b: &[f64]) -> Vec<f64> {
        self.cycle(self.levels.len() - 1, b)
    }

    /// FGMRES on the finest system, preconditioned by one V-cycle.
    pub fn solve(&self, rtol: f64, max_it: usize) -> (Vec<f64>, KrylovReport) {
        let (x, report, _) = self.solve_with_snapshots(rtol, max_it, &[]);
        (x, report)
    }

    /// As [`solve`](Self::solve), also returning the first iterate whose
    /// relative residual reaches each of the given decreasing thresholds.
    pub fn solve_with_snapshots(
        &self,
        rtol: f64,
        max_it: usize,
        thresholds: &[f64],
    ) -> (Vec<f64>, KrylovReport, Vec<Option<(usize, Vec<f64>)>>) {
        let fine = self.finest();
        let null = NullspaceProjector::new(&[pressure_nullspace(fine.space())]);
        Fgmres::new(rtol, max_it).solve_with_snapshots(&fine.system.matrix, self, &fine.system.rhs, Some(&null), thresholds)
    }
}

impl LinearOperator for MgHierarchy {
    fn dim(&self) -> usize {
        self.finest().dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.v_cycle(x));
    }
}
