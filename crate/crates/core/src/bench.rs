//! Experiment driver: single runs, parameter sweeps and the stopping
//! tolerance study, with CSV output.

use std::io::Write;
use std::time::Instant;

use serde::Deserialize;

use crate::assembly::{jump_average_tables, Manufactured, ProblemConfig};
use crate::elements::make_quadrature;
use crate::error::{Error, Result};
use crate::mg::{build_hierarchy, ChebyMode, MgHierarchy, MgOptions, BASE_N};
use crate::spaces::{Discretization, MixedSpace};
use crate::vanka::Weighting;

/// CSV header of run records.
pub const CSV_HEADER: &str =
    "case,k,nu,levels,n_dofs,m_dofs,alpha,viscosity,rtol,iterations,converged,setup_s,solve_s,err_h1_vel_rel,err_l2_p_abs,max_div,jump_seminorm";

/// One solver configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec {
    pub case: Discretization,
    pub k: usize,
    /// Relaxation sweeps per stage.
    pub nu: usize,
    /// Refinements above the 5x5 base mesh.
    pub levels: usize,
    pub rtol: f64,
    pub max_it: usize,
    /// Penalty; `None` selects `10 k^2`.
    pub alpha: Option<f64>,
    pub viscosity: f64,
    pub seed: u64,
    pub weighting: Weighting,
    pub cheby: ChebyMode,
}

impl RunSpec {
    pub fn new(case: Discretization, k: usize, nu: usize, levels: usize) -> Self {
        Self {
            case,
            k,
            nu,
            levels,
            rtol: 1e-10,
            max_it: 100,
            alpha: None,
            viscosity: 1.0,
            seed: 0,
            weighting: Weighting::InverseMultiplicity,
            cheby: ChebyMode::Degree,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !self.case.orders().contains(&self.k) {
            return bad(format!("k={} outside {:?} for {}", self.k, self.case.orders(), self.case));
        }
        if !(1..=4).contains(&self.nu) {
            return bad(format!("nu={} outside 1..=4", self.nu));
        }
        if self.levels > 5 {
            return bad(format!("levels={} outside 0..=5", self.levels));
        }
        if !(self.rtol > 0.0 && self.rtol < 1.0) {
            return bad(format!("rtol={} outside (0, 1)", self.rtol));
        }
        if self.max_it == 0 {
            return bad("max_it must be positive".into());
        }
        self.problem().validate()
    }

    pub fn problem(&self) -> ProblemConfig {
        let mut p = ProblemConfig::new(self.case, self.k);
        p.nu = self.viscosity;
        if let Some(a) = self.alpha {
            p.alpha = a;
        }
        p
    }

    pub fn mg_options(&self) -> MgOptions {
        MgOptions { nu: self.nu, weighting: self.weighting, cheby: self.cheby, arnoldi_steps: 10, seed: self.seed }
    }

    /// Cells per side of the finest mesh.
    pub fn finest_n(&self) -> usize {
        BASE_N << self.levels
    }
}

/// Discretization errors against the manufactured solution.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorNorms {
    /// `|u - u_h|_{1,h} / |u|_1` with the full (broken) H1 norm.
    pub h1_vel_rel: f64,
    /// L2 pressure error after removing both means.
    pub l2_p_abs: f64,
    /// Largest `|div u_h|` over all quadrature points.
    pub max_div: f64,
    /// Largest `|u_h|` over the same points.
    pub max_u: f64,
    /// `(sum_e h_e^{-1} ||[u_h]||^2)^{1/2}` over interior edges.
    pub jump_seminorm: f64,
}

/// Quadrature-evaluated errors of a solution vector (velocity then pressure).
pub fn error_norms(space: &MixedSpace, solution: &[f64]) -> Result<ErrorNorms> {
    let mesh = space.mesh();
    let k = space.order;
    let rule = make_quadrature(mesh.shape(), (2 * k + 4).min(20))?;
    let (uh, ph) = solution.split_at(space.pressure_offset());
    let mut out = ErrorNorms::default();
    let (mut num, mut den) = (0.0, 0.0);
    let (mut pint, mut pexact_int, mut area) = (0.0, 0.0, 0.0);
    let mut psamples = Vec::new();
    for c in 0..mesh.topology.num_cells() {
        let (maps, vtab) = space.velocity.tabulate_cell(c, &rule.points)?;
        let ptab = space.pressure.push_cell(c, &maps, &space.pressure.element().tabulate(&rule.points))?;
        let vs = space.velocity.eval_tabulated(uh, c, &vtab);
        let ps = space.pressure.eval_tabulated(ph, c, &ptab);
        for (q, m) in maps.iter().enumerate() {
            let w = rule.weights[q] * m.det;
            let (u, g) = (Manufactured::u(m.x), Manufactured::grad_u(m.x));
            let s = &vs[q];
            for a in 0..2 {
                num += w * (u[a] - s.value[a]).powi(2);
                den += w * u[a] * u[a];
                for d in 0..2 {
                    num += w * (g[a][d] - s.grad[a][d]).powi(2);
                    den += w * g[a][d] * g[a][d];
                }
            }
            out.max_div = out.max_div.max((s.grad[0][0] + s.grad[1][1]).abs());
            out.max_u = out.max_u.max(s.value[0].hypot(s.value[1]));
            let pe = Manufactured::p(m.x);
            pint += w * ps[q].value[0];
            pexact_int += w * pe;
            area += w;
            psamples.push((w, ps[q].value[0], pe));
        }
    }
    out.h1_vel_rel = (num / den).sqrt();
    let (mh, me) = (pint / area, pexact_int / area);
    out.l2_p_abs = psamples.iter().map(|(w, p, e)| w * ((p - mh) - (e - me)).powi(2)).sum::<f64>().sqrt();

    if space.case.is_hdiv() {
        let mut jump = 0.0;
        for e in mesh.topology.interior_edges() {
            let ft = jump_average_tables(&space.velocity, e, 2 * k)?;
            let h = mesh.geometry.edge_length(e);
            for (p, w) in ft.weights.iter().enumerate() {
                let j = ft.jump(&space.velocity, uh, p);
                jump += w / h * j.iter().flatten().map(|v| v * v).sum::<f64>();
            }
        }
        out.jump_seminorm = jump.sqrt();
    }
    Ok(out)
}

/// Result of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub spec: RunSpec,
    pub n_dofs: usize,
    pub m_dofs: usize,
    pub alpha: f64,
    pub iterations: usize,
    pub converged: bool,
    pub setup_s: f64,
    pub solve_s: f64,
    pub errors: ErrorNorms,
}

impl RunRecord {
    /// One CSV line (no newline); timings left empty when `timings` is false.
    pub fn csv_row(&self, timings: bool) -> String {
        let s = &self.spec;
        let (setup, solve) = if timings { (format!("{:.3}", self.setup_s), format!("{:.3}", self.solve_s)) } else { (String::new(), String::new()) };
        format!(
            "{},{},{},{},{},{},{},{},{:e},{},{},{},{},{:e},{:e},{:e},{:e}",
            s.case,
            s.k,
            s.nu,
            s.levels,
            self.n_dofs,
            self.m_dofs,
            self.alpha,
            s.viscosity,
            s.rtol,
            self.iterations,
            self.converged,
            setup,
            solve,
            self.errors.h1_vel_rel,
            self.errors.l2_p_abs,
            self.errors.max_div,
            self.errors.jump_seminorm
        )
    }
}

/// Build the hierarchy for a spec.
pub fn build_for(spec: &RunSpec) -> Result<MgHierarchy> {
    spec.validate()?;
    build_hierarchy(&spec.problem(), spec.levels, &spec.mg_options())
}

/// Build, solve from a zero initial guess, and measure errors.
pub fn run_case(spec: &RunSpec) -> Result<RunRecord> {
    let t0 = Instant::now();
    let h = build_for(spec)?;
    let setup_s = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let (x, report) = h.solve(spec.rtol, spec.max_it);
    let solve_s = t1.elapsed().as_secs_f64();
    let space = h.finest().space();
    Ok(RunRecord {
        spec: *spec,
        n_dofs: space.velocity.dim(),
        m_dofs: space.pressure.dim(),
        alpha: spec.problem().alpha,
        iterations: report.iterations,
        converged: report.converged,
        setup_s,
        solve_s,
        errors: error_norms(space, &x)?,
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// Sweep description: RunSpec fields, with lists allowed for the case,
/// `k`, `nu` and `levels`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    case: OneOrMany<String>,
    k: OneOrMany<usize>,
    nu: OneOrMany<usize>,
    levels: OneOrMany<usize>,
    #[serde(default = "default_rtol")]
    rtol: f64,
    #[serde(default = "default_max_it")]
    max_it: usize,
    alpha: Option<f64>,
    #[serde(default = "default_viscosity")]
    viscosity: f64,
    #[serde(default)]
    seed: u64,
    weighting: Option<String>,
    cheby: Option<String>,
}

fn default_rtol() -> f64 {
    1e-10
}
fn default_max_it() -> usize {
    100
}
fn default_viscosity() -> f64 {
    1.0
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Expand the grid in case, k, nu, levels order (last varies fastest).
    pub fn specs(&self) -> Result<Vec<RunSpec>> {
        let weighting = self.weighting.as_deref().map(str::parse).transpose()?.unwrap_or_default();
        let cheby = self.cheby.as_deref().map(str::parse).transpose()?.unwrap_or_default();
        let mut out = Vec::new();
        for case in self.case.to_vec() {
            let case: Discretization = case.parse()?;
            for k in self.k.to_vec() {
                for nu in self.nu.to_vec() {
                    for levels in self.levels.to_vec() {
                        let spec = RunSpec {
                            case,
                            k,
                            nu,
                            levels,
                            rtol: self.rtol,
                            max_it: self.max_it,
                            alpha: self.alpha,
                            viscosity: self.viscosity,
                            seed: self.seed,
                            weighting,
                            cheby,
                        };
                        spec.validate()?;
                        out.push(spec);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Run every spec in order, streaming CSV rows (header first) to `out`.
pub fn sweep(specs: &[RunSpec], out: &mut dyn Write, timings: bool) -> Result<Vec<RunRecord>> {
    writeln!(out, "{CSV_HEADER}")?;
    let mut records = Vec::with_capacity(specs.len());
    for spec in specs {
        let rec = run_case(spec)?;
        writeln!(out, "{}", rec.csv_row(timings))?;
        out.flush()?;
        records.push(rec);
    }
    Ok(records)
}

/// CSV header of stopping-study rows.
pub const STOPPING_HEADER: &str = "case,k,levels,n,rtol,iterations,err_h1_vel_rel,err_l2_p_abs,status";

/// Relative change that still counts as converged error.
pub const PLATEAU_TOL: f64 = 0.01;
/// Smallest tolerance tried.
pub const RTOL_FLOOR: f64 = 1e-15;

/// Required stopping tolerance at one mesh level.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingRow {
    pub case: Discretization,
    pub k: usize,
    pub levels: usize,
    pub n: usize,
    /// Largest tolerance on the error plateau (`None` if unresolved).
    pub rtol: Option<f64>,
    pub iterations: usize,
    pub errors: ErrorNorms,
    /// Velocity error at the tightest tolerance reached.
    pub reference_h1_vel_rel: f64,
}

impl StoppingRow {
    pub fn csv_row(&self) -> String {
        let (rtol, status) = match self.rtol {
            Some(r) => (format!("{r:e}"), "ok"),
            None => (String::new(), "unresolved"),
        };
        format!(
            "{},{},{},{},{},{},{:e},{:e},{}",
            self.case, self.k, self.levels, self.n, rtol, self.iterations, self.errors.h1_vel_rel, self.errors.l2_p_abs, status
        )
    }
}

/// Tolerances `1e-2 / 2^i` down to the floor.
pub fn tolerance_ladder() -> Vec<f64> {
    let mut out = Vec::new();
    let mut t = 1e-2;
    while t >= RTOL_FLOOR {
        out.push(t);
        t *= 0.5;
    }
    out
}

/// Find the loosest stopping tolerance whose velocity error is within 1% of
/// the error at a four times tighter tolerance.
///
/// A single FGMRES run records the iterate at each tolerance of the ladder;
/// FGMRES iterates depend only on the iteration count, so this equals
/// separate runs stopped at each tolerance.
pub fn stopping_level(case: Discretization, k: usize, levels: usize, nu: usize, max_it: usize) -> Result<StoppingRow> {
    let mut spec = RunSpec::new(case, k, nu, levels);
    spec.max_it = max_it;
    let h = build_for(&spec)?;
    let ladder = tolerance_ladder();
    let (_, _, snaps) = h.solve_with_snapshots(RTOL_FLOOR, max_it, &ladder);
    let space = h.finest().space();
    let mut errs: Vec<Option<(usize, ErrorNorms)>> = Vec::with_capacity(snaps.len());
    for s in &snaps {
        errs.push(match s {
            Some((its, x)) => Some((*its, error_norms(space, x)?)),
            None => None,
        });
    }
    let reference = errs.iter().rev().flatten().next().map_or(f64::NAN, |(_, e)| e.h1_vel_rel);
    let mut row = StoppingRow {
        case,
        k,
        levels,
        n: spec.finest_n(),
        rtol: None,
        iterations: 0,
        errors: ErrorNorms::default(),
        reference_h1_vel_rel: reference,
    };
    for i in 0..ladder.len().saturating_sub(2) {
        if let (Some((its, a)), Some((_, b))) = (&errs[i], &errs[i + 2]) {
            if (a.h1_vel_rel - b.h1_vel_rel).abs() <= PLATEAU_TOL * b.h1_vel_rel {
                row.rtol = Some(ladder[i]);
                row.iterations = *its;
                row.errors = *a;
                break;
            }
        }
    }
    Ok(row)
}

/// Stopping study for levels `1..=max_levels`.
pub fn stopping_study(case: Discretization, k: usize, max_levels: usize) -> Result<Vec<StoppingRow>> {
    if !matches!(case, Discretization::ThQuad | Discretization::Bdm) {
        return Err(Error::InvalidConfig(format!("stopping study supports th-quad and bdm, not {case}")));
    }
    (1..=max_levels).map(|l| stopping_level(case, k, l, 2, 200)).collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
