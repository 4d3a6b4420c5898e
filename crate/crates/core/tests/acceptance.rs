//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line.

use std::sync::Arc;
use std::time::Instant;

use stokes_mg::assembly::{assemble_manufactured, pressure_nullspace, ProblemConfig};
use stokes_mg::bench::{loglog_slope, run_case, stopping_study, RunRecord, RunSpec};
use stokes_mg::elements::{make_element, make_quadrature, ElementFamily};
use stokes_mg::meshtopo::{build_structured, closure, refine_uniform, star, CellShape, EntityRef};
use stokes_mg::mg::{build_hierarchy, chebyshev, ChebyMode, ChebyshevParams, MgOptions, BASE_N};
use stokes_mg::spaces::{build_mixed, Discretization};
use stokes_mg::sparsela::{fgmres, lu_factor, DenseMatrix, Identity, NullspaceProjector};
use stokes_mg::vanka::{apply_additive, build_patches, Patch, PatchSet, Weighting};

use Discretization::{Bdm, Rt, ThQuad, ThTri};

const GALERKIN_EQUIV_TOL: f64 = 1e-10;
const GALERKIN_HDIV_MIN: f64 = 1e-3;
const DIV_FREE_REL: f64 = 1e-8;
const TH_DIV_MIN: f64 = 1e-3;
const ORDER_SLACK: f64 = 0.25;
const MAX_ITERATIONS: usize = 60;
const H_GROWTH: f64 = 0.40;
const P_BAND: f64 = 0.50;
const STOP_SLOPE: f64 = 3.0;
const STOP_SLOPE_TOL: f64 = 0.5;
const STOP_ERR_REL: f64 = 0.05;
const DIRECT_MATCH: f64 = 1e-8;

fn verdict(id: u32, name: &str, pass: bool, detail: &str, t0: Instant) {
    println!(
        "criterion {id} {name}: {} ({detail}) [{:.1}s]",
        if pass { "PASS" } else { "FAIL" },
        t0.elapsed().as_secs_f64()
    );
    assert!(pass, "criterion {id} {name} failed: {detail}");
}

fn run(case: Discretization, k: usize, nu: usize, levels: usize) -> RunRecord {
    run_case(&RunSpec::new(case, k, nu, levels)).unwrap()
}

#[test]
fn c1_galerkin_equivalence() {
    let t0 = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    let cases = [(ThTri, 2), (ThTri, 3), (ThQuad, 2), (ThQuad, 3), (Bdm, 1), (Bdm, 2)];
    for (case, k) in cases {
        for l in 1..=2 {
            let coarse = Arc::new(build_structured(case.shape(), BASE_N << (l - 1)));
            let (fine, link) = refine_uniform(&coarse);
            let cs = build_mixed(case, coarse, k).unwrap();
            let fs = build_mixed(case, Arc::new(fine), k).unwrap();
            let m = stokes_mg::mg::galerkin_mismatch(&cs, &fs, &link, &ProblemConfig::new(case, k)).unwrap();
            let ok = if case.is_hdiv() { m >= GALERKIN_HDIV_MIN } else { m <= GALERKIN_EQUIV_TOL };
            pass &= ok;
            detail.push(format!("{case} k={k} l={l}: {m:.2e}"));
        }
    }
    verdict(1, "galerkin equivalence", pass, &detail.join(", "), t0);
}

#[test]
fn c2_divergence_free() {
    let t0 = Instant::now();
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for case in [Bdm, Rt] {
        for k in 1..=3 {
            for l in 1..=2 {
                let r = run(case, k, 2, l);
                let rel = r.errors.max_div / r.errors.max_u;
                worst = worst.max(rel);
                pass &= r.converged && rel <= DIV_FREE_REL;
            }
        }
    }
    let th = run(ThTri, 2, 2, 1);
    pass &= th.errors.max_div > TH_DIV_MIN;
    verdict(
        2,
        "divergence-free velocities",
        pass,
        &format!("worst H(div) max|div u|/max|u| = {worst:.2e}, th-tri k=2 max|div u| = {:.2e}", th.errors.max_div),
        t0,
    );
}

#[test]
fn c3_convergence_orders() {
    let t0 = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    for (case, k) in [(ThTri, 2), (ThQuad, 2), (ThQuad, 3), (Bdm, 1), (Bdm, 2)] {
        let (mut h, mut e) = (Vec::new(), Vec::new());
        for l in 0..=2 {
            let r = run(case, k, 2, l);
            h.push(1.0 / (BASE_N << l) as f64);
            e.push(r.errors.h1_vel_rel);
        }
        let slope = loglog_slope(&h, &e);
        pass &= slope >= k as f64 - ORDER_SLACK;
        detail.push(format!("{case} k={k}: {slope:.2}"));
    }
    verdict(3, "convergence orders", pass, &detail.join(", "), t0);
}

#[test]
fn c4_h_robustness() {
    let t0 = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    for (case, k) in [(Bdm, 2), (ThQuad, 3)] {
        let its: Vec<usize> = (1..=3)
            .map(|l| {
                let r = run(case, k, 2, l);
                pass &= r.converged;
                r.iterations
            })
            .collect();
        pass &= its.iter().all(|&i| i <= MAX_ITERATIONS);
        pass &= its[2] as f64 <= (1.0 + H_GROWTH) * its[0] as f64;
        detail.push(format!("{case} k={k}: {its:?}"));
    }
    verdict(4, "h-robustness", pass, &detail.join(", "), t0);
}

#[test]
fn c5_p_robustness() {
    let t0 = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    for (case, nu, ks) in [(ThQuad, 1, [2, 3, 4]), (Bdm, 2, [1, 2, 3])] {
        let mut its: Vec<usize> = ks.iter().map(|&k| run(case, k, nu, 2).iterations).collect();
        detail.push(format!("{case} nu={nu}: {its:?}"));
        its.sort_unstable();
        let median = its[1] as f64;
        pass &= its.iter().all(|&i| i <= MAX_ITERATIONS && (i as f64 - median).abs() <= P_BAND * median);
    }
    verdict(5, "p-robustness", pass, &detail.join(", "), t0);
}

#[test]
fn c6_triangles_vs_quadrilaterals() {
    let t0 = Instant::now();
    let tri = run(ThTri, 4, 1, 2);
    let quad = run(ThQuad, 4, 1, 2);
    verdict(
        6,
        "triangles need at least as many iterations as quadrilaterals",
        tri.iterations >= quad.iterations,
        &format!("th-tri {} vs th-quad {}", tri.iterations, quad.iterations),
        t0,
    );
}

#[test]
fn c7_stopping_tolerance_scaling() {
    let t0 = Instant::now();
    let rows = stopping_study(Bdm, 2, 3).unwrap();
    let mut pass = rows.iter().all(|r| r.rtol.is_some());
    let mut detail = Vec::new();
    for r in &rows {
        let mut spec = RunSpec::new(Bdm, 2, 2, r.levels);
        spec.rtol = 1e-12;
        spec.max_it = 200;
        let tight = run_case(&spec).unwrap().errors.h1_vel_rel;
        let rel = (r.errors.h1_vel_rel - tight).abs() / tight;
        pass &= rel <= STOP_ERR_REL;
        detail.push(format!("l={} rtol={:?} err change {rel:.1e}", r.levels, r.rtol));
    }
    let h: Vec<f64> = rows.iter().map(|r| 1.0 / r.n as f64).collect();
    let t: Vec<f64> = rows.iter().map(|r| r.rtol.unwrap_or(f64::NAN)).collect();
    let slope = loglog_slope(&h, &t);
    pass &= (slope - STOP_SLOPE).abs() <= STOP_SLOPE_TOL;
    detail.push(format!("slope {slope:.2}"));
    verdict(7, "stopping tolerance scaling", pass, &detail.join(", "), t0);
}

#[test]
fn c8_matches_direct_solve() {
    let t0 = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    for (case, k) in [(ThTri, 2), (Bdm, 1)] {
        let config = ProblemConfig::new(case, k);
        let h = build_hierarchy(&config, 1, &MgOptions::default()).unwrap();
        let (mut x, rep) = h.solve(1e-12, 100);
        let sys = &h.finest().system;
        let z = pressure_nullspace(&sys.space);
        let s = sys.matrix.max_abs();
        let a = sys.matrix.to_dense();
        let n = sys.dim();
        let aug = DenseMatrix::from_fn(n, n, |i, j| a[(i, j)] + s * z[i] * z[j]);
        let proj = NullspaceProjector::new(&[z]);
        let mut b = sys.rhs.clone();
        proj.project(&mut b);
        let mut xd = lu_factor(&aug).unwrap().solve(&b);
        proj.project(&mut xd);
        proj.project(&mut x);
        let diff: f64 = x.iter().zip(&xd).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = xd.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rel = diff / norm;
        pass &= rep.converged && rel <= DIRECT_MATCH;
        detail.push(format!("{case} k={k}: {rel:.2e} in {} its", rep.iterations));
    }
    verdict(8, "agreement with a direct solve", pass, &detail.join(", "), t0);
}

#[test]
fn c9_unit_properties() {
    let t0 = Instant::now();
    let mut failures = Vec::new();

    // Element nodality.
    for (family, ks) in [
        (ElementFamily::LagrangeTri, 1..=8),
        (ElementFamily::LagrangeQuad, 1..=8),
        (ElementFamily::DiscLagrangeTri, 0..=7),
        (ElementFamily::BdmTri, 1..=4),
        (ElementFamily::RtTri, 1..=4),
    ] {
        for k in ks {
            let el = make_element(family, k).unwrap();
            let err = el.dual_matrix().max_abs_diff(&DenseMatrix::identity(el.ndofs()));
            if err > 1e-10 * el.coefficient_scale().max(1.0) {
                failures.push(format!("nodality {} k={k}: {err:.1e}", family.name()));
            }
        }
    }

    // Quadrature exactness on monomials.
    for shape in [CellShape::Triangle, CellShape::Quadrilateral] {
        for degree in 0..=20 {
            let rule = make_quadrature(shape, degree).unwrap();
            for a in 0..=degree {
                let bmax = if shape == CellShape::Triangle { degree - a } else { degree };
                for b in 0..=bmax {
                    let exact = match shape {
                        CellShape::Triangle => {
                            let f = |n: usize| (1..=n).map(|i| i as f64).product::<f64>();
                            f(a) * f(b) / f(a + b + 2)
                        }
                        CellShape::Quadrilateral => 1.0 / ((a + 1) * (b + 1)) as f64,
                    };
                    let q: f64 = rule.points.iter().zip(&rule.weights).map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32)).sum();
                    if (q - exact).abs() > 1e-13 * exact.max(1e-3) {
                        failures.push(format!("quadrature {} degree {degree} x^{a}y^{b}", shape.name()));
                    }
                }
            }
        }
    }

    // Star/closure algebra.
    for shape in [CellShape::Triangle, CellShape::Quadrilateral] {
        let mesh = build_structured(shape, 4);
        let topo = &mesh.topology;
        for dim in 0..3u8 {
            for index in 0..topo.count(dim) {
                let ent = EntityRef { dim, index };
                let cl = closure(topo, &[ent]);
                let ok = star(topo, ent).iter().all(|s| closure(topo, &[*s]).contains(&ent)) && closure(topo, &cl) == cl;
                if !ok {
                    failures.push(format!("star/closure {} {ent}", shape.name()));
                }
            }
        }
    }

    // Patch pressure-disjointness and coverage.
    for (case, k) in [(ThTri, 3), (ThQuad, 3), (Bdm, 2), (Rt, 2)] {
        let space = Arc::new(build_mixed(case, Arc::new(build_structured(case.shape(), 3)), k).unwrap());
        let sys = assemble_manufactured(&space, &ProblemConfig::new(case, k)).unwrap();
        let set = build_patches(&sys, Weighting::InverseMultiplicity).unwrap();
        let off = space.pressure_offset();
        let mut count = vec![0usize; sys.dim()];
        for p in &set.patches {
            for &d in &p.dofs {
                count[d] += 1;
            }
        }
        let ok = (0..sys.dim()).all(|d| if d >= off { count[d] == 1 } else { (count[d] > 0) != set.constrained[d] });
        if !ok {
            failures.push(format!("patch partition {case} k={k}"));
        }
    }

    // Additive Vanka against explicit restriction/prolongation on a 2-patch system.
    {
        let a = DenseMatrix::from_row_major(
            5,
            5,
            vec![
                4.0, -1.0, 0.0, 1.0, 0.0, //
                -1.0, 4.0, -1.0, 1.0, 1.0, //
                0.0, -1.0, 4.0, 0.0, 1.0, //
                1.0, 1.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 1.0, 0.0, 0.0,
            ],
        );
        let csr = stokes_mg::sparsela::CsrMatrix::from_dense(&a);
        let patches = vec![
            Patch::new(EntityRef::vertex(0), vec![0, 1], vec![3]),
            Patch::new(EntityRef::vertex(1), vec![1, 2], vec![4]),
        ];
        let mut set = PatchSet::from_patches(patches, 5, vec![false; 5], Weighting::InverseMultiplicity);
        set.factor(&csr).unwrap();
        let r = [1.0, -2.0, 0.5, 0.25, -1.0];
        let z = apply_additive(&set, &r);
        let mut expect = [0.0; 5];
        for dofs in [[0usize, 1, 3], [1, 2, 4]] {
            let local = DenseMatrix::from_fn(3, 3, |i, j| a[(dofs[i], dofs[j])]);
            let sol = lu_factor(&local).unwrap().solve(&dofs.map(|d| r[d]));
            for (i, &d) in dofs.iter().enumerate() {
                expect[d] += if d == 1 { 0.5 } else { 1.0 } * sol[i];
            }
        }
        let err = z.iter().zip(&expect).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        if err > 1e-14 {
            failures.push(format!("two-patch Vanka: {err:.1e}"));
        }
    }

    // Chebyshev with degree 1 is a Richardson step with weight 2 / (lower + upper).
    {
        let a = DenseMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 + i as f64 } else { 0.0 });
        let params = ChebyshevParams::new(4.0, 1, ChebyMode::Degree);
        let b = [1.0, 2.0, 3.0, 4.0];
        let mut x = [0.5; 4];
        chebyshev(&a, &Identity(4), &params, &b, &mut x);
        let w = 2.0 / (params.lower + params.upper);
        let ok = (0..4).all(|i| (x[i] - (0.5 + w * (b[i] - a[(i, i)] * 0.5))).abs() < 1e-14);
        if !ok {
            failures.push("chebyshev degree 1".into());
        }
    }

    // FGMRES: monotone residuals, termination within n steps.
    {
        let n = 30;
        let a = DenseMatrix::from_fn(n, n, |i, j| if i == j { 3.0 } else { ((i * 7 + j * 3) % 5) as f64 * 0.1 - 0.2 });
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let (_, rep) = fgmres(&a, &Identity(n), &b, 1e-13, n + 5, None);
        let mono = rep.residual_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
        if !(mono && rep.converged && rep.iterations <= n) {
            failures.push(format!("fgmres: monotone={mono} its={}", rep.iterations));
        }
    }

    let detail = if failures.is_empty() { "all suites".to_string() } else { failures.join("; ") };
    verdict(9, "unit-level properties", failures.is_empty(), &detail, t0);
}
