use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;

use stokes_mg::assembly::{assemble_manufactured, ProblemConfig};
use stokes_mg::elements::{make_element, make_quadrature, ElementFamily};
use stokes_mg::meshtopo::{build_structured, closure, star, CellShape, EntityRef};
use stokes_mg::mg::{chebyshev, ChebyMode, ChebyshevParams};
use stokes_mg::spaces::{build_mixed, Discretization};
use stokes_mg::sparsela::{fgmres, DenseMatrix, Identity, NullspaceProjector};
use stokes_mg::vanka::{apply_additive, build_patches, Weighting};

fn shape_strategy() -> impl Strategy<Value = CellShape> {
    prop_oneof![Just(CellShape::Triangle), Just(CellShape::Quadrilateral)]
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn small_system(case: Discretization, k: usize) -> stokes_mg::assembly::BlockSystem {
    let mesh = Arc::new(build_structured(case.shape(), 2));
    let space = Arc::new(build_mixed(case, mesh, k).unwrap());
    assemble_manufactured(&space, &ProblemConfig::new(case, k)).unwrap()
}

fn case_strategy() -> impl Strategy<Value = (Discretization, usize)> {
    prop_oneof![
        (2usize..=3).prop_map(|k| (Discretization::ThTri, k)),
        (2usize..=3).prop_map(|k| (Discretization::ThQuad, k)),
        (1usize..=2).prop_map(|k| (Discretization::Bdm, k)),
        (1usize..=2).prop_map(|k| (Discretization::Rt, k)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn star_closure_algebra(shape in shape_strategy(), n in 1usize..6, dim in 0u8..3, pick in 0usize..1000) {
        let mesh = build_structured(shape, n);
        let topo = &mesh.topology;
        let ent = EntityRef { dim, index: pick % topo.count(dim) };
        let st = star(topo, ent);
        prop_assert!(st.contains(&ent));
        prop_assert!(st.iter().all(|e| e.dim >= dim));
        let cl = closure(topo, &[ent]);
        prop_assert!(cl.contains(&ent));
        prop_assert!(cl.iter().all(|e| e.dim <= dim));
        prop_assert_eq!(closure(topo, &cl), cl.clone());
        // Every entity in the star has `ent` in its closure.
        for s in &st {
            prop_assert!(closure(topo, &[*s]).contains(&ent));
        }
        let cells: BTreeSet<_> = st.iter().filter(|e| e.dim == 2).collect();
        prop_assert!(!cells.is_empty());
        if dim == 2 {
            prop_assert_eq!(st.len(), 1);
            prop_assert_eq!(cl.len(), 1 + 2 * shape.num_vertices());
        }
    }

    #[test]
    fn quadrature_exactness(shape in shape_strategy(), degree in 0usize..=20, a in 0usize..=20, b in 0usize..=20) {
        let rule = make_quadrature(shape, degree).unwrap();
        let ok = match shape {
            CellShape::Triangle => a + b <= degree,
            CellShape::Quadrilateral => a <= degree && b <= degree,
        };
        prop_assume!(ok);
        let exact = match shape {
            CellShape::Triangle => factorial(a) * factorial(b) / factorial(a + b + 2),
            CellShape::Quadrilateral => 1.0 / ((a + 1) * (b + 1)) as f64,
        };
        let q: f64 = rule.points.iter().zip(&rule.weights).map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32)).sum();
        prop_assert!((q - exact).abs() <= 1e-13 * exact.max(1e-3), "{} vs {}", q, exact);
    }

    #[test]
    fn element_nodality(family_ix in 0usize..5, k in 1usize..=4) {
        let family = [ElementFamily::LagrangeTri, ElementFamily::LagrangeQuad, ElementFamily::DiscLagrangeTri, ElementFamily::BdmTri, ElementFamily::RtTri][family_ix];
        let el = make_element(family, k).unwrap();
        let d = el.dual_matrix();
        let tol = 1e-10 * el.coefficient_scale().max(1.0);
        prop_assert!(d.max_abs_diff(&DenseMatrix::identity(el.ndofs())) <= tol);
    }

    #[test]
    fn fgmres_monotone_and_finite(n in 2usize..24, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = DenseMatrix::from_fn(n, n, |i, j| if i == j { n as f64 } else { rng.gen_range(-1.0..1.0) });
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (x, rep) = fgmres(&a, &Identity(n), &b, 1e-12, n + 1, None);
        prop_assert!(rep.converged);
        prop_assert!(rep.iterations <= n);
        for w in rep.residual_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        let r: f64 = a.mul_vec(&x).iter().zip(&b).map(|(ax, bi)| (ax - bi).powi(2)).sum::<f64>().sqrt();
        let bn: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(r <= 1e-10 * bn);
    }

    #[test]
    fn projector_idempotent(n in 2usize..30, m in 1usize..3, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        prop_assume!(m < n);
        let basis: Vec<Vec<f64>> = (0..m).map(|i| (0..n).map(|j| if j == i { 1.0 } else { rng.gen_range(-0.1..0.1) }).collect()).collect();
        let p = NullspaceProjector::new(&basis);
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        p.project(&mut x);
        let once = x.clone();
        p.project(&mut x);
        for (a, b) in once.iter().zip(&x) {
            prop_assert!((a - b).abs() <= 1e-13);
        }
        for v in &basis {
            let d: f64 = v.iter().zip(&once).map(|(a, b)| a * b).sum();
            prop_assert!(d.abs() <= 1e-12);
        }
    }

    #[test]
    fn chebyshev_degree_one_is_scaled_richardson(n in 2usize..12, lambda in 1.0f64..4.0, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = DenseMatrix::from_fn(n, n, |i, j| if i == j { rng.gen_range(0.5..1.0) } else { 0.0 });
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let params = ChebyshevParams::new(lambda, 1, ChebyMode::Degree);
        let mut x = x0.clone();
        chebyshev(&a, &Identity(n), &params, &b, &mut x);
        let theta = 0.5 * (params.lower + params.upper);
        let ax = a.mul_vec(&x0);
        for i in 0..n {
            let expect = x0[i] + (b[i] - ax[i]) / theta;
            prop_assert!((x[i] - expect).abs() <= 1e-13 * (1.0 + expect.abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn patches_partition_pressure_and_cover(case in case_strategy()) {
        let (case, k) = case;
        let sys = small_system(case, k);
        let set = build_patches(&sys, Weighting::InverseMultiplicity).unwrap();
        let off = sys.space.pressure_offset();
        let mut seen_p = vec![0usize; sys.dim() - off];
        let mut seen_v = vec![false; off];
        for p in &set.patches {
            for &d in p.pressure_dofs() {
                seen_p[d - off] += 1;
            }
            for &d in p.velocity_dofs() {
                seen_v[d] = true;
            }
        }
        prop_assert!(seen_p.iter().all(|&c| c == 1));
        for (d, seen) in seen_v.iter().enumerate() {
            prop_assert_eq!(*seen, !set.constrained[d]);
        }
    }

    #[test]
    fn additive_vanka_is_linear(case in case_strategy(), a in -2.0f64..2.0, b in -2.0f64..2.0, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let (case, k) = case;
        let sys = small_system(case, k);
        let set = build_patches(&sys, Weighting::InverseMultiplicity).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = sys.dim();
        let r1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r2: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mix: Vec<f64> = r1.iter().zip(&r2).map(|(x, y)| a * x + b * y).collect();
        let (z1, z2, zm) = (apply_additive(&set, &r1), apply_additive(&set, &r2), apply_additive(&set, &mix));
        let scale = z1.iter().chain(&z2).fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            prop_assert!((zm[i] - a * z1[i] - b * z2[i]).abs() <= 1e-10 * scale);
        }
    }
}
