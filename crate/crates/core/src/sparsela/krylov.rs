//! Flexible GMRES, Arnoldi eigenvalue estimation and nullspace projection.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dense::DenseMatrix;
use super::sparse::CsrMatrix;

/// A linear map `y = Op(x)` on vectors of length `dim`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.spmv(x, y)
    }
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
}

/// The identity map, used as "no preconditioner".
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x)
    }
}

/// Wraps a closure as an operator.
pub struct FnOperator<F: Fn(&[f64], &mut [f64])> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Orthogonal projector `I - QQᵀ` onto the complement of a span.
#[derive(Debug, Clone)]
pub struct NullspaceProjector {
    basis: Vec<Vec<f64>>,
}

impl NullspaceProjector {
    /// Orthonormalizes the given (linearly independent) vectors.
    pub fn new(vectors: &[Vec<f64>]) -> Self {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
        for v in vectors {
            let mut q = v.clone();
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(b, &q);
                    axpy(-c, b, &mut q);
                }
            }
            let nq = norm2(&q);
            assert!(nq > 0.0, "nullspace basis vectors must be linearly independent");
            q.iter_mut().for_each(|x| *x /= nq);
            basis.push(q);
        }
        Self { basis }
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn project(&self, x: &mut [f64]) {
        for b in &self.basis {
            let c = dot(b, x);
            axpy(-c, b, x);
        }
    }
}

/// Outcome of a Krylov solve.
#[derive(Debug, Clone, PartialEq)]
pub struct KrylovReport {
    pub iterations: usize,
    /// Estimated relative residual `‖r‖/‖b‖` at exit.
    pub final_relative_residual: f64,
    pub converged: bool,
    /// Set when the Arnoldi process broke down (the Krylov space became invariant).
    pub breakdown: bool,
    /// Relative residual after each iteration, starting with 1 for the zero guess.
    pub residual_history: Vec<f64>,
}

/// Unrestarted flexible GMRES from a zero initial guess.
#[derive(Debug, Clone)]
pub struct Fgmres {
    pub rtol: f64,
    pub max_it: usize,
}

impl Fgmres {
    pub fn new(rtol: f64, max_it: usize) -> Self {
        Self { rtol, max_it }
    }

    pub fn solve(
        &self,
        op: &dyn LinearOperator,
        pc: &dyn LinearOperator,
        b: &[f64],
        nullspace: Option<&NullspaceProjector>,
    ) -> (Vec<f64>, KrylovReport) {
        let (x, report, _) = self.solve_with_snapshots(op, pc, b, nullspace, &[]);
        (x, report)
    }

    /// Like [`Fgmres::solve`], additionally returning the iterate at the first
    /// iteration whose relative residual falls to or below each of the given
    /// (decreasing) thresholds. Thresholds never reached yield `None`.
    pub fn solve_with_snapshots(
        &self,
        op: &dyn LinearOperator,
        pc: &dyn LinearOperator,
        b: &[f64],
        nullspace: Option<&NullspaceProjector>,
        thresholds: &[f64],
    ) -> (Vec<f64>, KrylovReport, Vec<Option<(usize, Vec<f64>)>>) {
        let n = op.dim();
        assert_eq!(b.len(), n);
        let project = |v: &mut [f64]| {
            if let Some(p) = nullspace {
                p.project(v)
            }
        };
        let mut snaps: Vec<Option<(usize, Vec<f64>)>> = vec![None; thresholds.len()];
        let mut next_snap = 0;

        let mut r0 = b.to_vec();
        project(&mut r0);
        let beta = norm2(&r0);
        if beta == 0.0 {
            for s in snaps.iter_mut() {
                *s = Some((0, vec![0.0; n]));
            }
            let report = KrylovReport {
                iterations: 0,
                final_relative_residual: 0.0,
                converged: true,
                breakdown: false,
                residual_history: vec![0.0],
            };
            return (vec![0.0; n], report, snaps);
        }

        let m = self.max_it;
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        // Column-wise Hessenberg after Givens rotation (upper triangular R).
        let mut r: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        v.push(r0.iter().map(|x| x / beta).collect());

        let mut history = vec![1.0];
        let mut converged = false;
        let mut breakdown = false;
        let mut its = 0;

        while its < m {
            let j = its;
            let mut zj = vec![0.0; n];
            pc.apply(&v[j], &mut zj);
            let mut w = vec![0.0; n];
            op.apply(&zj, &mut w);
            project(&mut w);
            let wnorm0 = norm2(&w);
            let mut h = vec![0.0; j + 2];
            for i in 0..=j {
                h[i] = dot(&v[i], &w);
                axpy(-h[i], &v[i], &mut w);
            }
            // one reorthogonalization pass
            for i in 0..=j {
                let c = dot(&v[i], &w);
                h[i] += c;
                axpy(-c, &v[i], &mut w);
            }
            let hn = norm2(&w);
            h[j + 1] = hn;

            for i in 0..j {
                let t = cs[i] * h[i] + sn[i] * h[i + 1];
                h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
                h[i] = t;
            }
            let denom = h[j].hypot(h[j + 1]);
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (h[j] / denom, h[j + 1] / denom) };
            h[j] = c * h[j] + s * h[j + 1];
            h[j + 1] = 0.0;
            g[j + 1] = -s * g[j];
            g[j] *= c;
            cs.push(c);
            sn.push(s);
            h.truncate(j + 1);
            r.push(h);
            z.push(zj);
            its += 1;

            let rel = g[its].abs() / beta;
            history.push(rel);

            while next_snap < thresholds.len() && rel <= thresholds[next_snap] {
                let x = combine(&r, &g, &z, its, n, &project);
                snaps[next_snap] = Some((its, x));
                next_snap += 1;
            }
            if rel <= self.rtol {
                converged = true;
                break;
            }
            if hn <= 1e-14 * wnorm0.max(f64::MIN_POSITIVE) {
                breakdown = true;
                converged = true;
                break;
            }
            v.push(w.iter().map(|x| x / hn).collect());
        }

        let x = combine(&r, &g, &z, its, n, &project);
        let report = KrylovReport {
            iterations: its,
            final_relative_residual: *history.last().unwrap(),
            converged,
            breakdown,
            residual_history: history,
        };
        (x, report, snaps)
    }
}

fn combine(
    r: &[Vec<f64>],
    g: &[f64],
    z: &[Vec<f64>],
    k: usize,
    n: usize,
    project: &dyn Fn(&mut [f64]),
) -> Vec<f64> {
    let mut y = g[..k].to_vec();
    for i in (0..k).rev() {
        let mut s = y[i];
        for jj in i + 1..k {
            s -= r[jj][i] * y[jj];
        }
        y[i] = if r[i][i] != 0.0 { s / r[i][i] } else { 0.0 };
    }
    let mut x = vec![0.0; n];
    for (zj, &yj) in z.iter().zip(&y) {
        axpy(yj, zj, &mut x);
    }
    project(&mut x);
    x
}

/// Convenience wrapper around [`Fgmres::solve`].
pub fn fgmres(
    op: &dyn LinearOperator,
    pc: &dyn LinearOperator,
    b: &[f64],
    rtol: f64,
    max_it: usize,
    nullspace: Option<&NullspaceProjector>,
) -> (Vec<f64>, KrylovReport) {
    Fgmres::new(rtol, max_it).solve(op, pc, b, nullspace)
}

/// Largest-magnitude Ritz value of the right-preconditioned operator
/// `op · pc` after `m` Arnoldi steps from a seeded random start vector.
pub fn estimate_lambda_max(op: &dyn LinearOperator, pc: &dyn LinearOperator, m: usize, seed: u64) -> f64 {
    assert!(m >= 1);
    let n = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let nv = norm2(&v0);
    v0.iter_mut().for_each(|x| *x /= nv);

    let mut v = vec![v0];
    let mut h = DMatrix::<f64>::zeros(m + 1, m);
    let mut steps = 0;
    let mut tmp = vec![0.0; n];
    for j in 0..m {
        pc.apply(&v[j], &mut tmp);
        let mut w = vec![0.0; n];
        op.apply(&tmp, &mut w);
        let wn0 = norm2(&w);
        for i in 0..=j {
            let c = dot(&v[i], &w);
            h[(i, j)] = c;
            axpy(-c, &v[i], &mut w);
        }
        for i in 0..=j {
            let c = dot(&v[i], &w);
            h[(i, j)] += c;
            axpy(-c, &v[i], &mut w);
        }
        let hn = norm2(&w);
        h[(j + 1, j)] = hn;
        steps = j + 1;
        if hn <= 1e-14 * wn0.max(f64::MIN_POSITIVE) {
            break;
        }
        v.push(w.iter().map(|x| x / hn).collect());
    }
    let hs = h.view((0, 0), (steps, steps)).into_owned();
    hs.complex_eigenvalues().iter().fold(0.0, |acc: f64, z| acc.max(z.norm()))
}
