use crate::error::{Error, Result};
use crate::meshtopo::CellShape;

/// Quadrature points and weights on a reference domain.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Polynomials of total (triangle) or per-variable (square) degree up to
    /// this are integrated exactly.
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Maximum supported degree.
pub const MAX_DEGREE: usize = 20;

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_01(npts: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(npts >= 1);
    let n = npts;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        // Newton from the Tricomi initial guess
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, t);
            let dt = p / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, t);
        x[i] = 0.5 * (1.0 - t);
        w[i] = 1.0 / ((1.0 - t * t) * dp * dp);
    }
    (x, w)
}

/// Legendre polynomial `P_n(t)` and its derivative on `[-1, 1]`.
pub fn legendre_with_derivative(n: usize, t: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, t);
    let (mut d0, mut d1) = (0.0, 1.0);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
        let d2 = d0 + (2.0 * kf - 1.0) * p1;
        p0 = p1;
        p1 = p2;
        d0 = d1;
        d1 = d2;
    }
    (p1, d1)
}

/// Rule exact to `degree` on the reference triangle (unit right triangle)
/// or the unit square.
pub fn make_quadrature(shape: CellShape, degree: usize) -> Result<QuadratureRule> {
    if degree > MAX_DEGREE {
        return Err(Error::UnsupportedQuadrature(degree));
    }
    Ok(match shape {
        CellShape::Quadrilateral => {
            let (x, w) = gauss_legendre_01(degree / 2 + 1);
            let mut points = Vec::with_capacity(x.len() * x.len());
            let mut weights = Vec::with_capacity(x.len() * x.len());
            for (yj, wj) in x.iter().zip(&w) {
                for (xi, wi) in x.iter().zip(&w) {
                    points.push([*xi, *yj]);
                    weights.push(wi * wj);
                }
            }
            QuadratureRule { points, weights, degree }
        }
        CellShape::Triangle => {
            // Collapsed (Duffy) map (u, v) -> (u, v (1 - u)), Jacobian 1 - u.
            let (xu, wu) = gauss_legendre_01((degree + 1) / 2 + 1);
            let (xv, wv) = gauss_legendre_01(degree / 2 + 1);
            let mut points = Vec::with_capacity(xu.len() * xv.len());
            let mut weights = Vec::with_capacity(xu.len() * xv.len());
            for (u, wui) in xu.iter().zip(&wu) {
                for (v, wvj) in xv.iter().zip(&wv) {
                    points.push([*u, v * (1.0 - u)]);
                    weights.push(wui * wvj * (1.0 - u));
                }
            }
            QuadratureRule { points, weights, degree }
        }
    })
}

/// Gauss-Legendre rule on `[0, 1]` exact to `degree`.
pub fn edge_quadrature(degree: usize) -> (Vec<f64>, Vec<f64>) {
    gauss_legendre_01(degree / 2 + 1)
}
