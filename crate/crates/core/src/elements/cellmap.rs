use super::{ReferenceElement, Tabulation};
use crate::error::{Error, Result};
use crate::meshtopo::{CellShape, Mesh};

/// How reference basis functions are carried to physical cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    /// Scalar pullback: values unchanged, gradients by `J^{-T}`.
    Identity,
    /// Contravariant Piola: `v = J v̂ / det J`.
    ContravariantPiola,
}

/// Geometry of the reference-to-physical map at one reference point.
#[derive(Debug, Clone, Copy)]
pub struct MapPoint {
    pub x: [f64; 2],
    /// `jac[r][c] = dx_r / dx̂_c`
    pub jac: [[f64; 2]; 2],
    pub det: f64,
    pub jinv: [[f64; 2]; 2],
}

/// Affine (triangle) or bilinear (quadrilateral) map of one cell.
#[derive(Debug, Clone)]
pub struct CellMap {
    pub cell: usize,
    pub shape: CellShape,
    corners: Vec<[f64; 2]>,
}

impl CellMap {
    pub fn new(mesh: &Mesh, cell: usize) -> Result<Self> {
        Self::from_corners(cell, mesh.shape(), mesh.cell_corners(cell))
    }

    pub fn from_corners(cell: usize, shape: CellShape, corners: Vec<[f64; 2]>) -> Result<Self> {
        let map = Self { cell, shape, corners };
        let probes: &[[f64; 2]] = match shape {
            CellShape::Triangle => &[[1.0 / 3.0, 1.0 / 3.0]],
            CellShape::Quadrilateral => &[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        };
        for &p in probes {
            let det = map.eval(p).det;
            if det.is_nan() || det <= 0.0 {
                return Err(Error::DegenerateCell { cell, det });
            }
        }
        Ok(map)
    }

    pub fn corners(&self) -> &[[f64; 2]] {
        &self.corners
    }

    pub fn is_affine(&self) -> bool {
        match self.shape {
            CellShape::Triangle => true,
            CellShape::Quadrilateral => {
                let c = &self.corners;
                // parallelogram: c0 + c2 = c1 + c3
                ((c[0][0] + c[2][0]) - (c[1][0] + c[3][0])).abs() < 1e-14
                    && ((c[0][1] + c[2][1]) - (c[1][1] + c[3][1])).abs() < 1e-14
            }
        }
    }

    pub fn eval(&self, xh: [f64; 2]) -> MapPoint {
        let c = &self.corners;
        let (x, jac) = match self.shape {
            CellShape::Triangle => {
                let j = [[c[1][0] - c[0][0], c[2][0] - c[0][0]], [c[1][1] - c[0][1], c[2][1] - c[0][1]]];
                let x = [
                    c[0][0] + j[0][0] * xh[0] + j[0][1] * xh[1],
                    c[0][1] + j[1][0] * xh[0] + j[1][1] * xh[1],
                ];
                (x, j)
            }
            CellShape::Quadrilateral => {
                let (s, t) = (xh[0], xh[1]);
                let n = [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t];
                let ds = [-(1.0 - t), 1.0 - t, t, -t];
                let dt = [-(1.0 - s), -s, s, 1.0 - s];
                let mut x = [0.0; 2];
                let mut j = [[0.0; 2]; 2];
                for i in 0..4 {
                    for r in 0..2 {
                        x[r] += n[i] * c[i][r];
                        j[r][0] += ds[i] * c[i][r];
                        j[r][1] += dt[i] * c[i][r];
                    }
                }
                (x, j)
            }
        };
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let jinv = [[jac[1][1] / det, -jac[0][1] / det], [-jac[1][0] / det, jac[0][0] / det]];
        MapPoint { x, jac, det, jinv }
    }

    pub fn eval_many(&self, points: &[[f64; 2]]) -> Vec<MapPoint> {
        points.iter().map(|&p| self.eval(p)).collect()
    }

    /// Reference coordinates of a physical point (Newton for bilinear maps).
    pub fn inverse(&self, x: [f64; 2]) -> [f64; 2] {
        let mut xh = match self.shape {
            CellShape::Triangle => [1.0 / 3.0, 1.0 / 3.0],
            CellShape::Quadrilateral => [0.5, 0.5],
        };
        for _ in 0..50 {
            let m = self.eval(xh);
            let r = [x[0] - m.x[0], x[1] - m.x[1]];
            let d = [m.jinv[0][0] * r[0] + m.jinv[0][1] * r[1], m.jinv[1][0] * r[0] + m.jinv[1][1] * r[1]];
            xh[0] += d[0];
            xh[1] += d[1];
            if d[0].abs() + d[1].abs() < 1e-15 {
                break;
            }
        }
        xh
    }
}

/// Carry a reference tabulation to the physical cell.
///
/// Identity-mapped values are unchanged and gradients become `J^{-T} ∇̂`.
/// Piola-mapped values become `J v̂ / det J` and gradients
/// `J (∇̂ v̂) J^{-1} / det J` (exact for affine maps, which is the only case
/// H(div) elements are used on).
pub fn push_forward(element: &ReferenceElement, maps: &[MapPoint], reference: &Tabulation) -> Result<Tabulation> {
    assert_eq!(maps.len(), reference.npts);
    let nd = reference.ndofs;
    let vs = reference.value_size;
    let mut out = Tabulation::zeros(reference.npts, nd, vs);
    for (p, m) in maps.iter().enumerate() {
        if m.det.is_nan() || m.det <= 0.0 {
            return Err(Error::DegenerateCell { cell: usize::MAX, det: m.det });
        }
        for j in 0..nd {
            match element.map_kind() {
                MapKind::Identity => {
                    for c in 0..vs {
                        out.values[(p * nd + j) * vs + c] = reference.value(p, j, c);
                        let g = [reference.grad(p, j, c, 0), reference.grad(p, j, c, 1)];
                        for d in 0..2 {
                            out.grads[((p * nd + j) * vs + c) * 2 + d] = m.jinv[0][d] * g[0] + m.jinv[1][d] * g[1];
                        }
                    }
                }
                MapKind::ContravariantPiola => {
                    let inv_det = 1.0 / m.det;
                    let v = [reference.value(p, j, 0), reference.value(p, j, 1)];
                    for c in 0..2 {
                        out.values[(p * nd + j) * 2 + c] = inv_det * (m.jac[c][0] * v[0] + m.jac[c][1] * v[1]);
                    }
                    // G = J (∇̂v̂) J^{-1} / det
                    let mut jg = [[0.0; 2]; 2];
                    for c in 0..2 {
                        for f in 0..2 {
                            jg[c][f] = m.jac[c][0] * reference.grad(p, j, 0, f) + m.jac[c][1] * reference.grad(p, j, 1, f);
                        }
                    }
                    for c in 0..2 {
                        for d in 0..2 {
                            out.grads[((p * nd + j) * 2 + c) * 2 + d] =
                                inv_det * (jg[c][0] * m.jinv[0][d] + jg[c][1] * m.jinv[1][d]);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Pull a physical field value back to the reference cell for applying
/// reference functionals: `v` for identity maps, `det J · J^{-1} v` for Piola.
pub fn pull_back(kind: MapKind, m: &MapPoint, v: &[f64]) -> [f64; 2] {
    match kind {
        MapKind::Identity => [v[0], if v.len() > 1 { v[1] } else { 0.0 }],
        MapKind::ContravariantPiola => [
            m.det * (m.jinv[0][0] * v[0] + m.jinv[0][1] * v[1]),
            m.det * (m.jinv[1][0] * v[0] + m.jinv[1][1] * v[1]),
        ],
    }
}
