//! Vanka patches and additive subspace correction.
//!
//! Two patch families are provided. Taylor-Hood spaces use one patch per
//! pressure-carrying mesh entity, holding that entity's pressure DoFs and
//! every velocity DoF on the closure of its star. H(div) spaces use one
//! patch per cell with the cell's pressures and the velocity DoFs on the
//! closure of the cell and its edge neighbours.
//!
//! Patch matrices are principal submatrices of the assembled operator and
//! are factored densely. Strongly constrained velocity DoFs never enter a
//! patch; their rows are identity, so the additive operator passes their
//! residual through unchanged.

use std::fmt;
use std::str::FromStr;

use crate::assembly::BlockSystem;
use crate::error::{Error, Result};
use crate::meshtopo::{closure, star, EntityRef};
use crate::spaces::{MixedSpace, StrongBc};
use crate::sparsela::{lu_factor, CsrMatrix, DenseFactorization, LinearOperator};

/// Velocity weights in the additive sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// `1 / (number of patches containing the DoF)`.
    #[default]
    InverseMultiplicity,
    Unit,
}

impl Weighting {
    pub fn name(self) -> &'static str {
        match self {
            Weighting::InverseMultiplicity => "invmult",
            Weighting::Unit => "unit",
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Weighting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "invmult" => Ok(Weighting::InverseMultiplicity),
            "unit" => Ok(Weighting::Unit),
            _ => Err(Error::InvalidConfig(format!("unknown weighting '{s}' (expected invmult or unit)"))),
        }
    }
}

/// One subspace of the decomposition.
#[derive(Debug, Clone)]
pub struct Patch {
    /// Entity the patch is built around.
    pub entity: EntityRef,
    /// Global indices: velocity DoFs, then pressure DoFs, each sorted.
    pub dofs: Vec<usize>,
    pub num_velocity: usize,
    /// Additive weight per entry of `dofs`.
    pub weights: Vec<f64>,
    factor: Option<DenseFactorization>,
}

impl Patch {
    pub fn new(entity: EntityRef, mut velocity: Vec<usize>, mut pressure: Vec<usize>) -> Self {
        velocity.sort_unstable();
        velocity.dedup();
        pressure.sort_unstable();
        pressure.dedup();
        let num_velocity = velocity.len();
        velocity.extend(pressure);
        let n = velocity.len();
        Self { entity, dofs: velocity, num_velocity, weights: vec![1.0; n], factor: None }
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }
    pub fn velocity_dofs(&self) -> &[usize] {
        &self.dofs[..self.num_velocity]
    }
    pub fn pressure_dofs(&self) -> &[usize] {
        &self.dofs[self.num_velocity..]
    }
    pub fn is_factored(&self) -> bool {
        self.factor.is_some()
    }
}

/// A full space decomposition with its additive weights.
#[derive(Debug, Clone)]
pub struct PatchSet {
    pub patches: Vec<Patch>,
    /// Patches containing each global DoF.
    pub multiplicity: Vec<usize>,
    /// Strongly constrained DoFs (identity rows).
    pub constrained: Vec<bool>,
    pub weighting: Weighting,
    dim: usize,
}

impl PatchSet {
    /// Assemble a set from patches over a system of dimension `dim`;
    /// patches left empty are dropped.
    pub fn from_patches(patches: Vec<Patch>, dim: usize, constrained: Vec<bool>, weighting: Weighting) -> Self {
        let mut patches: Vec<Patch> = patches.into_iter().filter(|p| !p.is_empty()).collect();
        let mut multiplicity = vec![0; dim];
        for p in &patches {
            for &d in &p.dofs {
                multiplicity[d] += 1;
            }
        }
        for p in &mut patches {
            for (i, &d) in p.dofs.iter().enumerate() {
                p.weights[i] = if i < p.num_velocity && weighting == Weighting::InverseMultiplicity {
                    1.0 / multiplicity[d] as f64
                } else {
                    1.0
                };
            }
        }
        Self { patches, multiplicity, constrained, weighting, dim }
    }

    /// Number of patches `J`.
    pub fn len(&self) -> usize {
        self.patches.len()
    }
    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// LU-factor every patch submatrix of `matrix`.
    pub fn factor(&mut self, matrix: &CsrMatrix) -> Result<()> {
        for (i, p) in self.patches.iter_mut().enumerate() {
            let local = matrix.extract_submatrix(&p.dofs, &p.dofs);
            let f = lu_factor(&local).map_err(|e| Error::SingularPatch {
                patch: i,
                entity: p.entity.to_string(),
                source: Box::new(e),
            })?;
            p.factor = Some(f);
        }
        Ok(())
    }

    /// `z = sum_i R_i^T W_i A_i^{-1} R_i r`, plus `z = r` on constrained DoFs.
    pub fn apply_into(&self, r: &[f64], z: &mut [f64]) {
        z.iter_mut().for_each(|v| *v = 0.0);
        let mut local = Vec::new();
        let mut sol = Vec::new();
        for p in &self.patches {
            let f = p.factor.as_ref().expect("patch set must be factored before use");
            local.clear();
            local.extend(p.dofs.iter().map(|&d| r[d]));
            sol.resize(local.len(), 0.0);
            f.solve_into(&local, &mut sol);
            for ((&d, &w), &s) in p.dofs.iter().zip(&p.weights).zip(&sol) {
                z[d] += w * s;
            }
        }
        for (i, &c) in self.constrained.iter().enumerate() {
            if c {
                z[i] = r[i];
            }
        }
    }
}

impl LinearOperator for PatchSet {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_into(x, y)
    }
}

fn unconstrained(dofs: Vec<usize>, mask: &[bool]) -> Vec<usize> {
    dofs.into_iter().filter(|&d| !mask[d]).collect()
}

/// Composite topological Vanka patches for Taylor-Hood spaces.
pub fn build_patches_taylor_hood(space: &MixedSpace, bc: &StrongBc, weighting: Weighting) -> PatchSet {
    let topo = &space.mesh().topology;
    let off = space.pressure_offset();
    let mask = bc.mask(space.dim());
    let mut patches = Vec::new();
    for dim in 0..3u8 {
        for index in 0..topo.count(dim) {
            let ent = EntityRef { dim, index };
            let pressure: Vec<usize> = space.pressure.entity_dofs(ent).into_iter().map(|d| d + off).collect();
            if pressure.is_empty() {
                continue;
            }
            let velocity: Vec<usize> = closure(topo, &star(topo, ent))
                .into_iter()
                .flat_map(|e| space.velocity.entity_dofs(e))
                .collect();
            patches.push(Patch::new(ent, unconstrained(velocity, &mask), pressure));
        }
    }
    PatchSet::from_patches(patches, space.dim(), mask, weighting)
}

/// Extended cell Vanka patches for H(div) velocity with discontinuous pressure.
pub fn build_patches_hdiv_extended(space: &MixedSpace, bc: &StrongBc, weighting: Weighting) -> PatchSet {
    let topo = &space.mesh().topology;
    let off = space.pressure_offset();
    let mask = bc.mask(space.dim());
    let mut patches = Vec::with_capacity(topo.num_cells());
    for c in 0..topo.num_cells() {
        let pressure: Vec<usize> = space.pressure.cell_dofs(c).into_iter().map(|d| d + off).collect();
        let mut cells = vec![EntityRef::cell(c)];
        cells.extend(topo.edge_neighbors(c).into_iter().map(EntityRef::cell));
        let velocity: Vec<usize> = closure(topo, &cells)
            .into_iter()
            .flat_map(|e| space.velocity.entity_dofs(e))
            .collect();
        patches.push(Patch::new(EntityRef::cell(c), unconstrained(velocity, &mask), pressure));
    }
    PatchSet::from_patches(patches, space.dim(), mask, weighting)
}

/// Build the patch family matching the system's discretization and factor it.
pub fn build_patches(system: &BlockSystem, weighting: Weighting) -> Result<PatchSet> {
    let mut set = if system.space.case.is_hdiv() {
        build_patches_hdiv_extended(&system.space, &system.bc, weighting)
    } else {
        build_patches_taylor_hood(&system.space, &system.bc, weighting)
    };
    set.factor(&system.matrix)?;
    Ok(set)
}

/// Factor the patches of a set against an assembled system.
pub fn factor_patches(mut set: PatchSet, system: &BlockSystem) -> Result<PatchSet> {
    set.factor(&system.matrix)?;
    Ok(set)
}

/// One additive Vanka application to a residual.
pub fn apply_additive(set: &PatchSet, r: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; r.len()];
    set.apply_into(r, &mut z);
    z
}
