//! Multipole moments `rho_LM(F,F') = Tr(T_LM(F,F')^dag rho)`.

use std::collections::BTreeMap;

use crate::angular::{HalfInt, TensorBasis, TensorKey};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::hilbert::DensityMatrix;
use crate::{CMatrix, C64};

/// Coefficients of a matrix in the tensor basis, one per `(L, M, F, F')`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MultipoleSet {
    pub entries: BTreeMap<TensorKey, C64>,
}

impl MultipoleSet {
    pub fn get(&self, l: i32, m: i32, f: HalfInt, fp: HalfInt) -> Option<C64> {
        self.entries.get(&TensorKey::new(l, m, f, fp)).copied()
    }

    pub fn insert(&mut self, key: TensorKey, value: C64) {
        self.entries.insert(key, value);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `sum |rho_LM(F,F')|^2`, equal to `Tr(rho^2)` for a complete set.
    pub fn norm_sqr(&self) -> f64 {
        self.entries.values().map(|z| z.norm_sqr()).sum()
    }

    /// `a * self + b * other` over the union of keys.
    pub fn combine(&self, a: f64, other: &MultipoleSet, b: f64) -> MultipoleSet {
        let mut entries = BTreeMap::new();
        for (&k, &v) in &self.entries {
            *entries.entry(k).or_insert(C64::new(0.0, 0.0)) += v * a;
        }
        for (&k, &v) in &other.entries {
            *entries.entry(k).or_insert(C64::new(0.0, 0.0)) += v * b;
        }
        MultipoleSet { entries }
    }

    /// Largest violation of `rho_LM(FF')^* = (-1)^(F-F'+M) rho_L,-M(F'F)`.
    pub fn reality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (key, value) in &self.entries {
            let partner = TensorKey::new(key.l, -key.m, key.fp, key.f);
            let other = self.entries.get(&partner).copied().unwrap_or_default();
            let exponent = (key.f - key.fp).twice() / 2 + key.m;
            let sign = if exponent.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            worst = worst.max((value.conj() - other * sign).norm());
        }
        worst
    }
}

pub fn decompose(rho: &DensityMatrix, basis: &TensorBasis) -> MultipoleSet {
    decompose_matrix(rho.matrix(), basis)
}

pub fn decompose_matrix(x: &CMatrix, basis: &TensorBasis) -> MultipoleSet {
    let entries = basis.iter().map(|t| (t.key(), overlap(&t.matrix, x))).collect();
    MultipoleSet { entries }
}

/// `Tr(t^dag x)` without forming the product.
pub(crate) fn overlap(t: &CMatrix, x: &CMatrix) -> C64 {
    t.iter().zip(x.iter()).map(|(a, b)| a.conj() * b).sum()
}

/// `sum rho_LM(F,F') T_LM(F,F')`; every basis key must be present.
pub fn reconstruct_matrix(ms: &MultipoleSet, basis: &TensorBasis) -> Result<CMatrix> {
    let dim = basis[0].matrix.nrows();
    let mut out = CMatrix::zeros(dim, dim);
    for t in basis.iter() {
        let Some(&c) = ms.entries.get(&t.key()) else {
            return Err(missing(t.key()));
        };
        if c != C64::new(0.0, 0.0) {
            out += t.matrix.map(|z| z * c);
        }
    }
    Ok(out)
}

/// Reconstructs and validates a density matrix.
pub fn reconstruct(ms: &MultipoleSet, basis: &TensorBasis) -> Result<DensityMatrix> {
    DensityMatrix::new(reconstruct_matrix(ms, basis)?)
}

fn missing(key: TensorKey) -> Error {
    Error::MissingMultipole { l: key.l, m: key.m, f: key.f.to_string(), fp: key.fp.to_string() }
}

/// `rho_LM(F,F')(t)` for every sample of a trajectory.
pub fn component_series(traj: &Trajectory, basis: &TensorBasis, l: i32, m: i32, f: HalfInt, fp: HalfInt) -> Result<Vec<C64>> {
    let key = TensorKey::new(l, m, f, fp);
    let t = basis.get(key).ok_or_else(|| missing(key))?;
    Ok(traj.states.iter().map(|s| overlap(&t.matrix, s.matrix())).collect())
}
