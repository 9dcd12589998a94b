//! Dense eigen-decomposition of small general complex matrices.
//!
//! Non-Hermitian blocks go through a complex Schur form followed by
//! triangular back-substitution; left eigenvectors are the rows of the
//! inverse eigenvector matrix, so `left_i . right_j = delta_ij`. Matrices that
//! split into independent blocks (after a permutation) are decomposed block by
//! block, which keeps exact degeneracies between blocks harmless.

use nalgebra::{Schur, SymmetricEigen};

use crate::error::{Error, Result};
use crate::hilbert::hermiticity_defect;
use crate::{CMatrix, C64};

/// Right eigenvectors as columns of `right`, left eigenvectors as rows of `left`.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<C64>,
    pub right: CMatrix,
    pub left: CMatrix,
}

impl EigenDecomposition {
    /// `right * diag(values) * left`.
    pub fn reconstruct(&self) -> CMatrix {
        let diag = CMatrix::from_diagonal(&crate::CVector::from_column_slice(&self.values));
        &self.right * diag * &self.left
    }
}

const CONDITION_LIMIT: f64 = 1e12;

/// Decomposes one dense block.
pub fn eigen_decompose(m: &CMatrix) -> Result<EigenDecomposition> {
    if !m.is_square() {
        return Err(Error::Decomposition("matrix is not square".into()));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(EigenDecomposition { values: vec![], right: CMatrix::zeros(0, 0), left: CMatrix::zeros(0, 0) });
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Decomposition("non-finite entries".into()));
    }
    let scale = m.norm().max(f64::MIN_POSITIVE);
    if hermiticity_defect(m) <= 1e-14 * scale {
        let herm = (m + m.adjoint()).map(|z| z * 0.5);
        let eig = SymmetricEigen::new(herm);
        let values = eig.eigenvalues.iter().map(|&x| C64::new(x, 0.0)).collect();
        let left = eig.eigenvectors.adjoint();
        return Ok(EigenDecomposition { values, right: eig.eigenvectors, left });
    }

    let schur = Schur::try_new(m.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Decomposition("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let values: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();

    // Eigenvectors of the triangular factor by back-substitution.
    let small = f64::EPSILON * scale;
    let mut y = CMatrix::zeros(n, n);
    for k in 0..n {
        y[(k, k)] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = C64::new(0.0, 0.0);
            for j in i + 1..=k {
                acc += t[(i, j)] * y[(j, k)];
            }
            let mut denom = t[(i, i)] - t[(k, k)];
            if denom.norm() < small {
                denom = C64::new(small, 0.0);
            }
            y[(i, k)] = -acc / denom;
        }
    }
    let mut right = q * y;
    for mut col in right.column_iter_mut() {
        let norm = col.norm();
        col.unscale_mut(norm);
    }
    let left = right
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Decomposition("eigenvector matrix is singular (defective matrix)".into()))?;
    let condition = right.norm() * left.norm();
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(Error::Decomposition(format!("eigenvector condition number {condition:.3e}: matrix is defective to tolerance")));
    }
    Ok(EigenDecomposition { values, right, left })
}

/// Groups indices into connected components of the coupling graph
/// `|m_ij| + |m_ji| > tol`.
pub fn coupled_blocks(m: &CMatrix, tol: f64) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if m[(i, j)].norm() + m[(j, i)].norm() > tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if root_slot[r] == usize::MAX {
            root_slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_slot[r]].push(i);
    }
    groups
}

/// Full decomposition assembled from independent blocks. Couplings below
/// `1e-13 * |m|` are treated as structural zeros.
pub fn eigen_decompose_blocked(m: &CMatrix) -> Result<EigenDecomposition> {
    let n = m.nrows();
    let tol = 1e-13 * m.norm();
    let mut values = Vec::with_capacity(n);
    let mut right = CMatrix::zeros(n, n);
    let mut left = CMatrix::zeros(n, n);
    let mut col = 0;
    for block in coupled_blocks(m, tol) {
        let sub = CMatrix::from_fn(block.len(), block.len(), |a, b| m[(block[a], block[b])]);
        let dec = eigen_decompose(&sub)?;
        for (k, &v) in dec.values.iter().enumerate() {
            values.push(v);
            for (a, &ia) in block.iter().enumerate() {
                right[(ia, col)] = dec.right[(a, k)];
                left[(col, ia)] = dec.left[(k, a)];
            }
            col += 1;
        }
    }
    Ok(EigenDecomposition { values, right, left })
}
