//! Coupled ground-state space of an electron spin 1/2 and a nuclear spin `I`.
//!
//! Internally operators are assembled on the product space `nuclear (x)
//! electron` and rotated into the coupled `|F, m>` basis with
//! Clebsch-Gordan coefficients. Only the coupled basis is public.

use nalgebra::SymmetricEigen;

use crate::angular::{clebsch_gordan, HalfInt};
use crate::error::{Error, Result};
use crate::{CMatrix, C64};

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const POSITIVITY_TOL: f64 = -1e-9;

/// Spin operators and basis bookkeeping for one alkali isotope.
#[derive(Clone, Debug)]
pub struct SpinSystem {
    nuclear_spin: HalfInt,
    dim: usize,
    s_ops: [CMatrix; 3],
    i_ops: [CMatrix; 3],
    f_ops: [CMatrix; 3],
    i_dot_s: CMatrix,
    labels: Vec<(HalfInt, HalfInt)>,
    /// Columns are coupled states written in the product basis.
    to_product: CMatrix,
}

/// Nuclear spins this crate builds systems for (twice-values).
pub const SUPPORTED_TWICE_I: [i32; 5] = [1, 2, 3, 5, 7];

/// Builds the coupled-basis operators for nuclear spin `i`.
pub fn build_system(i: HalfInt) -> Result<SpinSystem> {
    if !SUPPORTED_TWICE_I.contains(&i.twice()) {
        return Err(Error::UnsupportedSpin(i.to_string()));
    }
    let n_nuc = i.multiplicity();
    let dim = 2 * n_nuc;
    let half = HalfInt::HALF;

    let (ix, iy, iz) = spin_matrices(i);
    let (sx, sy, sz) = spin_matrices(half);
    let id_n = CMatrix::identity(n_nuc, n_nuc);
    let id_e = CMatrix::identity(2, 2);

    let product_s = [id_n.kronecker(&sx), id_n.kronecker(&sy), id_n.kronecker(&sz)];
    let product_i = [ix.kronecker(&id_e), iy.kronecker(&id_e), iz.kronecker(&id_e)];

    // Product index = nuclear_index * 2 + electron_index; index 0 is the
    // largest projection in both factors.
    let mut labels = Vec::with_capacity(dim);
    let mut to_product = CMatrix::zeros(dim, dim);
    let manifolds = [i + half, i - half];
    for f in manifolds.into_iter().filter(|f| f.twice() >= 0) {
        for mf in f.projections() {
            let col = labels.len();
            for (a, mi) in i.projections().enumerate() {
                for (b, ms) in half.projections().enumerate() {
                    let cg = clebsch_gordan(i, half, mi, ms, f, mf);
                    to_product[(2 * a + b, col)] = C64::new(cg, 0.0);
                }
            }
            labels.push((f, mf));
        }
    }

    let rotate = |op: &CMatrix| to_product.adjoint() * op * &to_product;
    let s_ops = product_s.each_ref().map(rotate);
    let i_ops = product_i.each_ref().map(rotate);
    let f_ops = [0, 1, 2].map(|k| &s_ops[k] + &i_ops[k]);
    let i_dot_s = (0..3).fold(CMatrix::zeros(dim, dim), |acc, k| acc + &i_ops[k] * &s_ops[k]);

    Ok(SpinSystem { nuclear_spin: i, dim, s_ops, i_ops, f_ops, i_dot_s, labels, to_product })
}

fn spin_matrices(j: HalfInt) -> (CMatrix, CMatrix, CMatrix) {
    let n = j.multiplicity();
    let jv = j.value();
    let ms: Vec<f64> = j.projections().map(HalfInt::value).collect();
    let mut raise = CMatrix::zeros(n, n);
    for a in 1..n {
        let m = ms[a];
        raise[(a - 1, a)] = C64::new((jv * (jv + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
    }
    let lower = raise.adjoint();
    let jx = (&raise + &lower).map(|z| z * 0.5);
    let jy = (&raise - &lower).map(|z| z / C64::new(0.0, 2.0));
    let jz = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, ms.iter().map(|&m| C64::new(m, 0.0))));
    (jx, jy, jz)
}

impl SpinSystem {
    pub fn nuclear_spin(&self) -> HalfInt {
        self.nuclear_spin
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(S_x, S_y, S_z)` in the coupled basis.
    pub fn s_ops(&self) -> &[CMatrix; 3] {
        &self.s_ops
    }

    pub fn i_ops(&self) -> &[CMatrix; 3] {
        &self.i_ops
    }

    pub fn f_ops(&self) -> &[CMatrix; 3] {
        &self.f_ops
    }

    pub fn i_dot_s(&self) -> &CMatrix {
        &self.i_dot_s
    }

    /// `(F, m)` of every coupled basis state, upper manifold first.
    pub fn labels(&self) -> &[(HalfInt, HalfInt)] {
        &self.labels
    }

    /// Hyperfine manifolds present, upper first.
    pub fn manifolds(&self) -> Vec<HalfInt> {
        let mut out: Vec<HalfInt> = Vec::new();
        for &(f, _) in &self.labels {
            if out.last() != Some(&f) {
                out.push(f);
            }
        }
        out
    }

    pub fn upper_manifold(&self) -> HalfInt {
        self.labels[0].0
    }

    pub fn index_of(&self, f: HalfInt, m: HalfInt) -> Option<usize> {
        self.labels.iter().position(|&l| l == (f, m))
    }

    pub fn manifold_of(&self, index: usize) -> HalfInt {
        self.labels[index].0
    }

    /// Orthogonal projector onto manifold `f`.
    pub fn block_projector(&self, f: HalfInt) -> CMatrix {
        let d = self.dim;
        CMatrix::from_fn(d, d, |r, c| {
            if r == c && self.labels[r].0 == f {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// Spherical components `[S_-1, S_0, S_+1]` with `S_{+-1} = -+(S_x +- i S_y)/sqrt(2)`.
    pub fn s_spherical(&self) -> [CMatrix; 3] {
        let [sx, sy, sz] = &self.s_ops;
        let i = C64::new(0.0, 1.0);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let plus = (sx + sy.map(|z| z * i)).map(|z| -z * r);
        let minus = (sx - sy.map(|z| z * i)).map(|z| z * r);
        [minus, sz.clone(), plus]
    }

    pub(crate) fn coupled_to_product(&self, m: &CMatrix) -> CMatrix {
        &self.to_product * m * self.to_product.adjoint()
    }

    pub(crate) fn product_to_coupled(&self, m: &CMatrix) -> CMatrix {
        self.to_product.adjoint() * m * &self.to_product
    }

    fn check_dim(&self, m: &CMatrix) -> Result<()> {
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: m.nrows() });
        }
        Ok(())
    }
}

/// Largest entry of `m - m^dag`.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..m.nrows() {
        for c in r..m.ncols() {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

/// A validated density matrix on the coupled space.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    rho: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(rho: CMatrix) -> Result<Self> {
        if !rho.is_square() {
            return Err(Error::DimensionMismatch { expected: rho.nrows(), got: rho.ncols() });
        }
        let defect = hermiticity_defect(&rho);
        if defect > HERMITIAN_TOL {
            return Err(Error::NotHermitian(defect));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::BadTrace(tr.re));
        }
        let min = min_eigenvalue(&rho);
        if min < POSITIVITY_TOL {
            return Err(Error::NotPositive(min));
        }
        Ok(DensityMatrix { rho })
    }

    pub(crate) fn from_matrix_unchecked(rho: CMatrix) -> Self {
        DensityMatrix { rho }
    }

    pub fn maximally_mixed(system: &SpinSystem) -> Self {
        let d = system.dim();
        DensityMatrix { rho: CMatrix::identity(d, d).map(|z| z / d as f64) }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.rho
    }

    pub fn into_matrix(self) -> CMatrix {
        self.rho
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    pub fn expect(&self, op: &CMatrix) -> C64 {
        (&self.rho * op).trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.rho)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.rho)
    }
}

fn min_eigenvalue(m: &CMatrix) -> f64 {
    let herm = (m + m.adjoint()).map(|z| z * 0.5);
    SymmetricEigen::new(herm).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Nuclear part `alpha` and electronic parts `A_j` of a state, `rho = alpha + sum_j A_j S_j`.
///
/// All four operators are returned embedded in the coupled basis.
#[derive(Clone, Debug)]
pub struct AlphaDecomposition {
    pub alpha: CMatrix,
    pub a: [CMatrix; 3],
}

impl AlphaDecomposition {
    pub fn reconstruct(&self, system: &SpinSystem) -> CMatrix {
        let s = system.s_ops();
        (0..3).fold(self.alpha.clone(), |acc, j| acc + &self.a[j] * &s[j])
    }
}

/// Splits `rho` into its nuclear and electronic parts. Rejects non-Hermitian input.
pub fn decompose_alpha_a(rho: &CMatrix, system: &SpinSystem) -> Result<AlphaDecomposition> {
    system.check_dim(rho)?;
    let defect = hermiticity_defect(rho);
    if defect > HERMITIAN_TOL {
        return Err(Error::NotHermitian(defect));
    }
    let product = system.coupled_to_product(rho);
    let alpha = system.product_to_coupled(&embed_nuclear(&partial_trace_electron(&product, None), 0.5));
    let paulis = pauli_matrices();
    let a = paulis.each_ref().map(|sigma| {
        let reduced = partial_trace_electron(&product, Some(sigma));
        system.product_to_coupled(&embed_nuclear(&reduced, 1.0))
    });
    Ok(AlphaDecomposition { alpha, a })
}

/// `alpha(X) = Tr_e(X) (x) 1/2` in the coupled basis; linear, no validation.
pub(crate) fn alpha_part(x: &CMatrix, system: &SpinSystem) -> CMatrix {
    let product = system.coupled_to_product(x);
    system.product_to_coupled(&embed_nuclear(&partial_trace_electron(&product, None), 0.5))
}

/// `Tr_e(X (1 (x) weight))` on the product basis, or the plain partial trace.
fn partial_trace_electron(product: &CMatrix, weight: Option<&CMatrix>) -> CMatrix {
    let n = product.nrows() / 2;
    CMatrix::from_fn(n, n, |a, b| {
        let mut acc = C64::new(0.0, 0.0);
        for s in 0..2 {
            match weight {
                None => acc += product[(2 * a + s, 2 * b + s)],
                Some(w) => {
                    for sp in 0..2 {
                        acc += product[(2 * a + s, 2 * b + sp)] * w[(sp, s)];
                    }
                }
            }
        }
        acc
    })
}

fn embed_nuclear(nuclear: &CMatrix, scale: f64) -> CMatrix {
    nuclear.kronecker(&CMatrix::identity(2, 2)).map(|z| z * scale)
}

fn pauli_matrices() -> [CMatrix; 3] {
    let c = |re: f64, im: f64| C64::new(re, im);
    [
        CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]),
        CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]),
        CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]),
    ]
}

/// Spin-temperature state `exp(beta F.n) / Z` with electron polarization `2<S.n> = p`.
pub fn spin_temperature_state(system: &SpinSystem, p: f64, direction: [f64; 3]) -> Result<DensityMatrix> {
    if !(0.0..1.0).contains(&p) || !p.is_finite() {
        return Err(Error::BadPolarization(p));
    }
    let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm < 1e-12 {
        return Err(Error::BadDirection);
    }
    let n = direction.map(|x| x / norm);
    if p == 0.0 {
        return Ok(DensityMatrix::maximally_mixed(system));
    }
    let f = system.f_ops();
    let s = system.s_ops();
    let f_n = (0..3).fold(CMatrix::zeros(system.dim(), system.dim()), |acc, k| acc + f[k].map(|z| z * n[k]));
    let s_n = (0..3).fold(CMatrix::zeros(system.dim(), system.dim()), |acc, k| acc + s[k].map(|z| z * n[k]));

    let eig = SymmetricEigen::new(f_n);
    let top = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let state_at = |beta: f64| -> CMatrix {
        let weights = eig.eigenvalues.map(|l| C64::new((beta * (l - top)).exp(), 0.0));
        let m = &eig.eigenvectors * CMatrix::from_diagonal(&weights) * eig.eigenvectors.adjoint();
        let tr = m.trace();
        m.map(|z| z / tr)
    };
    let polarization = |beta: f64| 2.0 * (state_at(beta) * &s_n).trace().re;

    let mut hi = 1.0;
    while polarization(hi) < p {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::BadPolarization(p));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if polarization(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let rho = state_at(0.5 * (lo + hi));
    let rho = (&rho + rho.adjoint()).map(|z| z * 0.5);
    Ok(DensityMatrix::from_matrix_unchecked(rho))
}

/// `[<S_-1>, <S_0>, <S_+1>]` with `<S_k> = Tr(rho S_k)`.
pub fn expect_s_spherical(rho: &DensityMatrix, system: &SpinSystem) -> [C64; 3] {
    expect_s_spherical_raw(rho.matrix(), system)
}

pub(crate) fn expect_s_spherical_raw(rho: &CMatrix, system: &SpinSystem) -> [C64; 3] {
    system.s_spherical().map(|op| (rho * op).trace())
}

/// Cartesian `[<S_x>, <S_y>, <S_z>]`; complex for non-Hermitian arguments.
pub(crate) fn expect_s_cartesian(x: &CMatrix, system: &SpinSystem) -> [C64; 3] {
    system.s_ops().each_ref().map(|op| (x * op).trace())
}
