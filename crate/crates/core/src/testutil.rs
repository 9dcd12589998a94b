use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{CMatrix, C64};

/// Random Hermitian matrix with unit trace (not necessarily positive).
pub(crate) fn random_hermitian(dim: usize, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = CMatrix::from_fn(dim, dim, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let h = (&g + g.adjoint()).map(|z| z * 0.5);
    let tr = h.trace();
    h + CMatrix::identity(dim, dim).map(|z| z * (C64::new(1.0, 0.0) - tr) / dim as f64)
}

/// Random positive unit-trace matrix `G G^dag / Tr`.
pub(crate) fn random_state(dim: usize, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = CMatrix::from_fn(dim, dim, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let m = &g * g.adjoint();
    let tr = m.trace();
    m.map(|z| z / tr)
}
