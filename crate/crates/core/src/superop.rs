//! Linear Liouville superoperator on the block-diagonal operator space, its
//! eigenmodes `lambda_{+-}^{LM}`, the mean-field couplings `Q{k}`, and the
//! first-order prediction for the birefringent (`L = |M| = 2`) coherence.
//!
//! The spin-exchange term `4 R_SE alpha S.<S>` is split as
//!
//! ```text
//! 4 R_SE alpha S.<S> = (4 R_SE / dim) S.<S>            (linear, part of E)
//!                    + 2 R_SE sum_k <S>^k Q_k rho       (mean-field, Q)
//! Q_k rho = 2 (alpha(rho) - Tr(rho)/dim) S_k
//! ```
//!
//! where `<S>^k = (-1)^k <S_-k>` is the contravariant spherical component, so
//! that `S.<S> = sum_k S_k <S>^k` and `Q{k}` connects a source mode with
//! magnetic index `m` only to targets with `M = m + k`.

use std::collections::BTreeMap;
use std::fmt;

use crate::angular::{HalfInt, TensorBasis, TensorKey};
use crate::dynamics::{evolve, project_block_diagonal, rhs, SimParams, SpinExchange};
use crate::eigen::eigen_decompose_blocked;
use crate::error::{Error, Result};
use crate::hilbert::{alpha_part, expect_s_spherical_raw, DensityMatrix, SpinSystem};
use crate::multipole::overlap;
use crate::{CMatrix, CVector, C64};

/// Index map between block-diagonal matrices and vectors.
#[derive(Clone, Debug)]
pub struct BlockSpace {
    dim: usize,
    slots: Vec<(usize, usize)>,
}

impl BlockSpace {
    pub fn new(system: &SpinSystem) -> Self {
        let dim = system.dim();
        let mut slots = Vec::new();
        for r in 0..dim {
            for c in 0..dim {
                if system.manifold_of(r) == system.manifold_of(c) {
                    slots.push((r, c));
                }
            }
        }
        BlockSpace { dim, slots }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[(usize, usize)] {
        &self.slots
    }

    /// Off-block elements are dropped.
    pub fn vectorize(&self, m: &CMatrix) -> CVector {
        CVector::from_iterator(self.slots.len(), self.slots.iter().map(|&(r, c)| m[(r, c)]))
    }

    pub fn unvectorize(&self, v: &CVector) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for (k, &(r, c)) in self.slots.iter().enumerate() {
            m[(r, c)] = v[k];
        }
        m
    }

    /// Row vector `t` with `t . vec(X) = Tr(X)`.
    pub fn trace_functional(&self) -> CVector {
        CVector::from_iterator(
            self.slots.len(),
            self.slots.iter().map(|&(r, c)| if r == c { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }),
        )
    }
}

/// `W + Z + E` as a matrix on vectorized block-diagonal density matrices.
#[derive(Clone, Debug)]
pub struct LinearSuperOp {
    pub matrix: CMatrix,
    pub params: SimParams,
    space: BlockSpace,
}

fn linear_params(params: &SimParams) -> SimParams {
    SimParams { spin_exchange: SpinExchange::Linearized, project_hyperfine: true, ..*params }
}

/// Builds the superoperator column by column from the linearized equation of motion.
pub fn build_linear(system: &SpinSystem, params: &SimParams) -> LinearSuperOp {
    let space = BlockSpace::new(system);
    let lin = linear_params(params);
    let n = space.len();
    let mut matrix = CMatrix::zeros(n, n);
    for c in 0..n {
        let mut unit = CVector::zeros(n);
        unit[c] = C64::new(1.0, 0.0);
        let image = rhs(&space.unvectorize(&unit), system, &lin);
        matrix.set_column(c, &space.vectorize(&image));
    }
    LinearSuperOp { matrix, params: *params, space }
}

impl LinearSuperOp {
    pub fn space(&self) -> &BlockSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        &self.matrix * v
    }

    /// `max_j |sum_i t_i M_ij|`: how far the trace functional is from a left null vector.
    pub fn trace_leak(&self) -> f64 {
        let t = self.space.trace_functional();
        (t.transpose() * &self.matrix).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Slow (`+`) or fast (`-`) member of an `(L, M)` pair, by decay rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    Plus,
    Minus,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Plus => "+",
            Branch::Minus => "-",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeLabel {
    pub l: i32,
    pub m: i32,
    pub branch: Branch,
}

impl ModeLabel {
    pub fn new(l: i32, m: i32, branch: Branch) -> Self {
        ModeLabel { l, m, branch }
    }
}

#[derive(Clone, Debug)]
pub struct EigenMode {
    pub lambda: C64,
    pub l: i32,
    pub m: i32,
    pub branch: Branch,
    /// Squared weight of the eigenvector on its `(L, M)` tensor subspace.
    pub overlap: f64,
    /// Dominant overlap below 0.5: the `(L, M)` label is only indicative.
    pub mixed: bool,
    pub right_vec: CVector,
    pub left_vec: CVector,
}

impl EigenMode {
    pub fn label(&self) -> ModeLabel {
        ModeLabel::new(self.l, self.m, self.branch)
    }

    /// Decay rate `-Re(lambda)`.
    pub fn decay_rate(&self) -> f64 {
        -self.lambda.re
    }

    /// Component `left . vec(rho)` of a state along this mode.
    pub fn amplitude(&self, space: &BlockSpace, rho: &CMatrix) -> C64 {
        self.left_vec.dot(&space.vectorize(rho))
    }
}

/// Vectorized block-diagonal tensor operators, as columns, with their keys.
fn tensor_frame(space: &BlockSpace, basis: &TensorBasis) -> (CMatrix, Vec<TensorKey>) {
    let keys: Vec<TensorKey> = basis.keys().filter(|k| k.f == k.fp).collect();
    let mut w = CMatrix::zeros(space.len(), keys.len());
    for (a, key) in keys.iter().enumerate() {
        let t = basis.get(*key).expect("key from basis");
        w.set_column(a, &space.vectorize(&t.matrix));
    }
    (w, keys)
}

/// Full eigen-decomposition, classified by dominant `(L, M)` and branch.
///
/// Modes are returned sorted by `(L, M, branch)`.
pub fn eigenmodes(sop: &LinearSuperOp, basis: &TensorBasis) -> Result<Vec<EigenMode>> {
    let (w, keys) = tensor_frame(&sop.space, basis);
    if keys.len() != sop.dim() {
        return Err(Error::Decomposition(format!("tensor frame has {} elements for a {}-dimensional space", keys.len(), sop.dim())));
    }
    let in_tensor = w.adjoint() * &sop.matrix * &w;
    let dec = eigen_decompose_blocked(&in_tensor)?;

    let mut modes = Vec::with_capacity(dec.values.len());
    for (k, &lambda) in dec.values.iter().enumerate() {
        let r = dec.right.column(k);
        let total: f64 = r.iter().map(|z| z.norm_sqr()).sum();
        let mut weights: BTreeMap<(i32, i32), f64> = BTreeMap::new();
        for (a, key) in keys.iter().enumerate() {
            *weights.entry((key.l, key.m)).or_default() += r[a].norm_sqr() / total;
        }
        let (&(l, m), &overlap) = weights
            .iter()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
            .expect("nonempty frame");
        modes.push(EigenMode {
            lambda,
            l,
            m,
            branch: Branch::Plus,
            overlap,
            mixed: overlap < 0.5,
            right_vec: &w * r,
            left_vec: (dec.left.row(k) * w.adjoint()).transpose(),
        });
    }

    // Within each (L, M) the slowest-decaying mode is "+".
    modes.sort_by(|a, b| {
        (a.l, a.m)
            .cmp(&(b.l, b.m))
            .then(a.lambda.re.abs().partial_cmp(&b.lambda.re.abs()).unwrap_or(std::cmp::Ordering::Equal))
    });
    let mut prev: Option<(i32, i32)> = None;
    for mode in &mut modes {
        mode.branch = if prev == Some((mode.l, mode.m)) { Branch::Minus } else { Branch::Plus };
        prev = Some((mode.l, mode.m));
    }
    Ok(modes)
}

pub fn find_mode(modes: &[EigenMode], label: ModeLabel) -> Option<&EigenMode> {
    modes.iter().find(|m| m.label() == label)
}

/// Contravariant spherical components `[<S>^-1, <S>^0, <S>^+1]`, `<S>^k = (-1)^k <S_-k>`.
pub fn mean_spin_contravariant(rho: &CMatrix, system: &SpinSystem) -> [C64; 3] {
    let s = expect_s_spherical_raw(rho, system);
    [-s[2], s[1], -s[0]]
}

/// `Q_k` for `k = -1, 0, +1` as matrices on the block space.
pub fn q_matrices(system: &SpinSystem, space: &BlockSpace) -> [CMatrix; 3] {
    let s_sph = system.s_spherical();
    let n = space.len();
    let dim = system.dim() as f64;
    s_sph.each_ref().map(|s_k| {
        let mut q = CMatrix::zeros(n, n);
        for c in 0..n {
            let mut unit = CVector::zeros(n);
            unit[c] = C64::new(1.0, 0.0);
            let x = space.unvectorize(&unit);
            let tr = x.trace();
            let mut reduced = alpha_part(&x, system);
            for i in 0..system.dim() {
                reduced[(i, i)] -= tr / dim;
            }
            let image = project_block_diagonal(&(reduced * s_k).map(|z| z * 2.0), system);
            q.set_column(c, &space.vectorize(&image));
        }
        q
    })
}

/// `2 R_SE sum_k <S>^k Q_k rho`, the mean-field part of the spin-exchange term.
pub fn mean_field_action(rho: &CMatrix, system: &SpinSystem, space: &BlockSpace, q: &[CMatrix; 3], r_se: f64) -> CMatrix {
    let mean = mean_spin_contravariant(rho, system);
    let v = space.vectorize(rho);
    let mut out = CVector::zeros(space.len());
    for k in 0..3 {
        out += (&q[k] * &v) * (mean[k] * 2.0 * r_se);
    }
    space.unvectorize(&out)
}

/// Matrix elements `Q{k}_{lm+-'}^{LM+-} = left(LM+-) . Q_k . right(lm+-')`.
#[derive(Clone, Debug, Default)]
pub struct QCoefficients {
    pub entries: BTreeMap<(i32, ModeLabel, ModeLabel), C64>,
}

impl QCoefficients {
    /// Coefficient for spherical index `k`, source mode `from`, target mode `to`.
    pub fn get(&self, k: i32, from: ModeLabel, to: ModeLabel) -> Option<C64> {
        self.entries.get(&(k, from, to)).copied()
    }
}

pub fn q_coefficients(system: &SpinSystem, modes: &[EigenMode]) -> QCoefficients {
    let space = BlockSpace::new(system);
    let q = q_matrices(system, &space);
    let mut entries = BTreeMap::new();
    for (ki, k) in (-1..=1).enumerate() {
        let images: Vec<CVector> = modes.iter().map(|src| &q[ki] * &src.right_vec).collect();
        for (src, image) in modes.iter().zip(&images) {
            for dst in modes {
                entries.insert((k, src.label(), dst.label()), dst.left_vec.dot(image));
            }
        }
    }
    QCoefficients { entries }
}

#[derive(Clone, Copy, Debug)]
pub struct PerturbOptions {
    /// Start of the long-time regime; defaults to `3 / R_SE`.
    pub t0: Option<f64>,
    /// Upper bound for the integration step used to reach `t0`.
    pub max_dt: f64,
}

impl Default for PerturbOptions {
    fn default() -> Self {
        PerturbOptions { t0: None, max_dt: 1e-6 }
    }
}

/// Polarization above which the first-order treatment is flagged.
pub const PERTURBATIVE_POLARIZATION_LIMIT: f64 = 0.3;

#[derive(Clone, Copy, Debug)]
pub struct BirefringentAmplitude {
    pub m: i32,
    pub branch: Branch,
    /// Mode amplitude `rho_{2M+-}(t0)` of the scattered coherence.
    pub amplitude: C64,
    /// `-lambda_{+-}^{2M} + 2 lambda_+^{1,M/2}`.
    pub denominator: C64,
    pub coupling: C64,
    pub degenerate: bool,
}

#[derive(Clone, Debug)]
pub struct PerturbativePrediction {
    pub t0: f64,
    /// `lambda_+^{1,+1}`, `lambda_+^{1,-1}`.
    pub lambda_larmor: [C64; 2],
    /// `lambda^{2,+2} = 2 lambda_+^{1,+1}` and `lambda^{2,-2} = 2 lambda_+^{1,-1}`.
    pub lambda_birefringent: [C64; 2],
    pub amplitudes: Vec<BirefringentAmplitude>,
    /// Predicted `rho_{2,+-2}(F,F)` of the upper manifold at `t0`.
    pub predicted_component: [C64; 2],
    /// Electron polarization `2|<S>|` at `t0`.
    pub polarization: f64,
    pub high_polarization: bool,
    pub degenerate: bool,
}

impl PerturbativePrediction {
    /// Predicted upper-manifold `rho_{2,M}(t)` for `t >= t0`, `M = +-2`.
    pub fn component_at(&self, m: i32, t: f64) -> C64 {
        let i = if m > 0 { 0 } else { 1 };
        self.predicted_component[i] * (self.lambda_birefringent[i] * (t - self.t0)).exp()
    }
}

/// First-order mean-field scattering of the Larmor coherence into `L = |M| = 2`.
pub fn perturbative_birefringent(
    system: &SpinSystem,
    basis: &TensorBasis,
    params: &SimParams,
    rho0: &DensityMatrix,
    opts: &PerturbOptions,
) -> Result<PerturbativePrediction> {
    params.validate()?;
    if params.r_se <= 0.0 {
        return Err(Error::InvalidParameter("the perturbative prediction needs R_SE > 0".into()));
    }
    let t0 = opts.t0.unwrap_or(3.0 / params.r_se);
    if !(t0 >= 0.0 && t0.is_finite()) {
        return Err(Error::InvalidParameter(format!("t0 = {t0}")));
    }

    let sop = build_linear(system, params);
    let modes = eigenmodes(&sop, basis)?;
    let space = sop.space();
    let q = q_matrices(system, space);

    let full = SimParams { spin_exchange: SpinExchange::Full, project_hyperfine: true, ..*params };
    let rho_t0 = if t0 > 0.0 {
        let dt_cap = opts.max_dt.min(full.max_stable_dt());
        let steps = (t0 / dt_cap).ceil().max(1.0);
        let traj = evolve(rho0, system, &full, t0, t0 / steps, steps as usize)?;
        traj.last().matrix().clone()
    } else {
        project_block_diagonal(rho0.matrix(), system)
    };
    let mean = mean_spin_contravariant(&rho_t0, system);
    let cart = crate::hilbert::expect_s_cartesian(&rho_t0, system);
    let polarization = 2.0 * cart.iter().map(|z| z.re * z.re).sum::<f64>().sqrt();

    let upper = system.upper_manifold();
    let mut amplitudes = Vec::new();
    let mut lambda_larmor = [C64::new(0.0, 0.0); 2];
    let mut predicted = [C64::new(0.0, 0.0); 2];
    for (slot, big_m) in [2, -2].into_iter().enumerate() {
        let k = big_m / 2;
        let larmor = find_mode(&modes, ModeLabel::new(1, k, Branch::Plus))
            .ok_or_else(|| Error::Decomposition(format!("no Larmor mode with M = {k}")))?;
        lambda_larmor[slot] = larmor.lambda;
        let source_amp = larmor.amplitude(space, &rho_t0);
        let scattered = &q[(k + 1) as usize] * &larmor.right_vec;
        let target_key = TensorKey::new(2, big_m, upper, upper);
        let target_op = basis.get(target_key).expect("quadrupole exists");
        for branch in [Branch::Plus, Branch::Minus] {
            let Some(target) = find_mode(&modes, ModeLabel::new(2, big_m, branch)) else {
                continue;
            };
            let coupling = target.left_vec.dot(&scattered);
            let denominator = -target.lambda + larmor.lambda * 2.0;
            let degenerate = denominator.norm() < 1e-6 * params.r_se;
            let amplitude = mean[(k + 1) as usize] * source_amp * coupling * (2.0 * params.r_se) / denominator;
            predicted[slot] += amplitude * overlap(&target_op.matrix, &space.unvectorize(&target.right_vec));
            amplitudes.push(BirefringentAmplitude { m: big_m, branch, amplitude, denominator, coupling, degenerate });
        }
    }

    let degenerate = amplitudes.iter().any(|a| a.degenerate);
    Ok(PerturbativePrediction {
        t0,
        lambda_larmor,
        lambda_birefringent: [lambda_larmor[0] * 2.0, lambda_larmor[1] * 2.0],
        amplitudes,
        predicted_component: predicted,
        polarization,
        high_polarization: polarization > PERTURBATIVE_POLARIZATION_LIMIT,
        degenerate,
    })
}

/// Upper-manifold helper used by callers that only need `F = I + 1/2`.
pub fn upper_key(system: &SpinSystem, l: i32, m: i32) -> TensorKey {
    let f: HalfInt = system.upper_manifold();
    TensorKey::new(l, m, f, f)
}
