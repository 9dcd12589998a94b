//! Ground-state density-matrix equation of motion and its integrator.
//!
//! ```text
//! d rho/dt = A_hfs [I.S, rho]/i + w_B [S_z, rho]/i
//!          + R_SE (4 alpha S.<S> - A.S) - R_SD A.S
//! ```
//!
//! with `rho = alpha + A.S`. By default the right-hand side is projected onto
//! the `F = F'` blocks, which removes hyperfine coherences and with them the
//! `A_hfs` timescale.

use std::f64::consts::TAU;

use crate::angular::HalfInt;
use crate::error::{Error, Result};
use crate::hilbert::{alpha_part, expect_s_cartesian, hermiticity_defect, DensityMatrix, SpinSystem};
use crate::{CMatrix, C64};

/// Electron gyromagnetic ratio in rad/(s nT).
pub const DEFAULT_GAMMA_E: f64 = TAU * 28.024;

/// Ground-state hyperfine constant of Rb-87 in rad/s (splitting / (I + 1/2)).
pub const RB87_A_HFS: f64 = TAU * 6.834_682_610_904e9 / 2.0;

const STABILITY_LIMIT: f64 = 0.1;
const TRACE_ABORT: f64 = 1e-6;

/// Which part of the spin-exchange term is kept.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SpinExchange {
    /// The full mean-field term `4 alpha S.<S>`.
    #[default]
    Full,
    /// Only the part linear in `rho`, i.e. `alpha` replaced by `1/dim` in the
    /// mean-field term. This is the dynamics of the linear superoperator.
    Linearized,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimParams {
    /// Bare electron precession frequency, rad/s.
    pub omega_b: f64,
    /// Spin-exchange rate, 1/s.
    pub r_se: f64,
    /// Spin-destruction rate, 1/s.
    pub r_sd: f64,
    /// Hyperfine coupling, rad/s. Only enters when `project_hyperfine` is off.
    pub a_hfs: f64,
    pub project_hyperfine: bool,
    /// Field-to-frequency conversion, rad/(s nT).
    pub gamma_e: f64,
    pub spin_exchange: SpinExchange,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            omega_b: 0.0,
            r_se: 1e4,
            r_sd: 147.0,
            a_hfs: RB87_A_HFS,
            project_hyperfine: true,
            gamma_e: DEFAULT_GAMMA_E,
            spin_exchange: SpinExchange::Full,
        }
    }
}

impl SimParams {
    /// Sets `omega_b` from a field in nT using `gamma_e`.
    pub fn with_field_nt(mut self, b_nt: f64) -> Self {
        self.omega_b = self.gamma_e * b_nt;
        self
    }

    pub fn field_nt(&self) -> f64 {
        self.omega_b / self.gamma_e
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_se >= 0.0 && self.r_se.is_finite()) {
            return Err(Error::InvalidParameter(format!("R_SE = {}", self.r_se)));
        }
        if !(self.r_sd >= 0.0 && self.r_sd.is_finite()) {
            return Err(Error::InvalidParameter(format!("R_SD = {}", self.r_sd)));
        }
        if !self.omega_b.is_finite() {
            return Err(Error::InvalidParameter(format!("omega_B = {}", self.omega_b)));
        }
        if !self.a_hfs.is_finite() || !self.gamma_e.is_finite() {
            return Err(Error::InvalidParameter("A_hfs and gamma_e must be finite".into()));
        }
        Ok(())
    }

    /// Largest step the integrator accepts for these parameters.
    pub fn max_stable_dt(&self) -> f64 {
        let mut rate = self.r_se.max(self.omega_b.abs()).max(self.r_sd);
        if !self.project_hyperfine {
            rate = rate.max(self.a_hfs.abs());
        }
        if rate == 0.0 {
            f64::INFINITY
        } else {
            STABILITY_LIMIT / rate
        }
    }
}

/// Zeroes every element between different hyperfine manifolds.
pub fn project_block_diagonal(m: &CMatrix, system: &SpinSystem) -> CMatrix {
    let labels = system.labels();
    CMatrix::from_fn(m.nrows(), m.ncols(), |r, c| {
        if labels[r].0 == labels[c].0 {
            m[(r, c)]
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// `d rho / dt` for a validated state. Rejects non-Hermitian input.
pub fn liouville_rhs(rho: &DensityMatrix, system: &SpinSystem, params: &SimParams) -> Result<CMatrix> {
    let defect = rho.hermiticity_defect();
    if defect > 1e-12 {
        return Err(Error::NotHermitian(defect));
    }
    if rho.dim() != system.dim() {
        return Err(Error::DimensionMismatch { expected: system.dim(), got: rho.dim() });
    }
    Ok(rhs(rho.matrix(), system, params))
}

/// Right-hand side on an arbitrary matrix, no validation.
pub(crate) fn rhs(x: &CMatrix, system: &SpinSystem, params: &SimParams) -> CMatrix {
    let minus_i = C64::new(0.0, -1.0);
    let s = system.s_ops();
    let alpha = alpha_part(x, system);
    let mean = expect_s_cartesian(x, system);
    let s_dot_mean = (0..3).fold(CMatrix::zeros(x.nrows(), x.ncols()), |acc, j| acc + s[j].map(|z| z * mean[j]));

    let sz = &s[2];
    let mut out = (sz * x - x * sz).map(|z| z * minus_i * params.omega_b);
    if !params.project_hyperfine {
        let is = system.i_dot_s();
        out += (is * x - x * is).map(|z| z * minus_i * params.a_hfs);
    }
    let a_dot_s = x - &alpha;
    out -= a_dot_s.map(|z| z * (params.r_se + params.r_sd));
    match params.spin_exchange {
        SpinExchange::Full => out += (&alpha * &s_dot_mean).map(|z| z * 4.0 * params.r_se),
        SpinExchange::Linearized => out += s_dot_mean.map(|z| z * 4.0 * params.r_se / system.dim() as f64),
    }
    if params.project_hyperfine {
        project_block_diagonal(&out, system)
    } else {
        out
    }
}

/// Sampled solution of the equation of motion.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub params: SimParams,
}

/// Worst-case deviations from the density-matrix invariants over a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvariantReport {
    pub max_trace_drift: f64,
    pub max_hermiticity_defect: f64,
    pub min_eigenvalue: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &DensityMatrix {
        self.states.last().expect("trajectory has at least the initial state")
    }

    pub fn invariants(&self) -> InvariantReport {
        let mut report = InvariantReport { max_trace_drift: 0.0, max_hermiticity_defect: 0.0, min_eigenvalue: f64::INFINITY };
        for state in &self.states {
            report.max_trace_drift = report.max_trace_drift.max((state.trace() - C64::new(1.0, 0.0)).norm());
            report.max_hermiticity_defect = report.max_hermiticity_defect.max(state.hermiticity_defect());
            report.min_eigenvalue = report.min_eigenvalue.min(state.min_eigenvalue());
        }
        report
    }

    /// `Tr(rho(t) op)` per sample.
    pub fn expectation(&self, op: &CMatrix) -> Vec<C64> {
        self.states.iter().map(|s| s.expect(op)).collect()
    }
}

/// Fixed-step classical RK4 from `rho0` to `t_end`, keeping every
/// `sample_every`-th state (the initial state is always kept).
///
/// With projection on, `rho0` is projected onto the `F = F'` blocks first.
pub fn evolve(
    rho0: &DensityMatrix,
    system: &SpinSystem,
    params: &SimParams,
    t_end: f64,
    dt: f64,
    sample_every: usize,
) -> Result<Trajectory> {
    params.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt = {dt}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter(format!("t_end = {t_end}")));
    }
    if sample_every == 0 {
        return Err(Error::InvalidParameter("sample_every must be positive".into()));
    }
    if rho0.dim() != system.dim() {
        return Err(Error::DimensionMismatch { expected: system.dim(), got: rho0.dim() });
    }
    let required = params.max_stable_dt();
    if dt > required * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge { dt, required });
    }

    let steps = (t_end / dt).round() as usize;
    let mut rho = if params.project_hyperfine {
        project_block_diagonal(rho0.matrix(), system)
    } else {
        rho0.matrix().clone()
    };
    let initial_trace = rho.trace();

    let mut times = Vec::with_capacity(steps / sample_every + 1);
    let mut states = Vec::with_capacity(steps / sample_every + 1);
    times.push(0.0);
    states.push(DensityMatrix::from_matrix_unchecked(rho.clone()));

    let half = dt / 2.0;
    for step in 1..=steps {
        let k1 = rhs(&rho, system, params);
        let k2 = rhs(&(&rho + k1.map(|z| z * half)), system, params);
        let k3 = rhs(&(&rho + k2.map(|z| z * half)), system, params);
        let k4 = rhs(&(&rho + k3.map(|z| z * dt)), system, params);
        let incr = (k1 + (k2 + k3).map(|z| z * 2.0) + k4).map(|z| z * (dt / 6.0));
        rho += incr;
        rho = (&rho + rho.adjoint()).map(|z| z * 0.5);

        let drift = (rho.trace() - initial_trace).norm();
        if drift > TRACE_ABORT || !drift.is_finite() {
            return Err(Error::TraceDrift { time: step as f64 * dt, drift });
        }
        if step % sample_every == 0 {
            times.push(step as f64 * dt);
            states.push(DensityMatrix::from_matrix_unchecked(rho.clone()));
        }
    }
    Ok(Trajectory { times, states, params: *params })
}

/// Deviation of `m` from Hermiticity; re-exported for diagnostics.
pub fn hermiticity(m: &CMatrix) -> f64 {
    hermiticity_defect(m)
}

/// Within-manifold electron g-factor `<S_z>` projection for manifold `f`:
/// `+-1/(2I+1)` for `F = I +- 1/2`.
pub fn manifold_g_factor(system: &SpinSystem, f: HalfInt) -> f64 {
    let i = system.nuclear_spin().value();
    if f.value() > i {
        1.0 / (2.0 * i + 1.0)
    } else {
        -1.0 / (2.0 * i + 1.0)
    }
}
