//! Probe-absorption signals and the birefringent oscillator ratio.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::angular::{HalfInt, TensorBasis, TensorKey};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::multipole::{component_series, decompose, MultipoleSet};
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Polarization {
    CircularPlus,
    CircularMinus,
    LinearPi,
    /// Explicit Jones vector in the Cartesian basis.
    Jones([C64; 3]),
}

impl Polarization {
    pub fn jones(&self) -> [C64; 3] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let z = C64::new(0.0, 0.0);
        match self {
            Polarization::CircularPlus => [C64::new(-s, 0.0), C64::new(0.0, -s), z],
            Polarization::CircularMinus => [C64::new(s, 0.0), C64::new(0.0, -s), z],
            Polarization::LinearPi => [z, z, C64::new(1.0, 0.0)],
            Polarization::Jones(e) => *e,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Polarization::CircularPlus => "circular",
            Polarization::CircularMinus => "circular_minus",
            Polarization::LinearPi => "linear",
            Polarization::Jones(_) => "jones",
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Polarization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circular" | "circular_plus" => Ok(Polarization::CircularPlus),
            "circular_minus" => Ok(Polarization::CircularMinus),
            "linear" | "linear_pi" => Ok(Polarization::LinearPi),
            other => Err(Error::InvalidParameter(format!("unknown probe polarization {other:?}"))),
        }
    }
}

/// `chi^{ij}_{LMFF'}` per multipole, indexed `[i][j]` over Cartesian components.
pub type ChiTable = BTreeMap<TensorKey, [[C64; 3]; 3]>;

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub polarization: Polarization,
    pub chi_weights: Option<ChiTable>,
    /// Lumped `2 pi l` gain.
    pub path_scale: f64,
    /// Manifold read out in the default (table-free) mode.
    pub block: HalfInt,
}

impl ProbeConfig {
    pub fn new(polarization: Polarization) -> Self {
        ProbeConfig { polarization, chi_weights: None, path_scale: 1.0, block: HalfInt::integer(2) }
    }

    pub fn circular() -> Self {
        Self::new(Polarization::CircularPlus)
    }

    pub fn linear() -> Self {
        Self::new(Polarization::LinearPi)
    }

    pub fn with_weights(mut self, table: ChiTable) -> Self {
        self.chi_weights = Some(table);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let norm: f64 = self.polarization.jones().iter().map(|z| z.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("Jones vector has squared norm {norm}")));
        }
        if !self.path_scale.is_finite() {
            return Err(Error::InvalidParameter(format!("path scale {}", self.path_scale)));
        }
        Ok(())
    }

    /// The multipole read directly in default mode.
    pub fn designated_component(&self) -> Result<(i32, i32)> {
        match self.polarization {
            Polarization::CircularPlus => Ok((1, 1)),
            Polarization::CircularMinus => Ok((1, -1)),
            Polarization::LinearPi => Ok((2, 2)),
            Polarization::Jones(_) => Err(Error::IncompleteWeights("an explicit Jones vector needs a weight table".into())),
        }
    }
}

/// Exponent of `I_l = I_0 exp(-x)`.
pub fn absorption_exponent(ms: &MultipoleSet, probe: &ProbeConfig) -> Result<f64> {
    probe.validate()?;
    let Some(table) = &probe.chi_weights else {
        let (l, m) = probe.designated_component()?;
        let key = TensorKey::new(l, m, probe.block, probe.block);
        let value = ms.entries.get(&key).ok_or(Error::MissingMultipole {
            l,
            m,
            f: probe.block.to_string(),
            fp: probe.block.to_string(),
        })?;
        return Ok(probe.path_scale * value.re);
    };
    let mut chi = [[C64::new(0.0, 0.0); 3]; 3];
    for (key, &rho) in &ms.entries {
        if rho == C64::new(0.0, 0.0) {
            continue;
        }
        let w = table.get(key).ok_or_else(|| {
            Error::IncompleteWeights(format!("no entry for L={} M={} F={} F'={}", key.l, key.m, key.f, key.fp))
        })?;
        for i in 0..3 {
            for j in 0..3 {
                chi[i][j] += w[i][j] * rho;
            }
        }
    }
    let e = probe.polarization.jones();
    let mut sum = C64::new(0.0, 0.0);
    for i in 0..3 {
        for j in 0..3 {
            sum += e[i].conj() * chi[i][j].im * e[j];
        }
    }
    Ok(probe.path_scale * sum.re)
}

/// Sampled probe signal.
#[derive(Clone, Debug, PartialEq)]
pub struct FidSignal {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl FidSignal {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: times.len(), got: values.len() });
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("sample times must increase strictly".into()));
        }
        Ok(FidSignal { times, values })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Per-sample absorption exponent, or the transmitted fraction `exp(-x)` when
/// `intensity` is set.
pub fn synth_fid(traj: &Trajectory, basis: &TensorBasis, probe: &ProbeConfig, intensity: bool) -> Result<FidSignal> {
    let mut values = Vec::with_capacity(traj.len());
    for state in &traj.states {
        let x = absorption_exponent(&decompose(state, basis), probe)?;
        values.push(if intensity { (-x).exp() } else { x });
    }
    FidSignal::new(traj.times.clone(), values)
}

/// Mean `|z|` over one local oscillation period starting at sample `i0`.
fn local_envelope(z: &[C64], times: &[f64], i0: usize) -> f64 {
    let n = z.len();
    if i0 + 1 >= n {
        return z[i0].norm();
    }
    let dt = times[i0 + 1] - times[i0];
    let omega = if z[i0].norm() > 0.0 && z[i0 + 1].norm() > 0.0 { (z[i0 + 1] / z[i0]).arg().abs() / dt } else { 0.0 };
    let end_t = if omega > 0.0 { times[i0] + 2.0 * PI / omega } else { times[i0] };
    let end = times.iter().position(|&t| t > end_t).unwrap_or(n).max(i0 + 1);
    let slice = &z[i0..end];
    slice.iter().map(|v| v.norm()).sum::<f64>() / slice.len() as f64
}

/// `|rho_{2,+2}(F,F)| / |rho_{1,+1}(F,F)|` of the upper manifold at `t0`.
pub fn eta_br(traj: &Trajectory, basis: &TensorBasis, t0: f64) -> Result<f64> {
    let last = *traj.times.last().expect("nonempty trajectory");
    if !(t0 >= 0.0 && t0 <= last) {
        return Err(Error::InvalidParameter(format!("t0 = {t0} outside trajectory span [0, {last}]")));
    }
    let f = basis.iter().map(|t| t.f).max().expect("nonempty basis");
    let i0 = traj.times.iter().position(|&t| t >= t0).expect("t0 inside span");
    let dipole = component_series(traj, basis, 1, 1, f, f)?;
    let quad = component_series(traj, basis, 2, 2, f, f)?;
    let den = local_envelope(&dipole, &traj.times, i0);
    if den <= 1e-12 {
        return Err(Error::VanishingAmplitude(format!("Larmor coherence envelope {den:.3e} at t0")));
    }
    Ok(local_envelope(&quad, &traj.times, i0) / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angular::tensor_basis;
    use crate::dynamics::{evolve, SimParams};
    use crate::fitting::{fit_fid, FitOptions};
    use crate::hilbert::{build_system, spin_temperature_state, DensityMatrix, SpinSystem};
    use crate::multipole::decompose_matrix;
    use crate::testutil::random_hermitian;

    fn setup() -> (SpinSystem, TensorBasis) {
        let sys = build_system(HalfInt::from_twice(3)).unwrap();
        let basis = tensor_basis(&sys);
        (sys, basis)
    }

    fn table_for(basis: &TensorBasis, skip_l0: bool) -> ChiTable {
        basis
            .keys()
            .map(|k| {
                let scale = if skip_l0 && k.l == 0 { 0.0 } else { 1.0 + 0.1 * k.l as f64 - 0.05 * k.m as f64 };
                let w = std::array::from_fn(|i| std::array::from_fn(|j| C64::new(scale * (1 + i + 2 * j) as f64, 0.3 * scale)));
                (k, w)
            })
            .collect()
    }

    #[test]
    fn unpolarized_with_zero_monopole_weights() {
        let (sys, basis) = setup();
        let ms = decompose(&DensityMatrix::maximally_mixed(&sys), &basis);
        let probe = ProbeConfig::linear().with_weights(table_for(&basis, true));
        assert!(absorption_exponent(&ms, &probe).unwrap().abs() < 1e-15);
    }

    #[test]
    fn longitudinal_state_gives_no_circular_signal() {
        let (sys, basis) = setup();
        let rho = spin_temperature_state(&sys, 0.3, [0.0, 0.0, 1.0]).unwrap();
        let x = absorption_exponent(&decompose(&rho, &basis), &ProbeConfig::circular()).unwrap();
        assert!(x.abs() < 1e-15);
    }

    #[test]
    fn linear_in_multipoles() {
        let (_, basis) = setup();
        let a = decompose_matrix(&random_hermitian(8, 3), &basis);
        let b = decompose_matrix(&random_hermitian(8, 4), &basis);
        let combo = a.combine(1.7, &b, -0.4);
        for probe in [ProbeConfig::circular(), ProbeConfig::linear(), ProbeConfig::circular().with_weights(table_for(&basis, false))] {
            let fa = absorption_exponent(&a, &probe).unwrap();
            let fb = absorption_exponent(&b, &probe).unwrap();
            let fc = absorption_exponent(&combo, &probe).unwrap();
            assert!((fc - (1.7 * fa - 0.4 * fb)).abs() <= 1e-12);
        }
    }

    #[test]
    fn incomplete_table_and_bad_jones_rejected() {
        let (_, basis) = setup();
        let ms = decompose_matrix(&random_hermitian(8, 1), &basis);
        let mut table = table_for(&basis, false);
        table.remove(&TensorKey::new(2, 1, HalfInt::integer(2), HalfInt::integer(2)));
        let probe = ProbeConfig::linear().with_weights(table);
        assert!(matches!(absorption_exponent(&ms, &probe), Err(Error::IncompleteWeights(_))));
        let z = C64::new(0.0, 0.0);
        let bad = ProbeConfig::new(Polarization::Jones([C64::new(1.0, 0.0), C64::new(1.0, 0.0), z]));
        assert!(absorption_exponent(&ms, &bad).is_err());
        let unweighted = ProbeConfig::new(Polarization::Jones([z, z, C64::new(1.0, 0.0)]));
        assert!(matches!(absorption_exponent(&ms, &unweighted), Err(Error::IncompleteWeights(_))));
    }

    #[test]
    fn constant_trajectory_gives_constant_signal() {
        let (sys, basis) = setup();
        let params = SimParams { r_se: 0.0, r_sd: 0.0, ..SimParams::default() };
        let rho = spin_temperature_state(&sys, 0.2, [0.0, 0.0, 1.0]).unwrap();
        let traj = evolve(&rho, &sys, &params, 1e-4, 1e-6, 10).unwrap();
        let sig = synth_fid(&traj, &basis, &ProbeConfig::linear(), true).unwrap();
        assert!(sig.values.iter().all(|v| (v - sig.values[0]).abs() < 1e-15));
    }

    #[test]
    fn linear_probe_oscillates_twice_as_fast() {
        let (sys, basis) = setup();
        let params = SimParams::default().with_field_nt(28.0);
        let rho = spin_temperature_state(&sys, 0.1, [1.0, 0.0, 0.0]).unwrap();
        let traj = evolve(&rho, &sys, &params, 10e-3, 1e-6, 5).unwrap();
        let circ = fit_fid(&synth_fid(&traj, &basis, &ProbeConfig::circular(), false).unwrap(), 3e-4, &FitOptions::default()).unwrap();
        let lin = fit_fid(&synth_fid(&traj, &basis, &ProbeConfig::linear(), false).unwrap(), 3e-4, &FitOptions::default()).unwrap();
        let ratio = lin.params.omega0 / circ.params.omega0;
        assert!((ratio - 2.0).abs() < 0.04, "{ratio}");
    }

    #[test]
    fn eta_br_behaviour() {
        let (sys, basis) = setup();
        let params = SimParams::default().with_field_nt(10.0);
        let unpolarized = evolve(&DensityMatrix::maximally_mixed(&sys), &sys, &params, 1e-3, 1e-6, 10).unwrap();
        assert!(matches!(eta_br(&unpolarized, &basis, 3e-4), Err(Error::VanishingAmplitude(_))));

        let mut previous = 0.0;
        for p in [0.05, 0.1, 0.2, 0.4] {
            let rho = spin_temperature_state(&sys, p, [1.0, 0.0, 0.0]).unwrap();
            let traj = evolve(&rho, &sys, &params, 1e-3, 1e-6, 5).unwrap();
            let eta = eta_br(&traj, &basis, 3e-4).unwrap();
            assert!(eta > previous, "P = {p}: {eta} <= {previous}");
            previous = eta;
        }
    }

    #[test]
    fn parses_labels() {
        assert_eq!("circular".parse::<Polarization>().unwrap(), Polarization::CircularPlus);
        assert_eq!("linear".parse::<Polarization>().unwrap(), Polarization::LinearPi);
        assert!("elliptic".parse::<Polarization>().is_err());
    }
}
