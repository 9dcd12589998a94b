use serf_core::angular::{tensor_basis, HalfInt};
use serf_core::dynamics::{evolve, SimParams};
use serf_core::fitting::{fit_fid, FitOptions};
use serf_core::hilbert::{build_system, spin_temperature_state};
use serf_core::multipole::component_series;
use serf_core::observables::{synth_fid, FidSignal, ProbeConfig};
use serf_core::superop::{perturbative_birefringent, PerturbOptions};
use serf_core::C64;

const T0: f64 = 300e-6;

fn fit_series(times: &[f64], series: &[C64], t0: f64) -> serf_core::fitting::FitResult {
    let signal = FidSignal::new(times.to_vec(), series.iter().map(|z| z.re).collect()).unwrap();
    fit_fid(&signal, t0, &FitOptions::default()).unwrap()
}

#[test]
fn dipole_and_quadrupole_components_track_the_probes() {
    let sys = build_system(HalfInt::from_twice(3)).unwrap();
    let basis = tensor_basis(&sys);
    let params = SimParams::default().with_field_nt(28.0);
    let rho0 = spin_temperature_state(&sys, 0.1, [1.0, 0.0, 0.0]).unwrap();
    let traj = evolve(&rho0, &sys, &params, 10e-3, 1e-6, 1).unwrap();
    let f2 = HalfInt::integer(2);

    let dipole = fit_series(&traj.times, &component_series(&traj, &basis, 1, 1, f2, f2).unwrap(), T0);
    let quad = fit_series(&traj.times, &component_series(&traj, &basis, 2, 2, f2, f2).unwrap(), T0);
    let circ = fit_fid(&synth_fid(&traj, &basis, &ProbeConfig::circular(), false).unwrap(), T0, &FitOptions::default()).unwrap();

    assert!((dipole.params.omega0 / circ.params.omega0 - 1.0).abs() < 0.02, "{} vs {}", dipole.params.omega0, circ.params.omega0);
    let ratio = quad.params.omega0 / dipole.params.omega0;
    assert!((ratio / 2.0 - 1.0).abs() < 0.02, "ratio {ratio}");
}

#[test]
fn perturbative_amplitude_matches_full_simulation() {
    let sys = build_system(HalfInt::from_twice(3)).unwrap();
    let basis = tensor_basis(&sys);
    let params = SimParams::default().with_field_nt(10.0);
    let rho0 = spin_temperature_state(&sys, 0.1, [1.0, 0.0, 0.0]).unwrap();
    let pred = perturbative_birefringent(&sys, &basis, &params, &rho0, &PerturbOptions::default()).unwrap();
    assert!(!pred.degenerate && !pred.high_polarization);

    let traj = evolve(&rho0, &sys, &params, 10e-3, 1e-6, 1).unwrap();
    let f2 = HalfInt::integer(2);
    for (i, m) in [2, -2].into_iter().enumerate() {
        let fit = fit_series(&traj.times, &component_series(&traj, &basis, 2, m, f2, f2).unwrap(), pred.t0);
        let fitted = fit.params.c * (-fit.params.gamma0 * pred.t0).exp();
        let predicted = pred.predicted_component[i].norm();
        let rel = predicted / fitted - 1.0;
        assert!(rel.abs() <= 0.2, "M={m}: predicted {predicted:.4e}, fitted {fitted:.4e}");
    }
}
