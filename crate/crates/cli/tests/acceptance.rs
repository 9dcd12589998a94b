//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line per criterion and exits non-zero if any fails.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;

use serf_cli::{doubled_larmor_eigenvalue, probe_runs, simulate, substeps, summarize_probe, RunConfig, Setup, SweepRow};
use serf_core::angular::{tensor_basis, HalfInt};
use serf_core::dynamics::{evolve, SimParams, SpinExchange};
use serf_core::fitting::{fit_fid, FidParams, FitOptions};
use serf_core::hilbert::{build_system, spin_temperature_state, DensityMatrix};
use serf_core::multipole::component_series;
use serf_core::observables::{eta_br, FidSignal, Polarization};
use serf_core::superop::{build_linear, eigenmodes, q_coefficients, Branch};

struct Verdict {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(id: u32, name: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict { id, name, pass, detail }
}

struct PointFit {
    b_nt: f64,
    circular: FidParams,
    linear: FidParams,
    converged: bool,
}

fn criteria_1_2_5_7(out: &mut Vec<Verdict>) {
    let cfg = RunConfig::default();
    let setup = Setup::new(&cfg).unwrap();
    let mut fits = Vec::new();
    let mut worst_trace: f64 = 0.0;
    let mut worst_herm: f64 = 0.0;
    let mut worst_eig = f64::INFINITY;
    for b in [5.0, 10.0, 20.0, 28.0] {
        let traj = simulate(&setup, &cfg.params(b), &cfg).unwrap();
        let inv = traj.invariants();
        worst_trace = worst_trace.max(inv.max_trace_drift);
        worst_herm = worst_herm.max(inv.max_hermiticity_defect);
        worst_eig = worst_eig.min(inv.min_eigenvalue);
        let runs = probe_runs(&setup, &traj, &cfg).unwrap();
        fits.push(PointFit {
            b_nt: b,
            circular: runs[0].fit.params,
            linear: runs[1].fit.params,
            converged: runs.iter().all(|r| r.fit.converged && !r.fit.degenerate),
        });
    }

    let gamma: Vec<String> = fits.iter().map(|f| format!("{}nT:{:.4}", f.b_nt, f.linear.gamma0 / f.circular.gamma0)).collect();
    let pass = fits.iter().all(|f| f.converged && (1.8..=2.2).contains(&(f.linear.gamma0 / f.circular.gamma0)));
    out.push(verdict(1, "doubled decay, Gamma_br/Gamma_lr in [1.8, 2.2]", pass, gamma.join(" ")));

    let omega: Vec<String> = fits.iter().map(|f| format!("{}nT:{:.4}", f.b_nt, f.linear.omega0 / f.circular.omega0)).collect();
    let pass = fits.iter().all(|f| f.converged && ((f.linear.omega0 / f.circular.omega0) / 2.0 - 1.0).abs() <= 0.02);
    out.push(verdict(2, "doubled frequency, omega_br/omega_lr = 2 +- 2%", pass, omega.join(" ")));

    let at10 = fits.iter().find(|f| f.b_nt == 10.0).unwrap();
    let (g_pred, w_pred) = doubled_larmor_eigenvalue(&cfg, 10.0).unwrap();
    let (eg, ew) = (at10.linear.gamma0 / g_pred - 1.0, at10.linear.omega0 / w_pred.abs() - 1.0);
    out.push(verdict(
        5,
        "eigenvalue identity at 10 nT within 5%",
        eg.abs() <= 0.05 && ew.abs() <= 0.05,
        format!(
            "fit ({:.3}, {:.3}) vs 2*lambda ({:.3}, {:.3}); rel err ({:+.2e}, {:+.2e})",
            at10.linear.gamma0,
            at10.linear.omega0,
            g_pred,
            w_pred.abs(),
            eg,
            ew
        ),
    ));

    // Total angular momentum with neither field nor destruction, same initial state.
    // The transverse spin-temperature state is stationary there, so a mixture of two
    // differently oriented ones is checked as well.
    let free = SimParams { r_sd: 0.0, ..cfg.params(0.0) };
    let x = spin_temperature_state(&setup.system, 0.3, [1.0, 0.0, 0.0]).unwrap();
    let z = spin_temperature_state(&setup.system, 0.3, [0.0, 0.0, 1.0]).unwrap();
    let mixed = DensityMatrix::new((x.matrix() + z.matrix()).map(|c| c * 0.5)).unwrap();
    let mut f_drift: f64 = 0.0;
    for rho0 in [&setup.rho0, &mixed] {
        let n = substeps(&free, cfg.dt());
        let traj = evolve(rho0, &setup.system, &free, cfg.t_end(), cfg.dt() / n as f64, n).unwrap();
        let inv = traj.invariants();
        worst_trace = worst_trace.max(inv.max_trace_drift);
        worst_herm = worst_herm.max(inv.max_hermiticity_defect);
        worst_eig = worst_eig.min(inv.min_eigenvalue);
        for op in setup.system.f_ops() {
            let series = traj.expectation(op);
            let scale = series.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
            f_drift = f_drift.max(series.iter().map(|z| (z - series[0]).norm()).fold(0.0, f64::max) / scale);
        }
    }
    let pass = worst_trace <= 1e-9 && worst_herm <= 1e-12 && worst_eig >= -1e-9 && f_drift <= 1e-8;
    out.push(verdict(
        7,
        "conservation suite",
        pass,
        format!("trace {worst_trace:.2e}, hermiticity {worst_herm:.2e}, min eigenvalue {worst_eig:.3e}, <F> drift {f_drift:.2e}"),
    ));
}

fn run_sweep_binary(dir: &Path, jobs: usize) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_serfsim"))
        .args(["sweep", "--B-min-nT", "1", "--B-max-nT", "1000", "--B-count", "24", "--jobs", &jobs.to_string(), "--out-dir"])
        .arg(dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "sweep exited with {}", out.status);
    let mut bytes = fs::read(dir.join("sweep.csv")).unwrap();
    bytes.extend(fs::read(dir.join("sweep_summary.csv")).unwrap());
    bytes
}

fn parse_sweep(path: &Path) -> Vec<SweepRow> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            SweepRow {
                b_nt: f[0].parse().unwrap(),
                probe: f[1].parse().unwrap(),
                gamma0: f[2].parse().unwrap(),
                omega0: f[3].parse().unwrap(),
                converged: f[4] == "true",
            }
        })
        .collect()
}

fn criteria_3_4_11(out: &mut Vec<Verdict>) {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let a = run_sweep_binary(first.path(), 1);
    let rows = parse_sweep(&first.path().join("sweep.csv"));

    let circ = summarize_probe(&rows, Polarization::CircularPlus).unwrap();
    let lin = summarize_probe(&rows, Polarization::LinearPi).unwrap();
    let ratio = lin.midpoint_b_nt.max(circ.midpoint_b_nt) / lin.midpoint_b_nt.min(circ.midpoint_b_nt);
    out.push(verdict(
        3,
        "shared SERF threshold, midpoint fields within a factor 1.3",
        ratio.is_finite() && ratio <= 1.3,
        format!("circular {:.3} nT, linear {:.3} nT, ratio {ratio:.4}", circ.midpoint_b_nt, lin.midpoint_b_nt),
    ));

    let (pc, pl) = (circ.threshold.map(|t| t.exponent), lin.threshold.map(|t| t.exponent));
    let ok = |p: Option<f64>| p.is_some_and(|p| (p - 2.0).abs() <= 0.2);
    out.push(verdict(
        4,
        "quadratic approach, p = 2 +- 0.2",
        ok(pc) && ok(pl),
        format!("circular p = {:.4}, linear p = {:.4}", pc.unwrap_or(f64::NAN), pl.unwrap_or(f64::NAN)),
    ));

    let b = run_sweep_binary(second.path(), 3);
    out.push(verdict(
        11,
        "determinism, repeated sweeps byte-identical",
        a == b,
        format!("{} bytes compared, jobs 1 vs 3", a.len()),
    ));
}

fn criterion_6(out: &mut Vec<Verdict>) {
    let sys = build_system(HalfInt::from_twice(3)).unwrap();
    let basis = tensor_basis(&sys);
    let modes = eigenmodes(&build_linear(&sys, &RunConfig::default().params(28.0)), &basis).unwrap();
    let q = q_coefficients(&sys, &modes);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (&(k, from, to), v) in &q.entries {
        if from.l == 0 || to.m != from.m + k {
            worst = worst.max(v.norm());
            checked += 1;
        }
    }
    out.push(verdict(6, "selection rules, forbidden Q{k} <= 1e-12", worst <= 1e-12, format!("{checked} forbidden elements, max |Q| = {worst:.2e}")));
}

fn criterion_8(out: &mut Vec<Verdict>) {
    let cfg = RunConfig::default();
    let b = 10.0;
    let sys = build_system(HalfInt::from_twice(3)).unwrap();
    let basis = tensor_basis(&sys);
    let params = SimParams { spin_exchange: SpinExchange::Linearized, ..cfg.params(b) };
    let modes = eigenmodes(&build_linear(&sys, &params), &basis).unwrap();
    let rho0 = spin_temperature_state(&sys, cfg.polarization, [1.0, 0.0, 0.0]).unwrap();
    let traj = evolve(&rho0, &sys, &params, cfg.t_end(), cfg.dt(), 1).unwrap();

    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    let mut quad_rate = f64::NAN;
    let mut all_ok = true;
    for f in sys.manifolds() {
        let f_int = f.as_integer().unwrap();
        for l in 1..=2 * f_int {
            for m in 1..=l {
                let series = component_series(&traj, &basis, l, m, f, f).unwrap();
                let peak = series.iter().map(|z| z.norm()).fold(0.0, f64::max);
                if peak < 1e-12 {
                    continue;
                }
                let mut pair: Vec<_> = modes.iter().filter(|md| md.l == l && md.m == m).collect();
                pair.sort_by(|a, b| b.lambda.re.total_cmp(&a.lambda.re));
                let slow = pair.iter().find(|md| md.branch == Branch::Plus).unwrap();
                // Window: the faster partner has decayed by 1e4 relative to the
                // slow mode, and the slow mode by no more than 1e7.
                let start = match pair.iter().find(|md| md.branch == Branch::Minus) {
                    Some(fast) => (1e4f64.ln() / (slow.lambda.re - fast.lambda.re)).max(cfg.t0()),
                    None => cfg.t0(),
                };
                let end = (start + 1e7f64.ln() / -slow.lambda.re).min(cfg.t_end());
                let idx: Vec<usize> = (0..traj.len()).filter(|&i| traj.times[i] >= start && traj.times[i] <= end).collect();
                let signal = FidSignal::new(idx.iter().map(|&i| traj.times[i]).collect(), idx.iter().map(|&i| series[i].re).collect()).unwrap();
                let fit = fit_fid(&signal, start, &FitOptions::default()).unwrap();
                let eg = fit.params.gamma0 / -slow.lambda.re - 1.0;
                let ew = fit.params.omega0 / slow.lambda.im.abs() - 1.0;
                worst = worst.max(eg.abs()).max(ew.abs());
                all_ok &= eg.abs() <= 0.01 && ew.abs() <= 0.01 && fit.converged;
                details.push(format!("({l},{m},F={f}):{:+.1e}/{:+.1e}", eg, ew));
                if l == 2 && m == 2 && f_int == 2 {
                    quad_rate = fit.params.gamma0;
                }
            }
        }
    }
    let no_slow_branch = quad_rate >= 0.3 * cfg.r_se;
    out.push(verdict(
        8,
        "linear theory, fitted (Gamma, omega) within 1%, no slow L=|M|=2 branch",
        all_ok && no_slow_branch,
        format!("max rel err {worst:.2e}; Gamma(2,2) = {quad_rate:.1} /s vs 0.3 R_SE = {:.0}; {}", 0.3 * cfg.r_se, details.join(" ")),
    ));
}

fn criterion_9(out: &mut Vec<Verdict>) {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    let truth = FidParams { a: 0.2, t1: 5e-3, c: 1.0, gamma0: 300.0, omega0: 2.0 * PI * 130.0, phi: 0.3 };
    let times: Vec<f64> = (0..10_001).map(|i| i as f64 * 1e-6).collect();
    let clean: Vec<f64> = times.iter().map(|&t| truth.eval(t)).collect();
    let fit = fit_fid(&FidSignal::new(times.clone(), clean.clone()).unwrap(), 0.0, &FitOptions::default()).unwrap().params;
    let pairs = [(fit.a, truth.a), (fit.t1, truth.t1), (fit.c, truth.c), (fit.gamma0, truth.gamma0), (fit.omega0, truth.omega0), (fit.phi, truth.phi)];
    let noiseless = pairs.iter().map(|(g, w)| ((g - w) / w).abs()).fold(0.0, f64::max);

    let noise = Normal::new(0.0, 0.01 * truth.c).unwrap();
    let mut noisy: f64 = 0.0;
    for seed in 0..20 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let values = clean.iter().map(|v| v + noise.sample(&mut rng)).collect();
        let p = fit_fid(&FidSignal::new(times.clone(), values).unwrap(), 0.0, &FitOptions::default()).unwrap().params;
        noisy = noisy.max(((p.gamma0 - truth.gamma0) / truth.gamma0).abs()).max(((p.omega0 - truth.omega0) / truth.omega0).abs());
    }
    out.push(verdict(
        9,
        "fit round trip, noiseless <= 0.1%, 1% noise within 2%",
        noiseless <= 1e-3 && noisy <= 0.02,
        format!("noiseless max rel err {noiseless:.2e}; noisy max rel err over 20 seeds {noisy:.2e}"),
    ));
}

fn criterion_10(out: &mut Vec<Verdict>) {
    let cfg = RunConfig { polarization: 0.5, ..RunConfig::default() };
    let setup = Setup::new(&cfg).unwrap();
    let traj = simulate(&setup, &cfg.params(10.0), &cfg).unwrap();
    let eta = eta_br(&traj, &setup.basis, cfg.t0()).unwrap();
    out.push(verdict(10, "eta_br in [0.3, 3] at P = 0.5, B = 10 nT", (0.3..=3.0).contains(&eta), format!("eta_br = {eta:.4}")));
}

fn main() {
    let mut verdicts = Vec::new();
    criteria_1_2_5_7(&mut verdicts);
    criteria_3_4_11(&mut verdicts);
    criterion_6(&mut verdicts);
    criterion_8(&mut verdicts);
    criterion_9(&mut verdicts);
    criterion_10(&mut verdicts);
    verdicts.sort_by_key(|v| v.id);

    let mut failed = 0;
    for v in &verdicts {
        println!("criterion {:>2} {}: {} ({})", v.id, if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", verdicts.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
