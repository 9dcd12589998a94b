//! Command implementations behind the `serfsim` binary.
//!
//! Every command reads a [`RunConfig`], writes CSV files into `out_dir` and
//! returns the written paths or a [`CliError`] that maps to the exit code.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serf_core::angular::{tensor_basis, HalfInt, TensorBasis};
use serf_core::dynamics::{evolve, SimParams, Trajectory};
use serf_core::fitting::{fit_fid, low_field_subset, quadratic_threshold_fit, FitOptions, FitResult, ThresholdFit};
use serf_core::hilbert::{build_system, spin_temperature_state, DensityMatrix, SpinSystem};
use serf_core::multipole::component_series;
use serf_core::observables::{synth_fid, FidSignal, Polarization, ProbeConfig};
use serf_core::superop::{build_linear, eigenmodes, find_mode, perturbative_birefringent, Branch, ModeLabel, PerturbOptions};

pub mod config;

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Numerics(String),
    #[error("fit degenerate on every probe")]
    Degenerate,
    #[error("only {converged} of {total} sweep fits converged")]
    Quorum { converged: usize, total: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 2,
            CliError::Numerics(_) => 3,
            CliError::Degenerate => 4,
            CliError::Quorum { .. } => 5,
        }
    }
}

impl From<serf_core::Error> for CliError {
    fn from(e: serf_core::Error) -> Self {
        use serf_core::Error as E;
        match e {
            E::TraceDrift { .. } | E::Decomposition(_) | E::NotHermitian(_) | E::NotPositive(_) | E::BadTrace(_) => CliError::Numerics(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Fixed 17-significant-digit scientific format used in every CSV.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(dir: &Path, name: &str, body: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    let path = dir.join(name);
    fs::write(&path, body).map_err(|source| CliError::Io { path: path.clone(), source })?;
    Ok(path)
}

pub const FIT_HEADER: &str = "probe,A,T1_s,C,Gamma0_per_s,omega0_rad_s,phi_rad,residual_rms,converged";

pub fn fit_row(label: &str, fit: &FitResult) -> String {
    let p = &fit.params;
    format!(
        "{label},{},{},{},{},{},{},{},{}\n",
        num(p.a),
        num(p.t1),
        num(p.c),
        num(p.gamma0),
        num(p.omega0),
        num(p.phi),
        num(fit.residual_rms),
        fit.converged
    )
}

/// Everything needed to simulate one field value.
pub struct Setup {
    pub system: SpinSystem,
    pub basis: TensorBasis,
    pub rho0: DensityMatrix,
}

impl Setup {
    pub fn new(cfg: &RunConfig) -> CliResult<Self> {
        let system = build_system(HalfInt::from_twice(cfg.twice_i))?;
        let basis = tensor_basis(&system);
        let rho0 = spin_temperature_state(&system, cfg.polarization, [1.0, 0.0, 0.0])?;
        Ok(Setup { system, basis, rho0 })
    }
}

/// Integration substeps per output sample so that the stability guard holds.
pub fn substeps(params: &SimParams, dt: f64) -> usize {
    (dt / params.max_stable_dt()).ceil().max(1.0) as usize
}

/// Evolves from the transverse spin-temperature state, one sample per `dt`.
pub fn simulate(setup: &Setup, params: &SimParams, cfg: &RunConfig) -> CliResult<Trajectory> {
    let dt = cfg.dt();
    let n = substeps(params, dt);
    Ok(evolve(&setup.rho0, &setup.system, params, cfg.t_end(), dt / n as f64, n)?)
}

pub struct ProbeRun {
    pub probe: Polarization,
    pub signal: FidSignal,
    pub fit: FitResult,
}

pub fn probe_runs(setup: &Setup, traj: &Trajectory, cfg: &RunConfig) -> CliResult<Vec<ProbeRun>> {
    cfg.probes
        .iter()
        .map(|&probe| {
            let signal = synth_fid(traj, &setup.basis, &ProbeConfig::new(probe), false)?;
            let fit = fit_fid(&signal, cfg.t0(), &FitOptions::default())?;
            Ok(ProbeRun { probe, signal, fit })
        })
        .collect()
}

pub fn cmd_fid(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let setup = Setup::new(cfg)?;
    let params = cfg.params(cfg.b_nt);
    let traj = simulate(&setup, &params, cfg)?;
    let full = RunConfig { probes: vec![Polarization::CircularPlus, Polarization::LinearPi], ..cfg.clone() };
    let runs = probe_runs(&setup, &traj, &full)?;

    let mut body = String::from("t_s,circular,linear\n");
    for (i, t) in traj.times.iter().enumerate() {
        let _ = writeln!(body, "{},{},{}", num(*t), num(runs[0].signal.values[i]), num(runs[1].signal.values[i]));
    }
    let mut fits = format!("{FIT_HEADER}\n");
    for run in runs.iter().filter(|r| cfg.probes.contains(&r.probe)) {
        fits.push_str(&fit_row(run.probe.label(), &run.fit));
    }
    let paths = vec![write_file(&cfg.out_dir, "fid.csv", &body)?, write_file(&cfg.out_dir, "fid_fit.csv", &fits)?];
    if runs.iter().filter(|r| cfg.probes.contains(&r.probe)).all(|r| r.fit.degenerate) {
        return Err(CliError::Degenerate);
    }
    Ok(paths)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub b_nt: f64,
    pub probe: Polarization,
    pub gamma0: f64,
    pub omega0: f64,
    pub converged: bool,
}

impl SweepRow {
    fn usable(&self) -> bool {
        self.converged && self.gamma0.is_finite()
    }
}

/// One sweep point: all probes at field `b_nt`. Failures become unconverged rows.
pub fn sweep_point(setup: &Setup, cfg: &RunConfig, b_nt: f64) -> Vec<SweepRow> {
    let params = cfg.params(b_nt);
    let runs = simulate(setup, &params, cfg).and_then(|traj| probe_runs(setup, &traj, cfg));
    match runs {
        Ok(runs) => runs
            .into_iter()
            .map(|r| SweepRow {
                b_nt,
                probe: r.probe,
                gamma0: r.fit.params.gamma0,
                omega0: r.fit.params.omega0,
                converged: r.fit.converged && !r.fit.degenerate,
            })
            .collect(),
        Err(_) => cfg
            .probes
            .iter()
            .map(|&probe| SweepRow { b_nt, probe, gamma0: f64::NAN, omega0: f64::NAN, converged: false })
            .collect(),
    }
}

pub fn run_sweep(cfg: &RunConfig) -> CliResult<Vec<SweepRow>> {
    let fields = cfg.fields()?;
    let setup = Setup::new(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let per_point: Vec<Vec<SweepRow>> = pool.install(|| fields.par_iter().map(|&b| sweep_point(&setup, cfg, b)).collect());
    Ok(per_point.into_iter().flatten().collect())
}

/// Plateaus, midpoint crossing and low-field threshold fit of one probe's `Gamma0(B)`.
#[derive(Clone, Debug)]
pub struct ProbeSummary {
    pub probe: Polarization,
    pub lower_plateau: f64,
    pub upper_plateau: f64,
    pub midpoint_b_nt: f64,
    pub threshold: Option<ThresholdFit>,
}

/// Share of the full rise that still counts as the low-field regime.
pub const LOW_FIELD_FRACTION: f64 = 0.1;

pub fn summarize_probe(rows: &[SweepRow], probe: Polarization) -> Option<ProbeSummary> {
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.probe == probe && r.usable()).map(|r| (r.b_nt, r.gamma0)).collect();
    if pts.len() < 2 {
        return None;
    }
    let subset = low_field_subset(&pts, LOW_FIELD_FRACTION, 5);
    let threshold = quadratic_threshold_fit(&subset).ok();
    let lower = pts[0].1;
    let upper = pts[pts.len() - 1].1;
    let mid = 0.5 * (lower + upper);
    let midpoint = crossing(&pts, mid).unwrap_or(f64::NAN);
    Some(ProbeSummary { probe, lower_plateau: lower, upper_plateau: upper, midpoint_b_nt: midpoint, threshold })
}

/// First field at which the rate reaches `level`, interpolated linearly in `log B`.
pub fn crossing(pts: &[(f64, f64)], level: f64) -> Option<f64> {
    pts.windows(2).find_map(|w| {
        let ((b0, g0), (b1, g1)) = (w[0], w[1]);
        if (g0 - level) * (g1 - level) <= 0.0 && g0 != g1 {
            let f = (level - g0) / (g1 - g0);
            Some((b0.ln() + f * (b1.ln() - b0.ln())).exp())
        } else {
            None
        }
    })
}

/// Rate ratios `Gamma_linear / Gamma_circular` at fields inside the circular low-field subset.
pub fn serf_ratios(rows: &[SweepRow]) -> Vec<f64> {
    let circ: Vec<(f64, f64)> = rows.iter().filter(|r| r.probe == Polarization::CircularPlus && r.usable()).map(|r| (r.b_nt, r.gamma0)).collect();
    if circ.is_empty() {
        return vec![];
    }
    let subset = low_field_subset(&circ, LOW_FIELD_FRACTION, 1);
    subset
        .iter()
        .filter_map(|&(b, g)| {
            rows.iter()
                .find(|r| r.probe == Polarization::LinearPi && r.b_nt == b && r.usable())
                .map(|r| r.gamma0 / g)
        })
        .collect()
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut body = String::from("B_nT,probe,Gamma0_per_s,omega0_rad_s,converged\n");
    for r in rows {
        let _ = writeln!(body, "{},{},{},{},{}", num(r.b_nt), r.probe.label(), num(r.gamma0), num(r.omega0), r.converged);
    }
    body
}

pub fn summary_csv(rows: &[SweepRow], probes: &[Polarization]) -> String {
    let mut q: Vec<(String, f64)> = Vec::new();
    for &probe in probes {
        let Some(s) = summarize_probe(rows, probe) else { continue };
        let p = probe.label();
        q.push((format!("{p}_lower_plateau_per_s"), s.lower_plateau));
        q.push((format!("{p}_upper_plateau_per_s"), s.upper_plateau));
        q.push((format!("{p}_midpoint_B_nT"), s.midpoint_b_nt));
        if let Some(t) = s.threshold {
            q.push((format!("{p}_threshold_plateau_per_s"), t.plateau));
            q.push((format!("{p}_threshold_curvature"), t.curvature));
            q.push((format!("{p}_threshold_exponent"), t.exponent));
        }
    }
    let ratios = serf_ratios(rows);
    if !ratios.is_empty() {
        q.push(("serf_ratio_median".into(), median(&ratios)));
        q.push(("serf_ratio_min".into(), ratios.iter().copied().fold(f64::INFINITY, f64::min)));
        q.push(("serf_ratio_max".into(), ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max)));
    }
    let mut body = String::from("quantity,value\n");
    for (k, v) in q {
        let _ = writeln!(body, "{k},{}", num(v));
    }
    body
}

/// Minimum share of converged rows for a sweep to succeed.
pub const SWEEP_QUORUM: f64 = 0.8;

pub fn cmd_sweep(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let rows = run_sweep(cfg)?;
    let paths = vec![
        write_file(&cfg.out_dir, "sweep.csv", &sweep_csv(&rows))?,
        write_file(&cfg.out_dir, "sweep_summary.csv", &summary_csv(&rows, &cfg.probes))?,
    ];
    let converged = rows.iter().filter(|r| r.converged).count();
    if (converged as f64) < SWEEP_QUORUM * rows.len() as f64 {
        return Err(CliError::Quorum { converged, total: rows.len() });
    }
    Ok(paths)
}

pub fn cmd_eig(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let system = build_system(HalfInt::from_twice(cfg.twice_i))?;
    let basis = tensor_basis(&system);
    let modes = eigenmodes(&build_linear(&system, &cfg.params(cfg.b_nt)), &basis)?;
    let mut body = String::from("L,M,branch,re_lambda_per_s,im_lambda_rad_s,classification_overlap\n");
    for m in &modes {
        let branch = if m.mixed { "mixed".to_string() } else { m.branch.to_string() };
        let _ = writeln!(body, "{},{},{},{},{},{}", m.l, m.m, branch, num(m.lambda.re), num(m.lambda.im), num(m.overlap));
    }
    Ok(vec![write_file(&cfg.out_dir, "eig.csv", &body)?])
}

pub const PERTURB_HEADER: &str = "M,re_lambda_pred_per_s,im_lambda_pred_rad_s,Gamma0_fit_per_s,omega0_fit_rad_s,gamma_ratio,omega_ratio,amplitude_pred,amplitude_fit,amplitude_ratio,warning";

#[derive(Clone, Debug)]
pub struct PerturbRow {
    pub m: i32,
    pub lambda_pred: num_complex::Complex64,
    pub gamma_fit: f64,
    pub omega_fit: f64,
    pub amplitude_pred: f64,
    pub amplitude_fit: f64,
    pub warning: String,
}

impl PerturbRow {
    pub fn gamma_ratio(&self) -> f64 {
        -self.lambda_pred.re / self.gamma_fit
    }

    pub fn omega_ratio(&self) -> f64 {
        self.lambda_pred.im.abs() / self.omega_fit
    }

    pub fn amplitude_ratio(&self) -> f64 {
        self.amplitude_pred / self.amplitude_fit
    }
}

/// `;`-joined flags for the `warning` column, `none` if all are clear.
pub fn perturb_warning(degenerate_denominator: bool, high_polarization: bool, fit_degenerate: bool) -> String {
    let flags = [
        (degenerate_denominator, "degenerate_denominator"),
        (high_polarization, "high_polarization"),
        (fit_degenerate, "fit_degenerate"),
    ];
    let set: Vec<&str> = flags.iter().filter(|f| f.0).map(|f| f.1).collect();
    if set.is_empty() {
        "none".to_string()
    } else {
        set.join(";")
    }
}

/// Predicted birefringent eigenvalues and amplitudes next to fits of the simulated `rho_{2,+-2}` components.
pub fn perturb_rows(cfg: &RunConfig) -> CliResult<Vec<PerturbRow>> {
    let setup = Setup::new(cfg)?;
    let params = cfg.params(cfg.b_nt);
    let pred = perturbative_birefringent(&setup.system, &setup.basis, &params, &setup.rho0, &PerturbOptions::default())?;
    let traj = simulate(&setup, &params, cfg)?;
    let upper = setup.system.upper_manifold();

    [2, -2]
        .into_iter()
        .enumerate()
        .map(|(i, m)| {
            let series = component_series(&traj, &setup.basis, 2, m, upper, upper)?;
            let signal = FidSignal::new(traj.times.clone(), series.iter().map(|z| z.re).collect())?;
            let fit = fit_fid(&signal, cfg.t0(), &FitOptions::default())?;
            let p = fit.params;
            Ok(PerturbRow {
                m,
                lambda_pred: pred.lambda_birefringent[i],
                gamma_fit: p.gamma0,
                omega_fit: p.omega0,
                amplitude_pred: pred.predicted_component[i].norm(),
                amplitude_fit: p.c * (-p.gamma0 * pred.t0).exp(),
                warning: perturb_warning(pred.degenerate, pred.high_polarization, !fit.converged || fit.degenerate),
            })
        })
        .collect()
}

pub fn cmd_perturb(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let rows = perturb_rows(cfg)?;
    let mut body = format!("{PERTURB_HEADER}\n");
    for r in &rows {
        let _ = writeln!(
            body,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.m,
            num(r.lambda_pred.re),
            num(r.lambda_pred.im),
            num(r.gamma_fit),
            num(r.omega_fit),
            num(r.gamma_ratio()),
            num(r.omega_ratio()),
            num(r.amplitude_pred),
            num(r.amplitude_fit),
            num(r.amplitude_ratio()),
            r.warning
        );
    }
    Ok(vec![write_file(&cfg.out_dir, "perturb.csv", &body)?])
}

/// Reads `t_s` and one value column; `column = None` takes the second column.
pub fn read_signal(path: &Path, column: Option<&str>) -> CliResult<(String, FidSignal)> {
    let usage = |msg: String| CliError::Usage(format!("{}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| usage(e.to_string()))?;
    let headers = reader.headers().map_err(|e| usage(e.to_string()))?.clone();
    if headers.get(0) != Some("t_s") || headers.len() < 2 {
        return Err(usage("expected a header starting with t_s followed by a value column".into()));
    }
    let idx = match column {
        Some(name) => headers.iter().position(|h| h == name).filter(|&i| i > 0).ok_or_else(|| usage(format!("no column {name:?}")))?,
        None => 1,
    };
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| usage(e.to_string()))?;
        let parse = |i: usize| -> CliResult<f64> {
            record
                .get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| usage(format!("row {}: bad number in column {}", line + 2, i + 1)))
        };
        times.push(parse(0)?);
        values.push(parse(idx)?);
    }
    let signal = FidSignal::new(times, values).map_err(|e| usage(e.to_string()))?;
    Ok((headers[idx].to_string(), signal))
}

pub fn cmd_fit(cfg: &RunConfig, input: &Path, column: Option<&str>) -> CliResult<Vec<PathBuf>> {
    let (label, signal) = read_signal(input, column)?;
    let fit = fit_fid(&signal, cfg.t0(), &FitOptions::default())?;
    let body = format!("{FIT_HEADER}\n{}", fit_row(&label, &fit));
    Ok(vec![write_file(&cfg.out_dir, "fit.csv", &body)?])
}

/// `2 (-Re, Im) lambda_+^{1,1}` of the linear superoperator at field `b_nt`.
pub fn doubled_larmor_eigenvalue(cfg: &RunConfig, b_nt: f64) -> CliResult<(f64, f64)> {
    let system = build_system(HalfInt::from_twice(cfg.twice_i))?;
    let basis = tensor_basis(&system);
    let modes = eigenmodes(&build_linear(&system, &cfg.params(b_nt)), &basis)?;
    let larmor = find_mode(&modes, ModeLabel::new(1, 1, Branch::Plus)).ok_or_else(|| CliError::Numerics("no Larmor mode".into()))?;
    Ok((-2.0 * larmor.lambda.re, 2.0 * larmor.lambda.im))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warning_flags_propagate() {
        assert_eq!(perturb_warning(false, false, false), "none");
        assert_eq!(perturb_warning(true, false, false), "degenerate_denominator");
        assert_eq!(perturb_warning(true, true, true), "degenerate_denominator;high_polarization;fit_degenerate");
    }

    #[test]
    fn crossing_interpolates_in_log_field() {
        let pts = [(1.0, 10.0), (10.0, 30.0), (100.0, 50.0)];
        assert!((crossing(&pts, 20.0).unwrap() - 10f64.sqrt()).abs() < 1e-12);
        assert_eq!(crossing(&pts, 60.0), None);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 2);
        assert_eq!(CliError::Numerics(String::new()).exit_code(), 3);
        assert_eq!(CliError::Degenerate.exit_code(), 4);
        assert_eq!(CliError::Quorum { converged: 1, total: 2 }.exit_code(), 5);
        let drift = serf_core::Error::TraceDrift { time: 0.0, drift: 1.0 };
        assert_eq!(CliError::from(drift).exit_code(), 3);
    }

    #[test]
    fn median_and_substeps() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let slow = RunConfig::default().params(28.0);
        assert_eq!(substeps(&slow, 1e-6), 1);
        let fast = RunConfig::default().params(1000.0);
        let n = substeps(&fast, 1e-6);
        assert!(n > 1 && 1e-6 / n as f64 <= fast.max_stable_dt());
    }
}
