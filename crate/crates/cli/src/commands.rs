//! Subcommand bodies. Each one validates its whole input before creating the
//! output directory, so a configuration error leaves no files behind.

use std::path::{Path, PathBuf};

use backheat::coefficients::{CoefficientFamily, ProfileRegistry};
use backheat::energy::{generate_corpus, gamma_scan, EnergyReport, GammaEntry};
use backheat::evolution::SolverRegistry;
use backheat::fmt::{atomic_write, float};
use backheat::ledger::{self, LedgerRow};
use backheat::paraproduct::{min_positivity_order, positivity_test_fields};
use backheat::probes::{run_probe, sweep_fields, ProbeRegistry};
use backheat::reconstruction::{fit_sweep, gaussian_bump, monotone_up_to_noise, write_sweep, Experiment};
use backheat::spectral::{band_limited_random, io, Field};
use backheat::weights::{log_neg_phi, log_psi, proof_constants, WeightParams, DEFAULT_TOL};
use log::{info, warn};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const LEDGER_FILE: &str = "constants_ledger.csv";
pub const ENERGY_FILE: &str = "energy_report.json";
pub const SWEEP_FILE: &str = "reconstruction_sweep.csv";
pub const FIT_FILE: &str = "reconstruction_fit.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const FINAL_STATE_FILE: &str = "final_state.bhf";
pub const FINAL_STATE_CSV: &str = "final_state.csv";
pub const WEIGHTS_FILE: &str = "weights_table.csv";

/// Where results go and what the run is seeded with.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub theta_override: Option<Vec<f64>>,
}

fn emit(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(backheat::Error::from)?;
    let path = dir.join(name);
    atomic_write(&path, bytes)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn build_family(cfg: &ExperimentConfig) -> Result<CoefficientFamily, CliError> {
    let fam = cfg.family.build(&ProfileRegistry::with_builtins()).map_err(CliError::in_config)?;
    fam.require_elliptic(cfg.horizon).map_err(CliError::in_config)?;
    Ok(fam)
}

fn family_label(cfg: &ExperimentConfig) -> String {
    let kinds: Vec<&str> = cfg.family.entries.iter().map(|e| e.kind.as_str()).collect();
    kinds.join("+")
}

fn check_horizon(cfg: &ExperimentConfig) -> Result<(), CliError> {
    if !(cfg.horizon > 0.0) || !cfg.horizon.is_finite() {
        return Err(CliError::Config(format!("horizon T = {} must be positive", cfg.horizon)));
    }
    cfg.grid.validate().map_err(CliError::in_config)
}

pub fn lp_analyze(ctx: &RunContext) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let lp = &cfg.lp;
    check_horizon(cfg)?;
    let registry = ProbeRegistry::with_builtins();
    let names: Vec<String> = if lp.estimates.is_empty() {
        registry.names().iter().map(|s| s.to_string()).collect()
    } else {
        lp.estimates.clone()
    };
    let probes = names.iter().map(|n| registry.get(n)).collect::<Result<Vec<_>, _>>().map_err(CliError::in_config)?;
    let thetas = ctx.theta_override.clone().unwrap_or_else(|| lp.thetas.clone());
    if thetas.is_empty() {
        return Err(CliError::Empty("theta list".into()));
    }
    if lp.sweep_size == 0 {
        return Err(CliError::Empty("lp sweep of size 0".into()));
    }
    let c = lp.coefficient;
    let a = Field::from_fn(cfg.grid, |x| c.mean + c.amplitude * (c.mode * x[0]).sin()).map_err(CliError::in_config)?;
    if a.min_real() < lp.kappa {
        return Err(CliError::Config(format!("coefficient minimum {} is below kappa {}", a.min_real(), lp.kappa)));
    }

    let fields = sweep_fields(cfg.grid, lp.sweep_size, ctx.seed)?;
    let order = match lp.order {
        Some(m) => m,
        None => {
            let tests = positivity_test_fields(&a, lp.sweep_size, ctx.seed)?;
            match min_positivity_order(&a, lp.kappa, &tests, lp.max_order) {
                Ok(cert) => cert.m,
                Err(e @ backheat::Error::NoPositiveOrder { .. }) => return Err(CliError::Invariant(e.to_string())),
                Err(e) => return Err(e.into()),
            }
        }
    };
    info!("paraproduct order {order}");
    let mut rows: Vec<LedgerRow> = Vec::new();
    for p in &probes {
        rows.extend(run_probe(*p, &a, order, &thetas, &fields, ctx.seed)?);
    }
    let mut buf = Vec::new();
    ledger::write(&rows, &mut buf)?;
    emit(&ctx.out_dir, LEDGER_FILE, &buf)?;

    let mut failures = Vec::new();
    for r in &rows {
        let ok = match r.estimate_id.as_str() {
            _ if !r.measured_constant.is_finite() => false,
            "bernstein" => r.measured_constant <= 1.0 + 1e-9,
            "sobolev-equivalence" => r.measured_constant <= lp.equivalence_bound,
            "paraproduct-positivity" => r.measured_constant >= 0.5 * lp.kappa,
            _ => true,
        };
        if !ok {
            failures.push(format!("{} at theta {}: {}", r.estimate_id, r.theta, r.measured_constant));
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(failures.join("; ")))
    }
}

/// Weight parameters for the energy run, with lambda resolved from the threshold when absent.
pub fn energy_params(cfg: &ExperimentConfig) -> Result<WeightParams, CliError> {
    let e = &cfg.energy;
    let base = WeightParams::from_horizon(cfg.horizon, e.alpha1, 2.0, 0.0).map_err(CliError::in_config)?;
    let lambda = match e.lambda {
        Some(l) => l,
        None => {
            let pc = proof_constants(e.kappa, base.alpha, base.sigma, base.tau).map_err(CliError::in_config)?;
            pc.lambda_bar * e.lambda_factor
        }
    };
    base.with_lambda(lambda).map_err(CliError::in_config)
}

pub fn verify_energy(ctx: &RunContext) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let e = &cfg.energy;
    check_horizon(cfg)?;
    let params = energy_params(cfg)?;
    let family = build_family(cfg)?;
    if !family.is_x_independent() {
        return Err(CliError::Config("energy verification needs space-independent coefficients".into()));
    }
    if e.gammas.is_empty() {
        return Err(CliError::Empty("gamma list".into()));
    }
    if let Some(g) = e.gammas.iter().find(|g| !(**g > 0.0) || !g.is_finite()) {
        return Err(CliError::Config(format!("gamma {g} must be positive")));
    }
    if e.snapshots < 2 {
        return Err(CliError::Config("energy.snapshots must be at least 2".into()));
    }
    if e.corpus_size == 0 {
        return Err(CliError::Empty("energy corpus of size 0".into()));
    }
    info!("lambda = {}", float(params.lambda));
    let corpus =
        generate_corpus(cfg.grid, &family, &family_label(cfg), e.corpus_size, e.snapshots, &params, e.band, ctx.seed)?;
    let scans = gamma_scan(&params, &e.gammas, &corpus, e.gap)?;
    let report = EnergyReport {
        params: (&params).into(),
        gamma_scan: scans.iter().map(GammaEntry::from).collect(),
        corpus_descriptor: corpus.descriptor.clone(),
        seeds: corpus.seeds.clone(),
    };
    emit(&ctx.out_dir, ENERGY_FILE, report.to_json().as_bytes())?;
    match scans.iter().find(|s| s.log_m.is_nan() || s.log_m == f64::INFINITY) {
        Some(s) => Err(CliError::Invariant(format!("gamma {}: log M = {}", s.gamma, s.log_m))),
        None => Ok(()),
    }
}

pub fn reconstruct(ctx: &RunContext) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let r = &cfg.reconstruction;
    check_horizon(cfg)?;
    let thetas = ctx.theta_override.clone().unwrap_or_else(|| r.thetas.clone());
    if thetas.is_empty() {
        return Err(CliError::Empty("theta list".into()));
    }
    if r.seeds.is_empty() {
        return Err(CliError::Empty("seed list".into()));
    }
    if let Some(t) = thetas.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(CliError::Config(format!("noise level {t} outside (0, 1)")));
    }
    let family = build_family(cfg)?;
    let truth = gaussian_bump(cfg.grid, r.truth_width).map_err(CliError::in_config)?;
    let d = r.bound_d.unwrap_or_else(|| truth.sobolev_norm(1.0));
    let exp = Experiment::new(truth, &family, cfg.horizon, d).map_err(CliError::in_config)?;
    // the run seed offsets every configured measurement seed
    let seeds: Vec<u64> = r.seeds.iter().map(|s| s.wrapping_add(ctx.seed)).collect();
    let rows = exp.sweep(&thetas, &seeds)?;
    let mut buf = Vec::new();
    write_sweep(&rows, &mut buf)?;
    emit(&ctx.out_dir, SWEEP_FILE, &buf)?;

    let fit = fit_sweep(&rows)?;
    emit(&ctx.out_dir, FIT_FILE, fit.to_json().as_bytes())?;
    let mut failures = Vec::new();
    for row in &rows {
        let rep = &row.report;
        if !rep.h1_bound_holds() || !rep.proximity_bound_holds() {
            failures.push(format!("bound violated at theta {} seed {}", rep.theta, rep.seed));
        }
    }
    if !(fit.delta > 0.0) {
        failures.push(format!("fitted rate {} is not positive", fit.delta));
    }
    if !monotone_up_to_noise(&rows) {
        warn!("errors are not monotone in the noise level");
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(failures.join("; ")))
    }
}

pub fn forward_solve(ctx: &RunContext) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let f = &cfg.forward;
    check_horizon(cfg)?;
    let family = build_family(cfg)?;
    let registry = SolverRegistry::with_builtins();
    let solver = registry.get(&f.solver).map_err(CliError::in_config)?;
    if f.steps == 0 {
        return Err(CliError::Config("forward.steps must be positive".into()));
    }
    let u0 = band_limited_random(cfg.grid, f.band[0], f.band[1], ctx.seed).map_err(CliError::in_config)?;
    let traj = solver.solve(&u0, &family, cfg.horizon, f.steps)?;
    let mut buf = Vec::new();
    traj.write_norms(&mut buf)?;
    emit(&ctx.out_dir, TRAJECTORY_FILE, &buf)?;
    emit(&ctx.out_dir, FINAL_STATE_FILE, &io::encode(traj.last()))?;
    let mut csv = Vec::new();
    io::write_csv(traj.last(), &mut csv)?;
    emit(&ctx.out_dir, FINAL_STATE_CSV, &csv)?;
    Ok(())
}

pub fn weights_table(ctx: &RunContext) -> Result<(), CliError> {
    let w = &ctx.config.weights_table;
    if w.lambdas.is_empty() || w.samples == 0 {
        return Err(CliError::Empty("weights table".into()));
    }
    if let Some(l) = w.lambdas.iter().find(|l| !(**l > 1.0) || !l.is_finite()) {
        return Err(CliError::Config(format!("lambda {l} must exceed 1")));
    }
    let mut out = String::from("lambda,y,log_psi,psi,log_neg_phi,phi\n");
    for &lambda in &w.lambdas {
        for i in 1..=w.samples {
            let y = i as f64 / w.samples as f64;
            let lp = match log_psi(lambda, y) {
                Ok(v) => v,
                Err(backheat::Error::Overflow { .. }) => f64::INFINITY,
                Err(e) => return Err(e.into()),
            };
            let ln = log_neg_phi(lambda, y, DEFAULT_TOL)?;
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                float(lambda),
                float(y),
                float(lp),
                float(lp.exp()),
                float(ln),
                float(-ln.exp())
            ));
        }
    }
    emit(&ctx.out_dir, WEIGHTS_FILE, out.as_bytes())
}
