//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Runs as a plain binary so the report is printed even when test output is captured.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use backheat::coefficients::{CoefficientFamily, Constant, Linear, LlExemplar, Sampled, TimeProfile, uniform_times, ll_shape};
use backheat::energy::{generate_corpus, gamma_scan, DEFAULT_GAP};
use backheat::evolution::{propagate, Direction, ForwardSolver, ImplicitMidpoint, SpectralExact};
use backheat::littlewood_paley::{apply_delta, block_symbol, check_bernstein, decompose, equivalence_ratio, top_shell};
use backheat::paraproduct::{apply_paraproduct, min_positivity_order, positivity_test_fields};
use backheat::probes::{run_probe, sweep_fields, ProbeRegistry};
use backheat::reconstruction::{gaussian_bump, monotone_up_to_noise, sweep_and_fit};
use backheat::spectral::{band_limited_random, Field, GridSpec};
use backheat::weights::{big_lambda, lambda_inverse, phi_prime, phi_second, proof_constants, psi, WeightParams};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn grid(period: f64, n: usize) -> GridSpec {
    GridSpec::one_d(period, n).expect("valid grid")
}

fn two_pi() -> f64 {
    2.0 * std::f64::consts::PI
}

fn weight_calculus() -> Outcome {
    let lambdas = [1.1, 1.5, 2.0, 2.5, 3.0];
    let zetas = [0.5, 0.75, 1.0, 1.25, 1.4];
    let ys = [0.3, 0.4, 0.5, 0.6, 0.7];
    let mut scaling: f64 = 0.0;
    for &l in &lambdas {
        for &z in &zetas {
            for &y in &ys {
                let lhs = psi(l, z * y).map_err(e2s)?;
                let p = z.powf(-l);
                let rhs = (p - 1.0).exp() * psi(l, y).map_err(e2s)?.powf(p);
                scaling = scaling.max(((lhs - rhs) / lhs).abs());
            }
        }
    }
    ensure(scaling <= 1e-10, format!("scaling identity error {scaling:.3e}"))?;

    let mut ode: f64 = 0.0;
    for &l in &[1.5, 2.0, 3.0, 5.0] {
        for &y in &[0.4, 0.5, 0.7, 0.9, 0.98] {
            let d1 = phi_prime(l, y).map_err(e2s)?;
            let h = 1e-6 * y;
            let d2 = (phi_prime(l, y + h).map_err(e2s)? - phi_prime(l, y - h).map_err(e2s)?) / (2.0 * h);
            // -lambda (Phi')^2 mu(1/Phi') with mu(s) = s (1 + |log s|)
            let s = 1.0 / d1;
            let rhs = -l * d1 * d1 * s * (1.0 + s.ln().abs());
            ode = ode.max(((y * d2 - rhs) / rhs).abs());
            let analytic = phi_second(l, y).map_err(e2s)?;
            ode = ode.max(((analytic - d2) / analytic).abs());
        }
    }
    ensure(ode <= 1e-6, format!("ODE identity error {ode:.3e}"))?;

    let mut round: f64 = 0.0;
    for &l in &[1.5, 2.0, 3.0] {
        for i in 0..=20 {
            let z = -1000.0 * i as f64 / 20.0;
            let y = lambda_inverse(l, z, 1e-13).map_err(e2s)?;
            let back = big_lambda(l, y, 1e-14).map_err(e2s)?;
            round = round.max((back - z).abs() / z.abs().max(1.0));
        }
    }
    ensure(round <= 1e-8, format!("Lambda inverse round trip {round:.3e}"))?;
    Ok(format!("scaling {scaling:.1e}, ODE {ode:.1e}, inverse {round:.1e}"))
}

fn littlewood_paley_suite() -> Outcome {
    let g = grid(two_pi(), 2048);
    let k = top_shell(&Field::zeros(g));
    let mut unity: f64 = 0.0;
    for i in 0..=4000 {
        let r = g.max_frequency() * i as f64 / 4000.0;
        let s: f64 = (0..=k).map(|j| block_symbol(j, r)).sum();
        unity = unity.max((s - 1.0).abs());
    }
    let fields = sweep_fields(g, 100, 17).map_err(e2s)?;
    for u in &fields {
        let sum = decompose(u).iter().try_fold(Field::zeros(g), |acc, b| acc.add(b)).map_err(e2s)?;
        unity = unity.max(sum.sub(u).map_err(e2s)?.l2_norm() / u.l2_norm());
    }
    ensure(unity <= 1e-12, format!("partition of unity error {unity:.3e}"))?;

    let mut blocks = 0;
    for nu in 1..=8 {
        for s in 0..100u64 {
            let u = band_limited_random(g, (nu - 1).max(0), (nu + 1).min(9), 1000 * nu as u64 + s).map_err(e2s)?;
            let b = apply_delta(nu, &u).map_err(e2s)?;
            let c = check_bernstein(&b, nu);
            ensure(!c.zero_block, format!("empty block at nu {nu}"))?;
            ensure(c.holds(), format!("Bernstein fails at nu {nu} seed {s}: {c:?}"))?;
            blocks += 1;
        }
    }

    let mut c_max: f64 = 1.0;
    for theta in [-1.0, 0.0, 1.0] {
        for u in &fields {
            let r = equivalence_ratio(u, theta);
            c_max = c_max.max(r).max(1.0 / r);
        }
    }
    ensure(c_max <= 4.0, format!("Sobolev equivalence constant {c_max}"))?;
    Ok(format!("unity {unity:.1e}, {blocks} Bernstein blocks, equivalence C = {c_max:.4}"))
}

fn paraproduct_suite() -> Outcome {
    let g = grid(two_pi(), 2048);
    let fields = sweep_fields(g, 400, 23).map_err(e2s)?;
    let c = Field::constant(g, 2.5).map_err(e2s)?;
    let mut exact: f64 = 0.0;
    for m in [1, 2, 5, 20] {
        for u in fields.iter().take(20) {
            let t = apply_paraproduct(&c, m, u).map_err(e2s)?;
            exact = exact.max(t.sub(&u.scale(2.5)).map_err(e2s)?.l2_norm() / u.l2_norm());
        }
    }
    ensure(exact <= 1e-12, format!("constant coefficient error {exact:.3e}"))?;

    let a = Field::from_fn(g, |x| 1.0 + 0.5 * x[0].sin()).map_err(e2s)?;
    let tests = positivity_test_fields(&a, 200, 29).map_err(e2s)?;
    let cert = min_positivity_order(&a, 0.5, &tests, 20).map_err(e2s)?;
    ensure(cert.m <= 20, "no positive order")?;

    let reg = ProbeRegistry::with_builtins();
    let mut report = Vec::new();
    for id in ["adjoint-defect", "commutator"] {
        let probe = reg.get(id).map_err(e2s)?;
        let small = run_probe(probe, &a, cert.m, &[-1.0, 0.0, 1.0], &fields[..200], 23).map_err(e2s)?;
        let large = run_probe(probe, &a, cert.m, &[-1.0, 0.0, 1.0], &fields, 23).map_err(e2s)?;
        for (s, l) in small.iter().zip(&large) {
            let (x, y) = (s.measured_constant, l.measured_constant);
            ensure(x.is_finite() && y.is_finite(), format!("{id}: non-finite constant"))?;
            ensure(y <= 2.0 * x && x <= 2.0 * y, format!("{id} at theta {}: {x} vs {y}", s.theta))?;
            report.push(format!("{id}(theta {}) {y:.3e}", s.theta));
        }
    }
    Ok(format!("exactness {exact:.1e}, positive order m = {}, {}", cert.m, report.join(", ")))
}

fn mollifier_suite() -> Outcome {
    let dir = tempfile::tempdir().map_err(e2s)?;
    let path = dir.path().join("samples.csv");
    let mut text = String::from("t,value\n");
    for i in 0..=64 {
        let t = i as f64 / 64.0;
        text.push_str(&format!("{t},{}\n", 1.0 + 0.5 * ll_shape(t)));
    }
    std::fs::write(&path, text).map_err(e2s)?;
    let sampled = Sampled::from_csv(std::fs::File::open(&path).map_err(e2s)?).map_err(e2s)?;
    let profiles: Vec<(&str, Arc<dyn TimeProfile>)> = vec![
        ("constant", Arc::new(Constant(1.0))),
        ("linear", Arc::new(Linear { offset: 1.0, slope: 0.5 })),
        ("ll_exemplar", Arc::new(LlExemplar { base: 1.0, amplitude: 0.5 })),
        ("sampled", Arc::new(sampled)),
    ];
    let ts = uniform_times(1.0, 201);
    let mut worst: f64 = 0.0;
    for (name, p) in &profiles {
        let fam = CoefficientFamily::isotropic(1, p.clone());
        for nu in 1..=10 {
            let eps = 2f64.powi(-2 * nu);
            let c = fam.mollifier_bounds_check(eps, 1.0, &ts).map_err(e2s)?;
            ensure(c.holds(), format!("{name} at eps 2^-{}: {c:?}", 2 * nu))?;
            if c.deviation_bound > 0.0 {
                worst = worst.max(c.deviation / c.deviation_bound).max(c.derivative / c.derivative_bound);
            }
        }
    }
    Ok(format!("4 families x 10 widths, largest measured/bound {worst:.3}"))
}

fn evolution_suite() -> Outcome {
    let g = grid(two_pi(), 2048);
    let mut round: f64 = 0.0;
    for fam in [CoefficientFamily::heat(1), CoefficientFamily::ll_exemplar(1, 1.0, 0.5)] {
        for s in 0..20 {
            let u = band_limited_random(g, 0, 4, s).map_err(e2s)?;
            let f = propagate(&u, &fam, 1.0, Direction::Forward).map_err(e2s)?;
            let b = propagate(&f, &fam, 1.0, Direction::Backward).map_err(e2s)?;
            round = round.max(b.sub(&u).map_err(e2s)?.l2_norm() / u.l2_norm());
        }
    }
    ensure(round <= 1e-10, format!("round trip {round:.3e}"))?;

    let g = grid(two_pi(), 512);
    let heat = CoefficientFamily::heat(1);
    let u = band_limited_random(g, 0, 1, 31).map_err(e2s)?;
    let max_err = |steps: usize| -> Result<f64, String> {
        let exact = SpectralExact.solve(&u, &heat, 1.0, steps).map_err(e2s)?;
        let mid = ImplicitMidpoint::default().solve(&u, &heat, 1.0, steps).map_err(e2s)?;
        let mut e: f64 = 0.0;
        for (a, b) in exact.states.iter().zip(&mid.states) {
            e = e.max(a.sub(b).map_err(e2s)?.l2_norm() / u.l2_norm());
        }
        Ok(e)
    };
    let fine = max_err(2000)?;
    ensure(fine <= 1e-6, format!("stepper error {fine:.3e} at 2000 steps"))?;
    let (e1, e2, e3) = (max_err(100)?, max_err(200)?, max_err(400)?);
    let (o1, o2) = ((e1 / e2).log2(), (e2 / e3).log2());
    ensure((1.8..=2.2).contains(&o1) && (1.8..=2.2).contains(&o2), format!("orders {o1:.3}, {o2:.3}"))?;
    Ok(format!("round trip {round:.1e}, stepper {fine:.2e}, orders {o1:.3} {o2:.3}"))
}

fn energy_suite() -> Outcome {
    let g = grid(two_pi(), 2048);
    let pc = proof_constants(0.5, 1.0, 1.0, 0.25).map_err(e2s)?;
    let gammas = [1.0, 10.0, 100.0, 1000.0];
    let mut lines = Vec::new();
    for (name, fam) in [("a=1", CoefficientFamily::heat(1)), ("ll", CoefficientFamily::ll_exemplar(1, 1.0, 0.5))] {
        for (label, lambda) in [("lambda_bar", pc.lambda_bar), ("2 lambda_bar", 2.0 * pc.lambda_bar)] {
            let p = WeightParams::from_horizon(1.0, 1.0, lambda, 1.0).map_err(e2s)?;
            let run = |size: usize, snaps: usize| -> Result<Vec<f64>, String> {
                let corpus = generate_corpus(g, &fam, name, size, snaps, &p, [0, 1], 7).map_err(e2s)?;
                let scans = gamma_scan(&p, &gammas, &corpus, DEFAULT_GAP).map_err(e2s)?;
                Ok(scans.iter().map(|s| s.log_m).collect())
            };
            let base = run(50, 200)?;
            let more = run(100, 200)?;
            let finer = run(50, 400)?;
            for (i, gm) in gammas.iter().enumerate() {
                for v in [base[i], more[i], finer[i]] {
                    ensure(v.is_finite(), format!("{name} {label} gamma {gm}: log M = {v}"))?;
                    ensure(v.exp().is_finite(), format!("{name} {label} gamma {gm}: M overflows"))?;
                }
                let d = (base[i] - more[i]).abs().max((base[i] - finer[i]).abs());
                ensure(d <= 2f64.ln(), format!("{name} {label} gamma {gm}: log M moved by {d:.3e}"))?;
            }
            lines.push(format!("{name} {label}: log M {:.6e}", base[0]));
        }
    }
    Ok(lines.join("; "))
}

fn reconstruction_suite() -> Outcome {
    let g = grid(16.0 * std::f64::consts::PI, 2048);
    let truth = gaussian_bump(g, 0.3).map_err(e2s)?;
    let d = truth.sobolev_norm(1.0);
    let thetas: Vec<f64> = (2..=12).map(|k| 10f64.powi(-k)).collect();
    let seeds: Vec<u64> = (1..=5).collect();
    let mut lines = Vec::new();
    for (name, fam) in [("a=1", CoefficientFamily::heat(1)), ("ll", CoefficientFamily::ll_exemplar(1, 1.0, 0.5))] {
        let (rows, fit) = sweep_and_fit(&truth, &fam, 1.0, &thetas, &seeds, d).map_err(e2s)?;
        ensure(rows.len() == 55, "sweep size")?;
        for r in &rows {
            let rep = &r.report;
            ensure(
                rep.h1_bound_holds() && rep.proximity_bound_holds(),
                format!("{name}: bound violated at theta {} seed {}", rep.theta, rep.seed),
            )?;
        }
        ensure(monotone_up_to_noise(&rows), format!("{name}: errors not monotone"))?;
        let fit = fit.map_err(e2s)?;
        ensure(fit.delta > 0.0, format!("{name}: delta {}", fit.delta))?;
        ensure(fit.rms_log_residual < 0.2, format!("{name}: residual RMS {}", fit.rms_log_residual))?;
        lines.push(format!(
            "{name}: delta {:.4}, K {:.4}, rms {:.4}, {} points",
            fit.delta, fit.k_tilde, fit.rms_log_residual, fit.n_points
        ));
    }
    Ok(lines.join("; "))
}

const SMALL_CONFIG: &str = r#"
seed = 3
T = 1.0

[grid]
dim = 1
period = 6.283185307179586
points = 256

[lp]
sweep_size = 12

[energy]
corpus_size = 3
snapshots = 16
gammas = [1.0, 10.0]

[reconstruction]
seeds = [1, 2]

[forward]
solver = "implicit-midpoint"
steps = 20

[weights_table]
samples = 16
"#;

fn read_dir_sorted(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).map_err(e2s)? {
        let e = e.map_err(e2s)?;
        out.push((e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).map_err(e2s)?));
    }
    out.sort();
    Ok(out)
}

fn cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(e2s)?;
    let cfg = tmp.path().join("small.toml");
    std::fs::write(&cfg, SMALL_CONFIG).map_err(e2s)?;
    let commands = ["lp-analyze", "verify-energy", "reconstruct", "forward-solve", "weights-table"];
    let mut files = 0;
    for cmd in commands {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = tmp.path().join(format!("{cmd}-{rep}"));
            let status = Command::new(env!("CARGO_BIN_EXE_backheat"))
                .args([cmd, "--seed", "11", "--config"])
                .arg(&cfg)
                .arg("--out")
                .arg(&out)
                .env_remove("BACKHEAT_OUT_DIR")
                .status()
                .map_err(e2s)?;
            ensure(status.code() == Some(0), format!("{cmd} exited with {status}"))?;
            outputs.push(read_dir_sorted(&out)?);
        }
        ensure(!outputs[0].is_empty(), format!("{cmd} wrote nothing"))?;
        ensure(outputs[0] == outputs[1], format!("{cmd} output differs between runs"))?;
        files += outputs[0].len();
    }
    Ok(format!("{} commands, {files} files byte-identical", commands.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("weight calculus", weight_calculus),
        ("Littlewood-Paley suite", littlewood_paley_suite),
        ("paraproduct suite", paraproduct_suite),
        ("mollifier suite", mollifier_suite),
        ("evolution", evolution_suite),
        ("energy estimate", energy_suite),
        ("reconstruction", reconstruction_suite),
        ("determinism", cli_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|k| name.contains(k.as_str())) {
            continue;
        }
        let start = Instant::now();
        let res = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(msg) => println!("criterion {} ({name}): PASS [{secs:.1}s] {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL [{secs:.1}s] {msg}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
