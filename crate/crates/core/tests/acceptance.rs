//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Numeric arguments select criteria,
//! e.g. `cargo test --release --test acceptance -- 3 4`.

use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use phi4::dynamics::{coming_down_profile, evolve, DynamicsConfig};
use phi4::estimators::{
    be_identity_check, choose_lambda, contraction_rate, energy_constant, gaussian_be_oracle, gaussian_gap_ratio,
    refined_s_grid, restart_energy_check, smoothing_exponent, spectral_gap_estimate, verify_energy_inequality,
    BeSettings, CylinderFunctional, GapSettings,
};
use phi4::experiment::{self, RunConfig, RunOptions};
use phi4::linearization::{finite_diff_check, operator_norm_steps, LinearizedFlow, NormMethod};
use phi4::noise::{c_t_infty, make_wick, ou_step, wick_constant, OuState};
use phi4::rng::{cell_rng, Domain, NoiseStream};
use phi4::stats::{self, MeanEstimate};
use phi4::stopping::{
    calibrate_eta, growth_rate, restart_schedules, tail_estimate, CalibrationSettings, EtaCalibration, StoppingConfig,
};
use phi4::torus::{smooth_random_field, Field, NormKind, TorusGrid};
use phi4::Result;

type Check = fn() -> Result<(bool, String)>;

fn grid(n: usize) -> TorusGrid {
    TorusGrid::new(n, 1.0).unwrap()
}

fn z_of(est: &MeanEstimate, target: f64) -> f64 {
    (est.mean - target).abs() / est.se
}

/// Gaussian sector at N=32, m=1, t=0.5 over 10^4 replicas.
fn gaussian_sector() -> Result<(bool, String)> {
    let g = grid(32);
    let (m, t) = (1.0, 0.5);
    let c = wick_constant(&g, m, t)?;
    let samples: Vec<[f64; 4]> = (0..10_000u64)
        .into_par_iter()
        .map(|r| -> Result<[f64; 4]> {
            let mut stream = NoiseStream::new(101, r);
            let x = ou_step(&OuState::new(g, m, 0.0, 0), t, &mut stream)?;
            let w = make_wick(&x)?;
            let avg = |f: &dyn Fn(usize) -> f64| (0..g.points()).map(f).sum::<f64>() / g.points() as f64;
            let (w1, w2, w3) = (w.w1.real(), w.w2.real(), w.w3.real());
            Ok([avg(&|i| w1[i] * w1[i]), avg(&|i| w2[i]), avg(&|i| w2[i] * w2[i]), avg(&|i| w3[i] * w3[i])])
        })
        .collect::<Result<_>>()?;
    let col = |j: usize| stats::mean_estimate(&samples.iter().map(|s| s[j]).collect::<Vec<_>>());
    let zs = [z_of(&col(0), c), z_of(&col(1), 0.0), z_of(&col(2), 2.0 * c * c), z_of(&col(3), 6.0 * c * c * c)];
    let pass = zs.iter().all(|z| *z <= 3.0);
    Ok((pass, format!("c={c:.5}; z(var, :X^2:, (:X^2:)^2, (:X^3:)^2) = {zs:.2?}")))
}

/// `c_{t,inf} t^{1/4}` bounded on [1e-3, 1] at N=64 and monotone in t and m.
fn renormalization_constant() -> Result<(bool, String)> {
    let g = grid(64);
    let ts: Vec<f64> = (0..=60).map(|i| 1e-3 * 1000f64.powf(i as f64 / 60.0)).collect();
    let prod: Vec<f64> = ts.iter().map(|&t| c_t_infty(&g, 1.0, t).map(|c| c * t.powf(0.25))).collect::<Result<_>>()?;
    let ratio = prod.iter().cloned().fold(0.0, f64::max) / prod.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut mono_t = true;
    let mut mono_m = true;
    for m in [0.5, 1.0, 2.0, 5.0] {
        let cs: Vec<f64> = ts.iter().map(|&t| c_t_infty(&g, m, t)).collect::<Result<_>>()?;
        mono_t &= cs.windows(2).all(|w| w[1] < w[0]);
    }
    for &t in &ts {
        let cs: Vec<f64> = [0.5, 1.0, 2.0, 5.0].iter().map(|&m| c_t_infty(&g, m, t)).collect::<Result<_>>()?;
        mono_m &= cs.windows(2).all(|w| w[1] < w[0]);
    }
    Ok((
        ratio < 10.0 && mono_t && mono_m,
        format!("max/min of c t^(1/4) = {ratio:.3}; decreasing in t: {mono_t}, in m: {mono_m}"),
    ))
}

static CALIBRATION: OnceLock<EtaCalibration> = OnceLock::new();

fn calibration() -> Result<&'static EtaCalibration> {
    if let Some(c) = CALIBRATION.get() {
        return Ok(c);
    }
    let c = calibrate_eta(grid(32), 1.0, 0.3, 202, 0..1000, CalibrationSettings::default())?;
    Ok(CALIBRATION.get_or_init(|| c))
}

/// Barrier calibration at alpha=0.3 with 1000 replicas.
fn barrier_calibration() -> Result<(bool, String)> {
    let c = calibration()?;
    Ok((
        c.p_upper < 0.25 && c.replicas >= 1000,
        format!("eta={} p_hat={:.4} one-sided upper={:.4} ({} replicas)", c.eta, c.p_hat, c.p_upper, c.replicas),
    ))
}

/// Restart-count tails and exponential-moment growth at theta=0.5.
fn counting_tails() -> Result<(bool, String)> {
    let cal = calibration()?;
    let stop = StoppingConfig::new(cal.eta, 0.5, 0.3, 0.1)?;
    let records = restart_schedules(grid(32), 1.0, 0.01, 5.0, &stop, 303, 0..400)?;
    let mut checked = 0;
    let mut failed = Vec::new();
    for t in [1.0, 2.0, 5.0] {
        for n in 1.. {
            let est = tail_estimate(&records, t, n, stop.theta)?;
            if est.events < 5 {
                break;
            }
            checked += 1;
            if !est.pass {
                failed.push((t, n));
            }
        }
    }
    // a = p c theta^gamma = ln 2 / 2 keeps the moment finite under the tail bound
    let gamma = stop.gamma();
    let c = std::f64::consts::LN_2 / 2.0 / stop.theta.powf(gamma);
    let fit = growth_rate(&records, 1.0, c, stop.theta, gamma, &[1.0, 2.0, 5.0], 400, 303)?;
    let pass = failed.is_empty() && checked > 0 && fit.pass;
    Ok((
        pass,
        format!(
            "{checked} tail checks, failures {failed:?}; growth slope {:.3} (95% [{:.3}, {:.3}]) vs bound {:.3}",
            fit.slope, fit.ci_low, fit.ci_high, fit.bound
        ),
    ))
}

/// Pathwise energy inequality on 200 restart trajectories at N=32, T=1.
fn energy_inequality() -> Result<(bool, String)> {
    let cal = calibration()?;
    let alpha = 0.3;
    let stop = StoppingConfig::new(cal.eta, 0.5, alpha, 0.1)?;
    let lam = choose_lambda(alpha)?;
    let g = grid(32);
    let cfg = DynamicsConfig::new(g, 1.0, ENERGY_DT, 1.0);
    let c_rand = energy_constant(lam.c_alpha, stop.eta, alpha);
    let reps: Vec<(usize, f64, usize, bool)> = (0..200u64)
        .into_par_iter()
        .map(|r| -> Result<_> {
            let f = smooth_random_field(g, 3.0, &mut cell_rng(404, r, Domain::Initial, 0));
            let traj = evolve(&f, &cfg, NoiseStream::new(404, r), Some(&stop))?;
            let flow = LinearizedFlow::new(&traj)?;
            let h = smooth_random_field(g, 4.0, &mut cell_rng(404, r, Domain::Probe, 0));
            let path = flow.propagate_path(&h, 0, traj.steps())?;
            let rep = verify_energy_inequality(&traj, &path, 0, traj.steps(), lam.lambda, alpha, 0.05)?;
            let rand = restart_energy_check(&traj, &path, c_rand, stop.theta, stop.gamma())?;
            Ok((rep.violations, rep.min_log_margin, traj.restarts.len(), rand.pass))
        })
        .collect::<Result<_>>()?;
    let violations: usize = reps.iter().map(|r| r.0).sum();
    let worst = reps.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let restarts: usize = reps.iter().map(|r| r.2).sum();
    let rand_ok = reps.iter().all(|r| r.3);
    Ok((
        violations == 0 && rand_ok,
        format!("lambda={}, {violations} violations, worst log margin {worst:.4}, {restarts} restarts; random-constant form holds: {rand_ok}", lam.lambda),
    ))
}

const ENERGY_DT: f64 = 5e-4;

fn dense_norm(flow: &LinearizedFlow, steps: usize) -> f64 {
    let g = flow.grid;
    let n2 = g.points();
    let mut mat = DMatrix::zeros(n2, n2);
    for j in 0..n2 {
        let mut e = vec![0.0; n2];
        e[j] = 1.0;
        let col = flow.propagate_steps(&Field::from_real(g, e).unwrap(), 0, steps).unwrap();
        for (i, x) in col.real().iter().enumerate() {
            mat[(i, j)] = *x;
        }
    }
    mat.singular_values().max()
}

/// Finite differences, adjoint pairing, potential-free norm and dense SVD.
fn linearization() -> Result<(bool, String)> {
    let g = grid(32);
    let cfg = DynamicsConfig::new(g, 1.0, 1e-3, 0.25);
    let f = smooth_random_field(g, 3.0, &mut cell_rng(505, 0, Domain::Initial, 0));
    let h = smooth_random_field(g, 3.0, &mut cell_rng(505, 0, Domain::Probe, 0));
    let fd3 = finite_diff_check(&f, &h, 1e-3, &cfg, NoiseStream::new(505, 0))?;
    let fd4 = finite_diff_check(&f, &h, 1e-4, &cfg, NoiseStream::new(505, 0))?;

    let traj = evolve(&f, &cfg, NoiseStream::new(505, 0), None)?;
    let flow = LinearizedFlow::new(&traj)?;
    let k = gaussian_probe(g, 1);
    let jh = flow.propagate_steps(&h, 0, flow.steps())?;
    let a = jh.inner(&k)?;
    let b = h.inner(&flow.adjoint_steps(&k, 0, flow.steps())?)?;
    let pairing = (a - b).abs() / a.abs().max(b.abs());

    let free = DynamicsConfig::new(g, 2.0, 1e-3, 0.25).deterministic();
    let ftraj = evolve(&Field::zeros(g), &free, NoiseStream::new(0, 0), None)?;
    let fflow = LinearizedFlow::new(&ftraj)?;
    let est = operator_norm_steps(
        &fflow,
        0,
        fflow.steps(),
        NormKind::sobolev(0.0),
        NormMethod::PowerIteration,
        100,
        (505, 0),
    )?;
    let free_err = (est.estimate - (-2.0f64 * 0.25).exp()).abs();

    let g16 = grid(16);
    let c16 = DynamicsConfig::new(g16, 1.0, 2e-3, 0.1);
    let f16 = smooth_random_field(g16, 3.0, &mut cell_rng(505, 1, Domain::Initial, 0));
    let t16 = evolve(&f16, &c16, NoiseStream::new(505, 1), None)?;
    let flow16 = LinearizedFlow::new(&t16)?;
    let svd = dense_norm(&flow16, flow16.steps());
    let pi = operator_norm_steps(
        &flow16,
        0,
        flow16.steps(),
        NormKind::sobolev(0.0),
        NormMethod::PowerIteration,
        500,
        (505, 1),
    )?;
    let svd_err = (pi.estimate - svd).abs() / svd;

    let pass = fd4 <= 1e-3 && fd4 < fd3 && pairing <= 1e-9 && free_err <= 1e-10 && svd_err <= 1e-6;
    Ok((
        pass,
        format!("fd rel err {fd3:.2e} -> {fd4:.2e}; pairing {pairing:.1e}; |norm - e^(-mt)| {free_err:.1e}; svd rel err {svd_err:.1e}"),
    ))
}

fn gaussian_probe(g: TorusGrid, i: u64) -> Field {
    phi4::torus::gaussian_field(g, &mut cell_rng(505, i, Domain::Test, 0))
}

/// Contraction rates over m in {5, 10, 20} at N=16 and the potential-free control.
fn contraction() -> Result<(bool, String)> {
    let g = grid(16);
    let f = smooth_random_field(g, 3.0, &mut cell_rng(606, 0, Domain::Initial, 0));
    let cfg = DynamicsConfig::new(g, 5.0, 2e-3, 1.0);
    let times = [0.1, 0.2, 0.3, 0.4, 0.5];
    let rep = contraction_rate(&[5.0, 10.0, 20.0], &times, 2.0, &f, &cfg, 50, 606, 0..32)?;
    let rates: Vec<f64> = rep.rates.iter().map(|r| r.rate).collect();

    let free = cfg.deterministic();
    let ctrl = contraction_rate(&[5.0, 10.0, 20.0], &times, 2.0, &Field::zeros(g), &free, 100, 606, 0..2)?;
    let free_err = ctrl.rates.iter().map(|r| (r.fit.slope + r.m).abs()).fold(0.0, f64::max);
    let pass = rep.increasing && !rep.non_finite && rates[2] > 0.0 && free_err <= 1e-6;
    Ok((
        pass,
        format!("r(m) = {rates:.3?}, m_star_hat = {:.3}; potential-free |slope + m| <= {free_err:.1e}", rep.m_star_hat),
    ))
}

/// Short-time smoothing exponents at N=32, dt=2.5e-4.
fn smoothing() -> Result<(bool, String)> {
    let g = grid(32);
    let f = smooth_random_field(g, 3.0, &mut cell_rng(707, 0, Domain::Initial, 0));
    let cfg = DynamicsConfig::new(g, 1.0, 2.5e-4, 0.1);
    let times = [0.0025, 0.005, 0.01, 0.02];
    let half = smoothing_exponent(0.5, 0.05, &times, 2.0, &f, &cfg, 30, 707, 0..8)?;
    let zero = smoothing_exponent(0.0, 0.05, &times, 2.0, &f, &cfg, 30, 707, 0..8)?;
    let pass = half.pass && zero.exponent <= 0.05;
    Ok((
        pass,
        format!(
            "kappa=0.5: e={:.3} (se {:.3}) vs {:.3}; kappa=0: e={:.4}",
            half.exponent, half.fit.slope_se, half.bound, zero.exponent
        ),
    ))
}

/// Variance identity: quadratic functional at m=10 and the Gaussian control.
fn bakry_emery() -> Result<(bool, String)> {
    let g = grid(16);
    let dt = 5e-3;
    let t = 0.25;
    let h = Field::cos_mode(g, 1, 0, 1.0);
    let f = smooth_random_field(g, 3.0, &mut cell_rng(808, 0, Domain::Initial, 0));
    let s_nodes = refined_s_grid(t, dt, 4, 2)?;
    let settings = BeSettings { t, s_nodes, lhs_replicas: 2000, outer: 32, inner: 16 };
    let cfg = DynamicsConfig::new(g, 10.0, dt, t);
    let full = be_identity_check(&CylinderFunctional::quadratic(h.clone()), &f, &settings, &cfg, 808)?;

    let gdt = 1e-3;
    let gsettings = BeSettings { s_nodes: refined_s_grid(t, gdt, 8, 8)?, outer: 4, inner: 4, ..settings.clone() };
    let gcfg = DynamicsConfig::new(g, 10.0, gdt, t).gaussian();
    let gauss = be_identity_check(&CylinderFunctional::linear(h.clone()), &f, &gsettings, &gcfg, 809)?;
    let want = gaussian_be_oracle(&h, 10.0, t);
    let zl = z_of(&gauss.lhs, want);
    // the linear Gaussian right side has no sampling noise, only quadrature error
    let pass = full.overlap
        && gauss.lhs.oracle_margin(want, 3.0, 5e-3) >= 0.0
        && gauss.rhs.oracle_margin(want, 3.0, 5e-3) >= 0.0;
    Ok((
        pass,
        format!(
            "quadratic: lhs {:.4e} [{:.4e}, {:.4e}], rhs {:.4e} [{:.4e}, {:.4e}]; Gaussian oracle {want:.6e}, lhs {:.6e} (z {zl:.2}), rhs {:.6e} se {:.1e}",
            full.lhs.mean, full.lhs_ci.0, full.lhs_ci.1, full.rhs.mean, full.rhs_ci.0, full.rhs_ci.1, gauss.lhs.mean, gauss.rhs.mean, gauss.rhs.se
        ),
    ))
}

/// Poincare ratios: Gaussian oracle and monotone decrease over m in {5, 10, 20}.
fn spectral_gap() -> Result<(bool, String)> {
    let g = grid(16);
    let kappa = 0.5;
    let funcs = CylinderFunctional::shipped(g);
    let settings =
        GapSettings { burn_in: 1.0, run_length: 40.0, sample_every: 10, chains: 4, batches: 10, z_stationary: 3.5 };

    let h = &funcs[0].tests[0];
    let gcfg = DynamicsConfig::new(g, 5.0, 5e-3, 1.0).gaussian();
    let gauss = &spectral_gap_estimate(&funcs[..1], &gcfg, kappa, &settings, 909)?[0];
    let want = gaussian_gap_ratio(h, 5.0, kappa);
    let oracle_ok = gauss.valid() && gauss.ratio_ci.0 <= want && want <= gauss.ratio_ci.1;

    let mut table = Vec::new();
    for m in [5.0, 10.0, 20.0] {
        let cfg = DynamicsConfig::new(g, m, 5e-3, 1.0);
        table.push(spectral_gap_estimate(&funcs, &cfg, kappa, &settings, 910)?);
    }
    let mut ok = oracle_ok;
    let mut detail = format!("Gaussian ratio {:.4} vs oracle {want:.4}", gauss.ratio);
    for (i, f) in funcs.iter().enumerate() {
        let r: Vec<f64> = table.iter().map(|reps| reps[i].ratio).collect();
        let valid = table.iter().all(|reps| reps[i].valid());
        ok &= valid && r.windows(2).all(|w| w[1] < w[0]);
        detail.push_str(&format!("; {} {r:.4?}", f.name));
    }
    Ok((ok, detail))
}

/// Coming down from infinity at N=32 for magnitudes {1, 10, 100}.
fn coming_down() -> Result<(bool, String)> {
    let g = grid(32);
    let profile = Field::constant(g, 1.0).axpy(0.5, &Field::cos_mode(g, 1, 0, 1.0))?;
    let profile = profile.scale(1.0 / profile.max_abs());
    let cfg = DynamicsConfig::new(g, 1.0, 1e-4, 1.0);
    let stats_by_a = coming_down_profile(&profile, &[1.0, 10.0, 100.0], 4.0, &cfg, 1111, 0..16)?;
    let mut ok = true;
    let mut detail = String::new();
    for q in [0.5, 0.9] {
        let qs: Vec<f64> = stats_by_a.iter().map(|s| s.quantile(q)).collect();
        let ratio = qs.iter().cloned().fold(0.0, f64::max) / qs.iter().cloned().fold(f64::INFINITY, f64::min);
        ok &= ratio < 2.0;
        detail.push_str(&format!("q={q}: {qs:.3?} (ratio {ratio:.3}) "));
    }
    let blowups: usize = stats_by_a.iter().map(|s| s.failures()).sum();
    Ok((ok && blowups == 0, format!("{detail}blow-ups {blowups}")))
}

/// Every shipped config replays bit-exactly with 1, 4 and 8 workers.
fn reproducibility() -> Result<(bool, String)> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut names: Vec<_> = std::fs::read_dir(&dir)?.filter_map(|e| e.ok()).map(|e| e.path()).collect();
    names.sort();
    let tmp = tempfile::tempdir()?;
    let mut ok = true;
    let mut detail = Vec::new();
    for path in names.iter().filter(|p| p.extension().is_some_and(|e| e == "toml")) {
        let cfg: RunConfig = experiment::load_config(path, None)?;
        let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
        let out = tmp.path().join(&stem);
        experiment::run(&cfg, &RunOptions { out: out.clone(), workers: 1, force: false })?;
        let mut passes = 0;
        for w in [1, 4, 8] {
            let r = experiment::replay(&out, w)?;
            if r.pass {
                passes += 1;
            } else {
                ok = false;
                detail.push(format!("{stem} workers={w} diverged at {:?}", r.first_divergent));
            }
        }
        detail.push(format!("{stem} {passes}/3"));
    }
    Ok((ok, detail.join(", ")))
}

fn main() {
    let checks: [(&str, Check); 12] = [
        ("Gaussian sector exactness", gaussian_sector),
        ("renormalisation constant bound", renormalization_constant),
        ("barrier calibration", barrier_calibration),
        ("counting-process tail and growth", counting_tails),
        ("pathwise energy inequality", energy_inequality),
        ("linearisation correctness", linearization),
        ("contraction", contraction),
        ("smoothing exponent", smoothing),
        ("variance identity", bakry_emery),
        ("spectral gap", spectral_gap),
        ("coming down from infinity", coming_down),
        ("reproducibility across worker counts", reproducibility),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let id = i + 1;
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "{} {id:>2} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
