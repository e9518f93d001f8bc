//! The experiments behind the CLI subcommands. Each one is a pure function of
//! the resolved config: it returns the report, the extra output files and the
//! random streams it used, and never touches the run directory itself.

use rayon::prelude::*;
use serde::Serialize;

use super::checkpoint::checkpoint_files;
use super::config::{Experiment, RunConfig};
use super::manifest::{FileEntry, StreamSpec};
use crate::dynamics::{coming_down_profile, evolve};
use crate::error::{Error, Result};
use crate::estimators::{
    be_identity_check, choose_lambda, contraction_rate, gaussian_be_oracle, gaussian_gap_ratio, refined_s_grid,
    smoothing_exponent, spectral_gap_estimate, verify_energy_inequality, BeSettings, CylinderFunctional,
    EstimateReport, GapSettings,
};
use crate::linearization::{finite_diff_check, LinearizedFlow};
use crate::noise::{make_wick_with_constant, ou_step, wick_constant, OuState};
use crate::rng::{cell_rng, Domain, NoiseStream};
use crate::stats::{self, Z95};
use crate::stopping::{calibrate_eta, restart_schedules, tail_estimate, StoppingConfig, StoppingRecord};
use crate::torus::{norm, smooth_random_field, Field, NormKind};

/// Relative tolerance for oracle checks on estimates without sampling noise.
const ORACLE_REL_TOL: f64 = 5e-3;

/// Everything an experiment produces, before it is written anywhere.
#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub report: EstimateReport,
    /// `(relative path, contents)` in write order, excluding `report.json`
    /// and `rows.csv`, which are rendered from the report.
    pub files: Vec<(String, Vec<u8>)>,
    pub streams: Vec<StreamSpec>,
    pub inputs: Vec<FileEntry>,
}

impl CommandOutput {
    fn new(cfg: &RunConfig) -> Self {
        let config = serde_json::to_value(cfg).expect("config is serialisable");
        Self {
            report: EstimateReport::new(cfg.experiment.name(), config),
            files: vec![],
            streams: vec![],
            inputs: vec![],
        }
    }

    fn stream(&mut self, purpose: &str, seed: u64, replicas: std::ops::Range<u64>) {
        self.streams.push(StreamSpec::new(purpose, seed, replicas));
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        self.files.push((name.into(), serde_json::to_vec_pretty(value)?));
        Ok(())
    }

    fn csv(&mut self, name: &str, text: String) {
        self.files.push((name.into(), text.into_bytes()));
    }

    /// All output files, report first.
    pub fn rendered(&self) -> Result<Vec<(String, Vec<u8>)>> {
        let mut out = vec![
            ("report.json".to_string(), serde_json::to_vec_pretty(&self.report)?),
            ("rows.csv".to_string(), self.report.rows_csv().into_bytes()),
        ];
        out.extend(self.files.iter().cloned());
        Ok(out)
    }
}

pub fn dispatch(cfg: &RunConfig) -> Result<CommandOutput> {
    cfg.validate()?;
    match cfg.experiment {
        Experiment::Calibrate => cmd_calibrate(cfg),
        Experiment::Contraction => cmd_contraction(cfg),
        Experiment::SpectralGap => cmd_spectral_gap(cfg),
        Experiment::Verify => cmd_verify(cfg),
        Experiment::BeCheck => cmd_be_check(cfg),
        Experiment::ComingDown => cmd_coming_down(cfg),
    }
}

/// Deterministic smooth initial datum of the run (zero in potential-free mode).
pub fn initial_field(cfg: &RunConfig) -> Result<Field> {
    let grid = cfg.grid()?;
    if cfg.dynamics.potential_free {
        return Ok(Field::zeros(grid));
    }
    Ok(smooth_random_field(grid, 3.0, &mut cell_rng(cfg.base_seed, 0, Domain::Initial, 0)))
}

fn probe_field(cfg: &RunConfig, index: u64) -> Result<Field> {
    let f = smooth_random_field(cfg.grid()?, 4.0, &mut cell_rng(cfg.base_seed, 0, Domain::Probe, index));
    let n = f.l2_norm();
    Ok(f.scale(1.0 / n))
}

fn stopping_alpha(cfg: &RunConfig) -> Result<f64> {
    cfg.stopping.as_ref().map(|s| s.alpha).ok_or_else(|| Error::Config("a [stopping] section is required".into()))
}

/// Tails `P(N(t) >= n)` for every `n` with at least `min_events` events.
fn tails(
    out: &mut CommandOutput,
    records: &[StoppingRecord],
    t: f64,
    theta: f64,
    min_events: usize,
) -> Result<Vec<crate::stopping::TailEstimate>> {
    let mut rows = Vec::new();
    for n in 1.. {
        let est = tail_estimate(records, t, n, theta)?;
        if est.events < min_events {
            break;
        }
        out.report.row(&format!("tail_n{n}"), est.p_hat, (est.ci_low, est.ci_high), est.total).t = Some(t);
        out.report.verdict(
            format!("P(N({t}) >= {n}) <= 2^-{n} exp(2 ln 2 t / theta)"),
            est.pass,
            est.bound - est.ci_low,
        );
        rows.push(est);
    }
    Ok(rows)
}

fn cmd_calibrate(cfg: &RunConfig) -> Result<CommandOutput> {
    let mut out = CommandOutput::new(cfg);
    let e = &cfg.estimator;
    let grid = cfg.grid()?;
    let m = cfg.dynamics.m;
    let alpha = stopping_alpha(cfg)?;
    let seed = cfg.base_seed;
    let cal_reps = 0..e.calibration_replicas;
    let cal = calibrate_eta(grid, m, alpha, seed, cal_reps.clone(), cfg.calibration())?;
    out.stream("calibration", seed, cal_reps);
    out.report.row("eta", cal.eta, (cal.eta, cal.eta), cal.replicas);
    out.report.row("exceedance_probability", cal.p_hat, (0.0, cal.p_upper), cal.replicas);
    out.report.verdict(
        "P(sup max_k ||W^k||_{-alpha} >= eta) < 1/4 at one-sided 95%",
        cal.p_upper < 0.25,
        0.25 - cal.p_upper,
    );

    let stop = cfg.stopping_with(Some(cal.eta))?.expect("stopping section present");
    let lo = e.calibration_replicas;
    let reps = lo..lo + e.replicas;
    let records = restart_schedules(grid, m, cfg.dynamics.dt, cfg.dynamics.horizon, &stop, seed, reps.clone())?;
    out.stream("restart_schedules", seed, reps);
    let mean_n = stats::mean_estimate(
        &records.iter().map(|r| r.count(cfg.dynamics.horizon).map(|k| k as f64)).collect::<Result<Vec<_>>>()?,
    );
    let ci = mean_n.ci95();
    out.report.row("mean_restart_count", mean_n.mean, ci, mean_n.n).t = Some(cfg.dynamics.horizon);
    let tail_rows = tails(&mut out, &records, cfg.dynamics.horizon, stop.theta, 5)?;

    let mut csv = String::from("t,n,events,total,p_hat,ci_low,ci_high,bound\n");
    for r in &tail_rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.t, r.n, r.events, r.total, r.p_hat, r.ci_low, r.ci_high, r.bound
        ));
    }
    out.json("calibration.json", &serde_json::json!({ "calibration": cal, "stopping": stop, "tails": tail_rows }))?;
    out.csv("tails.csv", csv);
    Ok(out)
}

fn cmd_contraction(cfg: &RunConfig) -> Result<CommandOutput> {
    let mut out = CommandOutput::new(cfg);
    let e = &cfg.estimator;
    let masses = cfg.masses()?;
    let f = initial_field(cfg)?;
    let seed = cfg.base_seed;
    let reps = 0..e.replicas;
    let rep = contraction_rate(&masses, &e.times, e.p, &f, &cfg.dynamics_at(masses[0])?, e.budget, seed, reps.clone())?;
    out.stream("contraction", seed, reps.clone());

    let mut plot = String::from("series,m,kappa,t,log_t,log_estimate,ci_low,ci_high\n");
    for mr in &rep.rates {
        for r in &mr.rows {
            let row = out.report.row("log_norm_moment", r.log_estimate, (r.log_ci_low, r.log_ci_high), r.n);
            row.t = Some(r.t);
            row.m = Some(mr.m);
            plot.push_str(&format!(
                "contraction,{},0,{},{},{},{},{}\n",
                mr.m,
                r.t,
                r.t.ln(),
                r.log_estimate,
                r.log_ci_low,
                r.log_ci_high
            ));
        }
        let half = Z95 * mr.fit.slope_se;
        out.report.row("rate", mr.rate, (mr.rate - half, mr.rate + half), e.times.len()).m = Some(mr.m);
        out.report.fit(format!("log_norm_moment vs t, m={}", mr.m), &mr.fit);
    }
    out.report.row("m_star_hat", rep.m_star_hat, (rep.m_star_hat, rep.m_star_hat), rep.rates.len());

    let mut sorted: Vec<_> = rep.rates.iter().map(|r| (r.m, r.rate)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    if sorted.len() > 1 {
        let gap = sorted.windows(2).map(|w| w[1].1 - w[0].1).fold(f64::INFINITY, f64::min);
        out.report.verdict("r(m) strictly increasing in m", rep.increasing && !rep.non_finite, gap);
    }
    let (m_top, r_top) = *sorted.last().expect("non-empty mass list");
    out.report.verdict(format!("r(m) > 0 at m={m_top}"), r_top > 0.0, r_top);
    if cfg.dynamics.potential_free {
        let err = rep.rates.iter().map(|r| (r.fit.slope + r.m).abs()).fold(0.0, f64::max);
        out.report.verdict("potential-free slope equals -m to 1e-6", err <= 1e-6, 1e-6 - err);
    }

    let mut smoothing = None;
    if !e.short_times.is_empty() {
        let mut scfg = cfg.dynamics_at(cfg.dynamics.m)?;
        if let Some(dt) = e.short_dt {
            scfg.dt = dt;
        }
        let sreps = e.replicas..2 * e.replicas;
        let s = smoothing_exponent(e.kappa, e.alpha, &e.short_times, e.p, &f, &scfg, e.budget, seed, sreps.clone())?;
        out.stream("smoothing", seed, sreps);
        for r in &s.rows {
            let row = out.report.row("log_smoothing_moment", r.log_estimate, (r.log_ci_low, r.log_ci_high), r.n);
            row.t = Some(r.t);
            row.m = Some(scfg.m);
            plot.push_str(&format!(
                "smoothing,{},{},{},{},{},{},{}\n",
                scfg.m,
                s.kappa,
                r.t,
                r.t.ln(),
                r.log_estimate,
                r.log_ci_low,
                r.log_ci_high
            ));
        }
        let half = Z95 * s.fit.slope_se;
        out.report.row("smoothing_exponent", s.exponent, (s.exponent - half, s.exponent + half), s.rows.len());
        out.report.fit(format!("log_smoothing_moment vs ln t, kappa={}", s.kappa), &s.fit);
        let slack = if half.is_finite() { half } else { 0.0 };
        out.report.verdict(
            format!("smoothing exponent <= (kappa + 5 alpha)/2 = {} + fit CI", s.bound),
            s.pass,
            s.bound + slack - s.exponent,
        );
        smoothing = Some(s);
    }
    out.json("contraction.json", &serde_json::json!({ "contraction": rep, "smoothing": smoothing }))?;
    out.csv("plot.csv", plot);
    Ok(out)
}

/// `m_star_hat` from an earlier contraction report.
fn imported_m_star(path: &str) -> Result<(f64, FileEntry)> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Config(format!("missing prerequisite contraction report {path}: {e}")))?;
    let report: EstimateReport = serde_json::from_slice(&bytes)?;
    let row = report
        .rows
        .iter()
        .find(|r| r.quantity == "m_star_hat")
        .ok_or_else(|| Error::Config(format!("{path} has no m_star_hat row")))?;
    Ok((row.estimate, FileEntry::of(path, &bytes)))
}

fn cmd_spectral_gap(cfg: &RunConfig) -> Result<CommandOutput> {
    let mut out = CommandOutput::new(cfg);
    let e = &cfg.estimator;
    let m_star = match (e.m_star_hat, &e.contraction_report) {
        (Some(v), _) => v,
        (None, Some(path)) => {
            let (v, input) = imported_m_star(path)?;
            out.inputs.push(input);
            v
        }
        (None, None) => return Err(Error::Config("spectral-gap needs m_star_hat or a contraction report".into())),
    };
    let mut masses = cfg.masses()?;
    masses.sort_by(|a, b| a.total_cmp(b));
    if let Some(m) = masses.iter().find(|&&m| !(m > m_star)) {
        return Err(Error::Config(format!("mass {m} is not above m_star_hat = {m_star}")));
    }
    out.report.row("m_star_hat", m_star, (m_star, m_star), 0);
    let grid = cfg.grid()?;
    let funcs = CylinderFunctional::shipped(grid);
    let settings = GapSettings {
        burn_in: e.burn_in,
        run_length: e.run_length,
        sample_every: e.sample_every,
        chains: e.chains,
        batches: e.batches,
        ..GapSettings::default()
    };
    out.stream("chains", cfg.base_seed, 0..e.chains);

    let mut all = Vec::new();
    let mut plot = String::from("m,functional,ratio,ci_low,ci_high,implied_constant,two_half_z\n");
    for &m in &masses {
        let dcfg = cfg.dynamics_at(m)?;
        let reps = spectral_gap_estimate(&funcs, &dcfg, e.kappa, &settings, cfg.base_seed)?;
        for (r, func) in reps.iter().zip(&funcs) {
            let gap = m - m_star;
            let implied = r.ratio * gap.powf(1.0 - e.kappa).min(gap);
            let row = out.report.row("poincare_ratio", r.ratio, r.ratio_ci, r.samples);
            row.m = Some(m);
            row.functional = Some(r.functional.clone());
            let row = out.report.row("variance", r.variance.mean, r.variance.ci95(), r.samples);
            row.m = Some(m);
            row.functional = Some(r.functional.clone());
            let row = out.report.row("dirichlet", r.dirichlet.mean, r.dirichlet.ci95(), r.samples);
            row.m = Some(m);
            row.functional = Some(r.functional.clone());
            let row = out.report.row("implied_constant", implied, (implied, implied), r.samples);
            row.m = Some(m);
            row.functional = Some(r.functional.clone());
            out.report.verdict(
                format!("{} at m={m}: stationary and finite", r.functional),
                r.valid(),
                settings.z_stationary - r.two_half_z,
            );
            if !dcfg.cubic && func.name == "linear" {
                let want = gaussian_gap_ratio(&func.tests[0], m, e.kappa);
                out.report.row("gaussian_gap_oracle", want, (want, want), 0).m = Some(m);
                let inside = r.ratio_ci.0 <= want && want <= r.ratio_ci.1;
                let margin = (want - r.ratio_ci.0).min(r.ratio_ci.1 - want);
                out.report.verdict(format!("Gaussian gap oracle inside CI at m={m}"), inside, margin);
            }
            plot.push_str(&format!(
                "{m},{},{},{},{},{},{}\n",
                r.functional, r.ratio, r.ratio_ci.0, r.ratio_ci.1, implied, r.two_half_z
            ));
        }
        all.push(reps);
    }
    if masses.len() > 1 {
        for (i, f) in funcs.iter().enumerate() {
            if all.iter().all(|reps| reps[i].trivial) {
                continue;
            }
            let ratios: Vec<f64> = all.iter().map(|reps| reps[i].ratio).collect();
            let drop = ratios.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
            let ok = ratios.iter().all(|r| r.is_finite()) && drop > 0.0;
            out.report.verdict(format!("{} ratio decreasing in m", f.name), ok, drop);
        }
    }
    out.json("gap.json", &all)?;
    out.csv("plot.csv", plot);
    Ok(out)
}

fn shipped_functional(cfg: &RunConfig, name: &str) -> Result<CylinderFunctional> {
    CylinderFunctional::shipped(cfg.grid()?)
        .into_iter()
        .find(|f| f.name == name)
        .ok_or_else(|| Error::Config(format!("unknown functional {name}")))
}

fn cmd_be_check(cfg: &RunConfig) -> Result<CommandOutput> {
    let mut out = CommandOutput::new(cfg);
    let e = &cfg.estimator;
    let func = shipped_functional(cfg, &e.functional)?;
    let dcfg = cfg.dynamics_at(cfg.dynamics.m)?;
    let f = initial_field(cfg)?;
    let s_nodes = refined_s_grid(e.t, dcfg.dt, e.s_octaves, e.s_per_octave)?;
    let nodes = s_nodes.len() as u64;
    let settings = BeSettings { t: e.t, s_nodes, lhs_replicas: e.lhs_replicas, outer: e.outer, inner: e.inner };
    let rep = be_identity_check(&func, &f, &settings, &dcfg, cfg.base_seed)?;
    let (l, o) = (e.lhs_replicas, e.outer);
    out.stream("lhs", cfg.base_seed, 0..l);
    out.stream("outer", cfg.base_seed, l..l + o);
    out.stream("inner", cfg.base_seed, l + o..l + o + o * nodes * e.inner);

    out.report.row("lhs_variance", rep.lhs.mean, rep.lhs_ci, rep.lhs.n).t = Some(rep.t);
    out.report.row("rhs_integral", rep.rhs.mean, rep.rhs_ci, rep.rhs.n).t = Some(rep.t);
    let margin = (rep.rhs_ci.1 - rep.lhs_ci.0).min(rep.lhs_ci.1 - rep.rhs_ci.0);
    out.report.verdict(format!("{}: 95% CIs of both sides overlap", func.name), rep.overlap, margin);
    if !dcfg.cubic && func.name == "linear" {
        let want = gaussian_be_oracle(&func.tests[0], dcfg.m, rep.t);
        out.report.row("gaussian_oracle", want, (want, want), 0).t = Some(rep.t);
        for (side, est) in [("lhs", rep.lhs), ("rhs", rep.rhs)] {
            let margin = est.oracle_margin(want, 3.0, ORACLE_REL_TOL);
            out.report.verdict(format!("Gaussian oracle within max(3 SE, 0.5%) of the {side}"), margin >= 0.0, margin);
        }
    }
    let mut csv = String::from("s,integrand\n");
    for (s, y) in &rep.integrand {
        csv.push_str(&format!("{s},{y}\n"));
    }
    out.json("be.json", &rep)?;
    out.csv("integrand.csv", csv);
    Ok(out)
}

/// Order-statistic 95% interval for the `q`-quantile of `n` sorted samples.
fn quantile_ci(sorted: &[f64], q: f64) -> (f64, f64) {
    let n = sorted.len() as f64;
    let half = Z95 * (n * q * (1.0 - q)).sqrt();
    let lo = ((n * q - half).floor().max(0.0) as usize).min(sorted.len() - 1);
    let hi = ((n * q + half).ceil() as usize).min(sorted.len() - 1);
    (sorted[lo], sorted[hi])
}

fn cmd_coming_down(cfg: &RunConfig) -> Result<CommandOutput> {
    let mut out = CommandOutput::new(cfg);
    let e = &cfg.estimator;
    let grid = cfg.grid()?;
    // a profile with a large zero mode, so growing it probes the nonlinearity
    // rather than how fast diffusion flattens it
    let profile = Field::constant(grid, 1.0).axpy(0.5, &Field::cos_mode(grid, 1, 0, 1.0))?;
    let profile = profile.scale(1.0 / profile.max_abs());
    let dcfg = cfg.dynamics_at(cfg.dynamics.m)?;
    let reps = 0..e.replicas;
    let stats_by_a = coming_down_profile(&profile, &e.magnitudes, e.lp, &dcfg, cfg.base_seed, reps.clone())?;
    out.stream("coming_down", cfg.base_seed, reps);

    let mut qcsv = String::from("magnitude,q,value,ci_low,ci_high\n");
    let mut scsv = String::from("replica,magnitude,value\n");
    let qs = [0.5, 0.9];
    let mut table = vec![Vec::new(); qs.len()];
    for s in &stats_by_a {
        let mut v = s.finite();
        if v.is_empty() {
            return Err(Error::InsufficientSamples(format!("every replica blew up at magnitude {}", s.magnitude)));
        }
        v.sort_by(|a, b| a.total_cmp(b));
        for (j, &q) in qs.iter().enumerate() {
            let x = stats::quantile_sorted(&v, q);
            let ci = quantile_ci(&v, q);
            out.report.row(&format!("quantile_{q}"), x, ci, v.len()).m = Some(s.magnitude);
            qcsv.push_str(&format!("{},{q},{x},{},{}\n", s.magnitude, ci.0, ci.1));
            table[j].push(x);
        }
        out.report.row("blow_ups", s.failures() as f64, (0.0, 0.0), s.samples.len()).m = Some(s.magnitude);
        for (r, x) in s.samples.iter().enumerate() {
            scsv.push_str(&format!("{r},{},{}\n", s.magnitude, x.map(|x| x.to_string()).unwrap_or_default()));
        }
    }
    for (j, &q) in qs.iter().enumerate() {
        let hi = table[j].iter().cloned().fold(0.0, f64::max);
        let lo = table[j].iter().cloned().fold(f64::INFINITY, f64::min);
        let ratio = hi / lo;
        out.report.verdict(format!("{q}-quantiles across magnitudes within a factor 2"), ratio < 2.0, 2.0 - ratio);
    }
    out.csv("quantiles.csv", qcsv);
    out.csv("samples.csv", scsv);
    Ok(out)
}

fn cmd_verify(cfg: &RunConfig) -> Result<CommandOutput> {
    let mut out = CommandOutput::new(cfg);
    let e = &cfg.estimator;
    let grid = cfg.grid()?;
    let seed = cfg.base_seed;
    let dcfg = cfg.dynamics_at(cfg.dynamics.m)?;
    let m = dcfg.m;
    let horizon = dcfg.horizon;

    // norms: ||1||_{L^2} = L and H^0 agrees with L^2
    let one = Field::constant(grid, 1.0);
    let probe = probe_field(cfg, 0)?;
    let err = (norm(&one, NormKind::Lp(2.0))? - grid.l)
        .abs()
        .max((norm(&probe, NormKind::sobolev(0.0))? - probe.l2_norm()).abs());
    out.report.row("norm_identity_error", err, (err, err), 2);
    out.report.verdict("norm identities hold to 1e-12", err <= 1e-12, 1e-12 - err);

    // Wick moments of the OU process at the horizon
    let c_true = wick_constant(&grid, m, horizon)?;
    let c_used = c_true * e.wick_constant_scale;
    let reps = 0..e.replicas;
    out.stream("wick_moments", seed, reps.clone());
    let moments: Vec<(f64, f64)> = reps
        .into_par_iter()
        .map(|r| -> Result<(f64, f64)> {
            let mut stream = NoiseStream::new(seed, r);
            let x = ou_step(&OuState::new(grid, m, 0.0, 0), horizon, &mut stream)?;
            let w = make_wick_with_constant(&x, c_used);
            let w2 = w.w2.real();
            let mean = w2.iter().sum::<f64>() / w2.len() as f64;
            let sq = w2.iter().map(|v| v * v).sum::<f64>() / w2.len() as f64;
            Ok((mean, sq))
        })
        .collect::<Result<_>>()?;
    let m1 = stats::mean_estimate(&moments.iter().map(|p| p.0).collect::<Vec<_>>());
    let m2 = stats::mean_estimate(&moments.iter().map(|p| p.1 / (2.0 * c_true * c_true)).collect::<Vec<_>>());
    out.report.row("wick2_mean", m1.mean, m1.ci95(), m1.n).t = Some(horizon);
    out.report.row("wick2_second_moment_over_2c2", m2.mean, m2.ci95(), m2.n).t = Some(horizon);
    let z1 = m1.mean.abs() / m1.se;
    let z2 = (m2.mean - 1.0).abs() / m2.se;
    out.report.verdict("E[:X^2:] = 0 within 4 SE", z1 <= 4.0, 4.0 - z1);
    out.report.verdict("E[(:X^2:)^2] = 2c^2 within 4 SE", z2 <= 4.0, 4.0 - z2);

    // degenerate barrier: restarts only at multiples of the cap
    let (theta, alpha, eps) = match &cfg.stopping {
        Some(s) => (s.theta, s.alpha, s.epsilon),
        None => (0.5, 0.3, 0.1),
    };
    let inf_stop = StoppingConfig::new(f64::INFINITY, theta.min(horizon), alpha, eps)?;
    let cap = inf_stop.cap_steps(dcfg.dt)?;
    let inf_reps = 0..4;
    let records = restart_schedules(grid, m, dcfg.dt, horizon, &inf_stop, seed, inf_reps.clone())?;
    out.stream("infinite_barrier", seed, inf_reps);
    let steps = dcfg.steps()?;
    let mut bad = 0usize;
    for rec in &records {
        for k in 0..=steps {
            let t = k as f64 * dcfg.dt;
            let want = 1 + (1..).take_while(|j| j * cap < k).count();
            if rec.count(t)? != want {
                bad += 1;
            }
        }
    }
    out.report.row("infinite_barrier_mismatches", bad as f64, (0.0, 0.0), records.len());
    out.report.verdict("eta = inf: N(t) = 1 + #{j >= 1 : j cap < t}", bad == 0, -(bad as f64));

    // energy inequality, tails, finite differences and adjoint pairing on
    // stopped trajectories
    let stop = match cfg.stopping_with(None)? {
        Some(s) => s,
        None => inf_stop,
    };
    let lambda = choose_lambda(stop.alpha)?.lambda;
    let f = initial_field(cfg)?;
    let paths = e.replicas.min(8);
    let path_reps = 0..paths;
    out.stream("energy_paths", seed, path_reps.clone());
    let energy: Vec<_> = path_reps
        .into_par_iter()
        .map(|r| -> Result<_> {
            let traj = evolve(&f, &dcfg, NoiseStream::new(seed, r), Some(&stop))?;
            let flow = LinearizedFlow::new(&traj)?;
            let h = probe_field(cfg, 1 + r)?;
            let path = flow.propagate_path(&h, 0, traj.steps())?;
            let rep = verify_energy_inequality(&traj, &path, 0, traj.steps(), lambda, stop.alpha, 0.05)?;
            // adjoint pairing <J h, g> = <h, J* g>
            let g = probe_field(cfg, 1000 + r)?;
            let a = path.last().expect("non-empty path").inner(&g)?;
            let b = h.inner(&flow.adjoint_steps(&g, 0, traj.steps())?)?;
            let pairing = (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
            Ok((rep, pairing, traj.stopping.clone().expect("stopped run")))
        })
        .collect::<Result<_>>()?;
    let violations: usize = energy.iter().map(|x| x.0.violations).sum();
    let worst = energy.iter().map(|x| x.0.min_log_margin).fold(f64::INFINITY, f64::min);
    out.report.row("energy_min_log_margin", worst, (worst, worst), energy.len());
    out.report.verdict("energy inequality: no violations beyond 5% tolerance", violations == 0, worst + 1.05f64.ln());
    let pairing = energy.iter().map(|x| x.1).fold(0.0, f64::max);
    out.report.row("adjoint_pairing_gap", pairing, (pairing, pairing), energy.len());
    out.report.verdict("adjoint pairing gap <= 1e-9", pairing <= 1e-9, 1e-9 - pairing);
    let recs: Vec<StoppingRecord> = energy.into_iter().map(|x| x.2).collect();
    tails(&mut out, &recs, horizon, stop.theta, 5)?;

    let fd = finite_diff_check(&f, &probe, 1e-4, &dcfg, NoiseStream::new(seed, 0))?;
    out.report.row("finite_difference_error", fd, (fd, fd), 1);
    out.report.verdict("finite differences match the linearisation to 1e-3", fd <= 1e-3, 1e-3 - fd);

    // variance identity on a small nested estimate
    let func = shipped_functional(cfg, &e.functional)?;
    let t = e.t.min(horizon);
    let s_nodes = refined_s_grid(t, dcfg.dt, e.s_octaves, e.s_per_octave)?;
    let nodes = s_nodes.len() as u64;
    let be = be_identity_check(
        &func,
        &f,
        &BeSettings { t, s_nodes, lhs_replicas: e.lhs_replicas, outer: e.outer, inner: e.inner },
        &dcfg,
        seed,
    )?;
    out.stream("variance_identity", seed, 0..e.lhs_replicas + e.outer * (1 + nodes * e.inner));
    out.report.row("be_lhs", be.lhs.mean, be.lhs_ci, be.lhs.n).t = Some(t);
    out.report.row("be_rhs", be.rhs.mean, be.rhs_ci, be.rhs.n).t = Some(t);
    let margin = (be.rhs_ci.1 - be.lhs_ci.0).min(be.lhs_ci.1 - be.rhs_ci.0);
    out.report.verdict("variance identity: 95% CIs overlap", be.overlap, margin);

    // checkpoint of one trajectory, replayed from its own files
    let ck = checkpoint_files(&f, &dcfg, NoiseStream::new(seed, 0), Some(&stop), (steps / 8).max(1))?;
    let again = checkpoint_files(&f, &dcfg, NoiseStream::new(seed, 0), Some(&stop), (steps / 8).max(1))?;
    let same = ck == again;
    out.report.verdict("checkpoint replays bit-exactly", same, if same { 0.0 } else { -1.0 });
    for (name, bytes) in ck {
        out.files.push((format!("checkpoint/{name}"), bytes));
    }
    Ok(out)
}
