//! Semigroup gradient `DP_tF(f) = E[J_{0,t}^* DF(u_t)]` and the variance
//! identity `P_tF^2 - (P_tF)^2 = 2 int_0^t P_{t-s}(||DP_sF||^2) ds`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CylinderFunctional;
use crate::dynamics::{evolve, full_solution, DynamicsConfig};
use crate::error::{Error, Result};
use crate::linearization::LinearizedFlow;
use crate::rng::NoiseStream;
use crate::stats::{self, MeanEstimate};
use crate::torus::{Field, TorusGrid};

/// Lattice modes with `max(|k1|, |k2|) <= LOW_BAND` get per-mode standard errors.
pub const LOW_BAND: i64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeEstimate {
    pub k: (i64, i64),
    pub re: f64,
    pub im: f64,
    /// Standard error of the complex coefficient, `sqrt(se_re^2 + se_im^2)`.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub mean: Field,
    pub modes: Vec<ModeEstimate>,
    pub n: usize,
    /// Blown-up replicas left out of the average.
    pub dropped: usize,
}

fn steps_for(t: f64, dt: f64) -> Result<usize> {
    let r = t / dt;
    if !(t >= 0.0) || (r - r.round()).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::OffGrid(t));
    }
    Ok(r.round() as usize)
}

/// One sample `J_{0,t}^* DF(u_t)` per replica; `None` for blow-ups.
fn gradient_samples(
    func: &CylinderFunctional,
    f: &Field,
    t: f64,
    cfg: &DynamicsConfig,
    base_seed: u64,
    replicas: std::ops::Range<u64>,
) -> Result<Vec<Option<Field>>> {
    let steps = steps_for(t, cfg.dt)?;
    if steps == 0 {
        let d = func.derivative(f)?;
        return Ok(replicas.map(|_| Some(d.clone())).collect());
    }
    let cfg = (*cfg).with_horizon(steps as f64 * cfg.dt);
    replicas
        .into_par_iter()
        .map(|r| {
            let traj = match evolve(f, &cfg, NoiseStream::new(base_seed, r), None) {
                Ok(t) => t,
                Err(Error::BlowUp { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let u = Field::from_fourier(cfg.grid, traj.final_record().u_hat())?;
            let flow = LinearizedFlow::new(&traj)?;
            flow.adjoint_steps(&func.derivative(&u)?, 0, steps).map(Some)
        })
        .collect()
}

fn low_modes(grid: &TorusGrid, samples: &[Vec<Complex64>]) -> Vec<ModeEstimate> {
    let sp = grid.spectral();
    sp.wavenumbers
        .iter()
        .enumerate()
        .filter(|(_, &(a, b))| a.abs() <= LOW_BAND && b.abs() <= LOW_BAND)
        .map(|(i, &k)| {
            let re: Vec<f64> = samples.iter().map(|s| s[i].re).collect();
            let im: Vec<f64> = samples.iter().map(|s| s[i].im).collect();
            let (er, ei) = (stats::mean_estimate(&re), stats::mean_estimate(&im));
            let se = if samples.len() > 1 { (er.se * er.se + ei.se * ei.se).sqrt() } else { f64::NAN };
            ModeEstimate { k, re: er.mean, im: ei.mean, se }
        })
        .collect()
}

/// Monte Carlo estimate of `DP_tF(f)`. At `t = 0` this is `DF(f)` itself.
pub fn semigroup_gradient(
    func: &CylinderFunctional,
    f: &Field,
    t: f64,
    cfg: &DynamicsConfig,
    base_seed: u64,
    replicas: std::ops::Range<u64>,
) -> Result<GradientEstimate> {
    cfg.grid.check_same(f.grid())?;
    if t == 0.0 {
        let d = func.derivative(f)?;
        let n = replicas.end.saturating_sub(replicas.start) as usize;
        let modes = low_modes(&cfg.grid, &[d.fourier().into_owned()])
            .into_iter()
            .map(|m| ModeEstimate { se: 0.0, ..m })
            .collect();
        return Ok(GradientEstimate { mean: d, modes, n, dropped: 0 });
    }
    let samples = gradient_samples(func, f, t, cfg, base_seed, replicas)?;
    let dropped = samples.iter().filter(|s| s.is_none()).count();
    let coeffs: Vec<Vec<Complex64>> = samples.into_iter().flatten().map(|s| s.into_fourier_vec()).collect();
    if coeffs.is_empty() {
        return Err(Error::InsufficientSamples("every replica blew up".into()));
    }
    let n = coeffs.len();
    let len = coeffs[0].len();
    let mut mean = vec![Complex64::new(0.0, 0.0); len];
    for c in &coeffs {
        for (m, x) in mean.iter_mut().zip(c) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    Ok(GradientEstimate {
        mean: Field::from_fourier(cfg.grid, mean)?,
        modes: low_modes(&cfg.grid, &coeffs),
        n,
        dropped,
    })
}

/// Unbiased estimate of `||E X||^2` from i.i.d. samples:
/// `(||Sum X_i||^2 - Sum ||X_i||^2) / (n (n - 1))`.
fn squared_norm_of_mean(samples: &[Field]) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientSamples("need two inner samples for an unbiased squared norm".into()));
    }
    let grid = *samples[0].grid();
    let mut sum = Field::zeros(grid);
    let mut diag = 0.0;
    for s in samples {
        sum = sum.add(s)?;
        diag += s.l2_norm().powi(2);
    }
    Ok((sum.l2_norm().powi(2) - diag) / (n * (n - 1)) as f64)
}

/// `0`, `t 2^{-j/per_octave}` (`j = 0..=per_octave * octaves`) and `t i / 16`,
/// snapped up to the `dt` grid, sorted and deduplicated.
pub fn refined_s_grid(t: f64, dt: f64, octaves: usize, per_octave: usize) -> Result<Vec<f64>> {
    let steps = steps_for(t, dt)?;
    if steps == 0 {
        return Err(Error::param("the variance identity needs t > 0"));
    }
    let mut idx: Vec<usize> = vec![0, steps];
    let per = per_octave.max(1);
    for j in 0..=per * octaves {
        let s = t * 2f64.powf(-(j as f64) / per as f64);
        idx.push(((s / dt - 1e-9).ceil() as usize).clamp(1, steps));
    }
    for i in 1..16 {
        idx.push(((t * i as f64 / 16.0) / dt).round() as usize);
    }
    idx.sort_unstable();
    idx.dedup();
    Ok(idx.into_iter().map(|k| k as f64 * dt).collect())
}

fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let h = x[i + 1] - x[i];
        w[i] += h / 2.0;
        w[i + 1] += h / 2.0;
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeSettings {
    pub t: f64,
    /// Quadrature nodes in `[0, t]`, including both ends, on the `dt` grid.
    pub s_nodes: Vec<f64>,
    pub lhs_replicas: u64,
    pub outer: u64,
    pub inner: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeReport {
    pub t: f64,
    /// `Var F(u_t)`.
    pub lhs: MeanEstimate,
    /// `2 int_0^t P_{t-s}(||DP_sF||^2) ds`.
    pub rhs: MeanEstimate,
    pub lhs_ci: (f64, f64),
    pub rhs_ci: (f64, f64),
    pub overlap: bool,
    /// Per-node estimates of `P_{t-s}(||DP_sF||^2)`.
    pub integrand: Vec<(f64, f64)>,
    pub dropped: usize,
}

/// Both sides of the variance identity by nested Monte Carlo.
///
/// Replica ids: `[0, lhs)` for the left side, `[lhs, lhs + outer)` for the
/// outer paths, then disjoint blocks of `inner` ids per (outer path, node).
/// One outer path serves all nodes (common random numbers across `s`).
pub fn be_identity_check(
    func: &CylinderFunctional,
    f: &Field,
    settings: &BeSettings,
    cfg: &DynamicsConfig,
    base_seed: u64,
) -> Result<BeReport> {
    let BeSettings { t, ref s_nodes, lhs_replicas, outer, inner } = *settings;
    if lhs_replicas < 2 || outer < 2 || inner < 2 {
        return Err(Error::InsufficientSamples(format!(
            "variance identity needs >= 2 replicas at every level, got lhs={lhs_replicas}, outer={outer}, inner={inner}"
        )));
    }
    let total = steps_for(t, cfg.dt)?;
    if s_nodes.len() < 2 || s_nodes[0] != 0.0 || (s_nodes[s_nodes.len() - 1] - t).abs() > 1e-12 * t {
        return Err(Error::param("s-grid must start at 0 and end at t"));
    }
    let node_steps = s_nodes.iter().map(|&s| steps_for(s, cfg.dt)).collect::<Result<Vec<_>>>()?;
    let cfg_t = (*cfg).with_horizon(t);

    let values: Vec<Option<f64>> = (0..lhs_replicas)
        .into_par_iter()
        .map(|r| match evolve(f, &cfg_t, NoiseStream::new(base_seed, r), None) {
            Ok(traj) => {
                Field::from_fourier(cfg.grid, traj.final_record().u_hat()).and_then(|u| func.value(&u)).map(Some)
            }
            Err(Error::BlowUp { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let mut dropped = values.iter().filter(|v| v.is_none()).count();
    let fvals: Vec<f64> = values.into_iter().flatten().collect();
    let lhs = stats::variance_estimate(&fvals);

    let weights = trapezoid_weights(s_nodes);
    let nodes = s_nodes.len() as u64;
    let inner_base = lhs_replicas + outer;
    let per_outer: Vec<Option<Vec<f64>>> = (0..outer)
        .into_par_iter()
        .map(|j| -> Result<Option<Vec<f64>>> {
            let traj = match evolve(f, &cfg_t, NoiseStream::new(base_seed, lhs_replicas + j), None) {
                Ok(t) => t,
                Err(Error::BlowUp { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let mut ys = Vec::with_capacity(node_steps.len());
            for (i, &k) in node_steps.iter().enumerate() {
                let start = full_solution(&traj, (total - k) as f64 * cfg.dt)?;
                let y = if k == 0 {
                    func.derivative(&start)?.l2_norm().powi(2)
                } else {
                    let lo = inner_base + (j * nodes + i as u64) * inner;
                    let samples = gradient_samples(func, &start, k as f64 * cfg.dt, cfg, base_seed, lo..lo + inner)?;
                    let ok: Vec<Field> = samples.into_iter().flatten().collect();
                    if ok.len() < 2 {
                        return Ok(None);
                    }
                    squared_norm_of_mean(&ok)?
                };
                ys.push(y);
            }
            Ok(Some(ys))
        })
        .collect::<Result<_>>()?;
    dropped += per_outer.iter().filter(|v| v.is_none()).count();
    let rows: Vec<Vec<f64>> = per_outer.into_iter().flatten().collect();
    if rows.len() < 2 {
        return Err(Error::InsufficientSamples("fewer than two usable outer paths".into()));
    }
    let z: Vec<f64> = rows.iter().map(|ys| 2.0 * ys.iter().zip(&weights).map(|(y, w)| y * w).sum::<f64>()).collect();
    let rhs = stats::mean_estimate(&z);
    let integrand = s_nodes
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, stats::mean(&rows.iter().map(|ys| ys[i]).collect::<Vec<_>>())))
        .collect();
    let lhs_ci = lhs.ci95();
    let rhs_ci = rhs.ci95();
    let overlap = lhs_ci.0 <= rhs_ci.1 && rhs_ci.0 <= lhs_ci.1;
    Ok(BeReport { t, lhs, rhs, lhs_ci, rhs_ci, overlap, integrand, dropped })
}

/// `Var <X_t, h>` for the OU process started at zero:
/// `L^2 Sum_k |h_k|^2 (1 - e^{-2 lambda_k t}) / lambda_k`.
/// Both sides of the identity equal this in the Gaussian case.
pub fn gaussian_be_oracle(h: &Field, m: f64, t: f64) -> f64 {
    let g = h.grid();
    let area = g.l * g.l;
    let hat = h.fourier();
    g.symbol(m).iter().zip(hat.iter()).map(|(&lam, c)| area * c.norm_sqr() * -(-2.0 * lam * t).exp_m1() / lam).sum()
}
