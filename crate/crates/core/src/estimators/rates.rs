//! Decay and short-time smoothing rates of `||J_{0,t}||` fitted from Monte
//! Carlo moments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::check_alpha;
use crate::dynamics::{evolve, DynamicsConfig};
use crate::error::{Error, Result};
use crate::linearization::{operator_norm_steps, LinearizedFlow, NormMethod};
use crate::rng::NoiseStream;
use crate::stats::{self, linear_fit, LinearFit, Z95};
use crate::torus::{Field, NormKind, TorusGrid};

/// `E^{1/p} ||J_{0,t}||` at one time, in the log domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormMoment {
    pub t: f64,
    pub log_estimate: f64,
    pub log_ci_low: f64,
    pub log_ci_high: f64,
    pub n: usize,
    /// Replicas dropped for blow-up or non-finite norms.
    pub failures: usize,
    /// Replicas whose power iteration hit the budget.
    pub unconverged: usize,
}

fn grid_index(t: f64, dt: f64) -> Result<usize> {
    let r = t / dt;
    if !(t > 0.0) || (r - r.round()).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::OffGrid(t));
    }
    Ok(r.round() as usize)
}

/// Moments of `||J_{0,t}||_{L^2 -> target}` over replicas, one trajectory per
/// replica and one power iteration per time.
#[allow(clippy::too_many_arguments)]
pub fn norm_moments(
    f: &Field,
    cfg: &DynamicsConfig,
    times: &[f64],
    target: NormKind,
    p: f64,
    budget: usize,
    base_seed: u64,
    replicas: std::ops::Range<u64>,
) -> Result<Vec<NormMoment>> {
    if !(p >= 1.0) {
        return Err(Error::param("moment order p must be >= 1"));
    }
    if times.is_empty() {
        return Err(Error::param("empty time grid"));
    }
    let horizon = times.iter().cloned().fold(0.0, f64::max);
    let idx = times.iter().map(|&t| grid_index(t, cfg.dt)).collect::<Result<Vec<_>>>()?;
    let cfg = (*cfg).with_horizon(horizon);
    let per_replica: Vec<Option<Vec<(f64, bool)>>> = replicas
        .into_par_iter()
        .map(|r| -> Result<Option<Vec<(f64, bool)>>> {
            let traj = match evolve(f, &cfg, NoiseStream::new(base_seed, r), None) {
                Ok(t) => t,
                Err(Error::BlowUp { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let flow = LinearizedFlow::new(&traj)?;
            idx.iter()
                .map(|&k| {
                    operator_norm_steps(&flow, 0, k, target, NormMethod::PowerIteration, budget, (base_seed, r))
                        .map(|e| (e.estimate, e.converged))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let mut xs = Vec::new();
            let mut failures = 0;
            let mut unconverged = 0;
            for rep in &per_replica {
                match rep {
                    Some(v) if v[i].0.is_finite() => {
                        xs.push(v[i].0);
                        if !v[i].1 {
                            unconverged += 1;
                        }
                    }
                    _ => failures += 1,
                }
            }
            // log E x^p / p with scaling by the largest sample
            let top = xs.iter().cloned().fold(0.0, f64::max);
            let scaled: Vec<f64> = xs.iter().map(|x| (x / top).powf(p)).collect();
            let est = stats::mean_estimate(&scaled);
            let log_estimate = top.ln() + est.mean.ln() / p;
            let half = if est.n > 1 { Z95 * est.se / (p * est.mean) } else { f64::NAN };
            NormMoment {
                t,
                log_estimate,
                log_ci_low: log_estimate - half,
                log_ci_high: log_estimate + half,
                n: xs.len(),
                failures,
                unconverged,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassRate {
    pub m: f64,
    pub rows: Vec<NormMoment>,
    pub fit: LinearFit,
    /// `r(m) = -slope`.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub p: f64,
    pub rates: Vec<MassRate>,
    /// `max_m (m - r(m))`.
    pub m_star_hat: f64,
    /// `r(m)` strictly increasing along the (sorted) mass list.
    pub increasing: bool,
    pub non_finite: bool,
}

/// Fits `log E^{1/p} ||J_{0,t}||_{L^2 -> L^2}` against `t` for each mass.
/// `cfg` supplies the grid, step and switches; its mass is replaced.
#[allow(clippy::too_many_arguments)]
pub fn contraction_rate(
    masses: &[f64],
    times: &[f64],
    p: f64,
    f: &Field,
    cfg: &DynamicsConfig,
    budget: usize,
    base_seed: u64,
    replicas: std::ops::Range<u64>,
) -> Result<ContractionReport> {
    if times.len() < 4 {
        return Err(Error::param("contraction fits need at least 4 times"));
    }
    if masses.is_empty() {
        return Err(Error::param("empty mass list"));
    }
    let mut rates = Vec::with_capacity(masses.len());
    for &m in masses {
        let mut c = *cfg;
        c.m = m;
        let rows = norm_moments(f, &c, times, NormKind::sobolev(0.0), p, budget, base_seed, replicas.clone())?;
        let y: Vec<f64> = rows.iter().map(|r| r.log_estimate).collect();
        let fit = linear_fit(times, &y);
        rates.push(MassRate { m, rows, fit, rate: -fit.slope });
    }
    let non_finite = rates.iter().any(|r| !r.rate.is_finite());
    let m_star_hat = rates.iter().map(|r| r.m - r.rate).fold(f64::NEG_INFINITY, f64::max);
    let mut sorted: Vec<&MassRate> = rates.iter().collect();
    sorted.sort_by(|a, b| a.m.total_cmp(&b.m));
    let increasing = sorted.windows(2).all(|w| w[1].rate > w[0].rate);
    Ok(ContractionReport { p, rates, m_star_hat, increasing, non_finite })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingReport {
    pub kappa: f64,
    pub alpha: f64,
    pub rows: Vec<NormMoment>,
    /// Fit of the log-moment against `ln t`.
    pub fit: LinearFit,
    /// `e = -slope`.
    pub exponent: f64,
    /// `(kappa + 5 alpha) / 2`.
    pub bound: f64,
    pub pass: bool,
}

/// Short-time exponent of `E^{1/p} ||J_{0,t}||_{L^2 -> H^kappa}`.
#[allow(clippy::too_many_arguments)]
pub fn smoothing_exponent(
    kappa: f64,
    alpha: f64,
    times: &[f64],
    p: f64,
    f: &Field,
    cfg: &DynamicsConfig,
    budget: usize,
    base_seed: u64,
    replicas: std::ops::Range<u64>,
) -> Result<SmoothingReport> {
    check_alpha(alpha)?;
    if !(0.0..1.0).contains(&kappa) || !(alpha < (1.0 - kappa) / 5.0) {
        return Err(Error::param(format!(
            "need 0 <= kappa < 1 and alpha < (1 - kappa)/5, got kappa={kappa}, alpha={alpha}"
        )));
    }
    if times.len() < 3 || times.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::param("short-time grid needs at least 3 times in (0, 1)"));
    }
    let rows = norm_moments(f, cfg, times, NormKind::sobolev(kappa), p, budget, base_seed, replicas)?;
    let x: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.log_estimate).collect();
    let fit = linear_fit(&x, &y);
    let exponent = -fit.slope;
    let bound = (kappa + 5.0 * alpha) / 2.0;
    let slack = if fit.slope_se.is_finite() { Z95 * fit.slope_se } else { 0.0 };
    Ok(SmoothingReport { kappa, alpha, rows, fit, exponent, bound, pass: exponent <= bound + slack })
}

/// `max_k (1 + |k|^2)^{kappa/2} e^{-t lambda_k}`: `||S_t||_{L^2 -> H^kappa}` of the heat flow.
pub fn heat_multiplier_sup(grid: &TorusGrid, m: f64, kappa: f64, t: f64) -> f64 {
    grid.k_phys_sq().iter().map(|&k2| (1.0 + k2).powf(kappa / 2.0) * (-t * (m + k2)).exp()).fold(0.0, f64::max)
}
