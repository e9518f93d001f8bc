//! Poincare ratio `Var_nu F / E_nu ||DF||^2_{H^{-kappa}}` estimated along long
//! runs of the dynamics, which sample the invariant measure after burn-in.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CylinderFunctional;
use crate::dynamics::{evolve_observed, DynamicsConfig, RecordLevel};
use crate::error::{Error, Result};
use crate::rng::NoiseStream;
use crate::stats::{self, MeanEstimate, Z95};
use crate::torus::{norm, Field, NormKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSettings {
    pub burn_in: f64,
    pub run_length: f64,
    /// Record every this many steps after burn-in.
    pub sample_every: usize,
    pub chains: u64,
    /// Batches per chain for batch-means errors.
    pub batches: usize,
    /// Two-half test threshold in standard errors.
    pub z_stationary: f64,
}

impl Default for GapSettings {
    fn default() -> Self {
        Self { burn_in: 2.0, run_length: 20.0, sample_every: 10, chains: 4, batches: 10, z_stationary: 3.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub functional: String,
    pub m: f64,
    pub kappa: f64,
    pub mean: MeanEstimate,
    pub variance: MeanEstimate,
    pub dirichlet: MeanEstimate,
    pub ratio: f64,
    pub ratio_ci: (f64, f64),
    /// `|mean(first half) - mean(second half)|` in standard errors.
    pub two_half_z: f64,
    pub stationary: bool,
    /// `F` is constant on the samples: ratio reported as 0.
    pub trivial: bool,
    pub samples: usize,
}

impl GapReport {
    pub fn valid(&self) -> bool {
        self.stationary && self.ratio.is_finite()
    }
}

/// Batch means over each chain separately, pooled across chains.
fn pooled_batch_means(chains: &[Vec<f64>], batches: usize) -> MeanEstimate {
    let mut means = Vec::new();
    let mut n = 0;
    for c in chains {
        n += c.len();
        let b = batches.max(1).min(c.len().max(1));
        let len = c.len() / b;
        if len == 0 {
            continue;
        }
        means.extend((0..b).map(|i| stats::mean(&c[i * len..(i + 1) * len])));
    }
    let est = stats::mean_estimate(&means);
    MeanEstimate { mean: est.mean, se: est.se, n }
}

/// Runs `chains` independent chains (replica ids `0..chains`) once and
/// evaluates every functional on the same samples.
pub fn spectral_gap_estimate(
    funcs: &[CylinderFunctional],
    cfg: &DynamicsConfig,
    kappa: f64,
    settings: &GapSettings,
    base_seed: u64,
) -> Result<Vec<GapReport>> {
    if funcs.is_empty() {
        return Err(Error::param("no functionals to evaluate"));
    }
    if !(0.0..1.0).contains(&kappa) {
        return Err(Error::param(format!("kappa must lie in [0, 1), got {kappa}")));
    }
    if !cfg.noise {
        return Err(Error::param("sampling the invariant measure needs the noise on"));
    }
    if settings.chains < 1 || settings.sample_every == 0 || !(settings.burn_in >= 0.0 && settings.run_length > 0.0) {
        return Err(Error::param("invalid chain settings"));
    }
    let grid = cfg.grid;
    let burn = (settings.burn_in / cfg.dt).round() as usize;
    let run = (*cfg).with_horizon(settings.burn_in + settings.run_length);
    let neg = NormKind::sobolev(-kappa);

    // per chain, per functional: (F values, ||DF||^2 values)
    let per_chain: Vec<Vec<(Vec<f64>, Vec<f64>)>> = (0..settings.chains)
        .into_par_iter()
        .map(|c| -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
            let mut out = vec![(Vec::new(), Vec::new()); funcs.len()];
            let mut err = None;
            evolve_observed(&Field::zeros(grid), &run, NoiseStream::new(base_seed, c), None, RecordLevel::Ends, |s| {
                if s.index <= burn || !(s.index - burn).is_multiple_of(settings.sample_every) || err.is_some() {
                    return;
                }
                let w1 = s.wick.w1.fourier();
                let u: Vec<_> = s.v.iter().zip(w1.iter()).map(|(a, b)| a + b).collect();
                let res = Field::from_fourier(grid, u).and_then(|u| {
                    for (i, f) in funcs.iter().enumerate() {
                        out[i].0.push(f.value(&u)?);
                        out[i].1.push(norm(&f.derivative(&u)?, neg)?.powi(2));
                    }
                    Ok(())
                });
                if let Err(e) = res {
                    err = Some(e);
                }
            })?;
            match err {
                Some(e) => Err(e),
                None => Ok(out),
            }
        })
        .collect::<Result<_>>()?;

    funcs
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let vals: Vec<Vec<f64>> = per_chain.iter().map(|c| c[i].0.clone()).collect();
            let dirs: Vec<Vec<f64>> = per_chain.iter().map(|c| c[i].1.clone()).collect();
            let samples: usize = vals.iter().map(|v| v.len()).sum();
            if samples < 4 {
                return Err(Error::InsufficientSamples(format!("{samples} post burn-in samples")));
            }
            let mean = pooled_batch_means(&vals, settings.batches);
            let centred: Vec<Vec<f64>> =
                vals.iter().map(|v| v.iter().map(|x| (x - mean.mean).powi(2)).collect()).collect();
            let variance = pooled_batch_means(&centred, settings.batches);
            let dirichlet = pooled_batch_means(&dirs, settings.batches);

            let halves = |first: bool| -> Vec<Vec<f64>> {
                vals.iter().map(|v| if first { v[..v.len() / 2].to_vec() } else { v[v.len() / 2..].to_vec() }).collect()
            };
            let h1 = pooled_batch_means(&halves(true), settings.batches / 2);
            let h2 = pooled_batch_means(&halves(false), settings.batches / 2);
            let spread = (h1.se * h1.se + h2.se * h2.se).sqrt();
            let diff = (h1.mean - h2.mean).abs();
            let two_half_z = if spread > 0.0 {
                diff / spread
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };

            let trivial = variance.mean == 0.0 && dirichlet.mean == 0.0;
            let (ratio, ratio_ci) = if trivial {
                (0.0, (0.0, 0.0))
            } else {
                let r = variance.mean / dirichlet.mean;
                let rel = ((variance.se / variance.mean).powi(2) + (dirichlet.se / dirichlet.mean).powi(2)).sqrt();
                (r, (r * (1.0 - Z95 * rel), r * (1.0 + Z95 * rel)))
            };
            Ok(GapReport {
                functional: f.name.clone(),
                m: cfg.m,
                kappa,
                mean,
                variance,
                dirichlet,
                ratio,
                ratio_ci,
                two_half_z,
                stationary: two_half_z <= settings.z_stationary,
                trivial,
                samples,
            })
        })
        .collect()
}

/// Stationary `Var <X, h> = L^2 Sum_k |h_k|^2 / lambda_k` of the OU process.
pub fn gaussian_variance(h: &Field, m: f64) -> f64 {
    let g = h.grid();
    let area = g.l * g.l;
    g.symbol(m).iter().zip(h.fourier().iter()).map(|(&lam, c)| area * c.norm_sqr() / lam).sum()
}

/// Poincare ratio of `F(u) = <u, h>` under the OU measure:
/// `Sum |h_k|^2 / lambda_k` over `Sum |h_k|^2 (1 + |k|^2)^{-kappa}`.
pub fn gaussian_gap_ratio(h: &Field, m: f64, kappa: f64) -> f64 {
    let g = h.grid();
    let area = g.l * g.l;
    let dir: f64 = g
        .k_phys_sq()
        .iter()
        .zip(h.fourier().iter())
        .map(|(&k2, c)| area * c.norm_sqr() * (1.0 + k2).powf(-kappa))
        .sum();
    gaussian_variance(h, m) / dir
}
