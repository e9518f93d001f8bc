//! Ornstein-Uhlenbeck driver of the stochastic heat equation
//! `(d_t - Laplacian + m) X = sqrt(2) xi`, its lattice Wick powers and the
//! renormalisation constants.
//!
//! Each Fourier mode is an exact OU process: per step,
//! `X_k <- e^{-lambda_k dt} X_k + g_k` with `E|g_k|^2 = (1 - e^{-2 lambda_k dt}) / (lambda_k L^2)`,
//! so the spectral Galerkin law is reproduced for any step size.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::NoiseStream;
use crate::stats;
use crate::torus::{besov_block_maxima, besov_from_maxima, fourier_to_real, Field, TorusGrid};

fn check_mass(m: f64) -> Result<()> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::param(format!("the Gaussian sector needs a positive mass, got {m}")));
    }
    Ok(())
}

/// `Sum_k (1 - e^{-2 lambda_k e}) / (lambda_k L^2)`: pointwise variance of `X_{s,s+e}`.
pub fn wick_constant(grid: &TorusGrid, m: f64, elapsed: f64) -> Result<f64> {
    check_mass(m)?;
    if !(elapsed >= 0.0) {
        return Err(Error::param(format!("elapsed time must be >= 0, got {elapsed}")));
    }
    let area = grid.l * grid.l;
    Ok(grid.symbol(m).iter().map(|&lam| -(-2.0 * lam * elapsed).exp_m1() / (lam * area)).sum())
}

/// `Sum_k e^{-2 lambda_k t} / (lambda_k L^2)`, the part of the stationary
/// variance not yet accumulated after time `t`. Equals
/// `wick_constant(inf) - wick_constant(t)`, so `X_{s,t}` Wick powers plus this
/// counterterm agree with the stationary ones.
pub fn c_t_infty(grid: &TorusGrid, m: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::param(format!("c_t_infty needs t > 0, got {t}")));
    }
    c_tail(grid, m, t)
}

/// As [`c_t_infty`] but also defined at `t = 0`, where it is the full
/// stationary variance.
pub(crate) fn c_tail(grid: &TorusGrid, m: f64, t: f64) -> Result<f64> {
    check_mass(m)?;
    let area = grid.l * grid.l;
    Ok(grid.symbol(m).iter().map(|&lam| (-2.0 * lam * t).exp() / (lam * area)).sum())
}

/// Per-mode decay and innovation scale for one OU step of size `dt`.
#[derive(Debug, Clone)]
pub struct OuKernel {
    pub grid: TorusGrid,
    pub m: f64,
    pub dt: f64,
    decay: Vec<f64>,
    sigma: Vec<f64>,
}

impl OuKernel {
    pub fn new(grid: TorusGrid, m: f64, dt: f64) -> Result<Self> {
        check_mass(m)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param(format!("OU step needs dt > 0, got {dt}")));
        }
        let area = grid.l * grid.l;
        let lam = grid.symbol(m);
        let decay = lam.iter().map(|&l| (-l * dt).exp()).collect();
        let sigma = lam.iter().map(|&l| (-(-2.0 * l * dt).exp_m1() / (l * area)).sqrt()).collect();
        Ok(Self { grid, m, dt, decay, sigma })
    }

    /// Hermitian complex Gaussian innovations for one step.
    pub fn innovations(&self, rng: &mut impl Rng) -> Vec<Complex64> {
        let sp = self.grid.spectral();
        let mut g = vec![Complex64::new(0.0, 0.0); self.sigma.len()];
        for i in 0..g.len() {
            let j = sp.partner[i];
            if j == i {
                let a: f64 = StandardNormal.sample(rng);
                g[i] = Complex64::new(self.sigma[i] * a, 0.0);
            } else if i < j {
                let a: f64 = StandardNormal.sample(rng);
                let b: f64 = StandardNormal.sample(rng);
                let s = self.sigma[i] * std::f64::consts::FRAC_1_SQRT_2;
                g[i] = Complex64::new(s * a, s * b);
                g[j] = g[i].conj();
            }
        }
        g
    }

    /// Advances `state` by `dt` using the draws of the stream's current step.
    pub fn step(&self, state: &mut OuState, stream: &mut NoiseStream) {
        let g = self.innovations(&mut stream.next_rng());
        for ((x, a), gi) in state.coeffs.iter_mut().zip(&self.decay).zip(&g) {
            *x = *x * *a + gi;
        }
        state.time += self.dt;
    }
}

/// `X_{s,t}` in Fourier coefficients, born at `s` from zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuState {
    pub grid: TorusGrid,
    pub m: f64,
    pub time: f64,
    pub birth: f64,
    /// Stream counter at birth; the process only ever uses draws from here on.
    pub birth_counter: u64,
    #[serde(skip)]
    pub coeffs: Vec<Complex64>,
}

impl OuState {
    pub fn new(grid: TorusGrid, m: f64, birth: f64, birth_counter: u64) -> Self {
        Self { grid, m, time: birth, birth, birth_counter, coeffs: vec![Complex64::new(0.0, 0.0); grid.points()] }
    }

    pub fn elapsed(&self) -> f64 {
        self.time - self.birth
    }

    pub fn field(&self) -> Field {
        Field::from_fourier(self.grid, self.coeffs.clone()).expect("grid-sized coefficients")
    }
}

/// One exact OU step of size `dt`.
pub fn ou_step(state: &OuState, dt: f64, stream: &mut NoiseStream) -> Result<OuState> {
    let kernel = OuKernel::new(state.grid, state.m, dt)?;
    let mut next = state.clone();
    kernel.step(&mut next, stream);
    Ok(next)
}

/// Fresh process born at `s`, drawing only increments after the stream's
/// current position.
pub fn restart(stream: &NoiseStream, grid: TorusGrid, m: f64, s: f64) -> Result<OuState> {
    check_mass(m)?;
    if !(s >= 0.0) {
        return Err(Error::param(format!("restart time must be >= 0, got {s}")));
    }
    Ok(OuState::new(grid, m, s, stream.counter))
}

/// `(X, :X^2:, :X^3:)` at one time, with the lattice variance `c_now`.
#[derive(Debug, Clone, PartialEq)]
pub struct WickTriple {
    pub w1: Field,
    pub w2: Field,
    pub w3: Field,
    pub c_now: f64,
    pub elapsed: f64,
}

impl WickTriple {
    pub fn zero(grid: TorusGrid) -> Self {
        let z = Field::zeros(grid);
        Self { w1: z.clone(), w2: z.clone(), w3: z, c_now: 0.0, elapsed: 0.0 }
    }

    /// Lattice Wick powers of real samples with variance `c`.
    pub fn from_samples(grid: TorusGrid, x: Vec<f64>, c: f64, elapsed: f64) -> Self {
        let w2: Vec<f64> = x.iter().map(|a| a * a - c).collect();
        let w3: Vec<f64> = x.iter().map(|a| a * a * a - 3.0 * c * a).collect();
        Self {
            w1: Field::from_real(grid, x).expect("grid-sized"),
            w2: Field::from_real(grid, w2).expect("grid-sized"),
            w3: Field::from_real(grid, w3).expect("grid-sized"),
            c_now: c,
            elapsed,
        }
    }

    /// `[||W1||, ||W2||, ||W3||]` in `C^{-alpha}`.
    pub fn besov_norms(&self, alpha: f64) -> [f64; 3] {
        [
            besov_from_maxima(&besov_block_maxima(&self.w1), -alpha),
            besov_from_maxima(&besov_block_maxima(&self.w2), -alpha),
            besov_from_maxima(&besov_block_maxima(&self.w3), -alpha),
        ]
    }
}

/// Wick powers of the current state, renormalised by its own lattice variance.
pub fn make_wick(state: &OuState) -> Result<WickTriple> {
    let c = wick_constant(&state.grid, state.m, state.elapsed().max(0.0))?;
    Ok(make_wick_with_constant(state, c))
}

/// As [`make_wick`] with an explicit constant (used to inject faults).
pub fn make_wick_with_constant(state: &OuState, c: f64) -> WickTriple {
    let x = fourier_to_real(&state.grid, &state.coeffs);
    let mut w = WickTriple::from_samples(state.grid, x, c, state.elapsed());
    // keep the exact coefficients so that W1 + v is formed without a round trip
    w.w1 = state.field();
    w
}

/// Distribution over replicas of `sup_{t <= T} max_k ||W^k_{0,t}||_{C^{-alpha}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupNormProfile {
    pub horizon: f64,
    pub alpha: f64,
    /// Per-replica supremum, ordered by replica id.
    pub samples: Vec<f64>,
}

impl SupNormProfile {
    pub fn quantile(&self, q: f64) -> f64 {
        stats::quantile(&self.samples, q)
    }

    /// `E[S^p]^{1/p}`.
    pub fn moment(&self, p: f64) -> f64 {
        stats::mean(&self.samples.iter().map(|s| s.powf(p)).collect::<Vec<_>>()).powf(1.0 / p)
    }
}

/// Running supremum of the three Wick norms of one replica, sampled at each
/// grid time `dt, 2 dt, ..., T`.
pub fn wick_sup_norm(grid: TorusGrid, m: f64, horizon: f64, dt: f64, alpha: f64, stream: NoiseStream) -> Result<f64> {
    let kernel = OuKernel::new(grid, m, dt)?;
    let steps = grid_steps(horizon, dt)?;
    let mut stream = stream;
    let mut state = restart(&stream, grid, m, 0.0)?;
    let mut sup: f64 = 0.0;
    for _ in 0..steps {
        kernel.step(&mut state, &mut stream);
        let w = make_wick(&state)?;
        sup = w.besov_norms(alpha).into_iter().fold(sup, f64::max);
    }
    Ok(sup)
}

pub fn sup_norm_profile(
    grid: TorusGrid,
    m: f64,
    base_seed: u64,
    horizon: f64,
    dt: f64,
    alpha: f64,
    replicas: std::ops::Range<u64>,
) -> Result<SupNormProfile> {
    if !(alpha > 0.0 && horizon > 0.0) {
        return Err(Error::param("sup_norm_profile needs alpha > 0 and T > 0"));
    }
    let samples = replicas
        .into_par_iter()
        .map(|r| wick_sup_norm(grid, m, horizon, dt, alpha, NoiseStream::new(base_seed, r)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(SupNormProfile { horizon, alpha, samples })
}

/// Number of steps of size `dt` in `[0, T]`; `dt` must divide `T` up to rounding.
pub fn grid_steps(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && horizon > 0.0) {
        return Err(Error::param(format!("need T > 0 and dt > 0, got T={horizon}, dt={dt}")));
    }
    let r = horizon / dt;
    let n = r.round();
    if (r - n).abs() > 1e-6 * n.max(1.0) {
        return Err(Error::param(format!("dt={dt} does not divide T={horizon}")));
    }
    Ok(n as usize)
}
