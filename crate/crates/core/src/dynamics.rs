//! Remainder dynamics `u = X + v` with exponential Euler time stepping.
//!
//! `v` solves `(d_t - Laplacian + m) v = N(v)` with
//! `N(v) = -v^3 - 3 v^2 W1 - 3 v W2 - W3 + 3 c(W1 + v)`, where `W1..W3` are the
//! Wick powers of the restarted OU process and `c = c_{t-s,inf}` the tail
//! constant at the elapsed time since the last restart. The polynomial part
//! is evaluated on a 2N grid (alias free for cubic terms) and truncated to
//! the band; the linear part is integrated exactly per mode.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{c_tail, grid_steps, make_wick, restart, OuKernel, WickTriple};
use crate::rng::NoiseStream;
use crate::stats;
use crate::stopping::{StoppingConfig, StoppingRecord};
use crate::torus::{fourier_to_real, norm, Field, NormKind, Padder, TorusGrid};

/// Abort threshold for `max |v|`.
pub const BLOW_UP: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub grid: TorusGrid,
    pub m: f64,
    pub dt: f64,
    pub horizon: f64,
    /// Drive with white noise; off gives the deterministic Allen-Cahn flow.
    pub noise: bool,
    /// Include the `3 c (W1 + v)` counterterm.
    pub renormalize: bool,
    /// Include the nonlinearity; off gives the Gaussian (free field) model.
    pub cubic: bool,
    /// The OU driver advances in this many exact sub-steps per step, so runs
    /// at `dt` and `dt / r` with the same seed see the same noise.
    pub noise_substeps: usize,
}

impl DynamicsConfig {
    pub fn new(grid: TorusGrid, m: f64, dt: f64, horizon: f64) -> Self {
        Self { grid, m, dt, horizon, noise: true, renormalize: true, cubic: true, noise_substeps: 1 }
    }

    pub fn deterministic(mut self) -> Self {
        self.noise = false;
        self.renormalize = false;
        self
    }

    pub fn gaussian(mut self) -> Self {
        self.cubic = false;
        self
    }

    pub fn with_substeps(mut self, r: usize) -> Self {
        self.noise_substeps = r;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn steps(&self) -> Result<usize> {
        grid_steps(self.horizon, self.dt)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0) {
            return Err(Error::param(format!("mass must be positive, got {}", self.m)));
        }
        if self.noise_substeps == 0 {
            return Err(Error::param("noise_substeps must be >= 1"));
        }
        self.steps().map(|_| ())
    }
}

/// Per-resolution constants of the exponential Euler scheme.
pub struct Stepper {
    pub grid: TorusGrid,
    pub m: f64,
    pub dt: f64,
    pub(crate) decay: Vec<f64>,
    pub(crate) phi1: Vec<f64>,
    pub(crate) pad: Arc<Padder>,
}

impl Stepper {
    pub fn new(grid: TorusGrid, m: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::param(format!("dt must be positive, got {dt}")));
        }
        let lam = grid.symbol(m);
        let decay = lam.iter().map(|&l| (-l * dt).exp()).collect();
        let phi1 = lam.iter().map(|&l| if l == 0.0 { dt } else { -(-l * dt).exp_m1() / l }).collect();
        Ok(Self { grid, m, dt, decay, phi1, pad: Padder::for_degree(grid.n, 3) })
    }

    /// Fourier coefficients of `N(v)`; also returns `max |v|` on the fine grid.
    pub(crate) fn nonlinearity(&self, v: &[Complex64], wick: Option<&WickHat>, c_inf: f64) -> (Vec<Complex64>, f64) {
        let vf = self.pad.to_fine(v);
        let vmax = vf.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let poly: Vec<f64> = match wick {
            None => vf.iter().map(|x| -x * x * x).collect(),
            Some(w) => {
                let w1 = self.pad.to_fine(&w.w1);
                let w2 = self.pad.to_fine(&w.w2);
                vf.iter().zip(&w1).zip(&w2).map(|((x, a), b)| -x * x * x - 3.0 * x * x * a - 3.0 * x * b).collect()
            }
        };
        let mut nl = self.pad.to_coarse(&poly);
        if let Some(w) = wick {
            for i in 0..nl.len() {
                nl[i] += -w.w3[i] + (w.w1[i] + v[i]) * (3.0 * c_inf);
            }
        } else if c_inf != 0.0 {
            for i in 0..nl.len() {
                nl[i] += v[i] * (3.0 * c_inf);
            }
        }
        (nl, vmax)
    }

    pub(crate) fn advance(&self, v: &mut [Complex64], nl: &[Complex64]) {
        for i in 0..v.len() {
            v[i] = v[i] * self.decay[i] + nl[i] * self.phi1[i];
        }
    }
}

/// Fourier coefficients of a Wick triple, as consumed by the stepper.
pub(crate) struct WickHat {
    pub w1: Vec<Complex64>,
    pub w2: Vec<Complex64>,
    pub w3: Vec<Complex64>,
}

impl WickHat {
    pub(crate) fn of(w: &WickTriple) -> Self {
        Self { w1: w.w1.fourier().into_owned(), w2: w.w2.fourier().into_owned(), w3: w.w3.fourier().into_owned() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemainderState {
    pub v: Field,
    pub time: f64,
    pub birth: f64,
    pub m: f64,
}

/// One exponential Euler step of the remainder equation.
pub fn v_step(state: &RemainderState, wick: &WickTriple, c_inf: f64, dt: f64) -> Result<RemainderState> {
    let grid = *state.v.grid();
    grid.check_same(wick.w1.grid())?;
    state.v.check_finite()?;
    let stepper = Stepper::new(grid, state.m, dt)?;
    let mut v = state.v.fourier().into_owned();
    let (nl, vmax) = stepper.nonlinearity(&v, Some(&WickHat::of(wick)), c_inf);
    check_blow_up(state.time, vmax, &nl)?;
    stepper.advance(&mut v, &nl);
    Ok(RemainderState { v: Field::from_fourier(grid, v)?, time: state.time + dt, birth: state.birth, m: state.m })
}

fn check_blow_up(time: f64, vmax: f64, nl: &[Complex64]) -> Result<()> {
    if !(vmax <= BLOW_UP) || nl.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::BlowUp { time, max_abs: vmax });
    }
    Ok(())
}

/// State at grid time `index * dt`, after any restart at that time.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub index: usize,
    /// Grid index of the last restart (birth of the current Wick processes).
    pub birth: usize,
    /// `v` in Fourier coefficients.
    pub v: Vec<Complex64>,
    pub wick: WickTriple,
    /// `c_{e,inf}` at the midpoint of the step leaving this time.
    pub c_inf_mid: f64,
    /// Barrier norms `||W^k||_{-alpha}` tested at this time (pre-restart values).
    pub barrier: Option<[f64; 3]>,
}

impl StepRecord {
    /// `u = W1 + v` in Fourier coefficients.
    pub fn u_hat(&self) -> Vec<Complex64> {
        let w1 = self.wick.w1.fourier();
        self.v.iter().zip(w1.iter()).map(|(a, b)| b + a).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartEvent {
    pub index: usize,
    pub capped: bool,
    pub pre_v: Vec<Complex64>,
    pub pre_wick: WickTriple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordLevel {
    /// Every grid time.
    Full,
    /// Initial and final times only.
    Ends,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub config: DynamicsConfig,
    pub stream: NoiseStream,
    pub records: Vec<StepRecord>,
    pub restarts: Vec<RestartEvent>,
    pub stopping: Option<StoppingRecord>,
    pub level: RecordLevel,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.records.last().map(|r| r.index).unwrap_or(0)
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    pub fn grid(&self) -> TorusGrid {
        self.config.grid
    }

    /// Grid index of time `t`, or `OffGrid`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let r = t / self.config.dt;
        let k = r.round();
        if !(k >= 0.0) || (r - k).abs() > 1e-9 * k.max(1.0) || k as usize > self.steps() {
            return Err(Error::OffGrid(t));
        }
        Ok(k as usize)
    }

    pub fn record(&self, index: usize) -> Result<&StepRecord> {
        match self.level {
            RecordLevel::Full => self.records.get(index),
            RecordLevel::Ends => self.records.iter().find(|r| r.index == index),
        }
        .ok_or(Error::OffGrid(index as f64 * self.config.dt))
    }

    pub fn final_record(&self) -> &StepRecord {
        self.records.last().expect("trajectory has at least the initial record")
    }

    pub fn v_at(&self, index: usize) -> Result<Field> {
        Field::from_fourier(self.grid(), self.record(index)?.v.clone())
    }

    pub fn restart_indices(&self) -> Vec<usize> {
        self.restarts.iter().map(|r| r.index).collect()
    }
}

/// `u(t) = W1(t) + v(t)`, identical on both sides of a restart.
pub fn full_solution(traj: &Trajectory, t: f64) -> Result<Field> {
    let k = traj.index_of(t)?;
    Field::from_fourier(traj.grid(), traj.record(k)?.u_hat())
}

/// Read-only view handed to observers after every step.
pub struct StepView<'a> {
    pub index: usize,
    pub time: f64,
    pub v: &'a [Complex64],
    pub wick: &'a WickTriple,
    pub birth: usize,
}

pub fn evolve(
    f: &Field,
    cfg: &DynamicsConfig,
    stream: NoiseStream,
    stopping: Option<&StoppingConfig>,
) -> Result<Trajectory> {
    evolve_observed(f, cfg, stream, stopping, RecordLevel::Full, |_| {})
}

pub fn evolve_observed(
    f: &Field,
    cfg: &DynamicsConfig,
    stream: NoiseStream,
    stopping: Option<&StoppingConfig>,
    level: RecordLevel,
    mut observer: impl FnMut(&StepView<'_>),
) -> Result<Trajectory> {
    cfg.validate()?;
    cfg.grid.check_same(f.grid())?;
    f.check_finite()?;
    if let Some(sc) = stopping {
        sc.validate()?;
        if !cfg.noise {
            return Err(Error::param("stopping requires the noise to be on"));
        }
    }
    let grid = cfg.grid;
    let steps = cfg.steps()?;
    let dt = cfg.dt;
    let stepper = Stepper::new(grid, cfg.m, dt)?;
    let kernel = OuKernel::new(grid, cfg.m, dt / cfg.noise_substeps as f64)?;
    let cap = stopping.map(|s| s.cap_steps(dt)).transpose()?;

    let spec = stream;
    let mut stream = stream;
    let mut ou = restart(&stream, grid, cfg.m, 0.0)?;
    let mut birth = 0usize;
    let mut v = f.fourier().into_owned();
    let mut wick = WickTriple::zero(grid);
    let mut records: Vec<StepRecord> = Vec::new();
    let mut restarts = Vec::new();
    let mut taus = Vec::new();
    let mut capped = Vec::new();

    let c_mid = |k: usize, birth: usize| -> Result<f64> {
        if !(cfg.noise && cfg.renormalize) {
            return Ok(0.0);
        }
        c_tail(&grid, cfg.m, (k - birth) as f64 * dt + 0.5 * dt)
    };

    let mut current =
        StepRecord { index: 0, birth: 0, v: v.clone(), wick: wick.clone(), c_inf_mid: c_mid(0, 0)?, barrier: None };
    observer(&StepView { index: 0, time: 0.0, v: &v, wick: &wick, birth });
    for k in 0..steps {
        let hat = cfg.noise.then(|| WickHat::of(&wick));
        let nl = if cfg.cubic {
            let (nl, vmax) = stepper.nonlinearity(&v, hat.as_ref(), current.c_inf_mid);
            check_blow_up(k as f64 * dt, vmax, &nl)?;
            Some(nl)
        } else {
            None
        };
        if level == RecordLevel::Full || k == 0 {
            records.push(current);
        }
        match &nl {
            Some(nl) => stepper.advance(&mut v, nl),
            None => {
                for (x, a) in v.iter_mut().zip(&stepper.decay) {
                    *x *= *a;
                }
            }
        }
        if cfg.noise {
            for _ in 0..cfg.noise_substeps {
                kernel.step(&mut ou, &mut stream);
            }
            wick = make_wick(&ou)?;
        }
        let idx = k + 1;
        let mut barrier = None;
        if let (Some(sc), Some(cap)) = (stopping, cap) {
            let norms = wick.besov_norms(sc.alpha);
            barrier = Some(norms);
            let hit = norms.iter().any(|&x| x >= sc.eta);
            let capped_now = idx - birth >= cap;
            if hit || capped_now {
                let w1 = wick.w1.fourier();
                let new_v: Vec<Complex64> = v.iter().zip(w1.iter()).map(|(a, b)| b + a).collect();
                restarts.push(RestartEvent {
                    index: idx,
                    capped: !hit,
                    pre_v: std::mem::replace(&mut v, new_v),
                    pre_wick: wick.clone(),
                });
                taus.push(idx);
                capped.push(!hit);
                birth = idx;
                ou = restart(&stream, grid, cfg.m, idx as f64 * dt)?;
                wick = WickTriple::zero(grid);
            }
        }
        current =
            StepRecord { index: idx, birth, v: v.clone(), wick: wick.clone(), c_inf_mid: c_mid(idx, birth)?, barrier };
        observer(&StepView { index: idx, time: idx as f64 * dt, v: &v, wick: &wick, birth });
    }
    if v.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::BlowUp { time: cfg.horizon, max_abs: f64::INFINITY });
    }
    records.push(current);
    let stopping_record = stopping.map(|_| StoppingRecord::new(taus, capped, dt, steps));
    Ok(Trajectory { config: *cfg, stream: spec, records, restarts, stopping: stopping_record, level })
}

/// Per-magnitude statistics of `sup_{t <= T} t^{1/2} ||v_{0,t}||_{L^p}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileStats {
    pub magnitude: f64,
    /// Per-replica statistic, ordered by replica id; `None` for blown-up replicas.
    pub samples: Vec<Option<f64>>,
}

impl ProfileStats {
    pub fn finite(&self) -> Vec<f64> {
        self.samples.iter().flatten().copied().collect()
    }

    pub fn quantile(&self, q: f64) -> f64 {
        stats::quantile(&self.finite(), q)
    }

    pub fn failures(&self) -> usize {
        self.samples.iter().filter(|s| s.is_none()).count()
    }
}

fn lp_of_coeffs(grid: &TorusGrid, v: &[Complex64], p: f64) -> f64 {
    let r = fourier_to_real(grid, v);
    let f = Field::from_real(*grid, r).expect("grid-sized");
    norm(&f, NormKind::Lp(p)).unwrap_or(f64::NAN)
}

/// Running supremum of `weight(t) * functional(v_t)` along one trajectory.
fn running_sup(
    f: &Field,
    cfg: &DynamicsConfig,
    stream: NoiseStream,
    weight: impl Fn(f64) -> f64,
    functional: impl Fn(&[Complex64]) -> f64,
) -> Result<f64> {
    let mut sup: f64 = 0.0;
    evolve_observed(f, cfg, stream, None, RecordLevel::Ends, |s| {
        if s.index > 0 {
            sup = sup.max(weight(s.time) * functional(s.v));
        }
    })?;
    Ok(sup)
}

/// Coming down from infinity: for initial data `a * profile`, the statistic
/// `sup_{t <= T} t^{1/2} ||v_{0,t}||_{L^p}` per replica and magnitude `a`.
pub fn coming_down_profile(
    profile: &Field,
    magnitudes: &[f64],
    p: f64,
    cfg: &DynamicsConfig,
    base_seed: u64,
    replicas: std::ops::Range<u64>,
) -> Result<Vec<ProfileStats>> {
    if !(cfg.horizon <= 1.0 && p >= 1.0 && p.is_finite()) {
        return Err(Error::param("coming_down_profile needs T <= 1 and 1 <= p < inf"));
    }
    let grid = cfg.grid;
    magnitudes
        .iter()
        .map(|&a| {
            let f = profile.scale(a);
            let samples = replicas
                .clone()
                .into_par_iter()
                .map(|r| {
                    running_sup(&f, cfg, NoiseStream::new(base_seed, r), |t| t.sqrt(), |v| lp_of_coeffs(&grid, v, p))
                        .ok()
                })
                .collect();
            Ok(ProfileStats { magnitude: a, samples })
        })
        .collect()
}

/// `sup_{t <= T} t^{1 + eps} ||grad v_{0,t}||_{L^inf}` per replica.
pub fn gradient_profile(
    f: &Field,
    eps: f64,
    cfg: &DynamicsConfig,
    base_seed: u64,
    replicas: std::ops::Range<u64>,
) -> Result<ProfileStats> {
    if !(eps > 0.0 && cfg.horizon <= 1.0) {
        return Err(Error::param("gradient_profile needs eps > 0 and T <= 1"));
    }
    let grid = cfg.grid;
    let samples = replicas
        .into_par_iter()
        .map(|r| {
            running_sup(
                f,
                cfg,
                NoiseStream::new(base_seed, r),
                |t| t.powf(1.0 + eps),
                |v| Field::from_fourier(grid, v.to_vec()).map(|x| x.gradient_sup()).unwrap_or(f64::NAN),
            )
            .ok()
        })
        .collect();
    Ok(ProfileStats { magnitude: 1.0, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{cell_rng, Domain};
    use crate::torus::smooth_random_field;
    use std::f64::consts::PI;

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::new(n, 1.0).unwrap()
    }

    fn l2(grid: &TorusGrid, a: &[Complex64], b: &[Complex64]) -> f64 {
        let d: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        Field::from_fourier(*grid, d).unwrap().l2_norm()
    }

    #[test]
    fn constant_data_follows_scalar_exponential_euler() {
        // v' = -m v - v^3, one exponential Euler step
        let g = grid(16);
        let (m, dt, a) = (1.5, 0.01, 0.8);
        let cfg = DynamicsConfig::new(g, m, dt, dt).deterministic();
        let traj = evolve(&Field::constant(g, a), &cfg, NoiseStream::new(0, 0), None).unwrap();
        let want = (-m * dt).exp() * a + (1.0 - (-m * dt).exp()) / m * (-a * a * a);
        let got = traj.final_record().v[0].re;
        assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        let single = v_step(
            &RemainderState { v: Field::constant(g, a), time: 0.0, birth: 0.0, m },
            &WickTriple::zero(g),
            0.0,
            dt,
        )
        .unwrap();
        assert!((single.v.mean() - want).abs() < 1e-14);
    }

    #[test]
    fn zero_data_without_noise_stays_zero() {
        let g = grid(8);
        let cfg = DynamicsConfig::new(g, 1.0, 0.01, 0.2).deterministic();
        let traj = evolve(&Field::zeros(g), &cfg, NoiseStream::new(0, 0), None).unwrap();
        assert!(traj.records.iter().all(|r| r.v.iter().all(|z| z.norm() == 0.0)));
        assert_eq!(traj.records.len(), 21);
    }

    #[test]
    fn single_step_matches_v_step() {
        let g = grid(16);
        let f = smooth_random_field(g, 4.0, &mut cell_rng(1, 0, Domain::Test, 0));
        let cfg = DynamicsConfig::new(g, 1.0, 0.01, 0.01);
        let traj = evolve(&f, &cfg, NoiseStream::new(3, 0), None).unwrap();
        assert_eq!(traj.records.len(), 2);
        let r0 = &traj.records[0];
        let st = RemainderState { v: f.clone(), time: 0.0, birth: 0.0, m: 1.0 };
        let next = v_step(&st, &r0.wick, r0.c_inf_mid, 0.01).unwrap();
        assert_eq!(next.v.fourier().as_ref(), traj.records[1].v.as_slice());
    }

    #[test]
    fn deterministic_replay() {
        let g = grid(16);
        let f = smooth_random_field(g, 3.0, &mut cell_rng(2, 0, Domain::Test, 0));
        let cfg = DynamicsConfig::new(g, 1.0, 0.005, 0.05);
        let a = evolve(&f, &cfg, NoiseStream::new(11, 4), None).unwrap();
        let b = evolve(&f, &cfg, NoiseStream::new(11, 4), None).unwrap();
        assert_eq!(a.records, b.records);
        let c = evolve(&f, &cfg, NoiseStream::new(11, 5), None).unwrap();
        assert_ne!(a.final_record().v, c.final_record().v);
    }

    #[test]
    fn full_solution_at_zero_is_initial_data() {
        let g = grid(8);
        let f = smooth_random_field(g, 3.0, &mut cell_rng(3, 0, Domain::Test, 0));
        let cfg = DynamicsConfig::new(g, 1.0, 0.01, 0.05);
        let traj = evolve(&f, &cfg, NoiseStream::new(1, 0), None).unwrap();
        let u0 = full_solution(&traj, 0.0).unwrap();
        assert!(u0.sub(&f).unwrap().l2_norm() < 1e-14);
        assert!(matches!(full_solution(&traj, 0.015), Err(Error::OffGrid(_))));
        assert!(full_solution(&traj, 0.05).is_ok());
    }

    #[test]
    fn noise_off_gives_allen_cahn_flow() {
        let g = grid(16);
        let f = Field::cos_mode(g, 1, 0, 0.5);
        let cfg = DynamicsConfig::new(g, 1.0, 0.01, 0.1).deterministic();
        let traj = evolve(&f, &cfg, NoiseStream::new(1, 0), None).unwrap();
        let u = full_solution(&traj, 0.1).unwrap();
        assert!(traj.final_record().wick.w1.max_abs() == 0.0);
        assert_eq!(u.fourier().as_ref(), traj.final_record().v.as_slice());
    }

    #[test]
    fn deterministic_energy_decay() {
        let g = grid(16);
        let f = smooth_random_field(g, 5.0, &mut cell_rng(4, 0, Domain::Test, 0)).scale(3.0);
        let (m, dt) = (1.0, 1e-3);
        let cfg = DynamicsConfig::new(g, m, dt, 0.2).deterministic();
        let traj = evolve(&f, &cfg, NoiseStream::new(1, 0), None).unwrap();
        let e: Vec<f64> =
            traj.records.iter().map(|r| Field::from_fourier(g, r.v.clone()).unwrap().l2_norm().powi(2)).collect();
        for w in e.windows(2) {
            let rate = (w[1] - w[0]) / dt;
            assert!(rate <= -2.0 * m * w[0] * (1.0 - m * dt), "rate {rate} at energy {}", w[0]);
        }
    }

    #[test]
    fn zero_mean_symmetry() {
        // u -> -u symmetry: with f = 0 the spatial mean of u averages to zero
        let g = grid(8);
        let cfg = DynamicsConfig::new(g, 1.0, 0.01, 0.2);
        let means: Vec<f64> = (0..400)
            .map(|r| {
                let t = evolve(&Field::zeros(g), &cfg, NoiseStream::new(21, r), None).unwrap();
                full_solution(&t, 0.2).unwrap().mean()
            })
            .collect();
        let est = stats::mean_estimate(&means);
        assert!(est.mean.abs() < 3.5 * est.se);
    }

    #[test]
    fn self_convergence_first_order() {
        // The noise is drawn on the finest grid and shared by every run; the
        // pathwise error constant is itself random, so the rate is read off
        // the root-mean-square error over a few realisations.
        let g = grid(16);
        let f = smooth_random_field(g, 3.0, &mut cell_rng(5, 0, Domain::Test, 0));
        let base = 4e-4;
        let seeds = 8;
        let mut sq = [0.0; 3];
        for seed in 0..seeds {
            let run = |r: usize| {
                let cfg = DynamicsConfig::new(g, 1.0, base / r as f64, 0.25).with_substeps(8 / r);
                evolve_observed(&f, &cfg, NoiseStream::new(8, seed), None, RecordLevel::Ends, |_| {})
                    .unwrap()
                    .final_record()
                    .v
                    .clone()
            };
            let v = [run(1), run(2), run(4), run(8)];
            for i in 0..3 {
                sq[i] += l2(&g, &v[i], &v[i + 1]).powi(2);
            }
        }
        let rms: Vec<f64> = sq.iter().map(|s| (s / seeds as f64).sqrt()).collect();
        assert!(rms[0] / rms[1] >= 1.7 && rms[1] / rms[2] >= 1.7, "rms errors {rms:?}");
    }

    #[test]
    fn blow_up_is_reported() {
        let g = grid(8);
        let cfg = DynamicsConfig::new(g, 1.0, 0.1, 1.0).deterministic();
        let err = evolve(&Field::constant(g, 1e3), &cfg, NoiseStream::new(0, 0), None).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. }), "{err}");
    }

    #[test]
    fn coming_down_without_noise() {
        // For huge constant data v' = -m v - v^3 and t^{1/2} v(t) -> 1/sqrt(2)
        let g = grid(8);
        let cfg = DynamicsConfig::new(g, 1.0, 1e-5, 0.01).deterministic();
        let prof = coming_down_profile(&Field::constant(g, 1.0), &[0.0, 100.0], 2.0, &cfg, 0, 0..1).unwrap();
        assert_eq!(prof[0].samples[0], Some(0.0));
        // L^2 norm on the unit torus equals |v| for constants
        let s = prof[1].samples[0].unwrap();
        assert!(s < 1.0 / 2f64.sqrt() * 1.01 && s > 0.6, "{s}");
        let _ = PI;
    }

    #[test]
    fn gradient_profile_small_smooth_data() {
        let g = grid(16);
        let f = Field::cos_mode(g, 1, 1, 0.1);
        let cfg = DynamicsConfig::new(g, 1.0, 1e-3, 0.05).deterministic();
        let a = gradient_profile(&f, 0.1, &cfg, 0, 0..1).unwrap().samples[0].unwrap();
        let b = gradient_profile(&f, 0.1, &cfg.with_horizon(0.01), 0, 0..1).unwrap().samples[0].unwrap();
        assert!(b < a);
        assert!(gradient_profile(&f, 0.1, &cfg, 0, 0..1).unwrap().samples[0].unwrap().to_bits() == a.to_bits());
    }
}
