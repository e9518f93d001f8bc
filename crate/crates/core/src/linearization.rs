//! Linearised flow `J_{s,t} h` along a stored trajectory, its exact discrete
//! adjoint, and operator-norm estimation.
//!
//! One step is the derivative of the nonlinear exponential Euler step:
//! `J <- E J + Phi (P[q' I J] + 3 c J)` with `q' = -3(v^2 + 2 v W1 + W2)` on the
//! 2N grid, `I` band interpolation and `P = I^*` truncation. The adjoint step
//! is `g <- E g + P[q' I (Phi g)] + 3 c Phi g`, so
//! `<J h, g> = <h, J^* g>` holds to rounding.

use std::sync::Arc;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve_observed, DynamicsConfig, RecordLevel, Stepper, Trajectory};
use crate::error::{Error, Result};
use crate::rng::{cell_rng, Domain, NoiseStream};
use crate::torus::{Field, NormKind, Padder, TorusGrid};

/// Per-step potentials of the linearised equation.
pub struct LinearizedFlow {
    pub grid: TorusGrid,
    pub m: f64,
    pub dt: f64,
    decay: Vec<f64>,
    phi1: Vec<f64>,
    pad: Arc<Padder>,
    /// `q'` on the fine grid, one entry per step; `None` when the step has no
    /// polynomial potential.
    potentials: Vec<Option<Vec<f64>>>,
    /// Renormalisation coefficient `c` per step.
    constants: Vec<f64>,
}

impl LinearizedFlow {
    pub fn new(traj: &Trajectory) -> Result<Self> {
        if traj.level != RecordLevel::Full {
            return Err(Error::param("linearisation needs a fully recorded trajectory"));
        }
        let cfg = &traj.config;
        let stepper = Stepper::new(cfg.grid, cfg.m, cfg.dt)?;
        let steps = traj.steps();
        let mut potentials = Vec::with_capacity(steps);
        let mut constants = Vec::with_capacity(steps);
        for rec in &traj.records[..steps] {
            if !cfg.cubic {
                potentials.push(None);
                constants.push(0.0);
                continue;
            }
            let v = stepper.pad.to_fine(&rec.v);
            let q: Vec<f64> = if cfg.noise {
                let w1 = stepper.pad.to_fine(&rec.wick.w1.fourier());
                let w2 = stepper.pad.to_fine(&rec.wick.w2.fourier());
                v.iter().zip(&w1).zip(&w2).map(|((x, a), b)| -3.0 * (x * x + 2.0 * x * a + b)).collect()
            } else {
                v.iter().map(|x| -3.0 * x * x).collect()
            };
            potentials.push(Some(q));
            constants.push(rec.c_inf_mid);
        }
        Ok(Self {
            grid: cfg.grid,
            m: cfg.m,
            dt: cfg.dt,
            decay: stepper.decay,
            phi1: stepper.phi1,
            pad: stepper.pad,
            potentials,
            constants,
        })
    }

    /// Flow with explicitly given fine-grid potentials (one per step) and constants.
    pub fn from_potentials(
        grid: TorusGrid,
        m: f64,
        dt: f64,
        potentials: Vec<Option<Vec<f64>>>,
        constants: Vec<f64>,
    ) -> Result<Self> {
        if potentials.len() != constants.len() {
            return Err(Error::param("one constant per potential required"));
        }
        let stepper = Stepper::new(grid, m, dt)?;
        let fine = stepper.pad.fine_n();
        if potentials.iter().flatten().any(|q| q.len() != fine * fine) {
            return Err(Error::param(format!("potentials must live on the {fine}x{fine} grid")));
        }
        Ok(Self { grid, m, dt, decay: stepper.decay, phi1: stepper.phi1, pad: stepper.pad, potentials, constants })
    }

    pub fn steps(&self) -> usize {
        self.potentials.len()
    }

    pub fn fine_n(&self) -> usize {
        self.pad.fine_n()
    }

    fn forward_step(&self, k: usize, j: &mut [Complex64]) {
        let c = self.constants[k];
        let extra = self.potentials[k].as_ref().map(|q| {
            let f = self.pad.to_fine(j);
            let prod: Vec<f64> = f.iter().zip(q).map(|(a, b)| a * b).collect();
            self.pad.to_coarse(&prod)
        });
        for i in 0..j.len() {
            let mut nl = j[i] * (3.0 * c);
            if let Some(e) = &extra {
                nl += e[i];
            }
            j[i] = j[i] * self.decay[i] + nl * self.phi1[i];
        }
    }

    fn adjoint_step(&self, k: usize, g: &mut [Complex64]) {
        let c = self.constants[k];
        let pg: Vec<Complex64> = g.iter().zip(&self.phi1).map(|(a, p)| a * *p).collect();
        let extra = self.potentials[k].as_ref().map(|q| {
            let f = self.pad.to_fine(&pg);
            let prod: Vec<f64> = f.iter().zip(q).map(|(a, b)| a * b).collect();
            self.pad.to_coarse(&prod)
        });
        for i in 0..g.len() {
            let mut v = g[i] * self.decay[i] + pg[i] * (3.0 * c);
            if let Some(e) = &extra {
                v += e[i];
            }
            g[i] = v;
        }
    }

    fn check_range(&self, from: usize, to: usize) -> Result<()> {
        if from > to || to > self.steps() {
            return Err(Error::param(format!("step range {from}..{to} outside 0..={}", self.steps())));
        }
        Ok(())
    }

    /// `J_{from,to} h` between grid indices.
    pub fn propagate_steps(&self, h: &Field, from: usize, to: usize) -> Result<Field> {
        self.grid.check_same(h.grid())?;
        h.check_finite()?;
        self.check_range(from, to)?;
        let mut j = h.fourier().into_owned();
        for k in from..to {
            self.forward_step(k, &mut j);
        }
        Field::from_fourier(self.grid, j)
    }

    /// `J_{from,to} h` at every grid index `from..=to`.
    pub fn propagate_path(&self, h: &Field, from: usize, to: usize) -> Result<Vec<Field>> {
        self.grid.check_same(h.grid())?;
        self.check_range(from, to)?;
        let mut j = h.fourier().into_owned();
        let mut out = Vec::with_capacity(to - from + 1);
        out.push(Field::from_fourier(self.grid, j.clone())?);
        for k in from..to {
            self.forward_step(k, &mut j);
            out.push(Field::from_fourier(self.grid, j.clone())?);
        }
        Ok(out)
    }

    /// `J^*_{from,to} g`, stepping backwards from `to`.
    pub fn adjoint_steps(&self, g: &Field, from: usize, to: usize) -> Result<Field> {
        self.grid.check_same(g.grid())?;
        g.check_finite()?;
        self.check_range(from, to)?;
        let mut a = g.fourier().into_owned();
        for k in (from..to).rev() {
            self.adjoint_step(k, &mut a);
        }
        Field::from_fourier(self.grid, a)
    }

    fn index(&self, t: f64) -> Result<usize> {
        let r = t / self.dt;
        let k = r.round();
        if !(k >= 0.0) || (r - k).abs() > 1e-9 * k.max(1.0) || k as usize > self.steps() {
            return Err(Error::OffGrid(t));
        }
        Ok(k as usize)
    }

    pub fn propagate(&self, h: &Field, t_from: f64, t_to: f64) -> Result<Field> {
        self.propagate_steps(h, self.index(t_from)?, self.index(t_to)?)
    }

    pub fn adjoint_propagate(&self, g: &Field, t_from: f64, t_to: f64) -> Result<Field> {
        self.adjoint_steps(g, self.index(t_from)?, self.index(t_to)?)
    }
}

/// Tangent vector `J_{s,t} h` at grid index `index`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentField {
    pub field: Field,
    pub index: usize,
}

/// One forward step of the tangent vector.
pub fn j_step(j: &TangentField, flow: &LinearizedFlow) -> Result<TangentField> {
    if j.index >= flow.steps() {
        return Err(Error::param(format!("tangent at step {} has no record to step from", j.index)));
    }
    Ok(TangentField { field: flow.propagate_steps(&j.field, j.index, j.index + 1)?, index: j.index + 1 })
}

pub fn propagate(h: &Field, traj: &Trajectory, t_from: f64, t_to: f64) -> Result<Field> {
    LinearizedFlow::new(traj)?.propagate(h, t_from, t_to)
}

pub fn adjoint_propagate(g: &Field, traj: &Trajectory, t_from: f64, t_to: f64) -> Result<Field> {
    LinearizedFlow::new(traj)?.adjoint_propagate(g, t_from, t_to)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMethod {
    Probes,
    PowerIteration,
}

impl NormMethod {
    pub fn label(&self) -> &'static str {
        match self {
            NormMethod::Probes => "probes",
            NormMethod::PowerIteration => "power_iteration",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub estimate: f64,
    /// Power iteration: successive Rayleigh estimates (nondecreasing).
    pub history: Vec<f64>,
    /// Power iteration stopped with relative change above 1e-6.
    pub converged: bool,
}

/// `(1 + |k|^2)^{kappa/2}` applied to `f`, or the identity for `L^2`.
fn sobolev_lift(f: &Field, target: NormKind) -> Result<Field> {
    match target {
        NormKind::Sobolev(0.0) => Ok(f.clone()),
        NormKind::Sobolev(k) => Ok(f.apply_multiplier(|q| (1.0 + q).powf(k / 2.0))),
        other => Err(Error::param(format!("operator norms are supported into H^kappa only, got {other:?}"))),
    }
}

/// `||J_{from,to}||_{L^2 -> target}` on one realisation.
pub fn operator_norm_steps(
    flow: &LinearizedFlow,
    from: usize,
    to: usize,
    target: NormKind,
    method: NormMethod,
    budget: usize,
    probe_seed: (u64, u64),
) -> Result<NormEstimate> {
    if budget == 0 {
        return Err(Error::param("operator norm budget must be positive"));
    }
    let grid = flow.grid;
    let random_unit = |i: u64| -> Field {
        let mut rng = cell_rng(probe_seed.0, probe_seed.1, Domain::Probe, i);
        let v: Vec<f64> = (0..grid.points()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let f = Field::from_real(grid, v).expect("grid-sized");
        let n = f.l2_norm();
        f.scale(1.0 / n)
    };
    match method {
        NormMethod::Probes => {
            let mut best: f64 = 0.0;
            let mut history = Vec::with_capacity(budget);
            for i in 0..budget {
                let h = random_unit(i as u64);
                let jh = sobolev_lift(&flow.propagate_steps(&h, from, to)?, target)?;
                best = best.max(jh.l2_norm());
                history.push(best);
            }
            Ok(NormEstimate { estimate: best, history, converged: true })
        }
        NormMethod::PowerIteration => {
            let kappa = match target {
                NormKind::Sobolev(k) => k,
                other => return Err(Error::param(format!("unsupported target {other:?}"))),
            };
            let mut h = random_unit(0);
            let mut history = Vec::with_capacity(budget);
            let mut converged = false;
            for _ in 0..budget {
                let jh = flow.propagate_steps(&h, from, to)?;
                let lifted = if kappa == 0.0 { jh } else { jh.apply_multiplier(|q| (1.0 + q).powf(kappa)) };
                let bh = flow.adjoint_steps(&lifted, from, to)?;
                let rayleigh = h.inner(&bh)?.max(0.0).sqrt();
                let prev = history.last().copied();
                history.push(rayleigh);
                let nb = bh.l2_norm();
                if nb == 0.0 {
                    converged = true;
                    break;
                }
                h = bh.scale(1.0 / nb);
                if let Some(p) = prev {
                    if (rayleigh - p).abs() <= 1e-6 * rayleigh {
                        converged = true;
                        break;
                    }
                }
            }
            let estimate = history.iter().cloned().fold(0.0, f64::max);
            Ok(NormEstimate { estimate, history, converged })
        }
    }
}

/// `||J_{0,t}||_{L^2 -> target}` along a trajectory.
pub fn operator_norm(
    traj: &Trajectory,
    t: f64,
    target: NormKind,
    method: NormMethod,
    budget: usize,
) -> Result<NormEstimate> {
    let flow = LinearizedFlow::new(traj)?;
    let to = flow.index(t)?;
    operator_norm_steps(&flow, 0, to, target, method, budget, (traj.stream.base_seed, traj.stream.replica_id))
}

/// `||(v^{f+eps h}_T - v^f_T)/eps - J_{0,T} h|| / ||J_{0,T} h||` with shared noise.
pub fn finite_diff_check(f: &Field, h: &Field, eps: f64, cfg: &DynamicsConfig, stream: NoiseStream) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::param("finite difference step must be positive"));
    }
    let base = evolve_observed(f, cfg, stream, None, RecordLevel::Full, |_| {})?;
    let bumped = evolve_observed(&f.axpy(eps, h)?, cfg, stream, None, RecordLevel::Ends, |_| {})?;
    let flow = LinearizedFlow::new(&base)?;
    let jh = flow.propagate_steps(h, 0, flow.steps())?;
    let va = &base.final_record().v;
    let vb = &bumped.final_record().v;
    let fd: Vec<Complex64> = va.iter().zip(vb).map(|(a, b)| (b - a) / eps).collect();
    let diff = Field::from_fourier(cfg.grid, fd)?.sub(&jh)?;
    Ok(diff.l2_norm() / jh.l2_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::evolve;
    use crate::torus::{gaussian_field, heat_semigroup, smooth_random_field};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::new(n, 1.0).unwrap()
    }

    fn rel(a: &Field, b: &Field) -> f64 {
        a.sub(b).unwrap().l2_norm() / b.l2_norm()
    }

    fn noisy_traj(n: usize, seed: u64, horizon: f64) -> Trajectory {
        let g = grid(n);
        let f = smooth_random_field(g, 3.0, &mut cell_rng(seed, 0, Domain::Initial, 0));
        evolve(&f, &DynamicsConfig::new(g, 1.0, 5e-3, horizon), NoiseStream::new(seed, 0), None).unwrap()
    }

    #[test]
    fn zero_potential_is_heat_flow() {
        let g = grid(16);
        let traj = evolve(
            &Field::zeros(g),
            &DynamicsConfig::new(g, 2.0, 0.01, 0.2).deterministic(),
            NoiseStream::new(0, 0),
            None,
        )
        .unwrap();
        let flow = LinearizedFlow::new(&traj).unwrap();
        let h = gaussian_field(g, &mut cell_rng(1, 0, Domain::Test, 0));
        let j = flow.propagate(&h, 0.0, 0.2).unwrap();
        assert!(rel(&j, &heat_semigroup(&h, 0.2, 2.0).unwrap()) < 1e-13);
        let a = flow.adjoint_propagate(&h, 0.05, 0.2).unwrap();
        assert!(rel(&a, &heat_semigroup(&h, 0.15, 2.0).unwrap()) < 1e-13);
        assert_eq!(flow.propagate(&Field::zeros(g), 0.0, 0.2).unwrap().l2_norm(), 0.0);
        assert_eq!(flow.propagate(&h, 0.1, 0.1).unwrap().fourier(), h.fourier());
        assert!(matches!(flow.propagate(&h, 0.0, 0.205), Err(Error::OffGrid(_))));
    }

    #[test]
    fn frozen_constant_potential_matches_scalar_oracle() {
        let g = grid(8);
        let (m, dt, q, steps) = (1.0, 0.01, -2.5, 7);
        let fine = 16 * 16;
        let flow =
            LinearizedFlow::from_potentials(g, m, dt, vec![Some(vec![q; fine]); steps], vec![0.0; steps]).unwrap();
        let h = Field::cos_mode(g, 1, 2, 1.0);
        let j = flow.propagate_steps(&h, 0, steps).unwrap();
        let lam = m + (2.0 * std::f64::consts::PI).powi(2) * 5.0;
        let euler = (-lam * dt).exp() + q * (1.0 - (-lam * dt).exp()) / lam;
        let exact = (-(lam - q) * dt).exp();
        let want = h.scale(euler.powi(steps as i32));
        assert!(j.sub(&want).unwrap().l2_norm() < 1e-13 * h.l2_norm());
        assert!((euler.powi(steps as i32) - exact.powi(steps as i32)).abs() < 10.0 * (lam * dt).powi(2));
    }

    #[test]
    fn linear_and_cocycle() {
        let traj = noisy_traj(16, 3, 0.1);
        let flow = LinearizedFlow::new(&traj).unwrap();
        let g = traj.grid();
        let h1 = gaussian_field(g, &mut cell_rng(2, 0, Domain::Test, 0));
        let h2 = gaussian_field(g, &mut cell_rng(2, 1, Domain::Test, 0));
        let comb = h1.scale(2.0).axpy(-0.5, &h2).unwrap();
        let lhs = flow.propagate_steps(&comb, 0, 20).unwrap();
        let rhs = flow
            .propagate_steps(&h1, 0, 20)
            .unwrap()
            .scale(2.0)
            .axpy(-0.5, &flow.propagate_steps(&h2, 0, 20).unwrap())
            .unwrap();
        assert!(rel(&lhs, &rhs) < 1e-10);
        let whole = flow.propagate_steps(&h1, 0, 20).unwrap();
        for split in [3, 10, 17] {
            let parts = flow.propagate_steps(&flow.propagate_steps(&h1, 0, split).unwrap(), split, 20).unwrap();
            assert_eq!(whole.fourier(), parts.fourier());
            let adj_whole = flow.adjoint_steps(&h2, 0, 20).unwrap();
            let adj_parts = flow.adjoint_steps(&flow.adjoint_steps(&h2, split, 20).unwrap(), 0, split).unwrap();
            assert_eq!(adj_whole.fourier(), adj_parts.fourier());
        }
        let t = j_step(&TangentField { field: h1.clone(), index: 0 }, &flow).unwrap();
        assert_eq!(t.field.fourier(), flow.propagate_steps(&h1, 0, 1).unwrap().fourier());
        assert!(j_step(&TangentField { field: h1, index: 20 }, &flow).is_err());
    }

    #[test]
    fn adjoint_pairing() {
        let traj = noisy_traj(16, 4, 0.1);
        let flow = LinearizedFlow::new(&traj).unwrap();
        let g = traj.grid();
        for i in 0..20 {
            let h = gaussian_field(g, &mut cell_rng(6, i, Domain::Test, 0));
            let k = gaussian_field(g, &mut cell_rng(6, i, Domain::Test, 1));
            let a = flow.propagate_steps(&h, 0, 20).unwrap().inner(&k).unwrap();
            let b = h.inner(&flow.adjoint_steps(&k, 0, 20).unwrap()).unwrap();
            assert!((a - b).abs() <= 1e-9 * a.abs().max(b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn zero_potential_operator_norm() {
        let g = grid(16);
        let (m, t) = (1.5, 0.2);
        let traj =
            evolve(&Field::zeros(g), &DynamicsConfig::new(g, m, 0.01, t).deterministic(), NoiseStream::new(0, 0), None)
                .unwrap();
        let est = operator_norm(&traj, t, NormKind::sobolev(0.0), NormMethod::PowerIteration, 30).unwrap();
        assert!((est.estimate - (-m * t).exp()).abs() < 1e-10);
        assert!(est.converged);
        let probes = operator_norm(&traj, t, NormKind::sobolev(0.0), NormMethod::Probes, 16).unwrap();
        assert!(probes.estimate <= est.estimate * (1.0 + 1e-12));
        assert!(operator_norm(&traj, t, NormKind::sobolev(0.0), NormMethod::Probes, 0).is_err());
    }

    #[test]
    fn power_iteration_dominates_probes_and_is_monotone() {
        let traj = noisy_traj(16, 5, 0.1);
        for target in [NormKind::sobolev(0.0), NormKind::sobolev(0.5)] {
            let p = operator_norm(&traj, 0.1, target, NormMethod::PowerIteration, 30).unwrap();
            let q = operator_norm(&traj, 0.1, target, NormMethod::Probes, 16).unwrap();
            assert!(p.estimate >= q.estimate);
            for w in p.history.windows(2) {
                assert!(w[1] >= w[0] * (1.0 - 1e-12));
            }
        }
    }

    /// Dense matrix of `h -> Lambda^{kappa/2} J h` in the real-space basis.
    fn dense(flow: &LinearizedFlow, steps: usize, kappa: f64) -> DMatrix<f64> {
        let g = flow.grid;
        let n2 = g.points();
        let mut mat = DMatrix::zeros(n2, n2);
        for j in 0..n2 {
            let mut e = vec![0.0; n2];
            e[j] = 1.0;
            let col = flow.propagate_steps(&Field::from_real(g, e).unwrap(), 0, steps).unwrap();
            let col = col.apply_multiplier(|q| (1.0 + q).powf(kappa / 2.0));
            for (i, x) in col.real().iter().enumerate() {
                mat[(i, j)] = *x;
            }
        }
        mat
    }

    #[test]
    fn power_iteration_matches_dense_svd() {
        let g = grid(16);
        let fine = 32;
        let mut rng = cell_rng(12, 0, Domain::Test, 0);
        let steps = 50;
        let pots: Vec<Option<Vec<f64>>> = (0..steps)
            .map(|_| {
                Some(
                    (0..fine * fine)
                        .map(|_| {
                            let x: f64 = StandardNormal.sample(&mut rng);
                            4.0 * x
                        })
                        .collect(),
                )
            })
            .collect();
        let flow = LinearizedFlow::from_potentials(g, 1.0, 2e-3, pots, vec![0.3; steps]).unwrap();
        for kappa in [0.0, 0.5] {
            let sv = dense(&flow, steps, kappa).singular_values().max();
            let est =
                operator_norm_steps(&flow, 0, steps, NormKind::sobolev(kappa), NormMethod::PowerIteration, 500, (1, 0))
                    .unwrap();
            assert!(
                (est.estimate - sv).abs() < 1e-6 * sv,
                "kappa {kappa}: {} vs {sv} {} {}",
                est.estimate,
                est.history.len(),
                est.converged
            );
        }
    }

    #[test]
    fn clean_contraction_without_noise() {
        let g = grid(16);
        let (m, dt) = (1.0, 1e-3);
        let f = smooth_random_field(g, 4.0, &mut cell_rng(8, 0, Domain::Test, 0)).scale(2.0);
        let traj =
            evolve(&f, &DynamicsConfig::new(g, m, dt, 0.2).deterministic(), NoiseStream::new(0, 0), None).unwrap();
        let flow = LinearizedFlow::new(&traj).unwrap();
        let h = gaussian_field(g, &mut cell_rng(8, 1, Domain::Test, 0));
        let path = flow.propagate_path(&h, 0, flow.steps()).unwrap();
        for (k, j) in path.iter().enumerate() {
            let t = k as f64 * dt;
            assert!(j.l2_norm() <= (-m * t).exp() * h.l2_norm() * (1.0 + 10.0 * dt));
        }
    }

    #[test]
    fn finite_differences() {
        let g = grid(16);
        let h = smooth_random_field(g, 4.0, &mut cell_rng(9, 0, Domain::Test, 0));
        // noise off, f = 0: only the Taylor remainder of the cubic term remains
        let cfg = DynamicsConfig::new(g, 1.0, 1e-3, 0.1).deterministic();
        let e = finite_diff_check(&Field::zeros(g), &h, 1e-4, &cfg, NoiseStream::new(0, 0)).unwrap();
        assert!(e <= 1e-6, "{e}");
        let noisy = DynamicsConfig::new(g, 1.0, 1e-3, 0.1);
        let f = smooth_random_field(g, 3.0, &mut cell_rng(9, 1, Domain::Test, 0));
        let e3 = finite_diff_check(&f, &h, 1e-3, &noisy, NoiseStream::new(4, 0)).unwrap();
        let e4 = finite_diff_check(&f, &h, 1e-4, &noisy, NoiseStream::new(4, 0)).unwrap();
        assert!(e4 < e3 && e4 < 1e-3, "{e3} {e4}");
        // h and 2h give the same direction
        let e2 = finite_diff_check(&f, &h.scale(2.0), 0.5e-4, &noisy, NoiseStream::new(4, 0)).unwrap();
        assert!((e2 - e4).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn pairing_on_random_frozen_potentials(seed in 0u64..1000) {
            let g = grid(8);
            let mut rng = cell_rng(seed, 0, Domain::Test, 0);
            let pots: Vec<Option<Vec<f64>>> = (0..5).map(|_| Some((0..256).map(|_| StandardNormal.sample(&mut rng)).collect())).collect();
            let flow = LinearizedFlow::from_potentials(g, 1.0, 0.01, pots, vec![0.2; 5]).unwrap();
            let h = gaussian_field(g, &mut rng);
            let k = gaussian_field(g, &mut rng);
            let a = flow.propagate_steps(&h, 0, 5).unwrap().inner(&k).unwrap();
            let b = h.inner(&flow.adjoint_steps(&k, 0, 5).unwrap()).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * (a.abs() + b.abs()));
        }
    }
}
