//! Pathwise energy inequality for the linearised flow.
//!
//! On each restart interval `[s, tau)` and every grid time `t` after the
//! start `t'` of the check,
//! `||J_t h||^2 + int_{t'}^t e^{-2m(t-r) + 2 int_r^t g}(||grad J_r h||^2 + ||v_r J_r h||^2) dr
//!   <= e^{-2m(t-t') + 2 int_{t'}^t g} ||J_{t'} h||^2`,
//! with trapezoidal quadrature in time.

use serde::{Deserialize, Serialize};

use super::{check_alpha, g_drift};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::noise::{c_tail, WickTriple};
use crate::torus::{multiply, Field};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// Smallest `ln(RHS / LHS)` over all checked times.
    pub min_log_margin: f64,
    pub worst_index: usize,
    pub checked: usize,
    /// Times with `RHS / LHS < 1 / (1 + tol)`.
    pub violations: usize,
    pub tol: f64,
    pub intervals: usize,
    pub pass: bool,
}

fn ln_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Quantities of one grid time entering the inequality.
struct Node {
    g: f64,
    j_sq: f64,
    dissipation: f64,
}

fn node(
    traj: &Trajectory,
    v: &Field,
    wick: &WickTriple,
    elapsed: f64,
    j: &Field,
    lambda: f64,
    alpha: f64,
) -> Result<Node> {
    let cfg = &traj.config;
    let [w1, w2, _] = wick.besov_norms(alpha);
    let c = if cfg.noise && cfg.renormalize { c_tail(&cfg.grid, cfg.m, elapsed)? } else { 0.0 };
    let g = g_drift([w1, w2], v.gradient_sup(), c, lambda, alpha)?;
    let vj = multiply(v, j, true)?;
    let vj_sq = vj.l2_norm().powi(2);
    Ok(Node { g, j_sq: j.l2_norm().powi(2), dissipation: j.gradient_l2_sq() + vj_sq })
}

/// Checks the inequality along `path[k] = J_{0, k dt} h` (one entry per grid
/// index, `path.len() == steps + 1`) for all grid times in `[from, to]`.
pub fn verify_energy_inequality(
    traj: &Trajectory,
    path: &[Field],
    from: usize,
    to: usize,
    lambda: f64,
    alpha: f64,
    tol: f64,
) -> Result<EnergyReport> {
    check_alpha(alpha)?;
    if path.len() != traj.steps() + 1 {
        return Err(Error::param(format!(
            "path has {} entries, trajectory {} grid times",
            path.len(),
            traj.steps() + 1
        )));
    }
    if from >= to || to > traj.steps() {
        return Err(Error::param(format!("check range {from}..={to} invalid")));
    }
    for p in path {
        traj.grid().check_same(p.grid())?;
    }
    let dt = traj.dt();
    let m = traj.config.m;
    let grid = traj.grid();
    let pre: std::collections::HashMap<usize, _> = traj.restarts.iter().map(|e| (e.index, e)).collect();

    // split [from, to] at restart times
    let mut cuts: Vec<usize> = vec![from];
    cuts.extend(traj.restart_indices().into_iter().filter(|&k| k > from && k < to));
    cuts.push(to);

    let mut report = EnergyReport {
        min_log_margin: f64::INFINITY,
        worst_index: from,
        checked: 0,
        violations: 0,
        tol,
        intervals: 0,
        pass: true,
    };
    let bound = -(1.0 + tol).ln();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        report.intervals += 1;
        let birth = traj.record(a)?.birth;
        let at = |k: usize| -> Result<Node> {
            let rec = traj.record(k)?;
            let elapsed = (k - birth) as f64 * dt;
            match pre.get(&k) {
                // the interval ends at a restart: use the pre-restart state
                Some(e) if k == b && k > a => node(
                    traj,
                    &Field::from_fourier(grid, e.pre_v.clone())?,
                    &e.pre_wick,
                    elapsed,
                    &path[k],
                    lambda,
                    alpha,
                ),
                _ => {
                    node(traj, &Field::from_fourier(grid, rec.v.clone())?, &rec.wick, elapsed, &path[k], lambda, alpha)
                }
            }
        };
        let start = at(a)?;
        let ln_j0 = start.j_sq.ln();
        // phi(t) = -2m(t - t') + 2 int g; acc = int e^{-phi(r)} D(r) dr (log)
        let mut phi = 0.0;
        let mut prev = start;
        let mut ln_acc = f64::NEG_INFINITY;
        for k in a + 1..=b {
            let cur = at(k)?;
            let phi_next = phi - 2.0 * m * dt + dt * (prev.g + cur.g);
            let t1 = (dt / 2.0 * prev.dissipation).ln() - phi;
            let t2 = (dt / 2.0 * cur.dissipation).ln() - phi_next;
            ln_acc = ln_add(ln_acc, ln_add(t1, t2));
            phi = phi_next;
            let lhs = ln_add(cur.j_sq.ln() - phi, ln_acc);
            let margin = ln_j0 - lhs;
            report.checked += 1;
            if margin < report.min_log_margin {
                report.min_log_margin = margin;
                report.worst_index = k;
            }
            if margin < bound {
                report.violations += 1;
            }
            prev = cur;
        }
    }
    report.pass = report.violations == 0;
    Ok(report)
}

/// Constant for the restart-chained bound: `c(alpha)` times the barrier
/// powers appearing when `||W^k|| < eta` is inserted into `g`.
pub fn energy_constant(c_alpha: f64, eta: f64, alpha: f64) -> f64 {
    let a = alpha;
    c_alpha
        * (1.0 + eta * eta + eta.powf(2.0 / (1.0 - a)) + eta + eta.powf(2.0 / (2.0 - a)) + eta.powf(2.0 / (1.0 + a)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomEnergyReport {
    /// `max_t (ln(||J_t h||^2 / ||h||^2) + 2 m t) / (2 theta^gamma N(t))`.
    pub c_needed: f64,
    pub c: f64,
    pub min_log_margin: f64,
    pub pass: bool,
}

/// `||J_{0,t} h||^2 <= e^{-2mt + 2 c theta^gamma N(t)} ||h||^2` at every grid time.
pub fn restart_energy_check(
    traj: &Trajectory,
    path: &[Field],
    c: f64,
    theta: f64,
    gamma: f64,
) -> Result<RandomEnergyReport> {
    let stop =
        traj.stopping.as_ref().ok_or_else(|| Error::param("restart_energy_check needs a trajectory with restarts"))?;
    if path.len() != traj.steps() + 1 {
        return Err(Error::param("path must cover every grid time"));
    }
    let m = traj.config.m;
    let dt = traj.dt();
    let h_sq = path[0].l2_norm().powi(2);
    let tg = theta.powf(gamma);
    let mut c_needed = f64::NEG_INFINITY;
    let mut min_log_margin = f64::INFINITY;
    for (k, j) in path.iter().enumerate().skip(1) {
        let t = k as f64 * dt;
        let n = stop.count(t)? as f64;
        let growth = (j.l2_norm().powi(2) / h_sq).ln() + 2.0 * m * t;
        c_needed = c_needed.max(growth / (2.0 * tg * n));
        min_log_margin = min_log_margin.min(2.0 * c * tg * n - growth);
    }
    Ok(RandomEnergyReport { c_needed, c, min_log_margin, pass: c_needed <= c })
}
