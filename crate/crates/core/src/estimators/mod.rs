//! Quantitative checks on top of the dynamics: the drift functional `g` of
//! the energy estimate, contraction and smoothing rates of the linearised
//! flow, the semigroup gradient, the Bakry-Emery variance identity and the
//! spectral gap.

mod cylinder;
mod energy;
mod gap;
mod gradient;
mod rates;
mod report;

pub use cylinder::{CylinderFunctional, OuterMap};
pub use energy::{energy_constant, restart_energy_check, verify_energy_inequality, EnergyReport, RandomEnergyReport};
pub use gap::{gaussian_gap_ratio, gaussian_variance, spectral_gap_estimate, GapReport, GapSettings};
pub use gradient::{
    be_identity_check, gaussian_be_oracle, refined_s_grid, semigroup_gradient, BeReport, BeSettings, GradientEstimate,
};
pub use rates::{
    contraction_rate, heat_multiplier_sup, norm_moments, smoothing_exponent, ContractionReport, MassRate, NormMoment,
    SmoothingReport,
};
pub use report::{EstimateReport, FitRow, ReportRow, Verdict, REPORT_SCHEMA_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Drift functional of the energy estimate:
///
/// `g = |W1|^2 / 2 lambda + (1+a)/(2 lambda^{(1+a)/2}) |W1|^{2/(1+a)} |grad v|_inf^{2a/(1+a)}
///    + (1-a)/(2^{1/(1-a)} lambda^{2/(1-a)}) |W1|^{2/(1-a)} + |W2|
///    + 2^a (2-a)/(2 lambda^{2/(2-a)}) |W2|^{2/(2-a)} + 3 c`
///
/// with `|W_k| = ||W_k||_{C^{-a}}` (`wick` holds `[|W1|, |W2|]`).
pub fn g_drift(wick: [f64; 2], grad_v_sup: f64, c_inf: f64, lambda: f64, alpha: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::param(format!("lambda must be positive, got {lambda}")));
    }
    check_alpha(alpha)?;
    let [w1, w2] = wick;
    let a = alpha;
    let p = prefactors(lambda, a);
    Ok(p[0] * w1 * w1
        + p[1] * w1.powf(2.0 / (1.0 + a)) * grad_v_sup.powf(2.0 * a / (1.0 + a))
        + p[2] * w1.powf(2.0 / (1.0 - a))
        + w2
        + p[4] * w2.powf(2.0 / (2.0 - a))
        + 3.0 * c_inf)
}

/// Coefficients of the six terms of `g` (the `|W2|` and `c` terms carry 1 and 3).
fn prefactors(lambda: f64, a: f64) -> [f64; 6] {
    [
        1.0 / (2.0 * lambda),
        (1.0 + a) / (2.0 * lambda.powf((1.0 + a) / 2.0)),
        (1.0 - a) / (2f64.powf(1.0 / (1.0 - a)) * lambda.powf(2.0 / (1.0 - a))),
        1.0,
        2f64.powf(a) * (2.0 - a) / (2.0 * lambda.powf(2.0 / (2.0 - a))),
        3.0,
    ]
}

/// Young parameter for the absorption step and the resulting constant `c(alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaChoice {
    pub alpha: f64,
    pub lambda: f64,
    /// Index `i` of `lambda = 2^{-i/8}` on the search grid.
    pub grid_index: usize,
    /// Largest prefactor of `g` at `lambda`.
    pub c_alpha: f64,
}

pub const LAMBDA_GRID_LEN: usize = 201;

pub fn lambda_grid(i: usize) -> f64 {
    2f64.powf(-(i as f64) / 8.0)
}

/// The absorbed coefficients as `(value, allowance)` pairs.
pub fn absorption_terms(lambda: f64, alpha: f64) -> [(f64, f64); 4] {
    let a = alpha;
    [
        (a * lambda.powf(1.0 / a), 0.125),
        (a / 2.0 * lambda.powf(2.0 / a), 0.125),
        // the two lambda/2 ||v J||^2 terms from the Young steps
        (lambda / 2.0 * 2.0, 0.25),
        ((1.0 - a) / 2.0 * lambda.powf(2.0 / (1.0 - a)), 0.25),
    ]
}

pub fn absorption_feasible(lambda: f64, alpha: f64) -> bool {
    absorption_terms(lambda, alpha).iter().all(|(v, cap)| v <= cap)
}

/// Largest `lambda = 2^{-i/8}`, `i = 0..=200`, for which the absorption is valid.
pub fn choose_lambda(alpha: f64) -> Result<LambdaChoice> {
    check_alpha(alpha)?;
    let i = (0..LAMBDA_GRID_LEN)
        .find(|&i| absorption_feasible(lambda_grid(i), alpha))
        .ok_or(Error::SearchExhausted(alpha))?;
    let lambda = lambda_grid(i);
    let c_alpha = prefactors(lambda, alpha).iter().cloned().fold(0.0, f64::max);
    Ok(LambdaChoice { alpha, lambda, grid_index: i, c_alpha })
}
