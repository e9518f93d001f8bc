//! Barrier-and-cap restart scheme for the Wick processes, the counting
//! process `N(t)`, barrier calibration and tail / exponential-moment checks.
//!
//! `tau~_n` is the first grid time after `tau_{n-1}` at which one of
//! `||W^k_{tau_{n-1}, t}||_{C^{-alpha}}` reaches `eta`; the interval is capped
//! at `theta`, and `N(t) = inf { n >= 1 : tau_n >= t }`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{grid_steps, make_wick, restart, sup_norm_profile, OuKernel};
use crate::rng::{cell_rng, Domain, NoiseStream};
use crate::stats::{self, wilson, Z95, Z95_ONE_SIDED};
use crate::torus::TorusGrid;

/// `gamma = (1 - alpha (1 + 2 eps)) / (1 + alpha)`.
pub fn gamma_exponent(alpha: f64, eps: f64) -> Result<f64> {
    if !(alpha > 0.0 && eps > 0.0 && alpha * (1.0 + 2.0 * eps) < 1.0) {
        return Err(Error::param(format!(
            "need alpha, eps > 0 with alpha (1 + 2 eps) < 1, got alpha={alpha}, eps={eps}"
        )));
    }
    Ok((1.0 - alpha * (1.0 + 2.0 * eps)) / (1.0 + alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingConfig {
    /// Barrier in `C^{-alpha}` units; `f64::INFINITY` disables it.
    #[serde(with = "maybe_infinite")]
    pub eta: f64,
    pub theta: f64,
    pub alpha: f64,
    pub epsilon: f64,
}

/// JSON has no infinity, so an infinite barrier is written as `"inf"`.
mod maybe_infinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_infinite() && *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*x)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
        }
    }
}

impl StoppingConfig {
    pub fn new(eta: f64, theta: f64, alpha: f64, epsilon: f64) -> Result<Self> {
        let c = Self { eta, theta, alpha, epsilon };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::param(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        if !(self.eta > 0.0) {
            return Err(Error::param(format!("eta must be positive, got {}", self.eta)));
        }
        let g = gamma_exponent(self.alpha, self.epsilon)?;
        if !(g > 0.0 && g < 1.0) {
            return Err(Error::param(format!("gamma = {g} outside (0, 1)")));
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        gamma_exponent(self.alpha, self.epsilon).expect("validated")
    }

    /// Largest number of grid steps not exceeding `theta`.
    pub fn cap_steps(&self, dt: f64) -> Result<usize> {
        let r = self.theta / dt;
        let k = if (r - r.round()).abs() < 1e-9 * r { r.round() } else { r.floor() };
        if k < 1.0 {
            return Err(Error::param(format!("theta = {} is shorter than one step dt = {dt}", self.theta)));
        }
        Ok(k as usize)
    }
}

/// Restart times `tau_1 < tau_2 < ...` observed up to the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingRecord {
    /// Grid indices of the restart times.
    pub taus: Vec<usize>,
    /// Whether each interval ended by the `theta` cap rather than the barrier.
    pub capped: Vec<bool>,
    pub dt: f64,
    /// Number of simulated steps; `N(t)` is known for `t <= steps * dt`.
    pub steps: usize,
}

impl StoppingRecord {
    pub fn new(taus: Vec<usize>, capped: Vec<bool>, dt: f64, steps: usize) -> Self {
        Self { taus, capped, dt, steps }
    }

    pub fn tau_times(&self) -> Vec<f64> {
        self.taus.iter().map(|&k| k as f64 * self.dt).collect()
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    /// `N(t) = 1 + #{n : tau_n < t}` for `0 <= t <= horizon`.
    pub fn count(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0 && t <= self.horizon() * (1.0 + 1e-12)) {
            return Err(Error::param(format!("N(t) requested at t={t} beyond the horizon {}", self.horizon())));
        }
        let tol = 1e-9 * self.dt;
        Ok(1 + self.taus.iter().filter(|&&k| (k as f64) * self.dt < t - tol).count())
    }

    /// Longest interval between consecutive restarts (including from 0).
    pub fn max_gap(&self) -> usize {
        let mut prev = 0;
        let mut gap = 0;
        for &k in &self.taus {
            gap = gap.max(k - prev);
            prev = k;
        }
        gap
    }
}

/// Restart schedule of the Gaussian sector alone (the barrier only looks at
/// the Wick processes, so `v` is not needed).
pub fn restart_schedule(
    grid: TorusGrid,
    m: f64,
    dt: f64,
    horizon: f64,
    config: &StoppingConfig,
    stream: NoiseStream,
) -> Result<StoppingRecord> {
    config.validate()?;
    let steps = grid_steps(horizon, dt)?;
    let cap = config.cap_steps(dt)?;
    let kernel = OuKernel::new(grid, m, dt)?;
    let mut stream = stream;
    let mut ou = restart(&stream, grid, m, 0.0)?;
    let mut birth = 0;
    let (mut taus, mut capped) = (Vec::new(), Vec::new());
    for k in 1..=steps {
        kernel.step(&mut ou, &mut stream);
        let hit = config.eta.is_finite() && make_wick(&ou)?.besov_norms(config.alpha).iter().any(|&x| x >= config.eta);
        if hit || k - birth >= cap {
            taus.push(k);
            capped.push(!hit);
            birth = k;
            ou = restart(&stream, grid, m, k as f64 * dt)?;
        }
    }
    Ok(StoppingRecord::new(taus, capped, dt, steps))
}

pub fn restart_schedules(
    grid: TorusGrid,
    m: f64,
    dt: f64,
    horizon: f64,
    config: &StoppingConfig,
    base_seed: u64,
    replicas: std::ops::Range<u64>,
) -> Result<Vec<StoppingRecord>> {
    replicas
        .into_par_iter()
        .map(|r| restart_schedule(grid, m, dt, horizon, config, NoiseStream::new(base_seed, r)))
        .collect()
}

/// Minimum replica count for [`calibrate_eta`].
pub const MIN_CALIBRATION_REPLICAS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    /// Time step of the sampled supremum over `[0, 1]`.
    pub dt: f64,
    /// Search grid spacing for `eta`.
    pub step: f64,
    /// Search range end.
    pub eta_max: f64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self { dt: 0.01, step: 0.05, eta_max: 1e4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaCalibration {
    pub eta: f64,
    /// Empirical `P(S >= eta)` with `S = sup_{t <= 1} max_k ||W^k_{0,t}||_{-alpha}`.
    pub p_hat: f64,
    /// One-sided 95% Wilson upper bound.
    pub p_upper: f64,
    pub replicas: usize,
    pub alpha: f64,
    pub grid: TorusGrid,
    pub m: f64,
    pub settings: CalibrationSettings,
}

/// Smallest `eta` on the search grid whose exceedance probability is below
/// 1/4 with one-sided 95% confidence.
pub fn calibrate_eta(
    grid: TorusGrid,
    m: f64,
    alpha: f64,
    base_seed: u64,
    replicas: std::ops::Range<u64>,
    settings: CalibrationSettings,
) -> Result<EtaCalibration> {
    let n = (replicas.end - replicas.start) as usize;
    if n < MIN_CALIBRATION_REPLICAS {
        return Err(Error::InsufficientSamples(format!(
            "calibrate_eta needs at least {MIN_CALIBRATION_REPLICAS} replicas, got {n}"
        )));
    }
    let profile = sup_norm_profile(grid, m, base_seed, 1.0, settings.dt, alpha, replicas)?;
    eta_from_samples(&profile.samples, settings.step, settings.eta_max).map(|(eta, p_hat, p_upper)| EtaCalibration {
        eta,
        p_hat,
        p_upper,
        replicas: n,
        alpha,
        grid,
        m,
        settings,
    })
}

/// Grid search on a sample of suprema; returns `(eta, p_hat, p_upper)`.
pub fn eta_from_samples(samples: &[f64], step: f64, eta_max: f64) -> Result<(f64, f64, f64)> {
    if !(step > 0.0) {
        return Err(Error::param("search step must be positive"));
    }
    let n = samples.len();
    let mut j = 1u64;
    loop {
        let eta = j as f64 * step;
        if eta > eta_max {
            return Err(Error::SearchExhausted(eta_max));
        }
        let k = samples.iter().filter(|&&s| s >= eta).count();
        let (_, hi) = wilson(k, n, Z95_ONE_SIDED);
        // the one-sided bound only uses the upper end of the score interval
        if hi < 0.25 {
            return Ok((eta, k as f64 / n as f64, hi));
        }
        j += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub t: f64,
    pub n: usize,
    pub events: usize,
    pub total: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `2^{-n} e^{(2 ln 2 / theta) t}`.
    pub bound: f64,
    /// `ci_low <= bound`.
    pub pass: bool,
}

/// Empirical `P(N(t) >= n)` with a two-sided 95% Wilson interval, compared
/// with `2^{-n} e^{(2 ln 2 / theta) t}`.
pub fn tail_estimate(records: &[StoppingRecord], t: f64, n: usize, theta: f64) -> Result<TailEstimate> {
    let total = records.len();
    if total == 0 {
        return Err(Error::InsufficientSamples("no stopping records".into()));
    }
    let mut events = 0;
    for r in records {
        if r.count(t)? >= n {
            events += 1;
        }
    }
    let (ci_low, ci_high) = wilson(events, total, Z95);
    let bound = 2f64.powi(-(n as i32)) * (2.0 * std::f64::consts::LN_2 / theta * t).exp();
    Ok(TailEstimate {
        t,
        n,
        events,
        total,
        p_hat: events as f64 / total as f64,
        ci_low,
        ci_high,
        bound,
        pass: ci_low <= bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpMoment {
    pub t: f64,
    /// `log E[e^{p c theta^gamma N(t)}]^{1/p}`.
    pub log_estimate: f64,
    pub log_ci_low: f64,
    pub log_ci_high: f64,
    /// `exp(log_estimate)`; infinite when it overflows.
    pub estimate: f64,
    pub overflow: bool,
    pub n: usize,
}

/// `E^{1/p} exp(p c theta^gamma N(t))`, evaluated in the log domain.
pub fn exp_moment(records: &[StoppingRecord], p: f64, c: f64, theta: f64, gamma: f64, t: f64) -> Result<ExpMoment> {
    if records.is_empty() {
        return Err(Error::InsufficientSamples("no stopping records".into()));
    }
    if !(p >= 1.0 && c >= 0.0) {
        return Err(Error::param("exp_moment needs p >= 1 and c >= 0"));
    }
    let a = p * c * theta.powf(gamma);
    let counts = records.iter().map(|r| r.count(t).map(|k| k as f64)).collect::<Result<Vec<_>>>()?;
    Ok(log_mean_exp_moment(&counts, a, p, t))
}

fn log_mean_exp_moment(counts: &[f64], a: f64, p: f64, t: f64) -> ExpMoment {
    let n = counts.len();
    let xs: Vec<f64> = counts.iter().map(|k| a * k).collect();
    let top = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = xs.iter().map(|x| (x - top).exp()).collect();
    let est = stats::mean_estimate(&scaled);
    let log_mean = top + est.mean.ln();
    let rel = if n > 1 { Z95 * est.se / est.mean } else { 0.0 };
    let log_estimate = log_mean / p;
    let log_ci_low = (top + (est.mean * (1.0 - rel)).max(f64::MIN_POSITIVE).ln()) / p;
    let log_ci_high = (top + (est.mean * (1.0 + rel)).ln()) / p;
    let overflow = log_estimate > 700.0;
    ExpMoment {
        t,
        log_estimate,
        log_ci_low,
        log_ci_high,
        estimate: if overflow { f64::INFINITY } else { log_estimate.exp() },
        overflow,
        n,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub rows: Vec<ExpMoment>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `2 ln 2 / theta`.
    pub bound: f64,
    /// Fitted rate within CI of the bound: `ci_low <= bound`.
    pub pass: bool,
    /// Some moment overflowed: theta is above the empirical theta_0.
    pub overflow: bool,
}

/// Least-squares exponential growth rate of the moment in `t`, with a
/// percentile bootstrap interval over records.
pub fn growth_rate(
    records: &[StoppingRecord],
    p: f64,
    c: f64,
    theta: f64,
    gamma: f64,
    times: &[f64],
    bootstrap: usize,
    seed: u64,
) -> Result<GrowthFit> {
    if times.len() < 2 {
        return Err(Error::param("growth_rate needs at least two times"));
    }
    let rows = times.iter().map(|&t| exp_moment(records, p, c, theta, gamma, t)).collect::<Result<Vec<_>>>()?;
    let y: Vec<f64> = rows.iter().map(|r| r.log_estimate).collect();
    let fit = stats::linear_fit(times, &y);
    let a = p * c * theta.powf(gamma);
    let counts: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| records.iter().map(|r| r.count(t).map(|k| k as f64)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let n = records.len();
    let mut rng = cell_rng(seed, 0, Domain::Bootstrap, 0);
    let mut reps = Vec::with_capacity(bootstrap);
    for _ in 0..bootstrap {
        let idx: Vec<usize> = (0..n).map(|_| rand::Rng::random_range(&mut rng, 0..n)).collect();
        let yb: Vec<f64> = counts
            .iter()
            .zip(times)
            .map(|(cs, &t)| {
                let sample: Vec<f64> = idx.iter().map(|&i| cs[i]).collect();
                log_mean_exp_moment(&sample, a, p, t).log_estimate
            })
            .collect();
        reps.push(stats::linear_fit(times, &yb).slope);
    }
    let (ci_low, ci_high) = if bootstrap > 0 { stats::percentile_interval(reps, 0.95) } else { (fit.slope, fit.slope) };
    let bound = 2.0 * std::f64::consts::LN_2 / theta;
    let overflow = rows.iter().any(|r| r.overflow);
    Ok(GrowthFit {
        rows,
        slope: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        ci_low,
        ci_high,
        bound,
        pass: !overflow && ci_low <= bound,
        overflow,
    })
}

/// Bisection for the largest `theta` in `[lo, hi]` whose growth diagnostic
/// passes; `diagnose(theta)` reports pass/fail. Returns `None` if even `lo`
/// fails.
pub fn locate_theta0(
    mut lo: f64,
    mut hi: f64,
    iterations: usize,
    mut diagnose: impl FnMut(f64) -> Result<bool>,
) -> Result<Option<f64>> {
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(Error::param("locate_theta0 needs 0 < lo < hi < 1"));
    }
    if !diagnose(lo)? {
        return Ok(None);
    }
    if diagnose(hi)? {
        return Ok(Some(hi));
    }
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if diagnose(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::new(n, 1.0).unwrap()
    }

    #[test]
    fn gamma_values() {
        assert!((gamma_exponent(0.1, 0.1).unwrap() - 0.8).abs() < 1e-15);
        assert!((gamma_exponent(0.2, 0.25).unwrap() - 0.7 / 1.2).abs() < 1e-15);
        assert!((gamma_exponent(1e-9, 0.1).unwrap() - 1.0).abs() < 1e-8);
        assert!(gamma_exponent(0.5, 0.5).is_err());
        assert!(gamma_exponent(0.0, 0.1).is_err());
    }

    #[test]
    fn infinite_barrier_gives_periodic_restarts() {
        let sc = StoppingConfig::new(f64::INFINITY, 0.1, 0.3, 0.1).unwrap();
        let rec = restart_schedule(grid(8), 1.0, 0.01, 1.0, &sc, NoiseStream::new(1, 0)).unwrap();
        assert_eq!(rec.taus, (1..=10).map(|n| 10 * n).collect::<Vec<_>>());
        assert!(rec.capped.iter().all(|&c| c));
        assert_eq!(rec.count(0.45).unwrap(), 5);
        for t in [0.0, 0.05, 0.1, 0.31, 0.99] {
            assert_eq!(rec.count(t).unwrap(), ((t / 0.1 - 1e-9).ceil() as usize).max(1));
        }
    }

    #[test]
    fn tiny_barrier_fires_every_step() {
        let sc = StoppingConfig::new(1e-12, 0.5, 0.3, 0.1).unwrap();
        let rec = restart_schedule(grid(8), 1.0, 0.01, 0.1, &sc, NoiseStream::new(1, 0)).unwrap();
        assert_eq!(rec.taus, (1..=10).collect::<Vec<_>>());
        assert!(rec.capped.iter().all(|&c| !c));
    }

    #[test]
    fn count_matches_brute_force() {
        let rec = StoppingRecord::new(vec![3, 7, 8, 15], vec![false; 4], 0.1, 20);
        let taus = rec.tau_times();
        for k in 0..=20 {
            let t = k as f64 * 0.1;
            // inf { n >= 1 : tau_n >= t }, with tau_n = +inf past the record
            let brute = (1..).find(|&n| taus.get(n - 1).is_none_or(|&tau| tau >= t - 1e-12)).unwrap();
            assert_eq!(rec.count(t).unwrap(), brute, "t = {t}");
        }
        assert!(rec.count(2.5).is_err());
        assert_eq!(rec.max_gap(), 7);
    }

    #[test]
    fn tails_and_moments_for_deterministic_counts() {
        let sc = StoppingConfig::new(f64::INFINITY, 0.1, 0.3, 0.1).unwrap();
        let recs: Vec<_> =
            (0..4).map(|r| restart_schedule(grid(8), 1.0, 0.01, 0.5, &sc, NoiseStream::new(2, r)).unwrap()).collect();
        let t0 = tail_estimate(&recs, 0.45, 0, 0.1).unwrap();
        assert_eq!(t0.p_hat, 1.0);
        assert_eq!(tail_estimate(&recs, 0.45, 5, 0.1).unwrap().p_hat, 1.0);
        assert_eq!(tail_estimate(&recs, 0.45, 6, 0.1).unwrap().p_hat, 0.0);
        let g = sc.gamma();
        let c = 0.7;
        let m = exp_moment(&recs, 2.0, c, 0.1, g, 0.45).unwrap();
        let want = c * 0.1f64.powf(g) * 5.0;
        assert!((m.log_estimate - want).abs() < 1e-14);
        assert!((m.estimate - want.exp()).abs() < 1e-13 * want.exp());
        assert_eq!(exp_moment(&recs, 2.0, 0.0, 0.1, g, 0.45).unwrap().estimate, 1.0);
    }

    #[test]
    fn barrier_search() {
        let samples: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let (eta, p, hi) = eta_from_samples(&samples, 0.01, 10.0).unwrap();
        assert!(hi < 0.25 && p < 0.25);
        // one grid step lower must fail
        let k = samples.iter().filter(|&&s| s >= eta - 0.01).count();
        assert!(wilson(k, 1000, Z95_ONE_SIDED).1 >= 0.25);
        assert!(matches!(eta_from_samples(&samples, 0.01, 0.5), Err(Error::SearchExhausted(_))));
        assert!(matches!(
            calibrate_eta(grid(8), 1.0, 0.3, 0, 0..10, CalibrationSettings::default()),
            Err(Error::InsufficientSamples(_))
        ));
    }

    #[test]
    fn theta_bisection() {
        let t = locate_theta0(0.05, 0.95, 30, |th| Ok(th < 0.4)).unwrap().unwrap();
        assert!((t - 0.4).abs() < 1e-6);
        assert_eq!(locate_theta0(0.05, 0.95, 30, |_| Ok(false)).unwrap(), None);
    }
}
