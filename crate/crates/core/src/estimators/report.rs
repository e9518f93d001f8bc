//! Machine-readable estimate reports.

use serde::{Deserialize, Serialize};

use crate::stats::LinearFit;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// One estimate with its interval and sample count. Exactly one of `t`, `m`,
/// `functional` is usually set, naming what the row is indexed by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub quantity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional: Option<String>,
    pub estimate: f64,
    pub ci: [f64; 2],
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub label: String,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_se: f64,
}

impl FitRow {
    pub fn new(label: impl Into<String>, fit: &LinearFit) -> Self {
        Self { label: label.into(), slope: fit.slope, intercept: fit.intercept, r2: fit.r2, slope_se: fit.slope_se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub bound: String,
    pub pass: bool,
    /// Signed distance to the bound in the check's natural units (positive = inside).
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub experiment: String,
    pub config: serde_json::Value,
    pub rows: Vec<ReportRow>,
    pub fits: Vec<FitRow>,
    pub verdicts: Vec<Verdict>,
}

fn finite_or_null(x: f64) -> f64 {
    // JSON has no NaN or infinities: NaN becomes 0, infinities the largest finite value
    if x.is_nan() {
        0.0
    } else {
        x.clamp(f64::MIN, f64::MAX)
    }
}

impl EstimateReport {
    pub fn new(experiment: impl Into<String>, config: serde_json::Value) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            experiment: experiment.into(),
            config,
            rows: vec![],
            fits: vec![],
            verdicts: vec![],
        }
    }

    pub fn row(&mut self, quantity: &str, estimate: f64, ci: (f64, f64), n: usize) -> &mut ReportRow {
        self.rows.push(ReportRow {
            quantity: quantity.into(),
            t: None,
            m: None,
            functional: None,
            estimate: finite_or_null(estimate),
            ci: [finite_or_null(ci.0), finite_or_null(ci.1)],
            n,
        });
        self.rows.last_mut().unwrap()
    }

    pub fn fit(&mut self, label: impl Into<String>, fit: &LinearFit) {
        let mut f = FitRow::new(label, fit);
        for x in [&mut f.slope, &mut f.intercept, &mut f.r2, &mut f.slope_se] {
            *x = finite_or_null(*x);
        }
        self.fits.push(f);
    }

    pub fn verdict(&mut self, bound: impl Into<String>, pass: bool, margin: f64) {
        self.verdicts.push(Verdict { bound: bound.into(), pass, margin: finite_or_null(margin) });
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    /// CSV of the rows: `quantity,t,m,functional,estimate,ci_low,ci_high,n`.
    pub fn rows_csv(&self) -> String {
        let mut s = String::from("quantity,t,m,functional,estimate,ci_low,ci_high,n\n");
        let opt = |x: Option<f64>| x.map(|v| format!("{v}")).unwrap_or_default();
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.quantity,
                opt(r.t),
                opt(r.m),
                r.functional.clone().unwrap_or_default(),
                r.estimate,
                r.ci[0],
                r.ci[1],
                r.n
            ));
        }
        s
    }
}
