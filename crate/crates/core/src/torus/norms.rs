//! `L^p`, Sobolev and sharp-annulus Besov norms.
//!
//! Dyadic blocks are indexed by the integer lattice norm `|k|`: block `-1`
//! holds the zero mode only, block `j >= 0` holds `2^j <= |k| < 2^{j+1}`.
//! The low block carries weight 1 for every regularity index, which keeps
//! `s -> ||f||_{B^s}` monotone.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{fourier_to_real, multiply, Field};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NormKind {
    /// `p in [1, inf]`; `p = inf` is the grid supremum.
    Lp(f64),
    Sobolev(f64),
    /// `B^s_{inf,inf}`, written `C^s`.
    BesovInfInf(f64),
}

impl NormKind {
    pub fn lp(p: f64) -> Result<Self> {
        if !(p >= 1.0) {
            return Err(Error::param(format!("L^p exponent must be >= 1, got {p}")));
        }
        Ok(NormKind::Lp(p))
    }

    pub fn sobolev(kappa: f64) -> Self {
        NormKind::Sobolev(kappa)
    }

    pub fn besov(s: f64) -> Self {
        NormKind::BesovInfInf(s)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            NormKind::Lp(p) if !(p >= 1.0) => Err(Error::param(format!("L^p exponent must be >= 1, got {p}"))),
            NormKind::Sobolev(k) | NormKind::BesovInfInf(k) if !k.is_finite() => {
                Err(Error::param("regularity index must be finite"))
            }
            _ => Ok(()),
        }
    }

    /// Short label used in CSV/JSON output, e.g. `H^0.5`.
    pub fn label(&self) -> String {
        match self {
            NormKind::Lp(p) => format!("L^{p}"),
            NormKind::Sobolev(k) => format!("H^{k}"),
            NormKind::BesovInfInf(s) => format!("C^{s}"),
        }
    }
}

pub fn norm(f: &Field, kind: NormKind) -> Result<f64> {
    kind.validate()?;
    f.check_finite()?;
    let g = f.grid();
    let area = g.l * g.l;
    Ok(match kind {
        NormKind::Lp(p) if p.is_infinite() => f.max_abs(),
        NormKind::Lp(p) => {
            let r = f.real();
            let mean = r.iter().map(|x| x.abs().powf(p)).sum::<f64>() / r.len() as f64;
            (mean * area).powf(1.0 / p)
        }
        NormKind::Sobolev(kappa) => {
            let k2 = g.k_phys_sq();
            let s: f64 = f.fourier().iter().zip(&k2).map(|(z, q)| (1.0 + q).powf(kappa) * z.norm_sqr()).sum();
            (s * area).sqrt()
        }
        NormKind::BesovInfInf(s) => besov_from_maxima(&besov_block_maxima(f), s),
    })
}

/// Grid maxima `max_x |Delta_j f(x)|` for `j = -1, 0, 1, ...`.
pub fn besov_block_maxima(f: &Field) -> Vec<f64> {
    let g = *f.grid();
    let sp = g.spectral();
    let c = f.fourier();
    let mut out = Vec::with_capacity(sp.blocks.len());
    out.push(c[0].re.abs());
    let mut buf = vec![Complex64::new(0.0, 0.0); c.len()];
    for block in &sp.blocks[1..] {
        if block.is_empty() {
            out.push(0.0);
            continue;
        }
        buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for &i in block {
            buf[i] = c[i];
        }
        let r = fourier_to_real(&g, &buf);
        out.push(r.iter().fold(0.0, |m, x| m.max(x.abs())));
    }
    out
}

/// `sup_j w_j(s) M_j` with `w = 1` on the zero-mode block and `2^{js}` otherwise.
pub fn besov_from_maxima(maxima: &[f64], s: f64) -> f64 {
    maxima
        .iter()
        .enumerate()
        .map(|(b, m)| if b == 0 { *m } else { 2f64.powf((b - 1) as f64 * s) * m })
        .fold(0.0, f64::max)
}

/// `B^s_{2,2}` norm with the same blocks, computed from coefficients.
pub fn besov22(f: &Field, s: f64) -> f64 {
    let g = f.grid();
    let sp = g.spectral();
    let c = f.fourier();
    let area = g.l * g.l;
    let mut total = 0.0;
    for (b, block) in sp.blocks.iter().enumerate() {
        let w = if b == 0 { 1.0 } else { 2f64.powf(2.0 * (b - 1) as f64 * s) };
        total += w * block.iter().map(|&i| c[i].norm_sqr()).sum::<f64>() * area;
    }
    total.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplicativeReport {
    /// `||f g||_{B^alpha_{2,2}}`
    pub product: f64,
    /// `||f||_{C^alpha}`
    pub f_norm: f64,
    /// `||g||_{C^beta}`
    pub g_norm: f64,
    /// `product / (f_norm g_norm)`, zero when the product vanishes.
    pub ratio: f64,
}

/// Measures both sides of `||f g||_{B^alpha_{2,2}} <~ ||f||_{C^alpha} ||g||_{C^beta}`.
pub fn multiplicative_inequality_check(f: &Field, g: &Field, alpha: f64, beta: f64) -> Result<MultiplicativeReport> {
    if !(alpha < 0.0 && beta > 0.0 && alpha + beta > 0.0) {
        return Err(Error::param(format!(
            "need alpha < 0 < beta with alpha + beta > 0, got alpha={alpha}, beta={beta}"
        )));
    }
    let fg = multiply(f, g, true)?;
    let product = besov22(&fg, alpha);
    let f_norm = norm(f, NormKind::BesovInfInf(alpha))?;
    let g_norm = norm(g, NormKind::BesovInfInf(beta))?;
    let ratio = if product == 0.0 { 0.0 } else { product / (f_norm * g_norm) };
    Ok(MultiplicativeReport { product, f_norm, g_norm, ratio })
}
