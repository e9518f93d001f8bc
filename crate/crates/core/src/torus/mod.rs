//! Discrete torus geometry, spectral transforms, norms and dealiased products.
//!
//! Fields on the `N x N` grid of the torus `[0, L)^2` are stored either as
//! real samples or as Fourier-series coefficients `fhat_k`, with
//! `f(x) = sum_k fhat_k e^{i k_phys . x}`, `k_phys = 2 pi k / L` and
//! `k in {-N/2, ..., N/2 - 1}^2`. With this normalisation
//! `||f||_{L^2}^2 = L^2 sum_k |fhat_k|^2`, so coefficient sums are integrals.

pub mod fft;
mod norms;
mod product;
mod snapshot;

use std::borrow::Cow;
use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fft::{spectral, Spectral};
pub use norms::{
    besov22, besov_block_maxima, besov_from_maxima, multiplicative_inequality_check, norm, MultiplicativeReport,
    NormKind,
};
pub use product::{cube, multiply, triple_product, Padder};
pub use snapshot::{read_snapshot, write_snapshot, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    pub n: usize,
    pub l: f64,
}

impl fmt::Display for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N={} L={}", self.n, self.l)
    }
}

impl TorusGrid {
    pub fn new(n: usize, l: f64) -> Result<Self> {
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::param(format!("grid size N must be even and >= 8, got {n}")));
        }
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::param(format!("torus side L must be positive, got {l}")));
        }
        Ok(Self { n, l })
    }

    pub fn points(&self) -> usize {
        self.n * self.n
    }

    pub fn spacing(&self) -> f64 {
        self.l / self.n as f64
    }

    pub fn spectral(&self) -> std::sync::Arc<Spectral> {
        spectral(self.n)
    }

    /// `|k_phys|^2` for every flat index.
    pub fn k_phys_sq(&self) -> Vec<f64> {
        let sp = self.spectral();
        let s = 2.0 * PI / self.l;
        sp.wavenumbers.iter().map(|&(a, b)| s * s * ((a * a + b * b) as f64)).collect()
    }

    /// `m + |k_phys|^2` for every flat index.
    pub fn symbol(&self, m: f64) -> Vec<f64> {
        self.k_phys_sq().into_iter().map(|k2| m + k2).collect()
    }

    pub fn check_same(&self, other: &TorusGrid) -> Result<()> {
        if self.n != other.n || self.l != other.l {
            return Err(Error::GridMismatch { left: self.to_string(), right: other.to_string() });
        }
        Ok(())
    }

    /// Physical coordinates of grid point `(i1, i2)`.
    pub fn point(&self, i1: usize, i2: usize) -> (f64, f64) {
        (i1 as f64 * self.spacing(), i2 as f64 * self.spacing())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldData {
    Real(Vec<f64>),
    Fourier(Vec<Complex64>),
}

/// A real function (or distribution) on the discretised torus.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: TorusGrid,
    data: FieldData,
}

fn check_finite_real(xs: &[f64]) -> Result<()> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { what: "real samples", index }),
        None => Ok(()),
    }
}

fn check_finite_complex(xs: &[Complex64]) -> Result<()> {
    match xs.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
        Some(index) => Err(Error::NonFinite { what: "Fourier coefficients", index }),
        None => Ok(()),
    }
}

pub(crate) fn real_to_fourier(grid: &TorusGrid, samples: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    grid.spectral().fft.forward(&mut buf);
    buf
}

pub(crate) fn fourier_to_real(grid: &TorusGrid, coeffs: &[Complex64]) -> Vec<f64> {
    let mut buf = coeffs.to_vec();
    grid.spectral().fft.inverse(&mut buf);
    buf.into_iter().map(|z| z.re).collect()
}

impl Field {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self { grid, data: FieldData::Real(vec![0.0; grid.points()]) }
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Self { grid, data: FieldData::Real(vec![c; grid.points()]) }
    }

    pub fn from_real(grid: TorusGrid, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.points() {
            return Err(Error::param(format!("expected {} samples, got {}", grid.points(), samples.len())));
        }
        Ok(Self { grid, data: FieldData::Real(samples) })
    }

    /// Coefficients are taken as given; the real part of the synthesis is
    /// what `to_real` returns, so non-Hermitian input is silently projected.
    pub fn from_fourier(grid: TorusGrid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.points() {
            return Err(Error::param(format!("expected {} coefficients, got {}", grid.points(), coeffs.len())));
        }
        Ok(Self { grid, data: FieldData::Fourier(coeffs) })
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n;
        let mut v = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let (x1, x2) = grid.point(i, j);
                v.push(f(x1, x2));
            }
        }
        Self { grid, data: FieldData::Real(v) }
    }

    /// `amp * cos(k_phys . x)` for lattice wavevector `(k1, k2)`.
    pub fn cos_mode(grid: TorusGrid, k1: i64, k2: i64, amp: f64) -> Self {
        let s = 2.0 * PI / grid.l;
        Self::from_fn(grid, |x1, x2| amp * (s * (k1 as f64 * x1 + k2 as f64 * x2)).cos())
    }

    pub fn sin_mode(grid: TorusGrid, k1: i64, k2: i64, amp: f64) -> Self {
        let s = 2.0 * PI / grid.l;
        Self::from_fn(grid, |x1, x2| amp * (s * (k1 as f64 * x1 + k2 as f64 * x2)).sin())
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn data(&self) -> &FieldData {
        &self.data
    }

    pub fn is_fourier(&self) -> bool {
        matches!(self.data, FieldData::Fourier(_))
    }

    pub fn real(&self) -> Cow<'_, [f64]> {
        match &self.data {
            FieldData::Real(v) => Cow::Borrowed(v),
            FieldData::Fourier(c) => Cow::Owned(fourier_to_real(&self.grid, c)),
        }
    }

    pub fn fourier(&self) -> Cow<'_, [Complex64]> {
        match &self.data {
            FieldData::Fourier(c) => Cow::Borrowed(c),
            FieldData::Real(v) => Cow::Owned(real_to_fourier(&self.grid, v)),
        }
    }

    pub fn into_fourier_vec(self) -> Vec<Complex64> {
        match self.data {
            FieldData::Fourier(c) => c,
            FieldData::Real(v) => real_to_fourier(&self.grid, &v),
        }
    }

    pub fn into_real_vec(self) -> Vec<f64> {
        match self.data {
            FieldData::Real(v) => v,
            FieldData::Fourier(c) => fourier_to_real(&self.grid, &c),
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        match &self.data {
            FieldData::Real(v) => check_finite_real(v),
            FieldData::Fourier(c) => check_finite_complex(c),
        }
    }

    /// Fourier representation. Already-Fourier fields are returned unchanged.
    pub fn to_fourier(&self) -> Result<Field> {
        self.check_finite()?;
        Ok(Field { grid: self.grid, data: FieldData::Fourier(self.fourier().into_owned()) })
    }

    /// Real-space representation.
    pub fn to_real(&self) -> Result<Field> {
        self.check_finite()?;
        Ok(Field { grid: self.grid, data: FieldData::Real(self.real().into_owned()) })
    }

    fn combine(&self, other: &Field, a: f64, b: f64) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        let data = match (&self.data, &other.data) {
            (FieldData::Real(x), FieldData::Real(y)) => {
                FieldData::Real(x.iter().zip(y).map(|(p, q)| a * p + b * q).collect())
            }
            _ => {
                let x = self.fourier();
                let y = other.fourier();
                FieldData::Fourier(x.iter().zip(y.iter()).map(|(p, q)| p * a + q * b).collect())
            }
        };
        Ok(Field { grid: self.grid, data })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.combine(other, 1.0, 1.0)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.combine(other, 1.0, -1.0)
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &Field) -> Result<Field> {
        self.combine(other, 1.0, a)
    }

    pub fn scale(&self, a: f64) -> Field {
        let data = match &self.data {
            FieldData::Real(v) => FieldData::Real(v.iter().map(|x| a * x).collect()),
            FieldData::Fourier(c) => FieldData::Fourier(c.iter().map(|z| z * a).collect()),
        };
        Field { grid: self.grid, data }
    }

    /// `<f, g>_{L^2}`.
    pub fn inner(&self, other: &Field) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let l2 = self.grid.l * self.grid.l;
        match (&self.data, &other.data) {
            (FieldData::Real(x), FieldData::Real(y)) => {
                Ok(x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>() * l2 / self.grid.points() as f64)
            }
            _ => {
                let x = self.fourier();
                let y = other.fourier();
                Ok(x.iter().zip(y.iter()).map(|(p, q)| (p * q.conj()).re).sum::<f64>() * l2)
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).unwrap_or(f64::NAN).max(0.0).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.real().iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Applies a real radial Fourier multiplier `sigma(|k_phys|^2)`.
    pub fn apply_multiplier(&self, sigma: impl Fn(f64) -> f64) -> Field {
        let k2 = self.grid.k_phys_sq();
        let c: Vec<Complex64> = self.fourier().iter().zip(&k2).map(|(z, &q)| z * sigma(q)).collect();
        Field { grid: self.grid, data: FieldData::Fourier(c) }
    }

    /// Spectral gradient `(d_1 f, d_2 f)`.
    pub fn gradient(&self) -> (Field, Field) {
        let sp = self.grid.spectral();
        let s = 2.0 * PI / self.grid.l;
        let c = self.fourier();
        let n = self.grid.n as i64;
        let mut d1 = Vec::with_capacity(c.len());
        let mut d2 = Vec::with_capacity(c.len());
        for (z, &(k1, k2)) in c.iter().zip(&sp.wavenumbers) {
            // the Nyquist derivative of a real field has no real representative
            let a = if k1 == -n / 2 { 0.0 } else { s * k1 as f64 };
            let b = if k2 == -n / 2 { 0.0 } else { s * k2 as f64 };
            d1.push(z * Complex64::new(0.0, a));
            d2.push(z * Complex64::new(0.0, b));
        }
        (
            Field { grid: self.grid, data: FieldData::Fourier(d1) },
            Field { grid: self.grid, data: FieldData::Fourier(d2) },
        )
    }

    /// `sup_x |grad f(x)|` over grid points.
    pub fn gradient_sup(&self) -> f64 {
        let (a, b) = self.gradient();
        let a = a.real();
        let b = b.real();
        a.iter().zip(b.iter()).fold(0.0, |m, (p, q)| m.max((p * p + q * q).sqrt()))
    }

    /// `||grad f||_{L^2}^2`, computed spectrally.
    pub fn gradient_l2_sq(&self) -> f64 {
        let k2 = self.grid.k_phys_sq();
        let l2 = self.grid.l * self.grid.l;
        self.fourier().iter().zip(&k2).map(|(z, q)| q * z.norm_sqr()).sum::<f64>() * l2
    }

    /// Spatial mean `fhat_0`.
    pub fn mean(&self) -> f64 {
        match &self.data {
            FieldData::Real(v) => v.iter().sum::<f64>() / v.len() as f64,
            FieldData::Fourier(c) => c[0].re,
        }
    }
}

/// Heat semigroup `S_t f`, multiplying each mode by `exp(-t (m + |k_phys|^2))`.
pub fn heat_semigroup(f: &Field, t: f64, m: f64) -> Result<Field> {
    if !(t >= 0.0) {
        return Err(Error::param(format!("heat semigroup time must be >= 0, got {t}")));
    }
    if !(m >= 0.0) {
        return Err(Error::param(format!("mass must be >= 0, got {m}")));
    }
    f.check_finite()?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    Ok(f.apply_multiplier(|k2| (-t * (m + k2)).exp()))
}

/// Gaussian white-noise sample field (i.i.d. standard normal grid values),
/// used for random probes and test data.
pub fn gaussian_field(grid: TorusGrid, rng: &mut impl rand::Rng) -> Field {
    use rand_distr::{Distribution, StandardNormal};
    let v: Vec<f64> = (0..grid.points()).map(|_| StandardNormal.sample(rng)).collect();
    Field { grid, data: FieldData::Real(v) }
}

/// Random field with Gaussian coefficients restricted to `|k| <= kmax`.
pub fn smooth_random_field(grid: TorusGrid, kmax: f64, rng: &mut impl rand::Rng) -> Field {
    let sp = grid.spectral();
    let f = gaussian_field(grid, rng).into_fourier_vec();
    let c: Vec<Complex64> =
        f.iter().zip(&sp.lattice_norm).map(|(z, &k)| if k <= kmax { *z } else { Complex64::new(0.0, 0.0) }).collect();
    Field { grid, data: FieldData::Fourier(c) }
}
