//! Dealiased products by zero padding.
//!
//! Only modes with `|k_i| < N/2` (the band `B`) are interpolated onto the
//! fine grid; this keeps interpolants real and makes the truncation the exact
//! `L^2` adjoint of the interpolation. A padding factor of 3/2 is alias-free
//! for quadratic products, 2 for cubic ones.

use std::collections::HashMap;
use std::sync::{Arc, LazyLock, Mutex};

use num_complex::Complex64;

use super::fft::{spectral, wavenumber, Spectral};
use super::{Field, FieldData, TorusGrid};
use crate::error::Result;

pub struct Padder {
    n: usize,
    fine: Arc<Spectral>,
    /// `(coarse flat index, fine flat index)` for every band mode.
    map: Vec<(usize, usize)>,
}

type PadderCache = Mutex<HashMap<(usize, usize), Arc<Padder>>>;

static PADDERS: LazyLock<PadderCache> = LazyLock::new(|| Mutex::new(HashMap::new()));

impl Padder {
    /// Padder from `n` to `m` points per side; `m >= n`.
    pub fn get(n: usize, m: usize) -> Arc<Padder> {
        assert!(m >= n, "padding must not shrink the grid");
        let mut cache = PADDERS.lock().unwrap_or_else(|e| e.into_inner());
        cache.entry((n, m)).or_insert_with(|| Arc::new(Padder::new(n, m))).clone()
    }

    /// Alias-free padder for products of `degree` factors on an `n`-grid.
    pub fn for_degree(n: usize, degree: usize) -> Arc<Padder> {
        let m = match degree {
            0..=1 => n,
            2 => 3 * n / 2,
            _ => (degree + 1) * n / 2,
        };
        Self::get(n, m)
    }

    fn new(n: usize, m: usize) -> Self {
        let coarse = spectral(n);
        let fine = spectral(m);
        let idx = |k: i64| -> usize {
            if k >= 0 {
                k as usize
            } else {
                (k + m as i64) as usize
            }
        };
        let map = coarse
            .band
            .iter()
            .map(|&c| {
                let (k1, k2) = (wavenumber(c / n, n), wavenumber(c % n, n));
                (c, idx(k1) * m + idx(k2))
            })
            .collect();
        Self { n, fine, map }
    }

    pub fn coarse_n(&self) -> usize {
        self.n
    }

    pub fn fine_n(&self) -> usize {
        self.fine.fft.n()
    }

    /// Samples of the band interpolant of `coeffs` on the fine grid.
    pub fn to_fine(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let m = self.fine_n();
        let mut buf = vec![Complex64::new(0.0, 0.0); m * m];
        for &(c, f) in &self.map {
            buf[f] = coeffs[c];
        }
        self.fine.fft.inverse(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }

    /// Band coefficients of fine-grid samples; modes outside the band are zero.
    pub fn to_coarse(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fine.fft.forward(&mut buf);
        let mut out = vec![Complex64::new(0.0, 0.0); self.n * self.n];
        for &(c, f) in &self.map {
            out[c] = buf[f];
        }
        out
    }
}

fn product_of(fields: &[&Field], degree: usize) -> Result<Field> {
    let grid: TorusGrid = *fields[0].grid();
    for f in &fields[1..] {
        grid.check_same(f.grid())?;
    }
    for f in fields {
        f.check_finite()?;
    }
    let pad = Padder::for_degree(grid.n, degree);
    let mut acc: Option<Vec<f64>> = None;
    for f in fields {
        let v = pad.to_fine(&f.fourier());
        acc = Some(match acc {
            None => v,
            Some(a) => a.iter().zip(&v).map(|(x, y)| x * y).collect(),
        });
    }
    let coeffs = pad.to_coarse(&acc.unwrap_or_default());
    Field::from_fourier(grid, coeffs)
}

/// Pointwise product. With `dealias`, the band parts of both factors are
/// multiplied exactly on a 3N/2 grid and the result truncated to the band;
/// without it the grid samples are multiplied directly.
pub fn multiply(f: &Field, g: &Field, dealias: bool) -> Result<Field> {
    if dealias {
        return product_of(&[f, g], 2);
    }
    f.grid().check_same(g.grid())?;
    f.check_finite()?;
    g.check_finite()?;
    let a = f.real();
    let b = g.real();
    let v = a.iter().zip(b.iter()).map(|(x, y)| x * y).collect();
    Ok(Field { grid: *f.grid(), data: FieldData::Real(v) })
}

/// Dealiased `f g h` (2N padding).
pub fn triple_product(f: &Field, g: &Field, h: &Field) -> Result<Field> {
    product_of(&[f, g, h], 3)
}

/// Dealiased `f^3`.
pub fn cube(f: &Field) -> Result<Field> {
    product_of(&[f, f, f], 3)
}
