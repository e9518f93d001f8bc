//! Cached 2-D FFT plans and per-resolution lookup tables.

use std::collections::HashMap;
use std::sync::{Arc, LazyLock, Mutex};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Square 2-D transform on row-major `n x n` buffers.
///
/// `forward` is normalised by `1/n^2` so that coefficients are Fourier-series
/// coefficients, `f(x) = sum_k fhat_k e^{i k.x}`; `inverse` is the plain sum.
pub struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: usize,
}

impl Fft2 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Self { n, fwd, inv, scratch }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn run(&self, fft: &Arc<dyn Fft<f64>>, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.n * self.n);
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch];
        fft.process_with_scratch(data, &mut scratch);
        transpose(data, self.n);
        fft.process_with_scratch(data, &mut scratch);
        transpose(data, self.n);
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(&self.fwd, data);
        let s = 1.0 / (self.n * self.n) as f64;
        for z in data.iter_mut() {
            *z *= s;
        }
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(&self.inv, data);
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Resolution-dependent tables shared by every field on an `n x n` grid.
pub struct Spectral {
    pub fft: Fft2,
    /// Signed wavenumber per flat index, `(k1, k2)`.
    pub wavenumbers: Vec<(i64, i64)>,
    /// Integer lattice norm `|k|`.
    pub lattice_norm: Vec<f64>,
    /// Flat index of `-k` (mod n).
    pub partner: Vec<usize>,
    /// Dyadic blocks: entry 0 is `k = 0`, entry `j + 1` holds `2^j <= |k| < 2^{j+1}`.
    pub blocks: Vec<Vec<usize>>,
    /// Flat indices with `|k_i| < n/2` in both directions (Nyquist excluded).
    pub band: Vec<usize>,
}

pub fn wavenumber(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

impl Spectral {
    fn new(n: usize) -> Self {
        let mut wavenumbers = Vec::with_capacity(n * n);
        let mut lattice_norm = Vec::with_capacity(n * n);
        let mut partner = Vec::with_capacity(n * n);
        let mut band = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let k = (wavenumber(i, n), wavenumber(j, n));
                wavenumbers.push(k);
                lattice_norm.push(((k.0 * k.0 + k.1 * k.1) as f64).sqrt());
                partner.push(((n - i) % n) * n + (n - j) % n);
                if k.0.unsigned_abs() < (n / 2) as u64 && k.1.unsigned_abs() < (n / 2) as u64 {
                    band.push(i * n + j);
                }
            }
        }
        let max_norm = lattice_norm.iter().cloned().fold(0.0, f64::max);
        let mut blocks = vec![vec![0usize]];
        let mut j = 0;
        while (1u64 << j) as f64 <= max_norm {
            let lo = (1u64 << j) as f64;
            let hi = (1u64 << (j + 1)) as f64;
            let members: Vec<usize> =
                (0..n * n).filter(|&idx| lattice_norm[idx] >= lo && lattice_norm[idx] < hi).collect();
            blocks.push(members);
            j += 1;
        }
        Self { fft: Fft2::new(n), wavenumbers, lattice_norm, partner, blocks, band }
    }
}

static CACHE: LazyLock<Mutex<HashMap<usize, Arc<Spectral>>>> = LazyLock::new(|| Mutex::new(HashMap::new()));

pub fn spectral(n: usize) -> Arc<Spectral> {
    let mut cache = CACHE.lock().unwrap_or_else(|e| e.into_inner());
    cache.entry(n).or_insert_with(|| Arc::new(Spectral::new(n))).clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_partition_the_lattice() {
        let sp = spectral(16);
        let total: usize = sp.blocks.iter().map(|b| b.len()).sum();
        assert_eq!(total, 256);
        assert_eq!(sp.partner[sp.partner[37]], 37);
    }
}
