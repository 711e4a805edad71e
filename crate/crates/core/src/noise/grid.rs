//! Spectral synthesis of noise increments on a periodic grid.
//!
//! On the torus of period `L` with `n` points per axis, the field
//! `ΔF(x) = √dt Σ_k a_k Z_k e^{iξ_k·x}` with Hermitian standard Gaussians
//! `Z_k` has covariance `dt Σ_k a_k² e^{iξ_k·(x-y)}`. Choosing
//! `a_k² = (2π)^{-d/2} μ(cell_k)`, the spectral mass of the frequency cell
//! around `ξ_k = 2πk/L`, makes this a Riemann sum for `dt f(x - y)`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{riesz_constant, CorrelationKernel, KernelKind};
use crate::error::{Error, Result};

pub const DEFAULT_PERIOD: f64 = 16.0;
pub const DEFAULT_POINTS: usize = 256;

/// Immutable spectral table for one kernel on one periodic grid.
#[derive(Clone)]
pub struct NoiseGrid {
    dim: usize,
    points: usize,
    period: f64,
    seed: u64,
    amplitude: Vec<f64>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for NoiseGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NoiseGrid")
            .field("dim", &self.dim)
            .field("points", &self.points)
            .field("period", &self.period)
            .field("seed", &self.seed)
            .finish()
    }
}

/// Signed wavenumber of FFT index `k` on an `n`-point axis.
pub(crate) fn signed_wavenumber(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

impl NoiseGrid {
    pub fn new(kernel: &CorrelationKernel, points: usize, period: f64, seed: u64) -> Result<Self> {
        if points < 4 || points % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "grid needs an even number of points per axis (at least 4), got {points}"
            )));
        }
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidParameter(format!("period must be positive, got {period}")));
        }
        let dim = kernel.dim();
        let d = dim as f64;
        let total = points.pow(dim as u32);
        let dxi = 2.0 * PI / period;
        let scale = (2.0 * PI).powf(-d / 2.0);
        let cell = dxi.powi(dim as i32);
        let mut amplitude = vec![0.0; total];
        for (idx, a) in amplitude.iter_mut().enumerate() {
            let xi: Vec<f64> = multi_index(idx, points, dim)
                .iter()
                .map(|&k| dxi * signed_wavenumber(k, points))
                .collect();
            let mass = if idx == 0 {
                zero_cell_mass(kernel, dxi)?
            } else {
                let v = kernel.spectral_density(&xi)?;
                v.density * cell
            };
            *a = (scale * mass).sqrt();
        }
        let inverse = FftPlanner::new().plan_fft_inverse(points);
        Ok(Self {
            dim,
            points,
            period,
            seed,
            amplitude,
            inverse,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.points as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Number of grid nodes, `n^d`.
    pub fn len(&self) -> usize {
        self.amplitude.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitude.is_empty()
    }

    /// Spectral amplitudes `a_k` in FFT index order.
    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitude
    }

    /// Exact grid covariance `Σ_k a_k² cos(ξ_k r)` at lag `r` (in cells)
    /// along the first axis, per unit time.
    pub fn grid_covariance(&self, lag: usize) -> f64 {
        let n = self.points;
        let dxi = 2.0 * PI / self.period;
        let h = self.spacing();
        self.amplitude
            .iter()
            .enumerate()
            .map(|(idx, a)| {
                let k = multi_index(idx, n, self.dim)[0];
                a * a * (dxi * signed_wavenumber(k, n) * lag as f64 * h).cos()
            })
            .sum()
    }

    /// Random stream for one time step of this grid's path.
    pub fn rng(&self, step: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(step);
        rng
    }

    /// Increment for time step `step`; a pure function of (grid, step, dt).
    pub fn increment(&self, step: u64, dt: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.sample_increment(dt, &mut self.rng(step), &mut out);
        out
    }

    /// Draws one increment of duration `dt` into `out`.
    pub fn sample_increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R, out: &mut [f64]) {
        assert_eq!(out.len(), self.len(), "output buffer has the wrong size");
        let mut spec = self.hermitian_noise(rng);
        let sdt = dt.sqrt();
        for (z, a) in spec.iter_mut().zip(&self.amplitude) {
            *z *= a * sdt;
        }
        self.inverse_transform(&mut spec);
        for (o, z) in out.iter_mut().zip(&spec) {
            debug_assert!(z.im.abs() <= 1e-12 * (1.0 + z.re.abs()), "non-real synthesis");
            *o = z.re;
        }
    }

    /// Standard complex Gaussians with `Z_{-k} = conj(Z_k)`. Pairs are
    /// visited in increasing index order; self-conjugate modes are real.
    fn hermitian_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Complex64> {
        let mut spec = vec![Complex64::new(0.0, 0.0); self.len()];
        let half = std::f64::consts::FRAC_1_SQRT_2;
        for idx in 0..spec.len() {
            let partner = self.partner(idx);
            if partner == idx {
                spec[idx] = Complex64::new(rng.sample(StandardNormal), 0.0);
            } else if idx < partner {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                spec[idx] = Complex64::new(half * re, half * im);
                spec[partner] = spec[idx].conj();
            }
        }
        spec
    }

    fn partner(&self, idx: usize) -> usize {
        let n = self.points;
        let mut out = 0;
        for k in multi_index(idx, n, self.dim) {
            out = out * n + (n - k) % n;
        }
        out
    }

    fn inverse_transform(&self, spec: &mut [Complex64]) {
        let n = self.points;
        if self.dim == 1 {
            self.inverse.process(spec);
            return;
        }
        // Rows are contiguous (second axis); then transform the columns.
        for row in spec.chunks_mut(n) {
            self.inverse.process(row);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            for i in 0..n {
                column[i] = spec[i * n + j];
            }
            self.inverse.process(&mut column);
            for i in 0..n {
                spec[i * n + j] = column[i];
            }
        }
    }
}

/// Splits a row-major index into per-axis indices (first axis slowest).
pub(crate) fn multi_index(idx: usize, n: usize, dim: usize) -> Vec<usize> {
    if dim == 1 {
        vec![idx]
    } else {
        vec![idx / n, idx % n]
    }
}

/// Spectral mass of the frequency cell around the origin. Densities that
/// are singular at 0 are integrated exactly over the cell (a symmetric
/// interval in one dimension, the disc of equal area in two).
fn zero_cell_mass(kernel: &CorrelationKernel, dxi: f64) -> Result<f64> {
    let dim = kernel.dim();
    let d = dim as f64;
    match kernel.kind() {
        KernelKind::Constant => Ok((2.0 * PI).powf(d / 2.0)),
        KernelKind::Riesz { alpha } => {
            let c = riesz_constant(*alpha, dim);
            if dim == 1 {
                Ok(2.0 * c * (0.5 * dxi).powf(*alpha) / alpha)
            } else {
                let rho0 = dxi / PI.sqrt();
                Ok(2.0 * PI * c * rho0.powf(*alpha) / alpha)
            }
        }
        _ => {
            let v = kernel.spectral_density(&vec![0.0; dim])?;
            if !v.density.is_finite() {
                return Err(Error::SpectralSingularity);
            }
            Ok(v.density * dxi.powi(dim as i32) + v.atom_at_origin.unwrap_or(0.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_odd_grids() {
        let k = CorrelationKernel::white(1).unwrap();
        assert!(NoiseGrid::new(&k, 255, 16.0, 1).is_err());
        assert!(NoiseGrid::new(&k, 2, 16.0, 1).is_err());
    }

    #[test]
    fn white_noise_has_unit_density_per_cell() {
        let k = CorrelationKernel::white(1).unwrap();
        let g = NoiseGrid::new(&k, 64, 16.0, 3).unwrap();
        // Grid variance per unit time is Σ a_k² = n / L = 1 / h.
        assert!((g.grid_covariance(0) - 1.0 / g.spacing()).abs() < 1e-12);
        assert!(g.grid_covariance(3).abs() < 1e-12);
        let k2 = CorrelationKernel::white(2).unwrap();
        let g2 = NoiseGrid::new(&k2, 16, 4.0, 3).unwrap();
        assert!((g2.grid_covariance(0) - 1.0 / g2.cell_volume()).abs() < 1e-10);
    }

    #[test]
    fn increments_are_reproducible() {
        let k = CorrelationKernel::riesz(0.5, 1).unwrap();
        let g = NoiseGrid::new(&k, 32, 16.0, 99).unwrap();
        assert_eq!(g.increment(7, 0.1), g.increment(7, 0.1));
        assert_ne!(g.increment(7, 0.1), g.increment(8, 0.1));
        let other = NoiseGrid::new(&k, 32, 16.0, 100).unwrap();
        assert_ne!(g.increment(7, 0.1), other.increment(7, 0.1));
    }

    #[test]
    fn hermitian_pairs_are_conjugate() {
        for dim in [1, 2] {
            let k = CorrelationKernel::white(dim).unwrap();
            let g = NoiseGrid::new(&k, 8, 1.0, 5).unwrap();
            let z = g.hermitian_noise(&mut g.rng(0));
            for idx in 0..z.len() {
                let p = g.partner(idx);
                assert_eq!(z[p], z[idx].conj());
            }
        }
    }

    #[test]
    fn constant_kernel_gives_flat_fields() {
        let k = CorrelationKernel::constant(1).unwrap();
        let g = NoiseGrid::new(&k, 16, 16.0, 1).unwrap();
        let x = g.increment(0, 0.01);
        for v in &x {
            assert!((v - x[0]).abs() < 1e-15);
        }
        assert!((g.grid_covariance(5) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn planar_fields_are_real_and_finite() {
        let k = CorrelationKernel::ornstein_uhlenbeck(1.0, 2).unwrap();
        let g = NoiseGrid::new(&k, 16, 8.0, 1).unwrap();
        let x = g.increment(0, 0.5);
        assert_eq!(x.len(), 256);
        assert!(x.iter().all(|v| v.is_finite()));
    }
}
