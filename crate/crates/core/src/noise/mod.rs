//! Spatial correlation kernels of the driving noise, their spectral
//! measures, the Dalang-type integrability analysis, and synthesis of
//! grid-sampled noise increments.
//!
//! The spectral measure of a correlation `f` is taken with the convention
//! `μ = (2π)^{-d/2} ∫ e^{-iξ·x} f(dx)`, so that white noise has the flat
//! density `(2π)^{-d/2}` and `f(x) = (2π)^{-d/2} ∫ e^{iξ·x} μ(dξ)`.

mod dalang;
mod grid;

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

pub use dalang::{dalang_sup_kappa, divergence_threshold, nu_kappa, DalangReport, NuKappa};
pub use grid::{NoiseGrid, DEFAULT_PERIOD, DEFAULT_POINTS};
pub(crate) use grid::{multi_index, signed_wavenumber};

use crate::error::{Error, Result};
use crate::interp::UniformPchip;
use crate::quadrature::{fourier_cos_integral, hankel0_integral};
use crate::special::gamma;

/// User-supplied spectral density `ξ ↦ dμ/dξ`.
pub type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// The variants of correlation kernel supported by the laboratory.
#[derive(Clone)]
pub enum KernelKind {
    /// `f = δ₀`.
    White,
    /// `f(x) = |x|^{-α}` with `α ∈ (0, d)`.
    Riesz { alpha: f64 },
    /// `f(x) = exp(-|x|^e)` with `e ∈ (0, 2]`.
    OrnsteinUhlenbeck { exponent: f64 },
    /// `f ≡ 1`.
    Constant,
    /// A nonnegative spectral density given directly.
    CustomSpectralDensity(DensityFn),
}

impl fmt::Debug for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelKind::White => write!(f, "White"),
            KernelKind::Riesz { alpha } => write!(f, "Riesz({alpha})"),
            KernelKind::OrnsteinUhlenbeck { exponent } => write!(f, "OrnsteinUhlenbeck({exponent})"),
            KernelKind::Constant => write!(f, "Constant"),
            KernelKind::CustomSpectralDensity(_) => write!(f, "CustomSpectralDensity"),
        }
    }
}

/// Value of the spectral measure at a frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralValue {
    /// Density of the absolutely continuous part.
    pub density: f64,
    /// Mass of an atom at the origin, if the measure has one.
    pub atom_at_origin: Option<f64>,
}

/// A spatial correlation kernel in dimension 1 or 2.
#[derive(Clone)]
pub struct CorrelationKernel {
    kind: KernelKind,
    dim: usize,
    ou_table: Arc<OnceLock<Result<SpectralTable>>>,
}

impl fmt::Debug for CorrelationKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CorrelationKernel")
            .field("kind", &self.kind)
            .field("dim", &self.dim)
            .finish()
    }
}

impl CorrelationKernel {
    pub fn new(kind: KernelKind, dim: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidDimension(dim));
        }
        match kind {
            KernelKind::Riesz { alpha } if !(alpha > 0.0 && alpha < dim as f64) => {
                return Err(Error::InvalidKernel(format!(
                    "Riesz exponent must lie in (0, {dim}), got {alpha}"
                )));
            }
            KernelKind::OrnsteinUhlenbeck { exponent } if !(exponent > 0.0 && exponent <= 2.0) => {
                return Err(Error::InvalidKernel(format!(
                    "Ornstein-Uhlenbeck exponent must lie in (0, 2], got {exponent}"
                )));
            }
            _ => {}
        }
        Ok(Self {
            kind,
            dim,
            ou_table: Arc::new(OnceLock::new()),
        })
    }

    pub fn white(dim: usize) -> Result<Self> {
        Self::new(KernelKind::White, dim)
    }

    pub fn riesz(alpha: f64, dim: usize) -> Result<Self> {
        Self::new(KernelKind::Riesz { alpha }, dim)
    }

    pub fn ornstein_uhlenbeck(exponent: f64, dim: usize) -> Result<Self> {
        Self::new(KernelKind::OrnsteinUhlenbeck { exponent }, dim)
    }

    pub fn constant(dim: usize) -> Result<Self> {
        Self::new(KernelKind::Constant, dim)
    }

    pub fn custom(density: DensityFn, dim: usize) -> Result<Self> {
        Self::new(KernelKind::CustomSpectralDensity(density), dim)
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Short label such as `Riesz(0.5), d=1`.
    pub fn describe(&self) -> String {
        format!("{:?}, d={}", self.kind, self.dim)
    }

    /// `f(x)` for kernels that are functions; `None` for white noise.
    pub fn correlation(&self, r: f64) -> Option<f64> {
        match &self.kind {
            KernelKind::White | KernelKind::CustomSpectralDensity(_) => None,
            KernelKind::Riesz { alpha } => Some(r.abs().powf(-alpha)),
            KernelKind::OrnsteinUhlenbeck { exponent } => Some((-r.abs().powf(*exponent)).exp()),
            KernelKind::Constant => Some(1.0),
        }
    }

    /// `dμ/dξ` at `xi`, with the atom at the origin reported separately.
    pub fn spectral_density(&self, xi: &[f64]) -> Result<SpectralValue> {
        if xi.len() != self.dim {
            return Err(Error::InvalidParameter(format!(
                "frequency has {} coordinates, kernel dimension is {}",
                xi.len(),
                self.dim
            )));
        }
        let rho = xi.iter().map(|c| c * c).sum::<f64>().sqrt();
        let d = self.dim as f64;
        let density = match &self.kind {
            KernelKind::White => (2.0 * PI).powf(-d / 2.0),
            KernelKind::Riesz { alpha } => {
                if rho == 0.0 {
                    return Err(Error::SpectralSingularity);
                }
                riesz_constant(*alpha, self.dim) * rho.powf(alpha - d)
            }
            KernelKind::OrnsteinUhlenbeck { .. } => self.ou_spectral_table()?.eval(rho),
            KernelKind::Constant => {
                return Ok(SpectralValue {
                    density: 0.0,
                    atom_at_origin: Some((2.0 * PI).powf(d / 2.0)),
                })
            }
            KernelKind::CustomSpectralDensity(g) => {
                let v = g(xi);
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidKernel(format!(
                        "custom spectral density is {v} at {xi:?}"
                    )));
                }
                v
            }
        };
        Ok(SpectralValue {
            density,
            atom_at_origin: None,
        })
    }

    /// Radial profile of the density for isotropic kernels, or the
    /// angular average for custom densities.
    pub(crate) fn radial_density(&self, rho: f64) -> Result<f64> {
        match &self.kind {
            KernelKind::CustomSpectralDensity(_) => {
                if self.dim == 1 {
                    let a = self.spectral_density(&[rho])?.density;
                    let b = self.spectral_density(&[-rho])?.density;
                    Ok(0.5 * (a + b))
                } else {
                    const ANGLES: usize = 64;
                    let mut acc = 0.0;
                    for k in 0..ANGLES {
                        let th = 2.0 * PI * (k as f64 + 0.5) / ANGLES as f64;
                        acc += self.spectral_density(&[rho * th.cos(), rho * th.sin()])?.density;
                    }
                    Ok(acc / ANGLES as f64)
                }
            }
            KernelKind::Constant => Ok(0.0),
            _ => {
                let mut xi = vec![0.0; self.dim];
                xi[0] = rho;
                Ok(self.spectral_density(&xi)?.density)
            }
        }
    }

    fn ou_spectral_table(&self) -> Result<&SpectralTable> {
        let KernelKind::OrnsteinUhlenbeck { exponent } = self.kind else {
            unreachable!("spectral table requested for a non-OU kernel");
        };
        self.ou_table
            .get_or_init(|| SpectralTable::ornstein_uhlenbeck(exponent, self.dim))
            .as_ref()
            .map_err(Clone::clone)
    }
}

/// `c(α, d)` in `μ(ξ) = c |ξ|^{α-d}` for `f = |x|^{-α}`.
pub fn riesz_constant(alpha: f64, dim: usize) -> f64 {
    let d = dim as f64;
    2f64.powf(d / 2.0 - alpha) * gamma((d - alpha) / 2.0) / gamma(alpha / 2.0)
}

/// Tabulated radial spectral density, interpolated in `log ρ` with a
/// power-law continuation beyond the last node.
#[derive(Debug, Clone)]
struct SpectralTable {
    at_zero: f64,
    log_values: UniformPchip,
    tail_slope: f64,
}

impl SpectralTable {
    const RHO_MIN: f64 = 1e-3;
    const RHO_MAX: f64 = 1e5;
    const POINTS: usize = 3072;
    const FLOOR: f64 = -700.0;

    fn ornstein_uhlenbeck(exponent: f64, dim: usize) -> Result<Self> {
        let f = move |r: f64| (-r.powf(exponent)).exp();
        let transform = |rho: f64| -> Result<f64> {
            if dim == 1 {
                // (2π)^{-1/2} ∫_ℝ e^{-iξx} f(|x|) dx = (2/π)^{1/2} ∫_0^∞ f cos(ξx) dx
                Ok((2.0 / PI).sqrt() * fourier_cos_integral(f, rho)?)
            } else {
                // (2π)^{-1} ∫_{ℝ²} e^{-iξ·x} f(|x|) dx = ∫_0^∞ f(r) J0(ρr) r dr
                hankel0_integral(f, rho)
            }
        };
        let lo = Self::RHO_MIN.ln();
        let step = (Self::RHO_MAX.ln() - lo) / (Self::POINTS - 1) as f64;
        let mut values = Vec::with_capacity(Self::POINTS);
        let mut underflow = false;
        for i in 0..Self::POINTS {
            let v = if underflow {
                0.0
            } else {
                transform((lo + step * i as f64).exp())?
            };
            // Quadrature noise below ~1e-14 relative is not meaningful.
            if v <= 1e-16 * values.first().map_or(1.0, |&v0: &f64| v0.exp()) {
                underflow = true;
            }
            values.push(if v > 0.0 { v.ln().max(Self::FLOOR) } else { Self::FLOOR });
        }
        let n = values.len();
        // Fit the continuation over roughly the last octave of the table.
        let span = ((2f64.ln() / step) as usize).min(n - 1);
        let tail_slope = if underflow {
            f64::NEG_INFINITY
        } else {
            (values[n - 1] - values[n - 1 - span]) / (step * span as f64)
        };
        Ok(Self {
            at_zero: transform(0.0)?,
            log_values: UniformPchip::new(lo, step, values),
            tail_slope,
        })
    }

    fn eval(&self, rho: f64) -> f64 {
        if rho < Self::RHO_MIN {
            // The transform is smooth and even at the origin: blend
            // quadratically between μ(0) and the first node.
            let first = self.log_values.values()[0].exp();
            let t = (rho / Self::RHO_MIN).powi(2);
            return self.at_zero + (first - self.at_zero) * t;
        }
        let x = rho.ln();
        let last = self.log_values.last();
        if x > last {
            if self.tail_slope == f64::NEG_INFINITY {
                return 0.0;
            }
            let v = self.log_values.values()[self.log_values.values().len() - 1];
            return (v + self.tail_slope * (x - last)).exp();
        }
        let v = self.log_values.eval(x);
        if v <= Self::FLOOR {
            0.0
        } else {
            v.exp()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_parameters() {
        assert!(CorrelationKernel::riesz(1.0, 1).is_err());
        assert!(CorrelationKernel::riesz(1.5, 2).is_ok());
        assert!(CorrelationKernel::ornstein_uhlenbeck(2.5, 1).is_err());
        assert!(CorrelationKernel::white(3).is_err());
    }

    #[test]
    fn white_density_is_flat() {
        let k = CorrelationKernel::white(1).unwrap();
        let v = k.spectral_density(&[3.7]).unwrap();
        assert!((v.density - (2.0 * PI).powf(-0.5)).abs() < 1e-15);
        assert_eq!(v.atom_at_origin, None);
        let k2 = CorrelationKernel::white(2).unwrap();
        assert!((k2.spectral_density(&[1.0, 2.0]).unwrap().density - 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn constant_kernel_is_an_atom() {
        let k = CorrelationKernel::constant(1).unwrap();
        let v = k.spectral_density(&[0.4]).unwrap();
        assert_eq!(v.density, 0.0);
        assert!((v.atom_at_origin.unwrap() - (2.0 * PI).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn riesz_is_singular_at_zero() {
        let k = CorrelationKernel::riesz(0.5, 1).unwrap();
        assert_eq!(k.spectral_density(&[0.0]).unwrap_err(), Error::SpectralSingularity);
    }

    #[test]
    fn riesz_density_matches_cosine_transform() {
        // μ(ξ) = (2/π)^{1/2} ∫_0^∞ x^{-α} cos(ξx) dx, computed by quadrature.
        let alpha = 0.5;
        let k = CorrelationKernel::riesz(alpha, 1).unwrap();
        for xi in [0.5, 2.0] {
            let oracle = (2.0 / PI).sqrt()
                * fourier_cos_integral(|x: f64| x.powf(-alpha), xi).unwrap();
            let v = k.spectral_density(&[xi]).unwrap().density;
            assert!((v - oracle).abs() < 1e-8 * oracle, "{v} vs {oracle}");
        }
    }

    #[test]
    fn gaussian_kernel_has_gaussian_spectrum() {
        let k = CorrelationKernel::ornstein_uhlenbeck(2.0, 1).unwrap();
        for xi in [0.0f64, 1e-4, 0.3, 1.0, 4.0] {
            let exact = (-xi * xi / 4.0).exp() / 2f64.sqrt();
            let v = k.spectral_density(&[xi]).unwrap().density;
            assert!((v - exact).abs() < 1e-8, "ξ={xi}: {v} vs {exact}");
        }
        let k2 = CorrelationKernel::ornstein_uhlenbeck(2.0, 2).unwrap();
        for xi in [0.5f64, 2.0] {
            let exact = (-xi * xi / 4.0).exp() / 2.0;
            let v = k2.spectral_density(&[xi, 0.0]).unwrap().density;
            assert!((v - exact).abs() < 1e-8, "ξ={xi}: {v} vs {exact}");
        }
    }

    #[test]
    fn exponential_kernel_has_cauchy_spectrum() {
        // f = e^{-|x|}: μ(ξ) = (2/π)^{1/2} / (1 + ξ²).
        let k = CorrelationKernel::ornstein_uhlenbeck(1.0, 1).unwrap();
        for xi in [0.0, 0.1, 1.0, 30.0, 5e3, 1e6] {
            let exact = (2.0 / PI).sqrt() / (1.0 + xi * xi);
            let v = k.spectral_density(&[xi]).unwrap().density;
            assert!((v - exact).abs() < 1e-6 * exact, "ξ={xi}: {v} vs {exact}");
        }
    }

    #[test]
    fn custom_density_rejects_negative_values() {
        let k = CorrelationKernel::custom(Arc::new(|xi: &[f64]| xi[0] - 1.0), 1).unwrap();
        assert!(matches!(k.spectral_density(&[0.0]), Err(Error::InvalidKernel(_))));
        assert!(k.spectral_density(&[2.0]).is_ok());
    }
}
