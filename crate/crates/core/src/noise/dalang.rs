//! Integrability of the spectral measure against `(1 + |ξ|²)^{-(1-κ)}`
//! and the constant `ν_κ = ∫ R_{2(1-κ)}(x) f(dx)`.

use std::f64::consts::PI;

use super::{CorrelationKernel, KernelKind};
use crate::bessel::BesselKernel;
use crate::error::{Error, Result};
use crate::quadrature::{composite, gl12, gl24};

/// `ν_κ`, or the flag that the defining integral diverges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NuKappa {
    Finite(f64),
    Infinite,
}

impl NuKappa {
    pub fn is_finite(&self) -> bool {
        matches!(self, NuKappa::Finite(_))
    }

    pub fn value(&self) -> f64 {
        match self {
            NuKappa::Finite(v) => *v,
            NuKappa::Infinite => f64::INFINITY,
        }
    }
}

/// Summary of the noise-regularity analysis for one `κ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DalangReport {
    pub kappa_max: f64,
    pub nu_kappa: NuKappa,
    pub kappa_used: f64,
    pub admissible: bool,
}

impl DalangReport {
    pub fn analyze(kernel: &CorrelationKernel, kappa: f64) -> Result<Self> {
        let kappa_max = dalang_sup_kappa(kernel)?;
        let nu = nu_kappa(kernel, kappa)?;
        Ok(Self {
            kappa_max,
            nu_kappa: nu,
            kappa_used: kappa,
            admissible: kappa < kappa_max && nu.is_finite(),
        })
    }
}

/// Supremum of the `κ ∈ (0, 1]` for which `∫ μ(dξ) (1+|ξ|²)^{-(1-κ)}` is
/// finite. Closed form for the built-in kernels; custom densities use
/// [`divergence_threshold`]. White noise in the plane admits no `κ` and
/// yields 0.
pub fn dalang_sup_kappa(kernel: &CorrelationKernel) -> Result<f64> {
    let d = kernel.dim() as f64;
    Ok(match kernel.kind() {
        KernelKind::White => (1.0 - d / 2.0).max(0.0),
        KernelKind::Riesz { alpha } => 1.0 - alpha / 2.0,
        KernelKind::OrnsteinUhlenbeck { .. } | KernelKind::Constant => 1.0,
        KernelKind::CustomSpectralDensity(_) => divergence_threshold(kernel)?,
    })
}

/// Integral of the radial spectral mass times the weight over `[a, b]`,
/// on log-spaced Gauss panels.
fn weighted_mass(kernel: &CorrelationKernel, kappa: f64, a: f64, b: f64, panels: usize) -> Result<f64> {
    let sphere = if kernel.dim() == 1 { 2.0 } else { 2.0 * PI };
    let (la, lb) = (a.ln(), b.ln());
    let width = (lb - la) / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let lo = la + width * i as f64;
        let mut err = None;
        total += gl24().integrate(
            |s| {
                let rho = s.exp();
                match kernel.radial_density(rho) {
                    Ok(m) => {
                        sphere * m * rho.powi(kernel.dim() as i32) * (1.0 + rho * rho).powf(kappa - 1.0)
                    }
                    Err(e) => {
                        err = Some(e);
                        0.0
                    }
                }
            },
            lo,
            lo + width,
        );
        if let Some(e) = err {
            return Err(e);
        }
    }
    Ok(total)
}

/// Numerically located `κ` at which the weighted spectral integral starts
/// to diverge, from the growth of its tail over successive dyadic shells
/// at large frequencies. Tails that are negligible against the bulk of
/// the integral count as convergent.
pub fn divergence_threshold(kernel: &CorrelationKernel) -> Result<f64> {
    const SHELL: f64 = 1e6;
    let diverges = |kappa: f64| -> Result<bool> {
        let near = weighted_mass(kernel, kappa, SHELL, 2.0 * SHELL, 4)?;
        let far = weighted_mass(kernel, kappa, 2.0 * SHELL, 4.0 * SHELL, 4)?;
        let bulk = weighted_mass(kernel, kappa, 1e-8, SHELL, 112)?;
        if near <= 1e-14 * bulk.abs() || near == 0.0 {
            return Ok(false);
        }
        Ok(far >= near)
    };
    if !diverges(1.0)? {
        return Ok(1.0);
    }
    if diverges(0.0)? {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if diverges(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `ν_κ = ∫ R_{2(1-κ)}(x) f(dx)`, or [`NuKappa::Infinite`] when
/// `κ ≥ κ_max`. Function-valued kernels are integrated in real space
/// against the Bessel kernel; custom densities use the equivalent
/// spectral form `(2π)^{-d/2} ∫ μ(dξ) (1+|ξ|²)^{-(1-κ)}`.
pub fn nu_kappa(kernel: &CorrelationKernel, kappa: f64) -> Result<NuKappa> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidParameter(format!("kappa must lie in (0, 1), got {kappa}")));
    }
    if kappa >= dalang_sup_kappa(kernel)? {
        return Ok(NuKappa::Infinite);
    }
    let order = 2.0 * (1.0 - kappa);
    let bessel = BesselKernel::new(order, kernel.dim())?;
    let value = match kernel.kind() {
        KernelKind::White => bessel
            .value_at_origin()
            .ok_or_else(|| Error::QuadratureNonconvergence("white-noise kernel is unbounded".into()))?,
        KernelKind::Constant => 1.0,
        KernelKind::Riesz { .. } | KernelKind::OrnsteinUhlenbeck { .. } => {
            real_space_moment(&bessel, kernel)?
        }
        KernelKind::CustomSpectralDensity(_) => spectral_moment(kernel, kappa)?,
    };
    if !value.is_finite() {
        return Err(Error::QuadratureNonconvergence(format!("nu_kappa evaluated to {value}")));
    }
    Ok(NuKappa::Finite(value))
}

/// `∫_{ℝ^d} R(|x|) f(|x|) dx` by radial quadrature: dyadic Gauss pieces
/// down to a small radius and a local power-law fit for the remainder.
fn real_space_moment(bessel: &BesselKernel, kernel: &CorrelationKernel) -> Result<f64> {
    let d = kernel.dim();
    let sphere = if d == 1 { 2.0 } else { 2.0 * PI };
    let g = |r: f64| {
        sphere * r.powi(d as i32 - 1) * bessel.radial(r) * kernel.correlation(r).unwrap_or(0.0)
    };
    let mut total = composite(&g, 1.0, 8.0, 28) + composite(&g, 8.0, 80.0, 36);
    let mut hi = 1.0;
    const SMALLEST: f64 = 1e-12;
    while hi > SMALLEST {
        let lo = 0.5 * hi;
        total += gl12().integrate(g, lo, hi);
        hi = lo;
    }
    let p = (g(hi) / g(0.5 * hi)).log2();
    if !(p > -1.0) {
        return Err(Error::QuadratureNonconvergence(format!(
            "integrand behaves like r^{p:.3} at the origin"
        )));
    }
    total += g(hi) * hi / (p + 1.0);
    Ok(total)
}

/// `(2π)^{-d/2} ∫ μ(dξ) (1+|ξ|²)^{-(1-κ)}` with a geometric tail closure.
fn spectral_moment(kernel: &CorrelationKernel, kappa: f64) -> Result<f64> {
    let d = kernel.dim() as f64;
    let mut total = weighted_mass(kernel, kappa, 1e-12, 1.0, 96)?;
    let mut a = 1.0;
    let mut prev_piece = f64::NAN;
    let mut prev_ratio = f64::NAN;
    for k in 0..200 {
        let piece = weighted_mass(kernel, kappa, a, 2.0 * a, 2)?;
        total += piece;
        if piece <= 1e-15 * total {
            return Ok((2.0 * PI).powf(-d / 2.0) * total);
        }
        let ratio = piece / prev_piece;
        if k >= 10 && ratio < 1.0 && (ratio - prev_ratio).abs() < 1e-6 {
            total += piece * ratio / (1.0 - ratio);
            return Ok((2.0 * PI).powf(-d / 2.0) * total);
        }
        prev_ratio = ratio;
        prev_piece = piece;
        a *= 2.0;
    }
    Err(Error::QuadratureNonconvergence(
        "spectral integral for nu_kappa did not settle".into(),
    ))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;

    #[test]
    fn analytic_thresholds() {
        let w = CorrelationKernel::white(1).unwrap();
        assert_eq!(dalang_sup_kappa(&w).unwrap(), 0.5);
        let r = CorrelationKernel::riesz(0.5, 1).unwrap();
        assert_eq!(dalang_sup_kappa(&r).unwrap(), 0.75);
        let c = CorrelationKernel::constant(1).unwrap();
        assert_eq!(dalang_sup_kappa(&c).unwrap(), 1.0);
        assert_eq!(dalang_sup_kappa(&CorrelationKernel::white(2).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn numeric_thresholds_agree_with_closed_forms() {
        for (k, want) in [
            (CorrelationKernel::white(1).unwrap(), 0.5),
            (CorrelationKernel::riesz(0.5, 1).unwrap(), 0.75),
            (CorrelationKernel::riesz(1.2, 2).unwrap(), 0.4),
            (CorrelationKernel::ornstein_uhlenbeck(1.0, 1).unwrap(), 1.0),
            (CorrelationKernel::constant(1).unwrap(), 1.0),
        ] {
            let got = divergence_threshold(&k).unwrap();
            assert!((got - want).abs() < 0.02, "{k:?}: {got} vs {want}");
        }
    }

    #[test]
    fn white_nu_matches_fourier_representation() {
        // R_{1.2}(0) = (1/2π) ∫_ℝ (1+ξ²)^{-0.6} dξ.
        let k = CorrelationKernel::white(1).unwrap();
        let nu = nu_kappa(&k, 0.4).unwrap().value();
        // The integrand decays like ξ^{-1.2}; close it analytically beyond 1e8.
        let cut = 1e8f64;
        let head = {
            let g = |s: f64| {
                let x = s.exp();
                x * (1.0 + x * x).powf(-0.6)
            };
            crate::quadrature::graded_to_zero(|x| (1.0 + x * x).powf(-0.6), 1.0)
                + composite(&g, 0.0, cut.ln(), 400)
        };
        let tail = cut.powf(-0.2) / 0.2;
        let oracle = (head + tail) / PI;
        assert!((nu - oracle).abs() < 1e-5 * oracle, "{nu} vs {oracle}");
    }

    #[test]
    fn divergent_cases_are_flagged() {
        let k = CorrelationKernel::white(1).unwrap();
        assert_eq!(nu_kappa(&k, 0.6).unwrap(), NuKappa::Infinite);
        let r = CorrelationKernel::riesz(0.5, 1).unwrap();
        assert_eq!(nu_kappa(&r, 0.8).unwrap(), NuKappa::Infinite);
        assert!(nu_kappa(&k, 1.0).is_err());
    }

    #[test]
    fn constant_nu_is_total_mass_of_kernel() {
        let k = CorrelationKernel::constant(1).unwrap();
        assert_eq!(nu_kappa(&k, 0.9).unwrap(), NuKappa::Finite(1.0));
        // Independent check: ∫ R_{0.2}(x) dx over ℝ by radial quadrature.
        let b = BesselKernel::new(0.2, 1).unwrap();
        let g = |r: f64| 2.0 * b.radial(r);
        let mass = crate::quadrature::graded_to_zero(g, 1.0) + composite(&g, 1.0, 80.0, 80);
        assert!((mass - 1.0).abs() < 1e-8, "{mass}");
    }

    #[test]
    fn real_space_and_spectral_forms_agree() {
        // The same Riesz kernel expressed as a custom spectral density.
        let alpha = 0.5;
        let c = super::super::riesz_constant(alpha, 1);
        let riesz = CorrelationKernel::riesz(alpha, 1).unwrap();
        let custom = CorrelationKernel::custom(
            Arc::new(move |xi: &[f64]| c * xi[0].abs().powf(alpha - 1.0)),
            1,
        )
        .unwrap();
        for kappa in [0.2, 0.5] {
            let a = nu_kappa(&riesz, kappa).unwrap().value();
            let b = nu_kappa(&custom, kappa).unwrap().value();
            assert!((a - b).abs() < 1e-4 * a, "κ={kappa}: {a} vs {b}");
        }
        let ou = CorrelationKernel::ornstein_uhlenbeck(2.0, 1).unwrap();
        let gauss = CorrelationKernel::custom(
            Arc::new(|xi: &[f64]| (-xi[0] * xi[0] / 4.0).exp() / 2f64.sqrt()),
            1,
        )
        .unwrap();
        let a = nu_kappa(&ou, 0.3).unwrap().value();
        let b = nu_kappa(&gauss, 0.3).unwrap().value();
        assert!((a - b).abs() < 1e-6 * a, "{a} vs {b}");
    }

    #[test]
    fn report_flags_admissibility() {
        let k = CorrelationKernel::white(1).unwrap();
        let ok = DalangReport::analyze(&k, 0.49).unwrap();
        assert!(ok.admissible && ok.nu_kappa.is_finite());
        let bad = DalangReport::analyze(&k, 0.6).unwrap();
        assert!(!bad.admissible);
        assert_eq!(bad.kappa_max, 0.5);
    }
}
