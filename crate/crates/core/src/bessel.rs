//! Bessel potential kernels `R_n`, the convolution kernels of
//! `(1 - Δ)^{-n/2}` on ℝ^d for d ∈ {1, 2}.
//!
//! With the Fourier convention `û(ξ) = ∫ e^{-iξ·x} u(x) dx` the kernel has
//! transform `(1 + |ξ|²)^{-n/2}`, unit mass, and satisfies the semigroup
//! law `R_n ∗ R_m = R_{n+m}`. Values are computed from the subordination
//! representation
//!
//! ```text
//! R_n(x) = (4π)^{-d/2} / Γ(n/2) ∫_0^∞ t^{(n-d)/2 - 1} e^{-t - |x|²/(4t)} dt,
//! ```
//!
//! which after `t = e^u` has a smooth, doubly-exponentially decaying
//! integrand that the trapezoidal rule integrates to near machine
//! precision. Near the origin the kernel behaves like `|x|^{n-d}` for
//! `n < d`, like `log(1/|x|)` for `n = d`, and is bounded for `n > d`;
//! away from it, it decays like `e^{-|x|}`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::interp::UniformPchip;
use crate::quadrature::{composite, gl24, graded_to_zero};
#[cfg(test)]
use crate::quadrature::{fourier_cos_integral, hankel0_integral};
use crate::special::{gamma, ln_gamma};

/// Radius below which singular kernels refuse to evaluate.
pub const SINGULAR_CUTOFF: f64 = 1e-6;

const TRAPEZOID_STEP: f64 = 0.1;
const LOG_DROP: f64 = 42.0;

/// A Bessel potential kernel of positive order in dimension 1 or 2.
#[derive(Debug)]
pub struct BesselKernel {
    order: f64,
    dim: usize,
    table: OnceLock<RadialTable>,
}

impl Clone for BesselKernel {
    fn clone(&self) -> Self {
        Self {
            order: self.order,
            dim: self.dim,
            table: OnceLock::new(),
        }
    }
}

impl BesselKernel {
    pub fn new(order: f64, dim: usize) -> Result<Self> {
        if !(order > 0.0) || !order.is_finite() {
            return Err(Error::InvalidOrder(order));
        }
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidDimension(dim));
        }
        Ok(Self {
            order,
            dim,
            table: OnceLock::new(),
        })
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True when the kernel is unbounded at the origin (`n ≤ d`).
    pub fn is_singular_at_origin(&self) -> bool {
        self.order <= self.dim as f64
    }

    /// `R_n(x)` for a point `x ∈ ℝ^d`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::InvalidParameter(format!(
                "point has {} coordinates, kernel dimension is {}",
                x.len(),
                self.dim
            )));
        }
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        self.eval_radius(r)
    }

    /// `R_n` as a function of `|x|`.
    pub fn eval_radius(&self, r: f64) -> Result<f64> {
        let r = r.abs();
        if self.is_singular_at_origin() && r < SINGULAR_CUTOFF {
            return Err(Error::SingularInput {
                order: self.order,
                dim: self.dim,
                radius: r,
            });
        }
        Ok(self.radial(r))
    }

    /// Value at the origin, finite only when `n > d`.
    pub fn value_at_origin(&self) -> Option<f64> {
        let n = self.order;
        let d = self.dim as f64;
        (n > d).then(|| (4.0 * PI).powf(-d / 2.0) * gamma((n - d) / 2.0) / gamma(n / 2.0))
    }

    /// Constant `A` in `R_n(x) ≈ A |x|^{n-d}` as `x → 0`, for `n < d`.
    pub fn origin_coefficient(&self) -> Option<f64> {
        let n = self.order;
        let d = self.dim as f64;
        (n < d).then(|| {
            gamma((d - n) / 2.0) / (2f64.powf(n) * PI.powf(d / 2.0) * gamma(n / 2.0))
        })
    }

    /// Unchecked radial evaluation; `r = 0` returns `+∞` for singular kernels.
    pub(crate) fn radial(&self, r: f64) -> f64 {
        if r == 0.0 {
            return self.value_at_origin().unwrap_or(f64::INFINITY);
        }
        subordination_integral(self.order, self.dim, r)
    }

    /// Tabulated kernel, built on first use.
    pub fn table(&self) -> &RadialTable {
        self.table.get_or_init(|| RadialTable::build(self))
    }

    /// Fast evaluation through the cached radial table, falling back to
    /// direct quadrature outside its range.
    pub fn eval_cached(&self, r: f64) -> f64 {
        self.table().eval(r).unwrap_or_else(|| self.radial(r))
    }
}

fn subordination_integral(order: f64, dim: usize, r: f64) -> f64 {
    let d = dim as f64;
    let a = 0.5 * (order - d);
    // Work with ln c, c = r²/4, so that tiny radii do not underflow.
    let ln_c = 2.0 * r.ln() - 4f64.ln();
    let phi = |u: f64| a * u - u.exp() - (ln_c - u).exp();
    // Peak of the concave exponent: z² - a z - c = 0 with z = e^u.
    let u_star = if a >= 0.0 {
        let root = (a * a + 4.0 * ln_c.exp()).sqrt();
        (0.5 * (a + root)).ln()
    } else {
        let root = (a * a + 4.0 * ln_c.exp()).sqrt();
        2f64.ln() + ln_c - (root - a).ln()
    };
    let peak = phi(u_star);
    let mut sum = 1.0;
    let mut u = u_star;
    loop {
        u += TRAPEZOID_STEP;
        let e = phi(u) - peak;
        if e < -LOG_DROP {
            break;
        }
        sum += e.exp();
    }
    u = u_star;
    loop {
        u -= TRAPEZOID_STEP;
        let e = phi(u) - peak;
        if e < -LOG_DROP {
            break;
        }
        sum += e.exp();
    }
    let log_prefactor = -0.5 * d * (4.0 * PI).ln() - ln_gamma(0.5 * order);
    (log_prefactor + peak).exp() * sum * TRAPEZOID_STEP
}

/// Log-spaced table of `R_n(r)` with monotone cubic interpolation of
/// `log R_n(r) + r` against `log r`; adding `r` removes the exponential
/// decay so the interpolated function stays tame at large radii.
#[derive(Debug, Clone)]
pub struct RadialTable {
    table: UniformPchip,
}

impl RadialTable {
    const R_MIN: f64 = 1e-6;
    const R_MAX: f64 = 200.0;
    const POINTS: usize = 4096;

    fn build(kernel: &BesselKernel) -> Self {
        let lo = Self::R_MIN.ln();
        let step = (Self::R_MAX.ln() - lo) / (Self::POINTS - 1) as f64;
        let values = (0..Self::POINTS)
            .map(|i| {
                let r = (lo + step * i as f64).exp();
                kernel.radial(r).ln() + r
            })
            .collect();
        Self {
            table: UniformPchip::new(lo, step, values),
        }
    }

    /// Interpolated value, `None` outside the tabulated radii.
    pub fn eval(&self, r: f64) -> Option<f64> {
        if !(Self::R_MIN..=Self::R_MAX).contains(&r) {
            return None;
        }
        Some((self.table.eval(r.ln()) - r).exp())
    }
}

/// Outcome of the semigroup self-test `R_n ∗ R_n = R_{2n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionCheck {
    /// Maximum absolute residual over the sample points.
    pub residual: f64,
    /// Per-point `(x, (R_n ∗ R_n)(x), R_{2n}(x))`.
    pub samples: Vec<(Vec<f64>, f64, f64)>,
    /// Largest change of the convolution under grid coarsening by 2.
    pub refinement_change: f64,
}

/// Checks `R_n ∗ R_n = R_{2n}` at the sample points by brute-force grid
/// convolution with the given spacing.
///
/// In one dimension the sample points must lie on the grid `spacing · ℤ`;
/// cells touching a kernel singularity are integrated with graded
/// quadrature and all other cells with the midpoint rule. In two
/// dimensions the convolution is split by a smooth partition of unity into
/// two polar integrals, each centred at one of the singularities.
/// The refinement change is compared against `tolerance` and a
/// [`Error::ResolutionInsufficient`] is returned when it exceeds it.
pub fn convolution_identity_residual(
    order: f64,
    dim: usize,
    sample_points: &[Vec<f64>],
    spacing: f64,
    tolerance: f64,
) -> Result<ConvolutionCheck> {
    let kernel = BesselKernel::new(order, dim)?;
    let doubled = BesselKernel::new(2.0 * order, dim)?;
    if !(spacing > 0.0) {
        return Err(Error::InvalidParameter(format!("spacing must be positive, got {spacing}")));
    }
    for x in sample_points {
        if x.len() != dim {
            return Err(Error::InvalidParameter("sample point dimension mismatch".into()));
        }
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        if r == 0.0 && doubled.is_singular_at_origin() {
            return Err(Error::SingularInput {
                order: 2.0 * order,
                dim,
                radius: 0.0,
            });
        }
    }
    let (fine, coarse) = match dim {
        1 => {
            let reach = sample_points.iter().map(|x| x[0].abs()).fold(0.0, f64::max);
            let fine_grid = LineConvolution::new(&kernel, spacing, reach);
            let coarse_grid = LineConvolution::new(&kernel, 2.0 * spacing, reach);
            let mut fine = Vec::new();
            let mut coarse = Vec::new();
            for x in sample_points {
                fine.push(fine_grid.convolve(x[0])?);
                coarse.push(coarse_grid.convolve(x[0])?);
            }
            (fine, coarse)
        }
        _ => {
            let angles = ((2.0 * PI / spacing).ceil() as usize).clamp(64, 4096);
            let mut fine = Vec::new();
            let mut coarse = Vec::new();
            for x in sample_points {
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                fine.push(planar_convolution(&kernel, r, angles));
                coarse.push(planar_convolution(&kernel, r, angles / 2));
            }
            (fine, coarse)
        }
    };
    let refinement_change = fine
        .iter()
        .zip(&coarse)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if refinement_change > tolerance {
        return Err(Error::ResolutionInsufficient {
            change: refinement_change,
            tolerance,
        });
    }
    let mut samples = Vec::with_capacity(sample_points.len());
    let mut residual = 0.0f64;
    for (x, conv) in sample_points.iter().zip(fine) {
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        let target = doubled.radial(r);
        residual = residual.max((conv - target).abs());
        samples.push((x.clone(), conv, target));
    }
    Ok(ConvolutionCheck {
        residual,
        samples,
        refinement_change,
    })
}

/// Cell-centre samples of a one-dimensional kernel on `spacing · (ℤ + ½)`.
struct LineConvolution<'a> {
    kernel: &'a BesselKernel,
    spacing: f64,
    /// `centre[j] = R_n((j + ½) h)` for `j ≥ 0`.
    centre: Vec<f64>,
}

impl<'a> LineConvolution<'a> {
    const SUPPORT: f64 = 40.0;
    const SINGULAR_CELLS: i64 = 64;

    fn new(kernel: &'a BesselKernel, spacing: f64, reach: f64) -> Self {
        let cells = ((Self::SUPPORT + 2.0 * reach) / spacing).ceil() as usize + 4;
        let centre = (0..cells)
            .map(|j| kernel.radial((j as f64 + 0.5) * spacing))
            .collect();
        Self {
            kernel,
            spacing,
            centre,
        }
    }

    /// `R_n` at the centre of cell `k` (cell `k` spans `[k h, (k+1) h]`).
    fn at_cell(&self, k: i64) -> f64 {
        let idx = if k >= 0 { k } else { -k - 1 };
        self.centre[idx as usize]
    }

    fn convolve(&self, x: f64) -> Result<f64> {
        let h = self.spacing;
        let shift = (x / h).round();
        if (shift * h - x).abs() > 1e-9 * h.max(x.abs()) {
            return Err(Error::InvalidParameter(format!(
                "sample point {x} is not on the convolution grid of spacing {h}"
            )));
        }
        let s = shift as i64;
        let span = ((Self::SUPPORT + x.abs()) / h).ceil() as i64;
        // Cells within SINGULAR_CELLS of either singular point are integrated
        // exactly; the midpoint rule handles the rest.
        let k = Self::SINGULAR_CELLS;
        let (lo0, hi0) = (-k, k);
        let (lox, hix) = (s - k, s + k);
        let in_special = |j: i64| (lo0..hi0).contains(&j) || (lox..hix).contains(&j);
        let mut total = 0.0;
        for j in -span..span {
            if !in_special(j) {
                total += self.at_cell(j) * self.at_cell(s - j - 1);
            }
        }
        total *= h;
        let r = |d: f64| self.kernel.radial(d.abs());
        // Product at `y = end + dir * t`, with the distance to a singular
        // endpoint taken as `t` itself so that it never rounds to zero.
        let product = |end: i64, dir: f64, t: f64| {
            let y = end as f64 * h + dir * t;
            let to_origin = if end == 0 { t } else { y };
            let to_x = if end == s { t } else { x - y };
            r(to_origin) * r(to_x)
        };
        let mut breaks: Vec<i64> = if hi0 < lox || hix < lo0 {
            vec![lo0, 0, hi0, lox, s, hix]
        } else {
            vec![lo0.min(lox), 0, s, hi0.max(hix)]
        };
        breaks.sort_unstable();
        breaks.dedup();
        for w in breaks.windows(2) {
            let gap = (w[0] == hi0 && w[1] == lox) || (w[0] == hix && w[1] == lo0);
            if gap && (hi0 < lox || hix < lo0) {
                continue;
            }
            let half = 0.5 * (w[1] - w[0]) as f64 * h;
            total += graded_to_zero(|t| product(w[0], 1.0, t), half);
            total += graded_to_zero(|t| product(w[1], -1.0, t), half);
        }
        Ok(total)
    }
}

/// `(R_n ∗ R_n)(x)` in the plane at `|x| = dist`.
fn planar_convolution(kernel: &BesselKernel, dist: f64, angles: usize) -> f64 {
    let radial_weight = |r: f64| r * kernel.eval_cached(r);
    if dist == 0.0 {
        let g = |r: f64| {
            let v = kernel.eval_cached(r);
            2.0 * PI * r * v * v
        };
        return graded_to_zero(g, 1.0) + composite(&g, 1.0, 40.0, 160);
    }
    // Part centred at the origin with weight χ(y) = |y-x|² / (|y|² + |y-x|²);
    // the complementary part is its mirror image and contributes equally.
    let angular = |r: f64| {
        let dtheta = 2.0 * PI / angles as f64;
        let mut acc = 0.0;
        for k in 0..angles {
            let theta = (k as f64 + 0.5) * dtheta;
            let (s, c) = theta.sin_cos();
            let dx = r * c - dist;
            let dy = r * s;
            let q2 = dx * dx + dy * dy;
            let chi = q2 / (r * r + q2);
            if q2 > 0.0 {
                acc += chi * kernel.eval_cached(q2.sqrt());
            }
        }
        acc * dtheta
    };
    let f = |r: f64| radial_weight(r) * angular(r);
    let half = 0.5 * dist;
    let mut total = graded_to_zero(f, half);
    total += graded_to_zero(|t| f(dist - t), half);
    total += graded_to_zero(|t| f(dist + t), dist);
    let far_start = 2.0 * dist;
    let far_end = far_start + 40.0;
    let panels = 80;
    let width = (far_end - far_start) / panels as f64;
    for i in 0..panels {
        let lo = far_start + width * i as f64;
        total += gl24().integrate(f, lo, lo + width);
    }
    2.0 * total
}
