//! Quadrature building blocks: Gauss-Legendre panels, graded integration
//! towards an endpoint singularity, Wynn's epsilon accelerator and
//! oscillatory half-line transforms built from them.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::special::bessel_j0;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..(n + 1) / 2 {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Shared 24-point rule used for smooth panels.
pub fn gl24() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(24))
}

/// Shared 12-point rule used on graded sub-intervals.
pub fn gl12() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(12))
}

/// Integrates `f` over `[0, a]` where `f` may have an integrable algebraic
/// singularity or cusp at 0. The interval is split geometrically towards
/// 0 and the remaining geometric tail is summed in closed form.
pub fn graded_to_zero<F: FnMut(f64) -> f64>(mut f: F, a: f64) -> f64 {
    let rule = gl12();
    let mut total = 0.0;
    let mut hi = a;
    let mut prev_piece = f64::NAN;
    for _ in 0..200 {
        let lo = 0.5 * hi;
        let piece = rule.integrate(&mut f, lo, hi);
        total += piece;
        if prev_piece.is_finite() && prev_piece != 0.0 {
            let ratio = piece / prev_piece;
            if ratio > 0.0 && ratio < 0.98 {
                let tail = piece * ratio / (1.0 - ratio);
                if tail.abs() <= 1e-15 * total.abs() {
                    return total + tail;
                }
            }
        }
        prev_piece = piece;
        hi = lo;
    }
    total
}

/// Wynn's epsilon algorithm applied to a sequence of partial sums; returns
/// the extrapolated limit from the highest even column available.
pub fn wynn_epsilon(partial_sums: &[f64]) -> f64 {
    let n = partial_sums.len();
    if n < 3 {
        return *partial_sums.last().unwrap_or(&0.0);
    }
    // eps[k] holds the current column; columns alternate between
    // auxiliary (odd) and estimate (even) entries.
    let mut prev: Vec<f64> = vec![0.0; n + 1];
    let mut cur: Vec<f64> = partial_sums.to_vec();
    let mut best = cur[cur.len() - 1];
    let mut column = 0;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for i in 0..cur.len() - 1 {
            let diff = cur[i + 1] - cur[i];
            let inv = if diff == 0.0 { f64::INFINITY } else { 1.0 / diff };
            next.push(prev[i + 1] + inv);
        }
        column += 1;
        prev = cur;
        cur = next;
        if column % 2 == 0 {
            if let Some(&v) = cur.last() {
                if v.is_finite() {
                    best = v;
                } else {
                    break;
                }
            }
        }
    }
    best
}

/// Computes `∫_0^∞ g(x) cos(ω x) dx` by integrating between consecutive
/// zeros of the cosine and accelerating the alternating panel series.
/// `g` must be decreasing in magnitude for large `x`.
pub fn fourier_cos_integral<F: Fn(f64) -> f64>(g: F, omega: f64) -> Result<f64> {
    let omega = omega.abs();
    if omega == 0.0 {
        return half_line_integral(&g);
    }
    let half_period = std::f64::consts::PI / omega;
    let first = 0.5 * half_period;
    let head = graded_to_zero(|x| g(x) * (omega * x).cos(), first);
    let panel = |k: usize| {
        let a = first + (k as f64) * half_period;
        gl24().integrate(|x| g(x) * (omega * x).cos(), a, a + half_period)
    };
    let end_of = |k: usize| first + (k as f64 + 1.0) * half_period;
    accelerate_panels(head, panel, |k| g(end_of(k)).abs() * half_period)
}

/// Computes `∫_0^∞ g(r) J_0(ρ r) r dr`, the radial part of a two-dimensional
/// Fourier transform, by panels between approximate zeros of `J_0`.
pub fn hankel0_integral<F: Fn(f64) -> f64>(g: F, rho: f64) -> Result<f64> {
    let rho = rho.abs();
    if rho == 0.0 {
        return half_line_integral(&|r| g(r) * r);
    }
    let half_period = std::f64::consts::PI / rho;
    let first = 0.75 * half_period;
    let head = graded_to_zero(|r| g(r) * bessel_j0(rho * r) * r, first);
    let panel = |k: usize| {
        let a = first + (k as f64) * half_period;
        gl24().integrate(|r| g(r) * bessel_j0(rho * r) * r, a, a + half_period)
    };
    let end_of = |k: usize| first + (k as f64 + 1.0) * half_period;
    accelerate_panels(head, panel, |k| {
        let r = end_of(k);
        g(r).abs() * r.sqrt() * half_period
    })
}

fn accelerate_panels<P, B>(head: f64, panel: P, envelope: B) -> Result<f64>
where
    P: Fn(usize) -> f64,
    B: Fn(usize) -> f64,
{
    const MAX_PANELS: usize = 20_000;
    const WINDOW: usize = 25;
    let mut sums = vec![head];
    let mut scale = head.abs();
    let mut last_est = f64::NAN;
    let mut agreeing = 0;
    for k in 0..MAX_PANELS {
        let term = panel(k);
        let s = sums.last().copied().unwrap_or(0.0) + term;
        scale = scale.max(s.abs());
        sums.push(s);
        let tol = 1e-13 * scale.max(1e-300);
        if envelope(k) <= 1e-3 * tol && term.abs() <= tol {
            return Ok(s);
        }
        if sums.len() >= 9 {
            let start = sums.len().saturating_sub(WINDOW);
            let est = wynn_epsilon(&sums[start..]);
            if (est - last_est).abs() <= 1e-12 * scale.max(est.abs()) {
                agreeing += 1;
                if agreeing >= 2 {
                    return Ok(est);
                }
            } else {
                agreeing = 0;
            }
            last_est = est;
        }
    }
    Err(Error::QuadratureNonconvergence(format!(
        "oscillatory transform not converged after {MAX_PANELS} panels"
    )))
}

/// Integrates a nonnegative, eventually decaying `g` over `[0, ∞)` using
/// doubling panels.
pub fn half_line_integral<F: Fn(f64) -> f64>(g: &F) -> Result<f64> {
    let mut total = graded_to_zero(g, 1.0);
    let mut a = 1.0;
    for _ in 0..200 {
        let b = 2.0 * a;
        let piece = composite(g, a, b, 8);
        total += piece;
        if piece.abs() <= 1e-16 * total.abs() && g(b).abs() * b <= 1e-16 * total.abs() {
            return Ok(total);
        }
        a = b;
    }
    Err(Error::QuadratureNonconvergence(
        "half-line integral did not decay".into(),
    ))
}

/// Composite 24-point Gauss-Legendre over `panels` equal sub-intervals.
pub fn composite<F: Fn(f64) -> f64>(g: &F, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + h * i as f64;
            gl24().integrate(g, lo, lo + h)
        })
        .sum()
}

/// Neumaier-compensated sum; order-stable for ensemble reductions.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let rule = GaussLegendre::new(5);
        let v = rule.integrate(|x| x.powi(9) + 3.0 * x.powi(4), -1.0, 2.0);
        let exact = (2f64.powi(10) - 1.0) / 10.0 + 3.0 * (2f64.powi(5) + 1.0) / 5.0;
        assert!((v - exact).abs() < 1e-11, "{v} vs {exact}");
    }

    #[test]
    fn graded_handles_inverse_square_root() {
        let v = graded_to_zero(|x| x.powf(-0.5), 1.0);
        assert!((v - 2.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn wynn_accelerates_alternating_harmonic() {
        let sums: Vec<f64> = (1..=20)
            .scan(0.0, |s, k| {
                *s += if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
                Some(*s)
            })
            .collect();
        let est = wynn_epsilon(&sums);
        assert!((est - std::f64::consts::LN_2).abs() < 1e-10, "{est}");
    }

    #[test]
    fn cosine_transform_of_exponential() {
        // ∫ e^{-x} cos(ωx) dx = 1/(1+ω²)
        for &w in &[0.0, 0.5, 3.0, 40.0] {
            let v = fourier_cos_integral(|x| (-x).exp(), w).unwrap();
            assert!((v - 1.0 / (1.0 + w * w)).abs() < 1e-11, "ω={w}: {v}");
        }
    }

    #[test]
    fn cosine_transform_of_slow_decay() {
        // ∫ cos(ωx)/(1+x²) dx = π e^{-ω}/2
        let v = fourier_cos_integral(|x| 1.0 / (1.0 + x * x), 2.0).unwrap();
        let exact = std::f64::consts::FRAC_PI_2 * (-2.0f64).exp();
        assert!((v - exact).abs() < 1e-10, "{v} vs {exact}");
    }

    #[test]
    fn hankel_of_gaussian() {
        // ∫ e^{-r²} J0(ρr) r dr = e^{-ρ²/4}/2
        for &rho in &[0.0, 1.0, 4.0] {
            let v = hankel0_integral(|r| (-r * r).exp(), rho).unwrap();
            let exact = 0.5 * (-rho * rho / 4.0).exp();
            assert!((v - exact).abs() < 1e-10, "ρ={rho}: {v} vs {exact}");
        }
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = compensated_sum([1e16, 1.0, -1e16, 1.0]);
        assert_eq!(v, 2.0);
    }
}
