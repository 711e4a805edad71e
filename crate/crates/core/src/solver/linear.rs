//! Periodic tridiagonal solves for the implicit diffusion step.

/// Solves the cyclic system
/// `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]` (indices mod n)
/// in place, by the Thomas algorithm with a Sherman-Morrison correction.
/// Requires `n ≥ 3` and a diagonally dominant matrix.
pub fn solve_cyclic(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64], scratch: &mut CyclicScratch) {
    let n = diag.len();
    debug_assert!(n >= 3);
    scratch.resize(n);
    // A = B + u vᵀ with u = (γ, 0, …, 0, A[n-1][0]) and
    // v = (1, 0, …, 0, A[0][n-1]/γ), where B is tridiagonal.
    let gamma = -diag[0];
    let alpha = upper[n - 1]; // A[n-1][0]
    let beta = lower[0]; // A[0][n-1]
    let b = &mut scratch.b;
    b.copy_from_slice(diag);
    b[0] = diag[0] - gamma;
    b[n - 1] = diag[n - 1] - alpha * beta / gamma;
    let u = &mut scratch.u;
    u.iter_mut().for_each(|v| *v = 0.0);
    u[0] = gamma;
    u[n - 1] = alpha;
    thomas(lower, b, upper, rhs, &mut scratch.c);
    thomas(lower, b, upper, u, &mut scratch.c);
    let fact = (rhs[0] + beta * rhs[n - 1] / gamma) / (1.0 + u[0] + beta * u[n - 1] / gamma);
    for (x, z) in rhs.iter_mut().zip(u.iter()) {
        *x -= fact * z;
    }
}

/// Plain tridiagonal solve; `lower[0]` and `upper[n-1]` are ignored.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], x: &mut [f64], c: &mut [f64]) {
    let n = diag.len();
    c[0] = upper[0] / diag[0];
    x[0] /= diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = if i + 1 < n { upper[i] / m } else { 0.0 };
        x[i] = (x[i] - lower[i] * x[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
}

/// Work buffers reused across solves.
#[derive(Debug, Clone, Default)]
pub struct CyclicScratch {
    b: Vec<f64>,
    u: Vec<f64>,
    c: Vec<f64>,
}

impl CyclicScratch {
    fn resize(&mut self, n: usize) {
        self.b.resize(n, 0.0);
        self.u.resize(n, 0.0);
        self.c.resize(n, 0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn apply(lower: &[f64], diag: &[f64], upper: &[f64], x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|i| lower[i] * x[(i + n - 1) % n] + diag[i] * x[i] + upper[i] * x[(i + 1) % n])
            .collect()
    }

    #[test]
    fn solves_random_diagonally_dominant_system() {
        let n = 17;
        let lower: Vec<f64> = (0..n).map(|i| -0.3 - 0.01 * i as f64).collect();
        let upper: Vec<f64> = (0..n).map(|i| -0.2 - 0.02 * (i % 3) as f64).collect();
        let diag: Vec<f64> = (0..n).map(|i| 1.0 + 0.6 + 0.05 * (i % 5) as f64).collect();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut rhs = apply(&lower, &diag, &upper, &x);
        solve_cyclic(&lower, &diag, &upper, &mut rhs, &mut CyclicScratch::default());
        for (a, b) in rhs.iter().zip(&x) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn m_matrix_inverse_is_nonnegative() {
        let n = 8;
        let r = 3.0;
        let lower = vec![-r; n];
        let upper = vec![-r; n];
        let diag = vec![1.0 + 2.0 * r; n];
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            solve_cyclic(&lower, &diag, &upper, &mut e, &mut CyclicScratch::default());
            assert!(e.iter().all(|v| *v > 0.0));
        }
    }
}
