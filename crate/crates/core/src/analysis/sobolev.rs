//! Bessel-potential norms on the periodic grid.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::noise::{multi_index, signed_wavenumber};
use crate::solver::Grid;

/// `‖(1 - Δ)^{n/2} u‖_{L_p}` with the grid Fourier symbol
/// `(1 + |ξ|²)^{n/2}`, `ξ = 2πk/L`, and the grid `L_p` norm
/// `(Σ |w|^p h^d)^{1/p}`.
pub fn sobolev_norm(field: &[f64], order: f64, p: f64, grid: &Grid) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p must be at least 1, got {p}")));
    }
    if field.len() != grid.len() {
        return Err(Error::InvalidParameter("field size does not match the grid".into()));
    }
    if field.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("field has non-finite values".into()));
    }
    let w = bessel_potential(field, order, grid);
    Ok(lp_norm(&w, p, grid.cell_volume()))
}

/// Grid `L_p` norm; `p = ∞` gives the max norm.
pub fn lp_norm(values: &[f64], p: f64, cell: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    // Scale by the max to keep |v|^p in range for large p.
    let top = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if top == 0.0 {
        return 0.0;
    }
    let s: f64 = values.iter().map(|v| (v.abs() / top).powf(p)).sum();
    top * (s * cell).powf(1.0 / p)
}

/// `(1 - Δ)^{n/2} u` on the grid.
pub fn bessel_potential(field: &[f64], order: f64, grid: &Grid) -> Vec<f64> {
    if order == 0.0 {
        return field.to_vec();
    }
    let n = grid.points;
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut data: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let transform = |data: &mut [Complex64], plan: &dyn rustfft::Fft<f64>| {
        if grid.dim == 1 {
            plan.process(data);
        } else {
            for row in data.chunks_mut(n) {
                plan.process(row);
            }
            let mut col = vec![Complex64::new(0.0, 0.0); n];
            for j in 0..n {
                for i in 0..n {
                    col[i] = data[i * n + j];
                }
                plan.process(&mut col);
                for i in 0..n {
                    data[i * n + j] = col[i];
                }
            }
        }
    };
    transform(&mut data, fwd.as_ref());
    let dxi = 2.0 * PI / grid.period;
    let scale = 1.0 / grid.len() as f64;
    for (idx, z) in data.iter_mut().enumerate() {
        let xi2: f64 = multi_index(idx, n, grid.dim)
            .iter()
            .map(|&k| (dxi * signed_wavenumber(k, n)).powi(2))
            .sum();
        *z *= (1.0 + xi2).powf(0.5 * order) * scale;
    }
    transform(&mut data, inv.as_ref());
    data.iter().map(|z| z.re).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_zero_is_lp() {
        let grid = Grid::new(1, 8, 4.0).unwrap();
        let f = [1.0, -2.0, 0.5, 0.0, 3.0, 1.0, -1.0, 0.25];
        let direct = (f.iter().map(|v: &f64| v.abs().powi(3)).sum::<f64>() * 0.5).cbrt();
        assert!((sobolev_norm(&f, 0.0, 3.0, &grid).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn single_mode_scales_by_symbol() {
        let grid = Grid::new(1, 64, 16.0).unwrap();
        let k = 3.0;
        let xi = 2.0 * PI * k / 16.0;
        let f: Vec<f64> = (0..64).map(|i| (xi * i as f64 * 0.25).cos()).collect();
        let plain = sobolev_norm(&f, 0.0, 2.0, &grid).unwrap();
        let lifted = sobolev_norm(&f, 1.5, 2.0, &grid).unwrap();
        assert!((lifted / plain - (1.0 + xi * xi).powf(0.75)).abs() < 1e-12);
        let grid2 = Grid::new(2, 16, 8.0).unwrap();
        let g: Vec<f64> = (0..256)
            .map(|i| {
                let x = grid2.coords(i);
                (2.0 * PI * (x[0] + 2.0 * x[1]) / 8.0).sin()
            })
            .collect();
        let xi2 = (2.0 * PI / 8.0).powi(2) * 5.0;
        let r = sobolev_norm(&g, 2.0, 4.0, &grid2).unwrap() / sobolev_norm(&g, 0.0, 4.0, &grid2).unwrap();
        assert!((r - (1.0 + xi2)).abs() < 1e-11);
    }

    #[test]
    fn rejects_bad_exponent() {
        let grid = Grid::new(1, 8, 4.0).unwrap();
        assert!(sobolev_norm(&[0.0; 8], 1.0, 0.5, &grid).is_err());
    }
}
