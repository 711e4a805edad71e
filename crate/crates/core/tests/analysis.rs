use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use srde_core::analysis::{
    blowup_stats, dissipation_check, estimate_holder, estimate_holder_ensemble, sobolev_norm, Axis, FieldSeries,
};
use srde_core::coefficients::CoefficientSet;
use srde_core::noise::CorrelationKernel;
use srde_core::solver::{default_schedule, run_global, run_local, Grid, InitialCondition, ModelSpec, RunOptions, StoppingRule};
use srde_core::Error;

/// Lower Cholesky factor of the fractional Brownian motion covariance
/// `(s^{2H} + t^{2H} - |t - s|^{2H}) / 2` at `t_i = i / n`, `i = 1..=n`.
fn fbm_factor(n: usize, hurst: f64) -> Vec<Vec<f64>> {
    let t = |i: usize| (i + 1) as f64 / n as f64;
    let cov = |i: usize, j: usize| {
        0.5 * (t(i).powf(2.0 * hurst) + t(j).powf(2.0 * hurst) - (t(i) - t(j)).abs().powf(2.0 * hurst))
    };
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][j] = (cov(i, i) - s).sqrt();
            } else {
                l[i][j] = (cov(i, j) - s) / l[j][j];
            }
        }
    }
    l
}

fn fbm(l: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let z: Vec<f64> = (0..l.len()).map(|_| StandardNormal.sample(rng)).collect();
    l.iter().map(|row| row.iter().zip(&z).map(|(a, b)| a * b).sum()).collect()
}

fn synthetic_ensemble(hurst: f64, axis: Axis, seed: u64) -> Vec<FieldSeries> {
    let n = 256;
    let l = fbm_factor(n, hurst);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..100)
        .map(|_| match axis {
            Axis::Space => FieldSeries {
                dim: 1,
                points: n,
                dx: 1.0 / n as f64,
                dt: 1.0,
                frames: (0..2).map(|_| fbm(&l, &mut rng)).collect(),
            },
            Axis::Time => {
                let columns: Vec<Vec<f64>> = (0..4).map(|_| fbm(&l, &mut rng)).collect();
                FieldSeries {
                    dim: 1,
                    points: 4,
                    dx: 1.0,
                    dt: 1.0 / n as f64,
                    frames: (0..n).map(|t| columns.iter().map(|c| c[t]).collect()).collect(),
                }
            }
        })
        .collect()
}

#[test]
fn structure_function_recovers_synthetic_exponents() {
    for (i, hurst) in [0.2, 0.3, 0.4, 0.6].into_iter().enumerate() {
        for axis in [Axis::Space, Axis::Time] {
            let ens = synthetic_ensemble(hurst, axis, 100 + i as u64);
            let e = estimate_holder_ensemble(&ens, axis, (1.0 / 256.0, 0.25)).unwrap();
            assert!((e.exponent - hurst).abs() <= 0.05, "H = {hurst} {axis:?}: {e:?}");
            assert!(e.standard_error > 0.0 && e.standard_error < 0.05);
        }
    }
}

fn spec(beta: f64, gamma: f64, horizon: f64, u0: InitialCondition) -> ModelSpec {
    ModelSpec {
        beta,
        gamma,
        kappa: 0.49,
        dim: 1,
        horizon,
        u0,
        kernel: CorrelationKernel::white(1).unwrap(),
        coeffs: CoefficientSet::identity(1),
    }
}

#[test]
fn holder_estimate_from_a_path_requires_snapshots_on_the_plateau() {
    let s = spec(8.0, 0.3, 0.25, InitialCondition::Constant(1.0));
    let grid = Grid::new(1, 128, 16.0).unwrap();
    let opts = RunOptions {
        series_every: 8,
        snapshot_every: 8,
    };
    let path = run_global(&s, 1.0 / 1024.0, grid, 1, &default_schedule(), &opts).unwrap();
    let e = estimate_holder(&path, Axis::Space, (grid.spacing(), 1.0)).unwrap();
    assert!(e.exponent > 0.2 && e.exponent < 1.0, "{e:?}");
    let too_few = RunOptions {
        series_every: 8,
        snapshot_every: 64,
    };
    let path = run_global(&s, 1.0 / 1024.0, grid, 1, &default_schedule(), &too_few).unwrap();
    assert!(matches!(
        estimate_holder(&path, Axis::Time, (1.0 / 16.0, 0.25)),
        Err(Error::InsufficientResolution(_))
    ));
}

fn local_ensemble(s: &ModelSpec, seeds: std::ops::Range<u64>) -> Vec<srde_core::PathRecord> {
    let grid = Grid::new(1, 64, 16.0).unwrap();
    let rule = StoppingRule::new(f64::INFINITY, 7.0, 8.0).unwrap();
    seeds
        .map(|seed| run_local(s, &rule, 1.0 / 512.0, grid, seed, &RunOptions { series_every: 64, snapshot_every: 0 }).unwrap())
        .collect()
}

#[test]
fn dissipation_check_examples() {
    let zero = local_ensemble(&spec(4.0, 0.2, 0.25, InitialCondition::Constant(0.0)), 0..4);
    let r = dissipation_check(&zero, &CoefficientSet::identity(1), 0.25).unwrap();
    let plain = r.plain.unwrap();
    assert_eq!(plain.estimate, 0.0);
    assert!(r.pass && plain.margin == 0.0);

    let paths = local_ensemble(&spec(4.0, 0.2, 0.25, InitialCondition::Constant(1.0)), 0..40);
    let r = dissipation_check(&paths, &CoefficientSet::identity(1), 0.25).unwrap();
    assert!(r.pass, "{r:?}");
    assert!(r.plain.unwrap().estimate > 0.0);
    // Relabelling seeds permutes the members; the verdict is unchanged.
    let mut reversed = paths.clone();
    reversed.reverse();
    let again = dissipation_check(&reversed, &CoefficientSet::identity(1), 0.25).unwrap();
    assert_eq!(again.pass, r.pass);
    assert!((again.plain.unwrap().estimate - r.plain.unwrap().estimate).abs() < 1e-12);

    let mut stress = spec(4.0, 0.2, 0.25, InitialCondition::Constant(1.0));
    stress.coeffs = CoefficientSet::identity(1).without_dissipation();
    let paths = local_ensemble(&stress, 0..2);
    let r = dissipation_check(&paths, &stress.coeffs, 0.25).unwrap();
    assert!(r.skipped && r.banner.unwrap().starts_with("OUTSIDE-THEOREM"));
}

#[test]
fn mismatched_ensembles_are_rejected() {
    let mut a = local_ensemble(&spec(4.0, 0.2, 0.25, InitialCondition::Constant(1.0)), 0..2);
    let b = local_ensemble(&spec(5.0, 0.2, 0.25, InitialCondition::Constant(1.0)), 2..3);
    a.extend(b);
    assert!(matches!(
        dissipation_check(&a, &CoefficientSet::identity(1), 0.25),
        Err(Error::MismatchedConfig(_))
    ));
}

#[test]
fn exceedance_table() {
    let s = spec(8.0, 0.3, 0.125, InitialCondition::Constant(1.5));
    let grid = Grid::new(1, 32, 16.0).unwrap();
    let paths: Vec<_> = (0..60)
        .map(|seed| run_global(&s, 1.0 / 256.0, grid, seed, &default_schedule(), &RunOptions { series_every: 32, snapshot_every: 0 }).unwrap())
        .collect();
    let t = blowup_stats(&paths, &[1.0, 2.0, 4.0, 8.0, 16.0]).unwrap();
    assert_eq!(t.sup_over_levels[0].probability, 1.0);
    let probs: Vec<f64> = t.sup_over_levels.iter().map(|e| e.probability).collect();
    assert!(probs.windows(2).all(|w| w[1] <= w[0]), "{probs:?}");
    assert_eq!(*probs.last().unwrap(), 0.0);
    // Level 2 only observes thresholds below 1.
    assert!(t.rows[0].cells.iter().all(Option::is_none));
    assert!(t.rows.last().unwrap().cells.iter().all(Option::is_some));
    for e in &t.sup_over_levels {
        assert!(e.wilson_low <= e.probability && e.probability <= e.wilson_high);
    }
    assert!(matches!(
        blowup_stats(&paths[..1], &[1.0]),
        Err(Error::EnsembleTooSmall { got: 1, needed: 50 })
    ));
}

#[test]
fn multiplicative_inequality_on_band_limited_fields() {
    use rand::Rng;
    let grid = Grid::new(1, 128, 16.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let w = 2.0 * std::f64::consts::PI / grid.period;
    // Two tuples: equal integrability with interpolated order, and equal
    // order with interpolated integrability.
    let eps: f64 = 0.3;
    let (n0, n1) = (0.5, 2.0);
    let n = eps * n0 + (1.0 - eps) * n1;
    let (p0, p1) = (2.0, 6.0);
    let p = 1.0 / (eps / p0 + (1.0 - eps) / p1);
    for _ in 0..1000 {
        let terms: Vec<(f64, f64, f64)> = (0..8)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.0..6.3), rng.random_range(0..20) as f64))
            .collect();
        let f: Vec<f64> = (0..grid.len())
            .map(|i| terms.iter().map(|(a, ph, k)| a * (w * k * i as f64 * grid.spacing() + ph).cos()).sum())
            .collect();
        let lhs = sobolev_norm(&f, n, 2.0, &grid).unwrap();
        let rhs = sobolev_norm(&f, n0, 2.0, &grid).unwrap().powf(eps) * sobolev_norm(&f, n1, 2.0, &grid).unwrap().powf(1.0 - eps);
        assert!(lhs <= rhs * (1.0 + 1e-12));
        let lhs = sobolev_norm(&f, 1.0, p, &grid).unwrap();
        let rhs = sobolev_norm(&f, 1.0, p0, &grid).unwrap().powf(eps) * sobolev_norm(&f, 1.0, p1, &grid).unwrap().powf(1.0 - eps);
        assert!(lhs <= rhs * (1.0 + 1e-12));
    }
}
