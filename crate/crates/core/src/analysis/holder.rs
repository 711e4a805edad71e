//! Hölder exponents from second-order structure functions over dyadic lags.

use serde::Serialize;

use super::stats::linear_fit;
use crate::error::{Error, Result};
use crate::solver::PathRecord;

/// Minimum number of samples along the fitted axis.
pub const MIN_SAMPLES: usize = 64;
/// Minimum number of dyadic lags inside the window.
pub const MIN_LAGS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Time,
    Space,
}

/// Equally spaced frames of a field on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries {
    pub dim: usize,
    pub points: usize,
    pub dx: f64,
    pub dt: f64,
    /// Frames in time order, each row-major with `points^dim` values.
    pub frames: Vec<Vec<f64>>,
}

impl FieldSeries {
    /// Frames from the snapshots of a path. Fails if the snapshots are
    /// unevenly spaced or the path ever left the plateau of its truncation.
    pub fn from_path(path: &PathRecord) -> Result<Self> {
        let snaps = &path.snapshots;
        if snaps.len() < 2 {
            return Err(Error::InsufficientResolution("path has fewer than two snapshots".into()));
        }
        let dt = snaps[1].stats.t - snaps[0].stats.t;
        for w in snaps.windows(2) {
            if ((w[1].stats.t - w[0].stats.t) - dt).abs() > 1e-9 * dt.max(1e-300) {
                return Err(Error::InvalidParameter("snapshots are not evenly spaced".into()));
            }
        }
        if snaps.iter().any(|s| s.stats.sup >= s.stats.level) {
            return Err(Error::InvalidParameter(
                "path left the truncation plateau; structure functions would see the cutoff".into(),
            ));
        }
        Ok(Self {
            dim: path.grid.dim,
            points: path.grid.points,
            dx: path.grid.spacing(),
            dt,
            frames: snaps.iter().map(|s| s.field.clone()).collect(),
        })
    }

    fn samples(&self, axis: Axis) -> usize {
        match axis {
            Axis::Time => self.frames.len(),
            Axis::Space => self.points,
        }
    }

    fn spacing(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Time => self.dt,
            Axis::Space => self.dx,
        }
    }

    /// Mean of `(u(· + lag) - u(·))²` along `axis`, without wrapping.
    fn structure(&self, axis: Axis, lag: usize) -> f64 {
        let n = self.points;
        let (mut sum, mut count) = (0.0, 0usize);
        match axis {
            Axis::Time => {
                for (a, b) in self.frames.iter().zip(&self.frames[lag..]) {
                    for (x, y) in a.iter().zip(b) {
                        sum += (y - x).powi(2);
                    }
                    count += a.len();
                }
            }
            Axis::Space => {
                for f in &self.frames {
                    if self.dim == 1 {
                        for i in 0..n - lag {
                            sum += (f[i + lag] - f[i]).powi(2);
                        }
                        count += n - lag;
                    } else {
                        for i in 0..n {
                            for j in 0..n - lag {
                                sum += (f[i * n + j + lag] - f[i * n + j]).powi(2);
                                sum += (f[(j + lag) * n + i] - f[j * n + i]).powi(2);
                            }
                        }
                        count += 2 * n * (n - lag);
                    }
                }
            }
        }
        sum / count as f64
    }
}

/// Fitted exponent with the data behind the fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderEstimate {
    pub axis: Axis,
    pub exponent: f64,
    pub standard_error: f64,
    /// Physical lags used.
    pub lags: Vec<f64>,
    /// Ensemble-averaged structure function at each lag.
    pub structure: Vec<f64>,
    pub members: usize,
}

impl HolderEstimate {
    pub fn band(&self, z: f64) -> (f64, f64) {
        (self.exponent - z * self.standard_error, self.exponent + z * self.standard_error)
    }
}

/// Dyadic lags `2^j` (in samples) whose physical length lies in `window`.
fn dyadic_lags(samples: usize, spacing: f64, window: (f64, f64)) -> Vec<usize> {
    let (lo, hi) = window;
    let slack = 1e-9;
    (0..usize::BITS)
        .map(|j| 1usize << j)
        .take_while(|&l| l < samples)
        .filter(|&l| {
            let h = l as f64 * spacing;
            h >= lo * (1.0 - slack) && h <= hi * (1.0 + slack)
        })
        .collect()
}

fn fit(lags: &[f64], structure: &[f64]) -> (f64, f64) {
    let x: Vec<f64> = lags.iter().map(|l| l.ln()).collect();
    let y: Vec<f64> = structure.iter().map(|s| s.ln()).collect();
    let (_, slope, se) = linear_fit(&x, &y);
    (0.5 * slope, 0.5 * se)
}

/// Exponent `H` from `E|u(·+h) - u(·)|² ∝ h^{2H}`, with the structure
/// function averaged over all members before the log-log fit. The standard
/// error is the delete-one jackknife over members, or the regression
/// error for a single series.
pub fn estimate_holder_ensemble(series: &[FieldSeries], axis: Axis, window: (f64, f64)) -> Result<HolderEstimate> {
    let first = series
        .first()
        .ok_or_else(|| Error::EnsembleTooSmall { got: 0, needed: 1 })?;
    for s in series {
        if s.dim != first.dim || s.points != first.points || s.dx != first.dx || s.dt != first.dt {
            return Err(Error::MismatchedConfig("series differ in grid or cadence".into()));
        }
        if s.samples(axis) != first.samples(axis) {
            return Err(Error::MismatchedConfig("series differ in length".into()));
        }
    }
    let samples = first.samples(axis);
    if samples < MIN_SAMPLES {
        return Err(Error::InsufficientResolution(format!(
            "{samples} samples along the axis, need at least {MIN_SAMPLES}"
        )));
    }
    let spacing = first.spacing(axis);
    let lag_steps = dyadic_lags(samples, spacing, window);
    if lag_steps.len() < MIN_LAGS {
        return Err(Error::InsufficientResolution(format!(
            "{} dyadic lags in [{}, {}], need at least {MIN_LAGS}",
            lag_steps.len(),
            window.0,
            window.1
        )));
    }
    let per_member: Vec<Vec<f64>> = series
        .iter()
        .map(|s| lag_steps.iter().map(|&l| s.structure(axis, l)).collect())
        .collect();
    let k = lag_steps.len();
    let m = series.len() as f64;
    let total: Vec<f64> = (0..k).map(|i| per_member.iter().map(|s| s[i]).sum()).collect();
    let structure: Vec<f64> = total.iter().map(|t| t / m).collect();
    let lags: Vec<f64> = lag_steps.iter().map(|&l| l as f64 * spacing).collect();
    if structure.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidParameter("structure function vanishes at some lag".into()));
    }
    let (exponent, regression_se) = fit(&lags, &structure);
    let standard_error = if series.len() < 2 {
        regression_se
    } else {
        let loo: Vec<f64> = per_member
            .iter()
            .map(|own| {
                let s: Vec<f64> = total.iter().zip(own).map(|(t, o)| (t - o) / (m - 1.0)).collect();
                fit(&lags, &s).0
            })
            .collect();
        let mean = loo.iter().sum::<f64>() / m;
        ((m - 1.0) / m * loo.iter().map(|h| (h - mean).powi(2)).sum::<f64>()).sqrt()
    };
    Ok(HolderEstimate {
        axis,
        exponent,
        standard_error,
        lags,
        structure,
        members: series.len(),
    })
}

/// Single-path version of [`estimate_holder_ensemble`].
pub fn estimate_holder(path: &PathRecord, axis: Axis, window: (f64, f64)) -> Result<HolderEstimate> {
    estimate_holder_ensemble(&[FieldSeries::from_path(path)?], axis, window)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine_series(points: usize, frames: usize) -> FieldSeries {
        let dx = 16.0 / points as f64;
        let w = 2.0 * std::f64::consts::PI / 16.0;
        FieldSeries {
            dim: 1,
            points,
            dx,
            dt: 0.01,
            frames: (0..frames)
                .map(|t| (0..points).map(|i| (w * i as f64 * dx + 0.3 * t as f64).sin()).collect())
                .collect(),
        }
    }

    #[test]
    fn smooth_fields_have_exponent_near_one() {
        let s = sine_series(256, 4);
        let e = estimate_holder_ensemble(&[s], Axis::Space, (1.0 / 16.0, 1.0)).unwrap();
        assert!(e.exponent >= 0.95, "{e:?}");
    }

    #[test]
    fn too_few_lags_or_samples() {
        let s = sine_series(256, 4);
        assert!(matches!(
            estimate_holder_ensemble(&[s.clone()], Axis::Space, (0.1, 0.3)),
            Err(Error::InsufficientResolution(_))
        ));
        assert!(matches!(
            estimate_holder_ensemble(&[s], Axis::Time, (0.01, 1.0)),
            Err(Error::InsufficientResolution(_))
        ));
    }

    #[test]
    fn lag_selection_is_dyadic_and_inclusive() {
        assert_eq!(dyadic_lags(256, 0.0625, (0.0625, 1.0)), vec![1, 2, 4, 8, 16]);
        assert_eq!(dyadic_lags(10, 1.0, (0.0, 100.0)), vec![1, 2, 4, 8]);
    }
}
